use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ParamSet;
use crate::error::Result;

/// Above this many coordinates a seeded random subset is checked instead.
pub const FULL_CHECK_LIMIT: usize = 1000;

/// Denominator floor so coordinates with vanishing gradients do not dominate.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
}

/// Compares the gradients currently stored in `params` against central
/// finite differences of `loss` with step `h`.
///
/// `params` must hold the analytic gradient of `loss` at the current values.
/// Values are restored exactly before returning.
pub fn grad_check(
    params: &mut ParamSet,
    mut loss: impl FnMut(&ParamSet) -> Result<f64>,
    h: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let total = params.num_coords();
    let coords: Vec<usize> = if total <= FULL_CHECK_LIMIT {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = sample(&mut rng, total, FULL_CHECK_LIMIT).into_vec();
        v.sort_unstable();
        v
    };

    let mut offsets = Vec::with_capacity(params.len());
    let mut acc = 0;
    for (_, p) in params.iter() {
        offsets.push(acc);
        acc += p.value.len();
    }

    let mut worst = 0.0f64;
    for &flat in &coords {
        let pi = offsets.partition_point(|&o| o <= flat) - 1;
        let j = flat - offsets[pi];
        let analytic = params.at(pi).grad.data()[j];
        let orig = params.at(pi).value.data()[j];

        params.at_mut(pi).value.data_mut()[j] = orig + h;
        let up = loss(params)?;
        params.at_mut(pi).value.data_mut()[j] = orig - h;
        let down = loss(params)?;
        params.at_mut(pi).value.data_mut()[j] = orig;

        let numeric = (up - down) / (2.0 * h);
        let denom = numeric.abs().max(analytic.abs()).max(REL_FLOOR);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    Ok(GradCheckReport {
        max_rel_error: worst,
        coords_checked: coords.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::{affine_backward, affine_sigmoid, bce_loss};
    use crate::nn::Tensor;
    use rand::Rng;

    fn linear_params(rng: &mut ChaCha8Rng) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::from_vec(&[5], (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap())
            .unwrap();
        p
    }

    fn linear_loss(p: &ParamSet, x: &[f64]) -> f64 {
        p.get("w").unwrap().value.data().iter().zip(x).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn linear_model_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = linear_params(&mut rng);
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
        p.get_mut("w").unwrap().grad.data_mut().copy_from_slice(&x);
        let rep = grad_check(&mut p, |p| Ok(linear_loss(p, &x)), 1e-5, 0).unwrap();
        assert!(rep.max_rel_error < 1e-8, "{}", rep.max_rel_error);
        assert_eq!(rep.coords_checked, 5);
    }

    #[test]
    fn corrupted_gradient_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut p = linear_params(&mut rng);
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(0.5..2.0)).collect();
        let bad: Vec<f64> = x.iter().map(|v| v * 1.1).collect();
        p.get_mut("w").unwrap().grad.data_mut().copy_from_slice(&bad);
        let rep = grad_check(&mut p, |p| Ok(linear_loss(p, &x)), 1e-5, 0).unwrap();
        assert!(rep.max_rel_error > 0.08 && rep.max_rel_error < 0.11, "{}", rep.max_rel_error);
    }

    #[test]
    fn affine_sigmoid_bce_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = 8;
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut p = ParamSet::new();
        p.insert("w", Tensor::from_vec(&[d], (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap())
            .unwrap();
        p.insert("b", Tensor::from_vec(&[1], vec![0.3]).unwrap()).unwrap();
        p.insert("x", Tensor::from_vec(&[d], x).unwrap()).unwrap();

        let f = |p: &ParamSet| {
            let (prob, _) = affine_sigmoid(
                p.get("x").unwrap().value.data(),
                p.get("w").unwrap().value.data(),
                p.get("b").unwrap().value.data()[0],
            )?;
            Ok(bce_loss(prob, 1.0).0)
        };
        let w = p.get("w").unwrap().value.data().to_vec();
        let xv = p.get("x").unwrap().value.data().to_vec();
        let (prob, _) = affine_sigmoid(&xv, &w, 0.3).unwrap();
        let (_, dlogit) = bce_loss(prob, 1.0);
        let mut dx = vec![0.0; d];
        let mut dw = vec![0.0; d];
        let db = affine_backward(&xv, &w, dlogit, &mut dx, &mut dw);
        p.get_mut("w").unwrap().grad.data_mut().copy_from_slice(&dw);
        p.get_mut("x").unwrap().grad.data_mut().copy_from_slice(&dx);
        p.get_mut("b").unwrap().grad.data_mut()[0] = db;
        let rep = grad_check(&mut p, f, 1e-5, 0).unwrap();
        assert!(rep.max_rel_error < 1e-6, "{}", rep.max_rel_error);
    }
}
