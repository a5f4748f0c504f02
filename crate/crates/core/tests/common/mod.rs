//! Checks shared by the integration tests and the acceptance harness. Each
//! routine computes a quantity two independent ways and reports the gap.

#![allow(dead_code)]

use dsgan::adversary::{accumulate_generator_grad, instance_rewards};
use dsgan::data::Instance;
use dsgan::encoder::{EncoderConfig, SentenceModel};
use dsgan::eval::{auc, paired_t_test, pr_curve};
use dsgan::nn::{
    affine_backward, affine_sigmoid, bce_loss, conv1d_maxpool, conv1d_maxpool_backward, embedding_backward,
    embedding_lookup, grad_check, ParamSet, Tensor,
};
use dsgan::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tol: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Check { name: name.into(), value, tol }
    }

    pub fn passed(&self) -> bool {
        self.value < self.tol
    }
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn grad_of(p: &ParamSet, name: &str) -> Tensor {
    p.get(name).unwrap().grad.clone()
}

fn set_grad(p: &mut ParamSet, name: &str, g: Tensor) {
    p.get_mut(name).unwrap().grad = g;
}

fn val<'a>(p: &'a ParamSet, name: &str) -> &'a Tensor {
    &p.get(name).unwrap().value
}

/// Affine layer into BCE, checked against inputs, weights and bias.
fn linear_check(rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut p = ParamSet::new();
    p.insert("x", random_tensor(&[7], rng))?;
    p.insert("w", random_tensor(&[7], rng))?;
    p.insert("b", random_tensor(&[1], rng))?;
    let loss = |p: &ParamSet| -> Result<f64> {
        let (prob, _) = affine_sigmoid(val(p, "x").data(), val(p, "w").data(), val(p, "b").data()[0])?;
        Ok(bce_loss(prob, 1.0).0)
    };
    let (prob, _) = affine_sigmoid(val(&p, "x").data(), val(&p, "w").data(), val(&p, "b").data()[0])?;
    let dlogit = bce_loss(prob, 1.0).1;
    let mut dx = vec![0.0; 7];
    let mut dw = vec![0.0; 7];
    let db = affine_backward(val(&p, "x").data(), val(&p, "w").data(), dlogit, &mut dx, &mut dw);
    set_grad(&mut p, "x", Tensor::from_vec(&[7], dx)?);
    set_grad(&mut p, "w", Tensor::from_vec(&[7], dw)?);
    set_grad(&mut p, "b", Tensor::from_vec(&[1], vec![db])?);
    let r = grad_check(&mut p, loss, FD_STEP, 0)?;
    Ok(Check::new("affine + BCE (linear)", r.max_rel_error, 1e-6))
}

/// Embedding lookup with repeated indices under a linear read-out.
fn embedding_check(rng: &mut ChaCha8Rng) -> Result<Check> {
    let idx = [0usize, 2, 2, 5];
    let c = random_tensor(&[4, 3], rng);
    let mut p = ParamSet::new();
    p.insert("table", random_tensor(&[6, 3], rng))?;
    let loss = |p: &ParamSet| -> Result<f64> {
        let out = embedding_lookup(val(p, "table"), &idx)?;
        Ok(out.data().iter().zip(c.data()).map(|(a, b)| a * b).sum())
    };
    let mut g = Tensor::zeros(&[6, 3]);
    embedding_backward(&mut g, &idx, &c);
    set_grad(&mut p, "table", g);
    let r = grad_check(&mut p, loss, FD_STEP, 0)?;
    Ok(Check::new("embedding lookup (linear)", r.max_rel_error, 1e-6))
}

/// Windowed convolution, tanh and max-over-time on a 4 x 6 input with
/// window 3 and 5 kernels.
fn conv_check(rng: &mut ChaCha8Rng) -> Result<Check> {
    let (n, d, w, k) = (4, 6, 3, 5);
    let c = random_tensor(&[k], rng);
    let mut p = ParamSet::new();
    p.insert("input", random_tensor(&[n, d], rng))?;
    p.insert("kernels", random_tensor(&[k, w * d], rng))?;
    p.insert("bias", random_tensor(&[k], rng))?;
    let loss = |p: &ParamSet| -> Result<f64> {
        let (out, _) = conv1d_maxpool(val(p, "input"), val(p, "kernels"), val(p, "bias"), w)?;
        Ok(out.data().iter().zip(c.data()).map(|(a, b)| a * b).sum())
    };
    let (_, trace) = conv1d_maxpool(val(&p, "input"), val(&p, "kernels"), val(&p, "bias"), w)?;
    let mut di = Tensor::zeros(&[n, d]);
    let mut dk = Tensor::zeros(&[k, w * d]);
    let mut db = Tensor::zeros(&[k]);
    conv1d_maxpool_backward(val(&p, "input"), val(&p, "kernels"), w, &trace, c.data(), &mut di, &mut dk, &mut db);
    set_grad(&mut p, "input", di);
    set_grad(&mut p, "kernels", dk);
    set_grad(&mut p, "bias", db);
    let r = grad_check(&mut p, loss, FD_STEP, 0)?;
    Ok(Check::new("conv1d + tanh + max-pool (4x6, window 3, 5 kernels)", r.max_rel_error, 1e-4))
}

pub fn tiny_encoder() -> EncoderConfig {
    EncoderConfig {
        word_dim: 4,
        position_dim: 2,
        window: 3,
        kernels: 5,
        max_distance: 3,
        vocab_size: 12,
    }
}

pub fn tiny_instances() -> Vec<Instance> {
    vec![
        Instance::new("a", ("h".into(), "t".into()), "r", vec![3, 1, 7, 2, 9, 4], 1, 4).unwrap(),
        Instance::new("b", ("h".into(), "u".into()), "r", vec![5, 11, 0, 6], 0, 3).unwrap(),
        Instance::new("c", ("k".into(), "t".into()), "r", vec![8, 10, 2, 2, 1, 3, 5], 6, 2).unwrap(),
    ]
}

/// Full sentence model: embeddings, position tables, convolution and
/// output layer under a summed BCE loss.
fn encoder_check() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut model = SentenceModel::new(tiny_encoder(), &mut rng)?;
    let insts = tiny_instances();
    let labels = [1.0, 0.0, 1.0];
    model.params.zero_grad();
    for (inst, &y) in insts.iter().zip(&labels) {
        let tr = model.forward(inst)?;
        model.backward(&tr, bce_loss(tr.prob, y).1);
    }
    let template = model.clone();
    let loss = |p: &ParamSet| -> Result<f64> {
        let mut m = template.clone();
        m.params = p.clone();
        let mut total = 0.0;
        for (inst, &y) in insts.iter().zip(&labels) {
            total += bce_loss(m.predict_prob(inst)?, y).0;
        }
        Ok(total)
    };
    let r = grad_check(&mut model.params, loss, FD_STEP, 0)?;
    Ok(Check::new("encoder end to end", r.max_rel_error, 1e-4))
}

pub fn gradient_checks() -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    Ok(vec![
        linear_check(&mut rng)?,
        embedding_check(&mut rng)?,
        conv_check(&mut rng)?,
        encoder_check()?,
    ])
}

fn flat_grads(p: &ParamSet) -> Vec<f64> {
    p.iter().flat_map(|(_, q)| q.grad.data().to_vec()).collect()
}

/// Expected generator update over every sampling outcome of a 3-instance
/// bag (frozen discriminator, `b1 = 0`, `r2 = 0`) against a finite-difference
/// gradient of the closed form `E[Σ_T p_D] = Σ_j p_G(s_j)·p_D(s_j)`.
/// Returns the largest absolute coordinate difference.
pub fn policy_gradient_gap() -> Result<f64> {
    let insts = tiny_instances();
    let refs: Vec<&Instance> = insts.iter().collect();
    let mut g = SentenceModel::new(tiny_encoder(), &mut ChaCha8Rng::seed_from_u64(21))?;
    let d = SentenceModel::new(tiny_encoder(), &mut ChaCha8Rng::seed_from_u64(22))?;
    let pd = d.score_all(refs.iter().copied())?;
    let pg = g.score_all(refs.iter().copied())?;

    let mut expected = vec![0.0; g.params.num_coords()];
    for mask in 0u32..8 {
        let members: Vec<usize> = (0..3).filter(|j| mask >> j & 1 == 1).collect();
        let prob: f64 = (0..3)
            .map(|j| if mask >> j & 1 == 1 { pg[j] } else { 1.0 - pg[j] })
            .product();
        let t: Vec<&Instance> = members.iter().map(|&j| refs[j]).collect();
        let pd_t: Vec<f64> = members.iter().map(|&j| pd[j]).collect();
        g.params.zero_grad();
        accumulate_generator_grad(&mut g, &t, &instance_rewards(&pd_t, 0.0, 0.0))?;
        for (e, v) in expected.iter_mut().zip(flat_grads(&g.params)) {
            *e += prob * v;
        }
    }
    g.params.zero_grad();

    let objective = |m: &SentenceModel| -> Result<f64> {
        let mut s = 0.0;
        for (inst, &w) in refs.iter().zip(&pd) {
            s += w * m.predict_prob(inst)?;
        }
        Ok(s)
    };
    let mut worst = 0.0f64;
    let mut flat = 0;
    let names: Vec<String> = g.params.names().map(String::from).collect();
    for name in names {
        let len = g.params.get(&name).unwrap().value.len();
        for j in 0..len {
            let orig = g.params.get(&name).unwrap().value.data()[j];
            g.params.get_mut(&name).unwrap().value.data_mut()[j] = orig + FD_STEP;
            let up = objective(&g)?;
            g.params.get_mut(&name).unwrap().value.data_mut()[j] = orig - FD_STEP;
            let down = objective(&g)?;
            g.params.get_mut(&name).unwrap().value.data_mut()[j] = orig;
            let fd = (up - down) / (2.0 * FD_STEP);
            worst = worst.max((fd - expected[flat]).abs());
            flat += 1;
        }
    }
    Ok(worst)
}

/// `(recall, precision)` at every prefix, computed by ranking each item
/// through pairwise comparisons instead of sorting.
pub fn brute_force_pr(scores: &[f64], labels: &[bool]) -> Vec<(f64, f64)> {
    let n = scores.len();
    let total = labels.iter().filter(|&&l| l).count() as f64;
    let rank: Vec<usize> = (0..n)
        .map(|i| (0..n).filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i)).count())
        .collect();
    (1..=n)
        .map(|k| {
            let tp = (0..n).filter(|&i| rank[i] < k && labels[i]).count() as f64;
            (tp / total, tp / k as f64)
        })
        .collect()
}

/// Area under the linear interpolation of `points` from `(0, first
/// precision)`, integrated segment by segment with Simpson's rule.
pub fn integrated_area(points: &[(f64, f64)]) -> f64 {
    let mut prev = (0.0, points[0].1);
    let mut area = 0.0;
    for &(r, p) in points {
        let width = r - prev.0;
        let mid = (p + prev.1) / 2.0;
        area += width / 6.0 * (prev.1 + 4.0 * mid + p);
        prev = (r, p);
    }
    area
}

/// Largest deviation of `pr_curve` and `auc` from the oracles over random
/// cases with many tied scores.
pub fn metric_gaps(cases: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut curve_gap, mut auc_gap) = (0.0f64, 0.0f64);
    for _ in 0..cases {
        let n = rng.gen_range(1..40);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..8) as f64 / 8.0).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        let forced = rng.gen_range(0..n);
        labels[forced] = true;
        let curve = pr_curve(&scores, &labels)?;
        let oracle = brute_force_pr(&scores, &labels);
        for (a, b) in curve.points.iter().zip(&oracle) {
            curve_gap = curve_gap.max((a.0 - b.0).abs()).max((a.1 - b.1).abs());
        }
        if curve.points.len() != oracle.len() {
            curve_gap = f64::INFINITY;
        }
        auc_gap = auc_gap.max((auc(&curve) - integrated_area(&oracle)).abs());
    }
    Ok((curve_gap, auc_gap))
}

/// Two-sided p of Student's t with 4 degrees of freedom from the closed-form
/// CDF `1/2 + (3/8)·u·(1 − u²/12)`, `u = t / sqrt(1 + t²/4)`.
pub fn t4_two_sided(t: f64) -> f64 {
    let u = t.abs() / (1.0 + t * t / 4.0).sqrt();
    let cdf = 0.5 + 0.375 * u * (1.0 - u * u / 12.0);
    2.0 * (1.0 - cdf)
}

/// `(t, p, oracle p)` for the differences `[0.5, 0.7, 0.3, 0.6, 0.4]`.
pub fn t_test_reference() -> Result<(f64, f64, f64)> {
    let d = [0.5, 0.7, 0.3, 0.6, 0.4];
    let r = paired_t_test(&d, &[0.0; 5])?;
    Ok((r.t, r.p, t4_two_sided(5.0 * 2f64.sqrt())))
}
