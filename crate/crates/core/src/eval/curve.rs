use std::fmt::Write as _;

use crate::error::{DsganError, Result};

/// `(recall, precision)` after each prefix of the descending score order.
#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub points: Vec<(f64, f64)>,
}

impl PrCurve {
    pub fn to_csv_rows(&self, prefix: &str, out: &mut String) {
        for (r, p) in &self.points {
            let _ = writeln!(out, "{prefix}{r},{p}");
        }
    }
}

/// Ties keep input order.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<PrCurve> {
    if scores.len() != labels.len() {
        return Err(DsganError::Shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(DsganError::NonFinite("PR curve score".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(DsganError::Input("PR curve needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut tp = 0usize;
    let points = order
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            if labels[i] {
                tp += 1;
            }
            (tp as f64 / positives as f64, tp as f64 / (k + 1) as f64)
        })
        .collect();
    Ok(PrCurve { points })
}

/// Trapezoidal area over recall, anchored at `(0, first precision)`.
pub fn auc(curve: &PrCurve) -> f64 {
    let Some(&(_, p0)) = curve.points.first() else {
        return 0.0;
    };
    let mut prev = (0.0, p0);
    let mut area = 0.0;
    for &(r, p) in &curve.points {
        area += (r - prev.0) * (p + prev.1) / 2.0;
        prev = (r, p);
    }
    area
}
