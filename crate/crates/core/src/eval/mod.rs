//! Evaluation: ranking metrics, significance tests, downstream comparison of
//! raw against cleaned data, generator quality against planted truth, and
//! the matched-size positive-set experiment.
//!
//! This is the only module that reads truth flags.

mod curve;
mod stats;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cleaner::is_positive;
use crate::data::truth::truth_of;
use crate::data::{DatasetSplits, Instance, Truth, NA};
use crate::encoder::{EncoderConfig, SentenceModel};
use crate::error::{DsganError, Result};
use crate::pretrain::{accuracy, balanced_epoch, Labeled};

pub use curve::{auc, pr_curve, PrCurve};
pub use stats::{ln_gamma, paired_t_test, reg_inc_beta, student_t_two_sided, TTest};

/// Hyper-parameters of the downstream and experiment classifiers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 4,
            batch_size: 32,
            lr: 0.1,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size < 2 || !(self.lr > 0.0) {
            return Err(DsganError::Config(
                "classifier needs epochs > 0, batch_size >= 2 and lr > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Trains a fresh model on positives (1) against negatives (0), calling
/// `after_epoch` after every epoch.
pub fn train_classifier(
    positives: &[&Instance],
    negatives: &[&Instance],
    encoder: EncoderConfig,
    cfg: &ClassifierConfig,
    seed: u64,
    mut after_epoch: impl FnMut(&SentenceModel) -> Result<()>,
) -> Result<SentenceModel> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = SentenceModel::new(encoder, &mut rng)?;
    for _ in 0..cfg.epochs {
        balanced_epoch(&mut model, positives, negatives, cfg.batch_size, cfg.lr, &mut rng)?;
        after_epoch(&model)?;
    }
    Ok(model)
}

/// Held-out instances of `relation` (label 1) and of `NA` (label 0).
pub fn heldout_probe<'a>(heldout: &'a [Instance], relation: &str) -> Vec<Labeled<'a>> {
    heldout
        .iter()
        .filter_map(|i| {
            if i.relation == relation {
                Some((i, 1.0))
            } else if i.relation == NA {
                Some((i, 0.0))
            } else {
                None
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonResult {
    pub seeds: Vec<u64>,
    pub baseline: Vec<f64>,
    pub cleaned: Vec<f64>,
    pub curves: Vec<(PrCurve, PrCurve)>,
    pub test: TTest,
}

impl ComparisonResult {
    pub fn mean_baseline(&self) -> f64 {
        mean(&self.baseline)
    }

    pub fn mean_cleaned(&self) -> f64 {
        mean(&self.cleaned)
    }

    pub fn wins(&self) -> usize {
        self.baseline.iter().zip(&self.cleaned).filter(|(b, c)| c > b).count()
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("row,seed,auc_raw,auc_cleaned,delta\n");
        for ((s, b), c) in self.seeds.iter().zip(&self.baseline).zip(&self.cleaned) {
            let _ = writeln!(out, "seed,{s},{b},{c},{}", c - b);
        }
        let (b, c) = (self.mean_baseline(), self.mean_cleaned());
        let _ = writeln!(out, "mean,,{b},{c},{}", c - b);
        let _ = writeln!(
            out,
            "ttest,,t={},p={},df={},degenerate={}",
            self.test.t, self.test.p, self.test.df, self.test.degenerate
        );
        out
    }

    pub fn pr_csv(&self) -> String {
        let mut out = String::from("condition,seed,recall,precision\n");
        for (s, (raw, clean)) in self.seeds.iter().zip(&self.curves) {
            raw.to_csv_rows(&format!("raw,{s},"), &mut out);
            clean.to_csv_rows(&format!("cleaned,{s},"), &mut out);
        }
        out
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// AUC of a classifier trained on `splits`' positives of `relation` against
/// its `N_D`, scored on the held-out probe.
pub fn downstream_auc(
    splits: &DatasetSplits,
    relation: &str,
    encoder: EncoderConfig,
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<(f64, PrCurve)> {
    let pos: Vec<&Instance> = splits.positives.iter().filter(|i| i.relation == relation).collect();
    let neg: Vec<&Instance> = splits.negatives_d.iter().collect();
    let model = train_classifier(&pos, &neg, encoder, cfg, seed, |_| Ok(()))?;
    let probe = heldout_probe(&splits.heldout, relation);
    let scores = model.score_all(probe.iter().map(|l| l.0))?;
    let labels: Vec<bool> = probe.iter().map(|l| l.1 > 0.5).collect();
    let curve = pr_curve(&scores, &labels)?;
    Ok((auc(&curve), curve))
}

/// Trains identical classifiers on raw and cleaned data for every seed and
/// pairs the held-out AUCs.
pub fn downstream_compare(
    raw: &DatasetSplits,
    cleaned: &DatasetSplits,
    relation: &str,
    encoder: EncoderConfig,
    cfg: &ClassifierConfig,
    seeds: &[u64],
) -> Result<ComparisonResult> {
    if seeds.len() < 2 {
        return Err(DsganError::Config("downstream comparison needs at least two seeds".into()));
    }
    let ids = |s: &DatasetSplits| s.heldout.iter().map(|i| i.id.clone()).collect::<Vec<_>>();
    if ids(raw) != ids(cleaned) {
        return Err(DsganError::Input("raw and cleaned data must share the held-out set".into()));
    }
    let mut result = ComparisonResult {
        seeds: seeds.to_vec(),
        baseline: Vec::new(),
        cleaned: Vec::new(),
        curves: Vec::new(),
        test: TTest { t: 0.0, p: 1.0, df: 0, degenerate: true },
    };
    for &seed in seeds {
        let (a, ca) = downstream_auc(raw, relation, encoder, cfg, seed)?;
        let (b, cb) = downstream_auc(cleaned, relation, encoder, cfg, seed)?;
        result.baseline.push(a);
        result.cleaned.push(b);
        result.curves.push((ca, cb));
    }
    result.test = paired_t_test(&result.cleaned, &result.baseline)?;
    Ok(result)
}

/// Removes every positive flagged false positive into `N_D` as `NA`, the
/// best cleaning any filter could achieve.
pub fn oracle_clean(splits: &DatasetSplits) -> Result<DatasetSplits> {
    let mut out = splits.clone();
    out.positives.clear();
    for inst in &splits.positives {
        match truth_of(inst) {
            Some(Truth::TruePositive) => out.positives.push(inst.clone()),
            Some(Truth::FalsePositive) => {
                let mut n = inst.clone();
                n.relation = NA.to_string();
                out.negatives_d.push(n);
            }
            None => return Err(DsganError::MissingTruth(inst.id.clone())),
        }
    }
    Ok(out)
}

/// Identification of true positives among the positive set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quality {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Quality {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Quality { tp, fp, fn_, precision, recall, f1 }
    }
}

/// Precision, recall and F1 of `p_G ≥ threshold` against the truth flags.
pub fn quality_from_scores(positives: &[&Instance], probs: &[f64], threshold: f64) -> Result<Quality> {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (inst, &p) in positives.iter().zip(probs) {
        let truth = truth_of(inst).ok_or_else(|| DsganError::MissingTruth(inst.id.clone()))?;
        match (is_positive(p, threshold), truth) {
            (true, Truth::TruePositive) => tp += 1,
            (true, Truth::FalsePositive) => fp += 1,
            (false, Truth::TruePositive) => fn_ += 1,
            (false, Truth::FalsePositive) => {}
        }
    }
    Ok(Quality::from_counts(tp, fp, fn_))
}

pub fn generator_quality(g: &SentenceModel, positives: &[&Instance], threshold: f64) -> Result<Quality> {
    let probs = g.score_all(positives.iter().copied())?;
    quality_from_scores(positives, &probs, threshold)
}

/// F1 of a selector that keeps each instance at random with the rate needed
/// to reach `recall`: its precision is the true-positive fraction.
pub fn random_selection_f1(positives: &[&Instance], recall: f64) -> Result<f64> {
    let (tp, fp) = crate::data::truth::truth_stats(positives.iter().copied())?;
    let precision = tp as f64 / (tp + fp) as f64;
    Ok(if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    })
}

/// Fraction of redistributed instances that were planted false positives.
pub fn redistribution_precision(moved: &[&Instance]) -> Result<f64> {
    if moved.is_empty() {
        return Ok(0.0);
    }
    let (_, fp) = crate::data::truth::truth_stats(moved.iter().copied())?;
    Ok(fp as f64 / moved.len() as f64)
}

pub const CONDITIONS: [&str; 3] = ["DSGAN", "Pre-training", "Random"];

/// Per-condition, per-seed training accuracy after every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct PositiveSetResult {
    pub m: usize,
    pub seeds: Vec<u64>,
    /// `curves[c][s][e]` for condition `CONDITIONS[c]`.
    pub curves: [Vec<Vec<f64>>; 3],
    /// Whether all three positive sets were identical for each seed.
    pub identical_sets: Vec<bool>,
}

impl PositiveSetResult {
    /// Seed-mean final-epoch training accuracy per condition.
    pub fn final_means(&self) -> [f64; 3] {
        self.curves.each_ref().map(|c| mean(&c.iter().map(|s| *s.last().unwrap()).collect::<Vec<_>>()))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("condition,seed,epoch,train_accuracy\n");
        for (c, name) in CONDITIONS.iter().enumerate() {
            for (s, seed) in self.seeds.iter().enumerate() {
                for (e, acc) in self.curves[c][s].iter().enumerate() {
                    let _ = writeln!(out, "{name},{seed},{},{acc}", e + 1);
                }
            }
        }
        let f = self.final_means();
        let _ = writeln!(
            out,
            "# m={} identical_sets={} final_mean DSGAN={} Pre-training={} Random={} ordering_holds={}",
            self.m,
            self.identical_sets.iter().all(|&b| b),
            f[0],
            f[1],
            f[2],
            f[0] >= f[1] && f[1] >= f[2]
        );
        out
    }
}

/// Indices of the `m` highest scores, ties in input order.
pub fn top_m(scores: &[f64], m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order.truncate(m);
    order.sort_unstable();
    order
}

/// Builds three positive sets of exactly `m` instances (top-m by the DSGAN
/// generator, top-m by the pre-trained generator, a seeded random subset),
/// pairs each with `negatives` and records the training accuracy curves.
pub fn positive_set_experiment(
    positives: &[&Instance],
    negatives: &[&Instance],
    g_dsgan: &SentenceModel,
    g_pre: &SentenceModel,
    m: usize,
    encoder: EncoderConfig,
    cfg: &ClassifierConfig,
    seeds: &[u64],
) -> Result<PositiveSetResult> {
    if m == 0 || m > positives.len() {
        return Err(DsganError::Input(format!(
            "positive-set size {m} must lie in 1..={}",
            positives.len()
        )));
    }
    if seeds.is_empty() {
        return Err(DsganError::Config("at least one seed is required".into()));
    }
    let by_dsgan = top_m(&g_dsgan.score_all(positives.iter().copied())?, m);
    let by_pre = top_m(&g_pre.score_all(positives.iter().copied())?, m);
    let mut result = PositiveSetResult {
        m,
        seeds: seeds.to_vec(),
        curves: Default::default(),
        identical_sets: Vec::new(),
    };
    for &seed in seeds {
        let mut random: Vec<usize> = (0..positives.len()).collect();
        random.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
        random.truncate(m);
        random.sort_unstable();
        result.identical_sets.push(by_dsgan == by_pre && by_pre == random);
        for (c, idx) in [&by_dsgan, &by_pre, &random].into_iter().enumerate() {
            let pos: Vec<&Instance> = idx.iter().map(|&i| positives[i]).collect();
            let train: Vec<Labeled<'_>> = pos
                .iter()
                .map(|&i| (i, 1.0))
                .chain(negatives.iter().map(|&i| (i, 0.0)))
                .collect();
            let mut curve = Vec::with_capacity(cfg.epochs);
            train_classifier(&pos, negatives, encoder, cfg, seed, |model| {
                curve.push(accuracy(model, &train)?);
                Ok(())
            })?;
            result.curves[c].push(curve);
        }
    }
    Ok(result)
}
