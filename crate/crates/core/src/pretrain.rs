//! Initial parameters for the adversarial phase: a discriminator trained to
//! a target held-out accuracy, and a generator deliberately overfitted to the
//! noisy positives.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Instance;
use crate::encoder::{EncoderConfig, SentenceModel};
use crate::error::{DsganError, Result};
use crate::nn::ParamSnapshot;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub target_accuracy: f64,
    pub target_mean_prob: f64,
    /// Fraction of `P ∪ N_D` carved out as the accuracy probe when no
    /// labeled probe set is supplied.
    pub heldout_fraction: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            max_epochs: 60,
            batch_size: 32,
            lr: 0.1,
            target_accuracy: 0.90,
            target_mean_prob: 0.90,
            heldout_fraction: 0.1,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DsganError::Config(m.to_string()));
        if self.max_epochs == 0 {
            return bad("pretrain.max_epochs must be positive");
        }
        if self.batch_size < 2 {
            return bad("pretrain.batch_size must be at least 2");
        }
        if !(self.lr > 0.0) {
            return bad("pretrain.lr must be positive");
        }
        for t in [self.target_accuracy, self.target_mean_prob] {
            if !(t > 0.5 && t < 1.0) {
                return bad("pretrain targets must lie in (0.5, 1)");
            }
        }
        if !(self.heldout_fraction > 0.0 && self.heldout_fraction < 0.5) {
            return bad("pretrain.heldout_fraction must lie in (0, 0.5)");
        }
        Ok(())
    }
}

/// An instance with a binary target.
pub type Labeled<'a> = (&'a Instance, f64);

/// Fraction of `probe` classified correctly at threshold 0.5.
pub fn accuracy(model: &SentenceModel, probe: &[Labeled<'_>]) -> Result<f64> {
    if probe.is_empty() {
        return Err(DsganError::Input("accuracy over an empty probe set".into()));
    }
    let mut scorer = model.scorer();
    let mut correct = 0usize;
    for (inst, y) in probe {
        let p = scorer.prob(inst)?;
        if (p >= 0.5) == (*y >= 0.5) {
            correct += 1;
        }
    }
    Ok(correct as f64 / probe.len() as f64)
}

/// One pass of balanced mini-batches: each batch holds `batch_size / 2`
/// positives and as many negatives, cycling the smaller set so the epoch
/// covers every instance of the larger one. Returns the mean batch loss.
pub fn balanced_epoch(
    model: &mut SentenceModel,
    positives: &[&Instance],
    negatives: &[&Instance],
    batch_size: usize,
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(DsganError::Input("balanced training needs both classes".into()));
    }
    let half = (batch_size / 2).max(1);
    let mut pos: Vec<usize> = (0..positives.len()).collect();
    let mut neg: Vec<usize> = (0..negatives.len()).collect();
    pos.shuffle(rng);
    neg.shuffle(rng);
    let batches = positives.len().max(negatives.len()).div_ceil(half);
    let mut batch = Vec::with_capacity(2 * half);
    let mut labels = Vec::with_capacity(2 * half);
    let mut total = 0.0;
    for b in 0..batches {
        batch.clear();
        labels.clear();
        for k in 0..half {
            let i = b * half + k;
            batch.push(positives[pos[i % pos.len()]]);
            labels.push(1.0);
            batch.push(negatives[neg[i % neg.len()]]);
            labels.push(0.0);
        }
        total += model.supervised_step(&batch, &labels, lr, 1.0 / batch.len() as f64)?;
    }
    Ok(total / batches as f64)
}

#[derive(Debug, Clone)]
pub struct PretrainedDiscriminator {
    pub model: SentenceModel,
    /// Parameters reloaded at the start of every adversarial epoch.
    pub snapshot: ParamSnapshot,
    pub accuracy: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone)]
pub struct PretrainedGenerator {
    pub model: SentenceModel,
    pub mean_prob: f64,
    pub epochs: usize,
}

/// Trains `P` (label 1) against `N_D` (label 0) until accuracy on the probe
/// set reaches the target. Without a probe, a `heldout_fraction` carve of
/// `P ∪ N_D` is held out and used instead.
pub fn pretrain_discriminator(
    positives: &[&Instance],
    negatives: &[&Instance],
    probe: Option<&[Labeled<'_>]>,
    encoder: EncoderConfig,
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<PretrainedDiscriminator> {
    cfg.validate()?;
    if positives.is_empty() || negatives.is_empty() {
        return Err(DsganError::Input(
            "discriminator pre-training needs non-empty P and N_D".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = SentenceModel::new(encoder, &mut rng)?;

    let (train_pos, train_neg, carved);
    let probe: &[Labeled<'_>] = match probe {
        Some(p) => {
            train_pos = positives.to_vec();
            train_neg = negatives.to_vec();
            p
        }
        None => {
            let mut all: Vec<Labeled<'_>> = positives
                .iter()
                .map(|&i| (i, 1.0))
                .chain(negatives.iter().map(|&i| (i, 0.0)))
                .collect();
            all.shuffle(&mut rng);
            let k = ((all.len() as f64) * cfg.heldout_fraction).round().max(1.0) as usize;
            carved = all[..k].to_vec();
            train_pos = all[k..].iter().filter(|l| l.1 > 0.5).map(|l| l.0).collect();
            train_neg = all[k..].iter().filter(|l| l.1 < 0.5).map(|l| l.0).collect();
            &carved
        }
    };

    let mut best = 0.0f64;
    for epoch in 1..=cfg.max_epochs {
        balanced_epoch(&mut model, &train_pos, &train_neg, cfg.batch_size, cfg.lr, &mut rng)?;
        let acc = accuracy(&model, probe)?;
        best = best.max(acc);
        if acc >= cfg.target_accuracy {
            let snapshot = model.params.snapshot();
            return Ok(PretrainedDiscriminator {
                model,
                snapshot,
                accuracy: acc,
                epochs: epoch,
            });
        }
    }
    Err(DsganError::TargetNotReached {
        target: cfg.target_accuracy,
        best,
        epochs: cfg.max_epochs,
    })
}

/// Trains `P` (label 1) against `N_G` (label 0) until the mean predicted
/// probability over all of `P` reaches `target_mean_prob`.
pub fn pretrain_generator(
    positives: &[&Instance],
    negatives: &[&Instance],
    encoder: EncoderConfig,
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<PretrainedGenerator> {
    cfg.validate()?;
    if positives.is_empty() || negatives.is_empty() {
        return Err(DsganError::Input(
            "generator pre-training needs non-empty P and N_G".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = SentenceModel::new(encoder, &mut rng)?;
    let mut best = 0.0f64;
    for epoch in 1..=cfg.max_epochs {
        balanced_epoch(&mut model, positives, negatives, cfg.batch_size, cfg.lr, &mut rng)?;
        let probs = model.score_all(positives.iter().copied())?;
        let mean = probs.iter().sum::<f64>() / probs.len() as f64;
        best = best.max(mean);
        if mean >= cfg.target_mean_prob {
            return Ok(PretrainedGenerator {
                model,
                mean_prob: mean,
                epochs: epoch,
            });
        }
    }
    Err(DsganError::TargetNotReached {
        target: cfg.target_mean_prob,
        best,
        epochs: cfg.max_epochs,
    })
}
