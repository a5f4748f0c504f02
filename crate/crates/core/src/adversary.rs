//! The adversarial loop. Per bag: the generator samples a subset `T` it
//! believes is genuine, the discriminator is trained to reject `T` and accept
//! the rest, and the generator is rewarded by how convincing `T` remained and
//! by how much the discriminator weakened on the negative set `N_D`.

use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{BagSequence, Instance};
use crate::encoder::SentenceModel;
use crate::error::{DsganError, Result};
use crate::nn::{Direction, ParamSnapshot, SgdConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdversaryConfig {
    pub eta: f64,
    pub baseline_decay: f64,
    pub baseline_init: f64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub bag_size: usize,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        AdversaryConfig {
            eta: 0.2,
            baseline_decay: 0.9,
            baseline_init: 0.5,
            lr_g: 0.005,
            lr_d: 50.0,
            max_epochs: 12,
            patience: 3,
            bag_size: 64,
        }
    }
}

impl AdversaryConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DsganError::Config(m.to_string()));
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return bad("adversary.eta must be a finite value >= 0");
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return bad("adversary.baseline_decay must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.baseline_init) {
            return bad("adversary.baseline_init must lie in [0, 1]");
        }
        if !(self.lr_g > 0.0) || !(self.lr_d > 0.0) {
            return bad("adversary learning rates must be positive");
        }
        if self.max_epochs == 0 || self.patience == 0 || self.bag_size == 0 {
            return bad("adversary.max_epochs, patience and bag_size must be positive");
        }
        Ok(())
    }
}

/// Baseline for the first reward and the per-bag history of `p̃` values the
/// second reward compares against.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardState {
    pub b1: f64,
    /// `p_tilde_history[k][i]`: `p̃` after bag `i` of epoch `k + 1`.
    pub p_tilde_history: Vec<Vec<f64>>,
    bags: usize,
}

impl RewardState {
    pub fn new(bags: usize, b1: f64) -> Self {
        RewardState {
            b1,
            p_tilde_history: Vec::new(),
            bags,
        }
    }

    pub fn update_baseline(&mut self, mean_pd: f64, decay: f64) {
        self.b1 = decay * self.b1 + (1.0 - decay) * mean_pd;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BagMetrics {
    pub bag: usize,
    /// Fraction of `N_D` with `p_D < 0.5` after this bag's discriminator step.
    pub acc_nd: f64,
    pub p_tilde: f64,
    /// Zero when `T` was empty and no reward was computed.
    pub r1: f64,
    pub r2: f64,
    pub t_size: usize,
    pub f_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub bags: Vec<BagMetrics>,
    pub acc_nd: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub epochs: Vec<EpochMetrics>,
    pub best_epoch: usize,
    /// Generator parameters at the end of the best epoch.
    pub generator: ParamSnapshot,
}

impl RunReport {
    pub fn best(&self) -> &EpochMetrics {
        &self.epochs[self.best_epoch - 1]
    }

    /// Rebuilds the best generator on top of a model with the same layout.
    pub fn best_generator(&self, template: &SentenceModel) -> Result<SentenceModel> {
        let mut g = template.clone();
        g.params.restore(&self.generator)?;
        Ok(g)
    }

    /// One `bag` row per processed bag followed by one `epoch` row per epoch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,epoch,bag,acc_nd,p_tilde,r1,r2,t_size\n");
        for e in &self.epochs {
            for b in &e.bags {
                let _ = writeln!(
                    out,
                    "bag,{},{},{},{},{},{},{}",
                    e.epoch, b.bag, b.acc_nd, b.p_tilde, b.r1, b.r2, b.t_size
                );
            }
        }
        for e in &self.epochs {
            let best = if e.epoch == self.best_epoch { "best" } else { "" };
            let _ = writeln!(out, "epoch,{},{},{},,,,", e.epoch, best, e.acc_nd);
        }
        out
    }
}

/// Each index joins `T` independently with its probability; `F` is the rest.
pub fn sample_generated_set(probs: &[f64], rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>) {
    let mut t = Vec::new();
    let mut f = Vec::new();
    for (j, &p) in probs.iter().enumerate() {
        if rng.gen::<f64>() < p {
            t.push(j);
        } else {
            f.push(j);
        }
    }
    (t, f)
}

/// Descent on `(1/|P|)·[Σ_T −log(1−p_D) + Σ_F −log p_D]`. Returns the mean
/// pre-step loss, or `None` when the bag is empty.
pub fn discriminator_step(
    d: &mut SentenceModel,
    t: &[&Instance],
    f: &[&Instance],
    lr: f64,
    total_positives: usize,
) -> Result<Option<f64>> {
    if t.is_empty() && f.is_empty() {
        return Ok(None);
    }
    if total_positives == 0 {
        return Err(DsganError::Input("|P| must be positive".into()));
    }
    let batch: Vec<&Instance> = t.iter().chain(f).copied().collect();
    let labels: Vec<f64> = (0..batch.len()).map(|i| if i < t.len() { 0.0 } else { 1.0 }).collect();
    d.supervised_step(&batch, &labels, lr, 1.0 / total_positives as f64).map(Some)
}

pub fn reward_r1(pd_on_t: &[f64], b1: f64) -> Result<f64> {
    if pd_on_t.is_empty() {
        return Err(DsganError::Input("first reward needs a non-empty generated set".into()));
    }
    Ok(pd_on_t.iter().sum::<f64>() / pd_on_t.len() as f64 - b1)
}

/// Reward of each generated instance: its own `p_D − b1` plus the shared `r2`.
/// Averaging these over `T` gives `r1 + r2`.
pub fn instance_rewards(pd_on_t: &[f64], b1: f64, r2: f64) -> Vec<f64> {
    pd_on_t.iter().map(|&p| (p - b1) + r2).collect()
}

/// `(p̃, accuracy)`: mean `p_D` over `N_D` and the fraction below 0.5.
pub fn avg_neg_prob(d: &SentenceModel, negatives: &[&Instance]) -> Result<(f64, f64)> {
    if negatives.is_empty() {
        return Err(DsganError::Input("N_D is empty".into()));
    }
    let mut scorer = d.scorer();
    let mut sum = 0.0;
    let mut below = 0usize;
    for inst in negatives {
        let p = scorer.prob(inst)?;
        sum += p;
        if p < 0.5 {
            below += 1;
        }
    }
    let n = negatives.len() as f64;
    Ok((sum / n, below as f64 / n))
}

/// `η·(p̃ − max of earlier epochs at this bag index)`, zero in epoch 1.
/// Records `p̃` in the history; bags of an epoch must arrive in order.
pub fn reward_r2(p_tilde: f64, bag_index: usize, epoch: usize, state: &mut RewardState, eta: f64) -> Result<f64> {
    if bag_index >= state.bags {
        return Err(DsganError::IndexOutOfRange {
            index: bag_index,
            len: state.bags,
        });
    }
    if epoch == 0 {
        return Err(DsganError::Input("epochs are numbered from 1".into()));
    }
    let hist = &mut state.p_tilde_history;
    if hist.len() + 1 == epoch && hist.last().map_or(true, |r| r.len() == state.bags) {
        hist.push(Vec::with_capacity(state.bags));
    }
    if hist.len() != epoch || hist[epoch - 1].len() != bag_index {
        return Err(DsganError::Input(format!(
            "reward history out of order at epoch {epoch}, bag {bag_index}"
        )));
    }
    let r2 = if epoch == 1 {
        0.0
    } else {
        let b2 = hist[..epoch - 1]
            .iter()
            .map(|row| row[bag_index])
            .fold(f64::NEG_INFINITY, f64::max);
        eta * (p_tilde - b2)
    };
    hist[epoch - 1].push(p_tilde);
    Ok(r2)
}

/// Adds the gradient of `Σ_j rewards[j]·log p_G(t[j])` to G's buffers.
pub fn accumulate_generator_grad(g: &mut SentenceModel, t: &[&Instance], rewards: &[f64]) -> Result<()> {
    if t.len() != rewards.len() {
        return Err(DsganError::Shape(format!(
            "{} instances vs {} rewards",
            t.len(),
            rewards.len()
        )));
    }
    let weights = g.conv_weights();
    for (inst, &r) in t.iter().zip(rewards) {
        if r == 0.0 {
            continue;
        }
        let tr = g.forward_with(&weights, inst)?;
        // d log(sigmoid(z)) / dz = 1 − p
        g.backward(&tr, r * (1.0 - tr.prob));
    }
    Ok(())
}

/// One ascent step on `Σ_j rewards[j]·log p_G(t[j])`.
pub fn generator_step(g: &mut SentenceModel, t: &[&Instance], rewards: &[f64], lr: f64) -> Result<()> {
    if t.is_empty() {
        return Err(DsganError::Input("generator step on an empty set".into()));
    }
    if let Err(e) = accumulate_generator_grad(g, t, rewards) {
        g.params.zero_grad();
        return Err(e);
    }
    g.params.sgd_apply(SgdConfig::new(lr)?, Direction::Ascent)
}

/// Everything `run_bag` needs besides the models.
pub struct BagContext<'a> {
    pub negatives: &'a [&'a Instance],
    pub total_positives: usize,
    pub epoch: usize,
    pub bag_index: usize,
}

pub fn run_bag(
    g: &mut SentenceModel,
    d: &mut SentenceModel,
    bag: &[&Instance],
    ctx: &BagContext<'_>,
    state: &mut RewardState,
    cfg: &AdversaryConfig,
    rng: &mut impl Rng,
) -> Result<BagMetrics> {
    let probs = g.score_all(bag.iter().copied())?;
    let (ti, fi) = sample_generated_set(&probs, rng);
    let t: Vec<&Instance> = ti.iter().map(|&j| bag[j]).collect();
    let f: Vec<&Instance> = fi.iter().map(|&j| bag[j]).collect();

    discriminator_step(d, &t, &f, cfg.lr_d, ctx.total_positives)?;
    let (p_tilde, acc_nd) = avg_neg_prob(d, ctx.negatives)?;
    let r2 = reward_r2(p_tilde, ctx.bag_index, ctx.epoch, state, cfg.eta)?;

    let mut r1 = 0.0;
    let mut r2_used = 0.0;
    if !t.is_empty() {
        let pd = d.score_all(t.iter().copied())?;
        r1 = reward_r1(&pd, state.b1)?;
        r2_used = r2;
        let rewards = instance_rewards(&pd, state.b1, r2);
        generator_step(g, &t, &rewards, cfg.lr_g)?;
        let mean = pd.iter().sum::<f64>() / pd.len() as f64;
        state.update_baseline(mean, cfg.baseline_decay);
    }
    Ok(BagMetrics {
        bag: ctx.bag_index,
        acc_nd,
        p_tilde,
        r1,
        r2: r2_used,
        t_size: t.len(),
        f_size: f.len(),
    })
}

/// Full adversarial training. The discriminator is reloaded from
/// `d_snapshot` at the start of every epoch; the generator carries over.
/// Stops once epoch-end ACC_D has failed to set a new minimum for
/// `patience` consecutive epochs.
#[allow(clippy::too_many_arguments)]
pub fn run(
    positives: &[&Instance],
    bags: &BagSequence,
    negatives: &[&Instance],
    g_init: &SentenceModel,
    d_init: &SentenceModel,
    d_snapshot: &ParamSnapshot,
    cfg: &AdversaryConfig,
    seed: u64,
) -> Result<RunReport> {
    run_observed(positives, bags, negatives, g_init, d_init, d_snapshot, cfg, seed, |_, _| {})
}

/// [`run`] with a callback after every epoch, given the epoch's metrics and
/// the generator at its end.
#[allow(clippy::too_many_arguments)]
pub fn run_observed(
    positives: &[&Instance],
    bags: &BagSequence,
    negatives: &[&Instance],
    g_init: &SentenceModel,
    d_init: &SentenceModel,
    d_snapshot: &ParamSnapshot,
    cfg: &AdversaryConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochMetrics, &SentenceModel),
) -> Result<RunReport> {
    cfg.validate()?;
    if bags.is_empty() {
        return Err(DsganError::Input("no bags to train on".into()));
    }
    if let Some(&bad) = bags.bags.iter().flatten().find(|&&i| i >= positives.len()) {
        return Err(DsganError::IndexOutOfRange {
            index: bad,
            len: positives.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = g_init.clone();
    let mut d = d_init.clone();
    let mut state = RewardState::new(bags.len(), cfg.baseline_init);
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, ParamSnapshot)> = None;
    let mut stale = 0;

    for epoch in 1..=cfg.max_epochs {
        d.params.restore(d_snapshot)?;
        let mut metrics = Vec::with_capacity(bags.len());
        for (i, bag) in bags.bags.iter().enumerate() {
            let members: Vec<&Instance> = bag.iter().map(|&j| positives[j]).collect();
            let ctx = BagContext {
                negatives,
                total_positives: positives.len(),
                epoch,
                bag_index: i,
            };
            metrics.push(run_bag(&mut g, &mut d, &members, &ctx, &mut state, cfg, &mut rng)?);
        }
        let acc = metrics.last().map(|m| m.acc_nd).expect("at least one bag");
        epochs.push(EpochMetrics {
            epoch,
            bags: metrics,
            acc_nd: acc,
        });
        on_epoch(epochs.last().expect("just pushed"), &g);
        match &best {
            Some((_, b, _)) if acc >= *b => stale += 1,
            _ => {
                best = Some((epoch, acc, g.params.snapshot()));
                stale = 0;
            }
        }
        if stale >= cfg.patience {
            break;
        }
    }
    let (best_epoch, _, generator) = best.expect("at least one epoch");
    Ok(RunReport {
        epochs,
        best_epoch,
        generator,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;

    fn small() -> EncoderConfig {
        EncoderConfig {
            word_dim: 4,
            position_dim: 2,
            kernels: 5,
            max_distance: 4,
            vocab_size: 30,
            ..Default::default()
        }
    }

    fn model(seed: u64) -> SentenceModel {
        SentenceModel::new(small(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn inst(id: usize, tokens: Vec<usize>) -> Instance {
        Instance::new(format!("i{id}"), (format!("h{id}"), "t".into()), "r", tokens, 0, 1).unwrap()
    }

    fn sentences(n: usize) -> Vec<Instance> {
        (0..n).map(|i| inst(i, vec![1 + i % 29, 2 + (i * 7) % 28, 3, 4 + i % 5])).collect()
    }

    #[test]
    fn sampling_boundaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_generated_set(&[1.0; 5], &mut rng), ((0..5).collect(), vec![]));
        assert_eq!(sample_generated_set(&[0.0; 5], &mut rng), (vec![], (0..5).collect()));
    }

    #[test]
    fn sampling_rate_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (t, f) = sample_generated_set(&vec![0.5; 10_000], &mut rng);
        assert_eq!(t.len() + f.len(), 10_000);
        assert!((t.len() as f64 / 1e4 - 0.5).abs() < 0.02);
    }

    #[test]
    fn r1_cases() {
        assert!((reward_r1(&[0.8, 0.6], 0.5).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(reward_r1(&[0.3, 0.3], 0.3).unwrap(), 0.0);
        assert!((reward_r1(&[0.1], 0.5).unwrap() + 0.4).abs() < 1e-12);
        assert!(reward_r1(&[], 0.5).is_err());
    }

    #[test]
    fn r2_history() {
        let mut s = RewardState::new(2, 0.5);
        assert_eq!(reward_r2(0.3, 0, 1, &mut s, 1.0).unwrap(), 0.0);
        assert_eq!(reward_r2(0.9, 1, 1, &mut s, 1.0).unwrap(), 0.0);
        assert!((reward_r2(0.35, 0, 2, &mut s, 1.0).unwrap() - 0.05).abs() < 1e-12);
        reward_r2(0.1, 1, 2, &mut s, 1.0).unwrap();
        // index 0 history is now [0.3, 0.35]
        assert!((reward_r2(0.4, 0, 3, &mut s, 1.0).unwrap() - 0.05).abs() < 1e-12);
        assert!((reward_r2(0.2, 1, 3, &mut s, 2.0).unwrap() - 2.0 * (0.2 - 0.9)).abs() < 1e-12);
        assert!(reward_r2(0.2, 2, 3, &mut s, 1.0).is_err());
    }

    #[test]
    fn r2_eta_two_below_max() {
        let mut s = RewardState::new(1, 0.5);
        reward_r2(0.3, 0, 1, &mut s, 2.0).unwrap();
        reward_r2(0.35, 0, 2, &mut s, 2.0).unwrap();
        assert!((reward_r2(0.2, 0, 3, &mut s, 2.0).unwrap() + 0.3).abs() < 1e-12);
    }

    #[test]
    fn r2_rejects_skipped_bags() {
        let mut s = RewardState::new(3, 0.5);
        assert!(reward_r2(0.3, 1, 1, &mut s, 1.0).is_err());
    }

    #[test]
    fn zero_output_probe_is_half() {
        let mut d = model(2);
        d.zero_output();
        let v = sentences(6);
        let refs: Vec<&Instance> = v.iter().collect();
        let (p, acc) = avg_neg_prob(&d, &refs).unwrap();
        assert_eq!(p, 0.5);
        assert_eq!(acc, 0.0);
        assert!(avg_neg_prob(&d, &[]).is_err());
    }

    #[test]
    fn discriminator_step_scaling_and_empty() {
        let v = sentences(4);
        let refs: Vec<&Instance> = v.iter().collect();
        let d0 = model(3);
        let mut d = d0.clone();
        assert_eq!(discriminator_step(&mut d, &[], &[], 0.1, 10).unwrap(), None);
        assert_eq!(d, d0);

        let delta = |p: usize| {
            let mut m = d0.clone();
            discriminator_step(&mut m, &refs[..2], &refs[2..], 0.1, p).unwrap();
            let out = m.params.at(6).value.data()[0] - d0.params.at(6).value.data()[0];
            out
        };
        let (a, b) = (delta(10), delta(20));
        assert!((a - 2.0 * b).abs() < 1e-12 * a.abs().max(1.0), "{a} {b}");
    }

    #[test]
    fn fixed_adversarial_set_is_rejected() {
        let v = sentences(6);
        let refs: Vec<&Instance> = v.iter().collect();
        let mut d = model(4);
        for _ in 0..300 {
            discriminator_step(&mut d, &refs[..3], &refs[3..], 1.0, 1).unwrap();
        }
        for inst in &refs[..3] {
            assert!(d.predict_prob(inst).unwrap() < 0.5);
        }
    }

    #[test]
    fn generator_step_directions() {
        let v = sentences(1);
        let t = [&v[0]];
        let g0 = model(5);
        let mut g = g0.clone();
        generator_step(&mut g, &t, &[0.0], 0.1).unwrap();
        assert_eq!(g, g0);
        let p0 = g0.predict_prob(&v[0]).unwrap();
        generator_step(&mut g, &t, &[1.0], 0.01).unwrap();
        assert!(g.predict_prob(&v[0]).unwrap() > p0);
        let mut g = g0.clone();
        generator_step(&mut g, &t, &[-1.0], 0.01).unwrap();
        assert!(g.predict_prob(&v[0]).unwrap() < p0);
        assert!(generator_step(&mut g, &[], &[], 0.01).is_err());
    }

    #[test]
    fn generator_step_rejects_non_finite() {
        let v = sentences(1);
        let mut g = model(6);
        assert!(generator_step(&mut g, &[&v[0]], &[f64::NAN], 0.1).is_err());
    }

    #[test]
    fn empty_generated_set_skips_generator() {
        let v = sentences(8);
        let refs: Vec<&Instance> = v.iter().collect();
        let mut g = model(7);
        // a large negative bias drives every p_G to zero
        g.params.at_mut(6).value.data_mut()[0] = -1e4;
        let g0 = g.clone();
        let mut d = model(8);
        let d0 = d.clone();
        let mut state = RewardState::new(1, 0.5);
        let ctx = BagContext {
            negatives: &refs[4..],
            total_positives: 4,
            epoch: 1,
            bag_index: 0,
        };
        let m = run_bag(&mut g, &mut d, &refs[..4], &ctx, &mut state, &AdversaryConfig::default(), &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert_eq!(m.t_size, 0);
        assert_eq!(m.f_size, 4);
        assert_eq!(g, g0);
        assert_ne!(d, d0);
        assert_eq!(state.b1, 0.5);
        assert_eq!(state.p_tilde_history, vec![vec![m.p_tilde]]);
    }

    fn toy_run(cfg: &AdversaryConfig, seed: u64) -> RunReport {
        let v = sentences(24);
        let pos: Vec<&Instance> = v[..16].iter().collect();
        let neg: Vec<&Instance> = v[16..].iter().collect();
        let bags = crate::data::make_bags(&pos, cfg.bag_size, 3).unwrap();
        let g = model(10);
        let d = model(11);
        run(&pos, &bags, &neg, &g, &d, &d.params.snapshot(), cfg, seed).unwrap()
    }

    #[test]
    fn single_epoch_run() {
        let cfg = AdversaryConfig { max_epochs: 1, bag_size: 5, ..Default::default() };
        let r = toy_run(&cfg, 0);
        assert_eq!(r.epochs.len(), 1);
        assert_eq!(r.best_epoch, 1);
        assert_eq!(r.epochs[0].bags.len(), 4);
        assert!(r.epochs[0].bags.iter().all(|b| b.r2 == 0.0));
        let total: usize = r.epochs[0].bags.iter().map(|b| b.t_size + b.f_size).sum();
        assert_eq!(total, 16);
    }

    #[test]
    fn run_is_reproducible_and_best_is_minimum() {
        let cfg = AdversaryConfig { max_epochs: 5, patience: 5, bag_size: 4, lr_d: 1.0, ..Default::default() };
        let a = toy_run(&cfg, 9);
        let b = toy_run(&cfg, 9);
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.generator, b.generator);
        let best = a.best().acc_nd;
        assert!(a.epochs.iter().all(|e| e.acc_nd >= best));
        assert!(a.epochs[..a.best_epoch - 1].iter().all(|e| e.acc_nd > best));
    }

    #[test]
    fn rejects_bad_config() {
        assert!(AdversaryConfig { baseline_decay: 1.0, ..Default::default() }.validate().is_err());
        assert!(AdversaryConfig { eta: -1.0, ..Default::default() }.validate().is_err());
    }
}
