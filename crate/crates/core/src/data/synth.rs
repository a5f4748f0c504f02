//! Synthetic distantly supervised data with planted noise.
//!
//! Vocabulary layout: index 0 is padding/unknown, then one block of signal
//! tokens per relation, then a shared background block, then entity tokens.
//! Every entity pair gets fresh head and tail tokens, except that a fraction
//! of held-out pairs reuse the head entity of a training positive pair.
//!
//! True positives carry `signal_strength` tokens from their relation's block
//! within two positions of an entity. False positives and negatives contain
//! background tokens only. Noise is planted per pair: every sentence of a
//! noisy pair is a false positive.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::io::Vocab;
use super::truth::Truth;
use super::{DatasetSplits, Instance, NA};
use crate::error::{DsganError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub relations: usize,
    pub positives_per_relation: usize,
    pub negatives_g: usize,
    pub negatives_d: usize,
    pub heldout_positives_per_relation: usize,
    pub heldout_negatives: usize,
    /// Fraction of each relation's positives that are false positives.
    pub noise_rate: f64,
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Relation-indicative tokens injected into each true positive.
    pub signal_strength: usize,
    pub signal_block: usize,
    /// Probability that a sentence without the relation still contains one
    /// signal token, at a random position.
    pub signal_leak: f64,
    pub background_block: usize,
    pub min_pair_size: usize,
    pub max_pair_size: usize,
    /// Probability that a held-out pair reuses a training head entity.
    pub heldout_entity_overlap: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            relations: 1,
            positives_per_relation: 2000,
            negatives_g: 2000,
            negatives_d: 2000,
            heldout_positives_per_relation: 400,
            heldout_negatives: 400,
            noise_rate: 0.3,
            vocab_size: 20000,
            min_len: 6,
            max_len: 12,
            signal_strength: 2,
            signal_block: 20,
            signal_leak: 0.1,
            background_block: 400,
            min_pair_size: 1,
            max_pair_size: 4,
            heldout_entity_overlap: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DsganError::Config(m));
        if !(0.0..0.5).contains(&self.noise_rate) {
            return bad(format!("noise rate must lie in [0, 0.5), got {}", self.noise_rate));
        }
        if self.relations == 0 {
            return bad("at least one relation required".into());
        }
        if self.min_len < 3 || self.max_len < self.min_len {
            return bad(format!(
                "sentence length range [{}, {}] invalid (minimum 3)",
                self.min_len, self.max_len
            ));
        }
        if self.min_pair_size == 0 || self.max_pair_size < self.min_pair_size {
            return bad("pair size range invalid".into());
        }
        if self.signal_block == 0 || self.background_block == 0 {
            return bad("signal and background blocks must be non-empty".into());
        }
        if !(0.0..=1.0).contains(&self.signal_leak) {
            return bad(format!("signal leak must lie in [0, 1], got {}", self.signal_leak));
        }
        if !(0.0..=1.0).contains(&self.heldout_entity_overlap) {
            return bad("heldout entity overlap must lie in [0, 1]".into());
        }
        let fixed = 1 + self.relations * self.signal_block + self.background_block;
        let entities = 2 * self.max_pairs();
        if self.vocab_size < fixed + entities {
            return bad(format!(
                "vocab size {} cannot host {fixed} signal/background tokens plus {entities} entity tokens",
                self.vocab_size
            ));
        }
        Ok(())
    }

    fn max_pairs(&self) -> usize {
        let per_split = |n: usize| n.div_ceil(self.min_pair_size) + 1;
        self.relations * (2 * per_split(self.positives_per_relation) + per_split(self.heldout_positives_per_relation))
            + per_split(self.negatives_g)
            + per_split(self.negatives_d)
            + per_split(self.heldout_negatives)
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub splits: DatasetSplits,
    pub vocab: Vocab,
}

pub fn relation_name(r: usize) -> String {
    format!("rel{r}")
}

struct Generator<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
    next_entity: usize,
    entity_base: usize,
    background_base: usize,
    counter: usize,
}

struct Pair {
    head: usize,
    tail: usize,
    size: usize,
}

impl Generator<'_> {
    fn fresh_entity(&mut self) -> usize {
        let e = self.next_entity;
        self.next_entity += 1;
        e
    }

    fn entity_name(&self, tok: usize) -> String {
        format!("ent{}", tok - self.entity_base)
    }

    /// Pair sizes drawn from the configured range, last one truncated so the
    /// total is exactly `n`.
    fn pairs(&mut self, n: usize) -> Vec<Pair> {
        let mut out = Vec::new();
        let mut left = n;
        while left > 0 {
            let size = self
                .rng
                .gen_range(self.cfg.min_pair_size..=self.cfg.max_pair_size)
                .min(left);
            let head = self.fresh_entity();
            let tail = self.fresh_entity();
            out.push(Pair { head, tail, size });
            left -= size;
        }
        out
    }

    fn sentence(&mut self, pair: &Pair, signal: Option<usize>, prefix: &str, relation: &str) -> Instance {
        let cfg = self.cfg;
        let len = self.rng.gen_range(cfg.min_len..=cfg.max_len);
        let mut tokens: Vec<usize> = (0..len)
            .map(|_| self.background_base + self.rng.gen_range(0..cfg.background_block))
            .collect();
        let head_pos = self.rng.gen_range(0..len);
        let mut tail_pos = self.rng.gen_range(0..len - 1);
        if tail_pos >= head_pos {
            tail_pos += 1;
        }
        tokens[head_pos] = pair.head;
        tokens[tail_pos] = pair.tail;
        if let Some(r) = signal {
            let mut slots: Vec<usize> = (0..len)
                .filter(|&p| p != head_pos && p != tail_pos)
                .filter(|&p| p.abs_diff(head_pos) <= 2 || p.abs_diff(tail_pos) <= 2)
                .collect();
            slots.shuffle(&mut self.rng);
            let block = 1 + r * cfg.signal_block;
            for &p in slots.iter().take(cfg.signal_strength) {
                tokens[p] = block + self.rng.gen_range(0..cfg.signal_block);
            }
        } else if cfg.signal_leak > 0.0 && self.rng.gen_bool(cfg.signal_leak) {
            let mut p = self.rng.gen_range(0..len - 2);
            for e in [head_pos.min(tail_pos), head_pos.max(tail_pos)] {
                if p >= e {
                    p += 1;
                }
            }
            let r = self.rng.gen_range(0..cfg.relations);
            tokens[p] = 1 + r * cfg.signal_block + self.rng.gen_range(0..cfg.signal_block);
        }
        self.counter += 1;
        let mut inst = Instance::new(
            format!("{prefix}-{:06}", self.counter),
            (self.entity_name(pair.head), self.entity_name(pair.tail)),
            relation,
            tokens,
            head_pos,
            tail_pos,
        )
        .expect("generated instance is valid");
        if relation != NA {
            inst.truth = Some(if signal.is_some() {
                Truth::TruePositive
            } else {
                Truth::FalsePositive
            });
        }
        inst
    }

    fn emit(&mut self, pairs: &[Pair], signal: Option<usize>, prefix: &str, relation: &str, out: &mut Vec<Instance>) {
        for pair in pairs {
            for _ in 0..pair.size {
                let s = self.sentence(pair, signal, prefix, relation);
                out.push(s);
            }
        }
    }
}

/// Generates all four splits plus the vocabulary. Deterministic in `cfg.seed`.
pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let background_base = 1 + cfg.relations * cfg.signal_block;
    let entity_base = background_base + cfg.background_block;
    let mut g = Generator {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        next_entity: entity_base,
        entity_base,
        background_base,
        counter: 0,
    };

    let mut splits = DatasetSplits::default();
    let mut training_heads = Vec::new();
    for r in 0..cfg.relations {
        let rel = relation_name(r);
        let n = cfg.positives_per_relation;
        let n_fp = (cfg.noise_rate * n as f64).round() as usize;
        let fp_pairs = g.pairs(n_fp);
        let tp_pairs = g.pairs(n - n_fp);
        let mut block = Vec::with_capacity(n);
        g.emit(&tp_pairs, Some(r), "p", &rel, &mut block);
        g.emit(&fp_pairs, None, "p", &rel, &mut block);
        block.shuffle(&mut g.rng);
        splits.positives.extend(block);
        training_heads.extend(tp_pairs.iter().chain(&fp_pairs).map(|p| p.head));
    }

    let ng = g.pairs(cfg.negatives_g);
    g.emit(&ng, None, "ng", NA, &mut splits.negatives_g);
    let nd = g.pairs(cfg.negatives_d);
    g.emit(&nd, None, "nd", NA, &mut splits.negatives_d);

    let heldout_pairs = |g: &mut Generator, n: usize| {
        let mut pairs = g.pairs(n);
        for p in &mut pairs {
            if g.rng.gen_bool(cfg.heldout_entity_overlap) {
                p.head = *training_heads.choose(&mut g.rng).expect("positives exist");
            }
        }
        pairs
    };
    let mut heldout = Vec::new();
    for r in 0..cfg.relations {
        let pairs = heldout_pairs(&mut g, cfg.heldout_positives_per_relation);
        g.emit(&pairs, Some(r), "ho", &relation_name(r), &mut heldout);
    }
    let pairs = heldout_pairs(&mut g, cfg.heldout_negatives);
    g.emit(&pairs, None, "ho", NA, &mut heldout);
    heldout.shuffle(&mut g.rng);
    splits.heldout = heldout;

    let mut tokens = vec![("<pad>".to_string(), 0)];
    for r in 0..cfg.relations {
        for k in 0..cfg.signal_block {
            tokens.push((format!("sig{r}_{k}"), 1 + r * cfg.signal_block + k));
        }
    }
    for k in 0..cfg.background_block {
        tokens.push((format!("bg{k}"), background_base + k));
    }
    for e in entity_base..g.next_entity {
        tokens.push((g.entity_name(e), e));
    }
    Ok(SynthDataset {
        splits,
        vocab: Vocab { tokens },
    })
}
