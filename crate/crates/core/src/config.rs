//! Run configuration: flat `key = value` text with dotted section prefixes.
//!
//! ```text
//! seed = 7
//! relations = rel0
//! adversary.eta = 0.2
//! ```
//!
//! Blank lines and `#` comments are ignored. Every key has a default, and
//! unknown or repeated keys are errors.

use std::fmt::Write as _;
use std::path::Path;

use crate::adversary::AdversaryConfig;
use crate::cleaner::DEFAULT_THRESHOLD;
use crate::data::SynthConfig;
use crate::encoder::EncoderConfig;
use crate::error::{DsganError, Result};
use crate::eval::ClassifierConfig;
use crate::pretrain::PretrainConfig;

/// Offsets added to the master seed for each phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Synth = 0,
    Discriminator = 1,
    Generator = 2,
    Adversary = 3,
    Eval = 4,
}

/// Seed of `phase` for the relation at `relation_index`.
pub fn phase_seed(master: u64, phase: Phase, relation_index: usize) -> u64 {
    master
        .wrapping_add(phase as u64)
        .wrapping_add(1000 * relation_index as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Classifier seeds per comparison; the t-test pairs runs by seed.
    pub seeds: usize,
    pub classifier: ClassifierConfig,
    /// Size of each positive set in the experiment; 0 means the number of
    /// positives the trained generator accepts.
    pub experiment_m: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            seeds: 5,
            classifier: ClassifierConfig::default(),
            experiment_m: 0,
        }
    }
}

impl EvalConfig {
    pub fn seed_list(&self, base: u64) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| base.wrapping_add(7919 * i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Relations to process; empty means every relation in the dataset.
    pub relations: Vec<String>,
    /// Dataset directory; empty means `<out>/data`.
    pub data_dir: String,
    pub synth: SynthConfig,
    pub encoder: EncoderConfig,
    pub pretrain: PretrainConfig,
    /// Measure discriminator pre-training accuracy on the held-out split
    /// instead of a carve of the training data.
    pub pretrain_heldout_probe: bool,
    pub adversary: AdversaryConfig,
    pub clean_threshold: f64,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            relations: Vec::new(),
            data_dir: String::new(),
            synth: SynthConfig::default(),
            encoder: EncoderConfig::default(),
            pretrain: PretrainConfig::default(),
            pretrain_heldout_probe: true,
            adversary: AdversaryConfig::default(),
            clean_threshold: DEFAULT_THRESHOLD,
            eval: EvalConfig::default(),
        }
    }
}

trait Value: Sized {
    fn parse(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! numeric_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

numeric_value!(usize, u64, bool);

impl Value for f64 {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err("value must be finite".into())
        }
    }
    fn render(&self) -> String {
        format!("{self:?}")
    }
}

impl Value for String {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        Ok(s.to_string())
    }
    fn render(&self) -> String {
        self.clone()
    }
}

impl Value for Vec<String> {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        Ok(s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect())
    }
    fn render(&self) -> String {
        self.join(",")
    }
}

macro_rules! fields {
    ($($key:literal => $($field:ident).+;)*) => {
        impl RunConfig {
            /// Every key in serialization order.
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            /// Sets one key from its text form.
            pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
                match key {
                    $($key => self.$($field).+ = Value::parse(value)?,)*
                    _ => return Err(format!("unknown key `{key}`")),
                }
                Ok(())
            }

            fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$(($key, self.$($field).+.render())),*]
            }
        }
    };
}

fields! {
    "seed" => seed;
    "relations" => relations;
    "paths.data" => data_dir;
    "synth.relations" => synth.relations;
    "synth.positives_per_relation" => synth.positives_per_relation;
    "synth.negatives_g" => synth.negatives_g;
    "synth.negatives_d" => synth.negatives_d;
    "synth.heldout_positives_per_relation" => synth.heldout_positives_per_relation;
    "synth.heldout_negatives" => synth.heldout_negatives;
    "synth.noise_rate" => synth.noise_rate;
    "synth.vocab_size" => synth.vocab_size;
    "synth.min_len" => synth.min_len;
    "synth.max_len" => synth.max_len;
    "synth.signal_strength" => synth.signal_strength;
    "synth.signal_block" => synth.signal_block;
    "synth.signal_leak" => synth.signal_leak;
    "synth.background_block" => synth.background_block;
    "synth.min_pair_size" => synth.min_pair_size;
    "synth.max_pair_size" => synth.max_pair_size;
    "synth.heldout_entity_overlap" => synth.heldout_entity_overlap;
    "encoder.word_dim" => encoder.word_dim;
    "encoder.position_dim" => encoder.position_dim;
    "encoder.window" => encoder.window;
    "encoder.kernels" => encoder.kernels;
    "encoder.max_distance" => encoder.max_distance;
    "pretrain.max_epochs" => pretrain.max_epochs;
    "pretrain.batch_size" => pretrain.batch_size;
    "pretrain.lr" => pretrain.lr;
    "pretrain.target_accuracy" => pretrain.target_accuracy;
    "pretrain.target_mean_prob" => pretrain.target_mean_prob;
    "pretrain.heldout_fraction" => pretrain.heldout_fraction;
    "pretrain.heldout_probe" => pretrain_heldout_probe;
    "adversary.eta" => adversary.eta;
    "adversary.baseline_decay" => adversary.baseline_decay;
    "adversary.baseline_init" => adversary.baseline_init;
    "adversary.lr_g" => adversary.lr_g;
    "adversary.lr_d" => adversary.lr_d;
    "adversary.max_epochs" => adversary.max_epochs;
    "adversary.patience" => adversary.patience;
    "adversary.bag_size" => adversary.bag_size;
    "clean.threshold" => clean_threshold;
    "eval.seeds" => eval.seeds;
    "eval.epochs" => eval.classifier.epochs;
    "eval.batch_size" => eval.classifier.batch_size;
    "eval.lr" => eval.classifier.lr;
    "eval.experiment_m" => eval.experiment_m;
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let err = |msg: String| DsganError::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                msg,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(err(format!("key `{key}` set twice")));
            }
            cfg.set(key, value.trim()).map_err(|m| err(format!("{key}: {m}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DsganError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Full serialization, one `key = value` line per key.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.synth_config().validate()?;
        // vocab size is filled in from the dataset
        EncoderConfig { vocab_size: 1, ..self.encoder }.validate()?;
        self.pretrain.validate()?;
        self.adversary.validate()?;
        self.eval.classifier.validate()?;
        if !(0.0..=1.0).contains(&self.clean_threshold) {
            return Err(DsganError::Config("clean.threshold must lie in [0, 1]".into()));
        }
        if self.eval.seeds < 2 {
            return Err(DsganError::Config(format!(
                "eval.seeds must be at least 2 for the paired test, got {}",
                self.eval.seeds
            )));
        }
        Ok(())
    }

    /// Synthetic-data settings with the seed derived from the master seed.
    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: phase_seed(self.seed, Phase::Synth, 0),
            ..self.synth.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, Path::new("test.cfg"))
    }

    #[test]
    fn defaults_round_trip() {
        let d = RunConfig::default();
        assert_eq!(parse(&d.to_text()).unwrap(), d);
        assert_eq!(parse("").unwrap(), d);
    }

    #[test]
    fn every_key_serialized_once() {
        let text = RunConfig::default().to_text();
        assert_eq!(text.lines().count(), RunConfig::KEYS.len());
        for k in RunConfig::KEYS {
            assert_eq!(text.lines().filter(|l| l.starts_with(&format!("{k} = "))).count(), 1);
        }
    }

    #[test]
    fn overrides_and_comments() {
        let c = parse("# run\nseed = 9\nadversary.eta = 0.75  # scaled\nrelations = rel0, rel1\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.adversary.eta, 0.75);
        assert_eq!(c.relations, vec!["rel0", "rel1"]);
        assert_eq!(parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_lines() {
        for bad in [
            "adversary.etaa = 1",
            "seed",
            "seed = x",
            "seed = 1\nseed = 2",
            "eval.seeds = 1",
            "adversary.eta = -1",
            "synth.noise_rate = NaN",
        ] {
            let e = parse(bad).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{bad}: {e}");
        }
        match parse("\n\nfoo = 1") {
            Err(DsganError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn float_rendering_is_exact() {
        let mut c = RunConfig::default();
        c.adversary.lr_g = 0.1 + 0.2;
        assert_eq!(parse(&c.to_text()).unwrap().adversary.lr_g, 0.1 + 0.2);
    }

    #[test]
    fn phase_seeds_distinct() {
        let s: std::collections::HashSet<u64> = [Phase::Synth, Phase::Discriminator, Phase::Generator, Phase::Adversary, Phase::Eval]
            .iter()
            .flat_map(|&p| (0..3).map(move |r| phase_seed(5, p, r)))
            .collect();
        assert_eq!(s.len(), 15);
    }
}
