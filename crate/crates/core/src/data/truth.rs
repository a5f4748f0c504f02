//! Evaluation-only access to planted ground truth.
//!
//! Training code (encoder, pretrain, adversary, cleaner) never calls into
//! this module; the audit test in `tests/truth_isolation.rs` enforces that.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{DatasetSplits, Instance};
use crate::error::{DsganError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Truth {
    TruePositive,
    FalsePositive,
}

impl Truth {
    pub fn as_str(self) -> &'static str {
        match self {
            Truth::TruePositive => "tp",
            Truth::FalsePositive => "fp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tp" => Some(Truth::TruePositive),
            "fp" => Some(Truth::FalsePositive),
            _ => None,
        }
    }
}

pub fn truth_of(inst: &Instance) -> Option<Truth> {
    inst.truth
}

pub fn set_truth(inst: &mut Instance, truth: Option<Truth>) {
    inst.truth = truth;
}

/// `(true positives, false positives)`; errors if any flag is absent.
pub fn truth_stats<'a>(instances: impl IntoIterator<Item = &'a Instance>) -> Result<(usize, usize)> {
    let mut tp = 0;
    let mut fp = 0;
    for inst in instances {
        match inst.truth {
            Some(Truth::TruePositive) => tp += 1,
            Some(Truth::FalsePositive) => fp += 1,
            None => return Err(DsganError::MissingTruth(inst.id.clone())),
        }
    }
    Ok((tp, fp))
}

/// Sidecar text: one `id<TAB>tp|fp` line per flagged instance, in split order.
pub fn truth_sidecar(splits: &DatasetSplits) -> String {
    let mut out = String::new();
    for (_, set) in splits.named() {
        for inst in set {
            if let Some(t) = inst.truth {
                let _ = writeln!(out, "{}\t{}", inst.id, t.as_str());
            }
        }
    }
    out
}

pub fn parse_truth(text: &str, path: &Path) -> Result<HashMap<String, Truth>> {
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: &str| DsganError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: msg.to_string(),
        };
        let (id, flag) = line.split_once('\t').ok_or_else(|| err("expected id<TAB>tp|fp"))?;
        let t = Truth::parse(flag.trim()).ok_or_else(|| err("flag must be tp or fp"))?;
        if map.insert(id.to_string(), t).is_some() {
            return Err(err("duplicate id"));
        }
    }
    Ok(map)
}

/// Loads the truth sidecar from a dataset directory and attaches flags.
pub fn load_truth(dir: &Path, splits: &mut DatasetSplits) -> Result<()> {
    let path = dir.join(super::TRUTH_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|_| DsganError::MissingTruth(format!("no truth sidecar at {}", path.display())))?;
    let map = parse_truth(&text, &path)?;
    for set in [
        &mut splits.positives,
        &mut splits.negatives_g,
        &mut splits.negatives_d,
        &mut splits.heldout,
    ] {
        for inst in set.iter_mut() {
            inst.truth = map.get(&inst.id).copied();
        }
    }
    Ok(())
}
