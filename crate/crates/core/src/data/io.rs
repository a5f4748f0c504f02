use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::truth::truth_sidecar;
use super::{DatasetSplits, Instance};
use crate::error::{DsganError, Result};

pub const POSITIVE_FILE: &str = "positive.jsonl";
pub const NEGATIVE_G_FILE: &str = "negative_g.jsonl";
pub const NEGATIVE_D_FILE: &str = "negative_d.jsonl";
pub const HELDOUT_FILE: &str = "heldout.jsonl";
pub const TRUTH_FILE: &str = "truth.tsv";
pub const VOCAB_FILE: &str = "vocab.tsv";

pub fn instances_to_jsonl(set: &[Instance]) -> String {
    let mut out = String::new();
    for inst in set {
        out.push_str(&serde_json::to_string(inst).expect("instance serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_instances(text: &str, path: &Path) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| DsganError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let inst: Instance = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        inst.validate().map_err(|e| err(e.to_string()))?;
        out.push(inst);
    }
    Ok(out)
}

pub fn load_instances(path: &Path) -> Result<Vec<Instance>> {
    let text = std::fs::read_to_string(path).map_err(|e| DsganError::io(path, e))?;
    parse_instances(&text, path)
}

pub fn save_instances(set: &[Instance], path: &Path) -> Result<()> {
    std::fs::write(path, instances_to_jsonl(set)).map_err(|e| DsganError::io(path, e))
}

/// Reads the four instance files of a dataset directory. Truth flags are
/// not loaded here; see [`super::truth::load_truth`].
pub fn load_dataset(dir: &Path) -> Result<DatasetSplits> {
    let splits = DatasetSplits {
        positives: load_instances(&dir.join(POSITIVE_FILE))?,
        negatives_g: load_instances(&dir.join(NEGATIVE_G_FILE))?,
        negatives_d: load_instances(&dir.join(NEGATIVE_D_FILE))?,
        heldout: load_instances(&dir.join(HELDOUT_FILE))?,
    };
    splits.validate()?;
    Ok(splits)
}

/// Writes the instance files, plus the truth sidecar when any flag is set.
pub fn save_dataset(splits: &DatasetSplits, dir: &Path) -> Result<()> {
    splits.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| DsganError::io(dir, e))?;
    save_instances(&splits.positives, &dir.join(POSITIVE_FILE))?;
    save_instances(&splits.negatives_g, &dir.join(NEGATIVE_G_FILE))?;
    save_instances(&splits.negatives_d, &dir.join(NEGATIVE_D_FILE))?;
    save_instances(&splits.heldout, &dir.join(HELDOUT_FILE))?;
    let truth = truth_sidecar(splits);
    if !truth.is_empty() {
        let p = dir.join(TRUTH_FILE);
        std::fs::write(&p, truth).map_err(|e| DsganError::io(&p, e))?;
    }
    Ok(())
}

/// Token string to index mapping.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    pub tokens: Vec<(String, usize)>,
}

impl Vocab {
    pub fn index(&self) -> HashMap<&str, usize> {
        self.tokens.iter().map(|(t, i)| (t.as_str(), *i)).collect()
    }

    pub fn size(&self) -> usize {
        self.tokens.iter().map(|(_, i)| i + 1).max().unwrap_or(0)
    }
}

pub fn load_vocab(path: &Path) -> Result<Vocab> {
    let text = std::fs::read_to_string(path).map_err(|e| DsganError::io(path, e))?;
    let mut tokens = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let parsed = line
            .rsplit_once('\t')
            .and_then(|(t, ix)| ix.trim().parse::<usize>().ok().map(|ix| (t.to_string(), ix)));
        match parsed {
            Some(p) => tokens.push(p),
            None => {
                return Err(DsganError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: "expected token<TAB>index".into(),
                })
            }
        }
    }
    Ok(Vocab { tokens })
}

pub fn save_vocab(vocab: &Vocab, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (t, i) in &vocab.tokens {
        let _ = writeln!(out, "{t}\t{i}");
    }
    std::fs::write(path, out).map_err(|e| DsganError::io(path, e))
}
