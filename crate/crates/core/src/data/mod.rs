//! Dataset model, file formats, bag construction and the synthetic generator.

mod bags;
mod io;
mod synth;
pub mod truth;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{DsganError, Result};

pub use bags::{make_bags, BagSequence};
pub use io::{
    load_dataset, load_instances, load_vocab, save_dataset, save_instances, save_vocab, Vocab,
    HELDOUT_FILE, NEGATIVE_D_FILE, NEGATIVE_G_FILE, POSITIVE_FILE, TRUTH_FILE, VOCAB_FILE,
};
pub use synth::{synth_generate, SynthConfig, SynthDataset};
pub use truth::Truth;

/// Relation label of entity pairs with no knowledge-base relation.
pub const NA: &str = "NA";

/// One labeled sentence mentioning an entity pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    /// `(head entity, tail entity)`
    pub pair_id: (String, String),
    pub relation: String,
    pub tokens: Vec<usize>,
    pub head_pos: usize,
    pub tail_pos: usize,
    #[serde(skip)]
    pub(crate) truth: Option<Truth>,
}

impl Instance {
    pub fn new(
        id: impl Into<String>,
        pair_id: (String, String),
        relation: impl Into<String>,
        tokens: Vec<usize>,
        head_pos: usize,
        tail_pos: usize,
    ) -> Result<Self> {
        let inst = Instance {
            id: id.into(),
            pair_id,
            relation: relation.into(),
            tokens,
            head_pos,
            tail_pos,
            truth: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(DsganError::Input(format!("{}: empty token list", self.id)));
        }
        if self.head_pos == self.tail_pos {
            return Err(DsganError::Input(format!(
                "{}: head and tail share position {}",
                self.id, self.head_pos
            )));
        }
        let n = self.tokens.len();
        if self.head_pos >= n || self.tail_pos >= n {
            return Err(DsganError::Input(format!(
                "{}: entity position out of range for {n} tokens",
                self.id
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_negative(&self) -> bool {
        self.relation == NA
    }
}

/// The four disjoint instance sets the pipeline consumes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetSplits {
    /// Distantly supervised positives (noisy).
    pub positives: Vec<Instance>,
    /// Negatives used only to pre-train the generator.
    pub negatives_g: Vec<Instance>,
    /// Negatives used to pre-train the discriminator and to probe it.
    pub negatives_d: Vec<Instance>,
    /// Labeled instances for accuracy probes and downstream scoring.
    pub heldout: Vec<Instance>,
}

impl DatasetSplits {
    /// Checks instance validity, id uniqueness and split disjointness.
    pub fn validate(&self) -> Result<()> {
        let mut seen: std::collections::HashMap<&str, &'static str> = Default::default();
        for (name, set) in self.named() {
            for inst in set {
                inst.validate()?;
                if let Some(prev) = seen.insert(inst.id.as_str(), name) {
                    return Err(DsganError::Input(if prev == name {
                        format!("duplicate id {} in {name}", inst.id)
                    } else {
                        format!("id {} appears in both {prev} and {name}", inst.id)
                    }));
                }
            }
        }
        Ok(())
    }

    pub fn named(&self) -> [(&'static str, &[Instance]); 4] {
        [
            ("positive", &self.positives),
            ("negative_g", &self.negatives_g),
            ("negative_d", &self.negatives_d),
            ("heldout", &self.heldout),
        ]
    }

    pub fn len(&self) -> usize {
        self.named().iter().map(|(_, s)| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sorted distinct relation labels among the positives.
    pub fn relations(&self) -> Vec<String> {
        let set: HashSet<&str> = self
            .positives
            .iter()
            .filter(|i| !i.is_negative())
            .map(|i| i.relation.as_str())
            .collect();
        let mut v: Vec<String> = set.into_iter().map(String::from).collect();
        v.sort();
        v
    }

    /// Largest token id referenced anywhere, plus one.
    pub fn min_vocab_size(&self) -> usize {
        self.named()
            .iter()
            .flat_map(|(_, s)| s.iter())
            .flat_map(|i| i.tokens.iter())
            .max()
            .map_or(1, |m| m + 1)
    }
}

/// Instances of `set` labeled with `relation`.
pub fn with_relation<'a>(set: &'a [Instance], relation: &str) -> Vec<&'a Instance> {
    set.iter().filter(|i| i.relation == relation).collect()
}
