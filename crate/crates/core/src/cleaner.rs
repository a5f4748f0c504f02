//! Uses a trained generator as a filter over the positive set. Entity pairs
//! whose sentences are all rejected move to the negative set as `NA`, so the
//! total number of instances never changes.

use std::fmt::Write as _;

use indexmap::IndexMap;

use crate::data::{Instance, NA};
use crate::encoder::SentenceModel;
use crate::error::Result;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Kept,
    Redistributed,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Kept => "kept",
            Decision::Redistributed => "redistributed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairDecision {
    pub pair_id: (String, String),
    pub decision: Decision,
    pub probs: Vec<f64>,
}

impl PairDecision {
    pub fn min(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().sum::<f64>() / self.probs.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanReport {
    pub threshold: f64,
    pub pairs: Vec<PairDecision>,
    pub positive_before: usize,
    pub negative_before: usize,
    pub positive_after: usize,
    pub negative_after: usize,
}

impl CleanReport {
    pub fn redistributed(&self) -> impl Iterator<Item = &PairDecision> {
        self.pairs.iter().filter(|p| p.decision == Decision::Redistributed)
    }

    pub fn is_conserved(&self) -> bool {
        self.positive_before + self.negative_before == self.positive_after + self.negative_after
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair_head,pair_tail,decision,sentences,min_p,max_p,mean_p\n");
        for p in &self.pairs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                p.pair_id.0,
                p.pair_id.1,
                p.decision.as_str(),
                p.probs.len(),
                p.min(),
                p.max(),
                p.mean()
            );
        }
        out
    }

    /// Human-readable counts, including how "negative" is read here.
    pub fn summary(&self) -> String {
        format!(
            "threshold = {}\n\
             decision rule = a pair is redistributed when every sentence has p_G < threshold \
             (all sentences classified as not expressing the relation)\n\
             pairs = {}\nredistributed pairs = {}\n\
             positives: {} -> {}\nnegatives: {} -> {}\nconserved = {}\n",
            self.threshold,
            self.pairs.len(),
            self.redistributed().count(),
            self.positive_before,
            self.positive_after,
            self.negative_before,
            self.negative_after,
            self.is_conserved()
        )
    }
}

pub fn is_positive(p: f64, threshold: f64) -> bool {
    p >= threshold
}

pub fn classify_instance(g: &SentenceModel, inst: &Instance, threshold: f64) -> Result<bool> {
    Ok(is_positive(g.predict_prob(inst)?, threshold))
}

/// Groups `positives` by entity pair (first-seen order) and moves every pair
/// whose sentences all score below `threshold` to the end of `negatives`,
/// relabeled `NA`.
pub fn redistribute(
    positives: &[Instance],
    negatives: &[Instance],
    g: &SentenceModel,
    threshold: f64,
) -> Result<(Vec<Instance>, Vec<Instance>, CleanReport)> {
    let probs = g.score_all(positives)?;
    let mut groups: IndexMap<&(String, String), Vec<usize>> = IndexMap::new();
    for (i, inst) in positives.iter().enumerate() {
        groups.entry(&inst.pair_id).or_default().push(i);
    }
    let mut moved = vec![false; positives.len()];
    let mut pairs = Vec::with_capacity(groups.len());
    for (pair, members) in &groups {
        let ps: Vec<f64> = members.iter().map(|&i| probs[i]).collect();
        let decision = if ps.iter().all(|&p| !is_positive(p, threshold)) {
            for &i in members {
                moved[i] = true;
            }
            Decision::Redistributed
        } else {
            Decision::Kept
        };
        pairs.push(PairDecision {
            pair_id: (*pair).clone(),
            decision,
            probs: ps,
        });
    }
    let mut new_pos = Vec::new();
    let mut new_neg = negatives.to_vec();
    for (inst, &m) in positives.iter().zip(&moved) {
        if m {
            let mut n = inst.clone();
            n.relation = NA.to_string();
            new_neg.push(n);
        } else {
            new_pos.push(inst.clone());
        }
    }
    let report = CleanReport {
        threshold,
        pairs,
        positive_before: positives.len(),
        negative_before: negatives.len(),
        positive_after: new_pos.len(),
        negative_after: new_neg.len(),
    };
    Ok((new_pos, new_neg, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64) -> SentenceModel {
        let cfg = EncoderConfig {
            word_dim: 4,
            position_dim: 2,
            kernels: 4,
            max_distance: 4,
            vocab_size: 20,
            ..Default::default()
        };
        SentenceModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn inst(id: usize, pair: usize, tok: usize) -> Instance {
        Instance::new(format!("s{id}"), (format!("h{pair}"), "t".into()), "r", vec![tok % 20, 1, 2], 0, 2)
            .unwrap()
    }

    #[test]
    fn threshold_boundaries() {
        let mut g = model(0);
        g.zero_output();
        let s = inst(0, 0, 3);
        assert!(classify_instance(&g, &s, 0.5).unwrap());
        assert!(!classify_instance(&g, &s, 1.0).unwrap());
        assert!(is_positive(0.5, 0.5));
    }

    #[test]
    fn pair_decisions() {
        // pair h0: both sentences below, pair h1: one above
        let pos = vec![inst(0, 0, 3), inst(1, 1, 4), inst(2, 0, 5), inst(3, 1, 6)];
        let neg = vec![inst(9, 9, 7)];
        let mut g = model(1);
        g.zero_output();
        // p = sigmoid(bias); 0.6 > 0.55 > 0.5 so everything is below 0.7 and above 0.5
        g.params.at_mut(6).value.data_mut()[0] = (0.6f64 / 0.4).ln();
        let (p, n, r) = redistribute(&pos, &neg, &g, 0.7).unwrap();
        assert!(p.is_empty());
        assert_eq!(n.len(), 5);
        assert!(n[1..].iter().all(|i| i.relation == NA));
        assert!(r.is_conserved());
        let (p, n, r) = redistribute(&pos, &neg, &g, 0.5).unwrap();
        assert_eq!((p.len(), n.len()), (4, 1));
        assert_eq!(r.redistributed().count(), 0);
        assert_eq!(r.pairs.len(), 2);
    }

    #[test]
    fn mixed_pair_is_kept_whole() {
        let pos = vec![inst(0, 0, 3), inst(1, 0, 4)];
        let g = model(2);
        let ps = g.score_all(&pos).unwrap();
        let thr = (ps[0] + ps[1]) / 2.0;
        let (p, n, r) = redistribute(&pos, &[], &g, thr).unwrap();
        assert_eq!(p.len(), 2);
        assert!(n.is_empty());
        assert_eq!(r.pairs[0].decision, Decision::Kept);
    }

    fn partition(p: &[Instance]) -> Vec<String> {
        p.iter().map(|i| i.id.clone()).collect()
    }

    proptest! {
        #[test]
        fn conservation_atomicity_idempotence(
            layout in prop::collection::vec((0usize..6, 0usize..20), 1..30),
            thr in 0.0f64..1.0,
            seed in 0u64..50,
        ) {
            let pos: Vec<Instance> = layout.iter().enumerate().map(|(i, &(pair, tok))| inst(i, pair, tok)).collect();
            let neg = vec![inst(100, 99, 1)];
            let g = model(seed);
            let (p, n, r) = redistribute(&pos, &neg, &g, thr).unwrap();
            prop_assert_eq!(p.len() + n.len(), pos.len() + neg.len());
            prop_assert!(r.is_conserved());
            for pair in &r.pairs {
                let in_pos = p.iter().any(|i| i.pair_id == pair.pair_id);
                let in_neg = n.iter().any(|i| i.pair_id == pair.pair_id);
                prop_assert!(in_pos != in_neg);
            }
            let (p2, n2, _) = redistribute(&p, &n, &g, thr).unwrap();
            prop_assert_eq!(partition(&p2), partition(&p));
            prop_assert_eq!(partition(&n2), partition(&n));

            let higher = (thr + 0.1).min(1.0);
            let (_, _, r_hi) = redistribute(&pos, &neg, &g, higher).unwrap();
            prop_assert!(r_hi.redistributed().count() >= r.redistributed().count());
        }
    }
}
