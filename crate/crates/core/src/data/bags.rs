use std::borrow::Borrow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Instance;
use crate::error::{DsganError, Result};

/// Fixed partition of the positive set into consecutive bags. Bags hold
/// indices into the positive slice they were built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BagSequence {
    pub bags: Vec<Vec<usize>>,
    pub seed: u64,
}

impl BagSequence {
    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    /// One line per bag listing instance ids.
    pub fn to_text<T: Borrow<Instance>>(&self, positives: &[T]) -> String {
        let mut out = String::new();
        for bag in &self.bags {
            let ids: Vec<&str> = bag.iter().map(|&i| positives[i].borrow().id.as_str()).collect();
            out.push_str(&ids.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Seeded shuffle of `0..n` cut into `ceil(n / bag_size)` bags.
pub fn make_bags<T>(positives: &[T], bag_size: usize, seed: u64) -> Result<BagSequence> {
    if bag_size == 0 {
        return Err(DsganError::Config("bag size must be at least 1".into()));
    }
    if positives.is_empty() {
        return Err(DsganError::Input("cannot split an empty positive set into bags".into()));
    }
    let mut order: Vec<usize> = (0..positives.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(BagSequence {
        bags: order.chunks(bag_size).map(<[usize]>::to_vec).collect(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(n: usize) -> Vec<Instance> {
        (0..n)
            .map(|i| {
                Instance::new(format!("i{i}"), ("h".into(), "t".into()), "r", vec![1, 2], 0, 1)
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn sizes() {
        let p = set(10);
        assert_eq!(make_bags(&p, 10, 1).unwrap().bags.len(), 1);
        let sizes: Vec<usize> = make_bags(&p, 4, 1).unwrap().bags.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn errors() {
        assert!(make_bags::<Instance>(&[], 4, 0).is_err());
        assert!(make_bags(&set(3), 0, 0).is_err());
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let p = set(50);
        let a = make_bags(&p, 8, 7).unwrap();
        assert_eq!(a.to_text(&p), make_bags(&p, 8, 7).unwrap().to_text(&p));
        assert_ne!(a.bags, make_bags(&p, 8, 8).unwrap().bags);
    }

    proptest! {
        #[test]
        fn bags_partition_positives(n in 1usize..200, size in 1usize..70, seed in any::<u64>()) {
            let p = set(n);
            let b = make_bags(&p, size, seed).unwrap();
            prop_assert_eq!(b.bags.len(), n.div_ceil(size));
            let mut all: Vec<usize> = b.bags.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
