//! Explicit comparable-pair lists.
//!
//! A pair `(i, j)` is comparable when `y_i > y_j` and sample `j` had an
//! observed event. Tied times are never comparable. These lists are only
//! materialized for the reference solver and the reduced-pair baseline; the
//! fast objective never builds them.

use crate::error::{Error, Result};

/// Ordered pairs `(i, j)` with `y_i > y_j` and `delta_j = 1` (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairList {
    pub pairs: Vec<(usize, usize)>,
}

impl PairList {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.pairs.iter()
    }

    /// Checks that every pair satisfies the comparability predicate and that
    /// no pair is repeated.
    pub fn validate(&self, y: &[f64], delta: &[bool]) -> Result<()> {
        let mut seen = std::collections::HashSet::with_capacity(self.pairs.len());
        for &(i, j) in &self.pairs {
            if i >= y.len() || j >= y.len() || !(y[i] > y[j] && delta[j]) {
                return Err(Error::Validation(format!("({i}, {j}) is not a comparable pair")));
            }
            if !seen.insert((i, j)) {
                return Err(Error::Validation(format!("duplicate pair ({i}, {j})")));
            }
        }
        Ok(())
    }
}

fn check_lengths(y: &[f64], delta: &[bool]) -> Result<()> {
    if y.len() != delta.len() {
        return Err(Error::DimensionMismatch {
            what: "event indicator length",
            expected: y.len(),
            actual: delta.len(),
        });
    }
    Ok(())
}

/// Every comparable pair, sorted by `(i, j)`.
pub fn comparable_pairs(y: &[f64], delta: &[bool]) -> Result<PairList> {
    check_lengths(y, delta)?;
    let mut pairs = Vec::new();
    for i in 0..y.len() {
        for j in 0..y.len() {
            if delta[j] && y[i] > y[j] {
                pairs.push((i, j));
            }
        }
    }
    Ok(PairList { pairs })
}

/// Number of comparable pairs, computed without materializing them.
pub fn count_comparable_pairs(y: &[f64], delta: &[bool]) -> Result<u64> {
    check_lengths(y, delta)?;
    let mut events: Vec<f64> = y
        .iter()
        .zip(delta)
        .filter(|(_, &d)| d)
        .map(|(&t, _)| t)
        .collect();
    events.sort_by(f64::total_cmp);
    Ok(y.iter()
        .map(|&t| events.partition_point(|&e| e < t) as u64)
        .sum())
}

/// One pair per sample `i`: the uncensored `j` with the largest `y_j < y_i`,
/// ties among candidates broken toward the smallest index.
pub fn reduced_pairs(y: &[f64], delta: &[bool]) -> Result<PairList> {
    check_lengths(y, delta)?;
    let mut events: Vec<usize> = (0..y.len()).filter(|&j| delta[j]).collect();
    // ascending time, and among equal times descending index so the last
    // candidate below a threshold is the smallest index of the largest time
    events.sort_by(|&a, &b| y[a].total_cmp(&y[b]).then(b.cmp(&a)));
    let pairs = (0..y.len())
        .filter_map(|i| {
            let below = events.partition_point(|&j| y[j] < y[i]);
            (below > 0).then(|| (i, events[below - 1]))
        })
        .collect();
    Ok(PairList { pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn three_sample_instance() {
        let y = [1.0, 2.0, 3.0];
        let d = [true, false, true];
        assert_eq!(comparable_pairs(&y, &d).unwrap().pairs, vec![(1, 0), (2, 0)]);
        assert_eq!(reduced_pairs(&y, &d).unwrap().pairs, vec![(1, 0), (2, 0)]);
        assert_eq!(count_comparable_pairs(&y, &d).unwrap(), 2);
    }

    #[test]
    fn reduced_uncensored_chain() {
        let y = [1.0, 2.0, 3.0];
        let d = [true, true, true];
        assert_eq!(reduced_pairs(&y, &d).unwrap().pairs, vec![(1, 0), (2, 1)]);
    }

    #[test]
    fn reduced_tie_prefers_smallest_index() {
        let y = [5.0, 2.0, 2.0, 1.0];
        let d = [true, true, true, true];
        assert_eq!(
            reduced_pairs(&y, &d).unwrap().pairs,
            vec![(0, 1), (1, 3), (2, 3)]
        );
    }

    #[test]
    fn uncensored_distinct_gives_all_pairs() {
        let y = [4.0, 1.0, 3.0, 2.0];
        let p = comparable_pairs(&y, &[true; 4]).unwrap();
        assert_eq!(p.len(), 6);
    }

    #[test]
    fn all_censored_or_nothing_below() {
        let y = [1.0, 2.0, 3.0];
        assert!(comparable_pairs(&y, &[false; 3]).unwrap().is_empty());
        assert!(reduced_pairs(&y, &[false, true, true]).unwrap().pairs.iter().all(|&(i, _)| i == 2));
        assert!(reduced_pairs(&[1.0, 2.0], &[false, false]).unwrap().is_empty());
    }

    #[test]
    fn ties_never_pair() {
        let y = [2.0, 2.0, 2.0];
        assert!(comparable_pairs(&y, &[true; 3]).unwrap().is_empty());
    }

    #[test]
    fn length_mismatch() {
        assert!(comparable_pairs(&[1.0], &[true, false]).is_err());
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        (1usize..120).prop_flat_map(|n| {
            (
                prop::collection::vec(0u32..40, n).prop_map(|v| v.into_iter().map(|t| f64::from(t) + 1.0).collect()),
                prop::collection::vec(any::<bool>(), n),
            )
        })
    }

    proptest! {
        #[test]
        fn reduced_subset_of_full((y, d) in instance()) {
            let full: HashSet<_> = comparable_pairs(&y, &d).unwrap().pairs.into_iter().collect();
            let reduced = reduced_pairs(&y, &d).unwrap();
            reduced.validate(&y, &d).unwrap();
            let mut firsts = HashSet::new();
            for p in reduced.iter() {
                prop_assert!(full.contains(p));
                prop_assert!(firsts.insert(p.0));
            }
        }

        #[test]
        fn count_matches_brute_force((y, d) in instance()) {
            let mut brute = 0u64;
            for i in 0..y.len() {
                for j in 0..y.len() {
                    if y[i] > y[j] && d[j] { brute += 1; }
                }
            }
            let listed = comparable_pairs(&y, &d).unwrap();
            listed.validate(&y, &d).unwrap();
            prop_assert_eq!(listed.len() as u64, brute);
            prop_assert_eq!(count_comparable_pairs(&y, &d).unwrap(), brute);
        }

        #[test]
        fn size_bounds_on_distinct_times(n in 2usize..80, seed in any::<u64>()) {
            use rand::{SeedableRng, seq::SliceRandom, Rng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut y: Vec<f64> = (1..=n).map(|t| t as f64).collect();
            y.shuffle(&mut rng);
            let d: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.6)).collect();
            let e = d.iter().filter(|&&b| b).count() as f64;
            let nf = n as f64;
            let m = count_comparable_pairs(&y, &d).unwrap() as f64;
            prop_assert!(m >= e * (e - 1.0) / 2.0);
            prop_assert!(m <= e * nf - e * (e + 1.0) / 2.0);
        }
    }
}
