//! Harrell's concordance index.

use serde::{Deserialize, Serialize};

use crate::counter::RankAggregator;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceResult {
    pub cindex: f64,
    pub concordant: u64,
    pub discordant: u64,
    pub tied_score: u64,
    pub comparable: u64,
}

/// Fraction of comparable pairs ranked correctly by risk, ties counting one
/// half. A pair `(i, j)` with `y_i > y_j` and `delta_j = 1` is concordant when
/// `scores[j] > scores[i]`: the shorter survival should carry the higher risk.
/// Tied times are never comparable.
pub fn harrell_c(y: &[f64], delta: &[bool], scores: &[f64]) -> Result<ConcordanceResult> {
    let n = y.len();
    if delta.len() != n || scores.len() != n {
        return Err(Error::DimensionMismatch {
            what: "concordance input length",
            expected: n,
            actual: if delta.len() != n { delta.len() } else { scores.len() },
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Validation("risk scores contain NaN".into()));
    }

    let mut distinct = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let rank: Vec<usize> = scores
        .iter()
        .map(|s| distinct.partition_point(|u| u < s))
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[b].total_cmp(&y[a]));

    let mut tree = RankAggregator::new(distinct.len());
    let (mut concordant, mut tied, mut comparable) = (0u64, 0u64, 0u64);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && y[order[end]] == y[order[start]] {
            end += 1;
        }
        let inserted = start as u64;
        for &j in &order[start..end] {
            if delta[j] {
                let (below, _) = tree.prefix(rank[j]);
                let (up_to, _) = tree.prefix(rank[j] + 1);
                concordant += below;
                tied += up_to - below;
                comparable += inserted;
            }
        }
        for &i in &order[start..end] {
            tree.insert(rank[i], 0.0);
        }
        start = end;
    }

    if comparable == 0 {
        return Err(Error::NoComparablePairs);
    }
    let discordant = comparable - concordant - tied;
    Ok(ConcordanceResult {
        cindex: (concordant as f64 + 0.5 * tied as f64) / comparable as f64,
        concordant,
        discordant,
        tied_score: tied,
        comparable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(y: &[f64], d: &[bool], s: &[f64]) -> (u64, u64, u64, u64) {
        let (mut c, mut dis, mut t, mut m) = (0, 0, 0, 0);
        for i in 0..y.len() {
            for j in 0..y.len() {
                if y[i] > y[j] && d[j] {
                    m += 1;
                    if s[j] > s[i] {
                        c += 1;
                    } else if s[j] == s[i] {
                        t += 1;
                    } else {
                        dis += 1;
                    }
                }
            }
        }
        (c, dis, t, m)
    }

    #[test]
    fn analytic_cases() {
        let y = [3.0, 1.0, 4.0, 2.0, 5.0];
        let d = [true; 5];
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        assert_eq!(harrell_c(&y, &d, &neg).unwrap().cindex, 1.0);
        assert_eq!(harrell_c(&y, &d, &y).unwrap().cindex, 0.0);
        assert_eq!(harrell_c(&y, &d, &[0.7; 5]).unwrap().cindex, 0.5);
    }

    #[test]
    fn censored_example() {
        // comparable (1-based): (2,1) (3,1) (4,1) (3,2) (4,2); (4,3) is out since δ₃ = 0
        let r = harrell_c(&[1.0, 2.0, 3.0, 4.0], &[true, true, false, true], &[4.0, 3.0, 2.0, 1.0])
            .unwrap();
        assert_eq!(r.comparable, 5);
        assert_eq!(r.concordant, 5);
        assert_eq!(r.cindex, 1.0);
    }

    #[test]
    fn no_comparable_pairs() {
        assert!(matches!(
            harrell_c(&[1.0, 2.0], &[false, false], &[0.0, 1.0]),
            Err(Error::NoComparablePairs)
        ));
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            rows in prop::collection::vec((1u8..20, any::<bool>(), -5i8..5), 2..80)
        ) {
            let y: Vec<f64> = rows.iter().map(|r| f64::from(r.0)).collect();
            let d: Vec<bool> = rows.iter().map(|r| r.1).collect();
            let s: Vec<f64> = rows.iter().map(|r| f64::from(r.2)).collect();
            let (c, dis, t, m) = brute(&y, &d, &s);
            match harrell_c(&y, &d, &s) {
                Ok(r) => {
                    prop_assert_eq!((r.concordant, r.discordant, r.tied_score, r.comparable), (c, dis, t, m));
                    prop_assert_eq!(r.cindex, (c as f64 + 0.5 * t as f64) / m as f64);
                    // strictly increasing transforms preserve the index
                    let warped: Vec<f64> = s.iter().map(|v| v.exp() * 3.0 - 1.0).collect();
                    prop_assert_eq!(harrell_c(&y, &d, &warped).unwrap(), r);
                    if t == 0 {
                        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
                        prop_assert!((harrell_c(&y, &d, &neg).unwrap().cindex + r.cindex - 1.0).abs() < 1e-12);
                    }
                }
                Err(_) => prop_assert_eq!(m, 0),
            }
        }
    }
}
