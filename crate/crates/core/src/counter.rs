//! Per-sample support-pair statistics in `O(n log n)`.
//!
//! For scores `f` and a value vector `v`, sample `i` has
//!
//! * `l⁺ᵢ`, `σ⁺ᵢ`: count and `v`-sum over `s` with `y_s > y_i` and
//!   `f_s < f_i + 1`, only when `i` is uncensored;
//! * `l⁻ᵢ`, `σ⁻ᵢ`: count and `v`-sum over uncensored `s` with `y_s < y_i` and
//!   `f_i < f_s + 1`.
//!
//! Both are the two endpoints of the same support pair, so the margin test is
//! written once as `f_high < f_low + 1` and evaluated identically on both
//! sides. That keeps `Σ l⁺ = Σ l⁻` exact in floating point.
//!
//! The fast path sorts samples by time and sweeps once in each direction,
//! inserting rank-compressed scores into a binary indexed tree that carries
//! counts and compensated value sums. Samples with equal times are inserted
//! only after every query of their tie group has been answered, so tied times
//! never pair.

use crate::linalg::CompensatedSum;

/// Support-pair counts and value sums for every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCounts {
    pub l_plus: Vec<u64>,
    pub l_minus: Vec<u64>,
    pub sigma_plus: Vec<f64>,
    pub sigma_minus: Vec<f64>,
}

impl SurvivalCounts {
    fn zeros(n: usize) -> Self {
        SurvivalCounts {
            l_plus: vec![0; n],
            l_minus: vec![0; n],
            sigma_plus: vec![0.0; n],
            sigma_minus: vec![0.0; n],
        }
    }

    /// Number of support pairs, `m_β`.
    pub fn support_pairs(&self) -> u64 {
        self.l_plus.iter().sum()
    }
}

/// Binary indexed tree over ranks `0..size` holding a count and a
/// compensated value sum per rank.
#[derive(Debug, Clone)]
pub struct RankAggregator {
    count: Vec<u64>,
    sum: Vec<CompensatedSum>,
}

impl RankAggregator {
    pub fn new(size: usize) -> Self {
        RankAggregator {
            count: vec![0; size + 1],
            sum: vec![CompensatedSum::default(); size + 1],
        }
    }

    pub fn insert(&mut self, rank: usize, value: f64) {
        let mut k = rank + 1;
        while k < self.count.len() {
            self.count[k] += 1;
            self.sum[k].add(value);
            k += k & k.wrapping_neg();
        }
    }

    /// Count and value sum over ranks strictly below `bound`.
    pub fn prefix(&self, bound: usize) -> (u64, f64) {
        let mut k = bound.min(self.count.len() - 1);
        let mut c = 0;
        let mut s = CompensatedSum::default();
        while k > 0 {
            c += self.count[k];
            s.merge(&self.sum[k]);
            k &= k - 1;
        }
        (c, s.value())
    }
}

/// Sorting and thresholds that depend only on times, events and scores.
///
/// Build once per score vector, then call [`SupportSet::counts`] for any
/// number of value vectors.
#[derive(Debug, Clone)]
pub struct SupportSet {
    event: Vec<bool>,
    /// Sample indices in ascending time order.
    order: Vec<usize>,
    /// Half-open ranges into `order` of equal times.
    groups: Vec<(usize, usize)>,
    /// Ascending rank of each sample's score among the distinct scores.
    key: Vec<usize>,
    n_keys: usize,
    /// Number of distinct scores `u` with `u < f_i + 1`.
    below: Vec<usize>,
    /// Number of distinct scores `u` with `f_i < u + 1`.
    above: Vec<usize>,
}

impl SupportSet {
    pub fn new(y: &[f64], delta: &[bool], f: &[f64]) -> Self {
        let n = y.len();
        assert_eq!(delta.len(), n, "event indicator length");
        assert_eq!(f.len(), n, "score length");

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
        let mut groups = Vec::new();
        let mut start = 0;
        for k in 1..=n {
            if k == n || y[order[k]] != y[order[start]] {
                groups.push((start, k));
                start = k;
            }
        }

        let mut distinct: Vec<f64> = f.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let key = f
            .iter()
            .map(|v| distinct.partition_point(|u| u < v))
            .collect();
        let below = f
            .iter()
            .map(|&fi| distinct.partition_point(|&u| u < fi + 1.0))
            .collect();
        let above = f
            .iter()
            .map(|&fi| distinct.len() - distinct.partition_point(|&u| !(fi < u + 1.0)))
            .collect();

        SupportSet {
            event: delta.to_vec(),
            order,
            groups,
            key,
            n_keys: distinct.len(),
            below,
            above,
        }
    }

    pub fn len(&self) -> usize {
        self.key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.key.is_empty()
    }

    /// Counts and `v`-sums over each sample's support pairs.
    pub fn counts(&self, v: &[f64]) -> SurvivalCounts {
        let n = self.len();
        assert_eq!(v.len(), n, "value vector length");
        let mut out = SurvivalCounts::zeros(n);

        // descending time: every later-inserted sample has a strictly larger time
        let mut tree = RankAggregator::new(self.n_keys);
        for &(lo, hi) in self.groups.iter().rev() {
            for &i in &self.order[lo..hi] {
                if self.event[i] {
                    let (c, s) = tree.prefix(self.below[i]);
                    out.l_plus[i] = c;
                    out.sigma_plus[i] = s;
                }
            }
            for &i in &self.order[lo..hi] {
                tree.insert(self.key[i], v[i]);
            }
        }

        // ascending time over uncensored samples, ranks reversed so that the
        // "score at least" query is a prefix
        let mut tree = RankAggregator::new(self.n_keys);
        for &(lo, hi) in &self.groups {
            for &i in &self.order[lo..hi] {
                let (c, s) = tree.prefix(self.above[i]);
                out.l_minus[i] = c;
                out.sigma_minus[i] = s;
            }
            for &i in &self.order[lo..hi] {
                if self.event[i] {
                    tree.insert(self.n_keys - 1 - self.key[i], v[i]);
                }
            }
        }
        out
    }
}

/// Support-pair statistics via sorted sweeps; `O(n log n)`.
pub fn survival_counts(y: &[f64], delta: &[bool], f: &[f64], v: &[f64]) -> SurvivalCounts {
    SupportSet::new(y, delta, f).counts(v)
}

/// Quadratic double-loop reference for [`survival_counts`].
pub fn naive_survival_counts(y: &[f64], delta: &[bool], f: &[f64], v: &[f64]) -> SurvivalCounts {
    let n = y.len();
    assert!(delta.len() == n && f.len() == n && v.len() == n, "length mismatch");
    let mut out = SurvivalCounts::zeros(n);
    for i in 0..n {
        for s in 0..n {
            if delta[i] && y[s] > y[i] && f[s] < f[i] + 1.0 {
                out.l_plus[i] += 1;
                out.sigma_plus[i] += v[s];
            }
            if delta[s] && y[s] < y[i] && f[i] < f[s] + 1.0 {
                out.l_minus[i] += 1;
                out.sigma_minus[i] += v[s];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_sample_all_active() {
        let y = [1.0, 2.0, 3.0];
        let d = [true, false, true];
        let v = [0.5, -2.0, 7.0];
        let c = survival_counts(&y, &d, &[0.0; 3], &v);
        assert_eq!(c.l_plus, vec![2, 0, 0]);
        assert_eq!(c.l_minus, vec![0, 1, 1]);
        assert_eq!(c.sigma_plus, vec![5.0, 0.0, 0.0]);
        assert_eq!(c.sigma_minus, vec![0.0, 0.5, 0.5]);
        assert_eq!(c, naive_survival_counts(&y, &d, &[0.0; 3], &v));
    }

    #[test]
    fn zero_values_give_zero_sums() {
        let y = [3.0, 1.0, 2.0, 5.0];
        let d = [true, true, false, true];
        let f = [0.1, 0.4, -0.3, 0.2];
        let with_v = survival_counts(&y, &d, &f, &[1.0, 2.0, 3.0, 4.0]);
        let zero = survival_counts(&y, &d, &f, &[0.0; 4]);
        assert_eq!(zero.l_plus, with_v.l_plus);
        assert_eq!(zero.l_minus, with_v.l_minus);
        assert!(zero.sigma_plus.iter().chain(&zero.sigma_minus).all(|&s| s == 0.0));
    }

    #[test]
    fn separated_scores_have_no_support_pairs() {
        let y = [4.0, 1.0, 3.0, 2.0, 5.0];
        let d = [true; 5];
        // f = 2·rank(y): higher time, higher score, gaps of 2
        let f = [8.0, 2.0, 6.0, 4.0, 10.0];
        let c = survival_counts(&y, &d, &f, &[1.0; 5]);
        assert_eq!(c.support_pairs(), 0);
        assert!(c.l_minus.iter().all(|&l| l == 0));
        assert_eq!(c, naive_survival_counts(&y, &d, &f, &[1.0; 5]));
    }

    #[test]
    fn single_sample_and_ties() {
        let c = survival_counts(&[1.0], &[true], &[0.0], &[1.0]);
        assert_eq!(c.support_pairs(), 0);
        let y = [2.0, 2.0, 2.0];
        let c = survival_counts(&y, &[true; 3], &[0.0; 3], &[1.0; 3]);
        assert_eq!(c, naive_survival_counts(&y, &[true; 3], &[0.0; 3], &[1.0; 3]));
        assert_eq!(c.support_pairs(), 0);
    }

    #[test]
    fn margin_boundary_is_excluded() {
        // f_high - f_low = 1 exactly: not a support pair
        let c = survival_counts(&[1.0, 2.0], &[true, true], &[0.0, 1.0], &[1.0, 1.0]);
        assert_eq!(c.support_pairs(), 0);
    }

    #[test]
    fn aggregator_prefix_queries() {
        let mut t = RankAggregator::new(5);
        t.insert(0, 1.0);
        t.insert(3, 10.0);
        t.insert(3, 0.5);
        t.insert(4, -2.0);
        assert_eq!(t.prefix(0), (0, 0.0));
        assert_eq!(t.prefix(1), (1, 1.0));
        assert_eq!(t.prefix(4), (3, 11.5));
        assert_eq!(t.prefix(5), (4, 9.5));
        assert_eq!(t.prefix(99), (4, 9.5));
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>, Vec<f64>, Vec<f64>)> {
        (1usize..150).prop_flat_map(|n| {
            (
                prop::collection::vec((1u32..60).prop_map(f64::from), n),
                prop::collection::vec(any::<bool>(), n),
                prop::collection::vec(-3.0f64..3.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn fast_matches_naive((y, d, f, v) in instance()) {
            let fast = survival_counts(&y, &d, &f, &v);
            let slow = naive_survival_counts(&y, &d, &f, &v);
            prop_assert_eq!(&fast.l_plus, &slow.l_plus);
            prop_assert_eq!(&fast.l_minus, &slow.l_minus);
            let tol = 1e-9 * v.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
            for i in 0..y.len() {
                prop_assert!((fast.sigma_plus[i] - slow.sigma_plus[i]).abs() <= tol);
                prop_assert!((fast.sigma_minus[i] - slow.sigma_minus[i]).abs() <= tol);
            }
            prop_assert_eq!(fast.support_pairs(), fast.l_minus.iter().sum::<u64>());
            for i in 0..y.len() {
                if !d[i] { prop_assert_eq!(fast.l_plus[i], 0); }
            }
        }

        #[test]
        fn sums_are_linear_in_values((y, d, f, v) in instance(), scale in -3.0f64..3.0) {
            let set = SupportSet::new(&y, &d, &f);
            let w: Vec<f64> = v.iter().map(|x| scale * x + 1.0).collect();
            let vw: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + b).collect();
            let (a, b, ab) = (set.counts(&v), set.counts(&w), set.counts(&vw));
            let scale = 1.0 + v.iter().chain(&w).map(|x| x.abs()).sum::<f64>();
            for i in 0..y.len() {
                let expect = a.sigma_plus[i] + b.sigma_plus[i];
                prop_assert!((ab.sigma_plus[i] - expect).abs() <= 1e-10 * scale);
                let expect = a.sigma_minus[i] + b.sigma_minus[i];
                prop_assert!((ab.sigma_minus[i] - expect).abs() <= 1e-10 * scale);
            }
        }
    }
}
