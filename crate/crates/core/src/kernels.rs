//! Kernel functions and Gram matrices.
//!
//! Three kernels are supported:
//!
//! * linear: `k(a, b) = a·b`
//! * RBF: `k(a, b) = exp(-‖a - b‖² / (2σ²))`
//! * clinical: the mean over features of a per-feature similarity. A
//!   continuous feature with training range `r > 0` contributes
//!   `(r - |a - b|) / r` after both values are clipped into the training
//!   range; categorical features and zero-range continuous features
//!   contribute 1 when the values are equal and 0 otherwise.
//!
//! Linear and RBF kernels operate on dummy-coded rows, the clinical kernel on
//! rows holding categorical level indices.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureKind, FeatureSpec};
use crate::error::{Error, Result};

pub const DEFAULT_RIDGE: f64 = 1e-10;

/// Rows beyond this count are subsampled when estimating the RBF bandwidth.
const MEDIAN_HEURISTIC_MAX_ROWS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Rbf { sigma: f64 },
    Clinical { specs: Vec<FeatureSpec> },
}

impl KernelKind {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::Rbf { .. } => "rbf",
            KernelKind::Clinical { .. } => "clinical",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub ridge: f64,
}

impl KernelConfig {
    pub fn linear() -> Self {
        KernelConfig {
            kind: KernelKind::Linear,
            ridge: DEFAULT_RIDGE,
        }
    }

    pub fn rbf(sigma: f64) -> Self {
        KernelConfig {
            kind: KernelKind::Rbf { sigma },
            ridge: DEFAULT_RIDGE,
        }
    }

    pub fn clinical(specs: Vec<FeatureSpec>) -> Self {
        KernelConfig {
            kind: KernelKind::Clinical { specs },
            ridge: DEFAULT_RIDGE,
        }
    }

    pub fn with_ridge(mut self, ridge: f64) -> Self {
        self.ridge = ridge;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "ridge must be nonnegative, got {}",
                self.ridge
            )));
        }
        match &self.kind {
            KernelKind::Linear => Ok(()),
            KernelKind::Rbf { sigma } if !(*sigma > 0.0 && sigma.is_finite()) => Err(
                Error::InvalidParameter(format!("RBF sigma must be positive, got {sigma}")),
            ),
            KernelKind::Rbf { .. } => Ok(()),
            KernelKind::Clinical { specs } => {
                for s in specs {
                    s.validate()?;
                    if s.kind == FeatureKind::Continuous && s.observed_range.is_none() {
                        return Err(Error::InvalidParameter(format!(
                            "clinical kernel needs the observed range of `{}`",
                            s.name
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

fn check_len(config: &KernelConfig, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            what: "kernel argument length",
            expected: a,
            actual: b,
        });
    }
    if let KernelKind::Clinical { specs } = &config.kind {
        if specs.len() != a {
            return Err(Error::DimensionMismatch {
                what: "clinical kernel feature count",
                expected: specs.len(),
                actual: a,
            });
        }
    }
    Ok(())
}

fn eval_unchecked(kind: &KernelKind, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    match kind {
        KernelKind::Linear => a.dot(&b),
        KernelKind::Rbf { sigma } => {
            let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
            (-d2 / (2.0 * sigma * sigma)).exp()
        }
        KernelKind::Clinical { specs } => {
            if specs.is_empty() {
                return 1.0;
            }
            let total: f64 = specs
                .iter()
                .zip(a.iter().zip(b.iter()))
                .map(|(spec, (&x, &y))| clinical_component(spec, x, y))
                .sum();
            total / specs.len() as f64
        }
    }
}

fn clinical_component(spec: &FeatureSpec, x: f64, y: f64) -> f64 {
    match (spec.kind, spec.observed_range) {
        (FeatureKind::Continuous, Some((lo, hi))) if hi > lo => {
            let r = hi - lo;
            let d = (x.clamp(lo, hi) - y.clamp(lo, hi)).abs();
            (r - d) / r
        }
        _ => {
            if x == y {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Evaluates `k(a, b)` without ridge.
pub fn kernel_eval(
    config: &KernelConfig,
    a: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
) -> Result<f64> {
    check_len(config, a.len(), b.len())?;
    Ok(eval_unchecked(&config.kind, a, b))
}

/// Dense symmetric kernel matrix over the rows of a training matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub k: Array2<f64>,
    pub config: KernelConfig,
}

impl GramMatrix {
    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    /// Wraps an explicit matrix. The caller is responsible for symmetry.
    pub fn from_matrix(k: Array2<f64>, config: KernelConfig) -> Result<Self> {
        if k.nrows() != k.ncols() {
            return Err(Error::DimensionMismatch {
                what: "Gram matrix columns",
                expected: k.nrows(),
                actual: k.ncols(),
            });
        }
        Ok(GramMatrix { k, config })
    }
}

/// Builds `K[i][j] = k(x_i, x_j) + ridge·[i = j]`. Only the upper triangle is
/// evaluated; the lower triangle is a mirror, so the result is exactly
/// symmetric.
pub fn gram(config: &KernelConfig, x: ArrayView2<'_, f64>) -> Result<GramMatrix> {
    config.validate()?;
    let n = x.nrows();
    if n == 0 {
        return Err(Error::InvalidParameter(
            "Gram matrix needs at least one row".into(),
        ));
    }
    check_len(config, x.ncols(), x.ncols())?;
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            (i..n)
                .map(|j| eval_unchecked(&config.kind, xi, x.row(j)))
                .collect()
        })
        .collect();
    let mut k = Array2::zeros((n, n));
    for (i, row) in upper.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + off;
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
        k[[i, i]] += config.ridge;
    }
    Ok(GramMatrix {
        k,
        config: config.clone(),
    })
}

/// `m × n` matrix with entry `[j][i] = k(x_new_j, x_train_i)`. No ridge.
pub fn cross_gram(
    config: &KernelConfig,
    x_train: ArrayView2<'_, f64>,
    x_new: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    config.validate()?;
    check_len(config, x_train.ncols(), x_new.ncols())?;
    let (m, n) = (x_new.nrows(), x_train.nrows());
    let rows: Vec<f64> = (0..m)
        .into_par_iter()
        .flat_map_iter(|j| {
            let xj = x_new.row(j);
            (0..n).map(move |i| eval_unchecked(&config.kind, xj, x_train.row(i)))
        })
        .collect();
    Ok(Array2::from_shape_vec((m, n), rows).expect("row-major m×n buffer"))
}

/// Median Euclidean distance between distinct rows. Large inputs are
/// subsampled with an even stride. Returns 1 when every distance is zero.
pub fn median_pairwise_distance(x: ArrayView2<'_, f64>) -> f64 {
    let n = x.nrows();
    let stride = n.div_ceil(MEDIAN_HEURISTIC_MAX_ROWS).max(1);
    let rows: Vec<usize> = (0..n).step_by(stride).collect();
    let mut dists = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for (a, &i) in rows.iter().enumerate() {
        for &j in &rows[a + 1..] {
            let d2: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j).iter())
                .map(|(p, q)| (p - q) * (p - q))
                .sum();
            dists.push(d2.sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    let mid = dists.len() / 2;
    let (_, median, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    if *median > 0.0 {
        *median
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn clinical_one_continuous(lo: f64, hi: f64) -> KernelConfig {
        let mut s = FeatureSpec::continuous("v");
        s.observed_range = Some((lo, hi));
        KernelConfig::clinical(vec![s])
    }

    #[test]
    fn linear_dot_product() {
        let c = KernelConfig::linear();
        let v = kernel_eval(&c, array![1.0, 2.0].view(), array![3.0, 4.0].view()).unwrap();
        assert_eq!(v, 11.0);
    }

    #[test]
    fn rbf_and_clinical_self_similarity() {
        let a = array![0.3, -2.0];
        assert_eq!(
            kernel_eval(&KernelConfig::rbf(0.7), a.view(), a.view()).unwrap(),
            1.0
        );
        let c = clinical_one_continuous(0.0, 4.0);
        assert_eq!(
            kernel_eval(&c, array![1.5].view(), array![1.5].view()).unwrap(),
            1.0
        );
    }

    #[test]
    fn clinical_range_endpoint_and_clipping() {
        let c = clinical_one_continuous(1.0, 3.0);
        assert_eq!(
            kernel_eval(&c, array![1.0].view(), array![3.0].view()).unwrap(),
            0.0
        );
        // out-of-range values clip to the training range
        assert_eq!(
            kernel_eval(&c, array![-10.0].view(), array![3.0].view()).unwrap(),
            0.0
        );
        assert_eq!(
            kernel_eval(&c, array![2.0].view(), array![2.5].view()).unwrap(),
            0.75
        );
    }

    #[test]
    fn clinical_mixed_and_zero_range() {
        let mut cont = FeatureSpec::continuous("v");
        cont.observed_range = Some((0.0, 2.0));
        let mut flat = FeatureSpec::continuous("w");
        flat.observed_range = Some((5.0, 5.0));
        let cat = FeatureSpec::categorical("g", ["a", "b"]);
        let c = KernelConfig::clinical(vec![cont, flat, cat]);
        let v = kernel_eval(&c, array![0.0, 5.0, 0.0].view(), array![1.0, 6.0, 0.0].view())
            .unwrap();
        assert!((v - (0.5 + 0.0 + 1.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let c = KernelConfig::linear();
        assert!(kernel_eval(&c, array![1.0].view(), array![1.0, 2.0].view()).is_err());
        let clin = clinical_one_continuous(0.0, 1.0);
        assert!(kernel_eval(&clin, array![1.0, 2.0].view(), array![1.0, 2.0].view()).is_err());
    }

    #[test]
    fn gram_single_row_and_duplicates() {
        let c = KernelConfig::rbf(1.0).with_ridge(0.25);
        let g = gram(&c, array![[2.0, 1.0]].view()).unwrap();
        assert_eq!(g.k, array![[1.25]]);
        let g = gram(&KernelConfig::rbf(1.0), array![[1.0], [1.0]].view()).unwrap();
        assert_eq!(g.k[[0, 1]], 1.0);
        assert_eq!(g.k[[1, 0]], 1.0);
    }

    #[test]
    fn cross_gram_consistency() {
        let x = array![[0.0, 1.0], [2.0, -1.0], [0.5, 0.5]];
        let rbf = KernelConfig::rbf(1.3).with_ridge(0.0);
        assert_eq!(cross_gram(&rbf, x.view(), x.view()).unwrap(), gram(&rbf, x.view()).unwrap().k);

        let row = cross_gram(&rbf, x.view(), x.slice(ndarray::s![1..2, ..])).unwrap();
        assert_eq!(row[[0, 1]], 1.0);

        let lin = KernelConfig::linear();
        let new = array![[1.0, 1.0], [3.0, 0.0]];
        let cg = cross_gram(&lin, x.view(), new.view()).unwrap();
        assert_eq!(cg, new.dot(&x.t()));
    }

    #[test]
    fn invalid_configs() {
        assert!(gram(&KernelConfig::rbf(0.0), array![[1.0]].view()).is_err());
        assert!(gram(&KernelConfig::linear().with_ridge(-1.0), array![[1.0]].view()).is_err());
        let unfilled = KernelConfig::clinical(vec![FeatureSpec::continuous("v")]);
        assert!(gram(&unfilled, array![[1.0]].view()).is_err());
    }

    #[test]
    fn median_heuristic() {
        let x = array![[0.0], [1.0], [3.0]];
        // distances 1, 3, 2
        assert_eq!(median_pairwise_distance(x.view()), 2.0);
        assert_eq!(median_pairwise_distance(array![[1.0], [1.0]].view()), 1.0);
    }
}
