//! Estimator API: fitting, prediction, model selection and persistence.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    apply_standardization, expand_dummies, standardize, FeatureKind, FeatureSpec,
    StandardizationStats, SurvivalDataset,
};
use crate::error::{Error, Result};
use crate::kernels::{
    cross_gram, gram, median_pairwise_distance, GramMatrix, KernelConfig, KernelKind,
};
use crate::linalg::matvec;
use crate::metrics::harrell_c;
use crate::newton::{minimize, OptimizerOptions, OptimizerReport, PairListObjective};
use crate::objective::ObjectiveContext;
use crate::pairs::{count_comparable_pairs, reduced_pairs};

pub const MODEL_SCHEMA_VERSION: u64 = 1;

const MAX_SPLIT_ATTEMPTS: usize = 100;

/// Kernel requested before fitting. Data-dependent parameters (RBF
/// bandwidth, clinical feature ranges) are resolved on the training data.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelChoice {
    Linear,
    /// `None` selects the median pairwise distance of the training rows.
    Rbf { sigma: Option<f64> },
    Clinical,
}

impl KernelChoice {
    pub fn name(&self) -> &'static str {
        match self {
            KernelChoice::Linear => "linear",
            KernelChoice::Rbf { .. } => "rbf",
            KernelChoice::Clinical => "clinical",
        }
    }
}

impl std::str::FromStr for KernelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(KernelChoice::Linear),
            "rbf" => Ok(KernelChoice::Rbf { sigma: None }),
            "clinical" => Ok(KernelChoice::Clinical),
            other => Err(Error::UnknownKernel(other.to_owned())),
        }
    }
}

/// Which comparable pairs enter the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairMode {
    /// Every comparable pair, through the counting fast path.
    Full,
    /// One pair per sample (nearest earlier event), summed explicitly.
    Reduced,
}

impl PairMode {
    pub fn name(self) -> &'static str {
        match self {
            PairMode::Full => "full",
            PairMode::Reduced => "reduced",
        }
    }
}

impl std::str::FromStr for PairMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(PairMode::Full),
            "reduced" => Ok(PairMode::Reduced),
            other => Err(Error::InvalidParameter(format!("unknown pair mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub beta: Vec<f64>,
    /// Kernel inputs of the training rows (standardized, and dummy coded for
    /// linear and RBF kernels).
    pub x_train: Array2<f64>,
    pub kernel: KernelConfig,
    /// Layout of raw input rows.
    pub specs: Vec<FeatureSpec>,
    pub stats: StandardizationStats,
    pub gamma: f64,
    pub pair_mode: PairMode,
    pub report: OptimizerReport,
}

fn kernel_input(
    kind: &KernelKind,
    x_std: ArrayView2<'_, f64>,
    specs: &[FeatureSpec],
) -> Result<Array2<f64>> {
    match kind {
        KernelKind::Clinical { .. } => Ok(x_std.to_owned()),
        _ => expand_dummies(x_std, specs),
    }
}

/// Standardized data, resolved kernel and Gram matrix of one training set.
/// Shared by every `γ` fitted on the same rows.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub data: SurvivalDataset,
    pub stats: StandardizationStats,
    pub design: Array2<f64>,
    pub gram: GramMatrix,
}

pub fn prepare(d: &SurvivalDataset, kernel: &KernelChoice) -> Result<PreparedData> {
    if d.n_samples() < 2 {
        return Err(Error::Validation("training needs at least two samples".into()));
    }
    if count_comparable_pairs(d.time(), d.event())? == 0 {
        return Err(Error::NoComparablePairs);
    }
    let (data, stats) = standardize(d);
    let config = match kernel {
        KernelChoice::Linear => KernelConfig::linear(),
        KernelChoice::Rbf { sigma } => {
            let sigma = match sigma {
                Some(s) => *s,
                None => {
                    median_pairwise_distance(expand_dummies(data.x(), data.specs())?.view())
                }
            };
            KernelConfig::rbf(sigma)
        }
        KernelChoice::Clinical => {
            let x = data.x();
            let specs = data
                .specs()
                .iter()
                .enumerate()
                .map(|(j, s)| {
                    let mut s = s.clone();
                    if s.kind == FeatureKind::Continuous {
                        let col = x.column(j);
                        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        s.observed_range = Some((lo, hi));
                    }
                    s
                })
                .collect();
            KernelConfig::clinical(specs)
        }
    };
    let design = kernel_input(&config.kind, data.x(), data.specs())?;
    let gram = gram(&config, design.view())?;
    Ok(PreparedData {
        data,
        stats,
        design,
        gram,
    })
}

/// Minimizes the training objective for one `γ` on prepared data.
pub fn fit_prepared(
    p: &PreparedData,
    raw_specs: &[FeatureSpec],
    gamma: f64,
    opts: &OptimizerOptions,
    pair_mode: PairMode,
) -> Result<TrainedModel> {
    let (y, delta) = (p.data.time(), p.data.event());
    let k = &p.gram.k;
    let beta0 = vec![0.0; y.len()];
    let (beta, report) = match pair_mode {
        PairMode::Full => {
            let ctx = ObjectiveContext::new(k, y, delta, gamma)?;
            minimize(&ctx, &beta0, opts)?
        }
        PairMode::Reduced => {
            if !(gamma > 0.0 && gamma.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "gamma must be positive and finite, got {gamma}"
                )));
            }
            let pairs = reduced_pairs(y, delta)?;
            let obj = PairListObjective {
                k,
                pairs: &pairs,
                gamma,
            };
            minimize(&obj, &beta0, opts)?
        }
    };
    Ok(TrainedModel {
        beta,
        x_train: p.design.clone(),
        kernel: p.gram.config.clone(),
        specs: raw_specs.to_vec(),
        stats: p.stats.clone(),
        gamma,
        pair_mode,
        report,
    })
}

/// Standardizes `d`, builds the Gram matrix and minimizes the objective
/// from `β = 0`.
pub fn fit(
    d: &SurvivalDataset,
    kernel: &KernelChoice,
    gamma: f64,
    opts: &OptimizerOptions,
    pair_mode: PairMode,
) -> Result<TrainedModel> {
    let prepared = prepare(d, kernel)?;
    fit_prepared(&prepared, d.specs(), gamma, opts, pair_mode)
}

/// Raw kernel expansion `Σ β_i k(x_i, x)`. The training loss pushes this up
/// for longer survival.
pub fn decision_function(m: &TrainedModel, x_new: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    if x_new.ncols() != m.specs.len() {
        return Err(Error::DimensionMismatch {
            what: "prediction feature columns",
            expected: m.specs.len(),
            actual: x_new.ncols(),
        });
    }
    let x_std = apply_standardization(&m.stats, x_new)?;
    let design = kernel_input(&m.kernel.kind, x_std.view(), &m.specs)?;
    let cross = cross_gram(&m.kernel, m.x_train.view(), design.view())?;
    Ok(matvec(&cross, &m.beta))
}

/// Risk scores for raw feature rows: higher means shorter expected survival.
pub fn predict(m: &TrainedModel, x_new: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    Ok(decision_function(m, x_new)?
        .into_iter()
        .map(|f| -f)
        .collect())
}

/// `{2^-12, 2^-10, ..., 2^12}`.
pub fn default_gamma_grid() -> Vec<f64> {
    (-6..=6).map(|e| 2f64.powi(2 * e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub gamma: f64,
    pub mean_cindex: f64,
    pub std_cindex: f64,
    pub splits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_gamma: f64,
    pub table: Vec<GridRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchOptions {
    pub grid: Vec<f64>,
    pub n_splits: usize,
    pub train_frac: f64,
    pub seed: u64,
    pub pair_mode: PairMode,
    pub optimizer: OptimizerOptions,
}

impl Default for GridSearchOptions {
    fn default() -> Self {
        GridSearchOptions {
            grid: default_gamma_grid(),
            n_splits: 10,
            train_frac: 0.8,
            seed: 0,
            pair_mode: PairMode::Full,
            optimizer: OptimizerOptions::default(),
        }
    }
}

fn has_pairs(d: &SurvivalDataset) -> bool {
    count_comparable_pairs(d.time(), d.event()).map_or(false, |m| m > 0)
}

/// Seeded random train/validation index splits. A split is redrawn when
/// either side has no comparable pair.
pub fn random_splits(
    d: &SurvivalDataset,
    n_splits: usize,
    train_frac: f64,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    let n = d.n_samples();
    let n_train = ((train_frac * n as f64).round() as usize).clamp(1, n.saturating_sub(1));
    if n < 4 || n_train < 2 || !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Validation(format!(
            "cannot split {n} samples with training fraction {train_frac}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = Vec::with_capacity(n_splits);
    let mut attempts = 0;
    while splits.len() < n_splits {
        if attempts == MAX_SPLIT_ATTEMPTS * n_splits.max(1) {
            return Err(Error::Validation(format!(
                "no valid train/validation split after {attempts} attempts"
            )));
        }
        attempts += 1;
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let val = idx.split_off(n_train);
        if has_pairs(&d.subset(&idx)) && has_pairs(&d.subset(&val)) {
            splits.push((idx, val));
        }
    }
    Ok(splits)
}

/// Picks `γ` by mean validation c-index over random splits; ties go to the
/// smaller `γ`. Every `(γ, split)` cell is fitted independently.
pub fn grid_search(
    d: &SurvivalDataset,
    kernel: &KernelChoice,
    opts: &GridSearchOptions,
) -> Result<GridSearchResult> {
    if opts.grid.is_empty() {
        return Err(Error::InvalidParameter("gamma grid is empty".into()));
    }
    if let Some(g) = opts.grid.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
        return Err(Error::InvalidParameter(format!("grid value {g} is not positive")));
    }
    if opts.n_splits == 0 {
        return Err(Error::InvalidParameter("need at least one split".into()));
    }
    let splits = random_splits(d, opts.n_splits, opts.train_frac, opts.seed)?;

    // scores[split][gamma]
    let scores: Vec<Vec<f64>> = splits
        .par_iter()
        .map(|(train_idx, val_idx)| -> Result<Vec<f64>> {
            let train = d.subset(train_idx);
            let val = d.subset(val_idx);
            let prepared = prepare(&train, kernel)?;
            opts.grid
                .par_iter()
                .map(|&gamma| {
                    let m = fit_prepared(&prepared, d.specs(), gamma, &opts.optimizer, opts.pair_mode)?;
                    let risk = predict(&m, val.x())?;
                    Ok(harrell_c(val.time(), val.event(), &risk)?.cindex)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let table: Vec<GridRow> = opts
        .grid
        .iter()
        .enumerate()
        .map(|(g, &gamma)| {
            let col: Vec<f64> = scores.iter().map(|row| row[g]).collect();
            let k = col.len() as f64;
            let mean = col.iter().sum::<f64>() / k;
            let var = if col.len() > 1 {
                col.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (k - 1.0)
            } else {
                0.0
            };
            GridRow {
                gamma,
                mean_cindex: mean,
                std_cindex: var.sqrt(),
                splits: col.len(),
            }
        })
        .collect();
    let best = table
        .iter()
        .max_by(|a, b| {
            a.mean_cindex
                .total_cmp(&b.mean_cindex)
                .then(b.gamma.total_cmp(&a.gamma))
        })
        .expect("grid is nonempty");
    Ok(GridSearchResult {
        best_gamma: best.gamma,
        table,
    })
}

// ---------------------------------------------------------------------------
// Persistence

#[derive(Serialize, Deserialize)]
struct MatrixDoc {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    schema_version: u64,
    kernel: KernelConfigDoc,
    gamma: f64,
    pair_mode: PairMode,
    specs: Vec<FeatureSpec>,
    stats: StandardizationStats,
    beta: Vec<f64>,
    x_train: MatrixDoc,
    report: OptimizerReport,
}

#[derive(Serialize, Deserialize)]
struct KernelConfigDoc {
    #[serde(flatten)]
    kind: KernelKind,
    ridge: f64,
}

const KNOWN_KERNELS: [&str; 3] = ["linear", "rbf", "clinical"];

impl TrainedModel {
    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDoc {
            schema_version: MODEL_SCHEMA_VERSION,
            kernel: KernelConfigDoc {
                kind: self.kernel.kind.clone(),
                ridge: self.kernel.ridge,
            },
            gamma: self.gamma,
            pair_mode: self.pair_mode,
            specs: self.specs.clone(),
            stats: self.stats.clone(),
            beta: self.beta.clone(),
            x_train: MatrixDoc {
                rows: self.x_train.nrows(),
                cols: self.x_train.ncols(),
                data: self.x_train.iter().copied().collect(),
            },
            report: self.report.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<TrainedModel> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::ModelFormat(format!("malformed model file: {e}")))?;
        let version = value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::ModelFormat("missing schema_version".into()))?;
        if version != MODEL_SCHEMA_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                supported: MODEL_SCHEMA_VERSION,
            });
        }
        let kind = value
            .get("kernel")
            .and_then(|k| k.get("kind"))
            .and_then(serde_json::Value::as_str)
            .ok_or_else(|| Error::ModelFormat("missing kernel kind".into()))?;
        if !KNOWN_KERNELS.contains(&kind) {
            return Err(Error::UnknownKernel(kind.to_owned()));
        }
        let doc: ModelDoc = serde_json::from_value(value)
            .map_err(|e| Error::ModelFormat(format!("invalid model file: {e}")))?;
        let x_train = Array2::from_shape_vec((doc.x_train.rows, doc.x_train.cols), doc.x_train.data)
            .map_err(|e| Error::ModelFormat(format!("training matrix: {e}")))?;
        if doc.beta.len() != x_train.nrows() {
            return Err(Error::ModelFormat(format!(
                "{} coefficients for {} training rows",
                doc.beta.len(),
                x_train.nrows()
            )));
        }
        if doc.stats.columns.len() != doc.specs.len() {
            return Err(Error::ModelFormat(
                "standardization statistics do not match the feature specs".into(),
            ));
        }
        let kernel = KernelConfig {
            kind: doc.kernel.kind,
            ridge: doc.kernel.ridge,
        };
        kernel.validate()?;
        Ok(TrainedModel {
            beta: doc.beta,
            x_train,
            kernel,
            specs: doc.specs,
            stats: doc.stats,
            gamma: doc.gamma,
            pair_mode: doc.pair_mode,
            report: doc.report,
        })
    }
}

pub fn save(m: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, m.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TrainedModel::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn three() -> SurvivalDataset {
        SurvivalDataset::new(
            array![[1.0], [2.0], [3.0]],
            vec![1.0, 2.0, 3.0],
            vec![true, false, true],
            vec![FeatureSpec::continuous("x")],
        )
        .unwrap()
    }

    #[test]
    fn reduced_equals_full_when_pair_sets_coincide() {
        let d = three();
        let opts = OptimizerOptions::default();
        let full = fit(&d, &KernelChoice::Linear, 1.0, &opts, PairMode::Full).unwrap();
        let reduced = fit(&d, &KernelChoice::Linear, 1.0, &opts, PairMode::Reduced).unwrap();
        for (a, b) in full.beta.iter().zip(&reduced.beta) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!(full.report.final_objective() < 1.0);
    }

    #[test]
    fn fit_rejects_data_without_pairs() {
        let d = SurvivalDataset::new(
            array![[1.0], [2.0]],
            vec![1.0, 2.0],
            vec![false, false],
            vec![FeatureSpec::continuous("x")],
        )
        .unwrap();
        let err = fit(&d, &KernelChoice::Linear, 1.0, &OptimizerOptions::default(), PairMode::Full);
        assert!(matches!(err, Err(Error::NoComparablePairs)));
    }

    #[test]
    fn fit_rejects_bad_gamma() {
        let opts = OptimizerOptions::default();
        for mode in [PairMode::Full, PairMode::Reduced] {
            assert!(fit(&three(), &KernelChoice::Linear, 0.0, &opts, mode).is_err());
        }
    }

    #[test]
    fn zero_coefficients_give_zero_scores() {
        let mut m = fit(&three(), &KernelChoice::Clinical, 1.0, &OptimizerOptions::default(), PairMode::Full)
            .unwrap();
        m.beta = vec![0.0; 3];
        assert_eq!(predict(&m, array![[0.5], [9.0]].view()).unwrap(), vec![-0.0, -0.0]);
    }

    #[test]
    fn predictions_on_training_rows_are_negated_scores() {
        let d = three();
        let m = fit(&d, &KernelChoice::Rbf { sigma: Some(1.5) }, 4.0, &OptimizerOptions::default(), PairMode::Full)
            .unwrap();
        let k = gram(&m.kernel.clone().with_ridge(0.0), m.x_train.view()).unwrap().k;
        let f = matvec(&k, &m.beta);
        assert_eq!(decision_function(&m, d.x()).unwrap(), f);
        // risk falls as survival time rises
        let risk = predict(&m, d.x()).unwrap();
        assert!(risk[0] > risk[2]);
    }

    #[test]
    fn default_grid_values() {
        let g = default_gamma_grid();
        assert_eq!(g.len(), 13);
        assert_eq!(g[0], 2f64.powi(-12));
        assert_eq!(g[12], 4096.0);
    }

    #[test]
    fn kernel_and_mode_parsing() {
        assert_eq!("rbf".parse::<KernelChoice>().unwrap(), KernelChoice::Rbf { sigma: None });
        assert!(matches!("poly".parse::<KernelChoice>(), Err(Error::UnknownKernel(k)) if k == "poly"));
        assert_eq!("reduced".parse::<PairMode>().unwrap(), PairMode::Reduced);
    }

    #[test]
    fn json_errors() {
        assert!(matches!(TrainedModel::from_json("{\"schema_version\": 1, \"ker"), Err(Error::ModelFormat(_))));
        assert!(matches!(
            TrainedModel::from_json("{\"schema_version\": 99}"),
            Err(Error::VersionMismatch { found: 99, .. })
        ));
        let m = fit(&three(), &KernelChoice::Linear, 1.0, &OptimizerOptions::default(), PairMode::Full).unwrap();
        let text = m.to_json().unwrap().replace("\"linear\"", "\"sigmoid\"");
        assert!(matches!(TrainedModel::from_json(&text), Err(Error::UnknownKernel(k)) if k == "sigmoid"));
    }
}
