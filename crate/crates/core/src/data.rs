//! Survival data: feature metadata, datasets of `(x, y, delta)` triplets,
//! CSV ingestion and standardization of continuous features.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Categorical,
}

/// Description of one input column.
///
/// Categorical columns are stored in a [`SurvivalDataset`] as level indices
/// into `levels`. `observed_range` is filled for continuous columns when a
/// model is fit; the clinical kernel needs it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default)]
    pub levels: Vec<String>,
    #[serde(default)]
    pub observed_range: Option<(f64, f64)>,
}

impl FeatureSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Continuous,
            levels: Vec::new(),
            observed_range: None,
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        levels: impl IntoIterator<Item = S>,
    ) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Categorical,
            levels: levels.into_iter().map(Into::into).collect(),
            observed_range: None,
        }
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == FeatureKind::Categorical
    }

    /// Number of columns this feature occupies after dummy coding.
    pub fn encoded_width(&self) -> usize {
        match self.kind {
            FeatureKind::Continuous => 1,
            FeatureKind::Categorical => self.levels.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            FeatureKind::Categorical if self.levels.is_empty() => Err(Error::Schema(format!(
                "categorical feature `{}` has no levels",
                self.name
            ))),
            FeatureKind::Continuous => match self.observed_range {
                Some((lo, hi)) if !(lo <= hi) => Err(Error::Schema(format!(
                    "feature `{}` has invalid range [{lo}, {hi}]",
                    self.name
                ))),
                _ => Ok(()),
            },
            _ => Ok(()),
        }
    }
}

/// A right-censored survival dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    x: Array2<f64>,
    time: Vec<f64>,
    event: Vec<bool>,
    specs: Vec<FeatureSpec>,
}

impl SurvivalDataset {
    pub fn new(
        x: Array2<f64>,
        time: Vec<f64>,
        event: Vec<bool>,
        specs: Vec<FeatureSpec>,
    ) -> Result<Self> {
        let n = x.nrows();
        if time.len() != n {
            return Err(Error::DimensionMismatch {
                what: "time vector length",
                expected: n,
                actual: time.len(),
            });
        }
        if event.len() != n {
            return Err(Error::DimensionMismatch {
                what: "event vector length",
                expected: n,
                actual: event.len(),
            });
        }
        if specs.len() != x.ncols() {
            return Err(Error::DimensionMismatch {
                what: "feature spec count",
                expected: x.ncols(),
                actual: specs.len(),
            });
        }
        for spec in &specs {
            spec.validate()?;
        }
        let bad: Vec<usize> = time
            .iter()
            .enumerate()
            .filter(|(_, t)| !(t.is_finite() && **t > 0.0))
            .map(|(i, _)| i + 1)
            .collect();
        if !bad.is_empty() {
            return Err(Error::Validation(format!(
                "observed times must be finite and positive; offending rows: {}",
                join_rows(&bad)
            )));
        }
        for (col, spec) in specs.iter().enumerate() {
            for (row, &v) in x.column(col).iter().enumerate() {
                let ok = match spec.kind {
                    FeatureKind::Continuous => v.is_finite(),
                    FeatureKind::Categorical => {
                        v >= 0.0 && v.fract() == 0.0 && (v as usize) < spec.levels.len()
                    }
                };
                if !ok {
                    return Err(Error::Validation(format!(
                        "row {}: invalid value {v} for feature `{}`",
                        row + 1,
                        spec.name
                    )));
                }
            }
        }
        Ok(SurvivalDataset {
            x,
            time,
            event,
            specs,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn event(&self) -> &[bool] {
        &self.event
    }

    pub fn specs(&self) -> &[FeatureSpec] {
        &self.specs
    }

    pub fn n_events(&self) -> usize {
        self.event.iter().filter(|&&e| e).count()
    }

    pub fn censoring_fraction(&self) -> f64 {
        if self.event.is_empty() {
            return 0.0;
        }
        1.0 - self.n_events() as f64 / self.event.len() as f64
    }

    /// Rows selected by `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> SurvivalDataset {
        SurvivalDataset {
            x: self.x.select(Axis(0), indices),
            time: indices.iter().map(|&i| self.time[i]).collect(),
            event: indices.iter().map(|&i| self.event[i]).collect(),
            specs: self.specs.clone(),
        }
    }

    pub(crate) fn with_x(&self, x: Array2<f64>) -> SurvivalDataset {
        SurvivalDataset {
            x,
            time: self.time.clone(),
            event: self.event.clone(),
            specs: self.specs.clone(),
        }
    }
}

fn join_rows(rows: &[usize]) -> String {
    rows.iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

/// One-hot expansion of categorical level indices; continuous columns are copied.
pub fn expand_dummies(x: ArrayView2<'_, f64>, specs: &[FeatureSpec]) -> Result<Array2<f64>> {
    if x.ncols() != specs.len() {
        return Err(Error::DimensionMismatch {
            what: "feature columns",
            expected: specs.len(),
            actual: x.ncols(),
        });
    }
    let width: usize = specs.iter().map(FeatureSpec::encoded_width).sum();
    let mut out = Array2::zeros((x.nrows(), width));
    for (r, row) in x.outer_iter().enumerate() {
        let mut c = 0;
        for (spec, &v) in specs.iter().zip(row.iter()) {
            match spec.kind {
                FeatureKind::Continuous => out[[r, c]] = v,
                FeatureKind::Categorical => out[[r, c + v as usize]] = 1.0,
            }
            c += spec.encoded_width();
        }
    }
    Ok(out)
}

/// Scaling applied to one continuous column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub mean: f64,
    pub std_dev: f64,
    /// Constant columns are passed through unchanged.
    pub constant: bool,
}

/// Training-set statistics for continuous columns; `None` for categorical ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub columns: Vec<Option<ColumnScaling>>,
}

impl StandardizationStats {
    pub fn constant_columns(&self) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.map_or(false, |c| c.constant))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Centers and scales every continuous column to zero mean and unit
/// population variance. Categorical columns are left alone.
pub fn standardize(d: &SurvivalDataset) -> (SurvivalDataset, StandardizationStats) {
    let n = d.n_samples() as f64;
    let columns = d
        .specs
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            if spec.is_categorical() || d.n_samples() == 0 {
                return None;
            }
            let col = d.x.column(j);
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let std_dev = var.sqrt();
            let constant = std_dev == 0.0 || std_dev <= f64::EPSILON * mean.abs();
            Some(ColumnScaling {
                mean,
                std_dev,
                constant,
            })
        })
        .collect();
    let stats = StandardizationStats { columns };
    let x = apply_standardization(&stats, d.x.view()).expect("stats built from the same matrix");
    (d.with_x(x), stats)
}

/// Applies training statistics to a new matrix with the same column layout.
pub fn apply_standardization(
    stats: &StandardizationStats,
    x: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    if x.ncols() != stats.columns.len() {
        return Err(Error::DimensionMismatch {
            what: "standardization columns",
            expected: stats.columns.len(),
            actual: x.ncols(),
        });
    }
    let mut out = x.to_owned();
    for (j, scaling) in stats.columns.iter().enumerate() {
        if let Some(s) = scaling {
            if !s.constant {
                out.column_mut(j)
                    .mapv_inplace(|v| (v - s.mean) / s.std_dev);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// CSV ingestion

struct CsvTable {
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

fn read_table(path: &Path) -> Result<CsvTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader.headers()?.iter().map(str::to_owned).collect();
    let rows = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(CsvTable { headers, rows })
}

impl CsvTable {
    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    }

    fn field<'a>(&'a self, row: usize, col: usize, name: &str) -> Result<&'a str> {
        match self.rows[row].get(col) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(Error::Validation(format!(
                "row {}: missing value in column `{name}`",
                row + 1
            ))),
        }
    }

    fn parse_real(&self, row: usize, col: usize, name: &str) -> Result<f64> {
        let raw = self.field(row, col, name)?;
        raw.parse::<f64>().map_err(|_| {
            Error::Validation(format!(
                "row {}: cannot parse `{raw}` in column `{name}` as a number",
                row + 1
            ))
        })
    }

    fn features(&self, schema: &[FeatureSpec]) -> Result<Array2<f64>> {
        let cols = schema
            .iter()
            .map(|s| self.column(&s.name))
            .collect::<Result<Vec<_>>>()?;
        let lookup: Vec<HashMap<&str, usize>> = schema
            .iter()
            .map(|s| {
                s.levels
                    .iter()
                    .enumerate()
                    .map(|(i, l)| (l.as_str(), i))
                    .collect()
            })
            .collect();
        let mut x = Array2::zeros((self.rows.len(), schema.len()));
        for r in 0..self.rows.len() {
            for (j, spec) in schema.iter().enumerate() {
                x[[r, j]] = match spec.kind {
                    FeatureKind::Continuous => self.parse_real(r, cols[j], &spec.name)?,
                    FeatureKind::Categorical => {
                        let raw = self.field(r, cols[j], &spec.name)?;
                        *lookup[j].get(raw).ok_or_else(|| {
                            Error::Validation(format!(
                                "row {}: unknown level `{raw}` for categorical feature `{}`",
                                r + 1,
                                spec.name
                            ))
                        })? as f64
                    }
                };
            }
        }
        Ok(x)
    }
}

/// Reads a survival dataset. Row numbers in error messages are 1-based data
/// rows (the header is not counted).
pub fn load_csv(
    path: impl AsRef<Path>,
    schema: &[FeatureSpec],
    time_column: &str,
    event_column: &str,
) -> Result<SurvivalDataset> {
    for spec in schema {
        spec.validate()?;
    }
    let table = read_table(path.as_ref())?;
    let tcol = table.column(time_column)?;
    let ecol = table.column(event_column)?;
    let x = table.features(schema)?;

    let mut time = Vec::with_capacity(table.rows.len());
    let mut event = Vec::with_capacity(table.rows.len());
    let mut non_positive = Vec::new();
    for r in 0..table.rows.len() {
        let t = table.parse_real(r, tcol, time_column)?;
        if !(t > 0.0 && t.is_finite()) {
            non_positive.push(r + 1);
        }
        time.push(t);
        let raw = table.field(r, ecol, event_column)?;
        event.push(match raw {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Validation(format!(
                    "row {}: event indicator must be 0 or 1, got `{other}`",
                    r + 1
                )))
            }
        });
    }
    if !non_positive.is_empty() {
        return Err(Error::Validation(format!(
            "observed times must be positive; offending rows: {}",
            join_rows(&non_positive)
        )));
    }
    SurvivalDataset::new(x, time, event, schema.to_vec())
}

/// Reads only the feature columns named in `schema` (used for prediction
/// inputs that carry no outcome columns).
pub fn load_features_csv(path: impl AsRef<Path>, schema: &[FeatureSpec]) -> Result<Array2<f64>> {
    read_table(path.as_ref())?.features(schema)
}

/// Builds a schema from a CSV header: every column other than the time and
/// event columns becomes a feature, continuous unless listed in
/// `categorical`. Categorical levels are the sorted distinct values.
pub fn infer_schema(
    path: impl AsRef<Path>,
    time_column: &str,
    event_column: &str,
    categorical: &[String],
) -> Result<Vec<FeatureSpec>> {
    let table = read_table(path.as_ref())?;
    table.column(time_column)?;
    table.column(event_column)?;
    for name in categorical {
        table.column(name)?;
    }
    let mut schema = Vec::new();
    for (j, name) in table.headers.iter().enumerate() {
        if name == time_column || name == event_column {
            continue;
        }
        if categorical.iter().any(|c| c == name) {
            let mut levels = BTreeSet::new();
            for r in 0..table.rows.len() {
                levels.insert(table.field(r, j, name)?.to_owned());
            }
            schema.push(FeatureSpec::categorical(name.clone(), levels));
        } else {
            schema.push(FeatureSpec::continuous(name.clone()));
        }
    }
    Ok(schema)
}

/// Writes a dataset in the same layout [`load_csv`] reads: feature columns
/// in schema order followed by `time` and `event`.
pub fn write_csv(d: &SurvivalDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header: Vec<&str> = d.specs.iter().map(|s| s.name.as_str()).collect();
    header.extend(["time", "event"]);
    w.write_record(&header)?;
    for (r, row) in d.x.outer_iter().enumerate() {
        let mut record: Vec<String> = row
            .iter()
            .zip(&d.specs)
            .map(|(&v, spec)| match spec.kind {
                FeatureKind::Continuous => v.to_string(),
                FeatureKind::Categorical => spec.levels[v as usize].clone(),
            })
            .collect();
        record.push(d.time[r].to_string());
        record.push(if d.event[r] { "1" } else { "0" }.to_owned());
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
