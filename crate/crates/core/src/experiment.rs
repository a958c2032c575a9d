//! Timing benchmark of the counting sweep and the synthetic replication study.

use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counter::{naive_survival_counts, survival_counts};
use crate::error::Result;
use crate::kernels::{gram, KernelConfig};
use crate::linalg::matvec;
use crate::metrics::harrell_c;
use crate::model::{fit, grid_search, predict, GridSearchOptions, KernelChoice, PairMode};
use crate::newton::OptimizerOptions;
use crate::objective::ObjectiveContext;
use crate::synth::{generate, SynthConfig};

/// Shortest wall time a timing batch should span.
const MIN_BATCH_SECS: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOptions {
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub seed: u64,
    /// Sizes above this skip the Hessian-vector timing (the Gram matrix is
    /// `n²` doubles).
    pub max_hessvec_n: usize,
    pub naive: bool,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        BenchmarkOptions {
            sizes: vec![1000, 2000, 4000, 8000],
            repeats: 5,
            seed: 0,
            max_hessvec_n: 4000,
            naive: true,
        }
    }
}

/// Per-size timings in milliseconds, each the median over repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub n: usize,
    pub count_ms: f64,
    pub naive_ms: Option<f64>,
    pub hessvec_ms: Option<f64>,
    pub kv_ms: Option<f64>,
    pub kv_share: Option<f64>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Median seconds per call. Calls are batched so that one sample spans at
/// least `MIN_BATCH_SECS`.
fn time_per_call(repeats: usize, mut f: impl FnMut()) -> f64 {
    let start = Instant::now();
    f();
    let single = start.elapsed().as_secs_f64().max(1e-9);
    let batch = ((MIN_BATCH_SECS / single).ceil() as usize).max(1);
    let samples = (0..repeats.max(1))
        .map(|_| {
            let start = Instant::now();
            for _ in 0..batch {
                f();
            }
            start.elapsed().as_secs_f64() / batch as f64
        })
        .collect();
    median(samples)
}

struct BenchInput {
    y: Vec<f64>,
    delta: Vec<bool>,
    f: Vec<f64>,
    v: Vec<f64>,
}

fn bench_input(n: usize, rng: &mut ChaCha8Rng) -> BenchInput {
    let y = (0..n).map(|_| rng.gen_range(0.01..10.0)).collect();
    let delta = (0..n).map(|_| rng.gen_bool(0.8)).collect();
    let f = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let v = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    BenchInput { y, delta, f, v }
}

pub fn benchmark(opts: &BenchmarkOptions) -> Result<Vec<BenchmarkRow>> {
    let mut rows = Vec::with_capacity(opts.sizes.len());
    for &n in &opts.sizes {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ n as u64);
        let inp = bench_input(n, &mut rng);
        let count = time_per_call(opts.repeats, || {
            std::hint::black_box(survival_counts(&inp.y, &inp.delta, &inp.f, &inp.v));
        });
        let naive = opts.naive.then(|| {
            time_per_call(opts.repeats, || {
                std::hint::black_box(naive_survival_counts(&inp.y, &inp.delta, &inp.f, &inp.v));
            })
        });

        let mut row = BenchmarkRow {
            n,
            count_ms: count * 1e3,
            naive_ms: naive.map(|t| t * 1e3),
            hessvec_ms: None,
            kv_ms: None,
            kv_share: None,
        };
        if n <= opts.max_hessvec_n {
            let x = ndarray::Array2::from_shape_simple_fn((n, 5), || {
                rng.sample::<f64, _>(StandardNormal)
            });
            let k = gram(&KernelConfig::rbf(2.0), x.view())?.k;
            let ctx = ObjectiveContext::new(&k, &inp.y, &inp.delta, 1.0)?;
            let beta: Vec<f64> = inp.f.iter().map(|b| 0.1 * b).collect();
            let eval = ctx.evaluate(&beta)?;
            let (mut total, mut products) = (Vec::new(), Vec::new());
            for _ in 0..opts.repeats.max(1) {
                // Same steps as `Evaluation::hessvec`, with the two kernel
                // products timed separately.
                let t0 = Instant::now();
                let kv = matvec(&k, &inp.v);
                let t1 = Instant::now();
                let c = eval.support_counts(&kv);
                let z: Vec<f64> = (0..n)
                    .map(|i| {
                        let l = (c.l_plus[i] + c.l_minus[i]) as f64;
                        l * kv[i] - (c.sigma_plus[i] + c.sigma_minus[i])
                    })
                    .collect();
                let t2 = Instant::now();
                let kz = matvec(&k, &z);
                let hv: Vec<f64> = kv.iter().zip(&kz).map(|(a, b)| a + ctx.gamma() * b).collect();
                let t3 = Instant::now();
                std::hint::black_box(hv);
                total.push((t3 - t0).as_secs_f64());
                products.push((t1 - t0 + (t3 - t2)).as_secs_f64());
            }
            let shares: Vec<f64> = products.iter().zip(&total).map(|(p, t)| p / t).collect();
            row.hessvec_ms = Some(median(total) * 1e3);
            row.kv_ms = Some(median(products) * 1e3);
            row.kv_share = Some(median(shares));
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOptions {
    pub replicates: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub kernels: Vec<KernelChoice>,
    pub pair_modes: Vec<PairMode>,
    pub grid: Vec<f64>,
    pub n_splits: usize,
    pub optimizer: OptimizerOptions,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            replicates: 100,
            n_train: 1500,
            n_test: 1500,
            seed: 0,
            kernels: vec![
                KernelChoice::Linear,
                KernelChoice::Rbf { sigma: None },
                KernelChoice::Clinical,
            ],
            pair_modes: vec![PairMode::Full, PairMode::Reduced],
            grid: crate::model::default_gamma_grid(),
            n_splits: 10,
            optimizer: OptimizerOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub kernel: String,
    pub pair_mode: PairMode,
    pub gamma: f64,
    pub cindex: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub kernel: String,
    pub pair_mode: PairMode,
    pub replicates: usize,
    pub mean_cindex: f64,
    pub std_cindex: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<ReplicateRow>,
    pub summary: Vec<SummaryRow>,
}

fn replicate_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_add((r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// For each replicate: draw data, pick `γ` per kernel and pair mode on the
/// training set, refit on all training rows and score the test set.
pub fn run_experiment(opts: &ExperimentOptions) -> Result<ExperimentResult> {
    let per_replicate: Vec<Vec<ReplicateRow>> = (0..opts.replicates)
        .into_par_iter()
        .map(|r| -> Result<Vec<ReplicateRow>> {
            let seed = replicate_seed(opts.seed, r);
            let (train, test) = generate(&SynthConfig::new(opts.n_train, opts.n_test, seed))?;
            let mut out = Vec::new();
            for kernel in &opts.kernels {
                for &mode in &opts.pair_modes {
                    let gs = GridSearchOptions {
                        grid: opts.grid.clone(),
                        n_splits: opts.n_splits,
                        seed: seed ^ 0x5bd1_e995,
                        pair_mode: mode,
                        optimizer: opts.optimizer.clone(),
                        ..GridSearchOptions::default()
                    };
                    let gamma = if opts.grid.len() == 1 {
                        opts.grid[0]
                    } else {
                        grid_search(&train, kernel, &gs)?.best_gamma
                    };
                    let m = fit(&train, kernel, gamma, &opts.optimizer, mode)?;
                    let risk = predict(&m, test.x())?;
                    out.push(ReplicateRow {
                        replicate: r,
                        kernel: kernel.name().to_owned(),
                        pair_mode: mode,
                        gamma,
                        cindex: harrell_c(test.time(), test.event(), &risk)?.cindex,
                        converged: m.report.termination.converged(),
                    });
                }
            }
            log::info!("replicate {r} done");
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<ReplicateRow> = per_replicate.into_iter().flatten().collect();

    let mut summary = Vec::new();
    for kernel in &opts.kernels {
        for &mode in &opts.pair_modes {
            let c: Vec<f64> = rows
                .iter()
                .filter(|row| row.kernel == kernel.name() && row.pair_mode == mode)
                .map(|row| row.cindex)
                .collect();
            let k = c.len() as f64;
            let mean = c.iter().sum::<f64>() / k;
            let var = if c.len() > 1 {
                c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0)
            } else {
                0.0
            };
            summary.push(SummaryRow {
                kernel: kernel.name().to_owned(),
                pair_mode: mode,
                replicates: c.len(),
                mean_cindex: mean,
                std_cindex: var.sqrt(),
            });
        }
    }
    Ok(ExperimentResult { rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn small_benchmark_fills_rows() {
        let rows = benchmark(&BenchmarkOptions {
            sizes: vec![50, 300],
            repeats: 1,
            max_hessvec_n: 100,
            ..BenchmarkOptions::default()
        })
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].kv_share.is_some() && rows[1].kv_share.is_none());
        assert!(rows.iter().all(|r| r.count_ms > 0.0 && r.naive_ms.is_some()));
    }

    #[test]
    fn tiny_experiment_is_deterministic() {
        let opts = ExperimentOptions {
            replicates: 2,
            n_train: 60,
            n_test: 60,
            kernels: vec![KernelChoice::Clinical],
            grid: vec![0.25, 4.0],
            n_splits: 2,
            ..ExperimentOptions::default()
        };
        let a = run_experiment(&opts).unwrap();
        assert_eq!(a.rows.len(), 4);
        assert_eq!(a.summary.len(), 2);
        assert_eq!(a, run_experiment(&opts).unwrap());
    }
}
