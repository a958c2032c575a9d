//! Synthetic survival data with a known nonlinear risk function.
//!
//! Each sample has an age `~ U[18, 89]`, a sex `~ Bernoulli(0.5)` coded as
//! 1 or 2, a three-level categorical feature with equal level probabilities,
//! and ten normal features `N(μ_k, 1)`. Event times follow a Weibull
//! proportional-hazards model driven by `scale · f(x)`, where `f` is
//! [`nonlinear_risk`] and `scale` is drawn once per replicate. Training times
//! are censored by `U[0, τ]` with `τ` calibrated to a target censoring
//! fraction; test times are never censored.
//!
//! The random stream is ChaCha8 seeded from the config. Draws are consumed
//! in this order:
//!
//! 1. the coefficient scale `U[-1, 1]` (only when random);
//! 2. per training sample: age, sex, category, `N1..N10`, `u`; a sample
//!    whose risk or time is not finite and positive is discarded and redrawn
//!    from the next values in the stream;
//! 3. one censoring time per training sample, in sample order;
//! 4. per test sample, as in step 2.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureSpec, SurvivalDataset};
use crate::error::{Error, Result};

pub const NORMAL_MEANS: [f64; 10] = [0.0, 0.0, 0.3, 0.15, 0.8, 0.67, 0.2, 0.0, 0.12, 0.3];

/// Censoring targets below this are rejected by [`calibrate_tau`].
pub const MIN_CENSORING_TARGET: f64 = 1e-3;

const TAU_BISECTION_STEPS: usize = 200;

/// Column names of generated datasets, in order.
pub const FEATURE_NAMES: [&str; 13] = [
    "age", "sex", "group", "n1", "n2", "n3", "n4", "n5", "n6", "n7", "n8", "n9", "n10",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoeffScale {
    Fixed(f64),
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub coeff_scale: CoeffScale,
    pub target_censoring: f64,
    pub weibull_k: f64,
    pub weibull_lambda: f64,
}

impl SynthConfig {
    pub fn new(n_train: usize, n_test: usize, seed: u64) -> Self {
        SynthConfig {
            n_train,
            n_test,
            seed,
            coeff_scale: CoeffScale::Random,
            target_censoring: 0.2,
            weibull_k: 1.0,
            weibull_lambda: 0.9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::InvalidParameter(
                "sample counts must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.target_censoring) {
            return Err(Error::InvalidParameter(format!(
                "target censoring must lie in [0, 1), got {}",
                self.target_censoring
            )));
        }
        if let CoeffScale::Fixed(s) = self.coeff_scale {
            if !(-1.0..=1.0).contains(&s) {
                return Err(Error::InvalidParameter(format!(
                    "coefficient scale must lie in [-1, 1], got {s}"
                )));
            }
        }
        if !(self.weibull_k > 0.0 && self.weibull_lambda > 0.0) {
            return Err(Error::InvalidParameter(
                "Weibull shape and scale must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Raw covariates of one synthetic subject.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariates {
    pub age: f64,
    /// 1 or 2.
    pub sex: f64,
    /// Dummy codes `C1..C3` of the categorical feature.
    pub dummies: [f64; 3],
    pub numeric: [f64; 10],
}

/// The nonlinear log-hazard `f(x)`; `None` when the value is not finite
/// (for example when a denominator is zero).
pub fn nonlinear_risk(x: &Covariates) -> Option<f64> {
    let n = &x.numeric;
    let (n1, n2, n4, n6, n7, n8, n9) = (n[0], n[1], n[3], n[5], n[6], n[7], n[8]);
    let [c1, c2, c3] = x.dummies;
    let f = 0.05 * x.age + 0.8 * x.sex + 0.03 * n1 * n1 + 0.3 / (n2 * n2) - 0.1 * n7
        + 0.6 * n4 / n2
        + n1 / n8
        - 0.9 * n6.tanh() / n9
        + 0.09 * c1 / x.sex
        + 0.03 * c2 / x.sex
        + 0.3 * c3 / x.sex;
    f.is_finite().then_some(f)
}

/// Inverse-CDF Weibull draw: `t = ((-ln u) / (λ·exp(risk)))^(1/k)`.
pub fn weibull_time(u: f64, risk: f64, k: f64, lambda: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidParameter(format!("u must lie in (0, 1), got {u}")));
    }
    if !(k > 0.0 && lambda > 0.0) {
        return Err(Error::InvalidParameter(
            "Weibull shape and scale must be positive".into(),
        ));
    }
    Ok(((-u.ln()) / (lambda * risk.exp())).powf(1.0 / k))
}

/// Expected censored fraction when `c ~ U[0, τ]`: mean of `min(t, τ) / τ`.
pub fn expected_censoring(event_times: &[f64], tau: f64) -> f64 {
    event_times.iter().map(|&t| t.min(tau) / tau).sum::<f64>() / event_times.len() as f64
}

/// Upper bound `τ` of a uniform censoring distribution that censors a
/// `target` fraction of `event_times` in expectation. Bisection over
/// `ln τ ∈ [ln min t, ln(10·max t)]`.
pub fn calibrate_tau(event_times: &[f64], target: f64) -> Result<f64> {
    if event_times.is_empty() {
        return Err(Error::InvalidParameter("no event times to calibrate".into()));
    }
    if event_times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::InvalidParameter(
            "event times must be finite and positive".into(),
        ));
    }
    if !(target >= MIN_CENSORING_TARGET && target < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "censoring target {target} is unreachable (must lie in [{MIN_CENSORING_TARGET}, 1))"
        )));
    }
    let t_max = event_times.iter().copied().fold(0.0, f64::max);
    let mut hi = (10.0 * t_max).min(f64::MAX);
    if expected_censoring(event_times, hi) > target {
        return Err(Error::InvalidParameter(format!(
            "censoring target {target} is unreachable with tau <= {hi}"
        )));
    }
    // Times can span many orders of magnitude, so bisect on ln τ. Below the
    // smallest time every subject is censored in expectation.
    let t_min = event_times.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi_ln) = (t_min.ln(), hi.ln());
    for _ in 0..TAU_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi_ln);
        if mid <= lo || mid >= hi_ln {
            break;
        }
        if expected_censoring(event_times, mid.exp()) > target {
            lo = mid;
        } else {
            hi_ln = mid;
        }
    }
    hi = hi_ln.exp();
    Ok(hi)
}

/// Generated train/test pair plus the quantities used to make it.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthReplicate {
    pub train: SurvivalDataset,
    pub test: SurvivalDataset,
    pub coefficient_scale: f64,
    pub tau: f64,
    /// Risk `scale · f(x)` of each test subject.
    pub test_risk: Vec<f64>,
}

pub fn feature_specs() -> Vec<FeatureSpec> {
    FEATURE_NAMES
        .iter()
        .map(|&name| match name {
            "sex" => FeatureSpec::categorical(name, ["1", "2"]),
            "group" => FeatureSpec::categorical(name, ["1", "2", "3"]),
            _ => FeatureSpec::continuous(name),
        })
        .collect()
}

fn draw_covariates(rng: &mut ChaCha8Rng) -> Covariates {
    let age = rng.gen_range(18.0..=89.0);
    let sex = if rng.gen_bool(0.5) { 2.0 } else { 1.0 };
    let mut dummies = [0.0; 3];
    dummies[rng.gen_range(0..3usize)] = 1.0;
    let mut numeric = [0.0; 10];
    for (v, mu) in numeric.iter_mut().zip(NORMAL_MEANS) {
        let z: f64 = rng.sample(StandardNormal);
        *v = mu + z;
    }
    Covariates {
        age,
        sex,
        dummies,
        numeric,
    }
}

struct Subject {
    x: Covariates,
    risk: f64,
    time: f64,
}

fn draw_subject(rng: &mut ChaCha8Rng, scale: f64, cfg: &SynthConfig) -> Subject {
    loop {
        let x = draw_covariates(rng);
        let u: f64 = rng.gen();
        let Some(f) = nonlinear_risk(&x) else { continue };
        let risk = scale * f;
        match weibull_time(u, risk, cfg.weibull_k, cfg.weibull_lambda) {
            Ok(t) if t.is_finite() && t > 0.0 => return Subject { x, risk, time: t },
            _ => continue,
        }
    }
}

fn to_dataset(subjects: &[Subject], time: Vec<f64>, event: Vec<bool>) -> Result<SurvivalDataset> {
    let mut x = Array2::zeros((subjects.len(), FEATURE_NAMES.len()));
    for (r, s) in subjects.iter().enumerate() {
        let mut row = x.row_mut(r);
        row[0] = s.x.age;
        row[1] = s.x.sex - 1.0;
        row[2] = s.x.dummies.iter().position(|&d| d == 1.0).unwrap_or(0) as f64;
        for k in 0..10 {
            row[3 + k] = s.x.numeric[k];
        }
    }
    SurvivalDataset::new(x, time, event, feature_specs())
}

pub fn generate_replicate(cfg: &SynthConfig) -> Result<SynthReplicate> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scale = match cfg.coeff_scale {
        CoeffScale::Fixed(s) => s,
        CoeffScale::Random => rng.gen_range(-1.0..=1.0),
    };

    let train: Vec<Subject> = (0..cfg.n_train)
        .map(|_| draw_subject(&mut rng, scale, cfg))
        .collect();
    let event_times: Vec<f64> = train.iter().map(|s| s.time).collect();
    let (tau, times, events) = if cfg.target_censoring == 0.0 {
        (f64::INFINITY, event_times, vec![true; cfg.n_train])
    } else {
        let tau = calibrate_tau(&event_times, cfg.target_censoring)?;
        let mut times = Vec::with_capacity(cfg.n_train);
        let mut events = Vec::with_capacity(cfg.n_train);
        for &t in &event_times {
            let c = loop {
                let c = rng.gen_range(0.0..tau);
                if c > 0.0 {
                    break c;
                }
            };
            times.push(t.min(c));
            events.push(t <= c);
        }
        (tau, times, events)
    };
    let train_ds = to_dataset(&train, times, events)?;

    let test: Vec<Subject> = (0..cfg.n_test)
        .map(|_| draw_subject(&mut rng, scale, cfg))
        .collect();
    let test_risk = test.iter().map(|s| s.risk).collect();
    let test_times = test.iter().map(|s| s.time).collect();
    let test_ds = to_dataset(&test, test_times, vec![true; cfg.n_test])?;

    Ok(SynthReplicate {
        train: train_ds,
        test: test_ds,
        coefficient_scale: scale,
        tau,
        test_risk,
    })
}

/// Train and test datasets for one replicate.
pub fn generate(cfg: &SynthConfig) -> Result<(SurvivalDataset, SurvivalDataset)> {
    let r = generate_replicate(cfg)?;
    Ok((r.train, r.test))
}
