//! Truncated Newton minimization.
//!
//! Each outer iteration solves `H d = -g` approximately with conjugate
//! gradients, using only Hessian-vector products, then backtracks along `d`
//! until the Armijo condition holds. Scores along the search line are
//! `f + t·Kd`, so a backtracking step costs one counting sweep and no
//! matrix-vector product.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, matvec, norm2, norm_inf};
use crate::objective::{naive_objective_at_scores, Evaluation, ObjectiveContext};
use crate::pairs::PairList;

/// Inner CG stopping rule, as a bound on `‖r‖₂ / ‖g‖₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CgForcing {
    /// `min(0.5, sqrt(‖g‖∞))`: loose far from the optimum, tight near it.
    SqrtGradient,
    Fixed(f64),
}

impl CgForcing {
    fn tolerance(self, grad_inf: f64) -> f64 {
        match self {
            CgForcing::SqrtGradient => grad_inf.sqrt().min(0.5),
            CgForcing::Fixed(t) => t,
        }
    }
}

/// Preconditioner of the inner CG solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    /// Plain CG on `H = K + K·A·K`.
    None,
    /// CG preconditioned by `K` itself. The gradient is `K(β + γw)` and
    /// `K⁻¹H = I + A·K`, so the preconditioned quantities need no inverse
    /// and each iteration still costs two products with `K`. Much better
    /// conditioned than `H` when `K` has a fast-decaying spectrum.
    #[default]
    Kernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    pub max_newton: usize,
    /// Stop when `‖g‖∞ ≤ grad_tol · max(1, ‖g₀‖∞)`.
    pub grad_tol: f64,
    /// `None` means the problem dimension.
    pub max_cg: Option<usize>,
    pub cg_forcing: CgForcing,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    pub preconditioner: Preconditioner,
    /// Print one line per Newton iteration to stderr.
    pub verbose: bool,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            max_newton: 200,
            grad_tol: 1e-5,
            max_cg: None,
            cg_forcing: CgForcing::SqrtGradient,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 30,
            preconditioner: Preconditioner::Kernel,
            verbose: false,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_owned()));
        if self.max_newton == 0 {
            return bad("max_newton must be positive");
        }
        if !(self.grad_tol > 0.0) {
            return bad("grad_tol must be positive");
        }
        if self.max_cg == Some(0) {
            return bad("max_cg must be positive");
        }
        if let CgForcing::Fixed(t) = self.cg_forcing {
            if !(t > 0.0) {
                return bad("fixed CG forcing tolerance must be positive");
            }
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad("armijo_c must lie in (0, 1)");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor must lie in (0, 1)");
        }
        if self.max_backtracks == 0 {
            return bad("max_backtracks must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTol,
    MaxNewton,
    LineSearchFailure,
}

impl Termination {
    pub fn converged(self) -> bool {
        self == Termination::GradientTol
    }
}

/// One row of the optimizer trace. Iteration 0 is the starting point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub cg_iterations: usize,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerReport {
    pub iterations: Vec<IterationRecord>,
    pub termination: Termination,
}

impl OptimizerReport {
    pub fn final_objective(&self) -> f64 {
        self.iterations.last().map_or(f64::NAN, |r| r.objective)
    }

    pub fn final_grad_norm(&self) -> f64 {
        self.iterations.last().map_or(f64::NAN, |r| r.grad_norm)
    }

    pub fn newton_iterations(&self) -> usize {
        self.iterations.len().saturating_sub(1)
    }
}

/// Result of an inner conjugate-gradient solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CgStep {
    pub step: Vec<f64>,
    pub iterations: usize,
}

/// Approximately solves `H d = -g`, stopping once `‖r‖₂ ≤ rel_tol·‖g‖₂` or
/// after `max_iter` iterations. On non-positive curvature the current
/// iterate is returned, or `-g` if that happens on the first iteration.
pub fn cg_solve<F>(mut apply_h: F, g: &[f64], rel_tol: f64, max_iter: usize) -> CgStep
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = g.len();
    let mut x = vec![0.0; n];
    let g_norm = norm2(g);
    if g_norm == 0.0 {
        return CgStep {
            step: x,
            iterations: 0,
        };
    }
    let target = rel_tol * g_norm;
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for k in 0..max_iter {
        let hp = apply_h(&p);
        let curvature = dot(&p, &hp);
        if curvature <= 1e-14 * dot(&p, &p) {
            if k == 0 {
                x = g.iter().map(|v| -v).collect();
            }
            return CgStep {
                step: x,
                iterations: k + 1,
            };
        }
        let alpha = rr / curvature;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &hp, &mut r);
        let rr_next = dot(&r, &r);
        if rr_next.sqrt() <= target {
            return CgStep {
                step: x,
                iterations: k + 1,
            };
        }
        let beta = rr_next / rr;
        rr = rr_next;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    CgStep {
        step: x,
        iterations: max_iter,
    }
}

/// Preconditioned CG for `H d = -g`. `apply` maps `p` to `(Hp, P⁻¹Hp)` and
/// `z0 = -P⁻¹g`; the preconditioner is only ever used through these.
/// Stopping and curvature rules match [`cg_solve`], on the unpreconditioned
/// residual.
pub fn pcg_solve<F>(mut apply: F, g: &[f64], z0: Vec<f64>, rel_tol: f64, max_iter: usize) -> CgStep
where
    F: FnMut(&[f64]) -> (Vec<f64>, Vec<f64>),
{
    let n = g.len();
    let mut x = vec![0.0; n];
    let g_norm = norm2(g);
    if g_norm == 0.0 {
        return CgStep {
            step: x,
            iterations: 0,
        };
    }
    let target = rel_tol * g_norm;
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut z = z0;
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for k in 0..max_iter {
        let (hp, mhp) = apply(&p);
        let curvature = dot(&p, &hp);
        if curvature <= 1e-14 * dot(&p, &p) || !(rz > 0.0) {
            if k == 0 {
                x = g.iter().map(|v| -v).collect();
            }
            return CgStep {
                step: x,
                iterations: k + 1,
            };
        }
        let alpha = rz / curvature;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &hp, &mut r);
        axpy(-alpha, &mhp, &mut z);
        if norm2(&r) <= target {
            return CgStep {
                step: x,
                iterations: k + 1,
            };
        }
        let rz_next = dot(&r, &z);
        if !(rz_next > 0.0) {
            return CgStep {
                step: x,
                iterations: k + 1,
            };
        }
        let beta = rz_next / rz;
        rz = rz_next;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    CgStep {
        step: x,
        iterations: max_iter,
    }
}

/// A kernel ranking objective the Newton loop can drive.
pub trait RankingObjective {
    type Point: NewtonPoint;

    fn kernel(&self) -> &Array2<f64>;

    /// Whether the objective has any pair term at all.
    fn has_pairs(&self) -> bool;

    /// Full state at `beta`, given scores `f = Kβ`.
    fn point(&self, beta: &[f64], f: Vec<f64>) -> Self::Point;

    /// Objective value at `beta` with scores `f = Kβ`.
    fn value_at(&self, beta: &[f64], f: &[f64]) -> f64;
}

pub trait NewtonPoint {
    /// `Kβ` at this point.
    fn scores(&self) -> &[f64];
    fn objective(&self) -> f64;
    fn gradient(&self) -> &[f64];
    /// Penalty gradient with respect to the scores; the full gradient is
    /// `K(β + loss_gradient)`.
    fn loss_gradient(&self) -> &[f64];
    /// Penalty Hessian with respect to the scores, applied to `u`.
    fn loss_curvature(&self, u: &[f64]) -> Vec<f64>;
    fn hessvec(&self, v: &[f64]) -> Vec<f64>;
}

impl<'a> RankingObjective for ObjectiveContext<'a> {
    type Point = Evaluation<'a>;

    fn kernel(&self) -> &Array2<f64> {
        ObjectiveContext::kernel(self)
    }

    fn has_pairs(&self) -> bool {
        let (y, d) = (self.time(), self.event());
        let min_event = y
            .iter()
            .zip(d)
            .filter(|(_, &e)| e)
            .map(|(&t, _)| t)
            .fold(f64::INFINITY, f64::min);
        y.iter().any(|&t| t > min_event)
    }

    fn point(&self, beta: &[f64], f: Vec<f64>) -> Evaluation<'a> {
        self.evaluate_at_scores(beta, f)
    }

    fn value_at(&self, beta: &[f64], f: &[f64]) -> f64 {
        self.objective_at_scores(beta, f)
    }
}

impl NewtonPoint for Evaluation<'_> {
    fn scores(&self) -> &[f64] {
        &self.f
    }

    fn objective(&self) -> f64 {
        self.objective
    }

    fn gradient(&self) -> &[f64] {
        &self.gradient
    }

    fn loss_gradient(&self) -> &[f64] {
        &self.loss_gradient
    }

    fn loss_curvature(&self, u: &[f64]) -> Vec<f64> {
        Evaluation::loss_curvature(self, u)
    }

    fn hessvec(&self, v: &[f64]) -> Vec<f64> {
        Evaluation::hessvec(self, v)
    }
}

/// Squared-hinge objective summed directly over an explicit pair list.
#[derive(Debug, Clone, Copy)]
pub struct PairListObjective<'a> {
    pub k: &'a Array2<f64>,
    pub pairs: &'a PairList,
    pub gamma: f64,
}

#[derive(Debug, Clone)]
pub struct PairListPoint<'a> {
    obj: PairListObjective<'a>,
    f: Vec<f64>,
    objective: f64,
    gradient: Vec<f64>,
    loss_gradient: Vec<f64>,
}

impl<'a> RankingObjective for PairListObjective<'a> {
    type Point = PairListPoint<'a>;

    fn kernel(&self) -> &Array2<f64> {
        self.k
    }

    fn has_pairs(&self) -> bool {
        !self.pairs.is_empty()
    }

    fn point(&self, beta: &[f64], f: Vec<f64>) -> PairListPoint<'a> {
        let objective = naive_objective_at_scores(self.pairs, beta, &f, self.gamma);
        let mut w = vec![0.0; f.len()];
        for &(i, j) in self.pairs.iter() {
            if f[i] < f[j] + 1.0 {
                let r = self.gamma * (1.0 - (f[i] - f[j]));
                w[i] -= r;
                w[j] += r;
            }
        }
        let kw = matvec(self.k, &w);
        let gradient = f.iter().zip(&kw).map(|(a, b)| a + b).collect();
        PairListPoint {
            obj: *self,
            f,
            objective,
            gradient,
            loss_gradient: w,
        }
    }

    fn value_at(&self, beta: &[f64], f: &[f64]) -> f64 {
        naive_objective_at_scores(self.pairs, beta, f, self.gamma)
    }
}

impl NewtonPoint for PairListPoint<'_> {
    fn scores(&self) -> &[f64] {
        &self.f
    }

    fn objective(&self) -> f64 {
        self.objective
    }

    fn gradient(&self) -> &[f64] {
        &self.gradient
    }

    fn loss_gradient(&self) -> &[f64] {
        &self.loss_gradient
    }

    fn loss_curvature(&self, u: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; u.len()];
        for &(i, j) in self.obj.pairs.iter() {
            if self.f[i] < self.f[j] + 1.0 {
                let d = self.obj.gamma * (u[i] - u[j]);
                z[i] += d;
                z[j] -= d;
            }
        }
        z
    }

    fn hessvec(&self, v: &[f64]) -> Vec<f64> {
        let kv = matvec(self.obj.k, v);
        let kz = matvec(self.obj.k, &self.loss_curvature(&kv));
        kv.iter().zip(&kz).map(|(a, b)| a + b).collect()
    }
}

fn check_finite(point: &impl NewtonPoint, iteration: usize) -> Result<()> {
    if !point.objective().is_finite() {
        return Err(Error::Numerical {
            iteration,
            message: format!("objective is {}", point.objective()),
        });
    }
    if point.gradient().iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical {
            iteration,
            message: "gradient has non-finite entries".into(),
        });
    }
    Ok(())
}

/// Minimizes `obj` from `beta0`. Returns the last (and lowest-objective)
/// iterate with a trace of the run.
pub fn minimize<O: RankingObjective>(
    obj: &O,
    beta0: &[f64],
    opts: &OptimizerOptions,
) -> Result<(Vec<f64>, OptimizerReport)> {
    opts.validate()?;
    let k = obj.kernel();
    let n = k.nrows();
    if beta0.len() != n {
        return Err(Error::DimensionMismatch {
            what: "initial coefficient length",
            expected: n,
            actual: beta0.len(),
        });
    }
    if !obj.has_pairs() {
        return Err(Error::NoComparablePairs);
    }
    let max_cg = opts.max_cg.unwrap_or(n).max(1);

    let mut beta = beta0.to_vec();
    let mut point = obj.point(&beta, matvec(k, &beta));
    check_finite(&point, 0)?;
    let g0 = norm_inf(point.gradient());
    let tol = opts.grad_tol * g0.max(1.0);
    let mut records = vec![IterationRecord {
        iteration: 0,
        objective: point.objective(),
        grad_norm: g0,
        cg_iterations: 0,
        step: 0.0,
    }];
    if opts.verbose {
        eprintln!("iter {:>4}  objective {:.10e}  |g| {:.3e}", 0, point.objective(), g0);
    }

    let mut iteration = 0;
    let termination = loop {
        let g_norm = norm_inf(point.gradient());
        if g_norm <= tol {
            break Termination::GradientTol;
        }
        if iteration == opts.max_newton {
            break Termination::MaxNewton;
        }
        iteration += 1;

        let g = point.gradient();
        let rel_tol = opts.cg_forcing.tolerance(g_norm);
        let cg = match opts.preconditioner {
            Preconditioner::None => cg_solve(|v| point.hessvec(v), g, rel_tol, max_cg),
            Preconditioner::Kernel => {
                let z0 = beta
                    .iter()
                    .zip(point.loss_gradient())
                    .map(|(b, w)| -(b + w))
                    .collect();
                let apply = |p: &[f64]| {
                    let kp = matvec(k, p);
                    let c = point.loss_curvature(&kp);
                    let kc = matvec(k, &c);
                    let hp = kp.iter().zip(&kc).map(|(a, b)| a + b).collect();
                    let mp = p.iter().zip(&c).map(|(a, b)| a + b).collect();
                    (hp, mp)
                };
                pcg_solve(apply, g, z0, rel_tol, max_cg)
            }
        };
        let mut d = cg.step;
        let mut slope = dot(g, &d);
        if !(slope < 0.0) {
            d = g.iter().map(|v| -v).collect();
            slope = -dot(g, g);
        }

        let kd = matvec(k, &d);
        let current = point.objective();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let f_trial: Vec<f64> = point
                .scores()
                .iter()
                .zip(&kd)
                .map(|(f, kdi)| f + t * kdi)
                .collect();
            let beta_trial: Vec<f64> = beta.iter().zip(&d).map(|(b, di)| b + t * di).collect();
            let value = obj.value_at(&beta_trial, &f_trial);
            if value.is_finite() && value <= current + opts.armijo_c * t * slope {
                accepted = Some((beta_trial, f_trial, value));
                break;
            }
            t *= opts.backtrack_factor;
        }
        let Some((beta_next, f_next, value)) = accepted else {
            break Termination::LineSearchFailure;
        };
        debug_assert!(value <= current + opts.armijo_c * t * slope);

        beta = beta_next;
        point = obj.point(&beta, f_next);
        check_finite(&point, iteration)?;
        let record = IterationRecord {
            iteration,
            objective: point.objective(),
            grad_norm: norm_inf(point.gradient()),
            cg_iterations: cg.iterations,
            step: t,
        };
        if opts.verbose {
            eprintln!(
                "iter {:>4}  objective {:.10e}  |g| {:.3e}  cg {:>4}  step {:.3e}",
                record.iteration, record.objective, record.grad_norm, record.cg_iterations, t
            );
        }
        records.push(record);
    };

    Ok((
        beta,
        OptimizerReport {
            iterations: records,
            termination,
        },
    ))
}
