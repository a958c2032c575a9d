//! Squared-hinge ranking objective in the representer parameterization.
//!
//! With scores `f = Kβ`,
//!
//! ```text
//! R(β) = ½ βᵀKβ + (γ/2) Σ_{(i,j) ∈ P, f_i < f_j + 1} (1 - (f_i - f_j))²
//! ```
//!
//! The fast path evaluates the pair sum through per-sample support counts
//! ([`crate::counter`]), so no pair list is built. The `naive_*` functions sum
//! over an explicit [`PairList`]; with the full comparable set they are the
//! reference implementation, with the reduced set they are the baseline
//! solver's objective.

use ndarray::Array2;

use crate::counter::{SupportSet, SurvivalCounts};
use crate::error::{Error, Result};
use crate::linalg::{matvec, CompensatedSum};
use crate::pairs::PairList;

/// Gram matrix, outcomes and the trade-off `γ` for one training problem.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveContext<'a> {
    k: &'a Array2<f64>,
    y: &'a [f64],
    delta: &'a [bool],
    gamma: f64,
}

impl<'a> ObjectiveContext<'a> {
    pub fn new(k: &'a Array2<f64>, y: &'a [f64], delta: &'a [bool], gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be positive and finite, got {gamma}"
            )));
        }
        let ctx = ObjectiveContext { k, y, delta, gamma };
        ctx.check_shapes()?;
        Ok(ctx)
    }

    /// The regularizer `½βᵀKβ` alone (γ = 0). Used to test the optimizer on
    /// a plain quadratic.
    pub fn without_penalty(k: &'a Array2<f64>, y: &'a [f64], delta: &'a [bool]) -> Result<Self> {
        let ctx = ObjectiveContext {
            k,
            y,
            delta,
            gamma: 0.0,
        };
        ctx.check_shapes()?;
        Ok(ctx)
    }

    fn check_shapes(&self) -> Result<()> {
        let n = self.y.len();
        if self.k.nrows() != n || self.k.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "Gram matrix size",
                expected: n,
                actual: self.k.nrows(),
            });
        }
        if self.delta.len() != n {
            return Err(Error::DimensionMismatch {
                what: "event indicator length",
                expected: n,
                actual: self.delta.len(),
            });
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kernel(&self) -> &'a Array2<f64> {
        self.k
    }

    pub fn time(&self) -> &'a [f64] {
        self.y
    }

    pub fn event(&self) -> &'a [bool] {
        self.delta
    }

    fn check_vec(&self, v: &[f64], what: &'static str) -> Result<()> {
        if v.len() != self.n() {
            return Err(Error::DimensionMismatch {
                what,
                expected: self.n(),
                actual: v.len(),
            });
        }
        Ok(())
    }

    /// Objective, gradient and the support structure at `beta`.
    pub fn evaluate(&self, beta: &[f64]) -> Result<Evaluation<'a>> {
        self.check_vec(beta, "coefficient length")?;
        let f = matvec(self.k, beta);
        Ok(self.evaluate_at_scores(beta, f))
    }

    /// Like [`ObjectiveContext::evaluate`] when `f = Kβ` is already known.
    pub(crate) fn evaluate_at_scores(&self, beta: &[f64], f: Vec<f64>) -> Evaluation<'a> {
        let support = SupportSet::new(self.y, self.delta, &f);
        let counts = support.counts(&f);
        let objective = self.objective_from(beta, &f, &counts);
        let loss_gradient: Vec<f64> = penalty_weights(&f, &counts)
            .into_iter()
            .map(|w| self.gamma * w)
            .collect();
        let mut gradient = f.clone();
        if self.gamma != 0.0 {
            let kw = matvec(self.k, &loss_gradient);
            for (g, kwi) in gradient.iter_mut().zip(&kw) {
                *g += kwi;
            }
        }
        Evaluation {
            ctx: *self,
            f,
            objective,
            gradient,
            loss_gradient,
            support,
            support_pairs: counts.support_pairs(),
        }
    }

    /// Objective only, at scores `f = Kβ`. Cheaper than a full evaluation
    /// when `f` is known (no matrix-vector product).
    pub(crate) fn objective_at_scores(&self, beta: &[f64], f: &[f64]) -> f64 {
        let counts = SupportSet::new(self.y, self.delta, f).counts(f);
        self.objective_from(beta, f, &counts)
    }

    fn objective_from(&self, beta: &[f64], f: &[f64], c: &SurvivalCounts) -> f64 {
        let mut reg = CompensatedSum::default();
        for (b, fi) in beta.iter().zip(f) {
            reg.add(b * fi);
        }
        if self.gamma == 0.0 {
            return 0.5 * reg.value();
        }
        // m + Σ f_i((l⁺+l⁻) f_i − (σ⁺+σ⁻)) − 2 Σ f_i (l⁻ − l⁺), σ taken at v = f
        let mut quad = CompensatedSum::default();
        let mut lin = CompensatedSum::default();
        for i in 0..f.len() {
            let l = (c.l_plus[i] + c.l_minus[i]) as f64;
            quad.add(l * f[i] * f[i]);
            quad.add(-f[i] * (c.sigma_plus[i] + c.sigma_minus[i]));
            lin.add(f[i] * (c.l_minus[i] as f64 - c.l_plus[i] as f64));
        }
        let penalty = (c.support_pairs() as f64 + quad.value() - 2.0 * lin.value()).max(0.0);
        0.5 * reg.value() + 0.5 * self.gamma * penalty
    }
}

/// `w_i = (l⁺+l⁻) f_i − (σ⁺+σ⁻) − (l⁻ − l⁺)`: derivative of the halved pair
/// penalty with respect to the scores.
fn penalty_weights(f: &[f64], c: &SurvivalCounts) -> Vec<f64> {
    (0..f.len())
        .map(|i| {
            let l = (c.l_plus[i] + c.l_minus[i]) as f64;
            l * f[i]
                - (c.sigma_plus[i] + c.sigma_minus[i])
                - (c.l_minus[i] as f64 - c.l_plus[i] as f64)
        })
        .collect()
}

/// Objective state at one coefficient vector.
#[derive(Debug, Clone)]
pub struct Evaluation<'a> {
    ctx: ObjectiveContext<'a>,
    /// Scores `Kβ`.
    pub f: Vec<f64>,
    pub objective: f64,
    pub gradient: Vec<f64>,
    /// `γw`, the penalty gradient with respect to the scores, so that the
    /// gradient is `K(β + γw)`.
    pub loss_gradient: Vec<f64>,
    /// Number of support pairs `m_β`.
    pub support_pairs: u64,
    support: SupportSet,
}

impl Evaluation<'_> {
    /// Generalized Hessian-vector product at this point:
    /// `Kv + γK[(l⁺+l⁻)(Kv) − (σ⁺+σ⁻)]`, with the sums taken over `Kv`.
    pub fn hessvec(&self, v: &[f64]) -> Vec<f64> {
        let kv = matvec(self.ctx.k, v);
        self.hessvec_with_kv(kv)
    }

    pub(crate) fn hessvec_with_kv(&self, mut kv: Vec<f64>) -> Vec<f64> {
        if self.ctx.gamma == 0.0 {
            return kv;
        }
        let kz = matvec(self.ctx.k, &self.loss_curvature(&kv));
        for (a, b) in kv.iter_mut().zip(&kz) {
            *a += b;
        }
        kv
    }

    /// Penalty Hessian with respect to the scores applied to `u`:
    /// `γ[(l⁺+l⁻)u − (σ⁺+σ⁻)]` with the sums taken over `u`.
    pub fn loss_curvature(&self, u: &[f64]) -> Vec<f64> {
        let gamma = self.ctx.gamma;
        if gamma == 0.0 {
            return vec![0.0; u.len()];
        }
        let c = self.support.counts(u);
        (0..u.len())
            .map(|i| {
                let l = (c.l_plus[i] + c.l_minus[i]) as f64;
                gamma * (l * u[i] - (c.sigma_plus[i] + c.sigma_minus[i]))
            })
            .collect()
    }

    pub fn support_counts(&self, v: &[f64]) -> SurvivalCounts {
        self.support.counts(v)
    }
}

pub fn objective(ctx: &ObjectiveContext<'_>, beta: &[f64]) -> Result<f64> {
    ctx.check_vec(beta, "coefficient length")?;
    let f = matvec(ctx.k, beta);
    Ok(ctx.objective_at_scores(beta, &f))
}

pub fn gradient(ctx: &ObjectiveContext<'_>, beta: &[f64]) -> Result<Vec<f64>> {
    Ok(ctx.evaluate(beta)?.gradient)
}

pub fn hessvec(ctx: &ObjectiveContext<'_>, beta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    ctx.check_vec(v, "direction length")?;
    Ok(ctx.evaluate(beta)?.hessvec(v))
}

// ---------------------------------------------------------------------------
// Direct summation over an explicit pair list

fn check_naive(k: &Array2<f64>, pairs: &PairList, beta: &[f64]) -> Result<()> {
    let n = beta.len();
    if k.nrows() != n || k.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "Gram matrix size",
            expected: n,
            actual: k.nrows(),
        });
    }
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= n || j >= n) {
        return Err(Error::Validation(format!(
            "pair ({i}, {j}) out of range for {n} samples"
        )));
    }
    Ok(())
}

/// Margin residuals `1 − (f_i − f_j)` of the support pairs, in list order.
fn support_residuals<'p>(
    pairs: &'p PairList,
    f: &'p [f64],
) -> impl Iterator<Item = (usize, usize, f64)> + 'p {
    pairs
        .iter()
        .filter(move |&&(i, j)| f[i] < f[j] + 1.0)
        .map(move |&(i, j)| (i, j, 1.0 - (f[i] - f[j])))
}

pub fn naive_objective(k: &Array2<f64>, pairs: &PairList, beta: &[f64], gamma: f64) -> Result<f64> {
    check_naive(k, pairs, beta)?;
    let f = matvec(k, beta);
    Ok(naive_objective_at_scores(pairs, beta, &f, gamma))
}

pub(crate) fn naive_objective_at_scores(
    pairs: &PairList,
    beta: &[f64],
    f: &[f64],
    gamma: f64,
) -> f64 {
    let mut reg = CompensatedSum::default();
    for (b, fi) in beta.iter().zip(f) {
        reg.add(b * fi);
    }
    let mut penalty = CompensatedSum::default();
    for (_, _, r) in support_residuals(pairs, f) {
        penalty.add(r * r);
    }
    0.5 * reg.value() + 0.5 * gamma * penalty.value()
}

pub fn naive_gradient(
    k: &Array2<f64>,
    pairs: &PairList,
    beta: &[f64],
    gamma: f64,
) -> Result<Vec<f64>> {
    check_naive(k, pairs, beta)?;
    let f = matvec(k, beta);
    let mut w = vec![0.0; beta.len()];
    for (i, j, r) in support_residuals(pairs, &f) {
        w[i] -= r;
        w[j] += r;
    }
    let kw = matvec(k, &w);
    Ok(f.iter().zip(&kw).map(|(a, b)| a + gamma * b).collect())
}

pub fn naive_hessvec(
    k: &Array2<f64>,
    pairs: &PairList,
    beta: &[f64],
    gamma: f64,
    v: &[f64],
) -> Result<Vec<f64>> {
    check_naive(k, pairs, beta)?;
    if v.len() != beta.len() {
        return Err(Error::DimensionMismatch {
            what: "direction length",
            expected: beta.len(),
            actual: v.len(),
        });
    }
    let f = matvec(k, beta);
    let kv = matvec(k, v);
    let mut z = vec![0.0; beta.len()];
    for (i, j, _) in support_residuals(pairs, &f) {
        let d = kv[i] - kv[j];
        z[i] += d;
        z[j] -= d;
    }
    let kz = matvec(k, &z);
    Ok(kv.iter().zip(&kz).map(|(a, b)| a + gamma * b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairs::comparable_pairs;
    use ndarray::array;

    fn three() -> (Array2<f64>, Vec<f64>, Vec<bool>) {
        let k = array![[2.0, 0.5, 0.1], [0.5, 1.5, 0.3], [0.1, 0.3, 1.0]];
        (k, vec![1.0, 2.0, 3.0], vec![true, false, true])
    }

    #[test]
    fn objective_at_zero() {
        let (k, y, d) = three();
        let ctx = ObjectiveContext::new(&k, &y, &d, 1.0).unwrap();
        assert_eq!(objective(&ctx, &[0.0; 3]).unwrap(), 1.0);
        let pairs = comparable_pairs(&y, &d).unwrap();
        assert_eq!(naive_objective(&k, &pairs, &[0.0; 3], 1.0).unwrap(), 1.0);
    }

    #[test]
    fn gradient_at_zero() {
        let (k, y, d) = three();
        let ctx = ObjectiveContext::new(&k, &y, &d, 1.0).unwrap();
        let g = gradient(&ctx, &[0.0; 3]).unwrap();
        let expected = matvec(&k, &[2.0, -1.0, -1.0]);
        for (a, b) in g.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn single_pair_and_empty_list() {
        let k = array![[1.0, 0.2], [0.2, 1.0]];
        let pairs = PairList { pairs: vec![(1, 0)] };
        assert_eq!(naive_objective(&k, &pairs, &[0.0, 0.0], 0.3).unwrap(), 0.15);
        let beta = [0.4, -1.1];
        let quad = 0.5 * beta.iter().zip(matvec(&k, &beta)).map(|(b, f)| b * f).sum::<f64>();
        let empty = naive_objective(&k, &PairList::default(), &beta, 5.0).unwrap();
        assert!((empty - quad).abs() < 1e-15);
    }

    #[test]
    fn tiny_gamma_leaves_the_quadratic() {
        let (k, y, d) = three();
        let beta = [0.3, -0.2, 0.9];
        let quad = 0.5 * beta.iter().zip(matvec(&k, &beta)).map(|(b, f)| b * f).sum::<f64>();
        let ctx = ObjectiveContext::new(&k, &y, &d, 1e-300).unwrap();
        assert!((objective(&ctx, &beta).unwrap() - quad).abs() < 1e-15);
        let g = gradient(&ctx, &beta).unwrap();
        let kb = matvec(&k, &beta);
        for (a, b) in g.iter().zip(&kb) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn hessvec_zero_direction() {
        let (k, y, d) = three();
        let ctx = ObjectiveContext::new(&k, &y, &d, 2.0).unwrap();
        assert_eq!(hessvec(&ctx, &[0.1, 0.2, 0.3], &[0.0; 3]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (k, y, d) = three();
        assert!(ObjectiveContext::new(&k, &y, &d, 0.0).is_err());
        assert!(ObjectiveContext::new(&k, &y[..2], &d[..2], 1.0).is_err());
        let ctx = ObjectiveContext::new(&k, &y, &d, 1.0).unwrap();
        assert!(objective(&ctx, &[0.0; 2]).is_err());
        assert!(hessvec(&ctx, &[0.0; 3], &[0.0; 4]).is_err());
        let bad = PairList { pairs: vec![(5, 0)] };
        assert!(naive_objective(&k, &bad, &[0.0; 3], 1.0).is_err());
    }

    #[test]
    fn fast_matches_naive_on_small_instance() {
        let (k, y, d) = three();
        let pairs = comparable_pairs(&y, &d).unwrap();
        let beta = [0.7, -0.4, 0.2];
        let v = [1.0, 2.0, -0.5];
        let ctx = ObjectiveContext::new(&k, &y, &d, 1.5).unwrap();
        let e = ctx.evaluate(&beta).unwrap();
        assert!((e.objective - naive_objective(&k, &pairs, &beta, 1.5).unwrap()).abs() < 1e-14);
        for (a, b) in e.gradient.iter().zip(naive_gradient(&k, &pairs, &beta, 1.5).unwrap()) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in e.hessvec(&v).iter().zip(naive_hessvec(&k, &pairs, &beta, 1.5, &v).unwrap()) {
            assert!((a - b).abs() < 1e-14);
        }
    }
}
