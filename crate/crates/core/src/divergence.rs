//! Scalar f-divergence machinery.
//!
//! Everything here reduces worst-case quantiles over an f-divergence ball to
//! a one-dimensional Bernoulli problem. For a set of base mass `β`, the
//! two-point objective
//!
//! ```text
//! h(β, z) = β f(z/β) + (1 − β) f((1 − z)/(1 − β))
//! ```
//!
//! is the smallest divergence any distribution can have from the base one
//! while moving the set's mass from `β` to `z`. `g(β)` is the smallest
//! reachable `z` inside a ball of radius `ρ`, and `g⁻¹(τ)` the largest base
//! mass that can be squeezed down to `τ`. Robust thresholds are then plain
//! quantiles at level `g⁻¹(1 − α)`.
//!
//! All searches are bisections carried to adjacent floating point values,
//! returning the feasible endpoint so `inf`/`sup` semantics hold on return.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::conformal::{ceil_rank, empirical_quantile, EmpiricalScores};
use crate::error::{check_open_probability, check_probability, invalid, Error, Result};

/// Upper end of the radius search in [`rho_for_threshold`].
pub const RHO_CAP: f64 = 1e6;

/// Relative tolerance on `ρ` in [`rho_for_threshold`].
pub const RHO_REL_TOL: f64 = 1e-9;

/// Default step of the left finite difference in [`corollary1_constant`].
pub const DERIVATIVE_STEP: f64 = 1e-6;

const MAX_BISECTION_STEPS: usize = 2_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DivergenceKind {
    ChiSquare,
    KullbackLeibler,
    Custom,
}

type Generator = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A closed convex, 1-coercive generator `f` with `f(1) = 0`.
///
/// `ChiSquare` uses `f(t) = ½(t − 1)²`, whose two-point problem has the
/// closed form `g(β) = (β − sqrt(2ρβ(1 − β)))₊`. `KullbackLeibler` uses
/// `f(t) = t log t` with `f(0) = 0`. Arguments below zero evaluate to `+∞`.
#[derive(Clone)]
pub struct DivergenceSpec {
    kind: DivergenceKind,
    generator: Option<Generator>,
    name: String,
}

impl fmt::Debug for DivergenceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DivergenceSpec")
            .field("kind", &self.kind)
            .field("name", &self.name)
            .finish()
    }
}

impl DivergenceSpec {
    pub fn chi_square() -> Self {
        Self {
            kind: DivergenceKind::ChiSquare,
            generator: None,
            name: "chi2".to_string(),
        }
    }

    pub fn kullback_leibler() -> Self {
        Self {
            kind: DivergenceKind::KullbackLeibler,
            generator: None,
            name: "kl".to_string(),
        }
    }

    /// Wraps a user generator after probing it for `f(1) = 0`, midpoint
    /// convexity on `{0.05, 0.1, …, 20}` and growth of `f(t)/t`.
    pub fn custom<F>(name: impl Into<String>, generator: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let spec = Self {
            kind: DivergenceKind::Custom,
            generator: Some(Arc::new(generator)),
            name: name.into(),
        };
        spec.probe()?;
        Ok(spec)
    }

    /// Looks up a built-in generator by its short name (`chi2` or `kl`).
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "chi2" | "chisq" | "chi-square" => Ok(Self::chi_square()),
            "kl" => Ok(Self::kullback_leibler()),
            other => invalid(format!("unknown divergence `{other}` (expected chi2 or kl)")),
        }
    }

    pub fn kind(&self) -> DivergenceKind {
        self.kind
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Evaluates the generator `f(t)`.
    pub fn eval(&self, t: f64) -> f64 {
        if t < 0.0 {
            return f64::INFINITY;
        }
        match self.kind {
            DivergenceKind::ChiSquare => 0.5 * (t - 1.0) * (t - 1.0),
            DivergenceKind::KullbackLeibler => {
                if t == 0.0 {
                    0.0
                } else {
                    t * t.ln()
                }
            }
            DivergenceKind::Custom => (self.generator.as_ref().expect("custom generator"))(t),
        }
    }

    /// Two-point objective `β f(z/β) + (1 − β) f((1 − z)/(1 − β))`.
    ///
    /// Uses `0·f(0/0) = 0` and `0·f(c/0) = +∞` for `c > 0`.
    pub fn two_point(&self, beta: f64, z: f64) -> f64 {
        self.perspective(beta, z) + self.perspective(1.0 - beta, 1.0 - z)
    }

    // weight · f(mass / weight) with the boundary conventions above.
    fn perspective(&self, weight: f64, mass: f64) -> f64 {
        if weight <= 0.0 {
            if mass <= 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            // Built-ins work from u = t − 1, which stays exact near t = 1 where
            // f(t) itself cancels badly. KL uses t log t − t + 1: the linear term
            // integrates to zero, so divergences are unchanged.
            let u = (mass - weight) / weight;
            match self.kind {
                DivergenceKind::ChiSquare => weight * 0.5 * u * u,
                DivergenceKind::KullbackLeibler if u < -1.0 => f64::INFINITY,
                DivergenceKind::KullbackLeibler if u == -1.0 => weight,
                DivergenceKind::KullbackLeibler => weight * ((1.0 + u) * u.ln_1p() - u),
                DivergenceKind::Custom => weight * self.eval(mass / weight),
            }
        }
    }

    fn probe(&self) -> Result<()> {
        let reject = |reason: String| {
            Err(Error::InvalidDivergence {
                name: self.name.clone(),
                reason,
            })
        };
        let at_one = self.eval(1.0);
        if !(at_one.abs() <= 1e-12) {
            return reject(format!("f(1) = {at_one}, expected 0"));
        }
        let grid: Vec<f64> = (1..=400).map(|i| 0.05 * i as f64).collect();
        let values: Vec<f64> = grid.iter().map(|&t| self.eval(t)).collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return reject(format!("f({}) is not finite", grid[i]));
        }
        for i in 0..grid.len() {
            for j in (i + 1)..grid.len() {
                let mid = self.eval(0.5 * (grid[i] + grid[j]));
                if mid > 0.5 * (values[i] + values[j]) + 1e-9 {
                    return reject(format!(
                        "midpoint convexity fails between {} and {}",
                        grid[i], grid[j]
                    ));
                }
            }
        }
        let slope_small = self.eval(1e3) / 1e3;
        let slope_large = self.eval(1e6) / 1e6;
        // a bare `>` lets asymptotically linear generators (total variation) through
        if !(slope_large > slope_small + 0.01 * slope_small.abs()) {
            return reject("f(t)/t does not grow between t = 1e3 and t = 1e6".to_string());
        }
        Ok(())
    }
}

/// A realized value of the two-point objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPointDivergence {
    pub beta: f64,
    pub z: f64,
    pub value: f64,
}

impl TwoPointDivergence {
    pub fn new(div: &DivergenceSpec, beta: f64, z: f64) -> Result<Self> {
        check_probability("beta", beta)?;
        check_probability("z", z)?;
        Ok(Self {
            beta,
            z,
            value: div.two_point(beta, z),
        })
    }
}

/// A divergence radius paired with a miscoverage level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusLevelPair {
    pub rho: f64,
    pub alpha: f64,
}

impl RadiusLevelPair {
    pub fn new(rho: f64, alpha: f64) -> Result<Self> {
        check_rho(rho)?;
        check_open_probability("alpha", alpha)?;
        Ok(Self { rho, alpha })
    }
}

pub(crate) fn check_rho(rho: f64) -> Result<()> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return invalid(format!("rho must be a finite nonnegative number, got {rho}"));
    }
    Ok(())
}

/// Bisects a monotone predicate on `[lo, hi]` with `pred(lo) != pred(hi)`
/// until the endpoints are adjacent floats. Returns `(lo, hi)`.
fn bisect(mut lo: f64, mut hi: f64, lo_side: impl Fn(f64) -> bool) -> (f64, f64) {
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if lo_side(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

/// `g_{f,ρ}(β) = inf{z ∈ [0, 1] : h(β, z) ≤ ρ}`.
pub fn eval_g(div: &DivergenceSpec, rho: f64, beta: f64) -> Result<f64> {
    check_rho(rho)?;
    check_probability("beta", beta)?;
    // the zero-radius ball holds the base distribution alone
    if rho == 0.0 || beta == 0.0 {
        return Ok(beta);
    }
    if beta == 1.0 {
        return Ok(1.0);
    }
    if div.two_point(beta, 0.0) <= rho {
        return Ok(0.0);
    }
    // h(β, ·) decreases to 0 on [0, β]: infeasible on the left, feasible at β.
    let (_, feasible) = bisect(0.0, beta, |z| div.two_point(beta, z) > rho);
    Ok(feasible)
}

/// `g⁻¹_{f,ρ}(τ) = sup{β ∈ [τ, 1] : h(β, τ) ≤ ρ}`.
pub fn eval_g_inverse(div: &DivergenceSpec, rho: f64, tau: f64) -> Result<f64> {
    check_rho(rho)?;
    check_probability("tau", tau)?;
    if rho == 0.0 || tau == 1.0 {
        return Ok(tau);
    }
    if div.two_point(1.0, tau) <= rho {
        return Ok(1.0);
    }
    let (feasible, _) = bisect(tau, 1.0, |beta| div.two_point(beta, tau) <= rho);
    Ok(feasible)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoStatus {
    /// The supremum is finite and was bracketed.
    Interior,
    /// `q` sits at or above the largest score: every radius works, `ρ` is the cap.
    Saturated,
    /// Even the zero-radius quantile exceeds `q`; `ρ = 0` is reported.
    InfeasibleAtZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoSolution {
    pub rho: f64,
    pub status: RhoStatus,
}

impl RhoSolution {
    pub fn is_saturated(&self) -> bool {
        self.status == RhoStatus::Saturated
    }
}

/// Worst-case `(1 − α)` quantile of the empirical scores over the ball.
pub fn worst_case_quantile(
    div: &DivergenceSpec,
    rho: f64,
    alpha: f64,
    scores: &EmpiricalScores,
) -> Result<f64> {
    let level = eval_g_inverse(div, rho, 1.0 - alpha)?;
    empirical_quantile(scores, level)
}

/// Largest radius whose worst-case `(1 − α)` quantile stays at or below `q`.
pub fn rho_for_threshold(
    div: &DivergenceSpec,
    alpha: f64,
    scores: &EmpiricalScores,
    q: f64,
) -> Result<RhoSolution> {
    check_open_probability("alpha", alpha)?;
    if q.is_nan() {
        return invalid("threshold q is NaN");
    }
    if q >= scores.max() {
        return Ok(RhoSolution {
            rho: RHO_CAP,
            status: RhoStatus::Saturated,
        });
    }
    let fits = |rho: f64| -> Result<bool> { Ok(worst_case_quantile(div, rho, alpha, scores)? <= q) };
    if !fits(0.0)? {
        return Ok(RhoSolution {
            rho: 0.0,
            status: RhoStatus::InfeasibleAtZero,
        });
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while fits(hi)? {
        lo = hi;
        if hi >= RHO_CAP {
            return Ok(RhoSolution {
                rho: RHO_CAP,
                status: RhoStatus::Saturated,
            });
        }
        hi = (2.0 * hi).min(RHO_CAP);
    }
    for _ in 0..MAX_BISECTION_STEPS {
        if hi - lo <= RHO_REL_TOL * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if fits(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(RhoSolution {
        rho: lo,
        status: RhoStatus::Interior,
    })
}

/// `g_{f,ρ}(F̂_n(t))`, the smallest CDF value at `t` over the ball.
pub fn worst_case_cdf(div: &DivergenceSpec, rho: f64, scores: &EmpiricalScores, t: f64) -> Result<f64> {
    eval_g(div, rho, scores.cdf(t))
}

/// Marginal coverage lower bound `g_{f,ρ⋆}(⌈n g⁻¹_{f,ρ}(1 − α)⌉ / (n + 1))`
/// for sets calibrated at radius `ρ` when the true shift is `ρ⋆`.
pub fn coverage_lower_bound(
    div: &DivergenceSpec,
    rho: f64,
    rho_star: f64,
    alpha: f64,
    n: usize,
) -> Result<f64> {
    check_rho(rho_star)?;
    check_open_probability("alpha", alpha)?;
    if n == 0 {
        return invalid("n must be at least 1");
    }
    let level = eval_g_inverse(div, rho, 1.0 - alpha)?;
    let rank = ceil_rank(n as f64 * level).min(n);
    eval_g(div, rho_star, rank as f64 / (n as f64 + 1.0))
}

/// Finite-sample corrected level `α_n = 1 − g((1 + 1/n) g⁻¹(1 − α))`.
///
/// The argument of `g` is clamped to 1.
pub fn corrected_level(div: &DivergenceSpec, rho: f64, alpha: f64, n: usize) -> Result<f64> {
    check_open_probability("alpha", alpha)?;
    if n == 0 {
        return invalid("n must be at least 1");
    }
    let level = eval_g_inverse(div, rho, 1.0 - alpha)?;
    let inflated = ((1.0 + 1.0 / n as f64) * level).min(1.0);
    Ok(1.0 - eval_g(div, rho, inflated)?)
}

/// `c = β̂ g′(β̂)` with `β̂ = g⁻¹(1 − α)` and `g′` a left difference.
pub fn corollary1_constant(div: &DivergenceSpec, rho: f64, alpha: f64) -> Result<f64> {
    corollary1_constant_with_step(div, rho, alpha, DERIVATIVE_STEP)
}

pub fn corollary1_constant_with_step(
    div: &DivergenceSpec,
    rho: f64,
    alpha: f64,
    step: f64,
) -> Result<f64> {
    check_rho(rho)?;
    if rho <= 0.0 {
        return invalid("rho must be positive");
    }
    check_open_probability("alpha", alpha)?;
    if !(step > 0.0) {
        return invalid(format!("finite-difference step must be positive, got {step}"));
    }
    let beta = eval_g_inverse(div, rho, 1.0 - alpha)?;
    if beta - step < 0.0 {
        return Err(Error::DegenerateDerivative(format!(
            "g⁻¹(1 − α) = {beta} is closer to 0 than the step {step}"
        )));
    }
    let slope = (eval_g(div, rho, beta)? - eval_g(div, rho, beta - step)?) / step;
    Ok(beta * slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn chi2_closed(rho: f64, beta: f64) -> f64 {
        (beta - (2.0 * rho * beta * (1.0 - beta)).sqrt()).max(0.0)
    }

    // Scans z on a fine grid; the smallest feasible grid point brackets g.
    fn grid_g(div: &DivergenceSpec, rho: f64, beta: f64, step: f64) -> f64 {
        let steps = (beta / step).ceil() as usize;
        (0..=steps)
            .map(|i| (i as f64 * step).min(beta))
            .find(|&z| div.two_point(beta, z) <= rho)
            .unwrap_or(beta)
    }

    #[test]
    fn builtin_generators_pass_probe() {
        DivergenceSpec::chi_square().probe().unwrap();
        DivergenceSpec::kullback_leibler().probe().unwrap();
    }

    #[test]
    fn custom_rejects_bad_generators() {
        assert!(DivergenceSpec::custom("shifted", |t: f64| (t - 1.0).powi(2) + 1.0).is_err());
        assert!(DivergenceSpec::custom("concave", |t: f64| -(t - 1.0).powi(2)).is_err());
        // total variation is convex but not 1-coercive
        assert!(DivergenceSpec::custom("tv", |t: f64| 0.5 * (t - 1.0).abs()).is_err());
        assert!(DivergenceSpec::custom("chi2-full", |t: f64| (t - 1.0).powi(2)).is_ok());
    }

    #[test]
    fn kl_is_zero_at_origin() {
        assert_eq!(DivergenceSpec::kullback_leibler().eval(0.0), 0.0);
        assert_eq!(DivergenceSpec::kullback_leibler().eval(-1.0), f64::INFINITY);
    }

    #[test]
    fn two_point_boundary_conventions() {
        let div = DivergenceSpec::chi_square();
        assert_eq!(div.two_point(0.0, 0.0), div.eval(1.0));
        assert_eq!(div.two_point(0.0, 0.3), f64::INFINITY);
        assert_eq!(div.two_point(1.0, 0.7), f64::INFINITY);
        assert_eq!(div.two_point(1.0, 1.0), 0.0);
        let tp = TwoPointDivergence::new(&div, 0.5, 0.5).unwrap();
        assert_eq!(tp.value, 0.0);
    }

    #[test]
    fn g_matches_chi2_closed_form_example() {
        let div = DivergenceSpec::chi_square();
        let g = eval_g(&div, 0.5, 0.95).unwrap();
        assert_abs_diff_eq!(g, 0.95 - (2.0f64 * 0.5 * 0.95 * 0.05).sqrt(), epsilon = 1e-10);
        assert_abs_diff_eq!(g, 0.732057, epsilon = 5e-6);
        // grid-search cross check
        assert_abs_diff_eq!(grid_g(&div, 0.5, 0.95, 1e-7), g, epsilon = 2e-7);
    }

    #[test]
    fn g_endpoints() {
        for div in [DivergenceSpec::chi_square(), DivergenceSpec::kullback_leibler()] {
            for rho in [0.0, 0.1, 3.0] {
                assert_eq!(eval_g(&div, rho, 0.0).unwrap(), 0.0);
                assert_eq!(eval_g(&div, rho, 1.0).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn g_kl_matches_grid_oracle() {
        let div = DivergenceSpec::kullback_leibler();
        let g = eval_g(&div, 0.1, 0.9).unwrap();
        assert_abs_diff_eq!(grid_g(&div, 0.1, 0.9, 1e-7), g, epsilon = 1e-6);
    }

    #[test]
    fn g_rejects_bad_arguments() {
        let div = DivergenceSpec::chi_square();
        assert!(eval_g(&div, -0.1, 0.5).is_err());
        assert!(eval_g(&div, 0.1, 1.5).is_err());
        assert!(eval_g_inverse(&div, 0.1, -0.5).is_err());
        assert!(eval_g_inverse(&div, f64::NAN, 0.5).is_err());
    }

    #[test]
    fn g_inverse_examples() {
        let chi2 = DivergenceSpec::chi_square();
        assert_eq!(eval_g_inverse(&chi2, 0.0, 0.95).unwrap(), 0.95);
        let tau = eval_g(&chi2, 0.5, 0.95).unwrap();
        assert_abs_diff_eq!(eval_g_inverse(&chi2, 0.5, tau).unwrap(), 0.95, epsilon = 1e-9);
        assert_abs_diff_eq!(eval_g_inverse(&chi2, 0.5, 0.732057).unwrap(), 0.95, epsilon = 1e-6);
        for div in [chi2, DivergenceSpec::kullback_leibler()] {
            assert_eq!(eval_g_inverse(&div, 0.3, 1.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn g_inverse_returns_feasible_point() {
        let div = DivergenceSpec::kullback_leibler();
        for tau in [0.0, 0.2, 0.5, 0.9, 0.99] {
            let beta = eval_g_inverse(&div, 0.2, tau).unwrap();
            assert!(div.two_point(beta, tau) <= 0.2);
        }
    }

    #[test]
    fn worst_case_cdf_examples() {
        let div = DivergenceSpec::chi_square();
        let scores = EmpiricalScores::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(worst_case_cdf(&div, 0.125, &scores, 2.0).unwrap(), 0.25, epsilon = 1e-12);
        assert_eq!(worst_case_cdf(&div, 0.4, &scores, 0.5).unwrap(), 0.0);
        for t in [0.0, 1.0, 2.5, 4.0, 7.0] {
            assert_eq!(worst_case_cdf(&div, 0.0, &scores, t).unwrap(), scores.cdf(t));
        }
    }

    #[test]
    fn coverage_bound_reduces_to_split_conformal() {
        let div = DivergenceSpec::chi_square();
        assert_abs_diff_eq!(coverage_lower_bound(&div, 0.0, 0.0, 0.05, 99).unwrap(), 0.95, epsilon = 1e-12);
        let level = eval_g_inverse(&div, 0.2, 0.9).unwrap();
        let expected = ceil_rank(57.0 * level) as f64 / 58.0;
        assert_abs_diff_eq!(coverage_lower_bound(&div, 0.2, 0.0, 0.1, 57).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn coverage_bound_respects_corollary_one() {
        let div = DivergenceSpec::chi_square();
        let n = 1000;
        let c = corollary1_constant(&div, 0.1, 0.1).unwrap();
        let bound = coverage_lower_bound(&div, 0.1, 0.1, 0.1, n).unwrap();
        assert!(bound >= 0.9 - c / (n as f64 + 1.0), "bound {bound}, c {c}");
    }

    #[test]
    fn corrected_level_examples() {
        let div = DivergenceSpec::chi_square();
        let a = corrected_level(&div, 0.0, 0.05, 99).unwrap();
        assert_abs_diff_eq!(a, 1.0 - (100.0 / 99.0) * 0.95, epsilon = 1e-12);
        assert_abs_diff_eq!(a, 0.040404, epsilon = 1e-6);
        let big = corrected_level(&div, 0.1, 0.05, 1_000_000_000).unwrap();
        assert_abs_diff_eq!(big, 0.05, epsilon = 1e-6);
        let small = corrected_level(&div, 0.1, 0.1, 500).unwrap();
        assert!(small < 0.1 && small > 0.0);
    }

    #[test]
    fn corollary_constant_is_step_stable() {
        let div = DivergenceSpec::chi_square();
        let c1 = corollary1_constant_with_step(&div, 0.5, 0.05, 1e-6).unwrap();
        let c2 = corollary1_constant_with_step(&div, 0.5, 0.05, 5e-7).unwrap();
        assert!(c1.is_finite() && c1 > 0.0);
        assert!(((c1 - c2) / c1).abs() < 1e-3, "{c1} vs {c2}");
    }

    #[test]
    fn corollary_constant_small_radius_limit() {
        let div = DivergenceSpec::chi_square();
        let c = corollary1_constant(&div, 1e-8, 0.05).unwrap();
        assert_abs_diff_eq!(c, 0.95, epsilon = 1e-3);
    }

    #[test]
    fn corollary_constant_composition() {
        let div = DivergenceSpec::chi_square();
        let beta = eval_g_inverse(&div, 0.125, 0.5).unwrap();
        // closed form: β − sqrt(β(1 − β)/4) = 1/2
        assert_abs_diff_eq!(chi2_closed(0.125, beta), 0.5, epsilon = 1e-9);
        let h = DERIVATIVE_STEP;
        let slope = (eval_g(&div, 0.125, beta).unwrap() - eval_g(&div, 0.125, beta - h).unwrap()) / h;
        assert_eq!(corollary1_constant(&div, 0.125, 0.5).unwrap(), beta * slope);
    }

    #[test]
    fn corollary_constant_errors() {
        let div = DivergenceSpec::chi_square();
        assert!(corollary1_constant(&div, 0.0, 0.05).is_err());
        assert!(matches!(
            corollary1_constant_with_step(&div, 0.1, 0.9, 0.5),
            Err(Error::DegenerateDerivative(_))
        ));
    }

    #[test]
    fn rho_for_threshold_examples() {
        let div = DivergenceSpec::chi_square();
        let scores = EmpiricalScores::new((1..=100).map(f64::from).collect()).unwrap();
        // plain (1 − α) quantile: no radius fits above zero
        let sol = rho_for_threshold(&div, 0.05, &scores, 95.0).unwrap();
        assert_eq!(sol.status, RhoStatus::Interior);
        assert!(sol.rho < 1e-12);
        let sat = rho_for_threshold(&div, 0.05, &scores, 100.0).unwrap();
        assert_eq!(sat, RhoSolution { rho: RHO_CAP, status: RhoStatus::Saturated });
        let infeasible = rho_for_threshold(&div, 0.05, &scores, 50.0).unwrap();
        assert_eq!(infeasible.status, RhoStatus::InfeasibleAtZero);
        assert_eq!(infeasible.rho, 0.0);
    }

    #[test]
    fn rho_for_threshold_lands_on_step() {
        let div = DivergenceSpec::chi_square();
        let scores = EmpiricalScores::new((1..=100).map(f64::from).collect()).unwrap();
        let sol = rho_for_threshold(&div, 0.05, &scores, 96.0).unwrap();
        assert_eq!(worst_case_quantile(&div, sol.rho, 0.05, &scores).unwrap(), 96.0);
        let above = sol.rho * (1.0 + 1e-6);
        assert!(worst_case_quantile(&div, above, 0.05, &scores).unwrap() > 96.0);
        // sup of {ρ : g⁻¹(0.95) ≤ 0.96} is h(0.96, 0.95)
        assert_abs_diff_eq!(sol.rho, div.two_point(0.96, 0.95), epsilon = 1e-6 * sol.rho);
    }

    #[test]
    fn zero_radius_is_the_identity_to_the_bit() {
        for div in [DivergenceSpec::chi_square(), DivergenceSpec::kullback_leibler()] {
            for i in 0..=1000 {
                let x = i as f64 / 1000.0;
                assert_eq!(eval_g(&div, 0.0, x).unwrap(), x, "{} g({x})", div.name());
                assert_eq!(eval_g_inverse(&div, 0.0, x).unwrap(), x, "{} ginv({x})", div.name());
            }
        }
    }
}
