//! Split-conformal quantiles and robust prediction-set calibration.
//!
//! Quantiles are inf-CDF order statistics of the empirical measure: the
//! level-`β` quantile of `n` scores is the `⌈nβ⌉`-th smallest value, and
//! `+∞` when `⌈nβ⌉ > n`. No interpolation is ever applied.

use serde::{Deserialize, Serialize};

use crate::divergence::{check_rho, corrected_level, eval_g, eval_g_inverse, DivergenceSpec};
use crate::error::{check_open_probability, check_probability, invalid, Result};

/// `⌈x⌉` for a nonnegative rank expression, snapping values within a
/// relative `1e-12` of an integer onto that integer first.
///
/// Levels such as `(1 + 1/n)(1 − α)` pick up a few ulps of error, and a
/// plain `ceil` would then jump a whole order statistic.
pub fn ceil_rank(x: f64) -> usize {
    if !(x > 0.0) {
        return 0;
    }
    if !x.is_finite() {
        return usize::MAX;
    }
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-12 * x.max(1.0) {
        nearest as usize
    } else {
        x.ceil() as usize
    }
}

/// Validation scores sorted ascending; the empirical distribution `P̂_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalScores {
    values: Vec<f64>,
}

impl EmpiricalScores {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return invalid("score set must be nonempty");
        }
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return invalid(format!("score {i} is NaN"));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Right-continuous empirical CDF: the fraction of scores `≤ t`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.count_at_most(t) as f64 / self.len() as f64
    }

    pub fn count_at_most(&self, t: f64) -> usize {
        self.values.partition_point(|&v| v <= t)
    }

    /// The `k`-th smallest score, 1-indexed; `+∞` past the end.
    pub fn order_statistic(&self, k: usize) -> f64 {
        match k {
            0 => self.values[0],
            k if k > self.values.len() => f64::INFINITY,
            k => self.values[k - 1],
        }
    }
}

/// Smallest `s` with `P̂_n(S ≤ s) ≥ β`, i.e. the `⌈nβ⌉`-th order statistic.
pub fn empirical_quantile(scores: &EmpiricalScores, beta: f64) -> Result<f64> {
    if !(beta > 0.0) || beta.is_nan() {
        return invalid(format!("quantile level must be positive, got {beta}"));
    }
    let rank = ceil_rank(scores.len() as f64 * beta).max(1);
    Ok(scores.order_statistic(rank))
}

/// Level used by standard split conformal: `(1 + 1/n)(1 − α)`.
pub fn split_conformal_level(n: usize, alpha: f64) -> f64 {
    (n as f64 + 1.0) * (1.0 - alpha) / n as f64
}

/// Standard split-conformal threshold, `+∞` when the inflated level exceeds 1.
pub fn standard_split_threshold(scores: &EmpiricalScores, alpha: f64) -> Result<f64> {
    check_open_probability("alpha", alpha)?;
    empirical_quantile(scores, split_conformal_level(scores.len(), alpha))
}

/// A calibrated threshold and the level it was read off at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    #[serde(with = "extended_f64")]
    pub threshold_q: f64,
    pub rho: f64,
    pub alpha: f64,
    pub effective_level: f64,
    pub corrected: bool,
    pub divergence_name: String,
    pub n: usize,
}

impl CalibrationResult {
    /// Membership in `{y : S(x, y) ≤ q}`.
    pub fn contains(&self, score: f64) -> bool {
        score <= self.threshold_q
    }

    /// True when the threshold is the `+∞` sentinel (the set is all of `Y`).
    pub fn is_vacuous(&self) -> bool {
        self.threshold_q == f64::INFINITY
    }
}

/// Standard split conformal packaged as a [`CalibrationResult`] with `ρ = 0`.
pub fn standard_split_calibration(scores: &EmpiricalScores, alpha: f64) -> Result<CalibrationResult> {
    let threshold_q = standard_split_threshold(scores, alpha)?;
    Ok(CalibrationResult {
        threshold_q,
        rho: 0.0,
        alpha,
        effective_level: split_conformal_level(scores.len(), alpha),
        corrected: false,
        divergence_name: "none".to_string(),
        n: scores.len(),
    })
}

/// Robust threshold: the empirical quantile at `g⁻¹_{f,ρ}(1 − α)`, or at
/// `g⁻¹_{f,ρ}(1 − α_n)` with the finite-sample corrected level when
/// `corrected` is set.
pub fn robust_threshold(
    div: &DivergenceSpec,
    scores: &EmpiricalScores,
    rho: f64,
    alpha: f64,
    corrected: bool,
) -> Result<CalibrationResult> {
    check_rho(rho)?;
    check_open_probability("alpha", alpha)?;
    let target = if corrected {
        corrected_level(div, rho, alpha, scores.len())?
    } else {
        alpha
    };
    let effective_level = eval_g_inverse(div, rho, 1.0 - target)?;
    let threshold_q = if effective_level > 0.0 {
        empirical_quantile(scores, effective_level)?
    } else {
        scores.min()
    };
    Ok(CalibrationResult {
        threshold_q,
        rho,
        alpha,
        effective_level,
        corrected,
        divergence_name: div.name().to_string(),
        n: scores.len(),
    })
}

pub fn prediction_set_contains(result: &CalibrationResult, score: f64) -> bool {
    result.contains(score)
}

/// Fraction of test scores inside the calibrated set.
pub fn evaluate_coverage(result: &CalibrationResult, test_scores: &EmpiricalScores) -> f64 {
    test_scores.cdf(result.threshold_q)
}

/// Conditional coverage lower bound `g_{f,ρ⋆}(F₀(Quantileᵂᶜ_{f,ρ}(1 − α; P̂_n)))`
/// given the population CDF `F₀` (known only in simulation).
pub fn conditional_coverage_bound(
    div: &DivergenceSpec,
    rho: f64,
    alpha: f64,
    scores: &EmpiricalScores,
    f0_cdf: impl Fn(f64) -> f64,
    rho_star: f64,
) -> Result<f64> {
    let result = robust_threshold(div, scores, rho, alpha, false)?;
    let at_threshold = f0_cdf(result.threshold_q);
    check_probability("F0(threshold)", at_threshold)?;
    eval_g(div, rho_star, at_threshold)
}

/// Serializes non-finite thresholds as the strings `"inf"` / `"-inf"`.
pub mod extended_f64 {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, s: S) -> Result<S::Ok, S::Error> {
        if value.is_finite() {
            s.serialize_f64(*value)
        } else if *value > 0.0 {
            s.serialize_str("inf")
        } else if *value < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(D::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}
