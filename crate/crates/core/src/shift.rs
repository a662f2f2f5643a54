//! Estimating the protection radius `ρ` from plausible covariate shifts.
//!
//! Two routes produce a threshold `q̂_δ`, which is then turned into the
//! smallest sufficient radius `ρ̂_δ` with [`rho_for_threshold`]:
//!
//! * sampled directions: the `(1 − level_v)` order statistic of the
//!   per-direction worst quantiles over `k` random unit directions;
//! * a fitted worst direction: regress (or classify) scores against features
//!   on one half of the sample, then audit halfspaces along the fitted
//!   direction on the other half.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{ceil_rank, EmpiricalScores};
use crate::divergence::{rho_for_threshold, DivergenceSpec, RhoStatus};
use crate::error::{check_open_probability, invalid, Error, Result};
use crate::worst_coverage::{norm, RegionFamily, RegionQuery, SortedAxis, TabularDataset};

/// Gradient steps taken by [`classification_direction`].
pub const LOGISTIC_ITERATIONS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alg1Config {
    pub k: usize,
    pub level_v: f64,
    pub delta: f64,
    pub alpha: f64,
    pub seed: u64,
    pub family: RegionFamily,
}

impl Alg1Config {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return invalid("number of directions k must be at least 1");
        }
        check_open_probability("level_v", self.level_v)?;
        check_open_probability("delta", self.delta)?;
        check_open_probability("alpha", self.alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alg2Config {
    /// Fraction of rows used to fit the direction.
    pub split_fraction: f64,
    pub delta: f64,
    pub alpha: f64,
    /// Ridge strength relative to `trace(XᵀX) / d`.
    pub ridge: f64,
    pub seed: u64,
}

impl Default for Alg2Config {
    fn default() -> Self {
        Self {
            split_fraction: 0.5,
            delta: 1.0 / 3.0,
            alpha: 0.05,
            ridge: 1e-8,
            seed: 0,
        }
    }
}

impl Alg2Config {
    pub fn validate(&self) -> Result<()> {
        check_open_probability("split_fraction", self.split_fraction)?;
        check_open_probability("delta", self.delta)?;
        check_open_probability("alpha", self.alpha)?;
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return invalid(format!("ridge must be finite and nonnegative, got {}", self.ridge));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftEstimate {
    pub q_hat: f64,
    pub rho_hat: f64,
    pub rho_status: RhoStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_direction_quantiles: Option<Vec<f64>>,
    /// Rows whose scores define `P̂` for `ρ̂`; `None` means every row.
    #[serde(skip)]
    pub calibration_rows: Option<Vec<usize>>,
}

impl ShiftEstimate {
    /// The score distribution `ρ̂` refers to.
    pub fn calibration_scores(&self, data: &TabularDataset) -> Result<EmpiricalScores> {
        match &self.calibration_rows {
            None => EmpiricalScores::from_slice(data.scores()),
            Some(rows) => EmpiricalScores::new(rows.iter().map(|&i| data.scores()[i]).collect()),
        }
    }
}

/// `k` i.i.d. directions uniform on the unit sphere of `R^d`.
pub fn sample_unit_directions(d: usize, k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if d == 0 || k == 0 {
        return invalid("dimension and direction count must be at least 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..k)
        .map(|_| loop {
            let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let n = norm(&v);
            if n > 0.0 {
                break v.into_iter().map(|x| x / n).collect();
            }
        })
        .collect())
}

/// Worst-subset validation over `cfg.k` directions drawn with `cfg.seed`.
pub fn algorithm1_worst_subset(
    data: &TabularDataset,
    cfg: &Alg1Config,
    div: &DivergenceSpec,
) -> Result<ShiftEstimate> {
    cfg.validate()?;
    let directions = sample_unit_directions(data.dim(), cfg.k, cfg.seed)?;
    algorithm1_with_directions(data, &directions, cfg, div)
}

/// Worst-subset validation over caller-supplied directions (or ball centers).
pub fn algorithm1_with_directions(
    data: &TabularDataset,
    directions: &[Vec<f64>],
    cfg: &Alg1Config,
    div: &DivergenceSpec,
) -> Result<ShiftEstimate> {
    cfg.validate()?;
    if directions.is_empty() {
        return invalid("no directions supplied");
    }
    let quantiles: Vec<f64> = directions
        .par_iter()
        .map(|v| {
            let query = RegionQuery::normalized(cfg.family, v.clone(), cfg.delta)?;
            SortedAxis::new(data, &query)?.worst_quantile(cfg.alpha)
        })
        .collect::<Result<_>>()?;
    let q_hat = direction_quantile(&quantiles, cfg.level_v);
    let scores = EmpiricalScores::from_slice(data.scores())?;
    let rho = rho_for_threshold(div, cfg.alpha, &scores, q_hat)?;
    Ok(ShiftEstimate {
        q_hat,
        rho_hat: rho.rho,
        rho_status: rho.status,
        direction: None,
        per_direction_quantiles: Some(quantiles),
        calibration_rows: None,
    })
}

/// Smallest `q` such that at least a `1 − level_v` fraction of the
/// per-direction worst quantiles are `≤ q`.
pub fn direction_quantile(quantiles: &[f64], level_v: f64) -> f64 {
    let mut sorted = quantiles.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len();
    let rank = ceil_rank(k as f64 * (1.0 - level_v)).clamp(1, k);
    sorted[rank - 1]
}

/// Deterministic split into (fit rows, audit rows).
fn split_rows(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n1 = ((n as f64 * fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let audit = idx.split_off(n1);
    (idx, audit)
}

/// Least-squares `argmin_v Σ (sᵢ − vᵀxᵢ)²` via ridge-regularized normal
/// equations, with ridge `relative_ridge · trace(XᵀX) / d`. Unnormalized.
pub fn least_squares_direction(data: &TabularDataset, rows: &[usize], relative_ridge: f64) -> Result<Vec<f64>> {
    let d = data.dim();
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut moment = DVector::<f64>::zeros(d);
    let mut score_sq = 0.0;
    for &i in rows {
        let x = DVector::from_column_slice(data.row(i));
        let s = data.scores()[i];
        gram.ger(1.0, &x, &x, 1.0);
        moment.axpy(s, &x, 1.0);
        score_sq += s * s;
    }
    let trace = gram.trace();
    if trace <= 0.0 {
        return Err(Error::DegenerateDirection("features are identically zero".to_string()));
    }
    if moment.norm() <= 1e-12 * (trace * score_sq).sqrt() {
        return Err(Error::DegenerateDirection(
            "scores are uncorrelated with the features (Σ sᵢxᵢ ≈ 0)".to_string(),
        ));
    }
    let ridge = relative_ridge * trace / d as f64;
    for j in 0..d {
        gram[(j, j)] += ridge;
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("normal equations are singular; increase the ridge".to_string()))?;
    let v = chol.solve(&moment);
    Ok(v.iter().copied().collect())
}

/// Linear separator between the upper and lower halves of the scores,
/// fit by gradient descent on L2-regularized logistic loss with an
/// intercept. Returns the (unnormalized) feature weights.
pub fn logistic_direction(data: &TabularDataset, rows: &[usize], l2: f64) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return invalid("no rows to fit");
    }
    let fit_scores = EmpiricalScores::new(rows.iter().map(|&i| data.scores()[i]).collect())?;
    let median = crate::conformal::empirical_quantile(&fit_scores, 0.5)?;
    let labels: Vec<f64> = rows
        .iter()
        .map(|&i| if data.scores()[i] >= median { 1.0 } else { -1.0 })
        .collect();
    if labels.iter().all(|&y| y == labels[0]) {
        return Err(Error::DegenerateDirection(
            "scores are all equal; no upper/lower split to separate".to_string(),
        ));
    }
    let d = data.dim();
    let m = rows.len() as f64;
    // augmented design [x, 1]; smoothness of the mean loss ≤ trace(X̃ᵀX̃)/(4m) + l2
    let second_moment: f64 = rows
        .iter()
        .map(|&i| data.row(i).iter().map(|x| x * x).sum::<f64>() + 1.0)
        .sum::<f64>()
        / m;
    let step = 1.0 / (second_moment / 4.0 + l2);
    let mut w = vec![0.0; d + 1];
    let mut grad = vec![0.0; d + 1];
    for _ in 0..LOGISTIC_ITERATIONS {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (&i, &y) in rows.iter().zip(&labels) {
            let x = data.row(i);
            let margin = y * (x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[d]);
            // d/dm log(1 + e^{−m}) = −σ(−m)
            let weight = -y * sigmoid(-margin) / m;
            for (g, xj) in grad.iter_mut().zip(x) {
                *g += weight * xj;
            }
            grad[d] += weight;
        }
        for j in 0..d {
            grad[j] += l2 * w[j];
        }
        for (wj, gj) in w.iter_mut().zip(&grad) {
            *wj -= step * gj;
        }
    }
    w.truncate(d);
    Ok(w)
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn unit(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let n = norm(&v);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::DegenerateDirection("fitted direction is zero".to_string()));
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(v)
}

fn audit_direction(
    data: &TabularDataset,
    direction: Vec<f64>,
    audit_rows: Vec<usize>,
    cfg: &Alg2Config,
    div: &DivergenceSpec,
) -> Result<ShiftEstimate> {
    let holdout = data.select(&audit_rows);
    let query = RegionQuery::normalized(RegionFamily::Halfspace, direction.clone(), cfg.delta)?;
    let q_hat = SortedAxis::new(&holdout, &query)?.worst_quantile(cfg.alpha)?;
    let scores = EmpiricalScores::from_slice(holdout.scores())?;
    let rho = rho_for_threshold(div, cfg.alpha, &scores, q_hat)?;
    Ok(ShiftEstimate {
        q_hat,
        rho_hat: rho.rho,
        rho_status: rho.status,
        direction: Some(direction),
        per_direction_quantiles: None,
        calibration_rows: Some(audit_rows),
    })
}

fn checked_split(data: &TabularDataset, cfg: &Alg2Config) -> Result<(Vec<usize>, Vec<usize>)> {
    cfg.validate()?;
    if data.len() < 2 {
        return invalid("need at least two rows to split");
    }
    let (fit, audit) = split_rows(data.len(), cfg.split_fraction, cfg.seed);
    if fit.len() < data.dim() {
        return invalid(format!(
            "fitting half has {} rows, fewer than the dimension {}",
            fit.len(),
            data.dim()
        ));
    }
    Ok((fit, audit))
}

/// Worst-direction validation with a least-squares direction.
pub fn algorithm2_regression_direction(
    data: &TabularDataset,
    cfg: &Alg2Config,
    div: &DivergenceSpec,
) -> Result<ShiftEstimate> {
    let (fit, audit) = checked_split(data, cfg)?;
    let direction = unit(least_squares_direction(data, &fit, cfg.ridge)?)?;
    audit_direction(data, direction, audit, cfg, div)
}

/// Worst-direction validation with a logistic median-split separator.
pub fn classification_direction(
    data: &TabularDataset,
    cfg: &Alg2Config,
    div: &DivergenceSpec,
) -> Result<ShiftEstimate> {
    let (fit, audit) = checked_split(data, cfg)?;
    let direction = unit(logistic_direction(data, &fit, cfg.ridge)?)?;
    audit_direction(data, direction, audit, cfg, div)
}
