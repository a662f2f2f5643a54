//! Synthetic shift studies: a misspecified heteroskedastic regression model,
//! exponential tilting along a principal direction, and Monte Carlo coverage
//! reports comparing split conformal with robust calibration.
//!
//! Trials are independent given their seed (`seed + trial index`) and run in
//! parallel; results are collected in trial order, so a report depends only
//! on the experiment description.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{
    ceil_rank, extended_f64, robust_threshold, standard_split_calibration, CalibrationResult,
    EmpiricalScores,
};
use crate::divergence::{DivergenceKind, DivergenceSpec};
use crate::error::{check_open_probability, invalid, Error, Result};
use crate::shift::{
    algorithm1_worst_subset, algorithm2_regression_direction, classification_direction, Alg1Config,
    Alg2Config, ShiftEstimate,
};
use crate::worst_coverage::{dot, norm, RegionFamily, TabularDataset};

/// Default number of power iterations in [`top_principal_direction`].
pub const POWER_ITERATIONS: usize = 200;

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Noise scale `h` in `Y = Xᵀθ₀ + h(v_varᵀX) ε`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScale {
    Exp,
    Softplus,
    /// `max(t, 0) + 1`.
    PositivePartPlusOne,
    /// `h ≡ 1`: homoskedastic noise.
    Constant,
}

impl NoiseScale {
    pub fn apply(self, t: f64) -> f64 {
        match self {
            Self::Exp => t.exp(),
            Self::Softplus => {
                if t > 30.0 {
                    t
                } else {
                    t.exp().ln_1p()
                }
            }
            Self::PositivePartPlusOne => t.max(0.0) + 1.0,
            Self::Constant => 1.0,
        }
    }
}

impl std::str::FromStr for NoiseScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp" => Ok(Self::Exp),
            "softplus" => Ok(Self::Softplus),
            "relu1" | "positive-part-plus-one" => Ok(Self::PositivePartPlusOne),
            "constant" | "one" => Ok(Self::Constant),
            other => invalid(format!(
                "unknown noise scale `{other}` (expected exp, softplus, relu1 or constant)"
            )),
        }
    }
}

/// Score computed from the fitted coefficients `θ_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    /// `(y − xᵀθ_t)²`
    Squared,
    /// `|y − xᵀθ_t|`
    Absolute,
}

/// Heteroskedastic linear model with a misspecified score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeteroModel {
    theta0: Vec<f64>,
    theta1: Vec<f64>,
    v_var: Vec<f64>,
    h: NoiseScale,
    misspecification_t: f64,
    score: ScoreKind,
}

impl HeteroModel {
    pub fn new(
        theta0: Vec<f64>,
        theta1: Vec<f64>,
        v_var: Vec<f64>,
        h: NoiseScale,
        misspecification_t: f64,
        score: ScoreKind,
    ) -> Result<Self> {
        let d = theta0.len();
        if d == 0 || theta1.len() != d || v_var.len() != d {
            return invalid("theta0, theta1 and v_var must share a positive dimension");
        }
        for (name, v) in [("theta0", &theta0), ("theta1", &theta1), ("v_var", &v_var)] {
            if (norm(v) - 1.0).abs() > ORTHONORMAL_TOL {
                return invalid(format!("{name} must have unit norm, got {}", norm(v)));
            }
        }
        if dot(&theta0, &theta1).abs() > ORTHONORMAL_TOL {
            return invalid("theta0 and theta1 must be orthogonal");
        }
        if !(0.0..=1.0).contains(&misspecification_t) {
            return invalid(format!("misspecification t must lie in [0, 1], got {misspecification_t}"));
        }
        let mut prev = 0.0;
        for i in 0..=200 {
            let v = h.apply(-10.0 + 0.1 * i as f64);
            if !(v > 0.0) || v < prev {
                return invalid("noise scale must be positive and nondecreasing");
            }
            prev = v;
        }
        Ok(Self { theta0, theta1, v_var, h, misspecification_t, score })
    }

    /// `θ₀ = e₁`, `θ₁ = e₂`, `v_var = e₁` in dimension `d ≥ 2`.
    pub fn standard(d: usize, h: NoiseScale, misspecification_t: f64, score: ScoreKind) -> Result<Self> {
        if d < 2 {
            return invalid("the standard model needs d ≥ 2");
        }
        let e = |k: usize| (0..d).map(|i| f64::from(u8::from(i == k))).collect::<Vec<_>>();
        Self::new(e(0), e(1), e(0), h, misspecification_t, score)
    }

    pub fn dim(&self) -> usize {
        self.theta0.len()
    }

    pub fn theta0(&self) -> &[f64] {
        &self.theta0
    }

    pub fn v_var(&self) -> &[f64] {
        &self.v_var
    }

    pub fn noise_scale(&self) -> NoiseScale {
        self.h
    }

    pub fn score_kind(&self) -> ScoreKind {
        self.score
    }

    /// `θ_t = sqrt(1 − t²) θ₀ + t θ₁`.
    pub fn theta_t(&self) -> Vec<f64> {
        let t = self.misspecification_t;
        let c = (1.0 - t * t).sqrt();
        self.theta0.iter().zip(&self.theta1).map(|(a, b)| c * a + t * b).collect()
    }
}

/// Draws `n` rows `X ~ N(shift_mean, I)` from `model` and scores them with `θ_t`.
pub fn generate_hetero(model: &HeteroModel, n: usize, shift_mean: &[f64], seed: u64) -> Result<TabularDataset> {
    let d = model.dim();
    if n == 0 {
        return invalid("n must be at least 1");
    }
    if shift_mean.len() != d {
        return invalid(format!("shift mean has dimension {}, model has {d}", shift_mean.len()));
    }
    let theta_t = model.theta_t();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n * d);
    let mut scores = Vec::with_capacity(n);
    for _ in 0..n {
        let start = features.len();
        for &m in shift_mean {
            let z: f64 = rng.sample(StandardNormal);
            features.push(m + z);
        }
        let x = &features[start..];
        let eps: f64 = rng.sample(StandardNormal);
        let y = dot(x, &model.theta0) + model.h.apply(dot(x, &model.v_var)) * eps;
        let r = y - dot(x, &theta_t);
        scores.push(match model.score {
            ScoreKind::Squared => r * r,
            ScoreKind::Absolute => r.abs(),
        });
    }
    TabularDataset::from_row_major(features, d, scores)
}

/// Exponential tilt `w(x) = exp(a·vᵀ(x − center))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltSpec {
    pub a: f64,
    direction: Vec<f64>,
    center: Vec<f64>,
}

impl TiltSpec {
    pub fn new(a: f64, direction: Vec<f64>, center: Vec<f64>) -> Result<Self> {
        if !a.is_finite() {
            return invalid("tilt strength must be finite");
        }
        if direction.len() != center.len() || direction.is_empty() {
            return invalid("tilt direction and center must share a positive dimension");
        }
        if (norm(&direction) - 1.0).abs() > ORTHONORMAL_TOL {
            return invalid("tilt direction must have unit norm");
        }
        Ok(Self { a, direction, center })
    }

    /// Tilt along the top principal component of `data`, centered at its mean.
    pub fn principal(data: &TabularDataset, a: f64) -> Result<Self> {
        let pc = top_principal_direction(data, POWER_ITERATIONS)?;
        Self::new(a, pc.direction, column_means(data))
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }
}

fn column_means(data: &TabularDataset) -> Vec<f64> {
    let mut mean = vec![0.0; data.dim()];
    for x in data.rows() {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    let n = data.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Normalized tilt probabilities, computed in log space with max-subtraction.
pub fn tilt_weights(data: &TabularDataset, tilt: &TiltSpec) -> Result<Vec<f64>> {
    if data.is_empty() {
        return invalid("dataset is empty");
    }
    if tilt.direction.len() != data.dim() {
        return invalid(format!(
            "tilt direction has dimension {}, features have {}",
            tilt.direction.len(),
            data.dim()
        ));
    }
    let offset = dot(&tilt.direction, &tilt.center);
    let logw: Vec<f64> = data.rows().map(|x| tilt.a * (dot(x, &tilt.direction) - offset)).collect();
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / total).collect())
}

/// Row indices of a size-`m` resample drawn with replacement under the tilt.
pub fn tilt_resample_indices(data: &TabularDataset, tilt: &TiltSpec, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m == 0 {
        return invalid("resample size must be at least 1");
    }
    let weights = tilt_weights(data, tilt)?;
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::Numerical(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..m).map(|_| dist.sample(&mut rng)).collect())
}

pub fn exponential_tilt_resample(data: &TabularDataset, tilt: &TiltSpec, m: usize, seed: u64) -> Result<TabularDataset> {
    Ok(data.select(&tilt_resample_indices(data, tilt, m, seed)?))
}

/// `D_f(P ‖ Uniform_n) = (1/n) Σ f(n pᵢ)` for `p` the normalized weights.
pub fn realized_divergence(weights: &[f64], div: &DivergenceSpec) -> Result<f64> {
    if weights.is_empty() {
        return invalid("weights are empty");
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return invalid("weights must be finite and nonnegative");
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return invalid("weights must have a positive sum");
    }
    let n = weights.len() as f64;
    Ok(weights.iter().map(|w| div.eval(n * w / total)).sum::<f64>() / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipalDirection {
    pub direction: Vec<f64>,
    /// Iterate change at termination was at most `1e-6`. A `false` value
    /// usually means the top two eigenvalues are nearly equal.
    pub converged: bool,
    pub final_change: f64,
}

/// Top eigenvector of the centered feature covariance by power iteration.
pub fn top_principal_direction(data: &TabularDataset, iterations: usize) -> Result<PrincipalDirection> {
    let (n, d) = (data.len(), data.dim());
    if n < 2 {
        return invalid("principal direction needs at least 2 rows");
    }
    let mean = column_means(data);
    let centered = DMatrix::from_fn(n, d, |i, j| data.row(i)[j] - mean[j]);
    let cov = centered.tr_mul(&centered) / (n - 1) as f64;
    let mut v = DVector::from_fn(d, |j, _| cov[(j, j)]);
    if v.norm() == 0.0 {
        return Err(Error::DegenerateDirection("features have zero variance".into()));
    }
    v.normalize_mut();
    let mut change = f64::INFINITY;
    for _ in 0..iterations {
        let mut next = &cov * &v;
        let len = next.norm();
        if len == 0.0 {
            break;
        }
        next /= len;
        change = (&next - &v).norm();
        v = next;
    }
    let lead = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    if lead < 0.0 {
        v = -v;
    }
    Ok(PrincipalDirection {
        direction: v.iter().copied().collect(),
        converged: change <= 1e-6,
        final_change: change,
    })
}

/// Where the robust radius comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum RadiusSource {
    Fixed(f64),
    /// Sampled directions; the per-trial seed replaces `seed`.
    Sampled(Alg1Config),
    /// Least-squares direction; the per-trial seed replaces `seed`.
    Regression(Alg2Config),
    /// Logistic median-split direction; the per-trial seed replaces `seed`.
    Classifier(Alg2Config),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Standard,
    Robust { divergence: DivergenceKind, radius: RadiusSource, corrected: bool },
}

/// A method with its report label.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub name: String,
    pub method: Method,
}

/// Method names understood by [`MethodSpec::parse`].
pub const METHOD_NAMES: [&str; 9] =
    ["sc", "chi2-fixed", "kl-fixed", "chi2-s", "kl-s", "chi2-r", "kl-r", "chi2-c", "kl-c"];

/// Shared knobs for methods built from names.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSettings {
    pub alpha: f64,
    pub rho: f64,
    pub k: usize,
    pub level_v: f64,
    pub delta: f64,
    pub family: RegionFamily,
    pub split_fraction: f64,
    pub corrected: bool,
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            rho: 0.01,
            k: 500,
            level_v: 0.05,
            delta: 1.0 / 3.0,
            family: RegionFamily::Slab,
            split_fraction: 0.5,
            corrected: false,
        }
    }
}

impl MethodSpec {
    /// `sc`, or `{chi2|kl}-{fixed|s|r|c}` for a fixed radius, sampled
    /// directions, a regression direction or a classifier direction.
    pub fn parse(name: &str, settings: &MethodSettings) -> Result<Self> {
        if name == "sc" {
            return Ok(Self { name: name.into(), method: Method::Standard });
        }
        let unknown = || {
            invalid(format!("unknown method `{name}`; valid methods: {}", METHOD_NAMES.join(", ")))
        };
        let Some((div, route)) = name.split_once('-') else {
            return unknown();
        };
        let divergence = match div {
            "chi2" => DivergenceKind::ChiSquare,
            "kl" => DivergenceKind::KullbackLeibler,
            _ => return unknown(),
        };
        let alg2 = Alg2Config {
            split_fraction: settings.split_fraction,
            delta: settings.delta,
            alpha: settings.alpha,
            ..Alg2Config::default()
        };
        let radius = match route {
            "fixed" => RadiusSource::Fixed(settings.rho),
            "s" => RadiusSource::Sampled(Alg1Config {
                k: settings.k,
                level_v: settings.level_v,
                delta: settings.delta,
                alpha: settings.alpha,
                seed: 0,
                family: settings.family,
            }),
            "r" => RadiusSource::Regression(alg2),
            "c" => RadiusSource::Classifier(alg2),
            _ => return unknown(),
        };
        Ok(Self {
            name: name.into(),
            method: Method::Robust { divergence, radius, corrected: settings.corrected },
        })
    }
}

fn builtin(kind: DivergenceKind) -> Result<DivergenceSpec> {
    match kind {
        DivergenceKind::ChiSquare => Ok(DivergenceSpec::chi_square()),
        DivergenceKind::KullbackLeibler => Ok(DivergenceSpec::kullback_leibler()),
        DivergenceKind::Custom => invalid("experiments support the built-in divergences only"),
    }
}

/// How a threshold `q` becomes a prediction-set size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeRule {
    /// Interval length `2·sqrt(q)` for squared residual scores.
    SquaredResidual,
    /// Interval length `2q` for absolute residual scores.
    AbsoluteResidual,
    /// The threshold itself.
    Threshold,
    /// Mean number of candidate labels with score `≤ q`.
    CandidateCount,
}

/// The data-generating side of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Population {
    /// Fresh validation and test draws from a heteroskedastic model.
    Hetero {
        model: HeteroModel,
        n_val: usize,
        n_test: usize,
        val_shift: Vec<f64>,
        test_shift: Vec<f64>,
    },
    /// Random calibration split of a fixed dataset; the test set is a tilted
    /// resample of the remaining rows along their top principal component.
    Tilt {
        data: TabularDataset,
        /// Per-row candidate-label scores, used by [`SizeRule::CandidateCount`].
        candidates: Option<Vec<Vec<f64>>>,
        a: f64,
        calibration_fraction: f64,
        test_size: usize,
        size_rule: SizeRule,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub population: Population,
    pub methods: Vec<MethodSpec>,
    pub alpha: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub coverage: f64,
    #[serde(with = "extended_f64")]
    pub set_size: f64,
    pub rho: f64,
    #[serde(with = "extended_f64")]
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodFailure {
    pub trial: usize,
    pub message: String,
}

/// Aggregated Monte Carlo result for one method.
///
/// Deciles are the `⌈p·m⌉`-th order statistics of the `m` trial coverages.
/// Divergences are χ² (`f(t) = ½(t − 1)²`) of the tilted test population
/// against the untilted pool: `realized_divergence` from the tilt weights,
/// `resampled_divergence` from the resample multiplicities (medians over
/// trials).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub method: String,
    pub rho_used: f64,
    pub alpha: f64,
    #[serde(with = "extended_f64")]
    pub mean_coverage: f64,
    #[serde(with = "extended_f64")]
    pub coverage_se: f64,
    pub coverage_deciles: Vec<f64>,
    #[serde(with = "extended_f64")]
    pub mean_set_size: f64,
    pub trials: usize,
    pub realized_divergence: Option<f64>,
    pub resampled_divergence: Option<f64>,
    pub failures: Vec<MethodFailure>,
    pub per_trial: Vec<TrialRecord>,
}

impl CoverageReport {
    /// Every trial failed.
    pub fn all_failed(&self) -> bool {
        self.trials == 0 && !self.failures.is_empty()
    }
}

struct TrialData {
    calibration: TabularDataset,
    test: TabularDataset,
    test_candidates: Option<Vec<Vec<f64>>>,
    size_rule: SizeRule,
    realized: Option<f64>,
    resampled: Option<f64>,
}

struct TrialOutcome {
    methods: Vec<std::result::Result<TrialRecord, String>>,
    realized: Option<f64>,
    resampled: Option<f64>,
}

/// Runs every method on every trial and aggregates one report per method.
pub fn run_coverage_experiment(spec: &ExperimentSpec) -> Result<Vec<CoverageReport>> {
    if spec.trials == 0 {
        return invalid("trials must be at least 1");
    }
    if spec.methods.is_empty() {
        return invalid("no methods given");
    }
    check_open_probability("alpha", spec.alpha)?;
    validate_population(&spec.population)?;
    let outcomes: Vec<TrialOutcome> = (0..spec.trials)
        .into_par_iter()
        .map(|trial| run_trial(spec, trial))
        .collect::<Result<_>>()?;

    let median = |vals: Vec<Option<f64>>| -> Option<f64> {
        let mut v: Vec<f64> = vals.into_iter().flatten().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(v[(v.len() - 1) / 2])
    };
    let realized = median(outcomes.iter().map(|o| o.realized).collect());
    let resampled = median(outcomes.iter().map(|o| o.resampled).collect());

    Ok(spec
        .methods
        .iter()
        .enumerate()
        .map(|(m, method)| {
            let mut per_trial = Vec::new();
            let mut failures = Vec::new();
            for (trial, outcome) in outcomes.iter().enumerate() {
                match &outcome.methods[m] {
                    Ok(rec) => per_trial.push(rec.clone()),
                    Err(message) => failures.push(MethodFailure { trial, message: message.clone() }),
                }
            }
            aggregate(&method.name, spec.alpha, per_trial, failures, realized, resampled)
        })
        .collect())
}

fn validate_population(pop: &Population) -> Result<()> {
    match pop {
        Population::Hetero { model, n_val, n_test, val_shift, test_shift } => {
            if *n_val == 0 || *n_test == 0 {
                return invalid("validation and test sizes must be at least 1");
            }
            if val_shift.len() != model.dim() || test_shift.len() != model.dim() {
                return invalid("shift means must match the model dimension");
            }
        }
        Population::Tilt { data, candidates, calibration_fraction, test_size, size_rule, .. } => {
            check_open_probability("calibration fraction", *calibration_fraction)?;
            if *test_size == 0 {
                return invalid("test size must be at least 1");
            }
            let n_cal = (data.len() as f64 * calibration_fraction).round() as usize;
            if n_cal < 1 || n_cal + 2 > data.len() {
                return invalid("calibration split leaves an empty side");
            }
            match (candidates, size_rule) {
                (Some(c), _) if c.len() != data.len() => {
                    return invalid("candidate scores must have one row per data row")
                }
                (None, SizeRule::CandidateCount) => {
                    return invalid("candidate-count set size needs per-candidate scores")
                }
                _ => {}
            }
        }
    }
    Ok(())
}

fn trial_data(pop: &Population, rng: &mut ChaCha8Rng) -> Result<TrialData> {
    match pop {
        Population::Hetero { model, n_val, n_test, val_shift, test_shift } => {
            let calibration = generate_hetero(model, *n_val, val_shift, rng.next_u64())?;
            let test = generate_hetero(model, *n_test, test_shift, rng.next_u64())?;
            let size_rule = match model.score_kind() {
                ScoreKind::Squared => SizeRule::SquaredResidual,
                ScoreKind::Absolute => SizeRule::AbsoluteResidual,
            };
            Ok(TrialData { calibration, test, test_candidates: None, size_rule, realized: None, resampled: None })
        }
        Population::Tilt { data, candidates, a, calibration_fraction, test_size, size_rule } => {
            let mut idx: Vec<usize> = (0..data.len()).collect();
            idx.shuffle(rng);
            let n_cal = (data.len() as f64 * calibration_fraction).round() as usize;
            let pool_rows = idx.split_off(n_cal);
            let pool = data.select(&pool_rows);
            let tilt = TiltSpec::principal(&pool, *a)?;
            let weights = tilt_weights(&pool, &tilt)?;
            let picks = tilt_resample_indices(&pool, &tilt, *test_size, rng.next_u64())?;
            let mut counts = vec![0.0; pool.len()];
            for &p in &picks {
                counts[p] += 1.0;
            }
            let chi2 = DivergenceSpec::chi_square();
            Ok(TrialData {
                calibration: data.select(&idx),
                test: pool.select(&picks),
                test_candidates: candidates
                    .as_ref()
                    .map(|c| picks.iter().map(|&p| c[pool_rows[p]].clone()).collect()),
                size_rule: *size_rule,
                realized: Some(realized_divergence(&weights, &chi2)?),
                resampled: Some(realized_divergence(&counts, &chi2)?),
            })
        }
    }
}

fn run_trial(spec: &ExperimentSpec, trial: usize) -> Result<TrialOutcome> {
    let seed = spec.seed.wrapping_add(trial as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = trial_data(&spec.population, &mut rng)?;
    let method_seed = rng.next_u64();
    let cal_scores = EmpiricalScores::from_slice(data.calibration.scores())?;
    let test_scores = EmpiricalScores::from_slice(data.test.scores())?;
    let methods = spec
        .methods
        .iter()
        .map(|m| {
            let calibrated = calibrate(&m.method, &data.calibration, &cal_scores, spec.alpha, method_seed)
                .map_err(|e| e.to_string())?;
            let q = calibrated.threshold_q;
            Ok(TrialRecord {
                trial,
                seed,
                coverage: test_scores.cdf(q),
                set_size: set_size(&data, q),
                rho: calibrated.rho,
                threshold: q,
            })
        })
        .collect();
    Ok(TrialOutcome { methods, realized: data.realized, resampled: data.resampled })
}

fn calibrate(
    method: &Method,
    data: &TabularDataset,
    scores: &EmpiricalScores,
    alpha: f64,
    seed: u64,
) -> Result<CalibrationResult> {
    let Method::Robust { divergence, radius, corrected } = method else {
        return standard_split_calibration(scores, alpha);
    };
    let div = builtin(*divergence)?;
    let (rho, audit_scores) = match radius {
        RadiusSource::Fixed(rho) => (*rho, None),
        RadiusSource::Sampled(cfg) => {
            let cfg = Alg1Config { seed, alpha, ..cfg.clone() };
            (algorithm1_worst_subset(data, &cfg, &div)?.rho_hat, None)
        }
        RadiusSource::Regression(cfg) | RadiusSource::Classifier(cfg) => {
            let cfg = Alg2Config { seed, alpha, ..cfg.clone() };
            let est: ShiftEstimate = if matches!(radius, RadiusSource::Regression(_)) {
                algorithm2_regression_direction(data, &cfg, &div)?
            } else {
                classification_direction(data, &cfg, &div)?
            };
            (est.rho_hat, Some(est.calibration_scores(data)?))
        }
    };
    robust_threshold(&div, audit_scores.as_ref().unwrap_or(scores), rho, alpha, *corrected)
}

fn set_size(data: &TrialData, q: f64) -> f64 {
    match data.size_rule {
        SizeRule::SquaredResidual => 2.0 * q.max(0.0).sqrt(),
        SizeRule::AbsoluteResidual => 2.0 * q.max(0.0),
        SizeRule::Threshold => q,
        SizeRule::CandidateCount => {
            let rows = data.test_candidates.as_deref().unwrap_or_default();
            let total: usize = rows.iter().map(|c| c.iter().filter(|&&s| s <= q).count()).sum();
            total as f64 / rows.len().max(1) as f64
        }
    }
}

fn aggregate(
    method: &str,
    alpha: f64,
    per_trial: Vec<TrialRecord>,
    failures: Vec<MethodFailure>,
    realized: Option<f64>,
    resampled: Option<f64>,
) -> CoverageReport {
    let m = per_trial.len();
    let mean = |f: &dyn Fn(&TrialRecord) -> f64| per_trial.iter().map(f).sum::<f64>() / m as f64;
    let (mean_coverage, coverage_se, deciles, mean_set_size, rho_used) = if m == 0 {
        (f64::NAN, f64::NAN, Vec::new(), f64::NAN, f64::NAN)
    } else {
        let mc = mean(&|r| r.coverage);
        let var = if m > 1 {
            per_trial.iter().map(|r| (r.coverage - mc).powi(2)).sum::<f64>() / (m - 1) as f64
        } else {
            0.0
        };
        let mut sorted: Vec<f64> = per_trial.iter().map(|r| r.coverage).collect();
        sorted.sort_by(f64::total_cmp);
        let deciles = (1..=9)
            .map(|p| sorted[ceil_rank(m as f64 * p as f64 / 10.0).clamp(1, m) - 1])
            .collect();
        (mc, (var / m as f64).sqrt(), deciles, mean(&|r| r.set_size), mean(&|r| r.rho))
    };
    CoverageReport {
        method: method.to_string(),
        rho_used,
        alpha,
        mean_coverage,
        coverage_se,
        coverage_deciles: deciles,
        mean_set_size,
        trials: m,
        realized_divergence: realized,
        resampled_divergence: resampled,
        failures,
        per_trial,
    }
}
