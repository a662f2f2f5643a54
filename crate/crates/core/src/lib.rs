//! Distributionally robust predictive inference.
//!
//! Given held-out nonconformity scores, this crate computes prediction-set
//! thresholds that keep their coverage for every test distribution inside an
//! f-divergence ball around the validation distribution, and estimates the
//! ball radius from plausible covariate shifts.
//!
//! * [`divergence`]: the two-point transform `g_{f,ρ}`, its inverse, radius
//!   search and finite-sample coverage bounds.
//! * [`conformal`]: order-statistic quantiles, split conformal and robust
//!   calibration.
//! * [`worst_coverage`]: worst coverage over slabs, halfspaces and balls.
//! * [`shift`]: radius estimation from sampled or fitted shift directions.
//! * [`simulation`]: synthetic shift studies and coverage reports.
//!
//! ```
//! use drci_core::{robust_threshold, DivergenceSpec, EmpiricalScores};
//!
//! let scores = EmpiricalScores::new((1..=100).map(f64::from).collect()).unwrap();
//! let plain = robust_threshold(&DivergenceSpec::chi_square(), &scores, 0.0, 0.1, false).unwrap();
//! let robust = robust_threshold(&DivergenceSpec::chi_square(), &scores, 0.05, 0.1, false).unwrap();
//! assert_eq!(plain.threshold_q, 90.0);
//! assert!(robust.threshold_q > plain.threshold_q);
//! ```

// `!(x > 0.0)` style checks are how NaN gets rejected throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conformal;
pub mod divergence;
pub mod error;
pub mod shift;
pub mod simulation;
pub mod worst_coverage;

pub use conformal::{
    empirical_quantile, evaluate_coverage, prediction_set_contains, robust_threshold,
    standard_split_calibration, standard_split_threshold, CalibrationResult, EmpiricalScores,
};
pub use divergence::{
    corollary1_constant, corrected_level, coverage_lower_bound, eval_g, eval_g_inverse,
    rho_for_threshold, worst_case_cdf, worst_case_quantile, DivergenceKind, DivergenceSpec,
    RhoSolution, RhoStatus,
};
pub use error::{Error, Result};
pub use shift::{
    algorithm1_worst_subset, algorithm2_regression_direction, classification_direction,
    sample_unit_directions, Alg1Config, Alg2Config, ShiftEstimate,
};
pub use worst_coverage::{
    brute_force_worst_coverage, worst_coverage, worst_quantile_for_direction, Region, RegionFamily,
    RegionQuery, TabularDataset, WorstCoverageResult,
};
pub use simulation::{
    exponential_tilt_resample, generate_hetero, realized_divergence, run_coverage_experiment,
    top_principal_direction, CoverageReport, ExperimentSpec, HeteroModel, Method, MethodSettings,
    MethodSpec, NoiseScale, Population, RadiusSource, ScoreKind, SizeRule, TiltSpec,
};
