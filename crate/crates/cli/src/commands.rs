use std::io::Write;
use std::path::{Path, PathBuf};

use drci_core::shift::{algorithm1_worst_subset, Alg1Config, Alg2Config, ShiftEstimate};
use drci_core::simulation::{generate_hetero, MethodSettings};
use drci_core::{
    algorithm2_regression_direction, classification_direction, eval_g, eval_g_inverse, robust_threshold,
    run_coverage_experiment, sample_unit_directions, standard_split_calibration, worst_coverage,
    CalibrationResult, CoverageReport, DivergenceSpec, EmpiricalScores, ExperimentSpec, HeteroModel,
    MethodSpec, NoiseScale, Population, RegionFamily, RegionQuery, ScoreKind, SizeRule,
};
use serde_json::{Map, Value};

use crate::args::{
    AuditArgs, CalibrateArgs, Cli, Command, Experiment, Format, GfunArgs, SimulateArgs, SizeRuleArg, Strategy,
};
use crate::error::{CliError, CliResult};
use crate::format::{csv_document, json_document, sig12, to_value};
use crate::input::{load_candidates, load_dataset, load_features, load_scores, parse_list};

// Salt separating the synthetic tilt pool from the per-trial streams.
const POOL_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn run(cli: Cli) -> CliResult<()> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Gfun(a) => gfun(a, cli.format.unwrap_or(Format::Csv), out),
        Command::Calibrate(a) => calibrate(a, cli.seed, cli.format.unwrap_or(Format::Json), out),
        Command::Audit(a) => audit(a, cli.seed, cli.format.unwrap_or(Format::Csv), out),
        Command::Simulate(a) => simulate(a, cli.seed, cli.format.unwrap_or(Format::Json), out),
    }
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|()| stdout.flush())
                .map_err(|e| CliError::Output(e.to_string()))
        }
    }
}

fn require_seed(seed: Option<u64>, what: &str) -> CliResult<u64> {
    seed.ok_or_else(|| CliError::Usage(format!("{what} is stochastic and needs --seed")))
}

fn probability(name: &str, p: f64) -> CliResult<f64> {
    if p > 0.0 && p < 1.0 {
        Ok(p)
    } else {
        Err(CliError::Usage(format!("--{name} must lie in (0, 1), got {p}")))
    }
}

fn family(name: &str) -> CliResult<RegionFamily> {
    name.parse().map_err(|e: drci_core::Error| CliError::Usage(e.to_string()))
}

fn divergence(name: &str) -> CliResult<DivergenceSpec> {
    DivergenceSpec::from_name(name).map_err(|e| CliError::Usage(e.to_string()))
}

fn gfun(a: &GfunArgs, format: Format, out: Option<&Path>) -> CliResult<()> {
    let div = divergence(&a.f)?;
    if !(a.rho >= 0.0 && a.rho.is_finite()) {
        return Err(CliError::Usage(format!("--rho must be finite and nonnegative, got {}", a.rho)));
    }
    let points: Vec<f64> = match (a.beta, a.tau) {
        (Some(b), _) => vec![b],
        (_, Some(t)) => vec![t],
        _ => (0..=100).map(|i| i as f64 / 100.0).collect(),
    };
    if let Some(p) = points.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(CliError::Usage(format!("point {p} is outside [0, 1]")));
    }
    let rows = points
        .iter()
        .map(|&p| Ok([p, eval_g(&div, a.rho, p)?, eval_g_inverse(&div, a.rho, p)?]))
        .collect::<CliResult<Vec<[f64; 3]>>>()?;
    let text = match format {
        Format::Csv => csv_document(
            &["beta", "g", "ginv"],
            &rows.iter().map(|r| r.iter().map(|&x| sig12(x)).collect()).collect::<Vec<_>>(),
        )?,
        Format::Json => {
            let mut doc = Map::new();
            doc.insert("divergence".into(), div.name().into());
            doc.insert("rho".into(), a.rho.into());
            let rows = rows
                .iter()
                .map(|r| serde_json::json!({ "beta": r[0], "g": r[1], "ginv": r[2] }))
                .collect();
            doc.insert("rows".into(), Value::Array(rows));
            json_document(doc)
        }
    };
    emit(out, &text)
}

fn calibration_fields(result: &CalibrationResult) -> CliResult<Map<String, Value>> {
    match to_value(result)? {
        Value::Object(map) => Ok(map),
        _ => unreachable!("calibration results serialize to objects"),
    }
}

fn calibrate(a: &CalibrateArgs, seed: Option<u64>, format: Format, out: Option<&Path>) -> CliResult<()> {
    if format != Format::Json {
        return Err(CliError::Usage("calibrate writes JSON only".into()));
    }
    let div = divergence(&a.f)?;
    let alpha = probability("alpha", a.alpha)?;
    let (result, estimate) = match (a.rho, a.estimate) {
        (Some(rho), _) => {
            let path = a.input.scores.as_deref().or(a.input.data.as_deref()).ok_or_else(|| {
                CliError::Usage("calibrate needs --scores or --data".into())
            })?;
            let scores = EmpiricalScores::new(load_scores(path)?).map_err(|e| CliError::Input(e.to_string()))?;
            let result = if rho == 0.0 && !a.corrected {
                // zero radius: plain split conformal with its (1 + 1/n) inflation
                CalibrationResult {
                    divergence_name: div.name().to_string(),
                    ..standard_split_calibration(&scores, alpha)?
                }
            } else {
                robust_threshold(&div, &scores, rho, alpha, a.corrected)?
            };
            (result, None)
        }
        (None, Some(strategy)) => {
            let seed = require_seed(seed, "--estimate")?;
            let data = load_dataset(a.input.data.as_deref(), a.input.features.as_deref(), a.input.scores.as_deref())?;
            let delta = probability("delta", a.delta)?;
            let est: ShiftEstimate = match strategy {
                Strategy::Sample => {
                    let cfg = Alg1Config {
                        k: a.k,
                        level_v: probability("level-v", a.level_v)?,
                        delta,
                        alpha,
                        seed,
                        family: family(&a.family)?,
                    };
                    algorithm1_worst_subset(&data, &cfg, &div)?
                }
                Strategy::Regress | Strategy::Classify => {
                    let cfg = Alg2Config {
                        split_fraction: probability("split", a.split)?,
                        delta,
                        alpha,
                        seed,
                        ..Alg2Config::default()
                    };
                    if strategy == Strategy::Regress {
                        algorithm2_regression_direction(&data, &cfg, &div)?
                    } else {
                        classification_direction(&data, &cfg, &div)?
                    }
                }
            };
            let scores = est.calibration_scores(&data)?;
            (robust_threshold(&div, &scores, est.rho_hat, alpha, a.corrected)?, Some(est))
        }
        (None, None) => unreachable!("clap requires --rho or --estimate"),
    };
    let mut doc = calibration_fields(&result)?;
    if let Some(est) = estimate {
        doc.insert("shift_estimate".into(), to_value(&est)?);
    }
    emit(out, &json_document(doc))
}

fn audit(a: &AuditArgs, seed: Option<u64>, format: Format, out: Option<&Path>) -> CliResult<()> {
    let data = load_dataset(a.input.data.as_deref(), a.input.features.as_deref(), a.input.scores.as_deref())?;
    let family = family(&a.family)?;
    let delta = probability("delta", a.delta)?;
    let directions = match (&a.direction, &a.directions, a.sample) {
        (Some(inline), _, _) => vec![parse_list(inline, "direction")?],
        (_, Some(path), _) => load_features(path)?,
        (_, _, Some(k)) => sample_unit_directions(data.dim(), k, require_seed(seed, "--sample")?)?,
        _ => unreachable!("clap requires a direction source"),
    };
    let mut results = Vec::with_capacity(directions.len());
    for (id, v) in directions.into_iter().enumerate() {
        if v.len() != data.dim() {
            return Err(CliError::Input(format!(
                "direction {id} has dimension {}, features have {}",
                v.len(),
                data.dim()
            )));
        }
        let query = RegionQuery::normalized(family, v, delta)?;
        results.push(worst_coverage(&data, &query, a.q)?);
    }
    let text = match format {
        Format::Csv => {
            let rows: Vec<Vec<String>> = results
                .iter()
                .enumerate()
                .map(|(id, r)| {
                    let (lo, hi) = r.region.bounds();
                    vec![id.to_string(), sig12(r.coverage), sig12(r.mass), sig12(lo), sig12(hi)]
                })
                .collect();
            csv_document(&["direction_id", "coverage", "mass", "region_lo", "region_hi"], &rows)?
        }
        Format::Json => {
            let rows = results
                .iter()
                .enumerate()
                .map(|(id, r)| {
                    let mut row = match to_value(r)? {
                        Value::Object(m) => m,
                        _ => unreachable!("results serialize to objects"),
                    };
                    row.insert("direction_id".into(), id.into());
                    Ok(Value::Object(row))
                })
                .collect::<CliResult<Vec<Value>>>()?;
            let mut doc = Map::new();
            doc.insert("family".into(), to_value(&family)?);
            doc.insert("q".into(), a.q.into());
            doc.insert("delta".into(), delta.into());
            doc.insert("rows".into(), Value::Array(rows));
            json_document(doc)
        }
    };
    emit(out, &text)
}

fn parse_shift(text: &str, d: usize) -> CliResult<Vec<f64>> {
    let values = parse_list(text, "shift")?;
    match values.len() {
        1 => {
            let mut v = vec![0.0; d];
            v[0] = values[0];
            Ok(v)
        }
        n if n == d => Ok(values),
        n => Err(CliError::Usage(format!("--shift has {n} entries, expected 1 or {d}"))),
    }
}

fn hetero_model(a: &SimulateArgs) -> CliResult<HeteroModel> {
    let h: NoiseScale = a.h.parse().map_err(|e: drci_core::Error| CliError::Usage(e.to_string()))?;
    let score = match a.score.as_str() {
        "squared" => ScoreKind::Squared,
        "absolute" => ScoreKind::Absolute,
        other => return Err(CliError::Usage(format!("unknown score `{other}` (expected squared or absolute)"))),
    };
    Ok(HeteroModel::standard(a.d, h, a.t, score)?)
}

struct Run {
    a: Option<f64>,
    reports: Vec<CoverageReport>,
}

fn simulate(a: &SimulateArgs, seed: Option<u64>, format: Format, out: Option<&Path>) -> CliResult<()> {
    let seed = require_seed(seed, "simulate")?;
    if a.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let alpha = probability("alpha", a.alpha)?;
    let settings = MethodSettings {
        alpha,
        rho: a.rho,
        k: a.k,
        level_v: probability("level-v", a.level_v)?,
        delta: probability("delta", a.delta)?,
        family: family(&a.family)?,
        split_fraction: probability("split", a.split)?,
        corrected: a.corrected,
    };
    let methods = a
        .methods
        .split(',')
        .map(|m| MethodSpec::parse(m.trim(), &settings).map_err(|e| CliError::Usage(e.to_string())))
        .collect::<CliResult<Vec<_>>>()?;
    let experiment = |population| ExperimentSpec { population, methods: methods.clone(), alpha, trials: a.trials, seed };

    let runs = match a.experiment {
        Experiment::Hetero => {
            let model = hetero_model(a)?;
            let population = Population::Hetero {
                n_val: a.n,
                n_test: a.n,
                val_shift: vec![0.0; a.d],
                test_shift: parse_shift(&a.shift, a.d)?,
                model,
            };
            vec![Run { a: None, reports: run_coverage_experiment(&experiment(population))? }]
        }
        Experiment::Tilt => {
            let (data, default_rule) = match &a.data {
                Some(path) => (load_dataset(Some(path), None, None)?, SizeRule::Threshold),
                None => {
                    let model = hetero_model(a)?;
                    let rule = match model.score_kind() {
                        ScoreKind::Squared => SizeRule::SquaredResidual,
                        ScoreKind::Absolute => SizeRule::AbsoluteResidual,
                    };
                    (generate_hetero(&model, 2 * a.n, &vec![0.0; a.d], seed ^ POOL_SALT)?, rule)
                }
            };
            let candidates = a.candidates.as_deref().map(load_candidates).transpose()?;
            if candidates.as_ref().is_some_and(|c| c.len() != data.len()) {
                return Err(CliError::Input("candidate file and data have different row counts".into()));
            }
            let size_rule = match a.size_rule {
                Some(SizeRuleArg::Squared) => SizeRule::SquaredResidual,
                Some(SizeRuleArg::Absolute) => SizeRule::AbsoluteResidual,
                Some(SizeRuleArg::Threshold) => SizeRule::Threshold,
                Some(SizeRuleArg::Candidates) => SizeRule::CandidateCount,
                None if candidates.is_some() => SizeRule::CandidateCount,
                None => default_rule,
            };
            let cal_fraction = probability("calibration-fraction", a.calibration_fraction)?;
            let n_cal = (data.len() as f64 * cal_fraction).round() as usize;
            let test_size = a.test_size.unwrap_or(data.len().saturating_sub(n_cal));
            parse_list(&a.a_grid, "a-grid")?
                .into_iter()
                .map(|tilt| {
                    let population = Population::Tilt {
                        data: data.clone(),
                        candidates: candidates.clone(),
                        a: tilt,
                        calibration_fraction: cal_fraction,
                        test_size,
                        size_rule,
                    };
                    Ok(Run { a: Some(tilt), reports: run_coverage_experiment(&experiment(population))? })
                })
                .collect::<CliResult<Vec<_>>>()?
        }
    };

    let experiment_name = match a.experiment {
        Experiment::Hetero => "hetero",
        Experiment::Tilt => "tilt",
    };
    let json = simulation_json(experiment_name, &runs)?;
    let csv = simulation_csv(&runs)?;
    let summary = summary_lines(&runs);
    match out {
        Some(path) => {
            emit(Some(&with_extension(path, "json")), &json)?;
            emit(Some(&with_extension(path, "csv")), &csv)?;
            emit(None, &summary)?;
        }
        None => {
            eprint!("{summary}");
            emit(None, if format == Format::Json { &json } else { &csv })?;
        }
    }
    let failed: Vec<String> = runs
        .iter()
        .flat_map(|r| r.reports.iter().filter(|m| m.all_failed()).map(|m| m.method.clone()))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Experiment(format!("methods failed in every trial: {}", failed.join(", "))))
    }
}

fn with_extension(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn simulation_json(experiment: &str, runs: &[Run]) -> CliResult<String> {
    let runs = runs
        .iter()
        .map(|r| Ok(serde_json::json!({ "a": r.a, "reports": to_value(&r.reports)? })))
        .collect::<CliResult<Vec<Value>>>()?;
    let mut doc = Map::new();
    doc.insert("experiment".into(), experiment.into());
    doc.insert("runs".into(), Value::Array(runs));
    Ok(json_document(doc))
}

/// One row per method and trial plus an aggregate row; `d1..d9` are the
/// coverage deciles, filled on aggregate rows only.
const CSV_HEADER: [&str; 22] = [
    "a", "method", "row", "trial", "seed", "coverage", "set_size", "rho", "threshold", "coverage_se",
    "realized_divergence", "resampled_divergence", "failures", "d1", "d2", "d3", "d4", "d5", "d6", "d7",
    "d8", "d9",
];

fn simulation_csv(runs: &[Run]) -> CliResult<String> {
    let header = CSV_HEADER;
    let opt = |x: Option<f64>| x.map(sig12).unwrap_or_default();
    let mut rows = Vec::new();
    for run in runs {
        let a = opt(run.a);
        for r in &run.reports {
            for t in &r.per_trial {
                let mut row = vec![
                    a.clone(),
                    r.method.clone(),
                    "trial".into(),
                    t.trial.to_string(),
                    t.seed.to_string(),
                    sig12(t.coverage),
                    sig12(t.set_size),
                    sig12(t.rho),
                    sig12(t.threshold),
                ];
                row.resize(header.len(), String::new());
                rows.push(row);
            }
            let mut row = vec![
                a.clone(),
                r.method.clone(),
                "aggregate".into(),
                String::new(),
                String::new(),
                sig12(r.mean_coverage),
                sig12(r.mean_set_size),
                sig12(r.rho_used),
                String::new(),
                sig12(r.coverage_se),
                opt(r.realized_divergence),
                opt(r.resampled_divergence),
                r.failures.len().to_string(),
            ];
            row.extend(r.coverage_deciles.iter().map(|&x| sig12(x)));
            row.resize(header.len(), String::new());
            rows.push(row);
        }
    }
    csv_document(&header, &rows)
}

fn summary_lines(runs: &[Run]) -> String {
    let mut s = String::new();
    for run in runs {
        for r in &run.reports {
            if let Some(a) = run.a {
                s.push_str(&format!("a={} ", sig12(a)));
            }
            s.push_str(&format!(
                "method={} trials={} failures={} mean_coverage={} mean_set_size={} rho={}\n",
                r.method,
                r.trials,
                r.failures.len(),
                sig12(r.mean_coverage),
                sig12(r.mean_set_size),
                sig12(r.rho_used),
            ));
        }
    }
    s
}
