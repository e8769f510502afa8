//! Repeated estimation experiments and their tabular output.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{find_model, DynamicsError, ModelSpec, LORENZ, VAN_DER_POL};
use crate::integrator::{integrate, IntegrateError, Trajectory};
use crate::noise::{corrupt, mix_seed, MeasurementSet, NoiseKind, NoiseSpec};
use crate::objective::{rmse, ObjectiveContext, ObjectiveError};
use crate::trustregion::{minimize, SolveError, SolveReport, Termination, TrustRegionConfig};

pub const DEFAULT_NOISE_LEVELS: [f64; 4] = [0.0001, 0.001, 0.01, 0.1];
pub const DEFAULT_REPETITIONS: usize = 10;
/// Noise level used for the white-versus-pink comparison runs.
pub const COMPARISON_LEVEL: f64 = 0.01;
/// Starting value for the Van der Pol damping parameter.
pub const VAN_DER_POL_START: f64 = 1.35;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Model(#[from] DynamicsError),
    #[error(transparent)]
    Integration(#[from] IntegrateError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            HarnessError::Integration(IntegrateError::Diverged { .. })
                | HarnessError::Objective(ObjectiveError::Integration(_))
                | HarnessError::Solve(SolveError::StartFailed(_))
                | HarnessError::Solve(SolveError::NonFiniteStart)
                | HarnessError::Solve(SolveError::InvalidModel(_))
        )
    }
}

fn default_levels() -> Vec<f64> {
    DEFAULT_NOISE_LEVELS.to_vec()
}

fn default_kinds() -> Vec<NoiseKind> {
    vec![NoiseKind::WhiteGaussian]
}

fn default_repetitions() -> usize {
    DEFAULT_REPETITIONS
}

/// One experiment: a model, noise grid, repetitions and solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model_name: String,
    #[serde(default = "default_levels")]
    pub noise_levels: Vec<f64>,
    #[serde(default = "default_kinds")]
    pub noise_kinds: Vec<NoiseKind>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub solver: TrustRegionConfig<f64>,
    /// Defaults to [`default_start`] for the model.
    #[serde(default)]
    pub start_params: Option<Vec<f64>>,
    #[serde(default)]
    pub time_span: Option<(f64, f64)>,
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default)]
    pub initial_state: Option<Vec<f64>>,
    /// Intermediate end times for horizon continuation. Each stage fits the
    /// observations up to its end time, starting from the previous stage's
    /// estimate; the final stage always covers the whole span. `None` uses
    /// [`default_warm_start`]; an empty list means a single full-span fit.
    #[serde(default)]
    pub warm_start_horizons: Option<Vec<f64>>,
}

/// Starting guess when none is configured: `μ = 1.35` for Van der Pol,
/// otherwise the true parameters scaled by 0.9.
pub fn default_start(model: &ModelSpec<f64>) -> Vec<f64> {
    if model.name == VAN_DER_POL {
        vec![VAN_DER_POL_START]
    } else {
        model.true_params.iter().map(|v| 0.9 * v).collect()
    }
}

/// Horizon continuation used by default. Only the chaotic Lorenz system
/// needs it: its misfit over long spans is too rugged to descend from a
/// distant start.
pub fn default_warm_start(model_name: &str) -> Vec<f64> {
    if model_name == LORENZ {
        vec![1.0, 2.0, 3.0, 5.0, 10.0]
    } else {
        Vec::new()
    }
}

impl ExperimentConfig {
    /// White-noise sweep over the default levels.
    pub fn for_model(model_name: &str) -> Self {
        Self {
            model_name: model_name.to_string(),
            noise_levels: default_levels(),
            noise_kinds: default_kinds(),
            repetitions: DEFAULT_REPETITIONS,
            base_seed: 0,
            solver: TrustRegionConfig::default(),
            start_params: None,
            time_span: None,
            step: None,
            initial_state: None,
            warm_start_horizons: None,
        }
    }

    /// White against pink noise at [`COMPARISON_LEVEL`].
    pub fn comparison(model_name: &str) -> Self {
        Self {
            noise_levels: vec![COMPARISON_LEVEL],
            noise_kinds: vec![NoiseKind::WhiteGaussian, NoiseKind::Pink],
            ..Self::for_model(model_name)
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        Ok(toml::from_str(text)?)
    }

    fn resolve(&self) -> Result<Resolved, HarnessError> {
        let model = find_model::<f64>(&self.model_name)?;
        if self.repetitions == 0 {
            return Err(HarnessError::Config("repetitions must be at least 1".into()));
        }
        if let Some(bad) = self.noise_levels.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
            return Err(HarnessError::Config(format!("noise level {bad} is not a finite non-negative number")));
        }
        self.solver.validate().map_err(HarnessError::Config)?;
        let start = self.start_params.clone().unwrap_or_else(|| default_start(&model));
        model.check_params(&start)?;
        let initial_state = self
            .initial_state
            .clone()
            .unwrap_or_else(|| model.default_initial_state.clone());
        model.check_state(&initial_state)?;
        let warm_start_horizons = self
            .warm_start_horizons
            .clone()
            .unwrap_or_else(|| default_warm_start(&self.model_name));
        if warm_start_horizons.iter().any(|h| !h.is_finite()) {
            return Err(HarnessError::Config("warm-start horizons must be finite".into()));
        }
        Ok(Resolved {
            warm_start_horizons,
            time_span: self.time_span.unwrap_or(model.default_time_span),
            step: self.step.unwrap_or(model.default_step),
            model,
            start,
            initial_state,
        })
    }
}

struct Resolved {
    model: ModelSpec<f64>,
    warm_start_horizons: Vec<f64>,
    start: Vec<f64>,
    initial_state: Vec<f64>,
    time_span: (f64, f64),
    step: f64,
}

/// Outcome of one noisy realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub repetition: usize,
    pub seed: u64,
    pub params: Option<Vec<f64>>,
    /// Fitted trajectory against the noisy observations.
    pub rmse: Option<f64>,
    pub objective: Option<f64>,
    pub iterations: usize,
    pub termination: Option<Termination>,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

/// Aggregate over the repetitions of one (noise kind, level) pair.
/// Means and deviations cover successful runs only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub noise_kind: NoiseKind,
    pub noise_level: f64,
    pub mean_params: Option<Vec<f64>>,
    pub std_params: Option<Vec<f64>>,
    pub mean_rmse: Option<f64>,
    pub failures: usize,
    pub per_run: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub model: String,
    pub param_names: Vec<String>,
    pub true_params: Vec<f64>,
    pub start_params: Vec<f64>,
    pub initial_state: Vec<f64>,
    pub time_span: (f64, f64),
    pub step: f64,
    pub warm_start_horizons: Vec<f64>,
    pub base_seed: u64,
    pub repetitions: usize,
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    pub fn row(&self, kind: NoiseKind, level: f64) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.noise_kind == kind && r.noise_level == level)
    }
}

/// Seed for repetition `repetition` of the given noise kind and level index.
pub fn run_seed(base_seed: u64, kind: NoiseKind, level_index: usize, repetition: usize) -> u64 {
    mix_seed(base_seed, &[kind.tag(), level_index as u64, repetition as u64])
}

#[derive(Debug, Clone, Copy)]
struct Task {
    kind: NoiseKind,
    level: f64,
    repetition: usize,
    seed: u64,
}

/// Fits one noisy realization of `truth`, optionally through a sequence of
/// growing horizons. Returns the final solver report, the fitted trajectory
/// and its RMSE against the noisy observations.
pub fn estimate_once(
    model: &ModelSpec<f64>,
    truth: &Trajectory<f64>,
    noise: &NoiseSpec,
    start: &[f64],
    solver: &TrustRegionConfig<f64>,
    warm_start_horizons: &[f64],
) -> Result<(SolveReport<f64>, Trajectory<f64>, f64), HarnessError> {
    let data = corrupt(truth, noise);
    fit_measurements(model, data, truth.initial_state(), start, solver, warm_start_horizons)
}

/// Fits `model` to a measurement set. Each horizon end in
/// `warm_start_horizons` first fits the data prefix up to that time, and
/// the result seeds the next stage; the final stage uses all the data.
pub fn fit_measurements(
    model: &ModelSpec<f64>,
    data: MeasurementSet<f64>,
    initial_state: &[f64],
    start: &[f64],
    solver: &TrustRegionConfig<f64>,
    warm_start_horizons: &[f64],
) -> Result<(SolveReport<f64>, Trajectory<f64>, f64), HarnessError> {
    let observed = data
        .as_trajectory()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let step = observed.step();
    let t0 = observed.times()[0];

    let mut theta = start.to_vec();
    let mut stage_iterations = 0;
    for &end in warm_start_horizons {
        let len = observed.times().iter().take_while(|&&t| t <= end + 1e-9 * step).count();
        if len < 2 || len >= observed.len() || end <= t0 {
            continue;
        }
        let ctx = ObjectiveContext::new(model.clone(), data.prefix(len), initial_state.to_vec(), step)?;
        let report = minimize(&ctx, &theta, solver)?;
        stage_iterations += report.iterations;
        theta = report.final_params;
    }

    let ctx = ObjectiveContext::new(model.clone(), data, initial_state.to_vec(), step)?;
    let mut report = minimize(&ctx, &theta, solver)?;
    report.iterations += stage_iterations;
    let fitted = ctx.simulate(&report.final_params)?;
    let err = rmse(&fitted, &observed)?;
    Ok((report, fitted, err))
}

fn execute(task: Task, resolved: &Resolved, truth: &Trajectory<f64>, solver: &TrustRegionConfig<f64>) -> RunRecord {
    let noise = NoiseSpec {
        kind: task.kind,
        level: task.level,
        seed: task.seed,
    };
    match estimate_once(
        &resolved.model,
        truth,
        &noise,
        &resolved.start,
        solver,
        &resolved.warm_start_horizons,
    ) {
        Ok((report, _, err)) => RunRecord {
            repetition: task.repetition,
            seed: task.seed,
            params: Some(report.final_params),
            rmse: Some(err),
            objective: Some(report.final_objective),
            iterations: report.iterations,
            termination: Some(report.termination),
            error: None,
        },
        Err(e) => RunRecord {
            repetition: task.repetition,
            seed: task.seed,
            params: None,
            rmse: None,
            objective: None,
            iterations: 0,
            termination: None,
            error: Some(e.to_string()),
        },
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; zero for a single value.
fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

fn aggregate(kind: NoiseKind, level: f64, per_run: Vec<RunRecord>, p: usize) -> ReportRow {
    let ok: Vec<&RunRecord> = per_run.iter().filter(|r| r.succeeded()).collect();
    let failures = per_run.len() - ok.len();
    let (mean_params, std_params, mean_rmse) = if ok.is_empty() {
        (None, None, None)
    } else {
        let column = |i: usize| -> Vec<f64> {
            ok.iter().map(|r| r.params.as_ref().expect("successful run")[i]).collect()
        };
        let means = (0..p).map(|i| mean(&column(i))).collect();
        let stds = (0..p).map(|i| std_dev(&column(i))).collect();
        let rmses: Vec<f64> = ok.iter().map(|r| r.rmse.expect("successful run")).collect();
        (Some(means), Some(stds), Some(mean(&rmses)))
    };
    ReportRow {
        noise_kind: kind,
        noise_level: level,
        mean_params,
        std_params,
        mean_rmse,
        failures,
        per_run,
    }
}

/// Runs every (kind, level, repetition) combination of `config`.
///
/// Repetitions execute in parallel; the aggregation order is fixed by
/// (kind, level, repetition), so results do not depend on scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    let resolved = config.resolve()?;
    let model = &resolved.model;
    let (t0, t1) = resolved.time_span;
    let truth = integrate(model, &model.true_params, &resolved.initial_state, t0, t1, resolved.step)?;

    let mut tasks = Vec::new();
    for &kind in &config.noise_kinds {
        for (level_index, &level) in config.noise_levels.iter().enumerate() {
            for repetition in 0..config.repetitions {
                tasks.push(Task {
                    kind,
                    level,
                    repetition,
                    seed: run_seed(config.base_seed, kind, level_index, repetition),
                });
            }
        }
    }

    let records: Vec<RunRecord> = tasks
        .par_iter()
        .map(|&task| execute(task, &resolved, &truth, &config.solver))
        .collect();

    let mut rows = Vec::new();
    let mut chunks = records.chunks(config.repetitions);
    for &kind in &config.noise_kinds {
        for &level in &config.noise_levels {
            let chunk = chunks.next().expect("one chunk per (kind, level)");
            rows.push(aggregate(kind, level, chunk.to_vec(), model.param_dim));
        }
    }

    Ok(ExperimentReport {
        model: model.name.to_string(),
        param_names: model.param_names.iter().map(|s| s.to_string()).collect(),
        true_params: model.true_params.clone(),
        start_params: resolved.start,
        initial_state: resolved.initial_state,
        time_span: resolved.time_span,
        step: resolved.step,
        warm_start_horizons: resolved.warm_start_horizons,
        base_seed: config.base_seed,
        repetitions: config.repetitions,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Json,
    Text,
}

impl std::str::FromStr for TableFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            "text" | "txt" => Ok(TableFormat::Text),
            other => Err(format!("unknown table format `{other}`")),
        }
    }
}

impl TableFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Json => "json",
            TableFormat::Text => "txt",
        }
    }
}

fn fixed4(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"))
}

/// Renders the report as a results table: noise level, mean estimates and
/// mean RMSE per row. Estimates and RMSE use four decimals.
pub fn emit_table(report: &ExperimentReport, format: TableFormat) -> Result<String, HarnessError> {
    match format {
        TableFormat::Json => Ok(serde_json::to_string_pretty(report)?),
        TableFormat::Csv => {
            let mut out = String::from("noise_kind,noise_level");
            for name in &report.param_names {
                write!(out, ",{name}").unwrap();
            }
            out.push_str(",rmse,failures\n");
            for row in &report.rows {
                write!(out, "{},{}", row.noise_kind, row.noise_level).unwrap();
                for i in 0..report.param_names.len() {
                    let v = row.mean_params.as_ref().map(|p| p[i]);
                    write!(out, ",{}", fixed4(v)).unwrap();
                }
                writeln!(out, ",{},{}", fixed4(row.mean_rmse), row.failures).unwrap();
            }
            Ok(out)
        }
        TableFormat::Text => {
            let mut header = vec!["Noise Kind".to_string(), "Noise Level".to_string()];
            header.extend(report.param_names.iter().map(|n| format!("{n}_hat")));
            header.push("RMSE".to_string());
            let mut lines = vec![header];
            for row in &report.rows {
                let mut cells = vec![row.noise_kind.to_string(), row.noise_level.to_string()];
                for i in 0..report.param_names.len() {
                    cells.push(fixed4(row.mean_params.as_ref().map(|p| p[i])));
                }
                let mut rmse = fixed4(row.mean_rmse);
                if row.failures > 0 {
                    write!(rmse, " ({} failed)", row.failures).unwrap();
                }
                cells.push(rmse);
                lines.push(cells);
            }
            let cols = lines[0].len();
            let widths: Vec<usize> = (0..cols)
                .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
                .collect();
            let mut out = String::new();
            for line in &lines {
                let cells: Vec<String> = line
                    .iter()
                    .zip(&widths)
                    .map(|(cell, w)| format!("{cell:>w$}"))
                    .collect();
                out.push_str(cells.join("  ").trim_end());
                out.push('\n');
            }
            Ok(out)
        }
    }
}

/// One line per repetition: kind, level, repetition, seed, estimates, RMSE,
/// iteration count, termination and error message.
pub fn emit_runs_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("noise_kind,noise_level,repetition,seed");
    for name in &report.param_names {
        write!(out, ",{name}").unwrap();
    }
    out.push_str(",rmse,objective,iterations,termination,error\n");
    let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.16e}"));
    for row in &report.rows {
        for run in &row.per_run {
            write!(out, "{},{},{},{}", row.noise_kind, row.noise_level, run.repetition, run.seed).unwrap();
            for i in 0..report.param_names.len() {
                write!(out, ",{}", opt(run.params.as_ref().map(|p| p[i]))).unwrap();
            }
            let termination = run.termination.map_or_else(String::new, |t| t.to_string());
            let error = run.error.as_deref().unwrap_or("").replace(['"', ','], " ");
            writeln!(
                out,
                ",{},{},{},{},{}",
                opt(run.rmse),
                opt(run.objective),
                run.iterations,
                termination,
                error
            )
            .unwrap();
        }
    }
    out
}

/// Clean trajectory CSV for time-series and phase-portrait plots. A
/// zero-length span yields the single row at `t0`.
pub fn emit_phase_data(
    model_name: &str,
    params: Option<&[f64]>,
    initial_state: Option<&[f64]>,
    span: (f64, f64),
    step: f64,
) -> Result<String, HarnessError> {
    let model = find_model::<f64>(model_name)?;
    let params = params.unwrap_or(&model.true_params);
    let init = initial_state.unwrap_or(&model.default_initial_state);
    model.check_params(params)?;
    model.check_state(init)?;
    let (t0, t1) = span;
    if t1 == t0 {
        let mut out = String::from("t");
        for i in 1..=model.state_dim {
            write!(out, ",x{i}").unwrap();
        }
        write!(out, "\n{t0:.16e}").unwrap();
        for v in init {
            write!(out, ",{v:.16e}").unwrap();
        }
        out.push('\n');
        return Ok(out);
    }
    let traj = integrate(&model, params, init, t0, t1, step)?;
    Ok(traj.to_csv_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(model: &str) -> ExperimentConfig {
        ExperimentConfig {
            noise_levels: vec![0.01],
            repetitions: 2,
            time_span: Some((0.0, 5.0)),
            ..ExperimentConfig::for_model(model)
        }
    }

    #[test]
    fn noiseless_run_recovers_truth() {
        for name in ["linear_oscillator_2d", "van_der_pol"] {
            let cfg = ExperimentConfig {
                noise_levels: vec![0.0],
                repetitions: 1,
                ..ExperimentConfig::for_model(name)
            };
            let report = run_experiment(&cfg).unwrap();
            let row = &report.rows[0];
            assert_eq!(row.failures, 0);
            let est = row.mean_params.as_ref().unwrap();
            for (e, t) in est.iter().zip(&report.true_params) {
                assert!((e - t).abs() < 1e-6, "{name}: {e} vs {t}");
            }
            assert!(row.mean_rmse.unwrap() <= 1e-8);
        }
    }

    #[test]
    fn means_match_per_run_values() {
        let report = run_experiment(&small("linear_oscillator_2d")).unwrap();
        let row = &report.rows[0];
        let mean_params = row.mean_params.as_ref().unwrap();
        for i in 0..4 {
            let m = row.per_run.iter().map(|r| r.params.as_ref().unwrap()[i]).sum::<f64>() / 2.0;
            assert!((mean_params[i] - m).abs() <= 1e-12);
        }
    }

    #[test]
    fn report_is_reproducible() {
        let cfg = small("cubic_oscillator_2d");
        assert_eq!(run_experiment(&cfg).unwrap(), run_experiment(&cfg).unwrap());
    }

    #[test]
    fn seeds_differ_across_tasks() {
        let a = run_seed(0, NoiseKind::WhiteGaussian, 0, 0);
        assert_ne!(a, run_seed(0, NoiseKind::Pink, 0, 0));
        assert_ne!(a, run_seed(0, NoiseKind::WhiteGaussian, 1, 0));
        assert_ne!(a, run_seed(0, NoiseKind::WhiteGaussian, 0, 1));
        assert_ne!(a, run_seed(1, NoiseKind::WhiteGaussian, 0, 0));
    }

    #[test]
    fn failed_runs_are_excluded() {
        // A start far outside the stable region makes the Lorenz fit diverge.
        let cfg = ExperimentConfig {
            start_params: Some(vec![10.0, 28.0, -1e4]),
            ..small("lorenz")
        };
        let report = run_experiment(&cfg).unwrap();
        let row = &report.rows[0];
        assert_eq!(row.failures, 2);
        assert!(row.mean_params.is_none());
        assert!(row.per_run.iter().all(|r| r.error.is_some()));
        let text = emit_table(&report, TableFormat::Text).unwrap();
        assert!(text.contains("(2 failed)"));
    }

    #[test]
    fn config_errors() {
        assert!(matches!(
            run_experiment(&ExperimentConfig::for_model("duffing")),
            Err(HarnessError::Model(_))
        ));
        let cfg = ExperimentConfig { repetitions: 0, ..small("van_der_pol") };
        assert!(matches!(run_experiment(&cfg), Err(HarnessError::Config(_))));
        let cfg = ExperimentConfig { start_params: Some(vec![1.0, 2.0]), ..small("van_der_pol") };
        assert!(matches!(run_experiment(&cfg), Err(HarnessError::Model(_))));
    }

    #[test]
    fn config_from_toml() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            model_name = "van_der_pol"
            noise_kinds = ["white_gaussian", "pink"]
            base_seed = 7
            time_span = [0.0, 10.0]

            [solver]
            initial_radius = 0.1
            tolerance = 1e-6
            acceptance_threshold = -inf
            "#,
        )
        .unwrap();
        assert_eq!(cfg.noise_levels, DEFAULT_NOISE_LEVELS);
        assert_eq!(cfg.repetitions, 10);
        assert_eq!(cfg.noise_kinds, vec![NoiseKind::WhiteGaussian, NoiseKind::Pink]);
        assert_eq!(cfg.time_span, Some((0.0, 10.0)));
        assert_eq!(cfg.solver.acceptance_threshold, f64::NEG_INFINITY);
        assert_eq!(cfg.solver.max_radius(), 10.0);
    }

    fn empty_report() -> ExperimentReport {
        ExperimentReport {
            model: "linear_oscillator_2d".into(),
            param_names: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            true_params: vec![-0.1, 2.0, -2.0, -0.1],
            start_params: vec![-0.09, 1.8, -1.8, -0.09],
            initial_state: vec![2.0, 0.0],
            time_span: (0.0, 25.0),
            step: 0.01,
            warm_start_horizons: vec![],
            base_seed: 0,
            repetitions: 1,
            rows: vec![],
        }
    }

    #[test]
    fn empty_tables_have_only_headers() {
        let report = empty_report();
        assert_eq!(
            emit_table(&report, TableFormat::Csv).unwrap(),
            "noise_kind,noise_level,a,b,c,d,rmse,failures\n"
        );
        let text = emit_table(&report, TableFormat::Text).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.contains("Noise Level") && text.contains("RMSE"));
    }

    #[test]
    fn single_row_uses_four_decimals() {
        let mut report = empty_report();
        report.rows.push(ReportRow {
            noise_kind: NoiseKind::WhiteGaussian,
            noise_level: 0.1,
            mean_params: Some(vec![-0.09551, 1.99812, -2.00009, -0.10349]),
            std_params: Some(vec![0.0; 4]),
            mean_rmse: Some(0.100_71),
            failures: 0,
            per_run: vec![],
        });
        let csv = emit_table(&report, TableFormat::Csv).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], "white_gaussian,0.1,-0.0955,1.9981,-2.0001,-0.1035,0.1007,0");
        let text = emit_table(&report, TableFormat::Text).unwrap();
        let row = text.lines().nth(1).unwrap();
        let cells: Vec<&str> = row.split_whitespace().collect();
        assert_eq!(cells, ["white_gaussian", "0.1", "-0.0955", "1.9981", "-2.0001", "-0.1035", "0.1007"]);
    }

    #[test]
    fn json_roundtrip() {
        let report = run_experiment(&small("van_der_pol")).unwrap();
        let json = emit_table(&report, TableFormat::Json).unwrap();
        let back: ExperimentReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn runs_csv_has_one_line_per_run() {
        let report = run_experiment(&small("van_der_pol")).unwrap();
        let csv = emit_runs_csv(&report);
        assert_eq!(csv.lines().count(), 1 + 2);
        assert!(csv.starts_with("noise_kind,noise_level,repetition,seed,mu,rmse"));
    }

    #[test]
    fn phase_data_shapes() {
        let csv = emit_phase_data("lorenz", None, None, (0.0, 25.0), 0.01).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,x1,x2,x3"));
        let rows: Vec<Vec<f64>> = lines
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), 2501);
        for r in &rows {
            assert!(r.iter().all(|v| v.is_finite()));
            assert!(r[1].abs() <= 25.0);
            assert!((0.0..=55.0).contains(&r[3]));
        }

        let single = emit_phase_data("van_der_pol", Some(&[1.5]), Some(&[1.0, 0.0]), (2.0, 2.0), 0.01).unwrap();
        assert_eq!(single.lines().count(), 2);
        assert!(single.lines().nth(1).unwrap().starts_with("2.0000000000000000e0,"));

        assert!(matches!(
            emit_phase_data("nope", None, None, (0.0, 1.0), 0.01),
            Err(HarnessError::Model(DynamicsError::UnknownModel(_)))
        ));
    }

    #[test]
    fn van_der_pol_phase_curve_closes() {
        let csv = emit_phase_data("van_der_pol", Some(&[1.5]), Some(&[1.0, 0.0]), (0.0, 25.0), 0.01).unwrap();
        let rows: Vec<Vec<f64>> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        // Period from successive upward zero crossings of x1 after transients.
        let settled: Vec<&Vec<f64>> = rows.iter().filter(|r| r[0] >= 5.0).collect();
        let ups: Vec<f64> = settled
            .windows(2)
            .filter(|w| w[0][1] < 0.0 && w[1][1] >= 0.0)
            .map(|w| w[0][0] + (w[1][0] - w[0][0]) * (-w[0][1]) / (w[1][1] - w[0][1]))
            .collect();
        assert!(ups.len() >= 2);
        let period_rows = ((ups[ups.len() - 1] - ups[ups.len() - 2]) / 0.01).round() as usize;
        let first = rows.len() - 1000;
        let mut checked = 0;
        for j in first..rows.len() {
            if j + period_rows + 5 >= rows.len() {
                break;
            }
            let nearest = (j + period_rows - 5..=j + period_rows + 5)
                .map(|m| ((rows[m][1] - rows[j][1]).powi(2) + (rows[m][2] - rows[j][2]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(nearest < 0.05, "row {j}: {nearest}");
            checked += 1;
        }
        assert!(checked > 100);
    }
}
