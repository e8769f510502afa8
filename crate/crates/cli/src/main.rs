use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use odefit::harness::{
    default_start, default_warm_start, emit_phase_data, emit_runs_csv, emit_table, fit_measurements,
    run_experiment, ExperimentConfig, HarnessError, TableFormat,
};
use odefit::{
    corrupt, find_model, integrate, registry, IntegrateError, MeasurementSet, NoiseKind, NoiseSpec,
    ObjectiveError, SolveError, SolveReport, Trajectory, TrustRegionConfig,
};

#[derive(Parser)]
#[command(name = "odefit", version, about = "Parameter estimation for ODE models with trust-region fitting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List built-in models with their dimensions and reference parameters.
    ListModels,
    /// Integrate a model and write the clean trajectory as CSV.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add noise to a trajectory CSV, writing measurements and a metadata sidecar.
    Corrupt {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "white")]
        noise: NoiseKind,
        #[arg(long)]
        level: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Model name recorded in the metadata.
        #[arg(long, default_value = "unknown")]
        model: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model's parameters to one measurement file.
    Estimate(EstimateArgs),
    /// Run a full experiment described by a TOML config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Write trajectory data for phase-portrait plots.
    Phase {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    model: String,
    /// Comma-separated parameters; defaults to the reference values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    params: Option<Vec<f64>>,
    /// Comma-separated initial state.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    init: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    t0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    t1: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    model: String,
    /// Measurement CSV. A `<data>.meta.json` sidecar is used when present.
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated starting parameters.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    start: Option<Vec<f64>>,
    /// Initial state of the model; defaults to the model's reference state.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    init: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.1)]
    radius: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    max_radius: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Comma-separated horizon ends for staged fitting.
    #[arg(long, value_delimiter = ',', conflicts_with = "no_warm_start")]
    warm_start: Option<Vec<f64>>,
    /// Fit the full data set in one stage.
    #[arg(long)]
    no_warm_start: bool,
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(if is_numerical(&err) { 2 } else { 1 })
        }
    }
}

fn is_numerical(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        if let Some(e) = cause.downcast_ref::<HarnessError>() {
            return e.is_numerical();
        }
        matches!(cause.downcast_ref::<IntegrateError>(), Some(IntegrateError::Diverged { .. }))
            || matches!(cause.downcast_ref::<ObjectiveError>(), Some(ObjectiveError::Integration(_)))
            || matches!(
                cause.downcast_ref::<SolveError>(),
                Some(SolveError::StartFailed(_) | SolveError::NonFiniteStart | SolveError::InvalidModel(_))
            )
    })
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::ListModels => emit(&list_models()),
        Command::Simulate { run, out } => simulate(&run, &out),
        Command::Corrupt {
            input,
            noise,
            level,
            seed,
            model,
            out,
        } => corrupt_file(&input, noise, level, seed, &model, &out),
        Command::Estimate(args) => estimate(&args),
        Command::Experiment { config, out } => experiment(&config, &out),
        Command::Phase { run, out } => {
            let model = find_model::<f64>(&run.model)?;
            let span = (
                run.t0.unwrap_or(model.default_time_span.0),
                run.t1.unwrap_or(model.default_time_span.1),
            );
            let step = run.step.unwrap_or(model.default_step);
            let csv = emit_phase_data(&run.model, run.params.as_deref(), run.init.as_deref(), span, step)?;
            fs::write(&out, csv).with_context(|| format!("writing {}", out.display()))
        }
    }
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn list_models() -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(out, "{:<22} {:>5} {:>6}  parameters", "model", "state", "params");
    for model in registry::<f64>() {
        let params: Vec<String> = model
            .param_names
            .iter()
            .zip(&model.true_params)
            .map(|(n, v)| format!("{n}={v}"))
            .collect();
        let _ = writeln!(
            out,
            "{:<22} {:>5} {:>6}  {}",
            model.name,
            model.state_dim,
            model.param_dim,
            params.join(" ")
        );
    }
    out
}

fn simulate(run: &RunArgs, out: &Path) -> Result<()> {
    let model = find_model::<f64>(&run.model)?;
    let params = run.params.clone().unwrap_or_else(|| model.true_params.clone());
    let init = run.init.clone().unwrap_or_else(|| model.default_initial_state.clone());
    let t0 = run.t0.unwrap_or(model.default_time_span.0);
    let t1 = run.t1.unwrap_or(model.default_time_span.1);
    let step = run.step.unwrap_or(model.default_step);
    let traj = integrate(&model, &params, &init, t0, t1, step)?;
    let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    let mut writer = BufWriter::new(file);
    traj.write_csv(&mut writer)?;
    writer.flush()?;
    Ok(())
}

fn sidecar_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn corrupt_file(input: &Path, kind: NoiseKind, level: f64, seed: u64, model: &str, out: &Path) -> Result<()> {
    let file = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let traj = Trajectory::<f64>::read_csv(BufReader::new(file), model)
        .with_context(|| format!("reading {}", input.display()))?;
    let spec = NoiseSpec::new(kind, level, seed)?;
    let data = corrupt(&traj, &spec);

    let mut writer = BufWriter::new(File::create(out).with_context(|| format!("creating {}", out.display()))?);
    data.write_csv(&mut writer)?;
    writer.flush()?;
    let meta = sidecar_path(out);
    let mut writer = BufWriter::new(File::create(&meta).with_context(|| format!("creating {}", meta.display()))?);
    data.write_metadata(&mut writer)?;
    writer.flush()?;
    Ok(())
}

fn load_measurements(path: &Path, model: &str) -> Result<MeasurementSet<f64>> {
    let csv = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let meta = sidecar_path(path);
    if meta.exists() {
        let sidecar = File::open(&meta).with_context(|| format!("opening {}", meta.display()))?;
        return MeasurementSet::read(csv, sidecar).with_context(|| format!("reading {}", path.display()));
    }
    let traj = Trajectory::<f64>::read_csv(csv, model).with_context(|| format!("reading {}", path.display()))?;
    let set = MeasurementSet::new(
        traj.times().to_vec(),
        traj.states().to_vec(),
        model,
        NoiseSpec::white(0.0, 0)?,
    )?;
    Ok(set)
}

fn estimate(args: &EstimateArgs) -> Result<()> {
    let model = find_model::<f64>(&args.model)?;
    let data = load_measurements(&args.data, &args.model)?;
    if data.model_name() != args.model && data.model_name() != "unknown" {
        eprintln!(
            "warning: data was generated from `{}`, fitting `{}`",
            data.model_name(),
            args.model
        );
    }
    let start = args.start.clone().unwrap_or_else(|| default_start(&model));
    model.check_params(&start)?;
    let init = args.init.clone().unwrap_or_else(|| model.default_initial_state.clone());
    model.check_state(&init)?;

    let mut solver = TrustRegionConfig::with_radius(args.radius, args.tol);
    solver.max_radius = args.max_radius;
    if let Some(n) = args.max_iterations {
        solver.max_iterations = n;
    }
    if let Err(msg) = solver.validate() {
        bail!("invalid solver settings: {msg}");
    }
    let horizons = if args.no_warm_start {
        Vec::new()
    } else {
        args.warm_start.clone().unwrap_or_else(|| default_warm_start(&args.model))
    };

    let (report, _, rmse) = fit_measurements(&model, data, &init, &start, &solver, &horizons)?;
    if args.json {
        emit(&(serde_json::to_string_pretty(&report)? + "\n"))
    } else {
        emit(&format_report(&report, &model.param_names, rmse))
    }
}

fn format_report(report: &SolveReport<f64>, names: &[&str], rmse: f64) -> String {
    let gnorm = report.final_gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
    let mut out = format!(
        "termination: {}\niterations:  {}\nobjective:   {:.6e}\n|gradient|:  {gnorm:.6e}\nrmse:        {rmse:.6e}\nparameters:\n",
        report.termination, report.iterations, report.final_objective
    );
    for (name, value) in names.iter().zip(&report.final_params) {
        out.push_str(&format!("  {name:<6} {value:.8}\n"));
    }
    out
}

fn experiment(config_path: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(config_path).with_context(|| format!("reading {}", config_path.display()))?;
    let config = ExperimentConfig::from_toml_str(&text)?;
    let report = run_experiment(&config)?;

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for format in [TableFormat::Csv, TableFormat::Json, TableFormat::Text] {
        let path = out.join(format!("table.{}", format.extension()));
        fs::write(&path, emit_table(&report, format)?).with_context(|| format!("writing {}", path.display()))?;
    }
    let runs = out.join("runs.csv");
    fs::write(&runs, emit_runs_csv(&report)).with_context(|| format!("writing {}", runs.display()))?;
    emit(&emit_table(&report, TableFormat::Text)?)
}
