use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use robeta::diagnostics::{simulated_envelope, DiagnosticsReport};
use robeta::inference::bootstrap_pvalue;
use robeta::io::{Dataset, FitReport, ModelColumns};
use robeta::simulation::{run_study, ScenarioConfig, StudyEstimator};
use robeta::tuning::{select_q_with_fit, EstimatorFamily, TuningConfig};
use robeta::{fit, Error, ErrorCategory, EstimatorKind, FitResult, LinkKind, ModelSpec};

#[derive(Parser)]
#[command(name = "robeta", version, about = "Robust beta regression")]
struct Cli {
    /// Worker threads for bootstrap, envelope and simulation work.
    #[arg(long, global = true, env = "ROBETA_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write the estimates as JSON.
    Fit(FitArgs),
    /// Run the tuning-constant selector and print its trace.
    Tune(TuneArgs),
    /// Residuals, leverages, weights and a simulated envelope.
    Diagnose(DiagnoseArgs),
    /// Run a Monte Carlo study.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    response: String,
    /// Mean-submodel covariates (an intercept is always added).
    #[arg(long, value_delimiter = ',')]
    mean_cols: Vec<String>,
    /// Precision-submodel covariates (an intercept is always added).
    #[arg(long, value_delimiter = ',')]
    precision_cols: Vec<String>,
    #[arg(long, default_value = "logit")]
    mean_link: String,
    /// Move responses equal to 0 or 1 to eps or 1 - eps.
    #[arg(long)]
    clamp_eps: Option<f64>,
}

impl DataArgs {
    fn load(&self) -> Result<ModelSpec, Error> {
        let cols = ModelColumns {
            response: self.response.clone(),
            mean_cols: self.mean_cols.clone(),
            precision_cols: self.precision_cols.clone(),
            clamp_eps: self.clamp_eps,
            mean_link: self.mean_link.parse()?,
            precision_link: LinkKind::Log,
        };
        Dataset::from_path(&self.data)?.to_spec(&cols)
    }
}

#[derive(Args)]
struct TuningArgs {
    #[arg(long, default_value_t = 0.02)]
    grid_spacing: f64,
    #[arg(long, default_value_t = 3)]
    grid_size: usize,
    #[arg(long, default_value_t = 0.5)]
    q_min: f64,
    #[arg(long, default_value_t = 0.02)]
    threshold: f64,
}

impl TuningArgs {
    fn config(&self) -> TuningConfig {
        TuningConfig {
            grid_spacing: self.grid_spacing,
            grid_size: self.grid_size,
            q_min: self.q_min,
            threshold: self.threshold,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Estimator {
    Mle,
    Smle,
    Mdpde,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "smle")]
    estimator: Estimator,
    /// Tuning constant in (0, 1], or "auto" to select it from the data.
    #[arg(long, default_value = "auto")]
    q: String,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Parametric bootstrap replicates for the coefficient p-values.
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "smle")]
    estimator: Estimator,
    #[command(flatten)]
    tuning: TuningArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Reuse a fit written by `robeta fit` instead of refitting.
    #[arg(long)]
    fit: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    sims: usize,
    #[arg(long, default_value_t = 0.95)]
    band: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for envelope.csv, observations.csv and diagnostics.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in scenario (1 or 2); ignored when --config is given.
    #[arg(long, default_value_t = 1)]
    scenario: u32,
    /// Scenario configuration as JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 0.0)]
    contaminate: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',', default_value = "mle,smle,mdpde")]
    estimators: Vec<String>,
    #[command(flatten)]
    tuning: TuningArgs,
    /// Directory for replications.csv and summary.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error [input]: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let cat = e.category();
            eprintln!("error [{cat}]: {e}");
            if let Error::Infeasible { .. } | Error::NonIntegrable { .. } = e {
                eprintln!("hint: the robust fit is undefined for some observations at this q; try a larger q or the MLE");
            }
            ExitCode::from(exit_code(cat))
        }
    }
}

fn exit_code(cat: ErrorCategory) -> u8 {
    match cat {
        ErrorCategory::Input => 2,
        ErrorCategory::Convergence => 3,
        ErrorCategory::Numerical => 4,
    }
}

/// The given seed, or a fresh one that is reported so the run can be repeated.
fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        eprintln!("seed: {s}");
        s
    })
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(Error::Io),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn family(e: Estimator) -> Option<EstimatorFamily> {
    match e {
        Estimator::Mle => None,
        Estimator::Smle => Some(EstimatorFamily::Smle),
        Estimator::Mdpde => Some(EstimatorFamily::Mdpde),
    }
}

fn run_model(
    spec: &ModelSpec,
    m: &ModelArgs,
) -> Result<(FitResult, Option<robeta::tuning::TuningTrace>), Error> {
    let Some(fam) = family(m.estimator) else {
        return Ok((fit(spec, EstimatorKind::Mle, None)?, None));
    };
    if m.q.eq_ignore_ascii_case("auto") {
        let (trace, f) = select_q_with_fit(spec, fam, &m.tuning.config())?;
        return Ok((f, Some(trace)));
    }
    let q: f64 =
        m.q.parse()
            .map_err(|_| Error::Data(format!("--q must be a number or 'auto', got '{}'", m.q)))?;
    Ok((fit(spec, fam.at(q), None)?, None))
}

fn cmd_fit(a: &FitArgs) -> Result<(), Error> {
    let spec = a.data.load()?;
    let (f, trace) = run_model(&spec, &a.model)?;
    let mut report = FitReport::new(&spec, &f);
    report.tuning_trace = trace;
    if let Some(b) = a.bootstrap {
        let seed = resolve_seed(a.seed);
        report.seed = Some(seed);
        for (j, row) in report.coefficients.iter_mut().enumerate() {
            let boot = bootstrap_pvalue(&spec, f.estimator, j, 0.0, b, seed)?;
            row.p_bootstrap = Some(boot.p_value);
        }
    } else {
        report.seed = a.seed;
    }
    write_out(a.out.as_deref(), &report.to_json()?)
}

fn cmd_tune(a: &TuneArgs) -> Result<(), Error> {
    let spec = a.data.load()?;
    let fam = family(a.estimator)
        .ok_or_else(|| Error::Data("tune needs --estimator smle or mdpde".into()))?;
    let (trace, _) = select_q_with_fit(&spec, fam, &a.tuning.config())?;
    write_out(a.out.as_deref(), &serde_json::to_string_pretty(&trace)?)
}

fn cmd_diagnose(a: &DiagnoseArgs) -> Result<(), Error> {
    let spec = a.data.load()?;
    let f = match &a.fit {
        Some(p) => FitReport::from_json(&std::fs::read_to_string(p)?)?.fit,
        None => run_model(&spec, &a.model)?.0,
    };
    if f.theta_hat.p() != spec.p() {
        return Err(Error::Dimension(
            "the saved fit does not match the model columns".into(),
        ));
    }
    let seed = resolve_seed(a.seed);
    let env = simulated_envelope(&spec, &f, a.sims, a.band, seed)?;
    let report = DiagnosticsReport::new(&spec, &f, Some(env))?;
    std::fs::create_dir_all(&a.out_dir)?;
    std::fs::write(a.out_dir.join("envelope.csv"), report.envelope_csv()?)?;
    std::fs::write(
        a.out_dir.join("observations.csv"),
        report.observations_csv()?,
    )?;
    let json = serde_json::json!({
        "estimator": f.estimator.name(),
        "q": f.q_used,
        "seed": seed,
        "flagged": report.flagged.iter().map(|i| i + 1).collect::<Vec<_>>(),
        "largest_residuals": report.largest_residuals().iter().take(5).map(|i| i + 1).collect::<Vec<_>>(),
        "smallest_weights": report.smallest_weights().iter().take(5).map(|i| i + 1).collect::<Vec<_>>(),
        "report": report,
    });
    std::fs::write(
        a.out_dir.join("diagnostics.json"),
        serde_json::to_string_pretty(&json)?,
    )?;
    Ok(())
}

fn parse_estimator(s: &str) -> Result<StudyEstimator, Error> {
    let (name, q) = match s.split_once('=') {
        Some((n, q)) => (
            n,
            Some(
                q.parse::<f64>()
                    .map_err(|_| Error::Data(format!("bad q in '{s}'")))?,
            ),
        ),
        None => (s, None),
    };
    match name.trim() {
        "mle" => Ok(StudyEstimator::Mle),
        "smle" => Ok(StudyEstimator::Smle { q }),
        "mdpde" => Ok(StudyEstimator::Mdpde { q }),
        other => Err(Error::Data(format!("unknown estimator '{other}'"))),
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), Error> {
    let seed = resolve_seed(a.seed);
    let mut config = match &a.config {
        Some(p) => serde_json::from_str::<ScenarioConfig>(&std::fs::read_to_string(p)?)?,
        None => match a.scenario {
            1 => ScenarioConfig::scenario1(a.n, a.contaminate, a.reps, seed),
            2 => ScenarioConfig::scenario2(a.n, a.contaminate, a.reps, seed),
            s => {
                return Err(Error::Data(format!(
                    "unknown scenario {s}; use 1, 2 or --config"
                )))
            }
        },
    };
    if a.config.is_none() && !a.n.is_multiple_of(config.n_base) {
        return Err(Error::Data(format!(
            "n = {} is not a multiple of the base design size {}",
            a.n, config.n_base
        )));
    }
    if a.config.is_none() {
        config.seed = seed;
    }
    let estimators = a
        .estimators
        .iter()
        .map(|s| parse_estimator(s))
        .collect::<Result<Vec<_>, _>>()?;
    let result = run_study(&config, &estimators, &a.tuning.config())?;
    std::fs::create_dir_all(&a.out_dir)?;
    std::fs::write(
        a.out_dir.join("replications.csv"),
        result.replications_csv()?,
    )?;
    let summary = serde_json::json!({
        "seed": config.seed,
        "config": result.config,
        "summaries": result.summaries,
    });
    std::fs::write(
        a.out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(())
}
