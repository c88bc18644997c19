//! `wrmc`: exact variances, chain simulation and replication benchmarks for
//! finite-state Metropolis-Hastings models.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use wrmc_core::chain::InitialState;
use wrmc_core::estimators::{AlternateKernel, EstimateError, Observables};
use wrmc_core::exact::{self, ExactError};
use wrmc_core::model::{self, Model, ModelError, Proposal, SelectionKernelSpec};
use wrmc_core::report::{fmt_sig, TABLE_DIGITS};
use wrmc_core::{bench, chain, estimators, BenchConfig, BenchError, ChainError, EstimatorKind};

/// Environment variable capping the total number of bench chain steps.
const MAX_STEPS_ENV: &str = "WRMC_MAX_STEPS";

#[derive(Debug, Parser)]
#[command(name = "wrmc", version, about = "Waste-recycling Monte Carlo variance laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form asymptotic variances for a model and observable.
    Exact(ExactArgs),
    /// Simulate one chain and report every estimator.
    Simulate(SimulateArgs),
    /// Replicated variance study with confidence intervals.
    Bench(BenchArgs),
    /// Run the built-in three-state counter-example.
    Counterexample(CounterexampleArgs),
    /// Check a model file and print every validation check.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct Inputs {
    /// Model file (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Observable f: JSON map from state label to value.
    #[arg(long)]
    f: PathBuf,
    /// Control-variate function psi (defaults to f).
    #[arg(long)]
    psi: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ReportFormat {
    Json,
    Table,
}

#[derive(Debug, Args)]
struct ExactArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Also evaluate the variance of the averaged control variate.
    #[arg(long)]
    tilde: bool,
    #[arg(long, value_enum, default_value = "json")]
    format: ReportFormat,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KappaChoice {
    Metropolis,
    Boltzmann,
}

impl KappaChoice {
    fn spec(self) -> SelectionKernelSpec {
        match self {
            KappaChoice::Metropolis => SelectionKernelSpec::MetropolisKappa,
            KappaChoice::Boltzmann => SelectionKernelSpec::BoltzmannKappa,
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Number of chain steps.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `stationary` or a state label.
    #[arg(long, default_value = "stationary")]
    init: String,
    /// Alternate selection kernel for J'_n (multi-proposal models only).
    #[arg(long, value_enum)]
    alternate: Option<KappaChoice>,
    /// Write a tab-separated trace dump to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    format: ReportFormat,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TableFormat {
    Text,
    Csv,
}

#[derive(Debug, Args)]
struct BenchOptions {
    /// Comma-separated chain lengths.
    #[arg(long, value_delimiter = ',', default_value = "1,2,5,10,100,1000")]
    n_list: Vec<usize>,
    /// Replications per chain length.
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Confidence level of the intervals.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// `stationary` or a state label.
    #[arg(long, default_value = "stationary")]
    init: String,
    /// Extra estimators besides I_n(f): cv, adaptive, ppsi, jprime.
    #[arg(long, value_delimiter = ',', default_value = "cv")]
    estimators: Vec<String>,
    /// Alternate selection kernel for the jprime estimator.
    #[arg(long, value_enum)]
    alternate: Option<KappaChoice>,
    /// Report plain sample variances instead of n times them.
    #[arg(long)]
    unscaled: bool,
    /// Cap on the total number of chain steps (overrides WRMC_MAX_STEPS).
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long, value_enum, default_value = "text")]
    format: TableFormat,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    options: BenchOptions,
}

#[derive(Debug, Args)]
struct CounterexampleArgs {
    /// Closed-form numbers (the default).
    #[arg(long, conflicts_with = "bench")]
    exact: bool,
    /// Replicated variance table.
    #[arg(long)]
    bench: bool,
    #[command(flatten)]
    options: BenchOptions,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Model { path: String, source: ModelError },
    #[error("model validation failed")]
    Invalid,
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Bench(#[from] BenchError),
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load_model(path: &Path) -> Result<Model, CliError> {
    let text = read(path)?;
    match model::load_model(&text) {
        Ok(m) => Ok(m),
        Err(ModelError::Validation(report)) => {
            eprint!("{report}");
            Err(CliError::Invalid)
        }
        Err(source) => Err(CliError::Model {
            path: path.display().to_string(),
            source,
        }),
    }
}

fn load_function(model: &Model, path: &Path) -> Result<Vec<f64>, CliError> {
    let text = read(path)?;
    model::load_function(model, &text)
        .map(|f| f.values().to_vec())
        .map_err(|source| CliError::Model {
            path: path.display().to_string(),
            source,
        })
}

fn load_inputs(inputs: &Inputs) -> Result<(Model, Vec<f64>, Vec<f64>), CliError> {
    let model = load_model(&inputs.model)?;
    let f = load_function(&model, &inputs.f)?;
    let psi = match &inputs.psi {
        Some(p) => load_function(&model, p)?,
        None => f.clone(),
    };
    Ok((model, f, psi))
}

fn parse_init(model: &Model, init: &str) -> Result<InitialState, CliError> {
    if init == "stationary" {
        return Ok(InitialState::Stationary);
    }
    model
        .states()
        .index_of(init)
        .map(InitialState::State)
        .ok_or_else(|| CliError::Usage(format!("--init: unknown state `{init}`")))
}

fn variance_table(r: &exact::VarianceReport) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "absent".to_string(), |v| fmt_sig(v, TABLE_DIGITS));
    let rows = [
        ("sigma2", fmt_sig(r.sigma2, TABLE_DIGITS)),
        ("sigma2_cv", opt(r.sigma2_cv)),
        ("sigma2_opt", fmt_sig(r.sigma2_opt, TABLE_DIGITS)),
        ("delta_f", fmt_sig(r.delta_f, TABLE_DIGITS)),
        ("b_star", opt(r.b_star)),
        ("var_pi_f", fmt_sig(r.var_pi_f, TABLE_DIGITS)),
        ("sigma2_tilde", opt(r.sigma2_tilde)),
    ];
    rows.iter().map(|(k, v)| format!("{k:<13} {v}\n")).collect()
}

fn run_exact(args: &ExactArgs) -> Result<String, CliError> {
    let (model, f, psi) = load_inputs(&args.inputs)?;
    let report = exact::variance_report(&model, &f, Some(&psi), args.tilde)?;
    Ok(match args.format {
        ReportFormat::Json => report.to_json(),
        ReportFormat::Table => variance_table(&report),
    })
}

fn run_simulate(args: &SimulateArgs) -> Result<String, CliError> {
    if args.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let (model, f, psi) = load_inputs(&args.inputs)?;
    let init = parse_init(&model, &args.init)?;
    let trace = chain::run_chain(&model, args.n, args.seed, init)?;
    if let Some(path) = &args.trace {
        let file = fs::File::create(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        trace
            .dump(model.states(), std::io::BufWriter::new(file))
            .map_err(|source| CliError::Io {
                path: path.display().to_string(),
                source,
            })?;
    }
    let p = exact::transition_matrix(&model)?;
    let mut obs = Observables::new(&f, &psi)?.with_transition(&p)?;
    if let Some(k) = args.alternate {
        obs = obs.with_alternate(AlternateKernel::new(&model, &k.spec())?)?;
    }
    let report = estimators::estimate_with(&trace, &obs)?;
    Ok(match args.format {
        ReportFormat::Json => report.to_json(),
        ReportFormat::Table => report.to_table(),
    })
}

fn bench_config(model: &Model, o: &BenchOptions) -> Result<BenchConfig, CliError> {
    let estimators = o
        .estimators
        .iter()
        .map(|s| {
            EstimatorKind::from_code(s.trim())
                .ok_or_else(|| CliError::Usage(format!("--estimators: unknown estimator `{s}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let max_steps = match o.max_steps {
        Some(m) => Some(m),
        None => match std::env::var(MAX_STEPS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("{MAX_STEPS_ENV}: not an integer: `{v}`")))?,
            ),
            Err(_) => None,
        },
    };
    Ok(BenchConfig {
        n_list: o.n_list.clone(),
        reps: o.reps,
        level: o.level,
        seed: o.seed,
        estimators,
        init: parse_init(model, &o.init)?,
        scale_by_n: !o.unscaled,
        max_steps,
        alternate: o.alternate.map(KappaChoice::spec),
    })
}

fn render_bench(table: &bench::BenchTable, format: TableFormat) -> String {
    match format {
        TableFormat::Text => table.to_text(),
        TableFormat::Csv => table.to_csv(),
    }
}

fn run_bench(args: &BenchArgs) -> Result<String, CliError> {
    let (model, f, psi) = load_inputs(&args.inputs)?;
    let cfg = bench_config(&model, &args.options)?;
    let table = bench::run_bench(&model, &f, &psi, &cfg)?;
    Ok(render_bench(&table, args.options.format))
}

fn counterexample_exact() -> Result<String, CliError> {
    let model = bench::counterexample_model();
    let f = bench::counterexample_f();
    let r = exact::variance_report(&model, &f, Some(&f), false)?;
    let sigma2_ff = r.sigma2_cv.expect("psi supplied");
    let diff = sigma2_ff - r.sigma2;
    let p = exact::transition_matrix(&model)?;
    let Proposal::Single { q, rule } = model.proposal() else {
        unreachable!("the counter-example is a single-proposal model")
    };
    let rho_ab = model::acceptance_matrix(model.pi(), q, rule)[(0, 1)];
    let closed = model.pi()[0] * p[(0, 1)] * (1.0 - rho_ab) * (p[(1, 2)] - p[(0, 2)]).powi(2);
    let rows = [
        ("sigma2", fmt_sig(r.sigma2, 15)),
        ("sigma2_cv(f,f)", fmt_sig(sigma2_ff, 15)),
        ("sigma2_cv(f,f)-sigma2", fmt_sig(diff, 15)),
        ("closed_form_difference", fmt_sig(closed, 15)),
        ("relative_change_percent", fmt_sig(-100.0 * diff / r.sigma2, 15)),
        ("sigma2_opt", fmt_sig(r.sigma2_opt, 15)),
        ("b_star", r.b_star.map_or_else(|| "absent".into(), |b| fmt_sig(b, 15))),
        ("var_pi_f", fmt_sig(r.var_pi_f, 15)),
        ("delta_f", fmt_sig(r.delta_f, 15)),
    ];
    Ok(rows.iter().map(|(k, v)| format!("{k}={v}\n")).collect())
}

fn run_counterexample(args: &CounterexampleArgs) -> Result<String, CliError> {
    if !args.bench {
        return counterexample_exact();
    }
    let model = bench::counterexample_model();
    let f = bench::counterexample_f();
    let cfg = bench_config(&model, &args.options)?;
    let table = bench::run_bench(&model, &f, &f, &cfg)?;
    Ok(render_bench(&table, args.options.format))
}

fn run_validate(args: &ValidateArgs) -> Result<(String, bool), CliError> {
    let text = read(&args.model)?;
    let m = model::parse_model(&text).map_err(|source| CliError::Model {
        path: args.model.display().to_string(),
        source,
    })?;
    let report = model::validate_model(&m);
    Ok((report.to_string(), report.passed()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Exact(a) => run_exact(a).map(|s| (s, true)),
        Command::Simulate(a) => run_simulate(a).map(|s| (s, true)),
        Command::Bench(a) => run_bench(a).map(|s| (s, true)),
        Command::Counterexample(a) => run_counterexample(a).map(|s| (s, true)),
        Command::Validate(a) => run_validate(a),
    };
    match result {
        Ok((out, ok)) => {
            print!("{out}");
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
