//! `malcal` — experiments and exact checks for discrete Malliavin calculus
//! on random-walk approximations of Brownian motion.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use malcal::experiments::{
    self, ChaosFunctional, ClarkOconeConfig, ConvergenceReport, STransformMc, SkorokhodConfig,
};
use malcal::identities::{run_suite, SuiteConfig};
use malcal::{dump_csv, simulate_coupled_binary, simulate_walk, NoiseSpec, StepFunction};

const DEFAULT_SEED: u64 = 42;
const SEED_ENV: &str = "MALCAL_SEED";

#[derive(Parser)]
#[command(
    name = "malcal",
    version,
    about = "Discrete Malliavin calculus: convergence experiments and exact identity checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Strong L2 convergence of the discrete Skorokhod integral along
    /// coupled binary walks (log-log MSE ladder).
    SkorokhodConvergence(SkorokhodArgs),
    /// Monte Carlo estimation of chaos coefficients of a built-in
    /// functional, with exact bias/noise split.
    ChaosEstimate(ChaosArgs),
    /// Convergence of the discretized Clark-Ocone derivative of B_1^2.
    ClarkOcone(ClarkOconeArgs),
    /// Exact discrete S-transform pairings against their continuous limit.
    STransform(STransformArgs),
    /// Run the exact identity suite and print one pass/fail line per
    /// identity.
    ExactCheck(ExactCheckArgs),
    /// Simulate one path and dump it as CSV.
    SimulatePaths(SimulatePathsArgs),
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Master seed; falls back to MALCAL_SEED, then 42.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: machine parallelism). Results are
    /// identical for every thread count.
    #[arg(long)]
    threads: Option<usize>,
    /// Output path; "-" or omitted writes to stdout. File outputs get a
    /// JSON summary sidecar at <output>.summary.json where applicable.
    #[arg(long)]
    output: Option<String>,
    /// Output format for report-shaped results.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Optional TOML config file; flags override file values, file values
    /// override defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct SkorokhodArgs {
    /// Binary noise parameter.
    #[arg(long)]
    b: Option<f64>,
    /// Comma-separated ladder of time-step counts (even, ascending).
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<u32>>,
    /// Monte Carlo paths per ladder point.
    #[arg(long)]
    paths: Option<usize>,
    /// Fine-grid refinement K (mesh 1/(K n)).
    #[arg(long)]
    fine_factor: Option<u32>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct ChaosArgs {
    /// Built-in functional: b1, b1sq, or wick.
    #[arg(long)]
    functional: String,
    /// Chaos order to estimate.
    #[arg(long)]
    order: usize,
    /// Time-step count.
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    paths: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct ClarkOconeArgs {
    /// Comma-separated ladder of time-step counts (multiples of 8).
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<u32>>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    fine_factor: Option<u32>,
    /// Inner sample count of the nested conditional-expectation mode.
    #[arg(long)]
    inner_samples: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct STransformArgs {
    /// Comma-separated ladder of time-step counts.
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<u32>>,
    /// Ladder point at which to add a Monte Carlo estimate.
    #[arg(long)]
    mc_n: Option<u32>,
    /// Paths for the Monte Carlo estimate.
    #[arg(long)]
    mc_paths: Option<usize>,
    /// Binary noise parameter for the Monte Carlo estimate.
    #[arg(long)]
    b: Option<f64>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct ExactCheckArgs {
    /// Largest horizon drawn per instance (4..=12).
    #[arg(long)]
    m: Option<usize>,
    /// Random instances per identity and parameter.
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// Binary parameters to cycle through.
    #[arg(long, value_delimiter = ',')]
    b_list: Option<Vec<f64>>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct SimulatePathsArgs {
    /// Time-step parameter n.
    #[arg(long)]
    n: Option<u32>,
    /// Number of increments to realize.
    #[arg(long)]
    steps: Option<usize>,
    /// Binary noise parameter (a config-file atom list instead produces a
    /// walk-only dump without passage times).
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    fine_factor: Option<u32>,
    #[command(flatten)]
    common: CommonArgs,
}

/// TOML config file shape. Every field is optional; flags win.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    threads: Option<usize>,
    output: Option<String>,
    format: Option<String>,
    b: Option<f64>,
    n_list: Option<Vec<u32>>,
    paths: Option<usize>,
    fine_factor: Option<u32>,
    inner_samples: Option<usize>,
    noise: Option<NoiseConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum NoiseConfig {
    Binary { b: f64 },
    Atoms { atoms: Vec<(f64, f64)> },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

fn argument_error(message: &str) -> ! {
    eprintln!("error: {message}");
    eprintln!("run `malcal --help` for usage");
    std::process::exit(2);
}

fn load_file_config(path: Option<&Path>) -> FileConfig {
    let Some(path) = path else {
        return FileConfig::default();
    };
    let text = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(err) => argument_error(&format!("cannot read config {}: {err}", path.display())),
    };
    match toml::from_str(&text) {
        Ok(config) => config,
        Err(err) => argument_error(&format!("invalid config {}: {err}", path.display())),
    }
}

/// Seed precedence: flag, then MALCAL_SEED, then config file, then 42.
fn resolve_seed(flag: Option<u64>, file: &FileConfig) -> u64 {
    if let Some(seed) = flag {
        return seed;
    }
    if let Ok(text) = std::env::var(SEED_ENV) {
        match text.parse() {
            Ok(seed) => return seed,
            Err(_) => argument_error(&format!("{SEED_ENV} must be an integer, got {text:?}")),
        }
    }
    file.seed.unwrap_or(DEFAULT_SEED)
}

fn configure_threads(flag: Option<usize>, file: &FileConfig) {
    if let Some(threads) = flag.or(file.threads) {
        if threads == 0 {
            argument_error("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .expect("thread pool is configured once at startup");
    }
}

fn resolve_format(flag: Option<Format>, file: &FileConfig) -> Format {
    if let Some(format) = flag {
        return format;
    }
    match file.format.as_deref() {
        Some("csv") => Format::Csv,
        Some("json") => Format::Json,
        Some(other) => argument_error(&format!("format must be csv or json, got {other:?}")),
        None => Format::Csv,
    }
}

fn validate_n_list(n_list: &[u32], min_points: usize) {
    if n_list.len() < min_points {
        argument_error(&format!(
            "--n-list needs at least {min_points} entries (the slope fit needs 3 points)"
        ));
    }
    if n_list.contains(&0) {
        argument_error("--n-list entries must be positive");
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        argument_error("--n-list must be strictly ascending");
    }
}

/// Write `body` to the output target; a real file also gets the JSON
/// summary sidecar when one is provided (stdout targets print it to
/// stderr to keep the data stream clean).
fn emit(output: Option<&str>, body: &str, summary: Option<&str>) -> malcal::Result<()> {
    match output {
        None | Some("-") => {
            print!("{body}");
            std::io::stdout().flush()?;
            if let Some(summary) = summary {
                eprintln!("{summary}");
            }
        }
        Some(path) => {
            std::fs::write(path, body)?;
            if let Some(summary) = summary {
                std::fs::write(format!("{path}.summary.json"), format!("{summary}\n"))?;
            }
        }
    }
    Ok(())
}

fn report_body(report: &ConvergenceReport, format: Format) -> String {
    match format {
        Format::Csv => report.to_csv(),
        Format::Json => {
            let mut text = serde_json::to_string_pretty(report).expect("report serialization");
            text.push('\n');
            text
        }
    }
}

fn run(command: Command) -> malcal::Result<ExitCode> {
    match command {
        Command::SkorokhodConvergence(args) => {
            let file = load_file_config(args.common.config.as_deref());
            let seed = resolve_seed(args.common.seed, &file);
            configure_threads(args.common.threads, &file);
            let format = resolve_format(args.common.format, &file);
            let n_values = args
                .n_list
                .or_else(|| file.n_list.clone())
                .unwrap_or_else(|| argument_error("--n-list is required"));
            validate_n_list(&n_values, 3);
            let config = SkorokhodConfig {
                b: args.b.or(file.b).unwrap_or(1.0),
                n_values,
                paths: args.paths.or(file.paths).unwrap_or(10_000),
                fine_factor: args.fine_factor.or(file.fine_factor).unwrap_or(64),
                seed,
            };
            eprintln!("config: {config:?}");
            let report = experiments::skorokhod_convergence(&config)?;
            eprintln!(
                "slope {:.4}, intercept {:.4}, r2 {:.4}, wall {:.1}s",
                report.slope, report.intercept, report.r_squared, report.wall_time_seconds
            );
            let output = args.common.output.or_else(|| file.output.clone());
            emit(
                output.as_deref(),
                &report_body(&report, format),
                Some(&report.summary_json()),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ClarkOcone(args) => {
            let file = load_file_config(args.common.config.as_deref());
            let seed = resolve_seed(args.common.seed, &file);
            configure_threads(args.common.threads, &file);
            let format = resolve_format(args.common.format, &file);
            let n_values = args
                .n_list
                .or_else(|| file.n_list.clone())
                .unwrap_or_else(|| argument_error("--n-list is required"));
            validate_n_list(&n_values, 3);
            let config = ClarkOconeConfig {
                n_values,
                paths: args.paths.or(file.paths).unwrap_or(2_000),
                fine_factor: args.fine_factor.or(file.fine_factor).unwrap_or(64),
                inner_samples: args.inner_samples.or(file.inner_samples).unwrap_or(256),
                seed,
            };
            eprintln!("config: {config:?}");
            let report = experiments::clark_ocone_convergence(&config)?;
            eprintln!(
                "slope {:.4}, intercept {:.4}, r2 {:.4}, wall {:.1}s",
                report.slope, report.intercept, report.r_squared, report.wall_time_seconds
            );
            let output = args.common.output.or_else(|| file.output.clone());
            emit(
                output.as_deref(),
                &report_body(&report, format),
                Some(&report.summary_json()),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ChaosEstimate(args) => {
            let file = load_file_config(args.common.config.as_deref());
            let seed = resolve_seed(args.common.seed, &file);
            configure_threads(args.common.threads, &file);
            let functional = ChaosFunctional::parse(&args.functional)?;
            let n = args
                .n
                .or_else(|| file.n_list.as_ref().and_then(|l| l.first().copied()))
                .unwrap_or_else(|| argument_error("--n is required"));
            let paths = args.paths.or(file.paths).unwrap_or(20_000);
            eprintln!(
                "config: functional={} order={} n={n} paths={paths} seed={seed}",
                functional.label(),
                args.order
            );
            let report = experiments::chaos_estimation(functional, args.order, n, paths, seed)?;
            eprintln!(
                "total error {:.6} (bias {:.6}, mc noise {:.6}); k0 {:.6} +- {:.6}",
                report.total_error,
                report.bias,
                report.mc_noise,
                report.k0_estimate,
                report.k0_stderr
            );
            let summary = format!(
                "{{\"functional\":\"{}\",\"k\":{},\"n\":{},\"paths\":{},\"seed\":{},\"total_error\":{},\"bias\":{},\"mc_noise\":{},\"k0_estimate\":{},\"k0_stderr\":{}}}",
                report.functional.label(),
                report.k,
                report.n,
                report.paths,
                report.seed,
                report.total_error,
                report.bias,
                report.mc_noise,
                report.k0_estimate,
                report.k0_stderr
            );
            let output = args.common.output.or_else(|| file.output.clone());
            emit(output.as_deref(), &report.estimate.to_csv(), Some(&summary))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::STransform(args) => {
            let file = load_file_config(args.common.config.as_deref());
            let seed = resolve_seed(args.common.seed, &file);
            configure_threads(args.common.threads, &file);
            let n_values = args
                .n_list
                .or_else(|| file.n_list.clone())
                .unwrap_or_else(|| argument_error("--n-list is required"));
            validate_n_list(&n_values, 1);
            let mc = match (args.mc_n, args.mc_paths) {
                (Some(n), paths) => Some(STransformMc {
                    n,
                    paths: paths.or(file.paths).unwrap_or(100_000),
                    b: args.b.or(file.b).unwrap_or(1.0),
                }),
                (None, Some(_)) => argument_error("--mc-paths needs --mc-n"),
                (None, None) => None,
            };
            eprintln!("config: n_list={n_values:?} mc={mc:?} seed={seed}");
            let g = StepFunction::indicator(0.0, 1.0);
            let rows = experiments::s_transform_table(&g, &g, &n_values, mc.as_ref(), seed)?;
            let mut body = String::from("n,exact,target,abs_error,mc_estimate,mc_stderr\n");
            for row in &rows {
                body.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    row.n,
                    row.exact,
                    row.target,
                    row.abs_error,
                    row.mc_estimate.map(|v| v.to_string()).unwrap_or_default(),
                    row.mc_stderr.map(|v| v.to_string()).unwrap_or_default(),
                ));
            }
            let output = args.common.output.or_else(|| file.output.clone());
            emit(output.as_deref(), &body, None)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ExactCheck(args) => {
            let file = load_file_config(args.common.config.as_deref());
            let seed = resolve_seed(args.common.seed, &file);
            configure_threads(args.common.threads, &file);
            let config = SuiteConfig {
                max_horizon: args.m.unwrap_or(10),
                b_values: args.b_list.unwrap_or_else(|| vec![1.0, 2.0]),
                instances: args.instances.unwrap_or(100),
                tolerance: args.tolerance.unwrap_or(1e-10),
                seed,
            };
            if config.max_horizon < 4 || config.max_horizon > 12 {
                argument_error("--m must lie in 4..=12");
            }
            eprintln!("config: {config:?}");
            let reports = run_suite(&config)?;
            let mut all_ok = true;
            let mut body = String::new();
            for report in &reports {
                let status = if report.passed() { "PASS" } else { "FAIL" };
                all_ok &= report.passed();
                body.push_str(&format!(
                    "{status} {} (max error {:.3e}, tolerance {:.0e}, {} instances)\n",
                    report.name, report.max_error, report.tolerance, report.instances
                ));
            }
            emit(args.common.output.as_deref(), &body, None)?;
            Ok(if all_ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::SimulatePaths(args) => {
            let file = load_file_config(args.common.config.as_deref());
            let seed = resolve_seed(args.common.seed, &file);
            configure_threads(args.common.threads, &file);
            let n = args.n.unwrap_or(4);
            let steps = args.steps.unwrap_or(n as usize);
            let fine_factor = args.fine_factor.or(file.fine_factor).unwrap_or(64);
            let custom = match (&file.noise, args.b) {
                (Some(NoiseConfig::Atoms { atoms }), None) => {
                    Some(NoiseSpec::custom(atoms.clone(), "config-atoms")?)
                }
                _ => None,
            };
            let body = match custom {
                Some(spec) => {
                    eprintln!(
                        "config: n={n} steps={steps} noise={} seed={seed}",
                        spec.label()
                    );
                    let mut rng = malcal::rng::stream_for(seed, 0, 0);
                    let walk = simulate_walk(&spec, n, steps, &mut rng)?;
                    dump_csv(&walk, None, None, seed)
                }
                None => {
                    let b = args
                        .b
                        .or(match &file.noise {
                            Some(NoiseConfig::Binary { b }) => Some(*b),
                            _ => file.b,
                        })
                        .unwrap_or(1.0);
                    eprintln!(
                        "config: n={n} steps={steps} b={b} fine_factor={fine_factor} seed={seed}"
                    );
                    let mut rng = malcal::rng::stream_for(seed, 0, 0);
                    let coupled =
                        simulate_coupled_binary(b, n, steps, &[], fine_factor, None, &mut rng)?;
                    dump_csv(&coupled.walk, Some(&coupled.passage_times), Some(b), seed)
                }
            };
            emit(args.common.output.as_deref(), &body, None)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
