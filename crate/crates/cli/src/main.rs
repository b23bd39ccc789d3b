//! `navspell`: train the language model, run the Monte Carlo grid or the
//! favour/oppose experiment, or serve live sessions.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error, 64 bad
//! command line.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use navspell_core::config::RunConfig;
use navspell_core::prior::NgramModel;
use navspell_core::report::write_report;
use navspell_core::sim::{favor_oppose_experiment, run_monte_carlo};
use navspell_service::ServiceConfig;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "navspell", version, about = "Bayesian intent decoding for grid-keyboard navigation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArg {
    /// Run configuration file (TOML). Defaults apply when omitted.
    #[arg(long, env = "NAVSPELL_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Monte Carlo runs per cell (`grid.runs`).
    #[arg(long)]
    runs: Option<usize>,
    /// Base seed (`seeds.base`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (`output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the character n-gram model and write it to a file.
    TrainLm {
        #[command(flatten)]
        config: ConfigArg,
        /// Training text (`lm.corpus`); the bundled corpus when omitted.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Model order (`lm.order`).
        #[arg(long)]
        order: Option<usize>,
        /// Add-alpha smoothing constant (`lm.alpha`).
        #[arg(long)]
        alpha: Option<f64>,
        /// Model file to write (`lm.model`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the profile x model x criterion grid and write `simulation.csv`.
    Simulate(GridArgs),
    /// Run the favour/oppose prior experiment and write `favor.csv`, `oppose.csv`.
    Experiment {
        #[command(flatten)]
        grid: GridArgs,
        /// Synthetic prior strength (`experiment.strength`).
        #[arg(long)]
        strength: Option<f64>,
    },
    /// Serve live sessions over HTTP and WebSocket.
    Serve {
        #[command(flatten)]
        config: ConfigArg,
        /// Listen address (`service.host`).
        #[arg(long)]
        host: Option<String>,
        /// Listen port (`service.port`).
        #[arg(long)]
        port: Option<u16>,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn load(arg: &ConfigArg) -> Result<RunConfig, Failure> {
    match &arg.config {
        Some(path) => RunConfig::load(path).map_err(config_err),
        None => Ok(RunConfig::default()),
    }
}

fn apply_grid_overrides(cfg: &mut RunConfig, args: &GridArgs) -> Result<PathBuf, Failure> {
    if let Some(runs) = args.runs {
        cfg.grid.runs = runs;
    }
    if let Some(seed) = args.seed {
        cfg.seeds.base = seed;
    }
    if cfg.grid.runs == 0 {
        return Err(config_err("runs must be at least 1"));
    }
    Ok(args.out.clone().unwrap_or_else(|| cfg.output_dir()))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| runtime_err(format!("{}: {e}", dir.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::TrainLm {
            config,
            corpus,
            order,
            alpha,
            out,
        } => {
            let mut cfg = load(&config)?;
            if let Some(c) = corpus {
                cfg.lm.corpus = Some(c);
                cfg.lm.model = None;
            }
            if let Some(o) = order {
                cfg.lm.order = o;
            }
            if let Some(a) = alpha {
                cfg.lm.alpha = a;
            }
            let out = match out {
                Some(p) => p,
                None => cfg
                    .lm
                    .model
                    .as_ref()
                    .map(|m| cfg.resolve(m))
                    .ok_or_else(|| config_err("no output file: pass --out or set lm.model"))?,
            };
            cfg.lm.model = None;
            let graph = cfg.build_graph().map_err(config_err)?;
            let lm: NgramModel = cfg.build_language_model(&graph).map_err(config_err)?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                create_dir(parent)?;
            }
            lm.save(&out).map_err(runtime_err)?;
            eprintln!("wrote {}", out.display());
        }
        Command::Simulate(args) => {
            let mut cfg = load(&args.config)?;
            let out = apply_grid_overrides(&mut cfg, &args)?;
            let plan = cfg.monte_carlo_plan().map_err(config_err)?;
            let report = run_monte_carlo(&plan).map_err(runtime_err)?;
            create_dir(&out)?;
            let summary = write_report(&report, &out.join("simulation.csv")).map_err(runtime_err)?;
            eprintln!("wrote {} rows to {} (summary {})", report.rows.len(), out.join("simulation.csv").display(), summary.display());
        }
        Command::Experiment { grid, strength } => {
            let mut cfg = load(&grid.config)?;
            let out = apply_grid_overrides(&mut cfg, &grid)?;
            if let Some(s) = strength {
                cfg.experiment.strength = s;
            }
            let plan = cfg.experiment_plan().map_err(config_err)?;
            let report = favor_oppose_experiment(&plan, cfg.experiment.strength).map_err(runtime_err)?;
            create_dir(&out)?;
            for (name, r) in [("favor", &report.favor), ("oppose", &report.oppose)] {
                let path = out.join(format!("{name}.csv"));
                write_report(r, &path).map_err(runtime_err)?;
                eprintln!("wrote {}", path.display());
            }
        }
        Command::Serve { config, host, port } => {
            let mut cfg = load(&config)?;
            if let Some(h) = host {
                cfg.service.host = h;
            }
            if let Some(p) = port {
                cfg.service.port = p;
            }
            let addr: SocketAddr = format!("{}:{}", cfg.service.host, cfg.service.port)
                .parse()
                .map_err(|e| config_err(format!("bad listen address: {e}")))?;
            let service = ServiceConfig::from_run_config(&cfg).map_err(config_err)?;
            let rt = tokio::runtime::Runtime::new().map_err(runtime_err)?;
            eprintln!("serving on http://{addr}");
            rt.block_on(navspell_service::serve(addr, service)).map_err(runtime_err)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
