//! Command-line front end: `emulate`, `calibrate`, `screen` and `bench`.

pub mod commands;
pub mod config;
pub mod error;
pub mod table;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{load_config, RunConfig};
use crate::error::CliResult;

#[derive(Parser, Debug)]
#[command(name = "robgasp", version, about = "GaSP emulation, calibration and screening")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Input design CSV.
    #[arg(long)]
    design: Option<PathBuf>,
    /// Output (response) CSV, one column.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any config key, e.g. `--set fit.tol=1e-8`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// `jr` or `reference`.
    #[arg(long)]
    prior: Option<String>,
    /// `matern-2.5`, `matern-<nu>`, `gaussian` or `pow-exp-<alpha>`.
    #[arg(long)]
    kernel: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a GaSP emulator and predict.
    Emulate {
        #[command(flatten)]
        common: Common,
        /// New inputs to predict at (defaults to the design).
        #[arg(long)]
        predict: Option<PathBuf>,
        /// `gamma`, `xi` or `beta`.
        #[arg(long)]
        parameterization: Option<String>,
        /// `constant`, `linear` or `zero`.
        #[arg(long)]
        mean: Option<String>,
        #[arg(long)]
        nugget: bool,
    },
    /// Bayesian calibration with a GaSP discrepancy.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Built-in computer model (`ex4`).
        #[arg(long)]
        example: Option<String>,
        /// Computer-model runs: field-input columns followed by θ columns.
        #[arg(long)]
        runs_design: Option<PathBuf>,
        #[arg(long)]
        runs_output: Option<PathBuf>,
        /// `lo:hi,lo:hi,…` per θ.
        #[arg(long)]
        theta_bounds: Option<String>,
        #[arg(long)]
        s: Option<usize>,
        #[arg(long)]
        s0: Option<usize>,
        #[arg(long)]
        predict: Option<PathBuf>,
    },
    /// Inert-input screening by normalized inverse ranges.
    Screen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        p0: Option<f64>,
        #[arg(long)]
        nugget: bool,
    },
    /// Benchmark experiments.
    Bench {
        #[command(flatten)]
        common: Common,
        /// `ex1-i` … `ex1-v`, `ex2-i`, `ex2-ii`, `ex3-i` … `ex3-iv`, `ex4`.
        #[arg(long)]
        case: Option<String>,
        #[arg(long)]
        replicates: Option<usize>,
        /// Full-size runs: 200 or 1000 replicates, n* = 10000, S = 100000.
        #[arg(long)]
        paper_scale: bool,
        /// `inverse-range` or `sobol` (screening cases).
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        n_star: Option<usize>,
    },
}

fn put<T: ToString>(map: &mut BTreeMap<String, String>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        map.insert(key.to_string(), v.to_string());
    }
}

fn path(p: Option<PathBuf>) -> Option<String> {
    p.map(|p| p.display().to_string())
}

fn merge(common: Common, extra: Vec<(&str, Option<String>)>) -> CliResult<RunConfig> {
    let mut map = match &common.config {
        Some(p) => load_config(p)?,
        None => BTreeMap::new(),
    };
    put(&mut map, "design", path(common.design));
    put(&mut map, "output", path(common.output));
    put(&mut map, "seed", common.seed);
    put(&mut map, "out", path(common.out));
    put(&mut map, "prior.kind", common.prior);
    put(&mut map, "model.kernel", common.kernel);
    for (k, v) in extra {
        put(&mut map, k, v);
    }
    for kv in common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| error::CliError::config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    RunConfig::from_map(&map)
}

fn flag(b: bool) -> Option<String> {
    b.then(|| "true".to_string())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Emulate {
            common,
            predict,
            parameterization,
            mean,
            nugget,
        } => {
            let cfg = merge(
                common,
                vec![
                    ("predict", path(predict)),
                    ("fit.parameterization", parameterization),
                    ("model.mean", mean),
                    ("model.nugget", flag(nugget)),
                ],
            )?;
            commands::cmd_emulate(&cfg)
        }
        Command::Calibrate {
            common,
            example,
            runs_design,
            runs_output,
            theta_bounds,
            s,
            s0,
            predict,
        } => {
            let cfg = merge(
                common,
                vec![
                    ("calibrate.example", example),
                    ("calibrate.runs_design", path(runs_design)),
                    ("calibrate.runs_output", path(runs_output)),
                    ("calibrate.theta_bounds", theta_bounds),
                    ("mcmc.s", s.map(|v| v.to_string())),
                    ("mcmc.s0", s0.map(|v| v.to_string())),
                    ("predict", path(predict)),
                ],
            )?;
            commands::cmd_calibrate(&cfg)
        }
        Command::Screen { common, p0, nugget } => {
            let cfg = merge(
                common,
                vec![("screen.p0", p0.map(|v| v.to_string())), ("model.nugget", flag(nugget))],
            )?;
            commands::cmd_screen(&cfg)
        }
        Command::Bench {
            common,
            case,
            replicates,
            paper_scale,
            method,
            n,
            n_star,
        } => {
            let cfg = merge(
                common,
                vec![
                    ("bench.case", case),
                    ("bench.replicates", replicates.map(|v| v.to_string())),
                    ("bench.paper_scale", flag(paper_scale)),
                    ("bench.method", method),
                    ("bench.n", n.map(|v| v.to_string())),
                    ("bench.n_star", n_star.map(|v| v.to_string())),
                ],
            )?;
            commands::cmd_bench(&cfg)
        }
    }
}

/// Runs the CLI and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return 0;
            }
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("invalid command line");
            eprintln!("error[E_CONFIG]: {}", first.trim_start_matches("error: "));
            eprint!("{}", text.lines().skip(1).collect::<Vec<_>>().join("\n"));
            eprintln!();
            return 2;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
