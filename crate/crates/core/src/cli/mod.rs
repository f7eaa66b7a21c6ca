//! Command-line front end: `odeng solve | eff | sens | validate`.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::problem::Estimator;
use commands::{CommonOpts, SensOpts};

#[derive(Debug, Parser)]
#[command(
    name = "odeng",
    version,
    about = "Optimal sampling designs for random-effect models with correlated errors"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output directory for result files.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Override `density.quad_nodes`.
    #[arg(long)]
    pub quad_nodes: Option<usize>,
    /// Override `density.seed` (also the Monte-Carlo seed of `validate`).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EstimatorArg {
    Ols,
    Wls,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Ols => Estimator::Ols,
            EstimatorArg::Wls => Estimator::Wls,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize the design density, extract and refine the exact design.
    Solve {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// OLS and WLS efficiencies of a design.
    Eff {
        config: PathBuf,
        /// JSON array of sampling times.
        #[arg(long)]
        design: PathBuf,
        /// Reference design; defaults to the refined exact optimum.
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Efficiency of a design over a grid of nominal parameters.
    Sens {
        config: PathBuf,
        #[arg(long)]
        design: PathBuf,
        /// Intervals for the two grid axes, e.g. `0.7:1.3,0.35:0.65`.
        #[arg(long = "box")]
        bounds: String,
        /// Nodes per axis: `N` or `N,M`.
        #[arg(long, default_value = "5")]
        grid: String,
        /// 1-based parameter indices spanned by the grid.
        #[arg(long, default_value = "1,2")]
        axes: String,
        #[arg(long, value_enum, default_value = "ols")]
        estimator: EstimatorArg,
        #[command(flatten)]
        common: Common,
    },
    /// Compare the analytic OLS covariance with a Monte-Carlo estimate.
    Validate {
        config: PathBuf,
        #[arg(long)]
        design: PathBuf,
        /// Number of simulated subjects.
        #[arg(long, default_value_t = 200_000)]
        k: usize,
        #[command(flatten)]
        common: Common,
    },
}

fn opts(c: &Common) -> CommonOpts {
    CommonOpts {
        out: c.out.clone(),
        quad_nodes: c.quad_nodes,
        seed: c.seed,
    }
}

fn flag_err(flag: &str, msg: impl Into<String>) -> Error {
    Error::config(format!("--{flag}"), msg)
}

fn parse_pair<T: std::str::FromStr>(flag: &str, text: &str) -> Result<(T, T)> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let parse = |s: &str| {
        s.parse::<T>()
            .map_err(|_| flag_err(flag, format!("cannot parse `{s}`")))
    };
    match parts.as_slice() {
        [a] => {
            let v = parse(a)?;
            let w = parse(a)?;
            Ok((v, w))
        }
        [a, b] => Ok((parse(a)?, parse(b)?)),
        _ => Err(flag_err(
            flag,
            format!("expected one or two comma-separated values, got `{text}`"),
        )),
    }
}

/// Parses `lo:hi,lo:hi`.
pub fn parse_box(text: &str) -> Result<[(f64, f64); 2]> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(flag_err("box", format!("expected `lo:hi,lo:hi`, got `{text}`")));
    }
    let mut out = [(0.0, 0.0); 2];
    for (slot, part) in out.iter_mut().zip(parts) {
        let (a, b) = part
            .split_once(':')
            .ok_or_else(|| flag_err("box", format!("expected `lo:hi`, got `{part}`")))?;
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| flag_err("box", format!("cannot parse `{s}`")))
        };
        *slot = (num(a)?, num(b)?);
    }
    Ok(out)
}

fn emit<T: serde::Serialize>(value: &T) {
    match serde_json::to_string_pretty(value) {
        Ok(s) => println!("{s}"),
        Err(e) => eprintln!("failed to render report: {e}"),
    }
}

/// Runs a parsed command; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            let diag = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{diag}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve { config, common } => {
            let (report, json, csv) = commands::cmd_solve(&config, &opts(&common))?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            emit(&report);
            eprintln!("wrote {} and {}", json.display(), csv.display());
        }
        Command::Eff {
            config,
            design,
            reference,
            common,
        } => {
            let (report, path) = commands::cmd_efficiency(&config, &design, reference.as_deref(), &opts(&common))?;
            emit(&report);
            eprintln!("wrote {}", path.display());
        }
        Command::Sens {
            config,
            design,
            bounds,
            grid,
            axes,
            estimator,
            common,
        } => {
            let (a, b): (usize, usize) = parse_pair("axes", &axes)?;
            if a == 0 || b == 0 {
                return Err(flag_err("axes", "indices are 1-based"));
            }
            let sens = SensOpts {
                axes: (a - 1, b - 1),
                boxes: parse_box(&bounds)?,
                grid: parse_pair("grid", &grid)?,
                estimator: estimator.into(),
            };
            let (g, path) = commands::cmd_sensitivity(&config, &design, &sens, &opts(&common))?;
            print!("{}", g.to_csv());
            for n in g.nodes.iter().filter(|n| n.error.is_some()) {
                eprintln!(
                    "warning: node {:?} failed: {}",
                    n.beta,
                    n.error.as_deref().unwrap_or("")
                );
            }
            eprintln!("wrote {}", path.display());
        }
        Command::Validate {
            config,
            design,
            k,
            common,
        } => {
            let o = opts(&common);
            let loaded = commands::load(&config, &o)?;
            let seed = common.seed.unwrap_or(loaded.config.density.seed);
            let (report, path) = commands::cmd_validate(&config, &design, k, seed, &o)?;
            emit(&report);
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_box_and_pairs() {
        assert_eq!(parse_box("0.7:1.3,0.35:0.65").unwrap(), [(0.7, 1.3), (0.35, 0.65)]);
        assert!(parse_box("0.7:1.3").is_err());
        assert!(parse_box("a:1,0:1").is_err());
        assert_eq!(parse_pair::<usize>("grid", "5").unwrap(), (5, 5));
        assert_eq!(parse_pair::<usize>("grid", "3,4").unwrap(), (3, 4));
        assert!(parse_pair::<usize>("grid", "3,4,5").is_err());
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
