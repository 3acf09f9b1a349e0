//! Command-line entry point. The only environment override is
//! `RAYON_NUM_THREADS`, which sets the worker count.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use jd_bermudan::analytic::{bs_min_put, bs_min_put_delta, merton_put_1d, EuroPricerConfig};
use jd_bermudan::model::ModelParams;
use jd_bermudan::{reproduce_table, run_experiment, ExperimentConfig, TableOptions};

#[derive(Parser)]
#[command(
    name = "jd-bermudan",
    version,
    about = "Bermudan min-put bounds under jump-diffusion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its JSON report.
    Run {
        /// JSON configuration; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the root seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute a reference table as CSV.
    Table {
        /// One of 5.1, 5.2, 5.4.
        #[arg(long)]
        id: String,
        /// Sample-size factor in (0, 1].
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include the two-asset rows of table 5.1.
        #[arg(long)]
        n2: bool,
        #[arg(long, default_value_t = TableOptions::default().seed)]
        seed: u64,
    },
    /// Print the closed-form European prices at time zero.
    PriceEuro {
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// Spot prices, comma separated; one value is broadcast to all assets.
        #[arg(long, value_delimiter = ',', default_value = "40")]
        x: Vec<f64>,
        /// Time to maturity.
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
    },
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, seed, out } => {
            let mut cfg = match &config {
                Some(p) => {
                    let text = std::fs::read_to_string(p)
                        .with_context(|| format!("reading {}", p.display()))?;
                    ExperimentConfig::from_json(&text)?
                }
                None => ExperimentConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let report = run_experiment(&cfg)?;
            emit(&report.to_json()?, out.as_ref())
        }
        Command::Table {
            id,
            scale,
            out,
            n2,
            seed,
        } => {
            let opts = TableOptions {
                scale,
                include_n2: n2,
                seed,
            };
            let report = reproduce_table(&id, &opts)?;
            emit(&report.to_csv()?, out.as_ref())
        }
        Command::PriceEuro { n, x, tau, lambda } => {
            let x = match x.len() {
                1 => vec![x[0]; n],
                len if len == n => x,
                len => anyhow::bail!("expected 1 or {n} spot values, got {len}"),
            };
            let mut params = ModelParams::table(n, lambda, x[0]);
            params.x0 = x.clone();
            params.maturity = tau;
            let cfg = EuroPricerConfig::default();
            println!(
                "bs_min_put {:.10}",
                bs_min_put(0.0, &x, tau, &params, &cfg)?
            );
            for i in 0..n {
                println!(
                    "delta_{i} {:.10}",
                    bs_min_put_delta(0.0, &x, tau, i, &params, &cfg)?
                );
            }
            if n == 1 {
                println!(
                    "merton_put {:.10}",
                    merton_put_1d(0.0, x[0], tau, &params, &cfg)?
                );
            }
            Ok(())
        }
    }
}
