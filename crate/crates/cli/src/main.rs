//! `trignet` — small-gain analysis and event-triggered control simulation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use trignet_cli::commands::{self, RunOptions};
use trignet_cli::CliError;
use trignet_core::sim::{HatInit, PeriodicProtocol, Scheme};

#[derive(Parser)]
#[command(
    name = "trignet",
    about = "Certify small-gain conditions, build triggering thresholds, and simulate \
             event-triggered distributed control loops",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive gains, certify the small-gain condition, and print thresholds.
    Analyze {
        /// System configuration file (JSON).
        config: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Simulate the closed loop under one scheme.
    Simulate {
        /// System configuration file (JSON).
        config: PathBuf,
        /// basic | practical | parsimonious | periodic | roundrobin
        #[arg(long)]
        scheme: String,
        /// Refresh period for the baseline schemes.
        #[arg(long)]
        period: Option<f64>,
        #[command(flatten)]
        run: RunArgs,
        /// Run a baseline even when the small-gain analysis fails.
        #[arg(long)]
        force: bool,
        /// Output prefix: writes <prefix>.csv and <prefix>.metrics.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write <prefix>.svg with state norms and event rasters.
        #[arg(long)]
        svg: bool,
        /// Reserved for stochastic variants; simulations are deterministic.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run every applicable scheme on a matched horizon and tabulate.
    Compare {
        /// System configuration file (ignored with --batch).
        config: Option<PathBuf>,
        /// Refresh period for the baseline schemes.
        #[arg(long)]
        period: f64,
        #[command(flatten)]
        run: RunArgs,
        /// Batch mode: generate this many instances instead of reading a config.
        #[arg(long)]
        batch: Option<u64>,
        /// Subsystem count for --batch.
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Per-subsystem dimension for --batch.
        #[arg(long, default_value_t = 3)]
        dim: usize,
        /// Draw bound for --batch.
        #[arg(long, default_value_t = 5.0)]
        bound: f64,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw random interconnections until the small-gain condition certifies.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Entries are drawn from U(-bound, bound).
        #[arg(long, default_value_t = 5.0)]
        bound: f64,
        /// Draw nonzero cross-coupling gains K_ij, i != j.
        #[arg(long)]
        dense_k: bool,
        /// Output configuration file.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 1.0)]
    t_end: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Initial state as comma-separated components (defaults to the
    /// benchmark state for the nonlinear example, a deterministic vector
    /// otherwise).
    #[arg(long)]
    x0: Option<String>,
    /// copy (xhat(0) = x(0)) or zero (xhat(0) = 0).
    #[arg(long, default_value = "copy")]
    xhat0: String,
    /// Store every k-th trace row.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Practical dead-band level as a fraction of the initial V.
    #[arg(long, default_value_t = 0.01)]
    practical_level: f64,
    /// Explicit practical constants c_i (comma separated), overriding the level.
    #[arg(long)]
    practical_c: Option<String>,
    /// Zeno gap floor (defaults to 2*dt).
    #[arg(long)]
    zeno_gap_floor: Option<f64>,
    #[arg(long, default_value_t = 50)]
    zeno_window_count: usize,
}

fn parse_f64_list(text: &str, flag: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| CliError::validation(format!("{flag}: {e}")))
        })
        .collect()
}

impl RunArgs {
    fn to_options(&self) -> Result<RunOptions, CliError> {
        let xhat0 = match self.xhat0.as_str() {
            "copy" => HatInit::CopyOfX0,
            "zero" => HatInit::Zero,
            other => {
                return Err(CliError::validation(format!(
                    "--xhat0 must be 'copy' or 'zero', got '{other}'"
                )))
            }
        };
        Ok(RunOptions {
            t_end: self.t_end,
            dt: self.dt,
            x0: self
                .x0
                .as_deref()
                .map(|s| parse_f64_list(s, "--x0"))
                .transpose()?,
            xhat0,
            stride: self.stride,
            practical_level: self.practical_level,
            practical_c: self
                .practical_c
                .as_deref()
                .map(|s| parse_f64_list(s, "--practical-c"))
                .transpose()?,
            zeno_gap_floor: self.zeno_gap_floor,
            zeno_window_count: self.zeno_window_count,
        })
    }
}

fn parse_scheme(name: &str, period: Option<f64>, t_end: f64) -> Result<Scheme, CliError> {
    let default_period = || period.unwrap_or(t_end / 100.0);
    match name {
        "basic" => Ok(Scheme::Basic),
        "practical" => Ok(Scheme::Practical),
        "parsimonious" => Ok(Scheme::Parsimonious),
        "periodic" => Ok(Scheme::Periodic {
            period: default_period(),
            protocol: PeriodicProtocol::AllAtOnce,
        }),
        "roundrobin" => Ok(Scheme::RoundRobin { period: default_period() }),
        other => Err(CliError::validation(format!(
            "unknown scheme '{other}' (expected basic|practical|parsimonious|periodic|roundrobin)"
        ))),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze { config, json } => commands::cmd_analyze(&config, json.as_deref()),
        Command::Simulate { config, scheme, period, run, force, out, svg, seed: _seed } => {
            let opts = run.to_options()?;
            let scheme = parse_scheme(&scheme, period, opts.t_end)?;
            commands::cmd_simulate(&config, scheme, &opts, force, out.as_deref(), svg)
        }
        Command::Compare { config, period, run, batch, n, dim, bound, out } => {
            let opts = run.to_options()?;
            match batch {
                Some(seeds) => commands::cmd_compare_batch(
                    seeds,
                    n,
                    dim,
                    bound,
                    period,
                    &opts,
                    out.as_deref(),
                ),
                None => {
                    let config = config.ok_or_else(|| {
                        CliError::validation("compare needs a config file (or --batch)")
                    })?;
                    commands::cmd_compare(&config, period, &opts, out.as_deref())
                }
            }
        }
        Command::Generate { n, dim, seed, bound, dense_k, out } => {
            commands::cmd_generate(n, dim, seed, bound, dense_k, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
