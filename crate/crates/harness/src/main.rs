//! `adaptinf` command-line interface.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error (including
//! a failed replication, which leaves partial output behind).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use adaptinf::invert::Statistic;
use adaptinf::limit_exp::{LimitStatistic, PowerStudy};
use adaptinf_harness::commands::{run_command, run_limit, CommandError, Kind, LimitOptions, RunOptions};
use adaptinf_harness::config::{load_config, ConfigError, Scenario};
use adaptinf_harness::limit::{parse_h_grid, parse_sigma};
use adaptinf_harness::report::report_plots;
use adaptinf_harness::runner::resolve_threads;

#[derive(Parser)]
#[command(name = "adaptinf", version, about = "Simulation and inference for adaptive experiments")]
struct Cli {
    /// Worker threads (the ADAPTINF_THREADS environment variable takes
    /// precedence; default: available parallelism). Results do not depend
    /// on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario file (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// First replication to run.
    #[arg(long)]
    rep_start: Option<u64>,
    /// One past the last replication to run (default: `replications.outer`).
    #[arg(long)]
    rep_end: Option<u64>,
    /// Overrides `alpha`.
    #[arg(long)]
    alpha: Option<f64>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `replications.outer`.
    #[arg(long)]
    reps: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trajectories; one row per replication with arm counts and
    /// means.
    Simulate(ScenarioArgs),
    /// Wald-interval coverage, width and rejection rate per estimator.
    Coverage(ScenarioArgs),
    /// Normality diagnostics of standardized estimators against the limit
    /// law.
    Distribution(ScenarioArgs),
    /// Time-uniform miscoverage and widths of confidence sequences.
    Confseq(ScenarioArgs),
    /// Coverage of confidence sets by Monte Carlo test inversion.
    Invert {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Grid points per axis.
        #[arg(long)]
        grid_n: Option<usize>,
        /// Replays per hypothesis.
        #[arg(long)]
        inner_reps: Option<u64>,
        /// Test statistic (em-diff, ipw-diff, aipw-score, arm-mean-abs:K).
        #[arg(long)]
        statistic: Option<String>,
        /// Coarse step for two-pass sets.
        #[arg(long)]
        refine: Option<usize>,
        /// Replications for which whole sets are written.
        #[arg(long)]
        full_sets: Option<u64>,
    },
    /// Power of tests in the two-batch limit experiment against the
    /// likelihood-ratio envelope.
    LimitExp {
        /// Alternatives: `a:b` for (h1, h2), or `d` for (-d/2, d/2),
        /// separated by commas.
        #[arg(long, default_value = "0,0.5,1,1.5,2,2.5,3,3.5,4")]
        h_grid: String,
        /// Outcome standard deviations, one or two values.
        #[arg(long, default_value = "1")]
        sigma: String,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Draws per grid point (and for the null calibration).
        #[arg(long, default_value_t = 1_000_000)]
        reps: u64,
        /// Statistics (dim, dim-literal, zjm, zjm-literal), comma separated.
        #[arg(long, default_value = "dim,zjm")]
        statistic: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, short, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Plot-ready CSVs from the outputs of earlier commands.
    Report {
        /// Directory holding earlier outputs.
        #[arg(long, short)]
        input: PathBuf,
        /// Where to write the plot files (default: the input directory).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn config_error(key: &str, message: impl ToString) -> CommandError {
    ConfigError::Semantic {
        key: key.into(),
        message: message.to_string(),
    }
    .into()
}

fn load(args: &ScenarioArgs, threads: usize) -> Result<(Scenario, RunOptions), CommandError> {
    let mut s = load_config(&args.config)?;
    if let Some(a) = args.alpha {
        s.alpha = a;
    }
    if let Some(seed) = args.seed {
        s.seed = seed;
    }
    if let Some(r) = args.reps {
        s.replications.outer = r;
    }
    let opts = RunOptions {
        threads,
        out: args.out.clone(),
        rep_start: args.rep_start,
        rep_end: args.rep_end,
    };
    Ok((s, opts))
}

fn run(cli: Cli) -> Result<(), CommandError> {
    let threads = resolve_threads(cli.threads);
    match cli.command {
        Command::Simulate(a) => {
            let (s, o) = load(&a, threads)?;
            run_command(Kind::Simulate, &s, &o)?;
        }
        Command::Coverage(a) => {
            let (s, o) = load(&a, threads)?;
            run_command(Kind::Coverage, &s, &o)?;
        }
        Command::Distribution(a) => {
            let (s, o) = load(&a, threads)?;
            run_command(Kind::Distribution, &s, &o)?;
        }
        Command::Confseq(a) => {
            let (s, o) = load(&a, threads)?;
            run_command(Kind::Confseq, &s, &o)?;
        }
        Command::Invert {
            scenario,
            grid_n,
            inner_reps,
            statistic,
            refine,
            full_sets,
        } => {
            let (mut s, o) = load(&scenario, threads)?;
            if let Some(r) = inner_reps {
                s.replications.inner = r;
            }
            let inv = s
                .inversion
                .as_mut()
                .ok_or_else(|| config_error("inversion", "the `invert` command needs an [inversion] section"))?;
            if let Some(n) = grid_n {
                inv.grid_n = n;
            }
            if let Some(st) = statistic {
                Statistic::parse(&st).map_err(|e| config_error("statistic", e))?;
                inv.statistic = st;
            }
            if let Some(step) = refine {
                inv.refine = Some(step);
            }
            if let Some(f) = full_sets {
                inv.full_sets = f;
            }
            run_command(Kind::Invert, &s, &o)?;
        }
        Command::LimitExp {
            h_grid,
            sigma,
            alpha,
            reps,
            statistic,
            seed,
            out,
            quiet,
        } => {
            let h_grid = parse_h_grid(&h_grid).map_err(|e| config_error("h-grid", e))?;
            let sigma = parse_sigma(&sigma).map_err(|e| config_error("sigma", e))?;
            let stats = statistic
                .split(',')
                .map(|s| LimitStatistic::parse(s.trim()))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| config_error("statistic", e))?;
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(config_error("alpha", "must lie in (0, 1)"));
            }
            let opts = LimitOptions {
                study: PowerStudy { sigma, alpha, reps, seed },
                stats,
                h_grid,
                threads,
                out,
                quiet,
            };
            run_limit(&opts)?;
        }
        Command::Report { input, out } => {
            let out = out.unwrap_or_else(|| input.clone());
            let m = report_plots(&input, &out)?;
            for w in &m.written {
                eprintln!("wrote {} ({} rows)", w.file, w.rows);
            }
            for o in &m.omitted {
                eprintln!("omitted {}: {}", o.file, o.reason);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
