//! Subcommand bodies: run a scenario and write its tables.
//!
//! Every command writes the scenario it ran (defaults filled in) as
//! `scenario.toml` next to its tables. A failed replication leaves the
//! tables of the completed replications and a `PARTIAL.json` marker naming
//! the replication to resume from with `--rep-start`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;

use adaptinf::limit_exp::{LimitStatistic, PowerStudy};
use adaptinf::mc::with_threads;

use crate::config::{ConfigError, Scenario};
use crate::estimation::{distribution_table, replication_table, run_scenario, simulate_table, summary_table};
use crate::inversion::{inversion_replications, inversion_summary, run_inversion, set_table, sets_json};
use crate::limit::{power_table, run_power, threshold_table};
use crate::runner::Partial;
use crate::sequences::{run_sequences, sequence_replications, sequence_summary, width_table};
use crate::table::ResultTable;

/// Failure classes mapped to exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0:#}")]
    Runtime(#[from] anyhow::Error),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) => 2,
            CommandError::Runtime(_) => 3,
        }
    }
}

impl From<adaptinf::Error> for CommandError {
    fn from(e: adaptinf::Error) -> Self {
        CommandError::Runtime(e.into())
    }
}

/// Options shared by the scenario subcommands.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub threads: usize,
    pub out: Option<PathBuf>,
    pub rep_start: Option<u64>,
    pub rep_end: Option<u64>,
}

impl RunOptions {
    fn range(&self, scenario: &Scenario) -> Result<std::ops::Range<u64>, CommandError> {
        let start = self.rep_start.unwrap_or(0);
        let end = self.rep_end.unwrap_or(scenario.replications.outer);
        if start > end {
            return Err(ConfigError::Semantic {
                key: "rep-start".into(),
                message: format!("start {start} exceeds end {end}"),
            }
            .into());
        }
        Ok(start..end)
    }

    fn dir(&self, scenario: &Scenario) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(&scenario.output.dir))
    }
}

/// Tables produced by one command, by file stem.
#[derive(Debug, Default)]
pub struct Written {
    pub tables: Vec<(String, ResultTable)>,
    /// Other files by name, already rendered.
    pub files: Vec<(String, String)>,
    pub partial: Option<Partial>,
}

impl Written {
    pub fn get(&self, stem: &str) -> Option<&ResultTable> {
        self.tables.iter().find(|(s, _)| s == stem).map(|(_, t)| t)
    }
}

#[derive(Serialize)]
struct PartialMarker<'a> {
    next_rep: u64,
    error: &'a str,
    resume: String,
}

fn prepare(dir: &Path, scenario: &Scenario) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let marker = dir.join("PARTIAL.json");
    if marker.exists() {
        std::fs::remove_file(&marker)?;
    }
    std::fs::write(dir.join("scenario.toml"), scenario.to_toml())?;
    Ok(())
}

fn write_csv(dir: &Path, stem: &str, t: &ResultTable) -> anyhow::Result<()> {
    std::fs::write(dir.join(format!("{stem}.csv")), t.to_csv()).with_context(|| format!("writing {stem}.csv"))
}

fn write_json(dir: &Path, stem: &str, t: &ResultTable) -> anyhow::Result<()> {
    std::fs::write(dir.join(format!("{stem}.json")), t.to_json()).with_context(|| format!("writing {stem}.json"))
}

fn finish(dir: &Path, written: &Written) -> Result<(), CommandError> {
    if let Some(p) = &written.partial {
        let m = PartialMarker {
            next_rep: p.next,
            error: &p.error,
            resume: format!("--rep-start {}", p.next),
        };
        std::fs::write(
            dir.join("PARTIAL.json"),
            serde_json::to_string_pretty(&m).map_err(anyhow::Error::from)? + "\n",
        )
        .map_err(anyhow::Error::from)?;
        return Err(anyhow::anyhow!(
            "replication {} failed: {}; partial output in {} (resume with --rep-start {})",
            p.next,
            p.error,
            dir.display(),
            p.next
        )
        .into());
    }
    Ok(())
}

fn timed<R: Send>(label: &str, threads: usize, f: impl FnOnce() -> R + Send) -> R {
    let start = Instant::now();
    let r = with_threads(threads, f);
    eprintln!("{label}: {:.2} s on {threads} worker(s)", start.elapsed().as_secs_f64());
    r
}

/// Runs `kind` on `scenario` without touching the file system.
pub fn compute(kind: Kind, scenario: &Scenario, opts: &RunOptions) -> Result<Written, CommandError> {
    let range = opts.range(scenario)?;
    let threads = opts.threads.max(1);
    let mut w = Written::default();
    match kind {
        Kind::Simulate => {
            let (t, _, partial) = timed("simulate", threads, || simulate_table(scenario, range));
            w.tables.push(("simulate".into(), t));
            w.partial = partial;
        }
        Kind::Coverage | Kind::Distribution => {
            let run = timed(kind.name(), threads, || run_scenario(scenario, range))?;
            w.tables.push(("summary".into(), summary_table(scenario, &run)?));
            if kind == Kind::Distribution && run.partial.is_none() {
                w.tables.push((
                    "distribution".into(),
                    timed("distribution tables", threads, || distribution_table(scenario, &run))?,
                ));
            }
            if scenario.output.per_replication {
                w.tables.push(("replications".into(), replication_table(&run)));
            }
            w.partial = run.partial;
        }
        Kind::Confseq => {
            let run = timed("confseq", threads, || run_sequences(scenario, range))?;
            w.tables.push(("confseq_summary".into(), sequence_summary(scenario, &run)?));
            w.tables.push(("cs_widths".into(), width_table(scenario, &run)?));
            if scenario.output.per_replication {
                w.tables
                    .push(("confseq_replications".into(), sequence_replications(scenario, &run)?));
            }
            w.partial = run.partial;
        }
        Kind::Invert => {
            let run = timed("invert", threads, || run_inversion(scenario, range))?;
            w.tables.push(("invert_summary".into(), inversion_summary(&run)));
            w.tables.push(("sets".into(), set_table(&run)));
            if run.reps.iter().any(|r| r.full.is_some()) {
                w.files.push(("sets.json".into(), sets_json(&run)));
            }
            if scenario.output.per_replication {
                w.tables.push(("invert_replications".into(), inversion_replications(&run)));
            }
            w.partial = run.partial;
        }
    }
    Ok(w)
}

/// Scenario subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Simulate,
    Coverage,
    Distribution,
    Confseq,
    Invert,
}

impl Kind {
    pub fn name(&self) -> &'static str {
        match self {
            Kind::Simulate => "simulate",
            Kind::Coverage => "coverage",
            Kind::Distribution => "distribution",
            Kind::Confseq => "confseq",
            Kind::Invert => "invert",
        }
    }

    fn required_section(&self, s: &Scenario) -> Result<(), ConfigError> {
        let (key, present) = match self {
            Kind::Simulate => return Ok(()),
            Kind::Coverage | Kind::Distribution => ("estimation", s.estimation.is_some()),
            Kind::Confseq => ("confseq", s.confseq.is_some()),
            Kind::Invert => ("inversion", s.inversion.is_some()),
        };
        if present {
            Ok(())
        } else {
            Err(ConfigError::Semantic {
                key: key.into(),
                message: format!("the `{}` command needs a [{key}] section", self.name()),
            })
        }
    }
}

/// Runs a scenario command and writes its outputs. The summary table is
/// echoed to stdout unless the scenario asks for quiet output.
pub fn run_command(kind: Kind, scenario: &Scenario, opts: &RunOptions) -> Result<Written, CommandError> {
    kind.required_section(scenario)?;
    scenario.validate()?;
    let dir = opts.dir(scenario);
    prepare(&dir, scenario)?;
    let written = compute(kind, scenario, opts)?;
    for (stem, t) in &written.tables {
        write_csv(&dir, stem, t)?;
        if matches!(stem.as_str(), "summary" | "distribution" | "confseq_summary" | "invert_summary") {
            write_json(&dir, stem, t)?;
        }
    }
    for (name, text) in &written.files {
        std::fs::write(dir.join(name), text).map_err(anyhow::Error::from)?;
    }
    if kind == Kind::Simulate && scenario.output.trajectories > 0 {
        write_trajectories(&dir, scenario, opts)?;
    }
    if !scenario.output.quiet {
        if let Some((_, t)) = written.tables.first() {
            print!("{}", t.to_csv());
            std::io::stdout().flush().ok();
        }
    }
    finish(&dir, &written)?;
    Ok(written)
}

fn write_trajectories(dir: &Path, scenario: &Scenario, opts: &RunOptions) -> Result<(), CommandError> {
    let range = opts.range(scenario)?;
    let (_, trajs, _) = with_threads(opts.threads.max(1), || simulate_table(scenario, range.clone()));
    let mut out = String::new();
    for (i, t) in trajs.iter().enumerate() {
        let rec = t.to_record(scenario.seed, range.start + i as u64, &scenario.design.id(), &scenario.model.id());
        out.push_str(&rec.to_json()?);
        out.push('\n');
    }
    std::fs::write(dir.join("trajectories.jsonl"), out).map_err(anyhow::Error::from)?;
    Ok(())
}

/// Settings of the `limit-exp` command.
#[derive(Debug, Clone)]
pub struct LimitOptions {
    pub study: PowerStudy,
    pub stats: Vec<LimitStatistic>,
    pub h_grid: Vec<[f64; 2]>,
    pub threads: usize,
    pub out: PathBuf,
    pub quiet: bool,
}

pub fn compute_limit(opts: &LimitOptions) -> Result<Written, CommandError> {
    let curve = timed("limit-exp", opts.threads.max(1), || {
        run_power(&opts.study, &opts.stats, &opts.h_grid)
    })?;
    Ok(Written {
        tables: vec![
            ("power".into(), power_table(&curve)),
            ("thresholds".into(), threshold_table(&curve)),
        ],
        ..Written::default()
    })
}

pub fn run_limit(opts: &LimitOptions) -> Result<Written, CommandError> {
    std::fs::create_dir_all(&opts.out).map_err(anyhow::Error::from)?;
    let written = compute_limit(opts)?;
    for (stem, t) in &written.tables {
        write_csv(&opts.out, stem, t)?;
    }
    if let Some(t) = written.get("power") {
        write_json(&opts.out, "power", t)?;
        if !opts.quiet {
            print!("{}", t.to_csv());
        }
    }
    Ok(written)
}
