//! `echoforge` command-line entry point.

mod config;
mod corpus;
mod profile;
mod simulate;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use config::RunConfig;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

#[derive(Parser)]
#[command(name = "echoforge", version, about = "Acoustic echo-profile sensing toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Render a scene to two microphone WAVs and a label CSV.
    Simulate(simulate::SimulateArgs),
    /// Turn microphone WAVs into echo profiles (EPRF, optional PNG).
    Profile(profile::ProfileArgs),
    /// Write a synthetic multi-participant session corpus.
    SynthCorpus(corpus::SynthCorpusArgs),
    /// Slice a session corpus into a tensor dataset.
    Ingest(corpus::IngestArgs),
    /// Train and evaluate under a split scheme.
    Train(train::TrainArgs),
    /// Evaluate a checkpoint under a split scheme (train with zero epochs).
    Eval(train::TrainArgs),
    /// Re-run the command recorded in a config snapshot.
    Replay(ReplayArgs),
}

/// Flags shared by every pipeline subcommand.
#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct Common {
    /// Directory for all artifacts.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON run config (or a config.json snapshot from an earlier run).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        Ok(cfg.with_seed(self.seed))
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// config.json written by the original run.
    pub snapshot: PathBuf,
    /// Write to this directory instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Bad flags or flag combinations.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A numeric check requested on the command line did not hold.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use echoforge::Error as E;
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    if err.downcast_ref::<CheckFailed>().is_some() {
        return EXIT_NUMERIC;
    }
    match err.downcast_ref::<E>() {
        Some(E::Config(_) | E::Unknown { .. }) => EXIT_USAGE,
        Some(E::NonFinite(_) | E::FilterDesign { .. }) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

fn out_dir(cmd: &Command) -> Option<&PathBuf> {
    match cmd {
        Command::Simulate(a) => Some(&a.common.out),
        Command::Profile(a) => Some(&a.common.out),
        Command::SynthCorpus(a) => Some(&a.common.out),
        Command::Ingest(a) => Some(&a.common.out),
        Command::Train(a) | Command::Eval(a) => Some(&a.common.out),
        Command::Replay(_) => None,
    }
}

fn set_out(cmd: &mut Command, out: PathBuf) {
    match cmd {
        Command::Simulate(a) => a.common.out = out,
        Command::Profile(a) => a.common.out = out,
        Command::SynthCorpus(a) => a.common.out = out,
        Command::Ingest(a) => a.common.out = out,
        Command::Train(a) | Command::Eval(a) => a.common.out = out,
        Command::Replay(_) => {}
    }
}

fn run(cmd: Command, resolved: Option<RunConfig>) -> anyhow::Result<()> {
    if let Command::Replay(r) = &cmd {
        let snap = config::read_snapshot(&r.snapshot)?;
        let mut inner = snap.command;
        if matches!(inner, Command::Replay(_)) {
            return Err(usage("a snapshot cannot record another replay"));
        }
        if let Some(out) = &r.out {
            set_out(&mut inner, out.clone());
        }
        return run(inner, Some(snap.config));
    }
    let out = out_dir(&cmd).expect("pipeline command").clone();
    let cfg = match resolved {
        Some(c) => c,
        None => match &cmd {
            Command::Simulate(a) => a.common.resolve()?,
            Command::Profile(a) => a.common.resolve()?,
            Command::SynthCorpus(a) => a.common.resolve()?,
            Command::Ingest(a) => a.common.resolve()?,
            Command::Train(a) | Command::Eval(a) => a.common.resolve()?,
            Command::Replay(_) => unreachable!(),
        },
    };
    std::fs::create_dir_all(&out).map_err(|e| echoforge::Error::ingest(&out, e.to_string()))?;
    config::write_snapshot(&out, &cmd, &cfg)?;
    match &cmd {
        Command::Simulate(a) => simulate::run(a, &cfg),
        Command::Profile(a) => profile::run(a, &cfg),
        Command::SynthCorpus(a) => corpus::run_synth(a, &cfg),
        Command::Ingest(a) => corpus::run_ingest(a, &cfg),
        Command::Train(a) => train::run(a, &cfg, false),
        Command::Eval(a) => train::run(a, &cfg, true),
        Command::Replay(_) => unreachable!(),
    }
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("ECHOFORGE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| usage(format!("ECHOFORGE_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|_| run(cli.command, None));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
