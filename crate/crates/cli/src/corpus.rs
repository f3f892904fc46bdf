use std::path::PathBuf;

use clap::Args;
use echoforge::dataset::{ingest_corpus, save_dataset, write_synth_corpus};
use echoforge::sim::builtin_scripts;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::Common;

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SynthCorpusArgs {
    #[arg(long)]
    pub participants: Option<usize>,
    #[arg(long)]
    pub sessions: Option<u8>,
    #[arg(long)]
    pub repetitions: Option<u8>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

pub fn run_synth(args: &SynthCorpusArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let mut spec = cfg.corpus.clone();
    if let Some(n) = args.participants {
        spec.participants = n;
    }
    if let Some(n) = args.sessions {
        spec.sessions = n;
    }
    if let Some(n) = args.repetitions {
        spec.repetitions = n;
    }
    if let Some(n) = args.noise {
        spec.noise_rms = n;
    }
    let dirs = write_synth_corpus(&args.common.out, &spec, &builtin_scripts())?;
    eprintln!(
        "{} sessions ({} participants x {} sessions x {} repetitions of 6 gestures) -> {}",
        dirs.len(),
        spec.participants,
        spec.sessions,
        spec.repetitions,
        args.common.out.display()
    );
    Ok(())
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct IngestArgs {
    /// Directory tree of session containers (manifest.json + mic WAVs).
    pub corpus: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

pub fn run_ingest(args: &IngestArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let (instances, skipped) = ingest_corpus(&args.corpus, &cfg.pipeline()?)?;
    for s in &skipped {
        eprintln!("skipped {s:?}");
    }
    save_dataset(&args.common.out, &instances)?;
    eprintln!(
        "{} instances ({} markers skipped) -> {}",
        instances.len(),
        skipped.len(),
        args.common.out.display()
    );
    Ok(())
}
