use std::fs;
use std::path::Path;

use anyhow::Context;
use echoforge::dataset::CorpusSpec;
use echoforge::echo::ProfilePipeline;
use echoforge::model::{ModelSpec, TrainConfig};
use echoforge::signal::{FilterSpec, SweepConfig};
use serde::{Deserialize, Serialize};

use crate::Command;

pub const SNAPSHOT_FILE: &str = "config.json";

/// Every tunable a subcommand may read. Missing sections take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub sweeps: [SweepConfig; 2],
    pub filters: [FilterSpec; 2],
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub corpus: CorpusSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sweeps = [SweepConfig::band_a(), SweepConfig::band_b()];
        Self {
            seed: 0,
            filters: [FilterSpec::for_sweep(&sweeps[0]), FilterSpec::for_sweep(&sweeps[1])],
            sweeps,
            model: ModelSpec::default(),
            train: TrainConfig::default(),
            corpus: CorpusSpec::default(),
        }
    }
}

impl RunConfig {
    /// Reads either a bare config or a snapshot written by a previous run.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| echoforge::Error::ingest(path, format!("cannot read config: {e}")))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| echoforge::Error::ingest(path, format!("config is not JSON: {e}")))?;
        let inner = match value.get("config") {
            Some(c) if value.get("command").is_some() => c.clone(),
            _ => value,
        };
        serde_json::from_value(inner)
            .map_err(|e| echoforge::Error::Config(format!("{}: {e}", path.display())).into())
    }

    /// Pushes the run seed into every seeded section.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.train.seed = self.seed;
        self.train.augment.seed = self.seed;
        self.corpus.seed = self.seed;
        self
    }

    pub fn pipeline(&self) -> echoforge::Result<ProfilePipeline> {
        ProfilePipeline::new(self.sweeps, self.filters)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Snapshot {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config: RunConfig,
}

pub fn write_snapshot(out: &Path, command: &Command, config: &RunConfig) -> anyhow::Result<()> {
    let snap = Snapshot {
        tool: "echoforge".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.clone(),
        config: config.clone(),
    };
    let path = out.join(SNAPSHOT_FILE);
    fs::write(&path, serde_json::to_string_pretty(&snap)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> anyhow::Result<Snapshot> {
    let text = fs::read_to_string(path)
        .map_err(|e| echoforge::Error::ingest(path, format!("cannot read snapshot: {e}")))?;
    serde_json::from_str(&text)
        .map_err(|e| echoforge::Error::ingest(path, format!("not a run snapshot: {e}")).into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_fills_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"seed": 5, "train": {"batch_size": 4}}"#).unwrap();
        let c = RunConfig::load(&p).unwrap().with_seed(None);
        assert_eq!(c.seed, 5);
        assert_eq!(c.train.batch_size, 4);
        assert_eq!(c.train.seed, 5);
        assert_eq!(c.train.learning_rate, 2e-4);
        assert_eq!(c.model, ModelSpec::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"sede": 5}"#).unwrap();
        assert!(RunConfig::load(&p).is_err());
    }
}
