use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use echoforge::dataset::{Marker, MIC_FILES};
use echoforge::sim::{render_mics, Scene};
use echoforge::signal::SAMPLE_RATE;
use echoforge::wav::{write_wav, WavEncoding};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{usage, Common};

pub const DEMO_SCENE: &str = include_str!("../assets/demo_scene.json");

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Scene JSON: `{"scene": {...}, "markers": [...]}`.
    #[arg(required_unless_present = "demo", conflicts_with = "demo")]
    pub scene: Option<PathBuf>,
    /// Use the bundled demo scene.
    #[arg(long)]
    pub demo: bool,
    /// Override the scene duration (seconds, whole 12 ms frames).
    #[arg(long)]
    pub duration: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub scene: Scene,
    #[serde(default)]
    pub markers: Vec<Marker>,
}

fn load_scene(args: &SimulateArgs) -> anyhow::Result<SceneFile> {
    let (text, origin) = match &args.scene {
        Some(p) => (
            fs::read_to_string(p).map_err(|e| echoforge::Error::ingest(p, format!("cannot read scene file: {e}")))?,
            p.display().to_string(),
        ),
        None if args.demo => (DEMO_SCENE.to_string(), "demo scene".to_string()),
        None => return Err(usage("give a scene file or --demo")),
    };
    let file: SceneFile = serde_json::from_str(&text)
        .map_err(|e| echoforge::Error::ingest(&origin, format!("bad scene JSON: {e}")))?;
    Ok(file)
}

pub fn run(args: &SimulateArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let mut file = load_scene(args)?;
    if let Some(d) = args.duration {
        file.scene.duration = d;
    }
    file.scene.validate()?;
    let mics = render_mics(&file.scene, &cfg.sweeps, cfg.seed)?;
    let out = &args.common.out;
    for (name, s) in MIC_FILES.iter().zip(&mics) {
        write_wav(&out.join(name), &[s], WavEncoding::Float32)?;
    }
    let mut w = csv::Writer::from_path(out.join("labels.csv")).context("writing labels.csv")?;
    w.write_record(["sample", "time_s", "gesture", "repetition"])?;
    for m in &file.markers {
        if m.sample >= mics[0].len() {
            return Err(echoforge::Error::OutOfBounds(format!(
                "marker at sample {} is past the end of the {}-sample recording",
                m.sample,
                mics[0].len()
            ))
            .into());
        }
        w.write_record([
            m.sample.to_string(),
            format!("{:.6}", m.sample as f64 / SAMPLE_RATE as f64),
            m.gesture.name().to_string(),
            m.repetition.to_string(),
        ])?;
    }
    w.flush()?;
    eprintln!(
        "rendered {} reflectors, {:.3} s, {} markers -> {}",
        file.scene.reflectors.len(),
        mics[0].duration(),
        file.markers.len(),
        out.display()
    );
    Ok(())
}
