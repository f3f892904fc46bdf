use std::path::PathBuf;

use clap::Args;
use echoforge::echo::{crop_window, differential_profile, EchoProfile, ProfileChannel, Window, WINDOW_BINS};
use echoforge::eprf::save_profile;
use echoforge::render::{save_profile_png, Ramp};
use echoforge::signal::PcmStream;
use echoforge::wav::read_wav;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{usage, CheckFailed, Common};

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ProfileArgs {
    /// mic1.wav and mic2.wav, or one stereo file. A single mono file is
    /// used for both microphones.
    #[arg(required = true, num_args = 1..=2)]
    pub inputs: Vec<PathBuf>,
    /// Sample at which the first sweep starts.
    #[arg(long, default_value_t = 0)]
    pub offset: usize,
    #[arg(long, default_value_t = 0)]
    pub start_bin: usize,
    #[arg(long, default_value_t = WINDOW_BINS)]
    pub bins: usize,
    #[arg(long, default_value_t = 0)]
    pub start_frame: usize,
    /// Number of frames to keep (default: all).
    #[arg(long)]
    pub frames: Option<usize>,
    /// Also write a heatmap PNG per profile.
    #[arg(long)]
    pub png: bool,
    /// Fail unless every column of every original profile peaks within
    /// one bin of this row (counted from --start-bin).
    #[arg(long)]
    pub assert_row: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

fn load_mics(inputs: &[PathBuf]) -> anyhow::Result<[PcmStream; 2]> {
    let mut streams = Vec::new();
    for p in inputs {
        let mut chans = read_wav(p)?;
        if inputs.len() == 2 {
            chans.truncate(1);
        }
        streams.extend(chans);
    }
    let mut it = streams.into_iter();
    let first = it.next().ok_or(echoforge::Error::Empty("input WAV"))?;
    let second = it.next().unwrap_or_else(|| first.clone());
    Ok([first, second])
}

pub fn channel_stem(ch: ProfileChannel) -> &'static str {
    match ch {
        ProfileChannel::SS1 => "ss1",
        ProfileChannel::DS1 => "ds1",
        ProfileChannel::DS2 => "ds2",
        ProfileChannel::SS2 => "ss2",
    }
}

fn check_row(p: &EchoProfile, row: usize) -> Result<(), CheckFailed> {
    for c in 0..p.cols {
        let got = p.argmax_row(c);
        if got.abs_diff(row) > 1 {
            return Err(CheckFailed(format!(
                "{}: column {c} peaks at row {got}, expected {row} +/- 1",
                channel_stem(p.channel)
            )));
        }
    }
    Ok(())
}

pub fn run(args: &ProfileArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    if args.bins == 0 {
        return Err(usage("--bins must be positive"));
    }
    let mics = load_mics(&args.inputs)?;
    let pipeline = cfg.pipeline()?;
    let full = pipeline.profiles([&mics[0], &mics[1]], args.offset)?;
    let cols = full[0].cols;
    let n_frames = match args.frames {
        Some(n) => n,
        None => cols.checked_sub(args.start_frame).ok_or_else(|| {
            echoforge::Error::OutOfBounds(format!("--start-frame {} beyond {cols} frames", args.start_frame))
        })?,
    };
    let window = Window {
        start_bin: args.start_bin,
        n_bins: args.bins,
        start_frame: args.start_frame,
        n_frames,
    };
    let out = &args.common.out;
    let mut originals = Vec::with_capacity(4);
    for p in &full {
        let diff = differential_profile(p)?;
        let stem = channel_stem(p.channel);
        for (q, name) in [(crop_window(p, &window)?, stem.to_string()), (crop_window(&diff, &window)?, format!("{stem}_diff"))] {
            save_profile(&out.join(format!("{name}.eprf")), &q)?;
            if args.png {
                save_profile_png(&out.join(format!("{name}.png")), &q, Ramp::Viridis)?;
            }
            if name == stem {
                originals.push(q);
            }
        }
    }
    eprintln!(
        "{} frames x {} bins per profile, 8 profiles -> {}",
        window.n_frames,
        window.n_bins,
        out.display()
    );
    if let Some(row) = args.assert_row {
        for p in &originals {
            check_row(p, row)?;
        }
        eprintln!("every column peaks at row {row} +/- 1");
    }
    Ok(())
}
