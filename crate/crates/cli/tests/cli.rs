use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use echoforge::signal::{generate_sweep, repeat_sweep, ChannelId, PcmStream, SweepConfig};
use echoforge::wav::{write_wav, WavEncoding};

fn echoforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_echoforge"))
        .args(args)
        .env("ECHOFORGE_THREADS", "2")
        .output()
        .expect("spawn echoforge")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const STATIC_SCENE: &str =
    r#"{"scene": {"reflectors": [{"trajectory": [{"t": 0.0, "d": 0.10}], "reflectivity": 0.8}], "duration": 0.36}}"#;

#[test]
fn demo_scene_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = echoforge(&["simulate", "--demo", "--seed", "42", "--out", p(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["mic1.wav", "mic2.wav", "labels.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = dir.path().join("c");
    echoforge(&["simulate", "--demo", "--seed", "43", "--out", p(&c)]);
    assert_ne!(fs::read(a.join("mic1.wav")).unwrap(), fs::read(c.join("mic1.wav")).unwrap());
}

#[test]
fn missing_scene_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = echoforge(&["simulate", "no/such/scene.json", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("no/such/scene.json"), "{}", stderr(&o));
}

#[test]
fn duration_off_the_frame_grid_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = echoforge(&["simulate", "--demo", "--duration", "0.013", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("12 ms"), "{}", stderr(&o));
}

#[test]
fn static_reflector_profile_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.json");
    fs::write(&scene, STATIC_SCENE).unwrap();
    let sim = dir.path().join("sim");
    let prof = dir.path().join("prof");
    assert!(echoforge(&["simulate", p(&scene), "--out", p(&sim)]).status.success());
    let o = echoforge(&[
        "profile",
        p(&sim.join("mic1.wav")),
        p(&sim.join("mic2.wav")),
        "--png",
        "--assert-row",
        "29",
        "--out",
        p(&prof),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for ch in ["ss1", "ds1", "ds2", "ss2"] {
        let prof_file = echoforge::eprf::load_profile(&prof.join(format!("{ch}.eprf"))).unwrap();
        assert_eq!((prof_file.rows, prof_file.cols), (70, 30));
        assert!(prof.join(format!("{ch}_diff.png")).is_file());
    }
    let wrong = echoforge(&[
        "profile",
        p(&sim.join("mic1.wav")),
        p(&sim.join("mic2.wav")),
        "--assert-row",
        "50",
        "--out",
        p(&dir.path().join("wrong")),
    ]);
    assert_eq!(wrong.status.code(), Some(4));
}

#[test]
fn loopback_peaks_at_row_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a = repeat_sweep(&generate_sweep(&SweepConfig::band_a()).unwrap(), 10);
    let b = repeat_sweep(&generate_sweep(&SweepConfig::band_b()).unwrap(), 10);
    let sum: Vec<f64> = a.samples.iter().zip(&b.samples).map(|(x, y)| x + y).collect();
    let wav = dir.path().join("loop.wav");
    write_wav(&wav, &[&PcmStream::new(sum, 50_000, ChannelId::Mic1).unwrap()], WavEncoding::Float32).unwrap();
    let o = echoforge(&["profile", p(&wav), "--assert-row", "0", "--out", p(&dir.path().join("out"))]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn wrong_sample_rate_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("cd.wav");
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: 44_100,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&wav, spec).unwrap();
    for _ in 0..4410 {
        w.write_sample(0i16).unwrap();
    }
    w.finalize().unwrap();
    let o = echoforge(&["profile", p(&wav), "--out", p(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("44100"), "{}", stderr(&o));
}

#[test]
fn unknown_split_lists_schemes() {
    let dir = tempfile::tempdir().unwrap();
    let o = echoforge(&["train", p(dir.path()), "--split", "kfold", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    for name in ["lopo", "loso", "object-independent", "finetune-budget=N"] {
        assert!(e.contains(name), "{e}");
    }
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_echoforge"))
        .args(["simulate", "--demo", "--out", "unused"])
        .env("ECHOFORGE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

fn tiny_corpus(root: &Path) -> std::path::PathBuf {
    let corpus = root.join("corpus");
    let data = root.join("data");
    let o = echoforge(&[
        "synth-corpus",
        "--participants",
        "2",
        "--sessions",
        "2",
        "--repetitions",
        "1",
        "--seed",
        "5",
        "--out",
        p(&corpus),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = echoforge(&["ingest", p(&corpus), "--out", p(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    data
}

#[test]
fn train_eval_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_corpus(dir.path());
    assert_eq!(fs::read_to_string(data.join("labels.csv")).unwrap().lines().count(), 1 + 24);

    let run = |out: &Path| {
        let o = echoforge(&[
            "train", p(&data), "--split", "loso", "--participant", "P1", "--session", "2", "--epochs", "2", "--seed", "9",
            "--out", p(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&a);
    run(&b);
    let ckpt = a.join("folds/loso-P1-s2/model.efck");
    assert_eq!(fs::read(&ckpt).unwrap(), fs::read(b.join("folds/loso-P1-s2/model.efck")).unwrap());
    for f in ["folds.csv", "per_class.csv", "summary.json", "confusion.png", "predictions.csv", "config.json"] {
        assert!(a.join(f).is_file(), "{f}");
    }
    let metrics = fs::read_to_string(a.join("folds/loso-P1-s2/metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,train_loss,train_acc,val_acc"));
    assert_eq!(metrics.lines().count(), 3);

    // Zero epochs evaluates the checkpoint unchanged.
    let ev = dir.path().join("ev");
    let o = echoforge(&[
        "train", p(&data), "--split", "loso", "--participant", "P1", "--session", "2", "--epochs", "0",
        "--base-checkpoint", p(&ckpt), "--out", p(&ev),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(&ckpt).unwrap(), fs::read(ev.join("folds/loso-P1-s2/model.efck")).unwrap());
    assert_eq!(
        fs::read(a.join("predictions.csv")).unwrap(),
        fs::read(ev.join("predictions.csv")).unwrap()
    );
    let o = echoforge(&["eval", p(&data), "--split", "loso", "--participant", "P1", "--out", p(&dir.path().join("nock"))]);
    assert_eq!(o.status.code(), Some(2));

    // The snapshot alone reproduces the run.
    let c = dir.path().join("c");
    let o = echoforge(&["replay", p(&a.join("config.json")), "--out", p(&c)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(&ckpt).unwrap(), fs::read(c.join("folds/loso-P1-s2/model.efck")).unwrap());

    // Feeding the snapshot back as --config keeps the seed.
    let d = dir.path().join("d");
    let o = echoforge(&[
        "train", p(&data), "--split", "loso", "--participant", "P1", "--session", "2", "--epochs", "2", "--config",
        p(&a.join("config.json")), "--out", p(&d),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(&ckpt).unwrap(), fs::read(d.join("folds/loso-P1-s2/model.efck")).unwrap());
}

#[test]
fn every_split_scheme_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_corpus(dir.path());
    for (split, folds) in [("lopo", 2), ("loso", 4), ("object-independent", 2), ("finetune-budget=1", 4)] {
        let out = dir.path().join(split);
        let o = echoforge(&["train", p(&data), "--split", split, "--epochs", "1", "--out", p(&out)]);
        assert!(o.status.success(), "{split}: {}", stderr(&o));
        let rows = fs::read_to_string(out.join("folds.csv")).unwrap().lines().count();
        assert_eq!(rows, 1 + folds + 1, "{split}");
    }
    let o = echoforge(&[
        "train", p(&data), "--split", "loso", "--participant", "P9", "--epochs", "1", "--out",
        p(&dir.path().join("p9")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
