//! Recording containers, instance slicing, label and tensor caches, and
//! train/test split planning.
//!
//! A session container is a directory holding
//!
//! ```text
//! manifest.json   participant, grasp, object, session (1..=6),
//!                 device_remounted, sample_rate, sweep_offset,
//!                 markers: [{sample, gesture, repetition (1..=4)}]
//! mic1.wav        mono, 50 kHz
//! mic2.wav        mono, 50 kHz
//! ```
//!
//! Each marker is the sample index where a 2 s performance window opens.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::echo::{EchoTensor, ProfilePipeline, WINDOW_FRAMES};
use crate::eprf;
use crate::error::{Error, Result};
use crate::labels::{Gesture, GestureLabel, Grasp};
use crate::signal::{ChannelId, PcmStream, SAMPLE_RATE, SWEEP_LEN, SWEEP_SECONDS};
use crate::sim::{self, HandProfile, Scene, SynthOptions, SyntheticGestureScript, GESTURE_WINDOW_SECONDS};
use crate::wav::{read_wav, write_wav, WavEncoding};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MIC_FILES: [&str; 2] = ["mic1.wav", "mic2.wav"];
pub const LABELS_FILE: &str = "labels.csv";
pub const INDEX_FILE: &str = "index.csv";
pub const EXCLUSIONS_FILE: &str = "exclusions.csv";
pub const MAX_SESSIONS: u8 = 6;
pub const MAX_REPETITIONS: u8 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SessionMeta {
    pub participant: String,
    pub grasp: Grasp,
    pub object: String,
    pub session: u8,
    pub device_remounted: bool,
}

impl SessionMeta {
    pub fn validate(&self) -> Result<()> {
        if self.participant.is_empty() || self.object.is_empty() {
            return Err(Error::Config("participant and object must be named".into()));
        }
        if !(1..=MAX_SESSIONS).contains(&self.session) {
            return Err(Error::Config(format!(
                "session {} outside 1..={MAX_SESSIONS}",
                self.session
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Marker {
    pub sample: usize,
    pub gesture: Gesture,
    pub repetition: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub participant: String,
    pub grasp: Grasp,
    pub object: String,
    pub session: u8,
    pub device_remounted: bool,
    pub sample_rate: u32,
    #[serde(default)]
    pub sweep_offset: usize,
    pub markers: Vec<Marker>,
}

impl Manifest {
    pub fn meta(&self) -> SessionMeta {
        SessionMeta {
            participant: self.participant.clone(),
            grasp: self.grasp,
            object: self.object.clone(),
            session: self.session,
            device_remounted: self.device_remounted,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.meta().validate()?;
        if self.sample_rate != SAMPLE_RATE {
            return Err(Error::SampleRate {
                expected: SAMPLE_RATE,
                actual: self.sample_rate,
            });
        }
        if self.sweep_offset >= SWEEP_LEN {
            return Err(Error::Config(format!(
                "sweep_offset {} must be below {SWEEP_LEN}",
                self.sweep_offset
            )));
        }
        for pair in self.markers.windows(2) {
            if pair[1].sample <= pair[0].sample {
                return Err(Error::Config(format!(
                    "markers not strictly increasing at sample {}",
                    pair[1].sample
                )));
            }
        }
        for m in &self.markers {
            if !(1..=MAX_REPETITIONS).contains(&m.repetition) {
                return Err(Error::Config(format!(
                    "repetition {} outside 1..={MAX_REPETITIONS}",
                    m.repetition
                )));
            }
            GestureLabel::new(self.grasp, m.gesture)?;
        }
        Ok(())
    }
}

/// A loaded container.
#[derive(Debug, Clone)]
pub struct Session {
    pub meta: SessionMeta,
    pub mics: [PcmStream; 2],
    pub markers: Vec<Marker>,
    pub sweep_offset: usize,
}

impl Session {
    pub fn marker_samples(&self) -> Vec<usize> {
        self.markers.iter().map(|m| m.sample).collect()
    }
}

pub fn load_session(dir: &Path) -> Result<Session> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::ingest(&manifest_path, format!("cannot read manifest: {e}")))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::ingest(&manifest_path, format!("schema violation: {e}")))?;
    manifest.validate().map_err(|e| match e {
        Error::SampleRate { .. } => e,
        other => Error::ingest(&manifest_path, other.to_string()),
    })?;

    let mut mics = Vec::with_capacity(2);
    for (i, name) in MIC_FILES.iter().enumerate() {
        let path = dir.join(name);
        if !path.exists() {
            return Err(Error::ingest(&path, format!("missing channel mic{}", i + 1)));
        }
        let mut streams = read_wav(&path).map_err(|e| match e {
            Error::SampleRate { .. } => e,
            other => Error::ingest(&path, format!("channel mic{}: {other}", i + 1)),
        })?;
        if streams.len() != 1 {
            return Err(Error::ingest(
                &path,
                format!("channel mic{} must be mono, found {} channels", i + 1, streams.len()),
            ));
        }
        let mut s = streams.remove(0);
        s.channel = if i == 0 { ChannelId::Mic1 } else { ChannelId::Mic2 };
        mics.push(s);
    }
    let (l1, l2) = (mics[0].len(), mics[1].len());
    if l1 != l2 {
        let (short, path) = if l1 < l2 { ("mic1", MIC_FILES[0]) } else { ("mic2", MIC_FILES[1]) };
        return Err(Error::ingest(
            &dir.join(path),
            format!("channel {short} truncated: {} vs {} samples", l1.min(l2), l1.max(l2)),
        ));
    }
    let mics: [PcmStream; 2] = mics.try_into().expect("two channels");
    Ok(Session {
        meta: manifest.meta(),
        mics,
        markers: manifest.markers,
        sweep_offset: manifest.sweep_offset,
    })
}

pub fn write_session(dir: &Path, manifest: &Manifest, mics: [&PcmStream; 2], encoding: WavEncoding) -> Result<()> {
    manifest.validate()?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(manifest)?)?;
    for (name, s) in MIC_FILES.iter().zip(mics) {
        write_wav(&dir.join(name), &[s], encoding)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInstance {
    pub id: String,
    pub tensor: EchoTensor,
    pub label: GestureLabel,
    pub meta: SessionMeta,
    pub repetition: u8,
}

impl LabeledInstance {
    pub fn record(&self) -> InstanceRecord {
        InstanceRecord {
            instance_id: self.id.clone(),
            participant: self.meta.participant.clone(),
            grasp: self.label.grasp(),
            object: self.meta.object.clone(),
            session: self.meta.session,
            repetition: self.repetition,
            gesture: self.label.gesture(),
            class_index: self.label.class_index(),
        }
    }
}

/// One row of the labels CSV: everything about an instance except its tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub instance_id: String,
    pub participant: String,
    pub grasp: Grasp,
    pub object: String,
    pub session: u8,
    pub repetition: u8,
    pub gesture: Gesture,
    pub class_index: usize,
}

impl InstanceRecord {
    pub fn label(&self) -> Result<GestureLabel> {
        let l = GestureLabel::new(self.grasp, self.gesture)?;
        if l.class_index() != self.class_index {
            return Err(Error::Config(format!(
                "{}: class_index {} does not match {l}",
                self.instance_id, self.class_index
            )));
        }
        Ok(l)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedMarker {
    pub index: usize,
    pub sample: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct SliceReport {
    pub instances: Vec<LabeledInstance>,
    pub skipped: Vec<SkippedMarker>,
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect()
}

pub fn instance_id(meta: &SessionMeta, marker_index: usize) -> String {
    format!(
        "{}_s{}_{}_{:03}",
        slug(&meta.participant),
        meta.session,
        slug(&meta.object),
        marker_index
    )
}

/// Cuts one tensor per marker. Markers whose window runs past the end of
/// the recording are skipped and reported rather than failing the session.
pub fn slice_instances(
    mics: [&PcmStream; 2],
    markers: &[Marker],
    meta: &SessionMeta,
    sweep_offset: usize,
    pipeline: &ProfilePipeline,
) -> Result<SliceReport> {
    for pair in markers.windows(2) {
        if pair[1].sample <= pair[0].sample {
            return Err(Error::Config("markers must be strictly increasing".into()));
        }
    }
    let len = mics[0].len().min(mics[1].len());
    let span = WINDOW_FRAMES * pipeline.sweep_len();
    let mut report = SliceReport::default();
    for (i, m) in markers.iter().enumerate() {
        let label = GestureLabel::new(meta.grasp, m.gesture)?;
        let start = sim::instance_start(m.sample, sweep_offset);
        if start + span > len {
            report.skipped.push(SkippedMarker {
                index: i,
                sample: m.sample,
                reason: format!("window ends at {} past stream end {len}", start + span),
            });
            continue;
        }
        let mut tensor = pipeline.tensor_at(mics, start, 0)?;
        tensor.label = Some(label);
        report.instances.push(LabeledInstance {
            id: instance_id(meta, i),
            tensor,
            label,
            meta: meta.clone(),
            repetition: m.repetition,
        });
    }
    Ok(report)
}

pub fn slice_session(session: &Session, pipeline: &ProfilePipeline) -> Result<SliceReport> {
    slice_instances(
        [&session.mics[0], &session.mics[1]],
        &session.markers,
        &session.meta,
        session.sweep_offset,
        pipeline,
    )
}

/// Every directory under `root` (inclusive) that holds a manifest, sorted.
pub fn find_sessions(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        if dir.join(MANIFEST_FILE).is_file() {
            out.push(dir.clone());
        }
        for entry in fs::read_dir(&dir)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Loads and slices every session under `root`, in parallel, applying
/// `exclusions.csv` at the root when present.
pub fn ingest_corpus(root: &Path, pipeline: &ProfilePipeline) -> Result<(Vec<LabeledInstance>, Vec<SkippedMarker>)> {
    use rayon::prelude::*;
    let dirs = find_sessions(root)?;
    if dirs.is_empty() {
        return Err(Error::ingest(root, "no session containers found"));
    }
    let reports: Vec<SliceReport> = dirs
        .par_iter()
        .map(|d| load_session(d).and_then(|s| slice_session(&s, pipeline)))
        .collect::<Result<_>>()?;
    let mut instances = Vec::new();
    let mut skipped = Vec::new();
    for r in reports {
        instances.extend(r.instances);
        skipped.extend(r.skipped);
    }
    let overlay = root.join(EXCLUSIONS_FILE);
    if overlay.is_file() {
        instances = apply_exclusions(instances, &read_exclusions(&overlay)?)?;
    }
    Ok((instances, skipped))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExclusionAction {
    Exclude,
    Relabel,
}

/// One overlay row. `gesture` is the corrected label for `relabel` rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub instance_id: String,
    pub action: ExclusionAction,
    #[serde(default)]
    pub gesture: Option<Gesture>,
}

pub fn read_exclusions(path: &Path) -> Result<Vec<Exclusion>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::ingest(path, e.to_string())))
        .collect()
}

/// Drops or relabels instances named in the overlay. Ids not present in
/// `instances` are ignored so one overlay can serve a partial load.
pub fn apply_exclusions(instances: Vec<LabeledInstance>, overlay: &[Exclusion]) -> Result<Vec<LabeledInstance>> {
    let by_id: BTreeMap<&str, &Exclusion> = overlay.iter().map(|e| (e.instance_id.as_str(), e)).collect();
    let mut out = Vec::with_capacity(instances.len());
    for mut inst in instances {
        match by_id.get(inst.id.as_str()) {
            None => out.push(inst),
            Some(e) => match e.action {
                ExclusionAction::Exclude => {}
                ExclusionAction::Relabel => {
                    let g = e
                        .gesture
                        .ok_or_else(|| Error::Config(format!("relabel of {} names no gesture", e.instance_id)))?;
                    inst.label = GestureLabel::new(inst.meta.grasp, g)?;
                    inst.tensor.label = Some(inst.label);
                    out.push(inst);
                }
            },
        }
    }
    Ok(out)
}

pub fn write_labels_csv(path: &Path, records: &[InstanceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels_csv(path: &Path) -> Result<Vec<InstanceRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows: Vec<InstanceRecord> = r
        .deserialize()
        .map(|row| row.map_err(|e| Error::ingest(path, e.to_string())))
        .collect::<Result<_>>()?;
    for row in &rows {
        row.label()?;
    }
    Ok(rows)
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexRow {
    instance_id: String,
    file: String,
    device_remounted: bool,
}

/// Writes `labels.csv`, `index.csv` and one EPRF tensor per instance.
pub fn save_dataset(dir: &Path, instances: &[LabeledInstance]) -> Result<()> {
    let tensors = dir.join("tensors");
    fs::create_dir_all(&tensors)?;
    let records: Vec<InstanceRecord> = instances.iter().map(LabeledInstance::record).collect();
    write_labels_csv(&dir.join(LABELS_FILE), &records)?;
    let mut idx = csv::Writer::from_path(dir.join(INDEX_FILE))?;
    for inst in instances {
        let file = format!("tensors/{}.eprf", inst.id);
        eprf::save_tensor(&dir.join(&file), &inst.tensor)?;
        idx.serialize(IndexRow {
            instance_id: inst.id.clone(),
            file,
            device_remounted: inst.meta.device_remounted,
        })?;
    }
    idx.flush()?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Vec<LabeledInstance>> {
    let records = read_labels_csv(&dir.join(LABELS_FILE))?;
    let index_path = dir.join(INDEX_FILE);
    let mut r = csv::Reader::from_path(&index_path)?;
    let index: BTreeMap<String, IndexRow> = r
        .deserialize::<IndexRow>()
        .map(|row| row.map(|x| (x.instance_id.clone(), x)).map_err(|e| Error::ingest(&index_path, e.to_string())))
        .collect::<Result<_>>()?;
    records
        .into_iter()
        .map(|rec| {
            let row = index
                .get(&rec.instance_id)
                .ok_or_else(|| Error::ingest(&index_path, format!("no tensor for {}", rec.instance_id)))?;
            let label = rec.label()?;
            let mut tensor = eprf::load_tensor(&dir.join(&row.file))?;
            tensor.label = Some(label);
            Ok(LabeledInstance {
                id: rec.instance_id,
                tensor,
                label,
                meta: SessionMeta {
                    participant: rec.participant,
                    grasp: rec.grasp,
                    object: rec.object,
                    session: rec.session,
                    device_remounted: row.device_remounted,
                },
                repetition: rec.repetition,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitScheme {
    /// Test on one participant, train on everyone else.
    Lopo { participant: String },
    /// Within one participant, test on one session and train on the rest.
    Loso { participant: String, session: u8 },
    /// Within the object's grasp, test on that object across participants.
    ObjectIndependent { object: String },
    /// Train on the first `sessions` sessions of the participant other than
    /// `test_session`, test on `test_session`.
    FineTuneBudget {
        participant: String,
        sessions: usize,
        test_session: u8,
    },
}

impl fmt::Display for SplitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitScheme::Lopo { participant } => write!(f, "lopo-{participant}"),
            SplitScheme::Loso { participant, session } => write!(f, "loso-{participant}-s{session}"),
            SplitScheme::ObjectIndependent { object } => write!(f, "object-{}", slug(object)),
            SplitScheme::FineTuneBudget {
                participant,
                sessions,
                test_session,
            } => write!(f, "finetune-{participant}-n{sessions}-s{test_session}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub name: String,
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

fn unknown(kind: &'static str, name: impl ToString) -> Error {
    Error::Unknown {
        kind,
        name: name.to_string(),
    }
}

pub fn participants(records: &[InstanceRecord]) -> Vec<String> {
    records
        .iter()
        .map(|r| r.participant.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

pub fn sessions_of(records: &[InstanceRecord], participant: &str) -> Vec<u8> {
    records
        .iter()
        .filter(|r| r.participant == participant)
        .map(|r| r.session)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

pub fn objects_of(records: &[InstanceRecord], grasp: Grasp) -> Vec<String> {
    records
        .iter()
        .filter(|r| r.grasp == grasp)
        .map(|r| r.object.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

pub fn make_split(records: &[InstanceRecord], scheme: &SplitScheme) -> Result<SplitPlan> {
    let ids = |pred: &dyn Fn(&InstanceRecord) -> bool| -> BTreeSet<String> {
        records.iter().filter(|r| pred(r)).map(|r| r.instance_id.clone()).collect()
    };
    let (train, test) = match scheme {
        SplitScheme::Lopo { participant } => {
            if !records.iter().any(|r| &r.participant == participant) {
                return Err(unknown("participant", participant));
            }
            (ids(&|r| &r.participant != participant), ids(&|r| &r.participant == participant))
        }
        SplitScheme::Loso { participant, session } => {
            let sessions = sessions_of(records, participant);
            if sessions.is_empty() {
                return Err(unknown("participant", participant));
            }
            if !sessions.contains(session) {
                return Err(unknown("session", format!("{participant}/{session}")));
            }
            (
                ids(&|r| &r.participant == participant && r.session != *session),
                ids(&|r| &r.participant == participant && r.session == *session),
            )
        }
        SplitScheme::ObjectIndependent { object } => {
            let grasp = records
                .iter()
                .find(|r| &r.object == object)
                .map(|r| r.grasp)
                .ok_or_else(|| unknown("object", object))?;
            (
                ids(&|r| r.grasp == grasp && &r.object != object),
                ids(&|r| &r.object == object),
            )
        }
        SplitScheme::FineTuneBudget {
            participant,
            sessions,
            test_session,
        } => {
            let all = sessions_of(records, participant);
            if all.is_empty() {
                return Err(unknown("participant", participant));
            }
            if !all.contains(test_session) {
                return Err(unknown("session", format!("{participant}/{test_session}")));
            }
            let pool: Vec<u8> = all.into_iter().filter(|s| s != test_session).collect();
            if *sessions == 0 || *sessions > pool.len() {
                return Err(Error::Config(format!(
                    "fine-tune budget {sessions} outside 1..={}",
                    pool.len()
                )));
            }
            let chosen: BTreeSet<u8> = pool[..*sessions].iter().copied().collect();
            (
                ids(&|r| &r.participant == participant && chosen.contains(&r.session)),
                ids(&|r| &r.participant == participant && r.session == *test_session),
            )
        }
    };
    if train.is_empty() || test.is_empty() {
        return Err(Error::Empty(if train.is_empty() { "train split" } else { "test split" }));
    }
    Ok(SplitPlan {
        name: scheme.to_string(),
        train,
        test,
    })
}

/// One plan per session of `participant`.
pub fn loso_plans(records: &[InstanceRecord], participant: &str) -> Result<Vec<SplitPlan>> {
    let sessions = sessions_of(records, participant);
    if sessions.is_empty() {
        return Err(unknown("participant", participant));
    }
    sessions
        .into_iter()
        .map(|session| {
            make_split(
                records,
                &SplitScheme::Loso {
                    participant: participant.to_string(),
                    session,
                },
            )
        })
        .collect()
}

/// Selects the instances named by `ids`, preserving the input order.
pub fn select<'a>(instances: &'a [LabeledInstance], ids: &BTreeSet<String>) -> Vec<&'a LabeledInstance> {
    instances.iter().filter(|i| ids.contains(&i.id)).collect()
}

/// Parameters for a synthetic multi-participant corpus of Cylindrical-grasp
/// sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub participants: usize,
    pub sessions: u8,
    pub repetitions: u8,
    pub noise_rms: f64,
    /// Spread of per-participant hand geometry (relative scale) and per-
    /// session remount offset (meters).
    pub hand_spread: f64,
    pub remount_spread: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            participants: 3,
            sessions: MAX_SESSIONS,
            repetitions: MAX_REPETITIONS,
            noise_rms: 0.01,
            hand_spread: 0.08,
            remount_spread: 0.002,
            seed: 0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.participants == 0 {
            return Err(Error::Config("corpus needs at least one participant".into()));
        }
        if !(1..=MAX_SESSIONS).contains(&self.sessions) {
            return Err(Error::Config(format!("sessions must be in 1..={MAX_SESSIONS}")));
        }
        if !(1..=MAX_REPETITIONS).contains(&self.repetitions) {
            return Err(Error::Config(format!("repetitions must be in 1..={MAX_REPETITIONS}")));
        }
        if self.noise_rms < 0.0 || self.hand_spread < 0.0 || self.remount_spread < 0.0 {
            return Err(Error::Config("spreads and noise must be non-negative".into()));
        }
        Ok(())
    }
}

pub fn participant_name(p: usize) -> String {
    format!("P{}", p + 1)
}

/// The hand a synthetic participant wears the device on in a given session.
pub fn synthetic_hand(spec: &CorpusSpec, participant: usize, session: u8) -> HandProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(sim::instance_seed(spec.seed, participant, 0));
    let sym = |rng: &mut ChaCha8Rng, w: f64| if w > 0.0 { rng.random_range(-w..=w) } else { 0.0 };
    let scale = 1.0 + sym(&mut rng, spec.hand_spread);
    let base = HandProfile::default();
    let gains = base.channel_gains.map(|g| g * (1.0 + sym(&mut rng, 2.0 * spec.hand_spread)));
    let mut srng = ChaCha8Rng::seed_from_u64(sim::instance_seed(spec.seed, participant, session as usize));
    let remount = if session > 1 { sym(&mut srng, spec.remount_spread) } else { 0.0 };
    HandProfile {
        distance_scale: scale,
        distance_offset: remount,
        channel_gains: gains,
    }
}

/// Samples per rendered performance window (a whole number of sweeps).
pub fn window_samples() -> usize {
    (GESTURE_WINDOW_SECONDS / SWEEP_SECONDS).ceil() as usize * SWEEP_LEN
}

/// Renders one continuous session: back-to-back 2 s windows, repetition-
/// major, one marker per window.
pub fn synth_session(
    spec: &CorpusSpec,
    scripts: &[SyntheticGestureScript],
    participant: usize,
    session: u8,
) -> Result<(Manifest, [PcmStream; 2])> {
    spec.validate()?;
    sim::validate_scripts(scripts)?;
    let grasp = scripts[0].label.grasp();
    if scripts.iter().any(|s| s.label.grasp() != grasp) {
        return Err(Error::Config("session scripts must share one grasp".into()));
    }
    let object = grasp.objects()[(session as usize - 1) % grasp.objects().len()];
    let opts = SynthOptions {
        noise_rms: spec.noise_rms,
        hand: synthetic_hand(spec, participant, session),
        ..SynthOptions::default()
    };
    let win = window_samples();
    let session_seed = sim::instance_seed(spec.seed ^ 0x5e55_1011, participant, session as usize);
    let mut markers = Vec::new();
    let mut mic1 = Vec::new();
    let mut mic2 = Vec::new();
    for rep in 1..=spec.repetitions {
        for (c, script) in scripts.iter().enumerate() {
            let k = markers.len();
            let mut rng = ChaCha8Rng::seed_from_u64(sim::instance_seed(session_seed, c, rep as usize));
            let scene = Scene {
                reflectors: script.instantiate(&opts.hand, 0.0, &mut rng),
                noise_rms: opts.noise_rms,
                duration: (win / SWEEP_LEN) as f64 * SWEEP_SECONDS,
                channel_gains: opts.hand.channel_gains,
            };
            let [a, b] = sim::render_mics(&scene, &opts.sweeps, rng.random())?;
            markers.push(Marker {
                sample: k * win,
                gesture: script.label.gesture(),
                repetition: rep,
            });
            mic1.extend_from_slice(&a.samples);
            mic2.extend_from_slice(&b.samples);
        }
    }
    let manifest = Manifest {
        participant: participant_name(participant),
        grasp,
        object: object.to_string(),
        session,
        device_remounted: session > 1,
        sample_rate: SAMPLE_RATE,
        sweep_offset: 0,
        markers,
    };
    let mics = [
        PcmStream::new(mic1, SAMPLE_RATE, ChannelId::Mic1)?,
        PcmStream::new(mic2, SAMPLE_RATE, ChannelId::Mic2)?,
    ];
    Ok((manifest, mics))
}

/// Writes every (participant, session) container under `root` and returns
/// their directories.
pub fn write_synth_corpus(root: &Path, spec: &CorpusSpec, scripts: &[SyntheticGestureScript]) -> Result<Vec<PathBuf>> {
    use rayon::prelude::*;
    spec.validate()?;
    let jobs: Vec<(usize, u8)> = (0..spec.participants)
        .flat_map(|p| (1..=spec.sessions).map(move |s| (p, s)))
        .collect();
    jobs.par_iter()
        .map(|&(p, s)| {
            let (manifest, mics) = synth_session(spec, scripts, p, s)?;
            let dir = root.join(participant_name(p)).join(format!("session{s}"));
            write_session(&dir, &manifest, [&mics[0], &mics[1]], WavEncoding::Float32)?;
            Ok(dir)
        })
        .collect()
}

/// Renders the corpus straight to sliced instances without touching disk.
pub fn synth_corpus_instances(
    spec: &CorpusSpec,
    scripts: &[SyntheticGestureScript],
    pipeline: &ProfilePipeline,
) -> Result<Vec<LabeledInstance>> {
    use rayon::prelude::*;
    spec.validate()?;
    let jobs: Vec<(usize, u8)> = (0..spec.participants)
        .flat_map(|p| (1..=spec.sessions).map(move |s| (p, s)))
        .collect();
    let parts: Vec<Vec<LabeledInstance>> = jobs
        .par_iter()
        .map(|&(p, s)| {
            let (manifest, mics) = synth_session(spec, scripts, p, s)?;
            let report = slice_instances([&mics[0], &mics[1]], &manifest.markers, &manifest.meta(), 0, pipeline)?;
            Ok(report.instances)
        })
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}
