use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use echoforge::dataset::{
    ingest_corpus, load_dataset, make_split, objects_of, participants, select, sessions_of, InstanceRecord,
    LabeledInstance, SplitScheme, INDEX_FILE,
};
use echoforge::echo::EchoTensor;
use echoforge::metrics::{
    fold_average, percent, save_confusion_png, write_fold_csv, write_per_class_csv, write_summary_json, FoldResult,
};
use echoforge::model::{evaluate, load_checkpoint, save_checkpoint, train, write_metrics_csv, ModelParams, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{usage, Common};

pub const SPLIT_NAMES: &str = "lopo, loso, object-independent, finetune-budget=N";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Lopo,
    Loso,
    ObjectIndependent,
    FinetuneBudget(usize),
}

pub fn parse_split(s: &str) -> Result<Split, String> {
    match s {
        "lopo" => Ok(Split::Lopo),
        "loso" => Ok(Split::Loso),
        "object-independent" => Ok(Split::ObjectIndependent),
        _ => s
            .strip_prefix("finetune-budget=")
            .and_then(|n| n.parse().ok())
            .map(Split::FinetuneBudget)
            .ok_or_else(|| format!("unknown split scheme {s:?}; valid schemes: {SPLIT_NAMES}")),
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Tensor dataset (written by `ingest`) or a session corpus root.
    pub data: PathBuf,
    /// lopo | loso | object-independent | finetune-budget=N
    #[arg(long, value_parser = parse_split)]
    pub split: Split,
    /// Restrict folds to one participant (default: every participant).
    #[arg(long)]
    pub participant: Option<String>,
    /// Restrict folds to one held-out session (default: every session).
    #[arg(long)]
    pub session: Option<u8>,
    /// Restrict object-independent folds to one object.
    #[arg(long)]
    pub object: Option<String>,
    /// Epochs per training stage; 0 evaluates --base-checkpoint unchanged.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Initial weights. With finetune-budget this is the user-independent
    /// model; without it one is trained per participant on everyone else.
    #[arg(long)]
    pub base_checkpoint: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

fn load_instances(data: &Path, cfg: &RunConfig) -> anyhow::Result<Vec<LabeledInstance>> {
    if data.join(INDEX_FILE).is_file() {
        return Ok(load_dataset(data)?);
    }
    if !data.is_dir() {
        return Err(echoforge::Error::ingest(data, "not a dataset or corpus directory").into());
    }
    let (instances, skipped) = ingest_corpus(data, &cfg.pipeline()?)?;
    if !skipped.is_empty() {
        eprintln!("{} markers skipped during ingest", skipped.len());
    }
    Ok(instances)
}

fn pick<T: Clone + PartialEq + std::fmt::Display>(all: Vec<T>, only: Option<&T>, kind: &'static str) -> anyhow::Result<Vec<T>> {
    match only {
        None => Ok(all),
        Some(x) if all.contains(x) => Ok(vec![x.clone()]),
        Some(x) => Err(echoforge::Error::Unknown {
            kind,
            name: x.to_string(),
        }
        .into()),
    }
}

fn schemes(args: &TrainArgs, records: &[InstanceRecord]) -> anyhow::Result<Vec<SplitScheme>> {
    let people = || pick(participants(records), args.participant.as_ref(), "participant");
    let per_session = |make: &dyn Fn(String, u8) -> SplitScheme| -> anyhow::Result<Vec<SplitScheme>> {
        let mut out = Vec::new();
        for p in people()? {
            for s in pick(sessions_of(records, &p), args.session.as_ref(), "session")? {
                out.push(make(p.clone(), s));
            }
        }
        Ok(out)
    };
    match args.split {
        Split::Lopo => Ok(people()?.into_iter().map(|participant| SplitScheme::Lopo { participant }).collect()),
        Split::Loso => per_session(&|participant, session| SplitScheme::Loso { participant, session }),
        Split::ObjectIndependent => {
            let mut all: Vec<String> = Vec::new();
            for g in records.iter().filter_map(|r| r.label().ok()).map(|l| l.grasp()) {
                for o in objects_of(records, g) {
                    if !all.contains(&o) {
                        all.push(o);
                    }
                }
            }
            all.sort();
            Ok(pick(all, args.object.as_ref(), "object")?
                .into_iter()
                .map(|object| SplitScheme::ObjectIndependent { object })
                .collect())
        }
        Split::FinetuneBudget(n) => per_session(&|participant, test_session| SplitScheme::FineTuneBudget {
            participant,
            sessions: n,
            test_session,
        }),
    }
}

fn tensors<'a>(instances: &'a [LabeledInstance], ids: &std::collections::BTreeSet<String>) -> Vec<&'a EchoTensor> {
    select(instances, ids).into_iter().map(|i| &i.tensor).collect()
}

fn save_stage(dir: &Path, params: &ModelParams<f32>, log: &[echoforge::model::EpochMetrics]) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    save_checkpoint(&dir.join("model.efck"), params)?;
    write_metrics_csv(&dir.join("metrics.csv"), log)?;
    Ok(())
}

fn fit(
    init: ModelParams<f32>,
    data: &[&EchoTensor],
    cfg: &TrainConfig,
    epochs: usize,
    val: &[&EchoTensor],
) -> anyhow::Result<(ModelParams<f32>, Vec<echoforge::model::EpochMetrics>)> {
    if epochs == 0 {
        return Ok((init, Vec::new()));
    }
    Ok(train(init, data, cfg, epochs, val)?)
}

pub fn run(args: &TrainArgs, cfg: &RunConfig, eval_only: bool) -> anyhow::Result<()> {
    let mut tcfg = cfg.train.clone();
    let epochs = if eval_only { Some(0) } else { args.epochs };
    if let Some(e) = epochs {
        tcfg.epochs_base = e;
        tcfg.epochs_finetune = e;
    }
    let base = match &args.base_checkpoint {
        Some(p) => Some(load_checkpoint(p).map_err(|e| match e {
            echoforge::Error::Io(io) => echoforge::Error::ingest(p, io.to_string()),
            other => other,
        })?),
        None => None,
    };
    if base.is_none() && (tcfg.epochs_base == 0 || tcfg.epochs_finetune == 0) {
        return Err(usage("evaluating without training needs --base-checkpoint"));
    }
    let finetune = matches!(args.split, Split::FinetuneBudget(_));
    let instances = load_instances(&args.data, cfg)?;
    let records: Vec<InstanceRecord> = instances.iter().map(LabeledInstance::record).collect();
    let schemes = schemes(args, &records)?;
    let out = &args.common.out;
    let fresh = || ModelParams::<f32>::init(&cfg.model, cfg.seed);
    let tune_cfg = TrainConfig {
        seed: tcfg.seed.wrapping_add(1),
        ..tcfg.clone()
    };

    let mut bases: BTreeMap<String, ModelParams<f32>> = BTreeMap::new();
    let mut folds = Vec::with_capacity(schemes.len());
    let mut predictions = csv::Writer::from_path(out.join("predictions.csv"))?;
    predictions.write_record(["fold", "instance_id", "truth", "prediction"])?;
    for scheme in &schemes {
        let name = scheme.to_string();
        let (init, plan, stage_cfg, stage_epochs) = match scheme {
            SplitScheme::FineTuneBudget {
                participant,
                sessions,
                test_session,
            } => {
                if !bases.contains_key(participant) {
                    let b = match &base {
                        Some(b) => b.clone(),
                        None => {
                            let lopo = make_split(&records, &SplitScheme::Lopo {
                                participant: participant.clone(),
                            })?;
                            let (b, log) = fit(fresh()?, &tensors(&instances, &lopo.train), &tcfg, tcfg.epochs_base, &[])?;
                            save_stage(&out.join("base").join(participant), &b, &log)?;
                            eprintln!("trained user-independent base for {participant} on {} instances", lopo.train.len());
                            b
                        }
                    };
                    bases.insert(participant.clone(), b);
                }
                let plan = if *sessions == 0 {
                    let mut p = make_split(&records, &SplitScheme::Loso {
                        participant: participant.clone(),
                        session: *test_session,
                    })?;
                    p.name = name.clone();
                    p.train.clear();
                    p
                } else {
                    make_split(&records, scheme)?
                };
                (bases[participant].clone(), plan, &tune_cfg, tcfg.epochs_finetune)
            }
            _ => {
                let init = match &base {
                    Some(b) => b.clone(),
                    None => fresh()?,
                };
                (init, make_split(&records, scheme)?, &tcfg, tcfg.epochs_base)
            }
        };
        let train_set = tensors(&instances, &plan.train);
        let test_set = tensors(&instances, &plan.test);
        let epochs = if train_set.is_empty() { 0 } else { stage_epochs };
        let (params, log) = fit(init, &train_set, stage_cfg, epochs, &test_set)?;
        save_stage(&out.join("folds").join(&name), &params, &log)?;
        let (truth, pred) = evaluate(&params, &test_set)?;
        for ((inst, t), p) in select(&instances, &plan.test).iter().zip(&truth).zip(&pred) {
            predictions.write_record([name.as_str(), inst.id.as_str(), &t.to_string(), &p.to_string()])?;
        }
        let fold = FoldResult::from_predictions(&name, &truth, &pred)?;
        eprintln!(
            "{name}: train {} test {} epochs {epochs} accuracy {}",
            train_set.len(),
            test_set.len(),
            percent(fold.accuracy)
        );
        folds.push(fold);
    }
    predictions.flush()?;

    let report = fold_average(&folds)?;
    let scheme_name = match args.split {
        Split::FinetuneBudget(n) => format!("finetune-budget={n}"),
        Split::Lopo => "lopo".into(),
        Split::Loso => "loso".into(),
        Split::ObjectIndependent => "object-independent".into(),
    };
    write_fold_csv(&out.join("folds.csv"), &report)?;
    write_per_class_csv(&out.join("per_class.csv"), &report.confusion, &report.fpr)?;
    write_summary_json(&out.join("summary.json"), &scheme_name, &report)?;
    save_confusion_png(&out.join("confusion.png"), &report.confusion)?;
    eprintln!(
        "{scheme_name}{}: mean accuracy {} over {} folds, macro FPR {}",
        if finetune { " (two-step)" } else { "" },
        percent(report.mean_accuracy),
        report.folds.len(),
        report.fpr.macro_average.map(percent).unwrap_or_else(|| "undefined".into())
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_names() {
        assert_eq!(parse_split("lopo"), Ok(Split::Lopo));
        assert_eq!(parse_split("loso"), Ok(Split::Loso));
        assert_eq!(parse_split("object-independent"), Ok(Split::ObjectIndependent));
        assert_eq!(parse_split("finetune-budget=3"), Ok(Split::FinetuneBudget(3)));
        let err = parse_split("kfold").unwrap_err();
        assert!(err.contains("lopo") && err.contains("finetune-budget=N"), "{err}");
        assert!(parse_split("finetune-budget=x").is_err());
    }
}
