//! Accuracy, confusion matrices, false-positive rates, fold averaging and
//! fine-tune budget curves.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{make_split, LabeledInstance, SplitScheme};
use crate::echo::EchoTensor;
use crate::error::{Error, Result};
use crate::labels::{GestureLabel, GESTURES_PER_GRASP, NUM_CLASSES};
use crate::model::{evaluate, train, ModelParams, TrainConfig};
use crate::render::{viridis, RgbImage};

/// Rows are ground truth, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        Self {
            counts: vec![vec![0; NUM_CLASSES]; NUM_CLASSES],
            class_names: GestureLabel::all().map(|l| l.to_string()).collect(),
        }
    }
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.trace() as f64 / total as f64
        }
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

pub fn confusion(truth: &[usize], pred: &[usize]) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in truth.iter().zip(pred) {
        if t >= NUM_CLASSES {
            return Err(Error::Label(t));
        }
        if p >= NUM_CLASSES {
            return Err(Error::Label(p));
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FprReport {
    /// `None` where FP + TN = 0.
    pub per_class: Vec<Option<f64>>,
    /// Unweighted mean over classes with a defined rate.
    pub macro_average: Option<f64>,
}

/// FP / (FP + TN) per class, macro-averaged.
pub fn false_positive_rate(cm: &ConfusionMatrix) -> Result<FprReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Empty("confusion matrix"));
    }
    let rows = cm.row_sums();
    let per_class: Vec<Option<f64>> = (0..NUM_CLASSES)
        .map(|c| {
            let col: u64 = (0..NUM_CLASSES).map(|r| cm.counts[r][c]).sum();
            let tp = cm.counts[c][c];
            let fp = col - tp;
            let tn = total + tp - rows[c] - col;
            (fp + tn > 0).then(|| fp as f64 / (fp + tn) as f64)
        })
        .collect();
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let macro_average = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(FprReport {
        per_class,
        macro_average,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub name: String,
    pub accuracy: f64,
    pub n_test: usize,
    pub confusion: ConfusionMatrix,
}

impl FoldResult {
    pub fn from_predictions(name: impl Into<String>, truth: &[usize], pred: &[usize]) -> Result<Self> {
        let cm = confusion(truth, pred)?;
        Ok(Self {
            name: name.into(),
            accuracy: cm.accuracy(),
            n_test: truth.len(),
            confusion: cm,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub mean_accuracy: f64,
    pub folds: Vec<FoldSummary>,
    pub confusion: ConfusionMatrix,
    pub fpr: FprReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub name: String,
    pub accuracy: f64,
    pub n_test: usize,
}

/// Unweighted mean of fold accuracies plus the summed confusion matrix.
pub fn fold_average(folds: &[FoldResult]) -> Result<FoldReport> {
    if folds.is_empty() {
        return Err(Error::Empty("fold list"));
    }
    let mean_accuracy = folds.iter().map(|f| f.accuracy).sum::<f64>() / folds.len() as f64;
    let mut confusion = ConfusionMatrix::default();
    for f in folds {
        confusion.add(&f.confusion);
    }
    let fpr = false_positive_rate(&confusion)?;
    Ok(FoldReport {
        mean_accuracy,
        folds: folds
            .iter()
            .map(|f| FoldSummary {
                name: f.name.clone(),
                accuracy: f.accuracy,
                n_test: f.n_test,
            })
            .collect(),
        confusion,
        fpr,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub budget: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub accuracy: f64,
}

/// Fine-tunes `base` on the first `n` sessions of `participant` (other than
/// `test_session`) for each budget and scores the held-out session. Budget
/// 0 scores `base` as is.
pub fn finetune_curve(
    instances: &[LabeledInstance],
    base: &ModelParams<f32>,
    participant: &str,
    test_session: u8,
    budgets: &[usize],
    cfg: &TrainConfig,
) -> Result<Vec<CurvePoint>> {
    let probe = SplitScheme::Loso {
        participant: participant.to_string(),
        session: test_session,
    };
    let records: Vec<_> = instances.iter().map(LabeledInstance::record).collect();
    let loso = make_split(&records, &probe)?;
    let test: Vec<&EchoTensor> = instances
        .iter()
        .filter(|i| loso.test.contains(&i.id))
        .map(|i| &i.tensor)
        .collect();
    budgets
        .iter()
        .map(|&budget| {
            let tuned = if budget == 0 {
                (base.clone(), 0)
            } else {
                let plan = make_split(
                    &records,
                    &SplitScheme::FineTuneBudget {
                        participant: participant.to_string(),
                        sessions: budget,
                        test_session,
                    },
                )?;
                let data: Vec<&EchoTensor> = instances
                    .iter()
                    .filter(|i| plan.train.contains(&i.id))
                    .map(|i| &i.tensor)
                    .collect();
                let (p, _) = train(base.clone(), &data, cfg, cfg.epochs_finetune, &[])?;
                (p, data.len())
            };
            let (truth, pred) = evaluate(&tuned.0, &test)?;
            Ok(CurvePoint {
                budget,
                n_train: tuned.1,
                n_test: test.len(),
                accuracy: confusion(&truth, &pred)?.accuracy(),
            })
        })
        .collect()
}

/// Percent with one decimal, as printed in summaries.
pub fn percent(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

pub fn write_fold_csv(path: &Path, report: &FoldReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["fold", "n_test", "accuracy"])?;
    for f in &report.folds {
        w.write_record([f.name.clone(), f.n_test.to_string(), f.accuracy.to_string()])?;
    }
    w.write_record(["mean".to_string(), String::new(), report.mean_accuracy.to_string()])?;
    w.flush()?;
    Ok(())
}

pub fn write_per_class_csv(path: &Path, cm: &ConfusionMatrix, fpr: &FprReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["class_index", "label", "support", "correct", "recall", "fpr"])?;
    let rows = cm.row_sums();
    for c in 0..NUM_CLASSES {
        let recall = if rows[c] > 0 {
            (cm.counts[c][c] as f64 / rows[c] as f64).to_string()
        } else {
            String::new()
        };
        w.write_record([
            c.to_string(),
            cm.class_names[c].clone(),
            rows[c].to_string(),
            cm.counts[c][c].to_string(),
            recall,
            fpr.per_class[c].map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary<'a> {
    pub scheme: &'a str,
    pub mean_accuracy: f64,
    pub mean_accuracy_display: String,
    pub macro_fpr: Option<f64>,
    pub folds: &'a [FoldSummary],
}

pub fn write_summary_json(path: &Path, scheme: &str, report: &FoldReport) -> Result<()> {
    let s = Summary {
        scheme,
        mean_accuracy: report.mean_accuracy,
        mean_accuracy_display: percent(report.mean_accuracy),
        macro_fpr: report.fpr.macro_average,
        folds: &report.folds,
    };
    std::fs::write(path, serde_json::to_string_pretty(&s)?)?;
    Ok(())
}

const CELL: usize = 14;
const MARGIN: usize = 28;
const GAP: usize = 3;

fn cell_origin(i: usize) -> usize {
    MARGIN + i * CELL + (i / GESTURES_PER_GRASP) * GAP
}

/// Row-normalised heatmap, grasp-major class order with a gap between
/// grasp groups and class indices along both axes.
pub fn confusion_image(cm: &ConfusionMatrix) -> RgbImage {
    let groups = NUM_CLASSES / GESTURES_PER_GRASP;
    let side = MARGIN + NUM_CLASSES * CELL + (groups - 1) * GAP + 4;
    let mut img = RgbImage::new(side, side, [255, 255, 255]);
    let rows = cm.row_sums();
    for r in 0..NUM_CLASSES {
        for c in 0..NUM_CLASSES {
            let t = if rows[r] > 0 {
                cm.counts[r][c] as f64 / rows[r] as f64
            } else {
                0.0
            };
            img.fill_rect(cell_origin(c), cell_origin(r), CELL - 1, CELL - 1, viridis(t));
        }
    }
    for i in 0..NUM_CLASSES {
        let ink = [40, 40, 40];
        img.draw_number(2, cell_origin(i) + 4, i, 1, ink);
        let x = cell_origin(i) + if i >= 10 { 3 } else { 5 };
        img.draw_number(x, MARGIN - 9, i, 1, ink);
    }
    img
}

pub fn save_confusion_png(path: &Path, cm: &ConfusionMatrix) -> Result<()> {
    confusion_image(cm).save(path)
}
