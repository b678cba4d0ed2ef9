//! Confusion matrices, classification reports and accuracy curves.
//!
//! Classes always appear in label order (Happy, Sad, Romantic, Relaxed) so
//! reports diff cleanly across runs. A ratio with a zero denominator is
//! defined as 0 and flagged with a warning.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{emit_plot, PlotError, PlotFiles, PlotKind, PlotSpec, Series};
use crate::corpus::MoodLabel;
use crate::trainer::TrainHistory;

const K: usize = MoodLabel::COUNT;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{preds} predictions for {golds} gold labels")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error(transparent)]
    Plot(#[from] PlotError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Rows are true moods, columns predicted moods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub cells: [[u64; K]; K],
}

impl ConfusionMatrix {
    pub fn new(cells: [[u64; K]; K]) -> Self {
        Self { cells }
    }

    pub fn get(&self, truth: MoodLabel, predicted: MoodLabel) -> u64 {
        self.cells[truth.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..K).map(|i| self.cells[i][i]).sum()
    }

    /// Support of class `c`.
    pub fn row_sum(&self, c: usize) -> u64 {
        self.cells[c].iter().sum()
    }

    /// Number of predictions of class `c`.
    pub fn col_sum(&self, c: usize) -> u64 {
        self.cells.iter().map(|r| r[c]).sum()
    }

    pub fn scaled(&self, factor: u64) -> Self {
        Self {
            cells: self.cells.map(|r| r.map(|x| x * factor)),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for m in MoodLabel::ALL {
            let _ = write!(out, ",{}", m.as_str());
        }
        out.push('\n');
        for m in MoodLabel::ALL {
            out.push_str(m.as_str());
            for c in self.cells[m.index()] {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }

    /// Heatmap spec: one series per true mood, cells at predicted-mood columns.
    pub fn heatmap_spec(&self, title: &str) -> PlotSpec {
        let series = MoodLabel::ALL
            .iter()
            .map(|&t| {
                Series::new(
                    t.as_str(),
                    (0..K).map(|p| (p as f64, self.cells[t.index()][p] as f64)).collect(),
                )
            })
            .collect();
        PlotSpec::new(PlotKind::Heatmap, title, series)
            .labels("predicted", "true")
            .ticks(MoodLabel::ALL.iter().map(|m| m.as_str().to_string()).collect())
    }
}

/// Counts `(gold, prediction)` pairs.
pub fn confusion(preds: &[MoodLabel], golds: &[MoodLabel]) -> Result<ConfusionMatrix> {
    if preds.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut m = ConfusionMatrix::default();
    for (p, g) in preds.iter().zip(golds) {
        m.cells[g.index()][p.index()] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: MoodLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: AverageMetrics,
    pub weighted_avg: AverageMetrics,
    pub total: u64,
    pub warnings: Vec<String>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean `2PR/(P+R)`, or 0 when `P + R = 0`.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn report(matrix: &ConfusionMatrix) -> Result<EvalReport> {
    let total = matrix.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let mut warnings = Vec::new();
    let classes: Vec<ClassMetrics> = MoodLabel::ALL
        .iter()
        .map(|&label| {
            let c = label.index();
            let tp = matrix.cells[c][c];
            let (support, predicted) = (matrix.row_sum(c), matrix.col_sum(c));
            if support == 0 {
                warnings.push(format!("class {label} has no true examples; recall and f1 set to 0"));
            }
            if predicted == 0 {
                warnings.push(format!("class {label} was never predicted; precision set to 0"));
            }
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            ClassMetrics {
                label,
                precision,
                recall,
                f1: f1_score(precision, recall),
                support,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| classes.iter().map(f).sum::<f64>() / K as f64;
    let weighted = |f: fn(&ClassMetrics) -> f64| classes.iter().map(|c| f(c) * c.support as f64).sum::<f64>() / total as f64;
    Ok(EvalReport {
        accuracy: ratio(matrix.trace(), total),
        macro_avg: AverageMetrics {
            precision: mean(|c| c.precision),
            recall: mean(|c| c.recall),
            f1: mean(|c| c.f1),
            support: total,
        },
        weighted_avg: AverageMetrics {
            precision: weighted(|c| c.precision),
            recall: weighted(|c| c.recall),
            f1: weighted(|c| c.f1),
            support: total,
        },
        classes,
        total,
        warnings,
    })
}

impl EvalReport {
    /// Aligned plain-text table in the usual classification-report layout.
    pub fn to_text(&self) -> String {
        let mut out = format!("{:>14} {:>10} {:>10} {:>10} {:>10}\n\n", "", "precision", "recall", "f1-score", "support");
        for c in &self.classes {
            let _ = writeln!(
                out,
                "{:>14} {:>10.4} {:>10.4} {:>10.4} {:>10}",
                c.label.as_str(),
                c.precision,
                c.recall,
                c.f1,
                c.support
            );
        }
        out.push('\n');
        let _ = writeln!(out, "{:>14} {:>10} {:>10} {:>10.4} {:>10}", "accuracy", "", "", self.accuracy, self.total);
        for (name, a) in [("macro avg", &self.macro_avg), ("weighted avg", &self.weighted_avg)] {
            let _ = writeln!(
                out,
                "{:>14} {:>10.4} {:>10.4} {:>10.4} {:>10}",
                name, a.precision, a.recall, a.f1, a.support
            );
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }

    /// Machine-readable form; floats round-trip exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,f1,support\n");
        for c in &self.classes {
            let _ = writeln!(out, "{},{:?},{:?},{:?},{}", c.label.as_str(), c.precision, c.recall, c.f1, c.support);
        }
        let _ = writeln!(out, "accuracy,,,{:?},{}", self.accuracy, self.total);
        for (name, a) in [("macro avg", &self.macro_avg), ("weighted avg", &self.weighted_avg)] {
            let _ = writeln!(out, "{name},{:?},{:?},{:?},{}", a.precision, a.recall, a.f1, a.support);
        }
        out
    }
}

/// Train and validation accuracy per epoch as a line plot plus CSV sidecar.
pub fn accuracy_curve(history: &TrainHistory, path: &Path) -> Result<PlotFiles> {
    if history.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(emit_plot(&accuracy_curve_spec(history), path)?)
}

pub fn accuracy_curve_spec(history: &TrainHistory) -> PlotSpec {
    let series = |name: &str, f: fn(&crate::trainer::EpochRecord) -> f64| {
        Series::new(name, history.epochs.iter().map(|r| (r.epoch as f64, f(r))).collect())
    };
    PlotSpec::new(
        PlotKind::Line,
        "Training and validation accuracy",
        vec![series("train", |r| r.train_acc), series("validation", |r| r.val_acc)],
    )
    .labels("epoch", "accuracy")
}

pub fn confusion_heatmap(matrix: &ConfusionMatrix, path: &Path) -> Result<PlotFiles> {
    Ok(emit_plot(&matrix.heatmap_spec("Confusion matrix"), path)?)
}
