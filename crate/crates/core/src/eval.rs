//! Accuracy, per-class precision/recall/F1, and the confusion matrix.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Rows are true classes, columns are predicted classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
    class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn new(class_count: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; class_count]; class_count],
            class_names: (0..class_count).map(|c| format!("device{c}")).collect(),
        }
    }

    pub fn from_predictions(truth: &[u16], predicted: &[usize], class_count: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::shape(format!(
                "{} truths vs {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut cm = ConfusionMatrix::new(class_count);
        for (&t, &p) in truth.iter().zip(predicted) {
            let t = usize::from(t);
            if t >= class_count || p >= class_count {
                return Err(Error::shape(format!(
                    "class pair ({t}, {p}) outside the {class_count}-class range"
                )));
            }
            cm.counts[t][p] += 1;
        }
        Ok(cm)
    }

    pub fn class_count(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.class_count()).map(|c| self.counts[c][c]).sum()
    }

    fn true_positives(&self, class: usize) -> u64 {
        self.counts[class][class]
    }

    fn predicted_count(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }

    fn actual_count(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }
}

/// One class's precision, recall, and F1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Full evaluation: accuracy, per-class metrics, macro averages, confusion.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_average: ClassMetrics,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Builds the report from already-computed predictions.
pub fn report_from_predictions(
    truth: &[u16],
    predicted: &[usize],
    class_count: usize,
) -> Result<EvalReport> {
    if truth.is_empty() {
        return Err(Error::EmptyInput("empty test set".into()));
    }
    let confusion = ConfusionMatrix::from_predictions(truth, predicted, class_count)?;
    let per_class: Vec<ClassMetrics> = (0..class_count)
        .map(|c| {
            let tp = confusion.true_positives(c);
            let precision = ratio(tp, confusion.predicted_count(c));
            let recall = ratio(tp, confusion.actual_count(c));
            ClassMetrics {
                precision,
                recall,
                f1: f1(precision, recall),
            }
        })
        .collect();
    let k = class_count as f64;
    let macro_average = ClassMetrics {
        precision: per_class.iter().map(|m| m.precision).sum::<f64>() / k,
        recall: per_class.iter().map(|m| m.recall).sum::<f64>() / k,
        f1: per_class.iter().map(|m| m.f1).sum::<f64>() / k,
    };
    Ok(EvalReport {
        accuracy: ratio(confusion.trace(), confusion.total()),
        per_class,
        macro_average,
        confusion,
    })
}

/// Runs a prediction function over a labelled feature matrix.
pub fn evaluate<F>(predict: F, test: &FeatureMatrix, class_count: usize) -> Result<EvalReport>
where
    F: Fn(&[f64]) -> Result<usize>,
{
    if test.is_empty() {
        return Err(Error::EmptyInput("empty test set".into()));
    }
    let mut predictions = Vec::with_capacity(test.len());
    for i in 0..test.len() {
        let row = test.vector(i);
        predictions.push(predict(row.as_slice().expect("contiguous row"))?);
    }
    report_from_predictions(test.labels(), &predictions, class_count)
}

/// Divides each row by its sum. Rows sum to one afterwards; a row with no
/// samples is an error naming the class.
pub fn normalize_confusion(cm: &ConfusionMatrix) -> Result<Vec<Vec<f64>>> {
    cm.counts
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let sum: u64 = row.iter().sum();
            if sum == 0 {
                return Err(Error::ZeroRow(c));
            }
            Ok(row.iter().map(|&v| v as f64 / sum as f64).collect())
        })
        .collect()
}

/// Writes `metrics.csv` (class, precision, recall, f1 plus a macro row) and
/// `confusion.csv` (normalized rows) into `dir`, four decimal places.
pub fn export_report(report: &EvalReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;

    let mut metrics = String::from("class,precision,recall,f1\n");
    for (c, m) in report.per_class.iter().enumerate() {
        metrics.push_str(&format!(
            "{},{:.4},{:.4},{:.4}\n",
            report.confusion.class_names()[c],
            m.precision,
            m.recall,
            m.f1
        ));
    }
    metrics.push_str(&format!(
        "macro,{:.4},{:.4},{:.4}\n",
        report.macro_average.precision, report.macro_average.recall, report.macro_average.f1
    ));
    fs::write(dir.join("metrics.csv"), metrics)?;

    let normalized = normalize_confusion(&report.confusion)?;
    let mut confusion = String::from("true\\predicted");
    for name in report.confusion.class_names() {
        confusion.push(',');
        confusion.push_str(name);
    }
    confusion.push('\n');
    for (c, row) in normalized.iter().enumerate() {
        confusion.push_str(&report.confusion.class_names()[c]);
        for v in row {
            confusion.push_str(&format!(",{v:.4}"));
        }
        confusion.push('\n');
    }
    fs::write(dir.join("confusion.csv"), confusion)?;
    Ok(())
}
