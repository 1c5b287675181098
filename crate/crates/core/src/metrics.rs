//! Confusion counts and per-class precision, recall and F1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self { n_classes, counts: vec![0; n_classes * n_classes] }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n_classes + predicted]
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let n = self.n_classes;
        for label in [truth, predicted] {
            if label >= n {
                return Err(Error::IndexOutOfRange { index: label, len: n });
            }
        }
        self.counts[truth * n + predicted] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|c| self.get(c, c)).sum()
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.n_classes..(truth + 1) * self.n_classes]
    }
}

pub fn confusion(pairs: &[(usize, usize)], n_classes: usize) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(n_classes);
    for &(t, p) in pairs {
        cm.add(t, p)?;
    }
    Ok(cm)
}

/// A ratio whose denominator may be zero; `undefined` ratios are reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub value: f64,
    pub undefined: bool,
}

impl Ratio {
    fn of(num: f64, den: f64) -> Self {
        if den == 0.0 {
            Self { value: 0.0, undefined: true }
        } else {
            Self { value: num / den, undefined: false }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub support: u64,
    pub precision: Ratio,
    pub recall: Ratio,
    pub f1: Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub total: u64,
    pub classes: Vec<ClassMetrics>,
}

pub fn f1_score(precision: f64, recall: f64) -> Ratio {
    Ratio::of(2.0 * precision * recall, precision + recall)
}

/// One-vs-rest precision, recall and F1 for each class, plus overall accuracy.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Config("cannot compute metrics on an empty confusion matrix".into()));
    }
    let n = cm.n_classes();
    let classes = (0..n)
        .map(|c| {
            let tp = cm.get(c, c) as f64;
            let predicted: u64 = (0..n).map(|t| cm.get(t, c)).sum();
            let support: u64 = cm.row(c).iter().sum();
            let precision = Ratio::of(tp, predicted as f64);
            let recall = Ratio::of(tp, support as f64);
            let f1 = if precision.undefined || recall.undefined {
                Ratio { value: 0.0, undefined: true }
            } else {
                f1_score(precision.value, recall.value)
            };
            ClassMetrics { class: c, support, precision, recall, f1 }
        })
        .collect();
    Ok(Metrics { accuracy: cm.trace() as f64 / total as f64, total, classes })
}

fn cell(r: Ratio) -> String {
    if r.undefined {
        format!("{:.4}*", r.value)
    } else {
        format!("{:.4}", r.value)
    }
}

fn class_label(names: &[String], c: usize) -> String {
    names.get(c).cloned().unwrap_or_else(|| c.to_string())
}

/// Aligned table; undefined ratios are marked with `*`.
pub fn format_report(m: &Metrics, names: &[String]) -> String {
    let width = (0..m.classes.len()).map(|c| class_label(names, c).chars().count()).max().unwrap_or(5).max(5);
    let mut out = format!("{:<width$}  {:>10}  {:>10}  {:>10}  {:>8}\n", "class", "precision", "recall", "f1", "support");
    for c in &m.classes {
        out.push_str(&format!(
            "{:<width$}  {:>10}  {:>10}  {:>10}  {:>8}\n",
            class_label(names, c.class),
            cell(c.precision),
            cell(c.recall),
            cell(c.f1),
            c.support
        ));
    }
    out.push_str(&format!("accuracy {:.4} over {} examples\n", m.accuracy, m.total));
    if m.classes.iter().any(|c| c.precision.undefined || c.recall.undefined) {
        out.push_str("* undefined (zero denominator), reported as 0\n");
    }
    out
}

pub fn format_csv(m: &Metrics, names: &[String]) -> String {
    let mut out = String::from("class,precision,recall,f1\n");
    for c in &m.classes {
        out.push_str(&format!(
            "{},{:.4},{:.4},{:.4}\n",
            class_label(names, c.class),
            c.precision.value,
            c.recall.value,
            c.f1.value
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_examples() {
        let cm = confusion(&[(0, 0), (1, 1), (2, 2)], 3).unwrap();
        assert_eq!(cm.trace(), 3);
        assert_eq!(cm.total(), 3);
        assert_eq!(confusion(&[], 2).unwrap().total(), 0);
        let cm = confusion(&[(0, 1), (1, 1)], 2).unwrap();
        assert_eq!((cm.get(0, 1), cm.get(1, 1), cm.get(0, 0)), (1, 1, 0));
        assert!(matches!(confusion(&[(0, 2)], 2), Err(Error::IndexOutOfRange { index: 2, len: 2 })));
    }

    #[test]
    fn one_fp_example() {
        // class 0: TP=1, FP=1, FN=0
        let m = metrics(&confusion(&[(0, 0), (1, 0)], 2).unwrap()).unwrap();
        let c = &m.classes[0];
        assert_eq!(c.precision.value, 0.5);
        assert_eq!(c.recall.value, 1.0);
        assert!((c.f1.value - 2.0 / 3.0).abs() < 1e-15);
        assert!(m.classes[1].precision.undefined);
        assert_eq!(m.classes[1].f1.value, 0.0);
    }

    #[test]
    fn empty_matrix_is_an_error() {
        assert!(metrics(&ConfusionMatrix::new(3)).is_err());
    }

    #[test]
    fn report_formats() {
        let m = metrics(&confusion(&[(0, 0), (1, 0), (1, 1)], 2).unwrap()).unwrap();
        let names = vec!["neg".to_string(), "pos".to_string()];
        let csv = format_csv(&m, &names);
        assert_eq!(csv, "class,precision,recall,f1\nneg,0.5000,1.0000,0.6667\npos,1.0000,0.5000,0.6667\n");
        let text = format_report(&m, &names);
        assert!(text.contains("accuracy 0.6667 over 3 examples"));
    }
}
