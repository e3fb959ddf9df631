use serde::{Deserialize, Serialize};

use super::EvalError;

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub n: u64,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    /// (TP, FP, FN, TN) of `class` against the rest.
    pub fn one_vs_rest(&self, class: usize) -> (u64, u64, u64, u64) {
        let tp = self.counts[class][class];
        let row: u64 = self.counts[class].iter().sum();
        let col: u64 = self.counts.iter().map(|r| r[class]).sum();
        let fn_ = row - tp;
        let fp = col - tp;
        (tp, fp, fn_, self.n - tp - fp - fn_)
    }
}

pub fn confusion(y_true: &[usize], y_pred: &[usize], classes: usize) -> Result<ConfusionMatrix, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch {
            truth: y_true.len(),
            predicted: y_pred.len(),
        });
    }
    let mut counts = vec![vec![0u64; classes]; classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= classes || p >= classes {
            return Err(EvalError::LabelOutOfRange {
                label: t.max(p),
                classes,
            });
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        n: y_true.len() as u64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f1: f64,
    pub support: u64,
    /// Some ratio of this class was 0/0 and reported as 0.
    pub undefined: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub n: u64,
}

fn ratio(num: u64, den: u64, undefined: &mut bool) -> f64 {
    if den == 0 {
        *undefined = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricReport, EvalError> {
    if cm.n == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let per_class: Vec<ClassMetrics> = (0..cm.classes())
        .map(|c| {
            let (tp, fp, fn_, tn) = cm.one_vs_rest(c);
            let mut undefined = false;
            let precision = ratio(tp, tp + fp, &mut undefined);
            let recall = ratio(tp, tp + fn_, &mut undefined);
            let specificity = ratio(tn, tn + fp, &mut undefined);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                undefined |= tp + fp == 0 && tp + fn_ == 0;
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                specificity,
                f1,
                support: tp + fn_,
                undefined,
            }
        })
        .collect();
    let balanced_accuracy = per_class.iter().map(|m| m.recall).sum::<f64>() / cm.classes() as f64;
    Ok(MetricReport {
        per_class,
        accuracy: cm.trace() as f64 / cm.n as f64,
        balanced_accuracy,
        n: cm.n,
    })
}

/// Balanced-accuracy form for a binary matrix: mean of recall and specificity of class 1.
pub fn binary_balanced_accuracy(cm: &ConfusionMatrix) -> f64 {
    assert_eq!(cm.classes(), 2, "binary matrix expected");
    let (tp, fp, fn_, tn) = cm.one_vs_rest(1);
    let mut u = false;
    (ratio(tp, tp + fn_, &mut u) + ratio(tn, tn + fp, &mut u)) / 2.0
}

/// The scalar metrics that are averaged across clusters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scalars {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

impl MetricReport {
    pub fn scalars(&self) -> Scalars {
        let c = self.per_class.len().max(1) as f64;
        Scalars {
            accuracy: self.accuracy,
            balanced_accuracy: self.balanced_accuracy,
            macro_precision: self.per_class.iter().map(|m| m.precision).sum::<f64>() / c,
            macro_recall: self.per_class.iter().map(|m| m.recall).sum::<f64>() / c,
            macro_f1: self.per_class.iter().map(|m| m.f1).sum::<f64>() / c,
        }
    }
}

/// Population-weighted mean of `(value, population)` pairs.
pub fn weighted_mean(pairs: &[(f64, f64)]) -> Result<f64, EvalError> {
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    if pairs.iter().any(|p| !(p.1 >= 0.0)) || !(total > 0.0) {
        return Err(EvalError::InvalidPopulation);
    }
    Ok(pairs.iter().map(|(v, w)| v * w).sum::<f64>() / total)
}

/// Each scalar metric weighted by its cluster population.
pub fn weighted_cluster_aggregate(reports: &[(Scalars, f64)]) -> Result<Scalars, EvalError> {
    let w = |f: fn(&Scalars) -> f64| weighted_mean(&reports.iter().map(|(s, p)| (f(s), *p)).collect::<Vec<_>>());
    Ok(Scalars {
        accuracy: w(|s| s.accuracy)?,
        balanced_accuracy: w(|s| s.balanced_accuracy)?,
        macro_precision: w(|s| s.macro_precision)?,
        macro_recall: w(|s| s.macro_recall)?,
        macro_f1: w(|s| s.macro_f1)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binary(tp: u64, fn_: u64, fp: u64, tn: u64) -> ConfusionMatrix {
        ConfusionMatrix {
            counts: vec![vec![tn, fp], vec![fn_, tp]],
            n: tp + fn_ + fp + tn,
        }
    }

    #[test]
    fn small_confusion() {
        let cm = confusion(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1], vec![0, 1]]);
        let diag = confusion(&[0, 1, 2, 2], &[0, 1, 2, 2], 3).unwrap();
        let r = metrics(&diag).unwrap();
        assert_eq!((r.accuracy, r.balanced_accuracy), (1.0, 1.0));
        assert!(r.per_class.iter().all(|m| m.precision == 1.0 && m.recall == 1.0 && m.f1 == 1.0 && m.specificity == 1.0));
    }

    #[test]
    fn empty_and_mismatched() {
        let cm = confusion(&[], &[], 3).unwrap();
        assert_eq!(cm.n, 0);
        assert!(cm.counts.iter().flatten().all(|&c| c == 0));
        assert_eq!(metrics(&cm).unwrap_err(), EvalError::EmptyMatrix);
        assert!(matches!(confusion(&[0], &[], 2), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn hand_computed_binary() {
        let cm = binary(8, 2, 3, 7);
        let r = metrics(&cm).unwrap();
        assert!((r.per_class[1].recall - 0.8).abs() < 1e-15);
        assert!((r.per_class[1].specificity - 0.7).abs() < 1e-15);
        assert!((binary_balanced_accuracy(&cm) - 0.75).abs() < 1e-15);
        assert!((r.balanced_accuracy - 0.75).abs() < 1e-15);
    }

    #[test]
    fn absent_class_is_flagged_zero() {
        let cm = confusion(&[0, 1], &[0, 1], 3).unwrap();
        let r = metrics(&cm).unwrap();
        assert!(r.per_class[2].undefined);
        assert_eq!((r.per_class[2].precision, r.per_class[2].recall, r.per_class[2].f1), (0.0, 0.0, 0.0));
        assert!(!r.per_class[0].undefined);
    }

    #[test]
    fn table_four_weighting() {
        let acc = weighted_mean(&[(0.987, 133.0), (0.972, 259.0), (0.965, 263.0)]).unwrap();
        assert_eq!(format!("{acc:.3}"), "0.972");
        let ba = weighted_mean(&[(0.98, 133.0), (0.93, 259.0), (0.94, 263.0)]).unwrap();
        assert_eq!(format!("{ba:.3}"), "0.944");
        let eq = weighted_mean(&[(0.2, 5.0), (0.4, 5.0)]).unwrap();
        assert!((eq - 0.3).abs() < 1e-15);
        assert_eq!(weighted_mean(&[(0.2, 0.0)]).unwrap_err(), EvalError::InvalidPopulation);
    }

    proptest! {
        #[test]
        fn binary_forms_agree_exactly(tp in 0u64..500, fn_ in 0u64..500, fp in 0u64..500, tn in 0u64..500) {
            prop_assume!(tp + fn_ > 0 && fp + tn > 0);
            let cm = binary(tp, fn_, fp, tn);
            prop_assert_eq!(binary_balanced_accuracy(&cm), metrics(&cm).unwrap().balanced_accuracy);
        }

        #[test]
        fn aggregate_ignores_order_and_scale(
            v in prop::collection::vec((0.0f64..1.0, 1.0f64..1000.0), 1..6),
            scale in 0.5f64..20.0,
        ) {
            let s = |a: f64| Scalars { accuracy: a, balanced_accuracy: a / 2.0, macro_precision: a, macro_recall: a, macro_f1: a };
            let base: Vec<(Scalars, f64)> = v.iter().map(|&(a, p)| (s(a), p)).collect();
            let rev: Vec<(Scalars, f64)> = base.iter().rev().map(|&(m, p)| (m, p * scale)).collect();
            let x = weighted_cluster_aggregate(&base).unwrap();
            let y = weighted_cluster_aggregate(&rev).unwrap();
            prop_assert!((x.accuracy - y.accuracy).abs() < 1e-12);
            prop_assert!((x.balanced_accuracy - y.balanced_accuracy).abs() < 1e-12);
        }
    }
}
