//! Per-class and macro F1 with the confusion matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::N_CLASSES;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerClass {
    pub low: f64,
    pub medium: f64,
    pub high: f64,
}

impl PerClass {
    pub fn to_array(self) -> [f64; N_CLASSES] {
        [self.low, self.medium, self.high]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub per_class_f1: PerClass,
    pub macro_f1: f64,
    /// Rows are true classes, columns predictions, both low, medium, high.
    pub confusion: [[usize; N_CLASSES]; N_CLASSES],
}

/// F1 of each class (`2PR / (P + R)`, 0 when `P + R = 0`) and their mean.
pub fn evaluate(truth: &[usize], predicted: &[usize]) -> Result<MetricsReport> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptySplit);
    }
    let mut confusion = [[0usize; N_CLASSES]; N_CLASSES];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= N_CLASSES || p >= N_CLASSES {
            return Err(Error::InvalidValue(format!("class index out of range: {t}, {p}")));
        }
        confusion[t][p] += 1;
    }
    let f1 = |c: usize| -> f64 {
        let tp = confusion[c][c] as f64;
        let predicted: usize = (0..N_CLASSES).map(|r| confusion[r][c]).sum();
        let actual: usize = confusion[c].iter().sum();
        let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let recall = if actual == 0 { 0.0 } else { tp / actual as f64 };
        if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    };
    let per = [f1(0), f1(1), f1(2)];
    Ok(MetricsReport {
        n: truth.len(),
        per_class_f1: PerClass {
            low: per[0],
            medium: per[1],
            high: per[2],
        },
        macro_f1: per.iter().sum::<f64>() / N_CLASSES as f64,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions() {
        let t = [0, 1, 2, 2, 1];
        let m = evaluate(&t, &t).unwrap();
        assert_eq!(m.per_class_f1.to_array(), [1.0; 3]);
        assert_eq!(m.macro_f1, 1.0);
    }

    #[test]
    fn all_medium_on_balanced_data() {
        // medium: precision 1/3, recall 1, F1 = 0.5; the others never predicted
        let t: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let m = evaluate(&t, &[1; 30]).unwrap();
        assert_eq!(m.per_class_f1.to_array(), [0.0, 0.5, 0.0]);
        assert!((m.macro_f1 - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(m.confusion[0], [0, 10, 0]);
    }

    #[test]
    fn hand_counted_case() {
        // truth 0 0 1 2, predicted 0 1 1 1
        // class 0: P 1, R 1/2 -> 2/3; class 1: P 1/3, R 1 -> 1/2; class 2: 0
        let m = evaluate(&[0, 0, 1, 2], &[0, 1, 1, 1]).unwrap();
        let expected = [2.0 / 3.0, 0.5, 0.0];
        for (a, b) in m.per_class_f1.to_array().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(evaluate(&[], &[]), Err(Error::EmptySplit)));
        assert!(evaluate(&[0], &[0, 1]).is_err());
        assert!(evaluate(&[3], &[0]).is_err());
    }

    proptest! {
        #[test]
        fn macro_is_mean_and_bounded(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..200)) {
            let (t, p): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let m = evaluate(&t, &p).unwrap();
            let per = m.per_class_f1.to_array();
            prop_assert!(per.iter().all(|f| (0.0..=1.0).contains(f)));
            prop_assert!((m.macro_f1 - per.iter().sum::<f64>() / 3.0).abs() < 1e-12);
            prop_assert_eq!(m.confusion.iter().flatten().sum::<usize>(), t.len());
        }
    }
}
