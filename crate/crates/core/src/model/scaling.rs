//! Split-dependent rescaling. Parameters are fitted on the training split and
//! reused unchanged for validation and test data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{SequenceChannel, SequenceLayout, FEATURE_COLUMNS};
use crate::io::TRAIT_NAMES;
use crate::model::{Example, N_ENV};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMethod {
    /// `(v - mean) / sd`, population sd.
    ZScore,
    /// `(v - min) / (max - min)`; values outside the training range are not
    /// clamped.
    MinMax,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaler {
    pub method: ScaleMethod,
    pub offset: f64,
    pub scale: f64,
    /// Constant on the training split; transformed values are 0.
    pub zero_variance: bool,
}

impl ColumnScaler {
    pub fn transform(&self, v: f64) -> f64 {
        match (self.method, self.zero_variance) {
            (ScaleMethod::Identity, _) => v,
            (_, true) => 0.0,
            _ => (v - self.offset) / self.scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub columns: Vec<ColumnScaler>,
}

impl Scaler {
    /// Fits one scaler per column over `rows` (each of width `methods.len()`).
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, methods: &[ScaleMethod]) -> Result<Self> {
        let k = methods.len();
        let mut n = 0usize;
        let mut sum = vec![0.0; k];
        let mut min = vec![f64::INFINITY; k];
        let mut max = vec![f64::NEG_INFINITY; k];
        let mut rows_seen: Vec<&[f64]> = Vec::new();
        for r in rows {
            if r.len() != k {
                return Err(Error::ShapeMismatch {
                    expected: format!("{k} columns"),
                    found: format!("{} columns", r.len()),
                });
            }
            n += 1;
            for (c, &v) in r.iter().enumerate() {
                sum[c] += v;
                min[c] = min[c].min(v);
                max[c] = max[c].max(v);
            }
            rows_seen.push(r);
        }
        if n == 0 {
            return Err(Error::EmptySplit);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let mut ss = vec![0.0; k];
        for r in &rows_seen {
            for c in 0..k {
                ss[c] += (r[c] - mean[c]).powi(2);
            }
        }
        let columns = (0..k)
            .map(|c| {
                let (offset, scale) = match methods[c] {
                    ScaleMethod::ZScore => (mean[c], (ss[c] / n as f64).sqrt()),
                    ScaleMethod::MinMax => (min[c], max[c] - min[c]),
                    ScaleMethod::Identity => (0.0, 1.0),
                };
                let tiny = f64::EPSILON * mean[c].abs().max(1.0);
                ColumnScaler {
                    method: methods[c],
                    offset,
                    scale,
                    zero_variance: methods[c] != ScaleMethod::Identity && !(scale > tiny),
                }
            })
            .collect();
        Ok(Self { columns })
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn transform(&self, row: &mut [f64]) {
        for (v, c) in row.iter_mut().zip(&self.columns) {
            *v = c.transform(*v);
        }
    }

    pub fn zero_variance_columns(&self) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.zero_variance)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Methods for the static feature table: saccade amplitude and duration are
/// right-skewed and min-max scaled, personality and one-hot columns pass
/// through, everything else is z-scored.
pub fn feature_table_methods() -> Vec<ScaleMethod> {
    FEATURE_COLUMNS
        .iter()
        .map(|c| {
            if c.starts_with("sacc_amp") || c.starts_with("sacc_dur") {
                ScaleMethod::MinMax
            } else if TRAIT_NAMES.contains(c) || c.starts_with("stim_") {
                ScaleMethod::Identity
            } else {
                ScaleMethod::ZScore
            }
        })
        .collect()
}

/// Per-column methods for a step sequence. Speed is skewed and min-max
/// scaled; region one-hots and saccade progress are already in [0, 1].
pub fn sequence_methods(layout: &SequenceLayout) -> Vec<ScaleMethod> {
    layout
        .channels
        .iter()
        .flat_map(|c| {
            let m = match c {
                SequenceChannel::Pupil | SequenceChannel::GazeX | SequenceChannel::GazeY => ScaleMethod::ZScore,
                SequenceChannel::Speed => ScaleMethod::MinMax,
                SequenceChannel::Region | SequenceChannel::SaccadeProgress => ScaleMethod::Identity,
            };
            std::iter::repeat_n(m, c.width())
        })
        .collect()
}

/// Sequence and environment scaling for network inputs. Sequence statistics
/// pool every step of every training trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScaler {
    pub sequence: Scaler,
    pub environment: Scaler,
}

impl ExampleScaler {
    pub fn fit(train: &[Example<f64>], layout: &SequenceLayout) -> Result<Self> {
        let methods = sequence_methods(layout);
        let width = methods.len();
        if let Some(e) = train.iter().find(|e| e.width() != width) {
            return Err(Error::ShapeMismatch {
                expected: format!("{width} sequence columns"),
                found: format!("{} in trial {}", e.width(), e.trial_id),
            });
        }
        let sequence = Scaler::fit(train.iter().flat_map(|e| e.seq.chunks(width)), &methods)?;
        let environment = Scaler::fit(train.iter().map(|e| &e.env[..]), &[ScaleMethod::ZScore; N_ENV])?;
        Ok(Self { sequence, environment })
    }

    pub fn apply(&self, examples: &mut [Example<f64>]) {
        let w = self.sequence.width();
        for e in examples {
            for row in e.seq.chunks_mut(w) {
                self.sequence.transform(row);
            }
            self.environment.transform(&mut e.env);
        }
    }

    /// Names of the training-constant inputs.
    pub fn zero_variance(&self, layout: &SequenceLayout) -> Vec<String> {
        let names = layout.column_names();
        let mut out: Vec<String> = self
            .sequence
            .zero_variance_columns()
            .into_iter()
            .map(|i| names[i].clone())
            .collect();
        let env = ["lux", "temperature", "brightness"];
        out.extend(self.environment.zero_variance_columns().into_iter().map(|i| env[i].to_string()));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rows(v: &[&[f64]]) -> Vec<Vec<f64>> {
        v.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn z_score_example() {
        // mean 2, population sd 1
        let data = rows(&[&[1.0], &[3.0]]);
        let s = Scaler::fit(data.iter().map(|r| &r[..]), &[ScaleMethod::ZScore]).unwrap();
        let mut v = [3.0];
        s.transform(&mut v);
        assert_eq!(v[0], 1.0);
    }

    #[test]
    fn min_max_is_not_clamped() {
        let data = rows(&[&[0.0], &[10.0], &[4.0]]);
        let s = Scaler::fit(data.iter().map(|r| &r[..]), &[ScaleMethod::MinMax]).unwrap();
        let mut v = [5.0];
        s.transform(&mut v);
        assert_eq!(v[0], 0.5);
        let mut v = [12.0];
        s.transform(&mut v);
        assert!((v[0] - 1.2).abs() < 1e-15);
    }

    #[test]
    fn constant_column_reported_and_zeroed() {
        let data = rows(&[&[4.0, 1.0], &[4.0, 2.0]]);
        let s = Scaler::fit(data.iter().map(|r| &r[..]), &[ScaleMethod::ZScore, ScaleMethod::ZScore]).unwrap();
        assert_eq!(s.zero_variance_columns(), vec![0]);
        let mut v = [9.0, 1.5];
        s.transform(&mut v);
        assert_eq!(v, [0.0, 0.0]);
    }

    #[test]
    fn feature_methods_cover_skewed_columns() {
        let m = feature_table_methods();
        assert_eq!(m.len(), FEATURE_COLUMNS.len());
        for (c, m) in FEATURE_COLUMNS.iter().zip(&m) {
            if c.starts_with("sacc_amp") || c.starts_with("sacc_dur") {
                assert_eq!(*m, ScaleMethod::MinMax, "{c}");
            }
        }
        assert_eq!(m[FEATURE_COLUMNS.iter().position(|c| *c == "neuroticism").unwrap()], ScaleMethod::Identity);
        assert_eq!(m[FEATURE_COLUMNS.iter().position(|c| *c == "pupil_var").unwrap()], ScaleMethod::ZScore);
        let layout = SequenceLayout::default();
        assert_eq!(sequence_methods(&layout).len(), layout.width());
    }

    proptest! {
        #[test]
        fn fit_ignores_row_order(mut data in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3), 2..40)) {
            let methods = [ScaleMethod::ZScore, ScaleMethod::MinMax, ScaleMethod::Identity];
            let a = Scaler::fit(data.iter().map(|r| &r[..]), &methods).unwrap();
            data.reverse();
            let b = Scaler::fit(data.iter().map(|r| &r[..]), &methods).unwrap();
            for (x, y) in a.columns.iter().zip(&b.columns) {
                prop_assert!((x.offset - y.offset).abs() <= 1e-9 * (1.0 + x.offset.abs()));
                prop_assert!((x.scale - y.scale).abs() <= 1e-9 * (1.0 + x.scale.abs()));
            }
        }
    }
}
