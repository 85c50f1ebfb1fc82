//! Per-trial feature and step-sequence tables.
//!
//! `features.csv` holds one row per trial: identifiers, stimulus, the four raw
//! ratings, the numeric feature columns and the missing-data flags.
//! `sequences.csv` holds `steps` rows per trial in long form. Floats carry 17
//! significant digits.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    FeatureFlags, SequenceLayout, StepSequence, TrialFeatures, FEATURE_COLUMNS, FLAG_COLUMNS,
};
use crate::io::{fmt_f64_sig17, write_lines, CsvTable, Emotion, LabelDim, LabelRecord};

pub const FEATURES_FILE: &str = "features.csv";
pub const SEQUENCES_FILE: &str = "sequences.csv";

const ID_COLUMNS: [&str; 8] = [
    "trial_id",
    "participant_id",
    "clip_id",
    "stimulus_emotion",
    "perceived_valence",
    "perceived_arousal",
    "felt_valence",
    "felt_arousal",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub trial_id: String,
    pub participant_id: String,
    pub clip_id: String,
    pub stimulus: Emotion,
    pub labels: LabelRecord,
    pub features: TrialFeatures<f64>,
}

impl FeatureRow {
    pub fn rating(&self, dim: LabelDim) -> u8 {
        self.labels.get(dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRow {
    pub trial_id: String,
    pub sequence: StepSequence<f64>,
}

fn header() -> Vec<&'static str> {
    ID_COLUMNS
        .iter()
        .chain(FEATURE_COLUMNS.iter())
        .chain(FLAG_COLUMNS.iter())
        .copied()
        .collect()
}

pub fn write_features(rows: &[FeatureRow], path: &Path) -> Result<()> {
    write_lines(path, |w| {
        writeln!(w, "{}", header().join(","))?;
        for r in rows {
            let l = &r.labels;
            write!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.trial_id,
                r.participant_id,
                r.clip_id,
                r.stimulus,
                l.perceived_valence,
                l.perceived_arousal,
                l.felt_valence,
                l.felt_arousal
            )?;
            for v in r.features.to_vec() {
                write!(w, ",{}", fmt_f64_sig17(v))?;
            }
            let f = r.features.flags;
            for flag in [f.no_fixations, f.no_saccades, f.no_pupil] {
                write!(w, ",{}", u8::from(flag))?;
            }
            writeln!(w)?;
        }
        Ok(())
    })
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureRow>> {
    let table = CsvTable::read(path, &header())?;
    let mut out = Vec::with_capacity(table.rows.len());
    for (line, row) in &table.rows {
        let line = *line;
        let rating = |col: &str| -> Result<u8> {
            let v: i64 = table.parse(line, row, col)?;
            if (1..=9).contains(&v) {
                Ok(v as u8)
            } else {
                Err(table.malformed(line, format!("{col} = {v} outside 1..=9")))
            }
        };
        let flag = |col: &str| -> Result<bool> {
            match table.str(row, col) {
                "1" => Ok(true),
                "0" => Ok(false),
                other => Err(table.malformed(line, format!("{col}: expected 0 or 1, found {other:?}"))),
            }
        };
        let values = FEATURE_COLUMNS
            .iter()
            .map(|c| table.finite(line, row, c))
            .collect::<Result<Vec<f64>>>()?;
        let flags = FeatureFlags {
            no_fixations: flag("no_fixations")?,
            no_saccades: flag("no_saccades")?,
            no_pupil: flag("no_pupil")?,
        };
        out.push(FeatureRow {
            trial_id: table.str(row, "trial_id").to_string(),
            participant_id: table.str(row, "participant_id").to_string(),
            clip_id: table.str(row, "clip_id").to_string(),
            stimulus: table.str(row, "stimulus_emotion").parse()?,
            labels: LabelRecord {
                perceived_valence: rating("perceived_valence")?,
                perceived_arousal: rating("perceived_arousal")?,
                felt_valence: rating("felt_valence")?,
                felt_arousal: rating("felt_arousal")?,
            },
            features: TrialFeatures::from_slice(&values, flags)?,
        });
    }
    Ok(out)
}

pub fn write_sequences(rows: &[SequenceRow], layout: &SequenceLayout, path: &Path) -> Result<()> {
    let names = layout.column_names();
    write_lines(path, |w| {
        writeln!(w, "trial_id,step,{}", names.join(","))?;
        for r in rows {
            for k in 0..r.sequence.steps {
                write!(w, "{},{}", r.trial_id, k)?;
                for &v in r.sequence.step(k) {
                    write!(w, ",{}", fmt_f64_sig17(v))?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    })
}

/// Reads `sequences.csv`; every trial must list steps `0..layout.steps` in
/// order.
pub fn read_sequences(path: &Path, layout: &SequenceLayout) -> Result<Vec<SequenceRow>> {
    let names = layout.column_names();
    let mut required: Vec<&str> = vec!["trial_id", "step"];
    required.extend(names.iter().map(String::as_str));
    let table = CsvTable::read(path, &required)?;
    let width = layout.width();
    let mut out: Vec<SequenceRow> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (line, row) in &table.rows {
        let line = *line;
        let id = table.str(row, "trial_id");
        let step: usize = table.parse(line, row, "step")?;
        let k = match index.get(id) {
            Some(&k) => k,
            None => {
                index.insert(id.to_string(), out.len());
                out.push(SequenceRow {
                    trial_id: id.to_string(),
                    sequence: StepSequence {
                        steps: 0,
                        width,
                        values: Vec::with_capacity(layout.steps * width),
                    },
                });
                out.len() - 1
            }
        };
        let seq = &mut out[k].sequence;
        if step != seq.steps {
            return Err(table.malformed(line, format!("trial {id}: expected step {}, found {step}", seq.steps)));
        }
        for name in &names {
            seq.values.push(table.finite(line, row, name)?);
        }
        seq.steps += 1;
    }
    for r in &out {
        if r.sequence.steps != layout.steps {
            return Err(Error::ShapeMismatch {
                expected: format!("{} steps for trial {}", layout.steps, r.trial_id),
                found: r.sequence.steps.to_string(),
            });
        }
    }
    Ok(out)
}
