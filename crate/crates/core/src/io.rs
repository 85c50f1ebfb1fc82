//! Canonical in-memory dataset and the line-oriented file formats it is
//! persisted in.
//!
//! | file               | columns                                                                  |
//! |--------------------|--------------------------------------------------------------------------|
//! | `gaze.csv`         | trial_id, participant_id, t, x, y, pupil, valid                           |
//! | `labels.csv`       | trial_id, participant_id, clip_id, stimulus_emotion, duration, 4 ratings  |
//! | `participants.csv` | participant_id, five raw Big Five scores (0..=50)                         |
//! | `env.csv`          | trial_id, ambient_lux, temperature_celsius, stimulus_brightness           |
//! | `landmarks.jsonl`  | one `{"trial_id", "frame_time", "points": [[x, y]; 68]}` object per line   |
//!
//! Gaze timestamps are seconds relative to stimulus onset. Floats are written
//! in their shortest round-trip form so a parse of a written file reproduces
//! every value bit for bit.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GAZE_FILE: &str = "gaze.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const PARTICIPANTS_FILE: &str = "participants.csv";
pub const ENV_FILE: &str = "env.csv";
pub const LANDMARKS_FILE: &str = "landmarks.jsonl";

/// Number of points in a facial landmark frame.
pub const LANDMARK_POINTS: usize = 68;

/// One eye-tracker reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample<T = f64> {
    /// Seconds from trial onset.
    pub t: T,
    pub x: T,
    pub y: T,
    /// Raw pupil diameter in millimetres.
    pub pupil: T,
    pub valid: bool,
}

/// The six stimulus emotions, in canonical one-hot order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Anger,
    Disgust,
    Fear,
    Happy,
    Neutral,
    Sad,
}

impl Emotion {
    pub const ALL: [Emotion; 6] = [
        Emotion::Anger,
        Emotion::Disgust,
        Emotion::Fear,
        Emotion::Happy,
        Emotion::Neutral,
        Emotion::Sad,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Disgust => "disgust",
            Emotion::Fear => "fear",
            Emotion::Happy => "happy",
            Emotion::Neutral => "neutral",
            Emotion::Sad => "sad",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "anger" | "angry" => Ok(Emotion::Anger),
            "disgust" => Ok(Emotion::Disgust),
            "fear" => Ok(Emotion::Fear),
            "happy" => Ok(Emotion::Happy),
            "neutral" => Ok(Emotion::Neutral),
            "sad" => Ok(Emotion::Sad),
            _ => Err(Error::UnknownEmotion(s.to_string())),
        }
    }
}

/// Big Five trait order used in files and feature vectors.
pub const TRAIT_NAMES: [&str; 5] = [
    "openness",
    "conscientiousness",
    "extraversion",
    "agreeableness",
    "neuroticism",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trait {
    Openness,
    Conscientiousness,
    Extraversion,
    Agreeableness,
    Neuroticism,
}

impl Trait {
    pub const ALL: [Trait; 5] = [
        Trait::Openness,
        Trait::Conscientiousness,
        Trait::Extraversion,
        Trait::Agreeableness,
        Trait::Neuroticism,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        TRAIT_NAMES[self.index()]
    }
}

impl FromStr for Trait {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Trait::ALL
            .into_iter()
            .find(|t| t.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidValue(format!("unknown trait {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantProfile {
    pub participant_id: String,
    /// Raw scores in [0, 50], ordered as [`TRAIT_NAMES`].
    pub big5_raw: [f64; 5],
}

/// The four self-reported ratings, each an integer in 1..=9.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub perceived_valence: u8,
    pub perceived_arousal: u8,
    pub felt_valence: u8,
    pub felt_arousal: u8,
}

/// Selects one of the four rating channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelDim {
    PerceivedValence,
    PerceivedArousal,
    FeltValence,
    FeltArousal,
}

impl LabelDim {
    pub const ALL: [LabelDim; 4] = [
        LabelDim::PerceivedValence,
        LabelDim::PerceivedArousal,
        LabelDim::FeltValence,
        LabelDim::FeltArousal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LabelDim::PerceivedValence => "perceived_valence",
            LabelDim::PerceivedArousal => "perceived_arousal",
            LabelDim::FeltValence => "felt_valence",
            LabelDim::FeltArousal => "felt_arousal",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            LabelDim::PerceivedValence => "Perceived Valence",
            LabelDim::PerceivedArousal => "Perceived Arousal",
            LabelDim::FeltValence => "Felt Valence",
            LabelDim::FeltArousal => "Felt Arousal",
        }
    }
}

impl fmt::Display for LabelDim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LabelDim {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        LabelDim::ALL
            .into_iter()
            .find(|d| d.name() == key)
            .ok_or_else(|| Error::InvalidValue(format!("unknown label dimension {s:?}")))
    }
}

impl LabelRecord {
    pub fn get(&self, dim: LabelDim) -> u8 {
        match dim {
            LabelDim::PerceivedValence => self.perceived_valence,
            LabelDim::PerceivedArousal => self.perceived_arousal,
            LabelDim::FeltValence => self.felt_valence,
            LabelDim::FeltArousal => self.felt_arousal,
        }
    }
}

/// Environmental covariates recorded per trial.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Environment {
    pub ambient_lux: f64,
    pub temperature_celsius: f64,
    pub stimulus_brightness: f64,
}

impl Environment {
    pub fn to_array(&self) -> [f64; 3] {
        [
            self.ambient_lux,
            self.temperature_celsius,
            self.stimulus_brightness,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: String,
    /// Grouping index for the random intercept.
    pub participant_id: String,
    /// Identifies the stimulus clip so ratings can be compared across raters.
    pub clip_id: String,
    pub stimulus: Emotion,
    /// Seconds, within [2, 4] unless loading with `allow_any_duration`.
    pub duration: f64,
    pub env: Environment,
    pub samples: Vec<GazeSample>,
    pub labels: LabelRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkFrame {
    pub trial_id: String,
    pub frame_time: f64,
    pub points: Vec<[f64; 2]>,
}

/// Samples of a single trial as read from `gaze.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct GazeTrial {
    pub trial_id: String,
    pub participant_id: String,
    pub samples: Vec<GazeSample>,
}

/// A fully assembled cohort. Immutable once loaded.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub participants: Vec<ParticipantProfile>,
    pub trials: Vec<TrialRecord>,
    /// Frames per trial, each list sorted by `frame_time`.
    pub landmarks: BTreeMap<String, Vec<LandmarkFrame>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Accept trial durations outside [2, 4] s.
    pub allow_any_duration: bool,
}

/// Shortest representation that parses back to the identical `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Scientific notation with 17 significant digits.
pub fn fmt_f64_sig17(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) struct CsvTable {
    path: PathBuf,
    columns: HashMap<String, usize>,
    pub(crate) rows: Vec<(usize, Vec<String>)>,
}

impl CsvTable {
    pub(crate) fn read(path: &Path, required: &[&str]) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = match lines.next() {
            Some(line) => line.map_err(|e| Error::io(path, e))?,
            None => {
                return Err(Error::MalformedRow {
                    path: path.to_path_buf(),
                    line: 1,
                    reason: "missing header".into(),
                })
            }
        };
        let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let columns: HashMap<String, usize> =
            names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        for req in required {
            if !columns.contains_key(*req) {
                return Err(Error::MalformedRow {
                    path: path.to_path_buf(),
                    line: 1,
                    reason: format!("header lacks column {req:?}"),
                });
            }
        }
        for name in &names {
            if !required.contains(&name.as_str()) {
                log::warn!("{}: ignoring unknown column {name:?}", path.display());
            }
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
            if fields.len() != names.len() {
                return Err(Error::MalformedRow {
                    path: path.to_path_buf(),
                    line: i + 2,
                    reason: format!("expected {} fields, found {}", names.len(), fields.len()),
                });
            }
            rows.push((i + 2, fields));
        }
        Ok(Self {
            path: path.to_path_buf(),
            columns,
            rows,
        })
    }

    pub(crate) fn malformed(&self, line: usize, reason: String) -> Error {
        Error::MalformedRow {
            path: self.path.clone(),
            line,
            reason,
        }
    }

    pub(crate) fn str<'a>(&self, row: &'a [String], col: &str) -> &'a str {
        &row[self.columns[col]]
    }

    pub(crate) fn parse<V: FromStr>(&self, line: usize, row: &[String], col: &str) -> Result<V> {
        let raw = self.str(row, col);
        raw.parse::<V>()
            .map_err(|_| self.malformed(line, format!("column {col}: cannot parse {raw:?}")))
    }

    pub(crate) fn finite(&self, line: usize, row: &[String], col: &str) -> Result<f64> {
        let v: f64 = self.parse(line, row, col)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.malformed(line, format!("column {col}: non-finite value")))
        }
    }
}

fn parse_bool(raw: &str) -> Option<bool> {
    match raw {
        "1" | "true" | "TRUE" | "True" => Some(true),
        "0" | "false" | "FALSE" | "False" => Some(false),
        _ => None,
    }
}

/// Reads `gaze.csv`, grouping rows by trial in order of first appearance.
pub fn parse_gaze_log(path: &Path) -> Result<Vec<GazeTrial>> {
    let table = CsvTable::read(
        path,
        &["trial_id", "participant_id", "t", "x", "y", "pupil", "valid"],
    )?;
    let mut order: Vec<GazeTrial> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (line, row) in &table.rows {
        let line = *line;
        let trial_id = table.str(row, "trial_id").to_string();
        let participant_id = table.str(row, "participant_id").to_string();
        let t = table.finite(line, row, "t")?;
        let x = table.finite(line, row, "x")?;
        let y = table.finite(line, row, "y")?;
        let pupil = table.parse::<f64>(line, row, "pupil")?;
        let valid_raw = table.str(row, "valid");
        let valid = parse_bool(valid_raw)
            .ok_or_else(|| table.malformed(line, format!("column valid: {valid_raw:?}")))?;
        if valid && !(pupil.is_finite() && pupil > 0.0) {
            return Err(table.malformed(line, "valid sample needs a positive pupil".into()));
        }
        let slot = *index.entry(trial_id.clone()).or_insert_with(|| {
            order.push(GazeTrial {
                trial_id: trial_id.clone(),
                participant_id: participant_id.clone(),
                samples: Vec::new(),
            });
            order.len() - 1
        });
        let trial = &mut order[slot];
        if trial.participant_id != participant_id {
            return Err(table.malformed(
                line,
                format!("trial {trial_id} switches participant to {participant_id}"),
            ));
        }
        if let Some(prev) = trial.samples.last() {
            if t < prev.t {
                return Err(Error::NonMonotonicTime {
                    path: table.path.clone(),
                    line,
                    trial_id,
                });
            }
        }
        trial.samples.push(GazeSample {
            t,
            x,
            y,
            pupil,
            valid,
        });
    }
    Ok(order)
}

pub fn write_gaze_log(trials: &[TrialRecord], path: &Path) -> Result<()> {
    write_lines(path, |w| {
        writeln!(w, "trial_id,participant_id,t,x,y,pupil,valid")?;
        for trial in trials {
            for s in &trial.samples {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    trial.trial_id,
                    trial.participant_id,
                    fmt_f64(s.t),
                    fmt_f64(s.x),
                    fmt_f64(s.y),
                    fmt_f64(s.pupil),
                    u8::from(s.valid)
                )?;
            }
        }
        Ok(())
    })
}

/// Reads `landmarks.jsonl`. Frames are returned grouped per trial and
/// sorted by time; out-of-order input is reordered with a warning.
pub fn parse_landmarks(path: &Path) -> Result<BTreeMap<String, Vec<LandmarkFrame>>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out: BTreeMap<String, Vec<LandmarkFrame>> = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let frame: LandmarkFrame =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRow {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })?;
        if frame.points.len() != LANDMARK_POINTS {
            return Err(Error::WrongPointCount {
                path: path.to_path_buf(),
                line: i + 1,
                found: frame.points.len(),
            });
        }
        if !frame.frame_time.is_finite()
            || frame.points.iter().flatten().any(|v| !v.is_finite())
        {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                line: i + 1,
                reason: "non-finite coordinate".into(),
            });
        }
        out.entry(frame.trial_id.clone()).or_default().push(frame);
    }
    for (trial_id, frames) in out.iter_mut() {
        if frames.windows(2).any(|w| w[1].frame_time < w[0].frame_time) {
            log::warn!("landmark frames for trial {trial_id} out of order; sorting by frame_time");
            frames.sort_by(|a, b| a.frame_time.total_cmp(&b.frame_time));
        }
    }
    Ok(out)
}

pub fn write_landmarks(landmarks: &BTreeMap<String, Vec<LandmarkFrame>>, path: &Path) -> Result<()> {
    write_lines(path, |w| {
        for frame in landmarks.values().flatten() {
            // serde_json prints f64 in shortest round-trip form
            let line = serde_json::to_string(frame).map_err(std::io::Error::other)?;
            writeln!(w, "{line}")?;
        }
        Ok(())
    })
}

pub fn parse_participants(path: &Path) -> Result<Vec<ParticipantProfile>> {
    let mut required = vec!["participant_id"];
    required.extend(TRAIT_NAMES);
    let table = CsvTable::read(path, &required)?;
    let mut out = Vec::with_capacity(table.rows.len());
    let mut seen = HashSet::new();
    for (line, row) in &table.rows {
        let participant_id = table.str(row, "participant_id").to_string();
        if !seen.insert(participant_id.clone()) {
            return Err(table.malformed(*line, format!("duplicate participant {participant_id}")));
        }
        let mut big5_raw = [0.0; 5];
        for (slot, name) in big5_raw.iter_mut().zip(TRAIT_NAMES) {
            let v = table.finite(*line, row, name)?;
            if !(0.0..=50.0).contains(&v) {
                return Err(table.malformed(*line, format!("{name} = {v} outside [0, 50]")));
            }
            *slot = v;
        }
        out.push(ParticipantProfile {
            participant_id,
            big5_raw,
        });
    }
    Ok(out)
}

pub fn write_participants(participants: &[ParticipantProfile], path: &Path) -> Result<()> {
    write_lines(path, |w| {
        writeln!(w, "participant_id,{}", TRAIT_NAMES.join(","))?;
        for p in participants {
            let scores: Vec<String> = p.big5_raw.iter().map(|&v| fmt_f64(v)).collect();
            writeln!(w, "{},{}", p.participant_id, scores.join(","))?;
        }
        Ok(())
    })
}

/// Row of `labels.csv`: trial metadata plus the four ratings.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRow {
    pub trial_id: String,
    pub participant_id: String,
    pub clip_id: String,
    pub stimulus: Emotion,
    pub duration: f64,
    pub labels: LabelRecord,
}

const LABEL_COLUMNS: [&str; 9] = [
    "trial_id",
    "participant_id",
    "clip_id",
    "stimulus_emotion",
    "duration",
    "perceived_valence",
    "perceived_arousal",
    "felt_valence",
    "felt_arousal",
];

pub fn parse_labels(path: &Path) -> Result<Vec<LabelRow>> {
    let table = CsvTable::read(path, &LABEL_COLUMNS)?;
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
        out.push(LabelRow {
            trial_id: table.str(row, "trial_id").to_string(),
            participant_id: table.str(row, "participant_id").to_string(),
            clip_id: table.str(row, "clip_id").to_string(),
            stimulus: table.str(row, "stimulus_emotion").parse()?,
            duration: table.finite(line, row, "duration")?,
            labels: LabelRecord {
                perceived_valence: rating("perceived_valence")?,
                perceived_arousal: rating("perceived_arousal")?,
                felt_valence: rating("felt_valence")?,
                felt_arousal: rating("felt_arousal")?,
            },
        });
    }
    Ok(out)
}

pub fn write_labels(trials: &[TrialRecord], path: &Path) -> Result<()> {
    write_lines(path, |w| {
        writeln!(w, "{}", LABEL_COLUMNS.join(","))?;
        for t in trials {
            let l = &t.labels;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                t.trial_id,
                t.participant_id,
                t.clip_id,
                t.stimulus,
                fmt_f64(t.duration),
                l.perceived_valence,
                l.perceived_arousal,
                l.felt_valence,
                l.felt_arousal
            )?;
        }
        Ok(())
    })
}

pub fn parse_env(path: &Path) -> Result<HashMap<String, Environment>> {
    let table = CsvTable::read(
        path,
        &[
            "trial_id",
            "ambient_lux",
            "temperature_celsius",
            "stimulus_brightness",
        ],
    )?;
    let mut out = HashMap::with_capacity(table.rows.len());
    for (line, row) in &table.rows {
        let env = Environment {
            ambient_lux: table.finite(*line, row, "ambient_lux")?,
            temperature_celsius: table.finite(*line, row, "temperature_celsius")?,
            stimulus_brightness: table.finite(*line, row, "stimulus_brightness")?,
        };
        out.insert(table.str(row, "trial_id").to_string(), env);
    }
    Ok(out)
}

pub fn write_env(trials: &[TrialRecord], path: &Path) -> Result<()> {
    write_lines(path, |w| {
        writeln!(
            w,
            "trial_id,ambient_lux,temperature_celsius,stimulus_brightness"
        )?;
        for t in trials {
            writeln!(
                w,
                "{},{},{},{}",
                t.trial_id,
                fmt_f64(t.env.ambient_lux),
                fmt_f64(t.env.temperature_celsius),
                fmt_f64(t.env.stimulus_brightness)
            )?;
        }
        Ok(())
    })
}

impl Dataset {
    /// Loads and cross-validates the five cohort files in `dir`.
    pub fn load(dir: &Path, options: LoadOptions) -> Result<Self> {
        let participants = parse_participants(&dir.join(PARTICIPANTS_FILE))?;
        let label_rows = parse_labels(&dir.join(LABELS_FILE))?;
        let env = parse_env(&dir.join(ENV_FILE))?;
        let gaze = parse_gaze_log(&dir.join(GAZE_FILE))?;
        let landmarks = parse_landmarks(&dir.join(LANDMARKS_FILE))?;
        Self::assemble(participants, label_rows, env, gaze, landmarks, options)
    }

    pub fn assemble(
        participants: Vec<ParticipantProfile>,
        label_rows: Vec<LabelRow>,
        env: HashMap<String, Environment>,
        gaze: Vec<GazeTrial>,
        landmarks: BTreeMap<String, Vec<LandmarkFrame>>,
        options: LoadOptions,
    ) -> Result<Self> {
        let known: HashSet<&str> = participants
            .iter()
            .map(|p| p.participant_id.as_str())
            .collect();
        let mut gaze_by_trial: HashMap<String, GazeTrial> =
            gaze.into_iter().map(|g| (g.trial_id.clone(), g)).collect();
        let mut trials = Vec::with_capacity(label_rows.len());
        for row in label_rows {
            if !known.contains(row.participant_id.as_str()) {
                return Err(Error::OrphanTrial {
                    trial_id: row.trial_id,
                    participant_id: row.participant_id,
                });
            }
            if !options.allow_any_duration && !(2.0..=4.0).contains(&row.duration) {
                return Err(Error::InvalidValue(format!(
                    "trial {} duration {} s outside [2, 4]",
                    row.trial_id, row.duration
                )));
            }
            let gaze = gaze_by_trial.remove(&row.trial_id).ok_or_else(|| {
                Error::InvalidValue(format!("trial {} has no gaze samples", row.trial_id))
            })?;
            if gaze.participant_id != row.participant_id {
                return Err(Error::InvalidValue(format!(
                    "trial {}: gaze log says participant {}, labels say {}",
                    row.trial_id, gaze.participant_id, row.participant_id
                )));
            }
            if !landmarks.contains_key(&row.trial_id) {
                return Err(Error::MissingTrial(row.trial_id));
            }
            let env = *env.get(&row.trial_id).ok_or_else(|| {
                Error::InvalidValue(format!("trial {} missing from env.csv", row.trial_id))
            })?;
            trials.push(TrialRecord {
                trial_id: row.trial_id,
                participant_id: row.participant_id,
                clip_id: row.clip_id,
                stimulus: row.stimulus,
                duration: row.duration,
                env,
                samples: gaze.samples,
                labels: row.labels,
            });
        }
        if let Some(extra) = gaze_by_trial.keys().next() {
            return Err(Error::OrphanTrial {
                trial_id: extra.clone(),
                participant_id: "<not in labels.csv>".into(),
            });
        }
        Ok(Self {
            participants,
            trials,
            landmarks,
        })
    }

    /// Writes the five cohort files into `dir` (created if needed).
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_participants(&self.participants, &dir.join(PARTICIPANTS_FILE))?;
        write_labels(&self.trials, &dir.join(LABELS_FILE))?;
        write_env(&self.trials, &dir.join(ENV_FILE))?;
        write_gaze_log(&self.trials, &dir.join(GAZE_FILE))?;
        write_landmarks(&self.landmarks, &dir.join(LANDMARKS_FILE))
    }

    pub fn profile(&self, participant_id: &str) -> Option<&ParticipantProfile> {
        self.participants
            .iter()
            .find(|p| p.participant_id == participant_id)
    }

    pub fn profile_index(&self) -> HashMap<&str, &ParticipantProfile> {
        self.participants
            .iter()
            .map(|p| (p.participant_id.as_str(), p))
            .collect()
    }
}

/// Buffered write that maps every failure onto the target path.
pub(crate) fn write_lines(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
