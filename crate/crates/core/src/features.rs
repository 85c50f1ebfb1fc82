//! Per-trial static feature vectors and fixed-length temporal sequences.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventTimeline;
use crate::io::{Emotion, Environment, ParticipantProfile};
use crate::roi::RegionLabel;
use crate::scalar::{mean, median, population_variance, Scalar};

/// Default number of resampled time steps per trial.
pub const N_STEPS: usize = 15;

/// Three-way rating bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelClass {
    Low,
    Medium,
    High,
}

impl LabelClass {
    pub const ALL: [LabelClass; 3] = [LabelClass::Low, LabelClass::Medium, LabelClass::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Rating at the centre of the bin.
    pub fn representative(self) -> u8 {
        match self {
            LabelClass::Low => 2,
            LabelClass::Medium => 5,
            LabelClass::High => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelClass::Low => "low",
            LabelClass::Medium => "medium",
            LabelClass::High => "high",
        }
    }
}

impl fmt::Display for LabelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// 1-3 low, 4-6 medium, 7-9 high.
pub fn bin_label(rating: i64) -> Result<LabelClass> {
    match rating {
        1..=3 => Ok(LabelClass::Low),
        4..=6 => Ok(LabelClass::Medium),
        7..=9 => Ok(LabelClass::High),
        _ => Err(Error::OutOfRangeRating(rating)),
    }
}

/// Raw Big Five score (0..=50) to [0, 1].
pub fn scale_personality<T: Scalar>(raw: T) -> Result<T> {
    if raw >= T::zero() && raw <= T::lit(50.0) {
        Ok(raw / T::lit(50.0))
    } else {
        Err(Error::OutOfRangeTrait(raw.to_f64_lossy()))
    }
}

/// One-hot in canonical order anger, disgust, fear, happy, neutral, sad.
pub fn one_hot_stimulus<T: Scalar>(emotion: Emotion) -> [T; 6] {
    let mut v = [T::zero(); 6];
    v[emotion.index()] = T::one();
    v
}

pub fn one_hot_stimulus_name<T: Scalar>(name: &str) -> Result<[T; 6]> {
    Ok(one_hot_stimulus(Emotion::from_str(name)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary<T = f64> {
    pub mean: T,
    pub median: T,
    pub variance: T,
}

impl<T: Scalar> Summary<T> {
    fn of(xs: &[T]) -> Self {
        Self {
            mean: mean(xs),
            median: median(xs),
            variance: population_variance(xs),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PupilStats<T = f64> {
    pub mean: T,
    pub min: T,
    pub max: T,
    pub variance: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SaccadeStats<T = f64> {
    pub mean_amplitude: T,
    pub mean_duration: T,
    pub max_peak_velocity: T,
    pub mean_acceleration: T,
}

/// Missing-data markers; the corresponding fields hold zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureFlags {
    pub no_fixations: bool,
    pub no_saccades: bool,
    pub no_pupil: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFeatures<T = f64> {
    pub fixation_duration: Summary<T>,
    pub fixation_dispersion: Summary<T>,
    pub pupil: PupilStats<T>,
    pub saccade: SaccadeStats<T>,
    /// Eyes, eyebrows, nose, mouth, outside.
    pub region_proportions: [T; 5],
    /// Lux, degrees Celsius, stimulus brightness.
    pub env: [T; 3],
    pub big5_scaled: [T; 5],
    pub stimulus_onehot: [T; 6],
    pub flags: FeatureFlags,
}

/// Numeric feature columns, in serialization order.
pub const FEATURE_COLUMNS: [&str; 33] = [
    "fix_dur_mean",
    "fix_dur_median",
    "fix_dur_var",
    "fix_disp_mean",
    "fix_disp_median",
    "fix_disp_var",
    "pupil_mean",
    "pupil_min",
    "pupil_max",
    "pupil_var",
    "sacc_amp_mean",
    "sacc_dur_mean",
    "sacc_peak_vel_max",
    "sacc_accel_mean",
    "prop_eyes",
    "prop_eyebrows",
    "prop_nose",
    "prop_mouth",
    "prop_outside",
    "env_lux",
    "env_temp",
    "env_brightness",
    "openness",
    "conscientiousness",
    "extraversion",
    "agreeableness",
    "neuroticism",
    "stim_anger",
    "stim_disgust",
    "stim_fear",
    "stim_happy",
    "stim_neutral",
    "stim_sad",
];

pub const FLAG_COLUMNS: [&str; 3] = ["no_fixations", "no_saccades", "no_pupil"];

impl<T: Scalar> TrialFeatures<T> {
    pub fn to_vec(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(FEATURE_COLUMNS.len());
        let d = &self.fixation_duration;
        let s = &self.fixation_dispersion;
        v.extend([d.mean, d.median, d.variance, s.mean, s.median, s.variance]);
        let p = &self.pupil;
        v.extend([p.mean, p.min, p.max, p.variance]);
        let c = &self.saccade;
        v.extend([
            c.mean_amplitude,
            c.mean_duration,
            c.max_peak_velocity,
            c.mean_acceleration,
        ]);
        v.extend(self.region_proportions);
        v.extend(self.env);
        v.extend(self.big5_scaled);
        v.extend(self.stimulus_onehot);
        v
    }

    pub fn from_slice(v: &[T], flags: FeatureFlags) -> Result<Self> {
        if v.len() != FEATURE_COLUMNS.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} feature values", FEATURE_COLUMNS.len()),
                found: v.len().to_string(),
            });
        }
        let arr = |start: usize| -> [T; 5] { [v[start], v[start + 1], v[start + 2], v[start + 3], v[start + 4]] };
        Ok(Self {
            fixation_duration: Summary {
                mean: v[0],
                median: v[1],
                variance: v[2],
            },
            fixation_dispersion: Summary {
                mean: v[3],
                median: v[4],
                variance: v[5],
            },
            pupil: PupilStats {
                mean: v[6],
                min: v[7],
                max: v[8],
                variance: v[9],
            },
            saccade: SaccadeStats {
                mean_amplitude: v[10],
                mean_duration: v[11],
                max_peak_velocity: v[12],
                mean_acceleration: v[13],
            },
            region_proportions: arr(14),
            env: [v[19], v[20], v[21]],
            big5_scaled: arr(22),
            stimulus_onehot: [v[27], v[28], v[29], v[30], v[31], v[32]],
            flags,
        })
    }

    /// Value of a named column.
    pub fn column(&self, name: &str) -> Option<T> {
        let i = FEATURE_COLUMNS.iter().position(|c| *c == name)?;
        Some(self.to_vec()[i])
    }

    pub fn stimulus(&self) -> Option<Emotion> {
        self.stimulus_onehot
            .iter()
            .position(|&v| v == T::one())
            .map(|i| Emotion::ALL[i])
    }
}

/// Statistics over one trial's events and baseline-corrected valid pupil
/// samples. Population variance throughout; empty event sets yield zeros and
/// a flag.
pub fn build_trial_features<T: Scalar>(
    events: &EventTimeline<T>,
    corrected_pupil: &[T],
    region_proportions: [T; 5],
    env: &Environment,
    profile: &ParticipantProfile,
    stimulus: Emotion,
) -> Result<TrialFeatures<T>> {
    let durations: Vec<T> = events.fixations.iter().map(|f| f.duration).collect();
    let dispersions: Vec<T> = events.fixations.iter().map(|f| f.dispersion).collect();
    let pupil = if corrected_pupil.is_empty() {
        PupilStats::default()
    } else {
        PupilStats {
            mean: mean(corrected_pupil),
            min: corrected_pupil.iter().copied().fold(T::infinity(), T::min),
            max: corrected_pupil.iter().copied().fold(T::neg_infinity(), T::max),
            variance: population_variance(corrected_pupil),
        }
    };
    let sac = &events.saccades;
    let saccade = if sac.is_empty() {
        SaccadeStats::default()
    } else {
        let amp: Vec<T> = sac.iter().map(|s| s.amplitude).collect();
        let dur: Vec<T> = sac.iter().map(|s| s.duration).collect();
        let acc: Vec<T> = sac.iter().map(|s| s.mean_acceleration).collect();
        SaccadeStats {
            mean_amplitude: mean(&amp),
            mean_duration: mean(&dur),
            max_peak_velocity: sac.iter().map(|s| s.peak_velocity).fold(T::zero(), T::max),
            mean_acceleration: mean(&acc),
        }
    };
    let mut big5_scaled = [T::zero(); 5];
    for (slot, &raw) in big5_scaled.iter_mut().zip(&profile.big5_raw) {
        *slot = scale_personality(T::lit(raw))?;
    }
    Ok(TrialFeatures {
        fixation_duration: Summary::of(&durations),
        fixation_dispersion: Summary::of(&dispersions),
        pupil,
        saccade,
        region_proportions,
        env: env.to_array().map(T::lit),
        big5_scaled,
        stimulus_onehot: one_hot_stimulus(stimulus),
        flags: FeatureFlags {
            no_fixations: durations.is_empty(),
            no_saccades: sac.is_empty(),
            no_pupil: corrected_pupil.is_empty(),
        },
    })
}

/// Channel groups of the step sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceChannel {
    /// Baseline-corrected pupil.
    Pupil,
    GazeX,
    GazeY,
    /// Five-way one-hot of the region under gaze.
    Region,
    /// Instantaneous gaze speed.
    Speed,
    /// Saccades started so far over saccades in the trial.
    SaccadeProgress,
}

impl SequenceChannel {
    pub fn width(self) -> usize {
        match self {
            SequenceChannel::Region => 5,
            _ => 1,
        }
    }

    pub fn column_names(self) -> Vec<String> {
        match self {
            SequenceChannel::Pupil => vec!["pupil".into()],
            SequenceChannel::GazeX => vec!["gaze_x".into()],
            SequenceChannel::GazeY => vec!["gaze_y".into()],
            SequenceChannel::Region => RegionLabel::ALL
                .iter()
                .map(|r| format!("region_{}", r.name()))
                .collect(),
            SequenceChannel::Speed => vec!["speed".into()],
            SequenceChannel::SaccadeProgress => vec!["saccade_progress".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceLayout {
    pub channels: Vec<SequenceChannel>,
    pub steps: usize,
}

impl Default for SequenceLayout {
    fn default() -> Self {
        Self {
            channels: vec![
                SequenceChannel::Pupil,
                SequenceChannel::GazeX,
                SequenceChannel::GazeY,
                SequenceChannel::Region,
                SequenceChannel::Speed,
                SequenceChannel::SaccadeProgress,
            ],
            steps: N_STEPS,
        }
    }
}

impl SequenceLayout {
    pub fn width(&self) -> usize {
        self.channels.iter().map(|c| c.width()).sum()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.channels.iter().flat_map(|c| c.column_names()).collect()
    }
}

/// Per-sample signals of one trial (valid samples only, time-ordered).
#[derive(Debug, Clone, Default)]
pub struct TrialSignals<T = f64> {
    pub times: Vec<T>,
    pub pupil: Vec<T>,
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub region: Vec<RegionLabel>,
    pub saccade_onsets: Vec<T>,
}

/// `steps × width` row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSequence<T = f64> {
    pub steps: usize,
    pub width: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> StepSequence<T> {
    pub fn step(&self, k: usize) -> &[T] {
        &self.values[k * self.width..(k + 1) * self.width]
    }

    pub fn channel(&self, c: usize) -> Vec<T> {
        (0..self.steps).map(|k| self.values[k * self.width + c]).collect()
    }
}

/// Piecewise-linear interpolation, held constant beyond the end samples.
pub fn interpolate<T: Scalar>(times: &[T], values: &[T], at: T) -> T {
    let n = times.len();
    if at <= times[0] {
        return values[0];
    }
    if at >= times[n - 1] {
        return values[n - 1];
    }
    let i = times.partition_point(|&t| t <= at);
    let (t0, t1) = (times[i - 1], times[i]);
    let (v0, v1) = (values[i - 1], values[i]);
    if t1 == t0 {
        return v1;
    }
    let w = (at - t0) / (t1 - t0);
    v0 + (v1 - v0) * w
}

fn nearest_index<T: Scalar>(times: &[T], at: T) -> usize {
    let i = times.partition_point(|&t| t < at);
    if i == 0 {
        return 0;
    }
    if i == times.len() {
        return times.len() - 1;
    }
    if at - times[i - 1] <= times[i] - at {
        i - 1
    } else {
        i
    }
}

/// Grid times `k * duration / (steps - 1)`.
pub fn step_times<T: Scalar>(duration: T, steps: usize) -> Vec<T> {
    if steps == 1 {
        return vec![T::zero()];
    }
    let denom = T::from_usize_lossy(steps - 1);
    (0..steps)
        .map(|k| T::from_usize_lossy(k) * duration / denom)
        .collect()
}

/// Resamples a trial onto `layout.steps` equally spaced times spanning
/// `[0, duration]`. Continuous channels are linearly interpolated, the
/// region channel takes the label of the nearest sample.
pub fn resample_sequence<T: Scalar>(
    signals: &TrialSignals<T>,
    duration: T,
    layout: &SequenceLayout,
) -> Result<StepSequence<T>> {
    let n = signals.times.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, found: n });
    }
    for (name, len) in [
        ("pupil", signals.pupil.len()),
        ("x", signals.x.len()),
        ("y", signals.y.len()),
        ("region", signals.region.len()),
    ] {
        if len != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} {name} values"),
                found: len.to_string(),
            });
        }
    }
    let speed = sample_speed(signals);
    let grid = step_times(duration, layout.steps);
    let width = layout.width();
    let total_saccades = signals.saccade_onsets.len();
    let mut values = Vec::with_capacity(layout.steps * width);
    for &tau in &grid {
        for ch in &layout.channels {
            match ch {
                SequenceChannel::Pupil => values.push(interpolate(&signals.times, &signals.pupil, tau)),
                SequenceChannel::GazeX => values.push(interpolate(&signals.times, &signals.x, tau)),
                SequenceChannel::GazeY => values.push(interpolate(&signals.times, &signals.y, tau)),
                SequenceChannel::Region => {
                    let label = signals.region[nearest_index(&signals.times, tau)];
                    let mut hot = [T::zero(); 5];
                    hot[label.index()] = T::one();
                    values.extend(hot);
                }
                SequenceChannel::Speed => values.push(interpolate(&signals.times, &speed, tau)),
                SequenceChannel::SaccadeProgress => {
                    let v = if total_saccades == 0 {
                        T::zero()
                    } else {
                        let started = signals.saccade_onsets.iter().filter(|&&s| s <= tau).count();
                        T::from_usize_lossy(started) / T::from_usize_lossy(total_saccades)
                    };
                    values.push(v);
                }
            }
        }
    }
    Ok(StepSequence {
        steps: layout.steps,
        width,
        values,
    })
}

/// Speed at each sample from the step arriving at it (the first sample
/// takes the speed of the first step).
fn sample_speed<T: Scalar>(s: &TrialSignals<T>) -> Vec<T> {
    let n = s.times.len();
    let mut out = vec![T::zero(); n];
    for k in 1..n {
        let dt = s.times[k] - s.times[k - 1];
        out[k] = if dt > T::zero() {
            (s.x[k] - s.x[k - 1]).hypot(s.y[k] - s.y[k - 1]) / dt
        } else {
            out[k - 1]
        };
    }
    out[0] = out[1];
    out
}
