//! Sample-level preprocessing and oculomotor event detection.
//!
//! Fixations are found with the dispersion-threshold (I-DT) scheme: a
//! window qualifies when `(max x - min x) + (max y - min y)` stays at or
//! under the threshold for at least the minimum duration, and is then
//! grown for as long as the bound holds. Gaps between consecutive valid
//! samples up to `max_gap` (blinks, brief tracking loss) are bridged;
//! longer gaps terminate the window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{Emotion, GazeSample};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Normalized screen units.
    pub dispersion_threshold: f64,
    /// Seconds.
    pub min_duration: f64,
    /// Longest bridged gap between valid samples, seconds.
    pub max_gap: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            dispersion_threshold: 0.03,
            min_duration: 0.100,
            max_gap: 0.075,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixationEvent<T = f64> {
    pub start: T,
    pub end: T,
    pub centroid: [T; 2],
    pub dispersion: T,
    pub duration: T,
    /// Mean pupil over the window relative to the participant baseline.
    pub mean_pupil_corrected: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaccadeEvent<T = f64> {
    pub start: T,
    pub end: T,
    pub from: [T; 2],
    pub to: [T; 2],
    /// Euclidean distance between first and last sample.
    pub amplitude: T,
    pub duration: T,
    pub peak_velocity: T,
    pub mean_acceleration: T,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventTimeline<T = f64> {
    pub fixations: Vec<FixationEvent<T>>,
    pub saccades: Vec<SaccadeEvent<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PupilBaseline<T = f64> {
    pub participant_id: String,
    pub baseline: T,
}

/// Keeps the samples the tracker marked valid, in order.
pub fn quality_filter<T: Scalar>(samples: &[GazeSample<T>]) -> Vec<GazeSample<T>> {
    samples.iter().filter(|s| s.valid).copied().collect()
}

/// Pixel coordinates to [0, 1]. Returns the converted samples and how many
/// of them fell off-screen and were clamped.
pub fn normalize_gaze<T: Scalar>(
    samples: &[GazeSample<T>],
    screen_width_px: T,
    screen_height_px: T,
) -> Result<(Vec<GazeSample<T>>, usize)> {
    if !(screen_width_px > T::zero() && screen_height_px > T::zero()) {
        return Err(Error::ZeroScreenDimension);
    }
    let mut off_screen = 0;
    let out = samples
        .iter()
        .map(|s| {
            let x = s.x / screen_width_px;
            let y = s.y / screen_height_px;
            let cx = x.max(T::zero()).min(T::one());
            let cy = y.max(T::zero()).min(T::one());
            if cx != x || cy != y {
                off_screen += 1;
            }
            GazeSample { x: cx, y: cy, ..*s }
        })
        .collect();
    Ok((out, off_screen))
}

/// Pooled mean of all valid pupil samples over the participant's neutral
/// trials.
pub fn compute_baseline<'a, T: Scalar>(
    participant_id: &str,
    trials: impl IntoIterator<Item = (Emotion, &'a [GazeSample<T>])>,
) -> Result<PupilBaseline<T>> {
    let mut sum = T::zero();
    let mut count = 0usize;
    for (emotion, samples) in trials {
        if emotion != Emotion::Neutral {
            continue;
        }
        for s in samples.iter().filter(|s| s.valid) {
            sum += s.pupil;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::NoNeutralTrials(participant_id.to_string()));
    }
    Ok(PupilBaseline {
        participant_id: participant_id.to_string(),
        baseline: sum / T::from_usize_lossy(count),
    })
}

/// Signed deviation from baseline (pupil minus baseline).
#[inline]
pub fn correct_pupil<T: Scalar>(pupil: T, baseline: &PupilBaseline<T>) -> T {
    pupil - baseline.baseline
}

#[derive(Clone, Copy)]
struct BBox<T> {
    min_x: T,
    max_x: T,
    min_y: T,
    max_y: T,
}

impl<T: Scalar> BBox<T> {
    fn of(s: &GazeSample<T>) -> Self {
        Self {
            min_x: s.x,
            max_x: s.x,
            min_y: s.y,
            max_y: s.y,
        }
    }

    fn with(mut self, s: &GazeSample<T>) -> Self {
        self.min_x = self.min_x.min(s.x);
        self.max_x = self.max_x.max(s.x);
        self.min_y = self.min_y.min(s.y);
        self.max_y = self.max_y.max(s.y);
        self
    }

    fn dispersion(&self) -> T {
        (self.max_x - self.min_x) + (self.max_y - self.min_y)
    }
}

/// I-DT dispersion of a window.
pub fn dispersion<T: Scalar>(samples: &[GazeSample<T>]) -> T {
    match samples.split_first() {
        None => T::zero(),
        Some((first, rest)) => rest
            .iter()
            .fold(BBox::of(first), |b, s| b.with(s))
            .dispersion(),
    }
}

/// Detects fixations and the saccades between them.
///
/// `samples` must already be quality-filtered and normalized. `baseline` is
/// subtracted from the window mean pupil of each fixation (pass zero for raw
/// values). Inter-fixation windows are reported as saccades when the gaze
/// moved more than the dispersion threshold between the two fixations.
pub fn detect_fixations<T: Scalar>(
    samples: &[GazeSample<T>],
    config: &DetectorConfig,
    baseline: T,
) -> Result<EventTimeline<T>> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            found: n,
        });
    }
    let threshold = T::lit(config.dispersion_threshold);
    let min_duration = T::lit(config.min_duration);
    let max_gap = T::lit(config.max_gap);
    // float grid timestamps (k / 150) land a hair short of round durations
    let slack = min_duration * T::lit(1e-9);

    let mut windows: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    'scan: while i < n {
        let mut j = i;
        while samples[j].t - samples[i].t + slack < min_duration {
            if j + 1 >= n {
                break 'scan;
            }
            if samples[j + 1].t - samples[j].t > max_gap {
                i = j + 1;
                continue 'scan;
            }
            j += 1;
        }
        let mut bbox = samples[i + 1..=j]
            .iter()
            .fold(BBox::of(&samples[i]), |b, s| b.with(s));
        if bbox.dispersion() > threshold {
            i += 1;
            continue;
        }
        while j + 1 < n && samples[j + 1].t - samples[j].t <= max_gap {
            let grown = bbox.with(&samples[j + 1]);
            if grown.dispersion() > threshold {
                break;
            }
            bbox = grown;
            j += 1;
        }
        windows.push((i, j));
        i = j + 1;
    }

    let fixations: Vec<FixationEvent<T>> = windows
        .iter()
        .map(|&(a, b)| {
            let w = &samples[a..=b];
            let k = T::from_usize_lossy(w.len());
            let cx = w.iter().map(|s| s.x).sum::<T>() / k;
            let cy = w.iter().map(|s| s.y).sum::<T>() / k;
            let pupil = w.iter().map(|s| s.pupil).sum::<T>() / k;
            FixationEvent {
                start: w[0].t,
                end: w[w.len() - 1].t,
                centroid: [cx, cy],
                dispersion: dispersion(w),
                duration: w[w.len() - 1].t - w[0].t,
                mean_pupil_corrected: pupil - baseline,
            }
        })
        .collect();

    let mut saccades = Vec::new();
    for pair in windows.windows(2) {
        let (a, b) = (pair[0].1, pair[1].0);
        let window = &samples[a..=b];
        if distance(&window[0], &window[window.len() - 1]) <= threshold {
            continue;
        }
        match saccade_metrics(window) {
            Ok(s) => saccades.push(s),
            Err(Error::DegenerateWindow) => continue,
            Err(e) => return Err(e),
        }
    }

    Ok(EventTimeline {
        fixations,
        saccades,
    })
}

fn distance<T: Scalar>(a: &GazeSample<T>, b: &GazeSample<T>) -> T {
    (b.x - a.x).hypot(b.y - a.y)
}

/// Kinematics of a saccade window.
///
/// Step velocity is displacement over elapsed time between consecutive
/// samples and is located at the step midpoint; acceleration is the change
/// of step velocity over the midpoint spacing. Zero-length steps are skipped.
pub fn saccade_metrics<T: Scalar>(samples: &[GazeSample<T>]) -> Result<SaccadeEvent<T>> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            found: samples.len(),
        });
    }
    let first = &samples[0];
    let last = &samples[samples.len() - 1];
    let duration = last.t - first.t;
    if !(duration > T::zero()) {
        return Err(Error::DegenerateWindow);
    }
    let mut steps: Vec<(T, T)> = Vec::with_capacity(samples.len() - 1);
    for w in samples.windows(2) {
        let dt = w[1].t - w[0].t;
        if dt > T::zero() {
            let mid = (w[0].t + w[1].t) / T::lit(2.0);
            steps.push((mid, distance(&w[0], &w[1]) / dt));
        }
    }
    let peak_velocity = steps.iter().map(|&(_, v)| v).fold(T::zero(), T::max);
    let accels: Vec<T> = steps
        .windows(2)
        .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
        .collect();
    let mean_acceleration = crate::scalar::mean(&accels);
    Ok(SaccadeEvent {
        start: first.t,
        end: last.t,
        from: [first.x, first.y],
        to: [last.x, last.y],
        amplitude: distance(first, last),
        duration,
        peak_velocity,
        mean_acceleration,
    })
}

/// Physical viewing setup used to express amplitudes in degrees of visual
/// angle. Not applied unless configured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewingGeometry {
    pub screen_width_cm: f64,
    pub screen_height_cm: f64,
    pub distance_cm: f64,
}

impl ViewingGeometry {
    /// Visual angle subtended by the segment between two normalized points.
    pub fn angle_deg<T: Scalar>(&self, from: [T; 2], to: [T; 2]) -> T {
        let dx = (to[0] - from[0]) * T::lit(self.screen_width_cm);
        let dy = (to[1] - from[1]) * T::lit(self.screen_height_cm);
        let half = dx.hypot(dy) / T::lit(2.0);
        (T::lit(2.0) * (half / T::lit(self.distance_cm)).atan()).to_degrees()
    }

    /// Rescales a saccade's kinematics from normalized units to degrees.
    pub fn saccade_in_degrees<T: Scalar>(&self, s: &SaccadeEvent<T>) -> SaccadeEvent<T> {
        let deg = self.angle_deg(s.from, s.to);
        let factor = if s.amplitude > T::zero() {
            deg / s.amplitude
        } else {
            T::zero()
        };
        SaccadeEvent {
            amplitude: deg,
            peak_velocity: s.peak_velocity * factor,
            mean_acceleration: s.mean_acceleration * factor,
            ..*s
        }
    }
}
