//! Seeded synthetic cohorts with planted effects.
//!
//! Each participant draws Big Five scores and random intercepts; each trial
//! draws latent valence and arousal around its stimulus' base rating:
//!
//! ```text
//! v_ij = base_v + sum_k b_k (trait_jk - 30) + b_pv d_ij + u_j + e_ij
//! a_ij = base_a + b_pa d_ij + w_j + f_ij
//! ```
//!
//! where `d_ij` is the trial's pupil drive (millimetres added to the pupil
//! trace). Felt ratings add channel noise to the latent values, perceived
//! ratings shrink them toward the stimulus base first. Ratings are rounded
//! and clipped to 1..=9.
//!
//! Trait effects are given as correlations with felt valence within a
//! stimulus and converted to slopes with `b = r * sd_outcome / sd_trait`.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::bin_label;
use crate::io::{
    Dataset, Emotion, Environment, GazeSample, LabelDim, LabelRecord, LandmarkFrame, ParticipantProfile,
    TrialRecord, Trait, LANDMARK_POINTS,
};
use crate::roi::{build_hulls, RegionHulls, RegionLabel, RegionMap};
use crate::stats::{participant_aggregate, pearson, CorrelationResult};

pub const EFFECTS_FILE: &str = "effects.toml";

/// Nominal trait distribution.
pub const TRAIT_MEAN: f64 = 30.0;
pub const TRAIT_SD: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseRating {
    pub valence: f64,
    pub arousal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StimulusBase {
    pub anger: BaseRating,
    pub disgust: BaseRating,
    pub fear: BaseRating,
    pub happy: BaseRating,
    pub neutral: BaseRating,
    pub sad: BaseRating,
}

impl Default for StimulusBase {
    fn default() -> Self {
        let b = |valence, arousal| BaseRating { valence, arousal };
        Self {
            anger: b(2.5, 7.0),
            disgust: b(3.0, 5.5),
            fear: b(3.0, 7.0),
            happy: b(7.5, 6.5),
            neutral: b(5.0, 3.5),
            sad: b(2.5, 3.0),
        }
    }
}

impl StimulusBase {
    pub fn get(&self, e: Emotion) -> BaseRating {
        match e {
            Emotion::Anger => self.anger,
            Emotion::Disgust => self.disgust,
            Emotion::Fear => self.fear,
            Emotion::Happy => self.happy,
            Emotion::Neutral => self.neutral,
            Emotion::Sad => self.sad,
        }
    }
}

/// Additional trait effect on one rating, active for one stimulus only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalEffect {
    pub stimulus: Emotion,
    #[serde(rename = "trait")]
    pub trait_: Trait,
    pub label: LabelDim,
    /// Correlation within that stimulus' trials.
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedEffects {
    /// Correlation of each trait with felt valence, in trait order.
    pub trait_felt_valence: [f64; 5],
    /// Rating units per millimetre of pupil drive.
    pub pupil_mean_arousal: f64,
    pub pupil_mean_valence: f64,
    /// Target correlation between latent valence and the log amplitude of
    /// pupil fluctuations within a trial.
    pub pupil_var_valence: f64,
    /// Dwell logit shift per rating unit of felt-valence deviation.
    pub mouth_valence: f64,
    pub eyes_valence: f64,
    pub conditional: Vec<ConditionalEffect>,
    pub sigma_u: f64,
    pub sigma_e: f64,
    /// Shrinkage of perceived ratings toward the stimulus base.
    pub perceived_rho: f64,
    pub noise_perceived_valence: f64,
    pub noise_perceived_arousal: f64,
    pub noise_felt_valence: f64,
    pub noise_felt_arousal: f64,
    /// Standard deviation of the per-trial pupil drive, millimetres.
    pub pupil_drive_sd: f64,
    pub stimulus_base: StimulusBase,
}

impl Default for PlantedEffects {
    fn default() -> Self {
        Self {
            trait_felt_valence: [0.0, 0.26, 0.0, 0.33, -0.29],
            pupil_mean_arousal: 0.061,
            pupil_mean_valence: -0.048,
            pupil_var_valence: -0.32,
            mouth_valence: 0.08,
            eyes_valence: -0.08,
            conditional: Vec::new(),
            sigma_u: 0.5,
            sigma_e: 1.0,
            perceived_rho: 0.5,
            noise_perceived_valence: 0.4,
            noise_perceived_arousal: 0.7,
            noise_felt_valence: 0.8,
            noise_felt_arousal: 1.1,
            pupil_drive_sd: 0.6,
            stimulus_base: StimulusBase::default(),
        }
    }
}

impl PlantedEffects {
    /// Every effect switched off, random intercepts included.
    pub fn null() -> Self {
        Self {
            trait_felt_valence: [0.0; 5],
            pupil_mean_arousal: 0.0,
            pupil_mean_valence: 0.0,
            pupil_var_valence: 0.0,
            mouth_valence: 0.0,
            eyes_valence: 0.0,
            conditional: Vec::new(),
            sigma_u: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sds = [
            ("sigma_u", self.sigma_u),
            ("sigma_e", self.sigma_e),
            ("noise_perceived_valence", self.noise_perceived_valence),
            ("noise_perceived_arousal", self.noise_perceived_arousal),
            ("noise_felt_valence", self.noise_felt_valence),
            ("noise_felt_arousal", self.noise_felt_arousal),
            ("pupil_drive_sd", self.pupil_drive_sd),
        ];
        for (name, v) in sds {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidSpec(format!("{name} must be a finite sd >= 0, got {v}")));
            }
        }
        let mut rs: Vec<(String, f64)> = Trait::ALL
            .iter()
            .map(|t| (format!("trait_felt_valence.{}", t.name()), self.trait_felt_valence[t.index()]))
            .collect();
        rs.push(("pupil_var_valence".into(), self.pupil_var_valence));
        rs.extend(self.conditional.iter().map(|c| (format!("conditional {}", c.stimulus), c.r)));
        for (name, r) in rs {
            if !(r > -1.0 && r < 1.0) {
                return Err(Error::InvalidSpec(format!("{name} = {r} is not in (-1, 1)")));
            }
        }
        if self.trait_felt_valence.iter().map(|r| r * r).sum::<f64>() >= 1.0 {
            return Err(Error::InvalidSpec("trait correlations explain all felt-valence variance".into()));
        }
        if !(0.0..=1.0).contains(&self.perceived_rho) {
            return Err(Error::InvalidSpec("perceived_rho must lie in [0, 1]".into()));
        }
        for (name, v) in [
            ("pupil_mean_arousal", self.pupil_mean_arousal),
            ("pupil_mean_valence", self.pupil_mean_valence),
            ("mouth_valence", self.mouth_valence),
            ("eyes_valence", self.eyes_valence),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidSpec(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    /// Within-stimulus variance of felt valence not explained by traits.
    fn residual_felt_variance(&self) -> f64 {
        self.sigma_u.powi(2)
            + self.sigma_e.powi(2)
            + self.noise_felt_valence.powi(2)
            + (self.pupil_mean_valence * self.pupil_drive_sd).powi(2)
    }

    /// Total within-stimulus sd of felt valence.
    pub fn felt_valence_sd(&self) -> f64 {
        let explained: f64 = self.trait_felt_valence.iter().map(|r| r * r).sum();
        (self.residual_felt_variance() / (1.0 - explained)).sqrt()
    }

    /// Slopes in rating units per raw trait point.
    pub fn trait_slopes(&self) -> [f64; 5] {
        let sd = self.felt_valence_sd();
        self.trait_felt_valence.map(|r| r * sd / TRAIT_SD)
    }

    /// Total within-stimulus sd of latent valence (felt minus channel noise).
    fn latent_valence_sd(&self) -> f64 {
        let sd = self.felt_valence_sd();
        (sd * sd - self.noise_felt_valence.powi(2)).max(1e-12).sqrt()
    }

    fn conditional_slope(&self, c: &ConditionalEffect) -> f64 {
        let rho = self.perceived_rho;
        let latent = self.latent_valence_sd();
        let base_sd = match c.label {
            LabelDim::FeltValence => self.felt_valence_sd(),
            LabelDim::PerceivedValence => (rho * rho * latent * latent + self.noise_perceived_valence.powi(2)).sqrt(),
            LabelDim::FeltArousal => (self.sigma_u.powi(2) + self.sigma_e.powi(2) + self.noise_felt_arousal.powi(2)).sqrt(),
            LabelDim::PerceivedArousal => {
                (rho * rho * (self.sigma_u.powi(2) + self.sigma_e.powi(2)) + self.noise_perceived_arousal.powi(2)).sqrt()
            }
        };
        c.r * base_sd / ((1.0 - c.r * c.r).sqrt() * TRAIT_SD)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let e: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        e.validate()?;
        Ok(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    pub n_participants: usize,
    /// Clips shown to every participant; emotions cycle through the six
    /// stimulus categories.
    pub trials_per_participant: usize,
    /// Hz.
    pub sample_rate: f64,
    /// Seconds.
    pub duration_range: [f64; 2],
    /// Landmark frames per second.
    pub landmark_rate: f64,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            n_participants: 73,
            trials_per_participant: 84,
            sample_rate: 150.0,
            duration_range: [2.0, 4.0],
            landmark_rate: 2.0,
            seed: 0,
        }
    }
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_participants == 0 {
            return Err(Error::InvalidSpec("n_participants must be >= 1".into()));
        }
        if self.trials_per_participant < Emotion::ALL.len() {
            return Err(Error::InvalidSpec(
                "trials_per_participant must cover all six stimulus emotions".into(),
            ));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::InvalidSpec("sample_rate must be > 0".into()));
        }
        if !(self.landmark_rate > 0.0 && self.landmark_rate.is_finite()) {
            return Err(Error::InvalidSpec("landmark_rate must be > 0".into()));
        }
        let [lo, hi] = self.duration_range;
        if !(lo >= 0.5 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidSpec(format!("bad duration range [{lo}, {hi}]")));
        }
        Ok(())
    }
}

/// A frontal 68-point face in normalized screen coordinates (y down),
/// translated by `offset`.
pub fn canonical_face(frame_time: f64, offset: [f64; 2], trial_id: String) -> LandmarkFrame {
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(LANDMARK_POINTS);
    // jaw 0..=16
    for k in 0..17 {
        let a = std::f64::consts::PI * (k as f64 / 16.0);
        pts.push([0.5 - 0.25 * a.cos(), 0.45 + 0.38 * a.sin()]);
    }
    // eyebrows 17..=26
    for side in [0.39, 0.61] {
        for k in 0..5 {
            let s = (k as f64 - 2.0) / 2.0;
            pts.push([side + 0.06 * s, 0.29 + 0.012 * s * s]);
        }
    }
    // nose bridge 27..=30, nostrils 31..=35
    for k in 0..4 {
        pts.push([0.5, 0.37 + 0.05 * k as f64]);
    }
    for k in 0..5 {
        let s = (k as f64 - 2.0) / 2.0;
        pts.push([0.5 + 0.04 * s, 0.55 + 0.008 * (1.0 - s * s)]);
    }
    // eyes 36..=47, six points each
    for cx in [0.39, 0.61] {
        for k in 0..6 {
            let a = TAU * k as f64 / 6.0;
            pts.push([cx - 0.04 * a.cos(), 0.35 - 0.015 * a.sin()]);
        }
    }
    // outer lip 48..=59, inner lip 60..=67
    for k in 0..12 {
        let a = TAU * k as f64 / 12.0;
        pts.push([0.5 - 0.09 * a.cos(), 0.68 - 0.04 * a.sin()]);
    }
    for k in 0..8 {
        let a = TAU * k as f64 / 8.0;
        pts.push([0.5 - 0.06 * a.cos(), 0.68 - 0.015 * a.sin()]);
    }
    LandmarkFrame {
        trial_id,
        frame_time,
        points: pts.into_iter().map(|p| [p[0] + offset[0], p[1] + offset[1]]).collect(),
    }
}

/// Dwell preference when felt valence sits at the stimulus base.
const BASE_DWELL: [f64; 5] = [0.35, 0.08, 0.20, 0.27, 0.10];

/// Log-amplitude scale of pupil fluctuations.
const PUPIL_LOG_AMP_SCALE: f64 = 0.5;
const PUPIL_AMPLITUDE: f64 = 0.15;
const PUPIL_NOISE: f64 = 0.02;
/// Millimetres per unit of stimulus brightness above 0.5.
const BRIGHTNESS_PUPIL: f64 = -0.3;
const FIXATION_JITTER: f64 = 0.002;
const HEAD_DRIFT: f64 = 0.003;

/// Rounds to `decimals` places; the result is the double nearest to the
/// decimal value, so it prints without representation noise.
fn quantize(v: f64, decimals: i32) -> f64 {
    let p = 10f64.powi(decimals);
    (v * p).round() / p
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn rating(v: f64) -> u8 {
    v.round().clamp(1.0, 9.0) as u8
}

fn participant_id(j: usize) -> String {
    format!("p{:03}", j + 1)
}

fn clip_id(k: usize) -> String {
    format!("clip{:03}_{}", k + 1, Emotion::ALL[k % 6])
}

struct ParticipantDraw {
    profile: ParticipantProfile,
    u_valence: f64,
    u_arousal: f64,
    pupil_baseline: f64,
    lux: f64,
    temperature: f64,
}

struct TrialLatent {
    felt_valence: f64,
    latent_valence_dev: f64,
    drive: f64,
}

/// Generates a full cohort. Participants are generated from independent
/// ChaCha streams keyed by `(spec.seed, participant index)`, so the output is
/// identical however the work is scheduled.
pub fn generate_cohort(spec: &CohortSpec, effects: &PlantedEffects) -> Result<Dataset> {
    spec.validate()?;
    effects.validate()?;
    let mut clip_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let brightness: Vec<f64> = (0..spec.trials_per_participant)
        .map(|_| quantize(clip_rng.random_range(0.3..0.7), 4))
        .collect();
    let per_participant: Vec<(ParticipantProfile, Vec<TrialRecord>, Vec<(String, Vec<LandmarkFrame>)>)> = (0..spec
        .n_participants)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(j as u64 + 1);
            generate_participant(j, spec, effects, &brightness, &mut rng)
        })
        .collect();
    let mut ds = Dataset::default();
    for (profile, trials, frames) in per_participant {
        ds.participants.push(profile);
        ds.trials.extend(trials);
        ds.landmarks.extend(frames);
    }
    Ok(ds)
}

fn generate_participant(
    j: usize,
    spec: &CohortSpec,
    fx: &PlantedEffects,
    brightness: &[f64],
    rng: &mut ChaCha8Rng,
) -> (ParticipantProfile, Vec<TrialRecord>, Vec<(String, Vec<LandmarkFrame>)>) {
    let pid = participant_id(j);
    let mut big5_raw = [0.0; 5];
    for v in &mut big5_raw {
        *v = (TRAIT_MEAN + TRAIT_SD * normal(rng)).round().clamp(0.0, 50.0);
    }
    let draw = ParticipantDraw {
        profile: ParticipantProfile {
            participant_id: pid.clone(),
            big5_raw,
        },
        u_valence: fx.sigma_u * normal(rng),
        u_arousal: fx.sigma_u * normal(rng),
        pupil_baseline: 3.5 + 0.4 * normal(rng),
        lux: 300.0 + 30.0 * normal(rng),
        temperature: 22.0 + normal(rng),
    };
    let mut order: Vec<usize> = (0..spec.trials_per_participant).collect();
    order.shuffle(rng);
    let mut trials = Vec::with_capacity(order.len());
    let mut frames = Vec::with_capacity(order.len());
    for (i, &clip) in order.iter().enumerate() {
        let trial_id = format!("{pid}_t{:03}", i + 1);
        let (trial, lm) = generate_trial(&trial_id, clip, &draw, spec, fx, brightness[clip], rng);
        trials.push(trial);
        frames.push((trial_id, lm));
    }
    (draw.profile, trials, frames)
}

fn generate_trial(
    trial_id: &str,
    clip: usize,
    p: &ParticipantDraw,
    spec: &CohortSpec,
    fx: &PlantedEffects,
    brightness: f64,
    rng: &mut ChaCha8Rng,
) -> (TrialRecord, Vec<LandmarkFrame>) {
    let stimulus = Emotion::ALL[clip % 6];
    let base = fx.stimulus_base.get(stimulus);
    let slopes = fx.trait_slopes();
    let traits = p.profile.big5_raw;
    let drive = fx.pupil_drive_sd * normal(rng);

    let trait_term: f64 = slopes
        .iter()
        .zip(&traits)
        .map(|(b, t)| b * (t - TRAIT_MEAN))
        .sum();
    let latent_v = base.valence + trait_term + fx.pupil_mean_valence * drive + p.u_valence + fx.sigma_e * normal(rng);
    let latent_a = base.arousal + fx.pupil_mean_arousal * drive + p.u_arousal + fx.sigma_e * normal(rng);
    let rho = fx.perceived_rho;
    let mut values = [
        base.valence + rho * (latent_v - base.valence) + fx.noise_perceived_valence * normal(rng),
        base.arousal + rho * (latent_a - base.arousal) + fx.noise_perceived_arousal * normal(rng),
        latent_v + fx.noise_felt_valence * normal(rng),
        latent_a + fx.noise_felt_arousal * normal(rng),
    ];
    for c in fx.conditional.iter().filter(|c| c.stimulus == stimulus) {
        let slot = LabelDim::ALL.iter().position(|d| *d == c.label).unwrap_or(0);
        values[slot] += fx.conditional_slope(c) * (traits[c.trait_.index()] - TRAIT_MEAN);
    }
    let labels = LabelRecord {
        perceived_valence: rating(values[0]),
        perceived_arousal: rating(values[1]),
        felt_valence: rating(values[2]),
        felt_arousal: rating(values[3]),
    };
    let latent = TrialLatent {
        felt_valence: values[2],
        latent_valence_dev: (latent_v - base.valence) / fx.latent_valence_sd().max(1e-12),
        drive,
    };

    let [lo, hi] = spec.duration_range;
    let duration = quantize(if hi > lo { rng.random_range(lo..hi) } else { lo }, 3);
    let env = Environment {
        ambient_lux: quantize(p.lux + 5.0 * normal(rng), 1),
        temperature_celsius: quantize(p.temperature + 0.1 * normal(rng), 2),
        stimulus_brightness: brightness,
    };
    let face_offset = [0.01 * normal(rng), 0.01 * normal(rng)];
    let drift_phase = rng.random_range(0.0..TAU);
    let offset_at = |t: f64| {
        [
            face_offset[0] + HEAD_DRIFT * (TAU * 0.2 * t + drift_phase).sin(),
            face_offset[1] + HEAD_DRIFT * (TAU * 0.2 * t + drift_phase).cos(),
        ]
    };
    let n_frames = (duration * spec.landmark_rate).floor() as usize + 1;
    let frames: Vec<LandmarkFrame> = (0..n_frames)
        .map(|k| {
            let t = quantize(k as f64 / spec.landmark_rate, 6);
            let mut f = canonical_face(t, offset_at(t), trial_id.to_string());
            for pt in &mut f.points {
                *pt = [quantize(pt[0], 5), quantize(pt[1], 5)];
            }
            f
        })
        .collect();

    let base_v = base.valence;
    let samples = synthesize_gaze(spec, fx, p, &latent, base_v, brightness, duration, &offset_at, rng);
    let record = TrialRecord {
        trial_id: trial_id.to_string(),
        participant_id: p.profile.participant_id.clone(),
        clip_id: clip_id(clip),
        stimulus,
        duration,
        env,
        samples,
        labels,
    };
    (record, frames)
}

fn dwell_probabilities(fx: &PlantedEffects, felt_dev: f64) -> [f64; 5] {
    let mut logits = BASE_DWELL.map(f64::ln);
    logits[RegionLabel::Eyes.index()] += fx.eyes_valence * felt_dev;
    logits[RegionLabel::Mouth.index()] += fx.mouth_valence * felt_dev;
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w = logits.map(|l| (l - m).exp());
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

fn pick_region(probs: &[f64; 5], rng: &mut ChaCha8Rng) -> RegionLabel {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return RegionLabel::ALL[i];
        }
    }
    RegionLabel::Outside
}

/// Target point for a fixation on `region` of the face at `offset`.
fn fixation_target(
    region: RegionLabel,
    hulls: &RegionHulls<f64>,
    map: &RegionMap,
    face: &LandmarkFrame,
    rng: &mut ChaCha8Rng,
) -> [f64; 2] {
    if region == RegionLabel::Outside {
        loop {
            let p = [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)];
            let clear = hulls.regions.iter().all(|poly| {
                let c = poly.centroid();
                !poly.contains(p) && (p[0] - c[0]).hypot(p[1] - c[1]) > 0.05
            });
            if clear {
                return p;
            }
        }
    }
    // pull a random landmark of the region toward the region centroid; the
    // result stays inside the convex hull and away from its boundary
    let idx = map.indices(region);
    let c = hulls.regions[region.index()].centroid();
    loop {
        let lm = face.points[idx[rng.random_range(0..idx.len())]];
        let s = rng.random_range(0.1..0.7);
        let p = [c[0] + s * (lm[0] - c[0]), c[1] + s * (lm[1] - c[1])];
        if crate::roi::label_gaze(p, hulls) == region {
            return p;
        }
    }
}

fn min_jerk(s: f64) -> f64 {
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

#[allow(clippy::too_many_arguments)]
fn synthesize_gaze(
    spec: &CohortSpec,
    fx: &PlantedEffects,
    p: &ParticipantDraw,
    latent: &TrialLatent,
    base_valence: f64,
    brightness: f64,
    duration: f64,
    offset_at: &dyn Fn(f64) -> [f64; 2],
    rng: &mut ChaCha8Rng,
) -> Vec<GazeSample> {
    let map = RegionMap::default();
    let n = (duration * spec.sample_rate).floor() as usize + 1;
    let times: Vec<f64> = (0..n).map(|k| quantize(k as f64 / spec.sample_rate, 6)).collect();
    let probs = dwell_probabilities(fx, latent.felt_valence - base_valence);

    // gaze path: fixations joined by minimum-jerk saccades
    let mut xy = vec![[0.0f64; 2]; n];
    let mut t0 = 0.0;
    let face0 = canonical_face(0.0, offset_at(0.0), String::new());
    let hulls0: RegionHulls<f64> = build_hulls(&face0, &map);
    let mut current = fixation_target(pick_region(&probs, rng), &hulls0, &map, &face0, rng);
    let mut k = 0;
    while k < n {
        let fix_end = t0 + rng.random_range(0.18..0.45);
        while k < n && times[k] < fix_end {
            xy[k] = [
                current[0] + FIXATION_JITTER * normal(rng),
                current[1] + FIXATION_JITTER * normal(rng),
            ];
            k += 1;
        }
        if k >= n {
            break;
        }
        let face = canonical_face(fix_end, offset_at(fix_end), String::new());
        let hulls: RegionHulls<f64> = build_hulls(&face, &map);
        let next = loop {
            let cand = fixation_target(pick_region(&probs, rng), &hulls, &map, &face, rng);
            if (cand[0] - current[0]).hypot(cand[1] - current[1]) >= 0.05 {
                break cand;
            }
        };
        let sac = rng.random_range(0.02..0.04);
        while k < n && times[k] < fix_end + sac {
            let s = min_jerk(((times[k] - fix_end) / sac).clamp(0.0, 1.0));
            xy[k] = [
                current[0] + s * (next[0] - current[0]),
                current[1] + s * (next[1] - current[1]),
            ];
            k += 1;
        }
        current = next;
        t0 = fix_end + sac;
    }

    // pupil: baseline + drive + brightness + fluctuation with an amplitude
    // tied to latent valence
    let r = fx.pupil_var_valence;
    let g = PUPIL_LOG_AMP_SCALE * (r * latent.latent_valence_dev + (1.0 - r * r).sqrt() * normal(rng));
    let amp = PUPIL_AMPLITUDE * g.exp() / 2.0;
    let waves: Vec<(f64, f64)> = (0..4)
        .map(|_| (rng.random_range(0.3..1.5), rng.random_range(0.0..TAU)))
        .collect();
    let level = p.pupil_baseline + latent.drive + BRIGHTNESS_PUPIL * (brightness - 0.5);

    let mut valid = vec![true; n];
    for _ in 0..2 {
        if rng.random::<f64>() < 0.25 && duration > 0.4 {
            let start = rng.random_range(0.1..duration - 0.2);
            let len = rng.random_range(0.05..0.15);
            for (k, &t) in times.iter().enumerate() {
                if t >= start && t < start + len {
                    valid[k] = false;
                }
            }
        }
    }

    (0..n)
        .map(|k| {
            let t = times[k];
            if !valid[k] {
                return GazeSample {
                    t,
                    x: 0.0,
                    y: 0.0,
                    pupil: 0.0,
                    valid: false,
                };
            }
            let wave: f64 = waves.iter().map(|(f, ph)| (TAU * f * t + ph).sin()).sum();
            let pupil = (level + amp * wave + PUPIL_NOISE * normal(rng)).max(0.5);
            GazeSample {
                t,
                x: quantize(xy[k][0], 5),
                y: quantize(xy[k][1], 5),
                pupil: quantize(pupil, 4),
                valid: true,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitLabelCorrelation {
    #[serde(rename = "trait")]
    pub trait_: Trait,
    pub label: LabelDim,
    pub result: CorrelationResult<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CohortSummary {
    pub n_participants: usize,
    pub n_trials: usize,
    /// Per rating dimension: trials in the low, medium and high bins.
    pub label_counts: BTreeMap<LabelDim, [usize; 3]>,
    /// Trials per stimulus emotion over the whole cohort.
    pub emotion_counts: BTreeMap<Emotion, usize>,
    /// Smallest and largest per-participant trial count for each emotion.
    pub emotion_counts_per_participant: BTreeMap<Emotion, [usize; 2]>,
    /// Participant-level correlations of raw trait scores with mean ratings.
    pub correlations: Vec<TraitLabelCorrelation>,
}

pub fn describe_cohort(ds: &Dataset) -> CohortSummary {
    let mut s = CohortSummary {
        n_participants: ds.participants.len(),
        n_trials: ds.trials.len(),
        ..Default::default()
    };
    for d in LabelDim::ALL {
        let mut counts = [0usize; 3];
        for t in &ds.trials {
            if let Ok(c) = bin_label(i64::from(t.labels.get(d))) {
                counts[c.index()] += 1;
            }
        }
        s.label_counts.insert(d, counts);
    }
    let mut per: HashMap<(&str, Emotion), usize> = HashMap::new();
    for t in &ds.trials {
        *s.emotion_counts.entry(t.stimulus).or_default() += 1;
        *per.entry((t.participant_id.as_str(), t.stimulus)).or_default() += 1;
    }
    for e in Emotion::ALL {
        let counts: Vec<usize> = ds
            .participants
            .iter()
            .map(|p| per.get(&(p.participant_id.as_str(), e)).copied().unwrap_or(0))
            .collect();
        if let (Some(&lo), Some(&hi)) = (counts.iter().min(), counts.iter().max()) {
            s.emotion_counts_per_participant.insert(e, [lo, hi]);
        }
    }
    let profiles = ds.profile_index();
    for t in Trait::ALL {
        for d in LabelDim::ALL {
            if let Some(result) = trait_label_correlation(ds, &profiles, t, d) {
                s.correlations.push(TraitLabelCorrelation {
                    trait_: t,
                    label: d,
                    result,
                });
            }
        }
    }
    s
}

/// Participant means of one rating against raw trait scores.
pub fn trait_label_correlation(
    ds: &Dataset,
    profiles: &HashMap<&str, &ParticipantProfile>,
    t: Trait,
    d: LabelDim,
) -> Option<CorrelationResult<f64>> {
    let means = participant_aggregate(&ds.trials, |r| r.participant_id.as_str(), |r| Some(f64::from(r.labels.get(d)))).ok()?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (pid, &m) in means.participant_ids.iter().zip(&means.values) {
        if let Some(p) = profiles.get(pid.as_str()) {
            xs.push(p.big5_raw[t.index()]);
            ys.push(m);
        }
    }
    pearson(&xs, &ys).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roi::RegionMap;

    fn small(seed: u64) -> CohortSpec {
        CohortSpec {
            n_participants: 4,
            trials_per_participant: 12,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn face_has_68_points_and_separated_regions() {
        let f = canonical_face(0.0, [0.0, 0.0], "t".into());
        assert_eq!(f.points.len(), LANDMARK_POINTS);
        RegionMap::default().validate().unwrap();
    }

    #[test]
    fn same_seed_same_cohort() {
        let a = generate_cohort(&small(5), &PlantedEffects::default()).unwrap();
        let b = generate_cohort(&small(5), &PlantedEffects::default()).unwrap();
        assert_eq!(a, b);
        let c = generate_cohort(&small(6), &PlantedEffects::default()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn balanced_emotions_and_valid_labels() {
        let spec = CohortSpec {
            n_participants: 3,
            ..Default::default()
        };
        let ds = generate_cohort(&spec, &PlantedEffects::default()).unwrap();
        let s = describe_cohort(&ds);
        assert_eq!(s.n_trials, 3 * 84);
        for e in Emotion::ALL {
            assert_eq!(s.emotion_counts_per_participant[&e], [14, 14]);
        }
        for t in &ds.trials {
            for d in LabelDim::ALL {
                assert!((1..=9).contains(&t.labels.get(d)));
            }
            assert!((2.0..=4.0).contains(&t.duration));
        }
    }

    #[test]
    fn empty_summary() {
        let s = describe_cohort(&Dataset::default());
        assert_eq!(s.n_trials, 0);
        assert!(s.correlations.is_empty());
        assert!(s.label_counts.values().all(|c| *c == [0, 0, 0]));
    }

    #[test]
    fn summary_uses_pearson() {
        let ds = generate_cohort(
            &CohortSpec {
                n_participants: 8,
                ..small(2)
            },
            &PlantedEffects::default(),
        )
        .unwrap();
        let s = describe_cohort(&ds);
        let c = s
            .correlations
            .iter()
            .find(|c| c.trait_ == Trait::Neuroticism && c.label == LabelDim::FeltValence)
            .unwrap();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for p in &ds.participants {
            let own: Vec<f64> = ds
                .trials
                .iter()
                .filter(|t| t.participant_id == p.participant_id)
                .map(|t| f64::from(t.labels.felt_valence))
                .collect();
            xs.push(p.big5_raw[Trait::Neuroticism.index()]);
            ys.push(own.iter().sum::<f64>() / own.len() as f64);
        }
        let direct = pearson(&xs, &ys).unwrap();
        assert!((direct.r - c.result.r).abs() < 1e-12);
    }

    #[test]
    fn effects_round_trip_through_toml() {
        let mut fx = PlantedEffects::default();
        fx.conditional.push(ConditionalEffect {
            stimulus: Emotion::Happy,
            trait_: Trait::Conscientiousness,
            label: LabelDim::PerceivedValence,
            r: 0.37,
        });
        let text = fx.to_toml().unwrap();
        assert_eq!(PlantedEffects::from_toml(&text).unwrap(), fx);
    }

    #[test]
    fn slopes_reproduce_planted_correlations() {
        let fx = PlantedEffects::default();
        let b = fx.trait_slopes();
        let sd = fx.felt_valence_sd();
        for k in 0..5 {
            assert!((b[k] * TRAIT_SD / sd - fx.trait_felt_valence[k]).abs() < 1e-12);
        }
        let total: f64 = b.iter().map(|v| (v * TRAIT_SD).powi(2)).sum::<f64>() + fx.residual_felt_variance();
        assert!((total - sd * sd).abs() < 1e-9);
    }

    #[test]
    fn invalid_specs() {
        let bad = CohortSpec {
            n_participants: 0,
            ..Default::default()
        };
        assert!(matches!(generate_cohort(&bad, &PlantedEffects::default()), Err(Error::InvalidSpec(_))));
        let fx = PlantedEffects {
            sigma_e: -1.0,
            ..Default::default()
        };
        assert!(matches!(generate_cohort(&small(0), &fx), Err(Error::InvalidSpec(_))));
        let fx = PlantedEffects {
            trait_felt_valence: [0.6, 0.6, 0.6, 0.0, 0.0],
            ..Default::default()
        };
        assert!(matches!(fx.validate(), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn fixation_targets_land_in_their_region() {
        let map = RegionMap::default();
        let face = canonical_face(0.0, [0.01, -0.02], String::new());
        let hulls: RegionHulls<f64> = build_hulls(&face, &map);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for region in RegionLabel::ALL {
            for _ in 0..50 {
                let p = fixation_target(region, &hulls, &map, &face, &mut rng);
                assert_eq!(crate::roi::label_gaze(p, &hulls), region);
            }
        }
    }
}
