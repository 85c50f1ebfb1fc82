//! Raw cohort to per-trial features: quality filter, pupil baseline, event
//! detection, facial-region labelling, summary features and step sequences.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{
    compute_baseline, correct_pupil, detect_fixations, quality_filter, DetectorConfig, EventTimeline, PupilBaseline,
};
use crate::features::{build_trial_features, resample_sequence, SequenceLayout, TrialSignals};
use crate::io::{Dataset, TrialRecord};
use crate::roi::{region_proportions, HullTrack, RegionMap};
use crate::table::{FeatureRow, SequenceRow};

/// Preprocessing settings, read from the `[detector]`, `[regions]` and
/// `[sequence]` tables of a TOML file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub detector: DetectorConfig,
    pub regions: RegionMap,
    pub sequence: SequenceLayout,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.regions.validate()?;
        let d = &self.detector;
        if !(d.dispersion_threshold > 0.0 && d.min_duration > 0.0 && d.max_gap >= 0.0) {
            return Err(Error::Config("detector thresholds must be positive".into()));
        }
        if self.sequence.steps < 2 || self.sequence.channels.is_empty() {
            return Err(Error::Config("sequence needs >= 2 steps and >= 1 channel".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEvents {
    pub trial_id: String,
    #[serde(flatten)]
    pub timeline: EventTimeline<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOutput {
    pub baselines: Vec<PupilBaseline<f64>>,
    pub events: Vec<TrialEvents>,
    pub features: Vec<FeatureRow>,
    pub sequences: Vec<SequenceRow>,
}

/// Neutral-trial pupil baseline of every participant, in profile order.
pub fn participant_baselines(ds: &Dataset) -> Result<Vec<PupilBaseline<f64>>> {
    let mut by_participant: HashMap<&str, Vec<&TrialRecord>> = HashMap::new();
    for t in &ds.trials {
        by_participant.entry(t.participant_id.as_str()).or_default().push(t);
    }
    ds.participants
        .iter()
        .filter_map(|p| by_participant.get(p.participant_id.as_str()).map(|ts| (p, ts)))
        .map(|(p, ts)| compute_baseline(&p.participant_id, ts.iter().map(|t| (t.stimulus, t.samples.as_slice()))))
        .collect()
}

/// Event timeline of one trial.
pub fn trial_events(trial: &TrialRecord, baseline: f64, config: &DetectorConfig) -> Result<EventTimeline<f64>> {
    let valid = quality_filter(&trial.samples);
    detect_fixations(&valid, config, baseline)
}

fn process_trial(
    ds: &Dataset,
    trial: &TrialRecord,
    baseline: &PupilBaseline<f64>,
    config: &PipelineConfig,
) -> Result<(TrialEvents, FeatureRow, SequenceRow)> {
    let valid = quality_filter(&trial.samples);
    let timeline = detect_fixations(&valid, &config.detector, baseline.baseline)?;
    let frames = ds
        .landmarks
        .get(&trial.trial_id)
        .ok_or_else(|| Error::MissingTrial(trial.trial_id.clone()))?;
    let track: HullTrack<f64> = HullTrack::new(frames, &config.regions);
    let fixation_labels: Vec<_> = timeline
        .fixations
        .iter()
        .map(|f| track.label(0.5 * (f.start + f.end), f.centroid))
        .collect();
    let (proportions, _) = region_proportions(&fixation_labels);
    let corrected: Vec<f64> = valid.iter().map(|s| correct_pupil(s.pupil, baseline)).collect();
    let profile = ds
        .profile(&trial.participant_id)
        .ok_or_else(|| Error::OrphanTrial {
            trial_id: trial.trial_id.clone(),
            participant_id: trial.participant_id.clone(),
        })?;
    let features = build_trial_features(&timeline, &corrected, proportions, &trial.env, profile, trial.stimulus)?;
    let signals = TrialSignals {
        times: valid.iter().map(|s| s.t).collect(),
        x: valid.iter().map(|s| s.x).collect(),
        y: valid.iter().map(|s| s.y).collect(),
        region: valid.iter().map(|s| track.label(s.t, [s.x, s.y])).collect(),
        pupil: corrected,
        saccade_onsets: timeline.saccades.iter().map(|s| s.start).collect(),
    };
    let sequence = resample_sequence(&signals, trial.duration, &config.sequence)?;
    Ok((
        TrialEvents {
            trial_id: trial.trial_id.clone(),
            timeline,
        },
        FeatureRow {
            trial_id: trial.trial_id.clone(),
            participant_id: trial.participant_id.clone(),
            clip_id: trial.clip_id.clone(),
            stimulus: trial.stimulus,
            labels: trial.labels,
            features,
        },
        SequenceRow {
            trial_id: trial.trial_id.clone(),
            sequence,
        },
    ))
}

/// Runs every trial of the cohort through the pipeline. Trials are processed
/// in parallel; outputs keep the dataset's trial order.
pub fn run_pipeline(ds: &Dataset, config: &PipelineConfig) -> Result<PipelineOutput> {
    config.validate()?;
    let baselines = participant_baselines(ds)?;
    let index: HashMap<&str, &PupilBaseline<f64>> =
        baselines.iter().map(|b| (b.participant_id.as_str(), b)).collect();
    let results: Vec<(TrialEvents, FeatureRow, SequenceRow)> = ds
        .trials
        .par_iter()
        .map(|t| {
            let b = index
                .get(t.participant_id.as_str())
                .ok_or_else(|| Error::NoNeutralTrials(t.participant_id.clone()))?;
            process_trial(ds, t, b, config).map_err(|e| match e {
                Error::TooFewSamples { .. } | Error::DegenerateWindow => {
                    Error::InvalidValue(format!("trial {}: {e}", t.trial_id))
                }
                other => other,
            })
        })
        .collect::<Result<_>>()?;
    let mut out = PipelineOutput {
        baselines,
        ..Default::default()
    };
    for (e, f, s) in results {
        out.events.push(e);
        out.features.push(f);
        out.sequences.push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_cohort, CohortSpec, PlantedEffects};

    #[test]
    fn synthetic_cohort_flows_through() {
        let spec = CohortSpec {
            n_participants: 2,
            trials_per_participant: 12,
            seed: 11,
            ..Default::default()
        };
        let ds = generate_cohort(&spec, &PlantedEffects::default()).unwrap();
        let out = run_pipeline(&ds, &PipelineConfig::default()).unwrap();
        assert_eq!(out.features.len(), 24);
        assert_eq!(out.baselines.len(), 2);
        for (e, s) in out.events.iter().zip(&out.sequences) {
            assert!(!e.timeline.fixations.is_empty(), "trial {}", e.trial_id);
            assert_eq!(s.sequence.steps, 15);
            assert_eq!(s.sequence.width, 10);
        }
        // baseline is the pooled mean over valid neutral samples
        let own: Vec<f64> = ds
            .trials
            .iter()
            .filter(|t| t.participant_id == "p001" && t.stimulus == crate::io::Emotion::Neutral)
            .flat_map(|t| t.samples.iter().filter(|s| s.valid).map(|s| s.pupil))
            .collect();
        let pooled = own.iter().sum::<f64>() / own.len() as f64;
        assert!((out.baselines[0].baseline - pooled).abs() < 1e-12);
    }

    #[test]
    fn config_toml_round_trip() {
        let c = PipelineConfig::default();
        let text = toml::to_string(&c).unwrap();
        let back: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
        let partial: PipelineConfig = toml::from_str("[detector]\nmin_duration = 0.08\n").unwrap();
        assert_eq!(partial.detector.min_duration, 0.08);
        assert_eq!(partial.detector.dispersion_threshold, 0.03);
    }
}
