//! The full battery of correlations and mixed models over a feature table,
//! grouped into blocks with Bonferroni-adjusted p-values per block.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::{Emotion, LabelDim, Trait};
use crate::stats::{bonferroni, correlate, fit_variables, CorrelationResult, LmeFit, Variable};
use crate::table::FeatureRow;

pub const STATS_REPORT_FILE: &str = "stats-report.json";

/// Eye-derived columns correlated with labels: fixation, pupil, saccade and
/// region statistics.
pub const EYE_METRIC_COLUMNS: std::ops::Range<usize> = 0..19;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stimulus: Option<Emotion>,
    pub x: String,
    pub y: String,
    pub r: f64,
    pub n: usize,
    pub p: f64,
    pub p_bonferroni: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmeRow {
    pub outcome: String,
    pub predictor: String,
    pub beta0: f64,
    pub beta1: f64,
    pub se_beta1: f64,
    pub p: f64,
    pub p_bonferroni: f64,
    pub sigma2_u: f64,
    pub sigma2_e: f64,
    pub loglik: f64,
    pub n_obs: usize,
    pub n_groups: usize,
    pub degenerate: bool,
}

/// A test that could not be computed, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub test: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block<R> {
    pub title: String,
    /// Number of tests attempted; the Bonferroni multiplier.
    pub m: usize,
    pub rows: Vec<R>,
    pub skipped: Vec<Skipped>,
}

impl<R> Block<R> {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub n_trials: usize,
    pub n_participants: usize,
    pub trait_labels: Block<CorrelationRow>,
    pub stimulus_conditional: Block<CorrelationRow>,
    pub eye_labels: Block<CorrelationRow>,
    pub lme_pupil: Block<LmeRow>,
    pub lme_regions_binned: Block<LmeRow>,
    pub lme_regions: Block<LmeRow>,
    pub lme_traits: Block<LmeRow>,
}

impl StatsReport {
    pub fn is_empty(&self) -> bool {
        self.trait_labels.is_empty()
            && self.stimulus_conditional.is_empty()
            && self.eye_labels.is_empty()
            && self.lme_pupil.is_empty()
            && self.lme_regions_binned.is_empty()
            && self.lme_regions.is_empty()
            && self.lme_traits.is_empty()
    }
}

type CorrSpec = (Option<Emotion>, Variable, Variable);

fn correlation_block(title: &str, rows: &[FeatureRow], specs: Vec<CorrSpec>) -> Block<CorrelationRow> {
    let results: Vec<(CorrSpec, Result<CorrelationResult<f64>>)> = specs
        .into_par_iter()
        .map(|s| (s, correlate(rows, s.1, s.2, s.0)))
        .collect();
    let m = results.len();
    let mut block = Block {
        title: title.to_string(),
        m,
        rows: Vec::new(),
        skipped: Vec::new(),
    };
    for ((stimulus, x, y), res) in results {
        match res {
            Ok(c) => block.rows.push(CorrelationRow {
                stimulus,
                x: x.name(),
                y: y.name(),
                r: c.r,
                n: c.n,
                p: c.p,
                p_bonferroni: bonferroni(&[c.p], m)[0],
            }),
            Err(e) => block.skipped.push(Skipped {
                test: match stimulus {
                    Some(s) => format!("{s}: {x} ~ {y}"),
                    None => format!("{x} ~ {y}"),
                },
                reason: e.to_string(),
            }),
        }
    }
    block
}

fn lme_block(title: &str, rows: &[FeatureRow], specs: Vec<(Variable, Variable)>) -> Block<LmeRow> {
    let results: Vec<((Variable, Variable), Result<LmeFit<f64>>)> = specs
        .into_par_iter()
        .map(|(pred, out)| ((pred, out), fit_variables(rows, pred, out)))
        .collect();
    let m = results.len();
    let mut block = Block {
        title: title.to_string(),
        m,
        rows: Vec::new(),
        skipped: Vec::new(),
    };
    for ((pred, out), res) in results {
        match res {
            Ok(f) => block.rows.push(LmeRow {
                outcome: out.name(),
                predictor: pred.name(),
                beta0: f.beta0,
                beta1: f.beta1,
                se_beta1: f.se_beta1,
                p: f.p_beta1,
                p_bonferroni: bonferroni(&[f.p_beta1], m)[0],
                sigma2_u: f.sigma2_u,
                sigma2_e: f.sigma2_e,
                loglik: f.loglik,
                n_obs: f.n_obs,
                n_groups: f.n_groups,
                degenerate: f.degenerate,
            }),
            Err(e) => block.skipped.push(Skipped {
                test: format!("{out} ~ {pred} + (1 | participant)"),
                reason: e.to_string(),
            }),
        }
    }
    block
}

fn feature(name: &str) -> Variable {
    Variable::feature(name).expect("known feature column")
}

const REGION_COLUMNS: [&str; 4] = ["prop_eyes", "prop_eyebrows", "prop_nose", "prop_mouth"];

pub fn build_report(rows: &[FeatureRow]) -> StatsReport {
    let mut participants: Vec<&str> = rows.iter().map(|r| r.participant_id.as_str()).collect();
    participants.sort_unstable();
    participants.dedup();

    let trait_label: Vec<CorrSpec> = Trait::ALL
        .iter()
        .flat_map(|&t| LabelDim::ALL.iter().map(move |&d| (None, Variable::Trait(t), Variable::Label(d))))
        .collect();
    let conditional: Vec<CorrSpec> = Emotion::ALL
        .iter()
        .flat_map(|&s| {
            Trait::ALL
                .iter()
                .flat_map(move |&t| LabelDim::ALL.iter().map(move |&d| (Some(s), Variable::Trait(t), Variable::Label(d))))
        })
        .collect();
    let eye: Vec<CorrSpec> = EYE_METRIC_COLUMNS
        .flat_map(|i| LabelDim::ALL.iter().map(move |&d| (None, Variable::Feature(i), Variable::Label(d))))
        .collect();
    let pupil: Vec<(Variable, Variable)> = ["pupil_mean", "pupil_max"]
        .iter()
        .flat_map(|c| LabelDim::ALL.iter().map(move |&d| (feature(c), Variable::Label(d))))
        .collect();
    let regions = |binned: bool| -> Vec<(Variable, Variable)> {
        REGION_COLUMNS
            .iter()
            .flat_map(|c| {
                LabelDim::ALL.iter().map(move |&d| {
                    let out = if binned {
                        Variable::BinnedLabel(d)
                    } else {
                        Variable::Label(d)
                    };
                    (feature(c), out)
                })
            })
            .collect()
    };
    let traits: Vec<(Variable, Variable)> = Trait::ALL
        .iter()
        .flat_map(|&t| LabelDim::ALL.iter().map(move |&d| (Variable::Trait(t), Variable::Label(d))))
        .collect();

    StatsReport {
        n_trials: rows.len(),
        n_participants: participants.len(),
        trait_labels: correlation_block("Personality traits and emotion labels", rows, trait_label),
        stimulus_conditional: correlation_block("Personality-emotion correlations per stimulus", rows, conditional),
        eye_labels: correlation_block("Eye metrics and emotion labels", rows, eye),
        lme_pupil: lme_block("Mixed models for pupil metrics", rows, pupil),
        lme_regions_binned: lme_block("Mixed models for binned labels and facial regions", rows, regions(true)),
        lme_regions: lme_block("Mixed models for labels and facial regions", rows, regions(false)),
        lme_traits: lme_block("Mixed models for personality traits", rows, traits),
    }
}
