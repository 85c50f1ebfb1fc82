//! Three-class label classifiers: the multi-stream recurrent network, linear
//! SVM baselines, data splits, scaling and evaluation.

pub mod grid;
pub mod metrics;
pub mod network;
pub mod scaling;
pub mod split;
pub mod svm;
pub mod train;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{bin_label, SequenceLayout};
use crate::io::LabelDim;
use crate::scalar::Scalar;
use crate::table::{FeatureRow, SequenceRow};

pub use grid::{grid_search, Grid, GridEntry, GridResult};
pub use metrics::{evaluate, MetricsReport};
pub use network::{Architecture, Mode, Network};
pub use scaling::{ExampleScaler, ScaleMethod, Scaler};
pub use split::{stratified_split, Split};
pub use svm::{LinearSvm, SvmVariant};
pub use train::{evaluate_network, train, TrainingLog};

pub const N_CLASSES: usize = 3;
pub const N_PERSONALITY: usize = 5;
pub const N_STIMULUS: usize = 6;
pub const N_ENV: usize = 3;

pub const MODEL_CONFIG_FILE: &str = "model-config.toml";
pub const LEADERBOARD_FILE: &str = "leaderboard.csv";
pub const METRICS_FILE: &str = "metrics.json";

/// One trial as seen by the classifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T = f64> {
    pub trial_id: String,
    pub participant_id: String,
    pub steps: usize,
    /// `steps × width` row-major.
    pub seq: Vec<T>,
    pub personality: [T; N_PERSONALITY],
    pub stimulus: [T; N_STIMULUS],
    pub env: [T; N_ENV],
    /// Class index: 0 low, 1 medium, 2 high.
    pub label: usize,
}

impl<T: Scalar> Example<T> {
    pub fn width(&self) -> usize {
        if self.steps == 0 {
            0
        } else {
            self.seq.len() / self.steps
        }
    }
}

/// Which static streams feed the network besides the sequence. The
/// environment stream is always present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputVariant {
    Eye,
    EyePersonality,
    EyeStimulus,
    EyePersonalityStimulus,
}

impl InputVariant {
    pub const ALL: [InputVariant; 4] = [
        InputVariant::Eye,
        InputVariant::EyePersonality,
        InputVariant::EyeStimulus,
        InputVariant::EyePersonalityStimulus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InputVariant::Eye => "eye",
            InputVariant::EyePersonality => "eye_personality",
            InputVariant::EyeStimulus => "eye_stimulus",
            InputVariant::EyePersonalityStimulus => "eye_personality_stimulus",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            InputVariant::Eye => "NN with eye-tracking data",
            InputVariant::EyePersonality => "NN with eye-tracking and personality",
            InputVariant::EyeStimulus => "NN with eye-tracking and stimulus emotion",
            InputVariant::EyePersonalityStimulus => "NN with eye-tracking, personality and stimulus emotion",
        }
    }

    pub fn uses_personality(self) -> bool {
        matches!(self, InputVariant::EyePersonality | InputVariant::EyePersonalityStimulus)
    }

    pub fn uses_stimulus(self) -> bool {
        matches!(self, InputVariant::EyeStimulus | InputVariant::EyePersonalityStimulus)
    }
}

impl fmt::Display for InputVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InputVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown input variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeightsMode {
    /// `N / (3 n_c)` from the training split.
    #[default]
    Balanced,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamWidths {
    pub personality: usize,
    pub stimulus: usize,
    pub environment: usize,
    pub fusion: usize,
}

impl Default for StreamWidths {
    fn default() -> Self {
        Self {
            personality: 8,
            stimulus: 8,
            environment: 4,
            fusion: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub noise_sigma: f64,
    pub lstm_hidden: usize,
    pub stream_widths: StreamWidths,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub class_weights_mode: ClassWeightsMode,
    pub variant: InputVariant,
    /// L2 strength of the SVM baselines.
    pub svm_lambda: f64,
    pub svm_epochs: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            dropout_rate: 0.3,
            noise_sigma: 0.05,
            lstm_hidden: 32,
            stream_widths: StreamWidths::default(),
            batch_size: 32,
            max_epochs: 200,
            patience: 10,
            seed: 0,
            class_weights_mode: ClassWeightsMode::Balanced,
            variant: InputVariant::EyePersonalityStimulus,
            svm_lambda: 1e-3,
            svm_epochs: 100,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be non-negative");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.lstm_hidden == 0 {
            return bad("batch_size, max_epochs and lstm_hidden must be positive");
        }
        let w = &self.stream_widths;
        if w.personality == 0 || w.stimulus == 0 || w.environment == 0 || w.fusion == 0 {
            return bad("stream widths must be positive");
        }
        if !(self.svm_lambda > 0.0) || self.svm_epochs == 0 {
            return bad("svm_lambda and svm_epochs must be positive");
        }
        Ok(())
    }

    pub fn architecture(&self, seq_width: usize) -> Architecture {
        let w = &self.stream_widths;
        Architecture {
            seq_width,
            hidden: self.lstm_hidden,
            personality: self.variant.uses_personality().then_some(w.personality),
            stimulus: self.variant.uses_stimulus().then_some(w.stimulus),
            environment: w.environment,
            fusion: w.fusion,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }
}

/// `w_c = N / (3 n_c)`.
pub fn class_weights(counts: [usize; N_CLASSES]) -> Result<[f64; N_CLASSES]> {
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass(c));
    }
    let total: usize = counts.iter().sum();
    Ok(counts.map(|n| total as f64 / (N_CLASSES as f64 * n as f64)))
}

pub fn class_counts<T>(examples: &[Example<T>]) -> [usize; N_CLASSES] {
    let mut c = [0; N_CLASSES];
    for e in examples {
        c[e.label] += 1;
    }
    c
}

/// Loss weights for a training split under `mode`.
pub fn training_weights<T: Scalar>(mode: ClassWeightsMode, train: &[Example<T>]) -> Result<[T; N_CLASSES]> {
    match mode {
        ClassWeightsMode::Uniform => Ok([T::one(); N_CLASSES]),
        ClassWeightsMode::Balanced => Ok(class_weights(class_counts(train))?.map(T::lit)),
    }
}

/// Joins feature and sequence rows on trial id and labels each trial with
/// the binned rating of `dim`. Output follows the feature-row order.
pub fn build_examples(features: &[FeatureRow], sequences: &[SequenceRow], dim: LabelDim) -> Result<Vec<Example<f64>>> {
    let index: HashMap<&str, &SequenceRow> = sequences.iter().map(|s| (s.trial_id.as_str(), s)).collect();
    features
        .iter()
        .map(|f| {
            let s = index
                .get(f.trial_id.as_str())
                .ok_or_else(|| Error::MissingTrial(f.trial_id.clone()))?;
            Ok(Example {
                trial_id: f.trial_id.clone(),
                participant_id: f.participant_id.clone(),
                steps: s.sequence.steps,
                seq: s.sequence.values.clone(),
                personality: f.features.big5_scaled,
                stimulus: f.features.stimulus_onehot,
                env: f.features.env,
                label: bin_label(f.rating(dim) as i64)?.index(),
            })
        })
        .collect()
}

/// Examples partitioned by split, scaled with parameters fitted on the
/// training part.
#[derive(Debug, Clone)]
pub struct PreparedSplits {
    pub train: Vec<Example<f64>>,
    pub validation: Vec<Example<f64>>,
    pub test: Vec<Example<f64>>,
    pub scaler: ExampleScaler,
    /// Inputs that were constant on the training split.
    pub zero_variance: Vec<String>,
}

pub fn prepare_splits(examples: Vec<Example<f64>>, assignment: &[Split], layout: &SequenceLayout) -> Result<PreparedSplits> {
    if examples.len() != assignment.len() {
        return Err(Error::LengthMismatch {
            left: examples.len(),
            right: assignment.len(),
        });
    }
    let mut parts: [Vec<Example<f64>>; 3] = Default::default();
    for (e, s) in examples.into_iter().zip(assignment) {
        parts[*s as usize].push(e);
    }
    let [mut train, mut validation, mut test] = parts;
    let scaler = ExampleScaler::fit(&train, layout)?;
    let zero_variance = scaler.zero_variance(layout);
    for z in &zero_variance {
        log::warn!("input {z} is constant on the training split; scaled to 0");
    }
    scaler.apply(&mut train);
    scaler.apply(&mut validation);
    scaler.apply(&mut test);
    Ok(PreparedSplits {
        train,
        validation,
        test,
        scaler,
        zero_variance,
    })
}

/// Converts examples to another precision.
pub fn cast_examples<T: Scalar>(examples: &[Example<f64>]) -> Vec<Example<T>> {
    examples
        .iter()
        .map(|e| Example {
            trial_id: e.trial_id.clone(),
            participant_id: e.participant_id.clone(),
            steps: e.steps,
            seq: e.seq.iter().map(|&v| T::lit(v)).collect(),
            personality: e.personality.map(T::lit),
            stimulus: e.stimulus.map(T::lit),
            env: e.env.map(T::lit),
            label: e.label,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_weight_examples() {
        assert_eq!(class_weights([10, 10, 10]).unwrap(), [1.0, 1.0, 1.0]);
        let w = class_weights([10, 20, 70]).unwrap();
        let expected = [100.0 / 30.0, 100.0 / 60.0, 100.0 / 210.0];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let w = class_weights([1, 1, 998]).unwrap();
        assert_eq!(w[0], w[1]);
        assert!(w[0] > 100.0 * w[2]);
        assert!(matches!(class_weights([3, 0, 1]), Err(Error::EmptyClass(1))));
    }

    #[test]
    fn weighted_counts_sum_to_total() {
        for counts in [[1, 2, 3], [7, 11, 400], [5, 5, 5]] {
            let w = class_weights(counts).unwrap();
            let s: f64 = w.iter().zip(counts).map(|(w, n)| w * n as f64).sum();
            let n: usize = counts.iter().sum();
            assert!((s - n as f64).abs() < 1e-9 * n as f64);
        }
    }

    #[test]
    fn config_round_trip_and_validation() {
        let c = ModelConfig::default();
        assert_eq!(ModelConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        let partial = ModelConfig::from_toml("learning_rate = 0.0002\nvariant = \"eye\"\n").unwrap();
        assert_eq!(partial.learning_rate, 2e-4);
        assert_eq!(partial.variant, InputVariant::Eye);
        assert_eq!(partial.patience, 10);
        assert!(ModelConfig::from_toml("dropout_rate = 1.0").is_err());
        assert!(ModelConfig::from_toml("patience = 0").is_err());
        assert!(ModelConfig::from_toml("learning_rate = -1.0").is_err());
    }

    #[test]
    fn architecture_follows_variant() {
        let mut c = ModelConfig::default();
        c.variant = InputVariant::Eye;
        let a = c.architecture(10);
        assert_eq!((a.personality, a.stimulus, a.environment), (None, None, 4));
        c.variant = InputVariant::EyePersonalityStimulus;
        let a = c.architecture(10);
        assert_eq!((a.personality, a.stimulus), (Some(8), Some(8)));
    }
}
