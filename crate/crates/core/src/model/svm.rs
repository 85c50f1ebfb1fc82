//! Linear one-vs-rest SVM baselines trained by projected subgradient descent
//! on the class-weighted, L2-regularised hinge loss.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::metrics::{evaluate, MetricsReport};
use crate::model::network::argmax;
use crate::model::{training_weights, Example, ModelConfig, N_CLASSES, N_STIMULUS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvmVariant {
    /// Stimulus one-hot, 6 inputs.
    Stimulus,
    /// Stimulus one-hot and scaled personality, 11 inputs.
    StimulusPersonality,
}

impl SvmVariant {
    pub const ALL: [SvmVariant; 2] = [SvmVariant::Stimulus, SvmVariant::StimulusPersonality];

    pub fn name(self) -> &'static str {
        match self {
            SvmVariant::Stimulus => "stimulus",
            SvmVariant::StimulusPersonality => "stimulus_personality",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            SvmVariant::Stimulus => "SVM with stimulus emotion",
            SvmVariant::StimulusPersonality => "SVM with stimulus emotion and personality",
        }
    }

    pub fn dims(self) -> usize {
        match self {
            SvmVariant::Stimulus => 6,
            SvmVariant::StimulusPersonality => 11,
        }
    }

    /// Raw inputs, without the bias column.
    pub fn raw_inputs(self, e: &Example<f64>) -> Vec<f64> {
        let mut x = e.stimulus.to_vec();
        if self == SvmVariant::StimulusPersonality {
            x.extend_from_slice(&e.personality);
        }
        x
    }
}

impl fmt::Display for SvmVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SvmVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown SVM variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub variant: SvmVariant,
    /// One weight vector per class, bias last.
    pub weights: Vec<Vec<f64>>,
    /// Mean and population sd of each personality input on the training
    /// split; empty for the stimulus-only variant.
    pub personality_scale: Vec<(f64, f64)>,
}

impl LinearSvm {
    /// Pegasos updates with step `1 / (lambda t)` over `epochs` seeded
    /// passes; each hinge violation is scaled by the weight of the example's
    /// true class.
    pub fn fit(
        train: &[Example<f64>],
        variant: SvmVariant,
        lambda: f64,
        epochs: usize,
        class_weights: [f64; N_CLASSES],
        seed: u64,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptySplit);
        }
        if !(lambda > 0.0) {
            return Err(Error::Config("SVM lambda must be positive".into()));
        }
        let personality_scale = if variant == SvmVariant::StimulusPersonality {
            (0..5)
                .map(|k| {
                    let n = train.len() as f64;
                    let m = train.iter().map(|e| e.personality[k]).sum::<f64>() / n;
                    let var = train.iter().map(|e| (e.personality[k] - m).powi(2)).sum::<f64>() / n;
                    (m, var.sqrt())
                })
                .collect()
        } else {
            Vec::new()
        };
        let mut svm = Self {
            variant,
            weights: Vec::new(),
            personality_scale,
        };
        let xs: Vec<Vec<f64>> = train.iter().map(|e| svm.inputs(e)).collect();
        let d = variant.dims() + 1;
        let max_w = class_weights.iter().copied().fold(0.0, f64::max);
        let radius = (max_w / lambda).sqrt();
        let mut weights = Vec::with_capacity(N_CLASSES);
        for c in 0..N_CLASSES {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let mut order: Vec<usize> = (0..train.len()).collect();
            let mut w = vec![0.0; d];
            let mut t = 0usize;
            for _ in 0..epochs {
                order.shuffle(&mut rng);
                for &i in &order {
                    t += 1;
                    let eta = 1.0 / (lambda * t as f64);
                    let y = if train[i].label == c { 1.0 } else { -1.0 };
                    let margin = y * dot(&w, &xs[i]);
                    let shrink = 1.0 - eta * lambda;
                    for v in &mut w {
                        *v *= shrink;
                    }
                    if margin < 1.0 {
                        let s = eta * class_weights[train[i].label] * y;
                        for (v, x) in w.iter_mut().zip(&xs[i]) {
                            *v += s * x;
                        }
                    }
                    let norm = dot(&w, &w).sqrt();
                    if norm > radius {
                        for v in &mut w {
                            *v *= radius / norm;
                        }
                    }
                }
            }
            weights.push(w);
        }
        svm.weights = weights;
        Ok(svm)
    }

    /// Stimulus one-hot as is, personality z-scored (0 for a constant
    /// trait), then a trailing constant 1 that carries the bias.
    pub fn inputs(&self, e: &Example<f64>) -> Vec<f64> {
        let mut x = self.variant.raw_inputs(e);
        for (k, &(m, sd)) in self.personality_scale.iter().enumerate() {
            let v = &mut x[N_STIMULUS + k];
            *v = if sd > 0.0 { (*v - m) / sd } else { 0.0 };
        }
        x.push(1.0);
        x
    }

    pub fn margins(&self, e: &Example<f64>) -> [f64; N_CLASSES] {
        let x = self.inputs(e);
        std::array::from_fn(|c| dot(&self.weights[c], &x))
    }

    pub fn predict(&self, e: &Example<f64>) -> usize {
        argmax(&self.margins(e))
    }

    pub fn evaluate(&self, examples: &[Example<f64>]) -> Result<MetricsReport> {
        let pred: Vec<usize> = examples.iter().map(|e| self.predict(e)).collect();
        let truth: Vec<usize> = examples.iter().map(|e| e.label).collect();
        evaluate(&truth, &pred)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits on `train` with the config's regularisation, weighting and seed, and
/// scores on `test`.
pub fn svm_baseline(
    config: &ModelConfig,
    variant: SvmVariant,
    train: &[Example<f64>],
    test: &[Example<f64>],
) -> Result<(LinearSvm, MetricsReport)> {
    let w = training_weights(config.class_weights_mode, train)?;
    let svm = LinearSvm::fit(train, variant, config.svm_lambda, config.svm_epochs, w, config.seed)?;
    let report = svm.evaluate(test)?;
    Ok((svm, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::Emotion;
    use rand::Rng;

    fn example(stimulus: usize, personality: [f64; 5], label: usize) -> Example<f64> {
        let mut s = [0.0; N_STIMULUS];
        s[stimulus] = 1.0;
        Example {
            trial_id: String::new(),
            participant_id: String::new(),
            steps: 1,
            seq: vec![0.0],
            personality,
            stimulus: s,
            env: [0.0; 3],
            label,
        }
    }

    #[test]
    fn deterministic_mapping_is_learned_exactly() {
        let map = |s: usize| [0, 0, 1, 2, 1, 0][s];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<Example<f64>> = (0..300)
            .map(|_| {
                let s = rng.random_range(0..Emotion::ALL.len());
                example(s, std::array::from_fn(|_| rng.random()), map(s))
            })
            .collect();
        let c = ModelConfig::default();
        for v in SvmVariant::ALL {
            let (_, m) = svm_baseline(&c, v, &data[..200], &data[200..]).unwrap();
            assert_eq!(m.macro_f1, 1.0, "{v}");
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let data: Vec<Example<f64>> = (0..30).map(|i| example(i % 6, [0.1 * (i % 4) as f64; 5], i % 3)).collect();
        let a = LinearSvm::fit(&data, SvmVariant::StimulusPersonality, 1e-3, 10, [1.0; 3], 4).unwrap();
        let b = LinearSvm::fit(&data, SvmVariant::StimulusPersonality, 1e-3, 10, [1.0; 3], 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.weights[0].len(), 12);
    }

    #[test]
    fn personality_helps_when_it_drives_labels() {
        // within a stimulus, the label depends on the first trait
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<Example<f64>> = (0..600)
            .map(|_| {
                let s = rng.random_range(0..6);
                let p: [f64; 5] = std::array::from_fn(|_| rng.random());
                let label = if p[0] < 0.33 { 0 } else if p[0] < 0.66 { 1 } else { 2 };
                example(s, p, label)
            })
            .collect();
        let c = ModelConfig::default();
        let (_, only) = svm_baseline(&c, SvmVariant::Stimulus, &data[..400], &data[400..]).unwrap();
        let (_, both) = svm_baseline(&c, SvmVariant::StimulusPersonality, &data[..400], &data[400..]).unwrap();
        assert!(both.macro_f1 > only.macro_f1 + 0.2, "{} vs {}", both.macro_f1, only.macro_f1);
    }

    #[test]
    fn variant_names_parse() {
        for v in SvmVariant::ALL {
            assert_eq!(v.name().parse::<SvmVariant>().unwrap(), v);
        }
        assert!("x".parse::<SvmVariant>().is_err());
    }
}
