//! Participant-level correlations, trial-level mixed models, multiplicity
//! correction and rater agreement.

pub mod lme;
pub mod report;
pub mod special;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{bin_label, LabelClass, FEATURE_COLUMNS};
use crate::io::{Emotion, LabelDim, Trait};
use crate::scalar::Scalar;
use crate::table::FeatureRow;

pub use lme::{fit_lme, ols, LmeEvaluation, LmeFit, LmeProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult<T = f64> {
    pub r: T,
    pub n: usize,
    pub p: T,
}

/// Pearson correlation with a two-sided p-value from the t-transform of `r`
/// on `n - 2` degrees of freedom.
pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<CorrelationResult<T>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::TooFewObservations { needed: 3, found: n });
    }
    let nt = T::from_usize_lossy(n);
    let mx = x.iter().copied().sum::<T>() / nt;
    let my = y.iter().copied().sum::<T>() / nt;
    let (mut sxx, mut syy, mut sxy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxx += da * da;
        syy += db * db;
        sxy += da * db;
    }
    if !(sxx > T::zero() && syy > T::zero()) {
        return Err(Error::ConstantInput);
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).max(-T::one()).min(T::one());
    Ok(CorrelationResult {
        r,
        n,
        p: T::lit(correlation_p_value(r.to_f64_lossy(), n)),
    })
}

/// Two-sided p-value of a sample correlation `r` over `n` pairs.
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let one_minus = 1.0 - r * r;
    if one_minus <= 0.0 {
        return 0.0;
    }
    let t = r * (df / one_minus).sqrt();
    special::student_t_two_sided(t, df)
}

/// `min(1, p * m)` for each p-value.
pub fn bonferroni(p_values: &[f64], m: usize) -> Vec<f64> {
    p_values.iter().map(|&p| (p * m as f64).min(1.0)).collect()
}

/// Per-participant means in order of first appearance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantMeans {
    pub participant_ids: Vec<String>,
    pub values: Vec<f64>,
    /// Participants with no non-missing trial value.
    pub excluded: usize,
}

impl ParticipantMeans {
    pub fn get(&self, participant_id: &str) -> Option<f64> {
        self.participant_ids
            .iter()
            .position(|p| p == participant_id)
            .map(|i| self.values[i])
    }
}

/// Averages `metric` over each participant's trials, skipping missing values.
pub fn participant_aggregate<R>(
    rows: &[R],
    participant: impl Fn(&R) -> &str,
    metric: impl Fn(&R) -> Option<f64>,
) -> Result<ParticipantMeans> {
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut order: Vec<&str> = Vec::new();
    let mut sums: HashMap<&str, (f64, usize)> = HashMap::new();
    for row in rows {
        let pid = participant(row);
        let slot = sums.entry(pid).or_insert_with(|| {
            order.push(pid);
            (0.0, 0)
        });
        if let Some(v) = metric(row) {
            slot.0 += v;
            slot.1 += 1;
        }
    }
    let mut out = ParticipantMeans {
        participant_ids: Vec::with_capacity(order.len()),
        values: Vec::with_capacity(order.len()),
        excluded: 0,
    };
    for pid in order {
        let (sum, count) = sums[pid];
        if count == 0 {
            out.excluded += 1;
        } else {
            out.participant_ids.push(pid.to_string());
            out.values.push(sum / count as f64);
        }
    }
    Ok(out)
}

/// A per-trial quantity that can enter a correlation or a mixed model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "snake_case")]
pub enum Variable {
    Trait(Trait),
    /// Raw 1..=9 rating.
    Label(LabelDim),
    /// Rating bin index: 0 low, 1 medium, 2 high.
    BinnedLabel(LabelDim),
    /// Index into [`FEATURE_COLUMNS`].
    Feature(usize),
}

impl Variable {
    pub fn feature(name: &str) -> Result<Self> {
        FEATURE_COLUMNS
            .iter()
            .position(|c| *c == name)
            .map(Variable::Feature)
            .ok_or_else(|| Error::InvalidValue(format!("unknown feature column {name:?}")))
    }

    pub fn name(&self) -> String {
        match self {
            Variable::Trait(t) => t.name().to_string(),
            Variable::Label(d) => d.name().to_string(),
            Variable::BinnedLabel(d) => format!("{}_binned", d.name()),
            Variable::Feature(i) => FEATURE_COLUMNS[*i].to_string(),
        }
    }

    /// Value for one trial, `None` when the feature is flagged missing.
    /// Traits are read in their scaled form, which leaves correlations and
    /// test statistics unchanged.
    pub fn value(&self, row: &FeatureRow) -> Option<f64> {
        let f = &row.features;
        match *self {
            Variable::Trait(t) => Some(f.big5_scaled[t.index()]),
            Variable::Label(d) => Some(f64::from(row.labels.get(d))),
            Variable::BinnedLabel(d) => bin_label(i64::from(row.labels.get(d)))
                .ok()
                .map(|c| c.index() as f64),
            Variable::Feature(i) => {
                let missing = match i {
                    0..=5 => f.flags.no_fixations,
                    6..=9 => f.flags.no_pupil,
                    10..=13 => f.flags.no_saccades,
                    _ => false,
                };
                if missing {
                    None
                } else {
                    Some(f.to_vec()[i])
                }
            }
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Participant-level Pearson correlation of two variables, optionally over
/// the trials of one stimulus emotion only.
pub fn correlate(
    rows: &[FeatureRow],
    x: Variable,
    y: Variable,
    stimulus: Option<Emotion>,
) -> Result<CorrelationResult<f64>> {
    let kept: Vec<&FeatureRow> = rows
        .iter()
        .filter(|r| stimulus.is_none_or(|s| r.stimulus == s))
        .collect();
    fn pid<'a>(r: &'a &FeatureRow) -> &'a str {
        r.participant_id.as_str()
    }
    let mx = participant_aggregate(&kept, pid, |r| x.value(r))?;
    let my = participant_aggregate(&kept, pid, |r| y.value(r))?;
    let ys: HashMap<&str, f64> = my
        .participant_ids
        .iter()
        .map(String::as_str)
        .zip(my.values.iter().copied())
        .collect();
    let (mut xs, mut yv) = (Vec::new(), Vec::new());
    for (id, &v) in mx.participant_ids.iter().zip(&mx.values) {
        if let Some(&w) = ys.get(id.as_str()) {
            xs.push(v);
            yv.push(w);
        }
    }
    pearson(&xs, &yv)
}

/// Trait-by-label correlation restricted to one stimulus emotion (all trials
/// when `stimulus` is `None`).
pub fn stimulus_conditional_correlation(
    rows: &[FeatureRow],
    stimulus: Option<Emotion>,
    trait_: Trait,
    label: LabelDim,
) -> Result<CorrelationResult<f64>> {
    correlate(rows, Variable::Trait(trait_), Variable::Label(label), stimulus)
}

/// Random-intercept model `outcome ~ predictor + (1 | participant)` over the
/// trials where both variables are present.
pub fn fit_variables(rows: &[FeatureRow], predictor: Variable, outcome: Variable) -> Result<LmeFit<f64>> {
    let (mut g, mut x, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for r in rows {
        if let (Some(a), Some(b)) = (predictor.value(r), outcome.value(r)) {
            g.push(r.participant_id.as_str());
            x.push(a);
            y.push(b);
        }
    }
    fit_lme(&g, &x, &y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionAgreement {
    pub label: LabelDim,
    /// Percentage in [0, 100].
    pub agreement: f64,
    pub clips: usize,
    pub ratings: usize,
    /// Clips whose mode was decided by the tie rule.
    pub tied_clips: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    pub tie_rule: String,
    pub dimensions: Vec<DimensionAgreement>,
}

pub const TIE_RULE: &str = "modal bin per clip; ties resolved toward medium, then low, then high";

const TIE_PREFERENCE: [LabelClass; 3] = [LabelClass::Medium, LabelClass::Low, LabelClass::High];

/// Modal class and whether the tie rule had to decide it.
pub fn modal_class(counts: [usize; 3]) -> (LabelClass, bool) {
    let top = counts.iter().copied().max().unwrap_or(0);
    let tied = counts.iter().filter(|&&c| c == top).count() > 1;
    let class = TIE_PREFERENCE
        .into_iter()
        .find(|c| counts[c.index()] == top)
        .unwrap_or(LabelClass::Medium);
    (class, tied)
}

/// Percentage of (rater, clip) bins equal to the clip's modal bin.
pub fn agreement<'a>(
    label: LabelDim,
    ratings: impl IntoIterator<Item = (&'a str, u8)>,
) -> Result<DimensionAgreement> {
    let mut clips: BTreeMap<&str, [usize; 3]> = BTreeMap::new();
    for (clip, rating) in ratings {
        let class = bin_label(i64::from(rating))?;
        clips.entry(clip).or_default()[class.index()] += 1;
    }
    if clips.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (mut agree, mut total, mut tied_clips) = (0usize, 0usize, 0usize);
    for (clip, counts) in &clips {
        let n: usize = counts.iter().sum();
        if n < 2 {
            return Err(Error::InsufficientRaters((*clip).to_string()));
        }
        let (mode, tied) = modal_class(*counts);
        agree += counts[mode.index()];
        total += n;
        tied_clips += usize::from(tied);
    }
    Ok(DimensionAgreement {
        label,
        agreement: 100.0 * agree as f64 / total as f64,
        clips: clips.len(),
        ratings: total,
        tied_clips,
    })
}

/// Agreement on all four rating dimensions of a feature table.
pub fn agreement_table(rows: &[FeatureRow]) -> Result<AgreementResult> {
    let dimensions = LabelDim::ALL
        .into_iter()
        .map(|d| agreement(d, rows.iter().map(|r| (r.clip_id.as_str(), r.labels.get(d)))))
        .collect::<Result<Vec<_>>>()?;
    Ok(AgreementResult {
        tie_rule: TIE_RULE.to_string(),
        dimensions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn identity_correlation() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 1.5).collect();
        let c = pearson(&x, &x).unwrap();
        assert_eq!(c.r, 1.0);
        assert_eq!(c.p, 0.0);
        assert_eq!(c.n, 10);
    }

    #[test]
    fn hand_dataset() {
        // direct covariance formula: cov = 4/4, var x = var y = 5/4
        let c = pearson::<f64>(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((c.r - 0.8).abs() < 1e-15);
    }

    #[test]
    fn printed_p_values_at_n73() {
        for (r, p) in [(0.26, 0.027), (0.33, 0.005), (-0.29, 0.013)] {
            let got = correlation_p_value(r, 73);
            assert!((got - p).abs() <= 0.002, "r {r}: {got}");
        }
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::ConstantInput)));
        assert!(matches!(
            pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { left: 3, right: 2 })
        ));
        assert!(matches!(
            pearson(&[1.0, 2.0], &[1.0, 2.0]),
            Err(Error::TooFewObservations { .. })
        ));
    }

    #[test]
    fn bonferroni_examples() {
        assert!((bonferroni(&[0.01], 5)[0] - 0.05).abs() < 1e-15);
        assert_eq!(bonferroni(&[0.4], 5), vec![1.0]);
        assert_eq!(bonferroni(&[0.3, 0.02], 1), vec![0.3, 0.02]);
    }

    #[test]
    fn aggregate_examples() {
        let rows = [("a", Some(2.0)), ("b", Some(7.0)), ("a", Some(4.0)), ("c", None)];
        let m = participant_aggregate(&rows, |r| r.0, |r| r.1).unwrap();
        assert_eq!(m.participant_ids, vec!["a", "b"]);
        assert_eq!(m.values, vec![3.0, 7.0]);
        assert_eq!(m.excluded, 1);
        let empty: [(&str, Option<f64>); 0] = [];
        assert!(matches!(
            participant_aggregate(&empty, |r| r.0, |r| r.1),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn agreement_examples() {
        let same = [("c1", 2u8), ("c1", 3), ("c2", 8), ("c2", 9)];
        assert_eq!(agreement(LabelDim::FeltArousal, same).unwrap().agreement, 100.0);
        let split = [("c1", 2u8), ("c1", 8), ("c2", 5), ("c2", 1), ("c3", 9), ("c3", 5)];
        let a = agreement(LabelDim::FeltArousal, split).unwrap();
        assert_eq!(a.agreement, 50.0);
        assert_eq!(a.tied_clips, 3);
        assert!(matches!(
            agreement(LabelDim::FeltArousal, [("c1", 2u8), ("c2", 3), ("c2", 4)]),
            Err(Error::InsufficientRaters(c)) if c == "c1"
        ));
    }

    #[test]
    fn tie_rule_prefers_medium_then_low() {
        assert_eq!(modal_class([2, 2, 2]), (LabelClass::Medium, true));
        assert_eq!(modal_class([3, 1, 3]), (LabelClass::Low, true));
        assert_eq!(modal_class([0, 1, 4]), (LabelClass::High, false));
    }

    #[test]
    fn uniform_bins_match_expected_max_share() {
        // Expected modal share of 5 raters over 3 equiprobable bins, by
        // enumerating all 3^5 rating patterns.
        let mut expected = 0.0;
        for code in 0..243usize {
            let mut counts = [0usize; 3];
            let mut c = code;
            for _ in 0..5 {
                counts[c % 3] += 1;
                c /= 3;
            }
            expected += *counts.iter().max().unwrap() as f64 / 5.0;
        }
        expected *= 100.0 / 243.0;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let reps = [2u8, 5, 8];
        let mut ratings = Vec::new();
        let names: Vec<String> = (0..20000).map(|i| format!("c{i}")).collect();
        for name in &names {
            for _ in 0..5 {
                ratings.push((name.as_str(), reps[rng.random_range(0..3)]));
            }
        }
        let a = agreement(LabelDim::PerceivedValence, ratings).unwrap();
        assert!((a.agreement - expected).abs() < 0.5, "{} vs {expected}", a.agreement);
    }

    proptest! {
        #[test]
        fn pearson_symmetry_and_affine_invariance(
            xs in prop::collection::vec(-100.0f64..100.0, 5..40),
            noise in prop::collection::vec(-100.0f64..100.0, 40),
            a in 0.1f64..10.0, b in -50.0f64..50.0,
        ) {
            let ys: Vec<f64> = xs.iter().zip(&noise).map(|(x, e)| 0.3 * x + e).collect();
            let Ok(c) = pearson(&xs, &ys) else { return Ok(()); };
            let back = pearson(&ys, &xs).unwrap();
            prop_assert!((c.r - back.r).abs() < 1e-12);
            let scaled: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            prop_assert!((pearson(&scaled, &ys).unwrap().r - c.r).abs() < 1e-9);
            let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
            prop_assert!((pearson(&neg, &ys).unwrap().r + c.r).abs() < 1e-12);
            prop_assert!(c.r.abs() <= 1.0 && (0.0..=1.0).contains(&c.p));
        }

        #[test]
        fn bonferroni_is_monotone(p1 in 0.0f64..1.0, p2 in 0.0f64..1.0, m in 1usize..50) {
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            let adj = bonferroni(&[lo, hi], m);
            prop_assert!(adj[0] <= adj[1]);
        }
    }
}
