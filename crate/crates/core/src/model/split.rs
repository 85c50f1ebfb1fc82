//! Train/validation/test assignment.
//!
//! Counts come from the largest-remainder rule: every part gets
//! `floor(n * f_k)` and the leftover trials go, one each, to the parts with
//! the largest fractional remainders, ties resolved train, validation, test.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{write_lines, CsvTable, LabelDim};
use crate::model::N_CLASSES;

pub const SPLIT_FILE: &str = "split.csv";
pub const DEFAULT_FRACTIONS: [f64; 3] = [0.64, 0.16, 0.20];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidValue(format!("unknown split {s:?}")))
    }
}

fn check_fractions(f: [f64; 3]) -> Result<()> {
    if f.iter().any(|v| !(*v >= 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions {f:?} must be non-negative and sum to 1")));
    }
    Ok(())
}

/// Part sizes for `n` items.
pub fn partition_counts(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let exact = fractions.map(|f| n as f64 * f);
    // guard against 64.00000000001-style products
    let mut counts = exact.map(|e| (e + 1e-9).floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    let rem = |k: usize| exact[k] - counts[k] as f64;
    let rems = [rem(0), rem(1), rem(2)];
    order.sort_by(|&a, &b| rems[b].total_cmp(&rems[a]).then(a.cmp(&b)));
    for &k in order.iter().take(n.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

fn assign(indices: &mut [usize], fractions: [f64; 3], rng: &mut ChaCha8Rng, out: &mut [Split]) {
    indices.shuffle(rng);
    let counts = partition_counts(indices.len(), fractions);
    let mut it = indices.iter();
    for (split, &c) in Split::ALL.iter().zip(&counts) {
        for &i in it.by_ref().take(c) {
            out[i] = *split;
        }
    }
}

/// Stratified assignment for class indices `labels`. Each class is shuffled
/// with its own seeded stream and partitioned independently.
pub fn stratified_split(labels: &[usize], fractions: [f64; 3], seed: u64) -> Result<Vec<Split>> {
    check_fractions(fractions)?;
    let mut out = vec![Split::Train; labels.len()];
    for c in 0..N_CLASSES {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.is_empty() {
            return Err(Error::EmptyClass(c));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        assign(&mut idx, fractions, &mut rng, &mut out);
    }
    Ok(out)
}

/// Participant-disjoint assignment: participants, not trials, are shuffled
/// and partitioned, so no participant contributes to two parts.
pub fn participant_split(participant_ids: &[&str], fractions: [f64; 3], seed: u64) -> Result<Vec<Split>> {
    check_fractions(fractions)?;
    let mut ids: Vec<&str> = participant_ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut idx: Vec<usize> = (0..ids.len()).collect();
    let mut per_participant = vec![Split::Train; ids.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    assign(&mut idx, fractions, &mut rng, &mut per_participant);
    let lookup: HashMap<&str, Split> = ids.into_iter().zip(per_participant).collect();
    Ok(participant_ids.iter().map(|p| lookup[p]).collect())
}

/// Indices of `assignment` that fall in `split`.
pub fn indices(assignment: &[Split], split: Split) -> Vec<usize> {
    (0..assignment.len()).filter(|&i| assignment[i] == split).collect()
}

/// Split of every trial for each label dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitTable {
    pub trial_ids: Vec<String>,
    pub by_label: Vec<(LabelDim, Vec<Split>)>,
}

impl SplitTable {
    pub fn get(&self, dim: LabelDim) -> Option<&[Split]> {
        self.by_label.iter().find(|(d, _)| *d == dim).map(|(_, s)| s.as_slice())
    }

    /// `trial_id` to split for one label.
    pub fn lookup(&self, dim: LabelDim) -> Option<HashMap<&str, Split>> {
        let s = self.get(dim)?;
        Some(self.trial_ids.iter().map(String::as_str).zip(s.iter().copied()).collect())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        write_lines(path, |w| {
            write!(w, "trial_id")?;
            for (d, _) in &self.by_label {
                write!(w, ",{}", d.name())?;
            }
            writeln!(w)?;
            for (i, id) in self.trial_ids.iter().enumerate() {
                write!(w, "{id}")?;
                for (_, s) in &self.by_label {
                    write!(w, ",{}", s[i])?;
                }
                writeln!(w)?;
            }
            Ok(())
        })
    }

    /// Reads a table holding a column for every label dimension.
    pub fn read(path: &Path) -> Result<Self> {
        let mut required = vec!["trial_id"];
        required.extend(LabelDim::ALL.iter().map(|d| d.name()));
        let table = CsvTable::read(path, &required)?;
        let mut out = SplitTable {
            trial_ids: Vec::with_capacity(table.rows.len()),
            by_label: LabelDim::ALL.iter().map(|&d| (d, Vec::with_capacity(table.rows.len()))).collect(),
        };
        for (line, row) in &table.rows {
            out.trial_ids.push(table.str(row, "trial_id").to_string());
            for (d, v) in out.by_label.iter_mut() {
                v.push(table.parse(*line, row, d.name())?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(s: &[Split]) -> [usize; 3] {
        let mut c = [0; 3];
        for x in s {
            c[*x as usize] += 1;
        }
        c
    }

    #[test]
    fn exact_on_hundreds() {
        let labels: Vec<usize> = (0..300).map(|i| i % 3).collect();
        let s = stratified_split(&labels, DEFAULT_FRACTIONS, 1).unwrap();
        for c in 0..3 {
            let sub: Vec<Split> = (0..300).filter(|&i| labels[i] == c).map(|i| s[i]).collect();
            assert_eq!(counts(&sub), [64, 16, 20]);
        }
    }

    #[test]
    fn remainder_rule_for_five() {
        // 3.2 / 0.8 / 1.0: floors 3, 0, 1; the leftover goes to the largest
        // remainder, validation
        assert_eq!(partition_counts(5, DEFAULT_FRACTIONS), [3, 1, 1]);
        // 4 items: 2.56 / 0.64 / 0.8 -> floors 2,0,0; remainders .56,.64,.8
        assert_eq!(partition_counts(4, DEFAULT_FRACTIONS), [2, 1, 1]);
        // equal remainders favour train
        assert_eq!(partition_counts(1, [0.5, 0.5, 0.0]), [1, 0, 0]);
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        let labels: Vec<usize> = (0..90).map(|i| (i * 7) % 3).collect();
        let a = stratified_split(&labels, DEFAULT_FRACTIONS, 5).unwrap();
        assert_eq!(a, stratified_split(&labels, DEFAULT_FRACTIONS, 5).unwrap());
        assert_ne!(a, stratified_split(&labels, DEFAULT_FRACTIONS, 6).unwrap());
    }

    #[test]
    fn empty_class_rejected() {
        assert!(matches!(
            stratified_split(&[0, 0, 2], DEFAULT_FRACTIONS, 0),
            Err(Error::EmptyClass(1))
        ));
        assert!(stratified_split(&[0, 1, 2], [0.5, 0.5, 0.5], 0).is_err());
    }

    #[test]
    fn participants_are_disjoint() {
        let ids: Vec<String> = (0..200).map(|i| format!("p{:02}", i % 25)).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let s = participant_split(&refs, DEFAULT_FRACTIONS, 3).unwrap();
        let mut seen: HashMap<&str, Split> = HashMap::new();
        for (p, x) in refs.iter().zip(&s) {
            assert_eq!(*seen.entry(p).or_insert(*x), *x);
        }
        let mut per = [0; 3];
        for x in seen.values() {
            per[*x as usize] += 1;
        }
        assert_eq!(per, [16, 4, 5]);
    }

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(SPLIT_FILE);
        let t = SplitTable {
            trial_ids: vec!["a".into(), "b".into()],
            by_label: LabelDim::ALL
                .iter()
                .enumerate()
                .map(|(k, &d)| (d, vec![Split::ALL[k % 3], Split::ALL[(k + 1) % 3]]))
                .collect(),
        };
        t.write(&path).unwrap();
        assert_eq!(SplitTable::read(&path).unwrap(), t);
    }

    proptest! {
        #[test]
        fn each_class_within_one_of_target(sizes in prop::collection::vec(1usize..60, 3), seed in 0u64..1000) {
            let labels: Vec<usize> = sizes.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
            let s = stratified_split(&labels, DEFAULT_FRACTIONS, seed).unwrap();
            for (c, &n) in sizes.iter().enumerate() {
                let sub: Vec<Split> = (0..labels.len()).filter(|&i| labels[i] == c).map(|i| s[i]).collect();
                let got = counts(&sub);
                prop_assert_eq!(got.iter().sum::<usize>(), n);
                for k in 0..3 {
                    let target = n as f64 * DEFAULT_FRACTIONS[k];
                    prop_assert!((got[k] as f64 - target).abs() < 1.0 + 1e-9);
                }
            }
        }
    }
}
