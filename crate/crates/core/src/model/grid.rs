//! Learning-rate × dropout grid search scored by validation macro F1.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_lines};
use crate::model::network::Network;
use crate::model::train::{train, TrainingLog};
use crate::model::{Example, ModelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub learning_rates: Vec<f64>,
    pub dropout_rates: Vec<f64>,
}

impl Grid {
    /// {1e-3, 1e-4, 1e-5} × {0.2, 0.3, 0.5}.
    pub fn paper() -> Self {
        Self {
            learning_rates: vec![1e-3, 1e-4, 1e-5],
            dropout_rates: vec![0.2, 0.3, 0.5],
        }
    }

    /// The paper grid plus the learning rates of the reported winners.
    pub fn extended() -> Self {
        let mut g = Self::paper();
        g.learning_rates.extend([2e-4, 3e-4, 3.5e-4, 4e-4, 7e-4]);
        g.learning_rates.sort_by(|a, b| b.total_cmp(a));
        g
    }

    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.learning_rates
            .iter()
            .flat_map(|&lr| self.dropout_rates.iter().map(move |&d| (lr, d)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub val_macro_f1: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best: ModelConfig,
    pub network: Network<f64>,
    pub log: TrainingLog,
    /// Every cell in grid order.
    pub leaderboard: Vec<GridEntry>,
}

/// Winner: highest validation macro F1, then lower learning rate, then
/// lower dropout.
pub fn select(entries: &[GridEntry]) -> Option<usize> {
    (0..entries.len()).min_by(|&a, &b| {
        let (x, y) = (&entries[a], &entries[b]);
        y.val_macro_f1
            .total_cmp(&x.val_macro_f1)
            .then(x.learning_rate.total_cmp(&y.learning_rate))
            .then(x.dropout_rate.total_cmp(&y.dropout_rate))
    })
}

/// Trains every cell (in parallel; each cell is an independent seeded run)
/// and keeps the winner's network.
pub fn grid_search(
    base: &ModelConfig,
    grid: &Grid,
    train_set: &[Example<f64>],
    validation: &[Example<f64>],
) -> Result<GridResult> {
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let runs: Vec<(ModelConfig, Network<f64>, TrainingLog)> = cells
        .par_iter()
        .map(|&(lr, d)| {
            let config = ModelConfig {
                learning_rate: lr,
                dropout_rate: d,
                ..base.clone()
            };
            let (net, log) = train(&config, train_set, validation)?;
            Ok((config, net, log))
        })
        .collect::<Result<_>>()?;
    let leaderboard: Vec<GridEntry> = runs
        .iter()
        .map(|(c, _, log)| GridEntry {
            learning_rate: c.learning_rate,
            dropout_rate: c.dropout_rate,
            val_macro_f1: log.best_val_macro_f1,
            best_epoch: log.best_epoch,
            epochs_run: log.epochs.len(),
        })
        .collect();
    let k = select(&leaderboard).ok_or(Error::EmptyGrid)?;
    let (best, network, log) = runs.into_iter().nth(k).ok_or(Error::EmptyGrid)?;
    Ok(GridResult {
        best,
        network,
        log,
        leaderboard,
    })
}

pub fn write_leaderboard(entries: &[GridEntry], path: &Path) -> Result<()> {
    use std::io::Write;
    write_lines(path, |w| {
        writeln!(w, "learning_rate,dropout_rate,val_macro_f1,best_epoch,epochs_run")?;
        for e in entries {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_f64(e.learning_rate),
                fmt_f64(e.dropout_rate),
                fmt_f64(e.val_macro_f1),
                e.best_epoch,
                e.epochs_run
            )?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InputVariant;

    fn entry(lr: f64, d: f64, f1: f64) -> GridEntry {
        GridEntry {
            learning_rate: lr,
            dropout_rate: d,
            val_macro_f1: f1,
            best_epoch: 1,
            epochs_run: 1,
        }
    }

    #[test]
    fn grids() {
        assert_eq!(Grid::paper().cells().len(), 9);
        let e = Grid::extended();
        assert_eq!(e.learning_rates.len(), 8);
        assert!(e.learning_rates.contains(&7e-4) && e.learning_rates.contains(&1e-5));
    }

    #[test]
    fn tie_rules() {
        let e = vec![entry(1e-3, 0.2, 0.5), entry(1e-4, 0.5, 0.5), entry(1e-4, 0.3, 0.5), entry(1e-5, 0.2, 0.4)];
        assert_eq!(select(&e), Some(2));
        let e = vec![entry(1e-3, 0.2, 0.6), entry(1e-4, 0.2, 0.5)];
        assert_eq!(select(&e), Some(0));
        assert_eq!(select(&[]), None);
    }

    #[test]
    fn singleton_and_empty_grids() {
        let tr = crate::model::train::tests::separable(30, 1);
        let va = crate::model::train::tests::separable(12, 2);
        let base = ModelConfig {
            lstm_hidden: 4,
            max_epochs: 3,
            variant: InputVariant::Eye,
            ..Default::default()
        };
        let g = Grid {
            learning_rates: vec![5e-3],
            dropout_rates: vec![0.3],
        };
        let r = grid_search(&base, &g, &tr, &va).unwrap();
        assert_eq!(r.leaderboard.len(), 1);
        assert_eq!((r.best.learning_rate, r.best.dropout_rate), (5e-3, 0.3));
        let empty = Grid {
            learning_rates: vec![],
            dropout_rates: vec![0.3],
        };
        assert!(matches!(grid_search(&base, &empty, &tr, &va), Err(Error::EmptyGrid)));
    }

    #[test]
    fn leaderboard_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("leaderboard.csv");
        write_leaderboard(&[entry(1e-3, 0.2, 0.5)], &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().starts_with("0.001,0.2,0.5"));
    }
}
