//! Multi-seed synthetic experiments shared by the examples, the CLI and the
//! acceptance suite.

use std::fmt;

use rayon::prelude::*;

use crate::error::Result;
use crate::evaluation::ranking_metrics;
use crate::graph::{link_prediction_splits, split_nodes, DataSplits, SplitRatios};
use crate::synthetic::{planted_interactions, two_block, BlockConfig, PlantedConfig};
use crate::training::{LossMode, Part, Session, TrainConfig};

/// FI-GCN and its plain-GCN twin on the planted-interaction graph.
///
/// Both models share every setting except the factorizer and attention.
/// Early stopping is effectively off (patience equals the epoch budget) and
/// the best validation epoch is restored, since the interaction branch
/// starts tiny and needs many epochs before it outpaces the plain model.
pub fn planted_configs(seed: u64) -> Result<(TrainConfig, TrainConfig)> {
    let base = TrainConfig::default();
    let fi = TrainConfig {
        seed,
        patience: base.max_epochs,
        node_split: SplitRatios::new(0.3, 0.2, 0.5)?,
        ..base
    };
    let plain = TrainConfig {
        interactions: false,
        attention: false,
        ..fi.clone()
    };
    Ok((fi, plain))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedRun {
    pub seed: u64,
    pub fi_accuracy: f64,
    pub plain_accuracy: f64,
    pub fi_best_epoch: usize,
    pub plain_best_epoch: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedReport {
    pub runs: Vec<PlantedRun>,
}

impl PlantedReport {
    /// Mean test-accuracy gain of FI-GCN over GCN, in accuracy points.
    pub fn mean_gain_points(&self) -> f64 {
        let n = self.runs.len().max(1) as f64;
        100.0 * self.runs.iter().map(|r| r.fi_accuracy - r.plain_accuracy).sum::<f64>() / n
    }
}

impl fmt::Display for PlantedReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed  fi_gcn_acc  gcn_acc  fi_best  gcn_best")?;
        for r in &self.runs {
            writeln!(
                f,
                "{:>4}  {:>10.4}  {:>7.4}  {:>7}  {:>8}",
                r.seed, r.fi_accuracy, r.plain_accuracy, r.fi_best_epoch, r.plain_best_epoch
            )?;
        }
        write!(f, "mean gain: {:.2} points", self.mean_gain_points())
    }
}

fn planted_run(planted: &PlantedConfig, seed: u64) -> Result<PlantedRun> {
    let g = planted_interactions(planted, seed)?;
    let (fi, plain) = planted_configs(seed)?;
    let splits = DataSplits::node_classification(split_nodes(&g, fi.node_split, seed)?);
    let mut out = [(0.0, 0usize); 2];
    for (slot, config) in [&fi, &plain].into_iter().enumerate() {
        let session = Session::new(&g, &splits, config)?;
        let outcome = session.train()?;
        out[slot] = (session.evaluate(&outcome.params, Part::Test)?.first, outcome.best_epoch);
    }
    Ok(PlantedRun {
        seed,
        fi_accuracy: out[0].0,
        plain_accuracy: out[1].0,
        fi_best_epoch: out[0].1,
        plain_best_epoch: out[1].1,
    })
}

/// Seeds run in parallel; each builds its own graph from its seed.
pub fn planted_benchmark(planted: &PlantedConfig, seeds: &[u64]) -> Result<PlantedReport> {
    let runs = seeds
        .par_iter()
        .map(|&s| planted_run(planted, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(PlantedReport { runs })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockRun {
    pub seed: u64,
    pub test_auc: f64,
    /// AUC of scoring a pair 1 when both ends share a block, else 0.
    pub oracle_auc: f64,
    pub first_loss: f64,
    pub last_loss: f64,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockReport {
    pub runs: Vec<BlockRun>,
}

impl BlockReport {
    pub fn mean_test_auc(&self) -> f64 {
        self.runs.iter().map(|r| r.test_auc).sum::<f64>() / self.runs.len().max(1) as f64
    }

    pub fn mean_oracle_auc(&self) -> f64 {
        self.runs.iter().map(|r| r.oracle_auc).sum::<f64>() / self.runs.len().max(1) as f64
    }
}

impl fmt::Display for BlockReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed  test_auc  oracle_auc  loss_first  loss_last  epochs")?;
        for r in &self.runs {
            writeln!(
                f,
                "{:>4}  {:>8.4}  {:>10.4}  {:>10.3}  {:>9.3}  {:>6}",
                r.seed, r.test_auc, r.oracle_auc, r.first_loss, r.last_loss, r.epochs
            )?;
        }
        write!(
            f,
            "mean test auc {:.4}, mean oracle auc {:.4}",
            self.mean_test_auc(),
            self.mean_oracle_auc()
        )
    }
}

/// Unsupervised FI-GCN for the full epoch budget on a two-block graph.
pub fn block_config(seed: u64) -> TrainConfig {
    let base = TrainConfig::default();
    TrainConfig {
        seed,
        mode: LossMode::Unsup,
        patience: base.max_epochs,
        ..base
    }
}

fn block_run(blocks: &BlockConfig, seed: u64) -> Result<BlockRun> {
    let g = two_block(blocks, seed)?;
    let config = block_config(seed);
    let splits = link_prediction_splits(&g, config.edge_split, seed)?;
    let session = Session::new(&g, &splits, &config)?;
    let outcome = session.train()?;
    let test_auc = session.evaluate(&outcome.params, Part::Test)?.first;

    let labels = g.labels().expect("two_block sets labels");
    let (pos, neg) = (
        splits.positives.as_ref().expect("link split"),
        splits.negatives.as_ref().expect("link split"),
    );
    let mut scores = Vec::new();
    let mut flags = Vec::new();
    for (edges, flag) in [(&pos.test, true), (&neg.test, false)] {
        for &(i, j) in edges {
            scores.push(if labels.get(i) == labels.get(j) { 1.0 } else { 0.0 });
            flags.push(flag);
        }
    }
    let oracle_auc = ranking_metrics(&scores, &flags)?.0;
    Ok(BlockRun {
        seed,
        test_auc,
        oracle_auc,
        first_loss: outcome.history.first().map_or(f64::NAN, |r| r.loss),
        last_loss: outcome.history.last().map_or(f64::NAN, |r| r.loss),
        epochs: outcome.history.len(),
    })
}

pub fn block_link_prediction(blocks: &BlockConfig, seeds: &[u64]) -> Result<BlockReport> {
    let runs = seeds
        .par_iter()
        .map(|&s| block_run(blocks, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockReport { runs })
}
