//! Losses, reverse-mode gradients, Adam, the training loop, checkpoints and
//! the finite-difference harness.

mod adam;
mod checkpoint;
mod config;
mod gradcheck;
mod loss;
mod model;

use std::fmt::Write as _;

use log::{debug, info};
use ndarray::Array2;
use rand::Rng;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use config::{parse_key_values, LossMode, TrainConfig};
pub use gradcheck::{
    check_gradients, finite_difference_check, GradCheckConfig, GradCheckReport, GroupError, GRADCHECK_EPS,
    GRADCHECK_THRESHOLD,
};
pub use loss::{semi_loss, semi_loss_grad, sigmoid, unsup_loss, unsup_loss_grad, LossGrad, LOG_FLOOR};
pub use model::{ForwardPass, ModelContext, ModelOptions, ModelParams};

use crate::aggregator::Mode;
use crate::attention::write_attention_lines;
use crate::error::{Error, Result};
use crate::evaluation::{classify_metrics, predict_classes, ranking_metrics, score_edge, Metrics};
use crate::graph::{
    link_prediction_splits, sample_negative_edges_with, split_nodes, DataSplits, Edge, Labels, SparseGraph,
};
use crate::rng::{rng, step_rng, Stream};

/// What one gradient evaluation is computed against.
#[derive(Clone, Copy, Debug)]
pub enum Objective<'a> {
    Semi {
        nodes: &'a [usize],
        labels: &'a Labels,
    },
    Unsup {
        positives: &'a [Edge],
        negatives: &'a [Edge],
    },
}

/// Loss and exact gradients of every parameter. `rng` fixes the dropout masks.
pub fn backward<R: Rng + ?Sized>(
    ctx: &ModelContext,
    params: &ModelParams,
    objective: Objective<'_>,
    rng: &mut R,
) -> Result<(f64, ModelParams)> {
    let pass = ctx.forward(params, Mode::Train, rng)?;
    let lg = match objective {
        Objective::Semi { nodes, labels } => {
            let head = params
                .head
                .as_ref()
                .ok_or_else(|| Error::Config("semi-supervised loss needs a classifier head".into()))?;
            semi_loss_grad(&pass.z, head, nodes, labels)?
        }
        Objective::Unsup { positives, negatives } => unsup_loss_grad(&pass.z, positives, negatives)?,
    };
    let mut grads = ctx.backward(params, &pass, &lg.d_z)?;
    if let (Some(g), Some(d)) = (&mut grads.head, lg.d_head) {
        *g = d;
    }
    Ok((lg.loss, grads))
}

/// Which part of a split to score.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Train,
    Val,
    Test,
}

impl Part {
    fn pick<'t, T: ?Sized>(self, train: &'t T, val: &'t T, test: &'t T) -> &'t T {
        match self {
            Part::Train => train,
            Part::Val => val,
            Part::Test => test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_metric: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation metric.
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val: f64,
}

/// `epoch loss val_metric` lines.
pub fn format_history(history: &[EpochRecord]) -> String {
    let mut out = String::new();
    for r in history {
        let _ = writeln!(out, "{} {:.10e} {:.10e}", r.epoch, r.loss, r.val_metric);
    }
    out
}

/// A graph, its splits and a config, prepared for training and evaluation.
///
/// For link prediction the message-passing topology is the training edges
/// only; validation and test edges stay hidden.
pub struct Session<'a> {
    config: TrainConfig,
    graph: &'a SparseGraph,
    splits: &'a DataSplits,
    ctx: ModelContext,
    train_graph: Option<SparseGraph>,
}

impl<'a> Session<'a> {
    pub fn new(graph: &'a SparseGraph, splits: &'a DataSplits, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let (ctx, train_graph) = match config.mode {
            LossMode::Semi => {
                if graph.labels().is_none() {
                    return Err(Error::Config("semi-supervised mode needs labels".into()));
                }
                if splits.nodes.is_none() {
                    return Err(Error::Config("semi-supervised mode needs a node split".into()));
                }
                (ModelContext::from_config(graph, config), None)
            }
            LossMode::Unsup => {
                let (Some(pos), Some(_)) = (&splits.positives, &splits.negatives) else {
                    return Err(Error::Config(
                        "link prediction needs positive and negative edge splits".into(),
                    ));
                };
                let train_graph = graph.with_edges(&pos.train)?;
                (ModelContext::from_config(&train_graph, config), Some(train_graph))
            }
        };
        Ok(Session {
            config: config.clone(),
            graph,
            splits,
            ctx,
            train_graph,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn context(&self) -> &ModelContext {
        &self.ctx
    }

    pub fn init_params(&self) -> Result<ModelParams> {
        ModelParams::init(
            &self.config,
            self.graph.num_features(),
            self.graph.num_classes(),
            &mut rng(self.config.seed, Stream::Init),
        )
    }

    /// Rejects parameters, e.g. from a checkpoint, whose shapes do not fit
    /// this graph and config.
    pub fn check_params(&self, params: &ModelParams) -> Result<()> {
        params.validate()?;
        if params.aggregator.kind != self.config.aggregator {
            return Err(Error::Config(format!(
                "parameters use the {} aggregator, config says {}",
                params.aggregator.kind, self.config.aggregator
            )));
        }
        self.init_params()?.check_same_shape(params)
    }

    /// Negatives for one epoch: the stored training negatives first, then
    /// fresh draws avoiding training positives and held-out negatives.
    fn epoch_negatives(&self, epoch: usize) -> Result<Vec<Edge>> {
        let neg = self.splits.negatives.as_ref().expect("checked in new");
        if epoch <= 1 {
            return Ok(neg.train.clone());
        }
        let train_graph = self.train_graph.as_ref().expect("unsup session");
        let mut r = step_rng(self.config.seed, Stream::EpochNegatives, epoch as u64);
        sample_negative_edges_with(train_graph, neg.train.len(), &[&neg.val, &neg.test], &mut r)
    }

    /// Training loss and gradients for one epoch.
    pub fn loss_and_grad(&self, params: &ModelParams, epoch: usize) -> Result<(f64, ModelParams)> {
        let mut dropout = step_rng(self.config.seed, Stream::Dropout, epoch as u64);
        match self.config.mode {
            LossMode::Semi => {
                let nodes = &self.splits.nodes.as_ref().expect("checked in new").train;
                let labels = self.graph.labels().expect("checked in new");
                backward(&self.ctx, params, Objective::Semi { nodes, labels }, &mut dropout)
            }
            LossMode::Unsup => {
                let positives = &self.splits.positives.as_ref().expect("checked in new").train;
                let negatives = self.epoch_negatives(epoch)?;
                backward(
                    &self.ctx,
                    params,
                    Objective::Unsup {
                        positives,
                        negatives: &negatives,
                    },
                    &mut dropout,
                )
            }
        }
    }

    /// Node representations in eval mode.
    pub fn embeddings(&self, params: &ModelParams) -> Result<Array2<f64>> {
        Ok(self.forward_eval(params)?.z)
    }

    fn forward_eval(&self, params: &ModelParams) -> Result<ForwardPass> {
        self.ctx.forward(params, Mode::Eval, &mut rng(0, Stream::Dropout))
    }

    /// (ACC, micro-F1) or (AUC, AP) on one part of the split.
    pub fn evaluate(&self, params: &ModelParams, part: Part) -> Result<Metrics> {
        let z = self.embeddings(params)?;
        self.metrics_from(params, &z, part)
    }

    fn metrics_from(&self, params: &ModelParams, z: &Array2<f64>, part: Part) -> Result<Metrics> {
        match self.config.mode {
            LossMode::Semi => {
                let nodes = self.splits.nodes.as_ref().expect("checked in new");
                let head = params
                    .head
                    .as_ref()
                    .ok_or_else(|| Error::Config("classification needs a classifier head".into()))?;
                let predictions = predict_classes(z.view(), head.view());
                let labels = self.graph.labels().expect("checked in new");
                let (acc, f1) =
                    classify_metrics(&predictions, labels, part.pick(&nodes.train, &nodes.val, &nodes.test))?;
                Ok(Metrics::classification(acc, f1))
            }
            LossMode::Unsup => {
                let pos = self.splits.positives.as_ref().expect("checked in new");
                let neg = self.splits.negatives.as_ref().expect("checked in new");
                let positives = part.pick(&pos.train, &pos.val, &pos.test);
                let negatives = part.pick(&neg.train, &neg.val, &neg.test);
                let mut scores = Vec::with_capacity(positives.len() + negatives.len());
                let mut flags = Vec::with_capacity(scores.capacity());
                for (edges, flag) in [(positives, true), (negatives, false)] {
                    for &(i, j) in edges {
                        scores.push(score_edge(z.row(i), z.row(j))?);
                        flags.push(flag);
                    }
                }
                let (auc, ap) = ranking_metrics(&scores, &flags)?;
                Ok(Metrics::link_prediction(auc, ap))
            }
        }
    }

    /// `node j1 j2 weight` lines for every node with attention weights.
    pub fn attention_dump(&self, params: &ModelParams) -> Result<String> {
        let pass = self.forward_eval(params)?;
        let mut out = String::new();
        if params.factorizer.is_none() || params.attention.is_none() {
            return Ok(out);
        }
        for node in 0..self.ctx.num_nodes() {
            let state = self.ctx.node_state(params, &pass, node)?;
            if let Some(w) = &state.attended.weights {
                write_attention_lines(&mut out, node, &state.interactions, w);
            }
        }
        Ok(out)
    }

    /// Full-batch Adam with early stopping on the validation metric.
    pub fn train_from(&self, mut params: ModelParams) -> Result<TrainOutcome> {
        let mut state = AdamState::new(&params);
        let mut history = Vec::new();
        let mut best = (params.clone(), 0usize, f64::NEG_INFINITY);
        let mut stale = 0usize;
        for epoch in 1..=self.config.max_epochs {
            let (loss, grads) = self.loss_and_grad(&params, epoch)?;
            adam_step(&mut params, &grads, &mut state, self.config.lr)?;
            let val_metric = self.evaluate(&params, Part::Val)?.first;
            debug!("epoch {epoch}: loss {loss:.6} val {val_metric:.4}");
            history.push(EpochRecord {
                epoch,
                loss,
                val_metric,
            });
            if val_metric > best.2 {
                best = (params.clone(), epoch, val_metric);
                stale = 0;
            } else {
                stale += 1;
                if stale >= self.config.patience {
                    info!("early stop at epoch {epoch}; best epoch {}", best.1);
                    break;
                }
            }
        }
        let (params, best_epoch, best_val) = best;
        Ok(TrainOutcome {
            params,
            history,
            best_epoch,
            best_val,
        })
    }

    pub fn train(&self) -> Result<TrainOutcome> {
        self.train_from(self.init_params()?)
    }
}

/// The split a config implies: labeled nodes for `semi`, edges plus sampled
/// negatives for `unsup`, both drawn from the config's seed.
pub fn splits_for(g: &SparseGraph, config: &TrainConfig) -> Result<DataSplits> {
    match config.mode {
        LossMode::Semi => Ok(DataSplits::node_classification(split_nodes(
            g,
            config.node_split,
            config.seed,
        )?)),
        LossMode::Unsup => link_prediction_splits(g, config.edge_split, config.seed),
    }
}

/// Trains from a fresh initialization.
pub fn train(g: &SparseGraph, splits: &DataSplits, config: &TrainConfig) -> Result<TrainOutcome> {
    Session::new(g, splits, config)?.train()
}
