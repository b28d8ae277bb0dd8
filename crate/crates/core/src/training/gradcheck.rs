//! Central finite-difference verification of the analytic gradients.

use std::fmt;

use ndarray::Array2;
use rand::Rng;

use super::config::{LossMode, TrainConfig};
use super::model::{ModelContext, ModelParams};
use super::{backward, Objective};
use crate::aggregator::AggregatorKind;
use crate::error::{Error, Result};
use crate::graph::{sample_negative_edges_with, Labels, SparseGraph};
use crate::rng::{rng, Stream};

pub const GRADCHECK_EPS: f64 = 1e-5;
pub const GRADCHECK_THRESHOLD: f64 = 1e-4;
/// Denominator floor of the relative error, so entries whose true gradient
/// is ~0 are judged on absolute error instead.
const REL_FLOOR: f64 = 1e-6;

/// Largest relative error within one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupError {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<GroupError>,
    pub threshold: f64,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.max_rel_error < self.threshold)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in &self.groups {
            let verdict = if g.max_rel_error < self.threshold { "ok" } else { "FAIL" };
            writeln!(
                f,
                "{:<14} {:>6} entries  max rel err {:.3e}  {verdict}",
                g.name, g.entries, g.max_rel_error
            )?;
        }
        Ok(())
    }
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares the gradient returned by `f` against central differences of its
/// value, entry by entry.
pub fn check_gradients<F>(params: &ModelParams, eps: f64, mut f: F) -> Result<GradCheckReport>
where
    F: FnMut(&ModelParams) -> Result<(f64, ModelParams)>,
{
    let (_, analytic) = f(params)?;
    params.check_same_shape(&analytic)?;
    let analytic: Vec<(String, Array2<f64>)> = analytic.tensors().into_iter().map(|(n, t)| (n, t.clone())).collect();
    let mut groups = Vec::new();
    for (group, (name, grad)) in analytic.iter().enumerate() {
        let mut worst = 0.0f64;
        for idx in 0..grad.len() {
            let mut probe = params.clone();
            let mut eval = |delta: f64| -> Result<f64> {
                {
                    let mut tensors = probe.tensors_mut();
                    let t = &mut tensors[group].1;
                    t.as_slice_mut().expect("standard layout")[idx] += delta;
                }
                let (value, _) = f(&probe)?;
                Ok(value)
            };
            let plus = eval(eps)?;
            let minus = eval(-2.0 * eps)?;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad.as_slice().expect("standard layout")[idx];
            worst = worst.max(rel_error(a, numeric));
        }
        groups.push(GroupError {
            name: name.clone(),
            entries: grad.len(),
            max_rel_error: worst,
        });
    }
    Ok(GradCheckReport {
        groups,
        threshold: GRADCHECK_THRESHOLD,
    })
}

/// Shape of the random instance used by [`finite_difference_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub aggregator: AggregatorKind,
    pub attention: bool,
    pub interactions: bool,
    pub mode: LossMode,
    pub nodes: usize,
    pub features: usize,
    pub k: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub dropout: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            aggregator: AggregatorKind::Gcn,
            attention: true,
            interactions: true,
            mode: LossMode::Semi,
            nodes: 10,
            features: 12,
            k: 4,
            hidden: vec![6],
            classes: 3,
            dropout: 0.1,
        }
    }
}

fn random_instance<R: Rng + ?Sized>(cfg: &GradCheckConfig, r: &mut R) -> Result<SparseGraph> {
    let n = cfg.nodes;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if r.random::<f64>() < 0.3 {
                edges.push((i, j));
            }
        }
    }
    // every node gets at least one edge and three features
    for i in 0..n {
        if !edges.iter().any(|&(a, b)| a == i || b == i) {
            edges.push((i, (i + 1) % n));
        }
    }
    let features = (0..n)
        .map(|_| {
            let mut row: Vec<(usize, f64)> = Vec::new();
            for j in 0..cfg.features {
                if (row.len() < 3 || r.random::<f64>() < 0.35) && (r.random::<f64>() < 0.6 || row.len() < 3) {
                    row.push((
                        j,
                        r.random_range(0.2..1.5) * if r.random::<bool>() { 1.0 } else { -1.0 },
                    ));
                }
            }
            row
        })
        .collect();
    let labels = Labels::new(
        cfg.classes,
        (0..n).map(|_| Some(r.random_range(0..cfg.classes))).collect(),
    )?;
    SparseGraph::new(cfg.features, edges, features, Some(labels))
}

/// Builds a random small graph and model, then checks every parameter group
/// of the selected loss against central differences at 64-bit precision.
pub fn finite_difference_check(cfg: &GradCheckConfig, seed: u64) -> Result<GradCheckReport> {
    if cfg.nodes > 20 || cfg.features > 16 {
        return Err(Error::Config(format!(
            "gradient check is limited to n <= 20 and d <= 16 (got n = {}, d = {})",
            cfg.nodes, cfg.features
        )));
    }
    if cfg.nodes < 3 {
        return Err(Error::Config("gradient check needs at least 3 nodes".into()));
    }
    let mut r = rng(seed, Stream::GradCheck);
    let g = random_instance(cfg, &mut r)?;
    let config = TrainConfig {
        dropout: cfg.dropout,
        k: cfg.k,
        hidden: cfg.hidden.clone(),
        mode: cfg.mode,
        aggregator: cfg.aggregator,
        attention: cfg.attention,
        interactions: cfg.interactions,
        seed,
        ..Default::default()
    };
    let ctx = ModelContext::from_config(&g, &config);
    let mut params = ModelParams::init(&config, cfg.features, Some(cfg.classes), &mut r)?;
    // Lift the embeddings off their tiny initial scale so interactions matter.
    if let Some(f) = &mut params.factorizer {
        f.embeddings.mapv_inplace(|v| v * 60.0);
    }
    let nodes: Vec<usize> = (0..cfg.nodes).collect();
    let labels = g.labels().expect("instance is labeled");
    let positives = g.edges().to_vec();
    let negatives = sample_negative_edges_with(&g, positives.len().min(cfg.nodes), &[], &mut r)?;
    let objective = match cfg.mode {
        LossMode::Semi => Objective::Semi { nodes: &nodes, labels },
        LossMode::Unsup => Objective::Unsup {
            positives: &positives,
            negatives: &negatives,
        },
    };
    let mask_seed: u64 = r.random();
    check_gradients(&params, GRADCHECK_EPS, |p| {
        backward(&ctx, p, objective, &mut rng(mask_seed, Stream::Dropout))
    })
}
