//! The full model: parameters, forward pass to `Z`, and the reverse pass
//! from `∂L/∂Z` back to every parameter.

use ndarray::{s, Array1, Array2, ArrayView1};
use rand::Rng;

use super::config::TrainConfig;
use crate::aggregator::{
    aggregator_backward, glorot, run_aggregator, AggregatorForward, AggregatorKind, AggregatorOptions,
    AggregatorParams, Features, Mode, Topology,
};
use crate::attention::{attend, attend_backward, fuse, Attended, AttentionParams, NodeForwardState};
use crate::error::{Error, Result};
use crate::factorizer::{factorize_node, FactorizerParams, InteractionSet};
use crate::graph::{SparseGraph, SparseRow};
use crate::sparse::CsrMatrix;

/// Every trainable tensor. Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub aggregator: AggregatorParams,
    /// Absent for the plain GNN baseline.
    pub factorizer: Option<FactorizerParams>,
    /// Absent when attention is disabled or there is no factorizer.
    pub attention: Option<AttentionParams>,
    /// `repr_dim × C` classifier; present in semi-supervised mode only.
    pub head: Option<Array2<f64>>,
}

impl ModelParams {
    /// Random initialization for a graph with `d` features and, for
    /// classification, `classes` labels.
    pub fn init<R: Rng + ?Sized>(config: &TrainConfig, d: usize, classes: Option<usize>, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let aggregator = AggregatorParams::init(config.aggregator, &config.layer_dims(d), rng)?;
        let factorizer = if config.interactions {
            Some(FactorizerParams::init(d, config.k, rng)?)
        } else {
            None
        };
        let attention = (config.interactions && config.attention).then(|| AttentionParams::init(config.k, rng));
        let head = match (config.mode, classes) {
            (super::LossMode::Semi, Some(c)) => Some(glorot(config.repr_dim(), c, rng)),
            (super::LossMode::Semi, None) => {
                return Err(Error::Config("semi-supervised mode needs a class count".into()))
            }
            (super::LossMode::Unsup, _) => None,
        };
        let params = ModelParams {
            aggregator,
            factorizer,
            attention,
            head,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            aggregator: self.aggregator.zeros_like(),
            factorizer: self.factorizer.as_ref().map(FactorizerParams::zeros_like),
            attention: self.attention.as_ref().map(AttentionParams::zeros_like),
            head: self.head.as_ref().map(|h| Array2::zeros(h.raw_dim())),
        }
    }

    pub fn k(&self) -> usize {
        self.aggregator.output_dim()
    }

    pub fn repr_dim(&self) -> usize {
        if self.factorizer.is_some() {
            2 * self.k()
        } else {
            self.k()
        }
    }

    /// Checks that `d`, `k` and the head width are mutually consistent.
    pub fn validate(&self) -> Result<()> {
        self.aggregator.validate()?;
        let k = self.k();
        if let Some(f) = &self.factorizer {
            if f.dim() != k {
                return Err(Error::shape(format!(
                    "factorizer embedding size {} differs from aggregator output {k}",
                    f.dim()
                )));
            }
            if f.num_features() != self.aggregator.input_dim() {
                return Err(Error::shape(format!(
                    "factorizer covers {} features, aggregator expects {}",
                    f.num_features(),
                    self.aggregator.input_dim()
                )));
            }
        }
        if let Some(a) = &self.attention {
            if self.factorizer.is_none() {
                return Err(Error::shape("attention requires a factorizer"));
            }
            if a.projection.dim() != (k, k) {
                return Err(Error::shape(format!("attention projection must be {k}x{k}")));
            }
        }
        if let Some(h) = &self.head {
            if h.nrows() != self.repr_dim() {
                return Err(Error::shape(format!(
                    "head has {} rows, representation width is {}",
                    h.nrows(),
                    self.repr_dim()
                )));
            }
        }
        Ok(())
    }

    /// Named views of every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out: Vec<(String, &Array2<f64>)> = self
            .aggregator
            .weights
            .iter()
            .enumerate()
            .map(|(l, w)| (format!("aggregator.{l}"), w))
            .collect();
        if let Some(f) = &self.factorizer {
            out.push(("factorizer".into(), &f.embeddings));
        }
        if let Some(a) = &self.attention {
            out.push(("attention".into(), &a.projection));
        }
        if let Some(h) = &self.head {
            out.push(("head".into(), h));
        }
        out
    }

    /// Mutable counterpart of [`ModelParams::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out: Vec<(String, &mut Array2<f64>)> = self
            .aggregator
            .weights
            .iter_mut()
            .enumerate()
            .map(|(l, w)| (format!("aggregator.{l}"), w))
            .collect();
        if let Some(f) = &mut self.factorizer {
            out.push(("factorizer".into(), &mut f.embeddings));
        }
        if let Some(a) = &mut self.attention {
            out.push(("attention".into(), &mut a.projection));
        }
        if let Some(h) = &mut self.head {
            out.push(("head".into(), h));
        }
        out
    }

    /// Checks that `other` has exactly the same tensors and shapes.
    pub fn check_same_shape(&self, other: &ModelParams) -> Result<()> {
        let a = self.tensors();
        let b = other.tensors();
        if a.len() != b.len()
            || a.iter()
                .zip(&b)
                .any(|((na, ta), (nb, tb))| na != nb || ta.dim() != tb.dim())
        {
            return Err(Error::shape("parameter sets have different structure"));
        }
        Ok(())
    }

    /// `self += scale · other`
    pub fn scaled_add(&mut self, scale: f64, other: &ModelParams) -> Result<()> {
        self.check_same_shape(other)?;
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(scale, b);
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Structural switches that do not live in the parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelOptions {
    pub attention: bool,
    pub relu_output: bool,
    pub dropout: f64,
    pub nnz_cap: Option<usize>,
}

impl From<&TrainConfig> for ModelOptions {
    fn from(c: &TrainConfig) -> Self {
        ModelOptions {
            attention: c.attention,
            relu_output: c.relu_output,
            dropout: c.dropout,
            nnz_cap: c.nnz_cap,
        }
    }
}

/// Graph-derived inputs shared by every forward pass.
#[derive(Clone, Debug)]
pub struct ModelContext {
    topology: Topology,
    features: CsrMatrix,
    rows: Vec<SparseRow>,
    options: ModelOptions,
}

impl ModelContext {
    pub fn new(g: &SparseGraph, kind: AggregatorKind, options: ModelOptions) -> Self {
        ModelContext {
            topology: Topology::new(g, kind),
            features: g.feature_matrix(),
            rows: g.feature_rows().to_vec(),
            options,
        }
    }

    pub fn from_config(g: &SparseGraph, config: &TrainConfig) -> Self {
        Self::new(g, config.aggregator, ModelOptions::from(config))
    }

    pub fn num_nodes(&self) -> usize {
        self.rows.len()
    }

    pub fn options(&self) -> ModelOptions {
        self.options
    }

    pub fn set_options(&mut self, options: ModelOptions) {
        self.options = options;
    }

    fn attention_enabled(&self, params: &ModelParams) -> bool {
        self.options.attention && params.attention.is_some()
    }

    fn interactions(&self, node: usize, factorizer: &FactorizerParams) -> Result<InteractionSet> {
        factorize_node(&self.rows[node], factorizer, self.options.nnz_cap)
    }

    /// Computes `Z`. The generator supplies dropout masks in [`Mode::Train`].
    pub fn forward<R: Rng + ?Sized>(&self, params: &ModelParams, mode: Mode, rng: &mut R) -> Result<ForwardPass> {
        params.validate()?;
        if params.aggregator.input_dim() != self.features.cols() {
            return Err(Error::shape(format!(
                "model expects {} features, graph has {}",
                params.aggregator.input_dim(),
                self.features.cols()
            )));
        }
        let agg_opts = AggregatorOptions {
            dropout: self.options.dropout,
            relu_output: self.options.relu_output,
        };
        let aggregated = run_aggregator(
            Features::Sparse(self.features.clone()),
            &self.topology,
            &params.aggregator,
            agg_opts,
            mode,
            rng,
        )?;
        let n = self.num_nodes();
        let k = params.k();
        let Some(factorizer) = &params.factorizer else {
            let z = aggregated.output.clone();
            return Ok(ForwardPass {
                aggregated,
                attended: Vec::new(),
                z,
            });
        };
        let enabled = self.attention_enabled(params);
        let fallback;
        let attention = match &params.attention {
            Some(a) => a,
            None => {
                fallback = AttentionParams {
                    projection: Array2::zeros((k, k)),
                };
                &fallback
            }
        };
        let mut z = Array2::zeros((n, 2 * k));
        let mut attended = Vec::with_capacity(n);
        for i in 0..n {
            let set = self.interactions(i, factorizer)?;
            let h = aggregated.output.row(i);
            let out = attend(h, &set, attention, enabled)?;
            z.slice_mut(s![i, ..k]).assign(&h);
            z.slice_mut(s![i, k..]).assign(&out.pooled);
            attended.push(out);
        }
        Ok(ForwardPass {
            aggregated,
            attended,
            z,
        })
    }

    /// Per-node intermediate values in eval mode.
    pub fn node_state(&self, params: &ModelParams, pass: &ForwardPass, node: usize) -> Result<NodeForwardState> {
        let factorizer = params
            .factorizer
            .as_ref()
            .ok_or_else(|| Error::Config("model has no factorizer".into()))?;
        let embedding = pass.aggregated.output.row(node).to_owned();
        let interactions = self.interactions(node, factorizer)?;
        let attended = pass.attended[node].clone();
        let fused = fuse(embedding.view(), attended.pooled.view())?;
        Ok(NodeForwardState {
            embedding,
            interactions,
            attended,
            fused,
        })
    }

    /// Gradients of every parameter except the head, given `∂L/∂Z`.
    pub fn backward(&self, params: &ModelParams, pass: &ForwardPass, d_z: &Array2<f64>) -> Result<ModelParams> {
        if d_z.dim() != pass.z.dim() {
            return Err(Error::shape("gradient of Z has the wrong shape"));
        }
        let k = params.k();
        let mut grads = params.zeros_like();
        let mut d_h = d_z.slice(s![.., ..k]).to_owned();
        if let Some(factorizer) = &params.factorizer {
            let zero_attention = AttentionParams {
                projection: Array2::zeros((k, k)),
            };
            let attention = params.attention.as_ref().unwrap_or(&zero_attention);
            let mut d_projection = Array2::zeros((k, k));
            let d_v = &mut grads.factorizer.as_mut().expect("mirrors params").embeddings;
            for i in 0..self.num_nodes() {
                let d_f: ArrayView1<'_, f64> = d_z.slice(s![i, k..]);
                let set = self.interactions(i, factorizer)?;
                if set.is_empty() {
                    continue;
                }
                let h = pass.aggregated.output.row(i);
                let node = &pass.attended[i];
                let g = attend_backward(h, &set, attention, node, d_f, d_projection.view_mut());
                d_h.row_mut(i).scaled_add(1.0, &g.d_query);
                set.accumulate_embedding_grad(&factorizer.embeddings, &g.d_vectors, d_v.view_mut());
            }
            if let Some(a) = &mut grads.attention {
                a.projection = d_projection;
            }
        }
        grads.aggregator = aggregator_backward(&self.topology, &params.aggregator, &pass.aggregated, &d_h)?;
        Ok(grads)
    }
}

/// Output of [`ModelContext::forward`].
#[derive(Debug)]
pub struct ForwardPass {
    pub aggregated: AggregatorForward,
    /// Per-node attention results; empty for the plain GNN.
    pub attended: Vec<Attended>,
    /// Node representations, one per row.
    pub z: Array2<f64>,
}

impl ForwardPass {
    pub fn representation(&self, node: usize) -> Array1<f64> {
        self.z.row(node).to_owned()
    }
}
