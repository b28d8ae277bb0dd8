//! Stacked neighborhood aggregation producing the node embeddings `h_i`.
//!
//! Two instantiations are provided. GCN layers compute `act(Â·H·W)` with the
//! symmetric normalized adjacency. GraphSAGE-mean layers concatenate each
//! node's own row with the mean of its neighbors' rows and apply one linear
//! map, `act(Wᵀ(h_i ⊕ mean_{j∈N(i)} h_j))`; isolated nodes use a zero mean.
//!
//! The first layer consumes the sparse feature matrix directly so the dense
//! n×d matrix is never materialized.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView2, Zip};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::graph::{NormalizedAdjacency, SparseGraph};
use crate::sparse::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AggregatorKind {
    #[default]
    Gcn,
    SageMean,
}

impl fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggregatorKind::Gcn => "gcn",
            AggregatorKind::SageMean => "sage",
        })
    }
}

impl FromStr for AggregatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(AggregatorKind::Gcn),
            "sage" | "sage-mean" | "graphsage" => Ok(AggregatorKind::SageMean),
            other => Err(Error::Config(format!("unknown aggregator `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Glorot/Xavier uniform initialization.
pub fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

/// Per-layer weights. For SAGE-mean, layer `l` has `2·in_dim` rows: the
/// first half multiplies the node's own row, the second half the neighbor mean.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregatorParams {
    pub kind: AggregatorKind,
    pub weights: Vec<Array2<f64>>,
}

impl AggregatorParams {
    /// `dims` is the full width chain, input dimension first.
    pub fn init<R: Rng + ?Sized>(kind: AggregatorKind, dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("invalid aggregator dims {dims:?}")));
        }
        let factor = match kind {
            AggregatorKind::Gcn => 1,
            AggregatorKind::SageMean => 2,
        };
        let weights = dims.windows(2).map(|w| glorot(factor * w[0], w[1], rng)).collect();
        Ok(AggregatorParams { kind, weights })
    }

    pub fn zeros_like(&self) -> Self {
        AggregatorParams {
            kind: self.kind,
            weights: self.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.in_dim(0)
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().map_or(0, |w| w.ncols())
    }

    fn in_dim(&self, layer: usize) -> usize {
        match self.kind {
            AggregatorKind::Gcn => self.weights[layer].nrows(),
            AggregatorKind::SageMean => self.weights[layer].nrows() / 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::shape("aggregator has no layers"));
        }
        for (l, w) in self.weights.iter().enumerate() {
            if self.kind == AggregatorKind::SageMean && w.nrows() % 2 != 0 {
                return Err(Error::shape(format!("SAGE layer {l} has odd row count {}", w.nrows())));
            }
            if l > 0 && self.in_dim(l) != self.weights[l - 1].ncols() {
                return Err(Error::shape(format!(
                    "layer {l} expects width {}, previous layer emits {}",
                    self.in_dim(l),
                    self.weights[l - 1].ncols()
                )));
            }
        }
        Ok(())
    }
}

/// Layer input, sparse for raw features and dense afterwards.
#[derive(Clone, Debug)]
pub enum Features {
    Sparse(CsrMatrix),
    Dense(Array2<f64>),
}

impl Features {
    pub fn nrows(&self) -> usize {
        match self {
            Features::Sparse(m) => m.rows(),
            Features::Dense(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Features::Sparse(m) => m.cols(),
            Features::Dense(m) => m.ncols(),
        }
    }

    fn dot(&self, w: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match self {
            Features::Sparse(m) => m.matmul(w),
            Features::Dense(m) => {
                check_inner(m.ncols(), w.nrows())?;
                Ok(m.dot(&w))
            }
        }
    }

    /// `selfᵀ · g`
    fn t_dot(&self, g: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match self {
            Features::Sparse(m) => m.t_matmul(g),
            Features::Dense(m) => {
                check_inner(m.nrows(), g.nrows())?;
                Ok(m.t().dot(&g))
            }
        }
    }
}

fn check_inner(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!("inner dimensions {a} and {b} differ")));
    }
    Ok(())
}

/// Inverted dropout. Returns the per-entry factors (0 or `1/(1-rate)`) for
/// dense inputs; sparse inputs are raw features and need no backward mask.
fn apply_dropout<R: Rng + ?Sized>(input: Features, rate: f64, rng: &mut R) -> (Features, Option<Array2<f64>>) {
    let keep = 1.0 / (1.0 - rate);
    let mut factor = || if rng.random::<f64>() < rate { 0.0 } else { keep };
    match input {
        Features::Sparse(mut m) => {
            for v in m.values_mut() {
                *v *= factor();
            }
            (Features::Sparse(m), None)
        }
        Features::Dense(mut m) => {
            let mask = Array2::from_shape_simple_fn(m.raw_dim(), factor);
            m *= &mask;
            (Features::Dense(m), Some(mask))
        }
    }
}

/// Propagation operator of one aggregator kind on a fixed topology.
#[derive(Clone, Debug)]
pub struct Topology {
    kind: AggregatorKind,
    propagation: CsrMatrix,
}

impl Topology {
    pub fn new(g: &SparseGraph, kind: AggregatorKind) -> Self {
        let propagation = match kind {
            AggregatorKind::Gcn => NormalizedAdjacency::new(g).matrix().clone(),
            AggregatorKind::SageMean => g.mean_adjacency(),
        };
        Topology { kind, propagation }
    }

    pub fn gcn(adj: &NormalizedAdjacency) -> Self {
        Topology {
            kind: AggregatorKind::Gcn,
            propagation: adj.matrix().clone(),
        }
    }

    pub fn kind(&self) -> AggregatorKind {
        self.kind
    }

    pub fn num_nodes(&self) -> usize {
        self.propagation.rows()
    }

    /// Pre-activation of one layer.
    fn linear(&self, input: &Features, w: &Array2<f64>) -> Result<Array2<f64>> {
        if input.nrows() != self.num_nodes() {
            return Err(Error::shape(format!(
                "layer input has {} rows for {} nodes",
                input.nrows(),
                self.num_nodes()
            )));
        }
        match self.kind {
            AggregatorKind::Gcn => {
                let hw = input.dot(w.view())?;
                self.propagation.matmul(hw.view())
            }
            AggregatorKind::SageMean => {
                let p = input.ncols();
                if w.nrows() != 2 * p {
                    return Err(Error::shape(format!(
                        "SAGE weight has {} rows, expected 2x{p}",
                        w.nrows()
                    )));
                }
                let mut out = input.dot(w.slice(s![..p, ..]))?;
                let neigh = input.dot(w.slice(s![p.., ..]))?;
                out += &self.propagation.matmul(neigh.view())?;
                Ok(out)
            }
        }
    }

    /// Given the upstream gradient of the pre-activation, returns the weight
    /// gradient and, when requested, the input gradient.
    fn linear_backward(
        &self,
        input: &Features,
        w: &Array2<f64>,
        d_pre: &Array2<f64>,
        want_input: bool,
    ) -> Result<(Array2<f64>, Option<Array2<f64>>)> {
        match self.kind {
            AggregatorKind::Gcn => {
                let d_hw = self.propagation.t_matmul(d_pre.view())?;
                let d_w = input.t_dot(d_hw.view())?;
                let d_in = want_input.then(|| d_hw.dot(&w.t()));
                Ok((d_w, d_in))
            }
            AggregatorKind::SageMean => {
                let p = input.ncols();
                let (w_self, w_neigh) = (w.slice(s![..p, ..]), w.slice(s![p.., ..]));
                let d_neigh = self.propagation.t_matmul(d_pre.view())?;
                let mut d_w = Array2::zeros(w.raw_dim());
                d_w.slice_mut(s![..p, ..]).assign(&input.t_dot(d_pre.view())?);
                d_w.slice_mut(s![p.., ..]).assign(&input.t_dot(d_neigh.view())?);
                let d_in = want_input.then(|| d_pre.dot(&w_self.t()) + d_neigh.dot(&w_neigh.t()));
                Ok((d_w, d_in))
            }
        }
    }
}

fn relu_inplace(m: &mut Array2<f64>) {
    m.mapv_inplace(|v| v.max(0.0));
}

/// `act(Â·H·W)`.
pub fn gcn_layer(
    h: ArrayView2<'_, f64>,
    adj: &NormalizedAdjacency,
    w: ArrayView2<'_, f64>,
    activation: bool,
) -> Result<Array2<f64>> {
    let topo = Topology::gcn(adj);
    let mut out = topo.linear(&Features::Dense(h.to_owned()), &w.to_owned())?;
    if activation {
        relu_inplace(&mut out);
    }
    Ok(out)
}

/// `act(Wᵀ(h_i ⊕ mean_{j∈N(i)} h_j))` for every node.
pub fn sage_mean_layer(
    h: ArrayView2<'_, f64>,
    g: &SparseGraph,
    w: ArrayView2<'_, f64>,
    activation: bool,
) -> Result<Array2<f64>> {
    let topo = Topology::new(g, AggregatorKind::SageMean);
    let mut out = topo.linear(&Features::Dense(h.to_owned()), &w.to_owned())?;
    if activation {
        relu_inplace(&mut out);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggregatorOptions {
    pub dropout: f64,
    /// Apply ReLU after the final layer as well as between layers.
    pub relu_output: bool,
}

#[derive(Debug)]
struct LayerCache {
    input: Features,
    mask: Option<Array2<f64>>,
    pre: Array2<f64>,
    activated: bool,
}

/// Forward pass output with everything the backward pass needs.
#[derive(Debug)]
pub struct AggregatorForward {
    pub output: Array2<f64>,
    layers: Vec<LayerCache>,
}

/// Runs every layer. Dropout hits each layer's input in [`Mode::Train`]
/// only; `rng` is untouched in [`Mode::Eval`] or when the rate is zero.
pub fn run_aggregator<R: Rng + ?Sized>(
    features: Features,
    topo: &Topology,
    params: &AggregatorParams,
    options: AggregatorOptions,
    mode: Mode,
    rng: &mut R,
) -> Result<AggregatorForward> {
    params.validate()?;
    if params.kind != topo.kind {
        return Err(Error::Config(format!(
            "parameters are for {} but topology is {}",
            params.kind, topo.kind
        )));
    }
    if !(0.0..1.0).contains(&options.dropout) {
        return Err(Error::Config(format!("dropout {} outside [0, 1)", options.dropout)));
    }
    let last = params.weights.len() - 1;
    let mut current = features;
    let mut layers = Vec::with_capacity(params.weights.len());
    for (l, w) in params.weights.iter().enumerate() {
        let (input, mask) = if mode == Mode::Train && options.dropout > 0.0 {
            apply_dropout(current, options.dropout, rng)
        } else {
            (current, None)
        };
        let pre = topo.linear(&input, w)?;
        let activated = l < last || options.relu_output;
        let mut out = pre.clone();
        if activated {
            relu_inplace(&mut out);
        }
        layers.push(LayerCache {
            input,
            mask,
            pre,
            activated,
        });
        current = Features::Dense(out);
    }
    let Features::Dense(output) = current else {
        unreachable!("at least one layer always runs")
    };
    Ok(AggregatorForward { output, layers })
}

/// Weight gradients of a scalar loss given its gradient w.r.t. the
/// aggregator output.
pub fn aggregator_backward(
    topo: &Topology,
    params: &AggregatorParams,
    forward: &AggregatorForward,
    d_output: &Array2<f64>,
) -> Result<AggregatorParams> {
    if d_output.raw_dim() != forward.output.raw_dim() {
        return Err(Error::shape("output gradient shape differs from output"));
    }
    let mut grads = vec![Array2::zeros((0, 0)); params.weights.len()];
    let mut upstream = d_output.clone();
    for l in (0..params.weights.len()).rev() {
        let cache = &forward.layers[l];
        if cache.activated {
            Zip::from(&mut upstream).and(&cache.pre).for_each(|g, &p| {
                if p <= 0.0 {
                    *g = 0.0
                }
            });
        }
        let (d_w, d_in) = topo.linear_backward(&cache.input, &params.weights[l], &upstream, l > 0)?;
        grads[l] = d_w;
        if let Some(mut d_in) = d_in {
            if let Some(mask) = &cache.mask {
                d_in *= mask;
            }
            upstream = d_in;
        }
    }
    Ok(AggregatorParams {
        kind: params.kind,
        weights: grads,
    })
}

/// Gradients of `⟨d_out, layer(h, w)⟩` w.r.t. `h` and `w` for a single dense
/// layer, for testing the per-layer calculus in isolation.
pub fn layer_backward(
    topo: &Topology,
    h: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    activation: bool,
    d_out: &Array2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let input = Features::Dense(h.to_owned());
    let w = w.to_owned();
    let mut d_pre = d_out.clone();
    if activation {
        let pre = topo.linear(&input, &w)?;
        Zip::from(&mut d_pre).and(&pre).for_each(|g, &p| {
            if p <= 0.0 {
                *g = 0.0
            }
        });
    }
    let (d_w, d_in) = topo.linear_backward(&input, &w, &d_pre, true)?;
    Ok((d_in.expect("requested"), d_w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng, Stream};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, edges: &[(usize, usize)]) -> SparseGraph {
        SparseGraph::new(1, edges.iter().copied(), vec![Vec::new(); n], None).unwrap()
    }

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
    }

    fn random_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> SparseGraph {
        let edges: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|_| rng.random::<f64>() < p)
            .collect();
        graph(n, &edges)
    }

    #[test]
    fn gcn_identity_pipeline() {
        let g = graph(1, &[]);
        let adj = NormalizedAdjacency::new(&g);
        let h = array![[0.5, 2.0, 3.0]];
        let out = gcn_layer(h.view(), &adj, Array2::eye(3).view(), false).unwrap();
        assert_eq!(out, h);
        let out = gcn_layer(h.view(), &adj, Array2::eye(3).view(), true).unwrap();
        assert_eq!(out, h);
    }

    #[test]
    fn gcn_zero_weights() {
        let g = graph(3, &[(0, 1)]);
        let adj = NormalizedAdjacency::new(&g);
        let h = array![[1.0, -2.0], [3.0, 4.0], [0.5, 0.5]];
        let out = gcn_layer(h.view(), &adj, Array2::zeros((2, 5)).view(), false).unwrap();
        assert_eq!(out, Array2::<f64>::zeros((3, 5)));
    }

    #[test]
    fn gcn_two_node_average() {
        let g = graph(2, &[(0, 1)]);
        let adj = NormalizedAdjacency::new(&g);
        let out = gcn_layer(array![[2.0], [0.0]].view(), &adj, array![[1.0]].view(), false).unwrap();
        assert!((out - array![[1.0], [1.0]]).iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn gcn_shape_mismatch() {
        let adj = NormalizedAdjacency::new(&graph(2, &[]));
        let err = gcn_layer(Array2::zeros((2, 3)).view(), &adj, Array2::zeros((2, 1)).view(), false);
        assert!(matches!(err, Err(Error::Shape(_))));
        let err = gcn_layer(Array2::zeros((3, 2)).view(), &adj, Array2::zeros((2, 1)).view(), false);
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn sage_two_node_hand_computed() {
        let g = graph(2, &[(0, 1)]);
        let out = sage_mean_layer(array![[1.0], [3.0]].view(), &g, array![[1.0], [1.0]].view(), false).unwrap();
        assert_eq!(out, array![[4.0], [4.0]]);
    }

    #[test]
    fn sage_duplicate_neighbor_doubles() {
        // node 0's only neighbor has the same row, so the concatenation is h ⊕ h
        let g = graph(2, &[(0, 1)]);
        let h = array![[1.0, 2.0], [1.0, 2.0]];
        let half = array![[1.0, 0.5], [-1.0, 2.0]];
        let mut w = Array2::zeros((4, 2));
        w.slice_mut(s![..2, ..]).assign(&half);
        w.slice_mut(s![2.., ..]).assign(&half);
        let out = sage_mean_layer(h.view(), &g, w.view(), false).unwrap();
        let expected = h.row(0).dot(&half) * 2.0;
        assert_eq!(out.row(0), expected);
    }

    #[test]
    fn sage_isolated_node_uses_zero_mean() {
        let g = graph(2, &[]);
        let h = array![[1.0, -2.0], [3.0, 1.0]];
        let w = array![[1.0], [2.0], [100.0], [100.0]];
        let out = sage_mean_layer(h.view(), &g, w.view(), false).unwrap();
        assert_eq!(out, array![[-3.0], [5.0]]);
        assert!(sage_mean_layer(h.view(), &g, array![[1.0], [2.0]].view(), false).is_err());
    }

    fn sparse_features(n: usize, d: usize, rng: &mut ChaCha8Rng) -> CsrMatrix {
        let rows: Vec<_> = (0..n)
            .map(|_| {
                let mut row = Vec::new();
                for j in 0..d {
                    if rng.random::<f64>() < 0.4 {
                        row.push((j, rng.random_range(-1.0..1.0)));
                    }
                }
                row
            })
            .collect();
        CsrMatrix::from_rows(d, &rows).unwrap()
    }

    #[test]
    fn default_dims_and_eval_determinism() {
        let mut r = rng(3, Stream::Init);
        let g = random_graph(12, 0.3, &mut r);
        let x = sparse_features(12, 20, &mut r);
        for kind in [AggregatorKind::Gcn, AggregatorKind::SageMean] {
            let params = AggregatorParams::init(kind, &[20, 32, 16], &mut r).unwrap();
            let topo = Topology::new(&g, kind);
            let opts = AggregatorOptions {
                dropout: 0.0,
                relu_output: true,
            };
            let a = run_aggregator(Features::Sparse(x.clone()), &topo, &params, opts, Mode::Train, &mut r).unwrap();
            let b = run_aggregator(Features::Sparse(x.clone()), &topo, &params, opts, Mode::Eval, &mut r).unwrap();
            assert_eq!(a.output.dim(), (12, 16));
            assert_eq!(a.output, b.output);

            let opts = AggregatorOptions {
                dropout: 0.5,
                relu_output: true,
            };
            let c = run_aggregator(Features::Sparse(x.clone()), &topo, &params, opts, Mode::Eval, &mut r).unwrap();
            assert_eq!(c.output, b.output);

            let zeros = CsrMatrix::from_rows(20, &vec![Vec::new(); 12]).unwrap();
            let z = run_aggregator(Features::Sparse(zeros), &topo, &params, opts, Mode::Train, &mut r).unwrap();
            assert!(z.output.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn permutation_equivariance() {
        let mut r = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..10 {
            let n = 5 + trial;
            let g = random_graph(n, 0.3, &mut r);
            let x = random_matrix(n, 6, &mut r);
            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut r);
            let gp = g.permuted(&perm).unwrap();
            let mut xp = Array2::zeros(x.raw_dim());
            for (i, &p) in perm.iter().enumerate() {
                xp.row_mut(p).assign(&x.row(i));
            }
            for kind in [AggregatorKind::Gcn, AggregatorKind::SageMean] {
                let params = AggregatorParams::init(kind, &[6, 8, 4], &mut r).unwrap();
                let opts = AggregatorOptions {
                    dropout: 0.0,
                    relu_output: true,
                };
                let run = |g: &SparseGraph, x: &Array2<f64>| {
                    run_aggregator(
                        Features::Dense(x.clone()),
                        &Topology::new(g, kind),
                        &params,
                        opts,
                        Mode::Eval,
                        &mut ChaCha8Rng::seed_from_u64(0),
                    )
                    .unwrap()
                    .output
                };
                let base = run(&g, &x);
                let permuted = run(&gp, &xp);
                for (i, &p) in perm.iter().enumerate() {
                    let diff = &base.row(i) - &permuted.row(p);
                    assert!(diff.iter().all(|d| d.abs() < 1e-12));
                }
            }
        }
    }

    fn max_rel_err(analytic: &Array2<f64>, numeric: &Array2<f64>) -> f64 {
        Zip::from(analytic).and(numeric).fold(0.0f64, |m, &a, &b| {
            m.max((a - b).abs() / a.abs().max(b.abs()).max(1e-6))
        })
    }

    #[test]
    fn layer_gradients_match_finite_differences() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let eps = 1e-5;
        for kind in [AggregatorKind::Gcn, AggregatorKind::SageMean] {
            let g = random_graph(7, 0.4, &mut r);
            let topo = Topology::new(&g, kind);
            let factor = if kind == AggregatorKind::Gcn { 1 } else { 2 };
            let h = random_matrix(7, 3, &mut r);
            let w = random_matrix(3 * factor, 4, &mut r);
            let probe = random_matrix(7, 4, &mut r);
            for activation in [false, true] {
                let objective = |h: &Array2<f64>, w: &Array2<f64>| {
                    let input = Features::Dense(h.clone());
                    let mut out = topo.linear(&input, w).unwrap();
                    if activation {
                        relu_inplace(&mut out);
                    }
                    (&out * &probe).sum()
                };
                let (d_h, d_w) = layer_backward(&topo, h.view(), w.view(), activation, &probe).unwrap();
                let fd = |m: &Array2<f64>, f: &dyn Fn(&Array2<f64>) -> f64| {
                    let mut out = Array2::zeros(m.raw_dim());
                    for idx in 0..m.len() {
                        let mut plus = m.clone();
                        let mut minus = m.clone();
                        plus.as_slice_mut().unwrap()[idx] += eps;
                        minus.as_slice_mut().unwrap()[idx] -= eps;
                        out.as_slice_mut().unwrap()[idx] = (f(&plus) - f(&minus)) / (2.0 * eps);
                    }
                    out
                };
                let num_h = fd(&h, &|hh| objective(hh, &w));
                let num_w = fd(&w, &|ww| objective(&h, ww));
                assert!(max_rel_err(&d_h, &num_h) < 1e-4, "{kind} input grad");
                assert!(max_rel_err(&d_w, &num_w) < 1e-4, "{kind} weight grad");
            }
        }
    }

    #[test]
    fn stacked_backward_matches_finite_differences() {
        let mut r = ChaCha8Rng::seed_from_u64(8);
        let eps = 1e-5;
        for kind in [AggregatorKind::Gcn, AggregatorKind::SageMean] {
            let g = random_graph(8, 0.35, &mut r);
            let topo = Topology::new(&g, kind);
            let x = sparse_features(8, 6, &mut r);
            let params = AggregatorParams::init(kind, &[6, 5, 3], &mut r).unwrap();
            let probe = random_matrix(8, 3, &mut r);
            let opts = AggregatorOptions {
                dropout: 0.3,
                relu_output: true,
            };
            let eval = |p: &AggregatorParams| {
                let fwd = run_aggregator(
                    Features::Sparse(x.clone()),
                    &topo,
                    p,
                    opts,
                    Mode::Train,
                    &mut ChaCha8Rng::seed_from_u64(99),
                )
                .unwrap();
                ((&fwd.output * &probe).sum(), fwd)
            };
            let (_, fwd) = eval(&params);
            let grads = aggregator_backward(&topo, &params, &fwd, &probe).unwrap();
            for l in 0..params.weights.len() {
                let mut numeric = Array2::zeros(params.weights[l].raw_dim());
                for idx in 0..numeric.len() {
                    let mut plus = params.clone();
                    let mut minus = params.clone();
                    plus.weights[l].as_slice_mut().unwrap()[idx] += eps;
                    minus.weights[l].as_slice_mut().unwrap()[idx] -= eps;
                    numeric.as_slice_mut().unwrap()[idx] = (eval(&plus).0 - eval(&minus).0) / (2.0 * eps);
                }
                assert!(max_rel_err(&grads.weights[l], &numeric) < 1e-4, "{kind} layer {l}");
            }
        }
    }
}
