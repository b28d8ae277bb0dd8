//! With node dependencies removed, the model collapses to a vanilla
//! factorization machine.
//!
//! The simplified scorer uses the real model pieces with the graph switched
//! off: identity propagation, a single linear aggregator layer `h = Wᵀx`
//! without activation or dropout, and unweighted interaction pooling. It then
//! projects `z = h ⊕ f` with `u` and adds a bias. Fixing `u = 1` gives
//! `w0 + (W·1)ᵀx + Σ_{j1<j2} ⟨v_j1, v_j2⟩ x_j1 x_j2`, which is checked here
//! against a direct double-loop FM.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;

use crate::aggregator::gcn_layer;
use crate::attention::{attend, fuse, AttentionParams};
use crate::error::{Error, Result};
use crate::factorizer::{factorize_node, FactorizerParams};
use crate::graph::NormalizedAdjacency;
use crate::rng::{rng, Stream};

/// Parameters of the simplified scorer. They are set directly, never trained.
#[derive(Clone, Debug, PartialEq)]
pub struct ReductionParams {
    pub bias: f64,
    /// `u`, length 2k.
    pub projection: Array1<f64>,
    /// Single aggregator layer, d×k.
    pub linear: Array2<f64>,
    /// Factorizer embeddings, d×k.
    pub embeddings: Array2<f64>,
}

impl ReductionParams {
    pub fn validate(&self) -> Result<()> {
        let (d, k) = self.linear.dim();
        if self.embeddings.dim() != (d, k) {
            return Err(Error::shape(format!(
                "linear map is {d}x{k} but embeddings are {:?}",
                self.embeddings.dim()
            )));
        }
        if self.projection.len() != 2 * k {
            return Err(Error::shape(format!(
                "projection has length {}, expected {}",
                self.projection.len(),
                2 * k
            )));
        }
        Ok(())
    }

    /// FM linear weights `w = W·1`.
    pub fn linear_weights(&self) -> Array1<f64> {
        self.linear.sum_axis(ndarray::Axis(1))
    }
}

fn dense_row(x: &[(usize, f64)], d: usize) -> Result<Array2<f64>> {
    let mut row = Array2::zeros((1, d));
    for &(j, v) in x {
        if j >= d {
            return Err(Error::shape(format!("feature {j} outside d = {d}")));
        }
        row[[0, j]] = v;
    }
    Ok(row)
}

/// `w0 + uᵀ(Wᵀx ⊕ Σ_{j1<j2} x_j1 v_j1 ⊙ x_j2 v_j2)`, with `u = 1` when `fix_u`.
pub fn simplified_predict(x: &[(usize, f64)], params: &ReductionParams, fix_u: bool) -> Result<f64> {
    params.validate()?;
    let (d, k) = params.linear.dim();
    let h = gcn_layer(
        dense_row(x, d)?.view(),
        &NormalizedAdjacency::identity(1),
        params.linear.view(),
        false,
    )?;
    let factorizer = FactorizerParams {
        embeddings: params.embeddings.clone(),
    };
    let set = factorize_node(x, &factorizer, None)?;
    let unused = AttentionParams {
        projection: Array2::zeros((k, k)),
    };
    let pooled = attend(h.row(0), &set, &unused, false)?.pooled;
    let z = fuse(h.row(0), pooled.view())?;
    let score = if fix_u { z.sum() } else { params.projection.dot(&z) };
    Ok(params.bias + score)
}

/// Second-order FM score by a direct double loop over all feature pairs.
pub fn vanilla_fm_predict(
    x: &[(usize, f64)],
    bias: f64,
    weights: ArrayView1<'_, f64>,
    embeddings: ArrayView2<'_, f64>,
) -> f64 {
    let d = weights.len();
    let mut dense = vec![0.0; d];
    for &(j, v) in x {
        dense[j] = v;
    }
    let mut y = bias;
    for j in 0..d {
        y += weights[j] * dense[j];
    }
    for j1 in 0..d {
        for j2 in j1 + 1..d {
            let inner: f64 = embeddings
                .row(j1)
                .iter()
                .zip(embeddings.row(j2).iter())
                .map(|(a, b)| a * b)
                .sum();
            y += inner * dense[j1] * dense[j2];
        }
    }
    y
}

/// FM score through `½ Σ_f [(Σ_j v_jf x_j)² − Σ_j v_jf² x_j²]`.
pub fn fm_predict_linear_time(
    x: &[(usize, f64)],
    bias: f64,
    weights: ArrayView1<'_, f64>,
    embeddings: ArrayView2<'_, f64>,
) -> f64 {
    let k = embeddings.ncols();
    let mut y = bias + x.iter().map(|&(j, v)| weights[j] * v).sum::<f64>();
    for f in 0..k {
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for &(j, v) in x {
            let t = embeddings[[j, f]] * v;
            sum += t;
            sum_sq += t * t;
        }
        y += 0.5 * (sum * sum - sum_sq);
    }
    y
}

/// One random instance: features, parameters.
#[derive(Clone, Debug)]
pub struct ReductionCase {
    pub x: Vec<(usize, f64)>,
    pub params: ReductionParams,
}

impl ReductionCase {
    pub fn random<R: Rng + ?Sized>(r: &mut R) -> Self {
        let d = r.random_range(1..=10);
        let k = r.random_range(1..=4);
        let mut uniform = |rows, cols| Array2::from_shape_simple_fn((rows, cols), || r.random_range(-1.0..1.0));
        let linear = uniform(d, k);
        let embeddings = uniform(d, k);
        let projection = uniform(1, 2 * k).row(0).to_owned();
        let bias = r.random_range(-1.0..1.0);
        let mut x = Vec::new();
        for j in 0..d {
            if r.random::<f64>() < 0.6 {
                x.push((j, r.random_range(-2.0..2.0)));
            }
        }
        ReductionCase {
            x,
            params: ReductionParams {
                bias,
                projection,
                linear,
                embeddings,
            },
        }
    }

    /// |simplified (u = 1) − vanilla FM with w = W·1|.
    pub fn deviation(&self) -> Result<f64> {
        let simplified = simplified_predict(&self.x, &self.params, true)?;
        let fm = vanilla_fm_predict(
            &self.x,
            self.params.bias,
            self.params.linear_weights().view(),
            self.params.embeddings.view(),
        );
        Ok((simplified - fm).abs())
    }
}

pub const REDUCTION_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct ReductionReport {
    pub trials: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    /// Descriptions of instances that exceeded the tolerance.
    pub failures: Vec<String>,
}

impl ReductionReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for ReductionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "trials={} max_deviation={:.3e} tolerance={:.0e} result={}",
            self.trials,
            self.max_deviation,
            self.tolerance,
            if self.passed() { "pass" } else { "fail" }
        )?;
        for failure in &self.failures {
            writeln!(f, "  {failure}")?;
        }
        Ok(())
    }
}

/// Compares the simplified scorer with the vanilla FM on random instances.
pub fn verify_reduction(trials: usize, seed: u64) -> Result<ReductionReport> {
    let mut r = rng(seed, Stream::Reduction);
    let mut max_deviation = 0.0f64;
    let mut failures = Vec::new();
    for trial in 0..trials {
        let case = ReductionCase::random(&mut r);
        let dev = case.deviation()?;
        max_deviation = max_deviation.max(dev);
        if dev >= REDUCTION_TOLERANCE {
            failures.push(format!("trial {trial}: deviation {dev:.3e} on {case:?}"));
        }
    }
    Ok(ReductionReport {
        trials,
        max_deviation,
        tolerance: REDUCTION_TOLERANCE,
        failures,
    })
}
