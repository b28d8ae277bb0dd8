//! Personalized attention over a node's interaction vectors, and the fusion
//! `z_i = h_i ⊕ f_i`.
//!
//! With query `h_i`, each interaction `e` scores `a = h_iᵀ·tanh(W_f·e)`; the
//! weights are a softmax over the node's own interactions and `f_i` is the
//! weighted sum. With attention disabled, `f_i` is the plain sum.

use std::fmt::Write as _;

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayViewMut2, Axis};
use rand::Rng;

use crate::aggregator::glorot;
use crate::error::{Error, Result};
use crate::factorizer::InteractionSet;

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    /// `W_f`, k×k.
    pub projection: Array2<f64>,
}

impl AttentionParams {
    pub fn init<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Self {
        AttentionParams {
            projection: glorot(k, k, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        AttentionParams {
            projection: Array2::zeros(self.projection.raw_dim()),
        }
    }

    pub fn dim(&self) -> usize {
        self.projection.nrows()
    }
}

/// Result of attending over one node's interactions.
#[derive(Clone, Debug, PartialEq)]
pub struct Attended {
    /// Raw scores `a`; empty when attention is disabled.
    pub logits: Array1<f64>,
    /// Softmax of the logits; `None` when attention is disabled.
    pub weights: Option<Array1<f64>>,
    /// Pooled interaction vector `f_i`.
    pub pooled: Array1<f64>,
}

/// Numerically stable softmax.
pub fn softmax(logits: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut out = logits.mapv(|v| (v - max).exp());
    let total = out.sum();
    out /= total;
    out
}

fn check_dims(h: ArrayView1<'_, f64>, set: &InteractionSet, params: &AttentionParams) -> Result<()> {
    let k = params.dim();
    if params.projection.ncols() != k {
        return Err(Error::shape("attention projection must be square"));
    }
    if h.len() != k || set.dim() != k {
        return Err(Error::shape(format!(
            "query width {} and interaction width {} must both equal {k}",
            h.len(),
            set.dim()
        )));
    }
    Ok(())
}

/// `tanh(W_f·e)` for every interaction, one per row.
fn squashed(set: &InteractionSet, params: &AttentionParams) -> Array2<f64> {
    set.vectors().dot(&params.projection.t()).mapv(f64::tanh)
}

pub fn attend(
    h: ArrayView1<'_, f64>,
    set: &InteractionSet,
    params: &AttentionParams,
    enabled: bool,
) -> Result<Attended> {
    check_dims(h, set, params)?;
    let k = params.dim();
    if set.is_empty() {
        return Ok(Attended {
            logits: Array1::zeros(0),
            weights: enabled.then(|| Array1::zeros(0)),
            pooled: Array1::zeros(k),
        });
    }
    if !enabled {
        return Ok(Attended {
            logits: Array1::zeros(0),
            weights: None,
            pooled: set.vectors().sum_axis(Axis(0)),
        });
    }
    let logits = squashed(set, params).dot(&h);
    let weights = softmax(logits.view());
    let pooled = set.vectors().t().dot(&weights);
    Ok(Attended {
        logits,
        weights: Some(weights),
        pooled,
    })
}

/// Gradients flowing out of [`attend`].
#[derive(Clone, Debug)]
pub struct AttendGrads {
    pub d_query: Array1<f64>,
    /// Gradient w.r.t. each interaction vector, one per row.
    pub d_vectors: Array2<f64>,
}

/// Backward pass of [`attend`] given `∂L/∂f_i`. The projection gradient is
/// accumulated into `d_projection`.
pub fn attend_backward(
    h: ArrayView1<'_, f64>,
    set: &InteractionSet,
    params: &AttentionParams,
    attended: &Attended,
    d_pooled: ArrayView1<'_, f64>,
    mut d_projection: ArrayViewMut2<'_, f64>,
) -> AttendGrads {
    let k = params.dim();
    let n = set.len();
    let Some(alpha) = attended.weights.as_ref().filter(|_| n > 0) else {
        // Plain sum (or nothing to pool): every vector receives d_pooled.
        let d_vectors = d_pooled.broadcast((n, k)).expect("width k").to_owned();
        return AttendGrads {
            d_query: Array1::zeros(k),
            d_vectors,
        };
    };
    let vectors = set.vectors();
    let s = squashed(set, params);
    let d_alpha = vectors.dot(&d_pooled);
    let mean = alpha.dot(&d_alpha);
    let d_logits = alpha * &(d_alpha - mean);
    let d_query = s.t().dot(&d_logits);
    // d pre-activation of tanh, row p = d_logits[p]·h ⊙ (1 − s_p²)
    let mut d_pre = s.mapv(|v| 1.0 - v * v);
    for (mut row, &dl) in d_pre.axis_iter_mut(Axis(0)).zip(d_logits.iter()) {
        row *= &(&h * dl);
    }
    d_projection.scaled_add(1.0, &d_pre.t().dot(vectors));
    let mut d_vectors = d_pre.dot(&params.projection);
    for (mut row, &a) in d_vectors.axis_iter_mut(Axis(0)).zip(alpha.iter()) {
        row.scaled_add(a, &d_pooled);
    }
    AttendGrads { d_query, d_vectors }
}

/// `h ⊕ f`.
pub fn fuse(h: ArrayView1<'_, f64>, f: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if h.len() != f.len() {
        return Err(Error::shape(format!("cannot fuse widths {} and {}", h.len(), f.len())));
    }
    Ok(concatenate(Axis(0), &[h, f]).expect("1-d concatenation"))
}

/// Everything computed for one node between aggregation and the loss.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeForwardState {
    pub embedding: Array1<f64>,
    pub interactions: InteractionSet,
    pub attended: Attended,
    pub fused: Array1<f64>,
}

/// Appends `node j1 j2 weight` lines for one node.
pub fn write_attention_lines(out: &mut String, node: usize, set: &InteractionSet, weights: &Array1<f64>) {
    for (&(j1, j2), w) in set.pairs().iter().zip(weights.iter()) {
        let _ = writeln!(out, "{node} {j1} {j2} {w:.9e}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorizer::{factorize_node, FactorizerParams};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_set(nnz: usize, k: usize, r: &mut ChaCha8Rng) -> (FactorizerParams, Vec<(usize, f64)>, InteractionSet) {
        let mut fp = FactorizerParams::init(12, k, r).unwrap();
        fp.embeddings.mapv_inplace(|v| v * 80.0);
        let x: Vec<(usize, f64)> = (0..nnz).map(|j| (j * 2, r.random_range(0.5..2.0))).collect();
        let set = factorize_node(&x, &fp, None).unwrap();
        (fp, x, set)
    }

    #[test]
    fn single_interaction_gets_full_weight() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let (_, _, set) = random_set(2, 3, &mut r);
        let params = AttentionParams::init(3, &mut r);
        let h = array![0.3, -1.0, 2.0];
        let out = attend(h.view(), &set, &params, true).unwrap();
        assert_eq!(out.weights.unwrap(), array![1.0]);
        assert_eq!(out.pooled, set.vector(0).to_owned());
    }

    #[test]
    fn zero_query_or_projection_is_uniform() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let (_, _, set) = random_set(4, 3, &mut r);
        let params = AttentionParams::init(3, &mut r);
        let mean = set.vectors().mean_axis(Axis(0)).unwrap();
        let out = attend(Array1::zeros(3).view(), &set, &params, true).unwrap();
        assert!(out.weights.unwrap().iter().all(|&a| (a - 1.0 / 6.0).abs() < 1e-15));
        assert!((&out.pooled - &mean).iter().all(|d| d.abs() < 1e-15));

        let zero = AttentionParams {
            projection: Array2::zeros((3, 3)),
        };
        let out = attend(array![1.0, 2.0, 3.0].view(), &set, &zero, true).unwrap();
        assert!(out.weights.unwrap().iter().all(|&a| (a - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn empty_set_pools_to_zero_in_both_modes() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let params = AttentionParams::init(4, &mut r);
        let h = array![1.0, 1.0, 1.0, 1.0];
        for enabled in [true, false] {
            let out = attend(h.view(), &InteractionSet::empty(4), &params, enabled).unwrap();
            assert_eq!(out.pooled, Array1::<f64>::zeros(4));
        }
    }

    #[test]
    fn disabled_mode_sums() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let (_, _, set) = random_set(3, 2, &mut r);
        let params = AttentionParams::init(2, &mut r);
        let out = attend(array![5.0, -5.0].view(), &set, &params, false).unwrap();
        assert!(out.weights.is_none());
        assert_eq!(out.pooled, set.vectors().sum_axis(Axis(0)));
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let (_, _, set) = random_set(3, 2, &mut r);
        let params = AttentionParams::init(2, &mut r);
        assert!(matches!(
            attend(array![1.0].view(), &set, &params, true),
            Err(Error::Shape(_))
        ));
        assert!(fuse(array![1.0].view(), array![1.0, 2.0].view()).is_err());
    }

    #[test]
    fn fuse_concatenates_query_first() {
        let z = fuse(array![1.0, 2.0].view(), array![3.0, 4.0].view()).unwrap();
        assert_eq!(z, array![1.0, 2.0, 3.0, 4.0]);
        let z = fuse(array![1.0, 2.0].view(), Array1::zeros(2).view()).unwrap();
        assert_eq!(z, array![1.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn softmax_is_shift_invariant_and_stable() {
        let a = array![1.0, -2.0, 0.5];
        let b = &a + 1000.0;
        let diff = softmax(a.view()) - softmax(b.view());
        assert!(diff.iter().all(|d| d.abs() < 1e-12));
        assert!((softmax(b.view()).sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut r = ChaCha8Rng::seed_from_u64(6);
        let k = 3;
        let (fp, x, set) = random_set(4, k, &mut r);
        let params = AttentionParams::init(k, &mut r);
        let h = Array1::from_shape_simple_fn(k, || r.random_range(-1.0..1.0));
        let probe = Array1::from_shape_simple_fn(k, || r.random_range(-1.0..1.0));
        for enabled in [true, false] {
            let objective = |h: &Array1<f64>, wf: &Array2<f64>, v: &Array2<f64>| {
                let fp = FactorizerParams { embeddings: v.clone() };
                let set = factorize_node(&x, &fp, None).unwrap();
                let p = AttentionParams { projection: wf.clone() };
                attend(h.view(), &set, &p, enabled).unwrap().pooled.dot(&probe)
            };
            let out = attend(h.view(), &set, &params, enabled).unwrap();
            let mut d_wf = Array2::zeros((k, k));
            let grads = attend_backward(h.view(), &set, &params, &out, probe.view(), d_wf.view_mut());
            let mut d_v = Array2::zeros(fp.embeddings.raw_dim());
            set.accumulate_embedding_grad(&fp.embeddings, &grads.d_vectors, d_v.view_mut());

            let eps = 1e-6;
            let close = |a: f64, n: f64| (a - n).abs() <= 1e-5 * a.abs().max(n.abs()).max(1e-3);
            for i in 0..k {
                let mut hp = h.clone();
                let mut hm = h.clone();
                hp[i] += eps;
                hm[i] -= eps;
                let num = (objective(&hp, &params.projection, &fp.embeddings)
                    - objective(&hm, &params.projection, &fp.embeddings))
                    / (2.0 * eps);
                assert!(close(grads.d_query[i], num), "h[{i}]");
            }
            for idx in 0..k * k {
                let mut p = params.projection.clone();
                let mut m = params.projection.clone();
                p.as_slice_mut().unwrap()[idx] += eps;
                m.as_slice_mut().unwrap()[idx] -= eps;
                let num = (objective(&h, &p, &fp.embeddings) - objective(&h, &m, &fp.embeddings)) / (2.0 * eps);
                assert!(close(d_wf.as_slice().unwrap()[idx], num), "W_f[{idx}]");
            }
            for idx in 0..fp.embeddings.len() {
                let mut p = fp.embeddings.clone();
                let mut m = fp.embeddings.clone();
                p.as_slice_mut().unwrap()[idx] += eps;
                m.as_slice_mut().unwrap()[idx] -= eps;
                let num = (objective(&h, &params.projection, &p) - objective(&h, &params.projection, &m)) / (2.0 * eps);
                assert!(close(d_v.as_slice().unwrap()[idx], num), "V[{idx}]");
            }
        }
    }
}
