//! Sparse-feature embeddings and their pairwise element-wise interactions.
//!
//! Feature `j` owns a k-dimensional embedding `v_j`. For a node with non-zero
//! features `x_j`, every unordered pair `j1 < j2` yields the interaction
//! vector `(x_j1·v_j1) ⊙ (x_j2·v_j2)`. Pairs that involve a zero feature are
//! identically zero and are never materialized.

use ndarray::{Array2, ArrayView1, ArrayViewMut2, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Embedding table, one row per feature.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizerParams {
    pub embeddings: Array2<f64>,
}

impl FactorizerParams {
    pub const INIT_STD: f64 = 0.01;

    pub fn init<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("embedding size must be at least 1".into()));
        }
        let dist = Normal::new(0.0, Self::INIT_STD).expect("valid std");
        Ok(FactorizerParams {
            embeddings: Array2::from_shape_simple_fn((d, k), || dist.sample(rng)),
        })
    }

    pub fn zeros_like(&self) -> Self {
        FactorizerParams {
            embeddings: Array2::zeros(self.embeddings.raw_dim()),
        }
    }

    pub fn num_features(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }
}

/// Interaction vectors of one node, in lexicographic pair order.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionSet {
    pairs: Vec<(usize, usize)>,
    /// `x_j1 · x_j2` for each pair.
    scales: Vec<f64>,
    /// One interaction vector per row.
    vectors: Array2<f64>,
}

impl InteractionSet {
    pub fn empty(k: usize) -> Self {
        InteractionSet {
            pairs: Vec::new(),
            scales: Vec::new(),
            vectors: Array2::zeros((0, k)),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn vector(&self, p: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(p)
    }

    /// Reorders the interactions; `order[p]` is the old position of the new `p`-th item.
    pub fn reordered(&self, order: &[usize]) -> Self {
        InteractionSet {
            pairs: order.iter().map(|&p| self.pairs[p]).collect(),
            scales: order.iter().map(|&p| self.scales[p]).collect(),
            vectors: self.vectors.select(ndarray::Axis(0), order),
        }
    }

    /// Adds `∂L/∂v` to `grad` given `∂L/∂e_p` in the rows of `d_vectors`.
    pub fn accumulate_embedding_grad(
        &self,
        embeddings: &Array2<f64>,
        d_vectors: &Array2<f64>,
        mut grad: ArrayViewMut2<'_, f64>,
    ) {
        for (p, &(j1, j2)) in self.pairs.iter().enumerate() {
            let s = self.scales[p];
            let de = d_vectors.row(p);
            let (v1, v2) = (embeddings.row(j1), embeddings.row(j2));
            Zip::from(grad.row_mut(j1))
                .and(&de)
                .and(&v2)
                .for_each(|g, &d, &v| *g += s * d * v);
            Zip::from(grad.row_mut(j2))
                .and(&de)
                .and(&v1)
                .for_each(|g, &d, &v| *g += s * d * v);
        }
    }
}

/// Keeps the `cap` largest-magnitude entries (ties to the lower index), in index order.
fn apply_cap(x: &[(usize, f64)], cap: Option<usize>) -> Vec<(usize, f64)> {
    match cap {
        Some(c) if x.len() > c => {
            let mut kept: Vec<(usize, f64)> = x.to_vec();
            kept.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
            kept.truncate(c);
            kept.sort_by_key(|&(j, _)| j);
            kept
        }
        _ => x.to_vec(),
    }
}

/// Enumerates the node's pairwise interactions. `x` lists `(feature, value)`
/// with strictly increasing feature indices; zero values are skipped.
pub fn factorize_node(x: &[(usize, f64)], params: &FactorizerParams, nnz_cap: Option<usize>) -> Result<InteractionSet> {
    let d = params.num_features();
    let k = params.dim();
    for w in x.windows(2) {
        if w[0].0 >= w[1].0 {
            return Err(Error::Schema(format!(
                "feature indices not strictly increasing at {}",
                w[1].0
            )));
        }
    }
    if let Some(&(j, _)) = x.iter().find(|&&(j, _)| j >= d) {
        return Err(Error::Schema(format!("feature index {j} out of range for d = {d}")));
    }
    let active: Vec<(usize, f64)> = apply_cap(x, nnz_cap).into_iter().filter(|&(_, v)| v != 0.0).collect();
    let count = active.len() * active.len().saturating_sub(1) / 2;
    let mut pairs = Vec::with_capacity(count);
    let mut scales = Vec::with_capacity(count);
    let mut vectors = Array2::zeros((count, k));
    let v = &params.embeddings;
    let mut p = 0;
    for (a, &(j1, x1)) in active.iter().enumerate() {
        for &(j2, x2) in &active[a + 1..] {
            let s = x1 * x2;
            Zip::from(vectors.row_mut(p))
                .and(&v.row(j1))
                .and(&v.row(j2))
                .for_each(|e, &u, &w| *e = s * u * w);
            pairs.push((j1, j2));
            scales.push(s);
            p += 1;
        }
    }
    Ok(InteractionSet { pairs, scales, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(v: Array2<f64>) -> FactorizerParams {
        FactorizerParams { embeddings: v }
    }

    #[test]
    fn fewer_than_two_features_is_empty() {
        let p = params(Array2::ones((4, 3)));
        assert!(factorize_node(&[], &p, None).unwrap().is_empty());
        assert!(factorize_node(&[(2, 5.0)], &p, None).unwrap().is_empty());
        assert_eq!(factorize_node(&[(2, 5.0)], &p, None).unwrap().dim(), 3);
    }

    #[test]
    fn scalar_pair() {
        let p = params(array![[0.0], [3.0], [0.0], [5.0]]);
        let set = factorize_node(&[(1, 1.0), (3, 2.0)], &p, None).unwrap();
        assert_eq!(set.pairs(), &[(1, 3)]);
        assert_eq!(set.vector(0)[0], 30.0);
    }

    #[test]
    fn four_features_give_six_pairs_in_order() {
        let p = params(Array2::ones((10, 2)));
        let set = factorize_node(&[(0, 1.0), (2, 1.0), (5, 1.0), (9, 1.0)], &p, None).unwrap();
        assert_eq!(set.len(), 6);
        assert_eq!(set.pairs(), &[(0, 2), (0, 5), (0, 9), (2, 5), (2, 9), (5, 9)]);
    }

    #[test]
    fn zero_values_are_skipped_and_bad_indices_rejected() {
        let p = params(Array2::ones((4, 2)));
        let set = factorize_node(&[(0, 1.0), (1, 0.0), (2, 2.0)], &p, None).unwrap();
        assert_eq!(set.pairs(), &[(0, 2)]);
        assert!(matches!(
            factorize_node(&[(0, 1.0), (4, 1.0)], &p, None),
            Err(Error::Schema(_))
        ));
        assert!(factorize_node(&[(2, 1.0), (1, 1.0)], &p, None).is_err());
    }

    #[test]
    fn cap_keeps_largest_magnitudes() {
        let p = params(Array2::ones((6, 1)));
        let set = factorize_node(&[(0, 0.1), (1, -3.0), (2, 2.0), (5, 0.5)], &p, Some(3)).unwrap();
        assert_eq!(set.pairs(), &[(1, 2), (1, 5), (2, 5)]);
    }

    #[test]
    fn scaling_a_feature_scales_its_interactions() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let p = FactorizerParams::init(8, 4, &mut r).unwrap();
        let x = vec![(1, 0.7), (3, -1.2), (6, 2.0)];
        let base = factorize_node(&x, &p, None).unwrap();
        let mut scaled_x = x.clone();
        scaled_x[1].1 *= -2.5;
        let scaled = factorize_node(&scaled_x, &p, None).unwrap();
        for (q, &(j1, j2)) in base.pairs().iter().enumerate() {
            let c = if j1 == 3 || j2 == 3 { -2.5 } else { 1.0 };
            let diff = &scaled.vector(q) - &(&base.vector(q) * c);
            assert!(diff.iter().all(|d| d.abs() < 1e-15));
        }
    }

    #[test]
    fn embedding_gradient_matches_finite_differences() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let mut p = FactorizerParams::init(6, 3, &mut r).unwrap();
        p.embeddings.mapv_inplace(|v| v * 100.0);
        let x = vec![(0, 1.5), (2, -0.5), (3, 2.0), (5, 1.0)];
        let probe = Array2::from_shape_simple_fn((6, 3), || r.random_range(-1.0..1.0));
        let objective = |v: &Array2<f64>| {
            let set = factorize_node(&x, &params(v.clone()), None).unwrap();
            (set.vectors() * &probe).sum()
        };
        let set = factorize_node(&x, &p, None).unwrap();
        let mut grad = Array2::zeros(p.embeddings.raw_dim());
        set.accumulate_embedding_grad(&p.embeddings, &probe, grad.view_mut());
        let eps = 1e-6;
        for idx in 0..grad.len() {
            let mut plus = p.embeddings.clone();
            let mut minus = p.embeddings.clone();
            plus.as_slice_mut().unwrap()[idx] += eps;
            minus.as_slice_mut().unwrap()[idx] -= eps;
            let num = (objective(&plus) - objective(&minus)) / (2.0 * eps);
            let ana = grad.as_slice().unwrap()[idx];
            assert!((num - ana).abs() <= 1e-6 * ana.abs().max(1.0), "{idx}: {ana} vs {num}");
        }
    }
}
