//! Synthetic graphs with known structure.

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Labels, SparseGraph};
use crate::rng::{rng, Stream};

/// Graph whose binary labels depend only on the product of two planted
/// feature groups.
///
/// Features `0..group_size` form group A and `group_size..2·group_size`
/// group B; each carries a hidden sign, alternating `+1, -1, …`. Every node
/// switches on exactly one feature from each group plus `noise_per_node`
/// distinct noise features, all with value 1. The label is 1 when the signs
/// of its A and B features agree. Since signs are balanced, the label is
/// independent of any single feature, so no linear model over raw features
/// recovers it. Edges are drawn uniformly at random and carry no label
/// information.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedConfig {
    pub nodes: usize,
    pub group_size: usize,
    pub noise_features: usize,
    pub noise_per_node: usize,
    pub avg_degree: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            nodes: 400,
            group_size: 4,
            noise_features: 24,
            noise_per_node: 2,
            avg_degree: 6.0,
        }
    }
}

impl PlantedConfig {
    pub fn num_features(&self) -> usize {
        2 * self.group_size + self.noise_features
    }

    /// Hidden sign of a group feature (A or B).
    pub fn sign(&self, feature: usize) -> f64 {
        if (feature % self.group_size).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }
}

fn random_edges<R: Rng + ?Sized>(n: usize, p: impl Fn(usize, usize) -> f64, r: &mut R) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if r.random::<f64>() < p(i, j) {
                edges.push((i, j));
            }
        }
    }
    edges
}

pub fn planted_interactions(cfg: &PlantedConfig, seed: u64) -> Result<SparseGraph> {
    if cfg.group_size < 2 || !cfg.group_size.is_multiple_of(2) {
        return Err(Error::Config("group size must be even and at least 2".into()));
    }
    if cfg.noise_per_node > cfg.noise_features || cfg.nodes < 2 {
        return Err(Error::Config("invalid planted-interaction configuration".into()));
    }
    let mut r = rng(seed, Stream::Synthetic);
    let m = cfg.group_size;
    let mut features = Vec::with_capacity(cfg.nodes);
    let mut labels = Vec::with_capacity(cfg.nodes);
    for _ in 0..cfg.nodes {
        let a = r.random_range(0..m);
        let b = m + r.random_range(0..m);
        let mut row = vec![(a, 1.0), (b, 1.0)];
        row.extend(
            index::sample(&mut r, cfg.noise_features, cfg.noise_per_node)
                .into_iter()
                .map(|j| (2 * m + j, 1.0)),
        );
        labels.push(Some(usize::from(cfg.sign(a) * cfg.sign(b) > 0.0)));
        features.push(row);
    }
    let p = (cfg.avg_degree / (cfg.nodes - 1) as f64).min(1.0);
    let edges = random_edges(cfg.nodes, |_, _| p, &mut r);
    SparseGraph::new(cfg.num_features(), edges, features, Some(Labels::new(2, labels)?))
}

/// Two-block stochastic block model.
///
/// Nodes `0..n/2` form block 0. With `identity_features` every node gets its
/// own one-hot feature; otherwise each node switches on `features_per_node`
/// random features out of `num_features`. Neither choice says anything about
/// the block, which is stored as the label.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockConfig {
    pub nodes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub num_features: usize,
    pub features_per_node: usize,
    pub identity_features: bool,
}

impl Default for BlockConfig {
    fn default() -> Self {
        BlockConfig {
            nodes: 100,
            p_in: 0.3,
            p_out: 0.02,
            num_features: 20,
            features_per_node: 3,
            identity_features: false,
        }
    }
}

impl BlockConfig {
    pub fn feature_dim(&self) -> usize {
        if self.identity_features {
            self.nodes
        } else {
            self.num_features
        }
    }
}

pub fn two_block(cfg: &BlockConfig, seed: u64) -> Result<SparseGraph> {
    if !cfg.identity_features && cfg.features_per_node > cfg.num_features {
        return Err(Error::Config("more features per node than features".into()));
    }
    let mut r = rng(seed, Stream::Synthetic);
    let half = cfg.nodes / 2;
    let block = |i: usize| usize::from(i >= half);
    let edges = random_edges(
        cfg.nodes,
        |i, j| if block(i) == block(j) { cfg.p_in } else { cfg.p_out },
        &mut r,
    );
    let features = (0..cfg.nodes)
        .map(|i| {
            if cfg.identity_features {
                return vec![(i, 1.0)];
            }
            let mut row: Vec<(usize, f64)> = index::sample(&mut r, cfg.num_features, cfg.features_per_node)
                .into_iter()
                .map(|j| (j, 1.0))
                .collect();
            row.sort_by_key(|&(j, _)| j);
            row
        })
        .collect();
    let labels = Labels::new(2, (0..cfg.nodes).map(|i| Some(block(i))).collect())?;
    SparseGraph::new(cfg.feature_dim(), edges, features, Some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_labels_follow_sign_product() {
        let cfg = PlantedConfig::default();
        let g = planted_interactions(&cfg, 1).unwrap();
        assert_eq!(g.num_nodes(), 400);
        let labels = g.labels().unwrap();
        for i in 0..g.num_nodes() {
            let row = g.features(i);
            assert_eq!(row.len(), 2 + cfg.noise_per_node);
            let expected = usize::from(cfg.sign(row[0].0) * cfg.sign(row[1].0) > 0.0);
            assert_eq!(labels.get(i), Some(expected));
        }
        assert_eq!(g, planted_interactions(&cfg, 1).unwrap());
    }

    #[test]
    fn no_single_feature_predicts_the_label() {
        // Conditional label rate given any group feature is near one half.
        let cfg = PlantedConfig {
            nodes: 4000,
            ..Default::default()
        };
        let g = planted_interactions(&cfg, 2).unwrap();
        let labels = g.labels().unwrap();
        for f in 0..2 * cfg.group_size {
            let with: Vec<usize> = (0..g.num_nodes())
                .filter(|&i| g.features(i).iter().any(|&(j, _)| j == f))
                .collect();
            let ones = with.iter().filter(|&&i| labels.get(i) == Some(1)).count();
            let rate = ones as f64 / with.len() as f64;
            assert!((rate - 0.5).abs() < 0.07, "feature {f}: {rate}");
        }
    }

    #[test]
    fn blocks_are_denser_inside() {
        let g = two_block(&BlockConfig::default(), 3).unwrap();
        let inside = g.edges().iter().filter(|&&(i, j)| (i < 50) == (j < 50)).count();
        let across = g.num_edges() - inside;
        assert!(inside > 10 * across, "{inside} vs {across}");
    }
}
