use std::collections::HashSet;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use super::{canonical, Edge, SparseGraph};
use crate::error::{Error, Result};
use crate::rng::{rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub const NODES: SplitRatios = SplitRatios {
        train: 0.1,
        val: 0.2,
        test: 0.7,
    };
    pub const EDGES: SplitRatios = SplitRatios {
        train: 0.8,
        val: 0.1,
        test: 0.1,
    };

    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let r = SplitRatios { train, val, test };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::Config(format!("split ratios must be positive: {all:?}")));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios must sum to 1: {all:?}")));
        }
        Ok(())
    }

    /// Train and val sizes are `round(ratio * total)`; test takes the remainder.
    fn sizes(&self, total: usize, what: &str) -> Result<(usize, usize, usize)> {
        self.validate()?;
        let train = (self.train * total as f64).round() as usize;
        let val = (self.val * total as f64).round() as usize;
        let test = total.saturating_sub(train + val);
        if train == 0 || val == 0 || test == 0 {
            return Err(Error::Config(format!(
                "{what} split {train}/{val}/{test} of {total} leaves an empty part"
            )));
        }
        Ok((train, val, test))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NodePartition {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EdgePartition {
    pub train: Vec<Edge>,
    pub val: Vec<Edge>,
    pub test: Vec<Edge>,
}

impl EdgePartition {
    pub fn all(&self) -> impl Iterator<Item = &Edge> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }
}

/// Node partition for classification, or positive/negative edge partitions
/// for link prediction.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DataSplits {
    pub nodes: Option<NodePartition>,
    pub positives: Option<EdgePartition>,
    pub negatives: Option<EdgePartition>,
}

impl DataSplits {
    pub fn node_classification(nodes: NodePartition) -> Self {
        DataSplits {
            nodes: Some(nodes),
            ..Default::default()
        }
    }
}

fn partition<T: Clone>(items: &[T], sizes: (usize, usize, usize)) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (a, b, _) = sizes;
    (items[..a].to_vec(), items[a..a + b].to_vec(), items[a + b..].to_vec())
}

/// Random partition of the labeled nodes.
pub fn split_nodes(g: &SparseGraph, ratios: SplitRatios, seed: u64) -> Result<NodePartition> {
    let labels = g
        .labels()
        .ok_or_else(|| Error::Config("node split requires labels".into()))?;
    let mut nodes: Vec<usize> = labels.labeled_nodes().collect();
    let sizes = ratios.sizes(nodes.len(), "node")?;
    nodes.shuffle(&mut rng(seed, Stream::NodeSplit));
    let (train, val, test) = partition(&nodes, sizes);
    Ok(NodePartition { train, val, test })
}

/// Random partition of the positive edges.
pub fn split_edges(g: &SparseGraph, ratios: SplitRatios, seed: u64) -> Result<EdgePartition> {
    let mut edges = g.edges().to_vec();
    let sizes = ratios.sizes(edges.len(), "edge")?;
    edges.shuffle(&mut rng(seed, Stream::EdgeSplit));
    let (train, val, test) = partition(&edges, sizes);
    Ok(EdgePartition { train, val, test })
}

/// Draws `count` distinct non-edges uniformly, avoiding `g`'s edges, every
/// edge in `exclude`, and self-loops. The result is sorted.
pub fn sample_negative_edges(g: &SparseGraph, count: usize, exclude: &[&[Edge]], seed: u64) -> Result<Vec<Edge>> {
    sample_negative_edges_with(g, count, exclude, &mut rng(seed, Stream::Negatives))
}

/// [`sample_negative_edges`] drawing from a caller-owned generator.
pub fn sample_negative_edges_with<R: Rng + ?Sized>(
    g: &SparseGraph,
    count: usize,
    exclude: &[&[Edge]],
    rng: &mut R,
) -> Result<Vec<Edge>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let n = g.num_nodes();
    let mut forbidden: HashSet<Edge> = g.edges().iter().copied().collect();
    for set in exclude {
        forbidden.extend(
            set.iter()
                .map(|&(i, j)| canonical(i, j))
                .filter(|&(i, j)| i != j && j < n),
        );
    }
    let total = n * n.saturating_sub(1) / 2;
    let available = total - forbidden.len();
    if count > available {
        return Err(Error::Sampling(format!(
            "requested {count} negative edges but only {available} non-edges exist"
        )));
    }

    let mut out: Vec<Edge> = if 2 * count > available || total <= 1 << 16 {
        // Dense regime: enumerate the candidates and pick a uniform subset.
        let candidates: Vec<Edge> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|e| !forbidden.contains(e))
            .collect();
        index::sample(rng, candidates.len(), count)
            .into_iter()
            .map(|k| candidates[k])
            .collect()
    } else {
        let mut chosen = HashSet::with_capacity(count);
        while chosen.len() < count {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i == j {
                continue;
            }
            let e = canonical(i, j);
            if !forbidden.contains(&e) {
                chosen.insert(e);
            }
        }
        chosen.into_iter().collect()
    };
    out.sort_unstable();
    Ok(out)
}

/// Positive edge partition plus negative partitions of matching sizes. Every
/// negative avoids the full edge set of `g` and the other negative parts.
pub fn link_prediction_splits(g: &SparseGraph, ratios: SplitRatios, seed: u64) -> Result<DataSplits> {
    let positives = split_edges(g, ratios, seed)?;
    let mut r = rng(seed, Stream::Negatives);
    let test = sample_negative_edges_with(g, positives.test.len(), &[], &mut r)?;
    let val = sample_negative_edges_with(g, positives.val.len(), &[&test], &mut r)?;
    let train = sample_negative_edges_with(g, positives.train.len(), &[&test, &val], &mut r)?;
    Ok(DataSplits {
        nodes: None,
        positives: Some(positives),
        negatives: Some(EdgePartition { train, val, test }),
    })
}
