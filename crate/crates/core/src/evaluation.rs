//! Classification and ranking metrics, and embedding export.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::graph::Labels;
use crate::training::sigmoid;

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = c;
        }
    }
    best
}

/// Predicted class per node from representations and a classifier head.
pub fn predict_classes(z: ArrayView2<'_, f64>, head: ArrayView2<'_, f64>) -> Vec<usize> {
    z.dot(&head).rows().into_iter().map(argmax).collect()
}

/// Accuracy and micro-averaged F1 over `eval_nodes`.
pub fn classify_metrics(predictions: &[usize], labels: &Labels, eval_nodes: &[usize]) -> Result<(f64, f64)> {
    if eval_nodes.is_empty() {
        return Err(Error::Config("cannot score an empty evaluation set".into()));
    }
    let classes = labels.classes();
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fn_ = vec![0usize; classes];
    for &node in eval_nodes {
        let truth = labels
            .get(node)
            .ok_or_else(|| Error::Config(format!("evaluation node {node} has no label")))?;
        let pred = *predictions
            .get(node)
            .ok_or_else(|| Error::shape(format!("no prediction for node {node}")))?;
        if pred == truth {
            tp[truth] += 1;
        } else {
            fn_[truth] += 1;
            if pred < classes {
                fp[pred] += 1;
            }
        }
    }
    let (tp, fp, fn_): (usize, usize, usize) = (tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());
    let acc = tp as f64 / eval_nodes.len() as f64;
    let denom = 2 * tp + fp + fn_;
    let f1 = if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    };
    Ok((acc, f1))
}

/// Link probability `σ(z_iᵀ z_j)`.
pub fn score_edge(zi: ArrayView1<'_, f64>, zj: ArrayView1<'_, f64>) -> Result<f64> {
    if zi.len() != zj.len() {
        return Err(Error::shape(format!(
            "cannot score widths {} and {}",
            zi.len(),
            zj.len()
        )));
    }
    Ok(sigmoid(zi.dot(&zj)))
}

/// ROC AUC (ties count half) and average precision (ties ranked in input order).
pub fn ranking_metrics(scores: &[f64], positive: &[bool]) -> Result<(f64, f64)> {
    if scores.len() != positive.len() {
        return Err(Error::shape("scores and flags differ in length"));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Config(
            "ranking metrics need at least one positive and one negative".into(),
        ));
    }

    // AUC from average ranks (Mann-Whitney U).
    let mut ascending: Vec<usize> = (0..scores.len()).collect();
    ascending.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut start = 0;
    while start < ascending.len() {
        let mut end = start + 1;
        while end < ascending.len() && scores[ascending[end]] == scores[ascending[start]] {
            end += 1;
        }
        let avg_rank = (start + end + 1) as f64 / 2.0;
        let positives_in_run = ascending[start..end].iter().filter(|&&i| positive[i]).count();
        pos_rank_sum += avg_rank * positives_in_run as f64;
        start = end;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    let auc = (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * q);

    // AP over a stable descending ranking.
    let mut descending: Vec<usize> = (0..scores.len()).collect();
    descending.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut precision_sum = 0.0;
    for (rank, &i) in descending.iter().enumerate() {
        if positive[i] {
            hits += 1;
            precision_sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok((auc, precision_sum / p))
}

/// Writes `node v_1 … v_m` lines with 9 significant digits.
pub fn export_embeddings(z: ArrayView2<'_, f64>, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(z.len() * 16);
    for (i, row) in z.rows().into_iter().enumerate() {
        let _ = write!(out, "{i}");
        for v in row {
            let _ = write!(out, " {v:.8e}");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`export_embeddings`].
pub fn read_embeddings(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let mut fields = line.split_whitespace();
        let Some(node) = fields.next() else { continue };
        if node.parse::<usize>().ok() != Some(rows.len()) {
            return Err(parse_err(format!("expected node id {}, found `{node}`", rows.len())));
        }
        let row = fields
            .map(|f| f.parse::<f64>().map_err(|_| parse_err(format!("bad value `{f}`"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::shape("ragged embedding rows"));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((flat.len() / width.max(1), width), flat).map_err(|e| Error::shape(e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Classification,
    LinkPrediction,
}

/// Metrics of one run: (ACC, micro-F1) or (AUC, AP).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub task: Task,
    pub first: f64,
    pub second: f64,
}

impl Metrics {
    pub fn classification(acc: f64, f1: f64) -> Self {
        Metrics {
            task: Task::Classification,
            first: acc,
            second: f1,
        }
    }

    pub fn link_prediction(auc: f64, ap: f64) -> Self {
        Metrics {
            task: Task::LinkPrediction,
            first: auc,
            second: ap,
        }
    }

    pub fn names(&self) -> (&'static str, &'static str) {
        match self.task {
            Task::Classification => ("acc", "micro_f1"),
            Task::LinkPrediction => ("auc", "ap"),
        }
    }
}

/// Per-seed metrics and their mean and standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub runs: Vec<(u64, Metrics)>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl MetricReport {
    pub fn new(runs: Vec<(u64, Metrics)>) -> Self {
        MetricReport { runs }
    }

    /// Mean and standard deviation of both metrics.
    pub fn summary(&self) -> Option<((f64, f64), (f64, f64))> {
        if self.runs.is_empty() {
            return None;
        }
        let first: Vec<f64> = self.runs.iter().map(|(_, m)| m.first).collect();
        let second: Vec<f64> = self.runs.iter().map(|(_, m)| m.second).collect();
        Some((mean_std(&first), mean_std(&second)))
    }

    /// `key=value` lines, one per seed plus one aggregate line.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        for (seed, m) in &self.runs {
            let (a, b) = m.names();
            let _ = writeln!(out, "seed={seed} {a}={:.6} {b}={:.6}", m.first, m.second);
        }
        if let (Some(((ma, sa), (mb, sb))), Some((_, m))) = (self.summary(), self.runs.first()) {
            let (a, b) = m.names();
            let _ = writeln!(
                out,
                "aggregate runs={} {a}_mean={ma:.6} {a}_std={sa:.6} {b}_mean={mb:.6} {b}_std={sb:.6}",
                self.runs.len()
            );
        }
        out
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let Some((_, first)) = self.runs.first() else {
            return writeln!(f, "no runs");
        };
        let (a, b) = first.names();
        let (a, b) = (a.to_uppercase(), b.to_uppercase());
        writeln!(f, "{:>8}  {:>8}  {:>8}", "seed", a, b)?;
        for (seed, m) in &self.runs {
            writeln!(f, "{:>8}  {:>7.2}%  {:>7.2}%", seed, 100.0 * m.first, 100.0 * m.second)?;
        }
        if let Some(((ma, sa), (mb, sb))) = self.summary() {
            writeln!(
                f,
                "{:>8}  {:>7.2}%  {:>7.2}%   (std {:.2} / {:.2})",
                "mean",
                100.0 * ma,
                100.0 * mb,
                100.0 * sa,
                100.0 * sb
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn labels(per_node: &[usize], classes: usize) -> Labels {
        Labels::new(classes, per_node.iter().map(|&l| Some(l)).collect()).unwrap()
    }

    #[test]
    fn perfect_and_all_wrong_classification() {
        let l = labels(&[0, 1, 2, 1], 3);
        let nodes = [0, 1, 2, 3];
        assert_eq!(classify_metrics(&[0, 1, 2, 1], &l, &nodes).unwrap(), (1.0, 1.0));
        let (acc, f1) = classify_metrics(&[0, 0, 0, 0], &labels(&[1, 1, 2, 2], 3), &nodes).unwrap();
        assert_eq!(acc, 0.0);
        assert_eq!(f1, 0.0);
        assert!(matches!(classify_metrics(&[0], &l, &[]), Err(Error::Config(_))));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(array![1.0, 3.0, 3.0].view()), 1);
        assert_eq!(
            predict_classes(array![[1.0, 0.0]].view(), array![[0.5, 0.5], [1.0, 0.0]].view()),
            vec![0]
        );
    }

    #[test]
    fn edge_scores() {
        let z0 = array![0.0, 0.0];
        assert_eq!(score_edge(z0.view(), array![5.0, -2.0].view()).unwrap(), 0.5);
        let a = (3f64.ln() / 2.0).sqrt();
        let z = array![a, a];
        assert!((score_edge(z.view(), z.view()).unwrap() - 0.75).abs() < 1e-15);
        let (x, y) = (array![0.3, -1.2], array![2.0, 0.7]);
        assert_eq!(
            score_edge(x.view(), y.view()).unwrap(),
            score_edge(y.view(), x.view()).unwrap()
        );
        assert!(score_edge(x.view(), array![1.0].view()).is_err());
    }

    #[test]
    fn ranking_examples() {
        let (auc, ap) = ranking_metrics(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap();
        assert_eq!((auc, ap), (1.0, 1.0));
        let (auc, _) = ranking_metrics(&[0.1, 0.2, 0.9], &[true, true, false]).unwrap();
        assert_eq!(auc, 0.0);
        let (auc, ap) = ranking_metrics(&[0.9, 0.4, 0.6], &[true, true, false]).unwrap();
        assert!((auc - 0.5).abs() < 1e-15);
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        assert!(ranking_metrics(&[0.1, 0.2], &[true, true]).is_err());
        let (auc, _) = ranking_metrics(&[0.5, 0.5], &[true, false]).unwrap();
        assert_eq!(auc, 0.5);
    }

    #[test]
    fn export_round_trip() {
        let z = array![
            [0.123456789, -1.0, 2.5e-3, 0.0],
            [1.0, 2.0, 3.0, 4.0],
            [-0.5, 0.25, 0.75, -0.999999999]
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        export_embeddings(z.view(), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().all(|l| l.split_whitespace().count() == 5));
        let back = read_embeddings(&path).unwrap();
        assert!((&back - &z).iter().all(|d| d.abs() < 1e-8));
        assert!(export_embeddings(z.view(), &dir.path().join("missing/emb.txt")).is_err());
    }

    #[test]
    fn report_formats() {
        let r = MetricReport::new(vec![
            (1, Metrics::classification(0.8, 0.8)),
            (2, Metrics::classification(0.6, 0.6)),
        ]);
        let ((m, s), _) = r.summary().unwrap();
        assert!((m - 0.7).abs() < 1e-12 && (s - 0.1).abs() < 1e-12);
        let kv = r.to_key_values();
        assert!(kv.contains("seed=1 acc=0.800000 micro_f1=0.800000"));
        assert!(kv.contains("acc_mean=0.700000"));
        assert!(r.to_string().contains("80.00%"));
    }
}
