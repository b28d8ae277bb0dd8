//! Plain-text graph files.
//!
//! * edges: one `i j` pair per line
//! * features: header `n d`, then `node feature value` triplets
//! * labels: header `n C`, then `node label` lines; absent nodes are unlabeled

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{Labels, SparseGraph, SparseRow};
use crate::error::{Error, Result};

pub const EDGE_FILE: &str = "edges.txt";
pub const FEATURE_FILE: &str = "features.txt";
pub const LABEL_FILE: &str = "labels.txt";

struct Lines<'a> {
    path: &'a Path,
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        Lines {
            path,
            inner: text.lines().enumerate(),
        }
    }

    /// Next non-blank line as (1-based line number, fields).
    fn next_record(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (idx, line) in self.inner.by_ref() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if !fields.is_empty() {
                return Some((idx + 1, fields));
            }
        }
        None
    }

    fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    fn expect_fields(&self, line: usize, fields: &[&str], count: usize) -> Result<()> {
        if fields.len() != count {
            return Err(self.error(line, format!("expected {count} fields, found {}", fields.len())));
        }
        Ok(())
    }

    fn field<T: FromStr>(&self, line: usize, raw: &str, what: &str) -> Result<T> {
        raw.parse()
            .map_err(|_| self.error(line, format!("invalid {what} `{raw}`")))
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_features(path: &Path, text: &str) -> Result<(usize, Vec<SparseRow>)> {
    let mut lines = Lines::new(path, text);
    let (line, header) = lines
        .next_record()
        .ok_or_else(|| lines.error(1, "missing `n d` header"))?;
    lines.expect_fields(line, &header, 2)?;
    let n: usize = lines.field(line, header[0], "node count")?;
    let d: usize = lines.field(line, header[1], "feature dimension")?;

    let mut rows: Vec<SparseRow> = vec![Vec::new(); n];
    while let Some((line, fields)) = lines.next_record() {
        lines.expect_fields(line, &fields, 3)?;
        let node: usize = lines.field(line, fields[0], "node id")?;
        let feature: usize = lines.field(line, fields[1], "feature id")?;
        let value: f64 = lines.field(line, fields[2], "feature value")?;
        if node >= n {
            return Err(Error::Schema(format!(
                "{}:{line}: node {node} outside declared n = {n}",
                path.display()
            )));
        }
        if feature >= d {
            return Err(Error::Schema(format!(
                "{}:{line}: feature {feature} outside declared d = {d}",
                path.display()
            )));
        }
        rows[node].push((feature, value));
    }
    Ok((d, rows))
}

fn parse_edges(path: &Path, text: &str) -> Result<Vec<(usize, usize)>> {
    let mut lines = Lines::new(path, text);
    let mut edges = Vec::new();
    while let Some((line, fields)) = lines.next_record() {
        lines.expect_fields(line, &fields, 2)?;
        let i = lines.field(line, fields[0], "node id")?;
        let j = lines.field(line, fields[1], "node id")?;
        edges.push((i, j));
    }
    Ok(edges)
}

fn parse_labels(path: &Path, text: &str, n: usize) -> Result<Labels> {
    let mut lines = Lines::new(path, text);
    let (line, header) = lines
        .next_record()
        .ok_or_else(|| lines.error(1, "missing `n C` header"))?;
    lines.expect_fields(line, &header, 2)?;
    let declared: usize = lines.field(line, header[0], "node count")?;
    let classes: usize = lines.field(line, header[1], "class count")?;
    if declared != n {
        return Err(Error::Schema(format!(
            "{}: label header declares {declared} nodes, features declare {n}",
            path.display()
        )));
    }
    let mut per_node = vec![None; n];
    while let Some((line, fields)) = lines.next_record() {
        lines.expect_fields(line, &fields, 2)?;
        let node: usize = lines.field(line, fields[0], "node id")?;
        let label: usize = lines.field(line, fields[1], "label")?;
        if node >= n {
            return Err(Error::Schema(format!(
                "{}:{line}: node {node} outside declared n = {n}",
                path.display()
            )));
        }
        if label >= classes {
            return Err(Error::Schema(format!(
                "{}:{line}: label {label} outside declared C = {classes}",
                path.display()
            )));
        }
        per_node[node] = Some(label);
    }
    Labels::new(classes, per_node)
}

/// Loads a graph from its three text files. The node count comes from the
/// feature file header.
pub fn load_graph(edge_file: &Path, feature_file: &Path, label_file: Option<&Path>) -> Result<SparseGraph> {
    let (d, rows) = parse_features(feature_file, &read(feature_file)?)?;
    let edges = parse_edges(edge_file, &read(edge_file)?)?;
    let labels = match label_file {
        Some(p) => Some(parse_labels(p, &read(p)?, rows.len())?),
        None => None,
    };
    SparseGraph::new(d, edges, rows, labels)
}

/// Loads `edges.txt`, `features.txt` and, when present, `labels.txt` from `dir`.
pub fn load_graph_dir(dir: &Path) -> Result<SparseGraph> {
    let labels = dir.join(LABEL_FILE);
    load_graph(
        &dir.join(EDGE_FILE),
        &dir.join(FEATURE_FILE),
        labels.exists().then_some(labels.as_path()),
    )
}

/// Writes the graph in the layout read by [`load_graph_dir`].
pub fn write_graph(g: &SparseGraph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut edges = String::new();
    for &(i, j) in g.edges() {
        let _ = writeln!(edges, "{i} {j}");
    }
    let mut features = format!("{} {}\n", g.num_nodes(), g.num_features());
    for (i, row) in g.feature_rows().iter().enumerate() {
        for &(j, v) in row {
            let _ = writeln!(features, "{i} {j} {v}");
        }
    }
    let path = dir.join(EDGE_FILE);
    fs::write(&path, edges).map_err(|e| Error::io(&path, e))?;
    let path = dir.join(FEATURE_FILE);
    fs::write(&path, features).map_err(|e| Error::io(&path, e))?;

    if let Some(labels) = g.labels() {
        let mut text = format!("{} {}\n", g.num_nodes(), labels.classes());
        for i in labels.labeled_nodes() {
            let _ = writeln!(text, "{i} {}", labels.get(i).unwrap_or_default());
        }
        let path = dir.join(LABEL_FILE);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_files(dir: &Path, edges: &str, features: &str, labels: Option<&str>) {
        fs::write(dir.join(EDGE_FILE), edges).unwrap();
        fs::write(dir.join(FEATURE_FILE), features).unwrap();
        if let Some(l) = labels {
            fs::write(dir.join(LABEL_FILE), l).unwrap();
        }
    }

    #[test]
    fn degenerate_single_node() {
        let dir = tempfile::tempdir().unwrap();
        write_files(dir.path(), "", "1 1\n0 0 1.5\n", None);
        let g = load_graph_dir(dir.path()).unwrap();
        assert_eq!(g.num_nodes(), 1);
        assert_eq!(g.num_edges(), 0);
        assert_eq!(g.features(0), &[(0, 1.5)]);
        assert!(g.labels().is_none());
    }

    #[test]
    fn both_directions_make_one_edge() {
        let dir = tempfile::tempdir().unwrap();
        write_files(dir.path(), "0 1\n1 0\n", "2 2\n0 1 1\n1 0 1\n", Some("2 2\n0 1\n"));
        let g = load_graph_dir(dir.path()).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
        let labels = g.labels().unwrap();
        assert_eq!(labels.get(0), Some(1));
        assert_eq!(labels.get(1), None);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        write_files(dir.path(), "0 1\n\n1 x\n", "2 1\n", None);
        match load_graph_dir(dir.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn schema_violations() {
        let dir = tempfile::tempdir().unwrap();
        write_files(dir.path(), "", "2 3\n0 3 1.0\n", None);
        assert!(matches!(load_graph_dir(dir.path()), Err(Error::Schema(_))));

        write_files(dir.path(), "", "2 3\n0 2 1.0\n", Some("2 2\n1 2\n"));
        assert!(matches!(load_graph_dir(dir.path()), Err(Error::Schema(_))));

        write_files(dir.path(), "0 5\n", "2 3\n", None);
        fs::remove_file(dir.path().join(LABEL_FILE)).unwrap();
        assert!(matches!(load_graph_dir(dir.path()), Err(Error::Schema(_))));
    }

    #[test]
    fn write_then_load_is_identity() {
        let g = SparseGraph::new(
            4,
            [(0, 1), (1, 2)],
            vec![vec![(0, 1.0), (3, -0.25)], vec![(2, 2.0)], vec![]],
            Some(Labels::new(3, vec![Some(2), None, Some(0)]).unwrap()),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_graph(&g, dir.path()).unwrap();
        assert_eq!(load_graph_dir(dir.path()).unwrap(), g);
    }
}
