//! Text checkpoints.
//!
//! ```text
//! fignn-checkpoint 1
//! aggregator gcn
//! tensor aggregator.0 <rows> <cols>
//! <rows lines of cols values>
//! tensor ...
//! ```
//!
//! Values use Rust's shortest round-trip float formatting, so a
//! save/load cycle is exact and identical parameters give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::model::ModelParams;
use crate::aggregator::{AggregatorKind, AggregatorParams};
use crate::attention::AttentionParams;
use crate::error::{Error, Result};
use crate::factorizer::FactorizerParams;

pub const CHECKPOINT_MAGIC: &str = "fignn-checkpoint 1";

pub fn write_checkpoint(params: &ModelParams) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
    let _ = writeln!(out, "aggregator {}", params.aggregator.kind);
    for (name, t) in params.tensors() {
        let _ = writeln!(out, "tensor {name} {} {}", t.nrows(), t.ncols());
        for row in t.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
    }
    out
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    fs::write(path, write_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(text: &str, origin: &Path) -> Result<ModelParams> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l.trim() == CHECKPOINT_MAGIC => {}
        _ => return Err(err(1, format!("missing `{CHECKPOINT_MAGIC}` header"))),
    }
    let kind: AggregatorKind = match lines.next() {
        Some((n, l)) => match l.split_once(' ') {
            Some(("aggregator", k)) => k.trim().parse().map_err(|e: Error| err(n, e.to_string()))?,
            _ => return Err(err(n, "expected `aggregator <kind>`".into())),
        },
        None => return Err(err(2, "truncated checkpoint".into())),
    };

    let mut weights = Vec::new();
    let mut factorizer = None;
    let mut attention = None;
    let mut head = None;
    while let Some((n, header)) = lines.next() {
        if header.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (name, rows, cols) = match fields.as_slice() {
            ["tensor", name, r, c] => (
                *name,
                r.parse::<usize>().map_err(|_| err(n, format!("bad row count `{r}`")))?,
                c.parse::<usize>()
                    .map_err(|_| err(n, format!("bad column count `{c}`")))?,
            ),
            _ => return Err(err(n, "expected `tensor <name> <rows> <cols>`".into())),
        };
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (n, line) = lines.next().ok_or_else(|| err(n, format!("tensor {name} truncated")))?;
            let before = data.len();
            for f in line.split_whitespace() {
                data.push(f.parse::<f64>().map_err(|_| err(n, format!("bad value `{f}`")))?);
            }
            if data.len() - before != cols {
                return Err(err(n, format!("expected {cols} values")));
            }
        }
        let t = Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::shape(e.to_string()))?;
        match name {
            "factorizer" => factorizer = Some(FactorizerParams { embeddings: t }),
            "attention" => attention = Some(AttentionParams { projection: t }),
            "head" => head = Some(t),
            other => {
                let expected = format!("aggregator.{}", weights.len());
                if other != expected {
                    return Err(err(n, format!("unexpected tensor `{other}`, wanted `{expected}`")));
                }
                weights.push(t);
            }
        }
    }
    let params = ModelParams {
        aggregator: AggregatorParams { kind, weights },
        factorizer,
        attention,
        head,
    };
    params.validate()?;
    Ok(params)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::{LossMode, TrainConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_exact() {
        for (mode, attention, interactions) in [
            (LossMode::Semi, true, true),
            (LossMode::Unsup, false, true),
            (LossMode::Semi, true, false),
        ] {
            let config = TrainConfig {
                mode,
                attention,
                interactions,
                aggregator: AggregatorKind::SageMean,
                k: 4,
                hidden: vec![5],
                ..Default::default()
            };
            let params = ModelParams::init(&config, 7, Some(3), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            let text = write_checkpoint(&params);
            let back = read_checkpoint(&text, Path::new("mem")).unwrap();
            assert_eq!(back, params);
            assert_eq!(write_checkpoint(&back), text);
        }
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let p = Path::new("mem");
        assert!(read_checkpoint("nope\n", p).is_err());
        assert!(read_checkpoint(
            &format!("{CHECKPOINT_MAGIC}\naggregator gcn\ntensor aggregator.0 1 2\n1.0\n"),
            p
        )
        .is_err());
        assert!(read_checkpoint(
            &format!("{CHECKPOINT_MAGIC}\naggregator gcn\ntensor aggregator.3 1 1\n1.0\n"),
            p
        )
        .is_err());
    }
}
