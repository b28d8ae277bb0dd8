use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::aggregator::AggregatorKind;
use crate::error::{Error, Result};
use crate::graph::SplitRatios;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LossMode {
    /// Node classification with cross-entropy over labeled nodes.
    #[default]
    Semi,
    /// Link prediction with sigmoid dot-product scores and negative sampling.
    Unsup,
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossMode::Semi => "semi",
            LossMode::Unsup => "unsup",
        })
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semi" => Ok(LossMode::Semi),
            "unsup" => Ok(LossMode::Unsup),
            other => Err(Error::Config(format!("unknown loss mode `{other}`"))),
        }
    }
}

/// Hyperparameters and switches for one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    pub patience: usize,
    /// Interaction embedding size; also the width of the last aggregator layer.
    pub k: usize,
    /// Aggregator widths between the input and the final `k`-wide layer.
    pub hidden: Vec<usize>,
    pub mode: LossMode,
    pub aggregator: AggregatorKind,
    /// Personalized attention; when off, interactions are summed unweighted.
    pub attention: bool,
    /// Feature factorizer branch; when off the model is the plain GNN and `z_i = h_i`.
    pub interactions: bool,
    pub relu_output: bool,
    pub nnz_cap: Option<usize>,
    pub node_split: SplitRatios,
    pub edge_split: SplitRatios,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.005,
            dropout: 0.1,
            max_epochs: 200,
            patience: 10,
            k: 16,
            hidden: vec![32],
            mode: LossMode::Semi,
            aggregator: AggregatorKind::Gcn,
            attention: true,
            interactions: true,
            relu_output: true,
            nnz_cap: None,
            node_split: SplitRatios::NODES,
            edge_split: SplitRatios::EDGES,
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("invalid value `{raw}` for `{key}`")))
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean `{raw}` for `{key}`"))),
    }
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',').map(|p| parse(key, p.trim())).collect()
}

fn parse_ratios(key: &str, raw: &str) -> Result<SplitRatios> {
    let v: Vec<f64> = parse_list(key, raw)?;
    match v.as_slice() {
        &[a, b, c] => SplitRatios::new(a, b, c),
        _ => Err(Error::Config(format!("`{key}` needs three comma-separated ratios"))),
    }
}

fn format_list<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be finite and >= 0",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config("max_epochs and patience must be at least 1".into()));
        }
        if self.k == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Full aggregator width chain for input dimension `d`.
    pub fn layer_dims(&self, d: usize) -> Vec<usize> {
        std::iter::once(d)
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(self.k))
            .collect()
    }

    /// Width of the fused representation.
    pub fn repr_dim(&self) -> usize {
        if self.interactions {
            2 * self.k
        } else {
            self.k
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "lr" => self.lr = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "hidden" => self.hidden = parse_list(key, value)?,
            "mode" => self.mode = value.parse()?,
            "aggregator" => self.aggregator = value.parse()?,
            "attention" => self.attention = parse_bool(key, value)?,
            "interactions" => self.interactions = parse_bool(key, value)?,
            "relu_output" => self.relu_output = parse_bool(key, value)?,
            "nnz_cap" => {
                self.nnz_cap = match value {
                    "none" | "" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "node_split" => self.node_split = parse_ratios(key, value)?,
            "edge_split" => self.edge_split = parse_ratios(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Every setting as ordered key-value pairs, defaults included.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let ratios = |r: &SplitRatios| format!("{},{},{}", r.train, r.val, r.test);
        vec![
            ("lr", self.lr.to_string()),
            ("dropout", self.dropout.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("k", self.k.to_string()),
            ("hidden", format_list(&self.hidden)),
            ("mode", self.mode.to_string()),
            ("aggregator", self.aggregator.to_string()),
            ("attention", self.attention.to_string()),
            ("interactions", self.interactions.to_string()),
            ("relu_output", self.relu_output.to_string()),
            ("nnz_cap", self.nnz_cap.map_or("none".into(), |c| c.to_string())),
            ("node_split", ratios(&self.node_split)),
            ("edge_split", ratios(&self.edge_split)),
            ("seed", self.seed.to_string()),
        ]
    }
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", idx + 1)))?;
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reported_settings() {
        let c = TrainConfig::default();
        assert_eq!(c.lr, 0.005);
        assert_eq!(c.dropout, 0.1);
        assert_eq!(c.max_epochs, 200);
        assert_eq!(c.layer_dims(100), vec![100, 32, 16]);
        assert_eq!(c.repr_dim(), 32);
    }

    #[test]
    fn pairs_round_trip_through_set() {
        let mut c = TrainConfig {
            mode: LossMode::Unsup,
            aggregator: AggregatorKind::SageMean,
            attention: false,
            nnz_cap: Some(30),
            hidden: vec![8, 4],
            seed: 77,
            ..Default::default()
        };
        c.edge_split = SplitRatios::new(0.7, 0.2, 0.1).unwrap();
        let mut back = TrainConfig::default();
        for (k, v) in c.to_pairs() {
            back.set(k, &v).unwrap();
        }
        assert_eq!(back, c);
    }

    #[test]
    fn bad_settings_are_config_errors() {
        let mut c = TrainConfig::default();
        assert!(c.set("nope", "1").is_err());
        assert!(c.set("lr", "fast").is_err());
        assert!(c.set("edge_split", "0.5,0.5").is_err());
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        let kv = parse_key_values("# comment\nlr = 0.01\n\nmode=unsup # trailing\n").unwrap();
        assert_eq!(kv["lr"], "0.01");
        assert_eq!(kv["mode"], "unsup");
        assert!(parse_key_values("lr 0.01").is_err());
    }
}
