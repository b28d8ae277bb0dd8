//! Semi-supervised node classification with FI-GCN and FI-GraphSAGE over a
//! few seeds, reported as mean and standard deviation.
//!
//! ```text
//! cargo run --release --example node_classification
//! ```

use fignn::aggregator::AggregatorKind;
use fignn::evaluation::MetricReport;
use fignn::experiments::planted_configs;
use fignn::synthetic::{planted_interactions, PlantedConfig};
use fignn::training::{splits_for, Part, Session};

fn main() -> fignn::Result<()> {
    for kind in [AggregatorKind::Gcn, AggregatorKind::SageMean] {
        let mut runs = Vec::new();
        for seed in 0..3u64 {
            let g = planted_interactions(&PlantedConfig::default(), seed)?;
            let (mut config, _) = planted_configs(seed)?;
            config.aggregator = kind;
            let splits = splits_for(&g, &config)?;
            let session = Session::new(&g, &splits, &config)?;
            let outcome = session.train()?;
            runs.push((seed, session.evaluate(&outcome.params, Part::Test)?));
        }
        println!("FI-{kind}\n{}", MetricReport::new(runs));
    }
    Ok(())
}
