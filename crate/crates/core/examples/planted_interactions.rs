//! FI-GCN against a plain GCN on a graph whose labels are an interaction
//! between two feature groups.
//!
//! ```text
//! cargo run --release --example planted_interactions
//! ```

use fignn::experiments::planted_benchmark;
use fignn::synthetic::PlantedConfig;

fn main() -> fignn::Result<()> {
    let report = planted_benchmark(&PlantedConfig::default(), &[0, 1, 2, 3, 4])?;
    println!("{report}");
    Ok(())
}
