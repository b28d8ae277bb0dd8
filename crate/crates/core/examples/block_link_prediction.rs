//! Unsupervised FI-GCN on a two-block graph, next to the AUC an oracle that
//! knows the blocks would reach on the same held-out edges.
//!
//! ```text
//! cargo run --release --example block_link_prediction
//! ```

use fignn::experiments::block_link_prediction;
use fignn::synthetic::BlockConfig;

fn main() -> fignn::Result<()> {
    let report = block_link_prediction(&BlockConfig::default(), &[0, 1, 2, 3, 4])?;
    println!("{report}");
    Ok(())
}
