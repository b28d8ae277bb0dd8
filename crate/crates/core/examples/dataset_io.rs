//! Loads a dataset directory (edges.txt, features.txt, labels.txt), or
//! writes and reloads a small synthetic one when no directory is given,
//! then prints its size and the default splits.
//!
//! ```text
//! cargo run --example dataset_io -- [DATASET_DIR]
//! ```

use std::path::PathBuf;

use fignn::graph::{link_prediction_splits, load_graph_dir, split_nodes, write_graph, SplitRatios};
use fignn::synthetic::{two_block, BlockConfig};

fn main() -> fignn::Result<()> {
    let dir = match std::env::args().nth(1) {
        Some(d) => PathBuf::from(d),
        None => {
            let dir = std::env::temp_dir().join("fignn-dataset-io");
            write_graph(&two_block(&BlockConfig::default(), 0)?, &dir)?;
            dir
        }
    };
    let g = load_graph_dir(&dir)?;
    println!(
        "{}: {} nodes, {} edges, {} features, {:?} classes",
        dir.display(),
        g.num_nodes(),
        g.num_edges(),
        g.num_features(),
        g.num_classes()
    );
    if g.labels().is_some() {
        let nodes = split_nodes(&g, SplitRatios::NODES, 0)?;
        println!(
            "node split: {} train / {} val / {} test",
            nodes.train.len(),
            nodes.val.len(),
            nodes.test.len()
        );
    }
    let links = link_prediction_splits(&g, SplitRatios::EDGES, 0)?;
    let (pos, neg) = (links.positives.expect("positives"), links.negatives.expect("negatives"));
    println!(
        "edge split: {}/{}/{} positives, {}/{}/{} negatives",
        pos.train.len(),
        pos.val.len(),
        pos.test.len(),
        neg.train.len(),
        neg.val.len(),
        neg.test.len()
    );
    Ok(())
}
