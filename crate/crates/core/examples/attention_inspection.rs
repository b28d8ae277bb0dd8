//! Trains FI-GCN on the planted graph, then lists, for a few test nodes, the
//! feature pairs the attention weighs most, and how often the planted pair
//! (one feature from each of the first two groups) ranks first compared
//! with picking a pair at random.
//!
//! ```text
//! cargo run --release --example attention_inspection
//! ```

use fignn::aggregator::Mode;
use fignn::experiments::planted_configs;
use fignn::rng::{rng, Stream};
use fignn::synthetic::{planted_interactions, PlantedConfig};
use fignn::training::{splits_for, Session};

fn main() -> fignn::Result<()> {
    let planted = PlantedConfig::default();
    let g = planted_interactions(&planted, 0)?;
    let (config, _) = planted_configs(0)?;
    let splits = splits_for(&g, &config)?;
    let session = Session::new(&g, &splits, &config)?;
    let params = session.train()?.params;

    let ctx = session.context();
    let pass = ctx.forward(&params, Mode::Eval, &mut rng(0, Stream::Dropout))?;
    let group_end = 2 * planted.group_size;
    let test = &splits.nodes.as_ref().expect("node split").test;
    let mut planted_first = 0;
    let mut chance = 0.0;
    for &node in test {
        let state = ctx.node_state(&params, &pass, node)?;
        let Some(weights) = &state.attended.weights else {
            continue;
        };
        let mut order: Vec<usize> = (0..weights.len()).collect();
        order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));
        let pairs = state.interactions.pairs();
        chance += 1.0 / pairs.len() as f64;
        let (j1, j2) = pairs[order[0]];
        if j1 < planted.group_size && (planted.group_size..group_end).contains(&j2) {
            planted_first += 1;
        }
        if node < 40 {
            let top: Vec<String> = order
                .iter()
                .take(3)
                .map(|&p| format!("({},{}) {:.3}", pairs[p].0, pairs[p].1, weights[p]))
                .collect();
            println!("node {node:>3}: {}", top.join("  "));
        }
    }
    println!(
        "planted pair ranked first for {planted_first} of {} test nodes (random pick: {chance:.1})",
        test.len()
    );
    Ok(())
}
