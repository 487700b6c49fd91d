//! Trains both models, fine-tunes the graph encoder per subtype and scores
//! the decoded networks against the planted modules.

use std::collections::BTreeSet;

use subtype_nets::data_io::{align, precision_at_k};
use subtype_nets::pipeline::{infer_networks, train_models, ModelConfig};
use subtype_nets::synth::{generate, SynthConfig};

fn main() -> subtype_nets::Result<()> {
    let truth = generate(&SynthConfig::default())?;
    let (x, g) = align(&truth.expression, &truth.graph)?;
    let cfg = ModelConfig::new();
    let trained = train_models(&x, &g, &cfg, 0)?;
    let inferred = infer_networks(&trained, &x, &cfg, 0)?;
    println!("prior graph: {} edges; frozen parameters unchanged: {}", g.n_edges(), inferred.frozen());
    for (yi, y) in truth.subtypes.iter().enumerate() {
        let planted: BTreeSet<(String, String)> = truth.planted_edges(yi).into_iter().collect();
        let net = &inferred.networks.networks[y];
        println!(
            "{y}: {} edges, precision@{} {:.3}",
            net.graph.n_edges(),
            planted.len(),
            precision_at_k(net, &planted, planted.len())
        );
    }
    Ok(())
}
