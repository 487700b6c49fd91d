//! Graph autoencoder link prediction on the prior gene graph with held-out
//! edges and sampled non-edges.

use subtype_nets::data_io::align;
use subtype_nets::pipeline::{train_graph, ModelConfig};
use subtype_nets::synth::{generate, SynthConfig};

fn main() -> subtype_nets::Result<()> {
    for seed in 0..3 {
        let truth = generate(&SynthConfig { seed, ..SynthConfig::default() })?;
        let (x, g) = align(&truth.expression, &truth.graph)?;
        let (_, log, _) = train_graph(&x, &g, &ModelConfig::new(), seed)?;
        println!(
            "seed {seed}: {} edges, best epoch {}, validation AUC {:.3}, test AUC {:.3}, accuracy {:.3}",
            g.n_edges(),
            log.best_epoch,
            log.val_auc,
            log.test_auc,
            log.test_accuracy
        );
    }
    Ok(())
}
