//! Saves a trained graph model, reloads it and checks the predictions match,
//! then records the file in a run manifest.

use subtype_nets::data_io::align;
use subtype_nets::graph_m::GraphModel;
use subtype_nets::persistence::{load_checkpoint, save_checkpoint, RunManifest};
use subtype_nets::pipeline::{train_graph, ModelConfig};
use subtype_nets::synth::{generate, SynthConfig};

fn main() -> subtype_nets::Result<()> {
    let dir = std::env::temp_dir().join("subtype-nets-checkpoint");
    std::fs::create_dir_all(&dir).map_err(|e| subtype_nets::Error::io(&dir, e))?;
    let truth = generate(&SynthConfig::default())?;
    let (x, g) = align(&truth.expression, &truth.graph)?;
    let cfg = ModelConfig::new();
    let (model, _, ctx) = train_graph(&x, &g, &cfg, 0)?;

    let digest = save_checkpoint(&model, dir.join("graph.gsngm"))?;
    let back: GraphModel = load_checkpoint(dir.join("graph.gsngm"))?;
    let same = back.embeddings(&ctx)? == model.embeddings(&ctx)?;
    println!("checkpoint sha256 {digest}; reloaded embeddings identical: {same}");

    let mut manifest = RunManifest::new(&cfg, 0, 1)?;
    manifest.record_artifact(&dir, "graph.gsngm")?;
    manifest.record_stage("train-graph");
    manifest.save(&dir)?;
    RunManifest::load(&dir)?.verify(&dir)?;
    println!("manifest verified in {}", dir.display());
    Ok(())
}
