//! Generates the default synthetic cohort and writes it to a directory.
//!
//!     cargo run --release --example synth_cohort -- /tmp/cohort

use subtype_nets::synth::{generate, write_truth, SynthConfig};

fn main() -> subtype_nets::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "cohort".into());
    let truth = generate(&SynthConfig::default())?;
    println!(
        "{} patients x {} genes, prior graph {} edges",
        truth.expression.n_patients(),
        truth.expression.n_genes(),
        truth.graph.n_edges()
    );
    for (y, name) in truth.subtypes.iter().enumerate() {
        println!("  {name}: {} planted edges", truth.planted_edges(y).len());
    }
    let files = write_truth(&truth, &dir)?;
    println!("wrote {}", files.truth.display());
    Ok(())
}
