//! Loads an expression CSV and an edge-list TSV, filters sparse genes and
//! aligns the two on their shared genes.
//!
//!     cargo run --release --example ingest -- expression.csv graph.tsv

use subtype_nets::data_io::{align, filter_genes, load_expression, load_graph_with_stats};
use subtype_nets::synth::{generate, write_truth, SynthConfig};

fn main() -> subtype_nets::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (xp, gp) = match args.as_slice() {
        [x, g] => (x.into(), g.into()),
        _ => {
            let dir = std::env::temp_dir().join("subtype-nets-ingest");
            let files = write_truth(&generate(&SynthConfig::default())?, &dir)?;
            (files.expression, files.graph)
        }
    };
    let x = load_expression(&xp)?;
    let (g, stats) = load_graph_with_stats(&gp)?;
    println!("expression {} x {}, subtypes {:?}", x.n_patients(), x.n_genes(), x.subtypes());
    println!("graph {} nodes, {} edges, {} lines dropped", g.n_nodes(), g.n_edges(), stats.dropped());
    let kept = filter_genes(&x, 0.10)?;
    let (xa, ga) = align(&kept, &g)?;
    println!("after filtering {} genes, aligned {} genes / {} edges", kept.n_genes(), xa.n_genes(), ga.n_edges());
    Ok(())
}
