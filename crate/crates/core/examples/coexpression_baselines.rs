//! Pearson, wTO and ARACNe-lite networks per subtype, thresholded and with a
//! fixed edge budget.

use subtype_nets::baselines::{baseline_networks, BaselineConfig, BaselineMethod};
use subtype_nets::data_io::align;
use subtype_nets::synth::{generate, SynthConfig};

fn main() -> subtype_nets::Result<()> {
    let truth = generate(&SynthConfig::default())?;
    let (x, _) = align(&truth.expression, &truth.graph)?;
    for method in BaselineMethod::ALL {
        for top_k in [None, Some(100)] {
            let cfg = BaselineConfig { top_k_edges: top_k, ..BaselineConfig::for_method(method) };
            let nets = baseline_networks(&x, &cfg)?;
            let budget = top_k.map_or("threshold".to_string(), |k| format!("top {k}"));
            println!("{:8} {budget:9} edges {:?}", method.name(), nets.edge_counts());
        }
    }
    Ok(())
}
