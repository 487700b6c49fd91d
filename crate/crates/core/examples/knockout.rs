//! In-silico knockout of the genes whose degree varies most across the
//! subtype networks, against the genes whose degree varies least.

use subtype_nets::data_io::align;
use subtype_nets::knockout::{run_knockout, KnockoutConfig};
use subtype_nets::pipeline::{infer_networks, train_models, ModelConfig};
use subtype_nets::synth::{generate, SynthConfig};

fn main() -> subtype_nets::Result<()> {
    let truth = generate(&SynthConfig::default())?;
    let (x, g) = align(&truth.expression, &truth.graph)?;
    let cfg = ModelConfig::new();
    let trained = train_models(&x, &g, &cfg, 0)?;
    let nets = infer_networks(&trained, &x, &cfg, 0)?.networks;
    let result = run_knockout(&trained.patient, &x, &nets, &KnockoutConfig::default())?;
    println!("top genes by disparity: {:?}", &result.ranking[..5.min(result.ranking.len())]);
    println!("{} high, {} low", result.high.len(), result.low.len());
    for s in &result.shifts {
        println!("{} {:4} shift rate {:.2} (sigma {:.4})", s.subtype, s.set, s.shift.rate, s.shift.sigma);
    }
    Ok(())
}
