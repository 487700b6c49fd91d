//! Trains the vector-quantized patient autoencoder and checks how well the
//! latent patient embeddings separate the subtypes.

use subtype_nets::data_io::align;
use std::collections::BTreeSet;

use subtype_nets::patient_m::{nearest_code_indices, silhouette_score};
use subtype_nets::pipeline::{train_patient, ModelConfig};
use subtype_nets::synth::{generate, SynthConfig};

fn main() -> subtype_nets::Result<()> {
    let truth = generate(&SynthConfig::default())?;
    let (x, _) = align(&truth.expression, &truth.graph)?;
    let (model, log) = train_patient(&x, &ModelConfig::new(), 0)?;
    println!(
        "{} epochs, validation reconstruction {:.3} -> {:.3}, {} codes re-seeded",
        log.train_loss.len(),
        log.initial_val_recon,
        log.val_recon[log.best_epoch],
        log.reseeded_codes
    );
    let zp = model.embed(&x.values)?;
    let labels = x.labels.clone().unwrap_or_default();
    println!("silhouette of Z_p by subtype: {:.3}", silhouette_score(&zp, &labels));
    let (_, slots) = model.encode(&x.values)?;
    let used: BTreeSet<usize> = nearest_code_indices(&model.codebook.value, &slots)?.into_iter().collect();
    println!("{} of {} codes in use", used.len(), model.codebook.value.rows());
    Ok(())
}
