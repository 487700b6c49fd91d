use std::collections::BTreeSet;

use subtype_nets::data_io::align;
use subtype_nets::patient_m::{train_patient_m, PatientConfig, PatientModel};
use subtype_nets::persistence::{load_checkpoint, save_checkpoint, RunManifest, GRAPH_MAGIC};
use subtype_nets::graph_m::GraphModel;
use subtype_nets::synth::{generate, load_planted_edges, write_truth, SynthConfig};
use subtype_nets::Error;

fn small() -> SynthConfig {
    SynthConfig {
        n_genes: 40,
        patients_per_subtype: vec![12; 3],
        planted_module_size: 6,
        backbone_edge_prob: 0.02,
        ..SynthConfig::default()
    }
}

#[test]
fn trained_patient_model_survives_a_file_round_trip() {
    let t = generate(&small()).unwrap();
    let (x, _) = align(&t.expression, &t.graph).unwrap();
    let cfg = PatientConfig {
        latent_dim: 4,
        slot_dim: 6,
        codebook_size: 8,
        max_epochs: 5,
        ..PatientConfig::default()
    };
    let (model, _) = train_patient_m(&x, &cfg, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.gsnpm");
    let digest = save_checkpoint(&model, &path).unwrap();
    assert_eq!(digest.len(), 64);
    let back: PatientModel = load_checkpoint(&path).unwrap();
    assert_eq!(back.embed(&x.values).unwrap(), model.embed(&x.values).unwrap());

    // A patient checkpoint is not a graph checkpoint.
    let err = load_checkpoint::<GraphModel>(&path).unwrap_err();
    assert!(matches!(err, Error::Format(_)), "{err}");
    assert!(err.to_string().contains(std::str::from_utf8(GRAPH_MAGIC).unwrap()));

    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    std::fs::write(&path, &bytes).unwrap();
    assert!(load_checkpoint::<PatientModel>(&path).is_err());
}

#[test]
fn manifest_detects_changed_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let t = generate(&small()).unwrap();
    write_truth(&t, dir.path()).unwrap();
    let mut m = RunManifest::new(&small(), 0, 1).unwrap();
    for f in ["expression.csv", "graph.tsv", "annotations.tsv", "truth.json"] {
        m.record_artifact(dir.path(), f).unwrap();
    }
    m.record_stage("synth");
    m.save(dir.path()).unwrap();
    let loaded = RunManifest::load(dir.path()).unwrap();
    loaded.verify(dir.path()).unwrap();

    std::fs::write(dir.path().join("graph.tsv"), "a\tb\n").unwrap();
    assert!(matches!(loaded.verify(dir.path()), Err(Error::Corruption(_))));

    // Reopening a run with another configuration is refused.
    let other = SynthConfig { seed: 5, ..small() };
    assert!(matches!(RunManifest::load_or_new(dir.path(), &other, 0, 1), Err(Error::Config(_))));
}

#[test]
fn planted_edges_round_trip_through_truth_file() {
    let t = generate(&small()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = write_truth(&t, dir.path()).unwrap();
    let planted = load_planted_edges(&files.truth).unwrap();
    assert_eq!(planted.len(), t.subtypes.len());
    for (yi, y) in t.subtypes.iter().enumerate() {
        let want: BTreeSet<(String, String)> = t.planted_edges(yi).into_iter().collect();
        assert_eq!(planted[y], want);
        assert!(planted[y].iter().all(|(a, b)| a < b));
    }
}
