use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use subtype_nets::persistence::RunManifest;

const TINY: &str = r#"
seed = 3

[synth]
n_genes = 60
patients_per_subtype = [20, 20, 20]
planted_module_size = 8
backbone_edge_prob = 0.01

[model.patient]
latent_dim = 4
slot_dim = 8
codebook_size = 8
max_epochs = 15

[model.graph]
embed_dim = 8
hidden = 8
max_epochs = 15

[model.infer]
epochs = 5

[eval]
seeds = 1

[knockout]
iterations = 10

[[baselines]]
match_edges = true
[baselines.params]
method = "pearson"

[[baselines]]
[baselines.params]
method = "aracne"
permutations = 5
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_subtype-nets"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str], out: &Path, config: Option<&Path>) -> Output {
    let mut c = bin();
    c.args(args).arg("--out").arg(out);
    if let Some(cfg) = config {
        c.arg("--config").arg(cfg);
    }
    c.output().unwrap()
}

fn tiny_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.toml");
    std::fs::write(&p, TINY).unwrap();
    p
}

#[test]
fn synth_writes_cohort_and_verifiable_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = run(&["synth"], &out, None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["expression.csv", "graph.tsv", "annotations.tsv", "truth.json"] {
        assert!(out.join("data").join(f).exists(), "{f}");
    }
    let m = RunManifest::load(&out).unwrap();
    m.verify(&out).unwrap();
    assert_eq!(m.stages, vec!["synth"]);
    assert_eq!(m.artifacts.len(), 4);
}

#[test]
fn all_then_forced_stage_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out = tmp.path().join("run");
    let o = run(&["all"], &out, Some(&cfg));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for rel in [
        "config.json",
        "checkpoints/seed-3/patient.gsnpm",
        "checkpoints/seed-3/graph.gsngm",
        "checkpoints/seed-3/refined/S1.gsngm",
        "networks/seed-3/S1.edges.tsv",
        "networks/seed-3/S3.edges.tsv",
        "networks/seed-3/baselines/pearson_matched/S2.edges.tsv",
        "networks/seed-3/baselines/aracne/S2.edges.tsv",
        "reports/metrics.json",
        "reports/metrics.csv",
        "reports/precision.csv",
        "reports/knockout.json",
        "reports/knockout_pca.csv",
        "reports/knockout_table.csv",
        "reports/table.csv",
    ] {
        assert!(out.join(rel).exists(), "{rel} missing");
    }
    let manifest = RunManifest::load(&out).unwrap();
    manifest.verify(&out).unwrap();
    assert_eq!(manifest.master_seed, 3);
    assert!(manifest.edge_counts.contains_key("seed-3"));

    let net = out.join("networks/seed-3/S1.edges.tsv");
    let before = std::fs::read(&net).unwrap();
    let o = run(&["networks"], &out, Some(&cfg));
    assert_eq!(o.status.code(), Some(2), "overwrite without --force must be refused");
    assert_eq!(std::fs::read(&net).unwrap(), before);
    let o = run(&["networks", "--force"], &out, Some(&cfg));
    assert!(o.status.success());
    assert_eq!(std::fs::read(&net).unwrap(), before);
    RunManifest::load(&out).unwrap().verify(&out).unwrap();

    // A non-empty run directory needs --force for a fresh `all`.
    assert_eq!(run(&["all"], &out, Some(&cfg)).status.code(), Some(2));
}

#[test]
fn evaluate_identical_files_warns_about_degenerate_normalization() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.edges.tsv");
    let b = tmp.path().join("b.edges.tsv");
    let net = "x\ty\t0.9\ny\tz\t0.8\nz\tw\t0.7\n";
    std::fs::write(&a, net).unwrap();
    std::fs::write(&b, net).unwrap();
    let out = tmp.path().join("run");
    let mut c = bin();
    c.env("RUST_LOG", "warn");
    let o = c.arg("evaluate").arg(&a).arg(&b).arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("min-max normalization"));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("reports/metrics.json")).unwrap()).unwrap();
    let row = &report["rows"][0];
    assert_eq!(row["ged"]["mean"], 0.0);
    assert_eq!(row["dcs"]["mean"], 1.0);
    assert_eq!(row["ged"]["normalized"], 0.0);
}

#[test]
fn exit_codes_follow_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "seed = \"zero\"\n").unwrap();
    assert_eq!(run(&["synth"], &tmp.path().join("a"), Some(&bad)).status.code(), Some(2));

    let unknown = tmp.path().join("unknown.toml");
    std::fs::write(&unknown, "[synth]\nn_genez = 3\n").unwrap();
    assert_eq!(run(&["synth"], &tmp.path().join("b"), Some(&unknown)).status.code(), Some(2));

    // Nothing to preprocess: a data error, and the failed stage leaves no outputs.
    let out = tmp.path().join("c");
    let o = run(&["preprocess"], &out, None);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error:"));
    assert!(!out.join("data/preprocessed").join("expression.csv").exists());

    let broken = tmp.path().join("broken.tsv");
    std::fs::write(&broken, "a\tb\tnot-a-number\n").unwrap();
    let mut c = bin();
    let o = c.arg("evaluate").arg(&broken).arg("--out").arg(tmp.path().join("d")).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert!(bin().args(["synth", "--seed", "9", "--out"]).arg(&out).status().unwrap().success());
    let cfg: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["seed"], 9);
    assert_eq!(cfg["synth"]["seed"], 9);
}
