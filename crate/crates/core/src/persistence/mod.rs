//! Model checkpoints and run manifests.

mod checkpoint;
mod manifest;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    CHECKPOINT_VERSION, GRAPH_MAGIC, PATIENT_MAGIC,
};
pub use manifest::{file_digest, json_digest, FileRecord, RunManifest, MANIFEST_FILE};
