use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph_m::GraphModel;
use crate::numerics::{Matrix, Parameter};
use crate::patient_m::PatientModel;

pub const PATIENT_MAGIC: &[u8; 6] = b"GSNPM1";
pub const GRAPH_MAGIC: &[u8; 6] = b"GSNGM1";
pub const CHECKPOINT_VERSION: u32 = 1;

const DIGEST_LEN: usize = 32;
const PREFIX_LEN: usize = 6 + 4 + 8;

/// A model that can be written as a checkpoint: a JSON skeleton of
/// everything except the parameter tensors, followed by the tensors as
/// little-endian `f64`.
pub trait Checkpoint: Serialize + DeserializeOwned + Clone {
    const MAGIC: &'static [u8; 6];
    fn tensors_mut(&mut self) -> Vec<&mut Parameter>;
}

impl Checkpoint for PatientModel {
    const MAGIC: &'static [u8; 6] = PATIENT_MAGIC;
    fn tensors_mut(&mut self) -> Vec<&mut Parameter> {
        self.params_mut()
    }
}

impl Checkpoint for GraphModel {
    const MAGIC: &'static [u8; 6] = GRAPH_MAGIC;
    fn tensors_mut(&mut self) -> Vec<&mut Parameter> {
        self.params_mut()
    }
}

#[derive(Serialize, Deserialize)]
struct Header<T> {
    shapes: Vec<(usize, usize)>,
    model: T,
}

fn magic_name(m: &[u8]) -> String {
    String::from_utf8_lossy(m).into_owned()
}

/// Serializes `model` into checkpoint bytes; the last 32 bytes are the
/// SHA-256 of everything before them.
pub fn encode_checkpoint<T: Checkpoint>(model: &T) -> Result<Vec<u8>> {
    let mut skeleton = model.clone();
    let mut shapes = Vec::new();
    let mut payload = Vec::new();
    for p in skeleton.tensors_mut() {
        let value = std::mem::replace(p, Parameter::new(Matrix::zeros(0, 0))).value;
        shapes.push(value.shape());
        for v in value.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = serde_json::to_vec(&Header {
        shapes,
        model: skeleton,
    })?;
    let mut out = Vec::with_capacity(PREFIX_LEN + header.len() + payload.len() + DIGEST_LEN);
    out.extend_from_slice(T::MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

pub fn decode_checkpoint<T: Checkpoint>(bytes: &[u8]) -> Result<T> {
    if bytes.len() < 6 {
        return Err(Error::Corruption(format!("checkpoint truncated to {} bytes", bytes.len())));
    }
    let magic = &bytes[..6];
    if magic != T::MAGIC {
        return Err(Error::Format(format!(
            "expected magic {}, found {}",
            magic_name(T::MAGIC),
            magic_name(magic)
        )));
    }
    if bytes.len() < PREFIX_LEN + DIGEST_LEN {
        return Err(Error::Corruption(format!("checkpoint truncated to {} bytes", bytes.len())));
    }
    let version = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint version {version}, this build reads {CHECKPOINT_VERSION}"
        )));
    }
    let (body, stored) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != stored {
        return Err(Error::Corruption("checkpoint digest mismatch".into()));
    }
    let header_len = u64::from_le_bytes(bytes[10..18].try_into().expect("8 bytes")) as usize;
    let header_end = PREFIX_LEN
        .checked_add(header_len)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| Error::Corruption("header length exceeds file".into()))?;
    let header: Header<T> = serde_json::from_slice(&body[PREFIX_LEN..header_end])
        .map_err(|e| Error::Corruption(format!("checkpoint header: {e}")))?;
    let mut model = header.model;
    let mut values = body[header_end..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let expected: usize = header.shapes.iter().map(|(r, c)| r * c).sum();
    if body.len() - header_end != expected * 8 {
        return Err(Error::Corruption(format!(
            "payload holds {} bytes, shapes need {}",
            body.len() - header_end,
            expected * 8
        )));
    }
    let tensors = model.tensors_mut();
    if tensors.len() != header.shapes.len() {
        return Err(Error::Corruption(format!(
            "{} tensors recorded for a model with {}",
            header.shapes.len(),
            tensors.len()
        )));
    }
    for (p, &(r, c)) in tensors.into_iter().zip(&header.shapes) {
        let data: Vec<f64> = values.by_ref().take(r * c).collect();
        *p = Parameter::new(Matrix::new(r, c, data)?);
    }
    Ok(model)
}

/// Writes the checkpoint and returns its hex digest.
pub fn save_checkpoint<T: Checkpoint>(model: &T, path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(model)?;
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(&bytes[bytes.len() - DIGEST_LEN..]))
}

pub fn load_checkpoint<T: Checkpoint>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::GeneScaler;
    use crate::graph_m::GraphConfig;
    use crate::numerics::rng;
    use crate::patient_m::PatientConfig;

    fn patient() -> PatientModel {
        let genes: Vec<String> = (0..6).map(|i| format!("g{i}")).collect();
        let x = Matrix::randn(10, 6, 1.0, &mut rng::stream(1, "x"));
        let scaler = GeneScaler::fit(&x);
        let cfg = PatientConfig {
            latent_dim: 4,
            slot_dim: 3,
            codebook_size: 5,
            ..Default::default()
        };
        PatientModel::new(genes, scaler, &cfg, &mut rng::stream(2, "p")).unwrap()
    }

    #[test]
    fn patient_round_trip_is_bitwise() {
        let m = patient();
        let back: PatientModel = decode_checkpoint(&encode_checkpoint(&m).unwrap()).unwrap();
        let probe = Matrix::randn(4, 6, 1.0, &mut rng::stream(3, "probe"));
        assert_eq!(m.encode(&probe).unwrap(), back.encode(&probe).unwrap());
        assert_eq!(m.embed(&probe).unwrap(), back.embed(&probe).unwrap());
        for (a, b) in m.params().iter().zip(back.params()) {
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn graph_round_trip() {
        let cfg = GraphConfig {
            embed_dim: 3,
            hidden: 4,
            decoder_hidden: 2,
            ..Default::default()
        };
        let m = GraphModel::new(5, &cfg, &mut rng::stream(4, "g")).unwrap();
        let back: GraphModel = decode_checkpoint(&encode_checkpoint(&m).unwrap()).unwrap();
        assert_eq!(
            crate::numerics::parameter_digest(m.theta()),
            crate::numerics::parameter_digest(back.theta())
        );
    }

    #[test]
    fn truncation_is_corruption() {
        let bytes = encode_checkpoint(&patient()).unwrap();
        for cut in [3, 20, bytes.len() / 2, bytes.len() - 1] {
            let err = decode_checkpoint::<PatientModel>(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::Corruption(_)), "cut {cut}: {err}");
        }
        let mut flipped = bytes.clone();
        let mid = flipped.len() - 100;
        flipped[mid] ^= 1;
        assert!(matches!(
            decode_checkpoint::<PatientModel>(&flipped),
            Err(Error::Corruption(_))
        ));
    }

    #[test]
    fn wrong_magic_names_both() {
        let g = GraphModel::new(5, &GraphConfig::default(), &mut rng::stream(4, "g")).unwrap();
        let err = decode_checkpoint::<PatientModel>(&encode_checkpoint(&g).unwrap()).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Format(_)));
        assert!(msg.contains("GSNPM1") && msg.contains("GSNGM1"), "{msg}");
    }
}
