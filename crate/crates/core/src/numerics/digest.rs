use sha2::{Digest, Sha256};

use super::tape::Parameter;

/// SHA-256 over the little-endian bytes of every parameter value, in order,
/// with each tensor's shape mixed in.
pub fn parameter_digest<'a>(params: impl IntoIterator<Item = &'a Parameter>) -> String {
    let mut h = Sha256::new();
    for p in params {
        h.update((p.value.rows() as u64).to_le_bytes());
        h.update((p.value.cols() as u64).to_le_bytes());
        for v in p.value.data() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;

    #[test]
    fn digest_tracks_values() {
        let a = Parameter::new(Matrix::filled(2, 2, 1.0));
        let mut b = Parameter::new(Matrix::filled(2, 2, 1.0));
        assert_eq!(parameter_digest([&a]), parameter_digest([&b]));
        b.value.set(0, 0, 1.0 + 1e-15);
        assert_ne!(parameter_digest([&a]), parameter_digest([&b]));
    }
}
