//! Stable content digests.

use alloc::string::String;

use sha2::{Digest, Sha256};

/// Incremental SHA-256 over length-prefixed fields, so that field
/// boundaries cannot be shifted to produce a collision.
#[derive(Clone, Default)]
pub struct FieldHasher(Sha256);

impl FieldHasher {
    pub fn new() -> Self {
        Self(Sha256::new())
    }

    pub fn field(mut self, bytes: impl AsRef<[u8]>) -> Self {
        let bytes = bytes.as_ref();
        self.0.update((bytes.len() as u64).to_le_bytes());
        self.0.update(bytes);
        self
    }

    pub fn finish_hex(self) -> String {
        hex::encode(self.0.finalize())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
