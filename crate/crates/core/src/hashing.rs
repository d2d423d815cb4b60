use sha2::{Digest, Sha256};

/// Incremental SHA-256 over tagged numeric data, used to fingerprint base
/// points and configurations.
#[derive(Default, Clone)]
pub struct Fingerprint {
    hasher: Sha256,
}

impl Fingerprint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tag(mut self, tag: &str) -> Self {
        self.hasher.update((tag.len() as u64).to_le_bytes());
        self.hasher.update(tag.as_bytes());
        self
    }

    pub fn floats(mut self, values: &[f64]) -> Self {
        self.hasher.update((values.len() as u64).to_le_bytes());
        for v in values {
            self.hasher.update(v.to_bits().to_le_bytes());
        }
        self
    }

    pub fn indices(mut self, values: &[usize]) -> Self {
        self.hasher.update((values.len() as u64).to_le_bytes());
        for &v in values {
            self.hasher.update((v as u64).to_le_bytes());
        }
        self
    }

    pub fn bytes(mut self, data: &[u8]) -> Self {
        self.hasher.update((data.len() as u64).to_le_bytes());
        self.hasher.update(data);
        self
    }

    pub fn hex(self) -> String {
        hex::encode(self.hasher.finalize())
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}
