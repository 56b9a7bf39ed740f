//! Seed derivation. Every random stream in a run is derived from the single
//! top-level seed plus a component label and an index, so one number
//! reproduces the whole run.

use sha2::{Digest, Sha256};

/// Derives an independent 64-bit seed for `(label, index)` under `root`.
pub fn derive(root: u64, label: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update([0x1f]);
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
