//! Per-stage seeds split from the master seed.

use sha2::{Digest, Sha256};

/// First 8 bytes (little endian) of `SHA-256(master_le ‖ "/" ‖ stage)`.
/// Stages never share a stream, and adding a stage leaves the others alone.
pub fn stage_seed(master: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(b"/");
    h.update(stage.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
