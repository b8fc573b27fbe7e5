use sha2::{Digest, Sha256};

pub const SEED_ENV: &str = "TRAJEKT_SEED";

/// Substream seed for a named stage: the first eight bytes of
/// `SHA-256(master_le ∥ name)`, little-endian.
pub fn derive_seed(master: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(b)
}
