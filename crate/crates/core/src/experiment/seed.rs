use sha2::{Digest, Sha256};

/// Seed for one experiment cell, stable across platforms and releases:
/// the first 8 bytes of SHA-256 over the master seed, the noise rate bits,
/// the method name and the run index.
pub fn child_seed(master: u64, noise_rate: f64, method: &str, run: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(noise_rate.to_bits().to_le_bytes());
    h.update((method.len() as u64).to_le_bytes());
    h.update(method.as_bytes());
    h.update((run as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 yields 32 bytes"))
}
