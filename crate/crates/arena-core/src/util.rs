use sha2::{Digest, Sha256};

/// First `len` hex chars of the SHA-256 of `input`. Used for content-addressed
/// ids and scripted-backend determinism; not a security boundary.
pub fn short_hash(input: &str, len: usize) -> String {
    let digest = Sha256::digest(input.as_bytes());
    let mut hex = hex::encode(digest);
    hex.truncate(len);
    hex
}

/// Stable u64 derived from a string, for seeding deterministic choices.
pub fn hash_u64(input: &str) -> u64 {
    let digest = Sha256::digest(input.as_bytes());
    u64::from_be_bytes(digest[..8].try_into().unwrap())
}
