//! SHA-256 helpers shared by voter digests and block hashing.

use sha2::{Digest, Sha256};

/// Raw 256-bit hash value.
pub type Hash256 = [u8; 32];

/// All-zero hash, used as the previous-hash of the genesis block.
pub const ZERO_HASH: Hash256 = [0u8; 32];

/// SHA-256 of arbitrary bytes.
pub fn sha256(data: &[u8]) -> Hash256 {
    let mut hasher = Sha256::new();
    hasher.update(data);
    hasher.finalize().into()
}

/// Lowercase hex rendering of a hash.
pub fn to_hex(hash: &Hash256) -> String {
    hex::encode(hash)
}

/// Parse a 64-character lowercase hex string back into a hash.
pub fn from_hex(s: &str) -> Option<Hash256> {
    let bytes = hex::decode(s).ok()?;
    bytes.try_into().ok()
}

/// Number of leading zero bits in a hash, scanned from byte 0 downward.
pub fn leading_zero_bits(hash: &Hash256) -> u32 {
    let mut bits = 0;
    for byte in hash {
        if *byte == 0 {
            bits += 8;
        } else {
            bits += byte.leading_zeros();
            break;
        }
    }
    bits
}
