//! Seed derivation: all randomness flows from one root seed through named
//! sub-streams, so ablations differ only in the ablated factor.

/// Derive a named sub-seed from a root seed (FNV-1a over the name, mixed
/// with the root).
pub fn subseed(root: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h ^ root.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}
