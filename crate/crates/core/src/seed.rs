//! Deterministic seed derivation. Every random stream in the workspace is
//! keyed off a named root seed so runs replay exactly on any platform.

/// splitmix64 step; a solid integer mixer with full avalanche.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent stream seed from (root, tag, index).
pub fn derive(root: u64, tag: &str, index: u64) -> u64 {
    let mut h = splitmix64(root);
    for &b in tag.as_bytes() {
        h = splitmix64(h ^ b as u64);
    }
    splitmix64(h ^ index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_distinct_and_stable() {
        assert_eq!(derive(7, "noise", 0), derive(7, "noise", 0));
        assert_ne!(derive(7, "noise", 0), derive(7, "noise", 1));
        assert_ne!(derive(7, "noise", 0), derive(7, "perturb", 0));
        assert_ne!(derive(7, "noise", 0), derive(8, "noise", 0));
        // pinned so accidental mixer changes show up
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }
}
