use sha2::{Digest, Sha256};

/// SplitMix64 finaliser; used to derive independent per-run seeds from a
/// base seed and a tuple of indices.
pub(crate) fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut state = base;
    for &p in parts {
        state = mix(state ^ mix(p.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    mix(state)
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Formats an optional float for CSV output; undefined values become `NaN`.
pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => x.to_string(),
        None => "NaN".to_string(),
    }
}
