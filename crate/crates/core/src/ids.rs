//! Deterministic ids and per-call seeds.
//!
//! Everything is derived from SHA-256 over a tagged, length-prefixed tuple so
//! reruns with the same run seed reproduce the same ids and random streams.

use sha2::{Digest, Sha256};

fn hash_parts(tag: &str, parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((tag.len() as u64).to_le_bytes());
    h.update(tag.as_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

fn first_u64(digest: &[u8; 32]) -> u64 {
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn slot_parts(run_seed: u64, layer: usize, index: usize) -> [[u8; 8]; 3] {
    [
        run_seed.to_le_bytes(),
        (layer as u64).to_le_bytes(),
        (index as u64).to_le_bytes(),
    ]
}

pub fn candidate_id(run_seed: u64, prompt_id: &str, layer: usize, index: usize) -> String {
    let [s, l, i] = slot_parts(run_seed, layer, index);
    let d = hash_parts("candidate", &[&s, prompt_id.as_bytes(), &l, &i]);
    format!("c-{}", hex::encode(&d[..8]))
}

pub fn candidate_seed(run_seed: u64, prompt_id: &str, layer: usize, index: usize) -> u64 {
    let [s, l, i] = slot_parts(run_seed, layer, index);
    first_u64(&hash_parts("candidate-seed", &[&s, prompt_id.as_bytes(), &l, &i]))
}

pub fn feedback_id(run_seed: u64, prompt_id: &str, layer: usize) -> String {
    let [s, l, _] = slot_parts(run_seed, layer, 0);
    let d = hash_parts("feedback", &[&s, prompt_id.as_bytes(), &l]);
    format!("f-{}", hex::encode(&d[..8]))
}

pub fn feedback_seed(run_seed: u64, prompt_id: &str, layer: usize) -> u64 {
    let [s, l, _] = slot_parts(run_seed, layer, 0);
    first_u64(&hash_parts("feedback-seed", &[&s, prompt_id.as_bytes(), &l]))
}

/// Seed for a generic keyed draw (profession assignment, mock calls, ...).
pub fn keyed_seed(tag: &str, parts: &[&[u8]]) -> u64 {
    first_u64(&hash_parts(tag, parts))
}

/// Hex SHA-256 of arbitrary bytes; used for content digests in manifests.
pub fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn ids_are_stable_and_distinct() {
        assert_eq!(candidate_id(7, "p1", 0, 0), candidate_id(7, "p1", 0, 0));
        let mut seen = HashSet::new();
        for seed in 0..3 {
            for p in ["a", "b", "ab"] {
                for layer in 0..4 {
                    for index in 0..16 {
                        assert!(seen.insert(candidate_id(seed, p, layer, index)));
                    }
                    assert!(seen.insert(feedback_id(seed, p, layer)));
                }
            }
        }
    }

    #[test]
    fn length_prefix_prevents_concatenation_collisions() {
        assert_ne!(
            keyed_seed("t", &[b"ab", b"c"]),
            keyed_seed("t", &[b"a", b"bc"])
        );
    }
}
