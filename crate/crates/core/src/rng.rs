//! Seed derivation and dropout masks.
//!
//! Inference masks come from a counter-based scheme: each (seed, modality,
//! pass, sample) tuple hashes to its own ChaCha stream, so a mask never
//! depends on evaluation order or on how work is split across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Modality tag for the attribute regressor.
pub const TAG_DAP: u64 = 0xDA;
/// Modality tag for the visual classifier.
pub const TAG_VISUAL: u64 = 0xC1;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a tuple of integers into a single 64-bit seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6A09_E667_F3BC_C909, |h, &p| splitmix64(h ^ splitmix64(p)))
}

pub fn stream(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parts))
}

/// Applies inverted dropout to `x` in place: each entry is zeroed with
/// probability `rate`, survivors are scaled by `1 / (1 - rate)`.
pub fn apply_dropout<R: Rng>(rng: &mut R, x: &mut [f64], rate: f64) {
    if rate <= 0.0 {
        return;
    }
    let keep = 1.0 / (1.0 - rate);
    for v in x.iter_mut() {
        if rng.random::<f64>() < rate {
            *v = 0.0;
        } else {
            *v *= keep;
        }
    }
}

/// Input-dropout mask for one MC pass over one sample.
pub fn inference_dropout(x: &mut [f64], rate: f64, base_seed: u64, tag: u64, pass: usize, sample: u64) {
    if rate <= 0.0 {
        return;
    }
    let mut rng = stream(&[base_seed, tag, pass as u64, sample]);
    apply_dropout(&mut rng, x, rate);
}
