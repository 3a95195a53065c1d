//! Shared fixtures for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uidkit_core::imaging::linearize;
use uidkit_core::synth::{self, Texture, CROP};
use uidkit_core::{to_grayscale, ComplexityCachedString, GrayImage, PixelRect, PrototypeSet};

/// Random string of length `n` over an alphabet of `sigma` symbols.
pub fn random_string(n: usize, sigma: u8, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0..sigma)).collect()
}

/// Two disjoint prototype-sized noise crops, stringified.
pub fn crop_pair() -> (ComplexityCachedString, ComplexityCachedString) {
    let src = synth::texture_image(Texture::Noise, 2 * CROP.0, 2 * CROP.1, 1);
    let crop = |l, t| {
        let img = src.crop(PixelRect::new(l, t, CROP.0, CROP.1)).expect("inside");
        ComplexityCachedString::new(linearize(&to_grayscale(&img)))
    };
    (crop(0, 0), crop(CROP.0, CROP.1))
}

/// The planted prototype set and a `w × h` mixture image.
pub fn extraction_input(w: u32, h: u32) -> (PrototypeSet, GrayImage) {
    (synth::planted_prototypes(), to_grayscale(&synth::random_image(w, h, 9)))
}
