//! Deterministic synthetic textures, planted prototype sets and corpora for
//! tests, benchmarks and demos.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imaging::{PixelRect, RgbImage};
use crate::prototypes::PrototypeSet;

/// Prototype crop size used throughout the synthetic fixtures.
pub const CROP: (u32, u32) = (45, 17);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Texture {
    Constant,
    Stripes,
    Checker,
    Noise,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Texture {
    pub const ALL: [Texture; 4] = [Texture::Constant, Texture::Stripes, Texture::Checker, Texture::Noise];

    pub fn name(self) -> &'static str {
        match self {
            Texture::Constant => "constant",
            Texture::Stripes => "stripes",
            Texture::Checker => "checker",
            Texture::Noise => "noise",
        }
    }

    /// Gray level at absolute coordinates; `seed` only affects noise.
    pub fn level(self, x: u32, y: u32, seed: u64) -> u8 {
        match self {
            Texture::Constant => 200,
            Texture::Stripes => [20, 50, 80, 110, 140, 170][(x / 3 % 6) as usize],
            Texture::Checker => {
                if (x / 3 + y / 3).is_multiple_of(2) {
                    150
                } else {
                    240
                }
            }
            Texture::Noise => (mix(mix(seed) ^ ((x as u64) << 32 | y as u64)) >> 56) as u8,
        }
    }
}

/// A `w×h` image filled with one texture. Channels are equal, so the
/// grayscale image carries exactly the texture levels.
pub fn texture_image(t: Texture, w: u32, h: u32, seed: u64) -> RgbImage {
    RgbImage::from_fn(w, h, |x, y| [t.level(x, y, seed); 3]).expect("nonzero size")
}

/// Image tiled with `CROP`-sized cells, `grid` in row-major order.
pub fn compose(grid: &[Texture], cols: u32, rows: u32, seed: u64) -> RgbImage {
    assert_eq!(grid.len(), (cols * rows) as usize);
    let (cw, ch) = CROP;
    RgbImage::from_fn(cols * cw, rows * ch, |x, y| {
        let t = grid[((y / ch) * cols + x / cw) as usize];
        [t.level(x, y, seed); 3]
    })
    .expect("nonzero size")
}

/// Four categories named after the textures, three `CROP` crops each taken
/// at different offsets of one source texture.
pub fn planted_prototypes() -> PrototypeSet {
    let names: Vec<&str> = Texture::ALL.iter().map(|t| t.name()).collect();
    let mut ps = PrototypeSet::with_categories(&names).expect("distinct names");
    let offsets = [(0, 0), (52, 20), (109, 41)];
    for (i, t) in Texture::ALL.into_iter().enumerate() {
        let source = texture_image(t, 180, 68, 1000 + i as u64);
        for (l, top) in offsets {
            ps.add_prototype(t.name(), &format!("synth-{}", t.name()), &source, PixelRect::new(l, top, CROP.0, CROP.1))
                .expect("crop inside source");
        }
    }
    ps
}

/// A grid with `counts[k]` cells of `Texture::ALL[k]`, shuffled.
fn shuffled_grid(counts: [usize; 4], rng: &mut ChaCha8Rng) -> Vec<Texture> {
    let mut grid: Vec<Texture> = Texture::ALL
        .iter()
        .zip(counts)
        .flat_map(|(&t, n)| std::iter::repeat_n(t, n))
        .collect();
    grid.shuffle(rng);
    grid
}

/// Split `rest` cells at random among three slots.
fn split3(rest: usize, rng: &mut ChaCha8Rng) -> [usize; 3] {
    let a = rng.random_range(0..=rest);
    let b = rng.random_range(0..=rest - a);
    [a, b, rest - a - b]
}

/// A labeled corpus of 360×340 images (8×20 cells). Label `"1"` images hold
/// 55–75% noise cells, label `"0"` images 25–45%; the rest is split at
/// random among the other textures. Classes alternate, so `n` even is balanced.
pub fn supervised_corpus(n: usize, seed: u64) -> Vec<(String, RgbImage, String)> {
    let (cols, rows) = (8u32, 20u32);
    let cells = (cols * rows) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = i % 2;
            let frac = if label == 1 {
                rng.random_range(0.55..0.75)
            } else {
                rng.random_range(0.25..0.45)
            };
            let noise = (frac * cells as f64).round() as usize;
            let [a, b, c] = split3(cells - noise, &mut rng);
            let grid = shuffled_grid([a, b, c, noise], &mut rng);
            let img = compose(&grid, cols, rows, seed.wrapping_mul(7919) + i as u64);
            (format!("img{i:03}"), img, label.to_string())
        })
        .collect()
}

/// Three archetypes dominated (70%) by noise, stripes and checker cells
/// respectively, on 180×170 images (4×10 cells). Returns the corpus and
/// the planted archetype of each image.
pub fn archetype_corpus(per_archetype: usize, seed: u64) -> (Vec<(String, RgbImage)>, Vec<usize>) {
    let (cols, rows) = (4u32, 10u32);
    let cells = (cols * rows) as usize;
    let dominant = [3usize, 1, 2];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Vec::new();
    let mut truth = Vec::new();
    for i in 0..per_archetype * 3 {
        let arch = i % 3;
        let major = cells * 7 / 10;
        let minor = split3(cells - major, &mut rng);
        let mut counts = [0usize; 4];
        let mut m = minor.into_iter();
        for (k, slot) in counts.iter_mut().enumerate() {
            *slot = if k == dominant[arch] { major } else { m.next().expect("three minors") };
        }
        let grid = shuffled_grid(counts, &mut rng);
        corpus.push((format!("arch{i:03}"), compose(&grid, cols, rows, seed ^ (i as u64) << 20)));
        truth.push(arch);
    }
    (corpus, truth)
}

/// A random mixture image of arbitrary size (not aligned to the cell grid).
pub fn random_image(w: u32, h: u32, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bw = rng.random_range(5..40u32);
    let bh = rng.random_range(5..40u32);
    let pick: Vec<Texture> = (0..(w / bw + 1) * (h / bh + 1))
        .map(|_| Texture::ALL[rng.random_range(0..4)])
        .collect();
    let stride = w / bw + 1;
    RgbImage::from_fn(w, h, |x, y| [pick[((y / bh) * stride + x / bw) as usize].level(x, y, seed); 3])
        .expect("nonzero size")
}
