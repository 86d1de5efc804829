//! Seeded blob datasets for desk-scale training and tests.
//!
//! Each stimulus is coloured noise with one to three bright Gaussian blobs
//! placed away from the image centre. The ground-truth map is the weighted
//! blob mixture, max-normalised and quantised to 8 bits. Observers fixate
//! points drawn from the mixture, jittered, visiting heavier blobs first.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use super::formats::{quantize, Image};
use super::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::model::SaliencyMap;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub observers: usize,
    /// `(length, weight)` pairs from which every scanpath length is drawn.
    pub length_weights: Vec<(usize, u32)>,
}

impl SynthConfig {
    pub fn new(n: usize, seed: u64, (width, height): (usize, usize)) -> Self {
        SynthConfig { n, seed, width, height, observers: 3, length_weights: vec![(8, 1)] }
    }

    /// Lengths 6 to 10 with 8 the most likely.
    pub fn with_varied_lengths(mut self) -> Self {
        self.length_weights = vec![(6, 1), (7, 2), (8, 4), (9, 2), (10, 1)];
        self
    }
}

struct Blob {
    cx: f64,
    cy: f64,
    sigma: f64,
    weight: f64,
    colour: [f64; 3],
}

impl Blob {
    fn density(&self, x: f64, y: f64) -> f64 {
        (-((x - self.cx).powi(2) + (y - self.cy).powi(2)) / (2.0 * self.sigma * self.sigma)).exp()
    }
}

fn random_blob(rng: &mut ChaCha8Rng) -> Blob {
    let (cx, cy) = loop {
        let c = (rng.random_range(0.15..0.85), rng.random_range(0.15..0.85));
        if (c.0 - 0.5f64).hypot(c.1 - 0.5) >= 0.2 {
            break c;
        }
    };
    Blob {
        cx,
        cy,
        sigma: rng.random_range(0.06..0.12),
        weight: rng.random_range(0.4..1.0),
        colour: [0; 3].map(|_: u8| rng.random_range(140.0..255.0)),
    }
}

fn generate_sample(cfg: &SynthConfig, index: usize) -> Result<Sample> {
    let (w, h) = (cfg.width, cfg.height);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);

    let mut blobs: Vec<Blob> = (0..rng.random_range(1..=3)).map(|_| random_blob(&mut rng)).collect();
    blobs.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    let norm = |i: usize, n: usize| i as f64 / (n.max(2) - 1) as f64;

    let mut raw = Vec::with_capacity(w * h);
    let mut rgb = Vec::with_capacity(w * h * 3);
    for r in 0..h {
        for c in 0..w {
            let (x, y) = (norm(c, w), norm(r, h));
            let mut pixel = [0.0; 3];
            let mut saliency = 0.0;
            for b in &blobs {
                let g = b.density(x, y) * b.weight;
                saliency += g;
                for (p, col) in pixel.iter_mut().zip(b.colour) {
                    *p += g * col;
                }
            }
            raw.push(saliency);
            for p in pixel {
                rgb.push((p + rng.random_range(0.0..60.0)).round().min(255.0) as u8);
            }
        }
    }
    let peak = raw.iter().cloned().fold(f64::MIN, f64::max);
    let map = SaliencyMap::new(w, h, raw.iter().map(|v| quantize(v / peak) as f64 / 255.0).collect())?;

    let lengths = WeightedIndex::new(cfg.length_weights.iter().map(|&(_, wt)| wt))
        .map_err(|e| Error::Config(format!("scanpath length weights: {e}")))?;
    let pick = WeightedIndex::new(blobs.iter().map(|b| b.weight)).expect("positive blob weights");
    let mut scanpath_pixels = Vec::with_capacity(cfg.observers);
    for _ in 0..cfg.observers {
        let len = cfg.length_weights[lengths.sample(&mut rng)].0;
        let mut points: Vec<(usize, f64, f64)> = (0..len)
            .map(|_| {
                let k = pick.sample(&mut rng);
                let jitter = Normal::new(0.0, blobs[k].sigma * 0.5).expect("positive sigma");
                let x = (blobs[k].cx + jitter.sample(&mut rng)).clamp(0.0, 1.0);
                let y = (blobs[k].cy + jitter.sample(&mut rng)).clamp(0.0, 1.0);
                (k, x, y)
            })
            .collect();
        points.sort_by_key(|p| p.0);
        let to_px = |v: f64, n: usize| (v * (n.max(2) - 1) as f64 * 100.0).round() / 100.0;
        scanpath_pixels.push(points.into_iter().map(|(_, x, y)| (to_px(x, w), to_px(y, h))).collect());
    }
    Ok(Sample { id: format!("synth_{index:04}"), stimulus: Image::new(w, h, rgb)?, map, scanpath_pixels })
}

/// Builds the dataset described by `cfg`; a pure function of the config.
/// Sample `i` depends only on `(seed, i, size)`.
pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    if cfg.n == 0 {
        return Err(Error::Contract("a synthetic dataset needs at least one image".into()));
    }
    if cfg.width < 2 || cfg.height < 2 {
        return Err(Error::Contract("synthetic images need at least 2×2 pixels".into()));
    }
    let samples = (0..cfg.n).map(|i| generate_sample(cfg, i)).collect::<Result<_>>()?;
    Ok(Dataset { name: format!("synthetic-{}", cfg.seed), width: cfg.width, height: cfg.height, samples })
}

/// `n` blob images of `size = (width, height)` with three 8-point scanpaths each.
pub fn generate_synthetic(n: usize, seed: u64, size: (usize, usize)) -> Result<Dataset> {
    generate(&SynthConfig::new(n, seed, size))
}
