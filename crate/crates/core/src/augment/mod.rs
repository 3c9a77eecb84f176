//! Stochastic weak/strong augmentation pipelines.
//!
//! The weak chain is random-resized-crop -> horizontal flip -> Gaussian
//! blur; the strong chain is the weak chain plus any enabled extras, applied
//! in the fixed order color_jitter -> random_grayscale -> cutout ->
//! rand_augment. Every pipeline is a pure function of (input, policy, seed):
//! the same triple always yields byte-identical pixels.

pub mod ops;
mod randaugment;

pub use randaugment::{
    apply_op, draw_op, rand_augment, RandAugmentOp, MAX_MAGNITUDE, RAND_AUGMENT_OPS,
};

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{self, stream};

/// Channel-major (c, h, w) pixel storage, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct PixelBuf {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl PixelBuf {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        PixelBuf {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::contract(format!(
                "pixel buffer of {}x{}x{} needs {} values, got {}",
                channels,
                height,
                width,
                channels * height * width,
                data.len()
            )));
        }
        Ok(PixelBuf {
            channels,
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut f32 {
        &mut self.data[(c * self.height + y) * self.width + x]
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn same_shape(&self, other: &PixelBuf) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

/// Which domain a sample was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Source,
    Target,
}

/// One input image with an optional label and a dataset-unique id.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub pixels: PixelBuf,
    pub label: Option<u32>,
    pub domain: Domain,
    pub id: u64,
}

/// The (weak, strong) augmented views of one sample for one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPair {
    pub weak: PixelBuf,
    pub strong: PixelBuf,
    pub origin_id: u64,
}

/// Extra distortions available to the strong pipeline, in application order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrongExtra {
    ColorJitter,
    RandomGrayscale,
    Cutout,
    RandAugment,
}

impl StrongExtra {
    pub fn name(self) -> &'static str {
        match self {
            StrongExtra::ColorJitter => "color_jitter",
            StrongExtra::RandomGrayscale => "random_grayscale",
            StrongExtra::Cutout => "cutout",
            StrongExtra::RandAugment => "rand_augment",
        }
    }
}

/// Parameters of both pipelines.
///
/// Cutout masks one square of side `floor(0.3 * min(h, w))` with the channel
/// mean; color jitter draws brightness/contrast/saturation factors from
/// [0.6, 1.4]; random grayscale fires with probability 0.2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentPolicy {
    /// Crop area factor range (fraction of the original area).
    pub crop_scale_range: (f32, f32),
    pub flip_probability: f64,
    pub blur_sigma_range: (f32, f32),
    /// RandAugment op count H.
    pub rand_augment_ops: u32,
    /// RandAugment distortion magnitude M in [0, 30].
    pub rand_augment_magnitude: u32,
    pub strong_extras: BTreeSet<StrongExtra>,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            crop_scale_range: (0.8, 1.0),
            flip_probability: 0.5,
            blur_sigma_range: (0.1, 1.0),
            rand_augment_ops: 1,
            rand_augment_magnitude: 10,
            strong_extras: BTreeSet::from([StrongExtra::RandAugment]),
        }
    }
}

impl AugmentPolicy {
    /// A policy whose every stochastic parameter is pinned to its identity
    /// value; both pipelines become exact identity maps under it.
    pub fn identity() -> Self {
        AugmentPolicy {
            crop_scale_range: (1.0, 1.0),
            flip_probability: 0.0,
            blur_sigma_range: (0.0, 0.0),
            rand_augment_ops: 1,
            rand_augment_magnitude: 10,
            strong_extras: BTreeSet::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let (clo, chi) = self.crop_scale_range;
        if !(clo > 0.0 && clo <= chi && chi <= 1.0) {
            problems.push(format!("crop_scale_range {:?} must lie within (0, 1]", self.crop_scale_range));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            problems.push(format!("flip_probability {} outside [0, 1]", self.flip_probability));
        }
        let (blo, bhi) = self.blur_sigma_range;
        if !(blo >= 0.0 && blo <= bhi) {
            problems.push(format!("blur_sigma_range {:?} must be ordered and non-negative", self.blur_sigma_range));
        }
        if self.rand_augment_ops < 1 {
            problems.push("rand_augment_ops must be >= 1".to_string());
        }
        if self.rand_augment_magnitude > MAX_MAGNITUDE {
            problems.push(format!(
                "rand_augment_magnitude {} outside [0, {MAX_MAGNITUDE}]",
                self.rand_augment_magnitude
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidHyperparameter(problems.join("; ")))
        }
    }
}

/// The shared weak chain. Draw order (area, top, left, flip, sigma) is fixed
/// so identical seeds replay identical transforms.
fn weak_chain(src: &PixelBuf, policy: &AugmentPolicy, rng: &mut ChaCha8Rng) -> PixelBuf {
    let (h, w) = (src.height, src.width);
    let (lo, hi) = policy.crop_scale_range;
    let area: f32 = if lo < hi { rng.random_range(lo..hi) } else { lo };
    let scale = area.sqrt();
    let crop_h = ((h as f32 * scale).round() as usize).clamp(1, h);
    let crop_w = ((w as f32 * scale).round() as usize).clamp(1, w);
    let top = rng.random_range(0..=(h - crop_h));
    let left = rng.random_range(0..=(w - crop_w));
    let mut out = if crop_h == h && crop_w == w {
        src.clone()
    } else {
        let cropped = ops::crop(src, top, left, crop_h, crop_w);
        ops::resize_bilinear(&cropped, h, w)
    };

    if rng.random_bool(policy.flip_probability) {
        out = ops::hflip(&out);
    }

    let (blo, bhi) = policy.blur_sigma_range;
    let sigma: f32 = if blo < bhi { rng.random_range(blo..bhi) } else { blo };
    if sigma > 0.0 {
        out = ops::gaussian_blur(&out, sigma);
    }
    ops::clamp01(&mut out);
    out
}

/// T^weak: random resized crop, horizontal flip, Gaussian blur.
pub fn weak_transform(x: &Sample, policy: &AugmentPolicy, seed: u64) -> PixelBuf {
    let mut rng = seeding::rng_from(&[seed]);
    weak_chain(&x.pixels, policy, &mut rng)
}

/// T^strong: the weak chain plus the enabled extras.
pub fn strong_transform(x: &Sample, policy: &AugmentPolicy, seed: u64) -> PixelBuf {
    let mut rng = seeding::rng_from(&[seed]);
    let mut out = weak_chain(&x.pixels, policy, &mut rng);
    for extra in &policy.strong_extras {
        out = match extra {
            StrongExtra::ColorJitter => {
                let b: f32 = rng.random_range(0.6..1.4);
                let c: f32 = rng.random_range(0.6..1.4);
                let s: f32 = rng.random_range(0.6..1.4);
                let jittered = ops::brightness(&out, b);
                let jittered = ops::contrast(&jittered, c);
                ops::saturation(&jittered, s)
            }
            StrongExtra::RandomGrayscale => {
                if rng.random_bool(0.2) {
                    ops::grayscale(&out)
                } else {
                    out
                }
            }
            StrongExtra::Cutout => {
                let side = (0.3 * out.height.min(out.width) as f32).floor() as usize;
                if side >= 1 {
                    let top = rng.random_range(0..=(out.height - side));
                    let left = rng.random_range(0..=(out.width - side));
                    ops::cutout(&out, top, left, side)
                } else {
                    out
                }
            }
            StrongExtra::RandAugment => randaugment::run(
                &out,
                policy.rand_augment_ops,
                policy.rand_augment_magnitude,
                &mut rng,
            ),
        };
    }
    ops::clamp01(&mut out);
    out
}

/// Builds the (weak, strong) views of one sample. The two views use
/// independent sub-seeds derived from (iteration_seed, sample id, view tag),
/// so augmentation is order-independent across the batch.
pub fn make_pair(x: &Sample, policy: &AugmentPolicy, iteration_seed: u64) -> ViewPair {
    let weak_seed = seeding::derive_seed(&[iteration_seed, x.id, stream::WEAK_VIEW]);
    let strong_seed = seeding::derive_seed(&[iteration_seed, x.id, stream::STRONG_VIEW]);
    ViewPair {
        weak: weak_transform(x, policy, weak_seed),
        strong: strong_transform(x, policy, strong_seed),
        origin_id: x.id,
    }
}
