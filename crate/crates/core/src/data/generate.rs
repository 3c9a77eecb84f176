//! Synthetic domain-shift generators.
//!
//! Each generator draws per-sample parameters from a splittable seed and
//! renders them onto a small 3x16x16 canvas: two_moons and gaussian_blobs
//! rasterize one 2-D point per sample as a Gaussian splat, textured_grid
//! draws class-indexed stripe patterns. The target domain re-draws from the
//! same process (its own stream) and then applies the configured shift, so
//! a magnitude-zero shift makes the domains identically distributed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{GeneratorKind, ShiftKind, ShiftSpec, SsdaDataset};
use crate::augment::{ops, Domain, PixelBuf, Sample};
use crate::error::{Error, Result};
use crate::seeding::{self, stream};

pub const IMAGE_CHANNELS: usize = 3;
pub const IMAGE_SIZE: usize = 16;

/// Pixels the validation split reserves per class.
const VALIDATION_PER_CLASS: u32 = 3;
/// Headroom demanded beyond the labeled and validation picks.
const MIN_UNLABELED_PER_CLASS: u32 = 10;

/// Builds the four-way split of the synthetic SSDA protocol: all source
/// samples labeled, `shots` labeled targets per class, 3 validation targets
/// per class, and the rest of the target domain unlabeled (ground truth
/// retained behind the evaluation gate).
pub fn generate_synthetic_ssda(spec: &ShiftSpec, shots: u32) -> Result<SsdaDataset> {
    validate(spec, shots)?;
    let k = spec.num_classes;
    let n = spec.samples_per_domain;

    let source: Vec<Sample> = (0..n)
        .map(|i| {
            let class = class_of_index(i, n, k);
            let mut rng = seeding::rng_from(&[spec.seed, stream::DATA_SOURCE, i as u64]);
            let pixels = render(spec.generator, class, k, &mut rng);
            Sample {
                pixels,
                label: Some(class),
                domain: Domain::Source,
                id: i as u64,
            }
        })
        .collect();

    let target_pool: Vec<Sample> = (0..n)
        .map(|i| {
            let class = class_of_index(i, n, k);
            let mut rng = seeding::rng_from(&[spec.seed, stream::DATA_TARGET, i as u64]);
            let base = render(spec.generator, class, k, &mut rng);
            let mut shift_rng = seeding::rng_from(&[spec.seed, stream::DATA_SHIFT, i as u64]);
            let mut pixels = apply_shift(&base, spec.shift_kind, spec.shift_magnitude, &mut shift_rng);
            ops::clamp01(&mut pixels);
            Sample {
                pixels,
                label: Some(class),
                domain: Domain::Target,
                id: (n + i) as u64,
            }
        })
        .collect();

    // Per-class random pick: `shots` labeled, then 3 validation, rest
    // unlabeled with the label moved behind the gate.
    let mut split_rng = seeding::rng_from(&[spec.seed, stream::DATA_SPLIT]);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k as usize];
    for (idx, s) in target_pool.iter().enumerate() {
        by_class[s.label.expect("pool is labeled") as usize].push(idx);
    }
    let mut labeled_idx = Vec::new();
    let mut validation_idx = Vec::new();
    let mut unlabeled_idx = Vec::new();
    for class_indices in by_class.iter_mut() {
        shuffle(class_indices, &mut split_rng);
        let shots = shots as usize;
        labeled_idx.extend_from_slice(&class_indices[..shots]);
        validation_idx.extend_from_slice(&class_indices[shots..shots + VALIDATION_PER_CLASS as usize]);
        unlabeled_idx.extend_from_slice(&class_indices[shots + VALIDATION_PER_CLASS as usize..]);
    }
    labeled_idx.sort_unstable();
    validation_idx.sort_unstable();
    unlabeled_idx.sort_unstable();

    let target_labeled: Vec<Sample> = labeled_idx.iter().map(|&i| target_pool[i].clone()).collect();
    let target_validation: Vec<Sample> = validation_idx.iter().map(|&i| target_pool[i].clone()).collect();
    let mut target_unlabeled = Vec::with_capacity(unlabeled_idx.len());
    let mut hidden_labels = Vec::with_capacity(unlabeled_idx.len());
    for &i in &unlabeled_idx {
        let mut s = target_pool[i].clone();
        hidden_labels.push(s.label.take());
        target_unlabeled.push(s);
    }

    SsdaDataset::assemble(
        source,
        target_labeled,
        target_unlabeled,
        hidden_labels,
        target_validation,
        k,
    )
}

fn validate(spec: &ShiftSpec, shots: u32) -> Result<()> {
    let mut problems = Vec::new();
    if spec.num_classes == 0 {
        problems.push("num_classes must be positive".to_string());
    }
    if !(shots == 1 || shots == 3) {
        problems.push(format!("shots must be 1 or 3, got {shots}"));
    }
    if spec.shift_magnitude < 0.0 {
        problems.push(format!("shift_magnitude must be >= 0, got {}", spec.shift_magnitude));
    }
    let needed = spec
        .num_classes
        .saturating_mul(shots + VALIDATION_PER_CLASS + MIN_UNLABELED_PER_CLASS);
    if spec.samples_per_domain < needed {
        problems.push(format!(
            "samples_per_domain = {} cannot satisfy all splits; need at least K*(shots+{}+{}) = {needed}",
            spec.samples_per_domain, VALIDATION_PER_CLASS, MIN_UNLABELED_PER_CLASS
        ));
    }
    if spec.generator == GeneratorKind::TwoMoons && spec.num_classes != 2 {
        problems.push(format!(
            "two_moons is a binary generator; got num_classes = {}",
            spec.num_classes
        ));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::config(problems.join("\n")))
    }
}

/// Classes are allocated contiguously and as evenly as possible: the first
/// `n % k` classes receive one extra sample.
fn class_of_index(index: u32, n: u32, k: u32) -> u32 {
    let base = n / k;
    let extra = n % k;
    // Classes [0, extra) hold (base + 1) samples each.
    let boundary = extra * (base + 1);
    if index < boundary {
        index / (base + 1)
    } else {
        extra + (index - boundary) / base
    }
}

fn shuffle(indices: &mut [usize], rng: &mut ChaCha8Rng) {
    use rand::seq::SliceRandom;
    indices.shuffle(rng);
}

fn render(generator: GeneratorKind, class: u32, k: u32, rng: &mut ChaCha8Rng) -> PixelBuf {
    match generator {
        GeneratorKind::TwoMoons => {
            let noise = Normal::new(0.0f64, 0.08).expect("valid sigma");
            let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let (mut x, mut y) = if class == 0 {
                (theta.cos(), theta.sin())
            } else {
                (1.0 - theta.cos(), 0.5 - theta.sin())
            };
            x += noise.sample(rng);
            y += noise.sample(rng);
            splat(to_canvas(x, -1.5, 2.5), to_canvas(y, -1.2, 1.7))
        }
        GeneratorKind::GaussianBlobs => {
            let angle = 2.0 * std::f64::consts::PI * class as f64 / k as f64;
            let noise = Normal::new(0.0f64, 0.25).expect("valid sigma");
            let x = angle.cos() + noise.sample(rng);
            let y = angle.sin() + noise.sample(rng);
            splat(to_canvas(x, -1.8, 1.8), to_canvas(y, -1.8, 1.8))
        }
        GeneratorKind::TexturedGrid => textured(class, k, rng),
    }
}

fn to_canvas(v: f64, lo: f64, hi: f64) -> f32 {
    let unit = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    (unit * (IMAGE_SIZE as f64 - 1.0)) as f32
}

/// A Gaussian splat at (cx, cy), channel intensities v, v^2, sqrt(v).
fn splat(cx: f32, cy: f32) -> PixelBuf {
    let mut buf = PixelBuf::zeros(IMAGE_CHANNELS, IMAGE_SIZE, IMAGE_SIZE);
    let sigma2 = 2.0 * 1.3f32 * 1.3;
    for y in 0..IMAGE_SIZE {
        for x in 0..IMAGE_SIZE {
            let dx = x as f32 - cx;
            let dy = y as f32 - cy;
            let v = (-(dx * dx + dy * dy) / sigma2).exp();
            *buf.at_mut(0, y, x) = v;
            *buf.at_mut(1, y, x) = v * v;
            *buf.at_mut(2, y, x) = v.sqrt();
        }
    }
    buf
}

/// Class-indexed stripes: orientation and frequency depend on the class;
/// phase, amplitude, and a small orientation wobble vary per sample so a
/// few shots cannot cover a class. Channels are distinct nonlinear readouts
/// of the same pattern so channel permutations are detectable.
fn textured(class: u32, k: u32, rng: &mut ChaCha8Rng) -> PixelBuf {
    let base = std::f64::consts::PI * class as f64 / k as f64;
    let wobble: f64 = rng.random_range(-10.0f64.to_radians()..10.0f64.to_radians());
    let theta = base + wobble;
    let freq = 2.0 + (class % 3) as f64;
    let phase: f64 = rng.random_range(0.0..(2.0 * std::f64::consts::PI));
    let amplitude: f64 = rng.random_range(0.75..1.0);
    let (sin_t, cos_t) = (theta.sin(), theta.cos());
    let mut buf = PixelBuf::zeros(IMAGE_CHANNELS, IMAGE_SIZE, IMAGE_SIZE);
    for y in 0..IMAGE_SIZE {
        for x in 0..IMAGE_SIZE {
            let u = (x as f64 * cos_t + y as f64 * sin_t) / IMAGE_SIZE as f64;
            let wave = (2.0 * std::f64::consts::PI * freq * u + phase).sin();
            let v = (0.5 + 0.5 * amplitude * wave) as f32;
            *buf.at_mut(0, y, x) = v;
            *buf.at_mut(1, y, x) = v * v;
            *buf.at_mut(2, y, x) = v.sqrt();
        }
    }
    buf
}

fn apply_shift(
    base: &PixelBuf,
    kind: ShiftKind,
    magnitude: f64,
    rng: &mut ChaCha8Rng,
) -> PixelBuf {
    if magnitude == 0.0 {
        return base.clone();
    }
    match kind {
        ShiftKind::Rotation => ops::rotate(base, magnitude as f32),
        ShiftKind::Translation => ops::translate_x(base, magnitude as f32),
        ShiftKind::ChannelSwap => {
            // Blend toward a cyclic channel rotation; magnitude >= 1 is a
            // full swap (channel c reads base channel c+1).
            let alpha = magnitude.min(1.0) as f32;
            let mut out = base.clone();
            let plane = base.height * base.width;
            for c in 0..base.channels {
                let from = (c + 1) % base.channels;
                for i in 0..plane {
                    out.data[c * plane + i] =
                        (1.0 - alpha) * base.data[c * plane + i] + alpha * base.data[from * plane + i];
                }
            }
            out
        }
        ShiftKind::Noise => {
            let noise = Normal::new(0.0f64, magnitude).expect("validated magnitude");
            let mut out = base.clone();
            for v in out.data.iter_mut() {
                *v += noise.sample(rng) as f32;
            }
            out
        }
    }
}
