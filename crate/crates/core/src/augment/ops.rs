//! Pixel-level image primitives.
//!
//! All operations are pure functions on [`PixelBuf`] (f32, channel-major,
//! values in [0, 1]) and preserve shape. Geometric resampling is bilinear;
//! out-of-bounds samples use a constant fill of 0.0. Identity parameters
//! (zero angle/shear/shift, same-size resize) reproduce inputs bit-exactly.

use super::PixelBuf;

/// Bilinear resize. Source coordinates follow the half-pixel-center
/// convention, so a same-size resize is an exact copy.
pub fn resize_bilinear(src: &PixelBuf, out_h: usize, out_w: usize) -> PixelBuf {
    if out_h == src.height && out_w == src.width {
        return src.clone();
    }
    let mut out = PixelBuf::zeros(src.channels, out_h, out_w);
    let sy_scale = src.height as f32 / out_h as f32;
    let sx_scale = src.width as f32 / out_w as f32;
    for c in 0..src.channels {
        for y in 0..out_h {
            let sy = (y as f32 + 0.5) * sy_scale - 0.5;
            for x in 0..out_w {
                let sx = (x as f32 + 0.5) * sx_scale - 0.5;
                *out.at_mut(c, y, x) = sample_clamped(src, c, sy, sx);
            }
        }
    }
    out
}

/// Bilinear sample with coordinates clamped to the image border.
fn sample_clamped(src: &PixelBuf, c: usize, y: f32, x: f32) -> f32 {
    let y = y.clamp(0.0, (src.height - 1) as f32);
    let x = x.clamp(0.0, (src.width - 1) as f32);
    let y0 = y.floor() as usize;
    let x0 = x.floor() as usize;
    let y1 = (y0 + 1).min(src.height - 1);
    let x1 = (x0 + 1).min(src.width - 1);
    let fy = y - y0 as f32;
    let fx = x - x0 as f32;
    let v00 = src.at(c, y0, x0);
    let v01 = src.at(c, y0, x1);
    let v10 = src.at(c, y1, x0);
    let v11 = src.at(c, y1, x1);
    v00 * (1.0 - fy) * (1.0 - fx) + v01 * (1.0 - fy) * fx + v10 * fy * (1.0 - fx) + v11 * fy * fx
}

pub fn crop(src: &PixelBuf, top: usize, left: usize, h: usize, w: usize) -> PixelBuf {
    debug_assert!(top + h <= src.height && left + w <= src.width);
    let mut out = PixelBuf::zeros(src.channels, h, w);
    for c in 0..src.channels {
        for y in 0..h {
            for x in 0..w {
                *out.at_mut(c, y, x) = src.at(c, top + y, left + x);
            }
        }
    }
    out
}

pub fn hflip(src: &PixelBuf) -> PixelBuf {
    let mut out = src.clone();
    for c in 0..src.channels {
        for y in 0..src.height {
            for x in 0..src.width {
                *out.at_mut(c, y, x) = src.at(c, y, src.width - 1 - x);
            }
        }
    }
    out
}

/// Separable Gaussian blur with replicate-edge handling. `sigma <= 0` is an
/// exact identity. Kernel radius is `ceil(3 * sigma)`.
pub fn gaussian_blur(src: &PixelBuf, sigma: f32) -> PixelBuf {
    if sigma <= 0.0 {
        return src.clone();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let radius = radius.max(1);
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    let denom = 2.0 * sigma * sigma;
    for i in -radius..=radius {
        kernel.push((-(i * i) as f32 / denom).exp());
    }
    let sum: f32 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= sum);

    let h = src.height as i64;
    let w = src.width as i64;
    let mut horiz = PixelBuf::zeros(src.channels, src.height, src.width);
    for c in 0..src.channels {
        for y in 0..src.height {
            for x in 0..w {
                let mut acc = 0.0;
                for (ki, k) in kernel.iter().enumerate() {
                    let sx = (x + ki as i64 - radius).clamp(0, w - 1) as usize;
                    acc += k * src.at(c, y, sx);
                }
                *horiz.at_mut(c, y, x as usize) = acc;
            }
        }
    }
    let mut out = PixelBuf::zeros(src.channels, src.height, src.width);
    for c in 0..src.channels {
        for y in 0..h {
            for x in 0..src.width {
                let mut acc = 0.0;
                for (ki, k) in kernel.iter().enumerate() {
                    let sy = (y + ki as i64 - radius).clamp(0, h - 1) as usize;
                    acc += k * horiz.at(c, sy, x);
                }
                *out.at_mut(c, y as usize, x) = acc;
            }
        }
    }
    out
}

/// Inverse-mapped affine warp: output pixel (x, y) samples the source at
/// `(sx, sy) = (a*x + b*y + c, d*x + e*y + f)`. Samples falling outside the
/// image use `fill`.
pub fn affine_bilinear(src: &PixelBuf, coeffs: [f32; 6], fill: f32) -> PixelBuf {
    let [a, b, c0, d, e, f0] = coeffs;
    let mut out = PixelBuf::zeros(src.channels, src.height, src.width);
    let h = src.height as f32;
    let w = src.width as f32;
    for ch in 0..src.channels {
        for y in 0..src.height {
            for x in 0..src.width {
                let sx = a * x as f32 + b * y as f32 + c0;
                let sy = d * x as f32 + e * y as f32 + f0;
                let v = if sx <= -1.0 || sy <= -1.0 || sx >= w || sy >= h {
                    fill
                } else {
                    sample_with_fill(src, ch, sy, sx, fill)
                };
                *out.at_mut(ch, y, x) = v;
            }
        }
    }
    out
}

/// Bilinear sample where neighbors outside the image contribute `fill`.
fn sample_with_fill(src: &PixelBuf, c: usize, y: f32, x: f32, fill: f32) -> f32 {
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let read = |yy: f32, xx: f32| -> f32 {
        if yy < 0.0 || xx < 0.0 || yy >= src.height as f32 || xx >= src.width as f32 {
            fill
        } else {
            src.at(c, yy as usize, xx as usize)
        }
    };
    let v00 = read(y0, x0);
    let v01 = read(y0, x0 + 1.0);
    let v10 = read(y0 + 1.0, x0);
    let v11 = read(y0 + 1.0, x0 + 1.0);
    v00 * (1.0 - fy) * (1.0 - fx) + v01 * (1.0 - fy) * fx + v10 * fy * (1.0 - fx) + v11 * fy * fx
}

/// Content rotation by `degrees` about the image center (fill 0).
pub fn rotate(src: &PixelBuf, degrees: f32) -> PixelBuf {
    if degrees == 0.0 {
        return src.clone();
    }
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let cx = (src.width as f32 - 1.0) / 2.0;
    let cy = (src.height as f32 - 1.0) / 2.0;
    affine_bilinear(
        src,
        [
            cos,
            sin,
            cx - cos * cx - sin * cy,
            -sin,
            cos,
            cy + sin * cx - cos * cy,
        ],
        0.0,
    )
}

pub fn shear_x(src: &PixelBuf, factor: f32) -> PixelBuf {
    if factor == 0.0 {
        return src.clone();
    }
    let cy = (src.height as f32 - 1.0) / 2.0;
    affine_bilinear(src, [1.0, factor, -factor * cy, 0.0, 1.0, 0.0], 0.0)
}

pub fn shear_y(src: &PixelBuf, factor: f32) -> PixelBuf {
    if factor == 0.0 {
        return src.clone();
    }
    let cx = (src.width as f32 - 1.0) / 2.0;
    affine_bilinear(src, [1.0, 0.0, 0.0, factor, 1.0, -factor * cx], 0.0)
}

/// Shift content right by `dx` pixels (negative shifts left), fill 0.
pub fn translate_x(src: &PixelBuf, dx: f32) -> PixelBuf {
    if dx == 0.0 {
        return src.clone();
    }
    affine_bilinear(src, [1.0, 0.0, -dx, 0.0, 1.0, 0.0], 0.0)
}

/// Shift content down by `dy` pixels (negative shifts up), fill 0.
pub fn translate_y(src: &PixelBuf, dy: f32) -> PixelBuf {
    if dy == 0.0 {
        return src.clone();
    }
    affine_bilinear(src, [1.0, 0.0, 0.0, 0.0, 1.0, -dy], 0.0)
}

pub fn clamp01(buf: &mut PixelBuf) {
    for v in buf.data.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}

pub fn channel_means(src: &PixelBuf) -> Vec<f32> {
    let plane = src.height * src.width;
    (0..src.channels)
        .map(|c| src.data[c * plane..(c + 1) * plane].iter().sum::<f32>() / plane as f32)
        .collect()
}

/// Per-pixel luminance: 0.299 R + 0.587 G + 0.114 B for three channels,
/// plain channel mean otherwise.
pub fn luminance(src: &PixelBuf) -> Vec<f32> {
    let plane = src.height * src.width;
    let mut out = vec![0.0; plane];
    if src.channels == 3 {
        for i in 0..plane {
            out[i] = 0.299 * src.data[i] + 0.587 * src.data[plane + i] + 0.114 * src.data[2 * plane + i];
        }
    } else {
        for i in 0..plane {
            let mut acc = 0.0;
            for c in 0..src.channels {
                acc += src.data[c * plane + i];
            }
            out[i] = acc / src.channels as f32;
        }
    }
    out
}

/// Per-channel min/max stretch to the full [0, 1] range. Flat channels are
/// left unchanged.
pub fn autocontrast(src: &PixelBuf) -> PixelBuf {
    let mut out = src.clone();
    let plane = src.height * src.width;
    for c in 0..src.channels {
        let ch = &mut out.data[c * plane..(c + 1) * plane];
        let lo = ch.iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = ch.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        if hi > lo {
            for v in ch.iter_mut() {
                *v = (*v - lo) / (hi - lo);
            }
        }
    }
    out
}

/// Histogram equalization on a 256-bin u8 quantization per channel, using
/// the classic cumulative-distribution remap.
pub fn equalize(src: &PixelBuf) -> PixelBuf {
    let mut out = src.clone();
    let plane = src.height * src.width;
    for c in 0..src.channels {
        let ch = &mut out.data[c * plane..(c + 1) * plane];
        let mut hist = [0u32; 256];
        for v in ch.iter() {
            hist[to_u8(*v) as usize] += 1;
        }
        let mut cdf = [0u32; 256];
        let mut acc = 0;
        for (i, h) in hist.iter().enumerate() {
            acc += h;
            cdf[i] = acc;
        }
        let cdf_min = cdf.iter().copied().find(|&v| v > 0).unwrap_or(0);
        let total = plane as u32;
        if total <= cdf_min {
            continue; // single gray level; nothing to spread
        }
        let mut lut = [0u8; 256];
        for i in 0..256 {
            if cdf[i] >= cdf_min {
                let num = (cdf[i] - cdf_min) as f32 * 255.0;
                lut[i] = (num / (total - cdf_min) as f32).round() as u8;
            }
        }
        for v in ch.iter_mut() {
            *v = lut[to_u8(*v) as usize] as f32 / 255.0;
        }
    }
    out
}

/// Keep the top `bits` bits of the u8 quantization.
pub fn posterize(src: &PixelBuf, bits: u32) -> PixelBuf {
    let bits = bits.clamp(1, 8);
    let mask = (0xffu16 << (8 - bits)) as u8;
    let mut out = src.clone();
    for v in out.data.iter_mut() {
        *v = (to_u8(*v) & mask) as f32 / 255.0;
    }
    out
}

/// Invert pixels strictly above `threshold`; `threshold = 1` is an identity
/// on in-range images.
pub fn solarize(src: &PixelBuf, threshold: f32) -> PixelBuf {
    let mut out = src.clone();
    for v in out.data.iter_mut() {
        if *v > threshold {
            *v = 1.0 - *v;
        }
    }
    out
}

/// Blend toward black: `out = p * factor` (factor 1 = identity).
pub fn brightness(src: &PixelBuf, factor: f32) -> PixelBuf {
    if factor == 1.0 {
        return src.clone();
    }
    let mut out = src.clone();
    for v in out.data.iter_mut() {
        *v = (*v * factor).clamp(0.0, 1.0);
    }
    out
}

/// Blend toward the mean luminance: `out = mean + factor * (p - mean)`.
pub fn contrast(src: &PixelBuf, factor: f32) -> PixelBuf {
    if factor == 1.0 {
        return src.clone();
    }
    let lum = luminance(src);
    let mean = lum.iter().sum::<f32>() / lum.len() as f32;
    let mut out = src.clone();
    for v in out.data.iter_mut() {
        *v = (mean + factor * (*v - mean)).clamp(0.0, 1.0);
    }
    out
}

/// Blend toward per-pixel luminance (grayscale): factor 0 = grayscale,
/// 1 = identity, >1 oversaturates.
pub fn saturation(src: &PixelBuf, factor: f32) -> PixelBuf {
    if factor == 1.0 {
        return src.clone();
    }
    let lum = luminance(src);
    let plane = src.height * src.width;
    let mut out = src.clone();
    for c in 0..src.channels {
        for i in 0..plane {
            let v = &mut out.data[c * plane + i];
            *v = (lum[i] + factor * (*v - lum[i])).clamp(0.0, 1.0);
        }
    }
    out
}

/// Blend between a 3x3 smoothed image and the original:
/// `out = smooth + factor * (orig - smooth)` (factor 1 = identity).
/// The smoothing kernel is [[1,1,1],[1,5,1],[1,1,1]] / 13, replicate-edge.
pub fn sharpness(src: &PixelBuf, factor: f32) -> PixelBuf {
    if factor == 1.0 {
        return src.clone();
    }
    let h = src.height as i64;
    let w = src.width as i64;
    let mut smooth = src.clone();
    for c in 0..src.channels {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        let weight = if dy == 0 && dx == 0 { 5.0 } else { 1.0 };
                        let sy = (y + dy).clamp(0, h - 1) as usize;
                        let sx = (x + dx).clamp(0, w - 1) as usize;
                        acc += weight * src.at(c, sy, sx);
                    }
                }
                *smooth.at_mut(c, y as usize, x as usize) = acc / 13.0;
            }
        }
    }
    let mut out = src.clone();
    for (o, s) in out.data.iter_mut().zip(smooth.data.iter()) {
        *o = (*s + factor * (*o - *s)).clamp(0.0, 1.0);
    }
    out
}

/// Replace every channel with the per-pixel luminance.
pub fn grayscale(src: &PixelBuf) -> PixelBuf {
    let lum = luminance(src);
    let plane = src.height * src.width;
    let mut out = src.clone();
    for c in 0..src.channels {
        out.data[c * plane..(c + 1) * plane].copy_from_slice(&lum);
    }
    out
}

/// Mask the square `[top, top+side) x [left, left+side)` with each channel's
/// mean (computed before masking).
pub fn cutout(src: &PixelBuf, top: usize, left: usize, side: usize) -> PixelBuf {
    let means = channel_means(src);
    let mut out = src.clone();
    for c in 0..src.channels {
        for y in top..(top + side).min(src.height) {
            for x in left..(left + side).min(src.width) {
                *out.at_mut(c, y, x) = means[c];
            }
        }
    }
    out
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(c: usize, h: usize, w: usize) -> PixelBuf {
        let mut buf = PixelBuf::zeros(c, h, w);
        let n = buf.data.len();
        for (i, v) in buf.data.iter_mut().enumerate() {
            *v = i as f32 / n as f32;
        }
        buf
    }

    #[test]
    fn same_size_resize_is_identity() {
        let img = ramp(3, 8, 6);
        assert_eq!(resize_bilinear(&img, 8, 6), img);
    }

    #[test]
    fn hflip_is_involutive() {
        let img = ramp(2, 5, 7);
        assert_eq!(hflip(&hflip(&img)), img);
    }

    #[test]
    fn zero_sigma_blur_is_identity() {
        let img = ramp(1, 6, 6);
        assert_eq!(gaussian_blur(&img, 0.0), img);
    }

    #[test]
    fn blur_preserves_mean_of_constant_image() {
        let mut img = PixelBuf::zeros(1, 8, 8);
        img.data.iter_mut().for_each(|v| *v = 0.37);
        let out = gaussian_blur(&img, 0.8);
        for v in &out.data {
            assert!((v - 0.37).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_angle_rotate_is_identity() {
        let img = ramp(3, 9, 9);
        assert_eq!(rotate(&img, 0.0), img);
        assert_eq!(shear_x(&img, 0.0), img);
        assert_eq!(translate_x(&img, 0.0), img);
    }

    #[test]
    fn integer_translate_moves_pixels_exactly() {
        let mut img = PixelBuf::zeros(1, 4, 4);
        *img.at_mut(0, 1, 1) = 1.0;
        let out = translate_x(&img, 2.0);
        assert_eq!(out.at(0, 1, 3), 1.0);
        assert_eq!(out.at(0, 1, 1), 0.0);
    }

    #[test]
    fn rotate_180_reverses_both_axes() {
        let img = ramp(1, 5, 5);
        let out = rotate(&img, 180.0);
        for y in 0..5 {
            for x in 0..5 {
                assert!((out.at(0, y, x) - img.at(0, 4 - y, 4 - x)).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn solarize_threshold_one_is_identity() {
        let img = ramp(1, 4, 4);
        assert_eq!(solarize(&img, 1.0), img);
    }

    #[test]
    fn cutout_masks_exactly_side_squared_pixels() {
        let img = ramp(2, 10, 10);
        let out = cutout(&img, 2, 3, 3);
        let means = channel_means(&img);
        let mut changed = 0;
        for c in 0..2 {
            for y in 0..10 {
                for x in 0..10 {
                    if out.at(c, y, x) != img.at(c, y, x) {
                        changed += 1;
                        assert_eq!(out.at(c, y, x), means[c]);
                    }
                }
            }
        }
        // Some masked pixels may coincidentally equal the mean, so "changed"
        // is a lower bound; on a strict ramp none do.
        assert_eq!(changed, 2 * 9);
    }

    #[test]
    fn autocontrast_stretches_to_unit_range() {
        let mut img = PixelBuf::zeros(1, 4, 4);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = 0.4 + 0.01 * i as f32;
        }
        let out = autocontrast(&img);
        let lo = out.data.iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = out.data.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        assert!((lo - 0.0).abs() < 1e-6 && (hi - 1.0).abs() < 1e-6);
    }

    #[test]
    fn posterize_8_bits_is_u8_identity() {
        // Values on the u8 grid survive 8-bit posterization exactly.
        let mut img = PixelBuf::zeros(1, 2, 2);
        img.data = vec![0.0, 128.0 / 255.0, 64.0 / 255.0, 1.0];
        assert_eq!(posterize(&img, 8), img);
    }
}
