//! HR–LR pair generation, patch sampling, and the synthetic dataset.

pub mod dataset;
pub mod image_io;
pub mod phantom;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Elem, Tensor};

/// One HR/LR pair with an optional aligned label map.
#[derive(Clone)]
pub struct SrSample<T: Elem> {
    /// `[C, sH, sW]`, intensities in [0, 1].
    pub hr: Tensor<T>,
    /// `[C, H, W]`.
    pub lr: Tensor<T>,
    /// `[sH, sW]` integer class map aligned with `hr`.
    pub label: Option<Tensor<T>>,
    pub id: String,
}

/// Catmull-Rom cubic kernel (a = −0.5).
pub fn cubic_kernel(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        (1.5 * t - 2.5) * t * t + 1.0
    } else if t < 2.0 {
        ((-0.5 * t + 2.5) * t - 4.0) * t + 2.0
    } else {
        0.0
    }
}

/// Tap weights for one output coordinate at a given in/out ratio. The kernel
/// is widened by the ratio when shrinking (anti-alias prefilter), edges are
/// clamp-replicated, and weights are renormalized to sum to 1.
fn tap_weights(out_idx: usize, in_size: usize, ratio: f64) -> (usize, Vec<f64>) {
    let center = (out_idx as f64 + 0.5) * ratio - 0.5;
    let width = if ratio > 1.0 { 2.0 * ratio } else { 2.0 };
    let lo = (center - width).ceil() as isize;
    let hi = (center + width).floor() as isize;
    let mut first = usize::MAX;
    let mut weights: Vec<f64> = Vec::with_capacity((hi - lo + 1) as usize);
    let scale = if ratio > 1.0 { ratio } else { 1.0 };
    let mut clamped: Vec<(usize, f64)> = Vec::with_capacity((hi - lo + 1) as usize);
    for i in lo..=hi {
        let w = cubic_kernel((i as f64 - center) / scale) / scale;
        if w == 0.0 {
            continue;
        }
        let idx = i.clamp(0, in_size as isize - 1) as usize;
        clamped.push((idx, w));
    }
    // Merge duplicate clamped indices, preserving order.
    clamped.sort_by_key(|&(i, _)| i);
    let mut merged: Vec<(usize, f64)> = Vec::new();
    for (i, w) in clamped {
        match merged.last_mut() {
            Some((last, acc)) if *last == i => *acc += w,
            _ => merged.push((i, w)),
        }
    }
    let total: f64 = merged.iter().map(|&(_, w)| w).sum();
    for (i, w) in merged {
        if first == usize::MAX {
            first = i;
        }
        while first + weights.len() < i {
            weights.push(0.0);
        }
        weights.push(w / total);
    }
    (first, weights)
}

fn resize_axis(data: &[f64], rows: usize, in_size: usize, out_size: usize) -> Vec<f64> {
    // data is rows × in_size, contiguous per row
    let ratio = in_size as f64 / out_size as f64;
    let taps: Vec<(usize, Vec<f64>)> = (0..out_size).map(|o| tap_weights(o, in_size, ratio)).collect();
    let mut out = vec![0.0f64; rows * out_size];
    for r in 0..rows {
        let row = &data[r * in_size..(r + 1) * in_size];
        let out_row = &mut out[r * out_size..(r + 1) * out_size];
        for (o, (first, weights)) in taps.iter().enumerate() {
            let mut acc = 0.0;
            for (k, &w) in weights.iter().enumerate() {
                acc += w * row[first + k];
            }
            out_row[o] = acc;
        }
    }
    out
}

/// Separable bicubic resampling of `[C, H, W]` (or `[N, C, H, W]`) images to
/// a new spatial size. Downscaling applies the anti-alias prefilter.
pub fn bicubic_resize<T: Elem>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let shape = x.shape();
    let (lead, h, w) = match shape.len() {
        3 => (shape[0], shape[1], shape[2]),
        4 => (shape[0] * shape[1], shape[2], shape[3]),
        _ => {
            return Err(Error::invalid("bicubic", format!("want [C,H,W] or [N,C,H,W], got {:?}", shape)));
        }
    };
    if out_h == 0 || out_w == 0 || h == 0 || w == 0 {
        return Err(Error::invalid("bicubic", "empty extents"));
    }
    let data: Vec<f64> = x.data().iter().map(|v| v.to_f64()).collect();
    // width pass: rows = lead·h
    let after_w = resize_axis(&data, lead * h, w, out_w);
    // height pass: transpose each plane to make H the fast axis
    let mut transposed = vec![0.0f64; lead * out_w * h];
    for p in 0..lead {
        for y in 0..h {
            for xo in 0..out_w {
                transposed[(p * out_w + xo) * h + y] = after_w[(p * h + y) * out_w + xo];
            }
        }
    }
    let after_h = resize_axis(&transposed, lead * out_w, h, out_h);
    let mut out = vec![T::ZERO; lead * out_h * out_w];
    for p in 0..lead {
        for xo in 0..out_w {
            for yo in 0..out_h {
                out[(p * out_h + yo) * out_w + xo] = T::from_f64(after_h[(p * out_w + xo) * out_h + yo]);
            }
        }
    }
    let mut out_shape = shape.to_vec();
    let rank = out_shape.len();
    out_shape[rank - 2] = out_h;
    out_shape[rank - 1] = out_w;
    Tensor::from_vec(out, &out_shape)
}

/// HR → LR degradation: anti-aliased bicubic ×s downsample, additive
/// Gaussian noise, then clamp to [0, 1] (noise is applied before the clamp).
pub fn degrade<T: Elem>(
    hr: &Tensor<T>,
    s: usize,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor<T>> {
    let shape = hr.shape();
    if shape.len() != 3 {
        return Err(Error::invalid("degrade", format!("want [C,H,W], got {:?}", shape)));
    }
    let (h, w) = (shape[1], shape[2]);
    if s == 0 || h % s != 0 || w % s != 0 {
        return Err(Error::invalid(
            "degrade",
            format!("extents {h}x{w} not divisible by scale {s}"),
        ));
    }
    let down = bicubic_resize(hr, h / s, w / s)?;
    let mut data = down.to_vec();
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid("degrade", e.to_string()))?;
        for v in data.iter_mut() {
            *v += T::from_f64(normal.sample(rng));
        }
    }
    for v in data.iter_mut() {
        *v = (*v).max_with(T::ZERO).min_with(T::ONE);
    }
    Tensor::from_vec(data, down.shape())
}

/// Aligned HR/LR patch crops: the HR offset is a multiple of s and the LR
/// offset is that divided by s; contents are plain slices, never resampled.
pub fn sample_patches<T: Elem>(
    sample: &SrSample<T>,
    hr_patch: usize,
    s: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SrSample<T>> {
    let hr_shape = sample.hr.shape();
    let lr_shape = sample.lr.shape();
    if hr_shape.len() != 3 || lr_shape.len() != 3 {
        return Err(Error::invalid("patch", "samples must be [C,H,W]"));
    }
    if hr_patch % s != 0 {
        return Err(Error::invalid("patch", format!("patch {hr_patch} not divisible by scale {s}")));
    }
    let (sh, sw) = (hr_shape[1], hr_shape[2]);
    if sh < hr_patch || sw < hr_patch {
        return Err(Error::invalid(
            "patch",
            format!("image {sh}x{sw} smaller than patch {hr_patch}"),
        ));
    }
    if lr_shape[1] * s != sh || lr_shape[2] * s != sw {
        return Err(Error::invalid("patch", "lr extents are not hr/s"));
    }
    let lr_patch = hr_patch / s;
    let max_ly = lr_shape[1] - lr_patch;
    let max_lx = lr_shape[2] - lr_patch;
    let ly = if max_ly == 0 { 0 } else { rng.gen_range(0..=max_ly) };
    let lx = if max_lx == 0 { 0 } else { rng.gen_range(0..=max_lx) };
    let (hy, hx) = (ly * s, lx * s);

    let crop3 = |t: &Tensor<T>, y: usize, x: usize, size: usize| -> Result<Tensor<T>> {
        t.narrow(1, y, size)?.narrow(2, x, size)
    };
    let hr = crop3(&sample.hr, hy, hx, hr_patch)?.detach();
    let lr = crop3(&sample.lr, ly, lx, lr_patch)?.detach();
    let label = match &sample.label {
        Some(lbl) => Some(lbl.narrow(0, hy, hr_patch)?.narrow(1, hx, hr_patch)?.detach()),
        None => None,
    };
    Ok(SrSample {
        hr,
        lr,
        label,
        id: format!("{}+{},{}", sample.id, hy, hx),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn constant_image_survives_degrade() {
        let hr = Tensor::full(&[1, 16, 16], 0.4f64);
        let mut rng = rng_for(1, &["deg"]);
        let lr = degrade(&hr, 4, 0.0, &mut rng).unwrap();
        assert_eq!(lr.shape(), &[1, 4, 4]);
        for &v in lr.data() {
            assert!((v - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_one_sigma_zero_is_identity() {
        let data: Vec<f64> = (0..64).map(|i| (i as f64) / 64.0).collect();
        let hr = Tensor::from_vec(data.clone(), &[1, 8, 8]).unwrap();
        let mut rng = rng_for(2, &["deg"]);
        let lr = degrade(&hr, 1, 0.0, &mut rng).unwrap();
        for (a, b) in lr.data().iter().zip(&data) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn divisibility_violation_errors() {
        let hr = Tensor::full(&[1, 9, 8], 0.5f64);
        let mut rng = rng_for(3, &["deg"]);
        assert!(degrade(&hr, 4, 0.0, &mut rng).is_err());
    }

    #[test]
    fn ramp_matches_separable_kernel_oracle() {
        // 8×8 linear ramp, ×4 downsample, σ=0, against a literal kernel sum.
        let mut data = vec![0.0f64; 64];
        for y in 0..8 {
            for x in 0..8 {
                data[y * 8 + x] = (x as f64) / 7.0;
            }
        }
        let hr = Tensor::from_vec(data.clone(), &[1, 8, 8]).unwrap();
        let mut rng = rng_for(4, &["deg"]);
        let lr = degrade(&hr, 4, 0.0, &mut rng).unwrap();

        // oracle: direct separable evaluation with the widened kernel
        let ratio = 4.0;
        let weights_for = |o: usize| -> Vec<(usize, f64)> {
            let center = (o as f64 + 0.5) * ratio - 0.5;
            let mut taps = Vec::new();
            let lo = (center - 2.0 * ratio).ceil() as isize;
            let hi = (center + 2.0 * ratio).floor() as isize;
            for i in lo..=hi {
                let w = cubic_kernel((i as f64 - center) / ratio) / ratio;
                if w != 0.0 {
                    taps.push((i.clamp(0, 7) as usize, w));
                }
            }
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.into_iter().map(|(i, w)| (i, w / total)).collect()
        };
        for oy in 0..2 {
            for ox in 0..2 {
                let mut acc = 0.0;
                for &(iy, wy) in &weights_for(oy) {
                    for &(ix, wx) in &weights_for(ox) {
                        acc += wy * wx * data[iy * 8 + ix];
                    }
                }
                let got = lr.at(&[0, oy, ox]);
                assert!((got - acc).abs() < 1e-6, "({oy},{ox}): {got} vs {acc}");
            }
        }
    }

    #[test]
    fn degrade_then_upsample_recovers_constant() {
        let hr = Tensor::full(&[1, 32, 32], 0.62f64);
        let mut rng = rng_for(5, &["deg"]);
        let lr = degrade(&hr, 4, 0.0, &mut rng).unwrap();
        let up = bicubic_resize(&lr, 32, 32).unwrap();
        for &v in up.data() {
            assert!((v - 0.62).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_statistics_match_sigma() {
        // over 10⁶ pixels the sample σ tracks the configured σ within 2%
        let side = 1000;
        let hr = Tensor::full(&[1, side, side], 0.5f64);
        let mut rng = rng_for(6, &["deg"]);
        let sigma = 0.02;
        let noisy = degrade(&hr, 1, sigma, &mut rng).unwrap();
        let n = noisy.numel() as f64;
        let mean: f64 = noisy.data().iter().map(|v| v - 0.5).sum::<f64>() / n;
        let var: f64 = noisy
            .data()
            .iter()
            .map(|v| (v - 0.5 - mean) * (v - 0.5 - mean))
            .sum::<f64>()
            / n;
        let sample_sigma = var.sqrt();
        assert!(
            (sample_sigma - sigma).abs() / sigma < 0.02,
            "sample σ {sample_sigma} vs {sigma}"
        );
    }

    #[test]
    fn patch_offsets_and_content() {
        let hr_data: Vec<f64> = (0..(96 * 96)).map(|i| (i % 97) as f64 / 97.0).collect();
        let hr = Tensor::from_vec(hr_data, &[1, 96, 96]).unwrap();
        let mut rng = rng_for(7, &["deg"]);
        let lr = degrade(&hr, 4, 0.0, &mut rng).unwrap();
        let label = Tensor::zeros(&[96, 96]);
        let sample = SrSample {
            hr: hr.clone(),
            lr,
            label: Some(label),
            id: "t".into(),
        };
        // 96×96 source with 96 patch → exactly one aligned position
        let mut rng = rng_for(8, &["patch"]);
        let p = sample_patches(&sample, 96, 4, &mut rng).unwrap();
        assert_eq!(p.hr.to_vec(), sample.hr.to_vec());
        assert_eq!(p.lr.shape(), &[1, 24, 24]);

        // smaller patch: content equals a slice of the source
        let mut rng = rng_for(9, &["patch"]);
        let p = sample_patches(&sample, 32, 4, &mut rng).unwrap();
        assert_eq!(p.hr.shape(), &[1, 32, 32]);
        let (hy, hx) = {
            let tail = p.id.rsplit_once('+').unwrap().1;
            let (a, b) = tail.split_once(',').unwrap();
            (a.parse::<usize>().unwrap(), b.parse::<usize>().unwrap())
        };
        assert_eq!(hy % 4, 0);
        assert_eq!(hx % 4, 0);
        assert_eq!(p.hr.at(&[0, 0, 0]), hr.at(&[0, hy, hx]));
    }
}
