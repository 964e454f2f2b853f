//! Evaluation metrics (PSNR, windowed SSIM, per-region dice, FPS) and the
//! evaluation report structure. Metrics compute in f64 regardless of the
//! model dtype.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{Elem, Tensor};
use crate::unet::dice_coefficient;

/// Reported aggregate stand-in for infinite PSNR (identical images).
pub const PSNR_CAP_DB: f64 = 100.0;

/// 10·log10(peak²/MSE); +∞ when the images are identical.
pub fn psnr<T: Elem>(a: &Tensor<T>, b: &Tensor<T>, peak: f64) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "psnr",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    if a.numel() == 0 {
        return Err(Error::invalid("psnr", "empty image"));
    }
    let mut mse = 0.0f64;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = x.to_f64() - y.to_f64();
        mse += d * d;
    }
    mse /= a.numel() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in w.iter_mut() {
        *v /= sum;
    }
    w
}

/// Separable valid-mode convolution with the 11-tap Gaussian.
fn gauss_filter(img: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let win = gaussian_window();
    let oh = h - SSIM_WINDOW + 1;
    let ow = w - SSIM_WINDOW + 1;
    // rows
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &wk) in win.iter().enumerate() {
                acc += wk * img[y * w + x + k];
            }
            tmp[y * ow + x] = acc;
        }
    }
    // cols
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (k, &wk) in win.iter().enumerate() {
                acc += wk * tmp[(y + k) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    (out, oh, ow)
}

fn image_planes<T: Elem>(t: &Tensor<T>) -> Result<(Vec<Vec<f64>>, usize, usize)> {
    let shape = t.shape();
    let (planes, h, w) = match shape.len() {
        2 => (1, shape[0], shape[1]),
        3 => (shape[0], shape[1], shape[2]),
        4 => (shape[0] * shape[1], shape[2], shape[3]),
        _ => {
            return Err(Error::invalid("image metric", format!("unsupported rank {:?}", shape)));
        }
    };
    let data = t.data();
    let out = (0..planes)
        .map(|p| data[p * h * w..(p + 1) * h * w].iter().map(|v| v.to_f64()).collect())
        .collect();
    Ok((out, h, w))
}

/// Mean SSIM over 11×11 Gaussian-weighted windows (σ = 1.5), averaged over
/// planes when the input has channel/batch dims. Errors when the image is
/// smaller than the window.
pub fn ssim<T: Elem>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    ssim_with_peak(a, b, 1.0)
}

pub fn ssim_with_peak<T: Elem>(a: &Tensor<T>, b: &Tensor<T>, peak: f64) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "ssim",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let (pa, h, w) = image_planes(a)?;
    let (pb, _, _) = image_planes(b)?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(
            "ssim",
            format!("image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"),
        ));
    }
    let c1 = (0.01 * peak) * (0.01 * peak);
    let c2 = (0.03 * peak) * (0.03 * peak);
    let mut total = 0.0;
    for (ia, ib) in pa.iter().zip(&pb) {
        let sq_a: Vec<f64> = ia.iter().map(|v| v * v).collect();
        let sq_b: Vec<f64> = ib.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = ia.iter().zip(ib).map(|(x, y)| x * y).collect();
        let (mu_a, oh, ow) = gauss_filter(ia, h, w);
        let (mu_b, _, _) = gauss_filter(ib, h, w);
        let (e_a2, _, _) = gauss_filter(&sq_a, h, w);
        let (e_b2, _, _) = gauss_filter(&sq_b, h, w);
        let (e_ab, _, _) = gauss_filter(&ab, h, w);
        let mut acc = 0.0;
        for i in 0..oh * ow {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_a2[i] - ma * ma;
            let vb = e_b2[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += acc / (oh * ow) as f64;
    }
    Ok(total / pa.len() as f64)
}

/// Binarize two integer class maps by membership in `region` and apply the
/// smoothed dice overlap. Region indexes must lie inside 0..num_classes.
pub fn region_dice<T: Elem>(
    pred: &Tensor<T>,
    gt: &Tensor<T>,
    region: &[usize],
    num_classes: usize,
) -> Result<f64> {
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch {
            op: "region_dice",
            lhs: pred.shape().to_vec(),
            rhs: gt.shape().to_vec(),
        });
    }
    if region.is_empty() {
        return Err(Error::invalid("region_dice", "empty region set"));
    }
    for &cls in region {
        if cls >= num_classes {
            return Err(Error::invalid(
                "region_dice",
                format!("class index {cls} outside 0..{num_classes}"),
            ));
        }
    }
    let binarize = |t: &Tensor<T>| -> Result<Tensor<f64>> {
        let data: Result<Vec<f64>> = t
            .data()
            .iter()
            .map(|v| {
                let f = v.to_f64();
                if f.fract() != 0.0 || f < 0.0 || f >= num_classes as f64 {
                    return Err(Error::invalid("region_dice", format!("label {f} is not a class index")));
                }
                Ok(if region.contains(&(f as usize)) { 1.0 } else { 0.0 })
            })
            .collect();
        Tensor::from_vec(data?, t.shape())
    };
    dice_coefficient(&binarize(pred)?, &binarize(gt)?)
}

/// The "whole region" set: every non-background class.
pub fn foreground_region(num_classes: usize) -> Vec<usize> {
    (1..num_classes).collect()
}

/// Class map from per-pixel probabilities [N,K,H,W] by arg-max over K.
pub fn argmax_classes<T: Elem>(probs: &Tensor<T>) -> Result<Tensor<T>> {
    let shape = probs.shape();
    if shape.len() != 4 {
        return Err(Error::invalid("argmax", format!("want [N,K,H,W], got {:?}", shape)));
    }
    let (n, k, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let plane = h * w;
    let data = probs.data();
    let mut out = vec![T::ZERO; n * plane];
    for ni in 0..n {
        for p in 0..plane {
            let mut best = 0usize;
            let mut best_v = data[ni * k * plane + p];
            for c in 1..k {
                let v = data[(ni * k + c) * plane + p];
                if v > best_v {
                    best_v = v;
                    best = c;
                }
            }
            out[ni * plane + p] = T::from_f64(best as f64);
        }
    }
    Tensor::from_vec(out, &[n, h, w])
}

#[derive(Debug, Clone, Serialize)]
pub struct FpsReport {
    pub frames_per_iter: usize,
    pub iters: usize,
    /// Median over per-iteration rates.
    pub median_fps: f64,
    pub min_fps: f64,
    pub max_fps: f64,
    /// iters·frames / total elapsed.
    pub overall_fps: f64,
}

/// Wall-clock throughput of `step` after `warmup` unmeasured runs.
pub fn measure_fps<F>(mut step: F, frames_per_iter: usize, warmup: usize, iters: usize) -> Result<FpsReport>
where
    F: FnMut() -> Result<()>,
{
    if iters == 0 {
        return Err(Error::invalid("fps", "zero iterations"));
    }
    if frames_per_iter == 0 {
        return Err(Error::invalid("fps", "zero frames per iteration"));
    }
    for _ in 0..warmup {
        step()?;
    }
    let mut rates = Vec::with_capacity(iters);
    let total_start = Instant::now();
    for _ in 0..iters {
        let start = Instant::now();
        step()?;
        let secs = start.elapsed().as_secs_f64();
        rates.push(frames_per_iter as f64 / secs.max(1e-12));
    }
    let total = total_start.elapsed().as_secs_f64();
    rates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if iters % 2 == 1 {
        rates[iters / 2]
    } else {
        0.5 * (rates[iters / 2 - 1] + rates[iters / 2])
    };
    Ok(FpsReport {
        frames_per_iter,
        iters,
        median_fps: median,
        min_fps: rates[0],
        max_fps: rates[iters - 1],
        overall_fps: (iters * frames_per_iter) as f64 / total.max(1e-12),
    })
}

/// One evaluated image.
#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub id: String,
    /// PSNR in dB, capped at [`PSNR_CAP_DB`] when exact.
    pub psnr: f64,
    /// True when MSE was 0 (reported as ∞ in text output).
    pub psnr_infinite: bool,
    pub ssim: f64,
    /// Dice per region, aligned with `EvalReport::region_names`.
    pub dice: Vec<f64>,
}

pub fn metric_row<T: Elem>(
    id: impl Into<String>,
    sr: &Tensor<T>,
    hr: &Tensor<T>,
    dice: Vec<f64>,
) -> Result<MetricRow> {
    let p = psnr(sr, hr, 1.0)?;
    Ok(MetricRow {
        id: id.into(),
        psnr: if p.is_infinite() { PSNR_CAP_DB } else { p },
        psnr_infinite: p.is_infinite(),
        ssim: ssim(sr, hr)?,
        dice,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

pub fn aggregate(values: impl Iterator<Item = f64>) -> Aggregate {
    let vals: Vec<f64> = values.collect();
    if vals.is_empty() {
        return Aggregate { mean: 0.0, std: 0.0 };
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
    Aggregate {
        mean,
        std: var.sqrt(),
    }
}

/// Full evaluation output: per-image rows for the model under test and the
/// bicubic baseline, plus optional cost/FPS/FID figures.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub region_names: Vec<String>,
    pub sr: Vec<MetricRow>,
    pub bicubic: Vec<MetricRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macs: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fps: Option<FpsReport>,
    /// Reserved for externally computed FID values.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fid: Option<f64>,
}

impl EvalReport {
    pub fn new(region_names: Vec<String>) -> EvalReport {
        EvalReport {
            region_names,
            sr: Vec::new(),
            bicubic: Vec::new(),
            params: None,
            macs: None,
            fps: None,
            fid: None,
        }
    }

    pub fn psnr_aggregate(rows: &[MetricRow]) -> Aggregate {
        aggregate(rows.iter().map(|r| r.psnr))
    }

    pub fn ssim_aggregate(rows: &[MetricRow]) -> Aggregate {
        aggregate(rows.iter().map(|r| r.ssim))
    }

    pub fn dice_aggregate(rows: &[MetricRow], region: usize) -> Aggregate {
        aggregate(rows.iter().map(|r| r.dice[region]))
    }

    fn method_block(&self, name: &str, rows: &[MetricRow], out: &mut String) {
        let p = Self::psnr_aggregate(rows);
        let s = Self::ssim_aggregate(rows);
        out.push_str(&format!(
            "{}\tPSNR(dB)\t{:.4}\t{:.4}\n{}\tSSIM\t{:.4}\t{:.4}\n",
            name, p.mean, p.std, name, s.mean, s.std
        ));
        for (i, region) in self.region_names.iter().enumerate() {
            let d = Self::dice_aggregate(rows, i);
            out.push_str(&format!("{}\tDice-{}\t{:.4}\t{:.4}\n", name, region, d.mean, d.std));
        }
    }

    /// Aggregate table: `method\tmetric\tmean\tstd` lines.
    pub fn to_delimited(&self) -> String {
        let mut out = String::from("method\tmetric\tmean\tstd\n");
        self.method_block("sr", &self.sr, &mut out);
        self.method_block("bicubic", &self.bicubic, &mut out);
        if let Some(p) = self.params {
            out.push_str(&format!("sr\tparams\t{p}\t0\n"));
        }
        if let Some(m) = self.macs {
            out.push_str(&format!("sr\tmacs\t{m}\t0\n"));
        }
        out
    }

    /// Per-image table: `method\tid\tpsnr\tssim\tdice...` lines; infinite
    /// PSNR is printed as `inf`.
    pub fn per_image_delimited(&self) -> String {
        let mut out = String::from("method\tid\tpsnr\tssim");
        for region in &self.region_names {
            out.push_str(&format!("\tdice_{region}"));
        }
        out.push('\n');
        for (name, rows) in [("sr", &self.sr), ("bicubic", &self.bicubic)] {
            for row in rows.iter() {
                let psnr_text = if row.psnr_infinite {
                    "inf".to_string()
                } else {
                    format!("{:.4}", row.psnr)
                };
                out.push_str(&format!("{}\t{}\t{}\t{:.6}", name, row.id, psnr_text, row.ssim));
                for d in &row.dice {
                    out.push_str(&format!("\t{d:.6}"));
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::msg(format!("report json: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_examples() {
        let a = Tensor::from_vec(vec![0.25f64, 0.5, 0.75, 1.0], &[2, 2]).unwrap();
        assert!(psnr(&a, &a, 1.0).unwrap().is_infinite());

        // uniform error 0.5 → 10·log10(1/0.25) ≈ 6.0206 dB
        let b = a.affine(1.0, -0.5).unwrap();
        let v = psnr(&a, &b, 1.0).unwrap();
        assert!((v - 6.020599913279624).abs() < 1e-9);
    }

    #[test]
    fn psnr_monotone_in_noise() {
        use rand::Rng;
        let mut rng = crate::rng::rng_for(1, &["psnr"]);
        let base: Vec<f64> = (0..256).map(|_| rng.gen::<f64>()).collect();
        let a = Tensor::from_vec(base.clone(), &[16, 16]).unwrap();
        let mut last = f64::INFINITY;
        for sigma in [0.01, 0.05, 0.1] {
            let noisy: Vec<f64> = base.iter().map(|v| v + sigma).collect();
            let b = Tensor::from_vec(noisy, &[16, 16]).unwrap();
            let p = psnr(&a, &b, 1.0).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        use rand::Rng;
        let mut rng = crate::rng::rng_for(2, &["ssim"]);
        let a = Tensor::from_vec((0..256).map(|_| rng.gen::<f64>()).collect(), &[16, 16]).unwrap();
        let b = Tensor::from_vec((0..256).map(|_| rng.gen::<f64>()).collect(), &[16, 16]).unwrap();
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let ab = ssim(&a, &b).unwrap();
        let ba = ssim(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!((-1.0..=1.0).contains(&ab));
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = Tensor::<f64>::ones(&[4, 4]);
        assert!(ssim(&a, &a).is_err());
    }

    #[test]
    fn region_dice_examples() {
        // 2-class 2×2 toy with one disputed pixel:
        // gt   = [1, 1, 0, 0]; pred = [1, 0, 0, 0]
        // region {1}: X = {px0}, Y = {px0, px1} → (2·1+1)/(1+2+1) = 0.75
        let pred = Tensor::from_vec(vec![1.0f64, 0.0, 0.0, 0.0], &[1, 2, 2]).unwrap();
        let gt = Tensor::from_vec(vec![1.0f64, 1.0, 0.0, 0.0], &[1, 2, 2]).unwrap();
        assert_eq!(region_dice(&pred, &gt, &[1], 2).unwrap(), 0.75);

        // perfect prediction over all classes → 1
        assert_eq!(region_dice(&gt, &gt, &[0, 1], 2).unwrap(), 1.0);

        // class present in gt, absent in pred → ≈ 0
        let none = Tensor::from_vec(vec![0.0f64, 0.0, 0.0, 0.0], &[1, 2, 2]).unwrap();
        let d = region_dice(&none, &gt, &[1], 2).unwrap();
        assert!(d < 0.4, "near-zero dice, got {d}");

        // unknown class index errors
        assert!(region_dice(&pred, &gt, &[7], 2).is_err());
    }

    #[test]
    fn argmax_classes_works() {
        let probs = Tensor::from_vec(
            vec![
                0.9, 0.2, // class 0 plane
                0.1, 0.8, // class 1 plane
            ],
            &[1, 2, 1, 2],
        )
        .unwrap();
        let classes = argmax_classes(&probs).unwrap();
        assert_eq!(classes.to_vec(), vec![0.0, 1.0]);
    }

    #[test]
    fn fps_reports_consistent_totals() {
        let report = measure_fps(
            || {
                std::hint::black_box((0..20_000).map(|i| i as f64).sum::<f64>());
                Ok(())
            },
            4,
            1,
            9,
        )
        .unwrap();
        assert!(report.median_fps > 0.0);
        assert!(report.min_fps <= report.median_fps && report.median_fps <= report.max_fps);
        assert!(measure_fps(|| Ok(()), 1, 0, 0).is_err());
    }

    #[test]
    fn aggregates_match_recomputation() {
        let rows = vec![
            MetricRow {
                id: "0".into(),
                psnr: 30.0,
                psnr_infinite: false,
                ssim: 0.9,
                dice: vec![0.8],
            },
            MetricRow {
                id: "1".into(),
                psnr: 34.0,
                psnr_infinite: false,
                ssim: 0.8,
                dice: vec![0.6],
            },
        ];
        let agg = EvalReport::psnr_aggregate(&rows);
        assert_eq!(agg.mean, 32.0);
        assert_eq!(agg.std, 2.0);
        let d = EvalReport::dice_aggregate(&rows, 0);
        assert!((d.mean - 0.7).abs() < 1e-12);
    }
}
