//! Synthetic labeled phantoms: nested-ellipse "tissue" images with per-class
//! intensity bands, standing in for clinical data at desk scale.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::tensor::{Elem, Tensor};

#[derive(Debug, Clone)]
pub struct PhantomSpec {
    /// Square canvas side in pixels.
    pub canvas: usize,
    /// Count range (inclusive) of mid-intensity inner structures (class 2).
    pub tissue_count: (usize, usize),
    /// Count range (inclusive) of small bright lesions (class 3).
    pub lesion_count: (usize, usize),
    /// Intensity band per class, indexed by class id.
    pub intensity_bands: Vec<(f64, f64)>,
    /// Uniform per-pixel texture noise amplitude.
    pub texture_amplitude: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            canvas: 96,
            tissue_count: (1, 3),
            lesion_count: (2, 5),
            intensity_bands: vec![(0.02, 0.10), (0.35, 0.55), (0.60, 0.80), (0.85, 1.00)],
            texture_amplitude: 0.02,
        }
    }
}

impl PhantomSpec {
    pub fn classes(&self) -> usize {
        self.intensity_bands.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.canvas < 16 {
            return Err(Error::invalid("phantom spec", "canvas too small"));
        }
        if self.classes() < 2 {
            return Err(Error::invalid("phantom spec", "need at least 2 classes"));
        }
        if self.tissue_count.0 > self.tissue_count.1 || self.lesion_count.0 > self.lesion_count.1 {
            return Err(Error::invalid("phantom spec", "count ranges are inverted"));
        }
        for &(lo, hi) in &self.intensity_bands {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                return Err(Error::invalid("phantom spec", "intensity bands must be within [0,1]"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct Ellipse {
    cy: f64,
    cx: f64,
    a: f64,
    b: f64,
    cos_t: f64,
    sin_t: f64,
}

impl Ellipse {
    fn sample(rng: &mut ChaCha8Rng, cy: f64, cx: f64, a: f64, b: f64) -> Ellipse {
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        Ellipse {
            cy,
            cx,
            a,
            b,
            cos_t: theta.cos(),
            sin_t: theta.sin(),
        }
    }

    fn contains(&self, y: f64, x: f64) -> bool {
        let dy = y - self.cy;
        let dx = x - self.cx;
        let u = (dx * self.cos_t + dy * self.sin_t) / self.a;
        let v = (-dx * self.sin_t + dy * self.cos_t) / self.b;
        u * u + v * v <= 1.0
    }
}

/// One phantom: image `[1, H, W]` in [0,1] and integer labels `[H, W]`.
/// Deterministic for a given (seed, index).
pub fn generate_phantom<T: Elem>(
    spec: &PhantomSpec,
    seed: u64,
    index: usize,
) -> Result<(Tensor<T>, Tensor<T>)> {
    spec.validate()?;
    let mut rng = rng_for(seed, &["phantom", &index.to_string()]);
    let n = spec.canvas;
    let nf = n as f64;

    // class intensities, one draw per class per phantom
    let levels: Vec<f64> = spec
        .intensity_bands
        .iter()
        .map(|&(lo, hi)| if lo == hi { lo } else { rng.gen_range(lo..hi) })
        .collect();

    let organ = {
        let cy = nf * rng.gen_range(0.45..0.55);
        let cx = nf * rng.gen_range(0.45..0.55);
        let a = nf * rng.gen_range(0.28..0.40);
        let b = nf * rng.gen_range(0.26..0.38);
        Ellipse::sample(&mut rng, cy, cx, a, b)
    };

    let mut tissues = Vec::new();
    if spec.classes() > 2 {
        let count = rng.gen_range(spec.tissue_count.0..=spec.tissue_count.1);
        for _ in 0..count {
            let cy = organ.cy + organ.b * rng.gen_range(-0.35..0.35);
            let cx = organ.cx + organ.a * rng.gen_range(-0.35..0.35);
            let a = organ.a * rng.gen_range(0.18..0.38);
            let b = organ.b * rng.gen_range(0.18..0.38);
            tissues.push(Ellipse::sample(&mut rng, cy, cx, a, b));
        }
    }

    let mut lesions = Vec::new();
    if spec.classes() > 3 {
        let count = rng.gen_range(spec.lesion_count.0..=spec.lesion_count.1);
        for _ in 0..count {
            let cy = organ.cy + organ.b * rng.gen_range(-0.6..0.6);
            let cx = organ.cx + organ.a * rng.gen_range(-0.6..0.6);
            let r = rng.gen_range(2.5..5.0);
            let b = r * rng.gen_range(0.7..1.0);
            lesions.push(Ellipse::sample(&mut rng, cy, cx, r, b));
        }
    }

    let mut labels = vec![0u8; n * n];
    for y in 0..n {
        for x in 0..n {
            let (yf, xf) = (y as f64, x as f64);
            let mut cls = 0u8;
            if organ.contains(yf, xf) {
                cls = 1;
                for t in &tissues {
                    if t.contains(yf, xf) {
                        cls = 2;
                    }
                }
                for l in &lesions {
                    if l.contains(yf, xf) {
                        cls = 3.min(spec.classes() as u8 - 1);
                    }
                }
            }
            labels[y * n + x] = cls;
        }
    }

    // mild diagonal shading keeps the background from being dead flat
    let amp = spec.texture_amplitude;
    let mut image = vec![T::ZERO; n * n];
    for y in 0..n {
        for x in 0..n {
            let base = levels[labels[y * n + x] as usize];
            let shade = 0.03 * ((y + x) as f64 / (2.0 * nf) - 0.5);
            let noise = if amp > 0.0 { rng.gen_range(-amp..amp) } else { 0.0 };
            image[y * n + x] = T::from_f64((base + shade + noise).clamp(0.0, 1.0));
        }
    }

    let image = Tensor::from_vec(image, &[1, n, n])?;
    let labels = Tensor::from_vec(
        labels.into_iter().map(|v| T::from_f64(v as f64)).collect(),
        &[n, n],
    )?;
    Ok((image, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let spec = PhantomSpec::default();
        let (img1, lbl1) = generate_phantom::<f32>(&spec, 7, 3).unwrap();
        let (img2, lbl2) = generate_phantom::<f32>(&spec, 7, 3).unwrap();
        assert_eq!(img1.to_vec(), img2.to_vec());
        assert_eq!(lbl1.to_vec(), lbl2.to_vec());
        let (img3, _) = generate_phantom::<f32>(&spec, 8, 3).unwrap();
        assert_ne!(img1.to_vec(), img3.to_vec());
    }

    #[test]
    fn intensities_in_unit_range() {
        let spec = PhantomSpec::default();
        for i in 0..5 {
            let (img, _) = generate_phantom::<f64>(&spec, 1, i).unwrap();
            assert!(img.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn every_class_occupies_pixels_on_average() {
        let spec = PhantomSpec::default();
        let k = spec.classes();
        let mut totals = vec![0usize; k];
        let count = 100;
        for i in 0..count {
            let (_, lbl) = generate_phantom::<f32>(&spec, 42, i).unwrap();
            for &v in lbl.data() {
                totals[v as usize] += 1;
            }
        }
        let total_px = count * spec.canvas * spec.canvas;
        for (cls, &t) in totals.iter().enumerate() {
            let frac = t as f64 / total_px as f64;
            assert!(
                frac >= 0.01,
                "class {cls} occupies {:.3}% on average",
                frac * 100.0
            );
        }
    }
}
