//! Training objectives: pixel-wise L1, the segmentation-based perceptual
//! family (encoder taps, decoder tap, predicted-label similarity), and the
//! weighted combination used in fine-tuning.

use crate::error::{Error, Result};
use crate::tensor::{Elem, Tensor};
use crate::unet::{soft_dice_squared, UNetModel, UNetTaps};

/// Which frozen-U-Net signal the perceptual term reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerceptualVariant {
    None,
    /// L1 between encoder taps E_i (1-based).
    Encoder(usize),
    /// Sum of the encoder-tap losses over every level.
    SumEncoders,
    /// L1 between the last decoder feature maps.
    Decoder,
    /// 1 − soft dice between predicted label probability maps.
    Hrl,
}

impl PerceptualVariant {
    pub fn parse(s: &str) -> Result<PerceptualVariant> {
        let v = match s {
            "none" => PerceptualVariant::None,
            "sum_e" => PerceptualVariant::SumEncoders,
            "d" => PerceptualVariant::Decoder,
            "hrl" => PerceptualVariant::Hrl,
            _ => {
                if let Some(i) = s.strip_prefix('e').and_then(|n| n.parse::<usize>().ok()) {
                    PerceptualVariant::Encoder(i)
                } else {
                    return Err(Error::invalid(
                        "loss variant",
                        format!("`{s}` (want none|e1..e5|sum_e|d|hrl)"),
                    ));
                }
            }
        };
        Ok(v)
    }

    pub fn name(&self) -> String {
        match self {
            PerceptualVariant::None => "none".into(),
            PerceptualVariant::Encoder(i) => format!("e{i}"),
            PerceptualVariant::SumEncoders => "sum_e".into(),
            PerceptualVariant::Decoder => "d".into(),
            PerceptualVariant::Hrl => "hrl".into(),
        }
    }
}

/// Fine-tuning objective: α·L1 + λ·L_U.
#[derive(Debug, Clone, Copy)]
pub struct LossSpec {
    pub alpha: f64,
    pub lambda: f64,
    pub variant: PerceptualVariant,
}

impl LossSpec {
    pub fn l1_only() -> LossSpec {
        LossSpec {
            alpha: 1.0,
            lambda: 0.0,
            variant: PerceptualVariant::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || self.lambda < 0.0 {
            return Err(Error::invalid("loss spec", "weights must be non-negative"));
        }
        if self.alpha == 0.0 && self.lambda == 0.0 {
            return Err(Error::invalid("loss spec", "alpha and lambda cannot both be zero"));
        }
        Ok(())
    }

    /// The perceptual term runs only when it has weight and a variant.
    pub fn wants_unet(&self) -> bool {
        self.lambda > 0.0 && self.variant != PerceptualVariant::None
    }
}

/// Mean absolute difference over all elements.
pub fn l1_loss<T: Elem>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "l1_loss",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    a.sub(b)?.abs()?.mean_all()
}

fn taps_for<'a, T: Elem>(
    unet: &UNetModel<T>,
    sr: &Tensor<T>,
    hr: &Tensor<T>,
) -> Result<(UNetTaps<T>, UNetTaps<T>)> {
    // The reference image never needs gradient; the U-Net parameters are
    // plain (untraced) tensors, so no gradient can reach them either.
    let sr_taps = unet.forward(sr)?;
    let hr_taps = unet.forward(&hr.detach())?;
    Ok((sr_taps, hr_taps))
}

/// L1 distance between encoder taps E_i (1-based) of the two images.
pub fn perceptual_encoder<T: Elem>(
    i: usize,
    sr: &Tensor<T>,
    hr: &Tensor<T>,
    unet: &UNetModel<T>,
) -> Result<Tensor<T>> {
    if i == 0 || i > unet.cfg.levels {
        return Err(Error::invalid(
            "perceptual loss",
            format!("encoder tap {} outside 1..={}", i, unet.cfg.levels),
        ));
    }
    let (sr_taps, hr_taps) = taps_for(unet, sr, hr)?;
    l1_loss(&sr_taps.encoders[i - 1], &hr_taps.encoders[i - 1])
}

/// L1 distance between the last decoder feature maps.
pub fn perceptual_decoder<T: Elem>(
    sr: &Tensor<T>,
    hr: &Tensor<T>,
    unet: &UNetModel<T>,
) -> Result<Tensor<T>> {
    let (sr_taps, hr_taps) = taps_for(unet, sr, hr)?;
    l1_loss(&sr_taps.decoder, &hr_taps.decoder)
}

/// 1 − soft dice between the predicted label probability maps; 0 when the
/// images segment identically, bounded in [0, 1].
pub fn perceptual_hrl<T: Elem>(
    sr: &Tensor<T>,
    hr: &Tensor<T>,
    unet: &UNetModel<T>,
) -> Result<Tensor<T>> {
    let (sr_taps, hr_taps) = taps_for(unet, sr, hr)?;
    let dice = soft_dice_squared(&sr_taps.probs, &hr_taps.probs, 1.0)?;
    Tensor::scalar(T::ONE).sub(&dice)
}

fn perceptual_term<T: Elem>(
    variant: PerceptualVariant,
    sr: &Tensor<T>,
    hr: &Tensor<T>,
    unet: &UNetModel<T>,
) -> Result<Tensor<T>> {
    match variant {
        PerceptualVariant::None => Err(Error::invalid("loss", "no perceptual variant selected")),
        PerceptualVariant::Encoder(i) => perceptual_encoder(i, sr, hr, unet),
        PerceptualVariant::SumEncoders => {
            let (sr_taps, hr_taps) = taps_for(unet, sr, hr)?;
            let mut total: Option<Tensor<T>> = None;
            for (a, b) in sr_taps.encoders.iter().zip(&hr_taps.encoders) {
                let term = l1_loss(a, b)?;
                total = Some(match total {
                    Some(t) => t.add(&term)?,
                    None => term,
                });
            }
            total.ok_or_else(|| Error::invalid("loss", "u-net has no encoder taps"))
        }
        PerceptualVariant::Decoder => perceptual_decoder(sr, hr, unet),
        PerceptualVariant::Hrl => perceptual_hrl(sr, hr, unet),
    }
}

/// Scalar loss plus the per-term values for logging.
pub struct LossValue<T: Elem> {
    pub total: Tensor<T>,
    pub l1: f64,
    pub perceptual: Option<f64>,
}

/// α·L1 + λ·L_U. The perceptual term is evaluated only when λ > 0 and a
/// variant is selected, so a λ = 0 spec reduces to pure (scaled) L1 with an
/// identical computation graph.
pub fn combined_loss<T: Elem>(
    spec: &LossSpec,
    sr: &Tensor<T>,
    hr: &Tensor<T>,
    unet: Option<&UNetModel<T>>,
) -> Result<LossValue<T>> {
    spec.validate()?;
    let l1 = l1_loss(sr, hr)?;
    let l1_value = l1.item()?.to_f64();
    if !spec.wants_unet() {
        return Ok(LossValue {
            total: l1.affine(T::from_f64(spec.alpha), T::ZERO)?,
            l1: l1_value,
            perceptual: None,
        });
    }
    let unet = unet.ok_or_else(|| {
        Error::invalid("loss", format!("variant `{}` needs a u-net", spec.variant.name()))
    })?;
    let lu = perceptual_term(spec.variant, sr, hr, unet)?;
    let lu_value = lu.item()?.to_f64();
    let total = l1
        .affine(T::from_f64(spec.alpha), T::ZERO)?
        .add(&lu.affine(T::from_f64(spec.lambda), T::ZERO)?)?;
    Ok(LossValue {
        total,
        l1: l1_value,
        perceptual: Some(lu_value),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unet::UNetConfig;

    fn tiny_unet(seed: u64) -> UNetModel<f64> {
        UNetModel::init(
            UNetConfig {
                in_channels: 1,
                classes: 3,
                base_width: 4,
                levels: 2,
            },
            seed,
        )
        .unwrap()
    }

    fn img(seed: u64) -> Tensor<f64> {
        use rand::Rng;
        let mut rng = crate::rng::rng_for(seed, &["loss-img"]);
        Tensor::from_vec((0..64).map(|_| rng.gen::<f64>()).collect(), &[1, 1, 8, 8]).unwrap()
    }

    #[test]
    fn l1_examples() {
        let a = Tensor::from_vec(vec![0.0, 1.0], &[2]).unwrap();
        let b = Tensor::from_vec(vec![1.0, 1.0], &[2]).unwrap();
        assert_eq!(l1_loss(&a, &a).unwrap().item().unwrap(), 0.0);
        assert_eq!(l1_loss(&a, &b).unwrap().item().unwrap(), 0.5);
        let c = a.affine(1.0, 0.5).unwrap();
        assert!((l1_loss(&a, &c).unwrap().item().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn perceptual_zero_on_identity_and_symmetric() {
        let unet = tiny_unet(1);
        let x = img(2);
        let y = img(3);
        for variant in [
            PerceptualVariant::Encoder(1),
            PerceptualVariant::Encoder(2),
            PerceptualVariant::SumEncoders,
            PerceptualVariant::Decoder,
            PerceptualVariant::Hrl,
        ] {
            let zero = perceptual_term(variant, &x, &x, &unet).unwrap().item().unwrap();
            assert!(zero.abs() < 1e-9, "{variant:?} not zero on identity: {zero}");
            let ab = perceptual_term(variant, &x, &y, &unet).unwrap().item().unwrap();
            let ba = perceptual_term(variant, &y, &x, &unet).unwrap().item().unwrap();
            assert!((ab - ba).abs() < 1e-9, "{variant:?} not symmetric");
        }
    }

    #[test]
    fn encoder_tap_matches_two_pass_recomputation() {
        let unet = tiny_unet(4);
        let x = img(5);
        let y = img(6);
        let loss = perceptual_encoder(1, &x, &y, &unet).unwrap().item().unwrap();
        // independent recomputation straight from the taps
        let tx = unet.forward(&x).unwrap();
        let ty = unet.forward(&y).unwrap();
        let mut acc = 0.0;
        for (a, b) in tx.encoders[0].data().iter().zip(ty.encoders[0].data()) {
            acc += (a - b).abs();
        }
        acc /= tx.encoders[0].numel() as f64;
        assert!((loss - acc).abs() < 1e-9);
    }

    #[test]
    fn hrl_bounded() {
        let unet = tiny_unet(7);
        for s in 0..5 {
            let x = img(10 + s);
            let y = img(20 + s);
            let v = perceptual_hrl(&x, &y, &unet).unwrap().item().unwrap();
            assert!((0.0..=1.0).contains(&v), "hrl {v}");
        }
    }

    #[test]
    fn combined_loss_arithmetic() {
        let unet = tiny_unet(8);
        let x = img(9);
        let y = img(10);
        // λ=0 reduces exactly to α·L1
        let spec = LossSpec {
            alpha: 2.0,
            lambda: 0.0,
            variant: PerceptualVariant::Encoder(1),
        };
        let v = combined_loss(&spec, &x, &y, None).unwrap();
        let l1 = l1_loss(&x, &y).unwrap().item().unwrap();
        assert!((v.total.item().unwrap() - 2.0 * l1).abs() < 1e-12);
        assert!(v.perceptual.is_none());

        // α=1, λ=10, l1=0.2, lu=0.05 → 0.7 (checked on synthetic values)
        assert!((1.0 * 0.2 + 10.0 * 0.05 - 0.7f64).abs() < 1e-12);

        // both sub-losses zero → zero
        let spec = LossSpec {
            alpha: 1.0,
            lambda: 10.0,
            variant: PerceptualVariant::Encoder(1),
        };
        let v = combined_loss(&spec, &x, &x, Some(&unet)).unwrap();
        assert!(v.total.item().unwrap().abs() < 1e-9);

        // doubling λ doubles the perceptual contribution exactly
        let base = combined_loss(&spec, &x, &y, Some(&unet)).unwrap();
        let spec2 = LossSpec {
            lambda: 20.0,
            ..spec
        };
        let twice = combined_loss(&spec2, &x, &y, Some(&unet)).unwrap();
        let contrib1 = base.total.item().unwrap() - 1.0 * base.l1;
        let contrib2 = twice.total.item().unwrap() - 1.0 * twice.l1;
        assert!((contrib2 - 2.0 * contrib1).abs() < 1e-9);
    }

    #[test]
    fn spec_validation() {
        assert!(LossSpec {
            alpha: 0.0,
            lambda: 0.0,
            variant: PerceptualVariant::None
        }
        .validate()
        .is_err());
        let spec = LossSpec {
            alpha: 1.0,
            lambda: 10.0,
            variant: PerceptualVariant::Hrl,
        };
        let x = img(11);
        assert!(combined_loss(&spec, &x, &x, None).is_err());
    }

    #[test]
    fn variant_parsing() {
        assert_eq!(PerceptualVariant::parse("e3").unwrap(), PerceptualVariant::Encoder(3));
        assert_eq!(PerceptualVariant::parse("hrl").unwrap(), PerceptualVariant::Hrl);
        assert_eq!(PerceptualVariant::parse("sum_e").unwrap(), PerceptualVariant::SumEncoders);
        assert!(PerceptualVariant::parse("vgg").is_err());
    }
}
