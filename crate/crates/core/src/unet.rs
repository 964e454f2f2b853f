//! Segmentation U-Net with residual-block encoders, used both as the
//! evaluation segmenter and as the frozen feature extractor behind the
//! perceptual losses. One forward pass exposes every encoder tap, the last
//! decoder feature map, and the class probabilities.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{Conv2d, ParamStore};
use crate::rng::rng_for;
use crate::tensor::{Elem, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UNetConfig {
    pub in_channels: usize,
    /// Class count K (softmax head; K = 1 uses a sigmoid head).
    pub classes: usize,
    /// Width of the first encoder level, doubled per level (64 in the full
    /// configuration; configurable for desk-scale runs).
    pub base_width: usize,
    /// Encoder levels (5 in the full configuration; 2..=5 supported, the
    /// verification suite uses a 2-level mini net).
    pub levels: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            in_channels: 1,
            classes: 4,
            base_width: 64,
            levels: 5,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.classes == 0 || self.base_width == 0 {
            return Err(Error::invalid("unet config", "zero-sized dimension"));
        }
        if !(2..=5).contains(&self.levels) {
            return Err(Error::invalid("unet config", format!("levels {} not in 2..=5", self.levels)));
        }
        Ok(())
    }

    pub fn width(&self, level: usize) -> usize {
        self.base_width << (level - 1)
    }

    /// Input extents must be divisible by this (one 2× downsample per level
    /// past the first).
    pub fn divisor(&self) -> usize {
        1 << (self.levels - 1)
    }

    pub fn to_meta(&self) -> Vec<(String, String)> {
        vec![
            ("unet.in_channels".into(), self.in_channels.to_string()),
            ("unet.classes".into(), self.classes.to_string()),
            ("unet.base_width".into(), self.base_width.to_string()),
            ("unet.levels".into(), self.levels.to_string()),
        ]
    }

    pub fn from_meta(meta: &[(String, String)]) -> Result<UNetConfig> {
        let parse = |key: &str| -> Result<usize> {
            crate::checkpoint::meta_get(meta, key)
                .ok_or_else(|| Error::invalid("unet meta", format!("missing key `{key}`")))?
                .parse()
                .map_err(|_| Error::invalid("unet meta", format!("bad value for `{key}`")))
        };
        let cfg = UNetConfig {
            in_channels: parse("unet.in_channels")?,
            classes: parse("unet.classes")?,
            base_width: parse("unet.base_width")?,
            levels: parse("unet.levels")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Everything one forward pass produces. The perceptual losses read feature
/// taps from here without re-running the network.
pub struct UNetTaps<T: Elem> {
    /// E1..E_levels, E_i at 1/2^(i−1) resolution with width base·2^(i−1).
    pub encoders: Vec<Tensor<T>>,
    /// Output of the last decoder block, full resolution.
    pub decoder: Tensor<T>,
    pub logits: Tensor<T>,
    /// Softmax over classes (sigmoid when K = 1): per-pixel probabilities.
    pub probs: Tensor<T>,
}

const BLOCKS_PER_LEVEL: usize = 2;

/// Register all parameters. Naming: `enc.{l}.stem|down`, `enc.{l}.block.{b}.conv{1,2}`,
/// `dec.{l}.up`, `dec.{l}.fuse`, `head`.
pub fn register<T: Elem>(store: &mut ParamStore<T>, cfg: &UNetConfig, rng: &mut ChaCha8Rng) -> Result<()> {
    cfg.validate()?;
    for level in 1..=cfg.levels {
        let w = cfg.width(level);
        if level == 1 {
            Conv2d::register(store, "enc.1.stem", cfg.in_channels, w, 3, rng)?;
        } else {
            Conv2d::register(store, &format!("enc.{level}.down"), cfg.width(level - 1), w, 3, rng)?;
        }
        for b in 0..BLOCKS_PER_LEVEL {
            Conv2d::register(store, &format!("enc.{level}.block.{b}.conv1"), w, w, 3, rng)?;
            Conv2d::register(store, &format!("enc.{level}.block.{b}.conv2"), w, w, 3, rng)?;
        }
    }
    for level in (1..cfg.levels).rev() {
        let w = cfg.width(level);
        let w_in = cfg.width(level + 1);
        Conv2d::register(store, &format!("dec.{level}.up"), w_in, w, 3, rng)?;
        Conv2d::register(store, &format!("dec.{level}.fuse"), 2 * w, w, 3, rng)?;
    }
    Conv2d::register(store, "head", cfg.base_width, cfg.classes, 1, rng)?;
    Ok(())
}

fn residual_block<T: Elem>(x: &Tensor<T>, store: &ParamStore<T>, prefix: &str) -> Result<Tensor<T>> {
    let conv1 = Conv2d::bind(store, &format!("{prefix}.conv1"), 1, 1)?;
    let conv2 = Conv2d::bind(store, &format!("{prefix}.conv2"), 1, 1)?;
    let inner = conv2.forward(&conv1.forward(x)?.relu()?)?;
    x.add(&inner)?.relu()
}

/// Full forward pass producing every tap.
pub fn forward<T: Elem>(x: &Tensor<T>, store: &ParamStore<T>, cfg: &UNetConfig) -> Result<UNetTaps<T>> {
    cfg.validate()?;
    let shape = x.shape();
    if shape.len() != 4 || shape[1] != cfg.in_channels {
        return Err(Error::invalid(
            "unet forward",
            format!("want [N,{},H,W], got {:?}", cfg.in_channels, shape),
        ));
    }
    let div = cfg.divisor();
    if shape[2] % div != 0 || shape[3] % div != 0 {
        return Err(Error::invalid(
            "unet forward",
            format!("spatial extents {}x{} must be divisible by {}", shape[2], shape[3], div),
        ));
    }

    let mut encoders = Vec::with_capacity(cfg.levels);
    let mut f = x.clone();
    for level in 1..=cfg.levels {
        f = if level == 1 {
            Conv2d::bind(store, "enc.1.stem", 1, 1)?.forward(&f)?.relu()?
        } else {
            Conv2d::bind(store, &format!("enc.{level}.down"), 2, 1)?.forward(&f)?.relu()?
        };
        for b in 0..BLOCKS_PER_LEVEL {
            f = residual_block(&f, store, &format!("enc.{level}.block.{b}"))?;
        }
        encoders.push(f.clone());
    }

    let mut d = encoders[cfg.levels - 1].clone();
    for level in (1..cfg.levels).rev() {
        let up = Conv2d::bind(store, &format!("dec.{level}.up"), 1, 1)?;
        d = up.forward(&d.upsample_nearest2x()?)?.relu()?;
        let skip = &encoders[level - 1];
        let cat = Tensor::concat(&[&d, skip], 1)?;
        let fuse = Conv2d::bind(store, &format!("dec.{level}.fuse"), 1, 1)?;
        d = fuse.forward(&cat)?.relu()?;
    }

    let head = Conv2d::bind(store, "head", 1, 0)?;
    let logits = head.forward(&d)?;
    let probs = if cfg.classes == 1 {
        logits.sigmoid()?
    } else {
        logits.softmax(1)?
    };
    Ok(UNetTaps {
        encoders,
        decoder: d,
        logits,
        probs,
    })
}

/// A U-Net bundled with its parameters.
#[derive(Clone)]
pub struct UNetModel<T: Elem> {
    pub cfg: UNetConfig,
    pub store: ParamStore<T>,
}

impl<T: Elem> UNetModel<T> {
    pub fn init(cfg: UNetConfig, seed: u64) -> Result<UNetModel<T>> {
        let mut store = ParamStore::new();
        let mut rng = rng_for(seed, &["unet-init"]);
        register(&mut store, &cfg, &mut rng)?;
        Ok(UNetModel { cfg, store })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<UNetTaps<T>> {
        forward(x, &self.store, &self.cfg)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut meta = vec![("kind".to_string(), "unet".to_string())];
        meta.extend(self.cfg.to_meta());
        crate::checkpoint::save(path, &meta, &self.store)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<UNetModel<T>> {
        let (meta, store) = crate::checkpoint::load(path)?;
        let cfg = UNetConfig::from_meta(&meta)?;
        Ok(UNetModel { cfg, store })
    }
}

/// Hard Dice overlap 2|X∩Y|/(|X|+|Y|) between binary masks, with an ε = 1
/// smoothing term that defines Dice(∅, ∅) = 1.
pub fn dice_coefficient<T: Elem>(x: &Tensor<T>, y: &Tensor<T>) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch {
            op: "dice",
            lhs: x.shape().to_vec(),
            rhs: y.shape().to_vec(),
        });
    }
    let mut intersection = 0.0f64;
    let mut total = 0.0f64;
    for (&a, &b) in x.data().iter().zip(y.data()) {
        let (a, b) = (a.to_f64(), b.to_f64());
        if (a != 0.0 && a != 1.0) || (b != 0.0 && b != 1.0) {
            return Err(Error::invalid("dice", "masks must be binary"));
        }
        intersection += a * b;
        total += a + b;
    }
    Ok((2.0 * intersection + 1.0) / (total + 1.0))
}

/// One-hot encode an integer class map `[N, H, W]` into `[N, K, H, W]`.
pub fn one_hot<T: Elem>(labels: &Tensor<T>, classes: usize) -> Result<Tensor<T>> {
    let shape = labels.shape();
    if shape.len() != 3 {
        return Err(Error::invalid("one_hot", format!("want [N,H,W] labels, got {:?}", shape)));
    }
    let (n, h, w) = (shape[0], shape[1], shape[2]);
    let plane = h * w;
    let mut data = vec![T::ZERO; n * classes * plane];
    for ni in 0..n {
        for p in 0..plane {
            let v = labels.data()[ni * plane + p].to_f64();
            let k = v as usize;
            if v.fract() != 0.0 || k >= classes {
                return Err(Error::invalid("one_hot", format!("label {v} outside 0..{classes}")));
            }
            data[(ni * classes + k) * plane + p] = T::ONE;
        }
    }
    Tensor::from_vec(data, &[n, classes, h, w])
}

/// Per-class sums for the soft-dice family. `p`, `q` are `[N, K, H, W]`.
fn per_class_sums<T: Elem>(t: &Tensor<T>) -> Result<Tensor<T>> {
    t.sum_axes(&[0, 2, 3])
}

/// Soft dice with the linear denominator (2Σpq+ε)/(Σp+Σq+ε), averaged over
/// classes. Used as the segmentation training objective.
pub fn soft_dice_linear<T: Elem>(p: &Tensor<T>, q: &Tensor<T>, eps: f64) -> Result<Tensor<T>> {
    if p.shape() != q.shape() || p.rank() != 4 {
        return Err(Error::ShapeMismatch {
            op: "soft_dice",
            lhs: p.shape().to_vec(),
            rhs: q.shape().to_vec(),
        });
    }
    let eps = Tensor::scalar(T::from_f64(eps));
    let inter = per_class_sums(&p.mul(q)?)?; // [K]
    let sums = per_class_sums(p)?.add(&per_class_sums(q)?)?;
    let two = T::from_f64(2.0);
    let dice = inter.affine(two, T::ZERO)?.add(&eps)?.div(&sums.add(&eps)?)?;
    dice.mean_all()
}

/// Soft dice with the squared denominator (2Σpq+ε)/(Σp²+Σq²+ε), averaged
/// over classes. Equals 1 exactly when the maps are identical, which makes
/// it the right overlap for comparing two probability maps.
pub fn soft_dice_squared<T: Elem>(p: &Tensor<T>, q: &Tensor<T>, eps: f64) -> Result<Tensor<T>> {
    if p.shape() != q.shape() || p.rank() != 4 {
        return Err(Error::ShapeMismatch {
            op: "soft_dice",
            lhs: p.shape().to_vec(),
            rhs: q.shape().to_vec(),
        });
    }
    let eps = Tensor::scalar(T::from_f64(eps));
    let inter = per_class_sums(&p.mul(q)?)?;
    let sums = per_class_sums(&p.mul(p)?)?.add(&per_class_sums(&q.mul(q)?)?)?;
    let two = T::from_f64(2.0);
    let dice = inter.affine(two, T::ZERO)?.add(&eps)?.div(&sums.add(&eps)?)?;
    dice.mean_all()
}

/// Segmentation training loss: 1 − soft dice between predicted probabilities
/// `[N, K, H, W]` and one-hot labels, with the standard ε = 1 smoothing.
pub fn dice_loss<T: Elem>(probs: &Tensor<T>, target_one_hot: &Tensor<T>) -> Result<Tensor<T>> {
    dice_loss_with_eps(probs, target_one_hot, 1.0)
}

pub fn dice_loss_with_eps<T: Elem>(
    probs: &Tensor<T>,
    target_one_hot: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    let dice = soft_dice_linear(probs, target_one_hot, eps)?;
    Tensor::scalar(T::ONE).sub(&dice)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(v.to_vec(), &[v.len()]).unwrap()
    }

    #[test]
    fn dice_self_and_hand_count() {
        let x = mask(&[1.0, 1.0, 0.0, 0.0]);
        let y = mask(&[1.0, 0.0, 1.0, 0.0]);
        // ignoring ε: 2·1/(2+2) = 0.5; with ε=1: (2+1)/(4+1) = 0.6
        assert_eq!(dice_coefficient(&x, &y).unwrap(), 0.6);
        let d = dice_coefficient(&x, &x).unwrap();
        assert!((d - 1.0).abs() < 0.17, "smoothed self-dice {d}");
    }

    #[test]
    fn dice_empty_empty_is_one() {
        let x = mask(&[0.0, 0.0]);
        assert_eq!(dice_coefficient(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn dice_rejects_non_binary_and_mismatch() {
        let x = mask(&[0.5, 0.0]);
        let y = mask(&[1.0, 0.0]);
        assert!(dice_coefficient(&x, &y).is_err());
        let z = Tensor::<f64>::zeros(&[3]);
        assert!(dice_coefficient(&y, &z).is_err());
    }

    #[test]
    fn dice_symmetric_on_random_masks() {
        use rand::Rng;
        let mut rng = crate::rng::rng_for(3, &["dice"]);
        for _ in 0..50 {
            let a: Vec<f64> = (0..32).map(|_| if rng.gen::<bool>() { 1.0 } else { 0.0 }).collect();
            let b: Vec<f64> = (0..32).map(|_| if rng.gen::<bool>() { 1.0 } else { 0.0 }).collect();
            let x = mask(&a);
            let y = mask(&b);
            let d1 = dice_coefficient(&x, &y).unwrap();
            let d2 = dice_coefficient(&y, &x).unwrap();
            assert_eq!(d1, d2);
            assert!((0.0..=1.0).contains(&d1));
            if a == b {
                continue;
            }
            assert!(d1 < 1.0);
        }
    }

    #[test]
    fn dice_loss_examples() {
        // perfect one-hot prediction → loss 0
        let labels = Tensor::from_vec(vec![0.0, 1.0, 1.0, 0.0], &[1, 2, 2]).unwrap();
        let onehot = one_hot(&labels, 2).unwrap();
        let loss = dice_loss(&onehot, &onehot).unwrap().item().unwrap();
        assert!(loss.abs() < 1e-12);

        // uniform 0.5 vs all-ones single class, 4 px: soft dice 2/3 (ε = 0)
        let probs = Tensor::from_vec(vec![0.5; 4], &[1, 1, 2, 2]).unwrap();
        let target = Tensor::from_vec(vec![1.0; 4], &[1, 1, 2, 2]).unwrap();
        let loss0 = dice_loss_with_eps(&probs, &target, 0.0).unwrap().item().unwrap();
        assert!((loss0 - 1.0 / 3.0).abs() < 1e-12);
        // and with ε = 1: dice = (4+1)/(6+1), loss = 2/7
        let loss1 = dice_loss(&probs, &target).unwrap().item().unwrap();
        assert!((loss1 - 2.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn dice_loss_in_unit_interval() {
        use rand::Rng;
        let mut rng = crate::rng::rng_for(5, &["dicerange"]);
        for _ in 0..20 {
            let p: Vec<f64> = (0..16).map(|_| rng.gen::<f64>()).collect();
            let probs = Tensor::from_vec(p, &[1, 2, 2, 4]).unwrap();
            let labels =
                Tensor::from_vec((0..8).map(|_| rng.gen_range(0..2) as f64).collect(), &[1, 2, 4]).unwrap();
            let onehot = one_hot(&labels, 2).unwrap();
            let loss = dice_loss(&probs, &onehot).unwrap().item().unwrap();
            assert!((0.0..=1.0).contains(&loss));
        }
    }

    #[test]
    fn squared_soft_dice_is_one_at_identity() {
        let p = Tensor::from_vec(vec![0.3, 0.7, 0.9, 0.1], &[1, 1, 2, 2]).unwrap();
        let d = soft_dice_squared(&p, &p, 1.0).unwrap().item().unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        // linear denominator would NOT be 1 here
        let dl = soft_dice_linear(&p, &p, 0.0).unwrap().item().unwrap();
        assert!(dl < 1.0);
    }

    fn mini_cfg() -> UNetConfig {
        UNetConfig {
            in_channels: 1,
            classes: 3,
            base_width: 4,
            levels: 2,
        }
    }

    #[test]
    fn taps_shapes_follow_halving_law() {
        let model: UNetModel<f32> = UNetModel::init(mini_cfg(), 1).unwrap();
        let x = Tensor::full(&[1, 1, 16, 12], 0.5f32);
        let taps = model.forward(&x).unwrap();
        assert_eq!(taps.encoders[0].shape(), &[1, 4, 16, 12]);
        assert_eq!(taps.encoders[1].shape(), &[1, 8, 8, 6]);
        assert_eq!(taps.decoder.shape(), &[1, 4, 16, 12]);
        assert_eq!(taps.logits.shape(), &[1, 3, 16, 12]);
    }

    #[test]
    fn probs_sum_to_one() {
        let model: UNetModel<f32> = UNetModel::init(mini_cfg(), 2).unwrap();
        let x = Tensor::full(&[1, 1, 8, 8], 0.25f32);
        let taps = model.forward(&x).unwrap();
        let p = taps.probs.data();
        let plane = 64;
        for px in 0..plane {
            let total: f32 = (0..3).map(|k| p[k * plane + px]).sum();
            assert!((total - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let model: UNetModel<f32> = UNetModel::init(mini_cfg(), 3).unwrap();
        let x = Tensor::full(&[1, 1, 8, 8], 0.7f32);
        let a = model.forward(&x).unwrap();
        let b = model.forward(&x).unwrap();
        assert_eq!(a.probs.to_vec(), b.probs.to_vec());
        assert_eq!(a.decoder.to_vec(), b.decoder.to_vec());
    }

    #[test]
    fn divisibility_violation_errors() {
        let model: UNetModel<f32> = UNetModel::init(mini_cfg(), 4).unwrap();
        let x = Tensor::full(&[1, 1, 9, 8], 0.5f32);
        assert!(model.forward(&x).is_err());
    }
}
