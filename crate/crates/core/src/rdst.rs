//! The residual dense swin-transformer SR generator: dense STL blocks with
//! bottleneck compression, residual local feature fusion, a global residual,
//! and a sub-pixel upsampler. Includes the efficient preset and the optional
//! global-feature-fusion variant.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{CostReport, Conv2d, Linear, ParamStore};
use crate::rng::rng_for;
use crate::swin::{StlConfig, StlParams, WindowGrid, stl_forward, stl_param_count};
use crate::tensor::{Elem, Tensor};

/// Every architecture hyperparameter of the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct RdstConfig {
    /// Magnification scale s ∈ {2, 3, 4}.
    pub scale: usize,
    pub in_channels: usize,
    /// Base embedding width d.
    pub dim: usize,
    /// Channels appended per dense block (growth rate g).
    pub growth: usize,
    /// Attention window M.
    pub window: usize,
    pub heads: usize,
    /// STLs per dense block (must be even; each pair is W-MSA + SW-MSA).
    pub stl_per_dstb: usize,
    /// Dense blocks per residual block.
    pub dstb_per_rdstb: usize,
    /// Residual blocks in the body.
    pub n_rdstb: usize,
    pub mlp_ratio: f64,
    pub use_rel_pos_bias: bool,
    /// Fuse all body block outputs with a global affine map.
    pub use_gff: bool,
    /// For s = 4: one ×4 shuffle stage instead of two ×2 stages.
    pub single_stage_upsampler: bool,
    /// Replace the upsampler+tail with one conv d→C·s² and a ×s shuffle.
    pub pre_shuffle_tail: bool,
}

impl RdstConfig {
    /// Full-size preset: 8 residual blocks.
    pub fn rdst(scale: usize, in_channels: usize) -> RdstConfig {
        RdstConfig {
            scale,
            in_channels,
            dim: 60,
            growth: 30,
            window: 8,
            heads: 6,
            stl_per_dstb: 2,
            dstb_per_rdstb: 3,
            n_rdstb: 8,
            mlp_ratio: 2.0,
            use_rel_pos_bias: true,
            use_gff: false,
            single_stage_upsampler: false,
            pre_shuffle_tail: false,
        }
    }

    /// Efficient preset: 4 residual blocks.
    pub fn rdst_e(scale: usize, in_channels: usize) -> RdstConfig {
        RdstConfig {
            n_rdstb: 4,
            ..RdstConfig::rdst(scale, in_channels)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.scale, 2 | 3 | 4) {
            return Err(Error::invalid("rdst config", format!("scale {} not in {{2,3,4}}", self.scale)));
        }
        if self.in_channels == 0 || self.dim == 0 || self.growth == 0 || self.n_rdstb == 0 {
            return Err(Error::invalid("rdst config", "zero-sized dimension"));
        }
        if self.stl_per_dstb == 0 || self.stl_per_dstb % 2 != 0 {
            return Err(Error::invalid(
                "rdst config",
                format!("stl_per_dstb {} must be even and positive", self.stl_per_dstb),
            ));
        }
        if self.dstb_per_rdstb == 0 {
            return Err(Error::invalid("rdst config", "dstb_per_rdstb must be positive"));
        }
        for j in 0..self.dstb_per_rdstb {
            let width = self.dim + j * self.growth;
            if width % self.heads != 0 {
                return Err(Error::invalid(
                    "rdst config",
                    format!("stl width {} at dense position {} is not divisible by {} heads", width, j, self.heads),
                ));
            }
        }
        if self.pre_shuffle_tail && self.single_stage_upsampler {
            return Err(Error::invalid(
                "rdst config",
                "pre_shuffle_tail already implies a single stage",
            ));
        }
        Ok(())
    }

    /// Pixel-shuffle factors of the upsampler stages.
    pub fn shuffle_factors(&self) -> Vec<usize> {
        match self.scale {
            4 if !self.single_stage_upsampler => vec![2, 2],
            s => vec![s],
        }
    }

    /// Dense-path width entering dense block `j` (0-based).
    pub fn width_at(&self, j: usize) -> usize {
        self.dim + j * self.growth
    }

    /// Width entering local feature fusion.
    pub fn fused_width(&self) -> usize {
        self.dim + self.dstb_per_rdstb * self.growth
    }

    fn stl_config(&self, width: usize) -> StlConfig {
        StlConfig {
            dim: width,
            heads: self.heads,
            window: self.window,
            mlp_ratio: self.mlp_ratio,
            use_rel_pos_bias: self.use_rel_pos_bias,
        }
    }

    /// Key/value form for checkpoint manifests.
    pub fn to_meta(&self) -> Vec<(String, String)> {
        let b = |v: bool| if v { "true" } else { "false" };
        vec![
            ("model.scale".into(), self.scale.to_string()),
            ("model.in_channels".into(), self.in_channels.to_string()),
            ("model.d".into(), self.dim.to_string()),
            ("model.g".into(), self.growth.to_string()),
            ("model.window".into(), self.window.to_string()),
            ("model.heads".into(), self.heads.to_string()),
            ("model.stl_per_dstb".into(), self.stl_per_dstb.to_string()),
            ("model.dstb_per_rdstb".into(), self.dstb_per_rdstb.to_string()),
            ("model.n_rdstb".into(), self.n_rdstb.to_string()),
            ("model.mlp_ratio".into(), self.mlp_ratio.to_string()),
            ("model.rel_pos_bias".into(), b(self.use_rel_pos_bias).into()),
            ("model.gff".into(), b(self.use_gff).into()),
            ("model.single_stage_upsampler".into(), b(self.single_stage_upsampler).into()),
            ("model.pre_shuffle_tail".into(), b(self.pre_shuffle_tail).into()),
        ]
    }

    pub fn from_meta(meta: &[(String, String)]) -> Result<RdstConfig> {
        let get = |key: &str| -> Result<&str> {
            crate::checkpoint::meta_get(meta, key)
                .ok_or_else(|| Error::invalid("rdst meta", format!("missing key `{key}`")))
        };
        let parse_usize = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| Error::invalid("rdst meta", format!("bad value for `{key}`")))
        };
        let parse_bool = |key: &str| -> Result<bool> { Ok(get(key)? == "true") };
        let cfg = RdstConfig {
            scale: parse_usize("model.scale")?,
            in_channels: parse_usize("model.in_channels")?,
            dim: parse_usize("model.d")?,
            growth: parse_usize("model.g")?,
            window: parse_usize("model.window")?,
            heads: parse_usize("model.heads")?,
            stl_per_dstb: parse_usize("model.stl_per_dstb")?,
            dstb_per_rdstb: parse_usize("model.dstb_per_rdstb")?,
            n_rdstb: parse_usize("model.n_rdstb")?,
            mlp_ratio: get("model.mlp_ratio")?
                .parse()
                .map_err(|_| Error::invalid("rdst meta", "bad mlp_ratio"))?,
            use_rel_pos_bias: parse_bool("model.rel_pos_bias")?,
            use_gff: parse_bool("model.gff")?,
            single_stage_upsampler: parse_bool("model.single_stage_upsampler")?,
            pre_shuffle_tail: parse_bool("model.pre_shuffle_tail")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Register every generator parameter. Naming: `head`, `body.{i}.dstb.{j}.stl.{u}`,
/// `body.{i}.dstb.{j}.bottleneck`, `body.{i}.lff`, `gff`, `body_conv`,
/// `upsampler.{k}`, `tail`.
pub fn register<T: Elem>(store: &mut ParamStore<T>, cfg: &RdstConfig, rng: &mut ChaCha8Rng) -> Result<()> {
    cfg.validate()?;
    let d = cfg.dim;
    Conv2d::register(store, "head", cfg.in_channels, d, 3, rng)?;
    for i in 0..cfg.n_rdstb {
        for j in 0..cfg.dstb_per_rdstb {
            let width = cfg.width_at(j);
            let stl_cfg = cfg.stl_config(width);
            let prefix = format!("body.{i}.dstb.{j}");
            for u in 0..cfg.stl_per_dstb {
                StlParams::register(store, &format!("{prefix}.stl.{u}"), &stl_cfg, rng)?;
            }
            Linear::register(store, &format!("{prefix}.bottleneck"), width, cfg.growth, rng)?;
        }
        Conv2d::register(store, &format!("body.{i}.lff"), cfg.fused_width(), d, 3, rng)?;
    }
    if cfg.use_gff {
        Linear::register(store, "gff", cfg.n_rdstb * d, d, rng)?;
    }
    Conv2d::register(store, "body_conv", d, d, 3, rng)?;
    if cfg.pre_shuffle_tail {
        let s = cfg.scale;
        Conv2d::register(store, "upsampler.0", d, cfg.in_channels * s * s, 3, rng)?;
    } else {
        for (k, r) in cfg.shuffle_factors().into_iter().enumerate() {
            Conv2d::register(store, &format!("upsampler.{k}"), d, d * r * r, 3, rng)?;
        }
        Conv2d::register(store, "tail", d, cfg.in_channels, 3, rng)?;
    }
    Ok(())
}

/// Per-token affine map over channels of an NCHW tensor.
fn channel_affine<T: Elem>(x: &Tensor<T>, map: &Linear<T>) -> Result<Tensor<T>> {
    let shape = x.shape().to_vec();
    let (n, h, w) = (shape[0], shape[2], shape[3]);
    let out = map.forward(&x.permute(&[0, 2, 3, 1])?)?;
    let cout = *out.shape().last().unwrap();
    out.reshape(&[n, h, w, cout])?.permute(&[0, 3, 1, 2])
}

/// One dense block at position `j`: STLs at the current concatenated width,
/// a bottleneck compressing to the growth width, and channel concatenation.
pub fn dstb_forward<T: Elem>(
    x: &Tensor<T>,
    store: &ParamStore<T>,
    prefix: &str,
    cfg: &RdstConfig,
    j: usize,
) -> Result<Tensor<T>> {
    let width = cfg.width_at(j);
    if x.shape().len() != 4 || x.shape()[1] != width {
        return Err(Error::invalid(
            "dstb",
            format!("dense position {} wants width {}, input is {:?}", j, width, x.shape()),
        ));
    }
    let stl_cfg = cfg.stl_config(width);
    let mut f = x.clone();
    for u in 0..cfg.stl_per_dstb {
        let params = StlParams::bind(store, &format!("{prefix}.stl.{u}"), &stl_cfg)?;
        f = stl_forward(&f, &params, &stl_cfg, u % 2 == 1)?;
    }
    let bottleneck = Linear::bind(store, &format!("{prefix}.bottleneck"))?;
    let compressed = channel_affine(&f, &bottleneck)?;
    Tensor::concat(&[x, &compressed], 1)
}

/// One residual dense block: a chain of dense blocks fused back to the base
/// width by a 3×3 conv under an identity skip.
pub fn rdstb_forward<T: Elem>(
    x: &Tensor<T>,
    store: &ParamStore<T>,
    prefix: &str,
    cfg: &RdstConfig,
) -> Result<Tensor<T>> {
    if x.shape().len() != 4 || x.shape()[1] != cfg.dim {
        return Err(Error::invalid(
            "rdstb",
            format!("wants width {}, input is {:?}", cfg.dim, x.shape()),
        ));
    }
    let mut f = x.clone();
    for j in 0..cfg.dstb_per_rdstb {
        f = dstb_forward(&f, store, &format!("{prefix}.dstb.{j}"), cfg, j)?;
    }
    let lff = Conv2d::bind(store, &format!("{prefix}.lff"), 1, 1)?;
    x.add(&lff.forward(&f)?)
}

/// Fuse all body block outputs with one affine map n·d→d.
pub fn gff_forward<T: Elem>(
    outputs: &[Tensor<T>],
    store: &ParamStore<T>,
    cfg: &RdstConfig,
) -> Result<Tensor<T>> {
    if !cfg.use_gff {
        return Err(Error::invalid("gff", "global feature fusion is disabled in this config"));
    }
    if outputs.len() != cfg.n_rdstb {
        return Err(Error::invalid(
            "gff",
            format!("want {} block outputs, got {}", cfg.n_rdstb, outputs.len()),
        ));
    }
    let refs: Vec<&Tensor<T>> = outputs.iter().collect();
    let cat = Tensor::concat(&refs, 1)?;
    let fuse = Linear::bind(store, "gff")?;
    channel_affine(&cat, &fuse)
}

/// Full generator forward: `[N, C, H, W] → [N, C, sH, sW]`. No output clamp;
/// use [`infer`] for clamped inference.
pub fn forward<T: Elem>(x: &Tensor<T>, store: &ParamStore<T>, cfg: &RdstConfig) -> Result<Tensor<T>> {
    cfg.validate()?;
    let shape = x.shape();
    if shape.len() != 4 || shape[1] != cfg.in_channels {
        return Err(Error::invalid(
            "rdst forward",
            format!("want [N,{},H,W], got {:?}", cfg.in_channels, shape),
        ));
    }
    if shape[2] == 0 || shape[3] == 0 {
        return Err(Error::invalid("rdst forward", "empty spatial extents"));
    }
    let head = Conv2d::bind(store, "head", 1, 1)?;
    let f_lr = head.forward(x)?;

    let mut f = f_lr.clone();
    let mut outputs = Vec::with_capacity(cfg.n_rdstb);
    for i in 0..cfg.n_rdstb {
        f = rdstb_forward(&f, store, &format!("body.{i}"), cfg)?;
        if cfg.use_gff {
            outputs.push(f.clone());
        }
    }
    let body = if cfg.use_gff {
        gff_forward(&outputs, store, cfg)?
    } else {
        f
    };
    let body_conv = Conv2d::bind(store, "body_conv", 1, 1)?;
    let f_d = f_lr.add(&body_conv.forward(&body)?)?;

    if cfg.pre_shuffle_tail {
        let conv = Conv2d::bind(store, "upsampler.0", 1, 1)?;
        return conv.forward(&f_d)?.pixel_shuffle(cfg.scale);
    }
    let mut u = f_d;
    for (k, r) in cfg.shuffle_factors().into_iter().enumerate() {
        let conv = Conv2d::bind(store, &format!("upsampler.{k}"), 1, 1)?;
        u = conv.forward(&u)?.pixel_shuffle(r)?;
    }
    let tail = Conv2d::bind(store, "tail", 1, 1)?;
    tail.forward(&u)
}

/// Inference entry point: forward plus a clamp to the valid [0,1] range.
pub fn infer<T: Elem>(x: &Tensor<T>, store: &ParamStore<T>, cfg: &RdstConfig) -> Result<Tensor<T>> {
    forward(x, store, cfg)?.clamp01()
}

/// A generator bundled with its parameters.
#[derive(Clone)]
pub struct RdstModel<T: Elem> {
    pub cfg: RdstConfig,
    pub store: ParamStore<T>,
}

impl<T: Elem> RdstModel<T> {
    /// Fresh Kaiming-uniform initialization, deterministic per seed.
    pub fn init(cfg: RdstConfig, seed: u64) -> Result<RdstModel<T>> {
        let mut store = ParamStore::new();
        let mut rng = rng_for(seed, &["rdst-init"]);
        register(&mut store, &cfg, &mut rng)?;
        Ok(RdstModel { cfg, store })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        forward(x, &self.store, &self.cfg)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        infer(x, &self.store, &self.cfg)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut meta = vec![("kind".to_string(), "rdst".to_string())];
        meta.extend(self.cfg.to_meta());
        crate::checkpoint::save(path, &meta, &self.store)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<RdstModel<T>> {
        let (meta, store) = crate::checkpoint::load(path)?;
        let cfg = RdstConfig::from_meta(&meta)?;
        Ok(RdstModel { cfg, store })
    }
}

/// Static parameter/MAC accounting at a given input shape, holding the MAC
/// conventions of the cost module (attention counts QKᵀ and AV; biases,
/// norms and softmax are free).
pub fn cost(cfg: &RdstConfig, input: &[usize; 4]) -> Result<CostReport> {
    cfg.validate()?;
    let &[n, c, h, w] = input;
    if c != cfg.in_channels {
        return Err(Error::invalid("cost", format!("input channels {} vs config {}", c, cfg.in_channels)));
    }
    let mut report = CostReport::new();
    let d = cfg.dim;
    let conv = |cin: usize, cout: usize, hh: usize, ww: usize| -> (u64, u64) {
        let params = (9 * cin * cout + cout) as u64;
        let macs = (9 * cin * cout) as u64 * (n * hh * ww) as u64;
        (params, macs)
    };

    let (p, m) = conv(cfg.in_channels, d, h, w);
    report.push("head", p, m);

    let grid = WindowGrid::new(h, w, cfg.window, (0, 0))?;
    let (hp, wp) = grid.padded();
    let tokens_pad = n as u64 * (hp * wp) as u64;
    let tokens = n as u64 * (h * w) as u64;
    let windows = n as u64 * grid.num_windows() as u64;
    let p2 = (grid.tokens_per_window() * grid.tokens_per_window()) as u64;

    for i in 0..cfg.n_rdstb {
        for j in 0..cfg.dstb_per_rdstb {
            let width = cfg.width_at(j);
            let stl_cfg = cfg.stl_config(width);
            let cw = width as u64;
            let hidden = stl_cfg.mlp_hidden() as u64;
            for u in 0..cfg.stl_per_dstb {
                let name = format!("body.{i}.dstb.{j}.stl.{u}");
                let qkv_macs = tokens_pad * cw * 3 * cw;
                let proj_macs = tokens_pad * cw * cw;
                // QKᵀ and AV per window: each is P²·dh per head = P²·c total.
                let attn_macs = 2 * windows * p2 * cw;
                let mlp_macs = tokens * (cw * hidden + hidden * cw);
                let macs = qkv_macs + proj_macs + attn_macs + mlp_macs;
                report.push(name, stl_param_count(&stl_cfg), macs);
            }
            let bparams = cw * cfg.growth as u64 + cfg.growth as u64;
            let bmacs = tokens * cw * cfg.growth as u64;
            report.push(format!("body.{i}.dstb.{j}.bottleneck"), bparams, bmacs);
        }
        let (p, m) = conv(cfg.fused_width(), d, h, w);
        report.push(format!("body.{i}.lff"), p, m);
    }

    if cfg.use_gff {
        let din = (cfg.n_rdstb * d) as u64;
        report.push("gff", din * d as u64 + d as u64, tokens * din * d as u64);
    }
    let (p, m) = conv(d, d, h, w);
    report.push("body_conv", p, m);

    if cfg.pre_shuffle_tail {
        let s = cfg.scale;
        let (p, m) = conv(d, cfg.in_channels * s * s, h, w);
        report.push("upsampler.0", p, m);
    } else {
        let (mut hh, mut ww) = (h, w);
        for (k, r) in cfg.shuffle_factors().into_iter().enumerate() {
            let (p, m) = conv(d, d * r * r, hh, ww);
            report.push(format!("upsampler.{k}"), p, m);
            hh *= r;
            ww *= r;
        }
        let (p, m) = conv(d, cfg.in_channels, hh, ww);
        report.push("tail", p, m);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> RdstConfig {
        RdstConfig {
            scale: 4,
            in_channels: 1,
            dim: 12,
            growth: 6,
            window: 4,
            heads: 2,
            stl_per_dstb: 2,
            dstb_per_rdstb: 3,
            n_rdstb: 1,
            mlp_ratio: 2.0,
            use_rel_pos_bias: true,
            use_gff: false,
            single_stage_upsampler: false,
            pre_shuffle_tail: false,
        }
    }

    #[test]
    fn forward_shapes() {
        let model: RdstModel<f32> = RdstModel::init(tiny_cfg(), 5).unwrap();
        let x = Tensor::full(&[1, 1, 8, 8], 0.25f32);
        let y = model.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 32, 32]);
    }

    #[test]
    fn dense_path_preserves_prefix_channels() {
        let cfg = tiny_cfg();
        let model: RdstModel<f32> = RdstModel::init(cfg.clone(), 6).unwrap();
        let x = Tensor::full(&[1, 12, 8, 8], 0.1f32);
        let y = dstb_forward(&x, &model.store, "body.0.dstb.0", &cfg, 0).unwrap();
        assert_eq!(y.shape(), &[1, 18, 8, 8]);
        // first d channels of the output are the input, untouched
        let first = y.narrow(1, 0, 12).unwrap();
        assert_eq!(first.to_vec(), x.to_vec());
    }

    #[test]
    fn dstb_zero_bottleneck_appends_zeros() {
        let cfg = tiny_cfg();
        let mut model: RdstModel<f32> = RdstModel::init(cfg.clone(), 7).unwrap();
        let w_shape = model.store.get("body.0.dstb.0.bottleneck.weight").unwrap().shape().to_vec();
        model
            .store
            .set("body.0.dstb.0.bottleneck.weight", Tensor::zeros(&w_shape))
            .unwrap();
        let x = Tensor::full(&[1, 12, 8, 8], 0.3f32);
        let y = dstb_forward(&x, &model.store, "body.0.dstb.0", &cfg, 0).unwrap();
        let appended = y.narrow(1, 12, 6).unwrap();
        assert!(appended.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rdstb_preserves_shape_and_zero_weights_identity() {
        let cfg = tiny_cfg();
        let mut model: RdstModel<f32> = RdstModel::init(cfg.clone(), 8).unwrap();
        let x = Tensor::full(&[2, 12, 8, 8], 0.2f32);
        let y = rdstb_forward(&x, &model.store, "body.0", &cfg).unwrap();
        assert_eq!(y.shape(), x.shape());

        // Zero every parameter: residual path only.
        let names: Vec<String> = model.store.names().map(String::from).collect();
        for name in names {
            let shape = model.store.get(&name).unwrap().shape().to_vec();
            model.store.set(&name, Tensor::zeros(&shape)).unwrap();
        }
        let y = rdstb_forward(&x, &model.store, "body.0", &cfg).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn width_sequence_matches_defaults() {
        let cfg = RdstConfig::rdst(4, 1);
        let widths: Vec<usize> = (0..cfg.dstb_per_rdstb).map(|j| cfg.width_at(j)).collect();
        assert_eq!(widths, vec![60, 90, 120]);
        assert_eq!(cfg.fused_width(), 150);
    }

    #[test]
    fn zero_input_zero_biases_gives_zero_output() {
        let cfg = tiny_cfg();
        let model: RdstModel<f32> = RdstModel::init(cfg, 9).unwrap();
        // biases start at zero; LN beta starts at zero
        let x = Tensor::zeros(&[1, 1, 8, 8]);
        let y = model.forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0), "nonzero output from zero input");
    }

    #[test]
    fn gff_param_delta_matches_formula() {
        let mut with = RdstConfig::rdst(4, 1);
        with.use_gff = true;
        let base = RdstConfig::rdst(4, 1);
        let cost_with = cost(&with, &[1, 1, 40, 32]).unwrap().total_params();
        let cost_base = cost(&base, &[1, 1, 40, 32]).unwrap().total_params();
        assert_eq!(cost_with - cost_base, (8 * 60) * 60 + 60);
    }

    #[test]
    fn gff_disabled_errors() {
        let cfg = tiny_cfg();
        let model: RdstModel<f32> = RdstModel::init(cfg.clone(), 10).unwrap();
        let x = Tensor::full(&[1, 12, 8, 8], 0.1f32);
        assert!(gff_forward(&[x], &model.store, &cfg).is_err());
    }

    #[test]
    fn cost_matches_actual_parameter_count() {
        for cfg in [tiny_cfg(), RdstConfig::rdst_e(4, 1)] {
            let model: RdstModel<f32> = RdstModel::init(cfg.clone(), 11).unwrap();
            let report = cost(&cfg, &[1, 1, 8, 8]).unwrap();
            assert_eq!(report.total_params(), model.store.num_params(), "config {:?}", cfg);
        }
    }

    #[test]
    fn checkpoint_roundtrip_bit_exact() {
        let model: RdstModel<f32> = RdstModel::init(tiny_cfg(), 12).unwrap();
        let dir = std::env::temp_dir().join("rdst-ckpt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.ckpt");
        model.save(&path).unwrap();
        let loaded: RdstModel<f32> = RdstModel::load(&path).unwrap();
        assert_eq!(loaded.cfg, model.cfg);
        let bytes1 = std::fs::read(&path).unwrap();
        loaded.save(&path).unwrap();
        let bytes2 = std::fs::read(&path).unwrap();
        assert_eq!(bytes1, bytes2);
        std::fs::remove_dir_all(&dir).ok();
    }
}
