//! Training orchestration: the two-stage SR schedule, segmentation U-Net
//! training, evaluation runs with comparison grids, and checkpointing with
//! bitwise-reproducible resume.
//!
//! Every piece of randomness derives from the run seed plus a tag path, so
//! (config, seed, thread count) determines every artifact byte. Wall-clock
//! timing goes to stderr only, never into artifact files.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;

use crate::checkpoint;
use crate::data::{bicubic_resize, dataset::Dataset, degrade, image_io, sample_patches, SrSample};
use crate::error::{Error, Result};
use crate::losses::{combined_loss, LossSpec, PerceptualVariant};
use crate::metrics::{
    argmax_classes, foreground_region, measure_fps, metric_row, psnr, EvalReport, FpsReport,
};
use crate::nn::{adam_step, AdamParams, AdamState, ParamStore};
use crate::rdst::{self, RdstConfig, RdstModel};
use crate::rng::rng_for;
use crate::tensor::{Elem, Tape, Tensor};
use crate::unet::{dice_loss, one_hot, UNetConfig, UNetModel};

pub use config::Config;

/// One training stage: step budget, base learning rate, and fractional
/// milestones (of the stage length) where the rate halves.
#[derive(Debug, Clone)]
pub struct StagePlan {
    pub steps: usize,
    pub lr: f64,
    pub milestones: Vec<f64>,
}

impl StagePlan {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("plan", "stage needs at least one step"));
        }
        if self.lr <= 0.0 {
            return Err(Error::invalid("plan", "learning rate must be positive"));
        }
        let mut last = 0.0;
        for &m in &self.milestones {
            if m <= last || m >= 1.0 {
                return Err(Error::invalid(
                    "plan",
                    "milestones must be strictly increasing fractions in (0,1)",
                ));
            }
            last = m;
        }
        Ok(())
    }

    /// Learning rate at a 0-based step index.
    pub fn lr_at(&self, step: usize) -> f64 {
        let mut lr = self.lr;
        for &m in &self.milestones {
            if step as f64 >= m * self.steps as f64 {
                lr *= 0.5;
            }
        }
        lr
    }
}

/// The full two-stage schedule plus batch geometry.
#[derive(Debug, Clone)]
pub struct TrainPlan {
    pub stage1: StagePlan,
    pub stage2: StagePlan,
    pub batch: usize,
    pub hr_patch: usize,
    pub scale: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl TrainPlan {
    pub fn from_config(cfg: &Config) -> Result<TrainPlan> {
        let plan = TrainPlan {
            stage1: StagePlan {
                steps: cfg.usize_or("train.stage1.steps", 2000)?,
                lr: cfg.f64_or("train.stage1.lr", 2e-4)?,
                milestones: cfg.f64_list_or("train.stage1.milestones", &[])?,
            },
            stage2: StagePlan {
                steps: cfg.usize_or("train.stage2.steps", 500)?,
                lr: cfg.f64_or("train.stage2.lr", 1e-4)?,
                milestones: cfg.f64_list_or("train.stage2.milestones", &[0.5, 0.75, 0.875])?,
            },
            batch: cfg.usize_or("train.batch", 32)?,
            hr_patch: cfg.usize_or("train.patch", 96)?,
            scale: cfg.usize_or("data.scale", 4)?,
            sigma: cfg.f64_or("data.sigma", 0.01)?,
            seed: cfg.u64_or("seed", 0)?,
        };
        plan.stage1.validate()?;
        plan.stage2.validate()?;
        if plan.batch == 0 {
            return Err(Error::invalid("plan", "batch must be positive"));
        }
        Ok(plan)
    }
}

pub fn model_config(cfg: &Config) -> Result<RdstConfig> {
    let scale = cfg.usize_or("data.scale", 4)?;
    let base = match cfg.string_or("model.preset", "rdst").as_str() {
        "rdst" => RdstConfig::rdst(scale, 1),
        "rdst-e" => RdstConfig::rdst_e(scale, 1),
        other => return Err(Error::invalid("config", format!("unknown model.preset `{other}`"))),
    };
    let model = RdstConfig {
        scale,
        in_channels: cfg.usize_or("model.in_channels", base.in_channels)?,
        dim: cfg.usize_or("model.d", base.dim)?,
        growth: cfg.usize_or("model.g", base.growth)?,
        window: cfg.usize_or("model.window", base.window)?,
        heads: cfg.usize_or("model.heads", base.heads)?,
        stl_per_dstb: cfg.usize_or("model.stl_per_dstb", base.stl_per_dstb)?,
        dstb_per_rdstb: cfg.usize_or("model.dstb_per_rdstb", base.dstb_per_rdstb)?,
        n_rdstb: cfg.usize_or("model.n_rdstb", base.n_rdstb)?,
        mlp_ratio: cfg.f64_or("model.mlp_ratio", base.mlp_ratio)?,
        use_rel_pos_bias: cfg.bool_or("model.rel_pos_bias", base.use_rel_pos_bias)?,
        use_gff: cfg.bool_or("model.gff", base.use_gff)?,
        single_stage_upsampler: cfg.bool_or("model.single_stage_upsampler", base.single_stage_upsampler)?,
        pre_shuffle_tail: cfg.bool_or("model.pre_shuffle_tail", base.pre_shuffle_tail)?,
    };
    model.validate()?;
    Ok(model)
}

pub fn unet_config(cfg: &Config, classes: usize) -> Result<UNetConfig> {
    let u = UNetConfig {
        in_channels: cfg.usize_or("unet.in_channels", 1)?,
        classes: cfg.usize_or("unet.classes", classes)?,
        base_width: cfg.usize_or("unet.base_width", 64)?,
        levels: cfg.usize_or("unet.levels", 5)?,
    };
    u.validate()?;
    Ok(u)
}

pub fn loss_spec(cfg: &Config) -> Result<LossSpec> {
    let spec = LossSpec {
        alpha: cfg.f64_or("loss.alpha", 1.0)?,
        lambda: cfg.f64_or("loss.lambda", 10.0)?,
        variant: PerceptualVariant::parse(&cfg.string_or("loss.variant", "e1"))?,
    };
    spec.validate()?;
    Ok(spec)
}

/// Append-only run log. Holds loss curves, validation points, and the
/// config snapshot; timing is deliberately excluded so the file is
/// byte-reproducible.
pub struct RunLog {
    path: PathBuf,
    buffer: String,
}

impl RunLog {
    pub fn create(path: impl AsRef<Path>, cfg_snapshot: &str) -> Result<RunLog> {
        let mut buffer = String::new();
        for line in cfg_snapshot.lines() {
            writeln!(buffer, "# {line}").ok();
        }
        buffer.push_str("kind\tstep\tlr\tl1\tperceptual\ttotal\n");
        let log = RunLog {
            path: path.as_ref().to_path_buf(),
            buffer,
        };
        log.flush()?;
        Ok(log)
    }

    pub fn step(&mut self, step: usize, lr: f64, l1: f64, perceptual: Option<f64>, total: f64) {
        let lu = perceptual.map(|v| format!("{v:.9e}")).unwrap_or_else(|| "-".into());
        writeln!(
            self.buffer,
            "step\t{step}\t{lr:.9e}\t{l1:.9e}\t{lu}\t{total:.9e}"
        )
        .ok();
    }

    pub fn metric(&mut self, kind: &str, step: usize, value: f64) {
        writeln!(self.buffer, "{kind}\t{step}\t-\t-\t-\t{value:.9e}").ok();
    }

    pub fn flush(&self) -> Result<()> {
        fs::write(&self.path, self.buffer.as_bytes())?;
        Ok(())
    }
}

fn stack_images<T: Elem>(images: &[Tensor<T>]) -> Result<Tensor<T>> {
    if images.is_empty() {
        return Err(Error::invalid("batch", "no images"));
    }
    let shape = images[0].shape().to_vec();
    let mut data = Vec::with_capacity(images.len() * images[0].numel());
    for img in images {
        if img.shape() != shape {
            return Err(Error::ShapeMismatch {
                op: "stack",
                lhs: shape,
                rhs: img.shape().to_vec(),
            });
        }
        data.extend_from_slice(img.data());
    }
    let mut out_shape = vec![images.len()];
    out_shape.extend_from_slice(&shape);
    Tensor::from_vec(data, &out_shape)
}

/// Draw one training batch of aligned LR/HR patches. Degradation noise and
/// crop positions are keyed by (seed, stage, step, slot) so any step can be
/// reproduced in isolation.
fn sr_batch(
    ds: &Dataset,
    plan: &TrainPlan,
    stage: &str,
    step: usize,
) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let mut pick = rng_for(plan.seed, &[stage, "pick", &step.to_string()]);
    let mut lrs = Vec::with_capacity(plan.batch);
    let mut hrs = Vec::with_capacity(plan.batch);
    for slot in 0..plan.batch {
        let idx = pick.gen_range(0..ds.len());
        let hr = ds.load_hr(idx)?;
        let mut noise_rng = rng_for(plan.seed, &[stage, "noise", &step.to_string(), &slot.to_string()]);
        let lr = degrade(&hr, plan.scale, plan.sigma, &mut noise_rng)?;
        let sample = SrSample {
            hr,
            lr,
            label: None,
            id: idx.to_string(),
        };
        let mut patch_rng = rng_for(plan.seed, &[stage, "patch", &step.to_string(), &slot.to_string()]);
        let patch = sample_patches(&sample, plan.hr_patch, plan.scale, &mut patch_rng)?;
        lrs.push(patch.lr);
        hrs.push(patch.hr);
    }
    Ok((stack_images(&lrs)?, stack_images(&hrs)?))
}

/// Mean PSNR of clamped model outputs over a validation split. Degradation
/// noise is keyed per image, fixed across validations of one run.
pub fn validation_psnr(model: &RdstModel<f32>, ds: &Dataset, scale: usize, sigma: f64, seed: u64) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..ds.len() {
        let pair = ds.load_pair(i, scale, sigma, seed)?;
        let lr = pair.lr.reshape(&[1, pair.lr.shape()[0], pair.lr.shape()[1], pair.lr.shape()[2]])?;
        let sr = model.infer(&lr)?;
        let hr = pair.hr.reshape(&[1, pair.hr.shape()[0], pair.hr.shape()[1], pair.hr.shape()[2]])?;
        let p = psnr(&sr, &hr, 1.0)?;
        total += p.min(crate::metrics::PSNR_CAP_DB);
    }
    Ok(total / ds.len() as f64)
}

const ADAM_M_PREFIX: &str = "adam.m.";
const ADAM_V_PREFIX: &str = "adam.v.";

fn save_train_state(
    path: &Path,
    model: &RdstModel<f32>,
    adam: &AdamState<f32>,
    step: usize,
    stage: &str,
    seed: u64,
) -> Result<()> {
    let mut meta = vec![
        ("kind".to_string(), "rdst-train".to_string()),
        ("stage".to_string(), stage.to_string()),
        ("step".to_string(), step.to_string()),
        ("seed".to_string(), seed.to_string()),
        ("adam.t".to_string(), adam.t.to_string()),
    ];
    meta.extend(model.cfg.to_meta());
    let mut store = model.store.clone();
    for (i, (name, value)) in model.store.iter().enumerate() {
        store.insert(
            format!("{ADAM_M_PREFIX}{name}"),
            Tensor::from_vec(adam.m[i].clone(), value.shape())?,
        )?;
        store.insert(
            format!("{ADAM_V_PREFIX}{name}"),
            Tensor::from_vec(adam.v[i].clone(), value.shape())?,
        )?;
    }
    checkpoint::save(path, &meta, &store)
}

fn load_train_state(path: &Path) -> Result<(RdstModel<f32>, AdamState<f32>, usize)> {
    let (meta, full) = checkpoint::load::<f32>(path)?;
    if checkpoint::meta_get(&meta, "kind") != Some("rdst-train") {
        return Err(Error::invalid("resume", "checkpoint is not a training state"));
    }
    let cfg = RdstConfig::from_meta(&meta)?;
    let step: usize = checkpoint::meta_get(&meta, "step")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::invalid("resume", "missing step"))?;
    let t: u64 = checkpoint::meta_get(&meta, "adam.t")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::invalid("resume", "missing adam.t"))?;
    let mut store = ParamStore::new();
    let mut m = Vec::new();
    let mut v = Vec::new();
    for (name, tensor) in full.iter() {
        if name.starts_with(ADAM_M_PREFIX) {
            m.push(tensor.to_vec());
        } else if name.starts_with(ADAM_V_PREFIX) {
            v.push(tensor.to_vec());
        } else {
            store.insert(name.to_string(), tensor.clone())?;
        }
    }
    if m.len() != store.len() || v.len() != store.len() {
        return Err(Error::invalid("resume", "optimizer state does not match parameters"));
    }
    Ok((RdstModel { cfg, store }, AdamState { m, v, t }, step))
}

pub struct TrainArtifacts {
    pub best: PathBuf,
    pub last: PathBuf,
    pub log: PathBuf,
    pub best_psnr: f64,
}

struct SrStageSetup<'a> {
    stage_tag: &'a str,
    plan_stage: StagePlan,
    loss: LossSpec,
    unet: Option<UNetModel<f32>>,
}

fn run_sr_stage(
    cfg: &Config,
    out_dir: &Path,
    model: &mut RdstModel<f32>,
    adam: &mut AdamState<f32>,
    start_step: usize,
    setup: &SrStageSetup<'_>,
) -> Result<TrainArtifacts> {
    let plan = TrainPlan::from_config(cfg)?;
    let data_dir = PathBuf::from(cfg.require("data.dir")?);
    let train_ds = Dataset::open(data_dir.join("train"))?;
    if train_ds.is_empty() {
        return Err(Error::invalid("train", "empty training dataset"));
    }
    let val_ds = Dataset::open(data_dir.join("val")).ok();

    fs::create_dir_all(out_dir)?;
    let stage = setup.stage_tag;
    let log_path = out_dir.join(format!("{stage}.log"));
    let mut log = RunLog::create(&log_path, &cfg.to_text())?;
    let best_path = out_dir.join("best.ckpt");
    let last_path = out_dir.join("last.ckpt");

    let stage_plan = &setup.plan_stage;
    let val_every = (stage_plan.steps / 20).max(1);
    let ckpt_every = cfg.usize_or("train.ckpt_every", stage_plan.steps.div_ceil(4))?.max(1);
    let hp_base = AdamParams::default();
    let mut best_psnr = f64::NEG_INFINITY;
    let started = Instant::now();

    for step in start_step..stage_plan.steps {
        let (lr_batch, hr_batch) = sr_batch(&train_ds, &plan, stage, step)?;
        let tape: Tape<f32> = Tape::new();
        let traced = model.store.traced(&tape);
        let sr = rdst::forward(&lr_batch, &traced, &model.cfg)?;
        let loss = combined_loss(&setup.loss, &sr, &hr_batch, setup.unet.as_ref())?;
        let total = loss.total.item()?;
        if !total.is_finite() {
            return Err(Error::msg(format!(
                "non-finite loss at {stage} step {step} (l1 {}, perceptual {:?}): aborting",
                loss.l1, loss.perceptual
            )));
        }
        let grads = tape.backward(&loss.total)?;
        let lr_now = stage_plan.lr_at(step);
        let hp = AdamParams { lr: lr_now, ..hp_base };
        adam_step(&mut model.store, &traced, &grads, &hp, adam)?;
        log.step(step, lr_now, loss.l1, loss.perceptual, total as f64);

        let is_last = step + 1 == stage_plan.steps;
        if (step + 1) % val_every == 0 || is_last {
            if let Some(val) = &val_ds {
                let v = validation_psnr(model, val, plan.scale, plan.sigma, plan.seed)?;
                log.metric("val", step, v);
                if v > best_psnr {
                    best_psnr = v;
                    model.save(&best_path)?;
                    log.metric("best", step, v);
                }
            }
            log.flush()?;
            eprintln!(
                "[{stage}] step {}/{} loss {:.5} elapsed {:.1}s",
                step + 1,
                stage_plan.steps,
                total,
                started.elapsed().as_secs_f64()
            );
        }
        if (step + 1) % ckpt_every == 0 || is_last {
            save_train_state(&last_path, model, adam, step + 1, stage, plan.seed)?;
        }
    }
    if val_ds.is_none() {
        model.save(&best_path)?;
    }
    log.flush()?;
    Ok(TrainArtifacts {
        best: best_path,
        last: last_path,
        log: log_path,
        best_psnr,
    })
}

/// Stage 1: train from scratch (or resume) with pixel-wise L1 only.
pub fn train_stage1(cfg: &Config) -> Result<TrainArtifacts> {
    let plan = TrainPlan::from_config(cfg)?;
    let out_dir = PathBuf::from(cfg.string_or("out.dir", "runs/stage1"));
    let (mut model, mut adam, start_step) = match cfg.get("train.resume") {
        Some(path) => load_train_state(Path::new(path))?,
        None => {
            let model = RdstModel::<f32>::init(model_config(cfg)?, plan.seed)?;
            let adam = AdamState::for_store(&model.store);
            (model, adam, 0)
        }
    };
    let setup = SrStageSetup {
        stage_tag: "stage1",
        plan_stage: plan.stage1.clone(),
        loss: LossSpec::l1_only(),
        unet: None,
    };
    run_sr_stage(cfg, &out_dir, &mut model, &mut adam, start_step, &setup)
}

/// Stage 2: fine-tune a stage-1 checkpoint with the combined loss. The
/// U-Net checkpoint is read once and never written.
pub fn finetune_stage2(cfg: &Config) -> Result<TrainArtifacts> {
    let plan = TrainPlan::from_config(cfg)?;
    let out_dir = PathBuf::from(cfg.string_or("out.dir", "runs/stage2"));
    let spec = loss_spec(cfg)?;
    let unet = if spec.wants_unet() {
        let path = cfg.require("loss.unet")?;
        Some(UNetModel::<f32>::load(path)?)
    } else {
        None
    };
    let (mut model, mut adam, start_step) = match cfg.get("train.resume") {
        Some(path) => load_train_state(Path::new(path))?,
        None => {
            let init = cfg.require("train.init")?;
            let model = RdstModel::<f32>::load(init)?;
            let adam = AdamState::for_store(&model.store);
            (model, adam, 0)
        }
    };
    let setup = SrStageSetup {
        stage_tag: "stage2",
        plan_stage: plan.stage2.clone(),
        loss: spec,
        unet,
    };
    run_sr_stage(cfg, &out_dir, &mut model, &mut adam, start_step, &setup)
}

/// Mean whole-region dice of arg-max predictions against ground truth.
fn validation_dice(model: &UNetModel<f32>, ds: &Dataset) -> Result<f64> {
    let region = foreground_region(model.cfg.classes);
    let mut total = 0.0;
    for i in 0..ds.len() {
        let hr = ds.load_hr(i)?;
        let lbl = ds.load_label(i)?;
        let x = hr.reshape(&[1, hr.shape()[0], hr.shape()[1], hr.shape()[2]])?;
        let taps = model.forward(&x)?;
        let pred = argmax_classes(&taps.probs)?;
        let gt = lbl.reshape(&[1, lbl.shape()[0], lbl.shape()[1]])?;
        total += crate::metrics::region_dice(&pred, &gt, &region, model.cfg.classes)?;
    }
    Ok(total / ds.len() as f64)
}

/// Train the segmentation U-Net on HR images + labels with dice loss.
pub fn train_unet(cfg: &Config) -> Result<TrainArtifacts> {
    let seed = cfg.u64_or("seed", 0)?;
    let data_dir = PathBuf::from(cfg.require("data.dir")?);
    let train_ds = Dataset::open(data_dir.join("train"))?;
    if train_ds.is_empty() {
        return Err(Error::invalid("seg-train", "empty training dataset"));
    }
    let val_ds = Dataset::open(data_dir.join("val")).ok();
    let ucfg = unet_config(cfg, train_ds.meta.classes)?;
    let stage = StagePlan {
        steps: cfg.usize_or("train.seg.steps", 800)?,
        lr: cfg.f64_or("train.seg.lr", 1e-4)?,
        milestones: cfg.f64_list_or("train.seg.milestones", &[0.5, 0.75])?,
    };
    stage.validate()?;
    let batch = cfg.usize_or("train.seg.batch", 4)?.max(1);

    let out_dir = PathBuf::from(cfg.string_or("out.dir", "runs/seg"));
    fs::create_dir_all(&out_dir)?;
    let log_path = out_dir.join("seg.log");
    let mut log = RunLog::create(&log_path, &cfg.to_text())?;
    let best_path = out_dir.join("unet_best.ckpt");
    let last_path = out_dir.join("unet_last.ckpt");

    let mut model = UNetModel::<f32>::init(ucfg.clone(), seed)?;
    let mut adam = AdamState::for_store(&model.store);
    let hp_base = AdamParams::default();
    let val_every = (stage.steps / 20).max(1);
    let mut best_dice = f64::NEG_INFINITY;
    let started = Instant::now();

    for step in 0..stage.steps {
        let mut pick = rng_for(seed, &["seg", "pick", &step.to_string()]);
        let mut imgs = Vec::with_capacity(batch);
        let mut lbls = Vec::with_capacity(batch);
        for _ in 0..batch {
            let idx = pick.gen_range(0..train_ds.len());
            imgs.push(train_ds.load_hr(idx)?);
            lbls.push(train_ds.load_label(idx)?);
        }
        let x = stack_images(&imgs)?;
        let y = one_hot(&stack_images(&lbls)?, ucfg.classes)?;

        let tape: Tape<f32> = Tape::new();
        let traced = model.store.traced(&tape);
        let taps = crate::unet::forward(&x, &traced, &ucfg)?;
        let loss = dice_loss(&taps.probs, &y)?;
        let total = loss.item()?;
        if !total.is_finite() {
            return Err(Error::msg(format!("non-finite loss at seg step {step}: aborting")));
        }
        let grads = tape.backward(&loss)?;
        let hp = AdamParams { lr: stage.lr_at(step), ..hp_base };
        adam_step(&mut model.store, &traced, &grads, &hp, &mut adam)?;
        log.step(step, hp.lr, total as f64, None, total as f64);

        let is_last = step + 1 == stage.steps;
        if (step + 1) % val_every == 0 || is_last {
            if let Some(val) = &val_ds {
                let d = validation_dice(&model, val)?;
                log.metric("val", step, d);
                if d > best_dice {
                    best_dice = d;
                    model.save(&best_path)?;
                    log.metric("best", step, d);
                }
            }
            log.flush()?;
            eprintln!(
                "[seg] step {}/{} dice-loss {:.5} elapsed {:.1}s",
                step + 1,
                stage.steps,
                total,
                started.elapsed().as_secs_f64()
            );
        }
    }
    model.save(&last_path)?;
    if val_ds.is_none() {
        model.save(&best_path)?;
    }
    log.flush()?;
    Ok(TrainArtifacts {
        best: best_path,
        last: last_path,
        log: log_path,
        best_psnr: best_dice,
    })
}

/// Integer nearest-neighbour upscale for the LR panel of comparison grids.
fn nearest_upscale<T: Elem>(t: &Tensor<T>, s: usize) -> Result<Tensor<T>> {
    let shape = t.shape();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let mut data = vec![T::ZERO; c * h * s * w * s];
    for ci in 0..c {
        for y in 0..h * s {
            for x in 0..w * s {
                data[(ci * h * s + y) * w * s + x] = t.at(&[ci, y / s, x / s]);
            }
        }
    }
    Tensor::from_vec(data, &[c, h * s, w * s])
}

/// Evaluate a checkpoint on a dataset split: per-image PSNR/SSIM/region
/// dice for the model and the bicubic baseline, aggregate report files, and
/// comparison grid PNGs.
pub fn evaluate(cfg: &Config) -> Result<EvalReport> {
    let seed = cfg.u64_or("seed", 0)?;
    let scale = cfg.usize_or("data.scale", 4)?;
    let sigma = cfg.f64_or("data.sigma", 0.01)?;
    let data_dir = PathBuf::from(cfg.require("data.dir")?);
    let split = cfg.string_or("eval.split", "test");
    let ds = Dataset::open(data_dir.join(&split))?;
    if ds.is_empty() {
        return Err(Error::invalid("eval", "empty dataset"));
    }
    let model = RdstModel::<f32>::load(cfg.require("eval.model")?)?;
    let unet = match cfg.get("eval.unet") {
        Some(path) => Some(UNetModel::<f32>::load(path)?),
        None => None,
    };
    let out_dir = PathBuf::from(cfg.string_or("out.dir", "runs/eval"));
    fs::create_dir_all(&out_dir)?;
    let grids = cfg.usize_or("eval.grids", 4)?;

    let classes = ds.meta.classes;
    let mut region_names = Vec::new();
    let mut regions: Vec<Vec<usize>> = Vec::new();
    if unet.is_some() {
        region_names.push("T".to_string());
        regions.push(foreground_region(classes));
        for c in 1..classes {
            region_names.push(format!("C{c}"));
            regions.push(vec![c]);
        }
    }
    let mut report = EvalReport::new(region_names);

    for i in 0..ds.len() {
        let pair = ds.load_pair(i, scale, sigma, seed)?;
        let (c, h, w) = (pair.lr.shape()[0], pair.lr.shape()[1], pair.lr.shape()[2]);
        let lr4 = pair.lr.reshape(&[1, c, h, w])?;
        let sr = model.infer(&lr4)?;
        let hr4 = pair.hr.reshape(&[1, c, h * scale, w * scale])?;
        let bicubic = bicubic_resize(&lr4, h * scale, w * scale)?.clamp01()?;

        let gt = pair
            .label
            .as_ref()
            .map(|l| l.reshape(&[1, l.shape()[0], l.shape()[1]]))
            .transpose()?;

        let mut dice_for = |img: &Tensor<f32>| -> Result<(Vec<f64>, Option<Tensor<f32>>)> {
            let (Some(unet), Some(gt)) = (&unet, &gt) else {
                return Ok((Vec::new(), None));
            };
            let taps = unet.forward(img)?;
            let pred = argmax_classes(&taps.probs)?;
            let mut dice = Vec::with_capacity(regions.len());
            for region in &regions {
                dice.push(crate::metrics::region_dice(&pred, gt, region, classes)?);
            }
            Ok((dice, Some(pred)))
        };

        let (sr_dice, sr_pred) = dice_for(&sr)?;
        let (bi_dice, _) = dice_for(&bicubic)?;
        report.sr.push(metric_row(pair.id.clone(), &sr, &hr4, sr_dice)?);
        report.bicubic.push(metric_row(pair.id.clone(), &bicubic, &hr4, bi_dice)?);

        if i < grids {
            let lr_panel = image_io::gray_panel(&nearest_upscale(&pair.lr, scale)?)?;
            let bi_panel = image_io::gray_panel(&bicubic)?;
            let sr_panel = image_io::gray_panel(&sr)?;
            let hr_panel = image_io::gray_panel(&pair.hr)?;
            let mut panels = vec![lr_panel, bi_panel, sr_panel, hr_panel];
            if let (Some(pred), Some(gt)) = (&sr_pred, &gt) {
                panels.push(image_io::seg_overlay_panel(&pair.hr, pred, gt)?);
            }
            let grid = image_io::GridImage::new(&panels, h * scale, w * scale)?;
            grid.save(out_dir.join(format!("grid_{:04}.png", i)))?;
        }
    }

    let lr_shape = {
        let pair = ds.load_pair(0, scale, sigma, seed)?;
        [1, pair.lr.shape()[0], pair.lr.shape()[1], pair.lr.shape()[2]]
    };
    let cost = rdst::cost(&model.cfg, &lr_shape)?;
    report.params = Some(cost.total_params());
    report.macs = Some(cost.total_macs());

    if cfg.bool_or("bench.fps", false)? {
        report.fps = Some(bench_model_fps(cfg, &model, &lr_shape)?);
    }

    fs::write(out_dir.join("report.txt"), report.to_delimited())?;
    fs::write(out_dir.join("per_image.tsv"), report.per_image_delimited())?;
    fs::write(out_dir.join("report.json"), report.to_json()?)?;
    Ok(report)
}

/// Throughput of clamped inference at a fixed input shape. Finite checks
/// are disabled for the duration of the measurement.
pub fn bench_model_fps(cfg: &Config, model: &RdstModel<f32>, input: &[usize; 4]) -> Result<FpsReport> {
    let warmup = cfg.usize_or("bench.warmup", 2)?;
    let iters = cfg.usize_or("bench.iters", 9)?;
    let x = Tensor::<f32>::full(input, 0.5);
    crate::tensor::set_finite_checks(false);
    let result = measure_fps(
        || {
            let y = model.infer(&x)?;
            std::hint::black_box(y.data()[0]);
            Ok(())
        },
        input[0],
        warmup,
        iters,
    );
    crate::tensor::set_finite_checks(true);
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lr_schedule_halves_at_milestones() {
        let stage = StagePlan {
            steps: 20_000,
            lr: 1e-4,
            milestones: vec![0.5, 0.75, 0.875],
        };
        stage.validate().unwrap();
        assert_eq!(stage.lr_at(0), 1e-4);
        assert_eq!(stage.lr_at(9_999), 1e-4);
        assert_eq!(stage.lr_at(10_000), 5e-5);
        assert_eq!(stage.lr_at(15_000), 2.5e-5);
        // the step after the last milestone runs at lr/8
        assert_eq!(stage.lr_at(17_500), 1.25e-5);
        assert_eq!(stage.lr_at(19_999), 1.25e-5);
    }

    #[test]
    fn bad_milestones_rejected() {
        for ms in [vec![0.75, 0.5], vec![0.5, 0.5], vec![1.0]] {
            let stage = StagePlan {
                steps: 10,
                lr: 1e-4,
                milestones: ms,
            };
            assert!(stage.validate().is_err());
        }
    }

    #[test]
    fn stack_builds_batches() {
        let a = Tensor::full(&[1, 2, 2], 1.0f32);
        let b = Tensor::full(&[1, 2, 2], 2.0f32);
        let s = stack_images(&[a, b]).unwrap();
        assert_eq!(s.shape(), &[2, 1, 2, 2]);
        assert_eq!(s.data()[0], 1.0);
        assert_eq!(s.data()[4], 2.0);
    }
}
