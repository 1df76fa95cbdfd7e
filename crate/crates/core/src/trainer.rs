//! Seeded optimisation loop over random-scale HR patches.

use std::io::Write;

use iarn_tensor::{Array, Real, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::backbone::{Backbone, BRANCH_CHANNELS};
use crate::config::{LatentMode, TrainConfig, MIN_LR_SIDE};
use crate::encoding::encode;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::losses::{combine, loss_d, loss_g, loss_i, loss_r, LossReport};
use crate::optim::{clip_global_norm, Adam};
use crate::resample::{output_size, realized_scale, resample_tensor, Direction, ResampleMethod, ScalePair};
use crate::split::split_batch;

/// `base_lr * 0.5^floor(iteration / period)`.
pub fn lr_at(iteration: u64, cfg: &TrainConfig) -> f64 {
    let halvings = iteration / cfg.lr_halving_period;
    cfg.base_lr * 0.5f64.powi(halvings.min(i32::MAX as u64) as i32)
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

pub fn sample_scale<R: Rng>(rng: &mut R, cfg: &TrainConfig) -> ScalePair {
    let h = uniform(rng, cfg.scale_min, cfg.scale_max);
    let v = if cfg.asymmetric {
        uniform(rng, cfg.scale_min, cfg.scale_max)
    } else {
        h
    };
    ScalePair { h, v }
}

/// Uniform random square crops, optionally mirrored, from a fixed image set.
#[derive(Debug, Clone)]
pub struct PatchSampler {
    images: Vec<Image>,
    patch: usize,
    hflip: bool,
}

impl PatchSampler {
    /// Gray images are promoted to RGB; every image must hold a full patch.
    pub fn new(images: Vec<Image>, patch: usize, hflip: bool) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Dataset("no training images".into()));
        }
        let images: Vec<Image> = images.iter().map(Image::to_rgb).collect();
        for (i, img) in images.iter().enumerate() {
            if img.height() < patch || img.width() < patch {
                return Err(Error::Dataset(format!(
                    "image {i} is {}x{}, smaller than the {patch}x{patch} patch",
                    img.width(),
                    img.height()
                )));
            }
        }
        Ok(Self { images, patch, hflip })
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, n: usize) -> Result<Array<f32>> {
        let mut crops = Vec::with_capacity(n);
        for _ in 0..n {
            let img = &self.images[rng.gen_range(0..self.images.len())];
            let y = rng.gen_range(0..=img.height() - self.patch);
            let x = rng.gen_range(0..=img.width() - self.patch);
            let mut crop = img.crop(y, x, self.patch, self.patch)?;
            if self.hflip && rng.gen_bool(0.5) {
                crop = crop.flip_horizontal();
            }
            crops.push(crop);
        }
        crate::image::stack(&crops)
    }
}

/// Pipeline options shared by training and inference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundTrip {
    pub method: ResampleMethod,
    pub channel_split: bool,
}

impl RoundTrip {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            method: cfg.method,
            channel_split: cfg.channel_split,
        }
    }
}

/// Tensors of one differentiable round trip.
pub struct RoundTripGraph<T: Real> {
    pub y_h: Tensor<T>,
    pub z: Tensor<T>,
    pub y_l: Tensor<T>,
    pub y_hat_h: Tensor<T>,
    pub x_hat: Tensor<T>,
    pub lr_size: (usize, usize),
    pub scale: ScalePair,
}

/// split, forward, down, up, inverse with `z_hat`, merge.
///
/// `z_hat` of `None` means zeros.
pub fn round_trip_graph<T: Real>(
    model: &Backbone<T>,
    params: &crate::backbone::BoundParams<T>,
    x: &Array<T>,
    scale: ScalePair,
    opts: RoundTrip,
    z_hat: Option<Array<T>>,
) -> Result<RoundTripGraph<T>> {
    let [n, c, h, w] = x.dims4("round trip")?;
    if c != BRANCH_CHANNELS {
        return Err(Error::Shape(format!("round trip needs RGB batches, got {c} channels")));
    }
    let (lh, lw) = output_size(h, w, scale, Direction::Down);
    let realized = realized_scale(h, w, lh, lw);
    let (lf, hf) = split_batch(x, (lh, lw), opts.method, opts.channel_split)?;
    let p = encode(h, w, realized).to_tensor::<T>(n);
    let (y_h, z) = model.forward_with(params, &Tensor::constant(lf), &Tensor::constant(hf), &p)?;
    let y_l = resample_tensor(&y_h, lh, lw, opts.method)?;
    let y_hat_h = resample_tensor(&y_l, h, w, opts.method)?;
    let z_hat = Tensor::constant(z_hat.unwrap_or_else(|| Array::zeros(x.shape().to_vec())));
    let (lf_hat, hf_hat) = model.inverse_with(params, &y_hat_h, &z_hat, &p)?;
    let x_hat = lf_hat.add(&hf_hat)?;
    Ok(RoundTripGraph {
        y_h,
        z,
        y_l,
        y_hat_h,
        x_hat,
        lr_size: (lh, lw),
        scale: realized,
    })
}

/// Bicubic LR reference for the guidance term.
pub fn guidance_reference<T: Real>(x: &Array<T>, lr: (usize, usize)) -> Result<Array<T>> {
    let t = resample_tensor(&Tensor::constant(x.clone()), lr.0, lr.1, ResampleMethod::Bicubic)?;
    Ok(t.value().clone())
}

/// Loss terms and gradients of one round trip, without touching the parameters.
pub fn loss_and_grads<T: Real>(
    model: &Backbone<T>,
    x: &Array<T>,
    scale: ScalePair,
    cfg: &TrainConfig,
    z_hat: Option<Array<T>>,
) -> Result<(LossReport, Vec<Array<T>>)> {
    let params = model.bind(true);
    let g = round_trip_graph(model, &params, x, scale, RoundTrip::from_config(cfg), z_hat)?;
    let x_t = Tensor::constant(x.clone());
    let reference = Tensor::constant(guidance_reference(x, g.lr_size)?);
    let l_r = loss_r(&g.x_hat, &x_t)?;
    let l_g = loss_g(&g.y_l, &reference)?;
    let l_d = loss_d(&g.z);
    let l_i = loss_i(&g.y_hat_h, &g.y_h)?;
    let (total, report) = combine(&cfg.weights, [&l_r, &l_g, &l_d, &l_i])?;
    if !report.is_finite() {
        return Err(Error::NonFinite(format!(
            "loss (total {}, l_r {}, l_g {}, l_d {}, l_i {})",
            report.total, report.l_r, report.l_g, report.l_d, report.l_i
        )));
    }
    total.backward()?;
    Ok((report, params.grads()))
}

/// One optimiser update on `batch` at `scale`.
#[allow(clippy::too_many_arguments)]
pub fn train_step<T: Real>(
    model: &mut Backbone<T>,
    opt: &mut Adam<T>,
    batch: &Array<T>,
    scale: ScalePair,
    cfg: &TrainConfig,
    lr: f64,
    z_hat: Option<Array<T>>,
) -> Result<(LossReport, f64)> {
    let (report, mut grads) = loss_and_grads(model, batch, scale, cfg, z_hat)?;
    let norm = clip_global_norm(&mut grads, cfg.grad_clip);
    if !norm.is_finite() {
        return Err(Error::NonFinite(format!("gradient norm {norm}")));
    }
    opt.step(model.params_mut(), &grads, lr)?;
    Ok((report, norm))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub iteration: u64,
    pub lr: f64,
    pub scale: ScalePair,
    pub loss: LossReport,
    pub grad_norm: f64,
}

impl StepLog {
    /// One loss-log line: iteration, learning rate, total and every term.
    pub fn line(&self) -> String {
        format!(
            "iter {} lr {:.6e} scale {:.4}x{:.4} total {:.6e} l_r {:.6e} l_g {:.6e} l_d {:.6e} l_i {:.6e} grad_norm {:.4e}",
            self.iteration,
            self.lr,
            self.scale.h,
            self.scale.v,
            self.loss.total,
            self.loss.l_r,
            self.loss.l_g,
            self.loss.l_d,
            self.loss.l_i,
            self.grad_norm
        )
    }
}

pub struct Trainer {
    cfg: TrainConfig,
    model: Backbone<f32>,
    opt: Adam<f32>,
    rng: ChaCha8Rng,
    iteration: u64,
}

impl Trainer {
    /// Fresh model initialised from `cfg.seed`.
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let model = Backbone::init(cfg.backbone.clone(), &mut rng)?;
        Ok(Self::resume(cfg, model, rng))
    }

    /// Continues from existing weights with fresh optimiser moments.
    pub fn from_model(cfg: TrainConfig, model: Backbone<f32>) -> Result<Self> {
        cfg.validate()?;
        if cfg.backbone != *model.config() {
            return Err(Error::Config("model does not match the backbone config".into()));
        }
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self::resume(cfg, model, rng))
    }

    fn resume(cfg: TrainConfig, model: Backbone<f32>, rng: ChaCha8Rng) -> Self {
        let opt = Adam::new(model.params());
        Self {
            cfg,
            model,
            opt,
            rng,
            iteration: 0,
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model(&self) -> &Backbone<f32> {
        &self.model
    }

    pub fn into_model(self) -> Backbone<f32> {
        self.model
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Draws a scale whose LR patch keeps both sides at least [`MIN_LR_SIDE`].
    fn draw_scale(&mut self, patch: usize) -> ScalePair {
        loop {
            let s = sample_scale(&mut self.rng, &self.cfg);
            let (lh, lw) = output_size(patch, patch, s, Direction::Down);
            if lh >= MIN_LR_SIDE && lw >= MIN_LR_SIDE {
                return s;
            }
        }
    }

    pub fn step(&mut self, sampler: &PatchSampler) -> Result<StepLog> {
        let scale = self.draw_scale(sampler.patch());
        let batch = sampler.sample(&mut self.rng, self.cfg.batch_size)?;
        let z_hat = match self.cfg.latent {
            LatentMode::Zero => None,
            LatentMode::Gaussian => Some(Array::from_fn(batch.shape().to_vec(), |_| {
                self.rng.sample::<f32, _>(StandardNormal)
            })),
        };
        let iteration = self.iteration;
        let lr = lr_at(iteration, &self.cfg);
        let diverged = |detail: String| Error::Divergence {
            iteration,
            scale_h: scale.h,
            scale_v: scale.v,
            detail,
        };
        let (loss, grad_norm) =
            match train_step(&mut self.model, &mut self.opt, &batch, scale, &self.cfg, lr, z_hat) {
                Ok(r) => r,
                Err(Error::NonFinite(detail)) => return Err(diverged(detail)),
                Err(e) => return Err(e),
            };
        if self.model.params().iter().any(|p| !p.value.all_finite()) {
            return Err(diverged("parameters became non-finite".into()));
        }
        self.iteration += 1;
        Ok(StepLog {
            iteration,
            lr,
            scale,
            loss,
            grad_norm,
        })
    }

    /// Runs `cfg.iterations` steps, writing one log line per step to `log`.
    pub fn run(&mut self, sampler: &PatchSampler, mut log: Option<&mut dyn Write>) -> Result<Vec<StepLog>> {
        let mut history = Vec::with_capacity(self.cfg.iterations as usize);
        while self.iteration < self.cfg.iterations {
            let entry = self.step(sampler)?;
            if let Some(w) = log.as_deref_mut() {
                writeln!(w, "{}", entry.line()).map_err(|e| Error::io("<loss log>", e))?;
            }
            history.push(entry);
        }
        Ok(history)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::BackboneConfig;

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            backbone: BackboneConfig {
                num_blocks: 1,
                atrous_layers: 1,
                feature_width: 4,
                ..BackboneConfig::default()
            },
            batch_size: 2,
            patch_size: 32,
            iterations: 3,
            ..TrainConfig::default()
        }
    }

    fn images() -> Vec<Image> {
        (0..3)
            .map(|k| {
                let data = (0..3 * 40 * 40)
                    .map(|i| ((i * (k + 3)) % 97) as f32 / 96.0)
                    .collect();
                Image::new(3, 40, 40, data).unwrap()
            })
            .collect()
    }

    #[test]
    fn learning_rate_halves() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_at(0, &cfg), 2e-4);
        assert_eq!(lr_at(499, &cfg), 2e-4);
        assert_eq!(lr_at(500, &cfg), 1e-4);
        assert!((lr_at(1500, &cfg) - 2.5e-5).abs() < 1e-18);
    }

    #[test]
    fn scales_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut cfg = TrainConfig::default();
        for _ in 0..10_000 {
            let s = sample_scale(&mut rng, &cfg);
            assert!((1.0..=4.0).contains(&s.h) && s.h == s.v);
        }
        cfg.asymmetric = true;
        let draws: Vec<_> = (0..100).map(|_| sample_scale(&mut rng, &cfg)).collect();
        assert!(draws.iter().any(|s| s.h != s.v));
    }

    #[test]
    fn sampler_rejects_small_images() {
        let img = Image::filled(3, 10, 10, 0.5).unwrap();
        assert!(PatchSampler::new(vec![img], 16, false).is_err());
        assert!(PatchSampler::new(vec![], 16, false).is_err());
    }

    #[test]
    fn same_seed_same_losses() {
        let sampler = PatchSampler::new(images(), 32, true).unwrap();
        let run = || {
            let mut t = Trainer::new(tiny_cfg()).unwrap();
            t.run(&sampler, None).unwrap()
        };
        let (a, b) = (run(), run());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.loss.total.to_bits(), y.loss.total.to_bits());
        }
        assert_eq!(a.len(), 3);
    }

    #[test]
    fn log_lines_carry_every_term() {
        let sampler = PatchSampler::new(images(), 32, false).unwrap();
        let mut t = Trainer::new(tiny_cfg()).unwrap();
        let mut buf = Vec::new();
        t.run(&sampler, Some(&mut buf)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        for key in ["iter 0 ", "lr ", "total ", "l_r ", "l_g ", "l_d ", "l_i "] {
            assert!(text.contains(key), "{key}");
        }
    }
}
