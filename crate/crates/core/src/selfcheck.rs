//! Fixed-seed invariant suites bundled into one pass/fail report.

use iarn_tensor::gradcheck::{self, GradReport};
use iarn_tensor::{Array, Real, Tensor, TensorError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backbone::{Backbone, BackboneConfig, BoundParams, EncodingMode};
use crate::checkpoint;
use crate::config::TrainConfig;
use crate::encoding::{crop_consistency_check, encode};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::losses::{combine, loss_d, loss_g, loss_i, loss_r, LossWeights};
use crate::metrics::{psnr, ssim, PsnrMode};
use crate::resample::{axis_map, output_size, Direction, ResampleMethod, ScalePair};
use crate::split::{merge, split};
use crate::trainer::{guidance_reference, round_trip_graph, RoundTrip};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!("[{}] {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Scales exercised by the resampling and encoding suites.
pub const TEST_SCALES: [f64; 7] = [1.0, 1.1, 1.5, 2.0, 2.5, 3.3, 4.0];

/// Tolerances of one precision.
#[derive(Debug, Clone, Copy)]
pub struct Precision {
    pub invertibility: f64,
    pub grad_eps: f64,
    pub grad_tol: f64,
    /// Fraction of coordinates that must fall within `grad_tol`.
    pub grad_fraction: f64,
}

pub const F32: Precision = Precision {
    invertibility: 1e-4,
    grad_eps: 1e-3,
    grad_tol: 1e-3,
    grad_fraction: 0.95,
};

pub const F64: Precision = Precision {
    invertibility: 1e-10,
    grad_eps: 1e-6,
    grad_tol: 1e-5,
    grad_fraction: 1.0,
};

fn uniform_array<T: Real>(rng: &mut ChaCha8Rng, shape: &[usize]) -> Array<T> {
    Array::from_fn(shape.to_vec(), |_| T::of(rng.gen_range(-1.0..1.0)))
}

/// Worst `|inverse(forward(x)) - x|` per encoding mode: random parameters,
/// 4 blocks of width 16, `[1, 3, 16, 16]` branches.
pub fn invertibility<T: Real>(seed: u64) -> Result<Vec<(EncodingMode, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for mode in EncodingMode::ALL {
        let cfg = BackboneConfig {
            num_blocks: 4,
            feature_width: 16,
            encoding_mode: mode,
            ..BackboneConfig::default()
        };
        let net = Backbone::<T>::random(cfg, &mut rng, 1.0)?;
        let lf = uniform_array::<T>(&mut rng, &[1, 3, 16, 16]);
        let hf = uniform_array::<T>(&mut rng, &[1, 3, 16, 16]);
        let field = encode(16, 16, ScalePair::new(2.5, 1.7)?);
        let (y, z) = net.forward(&lf, &hf, &field)?;
        let (a, b) = net.inverse(&y, &z, &field)?;
        let err = a
            .max_abs_diff(&lf)
            .zip(b.max_abs_diff(&hf))
            .map(|(p, q)| p.as_f64().max(q.as_f64()))
            .ok_or_else(|| Error::Shape("inverse changed the branch shapes".into()))?;
        out.push((mode, err));
    }
    Ok(out)
}

/// Whether a zero-parameter backbone returns its inputs bit for bit.
pub fn identity_at_zero(seed: u64) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = BackboneConfig {
        num_blocks: 4,
        feature_width: 16,
        ..BackboneConfig::default()
    };
    let net = Backbone::<f32>::zeros(cfg)?;
    let lf = uniform_array::<f32>(&mut rng, &[2, 3, 9, 13]);
    let hf = uniform_array::<f32>(&mut rng, &[2, 3, 9, 13]);
    let field = encode(9, 13, ScalePair::uniform(3.3)?);
    let (y, z) = net.forward(&lf, &hf, &field)?;
    let (a, b) = net.inverse(&y, &z, &field)?;
    Ok(y == lf && z == hf && a == lf && b == hf)
}

/// Random RGB image with sides in `8..=64`.
pub fn random_image(rng: &mut ChaCha8Rng) -> Result<Image> {
    let h = rng.gen_range(8..=64);
    let w = rng.gen_range(8..=64);
    let data = (0..3 * h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
    Image::new(3, h, w, data)
}

/// The symmetric test scales above 1 plus `asymmetric` random pairs.
pub fn split_scales(rng: &mut ChaCha8Rng, asymmetric: usize) -> Vec<ScalePair> {
    let mut scales: Vec<ScalePair> = [1.3, 1.5, 2.0, 2.5, 3.3, 4.0]
        .iter()
        .map(|&s| ScalePair { h: s, v: s })
        .collect();
    for _ in 0..asymmetric {
        let h = (rng.gen_range(1.1..4.0f64) * 10.0).round() / 10.0;
        let mut v = h;
        while v == h {
            v = (rng.gen_range(1.1..4.0f64) * 10.0).round() / 10.0;
        }
        scales.push(ScalePair { h, v });
    }
    scales
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSummary {
    pub cases: usize,
    pub worst_merge: f64,
    pub idempotence_failures: usize,
}

/// merge(split(x)) error and nearest-neighbour idempotence over random images.
pub fn split_properties(images: usize, asymmetric: usize, seed: u64) -> Result<SplitSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scales = split_scales(&mut rng, asymmetric);
    let mut summary = SplitSummary {
        cases: 0,
        worst_merge: 0.0,
        idempotence_failures: 0,
    };
    for _ in 0..images {
        let x = random_image(&mut rng)?;
        for &scale in &scales {
            let (lh, lw) = output_size(x.height(), x.width(), scale, Direction::Down);
            if lh == 0 || lw == 0 {
                continue;
            }
            summary.cases += 1;
            let method = ResampleMethod::ALL[summary.cases % 3];
            let merged = merge(&split(&x, scale, method)?)?;
            for (a, b) in merged.data().iter().zip(x.data()) {
                summary.worst_merge = summary.worst_merge.max((a - b).abs() as f64);
            }
            let once = split(&x, scale, ResampleMethod::Nearest)?.lf;
            let twice = split(&once, scale, ResampleMethod::Nearest)?.lf;
            if once != twice {
                summary.idempotence_failures += 1;
            }
        }
    }
    Ok(summary)
}

/// Direct search over `i'` of the smallest non-negative `i' * step - i`.
pub fn brute_force_distance(i: usize, step: f64, len: usize) -> f64 {
    let upper = (len as f64 / step).ceil() as usize + 1;
    (0..=upper)
        .map(|k| k as f64 * step - i as f64)
        .filter(|d| *d >= 0.0)
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodingSummary {
    pub fields: usize,
    pub mismatches: usize,
    pub crop_failures: usize,
}

/// Encoding against the brute-force search plus crop consistency, all
/// symmetric test scales crossed with every size up to `max_size`.
pub fn encoding_oracle(max_size: usize) -> Result<EncodingSummary> {
    let mut out = EncodingSummary {
        fields: 0,
        mismatches: 0,
        crop_failures: 0,
    };
    let pairs: Vec<ScalePair> = TEST_SCALES
        .iter()
        .map(|&s| ScalePair { h: s, v: s })
        .chain([ScalePair { h: 2.0, v: 3.3 }, ScalePair { h: 1.5, v: 4.0 }])
        .collect();
    for scale in pairs {
        let full = encode(max_size, max_size, scale);
        for size in 1..=max_size {
            let (h, w) = (size, max_size + 1 - size);
            let f = encode(h, w, scale);
            out.fields += 1;
            for x in 0..w {
                let want = (brute_force_distance(x, scale.h, w) / scale.h) as f32;
                if f.at(2, 0, x).to_bits() != want.to_bits() {
                    out.mismatches += 1;
                }
            }
            for y in 0..h {
                let want = (brute_force_distance(y, scale.v, h) / scale.v) as f32;
                if f.at(3, y, 0).to_bits() != want.to_bits() {
                    out.mismatches += 1;
                }
            }
            if h <= max_size && w <= max_size && !crop_consistency_check(&full, &f)? {
                out.crop_failures += 1;
            }
        }
    }
    Ok(out)
}

fn to_tensor_error(e: crate::error::Error) -> TensorError {
    TensorError::InvalidArgument {
        op: "round trip",
        reason: e.to_string(),
    }
}

fn pipeline_objective<T: Real>(
    model: &Backbone<T>,
    x: &Array<T>,
    tensors: &[Tensor<T>],
    loss: bool,
) -> iarn_tensor::Result<Tensor<T>> {
    let opts = RoundTrip {
        method: ResampleMethod::Bicubic,
        channel_split: true,
    };
    let scale = ScalePair { h: 2.0, v: 2.0 };
    let params = BoundParams::from_tensors(tensors.to_vec());
    let g = round_trip_graph(model, &params, x, scale, opts, None).map_err(to_tensor_error)?;
    if !loss {
        return iarn_tensor::concat_channels(&[&g.x_hat, &g.y_h, &g.z, &g.y_hat_h]);
    }
    let weights = LossWeights {
        distribution: 1.0,
        ..LossWeights::default()
    };
    let x_t = Tensor::constant(x.clone());
    let reference = Tensor::constant(guidance_reference(x, g.lr_size).map_err(to_tensor_error)?);
    let terms = [
        loss_r(&g.x_hat, &x_t).map_err(to_tensor_error)?,
        loss_g(&g.y_l, &reference).map_err(to_tensor_error)?,
        loss_d(&g.z),
        loss_i(&g.y_hat_h, &g.y_h).map_err(to_tensor_error)?,
    ];
    let (total, _) = combine(&weights, [&terms[0], &terms[1], &terms[2], &terms[3]]).map_err(to_tensor_error)?;
    Ok(total)
}

/// Finite differences through a one-block round trip with respect to every
/// parameter of a `[1, 3, 4, 4]` input. With `loss` the probed output is the four-term training loss,
/// otherwise `x_hat`, `y_H`, `z` and `u(d(y_H))` together.
///
/// The reverse sweep runs in `T`; the central differences are evaluated in
/// 64-bit so their own rounding stays far below the tolerance.
pub fn pipeline_gradcheck<T: Real>(eps: f64, tol: f64, seed: u64, loss: bool) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = BackboneConfig {
        num_blocks: 1,
        atrous_layers: 2,
        feature_width: 3,
        ..BackboneConfig::default()
    };
    let model = Backbone::<T>::random(cfg, &mut rng, 3.0)?;
    let wide = model.cast::<f64>();
    let x = Array::from_fn([1, 3, 4, 4], |_| T::of(rng.gen_range(0.0..1.0)));
    let x_wide = x.cast::<f64>();
    let inputs: Vec<Array<T>> = model.params().iter().map(|p| p.value.clone()).collect();
    Ok(gradcheck::check_against(
        &inputs,
        eps,
        tol,
        seed,
        |t| pipeline_objective(&model, &x, t, loss),
        |t| pipeline_objective(&wide, &x_wide, t, loss),
    )?)
}

/// Op suite and end-to-end check merged into one report per precision.
pub fn gradient_checks<T: Real>(p: Precision) -> Result<(GradReport, GradReport)> {
    let ops = gradcheck::op_suite::<T>(p.grad_eps, p.grad_tol)?
        .into_iter()
        .map(|(_, r)| r)
        .reduce(GradReport::merge)
        .expect("non-empty suite");
    let pipeline = pipeline_gradcheck::<T>(p.grad_eps, p.grad_tol, 21, true)?
        .merge(pipeline_gradcheck::<T>(p.grad_eps, p.grad_tol, 22, false)?);
    Ok((ops, pipeline))
}

fn grad_ok(r: &GradReport, p: Precision) -> bool {
    r.fraction_within() >= p.grad_fraction
}

/// Checkpoint round trip is bitwise and a flipped byte is refused.
pub fn checkpoint_checks(seed: u64) -> Result<(bool, bool)> {
    let mut cfg = TrainConfig::default();
    cfg.backbone = BackboneConfig {
        num_blocks: 2,
        atrous_layers: 2,
        feature_width: 4,
        ..BackboneConfig::default()
    };
    let model = Backbone::<f32>::random(cfg.backbone.clone(), &mut ChaCha8Rng::seed_from_u64(seed), 1.0)?;
    let bytes = checkpoint::to_bytes(&cfg, &model)?;
    let (cfg2, model2) = checkpoint::from_bytes(&bytes)?;
    let exact = cfg2 == cfg && checkpoint::to_bytes(&cfg2, &model2)? == bytes;
    let mut corrupt = bytes;
    let mid = corrupt.len() / 2;
    corrupt[mid] ^= 0x01;
    Ok((exact, checkpoint::from_bytes(&corrupt).is_err()))
}

/// PSNR of a uniform 0.1 offset and SSIM of an image against itself.
pub fn metric_checks(seed: u64) -> Result<(f64, f64)> {
    let a = Image::filled(3, 16, 16, 0.4)?;
    let b = Image::filled(3, 16, 16, 0.5)?;
    let x = random_image(&mut ChaCha8Rng::seed_from_u64(seed))?;
    Ok((psnr(&a, &b, PsnrMode::Rgb)?, ssim(&x, &x)?))
}

/// Whether `axis_map` leaves constants unchanged for every method and scale.
fn constants_preserved() -> bool {
    ResampleMethod::ALL.iter().all(|&m| {
        TEST_SCALES.iter().all(|&s| {
            let out = (20.0 / s).round().max(1.0) as usize;
            let map = axis_map(20, out, m);
            (0..out).all(|j| {
                let (_, w) = map.entry(j);
                (w.iter().sum::<f64>() - 1.0).abs() < 1e-12
            })
        })
    })
}

/// Every suite at its fixed seed; `wide` runs numerics in 64-bit precision.
pub fn run_all(wide: bool) -> Vec<CheckOutcome> {
    let prec = if wide { F64 } else { F32 };
    let mut out = Vec::new();
    let mut push = |name: &str, r: Result<(bool, String)>| {
        out.push(match r {
            Ok((passed, detail)) => CheckOutcome::new(name, passed, detail),
            Err(e) => CheckOutcome::new(name, false, format!("error: {e}")),
        })
    };

    push(
        "backbone invertibility",
        (|| {
            let errs = if wide { invertibility::<f64>(1)? } else { invertibility::<f32>(1)? };
            let worst = errs.iter().map(|e| e.1).fold(0.0, f64::max);
            Ok((worst <= prec.invertibility, format!("max error {worst:.3e} (limit {:.0e})", prec.invertibility)))
        })(),
    );
    push(
        "identity at zero",
        identity_at_zero(2).map(|ok| (ok, "bitwise".to_string())),
    );
    push(
        "channel splitting",
        split_properties(12, 4, 3).map(|s| {
            (
                s.worst_merge <= 2f64.powi(-20) && s.idempotence_failures == 0,
                format!(
                    "{} cases, merge error {:.2e}, {} idempotence failures",
                    s.cases, s.worst_merge, s.idempotence_failures
                ),
            )
        }),
    );
    push(
        "resampling weights",
        Ok((constants_preserved(), "taps sum to one".to_string())),
    );
    push(
        "scale encoding oracle",
        encoding_oracle(32).map(|s| {
            (
                s.mismatches == 0 && s.crop_failures == 0,
                format!("{} fields, {} mismatches, {} crop failures", s.fields, s.mismatches, s.crop_failures),
            )
        }),
    );
    push(
        "gradient checks",
        (|| {
            let (ops, pipe) = if wide {
                gradient_checks::<f64>(prec)?
            } else {
                gradient_checks::<f32>(prec)?
            };
            Ok((
                grad_ok(&ops, prec) && grad_ok(&pipe, prec),
                format!(
                    "ops {:.1}% within {:.0e}, pipeline {:.1}% within {:.0e}",
                    ops.fraction_within() * 100.0,
                    prec.grad_tol,
                    pipe.fraction_within() * 100.0,
                    prec.grad_tol
                ),
            ))
        })(),
    );
    push(
        "checkpoint",
        checkpoint_checks(4).map(|(exact, refused)| {
            (
                exact && refused,
                format!(
                    "round trip {}, corrupted CRC {}",
                    if exact { "exact" } else { "differs" },
                    if refused { "refused" } else { "accepted" }
                ),
            )
        }),
    );
    push(
        "metrics",
        metric_checks(5).map(|(p, s)| {
            (
                (p - 20.0).abs() <= 1e-4 && s == 1.0,
                format!("psnr {p:.6} dB, ssim(x, x) {s}"),
            )
        }),
    );
    out
}
