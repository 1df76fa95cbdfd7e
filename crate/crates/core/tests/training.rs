//! Training loop behaviour on small models.

use iarn_core::backbone::{Backbone, BackboneConfig};
use iarn_core::config::TrainConfig;
use iarn_core::image::{stack, Image};
use iarn_core::optim::Adam;
use iarn_core::resample::{output_size, resample_to, Direction, ResampleMethod, ScalePair};
use iarn_core::synthetic;
use iarn_core::trainer::{loss_and_grads, lr_at, train_step, PatchSampler, Trainer};

fn tiny() -> TrainConfig {
    TrainConfig {
        backbone: BackboneConfig {
            num_blocks: 2,
            atrous_layers: 2,
            feature_width: 8,
            ..BackboneConfig::default()
        },
        batch_size: 2,
        patch_size: 32,
        iterations: 20,
        base_lr: 1e-3,
        lr_halving_period: 10,
        ..TrainConfig::default()
    }
}

fn plain_round_trip(x: &Image, s: ScalePair, m: ResampleMethod) -> Image {
    let (lh, lw) = output_size(x.height(), x.width(), s, Direction::Down);
    let low = resample_to(x, lh, lw, m).unwrap();
    resample_to(&low, x.height(), x.width(), m).unwrap()
}

#[test]
fn identity_start_reconstruction_matches_plain_resampling() {
    let images = synthetic::images(2, 32, 32, 5).unwrap();
    let batch = stack(&images).unwrap();
    for method in [ResampleMethod::Nearest, ResampleMethod::Bilinear] {
        let mut cfg = tiny();
        cfg.method = method;
        let model = Backbone::<f32>::zeros(cfg.backbone.clone()).unwrap();
        let s = ScalePair::uniform(2.5).unwrap();
        let (report, _) = loss_and_grads(&model, &batch, s, &cfg, None).unwrap();
        let mut expected = 0.0f64;
        let mut count = 0usize;
        for x in &images {
            // Identity model: y_H = lf, z = hf, and the inverse returns u(d(lf)) with zero hf.
            let lf = plain_round_trip(x, s, method);
            let back = plain_round_trip(&lf, s, method);
            for (a, b) in back.data().iter().zip(x.data()) {
                expected += (a - b).abs() as f64;
                count += 1;
            }
        }
        expected /= count as f64;
        assert!((report.l_r - expected).abs() < 1e-5, "{method}: {} vs {expected}", report.l_r);
    }
}

#[test]
fn loss_decreases_on_a_fixed_batch() {
    let mut cfg = tiny();
    cfg.method = ResampleMethod::Bicubic;
    let images = synthetic::images(4, 32, 32, 11).unwrap();
    let batch = stack(&images).unwrap();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
    let mut model = Backbone::<f32>::init(cfg.backbone.clone(), &mut rng).unwrap();
    let mut opt = Adam::new(model.params());
    let s = ScalePair::uniform(2.0).unwrap();
    let mut first = None;
    let mut last = 0.0;
    for _ in 0..200 {
        let (report, _) = train_step(&mut model, &mut opt, &batch, s, &cfg, 1e-3, None).unwrap();
        first.get_or_insert(report.total);
        last = report.total;
    }
    let first = first.unwrap();
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn runs_are_deterministic() {
    let sampler = PatchSampler::new(synthetic::images(3, 40, 40, 2).unwrap(), 32, true).unwrap();
    let run = || {
        let mut t = Trainer::new(tiny()).unwrap();
        let log = t.run(&sampler, None).unwrap();
        (log, t.into_model())
    };
    let (log_a, a) = run();
    let (log_b, b) = run();
    assert_eq!(log_a.len(), 20);
    for (x, y) in log_a.iter().zip(&log_b) {
        assert_eq!(x.line(), y.line());
    }
    for (p, q) in a.params().iter().zip(b.params()) {
        assert_eq!(p.value, q.value);
    }
}

#[test]
fn schedule_halves() {
    let cfg = tiny();
    assert_eq!(lr_at(0, &cfg), 1e-3);
    assert_eq!(lr_at(9, &cfg), 1e-3);
    assert_eq!(lr_at(10, &cfg), 5e-4);
    assert_eq!(lr_at(25, &cfg), 2.5e-4);
}

#[test]
fn small_images_are_rejected() {
    assert!(PatchSampler::new(synthetic::images(1, 16, 40, 0).unwrap(), 32, false).is_err());
}
