//! Backbone inverse undoes the forward pass for random parameters.

use iarn_core::backbone::{Backbone, BackboneConfig, EncodingMode};
use iarn_core::encoding::encode;
use iarn_core::resample::ScalePair;
use iarn_tensor::{Array, Real};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn worst_error<T: Real>(blocks: usize, mode: EncodingMode, use_atrous: bool, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = BackboneConfig {
        num_blocks: blocks,
        feature_width: 16,
        encoding_mode: mode,
        use_atrous,
        ..BackboneConfig::default()
    };
    let net = Backbone::<T>::random(cfg, &mut rng, 1.0).unwrap();
    let mut arr = |shape: [usize; 4]| Array::from_fn(shape, |_| T::of(rng.gen_range(-1.0..1.0)));
    let lf = arr([2, 3, 16, 16]);
    let hf = arr([2, 3, 16, 16]);
    let field = encode(16, 16, ScalePair::new(3.3, 1.5).unwrap());
    let (y, z) = net.forward(&lf, &hf, &field).unwrap();
    let (a, b) = net.inverse(&y, &z, &field).unwrap();
    a.max_abs_diff(&lf).unwrap().as_f64().max(b.max_abs_diff(&hf).unwrap().as_f64())
}

#[test]
fn single_precision() {
    for blocks in [1, 4, 8] {
        for mode in EncodingMode::ALL {
            let e = worst_error::<f32>(blocks, mode, true, blocks as u64);
            assert!(e <= 1e-4, "{blocks} blocks, {mode}: {e:e}");
        }
    }
    assert!(worst_error::<f32>(4, EncodingMode::Dual, false, 9) <= 1e-4);
}

#[test]
fn double_precision() {
    for blocks in [1, 4, 8] {
        for mode in EncodingMode::ALL {
            let e = worst_error::<f64>(blocks, mode, true, blocks as u64);
            assert!(e <= 1e-10, "{blocks} blocks, {mode}: {e:e}");
        }
    }
}

#[test]
fn encoding_changes_the_output_when_used() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = Backbone::<f32>::random(
        BackboneConfig {
            num_blocks: 2,
            feature_width: 4,
            ..BackboneConfig::default()
        },
        &mut rng,
        1.0,
    )
    .unwrap();
    let lf = Array::from_fn([1, 3, 8, 8], |_| rng.gen_range(-1.0..1.0));
    let hf = Array::from_fn([1, 3, 8, 8], |_| rng.gen_range(-1.0..1.0));
    let a = net.forward(&lf, &hf, &encode(8, 8, ScalePair::uniform(2.0).unwrap())).unwrap();
    let b = net.forward(&lf, &hf, &encode(8, 8, ScalePair::uniform(3.0).unwrap())).unwrap();
    assert_ne!(a.0, b.0);
}
