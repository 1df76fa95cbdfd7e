//! Channel splitting: exact recombination and nearest-neighbour idempotence.

use iarn_core::image::Image;
use iarn_core::resample::{ResampleMethod, ScalePair};
use iarn_core::split::{merge, split};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(rng: &mut ChaCha8Rng) -> Image {
    let h = rng.gen_range(8..=64);
    let w = rng.gen_range(8..=64);
    Image::new(3, h, w, (0..3 * h * w).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
}

fn scales(rng: &mut ChaCha8Rng) -> Vec<ScalePair> {
    let mut out: Vec<ScalePair> = [1.3, 1.5, 2.0, 2.5, 3.3, 4.0]
        .iter()
        .map(|&s| ScalePair::uniform(s).unwrap())
        .collect();
    while out.len() < 16 {
        let h: f64 = rng.gen_range(1.1..4.0);
        let v: f64 = rng.gen_range(1.1..4.0);
        out.push(ScalePair::new(h, v).unwrap());
    }
    out
}

#[test]
fn merge_restores_the_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let scales = scales(&mut rng);
    let tol = 2f32.powi(-20);
    for _ in 0..100 {
        let x = random_image(&mut rng);
        for &s in &scales {
            for m in ResampleMethod::ALL {
                let merged = merge(&split(&x, s, m).unwrap()).unwrap();
                for (a, b) in merged.data().iter().zip(x.data()) {
                    assert!((a - b).abs() <= tol);
                }
            }
        }
    }
}

#[test]
fn nearest_lf_is_a_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let scales = scales(&mut rng);
    for _ in 0..100 {
        let x = random_image(&mut rng);
        for &s in &scales {
            let once = split(&x, s, ResampleMethod::Nearest).unwrap().lf;
            let twice = split(&once, s, ResampleMethod::Nearest).unwrap();
            assert_eq!(twice.lf, once);
            assert!(twice.hf.data().iter().all(|&v| v == 0.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hf_of_lf_content_is_small_for_smooth_methods(v in 0.0f32..1.0, h in 8usize..32, w in 8usize..32, s in 1.1f64..4.0) {
        let x = Image::filled(3, h, w, v).unwrap();
        for m in ResampleMethod::ALL {
            let p = split(&x, ScalePair::uniform(s).unwrap(), m).unwrap();
            prop_assert!(p.hf.data().iter().all(|d| d.abs() < 1e-6));
        }
    }
}
