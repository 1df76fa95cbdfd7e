//! Resampling properties against direct per-pixel evaluation.

use iarn_core::image::Image;
use iarn_core::resample::{axis_map, bicubic_kernel, output_size, resample, resample_to, Direction, ResampleMethod, ScalePair};
use proptest::prelude::*;

fn image_strategy() -> impl Strategy<Value = Image> {
    (1usize..=3, 1usize..=24, 1usize..=24).prop_flat_map(|(c, h, w)| {
        let c = if c == 2 { 3 } else { c };
        proptest::collection::vec(0.0f32..1.0, c * h * w).prop_map(move |d| Image::new(c, h, w, d).unwrap())
    })
}

fn method_strategy() -> impl Strategy<Value = ResampleMethod> {
    prop_oneof![
        Just(ResampleMethod::Nearest),
        Just(ResampleMethod::Bilinear),
        Just(ResampleMethod::Bicubic)
    ]
}

/// Output sample `(y, x)` from the continuous half-pixel mapping, no tables.
fn direct_sample(img: &Image, c: usize, oy: usize, ox: usize, oh: usize, ow: usize, m: ResampleMethod) -> f64 {
    let axis = |j: usize, out: usize, inp: usize| -> Vec<(usize, f64)> {
        let src = (j as f64 + 0.5) * inp as f64 / out as f64 - 0.5;
        let clamp = |i: i64| i.clamp(0, inp as i64 - 1) as usize;
        match m {
            ResampleMethod::Nearest => vec![(((2 * j + 1) * inp / (2 * out)).min(inp - 1), 1.0)],
            ResampleMethod::Bilinear => {
                let f = src.floor();
                let t = src - f;
                vec![(clamp(f as i64), 1.0 - t), (clamp(f as i64 + 1), t)]
            }
            ResampleMethod::Bicubic => {
                let f = src.floor();
                (-1..=2).map(|k| (clamp(f as i64 + k), bicubic_kernel(src - (f + k as f64)))).collect()
            }
        }
    };
    let rows = axis(oy, oh, img.height());
    let cols = axis(ox, ow, img.width());
    let mut acc = 0.0;
    for &(r, wr) in &rows {
        for &(q, wq) in &cols {
            acc += wr * wq * img.get(c, r, q) as f64;
        }
    }
    acc
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_direct_evaluation(img in image_strategy(), oh in 1usize..30, ow in 1usize..30, m in method_strategy()) {
        let out = resample_to(&img, oh, ow, m).unwrap();
        for c in 0..img.channels() {
            for y in 0..oh {
                for x in 0..ow {
                    let want = direct_sample(&img, c, y, x, oh, ow, m);
                    prop_assert!((out.get(c, y, x) as f64 - want).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn nearest_round_trip_is_idempotent(img in image_strategy(), sh in 1.0f64..4.5, sv in 1.0f64..4.5) {
        let scale = ScalePair::new(sh, sv).unwrap();
        let (lh, lw) = output_size(img.height(), img.width(), scale, Direction::Down);
        let s = |x: &Image| {
            let low = resample_to(x, lh, lw, ResampleMethod::Nearest).unwrap();
            resample_to(&low, x.height(), x.width(), ResampleMethod::Nearest).unwrap()
        };
        let once = s(&img);
        prop_assert_eq!(s(&once), once);
    }

    #[test]
    fn constants_are_fixed_points(v in 0.0f32..1.0, h in 1usize..20, w in 1usize..20, s in 1.0f64..4.0, m in method_strategy()) {
        let img = Image::filled(3, h, w, v).unwrap();
        for dir in [Direction::Down, Direction::Up] {
            let out = resample(&img, ScalePair::uniform(s).unwrap(), dir, m).unwrap();
            prop_assert!(out.data().iter().all(|o| (o - v).abs() < 1e-6));
        }
    }

    #[test]
    fn separable_passes_commute(img in image_strategy(), oh in 1usize..30, ow in 1usize..30, m in method_strategy()) {
        let both = resample_to(&img, oh, ow, m).unwrap();
        let rows_first = resample_to(&resample_to(&img, oh, img.width(), m).unwrap(), oh, ow, m).unwrap();
        let cols_first = resample_to(&resample_to(&img, img.height(), ow, m).unwrap(), oh, ow, m).unwrap();
        for ((a, b), c) in both.data().iter().zip(rows_first.data()).zip(cols_first.data()) {
            prop_assert!((a - b).abs() < 1e-5 && (a - c).abs() < 1e-5);
        }
    }
}

#[test]
fn same_size_is_identity() {
    let img = Image::new(1, 2, 3, vec![0.1, 0.9, 0.4, 0.3, 0.7, 0.2]).unwrap();
    for m in ResampleMethod::ALL {
        assert_eq!(resample_to(&img, 2, 3, m).unwrap(), img);
        let map = axis_map(3, 3, m);
        assert_eq!(map.taps(), 1);
    }
}

#[test]
fn size_rule_examples() {
    let s = |v| ScalePair::uniform(v).unwrap();
    assert_eq!(output_size(100, 100, s(2.5), Direction::Down), (40, 40));
    assert_eq!(output_size(40, 40, s(2.5), Direction::Up), (100, 100));
    assert_eq!(output_size(5, 7, s(2.0), Direction::Down), (3, 4));
    assert_eq!(output_size(1, 1, s(4.0), Direction::Down), (1, 1));
    assert_eq!(output_size(30, 20, ScalePair::new(2.0, 3.0).unwrap(), Direction::Down), (10, 10));
}
