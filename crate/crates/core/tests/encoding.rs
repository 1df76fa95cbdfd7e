//! Encoding field against a direct search over resampled grid positions.

use iarn_core::encoding::{crop_consistency_check, encode, grid_distance};
use iarn_core::resample::ScalePair;
use proptest::prelude::*;

const SCALES: [f64; 7] = [1.0, 1.1, 1.5, 2.0, 2.5, 3.3, 4.0];

/// Smallest non-negative `k * step - i` over `k` in `0..=ceil(len / step) + 1`.
fn oracle(i: usize, step: f64, len: usize) -> f64 {
    let upper = (len as f64 / step).ceil() as usize + 1;
    let mut best = f64::INFINITY;
    for k in 0..=upper {
        let d = k as f64 * step - i as f64;
        if d >= 0.0 && d < best {
            best = d;
        }
    }
    best
}

#[test]
fn matches_search_for_all_listed_scales_and_sizes() {
    for &sh in &SCALES {
        for &sv in &SCALES {
            let scale = ScalePair::new(sh, sv).unwrap();
            for h in [1, 2, 3, 7, 16, 33, 64] {
                for w in 1..=64 {
                    let f = encode(h, w, scale);
                    for y in 0..h {
                        for x in 0..w {
                            assert_eq!(f.at(0, y, x), sh as f32);
                            assert_eq!(f.at(1, y, x), sv as f32);
                            let dh = (oracle(x, sh, w) / sh) as f32;
                            let dv = (oracle(y, sv, h) / sv) as f32;
                            assert_eq!(f.at(2, y, x).to_bits(), dh.to_bits(), "d_h {sh} x={x}");
                            assert_eq!(f.at(3, y, x).to_bits(), dv.to_bits(), "d_v {sv} y={y}");
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn normalised_distances_lie_in_unit_interval() {
    for &s in &SCALES {
        let f = encode(64, 64, ScalePair::uniform(s).unwrap());
        for c in 2..4 {
            for y in 0..64 {
                for x in 0..64 {
                    let v = f.at(c, y, x);
                    assert!((0.0..1.0).contains(&v), "{s}: {v}");
                }
            }
        }
    }
}

#[test]
fn integer_scales_have_periodic_columns() {
    let f = encode(1, 4, ScalePair::uniform(2.0).unwrap());
    let raw: Vec<f64> = (0..4).map(|i| oracle(i, 2.0, 4)).collect();
    assert_eq!(raw, vec![0.0, 1.0, 0.0, 1.0]);
    let norm: Vec<f32> = (0..4).map(|x| f.at(2, 0, x)).collect();
    assert_eq!(norm, vec![0.0, 0.5, 0.0, 0.5]);
    let unit = encode(5, 5, ScalePair::uniform(1.0).unwrap());
    for y in 0..5 {
        for x in 0..5 {
            assert_eq!(unit.at(2, y, x), 0.0);
            assert_eq!(unit.at(3, y, x), 0.0);
        }
    }
}

#[test]
fn crops_agree_with_larger_fields() {
    for &sh in &SCALES {
        for &sv in &[1.5, 3.3] {
            let scale = ScalePair::new(sh, sv).unwrap();
            let large = encode(64, 64, scale);
            for (h, w) in [(1, 1), (4, 4), (13, 29), (64, 17), (64, 64)] {
                assert!(crop_consistency_check(&large, &encode(h, w, scale)).unwrap());
            }
        }
    }
    let a = encode(8, 8, ScalePair::uniform(2.0).unwrap());
    let b = encode(4, 4, ScalePair::uniform(2.5).unwrap());
    assert!(crop_consistency_check(&a, &b).is_err());
}

proptest! {
    #[test]
    fn distance_agrees_with_search(i in 0usize..512, step in 1.0f64..8.0) {
        prop_assert_eq!(grid_distance(i, step).to_bits(), oracle(i, step, i + 1).to_bits());
    }
}
