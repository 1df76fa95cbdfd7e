//! Position-aware scale encoding.
//!
//! For every HR pixel the field stores the two scale factors and the distance
//! (in HR pixel units, input pixel size 1) from the pixel to the nearest
//! resampled pixel boundary at or after it, per axis. Distances are divided by
//! the resampled pixel size so they lie in `[0, 1)`.

use iarn_tensor::{Array, Real, Tensor};

use crate::error::{Error, Result};
use crate::resample::ScalePair;

pub const ENCODING_CHANNELS: usize = 4;

/// `[4, H, W]`: `s_h`, `s_v`, normalised `d_h`, normalised `d_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleEncodingField {
    scale: ScalePair,
    values: Array<f32>,
}

/// Smallest non-negative `k * step - index` over integer `k`.
///
/// Starts from `ceil(index / step)` and corrects for rounding in the division
/// so the result agrees with a direct search over `k`.
pub fn grid_distance(index: usize, step: f64) -> f64 {
    let i = index as f64;
    let mut k = (i / step).ceil();
    while k > 0.0 && (k - 1.0) * step - i >= 0.0 {
        k -= 1.0;
    }
    while k * step - i < 0.0 {
        k += 1.0;
    }
    k * step - i
}

impl ScaleEncodingField {
    pub fn scale(&self) -> ScalePair {
        self.scale
    }

    pub fn height(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn values(&self) -> &Array<f32> {
        &self.values
    }

    pub fn at(&self, channel: usize, y: usize, x: usize) -> f32 {
        self.values.data()[(channel * self.height() + y) * self.width() + x]
    }

    /// Untracked `[n, 4, H, W]` tensor for conditioning a batch.
    pub fn to_tensor<T: Real>(&self, n: usize) -> Tensor<T> {
        let single = self.values.cast::<T>();
        let mut data = Vec::with_capacity(n * single.numel());
        for _ in 0..n {
            data.extend_from_slice(single.data());
        }
        let [_, h, w] = [ENCODING_CHANNELS, self.height(), self.width()];
        Tensor::constant(Array::new([n, ENCODING_CHANNELS, h, w], data).expect("shape consistent"))
    }
}

/// Encoding field for an `h x w` HR grid rescaled by `scale`.
pub fn encode(h: usize, w: usize, scale: ScalePair) -> ScaleEncodingField {
    let col: Vec<f32> = (0..w).map(|i| (grid_distance(i, scale.h) / scale.h) as f32).collect();
    let row: Vec<f32> = (0..h).map(|j| (grid_distance(j, scale.v) / scale.v) as f32).collect();
    let plane = h * w;
    let mut data = Vec::with_capacity(ENCODING_CHANNELS * plane);
    data.extend(std::iter::repeat(scale.h as f32).take(plane));
    data.extend(std::iter::repeat(scale.v as f32).take(plane));
    for _ in 0..h {
        data.extend_from_slice(&col);
    }
    for &d in &row {
        data.extend(std::iter::repeat(d).take(w));
    }
    ScaleEncodingField {
        scale,
        values: Array::new([ENCODING_CHANNELS, h, w], data).expect("shape consistent"),
    }
}

/// Whether `small` equals the top-left corner of `large`, value for value.
pub fn crop_consistency_check(large: &ScaleEncodingField, small: &ScaleEncodingField) -> Result<bool> {
    if large.scale != small.scale {
        return Err(Error::InvalidScale(format!(
            "fields encode different scales ({} vs {})",
            large.scale, small.scale
        )));
    }
    if small.height() > large.height() || small.width() > large.width() {
        return Err(Error::Shape(format!(
            "{}x{} field is not a crop of {}x{}",
            small.width(),
            small.height(),
            large.width(),
            large.height()
        )));
    }
    for c in 0..ENCODING_CHANNELS {
        for y in 0..small.height() {
            for x in 0..small.width() {
                if small.at(c, y, x).to_bits() != large.at(c, y, x).to_bits() {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> ScalePair {
        ScalePair::uniform(v).unwrap()
    }

    #[test]
    fn scale_two_columns() {
        let raw: Vec<f64> = (0..4).map(|i| grid_distance(i, 2.0)).collect();
        assert_eq!(raw, vec![0.0, 1.0, 0.0, 1.0]);
        let f = encode(1, 4, s(2.0));
        let norm: Vec<f32> = (0..4).map(|x| f.at(2, 0, x)).collect();
        assert_eq!(norm, vec![0.0, 0.5, 0.0, 0.5]);
    }

    #[test]
    fn scale_two_and_a_half_columns() {
        let raw: Vec<f64> = (0..5).map(|i| grid_distance(i, 2.5)).collect();
        assert_eq!(raw, vec![0.0, 1.5, 0.5, 2.0, 1.0]);
    }

    #[test]
    fn unit_scale_has_zero_distances() {
        let f = encode(5, 6, s(1.0));
        for y in 0..5 {
            for x in 0..6 {
                assert_eq!(f.at(2, y, x), 0.0);
                assert_eq!(f.at(3, y, x), 0.0);
                assert_eq!(f.at(0, y, x), 1.0);
            }
        }
    }

    #[test]
    fn crop_check_rejects_scale_mismatch() {
        assert!(crop_consistency_check(&encode(8, 8, s(2.0)), &encode(4, 4, s(3.0))).is_err());
        assert!(crop_consistency_check(&encode(8, 8, s(2.0)), &encode(4, 4, s(2.0))).unwrap());
    }
}
