//! Separable linear resampling along the two spatial axes.
//!
//! An [`AxisMap`] lists, for every output position along one axis, a fixed
//! number of source indices and weights. Applying one map per axis covers
//! nearest, bilinear and cubic interpolation; the transpose of the same maps
//! gives the gradient.

use std::sync::Arc;

use crate::array::Array;
use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::{Backward, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct AxisMap {
    in_len: usize,
    out_len: usize,
    taps: usize,
    index: Vec<usize>,
    weight: Vec<f64>,
}

impl AxisMap {
    pub fn new(in_len: usize, out_len: usize, taps: usize, index: Vec<usize>, weight: Vec<f64>) -> Result<Self> {
        if taps == 0 || index.len() != out_len * taps || weight.len() != out_len * taps {
            return Err(TensorError::InvalidArgument {
                op: "AxisMap",
                reason: format!(
                    "{} indices / {} weights for {out_len} outputs x {taps} taps",
                    index.len(),
                    weight.len()
                ),
            });
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= in_len) {
            return Err(TensorError::InvalidArgument {
                op: "AxisMap",
                reason: format!("source index {bad} outside 0..{in_len}"),
            });
        }
        Ok(Self {
            in_len,
            out_len,
            taps,
            index,
            weight,
        })
    }

    pub fn identity(len: usize) -> Self {
        Self {
            in_len: len,
            out_len: len,
            taps: 1,
            index: (0..len).collect(),
            weight: vec![1.0; len],
        }
    }

    pub fn in_len(&self) -> usize {
        self.in_len
    }

    pub fn out_len(&self) -> usize {
        self.out_len
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    /// Source indices and weights feeding output position `j`.
    pub fn entry(&self, j: usize) -> (&[usize], &[f64]) {
        let r = j * self.taps..(j + 1) * self.taps;
        (&self.index[r.clone()], &self.weight[r])
    }

    /// Applies the map along a strided line: `dst[j*ds] = sum_t w * src[idx*ss]`.
    #[inline]
    fn apply_line<T: Real>(&self, src: &[T], ss: usize, dst: &mut [T], ds: usize) {
        if self.taps == 1 {
            for j in 0..self.out_len {
                dst[j * ds] = src[self.index[j] * ss] * T::of(self.weight[j]);
            }
            return;
        }
        for j in 0..self.out_len {
            let (idx, wts) = self.entry(j);
            let mut acc = T::zero();
            for (&i, &wt) in idx.iter().zip(wts) {
                acc += src[i * ss] * T::of(wt);
            }
            dst[j * ds] = acc;
        }
    }

    #[inline]
    fn apply_line_transpose<T: Real>(&self, g: &[T], gs: usize, dst: &mut [T], ds: usize) {
        for j in 0..self.out_len {
            let gv = g[j * gs];
            let (idx, wts) = self.entry(j);
            for (&i, &wt) in idx.iter().zip(wts) {
                dst[i * ds] += gv * T::of(wt);
            }
        }
    }
}

/// Resamples `planes` stacked `h x w` planes: horizontal pass, then vertical.
pub fn resample_planes<T: Real>(src: &[T], planes: usize, rows: &AxisMap, cols: &AxisMap) -> Vec<T> {
    let (h, w) = (rows.in_len, cols.in_len);
    let (oh, ow) = (rows.out_len, cols.out_len);
    assert_eq!(src.len(), planes * h * w, "resample_planes: buffer size");
    let mut tmp = vec![T::zero(); h * ow];
    let mut out = vec![T::zero(); planes * oh * ow];
    for p in 0..planes {
        let plane = &src[p * h * w..(p + 1) * h * w];
        for y in 0..h {
            cols.apply_line(&plane[y * w..(y + 1) * w], 1, &mut tmp[y * ow..(y + 1) * ow], 1);
        }
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for x in 0..ow {
            rows.apply_line(&tmp[x..], ow, &mut dst[x..], ow);
        }
    }
    out
}

/// Adjoint of [`resample_planes`].
pub fn resample_planes_transpose<T: Real>(grad: &[T], planes: usize, rows: &AxisMap, cols: &AxisMap) -> Vec<T> {
    let (h, w) = (rows.in_len, cols.in_len);
    let (oh, ow) = (rows.out_len, cols.out_len);
    assert_eq!(grad.len(), planes * oh * ow, "resample_planes_transpose: buffer size");
    let mut out = vec![T::zero(); planes * h * w];
    let mut tmp = vec![T::zero(); h * ow];
    for p in 0..planes {
        tmp.fill(T::zero());
        let g = &grad[p * oh * ow..(p + 1) * oh * ow];
        for x in 0..ow {
            rows.apply_line_transpose(&g[x..], ow, &mut tmp[x..], ow);
        }
        let dst = &mut out[p * h * w..(p + 1) * h * w];
        for y in 0..h {
            cols.apply_line_transpose(&tmp[y * ow..(y + 1) * ow], 1, &mut dst[y * w..(y + 1) * w], 1);
        }
    }
    out
}

struct SeparableRule {
    rows: Arc<AxisMap>,
    cols: Arc<AxisMap>,
}

impl<T: Real> Backward<T> for SeparableRule {
    fn backward(&self, parents: &[Tensor<T>], _: &Array<T>, grad: &Array<T>, _: &[bool]) -> Vec<Option<Array<T>>> {
        let shape = parents[0].shape().to_vec();
        let planes = shape[0] * shape[1];
        let g = resample_planes_transpose(grad.data(), planes, &self.rows, &self.cols);
        vec![Some(Array::new(shape, g).expect("input shape"))]
    }
}

/// Differentiable separable resampling of a `[N, C, H, W]` tensor.
pub fn resample<T: Real>(input: &Tensor<T>, rows: Arc<AxisMap>, cols: Arc<AxisMap>) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.value().dims4("resample")?;
    if rows.in_len != h {
        return Err(TensorError::ShapeMismatch {
            op: "resample",
            dim: 2,
            expected: rows.in_len,
            found: h,
        });
    }
    if cols.in_len != w {
        return Err(TensorError::ShapeMismatch {
            op: "resample",
            dim: 3,
            expected: cols.in_len,
            found: w,
        });
    }
    let data = resample_planes(input.data(), n * c, &rows, &cols);
    let value = Array::new([n, c, rows.out_len, cols.out_len], data)?;
    Ok(Tensor::from_op(value, vec![input.clone()], SeparableRule { rows, cols }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_map_is_exact() {
        let src: Vec<f32> = (0..12).map(|v| v as f32 * 0.1).collect();
        let out = resample_planes(&src, 1, &AxisMap::identity(3), &AxisMap::identity(4));
        assert_eq!(out, src);
    }

    #[test]
    fn map_rejects_out_of_range_index() {
        assert!(AxisMap::new(2, 1, 1, vec![2], vec![1.0]).is_err());
        assert!(AxisMap::new(2, 2, 1, vec![0], vec![1.0]).is_err());
    }

    #[test]
    fn transpose_is_adjoint() {
        // <A x, y> == <x, A^T y>
        let rows = AxisMap::new(3, 2, 2, vec![0, 1, 1, 2], vec![0.25, 0.75, 0.6, 0.4]).unwrap();
        let cols = AxisMap::new(4, 3, 2, vec![0, 1, 1, 2, 3, 3], vec![0.5, 0.5, 0.1, 0.9, 1.0, 0.0]).unwrap();
        let x: Vec<f64> = (0..24).map(|v| ((v * 7) % 11) as f64 - 5.0).collect();
        let y: Vec<f64> = (0..12).map(|v| ((v * 5) % 7) as f64 - 3.0).collect();
        let ax = resample_planes(&x, 2, &rows, &cols);
        let aty = resample_planes_transpose(&y, 2, &rows, &cols);
        let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
