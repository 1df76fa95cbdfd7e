//! Arbitrary-scale, possibly asymmetric resampling with a single coordinate
//! convention shared by every kernel.
//!
//! Output pixel `j` samples the source at `(j + 0.5) * in / out - 0.5`
//! (half-pixel centres); source indices are clamped to the valid range.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use iarn_tensor::separable::resample_planes;
use iarn_tensor::{AxisMap, Real, Tensor};

use crate::error::{Error, Result};
use crate::image::Image;

/// Horizontal and vertical scale factors (`> 1` shrinks on the way down).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalePair {
    pub h: f64,
    pub v: f64,
}

impl ScalePair {
    pub fn new(h: f64, v: f64) -> Result<Self> {
        if !(h.is_finite() && v.is_finite() && h > 0.0 && v > 0.0) {
            return Err(Error::InvalidScale(format!("{h}x{v}: factors must be finite and positive")));
        }
        Ok(Self { h, v })
    }

    pub fn uniform(s: f64) -> Result<Self> {
        Self::new(s, s)
    }

    pub fn is_symmetric(&self) -> bool {
        self.h == self.v
    }
}

impl fmt::Display for ScalePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_symmetric() {
            write!(f, "{}", self.h)
        } else {
            write!(f, "{}x{}", self.h, self.v)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResampleMethod {
    Nearest,
    Bilinear,
    Bicubic,
}

impl ResampleMethod {
    pub const ALL: [ResampleMethod; 3] = [Self::Nearest, Self::Bilinear, Self::Bicubic];

    pub fn name(self) -> &'static str {
        match self {
            Self::Nearest => "nearest",
            Self::Bilinear => "bilinear",
            Self::Bicubic => "bicubic",
        }
    }
}

impl fmt::Display for ResampleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ResampleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" | "nn" => Ok(Self::Nearest),
            "bilinear" => Ok(Self::Bilinear),
            "bicubic" => Ok(Self::Bicubic),
            other => Err(Error::Config(format!("unknown resample method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Down,
    Up,
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

/// `(height, width)` after rescaling. Downscaled sides are clamped to at least 1.
pub fn output_size(in_h: usize, in_w: usize, scale: ScalePair, direction: Direction) -> (usize, usize) {
    match direction {
        Direction::Down => (
            round_half_up(in_h as f64 / scale.v).max(1),
            round_half_up(in_w as f64 / scale.h).max(1),
        ),
        Direction::Up => (
            round_half_up(in_h as f64 * scale.v),
            round_half_up(in_w as f64 * scale.h),
        ),
    }
}

/// Scale actually applied between an HR and an LR grid.
pub fn realized_scale(hr_h: usize, hr_w: usize, lr_h: usize, lr_w: usize) -> ScalePair {
    ScalePair {
        h: hr_w as f64 / lr_w as f64,
        v: hr_h as f64 / lr_h as f64,
    }
}

const CUBIC_A: f64 = -0.5;

/// Catmull-Rom cubic convolution kernel (`a = -0.5`).
pub fn bicubic_kernel(t: f64) -> f64 {
    let t = t.abs();
    let a = CUBIC_A;
    if t <= 1.0 {
        (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

/// Source taps and weights for resampling one axis from `in_len` to `out_len`.
pub fn axis_map(in_len: usize, out_len: usize, method: ResampleMethod) -> AxisMap {
    if in_len == out_len {
        return AxisMap::identity(in_len);
    }
    let last = in_len as isize - 1;
    let clamp = |i: isize| i.clamp(0, last) as usize;
    let ratio = in_len as f64 / out_len as f64;
    let (taps, mut index, mut weight) = match method {
        ResampleMethod::Nearest => (1, Vec::with_capacity(out_len), Vec::with_capacity(out_len)),
        ResampleMethod::Bilinear => (2, Vec::with_capacity(2 * out_len), Vec::with_capacity(2 * out_len)),
        ResampleMethod::Bicubic => (4, Vec::with_capacity(4 * out_len), Vec::with_capacity(4 * out_len)),
    };
    for j in 0..out_len {
        match method {
            ResampleMethod::Nearest => {
                // floor(src + 0.5) = floor((2j + 1) * in / (2 * out)), exact in integers
                let i = (2 * j + 1) * in_len / (2 * out_len);
                index.push(i.min(in_len - 1));
                weight.push(1.0);
            }
            ResampleMethod::Bilinear => {
                let src = (j as f64 + 0.5) * ratio - 0.5;
                let i0 = src.floor();
                let f = src - i0;
                let i0 = i0 as isize;
                index.extend([clamp(i0), clamp(i0 + 1)]);
                weight.extend([1.0 - f, f]);
            }
            ResampleMethod::Bicubic => {
                let src = (j as f64 + 0.5) * ratio - 0.5;
                let i0 = src.floor();
                let f = src - i0;
                let i0 = i0 as isize;
                index.extend([clamp(i0 - 1), clamp(i0), clamp(i0 + 1), clamp(i0 + 2)]);
                weight.extend([
                    bicubic_kernel(1.0 + f),
                    bicubic_kernel(f),
                    bicubic_kernel(1.0 - f),
                    bicubic_kernel(2.0 - f),
                ]);
            }
        }
    }
    AxisMap::new(in_len, out_len, taps, index, weight).expect("indices clamped into range")
}

/// Resamples an image to an explicit `out_h x out_w` grid.
pub fn resample_to(img: &Image, out_h: usize, out_w: usize, method: ResampleMethod) -> Result<Image> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::DegenerateSize(format!(
            "resampling {}x{} to {out_w}x{out_h}",
            img.width(),
            img.height()
        )));
    }
    let rows = axis_map(img.height(), out_h, method);
    let cols = axis_map(img.width(), out_w, method);
    let data = resample_planes(img.data(), img.channels(), &rows, &cols);
    Image::new(img.channels(), out_h, out_w, data)
}

/// Resamples by `scale` in the given direction, sizes from [`output_size`].
pub fn resample(img: &Image, scale: ScalePair, direction: Direction, method: ResampleMethod) -> Result<Image> {
    let (h, w) = output_size(img.height(), img.width(), scale, direction);
    resample_to(img, h, w, method)
}

/// Differentiable resampling of a `[N, C, H, W]` tensor to `out_h x out_w`.
pub fn resample_tensor<T: Real>(
    x: &Tensor<T>,
    out_h: usize,
    out_w: usize,
    method: ResampleMethod,
) -> Result<Tensor<T>> {
    let [_, _, h, w] = x.value().dims4("resample")?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::DegenerateSize(format!("resampling {w}x{h} to {out_w}x{out_h}")));
    }
    let rows = Arc::new(axis_map(h, out_h, method));
    let cols = Arc::new(axis_map(w, out_w, method));
    Ok(iarn_tensor::resample(x, rows, cols)?)
}
