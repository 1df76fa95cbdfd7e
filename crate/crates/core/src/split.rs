//! Preemptive channel splitting: `lf = u(d(x))`, `hf = x - lf`.

use iarn_tensor::separable::resample_planes;
use iarn_tensor::{Array, Real};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::resample::{axis_map, ResampleMethod, ScalePair};

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub lf: Image,
    pub hf: Image,
    pub scale: ScalePair,
    pub method: ResampleMethod,
}

/// LR grid for splitting; unlike the clamped output size, collapsing to zero is an error.
fn lr_grid(h: usize, w: usize, scale: ScalePair) -> Result<(usize, usize)> {
    let lh = (h as f64 / scale.v + 0.5).floor() as usize;
    let lw = (w as f64 / scale.h + 0.5).floor() as usize;
    if lh == 0 || lw == 0 {
        return Err(Error::DegenerateSize(format!(
            "{w}x{h} image at scale {scale} leaves a {lw}x{lh} low-resolution grid"
        )));
    }
    Ok((lh, lw))
}

/// Down-then-up round trip of every `h x w` plane, back onto the same grid.
pub fn round_trip_planes<T: Real>(
    data: &[T],
    planes: usize,
    (h, w): (usize, usize),
    (lh, lw): (usize, usize),
    method: ResampleMethod,
) -> Vec<T> {
    let low = resample_planes(data, planes, &axis_map(h, lh, method), &axis_map(w, lw, method));
    resample_planes(&low, planes, &axis_map(lh, h, method), &axis_map(lw, w, method))
}

pub fn split(x: &Image, scale: ScalePair, method: ResampleMethod) -> Result<SplitPair> {
    let (h, w) = (x.height(), x.width());
    let lr = lr_grid(h, w, scale)?;
    let lf_data = round_trip_planes(x.data(), x.channels(), (h, w), lr, method);
    let hf_data = x.data().iter().zip(&lf_data).map(|(a, b)| a - b).collect();
    Ok(SplitPair {
        lf: Image::new(x.channels(), h, w, lf_data)?,
        hf: Image::new(x.channels(), h, w, hf_data)?,
        scale,
        method,
    })
}

/// Splitting disabled: the whole image rides the LF branch, HF is zero.
pub fn passthrough(x: &Image, scale: ScalePair, method: ResampleMethod) -> SplitPair {
    SplitPair {
        lf: x.clone(),
        hf: Image::filled(x.channels(), x.height(), x.width(), 0.0).expect("same shape as input"),
        scale,
        method,
    }
}

pub fn merge(pair: &SplitPair) -> Result<Image> {
    if !pair.lf.same_shape(&pair.hf) {
        return Err(Error::Shape(format!(
            "lf {}x{}x{} vs hf {}x{}x{}",
            pair.lf.channels(),
            pair.lf.height(),
            pair.lf.width(),
            pair.hf.channels(),
            pair.hf.height(),
            pair.hf.width()
        )));
    }
    let data = pair.lf.data().iter().zip(pair.hf.data()).map(|(a, b)| a + b).collect();
    Image::new(pair.lf.channels(), pair.lf.height(), pair.lf.width(), data)
}

/// Batch form used by training: `[N, C, H, W]` in, `(lf, hf)` out.
pub fn split_batch<T: Real>(
    x: &Array<T>,
    lr: (usize, usize),
    method: ResampleMethod,
    enabled: bool,
) -> Result<(Array<T>, Array<T>)> {
    let [n, c, h, w] = x.dims4("split")?;
    if !enabled {
        return Ok((x.clone(), Array::zeros(x.shape().to_vec())));
    }
    if lr.0 == 0 || lr.1 == 0 {
        return Err(Error::DegenerateSize(format!("{w}x{h} batch split onto a {}x{} grid", lr.1, lr.0)));
    }
    let lf = round_trip_planes(x.data(), n * c, (h, w), lr, method);
    let hf = x.data().iter().zip(&lf).map(|(a, b)| *a - *b).collect();
    Ok((Array::new(x.shape().to_vec(), lf)?, Array::new(x.shape().to_vec(), hf)?))
}
