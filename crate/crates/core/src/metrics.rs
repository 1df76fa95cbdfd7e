//! Fidelity metrics: PSNR on RGB or BT.601 luminance, single-scale SSIM.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsnrMode {
    /// BT.601 luma of RGB inputs (the channel itself for gray images).
    YChannel,
    /// Average over all channels.
    Rgb,
}

impl FromStr for PsnrMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "y" | "y_channel" => Ok(Self::YChannel),
            "rgb" => Ok(Self::Rgb),
            other => Err(Error::Config(format!("unknown PSNR mode {other:?}"))),
        }
    }
}

/// BT.601 luma on `[0, 1]`: `(65.481 R + 128.553 G + 24.966 B + 16) / 255`.
pub fn luminance(img: &Image) -> Vec<f64> {
    if img.channels() == 1 {
        return img.data().iter().map(|&v| v as f64).collect();
    }
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    (0..r.len())
        .map(|i| (65.481 * r[i] as f64 + 128.553 * g[i] as f64 + 24.966 * b[i] as f64 + 16.0) / 255.0)
        .collect()
}

fn check_same(a: &Image, b: &Image) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "metric inputs differ: {}x{}x{} vs {}x{}x{}",
            a.channels(),
            a.height(),
            a.width(),
            b.channels(),
            b.height(),
            b.width()
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB for unit peak. Identical inputs give `+inf`.
pub fn psnr(a: &Image, b: &Image, mode: PsnrMode) -> Result<f64> {
    check_same(a, b)?;
    let mse = match mode {
        PsnrMode::Rgb => {
            let sum: f64 = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(x, y)| {
                    let d = *x as f64 - *y as f64;
                    d * d
                })
                .sum();
            sum / a.data().len() as f64
        }
        PsnrMode::YChannel => {
            let (ya, yb) = (luminance(a), luminance(b));
            ya.iter().zip(&yb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / ya.len() as f64
        }
    };
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * mse.log10())
}

/// `inf` for identical images, fixed decimals otherwise.
pub struct Db(pub f64);

impl fmt::Display for Db {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{:.4}", self.0)
        }
    }
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Normalised 1-D Gaussian taps of the SSIM window.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Valid-region separable Gaussian filter of an `h x w` plane.
fn filter_valid(src: &[f64], h: usize, w: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = taps.iter().enumerate().map(|(k, t)| t * src[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(k, t)| t * tmp[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over all fully-covered 11x11 Gaussian windows of the luminance.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_same(a, b)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::DegenerateSize(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let (ya, yb) = (luminance(a), luminance(b));
    let taps = gaussian_window();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mu_a = filter_valid(&ya, h, w, &taps);
    let mu_b = filter_valid(&yb, h, w, &taps);
    let e_aa = filter_valid(&prod(&ya, &ya), h, w, &taps);
    let e_bb = filter_valid(&prod(&yb, &yb), h, w, &taps);
    let e_ab = filter_valid(&prod(&ya, &yb), h, w, &taps);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
        total += num / den;
    }
    Ok(total / mu_a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(h: usize, w: usize, f: impl Fn(usize, usize) -> f32) -> Image {
        let data = (0..h * w).map(|i| f(i / w, i % w)).collect();
        Image::new(1, h, w, data).unwrap()
    }

    #[test]
    fn psnr_of_uniform_offsets() {
        let a = Image::filled(3, 4, 4, 0.5).unwrap();
        let b = Image::filled(3, 4, 4, 0.6).unwrap();
        let c = Image::filled(3, 4, 4, 0.51).unwrap();
        assert!((psnr(&a, &b, PsnrMode::Rgb).unwrap() - 20.0).abs() < 1e-4);
        assert!((psnr(&a, &c, PsnrMode::Rgb).unwrap() - 40.0).abs() < 1e-3);
        assert_eq!(psnr(&a, &a, PsnrMode::YChannel).unwrap(), f64::INFINITY);
        assert_eq!(Db(f64::INFINITY).to_string(), "inf");
    }

    #[test]
    fn psnr_is_symmetric() {
        let a = gray(12, 13, |y, x| ((x * 7 + y * 3) % 11) as f32 / 10.0);
        let b = gray(12, 13, |y, x| ((x * 5 + y * 2) % 9) as f32 / 8.0);
        assert_eq!(psnr(&a, &b, PsnrMode::Rgb).unwrap(), psnr(&b, &a, PsnrMode::Rgb).unwrap());
    }

    #[test]
    fn luma_of_white_and_black() {
        let white = Image::filled(3, 1, 1, 1.0).unwrap();
        let black = Image::filled(3, 1, 1, 0.0).unwrap();
        assert!((luminance(&white)[0] - 235.0 / 255.0).abs() < 1e-12);
        assert!((luminance(&black)[0] - 16.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_identical_is_one() {
        let a = gray(16, 20, |y, x| ((x * 31 + y * 17) % 23) as f32 / 22.0);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ssim_of_inverted_binary_is_negative() {
        let a = gray(16, 16, |y, x| ((x / 2 + y / 3) % 2) as f32);
        let b = gray(16, 16, |y, x| 1.0 - a.get(0, y, x));
        let s = ssim(&a, &b).unwrap();
        assert!(s < 0.0, "{s}");
        assert!((s - ssim(&b, &a).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = Image::filled(1, 8, 20, 0.5).unwrap();
        assert!(ssim(&a, &a).is_err());
    }
}
