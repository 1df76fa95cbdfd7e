//! Scale argument grammar and dataset evaluation sweeps.
//!
//! A scale is `2.5` (both axes) or `2.0x3.0` (horizontal x vertical). A list
//! is comma-separated and may contain sweeps `lo:hi:step`, endpoints included.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::{psnr, ssim, PsnrMode};
use crate::pipeline::{bicubic_round_trip, Rescaler};
use crate::resample::ScalePair;

/// Largest inference scale accepted on the command line.
pub const MAX_INFERENCE_SCALE: f64 = 8.0;

fn number(s: &str, whole: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::InvalidScale(format!("cannot parse {whole:?}")))
}

pub fn parse_scale(s: &str) -> Result<ScalePair> {
    let lower = s.trim().to_ascii_lowercase();
    match lower.split_once('x') {
        Some((h, v)) => ScalePair::new(number(h, s)?, number(v, s)?),
        None => ScalePair::uniform(number(&lower, s)?),
    }
}

/// Rounds away binary noise so `1.1 + 3 * 0.1` prints as `1.4`.
fn tidy(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

fn parse_sweep(item: &str) -> Result<Vec<ScalePair>> {
    let parts: Vec<&str> = item.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidScale(format!("sweep {item:?} must be lo:hi:step")));
    }
    let (lo, hi, step) = (number(parts[0], item)?, number(parts[1], item)?, number(parts[2], item)?);
    if !(step > 0.0 && hi >= lo) {
        return Err(Error::InvalidScale(format!("sweep {item:?} needs lo <= hi and a positive step")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..count)
        .map(|i| ScalePair::uniform(tidy(lo + i as f64 * step)))
        .collect()
}

pub fn parse_scale_list(s: &str) -> Result<Vec<ScalePair>> {
    let mut out = Vec::new();
    for item in s.split(',') {
        let item = item.trim();
        if item.is_empty() {
            return Err(Error::InvalidScale(format!("empty entry in {s:?}")));
        }
        if item.contains(':') {
            out.extend(parse_sweep(item)?);
        } else {
            out.push(parse_scale(item)?);
        }
    }
    Ok(out)
}

/// Inference scales must lie in `(1, 8]` on both axes.
pub fn check_inference_scale(s: ScalePair) -> Result<ScalePair> {
    for v in [s.h, s.v] {
        if !(v > 1.0 && v <= MAX_INFERENCE_SCALE) {
            return Err(Error::InvalidScale(format!(
                "{s}: factors must lie in (1, {MAX_INFERENCE_SCALE}]"
            )));
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRow {
    pub scale: ScalePair,
    pub psnr_y: f64,
    pub psnr_rgb: f64,
    pub ssim: f64,
    pub base_psnr_y: f64,
    pub base_ssim: f64,
}

pub const CSV_HEADER: &str = "scale_h,scale_v,psnr_y,psnr_rgb,ssim,base_psnr_y,base_ssim";

impl EvalRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{:.4},{:.4},{:.6},{:.4},{:.6}",
            self.scale.h, self.scale.v, self.psnr_y, self.psnr_rgb, self.ssim, self.base_psnr_y, self.base_ssim
        )
    }
}

pub fn to_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv());
        out.push('\n');
    }
    out
}

pub fn to_table(rows: &[EvalRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>11}  {:>9}  {:>9}  {:>7}  {:>11}  {:>9}",
        "scale", "psnr_y", "psnr_rgb", "ssim", "base_psnr_y", "base_ssim"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:>11}  {:>9}  {:>9}  {:>7.4}  {:>11}  {:>9.4}",
            r.scale.to_string(),
            crate::metrics::Db(r.psnr_y).to_string(),
            crate::metrics::Db(r.psnr_rgb).to_string(),
            r.ssim,
            crate::metrics::Db(r.base_psnr_y).to_string(),
            r.base_ssim
        );
    }
    out
}

/// Mean metrics of the model round trip and the bicubic baseline per scale.
///
/// Both LR images are quantised to 8 bits and both restorations are
/// clamped and quantised before scoring, as if read back from disk.
pub fn evaluate(rescaler: &Rescaler, images: &[Image], scales: &[ScalePair]) -> Result<Vec<EvalRow>> {
    if images.is_empty() {
        return Err(Error::Dataset("nothing to evaluate".into()));
    }
    let n = images.len() as f64;
    let mut rows = Vec::with_capacity(scales.len());
    for &scale in scales {
        let mut acc = [0.0f64; 5];
        for x in images {
            let x = x.to_rgb();
            let (_, restored) = rescaler.round_trip(&x, scale, true)?;
            let restored = restored.quantized();
            let base = bicubic_round_trip(&x, scale, true)?.quantized();
            acc[0] += psnr(&restored, &x, PsnrMode::YChannel)?;
            acc[1] += psnr(&restored, &x, PsnrMode::Rgb)?;
            acc[2] += ssim(&restored, &x)?;
            acc[3] += psnr(&base, &x, PsnrMode::YChannel)?;
            acc[4] += ssim(&base, &x)?;
        }
        rows.push(EvalRow {
            scale,
            psnr_y: acc[0] / n,
            psnr_rgb: acc[1] / n,
            ssim: acc[2] / n,
            base_psnr_y: acc[3] / n,
            base_ssim: acc[4] / n,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_grammar() {
        assert_eq!(parse_scale("2.5").unwrap(), ScalePair::uniform(2.5).unwrap());
        assert_eq!(parse_scale("2.0x3.0").unwrap(), ScalePair::new(2.0, 3.0).unwrap());
        for bad in ["", "x", "2x", "abc", "2.0x3.0x4.0", "nan", "-1"] {
            assert!(parse_scale(bad).is_err(), "{bad:?}");
        }
        assert_eq!(parse_scale("abc").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn lists_and_sweeps() {
        assert_eq!(parse_scale_list("1.5,2.5,3.5").unwrap().len(), 3);
        let sweep = parse_scale_list("1.1:4.0:0.1").unwrap();
        assert_eq!(sweep.len(), 30);
        assert_eq!(sweep[3].h, 1.4);
        assert_eq!(sweep[29].h, 4.0);
        assert_eq!(parse_scale_list("2:2:0.5").unwrap().len(), 1);
        assert_eq!(parse_scale_list("2,1.5:2:0.25,2x3").unwrap().len(), 5);
        assert!(parse_scale_list("1:2:0").is_err());
        assert!(parse_scale_list("3:2:0.5").is_err());
        assert!(parse_scale_list("1,,2").is_err());
    }

    #[test]
    fn inference_range() {
        assert!(check_inference_scale(ScalePair::uniform(8.0).unwrap()).is_ok());
        assert!(check_inference_scale(ScalePair::uniform(1.0).unwrap()).is_err());
        assert!(check_inference_scale(ScalePair::new(2.0, 8.5).unwrap()).is_err());
    }

    #[test]
    fn csv_shape() {
        let row = EvalRow {
            scale: ScalePair::new(2.0, 3.0).unwrap(),
            psnr_y: 30.0,
            psnr_rgb: 29.0,
            ssim: 0.9,
            base_psnr_y: 28.0,
            base_ssim: 0.8,
        };
        let csv = to_csv(&[row, row]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("2,3,30.0000,"));
    }
}
