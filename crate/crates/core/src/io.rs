//! 8-bit PNG and binary PPM/PGM reading and writing.

use std::path::{Path, PathBuf};

use image::{DynamicImage, ExtendedColorType, ImageFormat};

use crate::error::{Error, Result};
use crate::image::{ColorSpace, Image};

const EXTENSIONS: [&str; 4] = ["png", "ppm", "pgm", "pnm"];

fn extension(path: &Path) -> Option<String> {
    path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase)
}

pub fn is_supported(path: &Path) -> bool {
    extension(path).is_some_and(|e| EXTENSIONS.contains(&e.as_str()))
}

fn image_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn read_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => image_error(path, other.to_string()),
    }
}

/// Decodes an 8-bit gray or RGB image into `[0, 1]` values.
pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = image::load_from_memory(&bytes).map_err(|e| read_error(path, e))?;
    let (channels, w, h, raw) = match decoded {
        DynamicImage::ImageLuma8(buf) => (1, buf.width(), buf.height(), buf.into_raw()),
        DynamicImage::ImageRgb8(buf) => (3, buf.width(), buf.height(), buf.into_raw()),
        other => {
            return Err(image_error(
                path,
                format!("unsupported pixel format {:?} (8-bit gray or RGB only)", other.color()),
            ))
        }
    };
    let (h, w) = (h as usize, w as usize);
    let mut data = vec![0.0f32; raw.len()];
    for (i, px) in raw.chunks_exact(channels).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            data[c * h * w + i] = v as f32 / 255.0;
        }
    }
    Image::new(channels, h, w, data)
}

/// Writes `img` clamped and quantized to 8 bits; the format follows the extension.
pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    let ext = extension(path).unwrap_or_default();
    let format = match ext.as_str() {
        "png" => ImageFormat::Png,
        "ppm" | "pgm" | "pnm" => ImageFormat::Pnm,
        _ => return Err(image_error(path, "output must end in .png, .ppm, .pgm or .pnm")),
    };
    let img = match (ext.as_str(), img.channels()) {
        ("ppm", 1) => img.to_rgb(),
        ("pgm", 3) => return Err(image_error(path, "PGM holds gray images only")),
        _ => img.clone(),
    };
    let (c, h, w) = (img.channels(), img.height(), img.width());
    let planar = img.to_u8();
    let mut interleaved = vec![0u8; planar.len()];
    for i in 0..h * w {
        for ch in 0..c {
            interleaved[i * c + ch] = planar[ch * h * w + i];
        }
    }
    let color = if c == 1 {
        ExtendedColorType::L8
    } else {
        ExtendedColorType::Rgb8
    };
    image::save_buffer_with_format(path, &interleaved, w as u32, h as u32, color, format).map_err(|e| read_error(path, e))
}

/// Supported images in `dir`, sorted by file name.
pub fn read_dir_images(dir: &Path) -> Result<Vec<(PathBuf, Image)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_supported(&path) {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Dataset(format!("no PNG/PPM/PGM images in {}", dir.display())));
    }
    paths
        .into_iter()
        .map(|p| read_image(&p).map(|img| (p, img)))
        .collect()
}

pub fn describe(img: &Image) -> String {
    let kind = match img.color() {
        ColorSpace::SrgbRgb => "rgb",
        ColorSpace::Luminance => "gray",
    };
    format!("{}x{} {kind}", img.width(), img.height())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(c: usize, h: usize, w: usize) -> Image {
        let data = (0..c * h * w).map(|i| ((i * 37) % 256) as f32 / 255.0).collect();
        Image::new(c, h, w, data).unwrap()
    }

    #[test]
    fn formats_round_trip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        for (name, img) in [
            ("a.png", pattern(3, 5, 7)),
            ("b.png", pattern(1, 6, 3)),
            ("c.ppm", pattern(3, 4, 9)),
            ("d.pgm", pattern(1, 8, 2)),
        ] {
            let path = dir.path().join(name);
            write_image(&path, &img).unwrap();
            let back = read_image(&path).unwrap();
            assert_eq!(back, img, "{name}");
            let again = dir.path().join(format!("again_{name}"));
            write_image(&again, &back).unwrap();
            assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
        }
    }

    #[test]
    fn errors_are_classified() {
        let dir = tempfile::tempdir().unwrap();
        let missing = read_image(&dir.path().join("none.png")).unwrap_err();
        assert_eq!(missing.exit_code(), 3);
        let junk = dir.path().join("junk.png");
        std::fs::write(&junk, b"not a png").unwrap();
        assert!(matches!(read_image(&junk), Err(Error::Image { .. })));
        assert!(write_image(&dir.path().join("x.jpg"), &pattern(3, 2, 2)).is_err());
        assert!(matches!(read_dir_images(dir.path()), Err(Error::Image { .. })));
        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(read_dir_images(empty.path()), Err(Error::Dataset(_))));
    }
}
