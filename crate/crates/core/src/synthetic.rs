//! Seeded procedural RGB images for smoke training and self-checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::image::Image;

/// Smooth gradients, oriented stripes and hard-edged discs on `[0, 1]`.
pub fn image(height: usize, width: usize, seed: u64) -> Result<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0f32; 3 * height * width];
    let (h, w) = (height as f64, width as f64);
    for c in 0..3 {
        let base: f64 = rng.gen_range(0.2..0.8);
        let gy: f64 = rng.gen_range(-0.3..0.3);
        let gx: f64 = rng.gen_range(-0.3..0.3);
        let plane = &mut data[c * height * width..(c + 1) * height * width];
        for y in 0..height {
            for x in 0..width {
                plane[y * width + x] = (base + gy * (y as f64 / h - 0.5) + gx * (x as f64 / w - 0.5)) as f32;
            }
        }
    }
    for _ in 0..3 {
        let freq: f64 = rng.gen_range(0.15..0.9);
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let amp: [f64; 3] = [rng.gen_range(-0.12..0.12), rng.gen_range(-0.12..0.12), rng.gen_range(-0.12..0.12)];
        let (ky, kx) = (freq * theta.sin(), freq * theta.cos());
        for y in 0..height {
            for x in 0..width {
                let v = (ky * y as f64 + kx * x as f64 + phase).sin();
                for (c, a) in amp.iter().enumerate() {
                    data[(c * height + y) * width + x] += (a * v) as f32;
                }
            }
        }
    }
    for _ in 0..4 {
        let cy: f64 = rng.gen_range(0.0..h);
        let cx: f64 = rng.gen_range(0.0..w);
        let r: f64 = rng.gen_range(2.0..h.min(w) / 3.0 + 2.5);
        let shift: [f64; 3] = [rng.gen_range(-0.25..0.25), rng.gen_range(-0.25..0.25), rng.gen_range(-0.25..0.25)];
        for y in 0..height {
            for x in 0..width {
                let (dy, dx) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
                if dy * dy + dx * dx <= r * r {
                    for (c, s) in shift.iter().enumerate() {
                        data[(c * height + y) * width + x] += *s as f32;
                    }
                }
            }
        }
    }
    for v in &mut data {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(Image::new(3, height, width, data)?.quantized())
}

pub fn images(count: usize, height: usize, width: usize, seed: u64) -> Result<Vec<Image>> {
    (0..count as u64).map(|k| image(height, width, seed.wrapping_add(k))).collect()
}
