//! Inference: model downscaling, model upscaling and the full round trip.

use iarn_tensor::Array;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::backbone::Backbone;
use crate::config::{LatentMode, TrainConfig};
use crate::encoding::encode;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::resample::{output_size, realized_scale, resample_to, Direction, ResampleMethod, ScalePair};
use crate::split::{passthrough, split};

/// Downscaled image together with the scale actually realised by the grid sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct Downscaled {
    pub image: Image,
    pub scale: ScalePair,
}

#[derive(Debug, Clone)]
pub struct Rescaler {
    model: Backbone<f32>,
    method: ResampleMethod,
    channel_split: bool,
    latent: LatentMode,
    seed: u64,
}

fn gray_back(img: Image, was_gray: bool) -> Result<Image> {
    if !was_gray {
        return Ok(img);
    }
    let n = img.height() * img.width();
    let data = (0..n)
        .map(|i| (img.plane(0)[i] + img.plane(1)[i] + img.plane(2)[i]) / 3.0)
        .collect();
    Image::new(1, img.height(), img.width(), data)
}

impl Rescaler {
    pub fn new(model: Backbone<f32>, cfg: &TrainConfig) -> Self {
        Self {
            model,
            method: cfg.method,
            channel_split: cfg.channel_split,
            latent: cfg.latent,
            seed: cfg.seed,
        }
    }

    pub fn model(&self) -> &Backbone<f32> {
        &self.model
    }

    pub fn method(&self) -> ResampleMethod {
        self.method
    }

    /// HR image to its LR counterpart; the latent is discarded.
    pub fn downscale(&self, x: &Image, scale: ScalePair) -> Result<Downscaled> {
        let was_gray = x.channels() == 1;
        let rgb = x.to_rgb();
        let (h, w) = (rgb.height(), rgb.width());
        let (lh, lw) = output_size(h, w, scale, Direction::Down);
        let realized = realized_scale(h, w, lh, lw);
        let pair = if self.channel_split {
            split(&rgb, realized, self.method)?
        } else {
            passthrough(&rgb, realized, self.method)
        };
        let field = encode(h, w, realized);
        let (y_h, _z) = self.model.forward(&pair.lf.to_array(), &pair.hf.to_array(), &field)?;
        let y_h = Image::from_array(&y_h, 0)?;
        let y_l = resample_to(&y_h, lh, lw, self.method)?;
        Ok(Downscaled {
            image: gray_back(y_l, was_gray)?,
            scale: realized,
        })
    }

    /// LR image back to HR. `target` overrides the size implied by `scale`.
    pub fn upscale(&self, lr: &Image, scale: ScalePair, target: Option<(usize, usize)>) -> Result<Image> {
        let was_gray = lr.channels() == 1;
        let rgb = lr.to_rgb();
        let (h, w) = target.unwrap_or_else(|| output_size(rgb.height(), rgb.width(), scale, Direction::Up));
        if h == 0 || w == 0 {
            return Err(Error::DegenerateSize(format!("upscaling to {w}x{h}")));
        }
        let realized = realized_scale(h, w, rgb.height(), rgb.width());
        let y_hat = resample_to(&rgb, h, w, self.method)?.to_array();
        let z_hat = match self.latent {
            LatentMode::Zero => Array::zeros(y_hat.shape().to_vec()),
            LatentMode::Gaussian => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                Array::from_fn(y_hat.shape().to_vec(), |_| StandardNormal.sample(&mut rng))
            }
        };
        let field = encode(h, w, realized);
        let (lf, hf) = self.model.inverse(&y_hat, &z_hat, &field)?;
        let data = lf.data().iter().zip(hf.data()).map(|(a, b)| a + b).collect::<Vec<f32>>();
        gray_back(Image::new(3, h, w, data)?, was_gray)
    }

    /// Down then up to the original size. With `quantize_lr` the LR image is
    /// stored at 8 bits in between, as it would be on disk.
    pub fn round_trip(&self, x: &Image, scale: ScalePair, quantize_lr: bool) -> Result<(Downscaled, Image)> {
        let mut down = self.downscale(x, scale)?;
        if quantize_lr {
            down.image = down.image.quantized();
        }
        let up = self.upscale(&down.image, down.scale, Some((x.height(), x.width())))?;
        Ok((down, up))
    }
}

/// Bicubic down then bicubic up to the original grid.
pub fn bicubic_round_trip(x: &Image, scale: ScalePair, quantize_lr: bool) -> Result<Image> {
    let (lh, lw) = output_size(x.height(), x.width(), scale, Direction::Down);
    let mut low = resample_to(x, lh, lw, ResampleMethod::Bicubic)?;
    if quantize_lr {
        low = low.quantized();
    }
    resample_to(&low, x.height(), x.width(), ResampleMethod::Bicubic)
}
