use iarn_tensor::Array;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorSpace {
    SrgbRgb,
    Luminance,
}

/// Planar, channel-major floating image. Values are nominally in `[0, 1]`
/// but are only clamped when exported to 8-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
    color: ColorSpace,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        let color = match channels {
            1 => ColorSpace::Luminance,
            3 => ColorSpace::SrgbRgb,
            c => return Err(Error::Shape(format!("images have 1 or 3 channels, got {c}"))),
        };
        if height == 0 || width == 0 {
            return Err(Error::DegenerateSize(format!("{width}x{height} image")));
        }
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "{channels}x{height}x{width} image needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
            color,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(channels, height, width, vec![value; channels * height * width])
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn color(&self) -> ColorSpace {
        self.color
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    /// Gray images are replicated into three channels; RGB is returned as is.
    pub fn to_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        let mut data = Vec::with_capacity(3 * self.data.len());
        for _ in 0..3 {
            data.extend_from_slice(&self.data);
        }
        Image::new(3, self.height, self.width, data).expect("shape preserved")
    }

    /// Top-left corner at `(y, x)`, extent `h x w`.
    pub fn crop(&self, y: usize, x: usize, h: usize, w: usize) -> Result<Image> {
        if y + h > self.height || x + w > self.width {
            return Err(Error::Shape(format!(
                "crop {w}x{h}+{x}+{y} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(self.channels * h * w);
        for c in 0..self.channels {
            for row in y..y + h {
                let start = (c * self.height + row) * self.width + x;
                data.extend_from_slice(&self.data[start..start + w]);
            }
        }
        Image::new(self.channels, h, w, data)
    }

    pub fn flip_horizontal(&self) -> Image {
        let mut data = self.data.clone();
        for row in data.chunks_mut(self.width) {
            row.reverse();
        }
        Image { data, ..self.clone() }
    }

    pub fn clamped(&self) -> Image {
        Image {
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            ..self.clone()
        }
    }

    /// Clamp to `[0, 1]` and quantize to 8 bits with round-half-up.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    /// Values after an 8-bit export/import cycle.
    pub fn quantized(&self) -> Image {
        Image {
            data: self.data.iter().map(|&v| quantize(v) as f32 / 255.0).collect(),
            ..self.clone()
        }
    }

    /// `[1, C, H, W]` array view for the network.
    pub fn to_array(&self) -> Array<f32> {
        Array::new([1, self.channels, self.height, self.width], self.data.clone()).expect("shape consistent")
    }

    /// Builds an image from sample `index` of a `[N, C, H, W]` array.
    pub fn from_array(array: &Array<f32>, index: usize) -> Result<Image> {
        let [n, c, h, w] = array.dims4("image")?;
        if index >= n {
            return Err(Error::Shape(format!("sample {index} of batch {n}")));
        }
        let len = c * h * w;
        Image::new(c, h, w, array.data()[index * len..(index + 1) * len].to_vec())
    }
}

pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Stacks equally sized images into a `[N, C, H, W]` batch.
pub fn stack(images: &[Image]) -> Result<Array<f32>> {
    let first = images
        .first()
        .ok_or_else(|| Error::Shape("cannot stack zero images".into()))?;
    let mut data = Vec::with_capacity(images.len() * first.data.len());
    for img in images {
        if !img.same_shape(first) {
            return Err(Error::Shape("stacked images differ in shape".into()));
        }
        data.extend_from_slice(&img.data);
    }
    Ok(Array::new([images.len(), first.channels, first.height, first.width], data)?)
}
