//! Pixel grids with normalized coordinates, and 8-bit PNG IO.

use std::path::Path;

use image::{ColorType, DynamicImage, ImageBuffer, ImageReader, Luma, Rgb};
use ndarray::Array2;

use crate::error::{Error, Result};

/// An `H×W×c` image with values in `[0, 1]`, stored row-major (HWC).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageField {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageField {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Input("image dimensions must be positive".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Input(format!("images have 1 or 3 channels, got {channels}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::Input(format!(
                "{} values for a {height}×{width}×{channels} image",
                data.len()
            )));
        }
        if !data.iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(Error::Input("image values must lie in [0, 1]".into()));
        }
        Ok(ImageField {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Channel-averaged copy (identity for grayscale).
    pub fn to_gray(&self) -> ImageField {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| px.iter().sum::<f64>() / self.channels as f64)
            .collect();
        ImageField {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        }
    }

    /// Normalized coordinate of column `x`: `-1` at the left edge, `+1` at the right.
    pub fn coord_x(&self, x: usize) -> f64 {
        normalized(x, self.width)
    }

    pub fn coord_y(&self, y: usize) -> f64 {
        normalized(y, self.height)
    }

    /// `(x, y)` coordinates of every pixel in raster order, as an `HW×2` array.
    pub fn coords(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.num_pixels(), 2));
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            row[0] = self.coord_x(i % self.width);
            row[1] = self.coord_y(i / self.width);
        }
        out
    }

    /// Pixel values mapped from `[0, 1]` to `[-1, 1]`, one row per pixel.
    pub fn targets(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.num_pixels(), self.channels), |(p, c)| 2.0 * self.data[p * self.channels + c] - 1.0)
    }

    /// Builds an image from `[-1, 1]` network outputs, clamping into `[0, 1]`.
    pub fn from_signed(height: usize, width: usize, values: &Array2<f64>) -> Result<Self> {
        let data = values.iter().map(|v| ((v + 1.0) / 2.0).clamp(0.0, 1.0)).collect();
        Self::new(height, width, values.ncols(), data)
    }

    /// Rectangular sub-image.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<ImageField> {
        if y0 + h > self.height || x0 + w > self.width {
            return Err(Error::Input("crop rectangle exceeds image".into()));
        }
        Self::from_fn(h, w, self.channels, |y, x, c| self.get(y0 + y, x0 + x, c))
    }

    /// Values quantized to 8 bits.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|v| (v * 255.0).round() as u8).collect()
    }
}

fn normalized(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        -1.0 + 2.0 * i as f64 / (n - 1) as f64
    }
}

/// Loads an 8-bit grayscale or RGB PNG. With `gray`, RGB is channel-averaged.
pub fn load_png(path: impl AsRef<Path>, gray: bool) -> Result<ImageField> {
    let path = path.as_ref();
    let img = ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(|e| Error::UnsupportedImage(format!("{}: {e}", path.display())))?;
    let field = match img.color() {
        ColorType::L8 => {
            let buf = img.into_luma8();
            let (w, h) = buf.dimensions();
            ImageField::new(h as usize, w as usize, 1, buf.into_raw().iter().map(|&v| v as f64 / 255.0).collect())?
        }
        ColorType::Rgb8 | ColorType::Rgba8 | ColorType::La8 => {
            let buf = img.into_rgb8();
            let (w, h) = buf.dimensions();
            ImageField::new(h as usize, w as usize, 3, buf.into_raw().iter().map(|&v| v as f64 / 255.0).collect())?
        }
        other => {
            return Err(Error::UnsupportedImage(format!(
                "{}: only 8-bit gray or RGB PNGs are supported, found {other:?}",
                path.display()
            )))
        }
    };
    Ok(if gray { field.to_gray() } else { field })
}

pub fn save_png(path: impl AsRef<Path>, image: &ImageField) -> Result<()> {
    let (w, h) = (image.width as u32, image.height as u32);
    let raw = image.to_u8();
    let dynamic = if image.channels == 1 {
        DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw).expect("buffer size"))
    } else {
        DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw).expect("buffer size"))
    };
    dynamic
        .save_with_format(path.as_ref(), image::ImageFormat::Png)
        .map_err(|e| Error::UnsupportedImage(e.to_string()))
}
