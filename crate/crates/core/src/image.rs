//! RGB images in `[0, 1]`, stored channel-major.

use std::io::BufWriter;
use std::path::Path;

use image::codecs::jpeg::JpegEncoder;
use image::codecs::png::PngEncoder;
use image::imageops::{self, FilterType};
use image::{ImageBuffer, ImageEncoder, Rgb, Rgb32FImage};
use styler_grad::Tensor;

use crate::error::{Result, StylerError};

/// Output encoding for [`Image::save`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    Png,
    Jpeg { quality: u8 },
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Jpeg { .. } => "jpg",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    /// `3 × height × width`, RGB.
    data: Vec<f32>,
}

impl Image {
    /// Builds an image from channel-major RGB data, clamping into `[0, 1]`.
    pub fn new(width: usize, height: usize, mut data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(StylerError::Dimension(format!("image must be non-empty, got {width}x{height}")));
        }
        if data.len() != 3 * width * height {
            return Err(StylerError::Dimension(format!(
                "{width}x{height} RGB image needs {} values, got {}",
                3 * width * height,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(StylerError::Argument(format!("non-finite pixel value {bad}")));
        }
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Self { width, height, data })
    }

    /// `f(channel, y, x)` for every pixel.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(3 * width * height);
        for c in 0..3 {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let decoded = image::open(path).map_err(|source| StylerError::Image { path: path.into(), source })?;
        Ok(Self::from_rgb32f(&decoded.to_rgb32f()))
    }

    fn from_rgb32f(buf: &Rgb32FImage) -> Self {
        let (w, h) = (buf.width() as usize, buf.height() as usize);
        let mut data = vec![0.0; 3 * w * h];
        for (x, y, px) in buf.enumerate_pixels() {
            for c in 0..3 {
                data[(c * h + y as usize) * w + x as usize] = px.0[c].clamp(0.0, 1.0);
            }
        }
        Self { width: w, height: h, data }
    }

    fn to_rgb32f(&self) -> Rgb32FImage {
        ImageBuffer::from_fn(self.width as u32, self.height as u32, |x, y| {
            Rgb([0, 1, 2].map(|c| self.pixel(c, y as usize, x as usize)))
        })
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..3 {
                    out.push((self.pixel(c, y, x) * 255.0).round() as u8);
                }
            }
        }
        out
    }

    /// Writes atomically: the file appears under `path` only once complete.
    pub fn save(&self, path: impl AsRef<Path>, format: ImageFormat) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_rgb8();
        crate::fsutil::write_atomic(path, |file| {
            let w = BufWriter::new(file);
            let (width, height) = (self.width as u32, self.height as u32);
            let res = match format {
                ImageFormat::Png => PngEncoder::new(w).write_image(&bytes, width, height, image::ExtendedColorType::Rgb8),
                ImageFormat::Jpeg { quality } => {
                    JpegEncoder::new_with_quality(w, quality).write_image(&bytes, width, height, image::ExtendedColorType::Rgb8)
                }
            };
            res.map_err(|source| StylerError::Image { path: path.into(), source })
        })
    }

    pub fn resize(&self, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(StylerError::Dimension(format!("cannot resize to {width}x{height}")));
        }
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let out = imageops::resize(&self.to_rgb32f(), width as u32, height as u32, FilterType::Triangle);
        Ok(Self::from_rgb32f(&out))
    }

    /// Resize preserving aspect ratio so the shorter side equals `side`.
    pub fn resize_shorter_side(&self, side: usize) -> Result<Self> {
        let (w, h) = (self.width as f64, self.height as f64);
        let scale = side as f64 / w.min(h);
        let (nw, nh) = if self.width <= self.height {
            (side, ((h * scale).round() as usize).max(side))
        } else {
            (((w * scale).round() as usize).max(side), side)
        };
        self.resize(nw, nh)
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || x0 + width > self.width || y0 + height > self.height {
            return Err(StylerError::Dimension(format!(
                "crop {width}x{height}+{x0}+{y0} outside {}x{} image",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(3 * width * height);
        for c in 0..3 {
            for y in y0..y0 + height {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + x0..row + x0 + width]);
            }
        }
        Ok(Self { width, height, data })
    }

    pub fn center_crop(&self, width: usize, height: usize) -> Result<Self> {
        let x0 = self.width.saturating_sub(width) / 2;
        let y0 = self.height.saturating_sub(height) / 2;
        self.crop(x0, y0, width, height)
    }

    /// Reflect-pads the bottom and right edges so both sides become
    /// multiples of `m`.
    pub fn pad_to_multiple(&self, m: usize) -> Result<Self> {
        let pw = (m - self.width % m) % m;
        let ph = (m - self.height % m) % m;
        if pw == 0 && ph == 0 {
            return Ok(self.clone());
        }
        if pw >= self.width.max(2) || ph >= self.height.max(2) {
            return Err(StylerError::Dimension(format!(
                "{}x{} image too small to pad to a multiple of {m}",
                self.width, self.height
            )));
        }
        let (w, h) = (self.width + pw, self.height + ph);
        let reflect = |i: usize, n: usize| if i < n { i } else { 2 * (n - 1) - i };
        Self::from_fn(w, h, |c, y, x| self.pixel(c, reflect(y, self.height), reflect(x, self.width)))
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::new([1, 3, self.height, self.width], self.data.clone()).expect("image buffer is 3×H×W")
    }

    /// Stacks same-size images into `[N, 3, H, W]`.
    pub fn batch(images: &[Image]) -> Result<Tensor<f32>> {
        let Some(first) = images.first() else {
            return Err(StylerError::Dimension("empty image batch".into()));
        };
        let mut data = Vec::with_capacity(images.len() * first.data.len());
        for img in images {
            if (img.width, img.height) != (first.width, first.height) {
                return Err(StylerError::Dimension(format!(
                    "batch mixes {}x{} and {}x{} images",
                    first.width, first.height, img.width, img.height
                )));
            }
            data.extend_from_slice(&img.data);
        }
        Ok(Tensor::new([images.len(), 3, first.height, first.width], data)?)
    }

    /// Image `index` of a `[N, 3, H, W]` tensor, clamped into `[0, 1]`.
    pub fn from_tensor(t: &Tensor<f32>, index: usize) -> Result<Self> {
        let (n, c, h, w) = t.dims4("Image::from_tensor")?;
        if c != 3 || index >= n {
            return Err(StylerError::Dimension(format!("no RGB image {index} in tensor {:?}", t.shape())));
        }
        let plane = 3 * h * w;
        Self::new(w, h, t.data()[index * plane..(index + 1) * plane].to_vec())
    }

    /// ITU-R BT.601 luma.
    pub fn luminance(&self) -> Vec<f64> {
        let n = self.width * self.height;
        (0..n)
            .map(|i| {
                0.299 * self.data[i] as f64 + 0.587 * self.data[n + i] as f64 + 0.114 * self.data[2 * n + i] as f64
            })
            .collect()
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        let n = self.width * self.height;
        self.data[c * n..(c + 1) * n].iter().map(|&v| v as f64).collect()
    }
}
