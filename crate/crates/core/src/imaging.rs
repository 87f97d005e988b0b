//! Image and mask value types, range conversions, PNG I/O and PSNR.
//!
//! Images are stored interleaved (row-major, channel fastest) in the
//! generator range `[-1, 1]` and converted to 8-bit only at file boundaries.

use std::path::Path;

use image::{ColorType, GrayImage, ImageReader, RgbImage};

use crate::error::{Error, Result};

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

/// Resolutions supported by the models.
pub const MODEL_RESOLUTIONS: [usize; 3] = [32, 64, 128];

#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    /// Validated constructor: every value must be finite and within `[-1, 1]`.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Shape(format!(
                "image dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{} values for a {height}x{width}x{channels} image",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "image value {v} outside [-1, 1]"
            )));
        }
        Ok(ImageTensor {
            height,
            width,
            channels,
            data,
        })
    }

    /// Like [`ImageTensor::new`] but clamps values into `[-1, 1]` first.
    /// Non-finite values are rejected.
    pub fn from_clamped(
        height: usize,
        width: usize,
        channels: usize,
        mut data: Vec<f64>,
    ) -> Result<Self> {
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("image value {v}")));
        }
        for v in &mut data {
            *v = v.clamp(-1.0, 1.0);
        }
        Self::new(height, width, channels, data)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
        .expect("fill value within range")
    }

    /// RGB image from a per-pixel colour function.
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(y, x));
            }
        }
        Self::from_clamped(height, width, 3, data).expect("finite colours")
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, value: &[f64]) {
        assert_eq!(value.len(), self.channels);
        assert!(value.iter().all(|v| (-1.0..=1.0).contains(v)));
        let i = (y * self.width + x) * self.channels;
        self.data[i..i + self.channels].copy_from_slice(value);
    }

    pub fn same_shape(&self, other: &ImageTensor) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub fn check_same_shape(&self, other: &ImageTensor) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.height, self.width, self.channels, other.height, other.width, other.channels
            )))
        }
    }

    /// Mirror left-right.
    pub fn flip_horizontal(&self) -> ImageTensor {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set_pixel(y, self.width - 1 - x, self.pixel(y, x));
            }
        }
        out
    }
}

/// Elementwise `v -> (v + 1) / 2`; returns raw values in `[0, 1]`.
pub fn to_unit_range(img: &ImageTensor) -> Vec<f64> {
    img.data.iter().map(|v| (v + 1.0) / 2.0).collect()
}

/// Inverse of [`to_unit_range`].
pub fn from_unit_range(
    height: usize,
    width: usize,
    channels: usize,
    unit: &[f64],
) -> Result<ImageTensor> {
    ImageTensor::new(
        height,
        width,
        channels,
        unit.iter().map(|u| 2.0 * u - 1.0).collect(),
    )
}

/// 8-bit value to generator range.
pub fn byte_to_value(p: u8) -> f64 {
    2.0 * f64::from(p) / 255.0 - 1.0
}

/// Generator range to 8-bit, rounding half up.
pub fn value_to_byte(v: f64) -> u8 {
    let scaled = (v.clamp(-1.0, 1.0) + 1.0) / 2.0 * 255.0;
    (scaled + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// `(height, width)` of an image file without decoding its pixels.
pub fn image_size(path: impl AsRef<Path>) -> Result<(usize, usize)> {
    let path = path.as_ref();
    let (w, h) = image::image_dimensions(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok((h as usize, w as usize))
}

/// Load an 8-bit RGB PNG at its stored size.
pub fn read_image(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    let img = read_raster(path)?;
    if img.color() != ColorType::Rgb8 {
        return Err(Error::Image {
            path: path.to_path_buf(),
            message: format!("expected 8-bit RGB, found {:?}", img.color()),
        });
    }
    Ok(from_rgb8(&img.into_rgb8()))
}

/// Load an 8-bit RGB PNG, resampling to `target_size x target_size` if needed.
pub fn load_image(path: impl AsRef<Path>, target_size: usize) -> Result<ImageTensor> {
    let path = path.as_ref();
    if !MODEL_RESOLUTIONS.contains(&target_size) {
        return Err(Error::InvalidArgument(format!(
            "target size {target_size} not in {MODEL_RESOLUTIONS:?}"
        )));
    }
    let img = read_raster(path)?;
    if img.color() != ColorType::Rgb8 {
        return Err(Error::Image {
            path: path.to_path_buf(),
            message: format!("expected 8-bit RGB, found {:?}", img.color()),
        });
    }
    let mut rgb = img.into_rgb8();
    let t = target_size as u32;
    if rgb.dimensions() != (t, t) {
        rgb = image::imageops::resize(&rgb, t, t, image::imageops::FilterType::Triangle);
    }
    Ok(from_rgb8(&rgb))
}

pub fn from_rgb8(rgb: &RgbImage) -> ImageTensor {
    let (w, h) = rgb.dimensions();
    let data = rgb.as_raw().iter().map(|&p| byte_to_value(p)).collect();
    ImageTensor::new(h as usize, w as usize, 3, data).expect("8-bit values map into range")
}

pub fn to_rgb8(img: &ImageTensor) -> Result<RgbImage> {
    if img.channels != 3 {
        return Err(Error::Shape(format!(
            "expected 3 channels, found {}",
            img.channels
        )));
    }
    let raw = img.data.iter().map(|&v| value_to_byte(v)).collect();
    Ok(RgbImage::from_raw(img.width as u32, img.height as u32, raw).expect("buffer size"))
}

pub fn save_image(img: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    to_rgb8(img)?.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn read_raster(path: &Path) -> Result<image::DynamicImage> {
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let reader = reader
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// PSNR in dB on the 8-bit scale: `10 log10(255^2 / MSE)` with the MSE taken
/// over all pixels and channels. Identical images give [`PSNR_CAP_DB`].
pub fn psnr(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    a.check_same_shape(b)?;
    let scale = 255.0 / 2.0;
    let sse: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| {
            let d = (x - y) * scale;
            d * d
        })
        .sum();
    let mse = sse / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// Binary per-pixel mask: 1 keeps a pixel (uncorrupted), 0 marks it corrupted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CorruptionMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl CorruptionMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "{} mask values for {height}x{width}",
                data.len()
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument("mask values must be 0 or 1".into()));
        }
        Ok(CorruptionMask {
            height,
            width,
            data,
        })
    }

    pub fn ones(height: usize, width: usize) -> Self {
        CorruptionMask {
            height,
            width,
            data: vec![1; height * width],
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        CorruptionMask {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub(crate) fn set(&mut self, y: usize, x: usize, v: u8) {
        debug_assert!(v <= 1);
        self.data[y * self.width + x] = v;
    }

    pub fn count_zeros(&self) -> usize {
        self.data.iter().filter(|&&v| v == 0).count()
    }

    pub fn count_ones(&self) -> usize {
        self.data.len() - self.count_zeros()
    }

    pub fn corrupted_fraction(&self) -> f64 {
        self.count_zeros() as f64 / self.data.len() as f64
    }

    /// Elementwise product of two masks.
    pub fn hadamard(&self, other: &CorruptionMask) -> Result<CorruptionMask> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::Shape("mask shapes differ".into()));
        }
        Ok(CorruptionMask {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    pub fn check_matches(&self, img: &ImageTensor) -> Result<()> {
        if (self.height, self.width) == (img.height, img.width) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "mask {}x{} vs image {}x{}",
                self.height, self.width, img.height, img.width
            )))
        }
    }

    /// `mask ⊙ img + (1 - mask) * fill`.
    pub fn apply(&self, img: &ImageTensor, fill: f64) -> Result<ImageTensor> {
        self.check_matches(img)?;
        let c = img.channels;
        let data = img
            .data
            .iter()
            .enumerate()
            .map(|(i, &v)| if self.data[i / c] == 1 { v } else { fill })
            .collect();
        ImageTensor::new(img.height, img.width, c, data)
    }

    /// Grayscale PNG: 0 = corrupted, 255 = uncorrupted.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let raw = self.data.iter().map(|&v| v * 255).collect();
        GrayImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer size")
            .save(path)
            .map_err(|e| Error::Image {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
    }

    /// Reads a grayscale PNG; values of 128 and above count as uncorrupted.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = read_raster(path)?;
        if img.color() != ColorType::L8 {
            return Err(Error::Image {
                path: path.to_path_buf(),
                message: format!("expected 8-bit grayscale mask, found {:?}", img.color()),
            });
        }
        let gray = img.into_luma8();
        let (w, h) = gray.dimensions();
        let data = gray.as_raw().iter().map(|&p| u8::from(p >= 128)).collect();
        Self::new(h as usize, w as usize, data)
    }
}
