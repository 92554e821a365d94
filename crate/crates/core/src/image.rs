//! Raster types and file I/O.
//!
//! Coordinates: `x` is the column index (growing rightward), `y` the row index
//! (growing downward). Angles are measured from the +x axis toward +y.
//! Intensities are kept as `f64` and only quantized when written to disk.

use std::path::Path;

use image::{DynamicImage, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-channel raster of finite real intensities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "expected {} samples for a {width}x{height} image, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite intensity at index {i}")));
        }
        Ok(Self { width, height, data })
    }

    /// # Panics
    /// Panics if either dimension is zero.
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        assert!(value.is_finite());
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// # Panics
    /// Panics if either dimension is zero or `f` yields a non-finite value.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                assert!(v.is_finite(), "non-finite intensity at ({x}, {y})");
                data.push(v);
            }
        }
        Self { width, height, data }
    }

    pub(crate) fn from_raw_unchecked(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sample with replicate padding: out-of-range coordinates clamp to the border.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| f(self.get(x, y)))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<GrayImage> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::InvalidInput(format!(
                "crop {width}x{height}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        Ok(GrayImage::from_fn(width, height, |x, y| {
            self.get(x0 + x, y0 + y)
        }))
    }

    /// Quarter turn about the image center, sending direction θ to θ + 90°.
    ///
    /// Only defined for square images, where the pixel grid maps onto itself.
    pub fn rotate_quarter(&self) -> Result<GrayImage> {
        if self.width != self.height {
            return Err(Error::InvalidInput(
                "quarter-turn rotation requires a square image".into(),
            ));
        }
        let n = self.width;
        Ok(GrayImage::from_fn(n, n, |x, y| self.get(y, n - 1 - x)))
    }
}

/// Stack of equally sized planes, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelImage {
    width: usize,
    height: usize,
    planes: Vec<GrayImage>,
}

impl MultiChannelImage {
    pub fn new(planes: Vec<GrayImage>) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::InvalidInput("a multi-channel image needs at least one plane".into()))?;
        let (width, height) = (first.width(), first.height());
        if planes
            .iter()
            .any(|p| p.width() != width || p.height() != height)
        {
            return Err(Error::InvalidInput("planes differ in size".into()));
        }
        Ok(Self {
            width,
            height,
            planes,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    pub fn plane(&self, c: usize) -> &GrayImage {
        &self.planes[c]
    }

    pub fn planes(&self) -> &[GrayImage] {
        &self.planes
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        let planes = self
            .planes
            .iter()
            .map(|p| p.crop(x0, y0, width, height))
            .collect::<Result<Vec<_>>>()?;
        Self::new(planes)
    }
}

/// Per-pixel {0, 1} labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "mask of {} entries does not fit {width}x{height}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|&v| v > 1) {
            return Err(Error::InvalidInput(format!(
                "mask value {} at index {i} is not binary",
                data[i]
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(u8::from(f(x, y)));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Pixels with intensity ≥ `threshold` become 1.
    pub fn threshold(image: &GrayImage, threshold: f64) -> Self {
        Self::from_fn(image.width(), image.height(), |x, y| {
            image.get(x, y) >= threshold
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] == 1
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_raw_unchecked(
            self.width,
            self.height,
            self.data.iter().map(|&v| f64::from(v)).collect(),
        )
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::InvalidInput(format!(
                "crop {width}x{height}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        Ok(Self::from_fn(width, height, |x, y| self.get(x0 + x, y0 + y)))
    }
}

/// How a color raster is reduced to one intensity plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelPolicy {
    /// Green plane; the high-contrast plane for fundus vessels.
    #[default]
    Green,
    /// 0.299 R + 0.587 G + 0.114 B.
    Luminance,
    /// Grayscale input only; color input is rejected.
    AsIsGray,
}

pub fn load_image(path: impl AsRef<Path>, policy: ChannelPolicy) -> Result<GrayImage> {
    let path = path.as_ref();
    let decoded = decode(path)?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let data: Vec<f64> = match decoded {
        DynamicImage::ImageLuma8(buf) => buf.as_raw().iter().map(|&v| unit(v)).collect(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| unit(p.0[0])).collect(),
        DynamicImage::ImageRgb8(buf) => buf.pixels().map(|p| reduce_rgb(p.0, policy, path)).collect::<Result<_>>()?,
        DynamicImage::ImageRgba8(buf) => buf
            .pixels()
            .map(|p| reduce_rgb([p.0[0], p.0[1], p.0[2]], policy, path))
            .collect::<Result<_>>()?,
        other => {
            return Err(Error::Format(format!(
                "{}: unsupported pixel layout {:?}; only 8-bit gray or RGB(A) is accepted",
                path.display(),
                other.color()
            )))
        }
    };
    GrayImage::new(w, h, data)
}

/// Loads a label or field-of-view raster; bytes ≥ 128 are foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let gray = load_image(path, ChannelPolicy::Luminance)?;
    Ok(BinaryMask::threshold(&gray, 128.0 / 255.0))
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    })
}

#[inline]
fn unit(v: u8) -> f64 {
    f64::from(v) / 255.0
}

fn reduce_rgb(rgb: [u8; 3], policy: ChannelPolicy, path: &Path) -> Result<f64> {
    match policy {
        ChannelPolicy::Green => Ok(unit(rgb[1])),
        ChannelPolicy::Luminance => Ok((0.299 * f64::from(rgb[0])
            + 0.587 * f64::from(rgb[1])
            + 0.114 * f64::from(rgb[2]))
            / 255.0),
        ChannelPolicy::AsIsGray => Err(Error::Format(format!(
            "{}: color raster given but the channel policy expects grayscale",
            path.display()
        ))),
    }
}

/// Anything that can be written as an 8-bit grayscale raster.
pub trait Raster8 {
    fn dimensions(&self) -> (usize, usize);
    fn to_bytes(&self) -> Vec<u8>;
}

impl Raster8 for GrayImage {
    fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }
}

impl Raster8 for BinaryMask {
    fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| v * 255).collect()
    }
}

/// Clamp to [0, 1], then round(v·255) with halves rounded up.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an 8-bit grayscale PNG regardless of the path's extension.
pub fn save_image(image: &impl Raster8, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = image.dimensions();
    let bytes = image.to_bytes();
    image::save_buffer_with_format(
        path,
        &bytes,
        w as u32,
        h as u32,
        image::ExtendedColorType::L8,
        ImageFormat::Png,
    )
    .map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    })
}

/// Min-max scaling into [0, 1]; a constant image maps to all zeros.
pub fn normalize_minmax(image: &GrayImage) -> GrayImage {
    let (lo, hi) = image.min_max();
    let range = hi - lo;
    if range <= 0.0 {
        return GrayImage::filled(image.width, image.height, 0.0);
    }
    GrayImage::from_raw_unchecked(
        image.width,
        image.height,
        image.data.iter().map(|&v| (v - lo) / range).collect(),
    )
}
