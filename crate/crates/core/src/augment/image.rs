use std::collections::HashMap;
use std::path::{Path, PathBuf};

use super::AugmentError;

/// Row-major 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, AugmentError> {
        if width == 0 || height == 0 {
            return Err(AugmentError::ZeroSizedImage);
        }
        let expected = 3 * width as usize * height as usize;
        if pixels.len() != expected {
            return Err(AugmentError::Image(format!(
                "pixel buffer holds {} bytes, {width}x{height} needs {expected}",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn solid(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, AugmentError> {
        Self::from_fn(width, height, |_, _| rgb)
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> [u8; 3]) -> Result<Self, AugmentError> {
        let mut pixels = Vec::with_capacity(3 * width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn read_png(path: impl AsRef<Path>) -> Result<Self, AugmentError> {
        let img = image::open(path.as_ref())?.to_rgb8();
        let (w, h) = img.dimensions();
        Self::new(w, h, img.into_raw())
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<(), AugmentError> {
        let buf = image::RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("buffer length checked at construction");
        buf.save_with_format(path.as_ref(), image::ImageFormat::Png)?;
        Ok(())
    }

    /// Nearest-neighbour resize to `height`, keeping the aspect ratio
    /// (width rounded half up, at least 1).
    pub fn scale_to_height(&self, height: u32) -> Result<Self, AugmentError> {
        if height == 0 {
            return Err(AugmentError::ZeroSizedImage);
        }
        if height == self.height {
            return Ok(self.clone());
        }
        let (w, h) = (u64::from(self.width), u64::from(self.height));
        let width = ((2 * w * u64::from(height) + h) / (2 * h)).max(1) as u32;
        // sample at pixel centres: src = floor((dst + 0.5) * src_len / dst_len)
        let centre = |dst: u32, src_len: u64, dst_len: u32| ((2 * u64::from(dst) + 1) * src_len / (2 * u64::from(dst_len))) as u32;
        let src_x: Vec<u32> = (0..width).map(|x| centre(x, w, width)).collect();
        let mut pixels = Vec::with_capacity(3 * width as usize * height as usize);
        for y in 0..height {
            let sy = centre(y, h, height);
            for &sx in &src_x {
                pixels.extend_from_slice(&self.pixel(sx, sy));
            }
        }
        Self::new(width, height, pixels)
    }
}

/// Places `retrieved` (or a copy of `query` when absent) to the right of
/// `query`, rescaled to the query height.
pub fn concat_images(query: &RgbImage, retrieved: Option<&RgbImage>) -> Result<RgbImage, AugmentError> {
    let right = retrieved.unwrap_or(query).scale_to_height(query.height)?;
    let width = query.width + right.width;
    let mut pixels = Vec::with_capacity(3 * width as usize * query.height as usize);
    let (lrow, rrow) = (3 * query.width as usize, 3 * right.width as usize);
    for y in 0..query.height as usize {
        pixels.extend_from_slice(&query.pixels[y * lrow..(y + 1) * lrow]);
        pixels.extend_from_slice(&right.pixels[y * rrow..(y + 1) * rrow]);
    }
    RgbImage::new(width, query.height, pixels)
}

/// Resolves `image_ref`s to rasters. `Ok(None)` means the image is
/// unavailable, which callers treat as missing data rather than failure.
pub trait ImageSource: Sync {
    fn load(&self, image_ref: &str) -> Result<Option<RgbImage>, AugmentError>;
}

/// PNG files addressed relative to a root directory.
#[derive(Debug, Clone)]
pub struct FsImageSource {
    root: PathBuf,
}

impl FsImageSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
}

impl ImageSource for FsImageSource {
    fn load(&self, image_ref: &str) -> Result<Option<RgbImage>, AugmentError> {
        if image_ref.is_empty() {
            return Ok(None);
        }
        let path = self.root.join(image_ref);
        if !path.is_file() {
            return Ok(None);
        }
        RgbImage::read_png(path).map(Some)
    }
}

#[derive(Debug, Clone, Default)]
pub struct MemoryImageSource {
    images: HashMap<String, RgbImage>,
}

impl MemoryImageSource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, image_ref: impl Into<String>, image: RgbImage) {
        self.images.insert(image_ref.into(), image);
    }
}

impl ImageSource for MemoryImageSource {
    fn load(&self, image_ref: &str) -> Result<Option<RgbImage>, AugmentError> {
        Ok(self.images.get(image_ref).cloned())
    }
}
