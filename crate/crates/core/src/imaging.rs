//! Raster containers, luminance conversion, separable filtering and dyadic
//! downsampling.
//!
//! Every border access in this module uses mirror reflection without
//! duplicating the edge sample (`-1 -> 1`, `n -> n - 2`).

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};

/// 8-bit interleaved RGB raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param(format!("image dimensions must be positive, got {width}x{height}")));
        }
        if data.len() != width * height * 3 {
            return Err(Error::param(format!(
                "RGB buffer of {} bytes does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    /// Image filled with a single color.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, data)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
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

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    /// Decode PNG or JPEG bytes. Alpha is dropped with a warning.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes)?;
        Ok(Self::from_dynamic(img))
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path.as_ref())?;
        Ok(Self::from_dynamic(img))
    }

    fn from_dynamic(img: DynamicImage) -> Self {
        if img.color().has_alpha() {
            log::warn!("dropping alpha channel from {:?} input", img.color());
        }
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self {
            width: w as usize,
            height: h as usize,
            data: rgb.into_raw(),
        }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("buffer length checked at construction");
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }
}

/// Single-channel real raster with samples nominally in `[0, 255]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param(format!("image dimensions must be positive, got {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::param(format!(
                "buffer of {} samples does not match {width}x{height}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("gray image contains non-finite samples"));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Copy of the `w`x`h` window whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        if x + w > self.width || y + h > self.height {
            return Err(Error::param(format!(
                "crop {w}x{h}+{x}+{y} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h);
        for row in y..y + h {
            let start = row * self.width + x;
            data.extend_from_slice(&self.data[start..start + w]);
        }
        Self::new(w, h, data)
    }

    /// Quantize back to an RGB image with equal channels.
    pub fn to_rgb(&self) -> ImageBuffer {
        let data = self
            .data
            .iter()
            .flat_map(|&v| {
                let q = v.round().clamp(0.0, 255.0) as u8;
                [q, q, q]
            })
            .collect();
        ImageBuffer {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// Odd-length, symmetric, unit-sum filter.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel1D {
    taps: Vec<f64>,
}

impl Kernel1D {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.len().is_multiple_of(2) {
            return Err(Error::param(format!("kernel length must be odd, got {}", taps.len())));
        }
        let sum: f64 = taps.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::param(format!("kernel taps sum to {sum}, expected 1")));
        }
        let n = taps.len();
        if (0..n / 2).any(|i| (taps[i] - taps[n - 1 - i]).abs() > 1e-12) {
            return Err(Error::param("kernel is not symmetric"));
        }
        Ok(Self { taps })
    }

    /// The identity kernel `[1]`.
    pub fn delta() -> Self {
        Self { taps: vec![1.0] }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn radius(&self) -> usize {
        self.taps.len() / 2
    }
}

/// ITU-R BT.601 luma.
pub fn to_luma(image: &ImageBuffer) -> GrayImage {
    let data = image
        .data
        .chunks_exact(3)
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect();
    GrayImage {
        width: image.width,
        height: image.height,
        data,
    }
}

/// Sampled gaussian on `[-radius, radius]`, renormalized to unit sum.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Result<Kernel1D> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::param(format!("gaussian sigma must be positive, got {sigma}")));
    }
    if radius == 0 {
        return Err(Error::param("gaussian radius must be at least 1"));
    }
    let r = radius as isize;
    let mut taps: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    // Force exact symmetry after the division.
    let n = taps.len();
    for i in 0..n / 2 {
        taps[n - 1 - i] = taps[i];
    }
    Ok(Kernel1D { taps })
}

/// Horizontal then vertical pass with mirror borders.
pub fn convolve_separable(img: &GrayImage, k: &Kernel1D) -> Result<GrayImage> {
    let min_dim = img.width.min(img.height);
    if k.taps.len() >= 2 * min_dim {
        return Err(Error::param(format!(
            "kernel of {} taps too large for {}x{} image",
            k.taps.len(),
            img.width,
            img.height
        )));
    }
    Ok(convolve_mirrored(img, k))
}

/// Gaussian low-pass (sigma 7/6, radius 3) then keep every second sample
/// from index 0. Output dimensions are `ceil(dim / 2)`.
pub fn downsample2(img: &GrayImage) -> Result<GrayImage> {
    if img.width < 2 || img.height < 2 {
        return Err(Error::param(format!(
            "cannot downsample a {}x{} image",
            img.width, img.height
        )));
    }
    let k = gaussian_kernel(7.0 / 6.0, 3)?;
    let blurred = convolve_mirrored(img, &k);
    let w = img.width.div_ceil(2);
    let h = img.height.div_ceil(2);
    let mut data = Vec::with_capacity(w * h);
    for y in (0..img.height).step_by(2) {
        for x in (0..img.width).step_by(2) {
            data.push(blurred.get(x, y));
        }
    }
    Ok(GrayImage { width: w, height: h, data })
}

/// Mirror index into `[0, n)` without repeating the edge sample. Bounces
/// repeatedly, so it is defined for offsets larger than `n`.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}

pub(crate) fn convolve_mirrored(img: &GrayImage, k: &Kernel1D) -> GrayImage {
    let (w, h) = (img.width, img.height);
    let r = k.radius() as isize;
    let taps = &k.taps;

    let mut horiz = vec![0.0; w * h];
    for y in 0..h {
        let row = &img.data[y * w..(y + 1) * w];
        let out = &mut horiz[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, &t) in taps.iter().enumerate() {
                acc += t * row[reflect(x as isize + j as isize - r, w)];
            }
            *o = acc;
        }
    }

    let mut data = vec![0.0; w * h];
    for y in 0..h {
        let rows: Vec<usize> = (0..taps.len())
            .map(|j| reflect(y as isize + j as isize - r, h) * w)
            .collect();
        let out = &mut data[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (&t, &base) in taps.iter().zip(&rows) {
                acc += t * horiz[base + x];
            }
            *o = acc;
        }
    }
    GrayImage { width: w, height: h, data }
}
