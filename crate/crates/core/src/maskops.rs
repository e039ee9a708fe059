//! Logit thresholding and Euclidean buffer dilation of segmentation masks.
//!
//! A segmenter produces an unbounded per-pixel [`LogitMap`]. Two knobs turn it
//! into the region handed to the inpainter: the threshold `t` (a pixel is kept
//! when `logit >= t`) and the buffer radius `b` (every pixel whose Euclidean
//! distance to the thresholded region is at most `b` is added).

use std::io::Cursor;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LGT_MAGIC: &[u8; 4] = b"LGT1";

/// Per-pixel segmentation confidence before binarization.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl LogitMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param(format!("logit map dimensions must be positive, got {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::param(format!(
                "{} logits do not match {width}x{height}",
                data.len()
            )));
        }
        if data.iter().any(|v| v.is_nan()) {
            return Err(Error::param("logit map contains NaN"));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
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

    pub fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Pixelwise maximum. Thresholding the result equals the union of the
    /// individually thresholded maps.
    pub fn pointwise_max(maps: &[LogitMap]) -> Result<LogitMap> {
        let first = maps
            .first()
            .ok_or_else(|| Error::param("cannot combine an empty list of logit maps"))?;
        let mut data = first.data.clone();
        for m in &maps[1..] {
            if m.dimensions() != first.dimensions() {
                return Err(Error::param(format!(
                    "logit maps differ in size: {}x{} vs {}x{}",
                    first.width, first.height, m.width, m.height
                )));
            }
            for (acc, &v) in data.iter_mut().zip(&m.data) {
                *acc = acc.max(v);
            }
        }
        LogitMap::new(first.width, first.height, data)
    }

    /// Serialize as `LGT1`: magic, u32 LE width, u32 LE height, then f32 LE
    /// samples in row-major order.
    pub fn to_lgt1(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.data.len());
        out.extend_from_slice(LGT_MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_lgt1(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[0..4] != LGT_MAGIC {
            return Err(Error::Format("missing LGT1 header".into()));
        }
        let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(4))
            .and_then(|n| n.checked_add(12))
            .ok_or_else(|| Error::Format("LGT1 dimensions overflow".into()))?;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "LGT1 payload is {} bytes, expected {expected} for {width}x{height}",
                bytes.len()
            )));
        }
        let data = bytes[12..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        LogitMap::new(width, height, data).map_err(|e| Error::Format(e.to_string()))
    }
}

/// The `(t, b)` operating point of the mask refinement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskParams {
    pub t: f64,
    pub b: f64,
}

impl MaskParams {
    /// Raw segmenter output: threshold at zero, default buffer.
    pub const RAW: MaskParams = MaskParams { t: 0.0, b: 15.0 };
    /// Threshold and buffer used for unattended runs.
    pub const AUTOMATION: MaskParams = MaskParams { t: -10.0, b: 15.0 };

    pub fn new(t: f64, b: f64) -> Result<Self> {
        let p = MaskParams { t, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t.is_finite() {
            return Err(Error::param(format!("threshold t must be finite, got {}", self.t)));
        }
        if !(self.b >= 0.0) || !self.b.is_finite() {
            return Err(Error::param(format!("buffer radius b must be finite and >= 0, got {}", self.b)));
        }
        Ok(())
    }
}

impl Default for MaskParams {
    fn default() -> Self {
        Self::AUTOMATION
    }
}

/// Which operations produced a mask. `t` is absent when the mask did not come
/// from thresholding (e.g. it was loaded from disk).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskProvenance {
    pub t: Option<f64>,
    pub b: f64,
}

/// Binary raster; `true` marks pixels to be removed.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
    provenance: Option<MaskProvenance>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param(format!("mask dimensions must be positive, got {width}x{height}")));
        }
        if bits.len() != width * height {
            return Err(Error::param(format!("{} mask bits do not match {width}x{height}", bits.len())));
        }
        Ok(Self {
            width,
            height,
            bits,
            provenance: None,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self::new(width, height, bits)
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

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn provenance(&self) -> Option<MaskProvenance> {
        self.provenance
    }

    pub fn with_provenance(mut self, provenance: Option<MaskProvenance>) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn coverage(&self) -> f64 {
        self.area() as f64 / (self.width * self.height) as f64
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Same dimensions and same set pixels, ignoring provenance.
    pub fn same_pixels(&self, other: &BinaryMask) -> bool {
        self.dimensions() == other.dimensions() && self.bits == other.bits
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dimensions() == other.dimensions()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Tight `(x, y, w, h)` box around the set pixels.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut x0 = usize::MAX;
        let mut y0 = usize::MAX;
        let mut x1 = 0;
        let mut y1 = 0;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        (x0 != usize::MAX).then(|| (x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }

    /// 8-bit grayscale PNG with values {0, 255}.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let raw = self.bits.iter().map(|&b| if b { 255u8 } else { 0 }).collect();
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("length checked at construction");
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    /// Decode a mask image; any luma of 128 or more counts as set.
    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes)?.to_luma8();
        let (w, h) = img.dimensions();
        let bits = img.into_raw().into_iter().map(|v| v >= 128).collect();
        Self::new(w as usize, h as usize, bits)
    }
}

/// Exact Euclidean distance from every pixel to the nearest set pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceField {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DistanceField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Distances in row-major order; all `f64::INFINITY` for an empty mask.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Pixel set iff `logit >= t`.
pub fn threshold_logits(logits: &LogitMap, t: f64) -> BinaryMask {
    let bits = logits.data.iter().map(|&v| v as f64 >= t).collect();
    BinaryMask {
        width: logits.width,
        height: logits.height,
        bits,
        provenance: Some(MaskProvenance { t: Some(t), b: 0.0 }),
    }
}

const UNREACHED: u64 = u64::MAX;

/// Squared distances via the separable lower-envelope method: a 1-D scan down
/// each column, then the lower envelope of parabolas along each row.
pub(crate) fn squared_distances(mask: &BinaryMask) -> Vec<u64> {
    let (w, h) = mask.dimensions();
    let mut col = vec![UNREACHED; w * h];

    for x in 0..w {
        let mut last: Option<usize> = None;
        for y in 0..h {
            if mask.get(x, y) {
                last = Some(y);
            }
            if let Some(l) = last {
                col[y * w + x] = (y - l) as u64;
            }
        }
        let mut next: Option<usize> = None;
        for y in (0..h).rev() {
            if mask.get(x, y) {
                next = Some(y);
            }
            if let Some(n) = next {
                let d = (n - y) as u64;
                let cur = &mut col[y * w + x];
                if *cur == UNREACHED || d < *cur {
                    *cur = d;
                }
            }
        }
    }

    let mut out = vec![UNREACHED; w * h];
    let mut f = vec![UNREACHED; w];
    let mut sites = vec![0usize; w];
    let mut bounds = vec![0f64; w + 1];
    for y in 0..h {
        for x in 0..w {
            let d = col[y * w + x];
            f[x] = if d == UNREACHED { UNREACHED } else { d * d };
        }
        lower_envelope(&f, &mut sites, &mut bounds, &mut out[y * w..(y + 1) * w]);
    }
    out
}

fn lower_envelope(f: &[u64], sites: &mut [usize], bounds: &mut [f64], out: &mut [u64]) {
    let n = f.len();
    let mut k: usize = 0;
    let mut any = false;
    let key = |q: usize| f[q] as f64 + (q * q) as f64;

    for q in 0..n {
        if f[q] == UNREACHED {
            continue;
        }
        if !any {
            any = true;
            sites[0] = q;
            bounds[0] = f64::NEG_INFINITY;
            bounds[1] = f64::INFINITY;
            continue;
        }
        // bounds[0] is -inf, so the scan always stops at k == 0.
        let mut s;
        loop {
            let v = sites[k];
            s = (key(q) - key(v)) / (2.0 * (q as f64 - v as f64));
            if k > 0 && s <= bounds[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        sites[k] = q;
        bounds[k] = s;
        bounds[k + 1] = f64::INFINITY;
    }

    if !any {
        out.fill(UNREACHED);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while bounds[k + 1] < q as f64 {
            k += 1;
        }
        let v = sites[k];
        let dx = q.abs_diff(v) as u64;
        *o = dx * dx + f[v];
    }
}

/// Exact Euclidean distance transform. An empty mask yields an all-infinite
/// field.
pub fn distance_transform(mask: &BinaryMask) -> DistanceField {
    let data = squared_distances(mask)
        .into_iter()
        .map(|d| if d == UNREACHED { f64::INFINITY } else { (d as f64).sqrt() })
        .collect();
    DistanceField {
        width: mask.width,
        height: mask.height,
        data,
    }
}

/// Grow the mask by a Euclidean disk of radius `b`: a pixel is set iff its
/// distance to the mask is at most `b`.
pub fn buffer_dilate(mask: &BinaryMask, b: f64) -> Result<BinaryMask> {
    if !(b >= 0.0) || !b.is_finite() {
        return Err(Error::param(format!("buffer radius must be finite and >= 0, got {b}")));
    }
    let provenance = Some(match mask.provenance {
        Some(p) => MaskProvenance { t: p.t, b: p.b + b },
        None => MaskProvenance { t: None, b },
    });
    if b == 0.0 || mask.is_empty() {
        return Ok(mask.clone().with_provenance(provenance));
    }
    let dist = distance_transform(mask);
    let bits = dist.data.iter().map(|&d| d <= b).collect();
    Ok(BinaryMask {
        width: mask.width,
        height: mask.height,
        bits,
        provenance,
    })
}

/// Bitwise OR of equally sized masks.
pub fn union(masks: &[BinaryMask]) -> Result<BinaryMask> {
    let first = masks
        .first()
        .ok_or_else(|| Error::param("union of an empty list of masks"))?;
    let mut bits = first.bits.clone();
    for m in &masks[1..] {
        if m.dimensions() != first.dimensions() {
            return Err(Error::param(format!(
                "mask size mismatch: {}x{} vs {}x{}",
                first.width, first.height, m.width, m.height
            )));
        }
        for (acc, &b) in bits.iter_mut().zip(&m.bits) {
            *acc |= b;
        }
    }
    BinaryMask::new(first.width, first.height, bits)
}

/// Threshold at `params.t`, then dilate by `params.b`.
pub fn refine(logits: &LogitMap, params: MaskParams) -> Result<BinaryMask> {
    params.validate()?;
    buffer_dilate(&threshold_logits(logits, params.t), params.b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: usize, h: usize, px: usize, py: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| x == px && y == py).unwrap()
    }

    #[test]
    fn threshold_is_closed() {
        let logits = LogitMap::new(3, 1, vec![-12.0, -10.0, -3.0]).unwrap();
        let m = threshold_logits(&logits, -10.0);
        assert_eq!(m.bits(), &[false, true, true]);
        assert_eq!(m.provenance(), Some(MaskProvenance { t: Some(-10.0), b: 0.0 }));
    }

    #[test]
    fn threshold_extremes() {
        let logits = LogitMap::from_fn(4, 4, |x, y| x as f32 - y as f32 * 3.0).unwrap();
        assert!(threshold_logits(&logits, 100.0).is_empty());
        assert_eq!(threshold_logits(&logits, -1e9).area(), 16);
    }

    #[test]
    fn distance_three_four_five() {
        let d = distance_transform(&single(8, 8, 0, 0));
        assert_eq!(d.get(3, 4), 5.0);
        assert_eq!(d.get(0, 0), 0.0);
    }

    #[test]
    fn distance_of_full_and_empty_masks() {
        let full = BinaryMask::from_fn(5, 3, |_, _| true).unwrap();
        assert!(distance_transform(&full).data().iter().all(|&d| d == 0.0));
        let empty = BinaryMask::empty(5, 3).unwrap();
        assert!(distance_transform(&empty).data().iter().all(|d| d.is_infinite()));
    }

    #[test]
    fn dilate_single_pixel_gives_plus() {
        let m = single(7, 7, 3, 3);
        let d = buffer_dilate(&m, 1.0).unwrap();
        assert_eq!(d.area(), 5);
        for (x, y) in [(3, 3), (2, 3), (4, 3), (3, 2), (3, 4)] {
            assert!(d.get(x, y));
        }
    }

    #[test]
    fn dilate_zero_is_identity() {
        let m = BinaryMask::from_fn(9, 6, |x, y| (x * y) % 4 == 1).unwrap();
        assert!(buffer_dilate(&m, 0.0).unwrap().same_pixels(&m));
    }

    #[test]
    fn dilate_rejects_negative_radius() {
        let m = single(4, 4, 1, 1);
        assert!(matches!(buffer_dilate(&m, -1.0), Err(Error::Parameter(_))));
        assert!(buffer_dilate(&m, f64::NAN).is_err());
    }

    #[test]
    fn union_properties() {
        let a = BinaryMask::from_fn(6, 5, |x, _| x < 2).unwrap();
        let b = BinaryMask::from_fn(6, 5, |_, y| y == 4).unwrap();
        let empty = BinaryMask::empty(6, 5).unwrap();
        assert!(union(&[a.clone()]).unwrap().same_pixels(&a));
        assert!(union(&[a.clone(), empty]).unwrap().same_pixels(&a));
        let ab = union(&[a.clone(), b.clone()]).unwrap();
        assert!(ab.same_pixels(&union(&[b.clone(), a.clone()]).unwrap()));
        assert_eq!(ab.provenance(), None);
        let other = BinaryMask::empty(5, 5).unwrap();
        assert!(union(&[a, other]).is_err());
        assert!(union(&[]).is_err());
    }

    #[test]
    fn refine_composes_and_records_params() {
        let logits = LogitMap::from_fn(40, 40, |x, y| {
            let d = ((x as f32 - 20.0).powi(2) + (y as f32 - 20.0).powi(2)).sqrt();
            5.0 - d
        })
        .unwrap();
        let p = MaskParams::AUTOMATION;
        let r = refine(&logits, p).unwrap();
        let manual = buffer_dilate(&threshold_logits(&logits, -10.0), 15.0).unwrap();
        assert!(r.same_pixels(&manual));
        assert_eq!(r.provenance(), Some(MaskProvenance { t: Some(-10.0), b: 15.0 }));

        let raw = refine(&logits, MaskParams { t: 0.0, b: 0.0 }).unwrap();
        assert!(raw.same_pixels(&threshold_logits(&logits, 0.0)));

        let none = refine(&logits, MaskParams { t: 1e6, b: 30.0 }).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn lgt1_layout_is_bit_exact() {
        let m = LogitMap::new(2, 1, vec![1.5, -2.0]).unwrap();
        let bytes = m.to_lgt1();
        let mut expected = b"LGT1".to_vec();
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1.5f32.to_le_bytes());
        expected.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(bytes, expected);
        assert_eq!(LogitMap::from_lgt1(&bytes).unwrap(), m);
    }

    #[test]
    fn lgt1_rejects_garbage() {
        assert!(LogitMap::from_lgt1(b"LGT2\0\0\0\0\0\0\0\0").is_err());
        let mut short = LogitMap::new(2, 2, vec![0.0; 4]).unwrap().to_lgt1();
        short.pop();
        assert!(LogitMap::from_lgt1(&short).is_err());
    }

    #[test]
    fn mask_png_round_trip() {
        let m = BinaryMask::from_fn(11, 7, |x, y| (x + 2 * y) % 3 == 0).unwrap();
        let png = m.encode_png().unwrap();
        let back = BinaryMask::decode_png(&png).unwrap();
        assert!(back.same_pixels(&m));
        let raw = image::load_from_memory(&png).unwrap().to_luma8();
        assert!(raw.pixels().all(|p| p.0[0] == 0 || p.0[0] == 255));
    }

    #[test]
    fn pointwise_max_matches_union_of_thresholds() {
        let a = LogitMap::from_fn(8, 8, |x, _| x as f32 - 4.0).unwrap();
        let b = LogitMap::from_fn(8, 8, |_, y| 2.0 - y as f32).unwrap();
        let m = LogitMap::pointwise_max(&[a.clone(), b.clone()]).unwrap();
        for t in [-3.0, 0.0, 1.5] {
            let u = union(&[threshold_logits(&a, t), threshold_logits(&b, t)]).unwrap();
            assert!(threshold_logits(&m, t).same_pixels(&u));
        }
    }

    #[test]
    fn bounding_box_of_mask() {
        let m = BinaryMask::from_fn(10, 10, |x, y| (2..5).contains(&x) && (6..8).contains(&y)).unwrap();
        assert_eq!(m.bounding_box(), Some((2, 6, 3, 2)));
        assert_eq!(BinaryMask::empty(3, 3).unwrap().bounding_box(), None);
    }
}
