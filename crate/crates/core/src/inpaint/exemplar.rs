//! Exemplar-based inpainting: the fill front is repeatedly patched with the
//! best-matching fully known source patch, highest priority first.

use std::collections::BTreeMap;

use super::PatchPriority;
use crate::error::{Error, Result};
use crate::imaging::ImageBuffer;
use crate::maskops::BinaryMask;

pub const MIN_PATCH: usize = 5;
pub const MAX_PATCH: usize = 21;
const DATA_FLOOR: f64 = 1e-3;

struct Canvas {
    w: usize,
    h: usize,
    half: usize,
    rgb: Vec<[u8; 3]>,
    luma: Vec<f64>,
    filled: Vec<bool>,
    confidence: Vec<f64>,
}

fn luma_of(p: [u8; 3]) -> f64 {
    0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64
}

impl Canvas {
    fn at(&self, x: isize, y: isize) -> Option<usize> {
        (x >= 0 && y >= 0 && (x as usize) < self.w && (y as usize) < self.h).then(|| y as usize * self.w + x as usize)
    }

    fn is_front(&self, x: usize, y: usize) -> bool {
        if self.filled[y * self.w + x] {
            return false;
        }
        for dy in -1..=1 {
            for dx in -1..=1 {
                if let Some(n) = self.at(x as isize + dx, y as isize + dy) {
                    if self.filled[n] {
                        return true;
                    }
                }
            }
        }
        false
    }

    fn patch_confidence(&self, x: usize, y: usize) -> f64 {
        let r = self.half as isize;
        let mut sum = 0.0;
        let mut count = 0usize;
        for dy in -r..=r {
            for dx in -r..=r {
                if let Some(n) = self.at(x as isize + dx, y as isize + dy) {
                    count += 1;
                    if self.filled[n] {
                        sum += self.confidence[n];
                    }
                }
            }
        }
        sum / count as f64
    }

    /// Luma gradient at a filled pixel whose four neighbors are all filled.
    fn gradient(&self, x: usize, y: usize) -> Option<(f64, f64)> {
        let (xi, yi) = (x as isize, y as isize);
        let l = self.at(xi - 1, yi)?;
        let r = self.at(xi + 1, yi)?;
        let u = self.at(xi, yi - 1)?;
        let d = self.at(xi, yi + 1)?;
        if !(self.filled[l] && self.filled[r] && self.filled[u] && self.filled[d]) {
            return None;
        }
        Some(((self.luma[r] - self.luma[l]) / 2.0, (self.luma[d] - self.luma[u]) / 2.0))
    }

    /// Unit normal of the fill front, from a Sobel stencil on the hole indicator.
    fn front_normal(&self, x: usize, y: usize) -> (f64, f64) {
        let hole = |dx: isize, dy: isize| -> f64 {
            match self.at(x as isize + dx, y as isize + dy) {
                Some(n) if !self.filled[n] => 1.0,
                _ => 0.0,
            }
        };
        let nx = (hole(1, -1) + 2.0 * hole(1, 0) + hole(1, 1)) - (hole(-1, -1) + 2.0 * hole(-1, 0) + hole(-1, 1));
        let ny = (hole(-1, 1) + 2.0 * hole(0, 1) + hole(1, 1)) - (hole(-1, -1) + 2.0 * hole(0, -1) + hole(1, -1));
        let len = (nx * nx + ny * ny).sqrt();
        if len > 0.0 {
            (nx / len, ny / len)
        } else {
            (0.0, 0.0)
        }
    }

    fn priority(&self, x: usize, y: usize) -> PatchPriority {
        let confidence = self.patch_confidence(x, y);
        let r = self.half as isize;
        let mut best = (0.0, 0.0);
        let mut best_mag = -1.0;
        for dy in -r..=r {
            for dx in -r..=r {
                let Some(n) = self.at(x as isize + dx, y as isize + dy) else { continue };
                if !self.filled[n] {
                    continue;
                }
                if let Some((gx, gy)) = self.gradient(n % self.w, n / self.w) {
                    let mag = gx * gx + gy * gy;
                    if mag > best_mag {
                        best_mag = mag;
                        best = (gx, gy);
                    }
                }
            }
        }
        let (nx, ny) = self.front_normal(x, y);
        // Isophote is the gradient rotated by 90 degrees.
        let (ix, iy) = (-best.1, best.0);
        let data = ((ix * nx + iy * ny).abs() / 255.0).max(DATA_FLOOR);
        PatchPriority::new(confidence, data)
    }
}

/// Centers whose whole patch lies inside the image and outside the mask.
fn valid_sources(mask: &BinaryMask, half: usize) -> Vec<bool> {
    let (w, h) = mask.dimensions();
    let mut integral = vec![0u32; (w + 1) * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            integral[(y + 1) * (w + 1) + x + 1] = mask.get(x, y) as u32 + integral[y * (w + 1) + x + 1]
                + integral[(y + 1) * (w + 1) + x]
                - integral[y * (w + 1) + x];
        }
    }
    let mut ok = vec![false; w * h];
    let p = 2 * half + 1;
    if w < p || h < p {
        return ok;
    }
    for cy in half..h - half {
        for cx in half..w - half {
            let (x0, y0, x1, y1) = (cx - half, cy - half, cx + half + 1, cy + half + 1);
            let masked = integral[y1 * (w + 1) + x1] + integral[y0 * (w + 1) + x0]
                - integral[y0 * (w + 1) + x1]
                - integral[y1 * (w + 1) + x0];
            ok[cy * w + cx] = masked == 0;
        }
    }
    ok
}

/// Fill `mask` in `image` by copying `patch x patch` exemplars.
pub fn exemplar_inpaint(image: &ImageBuffer, mask: &BinaryMask, patch: usize) -> Result<ImageBuffer> {
    super::check_dimensions(image, mask)?;
    if patch.is_multiple_of(2) || !(MIN_PATCH..=MAX_PATCH).contains(&patch) {
        return Err(Error::param(format!(
            "exemplar patch size must be odd and within {MIN_PATCH}..={MAX_PATCH}, got {patch}"
        )));
    }
    if mask.is_empty() {
        return Ok(image.clone());
    }
    let (w, h) = image.dimensions();
    let half = patch / 2;
    let sources = valid_sources(mask, half);
    let source_list: Vec<usize> = (0..w * h).filter(|&i| sources[i]).collect();
    if source_list.is_empty() {
        return Err(Error::Inpaint(format!("no fully known {patch}x{patch} source patch")));
    }
    let rgb: Vec<[u8; 3]> = image.data().chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect();
    let mut c = Canvas {
        w,
        h,
        half,
        luma: rgb.iter().map(|&p| luma_of(p)).collect(),
        rgb,
        filled: mask.bits().iter().map(|&b| !b).collect(),
        confidence: mask.bits().iter().map(|&b| if b { 0.0 } else { 1.0 }).collect(),
    };
    let mut remaining = mask.area();
    let r = half as isize;
    let window = 2 * patch as isize;

    // Fill-front pixels in row-major order with their cached priority.
    let mut front: BTreeMap<usize, PatchPriority> = BTreeMap::new();
    for y in 0..h {
        for x in 0..w {
            if c.is_front(x, y) {
                front.insert(y * w + x, c.priority(x, y));
            }
        }
    }

    while remaining > 0 {
        let mut target = None;
        let mut best = f64::NEG_INFINITY;
        for (&i, p) in &front {
            if p.priority > best {
                best = p.priority;
                target = Some((i, *p));
            }
        }
        let (ti, tp) = target.ok_or_else(|| Error::Inpaint("fill front vanished with pixels remaining".into()))?;
        let (tx, ty) = (ti % w, ti / w);
        let target_conf = tp.confidence;

        // Known target pixels as (offset from the patch center, color). Every
        // candidate shares this set, so raw sums rank the same as means.
        let mut known: Vec<(isize, [i32; 3])> = Vec::with_capacity(patch * patch);
        for dy in -r..=r {
            for dx in -r..=r {
                if let Some(n) = c.at(tx as isize + dx, ty as isize + dy) {
                    if c.filled[n] {
                        let p = c.rgb[n];
                        known.push((dy * w as isize + dx, [p[0] as i32, p[1] as i32, p[2] as i32]));
                    }
                }
            }
        }

        let ssd = |center: usize, limit: u64| -> Option<u64> {
            let mut acc = 0u64;
            for &(off, t) in &known {
                let s = c.rgb[(center as isize + off) as usize];
                let d0 = s[0] as i32 - t[0];
                let d1 = s[1] as i32 - t[1];
                let d2 = s[2] as i32 - t[2];
                acc += (d0 * d0 + d1 * d1 + d2 * d2) as u64;
                if acc >= limit {
                    return None;
                }
            }
            Some(acc)
        };
        let (tx_i, ty_i) = (tx as isize, ty as isize);
        let mut best: Option<usize> = None;
        let mut best_ssd = u64::MAX;
        for cy in (ty_i - window).max(0)..=(ty_i + window).min(h as isize - 1) {
            for cx in (tx_i - window).max(0)..=(tx_i + window).min(w as isize - 1) {
                let i = cy as usize * w + cx as usize;
                if !sources[i] {
                    continue;
                }
                if let Some(d) = ssd(i, best_ssd) {
                    best_ssd = d;
                    best = Some(i);
                }
            }
        }
        if best.is_none() {
            for &i in &source_list {
                if let Some(d) = ssd(i, best_ssd) {
                    best_ssd = d;
                    best = Some(i);
                }
            }
        }
        let best = best.ok_or_else(|| Error::Inpaint("no source patch matched".into()))?;
        let (sx, sy) = (best % w, best / w);

        for dy in -r..=r {
            for dx in -r..=r {
                let Some(n) = c.at(tx_i + dx, ty_i + dy) else { continue };
                if c.filled[n] {
                    continue;
                }
                let s = c.rgb[(sy as isize + dy) as usize * w + (sx as isize + dx) as usize];
                c.rgb[n] = s;
                c.luma[n] = luma_of(s);
                c.filled[n] = true;
                c.confidence[n] = target_conf;
                remaining -= 1;
            }
        }

        let reach = 2 * r + 2;
        let (y0, y1) = ((ty_i - reach).max(0), (ty_i + reach).min(h as isize - 1));
        let (x0, x1) = ((tx_i - reach).max(0), (tx_i + reach).min(w as isize - 1));
        for y in y0 as usize..=y1 as usize {
            for x in x0 as usize..=x1 as usize {
                if c.is_front(x, y) {
                    front.insert(y * w + x, c.priority(x, y));
                } else {
                    front.remove(&(y * w + x));
                }
            }
        }
    }

    let mut out = image.clone();
    for (i, &set) in mask.bits().iter().enumerate() {
        if set {
            out.set_pixel(i % w, i / w, c.rgb[i]);
        }
    }
    Ok(out)
}
