//! Fast-marching inpainting: masked pixels are filled in increasing order of
//! their arrival time from the hole boundary, each from a weighted first-order
//! extrapolation of the already known pixels around it.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::imaging::ImageBuffer;
use crate::maskops::BinaryMask;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Flag {
    Known,
    Band,
    Inside,
}

#[derive(PartialEq)]
struct Front {
    t: f64,
    idx: usize,
}

impl Eq for Front {}

impl Ord for Front {
    // Min-heap on arrival time, ties broken by row-major index.
    fn cmp(&self, other: &Self) -> Ordering {
        other.t.total_cmp(&self.t).then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Front {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Marcher {
    w: usize,
    h: usize,
    radius: usize,
    flags: Vec<Flag>,
    t: Vec<f64>,
    pixels: Vec<[f64; 3]>,
}

impl Marcher {
    fn solve_eikonal(&self, a: Option<usize>, b: Option<usize>) -> f64 {
        let ta = a.filter(|&i| self.flags[i] != Flag::Inside).map(|i| self.t[i]);
        let tb = b.filter(|&i| self.flags[i] != Flag::Inside).map(|i| self.t[i]);
        match (ta, tb) {
            (Some(t1), Some(t2)) => {
                let r = 2.0 - (t1 - t2) * (t1 - t2);
                if r > 0.0 {
                    let s = (t1 + t2 + r.sqrt()) / 2.0;
                    if s >= t1.max(t2) {
                        return s;
                    }
                }
                1.0 + t1.min(t2)
            }
            (Some(t), None) | (None, Some(t)) => 1.0 + t,
            (None, None) => f64::INFINITY,
        }
    }

    fn neighbor(&self, x: usize, y: usize, dx: isize, dy: isize) -> Option<usize> {
        let nx = x as isize + dx;
        let ny = y as isize + dy;
        (nx >= 0 && ny >= 0 && (nx as usize) < self.w && (ny as usize) < self.h)
            .then(|| ny as usize * self.w + nx as usize)
    }

    fn arrival_time(&self, x: usize, y: usize) -> f64 {
        let l = self.neighbor(x, y, -1, 0);
        let r = self.neighbor(x, y, 1, 0);
        let u = self.neighbor(x, y, 0, -1);
        let d = self.neighbor(x, y, 0, 1);
        self.solve_eikonal(l, u)
            .min(self.solve_eikonal(r, u))
            .min(self.solve_eikonal(l, d))
            .min(self.solve_eikonal(r, d))
    }

    fn usable(&self, i: Option<usize>) -> Option<usize> {
        i.filter(|&i| self.flags[i] != Flag::Inside)
    }

    /// One-axis derivative of `value` at `(x, y)` over non-inside neighbors.
    fn derivative(&self, x: usize, y: usize, dx: isize, dy: isize, value: impl Fn(usize) -> f64) -> f64 {
        let c = y * self.w + x;
        let fwd = self.usable(self.neighbor(x, y, dx, dy));
        let back = self.usable(self.neighbor(x, y, -dx, -dy));
        match (fwd, back) {
            (Some(f), Some(b)) => (value(f) - value(b)) / 2.0,
            (Some(f), None) => value(f) - value(c),
            (None, Some(b)) => value(c) - value(b),
            (None, None) => 0.0,
        }
    }

    fn fill(&mut self, x: usize, y: usize) {
        let idx = y * self.w + x;
        let gtx = self.derivative(x, y, 1, 0, |i| self.t[i]);
        let gty = self.derivative(x, y, 0, 1, |i| self.t[i]);
        let gnorm = (gtx * gtx + gty * gty).sqrt();
        let r = self.radius as isize;

        let mut acc = [0.0f64; 3];
        let mut wsum = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                let dist2 = (dx * dx + dy * dy) as f64;
                if dist2 == 0.0 || dist2 > (r * r) as f64 {
                    continue;
                }
                let Some(k) = self.usable(self.neighbor(x, y, dx, dy)) else {
                    continue;
                };
                let (kx, ky) = (k % self.w, k / self.w);
                // Vector from the known pixel to the one being filled.
                let (rx, ry) = (-dx as f64, -dy as f64);
                let len = dist2.sqrt();
                let dir = if gnorm > 0.0 {
                    ((rx * gtx + ry * gty) / (len * gnorm)).abs().max(1e-6)
                } else {
                    1.0
                };
                let dst = 1.0 / dist2;
                let lev = 1.0 / (1.0 + (self.t[k] - self.t[idx]).abs());
                let wgt = dir * dst * lev;
                for (c, a) in acc.iter_mut().enumerate() {
                    let gx = self.derivative(kx, ky, 1, 0, |i| self.pixels[i][c]);
                    let gy = self.derivative(kx, ky, 0, 1, |i| self.pixels[i][c]);
                    *a += wgt * (self.pixels[k][c] + gx * rx + gy * ry);
                }
                wsum += wgt;
            }
        }
        if wsum > 0.0 {
            for (c, a) in acc.iter().enumerate() {
                self.pixels[idx][c] = (a / wsum).clamp(0.0, 255.0);
            }
        }
    }
}

/// Fill `mask` in `image` using neighbors within `radius` pixels.
pub fn fast_marching_inpaint(image: &ImageBuffer, mask: &BinaryMask, radius: usize) -> Result<ImageBuffer> {
    super::check_dimensions(image, mask)?;
    if radius < 1 {
        return Err(Error::param("fast-marching radius must be at least 1"));
    }
    if mask.is_empty() {
        return Ok(image.clone());
    }
    if mask.area() == mask.width() * mask.height() {
        return Err(Error::Inpaint("mask covers the entire image".into()));
    }
    let (w, h) = image.dimensions();
    let mut m = Marcher {
        w,
        h,
        radius,
        flags: mask.bits().iter().map(|&b| if b { Flag::Inside } else { Flag::Known }).collect(),
        t: mask.bits().iter().map(|&b| if b { f64::INFINITY } else { 0.0 }).collect(),
        pixels: image
            .data()
            .chunks_exact(3)
            .map(|p| [p[0] as f64, p[1] as f64, p[2] as f64])
            .collect(),
    };

    let mut heap = BinaryHeap::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if m.flags[i] != Flag::Known {
                continue;
            }
            let borders_hole = [(-1, 0), (1, 0), (0, -1), (0, 1)]
                .iter()
                .any(|&(dx, dy)| m.neighbor(x, y, dx, dy).is_some_and(|n| m.flags[n] == Flag::Inside));
            if borders_hole {
                m.flags[i] = Flag::Band;
                heap.push(Front { t: 0.0, idx: i });
            }
        }
    }

    while let Some(Front { idx, .. }) = heap.pop() {
        if m.flags[idx] == Flag::Known {
            continue;
        }
        m.flags[idx] = Flag::Known;
        let (x, y) = (idx % w, idx / w);
        for (dx, dy) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
            let Some(n) = m.neighbor(x, y, dx, dy) else { continue };
            if m.flags[n] != Flag::Inside {
                continue;
            }
            let (nx, ny) = (n % w, n / w);
            m.t[n] = m.arrival_time(nx, ny);
            m.fill(nx, ny);
            m.flags[n] = Flag::Band;
            heap.push(Front { t: m.t[n], idx: n });
        }
    }

    let mut out = image.clone();
    for (i, &set) in mask.bits().iter().enumerate() {
        if set {
            let p = m.pixels[i];
            out.set_pixel(i % w, i / w, p.map(|v| v.round() as u8));
        }
    }
    Ok(out)
}
