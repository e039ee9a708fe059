#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use retouch_core::{BinaryMask, ImageBuffer};

/// Dilation by checking every pixel against every mask pixel.
pub fn brute_force_dilate(mask: &BinaryMask, b: f64) -> Vec<bool> {
    let (w, h) = mask.dimensions();
    let set: Vec<(i64, i64)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| mask.get(x, y))
        .map(|(x, y)| (x as i64, y as i64))
        .collect();
    let b2 = b * b;
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = set.iter().any(|&(mx, my)| {
                let (dx, dy) = (mx - x as i64, my - y as i64);
                ((dx * dx + dy * dy) as f64) <= b2
            });
        }
    }
    out
}

/// A few random rectangles and isolated points, occasionally empty.
pub fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> BinaryMask {
    let mut bits = vec![false; w * h];
    let shapes = rng.random_range(0..5);
    for _ in 0..shapes {
        let (x0, y0) = (rng.random_range(0..w), rng.random_range(0..h));
        let (rw, rh) = (rng.random_range(1..=w.div_ceil(3)), rng.random_range(1..=h.div_ceil(3)));
        for y in y0..(y0 + rh).min(h) {
            for x in x0..(x0 + rw).min(w) {
                bits[y * w + x] = true;
            }
        }
    }
    for _ in 0..rng.random_range(0..4) {
        bits[rng.random_range(0..w * h)] = true;
    }
    BinaryMask::new(w, h, bits).unwrap()
}

pub fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> ImageBuffer {
    let data = (0..w * h * 3).map(|_| rng.random()).collect();
    ImageBuffer::new(w, h, data).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Non-empty hole that keeps a 9-pixel band along the top and left edges
/// known, so every method has source material.
pub fn random_hole(rng: &mut ChaCha8Rng, w: usize, h: usize) -> BinaryMask {
    assert!(w > 12 && h > 12);
    let mut bits = vec![false; w * h];
    for _ in 0..rng.random_range(1..4) {
        let (x0, y0) = (rng.random_range(9..w), rng.random_range(9..h));
        let (rw, rh) = (rng.random_range(1..=(w - 9) / 2), rng.random_range(1..=(h - 9) / 2));
        for y in y0..(y0 + rh).min(h) {
            for x in x0..(x0 + rw).min(w) {
                bits[y * w + x] = true;
            }
        }
    }
    BinaryMask::new(w, h, bits).unwrap()
}

/// Same image with every masked pixel replaced by noise.
pub fn scramble_masked(rng: &mut ChaCha8Rng, image: &ImageBuffer, mask: &BinaryMask) -> ImageBuffer {
    let mut out = image.clone();
    let (w, h) = image.dimensions();
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                out.set_pixel(x, y, [rng.random(), rng.random(), rng.random()]);
            }
        }
    }
    out
}

pub fn outside_identical(a: &ImageBuffer, b: &ImageBuffer, mask: &BinaryMask) -> bool {
    let (w, h) = a.dimensions();
    (0..h).all(|y| (0..w).all(|x| mask.get(x, y) || a.pixel(x, y) == b.pixel(x, y)))
}
