//! Seeded procedural scenes with exact ground truth: a value-noise background,
//! one object with a saturated striped texture, a faint drop shadow, and
//! logits that encode signed distance to the object boundary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ImageBuffer;
use crate::maskops::{distance_transform, BinaryMask, LogitMap};

pub const DEFAULT_SCENE_SIDE: usize = 288;
const MIN_SIDE: usize = 64;
const OBJECT_SATURATION: i32 = 140;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Ellipse,
    Rectangle,
    Ring,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub label: String,
    /// Drawn from the seed when absent.
    pub shape: Option<ShapeKind>,
    /// Multiplies the object's size, which is otherwise 11-18% of the short side per semi-axis.
    pub object_scale: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: DEFAULT_SCENE_SIDE,
            height: DEFAULT_SCENE_SIDE,
            label: "cat".into(),
            shape: None,
            object_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub image: ImageBuffer,
    pub object_mask_truth: BinaryMask,
    pub logits_truth: LogitMap,
    pub background_reference: ImageBuffer,
    pub object_label: String,
    pub shape: ShapeKind,
    pub seed: u64,
}

/// True for colors only the object texture uses.
pub fn is_object_texture(p: [u8; 3]) -> bool {
    let max = *p.iter().max().unwrap() as i32;
    let min = *p.iter().min().unwrap() as i32;
    max - min >= OBJECT_SATURATION
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Sum of value-noise octaves, normalized to [0, 1].
fn value_noise(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let octaves = [(48usize, 1.0), (24, 0.5), (12, 0.25), (6, 0.125), (3, 0.0625)];
    let total: f64 = octaves.iter().map(|o| o.1).sum();
    let mut out = vec![0.0; w * h];
    for &(cell, amp) in &octaves {
        let gw = w / cell + 2;
        let gh = h / cell + 2;
        let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random::<f64>()).collect();
        for y in 0..h {
            let fy = y as f64 / cell as f64;
            let (y0, ty) = (fy.floor() as usize, smoothstep(fy.fract()));
            for x in 0..w {
                let fx = x as f64 / cell as f64;
                let (x0, tx) = (fx.floor() as usize, smoothstep(fx.fract()));
                let v00 = lattice[y0 * gw + x0];
                let v10 = lattice[y0 * gw + x0 + 1];
                let v01 = lattice[(y0 + 1) * gw + x0];
                let v11 = lattice[(y0 + 1) * gw + x0 + 1];
                let top = v00 + (v10 - v00) * tx;
                let bottom = v01 + (v11 - v01) * tx;
                out[y * w + x] += amp * (top + (bottom - top) * ty) / total;
            }
        }
    }
    out
}

fn earthy_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let base = rng.random_range(60.0..190.0);
    [
        base + rng.random_range(-20.0..20.0),
        base + rng.random_range(-20.0..20.0),
        base + rng.random_range(-20.0..20.0),
    ]
}

fn render_background(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let blend = value_noise(w, h, rng);
    let shade = value_noise(w, h, rng);
    let c1 = earthy_color(rng);
    let c2 = earthy_color(rng);
    let grain = Normal::new(0.0, 3.0).unwrap();
    (0..w * h)
        .map(|i| {
            let g = grain.sample(rng) + 40.0 * (shade[i] - 0.5);
            let n = blend[i];
            [0, 1, 2].map(|c| c1[c] * (1.0 - n) + c2[c] * n + g)
        })
        .collect()
}

fn quantize(w: usize, h: usize, px: &[[f64; 3]]) -> ImageBuffer {
    ImageBuffer::from_fn(w, h, |x, y| px[y * w + x].map(|v| v.round().clamp(0.0, 255.0) as u8))
        .expect("dimensions already validated")
}

/// A pristine textured background without any object.
pub fn background(seed: u64, width: usize, height: usize) -> Result<ImageBuffer> {
    check_size(width, height)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(quantize(width, height, &render_background(width, height, &mut rng)))
}

fn check_size(width: usize, height: usize) -> Result<()> {
    if width < MIN_SIDE || height < MIN_SIDE {
        return Err(Error::param(format!(
            "synthetic images need at least {MIN_SIDE}x{MIN_SIDE}, got {width}x{height}"
        )));
    }
    Ok(())
}

struct Shape {
    kind: ShapeKind,
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    angle: f64,
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = (dx * c + dy * s) / self.rx;
        let v = (-dx * s + dy * c) / self.ry;
        match self.kind {
            ShapeKind::Ellipse => u * u + v * v <= 1.0,
            ShapeKind::Rectangle => u.abs() <= 1.0 && v.abs() <= 1.0,
            ShapeKind::Ring => {
                let r2 = u * u + v * v;
                (0.25..=1.0).contains(&r2)
            }
        }
    }
}

pub fn synth_scene(seed: u64, spec: &SceneSpec) -> Result<SyntheticScene> {
    let (w, h) = (spec.width, spec.height);
    check_size(w, h)?;
    if !(spec.object_scale > 0.0 && spec.object_scale <= 2.0) {
        return Err(Error::param(format!("object scale {} outside (0, 2]", spec.object_scale)));
    }
    if spec.label.trim().is_empty() {
        return Err(Error::param("scene label is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bg = render_background(w, h, &mut rng);

    let kind = spec.shape.unwrap_or_else(|| match rng.random_range(0..3) {
        0 => ShapeKind::Ellipse,
        1 => ShapeKind::Rectangle,
        _ => ShapeKind::Ring,
    });
    let side = w.min(h) as f64 * spec.object_scale;
    let shape = Shape {
        kind,
        cx: rng.random_range(0.38..0.62) * w as f64,
        cy: rng.random_range(0.38..0.62) * h as f64,
        rx: rng.random_range(0.11..0.18) * side,
        ry: rng.random_range(0.11..0.18) * side,
        angle: rng.random_range(0.0..std::f64::consts::PI),
    };
    let shadow_dx = rng.random_range(4.0..9.0);
    let shadow_dy = rng.random_range(4.0..9.0);
    let stripe_period = rng.random_range(5.0..9.0);
    let stripe_angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let palette: [[f64; 3]; 2] = if rng.random::<bool>() {
        [[235.0, 25.0, 205.0], [25.0, 215.0, 235.0]]
    } else {
        [[240.0, 200.0, 20.0], [40.0, 40.0, 230.0]]
    };

    let object = BinaryMask::from_fn(w, h, |x, y| shape.contains(x as f64, y as f64))?;
    if object.is_empty() {
        return Err(Error::param("scene object fell outside the image"));
    }
    let (ss, sc) = stripe_angle.sin_cos();
    let mut scene_px = bg.clone();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if object.get(x, y) {
                let t = (x as f64 * sc + y as f64 * ss) / stripe_period;
                scene_px[i] = palette[(t.floor() as i64).rem_euclid(2) as usize];
            } else if shape.contains(x as f64 - shadow_dx, y as f64 - shadow_dy) {
                scene_px[i] = bg[i].map(|v| v * 0.8);
            }
        }
    }

    let outside = distance_transform(&object);
    let inside_mask = BinaryMask::from_fn(w, h, |x, y| !object.get(x, y))?;
    let inside = distance_transform(&inside_mask);
    let logits = LogitMap::from_fn(w, h, |x, y| {
        if object.get(x, y) {
            (inside.get(x, y) - 0.5) as f32
        } else {
            -(outside.get(x, y) - 0.5) as f32
        }
    })?;

    Ok(SyntheticScene {
        image: quantize(w, h, &scene_px),
        object_mask_truth: object,
        logits_truth: logits,
        background_reference: quantize(w, h, &bg),
        object_label: spec.label.clone(),
        shape: kind,
        seed,
    })
}

fn child_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// `count` object-free backgrounds, each seeded from `seed` and its index.
pub fn pristine_corpus(seed: u64, count: usize, width: usize, height: usize) -> Result<Vec<ImageBuffer>> {
    (0..count).map(|i| background(child_seed(seed, i), width, height)).collect()
}

/// Pristine backgrounds with additive gaussian noise at each of `sigmas`.
/// Returns `(image, sigma)` pairs grouped per base image.
pub fn distortion_corpus(
    seed: u64,
    bases: usize,
    sigmas: &[f64],
    width: usize,
    height: usize,
) -> Result<Vec<(ImageBuffer, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD157_0127);
    let mut out = Vec::with_capacity(bases * sigmas.len());
    for base in pristine_corpus(seed, bases, width, height)? {
        for &sigma in sigmas {
            out.push((add_gaussian_noise(&base, sigma, &mut rng)?, sigma));
        }
    }
    Ok(out)
}

/// Independent per-channel gaussian noise, rounded and clamped.
pub(crate) fn add_gaussian_noise(img: &ImageBuffer, sigma: f64, rng: &mut impl Rng) -> Result<ImageBuffer> {
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::param(e.to_string()))?;
    let data = img
        .data()
        .iter()
        .map(|&v| (v as f64 + normal.sample(rng)).round().clamp(0.0, 255.0) as u8)
        .collect();
    ImageBuffer::new(img.width(), img.height(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maskops::{buffer_dilate, threshold_logits};

    #[test]
    fn same_seed_same_scene() {
        let spec = SceneSpec::default();
        assert_eq!(synth_scene(42, &spec).unwrap(), synth_scene(42, &spec).unwrap());
        assert_ne!(synth_scene(42, &spec).unwrap().image, synth_scene(43, &spec).unwrap().image);
    }

    #[test]
    fn zero_threshold_is_truth() {
        for seed in 0..4 {
            let s = synth_scene(seed, &SceneSpec::default()).unwrap();
            assert!(threshold_logits(&s.logits_truth, 0.0).same_pixels(&s.object_mask_truth));
        }
    }

    #[test]
    fn negative_threshold_sits_between_dilations() {
        let s = synth_scene(3, &SceneSpec::default()).unwrap();
        let m = threshold_logits(&s.logits_truth, -10.0);
        assert!(buffer_dilate(&s.object_mask_truth, 9.0).unwrap().is_subset_of(&m));
        assert!(m.is_subset_of(&buffer_dilate(&s.object_mask_truth, 11.0).unwrap()));
    }

    #[test]
    fn texture_is_only_on_object() {
        for seed in 0..4 {
            let s = synth_scene(seed, &SceneSpec::default()).unwrap();
            for y in 0..s.image.height() {
                for x in 0..s.image.width() {
                    let on = s.object_mask_truth.get(x, y);
                    assert_eq!(is_object_texture(s.image.pixel(x, y)), on);
                    assert!(!is_object_texture(s.background_reference.pixel(x, y)));
                }
            }
        }
    }

    #[test]
    fn small_scenes_rejected() {
        let spec = SceneSpec {
            width: 32,
            ..SceneSpec::default()
        };
        assert!(synth_scene(0, &spec).is_err());
    }

    #[test]
    fn distortion_corpus_layout() {
        let c = distortion_corpus(1, 2, &[0.0, 10.0], 64, 64).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c[0].1, 0.0);
        assert_eq!(c[1].1, 10.0);
        assert_eq!(c[0].0, background(child_seed(1, 0), 64, 64).unwrap());
        assert_ne!(c[1].0, c[0].0);
    }
}
