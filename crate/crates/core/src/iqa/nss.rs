//! Natural-scene statistics: MSCN coefficients and (asymmetric) generalized
//! Gaussian moment-matching fits.

use crate::error::{Error, Result};
use crate::imaging::{convolve_mirrored, downsample2, gaussian_kernel, GrayImage};

/// Number of features per scale: GGD (alpha, sigma^2) plus four AGGD
/// quadruples (eta, alpha, sigma_l^2, sigma_r^2).
pub const FEATURES_PER_SCALE: usize = 18;
pub const FEATURE_DIM: usize = 2 * FEATURES_PER_SCALE;

/// Stabilizer added to the local deviation (pixel values on the 0..255 scale).
const MSCN_C: f64 = 1.0;
const WINDOW_SIGMA: f64 = 7.0 / 6.0;
const WINDOW_RADIUS: usize = 3;
const MIN_SAMPLES: usize = 100;
const ALPHA_LO: f64 = 0.05;
const ALPHA_HI: f64 = 10.0;
const ALPHA_TOL: f64 = 1e-6;

/// Mean-subtracted contrast-normalized coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl CoefficientField {
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
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GgdParams {
    pub alpha: f64,
    /// Standard deviation of the fitted distribution, `sqrt(E[x^2])`.
    pub sigma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggdParams {
    pub alpha: f64,
    pub sigma_l: f64,
    pub sigma_r: f64,
    pub eta: f64,
}

/// The 36-entry NSS descriptor (two scales of 18).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Local statistics of one scale, kept together so NIQE can derive both
/// patch features and patch sharpness from a single pass.
pub(crate) struct ScaleStats {
    pub(crate) mscn: CoefficientField,
    pub(crate) local_sigma: Vec<f64>,
}

pub(crate) fn scale_stats(img: &GrayImage) -> Result<ScaleStats> {
    if img.width() < 2 * WINDOW_RADIUS + 1 || img.height() < 2 * WINDOW_RADIUS + 1 {
        return Err(Error::param(format!(
            "MSCN needs at least {0}x{0} pixels, got {1}x{2}",
            2 * WINDOW_RADIUS + 1,
            img.width(),
            img.height()
        )));
    }
    let k = gaussian_kernel(WINDOW_SIGMA, WINDOW_RADIUS)?;
    let mu = convolve_mirrored(img, &k);
    let sq = GrayImage::new(
        img.width(),
        img.height(),
        img.data().iter().map(|v| v * v).collect(),
    )?;
    let mu_sq = convolve_mirrored(&sq, &k);

    let mut local_sigma = Vec::with_capacity(img.data().len());
    let mut data = Vec::with_capacity(img.data().len());
    for ((&v, &m), &m2) in img.data().iter().zip(mu.data()).zip(mu_sq.data()) {
        let s = (m2 - m * m).max(0.0).sqrt();
        local_sigma.push(s);
        data.push((v - m) / (s + MSCN_C));
    }
    Ok(ScaleStats {
        mscn: CoefficientField {
            width: img.width(),
            height: img.height(),
            data,
        },
        local_sigma,
    })
}

/// MSCN coefficients `(I - mu) / (sigma + 1)` with a gaussian window
/// (sigma 7/6, radius 3).
pub fn mscn(img: &GrayImage) -> Result<CoefficientField> {
    Ok(scale_stats(img)?.mscn)
}

fn ln_rho(alpha: f64) -> f64 {
    libm::lgamma(1.0 / alpha) + libm::lgamma(3.0 / alpha) - 2.0 * libm::lgamma(2.0 / alpha)
}

/// Invert `Γ(1/a)Γ(3/a)/Γ(2/a)^2 = target` for `a` in `[0.05, 10]`. The ratio is
/// strictly decreasing in `a`; targets outside its range clamp to the ends.
fn solve_shape(target: f64) -> f64 {
    let ln_target = target.ln();
    let (mut lo, mut hi) = (ALPHA_LO, ALPHA_HI);
    if ln_target >= ln_rho(lo) {
        return lo;
    }
    if ln_target <= ln_rho(hi) {
        return hi;
    }
    while hi - lo > ALPHA_TOL {
        let mid = 0.5 * (lo + hi);
        if ln_rho(mid) > ln_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Moment-matching GGD fit.
pub fn fit_ggd(samples: &[f64]) -> Result<GgdParams> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::Fit(format!(
            "GGD fit needs at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let first = samples[0];
    if samples.iter().all(|&v| v == first) {
        return Err(Error::Fit("GGD fit on constant samples".into()));
    }
    let n = samples.len() as f64;
    let mean_abs = samples.iter().map(|v| v.abs()).sum::<f64>() / n;
    let mean_sq = samples.iter().map(|v| v * v).sum::<f64>() / n;
    if !(mean_abs > 0.0) || !mean_sq.is_finite() {
        return Err(Error::Fit("GGD fit on degenerate samples".into()));
    }
    let alpha = solve_shape(mean_sq / (mean_abs * mean_abs));
    Ok(GgdParams {
        alpha,
        sigma: mean_sq.sqrt(),
    })
}

/// Moment-matching asymmetric GGD fit.
pub fn fit_aggd(samples: &[f64]) -> Result<AggdParams> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::Fit(format!(
            "AGGD fit needs at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let (mut left_sq, mut left_n, mut right_sq, mut right_n) = (0.0, 0usize, 0.0, 0usize);
    let (mut sum_abs, mut sum_sq) = (0.0, 0.0);
    for &v in samples {
        if v < 0.0 {
            left_sq += v * v;
            left_n += 1;
        } else if v > 0.0 {
            right_sq += v * v;
            right_n += 1;
        }
        sum_abs += v.abs();
        sum_sq += v * v;
    }
    if left_n == 0 || right_n == 0 {
        return Err(Error::Fit("AGGD fit needs samples of both signs".into()));
    }
    let sigma_l = (left_sq / left_n as f64).sqrt();
    let sigma_r = (right_sq / right_n as f64).sqrt();
    let n = samples.len() as f64;
    let mean_abs = sum_abs / n;
    let mean_sq = sum_sq / n;

    let gamma_hat = sigma_l / sigma_r;
    let r_hat = mean_abs * mean_abs / mean_sq;
    let r_norm = r_hat * (gamma_hat.powi(3) + 1.0) * (gamma_hat + 1.0) / (gamma_hat * gamma_hat + 1.0).powi(2);
    let alpha = solve_shape(1.0 / r_norm);

    let g1 = libm::tgamma(1.0 / alpha);
    let g2 = libm::tgamma(2.0 / alpha);
    let g3 = libm::tgamma(3.0 / alpha);
    let eta = (sigma_r - sigma_l) * (g2 / g1) * (g1 / g3).sqrt();
    Ok(AggdParams {
        alpha,
        sigma_l,
        sigma_r,
        eta,
    })
}

/// Neighbor offsets for the pairwise products: horizontal, vertical, main
/// diagonal and anti-diagonal.
const SHIFTS: [((usize, usize), (usize, usize)); 4] = [
    ((0, 0), (1, 0)),
    ((0, 0), (0, 1)),
    ((0, 0), (1, 1)),
    ((0, 1), (1, 0)),
];

/// 18 features from the MSCN window `[x0, x0 + w) x [y0, y0 + h)`. Products
/// only pair coefficients that both lie inside the window.
pub(crate) fn region_features(
    field: &CoefficientField,
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    out: &mut Vec<f64>,
) -> Result<()> {
    let mut samples = Vec::with_capacity(w * h);
    for y in y0..y0 + h {
        samples.extend_from_slice(&field.data[y * field.width + x0..y * field.width + x0 + w]);
    }
    let ggd = fit_ggd(&samples)?;
    out.push(ggd.alpha);
    out.push(ggd.sigma * ggd.sigma);

    for ((ax, ay), (bx, by)) in SHIFTS {
        samples.clear();
        for y in y0..y0 + h - 1 {
            for x in x0..x0 + w - 1 {
                samples.push(field.get(x + ax, y + ay) * field.get(x + bx, y + by));
            }
        }
        let p = fit_aggd(&samples)?;
        out.extend_from_slice(&[p.eta, p.alpha, p.sigma_l * p.sigma_l, p.sigma_r * p.sigma_r]);
    }
    Ok(())
}

/// Minimum side length accepted by [`nss_features`].
pub const MIN_FEATURE_DIM: usize = 32;

/// Two-scale NSS descriptor of the whole image.
pub fn nss_features(img: &GrayImage) -> Result<FeatureVector> {
    if img.width() < MIN_FEATURE_DIM || img.height() < MIN_FEATURE_DIM {
        return Err(Error::param(format!(
            "NSS features need at least {MIN_FEATURE_DIM}x{MIN_FEATURE_DIM}, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let mut out = Vec::with_capacity(FEATURE_DIM);
    let fine = mscn(img)?;
    region_features(&fine, 0, 0, fine.width, fine.height, &mut out)?;
    let coarse = mscn(&downsample2(img)?)?;
    region_features(&coarse, 0, 0, coarse.width, coarse.height, &mut out)?;
    Ok(FeatureVector(out))
}

/// Features and sharpness of one `patch x patch` tile.
pub(crate) struct PatchFeatures {
    pub(crate) features: Vec<f64>,
    pub(crate) sharpness: f64,
}

/// Tile the image into non-overlapping `patch`-sized squares (partial tiles at
/// the right/bottom edges are dropped) and describe each tile. The coarse
/// scale uses `patch / 2` tiles of the downsampled image. Tiles whose
/// statistics are degenerate are skipped.
pub(crate) fn patch_features(img: &GrayImage, patch: usize) -> Result<Vec<PatchFeatures>> {
    if img.width() < patch || img.height() < patch {
        return Err(Error::param(format!(
            "image {}x{} smaller than one {patch}x{patch} patch",
            img.width(),
            img.height()
        )));
    }
    let fine = scale_stats(img)?;
    let coarse = scale_stats(&downsample2(img)?)?;
    let half = patch / 2;
    let mut out = Vec::new();
    for py in 0..img.height() / patch {
        for px in 0..img.width() / patch {
            let (x0, y0) = (px * patch, py * patch);
            let mut features = Vec::with_capacity(FEATURE_DIM);
            let fitted = region_features(&fine.mscn, x0, y0, patch, patch, &mut features)
                .and_then(|_| region_features(&coarse.mscn, x0 / 2, y0 / 2, half, half, &mut features));
            match fitted {
                Ok(()) => {}
                Err(Error::Fit(msg)) => {
                    log::debug!("skipping patch ({px}, {py}): {msg}");
                    continue;
                }
                Err(e) => return Err(e),
            }
            let mut sharp = 0.0;
            for y in y0..y0 + patch {
                sharp += fine.local_sigma[y * img.width() + x0..y * img.width() + x0 + patch]
                    .iter()
                    .sum::<f64>();
            }
            out.push(PatchFeatures {
                features,
                sharpness: sharp / (patch * patch) as f64,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Gamma, StandardNormal};

    fn ggd_samples(alpha: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Gamma::new(1.0 / alpha, 1.0).unwrap();
        (0..n)
            .map(|_| {
                let m: f64 = g.sample(&mut rng);
                let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                s * m.powf(1.0 / alpha)
            })
            .collect()
    }

    #[test]
    fn mscn_of_constant_is_zero() {
        let img = GrayImage::from_fn(16, 12, |_, _| 77.0).unwrap();
        assert!(mscn(&img).unwrap().data().iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn mscn_matches_windowed_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = GrayImage::from_fn(16, 16, |_, _| rng.random_range(0.0..255.0)).unwrap();
        let field = mscn(&img).unwrap();
        let k = gaussian_kernel(7.0 / 6.0, 3).unwrap();
        let t = k.taps();
        for y in 0..16isize {
            for x in 0..16isize {
                let (mut m, mut m2) = (0.0, 0.0);
                for j in -3..=3isize {
                    for i in -3..=3isize {
                        let wgt = t[(i + 3) as usize] * t[(j + 3) as usize];
                        let v = img.get(crate::imaging::reflect(x + i, 16), crate::imaging::reflect(y + j, 16));
                        m += wgt * v;
                        m2 += wgt * v * v;
                    }
                }
                let s = (m2 - m * m).max(0.0).sqrt();
                let expected = (img.get(x as usize, y as usize) - m) / (s + 1.0);
                assert!((field.get(x as usize, y as usize) - expected).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn mscn_rejects_tiny_images() {
        let img = GrayImage::from_fn(6, 20, |x, _| x as f64).unwrap();
        assert!(matches!(mscn(&img), Err(Error::Parameter(_))));
    }

    #[test]
    fn ggd_recovers_gaussian_and_laplacian() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let normal: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let g = fit_ggd(&normal).unwrap();
        assert!((1.8..=2.2).contains(&g.alpha), "{}", g.alpha);
        assert!((g.sigma - 1.0).abs() < 0.02);

        let laplace = ggd_samples(1.0, 100_000, 2);
        let l = fit_ggd(&laplace).unwrap();
        assert!((0.9..=1.1).contains(&l.alpha), "{}", l.alpha);
    }

    #[test]
    fn ggd_scale_equivariance() {
        let x = ggd_samples(0.8, 20_000, 3);
        let y: Vec<f64> = x.iter().map(|v| v * 3.0).collect();
        let a = fit_ggd(&x).unwrap();
        let b = fit_ggd(&y).unwrap();
        assert!((a.alpha - b.alpha).abs() < 1e-6);
        assert!((b.sigma / a.sigma - 3.0).abs() < 0.03);
    }

    #[test]
    fn ggd_rejects_degenerate_input() {
        assert!(matches!(fit_ggd(&[1.0; 50]), Err(Error::Fit(_))));
        assert!(matches!(fit_ggd(&[2.5; 500]), Err(Error::Fit(_))));
        assert!(matches!(fit_ggd(&[0.0; 500]), Err(Error::Fit(_))));
    }

    #[test]
    fn aggd_symmetric_samples() {
        let base = ggd_samples(1.3, 5000, 4);
        let sym: Vec<f64> = base.iter().flat_map(|&v| [v.abs(), -v.abs()]).collect();
        let p = fit_aggd(&sym).unwrap();
        assert!(p.eta.abs() < 1e-9);
        assert_eq!(p.sigma_l, p.sigma_r);
    }

    #[test]
    fn aggd_right_skewed() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (sl, sr) = (1.0, 2.0);
        let samples: Vec<f64> = (0..50_000)
            .map(|_| {
                let z: f64 = rng.sample::<f64, _>(StandardNormal).abs();
                if rng.random_bool(sr / (sl + sr)) {
                    z * sr
                } else {
                    -z * sl
                }
            })
            .collect();
        let p = fit_aggd(&samples).unwrap();
        let ratio = p.sigma_r / p.sigma_l;
        assert!((1.8..=2.2).contains(&ratio), "{ratio}");
        assert!(p.eta > 0.0);
    }

    #[test]
    fn aggd_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let normal: Vec<f64> = (0..100_000).map(|_| rng.sample(StandardNormal)).collect();
        let p = fit_aggd(&normal).unwrap();
        assert!((1.8..=2.2).contains(&p.alpha), "{}", p.alpha);
        assert!(p.eta.abs() < 0.02);
    }

    #[test]
    fn aggd_rejects_single_sign() {
        let pos: Vec<f64> = (1..500).map(|v| v as f64).collect();
        assert!(matches!(fit_aggd(&pos), Err(Error::Fit(_))));
    }

    #[test]
    fn features_layout_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let img = GrayImage::from_fn(48, 40, |x, y| {
            128.0 + 60.0 * ((x as f64) * 0.3).sin() * ((y as f64) * 0.2).cos() + rng.random_range(-20.0..20.0)
        })
        .unwrap();
        let a = nss_features(&img).unwrap();
        assert_eq!(a.values().len(), FEATURE_DIM);
        assert!(a.values().iter().all(|v| v.is_finite()));
        let b = nss_features(&img).unwrap();
        assert_eq!(
            a.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn features_reject_constant_and_small() {
        let flat = GrayImage::from_fn(64, 64, |_, _| 9.0).unwrap();
        assert!(matches!(nss_features(&flat), Err(Error::Fit(_))));
        let small = GrayImage::from_fn(31, 64, |x, _| x as f64).unwrap();
        assert!(matches!(nss_features(&small), Err(Error::Parameter(_))));
    }

    #[test]
    fn blur_gaussianizes_mscn() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise = GrayImage::from_fn(64, 64, |_, _| rng.random_range(0.0..255.0)).unwrap();
        let k = gaussian_kernel(1.5, 4).unwrap();
        let blurred = convolve_mirrored(&noise, &k);
        let a = nss_features(&noise).unwrap().values()[0];
        let b = nss_features(&blurred).unwrap().values()[0];
        // Uniform noise is platykurtic; smoothing pulls its shape toward gaussian.
        assert!((b - 2.0).abs() < (a - 2.0).abs(), "noise alpha {a}, blurred alpha {b}");
    }
}
