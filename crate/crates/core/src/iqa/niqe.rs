use nalgebra::{DMatrix, DVector};

use super::nss::{patch_features, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::imaging::GrayImage;

const NQM_MAGIC: &[u8; 4] = b"NQM1";

/// Side of the square tiles NIQE statistics are gathered over.
pub const PATCH_SIZE: usize = 96;
/// Training patches must reach this fraction of their image's sharpest patch.
pub const SHARPNESS_THRESHOLD: f64 = 0.75;
pub const MIN_CORPUS_IMAGES: usize = 10;
pub const MIN_CORPUS_SIDE: usize = 2 * PATCH_SIZE;

/// Multivariate gaussian over pristine-patch features.
#[derive(Clone, Debug, PartialEq)]
pub struct NiqeModel {
    pub mean: Vec<f64>,
    /// Row-major `dim x dim`.
    pub covariance: Vec<f64>,
    /// Selection threshold used when the model was fitted.
    pub sharpness_threshold: f64,
    /// Number of training patches that survived selection; unknown for
    /// models read from disk.
    pub patches_kept: Option<usize>,
}

impl NiqeModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let dim = self.dim();
        let mut out = Vec::with_capacity(8 + 8 * (dim + dim * dim));
        out.extend_from_slice(NQM_MAGIC);
        out.extend_from_slice(&(dim as u32).to_le_bytes());
        for v in self.mean.iter().chain(&self.covariance) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != NQM_MAGIC {
            return Err(Error::Format("missing NQM1 header".into()));
        }
        let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        if dim != FEATURE_DIM {
            return Err(Error::Format(format!("NQM1 dimension {dim}, expected {FEATURE_DIM}")));
        }
        let expected = 8 + 8 * (dim + dim * dim);
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "NQM1 payload is {} bytes, expected {expected}",
                bytes.len()
            )));
        }
        let values: Vec<f64> = bytes[8..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("NQM1 contains non-finite values".into()));
        }
        let (mean, covariance) = values.split_at(dim);
        Ok(NiqeModel {
            mean: mean.to_vec(),
            covariance: covariance.to_vec(),
            sharpness_threshold: SHARPNESS_THRESHOLD,
            patches_kept: None,
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn mean_and_covariance(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let dim = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let mut cov = vec![0.0; dim * dim];
    if rows.len() > 1 {
        for r in rows {
            for i in 0..dim {
                let di = r[i] - mean[i];
                for j in i..dim {
                    cov[i * dim + j] += di * (r[j] - mean[j]);
                }
            }
        }
        for i in 0..dim {
            for j in i..dim {
                let v = cov[i * dim + j] / (n - 1.0);
                cov[i * dim + j] = v;
                cov[j * dim + i] = v;
            }
        }
    }
    (mean, cov)
}

/// Fit the pristine feature gaussian from a corpus of natural images.
pub fn fit_niqe_model(corpus: &[GrayImage]) -> Result<NiqeModel> {
    if corpus.len() < MIN_CORPUS_IMAGES {
        return Err(Error::param(format!(
            "NIQE corpus needs at least {MIN_CORPUS_IMAGES} images, got {}",
            corpus.len()
        )));
    }
    if let Some(small) = corpus
        .iter()
        .find(|img| img.width() < MIN_CORPUS_SIDE || img.height() < MIN_CORPUS_SIDE)
    {
        return Err(Error::param(format!(
            "corpus images must be at least {MIN_CORPUS_SIDE}x{MIN_CORPUS_SIDE}, found {}x{}",
            small.width(),
            small.height()
        )));
    }

    let mut kept = Vec::new();
    for img in corpus {
        let patches = patch_features(img, PATCH_SIZE)?;
        let max_sharp = patches.iter().map(|p| p.sharpness).fold(0.0, f64::max);
        if max_sharp <= 0.0 {
            continue;
        }
        kept.extend(
            patches
                .into_iter()
                .filter(|p| p.sharpness >= SHARPNESS_THRESHOLD * max_sharp)
                .map(|p| p.features),
        );
    }
    if kept.len() < 2 {
        return Err(Error::Fit(format!(
            "only {} patches survived sharpness selection",
            kept.len()
        )));
    }
    let (mean, covariance) = mean_and_covariance(&kept);
    Ok(NiqeModel {
        mean,
        covariance,
        sharpness_threshold: SHARPNESS_THRESHOLD,
        patches_kept: Some(kept.len()),
    })
}

/// `sqrt(d^T (S + lambda I)^-1 d)` with `lambda = 1e-6 * trace(S) / dim`.
pub(crate) fn ridge_mahalanobis(diff: &[f64], cov: &[f64]) -> Result<f64> {
    if diff.iter().all(|&d| d == 0.0) {
        return Ok(0.0);
    }
    let dim = diff.len();
    let mut m = DMatrix::from_row_slice(dim, dim, cov);
    let lambda = 1e-6 * m.trace() / dim as f64;
    for i in 0..dim {
        m[(i, i)] += lambda;
    }
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Scoring("feature covariance is singular even after ridge".into()))?;
    let d = DVector::from_column_slice(diff);
    let solved = chol.solve(&d);
    let q = d.dot(&solved);
    if !q.is_finite() {
        return Err(Error::Scoring("non-finite Mahalanobis distance".into()));
    }
    Ok(q.max(0.0).sqrt())
}

/// NIQE: distance between the model gaussian and the gaussian fitted over all
/// patches of `img`. Lower is better.
pub fn niqe_score(img: &GrayImage, model: &NiqeModel) -> Result<f64> {
    if model.dim() != FEATURE_DIM || model.covariance.len() != FEATURE_DIM * FEATURE_DIM {
        return Err(Error::Scoring(format!("model dimension {} is not {FEATURE_DIM}", model.dim())));
    }
    if img.width() < PATCH_SIZE || img.height() < PATCH_SIZE {
        return Err(Error::param(format!(
            "NIQE needs at least {PATCH_SIZE}x{PATCH_SIZE}, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let rows: Vec<Vec<f64>> = patch_features(img, PATCH_SIZE)?
        .into_iter()
        .map(|p| p.features)
        .collect();
    if rows.is_empty() {
        return Err(Error::Scoring("no patch of the image has usable statistics".into()));
    }
    let (mean, covariance) = mean_and_covariance(&rows);
    let fitted = NiqeModel {
        mean,
        covariance,
        sharpness_threshold: 0.0,
        patches_kept: Some(rows.len()),
    };
    niqe_distance(model, &fitted)
}

/// Distance between two feature gaussians under their pooled covariance.
pub fn niqe_distance(a: &NiqeModel, b: &NiqeModel) -> Result<f64> {
    if a.dim() != b.dim() || a.covariance.len() != b.covariance.len() {
        return Err(Error::Scoring(format!("model dimensions differ: {} vs {}", a.dim(), b.dim())));
    }
    let diff: Vec<f64> = a.mean.iter().zip(&b.mean).map(|(x, y)| x - y).collect();
    let pooled: Vec<f64> = a
        .covariance
        .iter()
        .zip(&b.covariance)
        .map(|(x, y)| 0.5 * (x + y))
        .collect();
    ridge_mahalanobis(&diff, &pooled)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_difference_scores_zero() {
        let cov = vec![0.0; 4];
        assert_eq!(ridge_mahalanobis(&[0.0, 0.0], &cov).unwrap(), 0.0);
    }

    #[test]
    fn mahalanobis_is_sign_symmetric() {
        let cov = vec![2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5];
        let d = [0.4, -1.2, 0.7];
        let neg: Vec<f64> = d.iter().map(|v| -v).collect();
        let a = ridge_mahalanobis(&d, &cov).unwrap();
        let b = ridge_mahalanobis(&neg, &cov).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mahalanobis_identity_cov_is_euclidean() {
        let cov = vec![1.0, 0.0, 0.0, 1.0];
        let d = ridge_mahalanobis(&[3.0, 4.0], &cov).unwrap();
        assert!((d - 5.0 / (1.0f64 + 1e-6).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn singular_without_ridge_is_error() {
        let cov = vec![0.0; 4];
        assert!(matches!(ridge_mahalanobis(&[1.0, 0.0], &cov), Err(Error::Scoring(_))));
    }

    #[test]
    fn covariance_is_symmetric_sample_covariance() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 1.0], vec![2.0, 6.0]];
        let (mean, cov) = mean_and_covariance(&rows);
        assert_eq!(mean, vec![2.0, 3.0]);
        assert!((cov[0] - 1.0).abs() < 1e-12);
        assert!((cov[1] - -0.5).abs() < 1e-12);
        assert_eq!(cov[1], cov[2]);
        assert!((cov[3] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn nqm1_layout() {
        let model = NiqeModel {
            mean: (0..FEATURE_DIM).map(|i| i as f64).collect(),
            covariance: (0..FEATURE_DIM * FEATURE_DIM).map(|i| (i % 7) as f64).collect(),
            sharpness_threshold: SHARPNESS_THRESHOLD,
            patches_kept: Some(3),
        };
        let bytes = model.to_bytes();
        assert_eq!(&bytes[..4], b"NQM1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 36);
        assert_eq!(bytes.len(), 8 + 8 * (36 + 36 * 36));
        assert_eq!(f64::from_le_bytes(bytes[16..24].try_into().unwrap()), 1.0);
        let back = NiqeModel::from_bytes(&bytes).unwrap();
        assert_eq!(back.mean, model.mean);
        assert_eq!(back.covariance, model.covariance);
        assert!(NiqeModel::from_bytes(&bytes[..100]).is_err());
    }

    #[test]
    fn corpus_preconditions() {
        let img = GrayImage::from_fn(192, 192, |x, y| ((x * y) % 255) as f64).unwrap();
        assert!(matches!(fit_niqe_model(&vec![img; 3]), Err(Error::Parameter(_))));
        let small = GrayImage::from_fn(100, 192, |x, _| x as f64).unwrap();
        assert!(matches!(fit_niqe_model(&vec![small; 10]), Err(Error::Parameter(_))));
    }
}
