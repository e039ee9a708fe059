use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::nss::{nss_features, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::imaging::GrayImage;

const RIDGE: f64 = 1e-3;
pub const MIN_TRAINING_IMAGES: usize = 20;

/// Kernel ridge regressor from standardized NSS features to a quality score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrisqueModel {
    pub dim: usize,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    /// RBF kernel `exp(-gamma * |a - b|^2)`.
    pub gamma: f64,
    pub coefficients: Vec<f64>,
    pub anchors: Vec<Vec<f64>>,
    pub bias: f64,
}

impl BrisqueModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Format(format!("invalid BRISQUE model: {m}")));
        if self.dim != FEATURE_DIM || self.feature_mean.len() != self.dim || self.feature_scale.len() != self.dim {
            return bad("dimension mismatch");
        }
        if self.coefficients.len() != self.anchors.len() {
            return bad("coefficient and anchor counts differ");
        }
        if self.anchors.iter().any(|a| a.len() != self.dim) {
            return bad("anchor of wrong length");
        }
        if self.feature_scale.iter().any(|&s| !(s > 0.0)) {
            return bad("feature scale must be strictly positive");
        }
        if !(self.gamma > 0.0) || !self.bias.is_finite() {
            return bad("gamma must be positive and bias finite");
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: BrisqueModel = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn standardize(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    /// Regression output for a raw (unstandardized) feature vector.
    pub fn predict(&self, features: &[f64]) -> f64 {
        let z = self.standardize(features);
        self.bias
            + self
                .coefficients
                .iter()
                .zip(&self.anchors)
                .map(|(c, a)| c * (-self.gamma * sq_dist(&z, a)).exp())
                .sum::<f64>()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Fit from already-extracted feature vectors.
pub fn train_brisque_features(samples: &[(Vec<f64>, f64)]) -> Result<BrisqueModel> {
    if samples.len() < MIN_TRAINING_IMAGES {
        return Err(Error::param(format!(
            "BRISQUE training needs at least {MIN_TRAINING_IMAGES} images, got {}",
            samples.len()
        )));
    }
    let first = samples[0].1;
    if samples.iter().all(|(_, l)| *l == first) {
        return Err(Error::Fit("training labels span a single quality level".into()));
    }
    if samples.iter().any(|(f, l)| f.len() != FEATURE_DIM || !l.is_finite()) {
        return Err(Error::param("malformed training sample"));
    }

    let n = samples.len();
    let mut mean = vec![0.0; FEATURE_DIM];
    for (f, _) in samples {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v / n as f64;
        }
    }
    let mut scale = vec![0.0; FEATURE_DIM];
    for (f, _) in samples {
        for ((s, v), m) in scale.iter_mut().zip(f).zip(&mean) {
            *s += (v - m) * (v - m) / n as f64;
        }
    }
    for s in &mut scale {
        *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
    }

    let anchors: Vec<Vec<f64>> = samples
        .iter()
        .map(|(f, _)| f.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s).collect())
        .collect();

    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            dists.push(sq_dist(&anchors[i], &anchors[j]).sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let median = if dists.len() % 2 == 1 {
        dists[dists.len() / 2]
    } else {
        0.5 * (dists[dists.len() / 2 - 1] + dists[dists.len() / 2])
    };
    if !(median > 0.0) {
        return Err(Error::Fit("training features are all identical".into()));
    }
    let gamma = 1.0 / (2.0 * median * median);

    let bias = samples.iter().map(|(_, l)| l).sum::<f64>() / n as f64;
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = (-gamma * sq_dist(&anchors[i], &anchors[j])).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += RIDGE;
    }
    let targets = DVector::from_iterator(n, samples.iter().map(|(_, l)| l - bias));
    let chol = k
        .cholesky()
        .ok_or_else(|| Error::Fit("kernel system is not positive definite".into()))?;
    let coefficients = chol.solve(&targets).iter().copied().collect();

    Ok(BrisqueModel {
        dim: FEATURE_DIM,
        feature_mean: mean,
        feature_scale: scale,
        gamma,
        coefficients,
        anchors,
        bias,
    })
}

/// Fit from labelled images; higher labels mean worse quality.
pub fn train_brisque(corpus: &[(GrayImage, f64)]) -> Result<BrisqueModel> {
    if corpus.len() < MIN_TRAINING_IMAGES {
        return Err(Error::param(format!(
            "BRISQUE training needs at least {MIN_TRAINING_IMAGES} images, got {}",
            corpus.len()
        )));
    }
    let samples = corpus
        .iter()
        .map(|(img, label)| Ok((nss_features(img)?.into_inner(), *label)))
        .collect::<Result<Vec<_>>>()?;
    train_brisque_features(&samples)
}

pub fn brisque_score(img: &GrayImage, model: &BrisqueModel) -> Result<f64> {
    let f = nss_features(img)?;
    Ok(model.predict(f.values()))
}
