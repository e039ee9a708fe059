//! No-reference image quality: NIQE, BRISQUE and the combined perceptual
//! index. All three are "lower is better" and operate on BT.601 luma.

mod brisque;
mod niqe;
mod nss;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{to_luma, GrayImage, ImageBuffer};

pub use brisque::{brisque_score, train_brisque, train_brisque_features, BrisqueModel, MIN_TRAINING_IMAGES};
pub use niqe::{
    fit_niqe_model, niqe_distance, niqe_score, NiqeModel, MIN_CORPUS_IMAGES, MIN_CORPUS_SIDE, PATCH_SIZE, SHARPNESS_THRESHOLD,
};
pub use nss::{
    fit_aggd, fit_ggd, mscn, nss_features, AggdParams, CoefficientField, FeatureVector, GgdParams, FEATURES_PER_SCALE,
    FEATURE_DIM, MIN_FEATURE_DIM,
};

/// Human-readable statement of how PI is combined, echoed into reports.
pub const PI_DEFINITION: &str = "pi = (niqe + brisque / 10) / 2";

/// Perceptual index: mean of NIQE and BRISQUE/10.
pub fn pi_score(niqe: f64, brisque: f64) -> f64 {
    (niqe + brisque / 10.0) / 2.0
}

/// Scores of one image. `pi` is present exactly when `brisque` is.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub niqe: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brisque: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<f64>,
}

impl QualityReport {
    pub fn new(niqe: f64, brisque: Option<f64>) -> Self {
        Self {
            niqe,
            brisque,
            pi: brisque.map(|b| pi_score(niqe, b)),
        }
    }
}

/// The fitted models needed to produce a [`QualityReport`].
#[derive(Clone, Debug)]
pub struct QualityModels {
    pub niqe: NiqeModel,
    pub brisque: Option<BrisqueModel>,
}

impl QualityModels {
    pub fn new(niqe: NiqeModel, brisque: Option<BrisqueModel>) -> Self {
        Self { niqe, brisque }
    }

    pub fn assess_gray(&self, img: &GrayImage) -> Result<QualityReport> {
        let niqe = niqe_score(img, &self.niqe)?;
        let brisque = self.brisque.as_ref().map(|m| brisque_score(img, m)).transpose()?;
        let report = QualityReport::new(niqe, brisque);
        if !report.niqe.is_finite() || report.brisque.is_some_and(|b| !b.is_finite()) {
            return Err(Error::Scoring("non-finite quality score".into()));
        }
        Ok(report)
    }

    pub fn assess(&self, image: &ImageBuffer) -> Result<QualityReport> {
        self.assess_gray(&to_luma(image))
    }
}
