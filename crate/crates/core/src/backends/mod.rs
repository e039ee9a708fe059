//! Contracts for the neural capabilities the cascade relies on (detection,
//! inpainting, captioning, prompt rewriting, generation), a JSON/HTTP client
//! for each, deterministic scene-backed mocks, and the synthetic scene
//! generator.

mod http;
mod mock;
mod synth;
pub mod wire;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ImageBuffer;
use crate::maskops::{BinaryMask, LogitMap};

pub use http::{BackendConfig, HttpBackend, BACKEND_URL_ENV};
pub use mock::{ConstantFillInpainter, EchoInpainter, FixedCaptioner, MockSceneBackend, MOCK_SCORE};
pub use synth::{
    background, distortion_corpus, is_object_texture, pristine_corpus, synth_scene, SceneSpec, ShapeKind,
    SyntheticScene, DEFAULT_SCENE_SIDE,
};

/// Axis-aligned box in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BoxRegion {
    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.x + self.w <= width && self.y + self.h <= height
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub label: String,
    pub score: f64,
    pub bbox: BoxRegion,
    pub logits: LogitMap,
}

impl Detection {
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::param(format!("detection score {} outside [0, 1]", self.score)));
        }
        if !self.bbox.fits(width, height) {
            return Err(Error::param(format!("detection box {:?} exceeds {width}x{height}", self.bbox)));
        }
        if self.logits.dimensions() != (width, height) {
            let (lw, lh) = self.logits.dimensions();
            return Err(Error::param(format!("detection logits are {lw}x{lh}, image is {width}x{height}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub box_threshold: f64,
    pub text_threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            box_threshold: 0.1,
            text_threshold: 0.1,
        }
    }
}

impl DetectorConfig {
    pub fn new(box_threshold: f64, text_threshold: f64) -> Result<Self> {
        let cfg = Self {
            box_threshold,
            text_threshold,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("box", self.box_threshold), ("text", self.text_threshold)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(format!("{name} threshold {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionSource {
    Original,
    Repainted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Caption {
    pub text: String,
    pub source: CaptionSource,
}

impl Caption {
    pub fn new(text: impl Into<String>, source: CaptionSource) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::param("caption text is empty"));
        }
        Ok(Self { text, source })
    }
}

/// Rewritten generation prompt plus what it was derived from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinedCaption {
    pub text: String,
    pub prompt: String,
    pub caption: String,
    /// False when the rewriter left the caption as it was.
    pub rewritten: bool,
}

pub trait Detector: Send + Sync {
    fn detect(&self, image: &ImageBuffer, prompt: &str, cfg: &DetectorConfig) -> Result<Vec<Detection>>;
}

pub trait Inpainter: Send + Sync {
    /// Where requests go, for diagnostics.
    fn endpoint(&self) -> String;
    fn inpaint(&self, image: &ImageBuffer, mask: &BinaryMask) -> Result<ImageBuffer>;
}

pub trait Captioner: Send + Sync {
    fn caption(&self, image: &ImageBuffer) -> Result<Caption>;
}

pub trait PromptRewriter: Send + Sync {
    fn rewrite(&self, prompt: &str, caption: &Caption) -> Result<RefinedCaption>;
}

pub trait Generator: Send + Sync {
    fn generate(&self, refined: &RefinedCaption, image: &ImageBuffer) -> Result<ImageBuffer>;
}

/// The full set of services a cascade run may call.
#[derive(Clone)]
pub struct BackendSet {
    pub detector: Arc<dyn Detector>,
    pub inpainter: Option<Arc<dyn Inpainter>>,
    pub captioner: Arc<dyn Captioner>,
    pub rewriter: Arc<dyn PromptRewriter>,
    pub generator: Arc<dyn Generator>,
}

impl BackendSet {
    /// Use one implementation for every role.
    pub fn uniform<B>(backend: B) -> Self
    where
        B: Detector + Inpainter + Captioner + PromptRewriter + Generator + 'static,
    {
        let b = Arc::new(backend);
        Self {
            detector: b.clone(),
            inpainter: Some(b.clone()),
            captioner: b.clone(),
            rewriter: b.clone(),
            generator: b,
        }
    }
}

impl fmt::Debug for BackendSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackendSet")
            .field("inpainter", &self.inpainter.as_ref().map(|i| i.endpoint()))
            .finish_non_exhaustive()
    }
}

/// Detections sorted by descending score; equal scores keep their order.
pub fn rank_detections(mut detections: Vec<Detection>) -> Vec<Detection> {
    detections.sort_by(|a, b| b.score.total_cmp(&a.score));
    detections
}

/// Pixelwise maximum over all detection logits; thresholding the result
/// equals the union of the individually thresholded masks.
pub fn merged_logits(detections: &[Detection]) -> Result<Option<LogitMap>> {
    if detections.is_empty() {
        return Ok(None);
    }
    let maps: Vec<LogitMap> = detections.iter().map(|d| d.logits.clone()).collect();
    LogitMap::pointwise_max(&maps).map(Some)
}

/// Logits for a detector that only reports boxes: +1 inside the box and minus
/// the Euclidean distance to the box outside it.
pub fn logits_from_box(width: usize, height: usize, bbox: BoxRegion) -> Result<LogitMap> {
    if !bbox.fits(width, height) || bbox.w == 0 || bbox.h == 0 {
        return Err(Error::param(format!("box {bbox:?} is empty or exceeds {width}x{height}")));
    }
    let gap = |v: usize, lo: usize, len: usize| -> f64 {
        if v < lo {
            (lo - v) as f64
        } else if v >= lo + len {
            (v + 1 - lo - len) as f64
        } else {
            0.0
        }
    };
    LogitMap::from_fn(width, height, |x, y| {
        let dx = gap(x, bbox.x, bbox.w);
        let dy = gap(y, bbox.y, bbox.h);
        if dx == 0.0 && dy == 0.0 {
            1.0
        } else {
            -((dx * dx + dy * dy).sqrt()) as f32
        }
    })
}
