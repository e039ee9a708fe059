//! Per-session state and the synchronous operations on it.

use serde::Serialize;

use retouch_core::backends::{merged_logits, rank_detections, BackendSet, DetectorConfig};
use retouch_core::inpaint::{inpaint, InpaintRequest, InpaintSettings, MethodKind};
use retouch_core::iqa::{QualityModels, QualityReport};
use retouch_core::maskops::{refine, MaskParams};
use retouch_core::pipeline::Verdict;
use retouch_core::{BinaryMask, ImageBuffer, LogitMap};

use crate::error::ApiError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug)]
pub struct Attempt {
    pub index: usize,
    pub t: f64,
    pub b: f64,
    pub method: MethodKind,
    pub status: AttemptStatus,
    pub mask_area: usize,
    pub coverage: f64,
    pub report: Option<QualityReport>,
    pub error: Option<String>,
    pub verdict: Option<Verdict>,
    pub result: Option<ImageBuffer>,
}

#[derive(Serialize)]
pub struct AttemptSummary {
    pub attempt: usize,
    pub t: f64,
    pub b: f64,
    pub method: MethodKind,
    pub status: AttemptStatus,
    pub mask_area: usize,
    pub coverage: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<QualityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_url: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectionSummary {
    pub label: String,
    pub score: f64,
    #[serde(rename = "box")]
    pub bbox: [usize; 4],
}

/// Parameters proposed for the next attempt after a reject.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Suggestion {
    Mask { stage: u8, t: f64, b: f64 },
    Regenerate { stage: u8, caption: String, prompt: String },
}

pub struct Session {
    pub id: String,
    pub image: ImageBuffer,
    pub logits: Option<LogitMap>,
    pub prompt: Option<String>,
    pub history: Vec<Attempt>,
    pub final_attempt: Option<usize>,
    input_report: Option<QualityReport>,
}

fn check_params(t: f64, b: f64) -> Result<MaskParams, ApiError> {
    MaskParams::new(t, b).map_err(|e| ApiError::bad_request(e.to_string()))
}

impl Session {
    pub fn new(id: String, image: ImageBuffer, logits: Option<LogitMap>) -> Result<Self, ApiError> {
        if let Some(l) = &logits {
            if l.dimensions() != image.dimensions() {
                return Err(ApiError::unprocessable(format!(
                    "logits are {}x{} but image is {}x{}",
                    l.width(),
                    l.height(),
                    image.width(),
                    image.height()
                )));
            }
        }
        Ok(Self {
            id,
            image,
            logits,
            prompt: None,
            history: Vec::new(),
            final_attempt: None,
            input_report: None,
        })
    }

    pub fn detect(
        &mut self,
        prompt: &str,
        cfg: &DetectorConfig,
        backends: Option<&BackendSet>,
    ) -> Result<Vec<DetectionSummary>, ApiError> {
        let backends = backends.ok_or_else(|| ApiError::bad_request("no detector backend"))?;
        if prompt.trim().is_empty() {
            return Err(ApiError::bad_request("prompt is empty"));
        }
        cfg.validate().map_err(|e| ApiError::bad_request(e.to_string()))?;
        let detections = rank_detections(backends.detector.detect(&self.image, prompt, cfg)?);
        let summaries = detections
            .iter()
            .map(|d| DetectionSummary {
                label: d.label.clone(),
                score: d.score,
                bbox: [d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h],
            })
            .collect();
        if let Some(l) = merged_logits(&detections)? {
            self.logits = Some(l);
        }
        self.prompt = Some(prompt.to_string());
        Ok(summaries)
    }

    fn logits(&self) -> Result<&LogitMap, ApiError> {
        self.logits
            .as_ref()
            .ok_or_else(|| ApiError::conflict("session has no logits; upload them or run detect first"))
    }

    pub fn mask(&self, t: f64, b: f64) -> Result<BinaryMask, ApiError> {
        Ok(refine(self.logits()?, check_params(t, b)?)?)
    }

    pub fn input_report(&mut self, models: &QualityModels) -> Result<QualityReport, ApiError> {
        if let Some(r) = self.input_report {
            return Ok(r);
        }
        let r = models.assess(&self.image)?;
        self.input_report = Some(r);
        Ok(r)
    }

    /// Run one inpaint attempt and append it to the history, failed or not.
    pub fn inpaint(
        &mut self,
        t: f64,
        b: f64,
        method: MethodKind,
        models: &QualityModels,
        backends: Option<&BackendSet>,
    ) -> Result<&Attempt, ApiError> {
        if self.final_attempt.is_some() {
            return Err(ApiError::conflict("session is complete"));
        }
        let mask = self.mask(t, b)?;
        let index = self.history.len() + 1;
        let mut attempt = Attempt {
            index,
            t,
            b,
            method,
            status: AttemptStatus::Ok,
            mask_area: mask.area(),
            coverage: mask.coverage(),
            report: None,
            error: None,
            verdict: None,
            result: None,
        };
        let external = backends.and_then(|bs| bs.inpainter.as_deref());
        let mut req = InpaintRequest::new(&self.image, &mask, InpaintSettings::with_method(method));
        if let Some(e) = external {
            req = req.with_external(e);
        }
        let outcome = inpaint(&req).and_then(|img| Ok((models.assess(&img)?, img)));
        match outcome {
            Ok((report, img)) => {
                attempt.report = Some(report);
                attempt.result = Some(img);
                self.history.push(attempt);
                Ok(self.history.last().expect("just pushed"))
            }
            Err(e) => {
                let message = e.to_string();
                log::warn!("session {} attempt {index} failed: {message}", self.id);
                attempt.status = AttemptStatus::Failed;
                attempt.error = Some(message.clone());
                self.history.push(attempt);
                let mut err = ApiError::upstream(message);
                err.attempt = Some(index);
                Err(err)
            }
        }
    }

    /// Record a verdict. Reject returns the parameters to try next, if any.
    pub fn verdict(
        &mut self,
        index: usize,
        verdict: Verdict,
        backends: Option<&BackendSet>,
    ) -> Result<Option<Suggestion>, ApiError> {
        let complete = self.final_attempt.is_some();
        let attempt = self
            .history
            .iter_mut()
            .find(|a| a.index == index)
            .ok_or_else(|| ApiError::not_found(format!("no attempt {index}")))?;
        if attempt.verdict.is_some() {
            return Err(ApiError::conflict(format!("attempt {index} already has a verdict")));
        }
        if attempt.status == AttemptStatus::Failed {
            return Err(ApiError::conflict(format!("attempt {index} failed and cannot be judged")));
        }
        if complete {
            return Err(ApiError::conflict("session is complete"));
        }
        attempt.verdict = Some(verdict);
        match verdict {
            Verdict::Accept => {
                self.final_attempt = Some(index);
                Ok(None)
            }
            Verdict::Reject => {
                let (t, b) = (attempt.t, attempt.b);
                let stage2 = MaskParams::AUTOMATION;
                if t > stage2.t || b < stage2.b {
                    return Ok(Some(Suggestion::Mask {
                        stage: 2,
                        t: t.min(stage2.t),
                        b: b.max(stage2.b),
                    }));
                }
                self.regeneration_proposal(backends)
            }
        }
    }

    fn regeneration_proposal(&self, backends: Option<&BackendSet>) -> Result<Option<Suggestion>, ApiError> {
        let (Some(bs), Some(prompt)) = (backends, self.prompt.as_deref()) else {
            return Ok(None);
        };
        let caption = bs.captioner.caption(&self.image)?;
        let refined = bs.rewriter.rewrite(prompt, &caption)?;
        Ok(Some(Suggestion::Regenerate {
            stage: 3,
            caption: caption.text,
            prompt: refined.text,
        }))
    }

    pub fn summaries(&self) -> Vec<AttemptSummary> {
        self.history
            .iter()
            .map(|a| AttemptSummary {
                attempt: a.index,
                t: a.t,
                b: a.b,
                method: a.method,
                status: a.status,
                mask_area: a.mask_area,
                coverage: a.coverage,
                report: a.report,
                error: a.error.clone(),
                verdict: a.verdict,
                image_url: a
                    .result
                    .as_ref()
                    .map(|_| format!("/api/session/{}/attempt/{}/image", self.id, a.index)),
            })
            .collect()
    }
}
