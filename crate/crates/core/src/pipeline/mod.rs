//! The removal cascade: detect once, inpaint with the raw mask, retry with a
//! looser threshold, and finally fall back to caption-guided regeneration.
//! Each stage is scored and a sufficiency policy decides whether to stop.

mod persist;
mod sweep;

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backends::{merged_logits, rank_detections, BackendSet, DetectorConfig, RefinedCaption};
use crate::error::{Error, Result};
use crate::imaging::ImageBuffer;
use crate::inpaint::{inpaint, InpaintRequest, InpaintSettings, MethodKind};
use crate::iqa::{QualityModels, QualityReport};
use crate::maskops::{refine, BinaryMask, LogitMap, MaskParams};

pub use persist::{outcome_json, write_outcome};
pub use sweep::{sweep, ParamRange, SweepPlan, SweepRow, SweepTable, SWEEP_HEADER};

pub const DEFAULT_DELTA: f64 = 0.5;
pub const MAX_STAGES: u8 = 3;

/// A human judgement on one attempt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SufficiencyPolicy {
    /// Sufficient when NIQE does not degrade by more than `delta`.
    Auto { delta: f64 },
    /// Verdicts recorded per stage, in order; a missing one leaves the run pending.
    Interactive { verdicts: Vec<Verdict> },
}

impl Default for SufficiencyPolicy {
    fn default() -> Self {
        SufficiencyPolicy::Auto { delta: DEFAULT_DELTA }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sufficiency {
    Sufficient,
    Insufficient,
    Pending,
}

/// Judge stage `stage` (1-based) given the input and stage reports.
pub fn sufficiency(before: &QualityReport, after: &QualityReport, policy: &SufficiencyPolicy, stage: u8) -> Sufficiency {
    match policy {
        SufficiencyPolicy::Auto { delta } => {
            if after.niqe <= before.niqe + delta {
                Sufficiency::Sufficient
            } else {
                Sufficiency::Insufficient
            }
        }
        SufficiencyPolicy::Interactive { verdicts } => match verdicts.get(stage as usize - 1) {
            Some(Verdict::Accept) => Sufficiency::Sufficient,
            Some(Verdict::Reject) => Sufficiency::Insufficient,
            None => Sufficiency::Pending,
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub prompt: String,
    pub detector: DetectorConfig,
    pub stage1: MaskParams,
    pub stage2: MaskParams,
    pub inpaint: InpaintSettings,
    pub policy: SufficiencyPolicy,
    pub max_stages: u8,
    /// Wall-clock timings make outcomes differ between runs; disable for
    /// byte-reproducible output.
    pub record_timings: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            prompt: String::new(),
            detector: DetectorConfig::default(),
            stage1: MaskParams::RAW,
            stage2: MaskParams::AUTOMATION,
            inpaint: InpaintSettings::default(),
            policy: SufficiencyPolicy::default(),
            max_stages: MAX_STAGES,
            record_timings: true,
        }
    }
}

impl PipelineConfig {
    pub fn with_prompt(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_STAGES).contains(&self.max_stages) {
            return Err(Error::param(format!("max_stages must be 1, 2 or 3, got {}", self.max_stages)));
        }
        if let SufficiencyPolicy::Auto { delta } = self.policy {
            if !delta.is_finite() {
                return Err(Error::param("sufficiency delta must be finite"));
            }
        }
        self.detector.validate()?;
        self.stage1.validate()?;
        self.stage2.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageDecision {
    Accepted,
    Escalated,
    Exhausted,
    /// Interactive mode without a verdict for this stage yet.
    Pending,
}

impl fmt::Display for StageDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StageDecision::Accepted => "accepted",
            StageDecision::Escalated => "escalated",
            StageDecision::Exhausted => "exhausted",
            StageDecision::Pending => "pending",
        };
        f.write_str(s)
    }
}

/// What a stage was run with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StageParams {
    Mask { t: f64, b: f64, method: MethodKind },
    Regenerate { caption: String, refined: RefinedCaption },
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageRecord {
    pub stage: u8,
    pub params: StageParams,
    pub mask: Option<BinaryMask>,
    pub masked_image: ImageBuffer,
    pub result: ImageBuffer,
    pub report: QualityReport,
    pub decision: StageDecision,
    pub runtime_ms: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutcome {
    pub input: ImageBuffer,
    pub input_report: QualityReport,
    pub stages: Vec<StageRecord>,
    pub final_image: ImageBuffer,
    /// Stage whose result is `final_image`.
    pub final_stage: u8,
    pub accepted_stage: Option<u8>,
    pub detections: usize,
}

/// Failure during a run, with whatever was completed before it.
#[derive(Debug)]
pub struct RunError {
    pub error: Error,
    pub input_report: Option<QualityReport>,
    pub stages: Vec<StageRecord>,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} completed stage(s))", self.error, self.stages.len())
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl RunError {
    fn bare(error: Error) -> Self {
        Self {
            error,
            input_report: None,
            stages: Vec::new(),
        }
    }
}

/// `image` with masked pixels set to black.
pub fn masked_image(image: &ImageBuffer, mask: &BinaryMask) -> ImageBuffer {
    let mut out = image.clone();
    for (i, &set) in mask.bits().iter().enumerate() {
        if set {
            out.set_pixel(i % image.width(), i / image.width(), [0, 0, 0]);
        }
    }
    out
}

fn elapsed_ms(start: Instant, record: bool) -> Option<u64> {
    record.then(|| start.elapsed().as_millis() as u64)
}

struct Cascade<'a> {
    image: &'a ImageBuffer,
    cfg: &'a PipelineConfig,
    backends: Option<&'a BackendSet>,
    models: &'a QualityModels,
    input_report: Option<QualityReport>,
    stages: Vec<StageRecord>,
}

impl Cascade<'_> {
    fn fail(self, error: Error) -> RunError {
        RunError {
            error,
            input_report: self.input_report,
            stages: self.stages,
        }
    }

    fn mask_stage(&self, stage: u8, logits: &LogitMap, params: MaskParams) -> Result<StageRecord> {
        let start = Instant::now();
        let mask = refine(logits, params)?;
        let method = self.cfg.inpaint.resolve(&mask);
        let mut req = InpaintRequest::new(self.image, &mask, self.cfg.inpaint);
        if let Some(b) = self.backends.and_then(|b| b.inpainter.as_deref()) {
            req = req.with_external(b);
        }
        let result = inpaint(&req)?;
        let report = self.models.assess(&result)?;
        Ok(StageRecord {
            stage,
            params: StageParams::Mask {
                t: params.t,
                b: params.b,
                method,
            },
            masked_image: masked_image(self.image, &mask),
            mask: Some(mask),
            result,
            report,
            decision: StageDecision::Pending,
            runtime_ms: elapsed_ms(start, self.cfg.record_timings),
        })
    }

    fn regenerate_stage(&self, backends: &BackendSet) -> Result<StageRecord> {
        let start = Instant::now();
        let caption = backends.captioner.caption(self.image)?;
        let refined = backends.rewriter.rewrite(&self.cfg.prompt, &caption)?;
        let result = backends.generator.generate(&refined, self.image)?;
        if result.dimensions() != self.image.dimensions() {
            return Err(Error::backend("generate", "generated image has the wrong size"));
        }
        let report = self.models.assess(&result)?;
        Ok(StageRecord {
            stage: 3,
            params: StageParams::Regenerate {
                caption: caption.text,
                refined,
            },
            mask: None,
            masked_image: self.image.clone(),
            result,
            report,
            decision: StageDecision::Pending,
            runtime_ms: elapsed_ms(start, self.cfg.record_timings),
        })
    }

    fn finish(self, detections: usize) -> PipelineOutcome {
        let last = self.stages.last().expect("at least one stage");
        let (final_image, final_stage) = match last.decision {
            StageDecision::Exhausted => {
                let mut best = &self.stages[0];
                for s in &self.stages[1..] {
                    if s.report.niqe < best.report.niqe {
                        best = s;
                    }
                }
                (best.result.clone(), best.stage)
            }
            _ => (last.result.clone(), last.stage),
        };
        let accepted_stage = (last.decision == StageDecision::Accepted).then_some(last.stage);
        PipelineOutcome {
            input: self.image.clone(),
            input_report: self.input_report.expect("input scored before stages"),
            stages: self.stages,
            final_image,
            final_stage,
            accepted_stage,
            detections,
        }
    }
}

/// Full cascade, starting from detection with the configured backends.
pub fn run(
    image: &ImageBuffer,
    cfg: &PipelineConfig,
    backends: &BackendSet,
    models: &QualityModels,
) -> std::result::Result<PipelineOutcome, RunError> {
    if cfg.prompt.trim().is_empty() {
        return Err(RunError::bare(Error::param("prompt is empty")));
    }
    cfg.validate().map_err(RunError::bare)?;
    let detections = backends
        .detector
        .detect(image, &cfg.prompt, &cfg.detector)
        .map_err(RunError::bare)?;
    let detections = rank_detections(detections);
    let count = detections.len();
    let logits = merged_logits(&detections).map_err(RunError::bare)?;
    run_cascade(image, logits, count, cfg, Some(backends), models)
}

/// Cascade with precomputed logits; `None` behaves like a detector miss.
/// Without backends the regeneration stage is unavailable.
pub fn run_from_logits(
    image: &ImageBuffer,
    logits: Option<LogitMap>,
    cfg: &PipelineConfig,
    backends: Option<&BackendSet>,
    models: &QualityModels,
) -> std::result::Result<PipelineOutcome, RunError> {
    cfg.validate().map_err(RunError::bare)?;
    let count = usize::from(logits.is_some());
    run_cascade(image, logits, count, cfg, backends, models)
}

fn run_cascade(
    image: &ImageBuffer,
    logits: Option<LogitMap>,
    detections: usize,
    cfg: &PipelineConfig,
    backends: Option<&BackendSet>,
    models: &QualityModels,
) -> std::result::Result<PipelineOutcome, RunError> {
    if let Some(l) = &logits {
        if l.dimensions() != image.dimensions() {
            return Err(RunError::bare(Error::param(format!(
                "logits are {}x{} but image is {}x{}",
                l.width(),
                l.height(),
                image.width(),
                image.height()
            ))));
        }
    }
    let mut c = Cascade {
        image,
        cfg,
        backends,
        models,
        input_report: None,
        stages: Vec::new(),
    };
    match models.assess(image) {
        Ok(r) => c.input_report = Some(r),
        Err(e) => return Err(c.fail(e)),
    }
    let before = c.input_report.unwrap();

    let Some(logits) = logits else {
        log::info!("no detections; recording an empty-mask stage");
        let empty = BinaryMask::empty(image.width(), image.height()).expect("image has valid size");
        c.stages.push(StageRecord {
            stage: 1,
            params: StageParams::Mask {
                t: cfg.stage1.t,
                b: cfg.stage1.b,
                method: cfg.inpaint.resolve(&empty),
            },
            mask: Some(empty),
            masked_image: image.clone(),
            result: image.clone(),
            report: before,
            decision: StageDecision::Exhausted,
            runtime_ms: cfg.record_timings.then_some(0),
        });
        return Ok(c.finish(0));
    };

    let regen_available = backends.is_some();
    let last_stage = if regen_available { cfg.max_stages } else { cfg.max_stages.min(2) };
    if last_stage < cfg.max_stages {
        log::warn!("no generation backend; the cascade stops after stage {last_stage}");
    }

    for stage in 1..=last_stage {
        let record = match stage {
            1 => c.mask_stage(1, &logits, cfg.stage1),
            2 => c.mask_stage(2, &logits, cfg.stage2),
            _ => c.regenerate_stage(backends.expect("checked above")),
        };
        let mut record = match record {
            Ok(r) => r,
            Err(e) => return Err(c.fail(e)),
        };
        record.decision = match sufficiency(&before, &record.report, &cfg.policy, stage) {
            Sufficiency::Sufficient => StageDecision::Accepted,
            Sufficiency::Pending => StageDecision::Pending,
            Sufficiency::Insufficient if stage < last_stage => StageDecision::Escalated,
            Sufficiency::Insufficient => StageDecision::Exhausted,
        };
        let stop = record.decision != StageDecision::Escalated;
        log::info!("stage {stage}: niqe {:.4}, {}", record.report.niqe, record.decision);
        c.stages.push(record);
        if stop {
            break;
        }
    }
    Ok(c.finish(detections))
}
