use std::path::Path;

use serde::Serialize;

use super::{PipelineConfig, PipelineOutcome, StageDecision, StageParams};
use crate::error::{Error, Result};
use crate::iqa::{QualityReport, PI_DEFINITION};

#[derive(Serialize)]
struct StageJson<'a> {
    stage: u8,
    params: &'a StageParams,
    decision: StageDecision,
    report: QualityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    mask_area: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mask_coverage: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mask_file: Option<String>,
    result_file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    runtime_ms: Option<u64>,
}

#[derive(Serialize)]
struct OutcomeJson<'a> {
    config: &'a PipelineConfig,
    pi_definition: &'static str,
    detections: usize,
    input_report: QualityReport,
    stages: Vec<StageJson<'a>>,
    final_stage: u8,
    accepted_stage: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    total_runtime_ms: Option<u64>,
}

/// The `outcome.json` document for a run.
pub fn outcome_json(outcome: &PipelineOutcome, cfg: &PipelineConfig) -> Result<String> {
    let stages = outcome
        .stages
        .iter()
        .map(|s| StageJson {
            stage: s.stage,
            params: &s.params,
            decision: s.decision,
            report: s.report,
            mask_area: s.mask.as_ref().map(|m| m.area()),
            mask_coverage: s.mask.as_ref().map(|m| m.coverage()),
            mask_file: s.mask.as_ref().map(|_| format!("stage{}_mask.png", s.stage)),
            result_file: format!("stage{}_result.png", s.stage),
            runtime_ms: s.runtime_ms,
        })
        .collect();
    let total = cfg
        .record_timings
        .then(|| outcome.stages.iter().filter_map(|s| s.runtime_ms).sum());
    let doc = OutcomeJson {
        config: cfg,
        pi_definition: PI_DEFINITION,
        detections: outcome.detections,
        input_report: outcome.input_report,
        stages,
        final_stage: outcome.final_stage,
        accepted_stage: outcome.accepted_stage,
        total_runtime_ms: total,
    };
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// Write `input.png`, `stageN_mask.png`, `stageN_result.png` and `outcome.json` into `dir`.
pub fn write_outcome(outcome: &PipelineOutcome, cfg: &PipelineConfig, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    outcome.input.save_png(dir.join("input.png"))?;
    for s in &outcome.stages {
        if let Some(mask) = &s.mask {
            std::fs::write(dir.join(format!("stage{}_mask.png", s.stage)), mask.encode_png()?)?;
        }
        s.result.save_png(dir.join(format!("stage{}_result.png", s.stage)))?;
    }
    std::fs::write(dir.join("outcome.json"), outcome_json(outcome, cfg)?)?;
    Ok(())
}
