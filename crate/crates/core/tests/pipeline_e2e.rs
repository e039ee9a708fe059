use std::sync::OnceLock;

use retouch_core::backends::{pristine_corpus, synth_scene, BackendSet, MockSceneBackend, SceneSpec, SyntheticScene};
use retouch_core::imaging::to_luma;
use retouch_core::inpaint::{InpaintSettings, MethodKind};
use retouch_core::iqa::{fit_niqe_model, QualityModels};
use retouch_core::pipeline::*;

const SIDE: usize = 192;

fn models() -> &'static QualityModels {
    static M: OnceLock<QualityModels> = OnceLock::new();
    M.get_or_init(|| {
        let corpus: Vec<_> = pristine_corpus(500, 12, SIDE, SIDE).unwrap().iter().map(to_luma).collect();
        QualityModels::new(fit_niqe_model(&corpus).unwrap(), None)
    })
}

fn scene(seed: u64) -> SyntheticScene {
    let spec = SceneSpec {
        width: SIDE,
        height: SIDE,
        ..SceneSpec::default()
    };
    synth_scene(seed, &spec).unwrap()
}

fn config(scene: &SyntheticScene, verdicts: Vec<Verdict>) -> PipelineConfig {
    PipelineConfig {
        policy: SufficiencyPolicy::Interactive { verdicts },
        record_timings: false,
        ..PipelineConfig::with_prompt(format!("remove the {}", scene.object_label))
    }
}

#[test]
fn reject_then_accept_gives_two_stages() {
    let s = scene(1);
    let backends = BackendSet::uniform(MockSceneBackend::from_scene(&s));
    let out = run(&s.image, &config(&s, vec![Verdict::Reject, Verdict::Accept]), &backends, models()).unwrap();
    assert_eq!(out.stages.len(), 2);
    assert_eq!(out.stages[0].decision, StageDecision::Escalated);
    assert_eq!(out.stages[1].decision, StageDecision::Accepted);
    let (m1, m2) = (out.stages[0].mask.as_ref().unwrap(), out.stages[1].mask.as_ref().unwrap());
    assert!(m1.is_subset_of(m2));
    assert!(m2.area() > m1.area());
    assert_eq!((out.final_stage, out.accepted_stage), (2, Some(2)));
    assert_eq!(out.final_image, out.stages[1].result);
    assert_eq!(out.detections, 1);
}

#[test]
fn third_stage_regenerates_from_caption() {
    let s = scene(2);
    let backends = BackendSet::uniform(MockSceneBackend::from_scene(&s));
    let cfg = config(&s, vec![Verdict::Reject, Verdict::Reject, Verdict::Accept]);
    let out = run(&s.image, &cfg, &backends, models()).unwrap();
    assert_eq!(out.stages.len(), 3);
    match &out.stages[2].params {
        StageParams::Regenerate { caption, refined } => {
            assert!(caption.contains(&s.object_label));
            assert!(!refined.text.contains(&s.object_label));
            assert!(refined.rewritten);
        }
        other => panic!("unexpected stage 3 params {other:?}"),
    }
    assert!(out.stages[2].mask.is_none());
    assert_eq!(out.final_image, s.background_reference);
    assert_eq!(out.accepted_stage, Some(3));
}

#[test]
fn detector_miss_is_exhausted_immediately() {
    let s = scene(3);
    let backends = BackendSet::uniform(MockSceneBackend::from_scene(&s));
    let cfg = PipelineConfig {
        record_timings: false,
        ..PipelineConfig::with_prompt("remove the zebra")
    };
    let out = run(&s.image, &cfg, &backends, models()).unwrap();
    assert_eq!(out.detections, 0);
    assert_eq!(out.stages.len(), 1);
    assert_eq!(out.stages[0].decision, StageDecision::Exhausted);
    assert!(out.stages[0].mask.as_ref().unwrap().is_empty());
    assert_eq!(out.final_image, s.image);
}

#[test]
fn without_backends_cascade_stops_after_two_stages() {
    let s = scene(4);
    let cfg = config(&s, vec![Verdict::Reject, Verdict::Reject]);
    let out = run_from_logits(&s.image, Some(s.logits_truth.clone()), &cfg, None, models()).unwrap();
    assert_eq!(out.stages.len(), 2);
    assert_eq!(out.stages[1].decision, StageDecision::Exhausted);
    assert_eq!(out.accepted_stage, None);
    let best = out
        .stages
        .iter()
        .min_by(|a, b| a.report.niqe.total_cmp(&b.report.niqe))
        .unwrap();
    assert_eq!(out.final_stage, best.stage);
}

#[test]
fn missing_verdict_leaves_stage_pending() {
    let s = scene(5);
    let cfg = config(&s, vec![]);
    let out = run_from_logits(&s.image, Some(s.logits_truth.clone()), &cfg, None, models()).unwrap();
    assert_eq!(out.stages.len(), 1);
    assert_eq!(out.stages[0].decision, StageDecision::Pending);
    assert_eq!(out.accepted_stage, None);
}

#[test]
fn stage_one_removes_object_texture() {
    let s = scene(6);
    let backends = BackendSet::uniform(MockSceneBackend::from_scene(&s));
    let cfg = PipelineConfig {
        record_timings: false,
        ..PipelineConfig::with_prompt(format!("remove the {}", s.object_label))
    };
    let out = run(&s.image, &cfg, &backends, models()).unwrap();
    let result = &out.stages[0].result;
    let truth = &s.object_mask_truth;
    for y in 0..SIDE {
        for x in 0..SIDE {
            if truth.get(x, y) {
                assert!(!retouch_core::backends::is_object_texture(result.pixel(x, y)), "leak at {x},{y}");
            }
        }
    }
}

#[test]
fn persisted_outcomes_are_reproducible() {
    let s = scene(7);
    let backends = BackendSet::uniform(MockSceneBackend::from_scene(&s));
    let cfg = config(&s, vec![Verdict::Reject, Verdict::Accept]);
    let dirs: Vec<_> = (0..2)
        .map(|_| {
            let out = run(&s.image, &cfg, &backends, models()).unwrap();
            let dir = tempfile::tempdir().unwrap();
            write_outcome(&out, &cfg, dir.path()).unwrap();
            dir
        })
        .collect();
    let names = ["input.png", "stage1_mask.png", "stage1_result.png", "stage2_mask.png", "stage2_result.png", "outcome.json"];
    for name in names {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
    let doc: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dirs[0].path().join("outcome.json")).unwrap()).unwrap();
    assert_eq!(doc["stages"].as_array().unwrap().len(), 2);
    assert_eq!(doc["stages"][1]["decision"], "accepted");
    assert_eq!(doc["config"]["stage2"]["t"], -10.0);
    assert!(doc.get("total_runtime_ms").is_none());
}

#[test]
fn sweep_rows_follow_ranges() {
    let s = scene(8);
    let plan = SweepPlan {
        b: "0:20:5".parse().unwrap(),
        t: ParamRange::single(-10.0),
        inpaint: InpaintSettings::with_method(MethodKind::FastMarching),
        record_timings: false,
    };
    let table = sweep(&s.image, &s.logits_truth, &plan, None, models()).unwrap();
    assert_eq!(table.rows.len(), 5);
    assert!(table.rows.windows(2).all(|w| w[0].mask_area <= w[1].mask_area));
    assert!(table.rows.iter().all(|r| r.niqe.is_some() && r.runtime_ms.is_none()));
    let plan = SweepPlan {
        b: ParamRange::single(15.0),
        t: "-20:0:10".parse().unwrap(),
        ..plan
    };
    let table = sweep(&s.image, &s.logits_truth, &plan, None, models()).unwrap();
    let ts: Vec<f64> = table.rows.iter().map(|r| r.t).collect();
    assert_eq!(ts, [-20.0, -10.0, 0.0]);
    assert!(table.rows.windows(2).all(|w| w[0].mask_area >= w[1].mask_area));
    assert!(table.to_csv().unwrap().starts_with("b,t,niqe,brisque,pi,mask_area,runtime_ms\n"));
}

#[test]
fn oversized_buffer_is_recorded_per_cell() {
    let s = scene(9);
    let plan = SweepPlan {
        b: "0:400:400".parse().unwrap(),
        t: ParamRange::single(0.0),
        inpaint: InpaintSettings::with_method(MethodKind::Exemplar),
        record_timings: false,
    };
    let table = sweep(&s.image, &s.logits_truth, &plan, None, models()).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert!(table.rows[0].error.is_none());
    assert!(table.rows[1].error.is_some());
    assert_eq!(table.rows[1].mask_area, SIDE * SIDE);
}
