use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use retouch_core::backends::{
    distortion_corpus, merged_logits, pristine_corpus, rank_detections, synth_scene, BackendSet, HttpBackend,
    SceneSpec, BACKEND_URL_ENV, DEFAULT_SCENE_SIDE,
};
use retouch_core::imaging::to_luma;
use retouch_core::inpaint::{InpaintSettings, MethodKind};
use retouch_core::iqa::{
    self, fit_niqe_model, BrisqueModel, NiqeModel, QualityModels, QualityReport,
};
use retouch_core::pipeline::{self, ParamRange, PipelineConfig, SweepPlan};
use retouch_core::{Error, ImageBuffer, LogitMap, MaskParams};

use crate::error::CliError;
use crate::{ModelArgs, RunArgs, ScoreArgs, ServeArgs, SourceArgs, SweepArgs, SynthArgs, TrainBrisqueArgs, TrainNiqeArgs};

/// Images used to fit a NIQE model when none is supplied.
const DEFAULT_NIQE_IMAGES: usize = 24;
/// Smallest corpus `train-niqe` accepts.
const MIN_NIQE_IMAGES: usize = 10;
/// Noise levels of the synthetic BRISQUE corpus.
const DISTORTION_SIGMAS: [f64; 4] = [0.0, 5.0, 15.0, 30.0];
const IMAGE_EXTENSIONS: [&str; 6] = ["png", "jpg", "jpeg", "bmp", "tif", "tiff"];

fn print_line(value: &impl Serialize) -> Result<(), CliError> {
    let line = serde_json::to_string(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{line}");
    Ok(())
}

fn read_image(path: &Path) -> Result<ImageBuffer, CliError> {
    ImageBuffer::open(path).map_err(|e| CliError::input(&path.display().to_string(), e))
}

fn read_logits(path: &Path) -> Result<LogitMap, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::input(&path.display().to_string(), e))?;
    LogitMap::from_lgt1(&bytes).map_err(|e| CliError::input(&path.display().to_string(), e))
}

fn load_niqe(path: &Path) -> Result<NiqeModel, CliError> {
    NiqeModel::load(path).map_err(|e| CliError::model(&format!("niqe model {}", path.display()), e))
}

fn load_brisque(path: &Path) -> Result<BrisqueModel, CliError> {
    BrisqueModel::load(path).map_err(|e| CliError::model(&format!("brisque model {}", path.display()), e))
}

fn load_models(args: &ModelArgs) -> Result<QualityModels, CliError> {
    let niqe = match &args.niqe_model {
        Some(p) => load_niqe(p)?,
        None => {
            log::info!("no --niqe-model; fitting one on {DEFAULT_NIQE_IMAGES} synthetic images");
            let corpus: Vec<_> = pristine_corpus(args.seed, DEFAULT_NIQE_IMAGES, DEFAULT_SCENE_SIDE, DEFAULT_SCENE_SIDE)?
                .iter()
                .map(to_luma)
                .collect();
            fit_niqe_model(&corpus)?
        }
    };
    let brisque = args.brisque_model.as_deref().map(load_brisque).transpose()?;
    Ok(QualityModels::new(niqe, brisque))
}

fn backend_url(flag: &Option<String>) -> Option<String> {
    flag.clone()
        .or_else(|| std::env::var(BACKEND_URL_ENV).ok())
        .filter(|s| !s.trim().is_empty())
}

fn backends(url: Option<String>) -> Option<BackendSet> {
    url.map(|u| BackendSet::uniform(HttpBackend::new(u)))
}

fn check_method(method: MethodKind, backends: &Option<BackendSet>) -> Result<(), CliError> {
    if method == MethodKind::External && backends.is_none() {
        return Err(CliError::usage(format!(
            "--method external needs --backend-url or {BACKEND_URL_ENV}"
        )));
    }
    Ok(())
}

/// Logits from --logits, or from the detector when only --prompt is given.
fn source_logits(
    source: &SourceArgs,
    image: &ImageBuffer,
    backends: Option<&BackendSet>,
) -> Result<LogitMap, CliError> {
    if let Some(path) = &source.logits {
        return read_logits(path);
    }
    let prompt = source
        .prompt
        .as_deref()
        .ok_or_else(|| CliError::usage("either --logits or --prompt is required"))?;
    let bs = backends.ok_or_else(|| CliError::usage(format!("--prompt needs --backend-url or {BACKEND_URL_ENV}")))?;
    let cfg = PipelineConfig::default();
    let detections = rank_detections(bs.detector.detect(image, prompt, &cfg.detector)?);
    merged_logits(&detections)?.ok_or_else(|| CliError::Runtime(format!("no detection for '{prompt}'")))
}

#[derive(Serialize)]
struct RunSummary {
    #[serde(flatten)]
    report: QualityReport,
    final_stage: u8,
    accepted_stage: Option<u8>,
    stages: usize,
    detections: usize,
}

pub fn run(args: RunArgs) -> Result<(), CliError> {
    let src = &args.source;
    let image = read_image(&src.image)?;
    let backends = backends(backend_url(&src.backend_url));
    check_method(src.method, &backends)?;

    let stage1 = MaskParams::new(args.t.unwrap_or(MaskParams::RAW.t), args.b.unwrap_or(MaskParams::RAW.b))?;
    let stage2 = MaskParams {
        t: stage1.t.min(MaskParams::AUTOMATION.t),
        b: stage1.b.max(MaskParams::AUTOMATION.b),
    };
    let cfg = PipelineConfig {
        prompt: src.prompt.clone().unwrap_or_default(),
        stage1,
        stage2,
        inpaint: InpaintSettings::with_method(src.method),
        record_timings: !args.no_timings,
        ..PipelineConfig::default()
    };
    let models = load_models(&args.models)?;

    let outcome = match (&src.logits, &src.prompt, &backends) {
        (Some(path), _, _) => {
            let logits = read_logits(path)?;
            let bs = backends
                .as_ref()
                .filter(|_| src.prompt.is_some() || src.method == MethodKind::External);
            pipeline::run_from_logits(&image, Some(logits), &cfg, bs, &models)
        }
        (None, Some(_), Some(bs)) => pipeline::run(&image, &cfg, bs, &models),
        (None, Some(_), None) => {
            return Err(CliError::usage(format!("--prompt needs --backend-url or {BACKEND_URL_ENV}")))
        }
        (None, None, _) => return Err(CliError::usage("either --logits or --prompt is required")),
    }
    .map_err(|e| CliError::from(e.error))?;

    if let Some(dir) = &args.out {
        pipeline::write_outcome(&outcome, &cfg, dir)?;
    }
    let final_report = outcome
        .stages
        .iter()
        .find(|s| s.stage == outcome.final_stage)
        .map(|s| s.report)
        .unwrap_or(outcome.input_report);
    print_line(&RunSummary {
        report: final_report,
        final_stage: outcome.final_stage,
        accepted_stage: outcome.accepted_stage,
        stages: outcome.stages.len(),
        detections: outcome.detections,
    })
}

pub fn sweep(args: SweepArgs) -> Result<(), CliError> {
    let src = &args.source;
    let image = read_image(&src.image)?;
    let backends = backends(backend_url(&src.backend_url));
    check_method(src.method, &backends)?;
    let plan = SweepPlan {
        b: args.sweep_b.unwrap_or(ParamRange::single(args.b)),
        t: args.sweep_t.unwrap_or(ParamRange::single(args.t)),
        inpaint: InpaintSettings::with_method(src.method),
        record_timings: !args.no_timings,
    };
    let logits = source_logits(src, &image, backends.as_ref())?;
    let models = load_models(&args.models)?;
    let external = backends.as_ref().and_then(|bs| bs.inpainter.as_deref());
    let table = pipeline::sweep(&image, &logits, &plan, external, &models)?;

    let failed = table.rows.iter().filter(|r| r.error.is_some()).count();
    for r in table.rows.iter().filter(|r| r.error.is_some()) {
        log::warn!("cell b={} t={}: {}", r.b, r.t, r.error.as_deref().unwrap_or_default());
    }
    let best = table.best();
    let summary = json!({
        "rows": table.rows.len(),
        "failed": failed,
        "best": best.map(|r| json!({"b": r.b, "t": r.t, "niqe": r.niqe, "mask_area": r.mask_area})),
    });
    match &args.report {
        Some(path) => {
            table.save_csv(path)?;
            print_line(&summary)
        }
        None => {
            print!("{}", table.to_csv()?);
            eprintln!("{summary}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct ScoreLine {
    image: String,
    #[serde(flatten)]
    report: QualityReport,
}

#[derive(Serialize)]
struct ScoreError {
    image: String,
    error: String,
}

#[derive(Serialize)]
struct MeanLine {
    mean: bool,
    count: usize,
    niqe: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    brisque: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pi: Option<f64>,
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::input(&dir.display().to_string(), e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn score(args: ScoreArgs) -> Result<(), CliError> {
    let models = QualityModels::new(
        load_niqe(&args.niqe_model)?,
        args.brisque_model.as_deref().map(load_brisque).transpose()?,
    );
    if !args.image.is_dir() {
        let report = models.assess(&read_image(&args.image)?)?;
        return print_line(&ScoreLine {
            image: args.image.display().to_string(),
            report,
        });
    }
    let mut reports = Vec::new();
    for path in image_files(&args.image)? {
        let name = path.display().to_string();
        match ImageBuffer::open(&path).and_then(|img| models.assess(&img)) {
            Ok(report) => {
                print_line(&ScoreLine { image: name, report })?;
                reports.push(report);
            }
            Err(e) => print_line(&ScoreError {
                image: name,
                error: e.to_string(),
            })?,
        }
    }
    if let Some(niqe) = mean(reports.iter().map(|r| r.niqe)) {
        let with_brisque = reports.iter().all(|r| r.brisque.is_some());
        print_line(&MeanLine {
            mean: true,
            count: reports.len(),
            niqe,
            brisque: mean(reports.iter().filter_map(|r| r.brisque)).filter(|_| with_brisque),
            pi: mean(reports.iter().filter_map(|r| r.pi)).filter(|_| with_brisque),
        })?;
    }
    Ok(())
}

pub fn train_niqe(args: TrainNiqeArgs) -> Result<(), CliError> {
    let mut corpus = Vec::new();
    for path in image_files(&args.corpus)? {
        match ImageBuffer::open(&path) {
            Ok(img) => corpus.push(to_luma(&img)),
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
    if corpus.len() < MIN_NIQE_IMAGES {
        return Err(CliError::usage(format!(
            "corpus {} has {} readable images; at least {MIN_NIQE_IMAGES} are needed",
            args.corpus.display(),
            corpus.len()
        )));
    }
    let model = fit_niqe_model(&corpus).map_err(|e| CliError::Usage(e.to_string()))?;
    model.save(&args.out)?;
    print_line(&json!({
        "images": corpus.len(),
        "patches_kept": model.patches_kept,
        "dim": model.dim(),
        "out": args.out.display().to_string(),
    }))
}

fn read_labels(path: &Path) -> Result<Vec<(PathBuf, f64)>, CliError> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::input(&path.display().to_string(), e))?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::input(&path.display().to_string(), e))?;
        if record.len() < 2 {
            return Err(CliError::usage(format!("{} line {}: expected path,label", path.display(), i + 1)));
        }
        let label = match record[1].parse::<f64>() {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(e) => return Err(CliError::usage(format!("{} line {}: label: {e}", path.display(), i + 1))),
        };
        rows.push((base.join(&record[0]), label));
    }
    Ok(rows)
}

pub fn train_brisque(args: TrainBrisqueArgs) -> Result<(), CliError> {
    let rows = read_labels(&args.labels)?;
    let mut corpus = Vec::with_capacity(rows.len());
    for (path, label) in rows {
        corpus.push((to_luma(&read_image(&path)?), label));
    }
    let model = iqa::train_brisque(&corpus).map_err(|e| match e {
        Error::Fit(_) | Error::Parameter(_) => CliError::Usage(e.to_string()),
        e => CliError::from(e),
    })?;
    model.save(&args.out)?;
    print_line(&json!({
        "images": corpus.len(),
        "anchors": model.anchors.len(),
        "out": args.out.display().to_string(),
    }))
}

pub fn serve(args: ServeArgs) -> Result<(), CliError> {
    let config = retouch_service::ServiceConfig {
        models: load_models(&args.models)?,
        backends: backends(backend_url(&args.backend_url)),
        static_dir: args.static_dir,
    };
    let addr = std::net::SocketAddr::new(args.host, args.port);
    eprintln!("serving on http://{addr}");
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(retouch_service::serve(config, addr))?;
    Ok(())
}

fn write_png(img: &ImageBuffer, path: &Path) -> Result<(), CliError> {
    img.save_png(path).map_err(CliError::from)
}

pub fn synth(args: SynthArgs) -> Result<(), CliError> {
    fs::create_dir_all(&args.out)?;
    let spec = SceneSpec {
        width: args.size,
        height: args.size,
        label: args.label.clone(),
        shape: None,
        object_scale: args.object_scale,
    };
    for i in 0..args.scenes {
        let scene = synth_scene(args.seed.wrapping_add(i as u64), &spec)?;
        let stem = args.out.join(format!("scene_{i:03}"));
        write_png(&scene.image, &stem.with_extension("png"))?;
        fs::write(stem.with_extension("lgt"), scene.logits_truth.to_lgt1())?;
        let truth = &scene.object_mask_truth;
        let truth_img = ImageBuffer::from_fn(truth.width(), truth.height(), |x, y| {
            if truth.get(x, y) {
                [255; 3]
            } else {
                [0; 3]
            }
        })?;
        write_png(&truth_img, &args.out.join(format!("scene_{i:03}_truth.png")))?;
        write_png(&scene.background_reference, &args.out.join(format!("scene_{i:03}_background.png")))?;
    }
    if args.pristine > 0 {
        let dir = args.out.join("pristine");
        fs::create_dir_all(&dir)?;
        for (i, img) in pristine_corpus(args.seed, args.pristine, args.size, args.size)?.iter().enumerate() {
            write_png(img, &dir.join(format!("{i:04}.png")))?;
        }
    }
    if args.distorted > 0 {
        let dir = args.out.join("distorted");
        fs::create_dir_all(&dir)?;
        let mut labels = String::from("image,label\n");
        let corpus = distortion_corpus(args.seed, args.distorted, &DISTORTION_SIGMAS, args.size, args.size)?;
        for (i, (img, sigma)) in corpus.iter().enumerate() {
            let name = format!("{:04}_s{}.png", i / DISTORTION_SIGMAS.len(), sigma);
            write_png(img, &dir.join(&name))?;
            labels.push_str(&format!("{name},{sigma}\n"));
        }
        fs::write(dir.join("labels.csv"), labels)?;
    }
    print_line(&json!({
        "out": args.out.display().to_string(),
        "scenes": args.scenes,
        "pristine": args.pristine,
        "distorted": args.distorted * DISTORTION_SIGMAS.len(),
    }))
}
