use std::net::SocketAddr;
use std::sync::OnceLock;

use axum::extract::Path;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use retouch_core::backends::wire::*;
use retouch_core::backends::{
    logits_from_box, BoxRegion, Caption, CaptionSource, Captioner, Detector, DetectorConfig, Generator,
    HttpBackend, Inpainter, PromptRewriter, RefinedCaption,
};
use retouch_core::{BinaryMask, Error, ImageBuffer};

type Reply<T> = Result<Json<T>, (StatusCode, String)>;

fn refuse(mode: &str) -> Option<(StatusCode, String)> {
    (mode == "broken").then(|| (StatusCode::SERVICE_UNAVAILABLE, "model not loaded".to_string()))
}

async fn detect(Path(mode): Path<String>, Json(req): Json<DetectRequest>) -> Reply<DetectResponse> {
    if let Some(e) = refuse(&mode) {
        return Err(e);
    }
    let img = image_from_b64(&req.image).unwrap();
    let (w, h) = img.dimensions();
    let bbox = BoxRegion { x: 2, y: 3, w: 4, h: 5 };
    let logits = logits_to_b64(&logits_from_box(w, h, bbox).unwrap());
    let det = |label: &str, score: f64, bbox: [usize; 4]| WireDetection {
        label: label.into(),
        score,
        bbox,
        logits: logits.clone(),
    };
    let mut detections = vec![det(&req.prompt, 0.8, [2, 3, 4, 5]), det("shadow", 0.05, [2, 3, 4, 5])];
    if mode == "odd" {
        detections.push(det("huge", 0.9, [0, 0, w + 1, h]));
    }
    Ok(Json(DetectResponse { detections }))
}

async fn inpaint(Path(mode): Path<String>, Json(req): Json<InpaintRequest>) -> Reply<ImageReply> {
    if let Some(e) = refuse(&mode) {
        return Err(e);
    }
    let img = image_from_b64(&req.image).unwrap();
    let mask = mask_from_b64(&req.mask).unwrap();
    assert_eq!(img.dimensions(), mask.dimensions());
    let (w, h) = if mode == "odd" { (1, 1) } else { img.dimensions() };
    let out = ImageBuffer::filled(w, h, [9, 9, 9]).unwrap();
    Ok(Json(ImageReply {
        image: image_to_b64(&out).unwrap(),
    }))
}

async fn caption(Path(mode): Path<String>, Json(req): Json<CaptionRequest>) -> Reply<TextReply> {
    if let Some(e) = refuse(&mode) {
        return Err(e);
    }
    let img = image_from_b64(&req.image).unwrap();
    let text = if mode == "odd" {
        String::new()
    } else {
        format!("a {}x{} picture of a cat", img.width(), img.height())
    };
    Ok(Json(TextReply { text }))
}

async fn rewrite(Path(mode): Path<String>, Json(req): Json<RewriteRequest>) -> Reply<TextReply> {
    if let Some(e) = refuse(&mode) {
        return Err(e);
    }
    Ok(Json(TextReply {
        text: req.caption.replace(&format!(" of a {}", req.prompt), ""),
    }))
}

async fn generate(Path(mode): Path<String>, Json(req): Json<GenerateRequest>) -> Reply<ImageReply> {
    if let Some(e) = refuse(&mode) {
        return Err(e);
    }
    let img = image_from_b64(&req.image).unwrap();
    let shade = req.prompt.len() as u8;
    let out = ImageBuffer::filled(img.width(), img.height(), [shade, shade, shade]).unwrap();
    Ok(Json(ImageReply {
        image: image_to_b64(&out).unwrap(),
    }))
}

fn server() -> SocketAddr {
    static ADDR: OnceLock<SocketAddr> = OnceLock::new();
    *ADDR.get_or_init(|| {
        let (tx, rx) = std::sync::mpsc::channel();
        std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let app = Router::new()
                    .route("/{mode}/detect", post(detect))
                    .route("/{mode}/inpaint", post(inpaint))
                    .route("/{mode}/caption", post(caption))
                    .route("/{mode}/rewrite", post(rewrite))
                    .route("/{mode}/generate", post(generate));
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                tx.send(listener.local_addr().unwrap()).unwrap();
                axum::serve(listener, app).await.unwrap();
            });
        });
        rx.recv().unwrap()
    })
}

fn backend(mode: &str) -> HttpBackend {
    HttpBackend::new(format!("http://{}/{mode}", server()))
}

fn image() -> ImageBuffer {
    ImageBuffer::from_fn(12, 10, |x, y| [x as u8 * 20, y as u8 * 20, 100]).unwrap()
}

#[test]
fn detect_filters_by_box_threshold() {
    let dets = backend("ok").detect(&image(), "cat", &DetectorConfig::default()).unwrap();
    assert_eq!(dets.len(), 1);
    assert_eq!(dets[0].label, "cat");
    assert_eq!(dets[0].bbox, BoxRegion { x: 2, y: 3, w: 4, h: 5 });
    assert_eq!(dets[0].logits.dimensions(), (12, 10));
    let all = backend("ok").detect(&image(), "cat", &DetectorConfig::new(0.0, 0.1).unwrap()).unwrap();
    assert_eq!(all.len(), 2);
}

#[test]
fn out_of_bounds_box_is_a_backend_error() {
    let err = backend("odd").detect(&image(), "cat", &DetectorConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Backend { ref endpoint, .. } if endpoint.ends_with("/odd/detect")), "{err}");
}

#[test]
fn inpaint_round_trip_and_size_check() {
    let mask = BinaryMask::from_fn(12, 10, |x, _| x > 6).unwrap();
    let out = backend("ok").inpaint(&image(), &mask).unwrap();
    assert_eq!(out.pixel(0, 0), [9, 9, 9]);
    assert!(backend("ok").endpoint().ends_with("/ok/inpaint"));
    assert!(matches!(backend("odd").inpaint(&image(), &mask), Err(Error::Backend { .. })));
}

#[test]
fn caption_rewrite_generate_chain() {
    let b = backend("ok");
    let cap = b.caption(&image()).unwrap();
    assert_eq!(cap.text, "a 12x10 picture of a cat");
    assert_eq!(cap.source, CaptionSource::Original);
    let refined = b.rewrite("cat", &cap).unwrap();
    assert_eq!(refined.text, "a 12x10 picture");
    assert!(refined.rewritten);
    let out = b.generate(&refined, &image()).unwrap();
    assert_eq!(out.pixel(3, 3), [15, 15, 15]);
    assert!(matches!(backend("odd").caption(&image()), Err(Error::Backend { .. })));
}

#[test]
fn http_errors_carry_status_and_body() {
    let b = backend("broken");
    let err = b.inpaint(&image(), &BinaryMask::empty(12, 10).unwrap()).unwrap_err();
    let text = err.to_string();
    assert!(text.contains("503") && text.contains("model not loaded"), "{text}");
    let cap = Caption::new("x", CaptionSource::Original).unwrap();
    assert!(b.rewrite("cat", &cap).is_err());
    let refined = RefinedCaption {
        text: "x".into(),
        prompt: "cat".into(),
        caption: "x".into(),
        rewritten: false,
    };
    assert!(b.generate(&refined, &image()).is_err());
}

#[test]
fn empty_prompt_never_reaches_the_server() {
    let err = backend("ok").detect(&image(), " ", &DetectorConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Parameter(_)));
}
