use std::path::Path;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::wire::{self, DetectRequest, DetectResponse, ImageReply, TextReply};
use super::{
    BoxRegion, Caption, CaptionSource, Captioner, Detection, Detector, DetectorConfig, Generator, Inpainter,
    PromptRewriter, RefinedCaption,
};
use crate::error::{Error, Result};
use crate::imaging::ImageBuffer;
use crate::maskops::BinaryMask;

/// Environment variable consulted when no endpoint root is configured.
pub const BACKEND_URL_ENV: &str = "RETOUCH_BACKEND_URL";

const RESPONSE_LIMIT: u64 = 256 * 1024 * 1024;

/// Contents of a backend configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub backend_url: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    120
}

impl BackendConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("backend config: {e}")))
    }
}

/// Client for a service speaking the JSON backend protocol.
#[derive(Clone, Debug)]
pub struct HttpBackend {
    root: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(root: impl Into<String>) -> Self {
        Self::with_timeout(root, Duration::from_secs(default_timeout()))
    }

    pub fn with_timeout(root: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            root: root.into().trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub fn from_config(cfg: &BackendConfig) -> Self {
        Self::with_timeout(cfg.backend_url.clone(), Duration::from_secs(cfg.timeout_secs))
    }

    /// Client for `$RETOUCH_BACKEND_URL`, if set and non-empty.
    pub fn from_env() -> Option<Self> {
        std::env::var(BACKEND_URL_ENV)
            .ok()
            .filter(|s| !s.trim().is_empty())
            .map(Self::new)
    }

    pub fn root(&self) -> &str {
        &self.root
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.root)
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R> {
        let url = self.url(path);
        let mut resp = self
            .agent
            .post(&url)
            .send_json(body)
            .map_err(|e| Error::backend(&url, e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let detail = resp
                .body_mut()
                .with_config()
                .limit(64 * 1024)
                .read_to_string()
                .unwrap_or_default();
            return Err(Error::backend(&url, format!("HTTP {status}: {}", detail.trim())));
        }
        resp.body_mut()
            .with_config()
            .limit(RESPONSE_LIMIT)
            .read_json()
            .map_err(|e| Error::backend(&url, format!("malformed response: {e}")))
    }

    fn decode_image_reply(&self, path: &str, reply: ImageReply, like: &ImageBuffer) -> Result<ImageBuffer> {
        let url = self.url(path);
        let img = wire::image_from_b64(&reply.image).map_err(|e| Error::backend(&url, e.to_string()))?;
        if img.dimensions() != like.dimensions() {
            return Err(Error::backend(
                url,
                format!(
                    "returned {}x{} image for a {}x{} input",
                    img.width(),
                    img.height(),
                    like.width(),
                    like.height()
                ),
            ));
        }
        Ok(img)
    }

    fn text_reply(&self, path: &str, reply: TextReply) -> Result<String> {
        if reply.text.trim().is_empty() {
            return Err(Error::backend(self.url(path), "empty text in response"));
        }
        Ok(reply.text)
    }
}

impl Detector for HttpBackend {
    fn detect(&self, image: &ImageBuffer, prompt: &str, cfg: &DetectorConfig) -> Result<Vec<Detection>> {
        if prompt.trim().is_empty() {
            return Err(Error::param("detection prompt is empty"));
        }
        let req = DetectRequest {
            image: wire::image_to_b64(image)?,
            prompt: prompt.to_string(),
            box_threshold: cfg.box_threshold,
            text_threshold: cfg.text_threshold,
        };
        let resp: DetectResponse = self.post("/detect", &req)?;
        let url = self.url("/detect");
        let (w, h) = image.dimensions();
        let mut out = Vec::with_capacity(resp.detections.len());
        for d in resp.detections {
            let logits = wire::logits_from_b64(&d.logits).map_err(|e| Error::backend(&url, e.to_string()))?;
            let [x, y, bw, bh] = d.bbox;
            let det = Detection {
                label: d.label,
                score: d.score,
                bbox: BoxRegion { x, y, w: bw, h: bh },
                logits,
            };
            det.validate(w, h).map_err(|e| Error::backend(&url, e.to_string()))?;
            if det.score >= cfg.box_threshold {
                out.push(det);
            }
        }
        Ok(out)
    }
}

impl Inpainter for HttpBackend {
    fn endpoint(&self) -> String {
        self.url("/inpaint")
    }

    fn inpaint(&self, image: &ImageBuffer, mask: &BinaryMask) -> Result<ImageBuffer> {
        let req = wire::InpaintRequest {
            image: wire::image_to_b64(image)?,
            mask: wire::mask_to_b64(mask)?,
        };
        let reply: ImageReply = self.post("/inpaint", &req)?;
        self.decode_image_reply("/inpaint", reply, image)
    }
}

impl Captioner for HttpBackend {
    fn caption(&self, image: &ImageBuffer) -> Result<Caption> {
        let req = wire::CaptionRequest {
            image: wire::image_to_b64(image)?,
        };
        let reply: TextReply = self.post("/caption", &req)?;
        Caption::new(self.text_reply("/caption", reply)?, CaptionSource::Original)
    }
}

impl PromptRewriter for HttpBackend {
    fn rewrite(&self, prompt: &str, caption: &Caption) -> Result<RefinedCaption> {
        let req = wire::RewriteRequest {
            prompt: prompt.to_string(),
            caption: caption.text.clone(),
        };
        let reply: TextReply = self.post("/rewrite", &req)?;
        let text = self.text_reply("/rewrite", reply)?;
        Ok(RefinedCaption {
            rewritten: text != caption.text,
            text,
            prompt: prompt.to_string(),
            caption: caption.text.clone(),
        })
    }
}

impl Generator for HttpBackend {
    fn generate(&self, refined: &RefinedCaption, image: &ImageBuffer) -> Result<ImageBuffer> {
        let req = wire::GenerateRequest {
            prompt: refined.text.clone(),
            image: wire::image_to_b64(image)?,
        };
        let reply: ImageReply = self.post("/generate", &req)?;
        self.decode_image_reply("/generate", reply, image)
    }
}
