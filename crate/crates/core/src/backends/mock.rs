//! Deterministic in-process stand-ins for the neural services.

use super::synth::SyntheticScene;
use super::{
    BoxRegion, Caption, CaptionSource, Captioner, Detection, Detector, DetectorConfig, Generator, Inpainter,
    PromptRewriter, RefinedCaption,
};
use crate::error::{Error, Result};
use crate::imaging::ImageBuffer;
use crate::maskops::{threshold_logits, BinaryMask, LogitMap};

/// Detection confidence reported by [`MockSceneBackend`].
pub const MOCK_SCORE: f64 = 0.9;

const ARTICLES: [&str; 3] = ["a", "an", "the"];
const PREPOSITIONS: [&str; 10] = ["on", "in", "at", "with", "near", "by", "under", "over", "against", "beside"];

/// Answers every backend role from the ground truth of one synthetic scene.
#[derive(Clone, Debug)]
pub struct MockSceneBackend {
    label: String,
    logits: LogitMap,
    background: ImageBuffer,
}

impl MockSceneBackend {
    pub fn new(label: impl Into<String>, logits: LogitMap, background: ImageBuffer) -> Result<Self> {
        if logits.dimensions() != background.dimensions() {
            return Err(Error::param("mock logits and background differ in size"));
        }
        Ok(Self {
            label: label.into(),
            logits,
            background,
        })
    }

    pub fn from_scene(scene: &SyntheticScene) -> Self {
        Self {
            label: scene.object_label.clone(),
            logits: scene.logits_truth.clone(),
            background: scene.background_reference.clone(),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn check_size(endpoint: &str, image: &ImageBuffer, expected: (usize, usize)) -> Result<()> {
    if image.dimensions() != expected {
        return Err(Error::backend(
            endpoint,
            format!(
                "scene is {}x{} but image is {}x{}",
                expected.0,
                expected.1,
                image.width(),
                image.height()
            ),
        ));
    }
    Ok(())
}

impl Detector for MockSceneBackend {
    fn detect(&self, image: &ImageBuffer, prompt: &str, cfg: &DetectorConfig) -> Result<Vec<Detection>> {
        if prompt.trim().is_empty() {
            return Err(Error::param("detection prompt is empty"));
        }
        cfg.validate()?;
        check_size("mock:/detect", image, self.logits.dimensions())?;
        let label = self.label.to_lowercase();
        let matched = words(prompt).contains(&label);
        if !matched || MOCK_SCORE < cfg.box_threshold || MOCK_SCORE < cfg.text_threshold {
            return Ok(Vec::new());
        }
        let (x, y, w, h) = threshold_logits(&self.logits, 0.0).bounding_box().unwrap_or((0, 0, 0, 0));
        Ok(vec![Detection {
            label: self.label.clone(),
            score: MOCK_SCORE,
            bbox: BoxRegion { x, y, w, h },
            logits: self.logits.clone(),
        }])
    }
}

impl Inpainter for MockSceneBackend {
    fn endpoint(&self) -> String {
        "mock:/inpaint".into()
    }

    /// The ideal fill: background reference under the mask.
    fn inpaint(&self, image: &ImageBuffer, mask: &BinaryMask) -> Result<ImageBuffer> {
        check_size("mock:/inpaint", image, self.background.dimensions())?;
        let mut out = image.clone();
        for y in 0..image.height() {
            for x in 0..image.width() {
                if mask.get(x, y) {
                    out.set_pixel(x, y, self.background.pixel(x, y));
                }
            }
        }
        Ok(out)
    }
}

impl Captioner for MockSceneBackend {
    fn caption(&self, image: &ImageBuffer) -> Result<Caption> {
        check_size("mock:/caption", image, self.background.dimensions())?;
        Caption::new(format!("a {} on a plain background", self.label), CaptionSource::Original)
    }
}

impl PromptRewriter for MockSceneBackend {
    /// Deletes the first prompt noun found in the caption, together with a
    /// preceding article and a following preposition.
    fn rewrite(&self, prompt: &str, caption: &Caption) -> Result<RefinedCaption> {
        if prompt.trim().is_empty() {
            return Err(Error::param("rewrite prompt is empty"));
        }
        let tokens: Vec<&str> = caption.text.split_whitespace().collect();
        let lowered: Vec<String> = tokens.iter().map(|t| words(t).concat()).collect();
        let target = words(prompt)
            .into_iter()
            .filter(|w| !ARTICLES.contains(&w.as_str()))
            .find_map(|w| lowered.iter().position(|t| *t == w));

        let unchanged = || RefinedCaption {
            text: caption.text.clone(),
            prompt: prompt.to_string(),
            caption: caption.text.clone(),
            rewritten: false,
        };
        let Some(pos) = target else {
            return Ok(unchanged());
        };
        let mut start = pos;
        if pos > 0 && ARTICLES.contains(&lowered[pos - 1].as_str()) {
            start = pos - 1;
        }
        let mut end = pos + 1;
        if end < tokens.len() && PREPOSITIONS.contains(&lowered[end].as_str()) {
            end += 1;
        }
        let kept: Vec<&str> = tokens[..start].iter().chain(&tokens[end..]).copied().collect();
        if kept.is_empty() {
            return Ok(unchanged());
        }
        Ok(RefinedCaption {
            text: kept.join(" "),
            prompt: prompt.to_string(),
            caption: caption.text.clone(),
            rewritten: true,
        })
    }
}

impl Generator for MockSceneBackend {
    fn generate(&self, _refined: &RefinedCaption, image: &ImageBuffer) -> Result<ImageBuffer> {
        check_size("mock:/generate", image, self.background.dimensions())?;
        Ok(self.background.clone())
    }
}

/// Returns its input untouched.
#[derive(Clone, Copy, Debug, Default)]
pub struct EchoInpainter;

impl Inpainter for EchoInpainter {
    fn endpoint(&self) -> String {
        "mock:/echo".into()
    }

    fn inpaint(&self, image: &ImageBuffer, _mask: &BinaryMask) -> Result<ImageBuffer> {
        Ok(image.clone())
    }
}

/// Paints every masked pixel with one gray level.
#[derive(Clone, Copy, Debug)]
pub struct ConstantFillInpainter(pub u8);

impl Inpainter for ConstantFillInpainter {
    fn endpoint(&self) -> String {
        "mock:/constant".into()
    }

    fn inpaint(&self, image: &ImageBuffer, mask: &BinaryMask) -> Result<ImageBuffer> {
        let mut out = image.clone();
        for y in 0..image.height() {
            for x in 0..image.width() {
                if mask.get(x, y) {
                    out.set_pixel(x, y, [self.0; 3]);
                }
            }
        }
        Ok(out)
    }
}

/// Captioner that always answers with the same configured text.
#[derive(Clone, Debug)]
pub struct FixedCaptioner(pub String);

impl Captioner for FixedCaptioner {
    fn caption(&self, _image: &ImageBuffer) -> Result<Caption> {
        Caption::new(self.0.clone(), CaptionSource::Original)
            .map_err(|_| Error::backend("mock:/caption", "empty caption"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::synth::{synth_scene, SceneSpec};

    fn backend() -> (SyntheticScene, MockSceneBackend) {
        let scene = synth_scene(7, &SceneSpec::default()).unwrap();
        let b = MockSceneBackend::from_scene(&scene);
        (scene, b)
    }

    #[test]
    fn detect_matches_label() {
        let (scene, b) = backend();
        let cfg = DetectorConfig::default();
        let dets = b.detect(&scene.image, "cat", &cfg).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].score, MOCK_SCORE);
        assert_eq!(dets[0].logits, scene.logits_truth);
        dets[0].validate(scene.image.width(), scene.image.height()).unwrap();
        assert_eq!(b.detect(&scene.image, "remove the Cat!", &cfg).unwrap().len(), 1);
        assert!(b.detect(&scene.image, "dog", &cfg).unwrap().is_empty());
        assert!(b.detect(&scene.image, "category", &cfg).unwrap().is_empty());
        let strict = DetectorConfig::new(1.0, 0.1).unwrap();
        assert!(b.detect(&scene.image, "cat", &strict).unwrap().is_empty());
    }

    #[test]
    fn caption_and_rewrite() {
        let (scene, b) = backend();
        let c = b.caption(&scene.image).unwrap();
        assert_eq!(c.text, "a cat on a plain background");
        let r = b.rewrite("remove the cat", &c).unwrap();
        assert_eq!(r.text, "a plain background");
        assert!(r.rewritten);
        assert_eq!(r.caption, c.text);
        let r = b.rewrite("remove the dog", &c).unwrap();
        assert_eq!(r.text, c.text);
        assert!(!r.rewritten);
    }

    #[test]
    fn generator_returns_background() {
        let (scene, b) = backend();
        let r = b.rewrite("cat", &b.caption(&scene.image).unwrap()).unwrap();
        assert_eq!(b.generate(&r, &scene.image).unwrap(), scene.background_reference);
        let small = ImageBuffer::filled(8, 8, [0, 0, 0]).unwrap();
        assert!(matches!(b.generate(&r, &small), Err(Error::Backend { .. })));
    }

    #[test]
    fn fixed_captioner_rejects_empty() {
        let img = ImageBuffer::filled(2, 2, [0, 0, 0]).unwrap();
        assert_eq!(FixedCaptioner("a room".into()).caption(&img).unwrap().text, "a room");
        assert!(FixedCaptioner(String::new()).caption(&img).is_err());
    }
}
