//! JSON bodies of the backend protocol. Images and masks travel as base64
//! PNG, logits as base64 LGT1.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ImageBuffer;
use crate::maskops::{BinaryMask, LogitMap};

#[derive(Serialize, Deserialize)]
pub struct DetectRequest {
    pub image: String,
    pub prompt: String,
    pub box_threshold: f64,
    pub text_threshold: f64,
}

#[derive(Serialize, Deserialize)]
pub struct WireDetection {
    pub label: String,
    pub score: f64,
    #[serde(rename = "box")]
    pub bbox: [usize; 4],
    pub logits: String,
}

#[derive(Serialize, Deserialize)]
pub struct DetectResponse {
    pub detections: Vec<WireDetection>,
}

#[derive(Serialize, Deserialize)]
pub struct InpaintRequest {
    pub image: String,
    pub mask: String,
}

#[derive(Serialize, Deserialize)]
pub struct ImageReply {
    pub image: String,
}

#[derive(Serialize, Deserialize)]
pub struct CaptionRequest {
    pub image: String,
}

#[derive(Serialize, Deserialize)]
pub struct TextReply {
    pub text: String,
}

#[derive(Serialize, Deserialize)]
pub struct RewriteRequest {
    pub prompt: String,
    pub caption: String,
}

#[derive(Serialize, Deserialize)]
pub struct GenerateRequest {
    pub prompt: String,
    pub image: String,
}

pub fn decode_b64(text: &str) -> Result<Vec<u8>> {
    STANDARD
        .decode(text.trim())
        .map_err(|e| Error::Format(format!("invalid base64: {e}")))
}

pub fn encode_b64(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

pub fn image_to_b64(image: &ImageBuffer) -> Result<String> {
    Ok(encode_b64(&image.encode_png()?))
}

pub fn image_from_b64(text: &str) -> Result<ImageBuffer> {
    ImageBuffer::decode(&decode_b64(text)?)
}

pub fn mask_to_b64(mask: &BinaryMask) -> Result<String> {
    Ok(encode_b64(&mask.encode_png()?))
}

pub fn mask_from_b64(text: &str) -> Result<BinaryMask> {
    BinaryMask::decode_png(&decode_b64(text)?)
}

pub fn logits_to_b64(logits: &LogitMap) -> String {
    encode_b64(&logits.to_lgt1())
}

pub fn logits_from_b64(text: &str) -> Result<LogitMap> {
    LogitMap::from_lgt1(&decode_b64(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_round_trips() {
        let img = ImageBuffer::from_fn(5, 4, |x, y| [x as u8 * 40, y as u8 * 60, 7]).unwrap();
        assert_eq!(image_from_b64(&image_to_b64(&img).unwrap()).unwrap(), img);
        let mask = BinaryMask::from_fn(5, 4, |x, y| x == y).unwrap();
        assert!(mask_from_b64(&mask_to_b64(&mask).unwrap()).unwrap().same_pixels(&mask));
        let l = LogitMap::from_fn(3, 2, |x, y| x as f32 - y as f32 * 0.5).unwrap();
        assert_eq!(logits_from_b64(&logits_to_b64(&l)).unwrap(), l);
        assert!(decode_b64("***").is_err());
    }

    #[test]
    fn detection_box_field_name() {
        let d = WireDetection {
            label: "cat".into(),
            score: 0.5,
            bbox: [1, 2, 3, 4],
            logits: String::new(),
        };
        let v = serde_json::to_value(&d).unwrap();
        assert_eq!(v["box"], serde_json::json!([1, 2, 3, 4]));
    }
}
