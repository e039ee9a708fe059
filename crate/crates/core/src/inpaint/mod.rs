//! Hole filling. Every method leaves pixels outside the mask untouched and
//! returns the input unchanged for an empty mask.

mod exemplar;
mod fast_marching;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backends::Inpainter;
use crate::error::{Error, Result};
use crate::imaging::ImageBuffer;
use crate::maskops::BinaryMask;

pub use exemplar::{exemplar_inpaint, MAX_PATCH, MIN_PATCH};
pub use fast_marching::fast_marching_inpaint;

pub const DEFAULT_RADIUS: usize = 5;
pub const DEFAULT_PATCH: usize = 9;
/// Masks covering less than this fraction go to fast marching under `Auto`.
pub const AUTO_SMALL_MASK: f64 = 0.01;

/// Priority of a fill-front patch during exemplar filling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatchPriority {
    pub confidence: f64,
    pub data_term: f64,
    pub priority: f64,
}

impl PatchPriority {
    pub fn new(confidence: f64, data_term: f64) -> Self {
        Self {
            confidence,
            data_term,
            priority: confidence * data_term,
        }
    }
}

/// Which algorithm fills the hole.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    FastMarching,
    Exemplar,
    External,
    Auto,
}

impl MethodKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodKind::FastMarching => "fast_marching",
            MethodKind::Exemplar => "exemplar",
            MethodKind::External => "external",
            MethodKind::Auto => "auto",
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast_marching" => Ok(MethodKind::FastMarching),
            "exemplar" => Ok(MethodKind::Exemplar),
            "external" => Ok(MethodKind::External),
            "auto" => Ok(MethodKind::Auto),
            other => Err(Error::param(format!(
                "unknown inpaint method '{other}' (expected fast_marching, exemplar, external or auto)"
            ))),
        }
    }
}

/// Method selection together with its tuning knobs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InpaintSettings {
    pub method: MethodKind,
    pub radius: usize,
    pub patch: usize,
}

impl Default for InpaintSettings {
    fn default() -> Self {
        Self {
            method: MethodKind::Auto,
            radius: DEFAULT_RADIUS,
            patch: DEFAULT_PATCH,
        }
    }
}

impl InpaintSettings {
    pub fn with_method(method: MethodKind) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    /// The concrete method used for `mask` (resolves `Auto`).
    pub fn resolve(&self, mask: &BinaryMask) -> MethodKind {
        match self.method {
            MethodKind::Auto if mask.coverage() < AUTO_SMALL_MASK => MethodKind::FastMarching,
            MethodKind::Auto => MethodKind::Exemplar,
            m => m,
        }
    }
}

/// One inpainting job.
pub struct InpaintRequest<'a> {
    pub image: &'a ImageBuffer,
    pub mask: &'a BinaryMask,
    pub settings: InpaintSettings,
    /// Required when the method resolves to `External`.
    pub external: Option<&'a dyn Inpainter>,
}

impl<'a> InpaintRequest<'a> {
    pub fn new(image: &'a ImageBuffer, mask: &'a BinaryMask, settings: InpaintSettings) -> Self {
        Self {
            image,
            mask,
            settings,
            external: None,
        }
    }

    pub fn with_external(mut self, backend: &'a dyn Inpainter) -> Self {
        self.external = Some(backend);
        self
    }
}

pub(crate) fn check_dimensions(image: &ImageBuffer, mask: &BinaryMask) -> Result<()> {
    if image.dimensions() != mask.dimensions() {
        return Err(Error::param(format!(
            "image is {}x{} but mask is {}x{}",
            image.width(),
            image.height(),
            mask.width(),
            mask.height()
        )));
    }
    Ok(())
}

/// Delegate to an external inpainter, then keep its output only under the mask.
pub fn external_inpaint(image: &ImageBuffer, mask: &BinaryMask, backend: &dyn Inpainter) -> Result<ImageBuffer> {
    check_dimensions(image, mask)?;
    let filled = backend.inpaint(image, mask)?;
    if filled.dimensions() != image.dimensions() {
        return Err(Error::backend(
            backend.endpoint(),
            format!(
                "inpainter returned {}x{} for a {}x{} input",
                filled.width(),
                filled.height(),
                image.width(),
                image.height()
            ),
        ));
    }
    let mut out = image.clone();
    let w = image.width();
    for (i, &set) in mask.bits().iter().enumerate() {
        if set {
            out.set_pixel(i % w, i / w, filled.pixel(i % w, i / w));
        }
    }
    Ok(out)
}

pub fn inpaint(req: &InpaintRequest<'_>) -> Result<ImageBuffer> {
    check_dimensions(req.image, req.mask)?;
    match req.settings.resolve(req.mask) {
        MethodKind::FastMarching => fast_marching_inpaint(req.image, req.mask, req.settings.radius),
        MethodKind::Exemplar => exemplar_inpaint(req.image, req.mask, req.settings.patch),
        MethodKind::External => {
            let backend = req
                .external
                .ok_or_else(|| Error::param("external inpainting requested without a backend"))?;
            external_inpaint(req.image, req.mask, backend)
        }
        MethodKind::Auto => unreachable!("resolve never yields Auto"),
    }
}
