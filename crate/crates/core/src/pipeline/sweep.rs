use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::backends::Inpainter;
use crate::error::{Error, Result};
use crate::imaging::ImageBuffer;
use crate::inpaint::{inpaint, InpaintRequest, InpaintSettings};
use crate::iqa::QualityModels;
use crate::maskops::{refine, LogitMap, MaskParams};

pub const SWEEP_HEADER: [&str; 7] = ["b", "t", "niqe", "brisque", "pi", "mask_area", "runtime_ms"];

/// Inclusive arithmetic range written `start:stop:step`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl ParamRange {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self> {
        let r = Self { start, stop, step };
        if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
            return Err(Error::param("range bounds must be finite"));
        }
        if step == 0.0 {
            return Err(Error::param("range step must be non-zero"));
        }
        if (stop - start) * step < 0.0 {
            return Err(Error::param(format!("range {r} never reaches its stop")));
        }
        Ok(r)
    }

    /// A range holding exactly one value.
    pub fn single(v: f64) -> Self {
        Self {
            start: v,
            stop: v,
            step: 1.0,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

impl fmt::Display for ParamRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.step)
    }
}

impl FromStr for ParamRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::param(format!("range '{s}' is not start:stop:step")));
        }
        let num = |p: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::param(format!("range '{s}' has a non-numeric part '{p}'")))
        };
        Self::new(num(parts[0])?, num(parts[1])?, num(parts[2])?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub b: f64,
    pub t: f64,
    pub niqe: Option<f64>,
    pub brisque: Option<f64>,
    pub pi: Option<f64>,
    pub mask_area: usize,
    pub runtime_ms: Option<u64>,
    #[serde(skip)]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl SweepTable {
    /// Row with the lowest NIQE; the first one on ties.
    pub fn best(&self) -> Option<&SweepRow> {
        let mut best: Option<&SweepRow> = None;
        for row in &self.rows {
            if let Some(n) = row.niqe {
                if best.and_then(|b| b.niqe).is_none_or(|bn| n < bn) {
                    best = Some(row);
                }
            }
        }
        best
    }

    /// CSV with [`SWEEP_HEADER`]; failed cells leave their score fields empty.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(SWEEP_HEADER).map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.b.to_string(),
                r.t.to_string(),
                opt(r.niqe),
                opt(r.brisque),
                opt(r.pi),
                r.mask_area.to_string(),
                opt(r.runtime_ms),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn save_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

/// What to sweep and how each cell is inpainted.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPlan {
    pub b: ParamRange,
    pub t: ParamRange,
    pub inpaint: InpaintSettings,
    pub record_timings: bool,
}

/// Evaluate every `(b, t)` cell, b-major. Cell failures are recorded in the
/// row and do not stop the sweep.
pub fn sweep(
    image: &ImageBuffer,
    logits: &LogitMap,
    plan: &SweepPlan,
    external: Option<&dyn Inpainter>,
    models: &QualityModels,
) -> Result<SweepTable> {
    if logits.dimensions() != image.dimensions() {
        return Err(Error::param("logits and image differ in size"));
    }
    let bs = plan.b.values();
    let ts = plan.t.values();
    if let Some(b) = bs.iter().find(|&&b| b < 0.0) {
        return Err(Error::param(format!("buffer radius {b} is negative")));
    }
    let mut rows = Vec::with_capacity(bs.len() * ts.len());
    for &b in &bs {
        for &t in &ts {
            let start = Instant::now();
            let mut row = SweepRow {
                b,
                t,
                niqe: None,
                brisque: None,
                pi: None,
                mask_area: 0,
                runtime_ms: None,
                error: None,
            };
            let cell = (|| -> Result<_> {
                let mask = refine(logits, MaskParams::new(t, b)?)?;
                let area = mask.area();
                let mut req = InpaintRequest::new(image, &mask, plan.inpaint);
                if let Some(e) = external {
                    req = req.with_external(e);
                }
                let result = inpaint(&req);
                Ok((area, result.and_then(|img| models.assess(&img))))
            })();
            match cell {
                Ok((area, Ok(report))) => {
                    row.mask_area = area;
                    row.niqe = Some(report.niqe);
                    row.brisque = report.brisque;
                    row.pi = report.pi;
                }
                Ok((area, Err(e))) => {
                    row.mask_area = area;
                    row.error = Some(e.to_string());
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            if let Some(e) = &row.error {
                log::warn!("sweep cell b={b} t={t} failed: {e}");
            }
            if plan.record_timings {
                row.runtime_ms = Some(start.elapsed().as_millis() as u64);
            }
            rows.push(row);
        }
    }
    Ok(SweepTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ablation_ranges_have_expected_lengths() {
        let b: ParamRange = "0:200:5".parse().unwrap();
        assert_eq!(b.values().len(), 41);
        assert_eq!(b.values()[40], 200.0);
        let t: ParamRange = "-20:0:1".parse().unwrap();
        assert_eq!(t.values().len(), 21);
        assert_eq!(t.values()[10], -10.0);
    }

    #[test]
    fn malformed_ranges_rejected() {
        for s in ["0:10:0", "0:10", "a:1:1", "10:0:1", "0:1:nan"] {
            assert!(s.parse::<ParamRange>().is_err(), "{s}");
        }
        assert_eq!("10:0:-5".parse::<ParamRange>().unwrap().values(), vec![10.0, 5.0, 0.0]);
        assert_eq!("0:0.3:0.1".parse::<ParamRange>().unwrap().values().len(), 4);
    }

    #[test]
    fn csv_layout() {
        let table = SweepTable {
            rows: vec![
                SweepRow {
                    b: 0.0,
                    t: -10.0,
                    niqe: Some(3.5),
                    brisque: None,
                    pi: None,
                    mask_area: 12,
                    runtime_ms: None,
                    error: None,
                },
                SweepRow {
                    b: 5.0,
                    t: -10.0,
                    niqe: None,
                    brisque: None,
                    pi: None,
                    mask_area: 40,
                    runtime_ms: Some(7),
                    error: Some("boom".into()),
                },
            ],
        };
        let csv = table.to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "b,t,niqe,brisque,pi,mask_area,runtime_ms");
        assert_eq!(lines[1], "0,-10,3.5,,,12,");
        assert_eq!(lines[2], "5,-10,,,,40,7");
        assert_eq!(table.best().unwrap().b, 0.0);
    }
}
