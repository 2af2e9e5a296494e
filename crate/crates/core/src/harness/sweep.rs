//! How much lossy JPEG storage moves sampled colors.
//!
//! Exact JPEG bytes depend on the codec build, so only the pinned settings
//! in the header and the reported delta magnitudes are meant to be compared
//! across machines.

use jpeg_encoder::{ChromaSubsamplingMethod, ColorType, Encoder, SamplingFactor};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::raster::{Raster, Rgb};
use crate::tools::ops::window_mean;
use crate::tools::Point;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecPins {
    pub encoder: String,
    pub decoder: String,
    pub chroma_subsampling: String,
    pub chroma_downsampling: String,
    pub quality_scale: String,
    pub sample_window: u32,
}

impl Default for CodecPins {
    fn default() -> Self {
        CodecPins {
            encoder: "jpeg-encoder 0.7 (baseline, standard IJG tables)".into(),
            decoder: "image 0.25 / zune-jpeg".into(),
            chroma_subsampling: "4:2:0".into(),
            chroma_downsampling: "2x2 box average".into(),
            quality_scale: "IJG 1-100".into(),
            sample_window: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeReading {
    pub point: Point,
    pub hex: Rgb,
    /// Signed per-channel difference from the lossless value.
    pub delta: [i16; 3],
    /// Any channel moved by at least one level.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityLevel {
    pub quality: u8,
    pub jpeg_bytes: usize,
    pub probes: Vec<ProbeReading>,
    pub max_abs_delta: u16,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepReport {
    pub codec: CodecPins,
    pub width: u32,
    pub height: u32,
    pub lossless: Vec<ProbeReading>,
    pub levels: Vec<QualityLevel>,
}

pub fn encode_jpeg(image: &Raster, quality: u8) -> Result<Vec<u8>, HarnessError> {
    let fail = |e: &dyn std::fmt::Display| HarnessError::Runtime(format!("JPEG encode at quality {quality}: {e}"));
    let (w, h) = (
        u16::try_from(image.width()).map_err(|e| fail(&e))?,
        u16::try_from(image.height()).map_err(|e| fail(&e))?,
    );
    let mut out = Vec::new();
    let mut encoder = Encoder::new(&mut out, quality);
    encoder.set_sampling_factor(SamplingFactor::R_4_2_0);
    encoder.set_chroma_subsampling_method(ChromaSubsamplingMethod::Average);
    encoder
        .encode(&image.as_bytes(), w, h, ColorType::Rgb)
        .map_err(|e| fail(&e))?;
    Ok(out)
}

fn read(image: &Raster, point: Point, reference: Option<Rgb>) -> ProbeReading {
    let hex = window_mean(image, point, 1);
    let base = reference.unwrap_or(hex);
    let delta = [
        i16::from(hex.r) - i16::from(base.r),
        i16::from(hex.g) - i16::from(base.g),
        i16::from(hex.b) - i16::from(base.b),
    ];
    ProbeReading {
        point,
        hex,
        delta,
        flagged: delta.iter().any(|d| d.abs() >= 1),
    }
}

/// Encodes at each quality with 4:2:0 chroma subsampling, decodes, and
/// samples every probe against the lossless original.
pub fn compression_sweep(image: &Raster, probes: &[Point], qualities: &[u8]) -> Result<SweepReport, HarnessError> {
    if let Some(p) = probes.iter().find(|p| !image.contains(p.x, p.y)) {
        return Err(HarnessError::Validation(format!(
            "probe ({},{}) outside {}x{} image",
            p.x,
            p.y,
            image.width(),
            image.height()
        )));
    }
    if let Some(q) = qualities.iter().find(|q| !(1..=100).contains(*q)) {
        return Err(HarnessError::Validation(format!("quality {q} outside 1..=100")));
    }
    let lossless: Vec<ProbeReading> = probes.iter().map(|&p| read(image, p, None)).collect();
    let mut levels = Vec::with_capacity(qualities.len());
    for &quality in qualities {
        let jpeg = encode_jpeg(image, quality)?;
        let decoded = Raster::decode(&jpeg)
            .map_err(|e| HarnessError::Runtime(format!("JPEG decode at quality {quality}: {e}")))?;
        let readings: Vec<ProbeReading> = probes
            .iter()
            .zip(&lossless)
            .map(|(&p, l)| read(&decoded, p, Some(l.hex)))
            .collect();
        let max_abs_delta = readings
            .iter()
            .flat_map(|r| r.delta)
            .map(i16::unsigned_abs)
            .max()
            .unwrap_or(0);
        levels.push(QualityLevel {
            quality,
            jpeg_bytes: jpeg.len(),
            probes: readings,
            max_abs_delta,
        });
    }
    Ok(SweepReport {
        codec: CodecPins::default(),
        width: image.width(),
        height: image.height(),
        lossless,
        levels,
    })
}

impl SweepReport {
    pub fn render_table(&self) -> String {
        let c = &self.codec;
        let mut out = format!(
            "encoder: {}; decoder: {}; chroma {} ({}); quality scale {}\n",
            c.encoder, c.decoder, c.chroma_subsampling, c.chroma_downsampling, c.quality_scale
        );
        out.push_str(&format!(
            "{:>7}  {:>11}  {:>8}  {:>8}  {:>16}  {}\n",
            "quality", "probe", "lossless", "jpeg", "delta (r,g,b)", "flag"
        ));
        for level in &self.levels {
            for (r, l) in level.probes.iter().zip(&self.lossless) {
                out.push_str(&format!(
                    "{:>7}  {:>11}  {:>8}  {:>8}  {:>16}  {}\n",
                    level.quality,
                    format!("({},{})", r.point.x, r.point.y),
                    l.hex.to_hex(),
                    r.hex.to_hex(),
                    format!("({:+},{:+},{:+})", r.delta[0], r.delta[1], r.delta[2]),
                    if r.flagged { "*" } else { "" }
                ));
            }
        }
        out
    }
}
