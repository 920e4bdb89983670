//! Person translation: the backend contract, the analytic stub backend and
//! the step that puts the background back after prediction.

mod sidecar;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ImagePlane;
use crate::preprocess::FiveChannelInput;

pub use sidecar::{SidecarBackend, SidecarClient, SidecarConfig, SidecarPool, DEFAULT_TIMEOUT};

/// How a backend's raw output relates to the background channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Output is a delta added onto the background crop.
    #[default]
    Residual,
    /// Output is the final crop.
    Absolute,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Residual => "residual",
            Mode::Absolute => "absolute",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "residual" => Ok(Mode::Residual),
            "absolute" => Ok(Mode::Absolute),
            other => Err(Error::Schema(format!("unknown translation mode {other:?}"))),
        }
    }
}

/// Maps a five-channel input to a single-channel crop of the same size.
/// Implementations must be deterministic for identical input and state.
pub trait TranslationBackend: Send + Sync {
    fn name(&self) -> &str;

    fn mode(&self) -> Mode;

    /// Raw prediction; residual outputs may be negative.
    fn predict(&self, input: &FiveChannelInput) -> Result<ImagePlane<f32>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationResult {
    pub crop_pred: ImagePlane<f32>,
    pub mode: Mode,
    pub backend: String,
    pub wall_time: Duration,
}

impl TranslationResult {
    pub fn finalize(&self, input: &FiveChannelInput) -> Result<ImagePlane<f32>> {
        finalize(&self.crop_pred, input, self.mode)
    }
}

pub fn translate(
    backend: &dyn TranslationBackend,
    input: &FiveChannelInput,
) -> Result<TranslationResult> {
    let start = Instant::now();
    let crop_pred = backend.predict(input)?;
    let n = input.size();
    if crop_pred.dims() != (n, n) || crop_pred.channels() != 1 {
        return Err(Error::Protocol(format!(
            "backend {} returned {}x{}x{}, expected 1x{n}x{n}",
            backend.name(),
            crop_pred.channels(),
            crop_pred.height(),
            crop_pred.width()
        )));
    }
    Ok(TranslationResult {
        crop_pred,
        mode: backend.mode(),
        backend: backend.name().to_string(),
        wall_time: start.elapsed(),
    })
}

/// Residual: `clamp(pred + background, 0, 1)`. Absolute: `clamp(pred, 0, 1)`.
pub fn finalize(
    pred: &ImagePlane<f32>,
    input: &FiveChannelInput,
    mode: Mode,
) -> Result<ImagePlane<f32>> {
    let n = input.size();
    if pred.dims() != (n, n) || pred.channels() != 1 {
        return Err(Error::DimMismatch(format!(
            "prediction {:?} vs input {n}x{n}",
            pred.dims()
        )));
    }
    let data = match mode {
        Mode::Residual => pred
            .data()
            .iter()
            .zip(input.background())
            .map(|(&p, &b)| (p + b).clamp(0.0, 1.0))
            .collect(),
        Mode::Absolute => pred.data().iter().map(|&p| p.clamp(0.0, 1.0)).collect(),
    };
    ImagePlane::new(n, n, 1, data)
}

/// Rec. 601 luma.
#[inline]
pub fn luminance(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Analytic reference translation: `(1 - s) * bg + s * L(rgb)` with `s`
/// the SDF channel. In residual mode the background is subtracted again.
pub fn stub_translate(input: &FiveChannelInput, mode: Mode) -> ImagePlane<f32> {
    let (r, g, b) = (input.channel(0), input.channel(1), input.channel(2));
    let data = (0..r.len())
        .map(|i| {
            let s = input.sdf()[i];
            let bg = input.background()[i];
            let pred = (1.0 - s) * bg + s * luminance(r[i], g[i], b[i]);
            match mode {
                Mode::Residual => pred - bg,
                Mode::Absolute => pred,
            }
        })
        .collect();
    ImagePlane::new(input.size(), input.size(), 1, data).expect("square plane")
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StubBackend {
    pub mode: Mode,
}

impl StubBackend {
    pub fn new(mode: Mode) -> Self {
        StubBackend { mode }
    }
}

impl TranslationBackend for StubBackend {
    fn name(&self) -> &str {
        "stub"
    }

    fn mode(&self) -> Mode {
        self.mode
    }

    fn predict(&self, input: &FiveChannelInput) -> Result<ImagePlane<f32>> {
        Ok(stub_translate(input, self.mode))
    }
}
