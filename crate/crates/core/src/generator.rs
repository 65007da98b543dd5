//! Video generator backends.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use image::{DynamicImage, GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::overlay::encode_png;
use crate::trajectory::{serialize_manifest, TrajectorySet};
use crate::vlm::ClientError;
use crate::volume::{render_preview_video, write_volume, MotionVolume};

/// Everything a generator is conditioned on for one pass.
pub struct GenerationInput<'a> {
    pub image: &'a RgbImage,
    pub set: &'a TrajectorySet,
    pub volume: &'a MotionVolume,
    pub prompt: &'a str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedVideo {
    pub frames: Vec<RgbImage>,
    /// Opaque handle naming the artifact (file path, URL or backend tag).
    pub reference: String,
}

impl GeneratedVideo {
    pub fn luma_frames(&self) -> Vec<GrayImage> {
        self.frames
            .iter()
            .map(|f| DynamicImage::ImageRgb8(f.clone()).to_luma8())
            .collect()
    }

    pub fn png_frames(&self) -> Result<Vec<Vec<u8>>, ClientError> {
        self.frames
            .iter()
            .map(|f| encode_png(f).map_err(|e| ClientError::Payload(e.to_string())))
            .collect()
    }
}

pub trait GeneratorClient: Send + Sync {
    fn generate(&self, input: &GenerationInput<'_>) -> Result<GeneratedVideo, ClientError>;
}

/// Deterministic stand-in: white dots following each track on black frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StubGenerator {
    pub dot_radius: f64,
}

impl Default for StubGenerator {
    fn default() -> Self {
        StubGenerator { dot_radius: 3.0 }
    }
}

impl GeneratorClient for StubGenerator {
    fn generate(&self, input: &GenerationInput<'_>) -> Result<GeneratedVideo, ClientError> {
        let (h, w) = (input.set.height as usize, input.set.width as usize);
        let frames = render_preview_video(input.set, h, w, self.dot_radius)
            .map_err(|e| ClientError::Payload(e.to_string()))?
            .into_iter()
            .map(|g| DynamicImage::ImageLuma8(g).to_rgb8())
            .collect();
        Ok(GeneratedVideo {
            frames,
            reference: format!("stub:{}x{}x{}", input.set.length, h, w),
        })
    }
}

#[derive(Serialize)]
struct WireGenerate<'a> {
    prompt: &'a str,
    manifest: String,
    image_png_base64: String,
    volume_mvol_base64: String,
}

#[derive(Deserialize)]
struct WireVideo {
    frames_png_base64: Vec<String>,
    #[serde(default)]
    reference: Option<String>,
}

/// Adapter for an external model served over HTTP. The request carries the
/// prompt, the canonical manifest, the first frame as PNG and the motion
/// volume in MVOL format; the reply lists the generated frames as PNG.
pub struct HttpGenerator {
    endpoint: String,
    http: reqwest::blocking::Client,
}

impl HttpGenerator {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(HttpGenerator {
            endpoint: endpoint.into(),
            http,
        })
    }
}

impl GeneratorClient for HttpGenerator {
    fn generate(&self, input: &GenerationInput<'_>) -> Result<GeneratedVideo, ClientError> {
        let body = WireGenerate {
            prompt: input.prompt,
            manifest: String::from_utf8(serialize_manifest(input.set)).expect("manifest is utf-8"),
            image_png_base64: BASE64
                .encode(encode_png(input.image).map_err(|e| ClientError::Payload(e.to_string()))?),
            volume_mvol_base64: BASE64.encode(write_volume(input.volume)),
        };
        let resp = self
            .http
            .post(&self.endpoint)
            .json(&body)
            .send()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ClientError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let wire: WireVideo =
            serde_json::from_str(&text).map_err(|e| ClientError::Payload(e.to_string()))?;
        let frames = wire
            .frames_png_base64
            .iter()
            .map(|f| {
                let bytes = BASE64
                    .decode(f)
                    .map_err(|e| ClientError::Payload(e.to_string()))?;
                image::load_from_memory(&bytes)
                    .map(|img| img.to_rgb8())
                    .map_err(|e| ClientError::Payload(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(GeneratedVideo {
            frames,
            reference: wire.reference.unwrap_or_else(|| self.endpoint.clone()),
        })
    }
}
