//! Device profiles and per-frame touch detection traces.
//!
//! A [`DetectionTrace`] is what a touch-indicator detector produces for one
//! screen recording: every detected indicator with its frame index, bounding
//! box, detector confidence and opacity class. Everything downstream works on
//! the bounding-box center, see [`TouchDetection::center`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codegen::ScriptHooks;

/// Version written to and required from detection JSON documents.
pub const SCHEMA_VERSION: u32 = 1;

/// Lowest recording rate the pipeline accepts.
pub const MIN_FPS: u32 = 30;

/// Android's default touch slop in pixels.
pub const DEFAULT_TOUCH_SLOP: f64 = 8.0;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("bounds violation: {0}")]
    BoundsViolation(String),
}

/// How the Tap / LongTap duration cutoff is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TapCutoff {
    /// At most 20 active frames is a Tap, regardless of fps.
    #[default]
    Frames,
    /// At most 667 ms of active contact is a Tap; for high-fps traces.
    Duration,
}

impl TapCutoff {
    fn is_default(&self) -> bool {
        *self == TapCutoff::Frames
    }
}

/// Screen geometry and recording rate of the device a trace was captured on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    #[serde(rename = "width")]
    pub screen_width: u32,
    #[serde(rename = "height")]
    pub screen_height: u32,
    pub fps: u32,
    #[serde(default = "default_slop", skip_serializing_if = "is_default_slop")]
    pub touch_slop: f64,
    #[serde(default, skip_serializing_if = "TapCutoff::is_default")]
    pub tap_cutoff: TapCutoff,
    #[serde(default, skip_serializing_if = "ScriptHooks::is_empty")]
    pub hooks: ScriptHooks,
}

fn default_slop() -> f64 {
    DEFAULT_TOUCH_SLOP
}

fn is_default_slop(slop: &f64) -> bool {
    *slop == DEFAULT_TOUCH_SLOP
}

impl DeviceProfile {
    pub fn new(
        name: impl Into<String>,
        screen_width: u32,
        screen_height: u32,
        fps: u32,
    ) -> Result<Self, TraceError> {
        let profile = DeviceProfile {
            name: name.into(),
            screen_width,
            screen_height,
            fps,
            touch_slop: DEFAULT_TOUCH_SLOP,
            tap_cutoff: TapCutoff::Frames,
            hooks: ScriptHooks::default(),
        };
        profile.validate()?;
        Ok(profile)
    }

    /// 1080x1920 phone recorded at 30 fps.
    pub fn nexus5() -> Self {
        DeviceProfile::new("nexus5", 1080, 1920, 30).expect("valid preset")
    }

    /// 1440x2560 phone recorded at 30 fps.
    pub fn nexus6p() -> Self {
        DeviceProfile::new("nexus6p", 1440, 2560, 30).expect("valid preset")
    }

    /// Looks up a built-in profile by name.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "nexus5" => Some(Self::nexus5()),
            "nexus6p" => Some(Self::nexus6p()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        if self.screen_width == 0 || self.screen_height == 0 {
            return Err(TraceError::SchemaViolation(format!(
                "device screen must be non-empty, got {}x{}",
                self.screen_width, self.screen_height
            )));
        }
        if self.fps < MIN_FPS {
            return Err(TraceError::SchemaViolation(format!(
                "recording rate must be at least {MIN_FPS} fps, got {}",
                self.fps
            )));
        }
        if !(self.touch_slop > 0.0 && self.touch_slop.is_finite()) {
            return Err(TraceError::SchemaViolation(format!(
                "touch slop must be positive, got {}",
                self.touch_slop
            )));
        }
        Ok(())
    }

    /// Milliseconds elapsed after `frames` frames at this profile's rate.
    pub fn frame_time_ms(&self, frames: u32) -> f64 {
        frame_time_ms(frames, self.fps)
    }
}

/// Wall-clock offset of a frame index, in milliseconds.
///
/// `fps` must be non-zero; [`DeviceProfile::validate`] guarantees this for
/// every profile that reaches the pipeline.
pub fn frame_time_ms(frame: u32, fps: u32) -> f64 {
    f64::from(frame) * 1000.0 / f64::from(fps)
}

/// Same as [`frame_time_ms`] but in whole microseconds, rounded half-up.
pub fn frame_time_us(frames: u64, fps: u32) -> u64 {
    let fps = u64::from(fps);
    (frames * 1_000_000 + fps / 2) / fps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Opacity {
    High,
    Low,
}

/// Axis-aligned box in screen pixels, serialized as `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BBox {
    fn from([x, y, w, h]: [f64; 4]) -> Self {
        BBox { x, y, w, h }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    /// Box of size `w` x `h` centered on `(cx, cy)`.
    pub fn centered(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox { x: cx - w / 2.0, y: cy - h / 2.0, w, h }
    }

    pub fn center(&self) -> Point {
        Point { x: self.x + self.w / 2.0, y: self.y + self.h / 2.0 }
    }

    fn clamp_to(&self, width: f64, height: f64) -> BBox {
        let x0 = self.x.clamp(0.0, width);
        let y0 = self.y.clamp(0.0, height);
        let x1 = (self.x + self.w).clamp(0.0, width);
        let y1 = (self.y + self.h).clamp(0.0, height);
        BBox { x: x0, y: y0, w: x1 - x0, h: y1 - y0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// One detected touch indicator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TouchDetection {
    pub frame: u32,
    pub bbox: BBox,
    pub confidence: f64,
    pub opacity: Opacity,
}

impl TouchDetection {
    /// The canonical touch coordinate.
    pub fn center(&self) -> Point {
        self.bbox.center()
    }

    pub fn is_high(&self) -> bool {
        self.opacity == Opacity::High
    }
}

/// All touch detections of one recording, sorted by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionTrace {
    profile: DeviceProfile,
    frame_count: u32,
    detections: Vec<TouchDetection>,
}

impl DetectionTrace {
    /// Validates and normalizes a trace.
    ///
    /// Detections are stably sorted by frame. Boxes that stick out of the
    /// screen are clipped to it; a box whose center is off-screen is rejected.
    pub fn new(
        profile: DeviceProfile,
        frame_count: u32,
        mut detections: Vec<TouchDetection>,
    ) -> Result<Self, TraceError> {
        profile.validate()?;
        let width = f64::from(profile.screen_width);
        let height = f64::from(profile.screen_height);
        for (i, det) in detections.iter_mut().enumerate() {
            if !(0.0..=1.0).contains(&det.confidence) {
                return Err(TraceError::SchemaViolation(format!(
                    "detection {i}: confidence {} outside [0, 1]",
                    det.confidence
                )));
            }
            if det.frame >= frame_count {
                return Err(TraceError::SchemaViolation(format!(
                    "detection {i}: frame {} not below frame_count {frame_count}",
                    det.frame
                )));
            }
            let b = det.bbox;
            if !(b.w > 0.0 && b.h > 0.0) || ![b.x, b.y, b.w, b.h].iter().all(|v| v.is_finite()) {
                return Err(TraceError::SchemaViolation(format!(
                    "detection {i}: bbox {:?} must have finite coordinates and positive size",
                    <[f64; 4]>::from(b)
                )));
            }
            let c = b.center();
            if !(0.0..width).contains(&c.x) || !(0.0..height).contains(&c.y) {
                return Err(TraceError::BoundsViolation(format!(
                    "detection {i} on frame {}: center ({:.1}, {:.1}) outside {}x{} screen",
                    det.frame, c.x, c.y, profile.screen_width, profile.screen_height
                )));
            }
            det.bbox = b.clamp_to(width, height);
        }
        detections.sort_by_key(|d| d.frame);
        Ok(DetectionTrace { profile, frame_count, detections })
    }

    /// A trace with no detections.
    pub fn empty(profile: DeviceProfile, frame_count: u32) -> Result<Self, TraceError> {
        DetectionTrace::new(profile, frame_count, Vec::new())
    }

    pub fn profile(&self) -> &DeviceProfile {
        &self.profile
    }

    pub fn frame_count(&self) -> u32 {
        self.frame_count
    }

    pub fn detections(&self) -> &[TouchDetection] {
        &self.detections
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    /// Keeps the detections matching `keep`, preserving order.
    pub fn retain(&self, mut keep: impl FnMut(&TouchDetection) -> bool) -> DetectionTrace {
        DetectionTrace {
            profile: self.profile.clone(),
            frame_count: self.frame_count,
            detections: self.detections.iter().filter(|d| keep(d)).copied().collect(),
        }
    }

    /// Number of detections on each frame, indexed by frame.
    pub fn touches_per_frame(&self) -> FrameCounts {
        let mut counts = vec![0u32; self.frame_count as usize];
        for det in &self.detections {
            counts[det.frame as usize] += 1;
        }
        FrameCounts(counts)
    }
}

/// Per-frame simultaneous touch counts over a whole trace.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrameCounts(pub Vec<u32>);

impl FrameCounts {
    /// Count on `frame`, zero past the end of the recording.
    pub fn get(&self, frame: u32) -> u32 {
        self.0.get(frame as usize).copied().unwrap_or(0)
    }
}

#[derive(Serialize, Deserialize)]
struct TraceDocument {
    schema_version: u32,
    device: DeviceProfile,
    frame_count: u32,
    detections: Vec<TouchDetection>,
}

/// Parses a detection JSON document.
pub fn parse_trace(bytes: &[u8]) -> Result<DetectionTrace, TraceError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| TraceError::MalformedJson(format!("input is not UTF-8: {e}")))?;
    let doc: TraceDocument = serde_json::from_str(text).map_err(json_error)?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(TraceError::SchemaViolation(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            doc.schema_version
        )));
    }
    DetectionTrace::new(doc.device, doc.frame_count, doc.detections)
}

/// Writes a trace as a detection JSON document.
pub fn serialize_trace(trace: &DetectionTrace) -> Vec<u8> {
    let doc = TraceDocument {
        schema_version: SCHEMA_VERSION,
        device: trace.profile.clone(),
        frame_count: trace.frame_count,
        detections: trace.detections.clone(),
    };
    serde_json::to_vec_pretty(&doc).expect("trace documents always serialize")
}

pub(crate) fn json_error(e: serde_json::Error) -> TraceError {
    use serde_json::error::Category;
    match e.classify() {
        Category::Data => TraceError::SchemaViolation(e.to_string()),
        Category::Syntax | Category::Eof | Category::Io => TraceError::MalformedJson(e.to_string()),
    }
}
