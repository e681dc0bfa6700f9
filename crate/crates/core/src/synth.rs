//! Synthetic detection traces from ground-truth scenarios.
//!
//! This runs the pipeline backwards: a scenario lists what each finger did,
//! frame by frame, and [`synthesize_trace`] produces the detections a touch
//! indicator detector would report for a recording of it, with optional
//! position jitter, dropped detections and spurious short-lived detections.
//!
//! Every path point becomes one high-opacity detection. When a finger lifts,
//! the indicator fades: `fade_frames` low-opacity detections follow at the
//! lift position.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{is_tap_duration, ActionKind, MAX_FINGERS};
use crate::eval::{ActionTypeSequence, Symbol};
use crate::trace::{json_error, BBox, DetectionTrace, DeviceProfile, Opacity, Point, TouchDetection, TraceError};

/// Side of the square box drawn around each synthetic touch.
pub const INDICATOR_SIZE: f64 = 48.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// One finger position on one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(u32, f64, f64)", into = "(u32, f64, f64)")]
pub struct PathPoint {
    pub frame: u32,
    pub x: f64,
    pub y: f64,
}

impl PathPoint {
    pub fn new(frame: u32, x: f64, y: f64) -> Self {
        PathPoint { frame, x, y }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

impl From<(u32, f64, f64)> for PathPoint {
    fn from((frame, x, y): (u32, f64, f64)) -> Self {
        PathPoint { frame, x, y }
    }
}

impl From<PathPoint> for (u32, f64, f64) {
    fn from(p: PathPoint) -> Self {
        (p.frame, p.x, p.y)
    }
}

/// What one or more fingers did together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthAction {
    pub kind: ActionKind,
    /// One path per finger.
    pub paths: Vec<Vec<PathPoint>>,
}

impl GroundTruthAction {
    /// A stationary single-finger press on `frames` consecutive frames.
    pub fn press(kind: ActionKind, start_frame: u32, frames: u32, x: f64, y: f64) -> Self {
        let path = (start_frame..start_frame + frames).map(|f| PathPoint::new(f, x, y)).collect();
        GroundTruthAction { kind, paths: vec![path] }
    }

    pub fn fingers(&self) -> usize {
        self.paths.len()
    }

    pub fn start_frame(&self) -> u32 {
        self.paths.iter().filter_map(|p| p.first()).map(|p| p.frame).min().unwrap_or(0)
    }

    pub fn end_frame(&self) -> u32 {
        self.paths.iter().filter_map(|p| p.last()).map(|p| p.frame).max().unwrap_or(0)
    }

    /// Symbol a perfect classifier would report for this action.
    pub fn symbol(&self) -> Symbol {
        match self.paths.len() {
            1 => self.kind.symbol(),
            n => Symbol::MultiFinger(n as u8),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthScenario {
    #[serde(rename = "device")]
    pub profile: DeviceProfile,
    pub actions: Vec<GroundTruthAction>,
}

impl GroundTruthScenario {
    /// Action symbols in order, multi-finger actions as `G<n>`.
    pub fn truth(&self) -> ActionTypeSequence {
        ActionTypeSequence(self.actions.iter().map(GroundTruthAction::symbol).collect())
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |i: usize, msg: String| Err(SynthError::InvalidScenario(format!("action {i}: {msg}")));
        self.profile.validate()?;
        let (w, h) = (f64::from(self.profile.screen_width), f64::from(self.profile.screen_height));
        let mut prev_start = 0;
        for (i, action) in self.actions.iter().enumerate() {
            if action.paths.is_empty() || action.paths.len() > usize::from(MAX_FINGERS) {
                return bad(i, format!("needs 1 to {MAX_FINGERS} finger paths, got {}", action.paths.len()));
            }
            for (f, path) in action.paths.iter().enumerate() {
                if path.is_empty() {
                    return bad(i, format!("finger {f} has an empty path"));
                }
                if let Some(pair) = path.windows(2).find(|p| p[1].frame <= p[0].frame) {
                    return bad(i, format!("finger {f} path frames must increase, found {} then {}", pair[0].frame, pair[1].frame));
                }
                if let Some(p) = path.iter().find(|p| !(p.x > 0.0 && p.x < w && p.y > 0.0 && p.y < h)) {
                    return bad(i, format!("finger {f} point ({}, {}) on frame {} is off-screen", p.x, p.y, p.frame));
                }
                if action.kind != ActionKind::Gesture {
                    let origin = path[0].position();
                    if let Some(p) = path.iter().find(|p| p.position().distance(&origin) > self.profile.touch_slop) {
                        return bad(i, format!("{:?} finger {f} wanders beyond the touch slop on frame {}", action.kind, p.frame));
                    }
                }
            }
            if action.paths.len() == 1 && action.kind != ActionKind::Gesture {
                let frames = action.end_frame() - action.start_frame() + 1;
                let tap = is_tap_duration(frames, &self.profile);
                if tap != (action.kind == ActionKind::Tap) {
                    return bad(i, format!("{frames} frames do not make a {:?}", action.kind));
                }
            }
            if action.start_frame() < prev_start {
                return bad(i, "actions must be ordered by start frame".into());
            }
            prev_start = action.start_frame();
        }
        Ok(())
    }
}

/// Detector imperfections to simulate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Standard deviation of the per-detection Gaussian offset, per axis.
    pub position_jitter_sigma: f64,
    /// Chance, per frame, that a spurious detection appears.
    pub false_positive_rate: f64,
    /// Chance that a path point yields no detection.
    pub dropout_rate: f64,
    /// Low-opacity detections left behind after each lift.
    pub fade_frames: u32,
    pub rng_seed: u64,
}

impl NoiseModel {
    pub fn clean() -> Self {
        NoiseModel { position_jitter_sigma: 0.0, false_positive_rate: 0.0, dropout_rate: 0.0, fade_frames: 3, rng_seed: 0 }
    }

    pub fn physical_device() -> Self {
        NoiseModel { position_jitter_sigma: 2.0, false_positive_rate: 0.005, dropout_rate: 0.01, ..Self::clean() }
    }

    pub fn emulator() -> Self {
        NoiseModel { position_jitter_sigma: 4.0, false_positive_rate: 0.01, dropout_rate: 0.03, ..Self::clean() }
    }

    /// `clean`, `physical-device` or `emulator`.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "clean" => Some(Self::clean()),
            "physical-device" => Some(Self::physical_device()),
            "emulator" => Some(Self::emulator()),
            _ => None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
        if !(self.position_jitter_sigma >= 0.0 && self.position_jitter_sigma.is_finite()) {
            return Err(SynthError::InvalidNoise(format!("jitter sigma {} must be >= 0", self.position_jitter_sigma)));
        }
        if !rate_ok(self.false_positive_rate) || !rate_ok(self.dropout_rate) {
            return Err(SynthError::InvalidNoise("rates must lie in [0, 1]".into()));
        }
        if self.fade_frames == 0 {
            return Err(SynthError::InvalidNoise("fade_frames must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::clean()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub trace: DetectionTrace,
    /// Symbols of the scenario's actions, multi-finger ones as `G<n>`.
    pub truth: ActionTypeSequence,
    /// Spurious detections injected (each lives one or two frames).
    pub false_positives: usize,
}

/// Box of the given center, shrunk when needed so it stays on screen with
/// the same center.
fn indicator_box(c: Point, width: f64, height: f64) -> BBox {
    let half = INDICATOR_SIZE / 2.0;
    let hx = half.min(c.x).min(width - c.x);
    let hy = half.min(c.y).min(height - c.y);
    BBox { x: c.x - hx, y: c.y - hy, w: 2.0 * hx, h: 2.0 * hy }
}

/// Renders a scenario as a detection trace.
pub fn synthesize_trace(scenario: &GroundTruthScenario, noise: &NoiseModel) -> Result<SynthOutput, SynthError> {
    scenario.validate()?;
    noise.validate()?;
    let profile = &scenario.profile;
    let (w, h) = (f64::from(profile.screen_width), f64::from(profile.screen_height));
    let mut rng = ChaCha8Rng::seed_from_u64(noise.rng_seed);
    let jitter = Normal::new(0.0, noise.position_jitter_sigma).expect("sigma validated");

    let mut detections = Vec::new();
    let mut place = |rng: &mut ChaCha8Rng, frame: u32, p: Point, opacity: Opacity| {
        let mut c = p;
        if noise.position_jitter_sigma > 0.0 {
            c.x = (c.x + jitter.sample(rng)).clamp(0.5, w - 0.5);
            c.y = (c.y + jitter.sample(rng)).clamp(0.5, h - 0.5);
        }
        let confidence = rng.random_range(0.8..=1.0);
        detections.push(TouchDetection { frame, bbox: indicator_box(c, w, h), confidence, opacity });
    };

    let mut frame_count = 0;
    for action in &scenario.actions {
        for path in &action.paths {
            for p in path {
                if noise.dropout_rate > 0.0 && rng.random_bool(noise.dropout_rate) {
                    continue;
                }
                place(&mut rng, p.frame, p.position(), Opacity::High);
            }
            let lift = path[path.len() - 1];
            for k in 1..=noise.fade_frames {
                place(&mut rng, lift.frame + k, lift.position(), Opacity::Low);
            }
            frame_count = frame_count.max(lift.frame + noise.fade_frames + 1);
        }
    }

    let mut false_positives = 0;
    if noise.false_positive_rate > 0.0 {
        for frame in 0..frame_count {
            if !rng.random_bool(noise.false_positive_rate) {
                continue;
            }
            false_positives += 1;
            let lifetime = rng.random_range(1..=2u32);
            let c = Point::new(rng.random_range(0.5..w - 0.5), rng.random_range(0.5..h - 0.5));
            let confidence = rng.random_range(0.5..=1.0);
            for f in (frame..frame + lifetime).filter(|&f| f < frame_count) {
                detections.push(TouchDetection { frame: f, bbox: indicator_box(c, w, h), confidence, opacity: Opacity::High });
            }
        }
    }

    let trace = DetectionTrace::new(profile.clone(), frame_count, detections)?;
    Ok(SynthOutput { trace, truth: scenario.truth(), false_positives })
}

/// Parses a scenario fixture.
pub fn parse_scenario_fixture(bytes: &[u8]) -> Result<GroundTruthScenario, SynthError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| TraceError::MalformedJson(format!("input is not UTF-8: {e}")))?;
    let scenario: GroundTruthScenario = serde_json::from_str(text).map_err(json_error)?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn serialize_scenario_fixture(scenario: &GroundTruthScenario) -> Vec<u8> {
    serde_json::to_vec_pretty(scenario).expect("scenarios always serialize")
}

/// Settings for [`random_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioShape {
    pub min_actions: usize,
    pub max_actions: usize,
    /// Distance kept from the screen edges.
    pub margin: f64,
}

impl Default for ScenarioShape {
    fn default() -> Self {
        ScenarioShape { min_actions: 5, max_actions: 25, margin: 50.0 }
    }
}

/// A random mix of Taps, LongTaps, Gestures and two-finger gestures, with
/// idle frames between consecutive actions.
///
/// The gap between one action's last path frame and the next action's first
/// frame leaves room for a three-frame fade and at least two empty frames.
pub fn random_scenario(rng: &mut impl Rng, profile: &DeviceProfile, shape: &ScenarioShape) -> GroundTruthScenario {
    let n = rng.random_range(shape.min_actions..=shape.max_actions);
    let (w, h) = (f64::from(profile.screen_width), f64::from(profile.screen_height));
    let m = shape.margin;
    let point = |rng: &mut dyn rand::RngCore| (rng.random_range(m..w - m).round(), rng.random_range(m..h - m).round());

    let mut actions = Vec::with_capacity(n);
    let mut next = rng.random_range(0..=10u32);
    for _ in 0..n {
        let action = match rng.random_range(0..4) {
            0 => {
                let (x, y) = point(rng);
                GroundTruthAction::press(ActionKind::Tap, next, rng.random_range(6..=20), x, y)
            }
            1 => {
                let (x, y) = point(rng);
                GroundTruthAction::press(ActionKind::LongTap, next, rng.random_range(21..=60), x, y)
            }
            2 => {
                let frames = rng.random_range(6..=30u32);
                let from = point(rng);
                let to = loop {
                    let to = point(rng);
                    if Point::new(from.0, from.1).distance(&Point::new(to.0, to.1)) >= 50.0 {
                        break to;
                    }
                };
                GroundTruthAction { kind: ActionKind::Gesture, paths: vec![line(next, frames, from, to)] }
            }
            _ => two_finger(rng, next, w, h, m),
        };
        let last = action.paths.iter().map(|p| p[p.len() - 1].frame).max().expect("non-empty paths");
        next = last + 1 + 3 + rng.random_range(2..=30);
        actions.push(action);
    }
    GroundTruthScenario { profile: profile.clone(), actions }
}

fn line(start: u32, frames: u32, from: (f64, f64), to: (f64, f64)) -> Vec<PathPoint> {
    let steps = f64::from(frames.max(2) - 1);
    (0..frames)
        .map(|i| {
            let t = f64::from(i) / steps;
            PathPoint::new(start + i, (from.0 + (to.0 - from.0) * t).round(), (from.1 + (to.1 - from.1) * t).round())
        })
        .collect()
}

/// Two fingers moving apart or together along one axis, never closer than
/// 200 px.
fn two_finger(rng: &mut impl Rng, start: u32, w: f64, h: f64, m: f64) -> GroundTruthAction {
    let len_a = rng.random_range(10..=40u32);
    let len_b = (len_a as i32 + rng.random_range(-2..=2)).clamp(10, 40) as u32;
    let offset = rng.random_range(0..=2u32);
    let (s0, s1): (f64, f64) = (rng.random_range(220.0..400.0), rng.random_range(220.0..400.0));
    let half = s0.max(s1) / 2.0;
    let vertical = rng.random_bool(0.5);
    let (cx, cy) = if vertical {
        (rng.random_range(m..w - m).round(), rng.random_range(m + half..h - m - half).round())
    } else {
        (rng.random_range(m + half..w - m - half).round(), rng.random_range(m..h - m).round())
    };
    let ends = |s: f64, sign: f64| if vertical { (cx, cy + sign * s / 2.0) } else { (cx + sign * s / 2.0, cy) };
    let a = line(start, len_a, ends(s0, -1.0), ends(s1, -1.0));
    let b = line(start + offset, len_b, ends(s0, 1.0), ends(s1, 1.0));
    GroundTruthAction { kind: ActionKind::Gesture, paths: vec![a, b] }
}
