//! Turn touch-indicator detections from a screen recording into a replayable
//! input script.
//!
//! The pipeline:
//!
//! 1. [`trace`]: parse a per-frame detection trace.
//! 2. [`segment`]: drop low-confidence detections and split the rest into
//!    one touch sequence per finger contact.
//! 3. [`classify`]: label sequences Tap, LongTap or Gesture and group
//!    simultaneous ones into multi-finger actions.
//! 4. [`codegen`]: emit multi-touch (type B) kernel input events, as a text
//!    log or a compact runnable file.
//! 5. [`replay`]: push the runnable file to a device and run it.
//!
//! [`synth`] runs the pipeline in reverse to produce traces with known
//! ground truth, and [`eval`] scores predicted action sequences against it.
//!
//! ```
//! use tapscript::classify::{classify_trace, ClassifierConfig};
//! use tapscript::synth::{synthesize_trace, GroundTruthAction, GroundTruthScenario, NoiseModel};
//! use tapscript::classify::ActionKind;
//! use tapscript::trace::DeviceProfile;
//!
//! let scenario = GroundTruthScenario {
//!     profile: DeviceProfile::nexus5(),
//!     actions: vec![
//!         GroundTruthAction::press(ActionKind::Tap, 5, 10, 540.0, 960.0),
//!         GroundTruthAction::press(ActionKind::LongTap, 40, 30, 200.0, 300.0),
//!     ],
//! };
//! let synth = synthesize_trace(&scenario, &NoiseModel::clean()).unwrap();
//! let classified = classify_trace(&synth.trace, &ClassifierConfig::default());
//! assert_eq!(classified.symbols(true).to_string(), "TL");
//! ```

pub mod classify;
pub mod codegen;
pub mod eval;
pub mod replay;
pub mod segment;
pub mod synth;
pub mod trace;

pub use classify::{classify_trace, ActionKind, AtomicAction, ClassifiedScenario, MultiFingerAction, ScenarioItem};
pub use codegen::{assemble_script, InputEvent, SendEventScript};
pub use eval::{ActionTypeSequence, MetricsReport, Symbol};
pub use synth::{synthesize_trace, GroundTruthScenario, NoiseModel};
pub use trace::{parse_trace, DetectionTrace, DeviceProfile, TouchDetection};
