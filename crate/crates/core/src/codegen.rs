//! Compiling classified actions into kernel input events.
//!
//! Every action, single- or multi-finger, becomes one or more *contacts*: a
//! finger press with a list of timestamped positions and a lift. Contacts are
//! rendered with the Linux multi-touch protocol (type B): each contact owns a
//! slot for its lifetime and a fresh tracking id, and all events of one video
//! frame form one window closed by `SYN_REPORT`.
//!
//! A frame at offset `k` from the script origin is stamped `k * 1000 / fps`
//! milliseconds. A finger is lifted on the first frame after its last
//! high-opacity touch.
//!
//! Two file formats carry a script:
//!
//! * the log format, one event per line:
//!   `[<seconds>.<micros>] <device>: <type:hex4> <code:hex4> <value:hex8>`;
//! * the runnable format: the 8-byte magic `V2SR 01 00 00 00` followed by
//!   12-byte little-endian records `(delta_us: u32, type: u16, code: u16,
//!   value: i32)`, where `delta_us` is relative to the previous record.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{ActionKind, AtomicAction, ClassifiedScenario, MultiFingerAction, ScenarioItem};
use crate::trace::{frame_time_us, DeviceProfile};

/// Event types and codes from `linux/input-event-codes.h`.
pub mod codes {
    pub const EV_SYN: u16 = 0x0000;
    pub const EV_KEY: u16 = 0x0001;
    pub const EV_ABS: u16 = 0x0003;

    pub const SYN_REPORT: u16 = 0x0000;
    pub const BTN_TOUCH: u16 = 0x014a;

    pub const ABS_MT_SLOT: u16 = 0x002f;
    pub const ABS_MT_POSITION_X: u16 = 0x0035;
    pub const ABS_MT_POSITION_Y: u16 = 0x0036;
    pub const ABS_MT_TRACKING_ID: u16 = 0x0039;
}

use codes::*;

pub const MAX_SLOTS: usize = 10;

pub const DEFAULT_DEVICE_NODE: &str = "/dev/input/event1";

pub const RUNNABLE_MAGIC: [u8; 8] = *b"V2SR\x01\x00\x00\x00";

const RECORD_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum CodegenError {
    #[error("more than {MAX_SLOTS} simultaneous contacts on frame {frame}")]
    SlotExhaustion { frame: u32 },
    #[error("single-finger actions overlap: one lifts on frame {lift_frame}, the next starts on frame {start_frame}")]
    OverlapConflict { lift_frame: u32, start_frame: u32 },
    #[error("gap of {0} us between events does not fit the runnable format")]
    DeltaOverflow(u64),
    #[error("log line {line}: {message}")]
    BadLogLine { line: usize, message: String },
    #[error("runnable script: {0}")]
    BadRunnable(String),
    #[error("invalid script: {0}")]
    InvalidScript(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A kernel input triple without a timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEvent {
    #[serde(rename = "type")]
    pub event_type: u16,
    pub code: u16,
    pub value: i32,
}

/// Extra events some devices need around a script, for instance older
/// platform versions that expect a particular key or sync sequence.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScriptHooks {
    #[serde(default)]
    pub prologue: Vec<RawEvent>,
    #[serde(default)]
    pub epilogue: Vec<RawEvent>,
}

impl ScriptHooks {
    pub fn is_empty(&self) -> bool {
        self.prologue.is_empty() && self.epilogue.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputEvent {
    /// Microseconds since the start of the script.
    pub timestamp_us: u64,
    pub event_type: u16,
    pub code: u16,
    pub value: i32,
}

impl InputEvent {
    pub fn new(timestamp_us: u64, event_type: u16, code: u16, value: i32) -> Self {
        InputEvent { timestamp_us, event_type, code, value }
    }

    pub fn timestamp_ms(&self) -> f64 {
        self.timestamp_us as f64 / 1000.0
    }

    pub fn is_syn(&self) -> bool {
        self.event_type == EV_SYN && self.code == SYN_REPORT
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SendEventScript {
    pub device_node: String,
    pub events: Vec<InputEvent>,
    pub profile: DeviceProfile,
}

/// One finger press: positions by frame, then a lift.
#[derive(Debug, Clone, PartialEq)]
struct Contact {
    samples: Vec<(u32, i32, i32)>,
    lift_frame: u32,
}

fn device_pixel(v: f64, size: u32) -> i32 {
    ((v + 0.5).floor() as i64).clamp(0, i64::from(size) - 1) as i32
}

fn sample(t: &crate::trace::TouchDetection, profile: &DeviceProfile) -> (u32, i32, i32) {
    let c = t.center();
    (t.frame, device_pixel(c.x, profile.screen_width), device_pixel(c.y, profile.screen_height))
}

fn sfa_contact(action: &AtomicAction, profile: &DeviceProfile) -> Contact {
    let active = action.sequence.active_touches();
    let samples = match action.kind {
        ActionKind::Tap | ActionKind::LongTap => vec![sample(&active[0], profile)],
        ActionKind::Gesture => active.iter().map(|t| sample(t, profile)).collect(),
    };
    Contact { samples, lift_frame: action.lift_frame() }
}

fn finger_contact(action: &AtomicAction, profile: &DeviceProfile) -> Contact {
    let samples = action.sequence.active_touches().iter().map(|t| sample(t, profile)).collect();
    Contact { samples, lift_frame: action.lift_frame() }
}

#[derive(Default)]
struct Window {
    lifts: Vec<usize>,
    samples: Vec<(usize, i32, i32)>,
}

/// Renders contacts; `origin` is the frame stamped `t0_us`.
fn render(contacts: &[Contact], origin: u32, t0_us: u64, fps: u32) -> Result<Vec<InputEvent>, CodegenError> {
    let mut windows: BTreeMap<u32, Window> = BTreeMap::new();
    for (i, c) in contacts.iter().enumerate() {
        for &(frame, x, y) in &c.samples {
            windows.entry(frame).or_default().samples.push((i, x, y));
        }
        windows.entry(c.lift_frame).or_default().lifts.push(i);
    }

    let mut events = Vec::new();
    let mut slot_of: Vec<Option<usize>> = vec![None; contacts.len()];
    let mut slot_used = [false; MAX_SLOTS];
    let mut current_slot: Option<usize> = None;
    let mut next_tracking_id: i32 = 1;
    let mut active = 0usize;

    for (frame, window) in windows {
        let t = t0_us + frame_time_us(u64::from(frame - origin), fps);
        let mut push = |code_type: u16, code: u16, value: i32| events.push(InputEvent::new(t, code_type, code, value));
        let before = active;

        let mut released = Vec::new();
        let mut lifts: Vec<usize> = window.lifts.iter().map(|&c| slot_of[c].expect("lifted contact holds a slot")).collect();
        lifts.sort_unstable();
        for slot in lifts {
            if current_slot != Some(slot) {
                push(EV_ABS, ABS_MT_SLOT, slot as i32);
                current_slot = Some(slot);
            }
            push(EV_ABS, ABS_MT_TRACKING_ID, -1);
            slot_used[slot] = false;
            released.push(slot);
            active -= 1;
        }

        let mut moves = Vec::with_capacity(window.samples.len());
        for (contact, x, y) in window.samples {
            let opening = slot_of[contact].is_none();
            if opening {
                let free = (0..MAX_SLOTS)
                    .find(|s| !slot_used[*s] && !released.contains(s))
                    .or_else(|| (0..MAX_SLOTS).find(|s| !slot_used[*s]))
                    .ok_or(CodegenError::SlotExhaustion { frame })?;
                slot_used[free] = true;
                slot_of[contact] = Some(free);
                active += 1;
            }
            moves.push((slot_of[contact].unwrap(), opening, x, y));
        }
        moves.sort_unstable_by_key(|m| m.0);
        for (slot, opening, x, y) in moves {
            if current_slot != Some(slot) {
                push(EV_ABS, ABS_MT_SLOT, slot as i32);
                current_slot = Some(slot);
            }
            if opening {
                push(EV_ABS, ABS_MT_TRACKING_ID, next_tracking_id);
                next_tracking_id += 1;
            }
            push(EV_ABS, ABS_MT_POSITION_X, x);
            push(EV_ABS, ABS_MT_POSITION_Y, y);
        }

        if before == 0 && active > 0 {
            push(EV_KEY, BTN_TOUCH, 1);
        } else if before > 0 && active == 0 {
            push(EV_KEY, BTN_TOUCH, 0);
        }
        push(EV_SYN, SYN_REPORT, 0);
    }
    Ok(events)
}

/// Events for one single-finger action whose first frame is stamped `t0_us`.
///
/// Taps and LongTaps report one position, the center of the first touch, and
/// hold it until the lift; Gestures report every touch up to the lift.
pub fn emit_sfa_events(action: &AtomicAction, profile: &DeviceProfile, t0_us: u64) -> Vec<InputEvent> {
    render(&[sfa_contact(action, profile)], action.start_frame(), t0_us, profile.fps)
        .expect("a single contact always has a free slot")
}

/// Events for one multi-finger action whose first frame is stamped `t0_us`.
///
/// Every finger reports its position on every frame it is pressed; fingers
/// lift independently of each other.
pub fn emit_mfa_events(
    mfa: &MultiFingerAction,
    profile: &DeviceProfile,
    t0_us: u64,
) -> Result<Vec<InputEvent>, CodegenError> {
    let contacts: Vec<Contact> = mfa.actions.iter().map(|a| finger_contact(a, profile)).collect();
    render(&contacts, mfa.start_frame(), t0_us, profile.fps)
}

/// Compiles a whole scenario, in chronological order, starting at time zero.
pub fn assemble_script(
    scenario: &ClassifiedScenario,
    profile: &DeviceProfile,
    device_node: &str,
) -> Result<SendEventScript, CodegenError> {
    let mut contacts = Vec::new();
    let mut last_sfa_lift: Option<u32> = None;
    for item in &scenario.items {
        match item {
            ScenarioItem::Sfa(a) => {
                if let Some(lift_frame) = last_sfa_lift.filter(|&l| l > a.start_frame()) {
                    return Err(CodegenError::OverlapConflict { lift_frame, start_frame: a.start_frame() });
                }
                last_sfa_lift = Some(last_sfa_lift.map_or(a.lift_frame(), |l| l.max(a.lift_frame())));
                contacts.push(sfa_contact(a, profile));
            }
            ScenarioItem::Mfa(m) => contacts.extend(m.actions.iter().map(|a| finger_contact(a, profile))),
        }
    }
    let origin = scenario.items.iter().map(ScenarioItem::start_frame).min().unwrap_or(0);
    let mut events = render(&contacts, origin, 0, profile.fps)?;

    if !events.is_empty() {
        let end = events[events.len() - 1].timestamp_us;
        let prologue = profile.hooks.prologue.iter().map(|e| InputEvent::new(0, e.event_type, e.code, e.value));
        events.splice(0..0, prologue);
        events.extend(profile.hooks.epilogue.iter().map(|e| InputEvent::new(end, e.event_type, e.code, e.value)));
    }
    Ok(SendEventScript { device_node: device_node.to_string(), events, profile: profile.clone() })
}

/// What [`validate_events`] observed in a well-formed event stream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScriptSummary {
    pub contacts: usize,
    pub windows: usize,
    pub max_simultaneous: usize,
}

/// Checks the protocol invariants of an event stream: non-decreasing
/// timestamps, strictly increasing sync windows, every tracking id opened
/// once and closed once on a valid slot, `BTN_TOUCH` toggling with the
/// first press and last lift, and (if `screen` is given) positions inside
/// the screen.
pub fn validate_events(events: &[InputEvent], screen: Option<(u32, u32)>) -> Result<ScriptSummary, CodegenError> {
    let bad = |i: usize, msg: String| CodegenError::InvalidScript(format!("event {i}: {msg}"));
    let mut summary = ScriptSummary::default();
    let mut slots: [Option<i32>; MAX_SLOTS] = [None; MAX_SLOTS];
    let mut seen_ids = std::collections::HashSet::new();
    let mut slot: Option<usize> = None;
    let mut touching = false;
    let mut last_t = 0u64;
    let mut last_syn: Option<u64> = None;

    for (i, e) in events.iter().enumerate() {
        if e.timestamp_us < last_t {
            return Err(bad(i, format!("timestamp {} goes back from {last_t}", e.timestamp_us)));
        }
        last_t = e.timestamp_us;
        match (e.event_type, e.code) {
            (EV_ABS, ABS_MT_SLOT) => {
                if !(0..MAX_SLOTS as i32).contains(&e.value) {
                    return Err(bad(i, format!("slot {} out of range", e.value)));
                }
                slot = Some(e.value as usize);
            }
            (EV_ABS, ABS_MT_TRACKING_ID) => {
                let s = slot.ok_or_else(|| bad(i, "tracking id before any slot".into()))?;
                if e.value == -1 {
                    if slots[s].take().is_none() {
                        return Err(bad(i, format!("slot {s} closed while empty")));
                    }
                } else {
                    if slots[s].is_some() {
                        return Err(bad(i, format!("slot {s} opened while in use")));
                    }
                    if e.value < 0 || !seen_ids.insert(e.value) {
                        return Err(bad(i, format!("tracking id {} reused or invalid", e.value)));
                    }
                    slots[s] = Some(e.value);
                    summary.contacts += 1;
                    let active = slots.iter().flatten().count();
                    summary.max_simultaneous = summary.max_simultaneous.max(active);
                }
            }
            (EV_ABS, code @ (ABS_MT_POSITION_X | ABS_MT_POSITION_Y)) => {
                let s = slot.ok_or_else(|| bad(i, "position before any slot".into()))?;
                if slots[s].is_none() {
                    return Err(bad(i, format!("position on empty slot {s}")));
                }
                if let Some((w, h)) = screen {
                    let limit = if code == ABS_MT_POSITION_X { w } else { h };
                    if !(0..limit as i32).contains(&e.value) {
                        return Err(bad(i, format!("coordinate {} outside [0, {limit})", e.value)));
                    }
                }
            }
            (EV_KEY, BTN_TOUCH) => touching = e.value != 0,
            (EV_SYN, SYN_REPORT) => {
                if last_syn.is_some_and(|t| t >= e.timestamp_us) {
                    return Err(bad(i, format!("sync window at {} us does not advance", e.timestamp_us)));
                }
                let any = slots.iter().any(Option::is_some);
                if any != touching {
                    return Err(bad(i, "BTN_TOUCH does not match the active contacts".into()));
                }
                last_syn = Some(e.timestamp_us);
                summary.windows += 1;
            }
            _ => {}
        }
    }
    if let Some(s) = slots.iter().position(Option::is_some) {
        return Err(CodegenError::InvalidScript(format!("slot {s} never closed")));
    }
    Ok(summary)
}

impl SendEventScript {
    pub fn validate(&self) -> Result<ScriptSummary, CodegenError> {
        validate_events(&self.events, Some((self.profile.screen_width, self.profile.screen_height)))
    }
}

/// The log format, one LF-terminated line per event.
pub fn serialize_script(script: &SendEventScript) -> Vec<u8> {
    let mut out = String::with_capacity(script.events.len() * 48);
    for e in &script.events {
        out.push_str(&format!(
            "[{}.{:06}] {}: {:04x} {:04x} {:08x}\n",
            e.timestamp_us / 1_000_000,
            e.timestamp_us % 1_000_000,
            script.device_node,
            e.event_type,
            e.code,
            e.value as u32
        ));
    }
    out.into_bytes()
}

/// Parses the log format back into a script for `profile`.
pub fn parse_log(bytes: &[u8], profile: &DeviceProfile) -> Result<SendEventScript, CodegenError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| CodegenError::BadLogLine { line: 0, message: format!("not UTF-8: {e}") })?;
    let mut device_node: Option<String> = None;
    let mut events = Vec::new();
    for (i, line) in text.split_terminator('\n').enumerate() {
        let bad = |message: &str| CodegenError::BadLogLine { line: i + 1, message: message.to_string() };
        let rest = line.strip_prefix('[').ok_or_else(|| bad("missing '['"))?;
        let (stamp, rest) = rest.split_once("] ").ok_or_else(|| bad("missing '] '"))?;
        let (secs, micros) = stamp.split_once('.').ok_or_else(|| bad("timestamp needs seconds.micros"))?;
        if micros.len() != 6 || secs.is_empty() || !secs.bytes().chain(micros.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(bad("timestamp needs seconds.micros with 6 micro digits"));
        }
        let secs: u64 = secs.parse().map_err(|_| bad("seconds out of range"))?;
        let micros: u64 = micros.parse().expect("six ascii digits");
        let (node, triple) = rest.rsplit_once(": ").ok_or_else(|| bad("missing ': ' after device node"))?;
        let fields: Vec<&str> = triple.split(' ').collect();
        let hex = |s: &str, width: usize| {
            if s.len() == width && s.bytes().all(|b| b.is_ascii_hexdigit()) {
                Ok(u32::from_str_radix(s, 16).expect("validated hex"))
            } else {
                Err(bad(&format!("expected {width} hex digits, got {s:?}")))
            }
        };
        let [t, c, v] = fields.as_slice() else {
            return Err(bad("expected '<type> <code> <value>'"));
        };
        let (t, c, v) = (hex(t, 4)?, hex(c, 4)?, hex(v, 8)?);
        match &device_node {
            None => device_node = Some(node.to_string()),
            Some(n) if n != node => return Err(bad(&format!("device node changes from {n} to {node}"))),
            Some(_) => {}
        }
        events.push(InputEvent::new(secs * 1_000_000 + micros, t as u16, c as u16, v as i32));
    }
    Ok(SendEventScript {
        device_node: device_node.unwrap_or_else(|| DEFAULT_DEVICE_NODE.to_string()),
        events,
        profile: profile.clone(),
    })
}

/// The compact runnable format.
pub fn translate_runnable(script: &SendEventScript) -> Result<Vec<u8>, CodegenError> {
    let mut out = Vec::with_capacity(RUNNABLE_MAGIC.len() + script.events.len() * RECORD_LEN);
    out.extend_from_slice(&RUNNABLE_MAGIC);
    let mut prev = 0u64;
    for e in &script.events {
        let delta = e
            .timestamp_us
            .checked_sub(prev)
            .ok_or_else(|| CodegenError::InvalidScript(format!("timestamp {} goes back from {prev}", e.timestamp_us)))?;
        let delta = u32::try_from(delta).map_err(|_| CodegenError::DeltaOverflow(delta))?;
        out.extend_from_slice(&delta.to_le_bytes());
        out.extend_from_slice(&e.event_type.to_le_bytes());
        out.extend_from_slice(&e.code.to_le_bytes());
        out.extend_from_slice(&e.value.to_le_bytes());
        prev = e.timestamp_us;
    }
    Ok(out)
}

/// Parses the runnable format into events with absolute timestamps.
pub fn parse_runnable(bytes: &[u8]) -> Result<Vec<InputEvent>, CodegenError> {
    let body = bytes
        .strip_prefix(&RUNNABLE_MAGIC)
        .ok_or_else(|| CodegenError::BadRunnable("missing V2SR header".into()))?;
    if body.len() % RECORD_LEN != 0 {
        return Err(CodegenError::BadRunnable(format!(
            "{} trailing bytes after the last record",
            body.len() % RECORD_LEN
        )));
    }
    let mut t = 0u64;
    Ok(body
        .chunks_exact(RECORD_LEN)
        .map(|r| {
            t += u64::from(u32::from_le_bytes(r[0..4].try_into().unwrap()));
            InputEvent::new(
                t,
                u16::from_le_bytes(r[4..6].try_into().unwrap()),
                u16::from_le_bytes(r[6..8].try_into().unwrap()),
                i32::from_le_bytes(r[8..12].try_into().unwrap()),
            )
        })
        .collect())
}

pub fn write_log(script: &SendEventScript, path: &Path) -> Result<(), CodegenError> {
    std::fs::write(path, serialize_script(script))?;
    Ok(())
}

pub fn write_runnable(script: &SendEventScript, path: &Path) -> Result<(), CodegenError> {
    std::fs::write(path, translate_runnable(script)?)?;
    Ok(())
}
