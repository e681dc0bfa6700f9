//! Turning touch sequences into typed actions and grouping simultaneous
//! actions into multi-finger actions.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::eval::{ActionTypeSequence, Symbol};
use crate::segment::{self, TouchSequence, MAX_DISCARD_FRAMES};
use crate::trace::{json_error, DetectionTrace, DeviceProfile, FrameCounts, TapCutoff, TouchDetection, TraceError};

/// Longest active contact, in frames, that is still a Tap.
pub const TAP_MAX_FRAMES: u32 = 20;

/// Longest active contact, in milliseconds, that is still a Tap when the
/// profile measures the cutoff in wall-clock time.
pub const TAP_MAX_MS: f64 = 667.0;

/// Actions whose share of high-opacity touches is below this are dropped.
pub const MIN_HIGH_FRACTION: f64 = 0.1;

/// Actions with a larger share of multi-touch frames are potential
/// multi-finger actions.
pub const MULTI_TOUCH_FRACTION: f64 = 0.5;

/// Most simultaneous fingers supported.
pub const MAX_FINGERS: u8 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Tap,
    #[serde(rename = "long_tap")]
    LongTap,
    Gesture,
}

impl ActionKind {
    pub fn symbol(self) -> Symbol {
        match self {
            ActionKind::Tap => Symbol::Tap,
            ActionKind::LongTap => Symbol::LongTap,
            ActionKind::Gesture => Symbol::Gesture,
        }
    }
}

/// Whether a contact of `active_frames` frames is short enough to be a Tap.
pub fn is_tap_duration(active_frames: u32, profile: &DeviceProfile) -> bool {
    match profile.tap_cutoff {
        TapCutoff::Frames => active_frames <= TAP_MAX_FRAMES,
        TapCutoff::Duration => profile.frame_time_ms(active_frames) <= TAP_MAX_MS,
    }
}

/// One finger's classified action.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicAction {
    pub kind: ActionKind,
    pub sequence: TouchSequence,
}

impl AtomicAction {
    pub fn start_frame(&self) -> u32 {
        self.sequence.start_frame()
    }

    /// Last frame of the sequence, fade tail included.
    pub fn end_frame(&self) -> u32 {
        self.sequence.end_frame()
    }

    /// Frames from the first touch through the last high-opacity touch.
    pub fn active_frames(&self) -> u32 {
        self.sequence.active_touches().len() as u32
    }

    /// First frame on which the finger is no longer pressed.
    pub fn lift_frame(&self) -> u32 {
        self.start_frame() + self.active_frames()
    }

    pub fn touches(&self) -> &[TouchDetection] {
        self.sequence.touches()
    }

    fn order_key(&self, other: &Self) -> Ordering {
        let (a, b) = (self.touches()[0].center(), other.touches()[0].center());
        self.start_frame()
            .cmp(&other.start_frame())
            .then(self.end_frame().cmp(&other.end_frame()))
            .then(a.x.total_cmp(&b.x))
            .then(a.y.total_cmp(&b.y))
    }
}

/// Classifies one finger's touch sequence.
///
/// A sequence whose touch centers all stay within the touch slop of the first
/// one is a Tap or LongTap depending on its active duration; anything that
/// wanders further is a Gesture.
pub fn classify_action(sequence: TouchSequence, profile: &DeviceProfile) -> AtomicAction {
    let origin = sequence.touches()[0].center();
    let stays = sequence
        .touches()
        .iter()
        .all(|t| t.center().distance(&origin) <= profile.touch_slop);
    let kind = if !stays {
        ActionKind::Gesture
    } else if is_tap_duration(sequence.active_touches().len() as u32, profile) {
        ActionKind::Tap
    } else {
        ActionKind::LongTap
    };
    AtomicAction { kind, sequence }
}

/// Drops mostly-faded actions and actions spanning two frames or fewer.
pub fn filter_actions(actions: Vec<AtomicAction>) -> Vec<AtomicAction> {
    actions
        .into_iter()
        .filter(|a| {
            let high = a.sequence.high_count() as f64 / a.sequence.len() as f64;
            high >= MIN_HIGH_FRACTION && a.sequence.span() > MAX_DISCARD_FRAMES
        })
        .collect()
}

/// Several fingers acting at once.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiFingerAction {
    pub actions: Vec<AtomicAction>,
    pub finger_count: u8,
}

impl MultiFingerAction {
    pub fn start_frame(&self) -> u32 {
        self.actions.iter().map(AtomicAction::start_frame).min().unwrap_or(0)
    }

    pub fn end_frame(&self) -> u32 {
        self.actions.iter().map(AtomicAction::end_frame).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioItem {
    Sfa(AtomicAction),
    Mfa(MultiFingerAction),
}

impl ScenarioItem {
    pub fn start_frame(&self) -> u32 {
        match self {
            ScenarioItem::Sfa(a) => a.start_frame(),
            ScenarioItem::Mfa(m) => m.start_frame(),
        }
    }

    pub fn end_frame(&self) -> u32 {
        match self {
            ScenarioItem::Sfa(a) => a.end_frame(),
            ScenarioItem::Mfa(m) => m.end_frame(),
        }
    }

    /// Multi-finger actions are written `G<n>`; `extended == false`
    /// collapses them to a plain Gesture.
    pub fn symbol(&self, extended: bool) -> Symbol {
        match self {
            ScenarioItem::Sfa(a) => a.kind.symbol(),
            ScenarioItem::Mfa(m) if extended => Symbol::MultiFinger(m.finger_count),
            ScenarioItem::Mfa(_) => Symbol::Gesture,
        }
    }

    fn first_action(&self) -> &AtomicAction {
        match self {
            ScenarioItem::Sfa(a) => a,
            ScenarioItem::Mfa(m) => &m.actions[0],
        }
    }
}

/// Chronological list of single- and multi-finger actions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassifiedScenario {
    pub items: Vec<ScenarioItem>,
}

impl ClassifiedScenario {
    pub fn symbols(&self, extended: bool) -> ActionTypeSequence {
        ActionTypeSequence(self.items.iter().map(|i| i.symbol(extended)).collect())
    }

    pub fn action_count(&self) -> usize {
        self.items
            .iter()
            .map(|i| match i {
                ScenarioItem::Sfa(_) => 1,
                ScenarioItem::Mfa(m) => m.actions.len(),
            })
            .sum()
    }
}

/// Share of the frames in `[start, end]` that hold two or more touches.
pub fn multi_touch_fraction(start: u32, end: u32, counts: &FrameCounts) -> f64 {
    let span = end - start + 1;
    let multi = (start..=end).filter(|&f| counts.get(f) >= 2).count();
    multi as f64 / f64::from(span)
}

/// Groups items chronologically: an item joins the group being built if it
/// starts before the last frame of some member, otherwise it starts a new
/// group. `span` returns an item's first and last frame.
///
/// Items are sorted by first frame, then last frame, before grouping; `cmp`
/// breaks any remaining ties.
pub fn group_overlapping<T>(
    mut items: Vec<T>,
    span: impl Fn(&T) -> (u32, u32),
    cmp: impl Fn(&T, &T) -> Ordering,
) -> Vec<Vec<T>> {
    items.sort_by(|a, b| {
        let (sa, sb) = (span(a), span(b));
        sa.cmp(&sb).then_with(|| cmp(a, b))
    });
    let mut stack: Vec<(u32, Vec<T>)> = Vec::new();
    for item in items {
        let (start, end) = span(&item);
        match stack.last_mut() {
            // The group's latest last frame decides: if `start` is before it,
            // the item overlaps at least that member.
            Some((group_end, group)) if start < *group_end => {
                *group_end = (*group_end).max(end);
                group.push(item);
            }
            _ => stack.push((end, vec![item])),
        }
    }
    stack.into_iter().map(|(_, g)| g).collect()
}

/// Splits classified actions into single- and multi-finger actions.
///
/// `counts` holds the per-frame touch counts of the whole (confidence
/// filtered) trace. Actions where more than half of their frames hold
/// several touches are grouped by [`group_overlapping`]; groups of one fall
/// back to single-finger actions.
pub fn identify_sfa_mfa(actions: Vec<AtomicAction>, counts: &FrameCounts) -> ClassifiedScenario {
    let (potential, mut singles): (Vec<_>, Vec<_>) = actions.into_iter().partition(|a| {
        multi_touch_fraction(a.start_frame(), a.end_frame(), counts) > MULTI_TOUCH_FRACTION
    });

    let mut items = Vec::new();
    for group in group_overlapping(potential, |a| (a.start_frame(), a.end_frame()), AtomicAction::order_key) {
        if group.len() == 1 {
            singles.extend(group);
        } else {
            let finger_count = classify_finger_count(&group, counts);
            items.push(ScenarioItem::Mfa(MultiFingerAction { actions: group, finger_count }));
        }
    }
    items.extend(singles.into_iter().map(ScenarioItem::Sfa));
    items.sort_by(|a, b| {
        a.start_frame()
            .cmp(&b.start_frame())
            .then_with(|| a.first_action().order_key(b.first_action()))
    });
    ClassifiedScenario { items }
}

/// Number of fingers in a multi-finger action: the most frequent per-frame
/// touch count over the group's frames, larger count on ties, clamped to
/// `1..=10`.
pub fn classify_finger_count(group: &[AtomicAction], counts: &FrameCounts) -> u8 {
    let start = group.iter().map(AtomicAction::start_frame).min().expect("non-empty group");
    let end = group.iter().map(AtomicAction::end_frame).max().expect("non-empty group");
    mode_of_counts((start..=end).map(|f| counts.get(f)))
}

/// Most frequent value, larger value on ties, clamped to `1..=10`.
pub fn mode_of_counts(values: impl IntoIterator<Item = u32>) -> u8 {
    let mut histogram = [0usize; MAX_FINGERS as usize + 1];
    for v in values {
        histogram[(v as usize).min(MAX_FINGERS as usize)] += 1;
    }
    let (mode, _) = histogram
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(&b.0)))
        .expect("histogram is non-empty");
    (mode as u8).max(1)
}

/// Knobs for [`classify_trace`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig {
    pub min_confidence: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { min_confidence: segment::MIN_CONFIDENCE }
    }
}

/// The whole classification stage: filter, group, segment, classify, filter,
/// then identify single- and multi-finger actions.
pub fn classify_trace(trace: &DetectionTrace, config: &ClassifierConfig) -> ClassifiedScenario {
    let profile = trace.profile();
    let filtered = segment::filter_confidence(trace, config.min_confidence);
    let counts = filtered.touches_per_frame();
    let actions: Vec<AtomicAction> = segment::group_consecutive(&filtered)
        .iter()
        .flat_map(|g| segment::segment_actions(g, profile.touch_slop))
        .map(|seq| classify_action(seq, profile))
        .collect();
    identify_sfa_mfa(filter_actions(actions), &counts)
}

#[derive(Serialize, Deserialize)]
struct ScenarioDocument {
    schema_version: u32,
    device: DeviceProfile,
    items: Vec<ItemDocument>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum ItemDocument {
    Sfa { action: ActionDocument },
    Mfa { finger_count: u8, actions: Vec<ActionDocument> },
}

#[derive(Serialize, Deserialize)]
struct ActionDocument {
    kind: ActionKind,
    start_frame: u32,
    end_frame: u32,
    touches: Vec<TouchDetection>,
}

impl From<&AtomicAction> for ActionDocument {
    fn from(a: &AtomicAction) -> Self {
        ActionDocument {
            kind: a.kind,
            start_frame: a.start_frame(),
            end_frame: a.end_frame(),
            touches: a.touches().to_vec(),
        }
    }
}

impl ActionDocument {
    fn into_action(self) -> Result<AtomicAction, TraceError> {
        let sequence = TouchSequence::new(self.touches).map_err(TraceError::SchemaViolation)?;
        if sequence.start_frame() != self.start_frame || sequence.end_frame() != self.end_frame {
            return Err(TraceError::SchemaViolation(format!(
                "action declares frames {}..={} but its touches cover {}..={}",
                self.start_frame,
                self.end_frame,
                sequence.start_frame(),
                sequence.end_frame()
            )));
        }
        Ok(AtomicAction { kind: self.kind, sequence })
    }
}

/// Writes a classified scenario together with its device profile.
pub fn serialize_scenario(scenario: &ClassifiedScenario, profile: &DeviceProfile) -> Vec<u8> {
    let items = scenario
        .items
        .iter()
        .map(|item| match item {
            ScenarioItem::Sfa(a) => ItemDocument::Sfa { action: a.into() },
            ScenarioItem::Mfa(m) => ItemDocument::Mfa {
                finger_count: m.finger_count,
                actions: m.actions.iter().map(Into::into).collect(),
            },
        })
        .collect();
    let doc = ScenarioDocument {
        schema_version: crate::trace::SCHEMA_VERSION,
        device: profile.clone(),
        items,
    };
    serde_json::to_vec_pretty(&doc).expect("scenario documents always serialize")
}

/// Reads a document written by [`serialize_scenario`].
pub fn parse_scenario(bytes: &[u8]) -> Result<(ClassifiedScenario, DeviceProfile), TraceError> {
    let doc: ScenarioDocument = serde_json::from_slice(bytes).map_err(json_error)?;
    if doc.schema_version != crate::trace::SCHEMA_VERSION {
        return Err(TraceError::SchemaViolation(format!(
            "unsupported schema_version {}",
            doc.schema_version
        )));
    }
    doc.device.validate()?;
    let mut items = Vec::with_capacity(doc.items.len());
    for item in doc.items {
        items.push(match item {
            ItemDocument::Sfa { action } => ScenarioItem::Sfa(action.into_action()?),
            ItemDocument::Mfa { finger_count, actions } => {
                if actions.is_empty() || !(1..=MAX_FINGERS).contains(&finger_count) {
                    return Err(TraceError::SchemaViolation(format!(
                        "multi-finger action needs actions and a finger count in 1..=10, got {} actions and {finger_count}",
                        actions.len()
                    )));
                }
                let actions = actions.into_iter().map(ActionDocument::into_action).collect::<Result<_, _>>()?;
                ScenarioItem::Mfa(MultiFingerAction { actions, finger_count })
            }
        });
    }
    if items.windows(2).any(|w| w[0].start_frame() > w[1].start_frame()) {
        return Err(TraceError::SchemaViolation("scenario items must be in chronological order".into()));
    }
    Ok((ClassifiedScenario { items }, doc.device))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{BBox, Opacity};

    fn touch(frame: u32, x: f64, y: f64, opacity: Opacity) -> TouchDetection {
        TouchDetection { frame, bbox: BBox::centered(x, y, 40.0, 40.0), confidence: 0.9, opacity }
    }

    fn still(start: u32, high: u32, low: u32, x: f64, y: f64) -> TouchSequence {
        let mut t: Vec<_> = (0..high).map(|i| touch(start + i, x, y, Opacity::High)).collect();
        t.extend((0..low).map(|i| touch(start + high + i, x, y, Opacity::Low)));
        TouchSequence::new(t).unwrap()
    }

    fn action(start: u32, end: u32) -> AtomicAction {
        AtomicAction { kind: ActionKind::Gesture, sequence: still(start, end - start + 1, 0, 100.0, 100.0) }
    }

    #[test]
    fn tap_with_fade_tail() {
        let p = DeviceProfile::nexus5();
        let a = classify_action(still(0, 10, 3, 100.0, 100.0), &p);
        assert_eq!(a.kind, ActionKind::Tap);
        assert_eq!(a.active_frames(), 10);
        assert_eq!(a.lift_frame(), 10);
    }

    #[test]
    fn tap_long_tap_cutoff() {
        let p = DeviceProfile::nexus5();
        assert_eq!(classify_action(still(0, 20, 0, 5.0, 5.0), &p).kind, ActionKind::Tap);
        assert_eq!(classify_action(still(0, 21, 0, 5.0, 5.0), &p).kind, ActionKind::LongTap);
        assert_eq!(classify_action(still(0, 25, 0, 5.0, 5.0), &p).kind, ActionKind::LongTap);
        // fade frames do not count towards the duration
        assert_eq!(classify_action(still(0, 20, 3, 5.0, 5.0), &p).kind, ActionKind::Tap);
    }

    #[test]
    fn duration_cutoff_scales_with_fps() {
        let mut p = DeviceProfile::new("fast", 1080, 1920, 60).unwrap();
        assert_eq!(classify_action(still(0, 30, 0, 5.0, 5.0), &p).kind, ActionKind::LongTap);
        p.tap_cutoff = TapCutoff::Duration;
        assert_eq!(classify_action(still(0, 40, 0, 5.0, 5.0), &p).kind, ActionKind::Tap);
        assert_eq!(classify_action(still(0, 41, 0, 5.0, 5.0), &p).kind, ActionKind::LongTap);
    }

    #[test]
    fn slop_boundary() {
        let p = DeviceProfile::nexus5();
        let seq = |dx: f64| {
            let mut t: Vec<_> = (0..10).map(|i| touch(i, 100.0, 100.0, Opacity::High)).collect();
            t[5] = touch(5, 100.0 + dx, 100.0, Opacity::High);
            TouchSequence::new(t).unwrap()
        };
        assert_eq!(classify_action(seq(8.0), &p).kind, ActionKind::Tap);
        assert_eq!(classify_action(seq(8.01), &p).kind, ActionKind::Gesture);
    }

    #[test]
    fn drifting_sequence_is_gesture() {
        let p = DeviceProfile::nexus5();
        let t: Vec<_> = (0..15).map(|i| touch(i, 100.0 + f64::from(i) * 40.0 / 14.0, 300.0, Opacity::High)).collect();
        assert_eq!(classify_action(TouchSequence::new(t).unwrap(), &p).kind, ActionKind::Gesture);
    }

    #[test]
    fn filter_drops_faded_and_short() {
        let p = DeviceProfile::nexus5();
        let all_low = classify_action(still(0, 0, 12, 5.0, 5.0), &p);
        let mostly_high = classify_action(still(20, 11, 1, 5.0, 5.0), &p);
        let short = classify_action(still(40, 2, 0, 5.0, 5.0), &p);
        let one_in_ten = classify_action(still(60, 1, 9, 5.0, 5.0), &p);
        let kept = filter_actions(vec![all_low, mostly_high.clone(), short, one_in_ten.clone()]);
        assert_eq!(kept, vec![mostly_high, one_in_ten]);
    }

    fn counts_for(actions: &[AtomicAction]) -> FrameCounts {
        let end = actions.iter().map(|a| a.end_frame()).max().unwrap_or(0);
        let mut c = vec![0u32; end as usize + 1];
        for a in actions {
            for t in a.touches() {
                c[t.frame as usize] += 1;
            }
        }
        FrameCounts(c)
    }

    #[test]
    fn overlapping_gestures_join_open_group() {
        let acts = vec![action(1, 20), action(2, 17), action(3, 20)];
        let groups = group_overlapping(acts, |a| (a.start_frame(), a.end_frame()), AtomicAction::order_key);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].len(), 3);

        let acts = vec![action(1, 20), action(2, 17), action(3, 20), action(70, 92)];
        let groups = group_overlapping(acts, |a| (a.start_frame(), a.end_frame()), AtomicAction::order_key);
        assert_eq!(groups.iter().map(Vec::len).collect::<Vec<_>>(), [3, 1]);
    }

    #[test]
    fn disjoint_taps_are_single_finger() {
        let acts = vec![action(0, 9), action(20, 29), action(40, 49)];
        let counts = counts_for(&acts);
        let s = identify_sfa_mfa(acts, &counts);
        assert_eq!(s.items.len(), 3);
        assert!(s.items.iter().all(|i| matches!(i, ScenarioItem::Sfa(_))));
    }

    #[test]
    fn exactly_half_multi_touch_stays_single() {
        // a: 0..=9, b: 5..=14 -> each has 5 of 10 frames doubled.
        let acts = vec![action(0, 9), action(5, 14)];
        let counts = counts_for(&acts);
        assert_eq!(multi_touch_fraction(0, 9, &counts), 0.5);
        let s = identify_sfa_mfa(acts, &counts);
        assert_eq!(s.items.len(), 2);
        assert!(s.items.iter().all(|i| matches!(i, ScenarioItem::Sfa(_))));

        // a: 0..=9, b: 4..=13 -> 6 of 10 frames doubled for each.
        let acts = vec![action(0, 9), action(4, 13)];
        let counts = counts_for(&acts);
        let s = identify_sfa_mfa(acts, &counts);
        assert_eq!(s.items.len(), 1);
        // 8 single-touch frames against 6 double ones over 0..=13
        assert!(matches!(&s.items[0], ScenarioItem::Mfa(m) if m.finger_count == 1));
    }

    #[test]
    fn finger_count_mode() {
        assert_eq!(mode_of_counts([3, 3, 3, 3, 4, 3]), 3);
        assert_eq!(mode_of_counts([2, 2, 2]), 2);
        assert_eq!(mode_of_counts([1, 1, 2, 2]), 2);
        assert_eq!(mode_of_counts([0, 0, 0, 1]), 1);
        assert_eq!(mode_of_counts([12, 12]), 10);
    }

    #[test]
    fn stray_tap_is_kept_in_group() {
        let fingers = vec![action(0, 29), action(0, 29), action(0, 29), action(10, 14)];
        let counts = counts_for(&fingers);
        let s = identify_sfa_mfa(fingers, &counts);
        assert_eq!(s.items.len(), 1);
        match &s.items[0] {
            ScenarioItem::Mfa(m) => {
                assert_eq!(m.actions.len(), 4);
                assert_eq!(m.finger_count, 3);
            }
            other => panic!("expected a multi-finger action, got {other:?}"),
        }
    }

    #[test]
    fn scenario_document_round_trip() {
        let p = DeviceProfile::nexus5();
        let acts = vec![action(0, 9), action(0, 9), action(30, 60)];
        let counts = counts_for(&acts);
        let s = identify_sfa_mfa(acts, &counts);
        let bytes = serialize_scenario(&s, &p);
        let (back, profile) = parse_scenario(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(profile, p);
    }

    #[test]
    fn scenario_document_rejects_bad_frames() {
        let p = DeviceProfile::nexus5();
        let s = ClassifiedScenario { items: vec![ScenarioItem::Sfa(action(0, 9))] };
        let text = String::from_utf8(serialize_scenario(&s, &p)).unwrap();
        let broken = text.replace("\"end_frame\": 9", "\"end_frame\": 12");
        assert!(matches!(parse_scenario(broken.as_bytes()), Err(TraceError::SchemaViolation(_))));
    }
}
