//! Splitting a detection trace into per-finger touch sequences.
//!
//! Three steps, applied in order:
//!
//! 1. [`filter_confidence`] drops detections the detector was unsure about.
//! 2. [`group_consecutive`] collects detections on runs of consecutive
//!    non-empty frames into [`FrameGroup`]s and drops runs of two frames or
//!    fewer.
//! 3. [`segment_actions`] treats each group as a layered graph (one layer per
//!    frame) and links every touch to a touch of the previous frame, giving one
//!    [`TouchSequence`] per finger contact.
//!
//! Linking between two frames is greedy: the globally closest (sequence,
//! touch) pair is linked first, then the next closest among the remaining
//! ones, and so on. Pairs whose distance is within the tie tolerance of the
//! closest one are considered equally close; among those a low-opacity touch
//! is linked first, to the oldest sequence, since a fading indicator ends the
//! trajectory it belongs to rather than one that has just started. Remaining
//! ties go to the touch with the smaller x, then smaller y. Leftover touches
//! start new sequences and leftover sequences end.
//!
//! After linking, a sequence that contains a low-opacity touch followed by a
//! high-opacity one is cut after the low run: a lift followed by a new press
//! with no empty frame in between.

use std::cmp::Ordering;

use crate::trace::{DetectionTrace, TouchDetection};

/// Detections below this confidence are dropped.
pub const MIN_CONFIDENCE: f64 = 0.7;

/// Groups and sequences spanning this many frames or fewer are dropped.
pub const MAX_DISCARD_FRAMES: u32 = 2;

/// Keeps detections with `confidence >= min_confidence`, preserving order.
pub fn filter_confidence(trace: &DetectionTrace, min_confidence: f64) -> DetectionTrace {
    trace.retain(|d| d.confidence >= min_confidence)
}

/// Detections occupying a run of consecutive frames with no empty frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGroup {
    detections: Vec<TouchDetection>,
}

impl FrameGroup {
    /// Builds a group from frame-sorted detections. Panics on an empty input.
    pub fn new(detections: Vec<TouchDetection>) -> Self {
        assert!(!detections.is_empty(), "a frame group needs at least one detection");
        debug_assert!(detections.windows(2).all(|w| w[0].frame <= w[1].frame));
        FrameGroup { detections }
    }

    pub fn detections(&self) -> &[TouchDetection] {
        &self.detections
    }

    pub fn start_frame(&self) -> u32 {
        self.detections[0].frame
    }

    pub fn end_frame(&self) -> u32 {
        self.detections[self.detections.len() - 1].frame
    }

    pub fn span(&self) -> u32 {
        self.end_frame() - self.start_frame() + 1
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The detections of each frame, in frame order.
    pub fn frames(&self) -> impl Iterator<Item = &[TouchDetection]> {
        self.detections.chunk_by(|a, b| a.frame == b.frame)
    }
}

/// Splits a (filtered) trace at empty frames, discarding short runs.
pub fn group_consecutive(trace: &DetectionTrace) -> Vec<FrameGroup> {
    trace
        .detections()
        .chunk_by(|a, b| b.frame <= a.frame + 1)
        .map(|run| FrameGroup::new(run.to_vec()))
        .filter(|g| g.span() > MAX_DISCARD_FRAMES)
        .collect()
}

/// One finger's contiguous contact, one touch per frame.
///
/// Low-opacity touches only ever appear as a trailing run (the fade tail left
/// behind when the finger lifts).
#[derive(Debug, Clone, PartialEq)]
pub struct TouchSequence {
    touches: Vec<TouchDetection>,
}

impl TouchSequence {
    /// Checks the sequence invariants: non-empty, strictly increasing
    /// consecutive frames and a low-opacity suffix.
    pub fn new(touches: Vec<TouchDetection>) -> Result<Self, String> {
        if touches.is_empty() {
            return Err("touch sequence is empty".into());
        }
        for w in touches.windows(2) {
            if w[1].frame != w[0].frame + 1 {
                return Err(format!(
                    "touch sequence frames must be consecutive, found {} then {}",
                    w[0].frame, w[1].frame
                ));
            }
            if !w[0].is_high() && w[1].is_high() {
                return Err(format!(
                    "high-opacity touch on frame {} follows a low-opacity one",
                    w[1].frame
                ));
            }
        }
        Ok(TouchSequence { touches })
    }

    pub fn touches(&self) -> &[TouchDetection] {
        &self.touches
    }

    pub fn start_frame(&self) -> u32 {
        self.touches[0].frame
    }

    pub fn end_frame(&self) -> u32 {
        self.touches[self.touches.len() - 1].frame
    }

    pub fn span(&self) -> u32 {
        self.end_frame() - self.start_frame() + 1
    }

    pub fn len(&self) -> usize {
        self.touches.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Touches up to and including the last high-opacity one.
    ///
    /// For an all-low sequence this is the whole sequence.
    pub fn active_touches(&self) -> &[TouchDetection] {
        match self.touches.iter().rposition(TouchDetection::is_high) {
            Some(last) => &self.touches[..=last],
            None => &self.touches,
        }
    }

    pub fn high_count(&self) -> usize {
        self.touches.iter().filter(|t| t.is_high()).count()
    }
}

/// Output of [`segment_group`]: the kept sequences and every detection that
/// ended up in a sequence too short to keep.
#[derive(Debug, Clone, Default)]
pub struct Segmentation {
    pub sequences: Vec<TouchSequence>,
    pub discarded: Vec<TouchDetection>,
}

/// Splits a frame group into per-finger touch sequences.
///
/// `tie_tolerance` is the distance (pixels) under which two candidate links
/// count as equally close; the pipeline uses the device touch slop.
pub fn segment_actions(group: &FrameGroup, tie_tolerance: f64) -> Vec<TouchSequence> {
    segment_group(group, tie_tolerance).sequences
}

/// Same as [`segment_actions`], also returning the discarded detections.
pub fn segment_group(group: &FrameGroup, tie_tolerance: f64) -> Segmentation {
    let mut open: Vec<Vec<TouchDetection>> = Vec::new();
    let mut linked: Vec<Vec<TouchDetection>> = Vec::new();

    for frame in group.frames() {
        let mut touches: Vec<TouchDetection> = frame.to_vec();
        touches.sort_by(cmp_position);

        let mut seq_left: Vec<bool> = vec![true; open.len()];
        let mut touch_left: Vec<bool> = vec![true; touches.len()];
        let mut links: Vec<(usize, usize)> = Vec::new();

        if open.len() == 1 && touches.len() == 1 {
            touch_left[0] = false;
            links.push((0, 0));
        } else {
            while let Some(link) = best_link(&open, &touches, &seq_left, &touch_left, tie_tolerance) {
                seq_left[link.0] = false;
                touch_left[link.1] = false;
                links.push(link);
            }
        }

        let mut next_open = Vec::with_capacity(touches.len());
        let mut taken: Vec<Option<Vec<TouchDetection>>> = open.into_iter().map(Some).collect();
        for (s, t) in links {
            let mut seq = taken[s].take().expect("each sequence is linked once");
            seq.push(touches[t]);
            next_open.push(seq);
        }
        linked.extend(taken.into_iter().flatten());
        for (t, touch) in touches.into_iter().enumerate() {
            if touch_left[t] {
                next_open.push(vec![touch]);
            }
        }
        open = next_open;
    }
    linked.extend(open);

    let mut out = Segmentation::default();
    for seq in linked {
        for piece in split_at_lifts(seq) {
            let span = piece[piece.len() - 1].frame - piece[0].frame + 1;
            if span > MAX_DISCARD_FRAMES {
                out.sequences.push(TouchSequence::new(piece).expect("split pieces satisfy invariants"));
            } else {
                out.discarded.extend(piece);
            }
        }
    }
    out.sequences.sort_by(|a, b| {
        a.start_frame()
            .cmp(&b.start_frame())
            .then_with(|| cmp_position(&a.touches[0], &b.touches[0]))
    });
    out
}

fn cmp_position(a: &TouchDetection, b: &TouchDetection) -> Ordering {
    let (pa, pb) = (a.center(), b.center());
    pa.x.total_cmp(&pb.x).then_with(|| pa.y.total_cmp(&pb.y))
}

/// Picks the next (sequence, touch) link, or `None` when either side is used up.
fn best_link(
    open: &[Vec<TouchDetection>],
    touches: &[TouchDetection],
    seq_left: &[bool],
    touch_left: &[bool],
    tie_tolerance: f64,
) -> Option<(usize, usize)> {
    let mut pairs = Vec::new();
    for (s, seq) in open.iter().enumerate().filter(|(s, _)| seq_left[*s]) {
        let last = seq.last().expect("open sequences are non-empty");
        for (t, touch) in touches.iter().enumerate().filter(|(t, _)| touch_left[*t]) {
            pairs.push((s, t, last.center().distance(&touch.center())));
        }
    }
    let nearest = pairs.iter().map(|p| p.2).min_by(f64::total_cmp)?;
    pairs
        .into_iter()
        .filter(|p| p.2 - nearest < tie_tolerance)
        .min_by(|a, b| tie_order(open, touches, (a.0, a.1), (b.0, b.1)))
        .map(|(s, t, _)| (s, t))
}

/// Preference among links whose distances are within the tie tolerance.
fn tie_order(
    open: &[Vec<TouchDetection>],
    touches: &[TouchDetection],
    a: (usize, usize),
    b: (usize, usize),
) -> Ordering {
    let key = |(s, t): (usize, usize)| {
        let seq = &open[s];
        let touch = &touches[t];
        let low_touch = !touch.is_high();
        let last_high = seq.last().is_some_and(TouchDetection::is_high);
        // Low touches first; they prefer a still-pressed, older trajectory.
        let start = if low_touch { seq[0].frame } else { 0 };
        (!low_touch, !last_high, start)
    };
    key(a)
        .cmp(&key(b))
        .then_with(|| cmp_position(&touches[a.1], &touches[b.1]))
        .then_with(|| {
            let (la, lb) = (open[a.0].last().unwrap(), open[b.0].last().unwrap());
            cmp_position(la, lb)
        })
}

/// Cuts a linked chain wherever a high-opacity touch follows a low one.
fn split_at_lifts(seq: Vec<TouchDetection>) -> Vec<Vec<TouchDetection>> {
    let mut pieces = Vec::new();
    let mut current: Vec<TouchDetection> = Vec::new();
    for touch in seq {
        if touch.is_high() && current.last().is_some_and(|prev| !prev.is_high()) {
            pieces.push(std::mem::take(&mut current));
        }
        current.push(touch);
    }
    if !current.is_empty() {
        pieces.push(current);
    }
    pieces
}
