//! Acceptance criteria. Each test prints one PASS/FAIL line to stderr,
//! bypassing output capture, then asserts.

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tapscript::classify::{
    classify_action, classify_trace, filter_actions, group_overlapping, identify_sfa_mfa, ActionKind, AtomicAction,
    ClassifiedScenario, ClassifierConfig, ScenarioItem,
};
use tapscript::codegen::{
    assemble_script, codes::*, parse_log, parse_runnable, serialize_script, translate_runnable, validate_events,
    DEFAULT_DEVICE_NODE,
};
use tapscript::eval::{lcs_len, lcs_ratio, levenshtein, Symbol};
use tapscript::segment::{filter_confidence, group_consecutive, TouchSequence, MIN_CONFIDENCE};
use tapscript::synth::{random_scenario, synthesize_trace, GroundTruthAction, GroundTruthScenario, NoiseModel, ScenarioShape};
use tapscript::trace::{frame_time_ms, BBox, DetectionTrace, DeviceProfile, FrameCounts, Opacity, TouchDetection};

const SCENARIOS: usize = 200;
const SCENARIO_SEED: u64 = 0x5eed;

/// Target mean LCS ratio under each noise preset, and the allowed shortfall.
const PHYSICAL_DEVICE_LCS: f64 = 0.90;
const EMULATOR_LCS: f64 = 0.80;
const LCS_TOLERANCE: f64 = 0.05;

fn report(criterion: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "acceptance {criterion} [{verdict}] {name}: {detail}");
}

fn scenarios() -> Vec<GroundTruthScenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(SCENARIO_SEED);
    (0..SCENARIOS)
        .map(|_| random_scenario(&mut rng, &DeviceProfile::nexus5(), &ScenarioShape::default()))
        .collect()
}

fn mean_lcs(noise: &NoiseModel) -> f64 {
    let total: f64 = scenarios()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let out = synthesize_trace(s, &noise.clone().with_seed(i as u64)).unwrap();
            let pred = classify_trace(&out.trace, &ClassifierConfig::default()).symbols(true);
            lcs_ratio(&pred.0, &out.truth.0).unwrap()
        })
        .sum();
    total / SCENARIOS as f64
}

#[test]
fn criterion_1_zero_noise_round_trip() {
    let started = Instant::now();
    let mut exact = 0;
    let mut mfa = 0;
    for s in scenarios() {
        let out = synthesize_trace(&s, &NoiseModel::clean()).unwrap();
        let pred = classify_trace(&out.trace, &ClassifierConfig::default()).symbols(true);
        mfa += s.actions.iter().filter(|a| a.fingers() > 1).count();
        if levenshtein(&pred.0, &out.truth.0) == 0 && lcs_ratio(&pred.0, &out.truth.0).unwrap() == 1.0 {
            exact += 1;
        }
    }
    let elapsed = started.elapsed();
    let pass = exact == SCENARIOS && elapsed < Duration::from_secs(10);
    report(
        1,
        "zero-noise round trip",
        pass,
        &format!("{exact}/{SCENARIOS} exact ({mfa} two-finger actions), {:.2}s", elapsed.as_secs_f64()),
    );
    assert!(pass);
}

#[test]
fn criterion_2_noisy_robustness() {
    let physical = mean_lcs(&NoiseModel::physical_device());
    let emulator = mean_lcs(&NoiseModel::emulator());
    let pass_physical = physical >= PHYSICAL_DEVICE_LCS - LCS_TOLERANCE;
    let pass_emulator = emulator >= EMULATOR_LCS - LCS_TOLERANCE;
    report(
        2,
        "noisy robustness",
        pass_physical && pass_emulator,
        &format!(
            "physical-device mean LCS {physical:.4} (target {PHYSICAL_DEVICE_LCS} -{LCS_TOLERANCE}), \
             emulator mean LCS {emulator:.4} (target {EMULATOR_LCS} -{LCS_TOLERANCE})"
        ),
    );
    assert!(pass_physical, "physical-device mean LCS {physical}");
    assert!(pass_emulator, "emulator mean LCS {emulator}");
}

fn touch(frame: u32, x: f64, y: f64, opacity: Opacity) -> TouchDetection {
    TouchDetection { frame, bbox: BBox::centered(x, y, 40.0, 40.0), confidence: 0.9, opacity }
}

fn interval_action(start: u32, end: u32, x: f64) -> AtomicAction {
    let touches = (start..=end).map(|f| touch(f, x, 500.0, Opacity::High)).collect();
    AtomicAction { kind: ActionKind::Gesture, sequence: TouchSequence::new(touches).unwrap() }
}

fn counts_of(spans: &[(u32, u32)]) -> FrameCounts {
    let len = spans.iter().map(|s| s.1 + 1).max().unwrap_or(0) as usize;
    let mut c = vec![0u32; len];
    for &(s, e) in spans {
        for f in s..=e {
            c[f as usize] += 1;
        }
    }
    FrameCounts(c)
}

#[test]
fn criterion_3_grouping_matches_overlap_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let n = rng.random_range(0..=10);
        let spans: Vec<(u32, u32)> = (0..n)
            .map(|_| {
                let s = rng.random_range(0..80);
                (s, s + rng.random_range(2..30))
            })
            .collect();

        // The grouping step alone.
        let indexed: Vec<(usize, (u32, u32))> = spans.iter().copied().enumerate().collect();
        let mut groups: Vec<Vec<usize>> = group_overlapping(indexed, |p| p.1, |a, b| a.0.cmp(&b.0))
            .into_iter()
            .map(|g| {
                let mut ids: Vec<usize> = g.into_iter().map(|p| p.0).collect();
                ids.sort();
                ids
            })
            .collect();
        groups.sort();
        if groups != common::overlap_components(&spans) {
            mismatches += 1;
            continue;
        }

        // The whole identification: potential multi-finger actions are the
        // ones with a strict majority of multi-touch frames; their overlap
        // components of size two or more become multi-finger actions.
        let counts = counts_of(&spans);
        let potential: Vec<usize> = (0..n)
            .filter(|&i| {
                let (s, e) = spans[i];
                let multi = (s..=e).filter(|&f| counts.0[f as usize] >= 2).count() as u32;
                2 * multi > e - s + 1
            })
            .collect();
        let pot_spans: Vec<(u32, u32)> = potential.iter().map(|&i| spans[i]).collect();
        let mut expected_mfas: Vec<Vec<usize>> = common::overlap_components(&pot_spans)
            .into_iter()
            .filter(|c| c.len() > 1)
            .map(|c| c.into_iter().map(|k| potential[k]).collect())
            .collect();
        for g in &mut expected_mfas {
            g.sort();
        }
        expected_mfas.sort();

        // x coordinate identifies the action
        let actions: Vec<AtomicAction> =
            spans.iter().enumerate().map(|(i, &(s, e))| interval_action(s, e, 10.0 + i as f64)).collect();
        let scenario = identify_sfa_mfa(actions, &counts);
        let id = |a: &AtomicAction| (a.touches()[0].center().x - 10.0) as usize;
        let mut got_mfas: Vec<Vec<usize>> = scenario
            .items
            .iter()
            .filter_map(|it| match it {
                ScenarioItem::Mfa(m) => {
                    let mut ids: Vec<usize> = m.actions.iter().map(id).collect();
                    ids.sort();
                    Some(ids)
                }
                ScenarioItem::Sfa(_) => None,
            })
            .collect();
        got_mfas.sort();
        let starts: Vec<u32> = scenario.items.iter().map(ScenarioItem::start_frame).collect();
        if got_mfas != expected_mfas || scenario.action_count() != n || !starts.is_sorted() {
            mismatches += 1;
        }
    }
    report(3, "grouping oracle", mismatches == 0, &format!("{mismatches} mismatches in 10000 instances"));
    assert_eq!(mismatches, 0);
}

fn still(frames: u32, dx: f64) -> Vec<TouchDetection> {
    (0..frames).map(|f| touch(f, 100.0 + if f == frames - 1 { dx } else { 0.0 }, 100.0, Opacity::High)).collect()
}

fn kind(touches: Vec<TouchDetection>) -> ActionKind {
    classify_action(TouchSequence::new(touches).unwrap(), &DeviceProfile::nexus5()).kind
}

#[test]
fn criterion_4_threshold_boundaries() {
    let mut checks: Vec<(&str, bool)> = Vec::new();
    let profile = DeviceProfile::nexus5();

    checks.push(("20 frames is a Tap", kind(still(20, 0.0)) == ActionKind::Tap));
    checks.push(("21 frames is a LongTap", kind(still(21, 0.0)) == ActionKind::LongTap));
    let mut faded = still(20, 0.0);
    faded.extend((20..23).map(|f| touch(f, 100.0, 100.0, Opacity::Low)));
    checks.push(("fade tail does not count toward duration", kind(faded) == ActionKind::Tap));

    checks.push(("8 px wander stays a Tap", kind(still(10, 8.0)) == ActionKind::Tap));
    checks.push(("8.01 px wander is a Gesture", kind(still(10, 8.01)) == ActionKind::Gesture));

    let confidences = [0.9, 0.69, 0.7, 0.7 - 1e-9];
    let dets: Vec<_> = confidences
        .iter()
        .enumerate()
        .map(|(i, &c)| TouchDetection { confidence: c, ..touch(i as u32, 100.0, 100.0, Opacity::High) })
        .collect();
    let trace = DetectionTrace::new(profile.clone(), 10, dets).unwrap();
    let kept: Vec<f64> = filter_confidence(&trace, MIN_CONFIDENCE).detections().iter().map(|d| d.confidence).collect();
    checks.push(("confidence 0.7 kept, below dropped", kept == [0.9, 0.7]));

    let half = identify_sfa_mfa(vec![interval_action(0, 9, 100.0), interval_action(5, 14, 600.0)], &counts_of(&[(0, 9), (5, 14)]));
    checks.push(("exactly 50% multi-touch stays single-finger", half.items.len() == 2));
    let over = identify_sfa_mfa(vec![interval_action(0, 9, 100.0), interval_action(4, 13, 600.0)], &counts_of(&[(0, 9), (4, 13)]));
    checks.push(("60% multi-touch is multi-finger", matches!(over.items.as_slice(), [ScenarioItem::Mfa(_)])));

    let run = |frames: &[u32]| {
        let dets = frames.iter().map(|&f| touch(f, 100.0, 100.0, Opacity::High)).collect();
        group_consecutive(&DetectionTrace::new(profile.clone(), 20, dets).unwrap()).len()
    };
    checks.push(("2-frame group discarded", run(&[3, 4]) == 0));
    checks.push(("3-frame group kept", run(&[3, 4, 5]) == 1));
    let actions = |span: u32| {
        let t = (0..span).map(|f| touch(f, 100.0, 100.0, Opacity::High)).collect();
        filter_actions(vec![classify_action(TouchSequence::new(t).unwrap(), &profile)]).len()
    };
    checks.push(("2-frame action filtered", actions(2) == 0));
    checks.push(("3-frame action kept", actions(3) == 1));

    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    report(
        4,
        "threshold boundaries",
        failed.is_empty(),
        &format!("{}/{} boundary checks hold {:?}", checks.len() - failed.len(), checks.len(), failed),
    );
    assert!(failed.is_empty(), "{failed:?}");
}

/// Sample spacing per contact, in microseconds, for every pair of
/// consecutive position reports.
fn sample_gaps(events: &[tapscript::InputEvent]) -> Vec<u64> {
    let mut slot = 0usize;
    let mut last: [Option<u64>; 10] = [None; 10];
    let mut gaps = Vec::new();
    for e in events {
        match (e.event_type, e.code) {
            (EV_ABS, ABS_MT_SLOT) => slot = e.value as usize,
            (EV_ABS, ABS_MT_TRACKING_ID) => last[slot] = None,
            (EV_ABS, ABS_MT_POSITION_X) => {
                if let Some(t) = last[slot] {
                    gaps.push(e.timestamp_us - t);
                }
                last[slot] = Some(e.timestamp_us);
            }
            _ => {}
        }
    }
    gaps
}

#[test]
fn criterion_5_codegen_well_formed() {
    let profile = DeviceProfile::nexus5();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let frame_us = frame_time_ms(1, profile.fps) * 1000.0;
    let mut failures: Vec<String> = Vec::new();
    let mut events_total = 0;
    for i in 0..1_000 {
        let s = random_scenario(&mut rng, &profile, &ScenarioShape::default());
        let out = synthesize_trace(&s, &NoiseModel::clean()).unwrap();
        let scenario: ClassifiedScenario = classify_trace(&out.trace, &ClassifierConfig::default());
        let script = match assemble_script(&scenario, &profile, DEFAULT_DEVICE_NODE) {
            Ok(s) => s,
            Err(e) => {
                failures.push(format!("scenario {i}: {e}"));
                continue;
            }
        };
        events_total += script.events.len();
        if let Err(e) = validate_events(&script.events, Some((profile.screen_width, profile.screen_height))) {
            failures.push(format!("scenario {i}: {e}"));
        }
        if let Some(g) = sample_gaps(&script.events).into_iter().find(|&g| (g as f64 - frame_us).abs() > 500.0) {
            failures.push(format!("scenario {i}: sample gap {g} us"));
        }
        match parse_log(&serialize_script(&script), &profile) {
            Ok(back) if back == script => {}
            _ => failures.push(format!("scenario {i}: log round trip")),
        }
        match translate_runnable(&script).map(|b| parse_runnable(&b)) {
            Ok(Ok(back)) if back == script.events => {}
            _ => failures.push(format!("scenario {i}: runnable round trip")),
        }
    }
    report(
        5,
        "codegen well-formedness",
        failures.is_empty(),
        &format!("1000 scripts, {events_total} events, {} failures {:?}", failures.len(), failures.iter().take(3).collect::<Vec<_>>()),
    );
    assert!(failures.is_empty());
}

fn random_symbols(rng: &mut ChaCha8Rng) -> Vec<Symbol> {
    const ALPHABET: [Symbol; 5] = [Symbol::Tap, Symbol::LongTap, Symbol::Gesture, Symbol::MultiFinger(2), Symbol::MultiFinger(3)];
    let len = rng.random_range(0..=12);
    (0..len).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())]).collect()
}

#[test]
fn criterion_6_metric_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    let mut axiom_failures = 0;
    for _ in 0..5_000 {
        let (a, b, c) = (random_symbols(&mut rng), random_symbols(&mut rng), random_symbols(&mut rng));
        if levenshtein(&a, &b) != common::edit_distance(&a, &b) || lcs_len(&a, &b) != common::lcs_brute(&a, &b) {
            mismatches += 1;
        }
        let d = |x: &[Symbol], y: &[Symbol]| levenshtein(x, y);
        let axioms = d(&a, &a) == 0
            && (d(&a, &b) == 0) == (a == b)
            && d(&a, &b) == d(&b, &a)
            && d(&a, &c) <= d(&a, &b) + d(&b, &c)
            && (a.is_empty() || lcs_ratio(&a, &a).unwrap() == 1.0);
        if !axioms {
            axiom_failures += 1;
        }
    }
    let pass = mismatches == 0 && axiom_failures == 0;
    report(
        6,
        "metric oracles",
        pass,
        &format!("5000 pairs, {mismatches} oracle mismatches, {axiom_failures} axiom violations"),
    );
    assert!(pass);
}

#[test]
fn criterion_7_throughput() {
    // Three minutes at 30 fps: short presses every 100 frames, about 500
    // detections in all.
    let profile = DeviceProfile::nexus5();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut actions = Vec::new();
    let mut frame = 5;
    while frame + 20 < 5_390 {
        let frames = rng.random_range(6..=9);
        let (x, y) = (rng.random_range(60.0..1000.0f64).round(), rng.random_range(60.0..1800.0f64).round());
        actions.push(GroundTruthAction::press(ActionKind::Tap, frame, frames, x, y));
        frame += 100;
    }
    let scenario = GroundTruthScenario { profile, actions };
    let noise = NoiseModel { false_positive_rate: 0.01, ..NoiseModel::clean() };
    let trace = synthesize_trace(&scenario, &noise).unwrap().trace;
    let trace = DetectionTrace::new(trace.profile().clone(), 5_400, trace.detections().to_vec()).unwrap();

    let started = Instant::now();
    let classified = classify_trace(&trace, &ClassifierConfig::default());
    let elapsed = started.elapsed();
    let pass = elapsed < Duration::from_secs(1);
    report(
        7,
        "throughput",
        pass,
        &format!(
            "{} frames, {} detections, {} actions classified in {:.1} ms",
            trace.frame_count(),
            trace.len(),
            classified.action_count(),
            elapsed.as_secs_f64() * 1000.0
        ),
    );
    assert!(pass);
}
