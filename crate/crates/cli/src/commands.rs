use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use tapscript::classify::{classify_trace, parse_scenario, serialize_scenario, ClassifierConfig};
use tapscript::codegen::{assemble_script, serialize_script, translate_runnable, CodegenError};
use tapscript::eval::{evaluate_batch, format_sequence_file, parse_sequence_file, ActionTypeSequence};
use tapscript::replay::{push_and_replay, AdbTransport, ReplayConfig, ReplayError};
use tapscript::synth::{
    parse_scenario_fixture, random_scenario, serialize_scenario_fixture, synthesize_trace, GroundTruthScenario,
    ScenarioShape, SynthError,
};
use tapscript::trace::parse_trace;

use crate::config::Config;
use crate::CliError;

const KNOWN_SUFFIXES: [&str; 7] = [".trace.json", ".scenario.json", ".fixture.json", ".json", ".tsr", ".log", ".seq"];

/// Artifact id of an input file: its name without a known suffix.
pub fn artifact_id(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    KNOWN_SUFFIXES
        .iter()
        .find_map(|s| name.strip_suffix(s).filter(|rest| !rest.is_empty()))
        .unwrap_or(&name)
        .to_string()
}

fn read(stage: &'static str, path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::input(stage, format!("cannot read {}: {e}", path.display())))
}

fn write(stage: &'static str, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::runtime(stage, format!("cannot write {}: {e}", path.display())))
}

fn out_dir<'a>(config: &'a Config, stage: &'static str) -> Result<&'a Path, CliError> {
    fs::create_dir_all(&config.out_dir)
        .map_err(|e| CliError::runtime(stage, format!("cannot create {}: {e}", config.out_dir.display())))?;
    Ok(&config.out_dir)
}

/// Runs `f` over `items` on the configured worker pool, keeping input order.
fn batch<T: Sync, R: Send>(
    config: &Config,
    items: &[T],
    f: impl Fn(&T) -> Result<R, CliError> + Sync + Send,
) -> Result<Vec<R>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| CliError::runtime("batch", e))?;
    pool.install(|| items.par_iter().map(f).collect::<Vec<_>>()).into_iter().collect()
}

fn path_error(path: &Path, e: impl std::fmt::Display) -> String {
    format!("{}: {e}", path.display())
}

/// Classifies every trace; returns the written scenario paths.
pub fn classify(config: &Config, traces: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    const STAGE: &str = "classify";
    let dir = out_dir(config, STAGE)?.to_path_buf();
    let classifier = ClassifierConfig { min_confidence: config.min_confidence };
    let results = batch(config, traces, |path| {
        let mut trace = parse_trace(&read(STAGE, path)?).map_err(|e| CliError::input(STAGE, path_error(path, e)))?;
        if config.tap_cutoff.is_some() {
            let mut profile = trace.profile().clone();
            config.adjust_profile(&mut profile);
            trace = tapscript::DetectionTrace::new(profile, trace.frame_count(), trace.detections().to_vec())
                .map_err(|e| CliError::input(STAGE, path_error(path, e)))?;
        }
        let scenario = classify_trace(&trace, &classifier);
        let id = artifact_id(path);
        let out = dir.join(format!("{id}.scenario.json"));
        write(STAGE, &out, &serialize_scenario(&scenario, trace.profile()))?;
        Ok((id, scenario.symbols(config.extended), out))
    })?;
    let seq = format_sequence_file(results.iter().map(|(id, s, _)| (id.as_str(), s)));
    write(STAGE, &dir.join("predicted.seq"), seq.as_bytes())?;
    for (id, s, _) in &results {
        println!("{id} {s}");
    }
    Ok(results.into_iter().map(|r| r.2).collect())
}

/// Compiles every scenario; returns the written runnable script paths.
pub fn generate(config: &Config, scenarios: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    const STAGE: &str = "generate";
    let dir = out_dir(config, STAGE)?.to_path_buf();
    batch(config, scenarios, |path| {
        let (scenario, profile) =
            parse_scenario(&read(STAGE, path)?).map_err(|e| CliError::input(STAGE, path_error(path, e)))?;
        let script = assemble_script(&scenario, &profile, &config.device_node)
            .map_err(|e| CliError::runtime(STAGE, path_error(path, e)))?;
        let runnable = translate_runnable(&script).map_err(|e| match e {
            CodegenError::DeltaOverflow(_) => CliError::runtime(STAGE, path_error(path, e)),
            e => CliError::runtime(STAGE, path_error(path, e)),
        })?;
        let id = artifact_id(path);
        write(STAGE, &dir.join(format!("{id}.log")), &serialize_script(&script))?;
        let out = dir.join(format!("{id}.tsr"));
        write(STAGE, &out, &runnable)?;
        println!("{id}: {} events", script.events.len());
        Ok(out)
    })
}

fn replay_config(config: &Config, stage: &'static str) -> Result<ReplayConfig, CliError> {
    let agent = config
        .agent
        .clone()
        .ok_or_else(|| CliError::input(stage, "no replay agent configured (use --agent or \"agent\" in the config)"))?;
    let mut rc = ReplayConfig::new(agent);
    rc.remote_dir = config.remote_dir.clone();
    Ok(rc)
}

fn replay_one(config: &Config, script: &Path, serial: Option<String>, dry_run: bool) -> Result<(), CliError> {
    const STAGE: &str = "replay";
    let rc = replay_config(config, STAGE)?;
    let bytes = read(STAGE, script)?;
    if dry_run {
        let events = tapscript::codegen::parse_runnable(&bytes).map_err(|e| CliError::input(STAGE, path_error(script, e)))?;
        tapscript::codegen::validate_events(&events, None).map_err(|e| CliError::input(STAGE, path_error(script, e)))?;
        if !rc.agent_path.is_file() {
            return Err(CliError::input(STAGE, format!("replay agent {} not found", rc.agent_path.display())));
        }
        let adb = config.adb.display();
        let s = serial.map(|s| format!(" -s {s}")).unwrap_or_default();
        println!("{adb}{s} push {} {}", rc.agent_path.display(), rc.remote_agent());
        println!("{adb}{s} push {} {}", script.display(), rc.remote_script());
        println!("{adb}{s} shell {}", rc.replay_command());
        return Ok(());
    }
    let mut transport = AdbTransport::new(&config.adb, serial);
    let result = push_and_replay(&bytes, &mut transport, &rc);
    for call in &transport.log {
        eprintln!("adb: {}", serde_json::to_string(call).expect("transport calls serialize"));
    }
    let report = result.map_err(|e| match e {
        ReplayError::InvalidScript(_) | ReplayError::AgentUnreadable { .. } => CliError::input(STAGE, e),
        ReplayError::Transport(_) | ReplayError::NonZeroExit { .. } => CliError::runtime(STAGE, e),
    })?;
    println!("{}", serde_json::to_string_pretty(&report).expect("reports serialize"));
    Ok(())
}

pub fn replay(config: &Config, script: &Path, serial: Option<String>, dry_run: bool) -> Result<(), CliError> {
    replay_one(config, script, serial, dry_run)
}

pub fn synthesize(config: &Config, fixtures: &[PathBuf], random: Option<usize>) -> Result<(), CliError> {
    const STAGE: &str = "synthesize";
    let dir = out_dir(config, STAGE)?.to_path_buf();
    let scenarios: Vec<(String, GroundTruthScenario)> = match random {
        Some(n) => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.noise.rng_seed);
            let mut device = config.device.clone();
            config.adjust_profile(&mut device);
            let shape = ScenarioShape::default();
            let generated: Vec<_> =
                (0..n).map(|i| (format!("scenario-{i:03}"), random_scenario(&mut rng, &device, &shape))).collect();
            for (id, s) in &generated {
                write(STAGE, &dir.join(format!("{id}.fixture.json")), &serialize_scenario_fixture(s))?;
            }
            generated
        }
        None if fixtures.is_empty() => {
            return Err(CliError::input(STAGE, "give scenario fixture files or --random <count>"));
        }
        None => fixtures
            .iter()
            .map(|path| {
                let s = parse_scenario_fixture(&read(STAGE, path)?).map_err(|e| CliError::input(STAGE, path_error(path, e)))?;
                Ok((artifact_id(path), s))
            })
            .collect::<Result<_, CliError>>()?,
    };

    let truths = batch(config, &scenarios.iter().enumerate().collect::<Vec<_>>(), |(i, (id, scenario))| {
        let noise = config.noise.clone().with_seed(config.noise.rng_seed.wrapping_add(*i as u64));
        let out = synthesize_trace(scenario, &noise).map_err(|e| match e {
            SynthError::InvalidScenario(_) | SynthError::InvalidNoise(_) => CliError::input(STAGE, format!("{id}: {e}")),
            SynthError::Trace(_) => CliError::runtime(STAGE, format!("{id}: {e}")),
        })?;
        write(STAGE, &dir.join(format!("{id}.trace.json")), &tapscript::trace::serialize_trace(&out.trace))?;
        let truth = if config.extended { out.truth } else { out.truth.to_base() };
        Ok((id.clone(), truth))
    })?;
    let text = format_sequence_file(truths.iter().map(|(id, s)| (id.as_str(), s)));
    write(STAGE, &dir.join("truth.seq"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

pub fn evaluate(config: &Config, pred: &Path, truth: &Path, json: bool) -> Result<(), CliError> {
    const STAGE: &str = "evaluate";
    let load = |path: &Path| -> Result<Vec<(String, ActionTypeSequence)>, CliError> {
        let text = String::from_utf8(read(STAGE, path)?)
            .map_err(|e| CliError::input(STAGE, path_error(path, e)))?;
        parse_sequence_file(&text).map_err(|e| CliError::input(STAGE, path_error(path, e)))
    };
    let (pred, truth) = (load(pred)?, load(truth)?);
    let mut pairs = Vec::with_capacity(truth.len());
    for (id, t) in &truth {
        let p = pred
            .iter()
            .find(|(pid, _)| pid == id)
            .ok_or_else(|| CliError::input(STAGE, format!("no prediction for {id}")))?;
        pairs.push((id.as_str(), &p.1, t));
    }
    let report = evaluate_batch(pairs).map_err(|e| CliError::input(STAGE, e))?;
    let body = serde_json::to_string_pretty(&report).expect("reports serialize");
    let dir = out_dir(config, STAGE)?;
    write(STAGE, &dir.join("report.json"), body.as_bytes())?;
    if json {
        println!("{body}");
    } else {
        print!("{}", report.to_table());
    }
    Ok(())
}

pub fn pipeline(config: &Config, traces: &[PathBuf], serial: Option<String>, dry_run: bool) -> Result<(), CliError> {
    let scenarios = classify(config, traces)?;
    let scripts = generate(config, &scenarios)?;
    if serial.is_some() || dry_run {
        for script in &scripts {
            replay_one(config, script, serial.clone(), dry_run)?;
        }
    }
    Ok(())
}
