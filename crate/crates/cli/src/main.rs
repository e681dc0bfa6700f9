use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::{Config, ConfigFile, Overrides};

/// Compile touch detection traces into replayable input scripts.
///
/// Exit status: 0 on success, 1 when a stage fails at run time, 2 for bad
/// input files or configuration.
#[derive(Debug, Parser)]
#[command(name = "tapscript", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for all written artifacts [default: out]
    #[arg(long, global = true, env = "TAPSCRIPT_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Path of the adb executable [default: adb]
    #[arg(long, global = true, env = "TAPSCRIPT_ADB")]
    adb: Option<PathBuf>,
    /// Device profile preset used when an input does not name one (nexus5, nexus6p).
    #[arg(long, global = true)]
    profile: Option<String>,
    /// Write multi-finger actions as G<n> instead of G.
    #[arg(long, global = true)]
    extended: bool,
    /// Use the 667 ms Tap cutoff instead of the 20-frame one.
    #[arg(long, global = true)]
    duration_cutoff: bool,
    /// Detections below this confidence are ignored [default: 0.7]
    #[arg(long, global = true)]
    min_confidence: Option<f64>,
    /// Worker threads for batch inputs [default: one per core]
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct DeviceArgs {
    /// Replay agent binary to push to the device.
    #[arg(long)]
    agent: Option<PathBuf>,
    /// Directory on the device that receives the agent and script [default: /data/local/tmp]
    #[arg(long)]
    remote_dir: Option<String>,
    /// Print what would be pushed and run without touching a device.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Detection trace JSON -> classified scenario JSON and predicted.seq.
    Classify {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
    },
    /// Classified scenario JSON -> <id>.log and <id>.tsr scripts.
    Generate {
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        /// Input device node written into the log [default: /dev/input/event1]
        #[arg(long)]
        device_node: Option<String>,
    },
    /// Push a runnable script to a device and run it.
    Replay {
        script: PathBuf,
        /// Serial of the target device, passed to adb -s.
        #[arg(long)]
        device: Option<String>,
        #[command(flatten)]
        target: DeviceArgs,
    },
    /// Scenario fixtures (or random scenarios) -> detection traces and truth.seq.
    Synthesize {
        fixtures: Vec<PathBuf>,
        /// Generate this many random scenarios instead of reading fixtures.
        #[arg(long, conflicts_with = "fixtures")]
        random: Option<usize>,
        /// Noise preset: clean, physical-device or emulator [default: clean]
        #[arg(long)]
        noise: Option<String>,
        /// Seed for scenario generation and noise [default: 0]
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score predicted sequences against ground truth and write report.json.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// classify then generate, then replay when --device or --dry-run is given.
    Pipeline {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Serial of the target device; replays every script on it.
        #[arg(long)]
        device: Option<String>,
        /// Input device node written into the log [default: /dev/input/event1]
        #[arg(long)]
        device_node: Option<String>,
        #[command(flatten)]
        target: DeviceArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input file or configuration.
    Input,
    /// A stage failed on valid input.
    Runtime,
}

#[derive(Debug)]
pub struct CliError {
    pub stage: &'static str,
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { stage: "config", kind: ErrorKind::Input, message: message.into() }
    }

    pub fn input(stage: &'static str, message: impl fmt::Display) -> Self {
        CliError { stage, kind: ErrorKind::Input, message: message.to_string() }
    }

    pub fn runtime(stage: &'static str, message: impl fmt::Display) -> Self {
        CliError { stage, kind: ErrorKind::Runtime, message: message.to_string() }
    }

    fn exit_code(&self) -> ExitCode {
        match self.kind {
            ErrorKind::Input => ExitCode::from(2),
            ErrorKind::Runtime => ExitCode::from(1),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.message)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = cli.global;
    let file = match &g.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let mut flags = Overrides {
        device: g.profile,
        adb: g.adb,
        out_dir: g.out_dir,
        extended: g.extended,
        duration_cutoff: g.duration_cutoff,
        min_confidence: g.min_confidence,
        jobs: g.jobs,
        ..Overrides::default()
    };
    let target_flags = |t: &DeviceArgs, flags: &mut Overrides| {
        flags.agent = t.agent.clone();
        flags.remote_dir = t.remote_dir.clone();
    };
    match &cli.command {
        Command::Generate { device_node, .. } => flags.device_node = device_node.clone(),
        Command::Replay { target, .. } => target_flags(target, &mut flags),
        Command::Pipeline { target, device_node, .. } => {
            target_flags(target, &mut flags);
            flags.device_node = device_node.clone();
        }
        Command::Synthesize { noise, seed, .. } => {
            flags.noise = noise.clone();
            flags.seed = *seed;
        }
        _ => {}
    }
    let config = Config::resolve(file, flags)?;

    match cli.command {
        Command::Classify { traces } => commands::classify(&config, &traces).map(|_| ()),
        Command::Generate { scenarios, .. } => commands::generate(&config, &scenarios).map(|_| ()),
        Command::Replay { script, device, target } => commands::replay(&config, &script, device, target.dry_run),
        Command::Synthesize { fixtures, random, .. } => commands::synthesize(&config, &fixtures, random),
        Command::Evaluate { pred, truth, json } => commands::evaluate(&config, &pred, &truth, json),
        Command::Pipeline { traces, device, target, .. } => commands::pipeline(&config, &traces, device, target.dry_run),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
