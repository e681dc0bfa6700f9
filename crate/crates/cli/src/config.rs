//! Configuration file and its merge with command-line flags.
//!
//! Values are resolved in this order, first hit wins: command-line flag,
//! environment variable (only `TAPSCRIPT_ADB` and `TAPSCRIPT_OUT_DIR`),
//! configuration file, built-in default.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use tapscript::synth::NoiseModel;
use tapscript::trace::{DeviceProfile, TapCutoff};

use crate::CliError;

/// A device given by preset name or spelled out.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum DeviceSpec {
    Preset(String),
    Profile(DeviceProfile),
}

impl DeviceSpec {
    pub fn resolve(&self) -> Result<DeviceProfile, CliError> {
        match self {
            DeviceSpec::Preset(name) => DeviceProfile::preset(name)
                .ok_or_else(|| CliError::config(format!("unknown device profile {name:?} (known: nexus5, nexus6p)"))),
            DeviceSpec::Profile(p) => {
                p.validate().map_err(|e| CliError::config(format!("device profile: {e}")))?;
                Ok(p.clone())
            }
        }
    }
}

/// Contents of the JSON configuration file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub device: Option<DeviceSpec>,
    pub adb: Option<PathBuf>,
    pub agent: Option<PathBuf>,
    pub remote_dir: Option<String>,
    pub device_node: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub noise: Option<String>,
    pub seed: Option<u64>,
    pub extended: Option<bool>,
    pub tap_cutoff: Option<TapCutoff>,
    pub min_confidence: Option<f64>,
    pub jobs: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("config {}: {e}", path.display())))
    }
}

/// Flags that can override the file. `None` means not given.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub device: Option<String>,
    pub adb: Option<PathBuf>,
    pub agent: Option<PathBuf>,
    pub remote_dir: Option<String>,
    pub device_node: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub noise: Option<String>,
    pub seed: Option<u64>,
    pub extended: bool,
    pub duration_cutoff: bool,
    pub min_confidence: Option<f64>,
    pub jobs: Option<usize>,
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub device: DeviceProfile,
    pub adb: PathBuf,
    pub agent: Option<PathBuf>,
    pub remote_dir: String,
    pub device_node: String,
    pub out_dir: PathBuf,
    pub noise_name: String,
    pub noise: NoiseModel,
    pub extended: bool,
    pub tap_cutoff: Option<TapCutoff>,
    pub min_confidence: f64,
    pub jobs: usize,
}

impl Config {
    pub fn resolve(file: ConfigFile, flags: Overrides) -> Result<Self, CliError> {
        let device = match flags.device.map(DeviceSpec::Preset).or(file.device) {
            Some(spec) => spec.resolve()?,
            None => DeviceProfile::nexus5(),
        };
        let noise_name = flags.noise.or(file.noise).unwrap_or_else(|| "clean".into());
        let seed = flags.seed.or(file.seed).unwrap_or(0);
        let noise = NoiseModel::preset(&noise_name)
            .ok_or_else(|| CliError::config(format!("unknown noise preset {noise_name:?} (known: clean, physical-device, emulator)")))?
            .with_seed(seed);
        let min_confidence = flags.min_confidence.or(file.min_confidence).unwrap_or(tapscript::segment::MIN_CONFIDENCE);
        if !(0.0..=1.0).contains(&min_confidence) {
            return Err(CliError::config(format!("min_confidence {min_confidence} outside [0, 1]")));
        }
        let jobs = flags.jobs.or(file.jobs).unwrap_or(0);
        let tap_cutoff = if flags.duration_cutoff { Some(TapCutoff::Duration) } else { file.tap_cutoff };
        Ok(Config {
            device,
            adb: flags.adb.or(file.adb).unwrap_or_else(|| "adb".into()),
            agent: flags.agent.or(file.agent),
            remote_dir: flags.remote_dir.or(file.remote_dir).unwrap_or_else(|| "/data/local/tmp".into()),
            device_node: flags
                .device_node
                .or(file.device_node)
                .unwrap_or_else(|| tapscript::codegen::DEFAULT_DEVICE_NODE.into()),
            out_dir: flags.out_dir.or(file.out_dir).unwrap_or_else(|| "out".into()),
            noise_name,
            noise,
            extended: flags.extended || file.extended.unwrap_or(false),
            tap_cutoff,
            min_confidence,
            jobs,
        })
    }

    /// Applies profile-level overrides to a profile read from an input file.
    pub fn adjust_profile(&self, profile: &mut DeviceProfile) {
        if let Some(cutoff) = self.tap_cutoff {
            profile.tap_cutoff = cutoff;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = Config::resolve(ConfigFile::default(), Overrides::default()).unwrap();
        assert_eq!(c.device, DeviceProfile::nexus5());
        assert_eq!(c.adb, PathBuf::from("adb"));
        assert_eq!(c.out_dir, PathBuf::from("out"));
        assert_eq!(c.noise, NoiseModel::clean());
        assert!(!c.extended);
    }

    #[test]
    fn flags_beat_file() {
        let file: ConfigFile = serde_json::from_str(
            r#"{"device": "nexus6p", "out_dir": "from-file", "noise": "emulator", "seed": 3, "extended": true}"#,
        )
        .unwrap();
        let flags = Overrides { out_dir: Some("from-flag".into()), seed: Some(9), ..Overrides::default() };
        let c = Config::resolve(file, flags).unwrap();
        assert_eq!(c.device.name, "nexus6p");
        assert_eq!(c.out_dir, PathBuf::from("from-flag"));
        assert_eq!(c.noise, NoiseModel::emulator().with_seed(9));
        assert!(c.extended);
    }

    #[test]
    fn inline_device() {
        let file: ConfigFile =
            serde_json::from_str(r#"{"device": {"name": "tablet", "width": 1600, "height": 2560, "fps": 60}}"#).unwrap();
        let c = Config::resolve(file, Overrides::default()).unwrap();
        assert_eq!((c.device.screen_width, c.device.fps), (1600, 60));
    }

    #[test]
    fn rejects_bad_values() {
        let bad = |json: &str| {
            let file: ConfigFile = serde_json::from_str(json).unwrap();
            Config::resolve(file, Overrides::default()).is_err()
        };
        assert!(bad(r#"{"device": "pixel"}"#));
        assert!(bad(r#"{"noise": "loud"}"#));
        assert!(bad(r#"{"min_confidence": 1.5}"#));
        assert!(bad(r#"{"device": {"name": "slow", "width": 10, "height": 10, "fps": 15}}"#));
        assert!(serde_json::from_str::<ConfigFile>(r#"{"colour": 1}"#).is_err());
    }
}
