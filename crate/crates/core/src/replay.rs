//! Pushing a runnable script to a device and running it.
//!
//! The on-device replay agent is an external binary; the driver only copies
//! it and the script over a [`DeviceTransport`] and runs
//! `chmod 755 <agent> && <agent> <script>`.

use std::io::Write;
use std::path::PathBuf;
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codegen::{parse_runnable, validate_events};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("refusing to push an invalid script: {0}")]
    InvalidScript(String),
    #[error("cannot read replay agent {path}: {source}")]
    AgentUnreadable { path: PathBuf, source: std::io::Error },
    #[error("transport: {0}")]
    Transport(String),
    #[error("replay agent exited with status {code}: {output}")]
    NonZeroExit { code: i32, output: String },
}

/// One call made on a transport.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum TransportCall {
    Push { remote: String, bytes: usize },
    Exec { command: String },
}

/// Output of a remote command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecOutput {
    pub exit_code: i32,
    pub output: String,
}

/// A way to reach one device.
pub trait DeviceTransport {
    fn push(&mut self, bytes: &[u8], remote: &str) -> Result<(), ReplayError>;
    fn exec(&mut self, command: &str) -> Result<ExecOutput, ReplayError>;
}

/// Talks to a device through the `adb` executable.
#[derive(Debug, Clone)]
pub struct AdbTransport {
    pub adb: PathBuf,
    /// Device serial passed as `-s`; `None` lets adb pick the only device.
    pub serial: Option<String>,
    pub log: Vec<TransportCall>,
}

impl AdbTransport {
    pub fn new(adb: impl Into<PathBuf>, serial: Option<String>) -> Self {
        AdbTransport { adb: adb.into(), serial, log: Vec::new() }
    }

    fn command(&self) -> Command {
        let mut cmd = Command::new(&self.adb);
        if let Some(s) = &self.serial {
            cmd.args(["-s", s]);
        }
        cmd
    }

    fn run(&self, mut cmd: Command) -> Result<ExecOutput, ReplayError> {
        let out = cmd
            .output()
            .map_err(|e| ReplayError::Transport(format!("cannot run {}: {e}", self.adb.display())))?;
        let mut output = String::from_utf8_lossy(&out.stdout).into_owned();
        output.push_str(&String::from_utf8_lossy(&out.stderr));
        Ok(ExecOutput { exit_code: out.status.code().unwrap_or(-1), output })
    }
}

impl DeviceTransport for AdbTransport {
    fn push(&mut self, bytes: &[u8], remote: &str) -> Result<(), ReplayError> {
        self.log.push(TransportCall::Push { remote: remote.to_string(), bytes: bytes.len() });
        let mut local = tempfile::NamedTempFile::new()
            .map_err(|e| ReplayError::Transport(format!("cannot create temporary file: {e}")))?;
        local
            .write_all(bytes)
            .and_then(|_| local.flush())
            .map_err(|e| ReplayError::Transport(format!("cannot write temporary file: {e}")))?;
        let mut cmd = self.command();
        cmd.arg("push").arg(local.path()).arg(remote);
        let out = self.run(cmd)?;
        if out.exit_code != 0 {
            return Err(ReplayError::Transport(format!("adb push to {remote} failed: {}", out.output.trim())));
        }
        Ok(())
    }

    fn exec(&mut self, command: &str) -> Result<ExecOutput, ReplayError> {
        self.log.push(TransportCall::Exec { command: command.to_string() });
        let mut cmd = self.command();
        cmd.args(["shell", command]);
        self.run(cmd)
    }
}

/// In-memory transport for tests and dry runs.
///
/// Clones share the same call log, so a test can keep one handle and give
/// another to the driver.
#[derive(Debug, Clone, Default)]
pub struct MockTransport {
    calls: Arc<Mutex<Vec<TransportCall>>>,
    pub fail_push: bool,
    pub exec_result: Option<ExecOutput>,
}

impl MockTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn failing_push() -> Self {
        MockTransport { fail_push: true, ..Self::default() }
    }

    pub fn exiting_with(exit_code: i32, output: &str) -> Self {
        MockTransport { exec_result: Some(ExecOutput { exit_code, output: output.to_string() }), ..Self::default() }
    }

    pub fn calls(&self) -> Vec<TransportCall> {
        self.calls.lock().expect("mock log poisoned").clone()
    }
}

impl DeviceTransport for MockTransport {
    fn push(&mut self, bytes: &[u8], remote: &str) -> Result<(), ReplayError> {
        self.calls.lock().expect("mock log poisoned").push(TransportCall::Push { remote: remote.to_string(), bytes: bytes.len() });
        if self.fail_push {
            return Err(ReplayError::Transport(format!("push to {remote} refused")));
        }
        Ok(())
    }

    fn exec(&mut self, command: &str) -> Result<ExecOutput, ReplayError> {
        self.calls.lock().expect("mock log poisoned").push(TransportCall::Exec { command: command.to_string() });
        Ok(self.exec_result.clone().unwrap_or(ExecOutput { exit_code: 0, output: String::new() }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    /// Local path of the replay agent binary.
    pub agent_path: PathBuf,
    pub remote_dir: String,
    pub remote_agent_name: String,
    pub remote_script_name: String,
}

impl ReplayConfig {
    pub fn new(agent_path: impl Into<PathBuf>) -> Self {
        ReplayConfig {
            agent_path: agent_path.into(),
            remote_dir: "/data/local/tmp".into(),
            remote_agent_name: "replay".into(),
            remote_script_name: "script.tsr".into(),
        }
    }

    pub fn remote_agent(&self) -> String {
        format!("{}/{}", self.remote_dir.trim_end_matches('/'), self.remote_agent_name)
    }

    pub fn remote_script(&self) -> String {
        format!("{}/{}", self.remote_dir.trim_end_matches('/'), self.remote_script_name)
    }

    pub fn replay_command(&self) -> String {
        let agent = self.remote_agent();
        format!("chmod 755 {agent} && {agent} {}", self.remote_script())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub exit_code: i32,
    pub duration_ms: u64,
    pub transcript: Vec<TransportCall>,
}

/// Validates `script` (runnable format), pushes the agent and the script,
/// and runs the agent on the device.
pub fn push_and_replay(
    script: &[u8],
    transport: &mut dyn DeviceTransport,
    config: &ReplayConfig,
) -> Result<ReplayReport, ReplayError> {
    let events = parse_runnable(script).map_err(|e| ReplayError::InvalidScript(e.to_string()))?;
    validate_events(&events, None).map_err(|e| ReplayError::InvalidScript(e.to_string()))?;
    let agent = std::fs::read(&config.agent_path)
        .map_err(|source| ReplayError::AgentUnreadable { path: config.agent_path.clone(), source })?;

    let started = Instant::now();
    let mut transcript = Vec::with_capacity(3);
    let (remote_agent, remote_script, command) = (config.remote_agent(), config.remote_script(), config.replay_command());

    transcript.push(TransportCall::Push { remote: remote_agent.clone(), bytes: agent.len() });
    transport.push(&agent, &remote_agent)?;
    transcript.push(TransportCall::Push { remote: remote_script.clone(), bytes: script.len() });
    transport.push(script, &remote_script)?;
    transcript.push(TransportCall::Exec { command: command.clone() });
    let out = transport.exec(&command)?;

    if out.exit_code != 0 {
        return Err(ReplayError::NonZeroExit { code: out.exit_code, output: out.output });
    }
    Ok(ReplayReport { exit_code: 0, duration_ms: started.elapsed().as_millis() as u64, transcript })
}
