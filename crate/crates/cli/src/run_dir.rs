//! Output directory bookkeeping: resolved config, checksum manifest and a
//! timestamped log kept apart from the reproducible outputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use langdaug::io::{file_sha256, write_json};
use langdaug::{Error, Result};

use crate::config::ExperimentConfig;

pub const RESOLVED_CONFIG: &str = "config.resolved.json";
pub const MANIFEST: &str = "manifest.json";
pub const RUN_LOG: &str = "run.log";

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    inputs: &'a BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

pub struct RunDir {
    pub root: PathBuf,
    pub dir: PathBuf,
    command: String,
    inputs: BTreeMap<String, String>,
    outputs: Vec<PathBuf>,
}

impl RunDir {
    pub fn create(root: &Path, command: &str, config: &ExperimentConfig) -> Result<Self> {
        let dir = root.join(command);
        fs::create_dir_all(&dir)?;
        write_json(&dir.join(RESOLVED_CONFIG), config)?;
        let run = Self {
            root: root.to_path_buf(),
            dir,
            command: command.to_string(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        };
        run.log(&format!("start {command}"))?;
        Ok(run)
    }

    fn rel(&self, path: &Path) -> String {
        path.strip_prefix(&self.root).unwrap_or(path).to_string_lossy().replace('\\', "/")
    }

    /// Record an upstream file; a missing one is reported by name.
    pub fn input(&mut self, path: &Path) -> Result<PathBuf> {
        if !path.is_file() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let key = self.rel(path);
        self.inputs.insert(key, file_sha256(path)?);
        Ok(path.to_path_buf())
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(p) = path.parent() {
            fs::create_dir_all(p)?;
        }
        fs::write(&path, contents)?;
        self.outputs.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.dir.join(name);
        write_json(&path, value)?;
        self.outputs.push(path.clone());
        Ok(path)
    }

    /// Register files written by library code.
    pub fn output(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    pub fn log(&self, msg: &str) -> Result<()> {
        let t = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
        let mut f = fs::OpenOptions::new().create(true).append(true).open(self.dir.join(RUN_LOG))?;
        writeln!(f, "[{t:.3}] {msg}")?;
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        let mut outputs = BTreeMap::new();
        for p in &self.outputs {
            outputs.insert(self.rel(p), file_sha256(p)?);
        }
        write_json(
            &self.dir.join(MANIFEST),
            &Manifest {
                command: &self.command,
                inputs: &self.inputs,
                outputs,
            },
        )?;
        self.log("done")
    }
}
