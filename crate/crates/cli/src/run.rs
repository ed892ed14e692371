//! Output staging and run manifests.
//!
//! Every experiment writes into `<out>/.staging` first. On success the files
//! are moved into `<out>` next to `manifest.json`; on failure the staging
//! area is dropped and `<out>/.failed` records the error.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FAILED_MARKER: &str = ".failed";
const STAGING_DIR: &str = ".staging";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub label: String,
    pub secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Effective arguments after config-file merging; enough to rerun.
    pub argv: Vec<String>,
    /// Resolved options of the subcommand.
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    /// Input path to sha256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub code_version: String,
    pub runtime_secs: f64,
    /// Wall-clock time of individual runs. Kept here rather than in the
    /// result CSVs so those stay reproducible.
    pub timings: Vec<Timing>,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
}

pub fn code_version() -> String {
    match option_env!("BPU_GIT_REV") {
        Some(rev) => format!("{} ({rev})", env!("CARGO_PKG_VERSION")),
        None => env!("CARGO_PKG_VERSION").to_string(),
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = f.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

pub struct RunContext {
    command: String,
    argv: Vec<String>,
    config: serde_json::Value,
    out: PathBuf,
    staging: PathBuf,
    seeds: Vec<u64>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    timings: Vec<Timing>,
    start: Instant,
}

impl RunContext {
    pub fn begin(command: &str, argv: Vec<String>, config: serde_json::Value, out: &Path) -> Result<Self> {
        let staging = out.join(STAGING_DIR);
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| CliError::io(&staging, e))?;
        }
        fs::create_dir_all(&staging).map_err(|e| CliError::io(&staging, e))?;
        Ok(RunContext {
            command: command.to_string(),
            argv,
            config,
            out: out.to_path_buf(),
            staging,
            seeds: Vec::new(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            timings: Vec::new(),
            start: Instant::now(),
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn seeds(&mut self, seeds: &[u64]) {
        self.seeds.extend_from_slice(seeds);
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let digest = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn time(&mut self, label: impl Into<String>, secs: f64) {
        self.timings.push(Timing { label: label.into(), secs });
    }

    /// Staging path for output `name`, registered for commit.
    pub fn output(&mut self, name: &str) -> Result<PathBuf> {
        let path = self.staging.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        Ok(path)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.output(name)?;
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
    }

    /// Writes `rows` after the rows already in `<out>/name`, or after
    /// `header` when the file does not exist yet.
    pub fn append(&mut self, name: &str, header: &str, rows: &str) -> Result<()> {
        let existing = self.out.join(name);
        let mut body = if existing.exists() {
            let old = fs::read_to_string(&existing).map_err(|e| CliError::io(&existing, e))?;
            if old.lines().next() != Some(header.trim_end()) {
                return Err(CliError::Data(format!(
                    "{} has a different header; refusing to append",
                    existing.display()
                )));
            }
            old
        } else {
            header.to_string()
        };
        if !body.ends_with('\n') {
            body.push('\n');
        }
        body.push_str(rows);
        self.write(name, body)
    }

    pub fn commit(self) -> Result<RunManifest> {
        for name in &self.outputs {
            let (from, to) = (self.staging.join(name), self.out.join(name));
            if let Some(parent) = to.parent() {
                fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
            }
            fs::rename(&from, &to).map_err(|e| CliError::io(&from, e))?;
        }
        let manifest = RunManifest {
            command: self.command,
            argv: self.argv,
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs,
            code_version: code_version(),
            runtime_secs: self.start.elapsed().as_secs_f64(),
            timings: self.timings,
            outputs: self.outputs,
        };
        let path = self.out.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?;
        let _ = fs::remove_dir_all(&self.staging);
        let _ = fs::remove_file(self.out.join(FAILED_MARKER));
        Ok(manifest)
    }

    /// Drops staged files and leaves a `.failed` marker.
    pub fn fail(self, err: &CliError) {
        let _ = fs::remove_dir_all(&self.staging);
        let marker = format!("command: {}\nargv: {}\nerror: {err}\n", self.command, self.argv.join(" "));
        if let Err(e) = fs::write(self.out.join(FAILED_MARKER), marker) {
            log::error!("could not write failure marker in {}: {e}", self.out.display());
        }
    }
}

pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: bad manifest: {e}", path.display())))
}

/// Inputs whose current digest differs from the manifest.
pub fn changed_inputs(m: &RunManifest) -> Result<Vec<String>> {
    let mut changed = Vec::new();
    for (path, digest) in &m.inputs {
        if &sha256_file(Path::new(path))? != digest {
            changed.push(path.clone());
        }
    }
    Ok(changed)
}

/// CSV outputs of `m` that differ between two output directories.
pub fn differing_csvs(m: &RunManifest, a: &Path, b: &Path) -> Vec<String> {
    m.outputs
        .iter()
        .filter(|o| o.ends_with(".csv"))
        .filter(|o| match (fs::read(a.join(o)), fs::read(b.join(o))) {
            (Ok(x), Ok(y)) => x != y,
            _ => true,
        })
        .cloned()
        .collect()
}
