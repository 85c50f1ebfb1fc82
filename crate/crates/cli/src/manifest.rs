//! Per-run record of inputs, outputs and settings.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn digest(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path).with_context(|| format!("{}", path.display()))?;
    Ok(FileDigest {
        path: path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned()),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

/// Tracks the files a subcommand reads and writes.
#[derive(Debug)]
pub struct Run {
    pub subcommand: &'static str,
    pub out_dir: PathBuf,
    overwrite: bool,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run {
    pub fn new(subcommand: &'static str, out_dir: &Path, overwrite: bool) -> Result<Self> {
        fs::create_dir_all(out_dir).with_context(|| format!("{}", out_dir.display()))?;
        Ok(Self {
            subcommand,
            out_dir: out_dir.to_path_buf(),
            overwrite,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    /// Registers an input; fails with the path if it is missing.
    pub fn input(&mut self, path: PathBuf) -> Result<PathBuf> {
        if !path.is_file() {
            bail!("missing input file {}", path.display());
        }
        self.inputs.push(path.clone());
        Ok(path)
    }

    /// Registers an output under the output directory; refuses to replace an
    /// existing file unless overwriting was requested.
    pub fn output(&mut self, name: &str) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        if path.exists() && !self.overwrite && !self.outputs.contains(&path) {
            bail!("{} already exists (pass --overwrite to replace it)", path.display());
        }
        if !self.outputs.contains(&path) {
            self.outputs.push(path.clone());
        }
        Ok(path)
    }

    /// Writes `manifest-<subcommand>.json` via a temporary file and rename.
    pub fn finish(self, config_hash: &str, seed: Option<u64>) -> Result<PathBuf> {
        let manifest = RunManifest {
            subcommand: self.subcommand.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash.to_string(),
            seed,
            inputs: self.inputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            outputs: self.outputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
        };
        let path = self.out_dir.join(format!("manifest-{}.json", self.subcommand));
        let tmp = self.out_dir.join(format!(".manifest-{}.json.tmp", self.subcommand));
        fs::write(&tmp, serde_json::to_string_pretty(&manifest)? + "\n").with_context(|| format!("{}", tmp.display()))?;
        fs::rename(&tmp, &path).with_context(|| format!("{}", path.display()))?;
        Ok(path)
    }
}
