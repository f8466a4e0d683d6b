use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to rerun a command and get the same bytes out.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub inputs: Vec<InputFile>,
    pub config_paths: Vec<PathBuf>,
    pub seeds: Vec<u64>,
    pub model_paths: Vec<PathBuf>,
    pub output: PathBuf,
    pub strategies: Vec<String>,
    pub feature_mode: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str, output: &Path) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            argv: std::env::args().collect(),
            inputs: Vec::new(),
            config_paths: Vec::new(),
            seeds: Vec::new(),
            model_paths: Vec::new(),
            output: absolute(output),
            strategies: Vec::new(),
            feature_mode: None,
        }
    }

    /// Hashes a file, or every file below a directory in sorted order.
    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let mut files = Vec::new();
        collect(path, &mut files)?;
        for f in files {
            let bytes = fs::read(&f)?;
            self.inputs.push(InputFile {
                sha256: hex::encode(Sha256::digest(&bytes)),
                path: f,
            });
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).map_err(selqa_core::Error::from)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

fn collect(path: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
        entries.sort();
        for e in entries {
            collect(&e, out)?;
        }
    } else {
        out.push(absolute(path));
    }
    Ok(())
}

pub fn absolute(p: &Path) -> PathBuf {
    fs::canonicalize(p).unwrap_or_else(|_| std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf()))
}
