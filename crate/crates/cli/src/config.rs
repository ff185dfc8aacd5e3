//! Config file layering. The file is TOML with optional `[train]` and
//! `[synth]` tables whose keys mirror [`TrainConfig`] and [`SynthConfig`];
//! absent keys keep their defaults, unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};
use trackagg::{SynthConfig, TrainConfig};

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub train: TrainConfig,
    pub synth: SynthConfig,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    require_file(path, "config file")?;
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(CliError::runtime)?;
    parse(&text).with_context(|| format!("config file {}", path.display())).map_err(CliError::usage)
}

pub fn parse(text: &str) -> anyhow::Result<FileConfig> {
    Ok(toml::from_str(text)?)
}

/// Usage error naming `path` when it is not an existing file.
pub fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(anyhow!("{what} not found: {}", path.display())))
    }
}

pub fn prepare_out(dir: &Path) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating run directory {}", dir.display()))
        .map_err(CliError::runtime)?;
    Ok(dir.to_path_buf())
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = toml::to_string_pretty(value).map_err(CliError::runtime)?;
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::runtime)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::runtime)?;
    text.push('\n');
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::runtime)
}
