//! TOML experiment configs with errors anchored to source lines.

use std::path::Path;

use rffid::exp::ExperimentConfig;

use crate::error::{CliError, Result};

pub const REFERENCE_HEADER: &str = "\
# rffid reference configuration: every key with its default value.
# Unlisted keys fall back to these defaults; unknown keys are rejected.
";

pub fn reference_config() -> String {
    let body = toml::to_string_pretty(&ExperimentConfig::default()).expect("default config serializes");
    format!("{REFERENCE_HEADER}\n{body}")
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Line of the first `key = ...` assignment whose key is mentioned in `msg`.
fn line_for_message(src: &str, msg: &str) -> Option<usize> {
    let keys: Vec<(usize, &str)> = src
        .lines()
        .enumerate()
        .filter_map(|(i, l)| {
            let (k, _) = l.split_once('=')?;
            let k = k.trim();
            (!k.is_empty() && !k.starts_with('#')).then_some((i + 1, k))
        })
        .collect();
    msg.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| w.len() > 2)
        .find_map(|w| keys.iter().find(|(_, k)| *k == w).map(|(i, _)| *i))
}

pub fn parse_config(src: &str, path: &Path) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(src).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        line: e.span().map(|s| line_of(src, s.start)),
        msg: e.message().trim().to_string(),
    })?;
    cfg.validate().map_err(|e| {
        let msg = e.to_string();
        CliError::Config { path: path.to_path_buf(), line: line_for_message(src, &msg), msg }
    })?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let src = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    parse_config(&src, path)
}
