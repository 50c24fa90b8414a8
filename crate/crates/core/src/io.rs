//! CSV output with a provenance header.
//!
//! Every file starts with `#` comment lines naming the crate version, the
//! command that produced it and the fully resolved run configuration as
//! pretty-printed JSON. Nothing time- or host-dependent is written, so
//! identical runs produce byte-identical files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::RunConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// The `#` comment block placed at the top of every CSV.
pub fn header_block(command: &str, config: &RunConfig) -> String {
    let mut s = format!("# hubbard-quench {VERSION}\n# command: {command}\n# config:\n");
    for line in config.to_json_pretty().lines() {
        s.push_str("# ");
        s.push_str(line);
        s.push('\n');
    }
    s
}

/// Writes `header_block` followed by whatever `body` emits, creating parent
/// directories as needed.
pub fn write_csv(
    path: &Path,
    command: &str,
    config: &RunConfig,
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(header_block(command, config).as_bytes())?;
    body(&mut out)?;
    out.flush()
}

/// Strips the comment block, leaving the CSV header and rows.
pub fn strip_header(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect()
}

/// Recovers the run configuration from a file's header block.
pub fn read_header_config(text: &str) -> Option<RunConfig> {
    let mut json = String::new();
    let mut in_config = false;
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let body = line.strip_prefix("# ").unwrap_or(line.trim_start_matches('#'));
        if in_config {
            json.push_str(body);
            json.push('\n');
        } else if body == "config:" {
            in_config = true;
        }
    }
    RunConfig::from_json(&json).ok()
}

/// Compact, filesystem-safe rendering of a grid value for file names.
pub fn tag(value: f64) -> String {
    format!("{value}").replace('-', "m").replace('.', "p")
}

pub fn output_path(config: &RunConfig, name: &str) -> PathBuf {
    config.output_dir.join(name)
}
