// SPDX-License-Identifier: MIT OR Apache-2.0

//! Run manifests.
//!
//! Every command writes a `manifest.txt` into its output directory
//! recording what produced the outputs: the command name, a hash of the
//! raw config text, library and binary versions, and the tolerances and
//! parameters that shaped the run.  Identical config text hashes
//! identically, so a manifest diff is empty exactly when two runs were
//! configured identically.

use std::fmt::Write as _;
use std::path::Path;

use volterra_rough::{Error, Result};

/// 64-bit FNV-1a over the raw config bytes.  Stable, dependency-free,
/// and sufficient for "did the config change" bookkeeping (not for
/// security).
pub fn config_hash(raw: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in raw.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Accumulates manifest lines and writes `manifest.txt`.
pub struct Manifest {
    lines: Vec<(String, String)>,
}

impl Manifest {
    /// Starts a manifest for `command` configured by `raw` config text.
    pub fn new(command: &str, raw: &str) -> Manifest {
        let mut m = Manifest { lines: Vec::new() };
        m.put("manifest_version", "1");
        m.put("command", command);
        m.put("config_hash", format!("{:016x}", config_hash(raw)));
        m.put("library", format!("volterra-rough {}", volterra_rough::VERSION));
        m.put("cli", format!("volterra-cli {}", env!("CARGO_PKG_VERSION")));
        m
    }

    /// Adds a key-value line.
    pub fn put(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    /// Renders the manifest text.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.lines {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Writes `manifest.txt` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(Error::Io)?;
        std::fs::write(dir.join("manifest.txt"), self.render()).map_err(Error::Io)
    }
}
