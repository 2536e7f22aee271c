//! Provenance header and output emission.

use std::fs;
use std::io::Write;
use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;

pub const TOOL: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
}

impl Provenance {
    /// `config` is the fully resolved command configuration; its JSON form
    /// is hashed.
    pub fn new(command: &str, config: &impl Serialize, seed: Option<u64>) -> Self {
        let json = serde_json::to_string(config).expect("configs serialize");
        let digest = Sha256::digest(json.as_bytes());
        Self {
            tool: TOOL.to_string(),
            command: command.to_string(),
            config_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            seed,
        }
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("tool", self.tool.clone()),
            ("command", self.command.clone()),
            ("config_sha256", self.config_sha256.clone()),
            ("seed", self.seed.map_or_else(|| "none".to_string(), |s| s.to_string())),
        ]
    }
}

/// Writes outputs with or without the provenance header.
#[derive(Debug, Clone)]
pub struct Emitter {
    /// `None` in canonical mode.
    pub provenance: Option<Provenance>,
}

impl Emitter {
    pub fn csv_header(&self) -> String {
        match &self.provenance {
            None => String::new(),
            Some(p) => p.pairs().iter().map(|(k, v)| format!("# {k}={v}\n")).collect(),
        }
    }

    pub fn csv(&self, rows: &[Vec<String>]) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(vec![]);
        for r in rows {
            w.write_record(r).expect("in-memory write");
        }
        let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input");
        self.csv_header() + &body
    }

    pub fn json(&self, result: &impl Serialize) -> String {
        let value = match &self.provenance {
            Some(p) => serde_json::json!({ "provenance": p, "result": result }),
            None => serde_json::json!({ "result": result }),
        };
        let mut s = serde_json::to_string_pretty(&value).expect("results serialize");
        s.push('\n');
        s
    }
}

/// Writes `content` to `path`, or to standard output.
pub fn write_output(path: Option<&Path>, content: &str) -> Result<(), CliError> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| CliError::data("output", format!("{}: {e}", dir.display())))?;
            }
            fs::write(p, content).map_err(|e| CliError::data("output", format!("{}: {e}", p.display())))
        }
        None => {
            let mut out = std::io::stdout().lock();
            match out.write_all(content.as_bytes()).and_then(|_| out.flush()) {
                // A closed pipe (`| head`) is the reader's choice, not a failure.
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::data("output", e.to_string())),
                _ => Ok(()),
            }
        }
    }
}

/// Shortest round-trip formatting (exponent form for very small or large
/// magnitudes); empty for `None`.
pub fn num(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| if x.is_finite() { serde_json::to_string(&x).expect("finite") } else { x.to_string() })
}

pub fn flag(v: Option<bool>) -> String {
    v.map_or_else(String::new, |b| if b { "1".into() } else { "0".into() })
}
