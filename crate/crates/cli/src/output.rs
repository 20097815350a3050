//! CSV tables and run manifests.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Bumped whenever a column is added, removed or changes meaning.
pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// A CSV table with `#` comment lines ahead of the header row. The schema
/// version is always the first column.
pub struct Table {
    comments: Vec<String>,
    columns: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table { comments: Vec::new(), columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn comment(&mut self, line: impl Into<String>) -> &mut Self {
        self.comments.push(line.into());
        self
    }

    pub fn row(&mut self, cells: Vec<String>) {
        assert_eq!(cells.len(), self.columns.len(), "row width must match the header");
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(out, "schema_version,{}", self.columns.join(","));
        for r in &self.rows {
            let _ = writeln!(out, "{CSV_SCHEMA_VERSION},{}", r.join(","));
        }
        out
    }
}

/// Shortest round-trip decimal form, so identical values give identical bytes.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
}

/// Files written by one run, in write order.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<OutputDigest>,
}

impl Outputs {
    pub fn write(&mut self, dir: &Path, name: &str, contents: &str) -> io::Result<()> {
        fs::write(dir.join(name), contents)?;
        self.files.push(OutputDigest { path: name.to_string(), sha256: sha256_hex(contents.as_bytes()) });
        Ok(())
    }
}

/// What was run, with everything needed to run it again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum CommandRecord {
    De { pbm: Option<String> },
    Pgam,
    Sweep { var: String, values: Vec<f64> },
    Validate,
    Compare,
}

impl CommandRecord {
    pub fn name(&self) -> &'static str {
        match self {
            CommandRecord::De { .. } => "de",
            CommandRecord::Pgam => "pgam",
            CommandRecord::Sweep { .. } => "sweep",
            CommandRecord::Validate => "validate",
            CommandRecord::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub code_version: String,
    pub command: CommandRecord,
    pub seed: u64,
    pub realizations: usize,
    /// Set when fewer realizations than the default budget were used.
    pub reduced_budget: bool,
    /// Effective configuration after command-line overrides, as TOML.
    pub config: String,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<OutputDigest>,
    pub failures: Vec<String>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        fs::write(dir.join(MANIFEST_FILE), text + "\n")
    }

    /// Recomputes digests of the listed outputs found under `dir`; returns
    /// the paths that are missing or differ.
    pub fn mismatches(&self, dir: &Path) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|o| match fs::read(dir.join(&o.path)) {
                Ok(bytes) => sha256_hex(&bytes) != o.sha256,
                Err(_) => true,
            })
            .map(|o| o.path.clone())
            .collect()
    }
}

pub fn now_rfc3339() -> String {
    time::OffsetDateTime::now_utc()
        .format(&time::format_description::well_known::Rfc3339)
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_layout() {
        let mut t = Table::new(&["a", "b"]);
        t.comment("hello");
        t.row(vec![num(1.5), num(2.0)]);
        assert_eq!(t.render(), "# hello\nschema_version,a,b\n1,1.5,2\n");
    }

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn number_format_round_trips() {
        for x in [0.1, 1e-300, 12345.678901234567, -2.5e10] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}
