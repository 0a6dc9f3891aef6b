use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::Config;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Everything needed to repeat a run.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub workers: usize,
    pub config: &'a Config,
    pub lift_hashes: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<serde_json::Value>,
}

pub struct OutDir {
    root: PathBuf,
    pub format: Format,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path, format: Format) -> Result<OutDir, CliError> {
        fs::create_dir_all(root)?;
        Ok(OutDir {
            root: root.to_path_buf(),
            format,
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.root.join(name);
        fs::write(&path, bytes)?;
        log::info!("wrote {}", path.display());
        self.written.push(name.to_string());
        Ok(path)
    }

    /// Writes `stem.csv` or `stem.json` depending on the format.
    pub fn write_table<T: Serialize>(&mut self, stem: &str, csv: &str, json: &T) -> Result<PathBuf, CliError> {
        let name = format!("{stem}.{}", self.format.extension());
        match self.format {
            Format::Csv => self.write(&name, csv.as_bytes()),
            Format::Json => {
                let text = serde_json::to_string_pretty(json).expect("results serialize");
                self.write(&name, text.as_bytes())
            }
        }
    }

    pub fn finish(
        mut self,
        command: &str,
        config: &Config,
        workers: usize,
        lift_hashes: Vec<String>,
        diagnostics: Option<serde_json::Value>,
    ) -> Result<(), CliError> {
        let mut outputs = self.written.clone();
        outputs.push("manifest.json".into());
        let manifest = Manifest {
            tool: "roughavg",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: config.seed,
            workers,
            config,
            lift_hashes,
            outputs,
            diagnostics,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        self.write("manifest.json", text.as_bytes())?;
        Ok(())
    }
}

/// CSV with a header row and one row per grid point.
pub fn path_csv(header: &[String], times: &[f64], rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut out = String::from("t");
    for h in header {
        out.push(',');
        out.push_str(h);
    }
    out.push('\n');
    for (t, row) in times.iter().zip(rows) {
        out.push_str(&t.to_string());
        for v in row {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}
