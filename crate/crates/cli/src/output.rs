//! Metrics records, run context and result tables.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use hdgmm::matching::MatchResult;
use serde_json::{json, Map, Value};

use crate::error::{CliError, CliResult};
use crate::settings::Settings;

/// Bumped whenever a metrics record changes shape.
pub const SCHEMA_VERSION: u32 = 1;

/// Declares a string-valued option with `FromStr` and `Display`.
macro_rules! choice {
    ($(#[$meta:meta])* $name:ident { $($variant:ident = $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum $name { $($variant),+ }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text => Ok(Self::$variant),)+
                    other => Err(format!("'{other}' is not one of: {}", [$($text),+].join(", "))),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $text),+ })
            }
        }
    };
}

choice!(FitMode { Batch = "batch", Online = "online" });
choice!(Basis { Eigen = "eigen", Stiefel = "stiefel" });
choice!(MatchMethod { Full = "full", Svd = "svd", Hdgmm = "hdgmm" });
choice!(Distance { Coords = "coords", Recon = "recon" });
choice!(Width { F32 = "f32", F64 = "f64" });

impl From<Width> for hdgmm::io::SampleWidth {
    fn from(w: Width) -> Self {
        match w {
            Width::F32 => hdgmm::io::SampleWidth::F32,
            Width::F64 => hdgmm::io::SampleWidth::F64,
        }
    }
}

/// Resolved settings, metrics sink and wall clock for one invocation.
pub struct Run {
    pub command: &'static str,
    pub settings: Settings,
    pub seed: u64,
    metrics: Box<dyn Write>,
    started: Instant,
}

impl Run {
    pub fn new(command: &'static str, settings: Settings, seed: u64, metrics: Option<&Path>) -> CliResult<Self> {
        let metrics: Box<dyn Write> = match metrics {
            Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::io(p, e))?)),
            None => Box::new(io::stderr()),
        };
        Ok(Self { command, settings, seed, metrics, started: Instant::now() })
    }

    pub fn elapsed(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    /// Writes one JSON line tagged with the schema version and `kind`.
    pub fn emit(&mut self, kind: &str, fields: Value) -> CliResult<()> {
        let mut obj = Map::new();
        obj.insert("schema_version".into(), json!(SCHEMA_VERSION));
        obj.insert("kind".into(), json!(kind));
        obj.insert("command".into(), json!(self.command));
        if let Value::Object(extra) = fields {
            obj.extend(extra);
        }
        let line = serde_json::to_string(&Value::Object(obj)).expect("JSON values always serialize");
        writeln!(self.metrics, "{line}").and_then(|_| self.metrics.flush()).map_err(|e| CliError::Io(e.to_string()))
    }

    /// Emits the fully resolved configuration. Call once all settings are read.
    pub fn echo_config(&mut self) -> CliResult<()> {
        let config: Map<String, Value> =
            self.settings.resolved().iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
        let unused: Vec<&str> = self.settings.unused();
        let fields = json!({ "config": config, "unused_config_keys": unused });
        self.emit("config", fields)
    }
}

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

/// `query,index,score,<label names…>` with shortest round-trip floats.
pub fn write_results_csv(path: &Path, label_names: &[String], results: &[MatchResult]) -> CliResult<()> {
    let file = create(path)?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["query".to_string(), "index".to_string(), "score".to_string()];
    header.extend(label_names.iter().cloned());
    let err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    w.write_record(&header).map_err(err)?;
    for (q, r) in results.iter().enumerate() {
        let mut row = vec![q.to_string(), r.index.to_string(), r.score.to_string()];
        row.extend(r.params.iter().map(f64::to_string));
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Row index and parameters from a file written by [`write_results_csv`].
pub struct ReferenceResults {
    pub label_names: Vec<String>,
    pub index: Vec<usize>,
    pub params: Vec<Vec<f64>>,
}

pub fn read_results_csv(path: &PathBuf) -> CliResult<ReferenceResults> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let bad = |msg: String| CliError::Core(hdgmm::Error::Format(format!("{}: {msg}", path.display())));
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.len() < 3 || &header[0] != "query" || &header[1] != "index" || &header[2] != "score" {
        return Err(bad("expected a query,index,score,... header".into()));
    }
    let label_names: Vec<String> = header.iter().skip(3).map(str::to_string).collect();
    let mut index = Vec::new();
    let mut params = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |j: usize| rec.get(j).ok_or_else(|| bad(format!("row {} is short", line + 1)));
        index.push(field(1)?.parse().map_err(|_| bad(format!("row {}: bad index", line + 1)))?);
        let p = (3..header.len())
            .map(|j| field(j)?.parse::<f64>().map_err(|_| bad(format!("row {}: bad number", line + 1))))
            .collect::<CliResult<Vec<f64>>>()?;
        params.push(p);
    }
    Ok(ReferenceResults { label_names, index, params })
}

pub fn fmt_snr(snr: Option<f64>) -> String {
    snr.map_or_else(|| "inf".to_string(), |s| s.to_string())
}
