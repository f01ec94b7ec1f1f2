use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use qgbc::config::ExperimentConfig;
use serde::Serialize;

use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

/// Reproducibility header shared by every artifact.
#[derive(Serialize)]
pub struct Header<'a> {
    pub format_version: u32,
    pub command: &'a str,
    pub argv: Vec<String>,
    pub seed: u64,
    pub config: &'a ExperimentConfig,
}

impl<'a> Header<'a> {
    pub fn new(command: &'a str, config: &'a ExperimentConfig) -> Self {
        Header {
            format_version: FORMAT_VERSION,
            command,
            argv: std::env::args().collect(),
            seed: config.sim.seed,
            config,
        }
    }
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    #[serde(flatten)]
    header: &'a Header<'a>,
    result: &'a T,
}

fn create(path: &Path) -> Result<File, CliError> {
    File::create(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })
}

/// Writes a JSON document with the header embedded, to `out` or stdout.
pub fn emit_json<T: Serialize>(header: &Header, result: &T, out: Option<&Path>) -> Result<(), CliError> {
    let doc = Document { header, result };
    let mut text = serde_json::to_string_pretty(&doc).map_err(qgbc::Error::from)?;
    text.push('\n');
    match out {
        Some(p) => create(p)?.write_all(text.as_bytes()).map_err(|e| CliError::Io { path: p.to_path_buf(), source: e }),
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Io { path: "<stdout>".into(), source: e }),
    }
}

/// Path of the header document written next to a non-JSON artifact.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes the header (plus a summary) next to `out`.
pub fn emit_sidecar<T: Serialize>(header: &Header, summary: &T, out: &Path) -> Result<(), CliError> {
    emit_json(header, summary, Some(&sidecar_path(out)))
}

/// Writes rows as CSV with a single header line. With `out` set, the
/// reproducibility header goes to the sidecar file.
pub fn emit_csv<R: Serialize>(header: &Header, rows: &[R], out: Option<&Path>) -> Result<(), CliError> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::Io { path: out.map_or_else(|| "<stdout>".into(), Path::to_path_buf), source: e })?;
    if let Some(p) = out {
        emit_sidecar(header, &serde_json::json!({ "rows": rows.len(), "file": p }), p)?;
    }
    Ok(())
}
