//! Result files. Data payloads are deterministic; wall-times go to a
//! separate `.meta.json` file.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Map, Value};

use crate::config::{Format, RunConfig};
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn objects(&self) -> Vec<Value> {
        self.rows
            .iter()
            .map(|r| {
                let m: Map<String, Value> = self
                    .columns
                    .iter()
                    .map(|c| c.to_string())
                    .zip(r.iter().cloned())
                    .collect();
                Value::Object(m)
            })
            .collect()
    }
}

/// What a subcommand produced: rows for CSV and, optionally, a structured
/// document used instead of the rows for JSON output.
#[derive(Debug, Clone, PartialEq)]
pub struct Payload {
    pub table: Table,
    pub document: Option<Value>,
}

impl From<Table> for Payload {
    fn from(table: Table) -> Self {
        Self { table, document: None }
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

pub fn schema_name(cfg: &RunConfig) -> String {
    format!("ml-locality/{}/v{SCHEMA_VERSION}", cfg.subcommand)
}

/// Comment lines that open every CSV written by the tool.
pub fn csv_preamble(cfg: &RunConfig) -> Result<String, CliError> {
    Ok(format!(
        "# schema: {}\n# version: {}\n# config: {}\n",
        schema_name(cfg),
        ml_locality::VERSION,
        serde_json::to_string(cfg)?
    ))
}

pub fn render(cfg: &RunConfig, payload: &Payload) -> Result<String, CliError> {
    match cfg.format {
        Format::Csv => {
            let mut s = csv_preamble(cfg)?;
            s.push_str(&payload.table.columns.join(","));
            s.push('\n');
            for row in &payload.table.rows {
                let cells: Vec<String> = row.iter().map(cell).collect();
                let _ = writeln!(s, "{}", cells.join(","));
            }
            Ok(s)
        }
        Format::Json => {
            let data = payload
                .document
                .clone()
                .unwrap_or_else(|| Value::Array(payload.table.objects()));
            let doc = json!({
                "schema": schema_name(cfg),
                "version": ml_locality::VERSION,
                "config": cfg,
                "data": data,
            });
            Ok(serde_json::to_string_pretty(&doc)? + "\n")
        }
    }
}

pub fn write_file(path: PathBuf, contents: &[u8]) -> Result<PathBuf, CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Io(parent.display().to_string(), e))?;
    }
    std::fs::write(&path, contents).map_err(|e| CliError::Io(path.display().to_string(), e))?;
    Ok(path)
}

pub fn write_payload(cfg: &RunConfig, payload: &Payload) -> Result<PathBuf, CliError> {
    let name = format!("{}.{}", cfg.subcommand, cfg.format.extension());
    write_file(cfg.out_path(&name), render(cfg, payload)?.as_bytes())
}

/// Timing side file; not covered by the determinism guarantee.
pub fn write_meta(cfg: &RunConfig, timings: Value) -> Result<PathBuf, CliError> {
    let generated = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let doc = json!({
        "schema": format!("ml-locality/meta/v{SCHEMA_VERSION}"),
        "version": ml_locality::VERSION,
        "config": cfg,
        "generated_unix_s": generated,
        "timings": timings,
    });
    let name = format!("{}.meta.json", cfg.subcommand);
    write_file(
        cfg.out_path(&name),
        (serde_json::to_string_pretty(&doc)? + "\n").as_bytes(),
    )
}

/// Runs `f` once to warm up, then `repeat` more times, returning the
/// first measured result and the median elapsed nanoseconds.
pub fn timed<T>(repeat: usize, mut f: impl FnMut() -> Result<T, CliError>) -> Result<(T, u64), CliError> {
    f()?;
    let mut times = Vec::with_capacity(repeat);
    let mut first = None;
    for _ in 0..repeat.max(1) {
        let start = std::time::Instant::now();
        let out = f()?;
        times.push(start.elapsed().as_nanos() as u64);
        first.get_or_insert(out);
    }
    times.sort_unstable();
    let median = times[times.len() / 2];
    Ok((first.expect("at least one repetition"), median))
}

/// A result with its median wall-time in nanoseconds.
pub type Timed<T> = (T, u64);

/// [`timed`] for two alternatives, interleaving their repetitions so that
/// background load affects both alike.
pub fn timed_pair<A, B>(
    repeat: usize,
    mut a: impl FnMut() -> Result<A, CliError>,
    mut b: impl FnMut() -> Result<B, CliError>,
) -> Result<(Timed<A>, Timed<B>), CliError> {
    a()?;
    b()?;
    let (mut ta, mut tb) = (Vec::new(), Vec::new());
    let (mut first_a, mut first_b) = (None, None);
    for _ in 0..repeat.max(1) {
        let start = std::time::Instant::now();
        let out = a()?;
        ta.push(start.elapsed().as_nanos() as u64);
        first_a.get_or_insert(out);
        let start = std::time::Instant::now();
        let out = b()?;
        tb.push(start.elapsed().as_nanos() as u64);
        first_b.get_or_insert(out);
    }
    ta.sort_unstable();
    tb.sort_unstable();
    Ok((
        (first_a.expect("at least one repetition"), ta[ta.len() / 2]),
        (first_b.expect("at least one repetition"), tb[tb.len() / 2]),
    ))
}
