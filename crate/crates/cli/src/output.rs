//! CSV tables with a commented parameter header, plus a JSON sidecar.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::{render, ExperimentSpec};
use crate::run::Outcome;

/// `foo.csv` -> `foo.json`; a `.json` output gets `.meta.json` instead.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    if csv.extension().is_some_and(|e| e == "json") {
        csv.with_extension("meta.json")
    } else {
        csv.with_extension("json")
    }
}

pub fn metadata(spec: &ExperimentSpec, outcome: &Outcome) -> Value {
    let config: serde_json::Map<String, Value> = render(spec).into_iter().map(|(k, v)| (k, Value::String(v))).collect();
    json!({
        "kind": spec.kind.name(),
        "config": config,
        "columns": outcome.columns,
        "normalization": outcome.normalization,
        "summary": outcome.summary,
        "warnings": outcome.warnings,
        "checks": outcome.checks,
    })
}

/// Writes the CSV and its sidecar; returns both paths.
pub fn write(spec: &ExperimentSpec, outcome: &Outcome) -> std::io::Result<(PathBuf, PathBuf)> {
    let path = spec.output_path.clone();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut file = BufWriter::new(File::create(&path)?);
    writeln!(file, "# franson {}", spec.kind)?;
    for (k, v) in render(spec) {
        writeln!(file, "# {k} = {v}")?;
    }
    writeln!(file, "# normalization: {}", outcome.normalization)?;
    let mut csv = csv::Writer::from_writer(file);
    csv.write_record(&outcome.columns)?;
    for row in &outcome.rows {
        csv.write_record(row)?;
    }
    csv.flush()?;

    let side = sidecar_path(&path);
    let text = serde_json::to_string_pretty(&metadata(spec, outcome)).map_err(std::io::Error::other)?;
    std::fs::write(&side, text + "\n")?;
    Ok((path, side))
}
