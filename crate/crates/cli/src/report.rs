//! Report serialisation: CSV with a versioned comment header, or JSON.

use std::io::Write;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use crate::config::Format;

/// A report row with a fixed CSV layout.
pub trait Row: Serialize {
    fn columns() -> &'static [&'static str];
    fn cells(&self) -> Vec<String>;
}

pub fn render<R: Row>(kind: &str, rows: &[R], format: Format) -> anyhow::Result<String> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(rows)? + "\n"),
        Format::Csv => {
            let mut out = format!("# dlu-{kind}-report v1\n{}\n", R::columns().join(","));
            for r in rows {
                out.push_str(&r.cells().join(","));
                out.push('\n');
            }
            Ok(out)
        }
    }
}

/// Writes to `out`, or stdout when no path is given.
pub fn emit(text: &str, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}
