use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;

/// Relative `--output` paths resolve against this directory when it is set.
pub const OUTPUT_DIR_ENV: &str = "DIHEDRAL_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Rounds to 6 significant digits, the precision of every emitted float.
pub fn sig6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

pub fn sig6_opt(x: Option<f64>) -> Option<f64> {
    x.map(sig6)
}

fn resolve(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn open(out: &OutputArgs) -> io::Result<Box<dyn Write>> {
    match &out.output {
        Some(p) => {
            let p = resolve(p);
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Ok(Box::new(io::BufWriter::new(File::create(p)?)))
        }
        None => Ok(Box::new(io::BufWriter::new(io::stdout().lock()))),
    }
}

/// Writes flat records as CSV (header + rows) or as a JSON array.
pub fn emit_records<T: Serialize>(records: &[T], out: &OutputArgs) -> io::Result<()> {
    let mut w = open(out)?;
    match out.format {
        Format::Csv => {
            let mut cw = csv::Writer::from_writer(&mut w);
            for r in records {
                cw.serialize(r).map_err(io::Error::other)?;
            }
            cw.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, records).map_err(io::Error::other)?;
            writeln!(w)?;
        }
    }
    w.flush()
}

/// Writes one JSON document.
pub fn emit_json<T: Serialize>(value: &T, out: &OutputArgs) -> io::Result<()> {
    let mut w = open(out)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(io::Error::other)?;
    writeln!(w)?;
    w.flush()
}
