//! CSV output: comma-separated, header row, LF endings, 17 significant
//! digits for reals.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::Result;

/// `{:.16e}`: 17 significant digits, enough to round-trip binary64.
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn reals(xs: &[f64]) -> Vec<String> {
    xs.iter().map(|&x| real(x)).collect()
}

/// Write `header` and `rows` to any writer.
pub fn write_to<W: Write>(w: W, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    wr.write_record(header)?;
    for r in rows {
        wr.write_record(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_to(File::create(path)?, header, rows)
}

/// `prefix_1, ..., prefix_n`.
pub fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|j| format!("{prefix}_{j}")).collect()
}

pub fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}
