//! Plain-text rendering shared by the trajectory writers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn push_float(line: &mut String, v: f64) {
    if !line.is_empty() {
        line.push(',');
    }
    line.push_str(&fmt_f64(v));
}

pub(crate) fn push_floats<'a>(line: &mut String, vs: impl IntoIterator<Item = &'a f64>) {
    for v in vs {
        push_float(line, *v);
    }
}

pub(crate) fn push_raw(line: &mut String, s: &str) {
    if !line.is_empty() {
        line.push(',');
    }
    line.push_str(s);
}

/// Column names `prefix_1, …, prefix_n`.
pub(crate) fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
