//! CSV and sidecar-metadata emission helpers.
//!
//! All numeric output is printed with 17 significant digits so files
//! round-trip to the exact binary doubles and byte-compare across runs.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::grid::GridFunction;

/// 17-significant-digit representation (round-trips any f64).
pub fn fmt_g17(x: f64) -> String {
    format!("{:.16e}", x)
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn create_file(dir: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    ensure_dir(dir)?;
    Ok(BufWriter::new(fs::File::create(dir.join(name))?))
}

/// Write named grid functions as a CSV with a leading time column.
pub fn write_grid_csv(dir: &Path, name: &str, columns: &[(&str, &GridFunction)]) -> Result<PathBuf> {
    let mut out = create_file(dir, name)?;
    write!(out, "t")?;
    for (label, _) in columns {
        write!(out, ",{label}")?;
    }
    writeln!(out)?;
    let grid = columns[0].1.grid();
    for k in 0..grid.len() {
        write!(out, "{}", fmt_g17(grid.t(k)))?;
        for (_, f) in columns {
            write!(out, ",{}", fmt_g17(f.at(k)))?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(dir.join(name))
}

/// Plain-text key-value sidecar block.
pub fn write_metadata(dir: &Path, name: &str, pairs: &[(&str, String)]) -> Result<PathBuf> {
    let mut out = create_file(dir, name)?;
    for (key, value) in pairs {
        writeln!(out, "{key} = {value}")?;
    }
    out.flush()?;
    Ok(dir.join(name))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;

    #[test]
    fn g17_round_trips() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 12345.6789, -2.5e17] {
            let printed = fmt_g17(x);
            let back: f64 = printed.parse().unwrap();
            assert_eq!(back, x, "{printed}");
        }
    }

    #[test]
    fn grid_csv_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let g = TimeGrid::new(1.0, 4).unwrap();
        let f = GridFunction::from_fn(&g, |t| t * t);
        let path = write_grid_csv(dir.path(), "f.csv", &[("fsq", &f)]).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.starts_with("t,fsq\n"));
        assert_eq!(text.lines().count(), 6);
    }
}
