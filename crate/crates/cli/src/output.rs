//! Deterministic JSON and CSV writers.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mfglab::export::{fmt_f64, write_field_csv, write_solution};
use mfglab::SpaceTimeField;
use serde::Serialize;

use crate::error::CliError;

pub struct OutDir(PathBuf);

impl OutDir {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(path).map_err(|e| CliError::io(path, e))?;
        Ok(OutDir(path.to_path_buf()))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    fn file(&self, name: &str) -> Result<(BufWriter<File>, PathBuf), CliError> {
        let p = self.path(name);
        let f = File::create(&p).map_err(|e| CliError::io(&p, e))?;
        Ok((BufWriter::new(f), p))
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let (mut w, p) = self.file(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(&p, e))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(&p, e))
    }

    /// Writes a header and rows of already formatted cells.
    pub fn csv(&self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let (mut w, p) = self.file(name)?;
        let mut write = || -> std::io::Result<()> {
            writeln!(w, "{}", header.join(","))?;
            for r in rows {
                writeln!(w, "{}", r.join(","))?;
            }
            w.flush()
        };
        write().map_err(|e| CliError::io(&p, e))
    }

    /// `solution.bin`, `u.csv` and `m.csv`.
    pub fn solution(&self, u: &SpaceTimeField, m: &SpaceTimeField) -> Result<(), CliError> {
        let (mut w, p) = self.file("solution.bin")?;
        write_solution(&mut w, u, m).map_err(|e| CliError::io(&p, e))?;
        w.flush().map_err(|e| CliError::io(&p, e))?;
        for (name, f) in [("u.csv", u), ("m.csv", m)] {
            let (mut w, p) = self.file(name)?;
            write_field_csv(&mut w, f).map_err(|e| CliError::io(&p, e))?;
            w.flush().map_err(|e| CliError::io(&p, e))?;
        }
        Ok(())
    }
}

pub fn num(x: f64) -> String {
    fmt_f64(x)
}

pub fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}
