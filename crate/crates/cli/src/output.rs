use crate::error::CliError;
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Artifact directory for one command run.
#[derive(Clone, Debug)]
pub struct Sink {
    dir: PathBuf,
}

impl Sink {
    pub fn new(dir: &Path) -> Result<Sink, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("output directory {} is not writable: {e}", dir.display())))?;
        Ok(Sink { dir: dir.to_path_buf() })
    }

    pub fn sub(&self, name: &str) -> Result<Sink, CliError> {
        Sink::new(&self.dir.join(name))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = BufWriter::new(File::create(self.path(name))?);
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        Ok(())
    }

    pub fn jsonl<T: Serialize>(&self, name: &str, items: impl IntoIterator<Item = T>) -> Result<(), CliError> {
        let mut w = BufWriter::new(File::create(self.path(name))?);
        for item in items {
            serde_json::to_writer(&mut w, &item)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn csv<R, I>(&self, name: &str, header: &[&str], rows: R) -> Result<(), CliError>
    where
        R: IntoIterator<Item = I>,
        I: IntoIterator,
        I::Item: AsRef<[u8]>,
    {
        let mut w = csv::Writer::from_path(self.path(name))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Full-precision text for a float (shortest round-trip form).
pub fn num(x: f64) -> String {
    format!("{x:?}")
}
