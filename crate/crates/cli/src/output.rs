use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use serde::Serialize;

use crate::error::CliError;

/// Where command output goes: files named after the command under `dir`,
/// or standard output when no directory is given.
#[derive(Debug, Clone)]
pub struct Sink {
    pub dir: Option<PathBuf>,
}

impl Sink {
    pub fn open(&self, name: &str) -> Result<Box<dyn Write>, CliError> {
        Ok(match &self.dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                Box::new(BufWriter::new(File::create(dir.join(name))?))
            }
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.open(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trip decimal form; identical across runs and platforms.
pub fn num(x: f64) -> String {
    format!("{x}")
}
