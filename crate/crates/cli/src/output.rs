//! CSV files headed by a config-hash comment line, with round-trip float formatting.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::CliError;

pub fn config_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct CsvOut {
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(path: &Path, hash: &str, header: &[&str]) -> Result<Self, CliError> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut buf = BufWriter::new(file);
        writeln!(buf, "# eqsadj {} config_sha256={hash}", env!("CARGO_PKG_VERSION")).map_err(|e| CliError::io(path, e))?;
        let mut writer = csv::Writer::from_writer(buf);
        writer.write_record(header).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self { writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|e| CliError::Io(e.to_string()))
    }
}
