//! File formats: CSV with a header row for flat data, JSON for nested data.
//!
//! Floats are written with the shortest decimal that parses back to the
//! same `f64`, so every save/load cycle is bit-exact.

mod fields;
mod networks;
mod points;
mod reports;
mod tables;
mod zones;

pub use fields::{field_header_path, read_field, read_lisa, write_field, write_lisa, FieldHeader};
pub use networks::{read_network, write_network, write_sample_plan, NetworkDocument};
pub use points::{
    load_points, parse_code_list, read_code_list, write_cell_counts, write_points, PointFormat,
    DEFAULT_STREET_COMMERCE_CODES,
};
pub use reports::{
    write_adherence, write_cluster_set, write_dendrogram, write_dendrogram_edges, write_diversity, write_json,
    write_radial_profile, write_rca, write_sector_table, write_zone_means,
};
pub use tables::{read_firm_table, read_zone_values, write_firm_table};
pub use zones::{read_zones, write_zones, ZoneDocument};

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

/// Shortest round-trip decimal form of `v`.
pub fn num(v: f64) -> String {
    format!("{v}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

pub(crate) fn finish(path: &Path, mut w: impl Write) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new().from_writer(create(path)?))
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::Parse { path: path.to_path_buf(), line, msg: format!("{kind:?}") },
    }
}

pub(crate) fn write_row<I, S>(path: &Path, w: &mut csv::Writer<BufWriter<File>>, row: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(row).map_err(|e| csv_err(path, e))
}

pub(crate) fn close_csv(path: &Path, mut w: csv::Writer<BufWriter<File>>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        msg: e.to_string(),
    })
}

/// A CSV file opened for reading with its header resolved.
pub(crate) struct CsvInput {
    path: PathBuf,
    reader: csv::Reader<File>,
    headers: Vec<String>,
}

impl CsvInput {
    pub(crate) fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers = reader
            .headers()
            .map_err(|e| csv_err(path, e))?
            .iter()
            .map(|h| h.trim_start_matches('\u{feff}').to_ascii_lowercase())
            .collect();
        Ok(Self { path: path.to_path_buf(), reader, headers })
    }

    pub(crate) fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub(crate) fn require(&self, name: &str) -> Result<usize> {
        self.column(name).ok_or_else(|| Error::MissingColumn { path: self.path.clone(), column: name.to_string() })
    }

    /// Calls `f` with each record and its 1-based line number.
    pub(crate) fn for_each(mut self, mut f: impl FnMut(&Row<'_>) -> Result<()>) -> Result<()> {
        let mut rec = csv::StringRecord::new();
        loop {
            match self.reader.read_record(&mut rec) {
                Ok(false) => return Ok(()),
                Ok(true) => {
                    let line = rec.position().map(|p| p.line()).unwrap_or(0);
                    f(&Row { path: &self.path, rec: &rec, line })?;
                }
                Err(e) => return Err(csv_err(&self.path, e)),
            }
        }
    }
}

pub(crate) struct Row<'a> {
    path: &'a Path,
    rec: &'a csv::StringRecord,
    pub(crate) line: u64,
}

impl Row<'_> {
    pub(crate) fn error(&self, msg: impl Into<String>) -> Error {
        Error::Parse { path: self.path.to_path_buf(), line: self.line, msg: msg.into() }
    }

    pub(crate) fn str(&self, col: usize) -> &str {
        self.rec.get(col).unwrap_or("")
    }

    pub(crate) fn parse<T: FromStr>(&self, col: usize, name: &str) -> Result<T> {
        let raw = self.str(col);
        raw.parse().map_err(|_| self.error(format!("cannot parse {name} from {raw:?}")))
    }

    pub(crate) fn finite(&self, col: usize, name: &str) -> Result<f64> {
        let v: f64 = self.parse(col, name)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.error(format!("{name} is not finite")))
        }
    }

    pub(crate) fn optional_finite(&self, col: Option<usize>, name: &str) -> Result<Option<f64>> {
        match col {
            Some(c) if !self.str(c).is_empty() => self.finite(c, name).map(Some),
            _ => Ok(None),
        }
    }
}
