//! CSV and JSON input and output.
//!
//! Observation files are headered CSV with a spending column `y` and an
//! optional group column. Floats are written in shortest round-trip form, so
//! reading a file back and writing it again reproduces it byte for byte.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Observation;

/// Derives the group of a row from a numeric column: `floor(value / width)`
/// with every value at or above `top_code` in the last band.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSpec {
    pub column: String,
    pub width: f64,
    pub top_code: f64,
}

impl BandSpec {
    pub fn n_bands(&self) -> usize {
        (self.top_code / self.width).floor() as usize + 1
    }

    pub fn band(&self, value: f64) -> usize {
        if value >= self.top_code {
            self.n_bands() - 1
        } else {
            (value / self.width).floor() as usize
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grouping {
    /// Every row in group 0.
    Single,
    /// Labels taken from a column; numeric labels sort numerically.
    Column(String),
    Bands(BandSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub observations: Vec<Observation>,
    /// Original label of each group index.
    pub group_labels: Vec<String>,
    /// Rows with zero spending, which lie outside the model's support.
    pub excluded_zero: usize,
}

fn parse_number(text: &str, row: usize, column: &str) -> Result<f64> {
    text.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Data(format!("row {row}: {column} value {text:?} is not a finite number")))
}

/// Reads observations from CSV. `row` numbers in errors count data rows
/// from 1, excluding the header.
pub fn read_observations<R: Read>(input: R, y_column: &str, grouping: &Grouping) -> Result<LoadedData> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("missing column {name:?} (found {:?})", headers.iter().collect::<Vec<_>>())))
    };
    let y_idx = find(y_column)?;
    let group_idx = match grouping {
        Grouping::Single => None,
        Grouping::Column(c) => Some(find(c)?),
        Grouping::Bands(b) => {
            if !(b.width > 0.0 && b.top_code > 0.0) {
                return Err(Error::Config("band width and top code must be positive".into()));
            }
            Some(find(&b.column)?)
        }
    };

    let mut rows: Vec<(f64, String)> = Vec::new();
    let mut excluded_zero = 0;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let y = parse_number(&record[y_idx], row, y_column)?;
        if y < 0.0 {
            return Err(Error::Data(format!("row {row}: negative spending {y}")));
        }
        let label = match (grouping, group_idx) {
            (Grouping::Bands(b), Some(j)) => {
                let v = parse_number(&record[j], row, &b.column)?;
                if v < 0.0 {
                    return Err(Error::Data(format!("row {row}: negative {} {v}", b.column)));
                }
                b.band(v).to_string()
            }
            (_, Some(j)) => record[j].to_string(),
            (_, None) => "0".to_string(),
        };
        if y == 0.0 {
            excluded_zero += 1;
            continue;
        }
        rows.push((y, label));
    }
    if excluded_zero > 0 {
        log::info!("excluded {excluded_zero} rows with zero spending");
    }

    let mut labels: Vec<String> = match grouping {
        Grouping::Bands(b) => (0..b.n_bands()).map(|g| g.to_string()).collect(),
        _ => {
            let distinct: BTreeMap<&str, ()> = rows.iter().map(|(_, l)| (l.as_str(), ())).collect();
            distinct.into_keys().map(str::to_string).collect()
        }
    };
    if labels.iter().all(|l| l.parse::<f64>().is_ok()) {
        labels.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let observations = rows
        .iter()
        .map(|(y, l)| Observation { y: *y, group: index[l.as_str()] })
        .collect();
    Ok(LoadedData { observations, group_labels: labels, excluded_zero })
}

pub fn load_observations(path: &Path, y_column: &str, grouping: &Grouping) -> Result<LoadedData> {
    read_observations(File::open(path)?, y_column, grouping)
}

/// Writes serializable rows as headered CSV.
pub fn write_csv_rows<T: Serialize, W: Write>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_csv_rows(BufWriter::new(File::create(path)?), rows)
}

pub fn read_csv_rows<T: DeserializeOwned, R: Read>(input: R) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn save_observations(path: &Path, observations: &[Observation]) -> Result<()> {
    save_csv(path, observations)
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
