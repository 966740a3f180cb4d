//! Subject records and the delimited dataset format
//! (`time,status,age,year,strata,<covariates...>`).

use serde::{Deserialize, Serialize};
use std::io::Read;
use std::path::Path;

use crate::error::{domain, Error, Result};
use crate::life_table::DemographicKey;

/// Fixed leading columns of a dataset file.
pub const DATASET_KEY_COLUMNS: [&str; 5] = ["time", "status", "age", "year", "strata"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    /// Follow-up time in years.
    pub time: f64,
    /// `true` for a death, `false` for a censored record.
    pub status: bool,
    pub covariates: Vec<f64>,
    pub demographic: DemographicKey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<SubjectRecord>,
    pub covariate_names: Vec<String>,
}

impl Dataset {
    /// Validates the records: nonempty, positive finite times, a common
    /// covariate dimension, finite covariates and no intercept column.
    pub fn new(records: Vec<SubjectRecord>, covariate_names: Vec<String>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty("dataset has no records".into()));
        }
        let p = covariate_names.len();
        for (i, r) in records.iter().enumerate() {
            if !r.time.is_finite() || r.time <= 0.0 {
                return Err(domain(format!("record {i}: time must be finite and > 0, got {}", r.time)));
            }
            if r.covariates.len() != p {
                return Err(Error::DimensionMismatch { expected: p, actual: r.covariates.len() });
            }
            if r.covariates.iter().any(|v| !v.is_finite()) {
                return Err(domain(format!("record {i}: covariates must be finite")));
            }
        }
        for j in 0..p {
            if records.iter().all(|r| r.covariates[j] == 1.0) {
                return Err(domain(format!(
                    "covariate `{}` is constant 1 (an intercept); remove it",
                    covariate_names[j]
                )));
            }
        }
        Ok(Self { records, covariate_names })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn n_deaths(&self) -> usize {
        self.records.iter().filter(|r| r.status).count()
    }

    pub fn censoring_proportion(&self) -> f64 {
        1.0 - self.n_deaths() as f64 / self.len() as f64
    }

    /// Multiplies every follow-up time by `c`.
    pub fn scale_times(&self, c: f64) -> Result<Self> {
        let records = self.records.iter().map(|r| SubjectRecord { time: r.time * c, ..r.clone() }).collect();
        Self::new(records, self.covariate_names.clone())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = DATASET_KEY_COLUMNS.join(",");
        for n in &self.covariate_names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}",
                r.time,
                u8::from(r.status),
                r.demographic.age,
                r.demographic.year,
                r.demographic.strata
            ));
            for v in &r.covariates {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Parses a dataset file; errors carry the offending line number.
pub fn parse_dataset(reader: impl Read) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < DATASET_KEY_COLUMNS.len() || cols[..5] != DATASET_KEY_COLUMNS {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must start with `{}`", DATASET_KEY_COLUMNS.join(",")),
        });
    }
    let covariate_names: Vec<String> = cols[5..].iter().map(|s| s.to_string()).collect();
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let num = |i: usize| -> Result<f64> {
            let s = rec.get(i).unwrap_or("");
            s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                line,
                message: format!("column `{}`: expected a finite number, got `{s}`", cols[i]),
            })
        };
        let time = num(0)?;
        if time <= 0.0 {
            return Err(Error::Parse { line, message: format!("time must be > 0, got {time}") });
        }
        let status = match rec.get(1).unwrap_or("") {
            "1" => true,
            "0" => false,
            s => return Err(Error::Parse { line, message: format!("status must be 0 or 1, got `{s}`") }),
        };
        let age = num(2)?;
        let year = num(3)?;
        let strata = rec.get(4).unwrap_or("").to_string();
        let covariates = (5..cols.len()).map(num).collect::<Result<Vec<_>>>()?;
        records.push(SubjectRecord { time, status, covariates, demographic: DemographicKey { age, year, strata } });
    }
    Dataset::new(records, covariate_names)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    parse_dataset(std::io::BufReader::new(file))
}
