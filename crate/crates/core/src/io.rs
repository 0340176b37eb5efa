//! Sample sets on disk: one CSV row per sample plus a JSON sidecar.
//!
//! Floats are written with 17 significant digits so reading back gives the
//! same bits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sampler::{Algorithm, CostMode, SampleSet, WeightedSample};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("json error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Seventeen significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}

/// Finite numbers as JSON numbers, non-finite ones as strings.
pub mod float_or_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    #[serde(with = "float_or_string")]
    pub epsilon: f64,
    pub seed: u64,
    pub algorithm_id: Algorithm,
    pub total_cost: f64,
    pub model_id: String,
    pub cost_mode: CostMode,
    pub n_iterations: usize,
    pub theta_dim: usize,
    pub stage_count: usize,
}

impl Sidecar {
    pub fn of(set: &SampleSet) -> Self {
        Self {
            epsilon: set.epsilon,
            seed: set.base_seed,
            algorithm_id: set.algorithm,
            total_cost: set.total_cost,
            model_id: set.model_id.clone(),
            cost_mode: set.cost_mode,
            n_iterations: set.n_iterations,
            theta_dim: set.theta_dim(),
            stage_count: set.stage_count(),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| IoError::Json {
        path: path.display().to_string(),
        source,
    })?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let f = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(std::io::BufReader::new(f)).map_err(|source| IoError::Json {
        path: path.display().to_string(),
        source,
    })
}

fn sidecar_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("json")
}

/// Writes `<path>` (CSV) and the sidecar next to it with extension `.json`.
pub fn write_sample_set(path: &Path, set: &SampleSet) -> Result<(), IoError> {
    let p = set.theta_dim();
    let k = set.stage_count();
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["index".to_string()];
    header.extend((0..p).map(|j| format!("theta_{j}")));
    header.extend(["weight".into(), "early_stopped".into()]);
    header.extend((0..k).map(|j| format!("cost_{j}")));
    header.extend(["distance".into(), "continuation_prob".into()]);
    w.write_record(&header).map_err(csv_err(path))?;
    for (i, s) in set.samples.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(s.theta.iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(s.weight));
        row.push(u8::from(s.early_stopped).to_string());
        row.extend(s.stage_costs.iter().map(|v| fmt_f64(*v)));
        row.push(s.distance.map(fmt_f64).unwrap_or_default());
        row.push(fmt_f64(s.continuation_prob));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))?;
    write_json(&sidecar_path(path), &Sidecar::of(set))
}

pub fn read_sample_set(path: &Path) -> Result<SampleSet, IoError> {
    let side: Sidecar = read_json(&sidecar_path(path))?;
    let (p, k) = (side.theta_dim, side.stage_count);
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut samples = Vec::new();
    for (row_no, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        if rec.len() != p + k + 5 {
            return Err(format_err(
                path,
                format!("row {row_no} has {} fields", rec.len()),
            ));
        }
        let num = |j: usize| {
            parse_f64(&rec[j]).ok_or_else(|| format_err(path, format!("row {row_no} field {j}")))
        };
        let theta = (0..p).map(|j| num(1 + j)).collect::<Result<Vec<_>, _>>()?;
        let weight = num(1 + p)?;
        let early_stopped = &rec[2 + p] == "1";
        let stage_costs = (0..k)
            .map(|j| num(3 + p + j))
            .collect::<Result<Vec<_>, _>>()?;
        let distance = if rec[3 + p + k].is_empty() {
            None
        } else {
            Some(num(3 + p + k)?)
        };
        let continuation_prob = num(4 + p + k)?;
        samples.push(WeightedSample {
            theta,
            weight,
            early_stopped,
            stage_costs,
            distance,
            continuation_prob,
        });
    }
    if samples.len() != side.n_iterations {
        return Err(format_err(path, "row count disagrees with sidecar"));
    }
    Ok(SampleSet {
        samples,
        epsilon: side.epsilon,
        n_iterations: side.n_iterations,
        base_seed: side.seed,
        algorithm: side.algorithm_id,
        total_cost: side.total_cost,
        model_id: side.model_id,
        cost_mode: side.cost_mode,
    })
}

/// Writes a numeric table with a header row.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt_f64(*v)))
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a numeric table, returning the header and rows.
pub fn read_table(path: &Path, has_header: bool) -> Result<(Vec<String>, Vec<Vec<f64>>), IoError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .from_path(path)
        .map_err(csv_err(path))?;
    let header = if has_header {
        r.headers()
            .map_err(csv_err(path))?
            .iter()
            .map(String::from)
            .collect()
    } else {
        Vec::new()
    };
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let row = rec
            .iter()
            .map(|f| {
                parse_f64(f)
                    .ok_or_else(|| format_err(path, format!("non-numeric value {f:?} in row {i}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [
            0.1,
            1.0 / 3.0,
            f64::MIN_POSITIVE,
            1e300,
            -2.5e-17,
            f64::INFINITY,
        ] {
            assert_eq!(parse_f64(&fmt_f64(v)).unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn sample_set_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let samples = vec![
            WeightedSample {
                theta: vec![0.1, 1.0 / 7.0],
                weight: 2.0 / 3.0,
                early_stopped: false,
                stage_costs: vec![0.3, 1e-9],
                distance: Some(0.7),
                continuation_prob: 0.25,
            },
            WeightedSample {
                theta: vec![3.0, 4.0],
                weight: 0.0,
                early_stopped: true,
                stage_costs: vec![0.3, 0.0],
                distance: None,
                continuation_prob: 0.1,
            },
        ];
        let set = SampleSet::new(
            samples,
            f64::INFINITY,
            9,
            Algorithm::LazyAbc,
            "m".into(),
            CostMode::Sim,
        );
        write_sample_set(&path, &set).unwrap();
        assert_eq!(read_sample_set(&path).unwrap(), set);
    }
}
