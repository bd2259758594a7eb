use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::calibration::Sample;
use crate::error::{Error, Result};
use crate::kinematics::Configuration;

fn header(n_joints: usize) -> Vec<String> {
    let mut h = vec!["id".to_string()];
    h.extend((1..=n_joints).map(|i| format!("q_{i}")));
    for m in ["yr", "yl"] {
        h.extend(["x", "y", "z"].iter().map(|c| format!("{m}_{c}")));
    }
    h
}

fn fmt(v: f64) -> String {
    // shortest representation that parses back to the same value
    format!("{v:?}")
}

pub fn write_dataset(path: &Path, n_joints: usize, samples: &[Sample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header(n_joints))?;
    for (i, s) in samples.iter().enumerate() {
        if s.q.len() != n_joints {
            return Err(Error::ModelMismatch(format!("sample {i} has {} joints", s.q.len())));
        }
        let mut rec = vec![i.to_string()];
        rec.extend(s.q.iter().map(|v| fmt(*v)));
        for m in s.markers() {
            match m {
                Some(y) => rec.extend(y.iter().map(|v| fmt(*v))),
                None => rec.extend(std::iter::repeat(String::new()).take(3)),
            }
        }
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    super::write_atomic(path, &bytes)
}

/// Column mapping for CSV files produced elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub delimiter: char,
    /// Joint columns in model joint order.
    pub joints: Vec<String>,
    /// x/y/z columns of the right marker; empty to ignore it.
    #[serde(default)]
    pub right: Vec<String>,
    #[serde(default)]
    pub left: Vec<String>,
    /// Multiplier to rad (e.g. π/180 for degrees).
    #[serde(default = "one")]
    pub angle_scale: f64,
    /// Multiplier to m (e.g. 1e-3 for millimetres).
    #[serde(default = "one")]
    pub length_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl IngestConfig {
    /// The layout written by [`write_dataset`].
    pub fn native(n_joints: usize) -> Self {
        Self {
            delimiter: ',',
            joints: (1..=n_joints).map(|i| format!("q_{i}")).collect(),
            right: ["yr_x", "yr_y", "yr_z"].map(String::from).to_vec(),
            left: ["yl_x", "yl_y", "yl_z"].map(String::from).to_vec(),
            angle_scale: 1.0,
            length_scale: 1.0,
        }
    }
}

pub fn read_dataset(path: &Path, n_joints: usize) -> Result<Vec<Sample>> {
    let mut rdr = csv::ReaderBuilder::new().from_path(path)?;
    let expected = header(n_joints);
    let got: Vec<String> = rdr.headers().cloned().unwrap_or_default().iter().map(String::from).collect();
    if got != expected {
        return Err(Error::ModelMismatch(format!(
            "dataset has {} columns, a {n_joints}-joint model needs {}",
            got.len(),
            expected.len()
        )));
    }
    read_dataset_with(path, &IngestConfig::native(n_joints))
}

pub fn read_dataset_with(path: &Path, cfg: &IngestConfig) -> Result<Vec<Sample>> {
    if !cfg.delimiter.is_ascii() {
        return Err(Error::InvalidInput("delimiter must be ASCII".into()));
    }
    for m in [&cfg.right, &cfg.left] {
        if !(m.is_empty() || m.len() == 3) {
            return Err(Error::InvalidInput("marker mappings need three columns".into()));
        }
    }
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(cfg.delimiter as u8)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &String| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidInput(format!("column {name:?} not found")))
    };
    let joints: Vec<usize> = cfg.joints.iter().map(col).collect::<Result<_>>()?;
    let right: Vec<usize> = cfg.right.iter().map(col).collect::<Result<_>>()?;
    let left: Vec<usize> = cfg.left.iter().map(col).collect::<Result<_>>()?;

    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |c: usize| -> Result<Option<f64>> {
            let s = rec.get(c).unwrap_or("");
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>()
                .map(Some)
                .map_err(|_| Error::InvalidInput(format!("row {}: cannot parse {s:?}", row + 1)))
        };
        let mut q = Vec::with_capacity(joints.len());
        for &c in &joints {
            let v = num(c)?.ok_or_else(|| Error::InvalidInput(format!("row {}: missing joint value", row + 1)))?;
            q.push(v * cfg.angle_scale);
        }
        let marker = |cols: &[usize]| -> Result<Option<Vector3<f64>>> {
            if cols.is_empty() {
                return Ok(None);
            }
            let v = [num(cols[0])?, num(cols[1])?, num(cols[2])?];
            match v {
                [Some(x), Some(y), Some(z)] => Ok(Some(Vector3::new(x, y, z) * cfg.length_scale)),
                [None, None, None] => Ok(None),
                _ => Err(Error::InvalidInput(format!("row {}: partial marker", row + 1))),
            }
        };
        let sample = Sample {
            q: Configuration(q),
            y_right: marker(&right)?,
            y_left: marker(&left)?,
        };
        if sample.n_markers() == 0 {
            return Err(Error::InvalidInput(format!("row {}: no marker observed", row + 1)));
        }
        out.push(sample);
    }
    Ok(out)
}
