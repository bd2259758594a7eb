//! File formats: JSON for models, parameters and reports, CSV for samples
//! and plot-ready tables. Every writer goes through [`write_atomic`].

mod dataset;
mod model_file;
mod tables;

pub use dataset::{read_dataset, read_dataset_with, write_dataset, IngestConfig};
pub use model_file::{
    load_model, load_params, load_prior, load_problems, model_from_json, model_to_json, params_from_json,
    params_to_json, save_model, save_params, save_problems, ComplianceUnit, PriorFile, Units,
};
pub use tables::{
    ablation_csv, benchmark_csv, convergence_csv, histogram_csv, residuals_csv, set_size_csv, ConvergenceCurve,
};

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::Result;

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&s)?)
}
