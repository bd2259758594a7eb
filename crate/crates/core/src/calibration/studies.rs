//! Ablations over parameter groups and test error versus calibration set size.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::calibrate::{calibrate_and_test, CalibrationOptions, CalibrationReport};
use super::measure::Sample;
use super::params::{ActiveMask, ParamGroup, ParamLayout, Prior};
use crate::error::{Error, Result};
use crate::model::RobotModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    /// Start from closure-only and add one group at a time.
    AddOne,
    /// Start from the full model and drop one group at a time.
    LeaveOneOut,
}

impl std::str::FromStr for AblationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add_one" | "add-one" => Ok(AblationMode::AddOne),
            "leave_one_out" | "leave-one-out" => Ok(AblationMode::LeaveOneOut),
            other => Err(Error::InvalidInput(format!("unknown ablation mode '{other}'"))),
        }
    }
}

const LADDER: [(ParamGroup, &str); 4] = [
    (ParamGroup::JointOffsets, "joint offsets"),
    (ParamGroup::Geometry, "geometry"),
    (ParamGroup::JointElasticity, "joint elasticity"),
    (ParamGroup::TransversalElasticity, "transversal elasticity"),
];

/// Labelled group sets, in table column order.
pub fn ablation_configurations(mode: AblationMode) -> Vec<(String, BTreeSet<ParamGroup>)> {
    match mode {
        AblationMode::AddOne => {
            let mut groups: BTreeSet<ParamGroup> = [ParamGroup::Closure].into_iter().collect();
            let mut out = vec![("nominal".to_string(), groups.clone())];
            for (g, name) in LADDER {
                groups.insert(g);
                out.push((format!("+{name}"), groups.clone()));
            }
            out
        }
        AblationMode::LeaveOneOut => {
            let full = ParamGroup::full_model();
            let mut out: Vec<_> = LADDER
                .iter()
                .map(|(g, name)| {
                    let mut s = full.clone();
                    s.remove(g);
                    (format!("-{name}"), s)
                })
                .collect();
            out.push(("full".to_string(), full));
            out
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub groups: Vec<ParamGroup>,
    pub report: CalibrationReport,
}

pub fn ablation_study(
    model: &RobotModel,
    train: &[Sample],
    test: &[Sample],
    prior: &Prior,
    mode: AblationMode,
    options: &CalibrationOptions,
) -> Result<Vec<AblationRow>> {
    let layout = ParamLayout::new(model, &prior.mean);
    ablation_configurations(mode)
        .into_iter()
        .map(|(label, groups)| {
            log::info!("ablation: calibrating '{label}'");
            let report = calibrate_and_test(model, train, test, prior, &layout.mask(&groups), options)?;
            Ok(AblationRow {
                label,
                groups: groups.into_iter().collect(),
                report,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSizeRow {
    pub size: usize,
    /// Mean over repeats of the mean test error (m).
    pub mean: f64,
    /// Sample standard deviation over repeats (m).
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Mean test error of every repeat (m).
    pub errors: Vec<f64>,
}

/// For every size draws `repeats` random subsets of `pool`, calibrates on
/// each and records the mean test error.
#[allow(clippy::too_many_arguments)]
pub fn set_size_study(
    model: &RobotModel,
    pool: &[Sample],
    test: &[Sample],
    prior: &Prior,
    mask: &ActiveMask,
    sizes: &[usize],
    repeats: usize,
    seed: u64,
    options: &CalibrationOptions,
) -> Result<Vec<SetSizeRow>> {
    if repeats == 0 {
        return Err(Error::InvalidInput("repeats must be positive".into()));
    }
    if let Some(s) = sizes.iter().find(|&&s| s == 0 || s > pool.len()) {
        return Err(Error::InvalidInput(format!(
            "set size {s} not in 1..={}",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let mut errors = Vec::with_capacity(repeats);
        if size == pool.len() {
            // Every subset is the whole pool.
            let rep = calibrate_and_test(model, pool, test, prior, mask, options)?;
            let e = rep.test_error.expect("test error requested").combined.mean;
            errors.resize(repeats, e);
        } else {
            for r in 0..repeats {
                let mut idx = index::sample(&mut rng, pool.len(), size).into_vec();
                idx.sort_unstable();
                let subset: Vec<Sample> = idx.iter().map(|&i| pool[i].clone()).collect();
                log::info!("set size {size}: repeat {}/{repeats}", r + 1);
                let rep = calibrate_and_test(model, &subset, test, prior, mask, options)?;
                errors.push(rep.test_error.expect("test error requested").combined.mean);
            }
        }
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let std = if errors.len() > 1 {
            (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        rows.push(SetSizeRow {
            size,
            mean,
            std,
            min: errors.iter().copied().fold(f64::INFINITY, f64::min),
            max: errors.iter().copied().fold(0.0, f64::max),
            errors,
        });
    }
    Ok(rows)
}
