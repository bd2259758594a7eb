//! Marker-based calibration: measurement model, MAP identification with
//! Gaussian priors, error reports and studies.

mod calibrate;
mod lm;
mod measure;
mod params;
mod report;
mod studies;

pub use calibrate::{calibrate, calibrate_and_test, sample_starts, CalibrationOptions, CalibrationReport, StartSummary};
pub use lm::{levenberg_marquardt, LeastSquares, LmReport, LmSettings, Termination};
pub use measure::{measure, objective, CalibrationProblem, Sample};
pub(crate) use measure::markers_from_frames;
pub use params::{
    ActiveMask, CalibrationParams, ClosureFrames, ParamGroup, ParamInfo, ParamKind, ParamLayout, Prior, PriorWidths,
    DEFAULT_SIGMA_M,
};
pub use report::{evaluate, ErrorReport, ErrorStats, Histogram, DEFAULT_BIN_WIDTH};
pub use studies::{ablation_configurations, ablation_study, set_size_study, AblationMode, AblationRow, SetSizeRow};
