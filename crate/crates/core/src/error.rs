use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Parameter or configuration dimensions do not match the model.
    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The damped fixed-point iteration for the torque equilibrium hit its
    /// iteration cap. `trace` holds the residual after every evaluation.
    #[error("torque equilibrium did not converge after {iterations} iterations (residual {residual:.3e} rad)")]
    EquilibriumNotConverged {
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },

    /// Every multistart branch of the calibration failed.
    #[error("calibration failed in all {} starts", traces.len())]
    OptimizationFailed { traces: Vec<String> },

    #[error("pose sampling infeasible: {accepted} of {attempts} attempts accepted")]
    Infeasible { attempts: u64, accepted: usize },

    #[error("planner did not converge within {iterations} outer iterations")]
    PlannerNotConverged { iterations: usize, trace: Vec<f64> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of a numerical procedure rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::EquilibriumNotConverged { .. }
                | Error::OptimizationFailed { .. }
                | Error::Infeasible { .. }
                | Error::PlannerNotConverged { .. }
        )
    }
}
