use thiserror::Error;

/// Errors raised across the identification and control pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("simulation fault at t = {time} s: {reason}")]
    SimulationFault { time: f64, reason: String },

    #[error("equilibrium not found after {iterations} Newton iterations (residual {residual:.3e})")]
    EquilibriumNotFound { iterations: usize, residual: f64 },

    #[error("infeasible setpoint: equilibrium input {input:?} lies outside the input box")]
    InfeasibleSetpoint { input: Vec<f64> },

    #[error("linearization is not Schur stable (spectral radius {spectral_radius:.6})")]
    NotSchurStable { spectral_radius: f64 },

    #[error("structural check failed: reachable={reachable}, reconstructible={reconstructible}, dc gain nonsingular={dc_gain_nonsingular}")]
    StructuralCheck {
        reachable: bool,
        reconstructible: bool,
        dc_gain_nonsingular: bool,
    },

    #[error("singular dc gain C (I - A)^-1 B")]
    SingularDcGain,

    #[error("integrator gain tuning failed: {0}")]
    Tuning(String),

    #[error("internal inconsistency: {0}")]
    Inconsistent(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    #[error("contraction margin {margin:.4} is not below 1 after {attempts} training attempts")]
    NotContractive { margin: f64, attempts: usize },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Tags an error with the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub(crate) fn dim_check(ok: bool, what: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension(what()))
    }
}
