use thiserror::Error;

/// Errors produced by the model, the feedforward inversion, the simulator and
/// the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParams { name: &'static str, reason: String },

    #[error("flux linkage {flux} Wb is at or beyond saturation ({lambda_sat} Wb)")]
    Saturation { flux: f64, lambda_sat: f64 },

    #[error("flatness inversion infeasible: negative radicand at z = {z} m, z'' = {zdd} m/s^2")]
    InfeasibleFlatness { z: f64, zdd: f64 },

    #[error("flatness inversion requires flux {flux} Wb beyond saturation ({lambda_sat} Wb) at z = {z} m")]
    SaturationInfeasible { z: f64, flux: f64, lambda_sat: f64 },

    #[error("flatness inversion singular: zero flux at z = {z} m")]
    SingularFlatness { z: f64 },

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("time {t} s outside trajectory domain [{t0}, {tf}] s")]
    OutOfDomain { t: f64, t0: f64, tf: f64 },

    #[error("sensitivity probe infeasible for component theta_{component} at t = {t} s: {source}")]
    SensitivityInfeasible {
        component: usize,
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("simulation diverged at t = {t} s: {reason}")]
    SimulationDiverged { t: f64, reason: String },

    #[error("Jacobi eigen-solver did not converge within {sweeps} sweeps")]
    EigenNoConvergence { sweeps: usize },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("campaign failed: {0}")]
    Campaign(String),

    #[error("malformed data: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
