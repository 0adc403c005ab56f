use thiserror::Error;

/// Errors produced anywhere in the simulator core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operator is not Hermitian (defect {defect:.3e} against norm {norm:.3e})")]
    NotHermitian { defect: f64, norm: f64 },

    #[error("inadequate Fock truncation: {0}")]
    Truncation(String),

    #[error("state pair is not orthonormal (worst defect {defect:.3e})")]
    NotOrthonormal { defect: f64 },

    #[error("integrator step size underflow at t = {t:.6e} (h = {h:.3e})")]
    StepSize { t: f64, h: f64 },

    #[error("integrator exceeded {steps} steps before t = {t:.6e}")]
    TooManySteps { t: f64, steps: usize },

    #[error("positivity violated at t = {t:.6e}: minimum eigenvalue {min_eig:.3e}")]
    Positivity { t: f64, min_eig: f64 },

    #[error("trace drift at t = {t:.6e}: |tr rho - 1| = {drift:.3e}")]
    TraceDrift { t: f64, drift: f64 },

    #[error("quadrature did not converge: worst panel [{a:.6e}, {b:.6e}] error {error:.3e}")]
    Quadrature { a: f64, b: f64, error: f64 },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("level labelling failed: {0}")]
    Labeling(String),

    #[error("transition {m} <-> {n} is not drivable: matrix element {element:.3e}")]
    Undrivable { m: usize, n: usize, element: f64 },

    #[error("at {parameter} = {value}: {source}")]
    AtGridPoint {
        parameter: String,
        value: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
