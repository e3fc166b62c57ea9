use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("solid overlap: {0}")]
    SolidOverlap(String),
    #[error("fluid not connected ({components} components)")]
    FluidNotConnected { components: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    LinearSolver { iterations: usize, residual: f64 },
    #[error("flow solver did not converge: residual history {history:?}")]
    FlowNotConverged { history: Vec<f64> },
    #[error("zero flow: mean speed is zero")]
    ZeroFlow,
    #[error("eigen solve did not converge in {iterations} iterations (res_phi {res_phi:e}, res_adj {res_adj:e}, lambda error {lambda_error:e})")]
    SpectralNotConverged {
        iterations: usize,
        res_phi: f64,
        res_adj: f64,
        lambda_error: f64,
    },
    #[error("non-principal convergence: lambda = {0}")]
    NonPrincipal(f64),
    #[error("corrector did not converge: {0}")]
    CorrectorNotConverged(String),
    #[error("solvability violated: {0}")]
    Solvability(String),
    #[error("effective dispersion not positive definite: {0:?}")]
    NotPositiveDefinite([[f64; 2]; 2]),
    #[error("ill-posed auxiliary problem: Da = 0 with nonzero boundary data")]
    IllPosedAuxiliary,
    #[error("solute fully consumed before the rescaling cell (average {0:e})")]
    FullyConsumed(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
