use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MembraneError {
    #[error("diffusion coefficient of the {side} side is {value} <= 0 at (s={s}, x={x})")]
    NonparabolicCoefficient {
        side: &'static str,
        s: f64,
        x: f64,
        value: f64,
    },
    #[error("q1 + q2 = {sum} at s={s}; the Wentzell condition degenerates")]
    DegenerateWentzell { s: f64, sum: f64 },
    #[error("atom {atom} sits on the membrane at s={s} (|y - h| = {gap})")]
    AtomOnMembrane { atom: usize, s: f64, gap: f64 },
    #[error("time order violated: s={s} must be < t={t}")]
    TimeOrder { s: f64, t: f64 },
    #[error("parametrix series for side {side} did not converge: term sups {sups:?}")]
    ConvergenceFailure { side: usize, sups: Vec<f64> },
    #[error("singular integrand: refinement changed the value from {coarse} to {fine}")]
    SingularIntegrand { coarse: f64, fine: f64 },
    #[error("density mesh covers [{s_min}, {t}] but s={s} was requested")]
    MeshMismatch { s: f64, s_min: f64, t: f64 },
    #[error("time mesh with {nodes} nodes is too coarse (need at least {min})")]
    MeshTooCoarse { nodes: usize, min: usize },
    #[error(
        "successive approximations diverged after {iterations} iterations \
         (contraction ratio {ratio:.3e}, m(delta) = {m_delta:.3e})"
    )]
    SeriesDivergence {
        iterations: usize,
        ratio: f64,
        m_delta: f64,
    },
    #[error("operation requires an empty jump measure")]
    MeasureNotNull,
    #[error("crossing resolution unreliable: {fraction:.3} of steps crossed twice")]
    StepTooLarge { fraction: f64 },
    #[error("invalid input at `{key}`: {reason}")]
    InvalidInput { key: String, reason: String },
}

impl MembraneError {
    pub fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        MembraneError::InvalidInput {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, MembraneError>;
