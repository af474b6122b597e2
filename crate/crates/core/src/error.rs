use thiserror::Error;

/// Failures reported by the numerical kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("matrix is singular (smallest singular value {sigma_min:.3e})")]
    SingularMatrix { sigma_min: f64 },
    #[error("backward iteration requested on a non-invertible base map")]
    UnsupportedDirection,
    #[error("degenerate Lagrangian frame: X - iY has smallest singular value {sigma_min:.3e}")]
    DegenerateFrame { sigma_min: f64 },
    #[error("degenerate Möbius action: A1 + A2 W has smallest singular value {sigma_min:.3e}")]
    DegenerateAction { sigma_min: f64 },
    #[error("phase refinement exhausted after {substeps} substeps")]
    RefinementExhausted { substeps: usize },
    #[error("operation requires a torus-rotation base")]
    UnsupportedBase,
    #[error("sampling grid too coarse: phase step of {step:.3} turns")]
    RefineGrid { step: f64 },
    #[error("spectral set is empty")]
    EmptySet,
    #[error("invalid random law: {0}")]
    InvalidLaw(String),
    #[error("leading trigonometric coefficient vanishes")]
    DegreeZeroLeading,
}

pub type Result<T> = std::result::Result<T, Error>;
