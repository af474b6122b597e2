//! Numerical thresholds shared by every module.

use serde::{Deserialize, Serialize};

/// Central table of tolerances. `Default` gives the documented values;
/// tests and the CLI can override individual fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceProfile {
    /// Largest entrywise asymmetry accepted before a matrix is symmetrised.
    pub hermitian_asymmetry: f64,
    /// Relative cutoff on `X*Y - Y*X` for Lagrangian frames.
    pub lagrangian: f64,
    /// Relative singular-value cutoff for full rank of a frame.
    pub frame_rank: f64,
    /// Relative singular-value cutoff used for kernel dimensions.
    pub kernel_cutoff: f64,
    /// Smallest singular value of `X - iY` before a frame is degenerate.
    pub degenerate_frame: f64,
    /// Smallest singular value of `A1 + A2 W` before the action is degenerate.
    pub degenerate_action: f64,
    /// Largest accepted phase increment between substeps, in turns.
    pub max_phase_step: f64,
    /// Initial number of substeps per unit time of the homotopy path.
    pub initial_substeps: usize,
    /// Cap on substeps per unit time.
    pub max_substeps: usize,
    /// Eigenvalues within this distance above `E` count as `<= E`.
    pub count_slack: f64,
    /// Maximal IDS variation across a detected gap.
    pub ids_flatness: f64,
    /// Distance below which a value is matched to a gap label.
    pub label_tol: f64,
    /// Search bound on label coefficients.
    pub k_max: i64,
}

impl Default for ToleranceProfile {
    fn default() -> Self {
        Self {
            hermitian_asymmetry: 1e-12,
            lagrangian: 1e-10,
            frame_rank: 1e-10,
            kernel_cutoff: 1e-8,
            degenerate_frame: 1e-12,
            degenerate_action: 1e-12,
            max_phase_step: 0.25,
            initial_substeps: 16,
            max_substeps: 1 << 14,
            count_slack: 1e-12,
            ids_flatness: 2e-3,
            label_tol: 1e-2,
            k_max: 20,
        }
    }
}
