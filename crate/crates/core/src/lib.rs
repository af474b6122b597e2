//! Spectral computations for block Schrödinger operators
//! `(Hu)_n = C* u_{n−1} + f(T^{n−1}θ) u_n + C u_{n+1}` on `ℓ²(ℤ, ℂᵐ)`
//! driven by ergodic base dynamics: integrated density of states, fibered
//! rotation numbers, uniform hyperbolicity, gap labels, Aubry duality and
//! spectra under random diagonal perturbations.

// `!(a < b)` is used on purpose so that NaN falls into the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cocycle;
pub mod duality;
pub mod error;
pub mod gaps;
pub mod hyperbolicity;
pub mod matkernel;
pub mod model;
pub mod perturb;
pub mod random;
pub mod rotation;
pub mod scan;
pub mod tolerance;

pub use cocycle::{LagrangianFrame, UnitaryPoint};
pub use error::{Error, Result};
pub use matkernel::{Complex, ComplexMatrix, HermitianMatrix};
pub use model::{BaseDynamics, BasePoint, OperatorModel, Potential};
pub use tolerance::ToleranceProfile;
