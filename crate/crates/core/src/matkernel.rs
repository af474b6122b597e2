//! Dense complex linear algebra: Hermitian eigensolver, SVD, determinants
//! with phase, and an invertible path from the identity to a given matrix.

use nalgebra::{DMatrix, Schur, SymmetricEigen, LU};

use crate::error::{Error, Result};
use crate::tolerance::ToleranceProfile;

pub type Complex = nalgebra::Complex<f64>;
pub type ComplexMatrix = DMatrix<Complex>;

pub const ZERO: Complex = Complex::new(0.0, 0.0);
pub const ONE: Complex = Complex::new(1.0, 0.0);
pub const I: Complex = Complex::new(0.0, 1.0);

pub fn real(x: f64) -> Complex {
    Complex::new(x, 0.0)
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

pub fn zeros(rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::zeros(rows, cols)
}

/// Builds a matrix from row-major entries, rejecting size mismatches and
/// non-finite values.
pub fn from_row_major(rows: usize, cols: usize, entries: &[Complex]) -> Result<ComplexMatrix> {
    if entries.len() != rows * cols {
        return Err(Error::InvalidInput(format!("expected {} entries for a {rows}x{cols} matrix, got {}", rows * cols, entries.len())));
    }
    let m = ComplexMatrix::from_row_slice(rows, cols, entries);
    ensure_finite(&m)?;
    Ok(m)
}

pub fn ensure_finite(m: &ComplexMatrix) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("matrix has non-finite entries".into()))
    }
}

fn ensure_square(m: &ComplexMatrix) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("expected a square matrix, got {}x{}", m.nrows(), m.ncols())))
    }
}

/// Largest entry modulus.
pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Operator 2-norm.
pub fn spectral_norm(m: &ComplexMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// `‖M*M − I‖₂`.
pub fn unitary_defect(m: &ComplexMatrix) -> f64 {
    spectral_norm(&(m.adjoint() * m - identity(m.ncols())))
}

/// A Hermitian matrix, exactly symmetrised on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(ComplexMatrix);

impl HermitianMatrix {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(m, &ToleranceProfile::default())
    }

    pub fn with_tolerance(m: ComplexMatrix, tol: &ToleranceProfile) -> Result<Self> {
        ensure_square(&m)?;
        ensure_finite(&m)?;
        let asym = max_abs(&(&m - m.adjoint()));
        let scale = max_abs(&m).max(1.0);
        if asym > tol.hermitian_asymmetry * scale {
            return Err(Error::InvalidInput(format!("matrix is not Hermitian (asymmetry {asym:.3e})")));
        }
        Ok(Self::symmetrize(m))
    }

    /// Replaces `m` by `(m + m*)/2` without checking its asymmetry.
    pub fn symmetrize(m: ComplexMatrix) -> Self {
        let h = (&m + m.adjoint()) * real(0.5);
        Self(h)
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self(ComplexMatrix::from_fn(n, n, |i, j| if i == j { real(d[i]) } else { ZERO }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_inner(self) -> ComplexMatrix {
        self.0
    }
}

/// Eigenvalues in ascending order with matching unitary eigenvectors.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

/// Multiplies each column by a unit phase so its first non-negligible
/// component is real and positive.
fn fix_column_phases(v: &mut ComplexMatrix) {
    for mut col in v.column_iter_mut() {
        let scale = col.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        if let Some(z) = col.iter().copied().find(|z| z.norm() > 1e-8 * scale) {
            let phase = z.conj() / z.norm();
            col.iter_mut().for_each(|x| *x *= phase);
        }
    }
}

pub fn hermitian_eigs(m: &HermitianMatrix) -> Result<Eigen> {
    ensure_finite(m.as_matrix())?;
    let n = m.dim();
    let eig = SymmetricEigen::new(m.as_matrix().clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = ComplexMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    fix_column_phases(&mut vectors);
    Ok(Eigen { values, vectors })
}

/// Eigenvalues only, ascending.
pub fn hermitian_eigenvalues(m: &HermitianMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = m.as_matrix().clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// `M = U diag(σ) V*` with `σ` descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: ComplexMatrix,
    pub singular_values: Vec<f64>,
    pub v: ComplexMatrix,
}

pub fn svd(m: &ComplexMatrix) -> Result<Svd> {
    ensure_finite(m)?;
    let dec = m.clone().svd(true, true);
    let (u, v_t) = match (dec.u, dec.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::InvalidInput("singular value decomposition failed".into())),
    };
    let k = dec.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| dec.singular_values[b].total_cmp(&dec.singular_values[a]));
    let singular_values = order.iter().map(|&i| dec.singular_values[i]).collect();
    let u = ComplexMatrix::from_fn(u.nrows(), k, |i, j| u[(i, order[j])]);
    let v = ComplexMatrix::from_fn(v_t.ncols(), k, |i, j| v_t[(order[j], i)].conj());
    Ok(Svd { u, singular_values, v })
}

/// Singular values, descending.
pub fn singular_values(m: &ComplexMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn smallest_singular_value(m: &ComplexMatrix) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// Modulus and principal argument of a determinant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetArg {
    pub modulus: f64,
    /// In `(−π, π]`.
    pub argument: f64,
}

impl DetArg {
    pub fn value(&self) -> Complex {
        Complex::from_polar(self.modulus, self.argument)
    }
}

fn principal_arg(z: Complex) -> f64 {
    let a = z.arg();
    if a <= -std::f64::consts::PI {
        a + 2.0 * std::f64::consts::PI
    } else {
        a
    }
}

/// Determinant as modulus and phase, accumulated from the LU factors in
/// logarithmic form so large or tiny products do not over- or underflow.
pub fn det_with_arg(m: &ComplexMatrix) -> Result<DetArg> {
    ensure_square(m)?;
    if m.nrows() == 0 {
        return Ok(DetArg { modulus: 1.0, argument: 0.0 });
    }
    let lu = LU::new(m.clone());
    let sign: Complex = lu.p().determinant();
    let u = lu.u();
    let mut log_mod = 0.0;
    let mut unit = sign;
    for i in 0..u.nrows() {
        let d = u[(i, i)];
        let r = d.norm();
        if r == 0.0 {
            return Ok(DetArg { modulus: 0.0, argument: 0.0 });
        }
        log_mod += r.ln();
        unit *= d / r;
        unit /= unit.norm();
    }
    Ok(DetArg { modulus: log_mod.exp(), argument: principal_arg(unit) })
}

pub fn determinant(m: &ComplexMatrix) -> Complex {
    match m.nrows() {
        0 => ONE,
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        _ => m.clone().determinant(),
    }
}

/// Inverse, failing when the smallest singular value is below `1e-14` of
/// the largest.
pub fn inverse(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    ensure_square(m)?;
    let s = singular_values(m);
    let (hi, lo) = (s.first().copied().unwrap_or(0.0), s.last().copied().unwrap_or(0.0));
    if !(lo > 1e-14 * hi) {
        return Err(Error::SingularMatrix { sigma_min: lo });
    }
    m.clone().try_inverse().ok_or(Error::SingularMatrix { sigma_min: lo })
}

/// Orthonormal basis of the column span of a full-rank tall matrix.
pub fn orthonormalize(m: &ComplexMatrix) -> ComplexMatrix {
    m.clone().qr().q()
}

/// Sine of the largest principal angle between the column spans of two
/// matrices with orthonormal columns of equal width.
pub fn subspace_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    let s = smallest_singular_value(&(a.adjoint() * b)).min(1.0);
    (1.0 - s * s).max(0.0).sqrt()
}

/// Dimension of the kernel, using a singular-value cutoff relative to
/// `scale`.
pub fn kernel_dim(m: &ComplexMatrix, scale: f64, cutoff: f64) -> usize {
    let s = singular_values(m);
    let missing = m.ncols().saturating_sub(s.len());
    missing + s.iter().filter(|&&x| x <= cutoff * scale).count()
}

/// The path `t ↦ exp(t log Q) P^t` built from the polar decomposition
/// `C = QP`. Precomputes both spectral decompositions so repeated
/// evaluation is cheap.
#[derive(Debug, Clone)]
pub struct GlPath {
    unitary_basis: ComplexMatrix,
    unitary_phases: Vec<f64>,
    positive_basis: ComplexMatrix,
    positive_values: Vec<f64>,
}

impl GlPath {
    pub fn new(c: &ComplexMatrix) -> Result<Self> {
        ensure_square(c)?;
        let dec = svd(c)?;
        let hi = dec.singular_values.first().copied().unwrap_or(0.0);
        let lo = dec.singular_values.last().copied().unwrap_or(0.0);
        if !(lo > 1e-14 * hi) {
            return Err(Error::SingularMatrix { sigma_min: lo });
        }
        let q = &dec.u * dec.v.adjoint();
        let (basis, t) = Schur::new(q).unpack();
        let phases = (0..t.nrows()).map(|i| principal_arg(t[(i, i)])).collect();
        Ok(Self { unitary_basis: basis, unitary_phases: phases, positive_basis: dec.v, positive_values: dec.singular_values })
    }

    fn assemble(&self, t: f64, sign: f64) -> (ComplexMatrix, ComplexMatrix) {
        let n = self.unitary_phases.len();
        let rot =
            ComplexMatrix::from_fn(n, n, |i, j| if i == j { Complex::from_polar(1.0, sign * t * self.unitary_phases[i]) } else { ZERO });
        let stretch = ComplexMatrix::from_fn(n, n, |i, j| if i == j { real(self.positive_values[i].powf(sign * t)) } else { ZERO });
        let u = &self.unitary_basis * rot * self.unitary_basis.adjoint();
        let p = &self.positive_basis * stretch * self.positive_basis.adjoint();
        (u, p)
    }

    pub fn eval(&self, t: f64) -> ComplexMatrix {
        let (u, p) = self.assemble(t, 1.0);
        u * p
    }

    /// `V(t)⁻¹`, assembled from the same decompositions.
    pub fn eval_inverse(&self, t: f64) -> ComplexMatrix {
        let (u, p) = self.assemble(t, -1.0);
        p * u
    }
}

/// `V(t)` for a single `t`; see [`GlPath`].
pub fn gl_path(c: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    if !t.is_finite() {
        return Err(Error::InvalidInput("path parameter must be finite".into()));
    }
    Ok(GlPath::new(c)?.eval(t))
}
