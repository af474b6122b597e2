//! Transfer matrices, Lagrangian frames, the Cayley transform and the
//! induced Möbius action on `U(m)`.

use crate::error::{Error, Result};
use crate::matkernel::{
    self, identity, max_abs, singular_values, smallest_singular_value, spectral_norm, Complex, ComplexMatrix, I, ONE, ZERO,
};
use crate::model::{BasePoint, OperatorModel};
use crate::tolerance::ToleranceProfile;

/// The standard form `J = [[0, I], [−I, 0]]`.
pub fn symplectic_form(m: usize) -> ComplexMatrix {
    let mut j = ComplexMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        j[(i, m + i)] = ONE;
        j[(m + i, i)] = -ONE;
    }
    j
}

/// `diag(I, −I)`, the form preserved by Cayley images.
pub fn pseudo_unitary_form(m: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(2 * m, 2 * m, |i, j| match (i == j, i < m) {
        (true, true) => ONE,
        (true, false) => -ONE,
        _ => ZERO,
    })
}

/// `‖A*JA − J‖₂`.
pub fn symplectic_defect(a: &ComplexMatrix) -> f64 {
    let j = symplectic_form(a.nrows() / 2);
    spectral_norm(&(a.adjoint() * &j * a - j))
}

/// `‖Å*QÅ − Q‖₂` with `Q = diag(I, −I)`.
pub fn pseudo_unitary_defect(a: &ComplexMatrix) -> f64 {
    let q = pseudo_unitary_form(a.nrows() / 2);
    spectral_norm(&(a.adjoint() * &q * a - q))
}

/// Inverse of a `J`-symplectic matrix, `A⁻¹ = −J A* J`.
pub fn symplectic_inverse(a: &ComplexMatrix) -> ComplexMatrix {
    let j = symplectic_form(a.nrows() / 2);
    -(&j * a.adjoint() * j)
}

fn blocks(a: &ComplexMatrix) -> [ComplexMatrix; 4] {
    let m = a.nrows() / 2;
    [
        a.view((0, 0), (m, m)).into_owned(),
        a.view((0, m), (m, m)).into_owned(),
        a.view((m, 0), (m, m)).into_owned(),
        a.view((m, m), (m, m)).into_owned(),
    ]
}

fn from_blocks(a1: &ComplexMatrix, a2: &ComplexMatrix, a3: &ComplexMatrix, a4: &ComplexMatrix) -> ComplexMatrix {
    let m = a1.nrows();
    let mut out = ComplexMatrix::zeros(2 * m, 2 * m);
    out.view_mut((0, 0), (m, m)).copy_from(a1);
    out.view_mut((0, m), (m, m)).copy_from(a2);
    out.view_mut((m, 0), (m, m)).copy_from(a3);
    out.view_mut((m, m), (m, m)).copy_from(a4);
    out
}

/// `Â_E = [[C⁻¹(E − f), −C⁻¹C*], [I, 0]]` and its conjugate
/// `A_E = PÂ_EP⁻¹ = [[(E − f)C⁻¹, −C*], [C⁻¹, 0]]` with `P = diag(C, I)`.
#[derive(Debug, Clone)]
pub struct TransferPair {
    pub raw: ComplexMatrix,
    pub symplectic: ComplexMatrix,
}

/// `E − f` for a complex spectral parameter.
fn shifted(energy: Complex, potential_block: &ComplexMatrix) -> ComplexMatrix {
    identity(potential_block.nrows()) * energy - potential_block
}

pub(crate) fn raw_transfer_from_block(model: &OperatorModel, energy: Complex, potential_block: &ComplexMatrix) -> ComplexMatrix {
    let cinv = model.coupling_inv();
    let m = model.block_dim();
    from_blocks(
        &(cinv * shifted(energy, potential_block)),
        &(-(cinv * model.coupling().adjoint())),
        &identity(m),
        &ComplexMatrix::zeros(m, m),
    )
}

pub(crate) fn transfer_from_block(model: &OperatorModel, energy: f64, potential_block: &ComplexMatrix) -> ComplexMatrix {
    let cinv = model.coupling_inv();
    let m = model.block_dim();
    from_blocks(
        &(shifted(matkernel::real(energy), potential_block) * cinv),
        &(-model.coupling().adjoint()),
        cinv,
        &ComplexMatrix::zeros(m, m),
    )
}

pub fn transfer_step(model: &OperatorModel, energy: f64, theta: &BasePoint) -> Result<TransferPair> {
    let block = model.potential_at(theta);
    Ok(TransferPair {
        raw: raw_transfer_from_block(model, matkernel::real(energy), &block),
        symplectic: transfer_from_block(model, energy, &block),
    })
}

/// `A_{E,n}(θ)`: forward product for `n > 0`, identity for `n = 0`, and the
/// inverse of `A_{E,−n}(T^nθ)` for `n < 0`.
pub fn transfer_product(model: &OperatorModel, energy: f64, theta: &BasePoint, n: i64) -> Result<ComplexMatrix> {
    let m = model.block_dim();
    let base = model.base();
    if n < 0 && !base.is_invertible() {
        return Err(Error::UnsupportedDirection);
    }
    let mut out = identity(2 * m);
    if n > 0 {
        for k in 0..n {
            let p = base.advance(theta, k)?;
            out = transfer_from_block(model, energy, &model.potential_at(&p)) * out;
        }
    } else {
        for k in 1..=n.unsigned_abs() as i64 {
            let p = base.advance(theta, -k)?;
            out = symplectic_inverse(&transfer_from_block(model, energy, &model.potential_at(&p))) * out;
        }
    }
    Ok(out)
}

/// `Â_{z,n}(θ)` for complex `z`, `n ≥ 0`.
pub fn raw_transfer_product(model: &OperatorModel, energy: Complex, theta: &BasePoint, n: usize) -> Result<ComplexMatrix> {
    let mut out = identity(2 * model.block_dim());
    for k in 0..n {
        let p = model.base().advance(theta, k as i64)?;
        out = raw_transfer_from_block(model, energy, &model.potential_at(&p)) * out;
    }
    Ok(out)
}

/// The Cayley element `𝒞 = (1/√(2i)) [[I, −iI], [I, iI]]`, unitary.
pub fn cayley_element(m: usize) -> ComplexMatrix {
    let scale = ONE / Complex::new(1.0, 1.0);
    let id = identity(m);
    from_blocks(&id, &(&id * -I), &id, &(&id * I)) * scale
}

/// `Å = 𝒞A𝒞⁻¹`.
pub fn cayley(a: &ComplexMatrix) -> ComplexMatrix {
    let c = cayley_element(a.nrows() / 2);
    &c * a * c.adjoint()
}

/// A `2m × m` frame `[X; Y]` of full rank with `X*Y = Y*X`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianFrame {
    stacked: ComplexMatrix,
}

impl LagrangianFrame {
    pub fn new(x: ComplexMatrix, y: ComplexMatrix) -> Result<Self> {
        Self::with_tolerance(x, y, &ToleranceProfile::default())
    }

    pub fn with_tolerance(x: ComplexMatrix, y: ComplexMatrix, tol: &ToleranceProfile) -> Result<Self> {
        if x.shape() != y.shape() || !x.is_square() {
            return Err(Error::InvalidInput("frame blocks must be square of equal size".into()));
        }
        matkernel::ensure_finite(&x)?;
        matkernel::ensure_finite(&y)?;
        let frame = Self::from_stacked(stack(&x, &y));
        let s = singular_values(&frame.stacked);
        let (hi, lo) = (s[0], s[s.len() - 1]);
        if !(lo > tol.frame_rank * hi) {
            return Err(Error::InvalidInput(format!("frame is rank deficient (σ_min/σ_max = {:.3e})", lo / hi)));
        }
        let asym = max_abs(&(x.adjoint() * &y - y.adjoint() * &x));
        if asym > tol.lagrangian * hi * hi {
            return Err(Error::InvalidInput(format!("frame is not Lagrangian (X*Y − Y*X = {asym:.3e})")));
        }
        Ok(frame)
    }

    pub(crate) fn from_stacked(stacked: ComplexMatrix) -> Self {
        Self { stacked }
    }

    /// `[I; 0]`.
    pub fn horizontal(m: usize) -> Self {
        Self::from_stacked(stack(&identity(m), &ComplexMatrix::zeros(m, m)))
    }

    /// `[0; I]`.
    pub fn vertical(m: usize) -> Self {
        Self::from_stacked(stack(&ComplexMatrix::zeros(m, m), &identity(m)))
    }

    pub fn block_dim(&self) -> usize {
        self.stacked.ncols()
    }

    pub fn x(&self) -> ComplexMatrix {
        let m = self.block_dim();
        self.stacked.view((0, 0), (m, m)).into_owned()
    }

    pub fn y(&self) -> ComplexMatrix {
        let m = self.block_dim();
        self.stacked.view((m, 0), (m, m)).into_owned()
    }

    pub fn stacked(&self) -> &ComplexMatrix {
        &self.stacked
    }

    /// `AΛ`, without renormalisation.
    pub fn transformed(&self, a: &ComplexMatrix) -> Self {
        Self::from_stacked(a * &self.stacked)
    }

    /// `ΛR`, the same Lagrangian plane for invertible `R`.
    pub fn right_multiplied(&self, r: &ComplexMatrix) -> Self {
        Self::from_stacked(&self.stacked * r)
    }

    /// Orthonormal frame spanning the same plane.
    pub fn orthonormalized(&self) -> Self {
        Self::from_stacked(matkernel::orthonormalize(&self.stacked))
    }

    /// `det(X + iY) / det(X − iY)` normalised to the unit circle, i.e.
    /// `det W_Λ` without forming `W`.
    pub fn det_phase(&self) -> Complex {
        let (x, y) = (self.x(), self.y());
        let q = matkernel::determinant(&(&x + &y * I)) / matkernel::determinant(&(&x - &y * I));
        q / q.norm()
    }
}

fn stack(x: &ComplexMatrix, y: &ComplexMatrix) -> ComplexMatrix {
    let m = x.nrows();
    let mut s = ComplexMatrix::zeros(2 * m, x.ncols());
    s.view_mut((0, 0), x.shape()).copy_from(x);
    s.view_mut((m, 0), y.shape()).copy_from(y);
    s
}

/// A unitary `m × m` matrix, the image of a Lagrangian plane.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryPoint(ComplexMatrix);

impl UnitaryPoint {
    pub fn new(w: ComplexMatrix) -> Result<Self> {
        matkernel::ensure_finite(&w)?;
        if !w.is_square() || matkernel::unitary_defect(&w) >= 1e-8 {
            return Err(Error::InvalidInput("matrix is not unitary".into()));
        }
        Ok(Self(w))
    }

    pub fn identity(m: usize) -> Self {
        Self(identity(m))
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn det(&self) -> Complex {
        let d = matkernel::determinant(&self.0);
        d / d.norm()
    }

    /// Principal `arg det W / 2π`, in `(−1/2, 1/2]`.
    pub fn det_turns(&self) -> f64 {
        turns(self.det())
    }

    /// Eigenvalue phases in turns, each in `(−1/2, 1/2]`.
    pub fn eigenphases(&self) -> Vec<f64> {
        let t = nalgebra::Schur::new(self.0.clone()).unpack().1;
        (0..t.nrows()).map(|i| turns(t[(i, i)])).collect()
    }
}

/// Principal argument of a unit complex number in turns, `(−1/2, 1/2]`.
pub fn turns(z: Complex) -> f64 {
    let t = z.arg() / std::f64::consts::TAU;
    if t <= -0.5 {
        t + 1.0
    } else {
        t
    }
}

/// `W_Λ = (X + iY)(X − iY)⁻¹`.
pub fn frame_to_unitary(frame: &LagrangianFrame) -> Result<UnitaryPoint> {
    let (x, y) = (frame.x(), frame.y());
    let denom = &x - &y * I;
    let scale = singular_values(frame.stacked())[0];
    let sigma_min = smallest_singular_value(&denom);
    if sigma_min < 1e-12 * scale {
        return Err(Error::DegenerateFrame { sigma_min });
    }
    let inv = denom.try_inverse().ok_or(Error::DegenerateFrame { sigma_min })?;
    Ok(UnitaryPoint((x + y * I) * inv))
}

/// `W ↦ (Å₃ + Å₄W)(Å₁ + Å₂W)⁻¹`.
pub fn mobius_act(cayley_image: &ComplexMatrix, w: &UnitaryPoint) -> Result<UnitaryPoint> {
    let [a1, a2, a3, a4] = blocks(cayley_image);
    let denom = a1 + a2 * w.as_matrix();
    let sigma_min = smallest_singular_value(&denom);
    let scale = spectral_norm(cayley_image).max(1.0);
    if sigma_min < 1e-12 * scale {
        return Err(Error::DegenerateAction { sigma_min });
    }
    let inv = denom.try_inverse().ok_or(Error::DegenerateAction { sigma_min })?;
    let out = (a3 + a4 * w.as_matrix()) * inv;
    UnitaryPoint::new(out).map_err(|_| Error::DegenerateAction { sigma_min })
}

/// Determinant of `W_Λ` from the frame and the dimension of `ker Y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelTest {
    pub det_w: Complex,
    pub dim_fix: usize,
}

/// `det W = det(X + iY) det(X* + iY*) / det(X*X + Y*Y)` and
/// `dim ker Y`, which equals the multiplicity of the eigenvalue 1 of `W`.
pub fn det_kernel_test(frame: &LagrangianFrame) -> KernelTest {
    let (x, y) = (frame.x(), frame.y());
    let num = matkernel::determinant(&(&x + &y * I)) * matkernel::determinant(&(x.adjoint() + y.adjoint() * I));
    let den = matkernel::determinant(&(x.adjoint() * &x + y.adjoint() * &y));
    let scale = singular_values(frame.stacked())[0];
    KernelTest { det_w: num / den, dim_fix: matkernel::kernel_dim(&y, scale, ToleranceProfile::default().kernel_cutoff) }
}
