//! Operator data (coupling block, potential, base dynamics), finite
//! restrictions, and eigenvalue counting.

use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::duality::TrigPolynomial;
use crate::error::{Error, Result};
use crate::matkernel::{self, hermitian_eigenvalues, max_abs, singular_values, Complex, ComplexMatrix, GlPath, HermitianMatrix, ZERO};
use crate::scan::OrbitCache;
use crate::tolerance::ToleranceProfile;

/// A point of the base space, in torus coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BasePoint(Vec<f64>);

impl BasePoint {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn origin(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Coordinates reduced into `[0, 1)`.
    pub fn reduced(&self) -> Self {
        Self(self.0.iter().map(|x| wrap_unit(*x)).collect())
    }
}

impl From<f64> for BasePoint {
    fn from(x: f64) -> Self {
        Self(vec![x])
    }
}

impl From<Vec<f64>> for BasePoint {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

pub(crate) fn wrap_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// The map `T` driving the potential.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseDynamics {
    /// `θ ↦ θ + α` on the `d`-torus. Rational independence of `α` is the
    /// caller's responsibility.
    TorusRotation { alpha: Vec<f64> },
    /// The hyperbolic toral automorphism `[[2,1],[1,1]]` on the 2-torus.
    CatMap,
    /// `θ ↦ 2θ` on the circle; not invertible.
    Doubling,
}

impl BaseDynamics {
    pub fn torus(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() || alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput("rotation vector must be non-empty and finite".into()));
        }
        Ok(Self::TorusRotation { alpha: alpha.into_iter().map(wrap_unit).collect() })
    }

    pub fn golden_rotation() -> Self {
        Self::TorusRotation { alpha: vec![(5f64.sqrt() - 1.0) / 2.0] }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::TorusRotation { alpha } => alpha.len(),
            Self::CatMap => 2,
            Self::Doubling => 1,
        }
    }

    pub fn is_invertible(&self) -> bool {
        !matches!(self, Self::Doubling)
    }

    pub fn rotation_vector(&self) -> Option<&[f64]> {
        match self {
            Self::TorusRotation { alpha } => Some(alpha),
            _ => None,
        }
    }

    fn check_dim(&self, theta: &BasePoint) -> Result<()> {
        if theta.dim() == self.dim() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("base point has dimension {}, expected {}", theta.dim(), self.dim())))
        }
    }

    /// `Tⁿθ`, reduced into `[0,1)^d`.
    pub fn advance(&self, theta: &BasePoint, steps: i64) -> Result<BasePoint> {
        self.check_dim(theta)?;
        match self {
            Self::TorusRotation { .. } => Ok(self.lift(theta, steps as f64)?.reduced()),
            Self::CatMap => {
                let (mut x, mut y) = (theta.0[0], theta.0[1]);
                for _ in 0..steps.unsigned_abs() {
                    (x, y) = if steps > 0 { (2.0 * x + y, x + y) } else { (x - y, 2.0 * y - x) };
                    (x, y) = (wrap_unit(x), wrap_unit(y));
                }
                Ok(BasePoint(vec![wrap_unit(x), wrap_unit(y)]))
            }
            Self::Doubling => {
                if steps < 0 {
                    return Err(Error::UnsupportedDirection);
                }
                let mut x = theta.0[0];
                for _ in 0..steps {
                    x = wrap_unit(2.0 * x);
                }
                Ok(BasePoint(vec![wrap_unit(x)]))
            }
        }
    }

    /// Unreduced orbit lift `θ + tα` in `ℝ^d`, for real `t`.
    pub fn lift(&self, theta: &BasePoint, t: f64) -> Result<BasePoint> {
        self.check_dim(theta)?;
        match self {
            Self::TorusRotation { alpha } => Ok(BasePoint(theta.0.iter().zip(alpha).map(|(x, a)| x + t * a).collect())),
            _ => Err(Error::UnsupportedBase),
        }
    }
}

/// One Fourier block `F e^{2πi⟨k,θ⟩}`, always paired with its adjoint term.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierBlock {
    pub frequency: Vec<i64>,
    pub coefficient: ComplexMatrix,
}

/// `f(θ) = F₀ + Σ (F e^{2πi⟨k,θ⟩} + F* e^{−2πi⟨k,θ⟩})`, Hermitian by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigBlocks {
    pub constant: HermitianMatrix,
    pub terms: Vec<FourierBlock>,
}

impl TrigBlocks {
    pub fn eval(&self, theta: &[f64]) -> ComplexMatrix {
        let mut out = self.constant.as_matrix().clone();
        for term in &self.terms {
            let phase: f64 = term.frequency.iter().zip(theta).map(|(k, x)| *k as f64 * x).sum();
            let e = Complex::from_polar(1.0, TAU * phase);
            out += &term.coefficient * e + term.coefficient.adjoint() * e.conj();
        }
        out
    }
}

/// The Hermitian-valued potential `θ ↦ f(θ)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    Free,
    Constant(HermitianMatrix),
    TrigBlocks(TrigBlocks),
    /// Block potential of the dual of a scalar trigonometric potential.
    Dual(TrigPolynomial),
}

impl Potential {
    /// Scalar potential `2λ cos 2πθ` (one Fourier mode).
    pub fn cosine(amplitude: f64) -> Self {
        Self::TrigBlocks(TrigBlocks {
            constant: HermitianMatrix::from_real_diagonal(&[0.0]),
            terms: vec![FourierBlock { frequency: vec![1], coefficient: ComplexMatrix::from_element(1, 1, matkernel::real(amplitude)) }],
        })
    }

    /// The scalar potential `v(θ)` given by a trigonometric polynomial.
    pub fn scalar_trig(v: &TrigPolynomial) -> Self {
        let constant = HermitianMatrix::from_real_diagonal(&[v.coefficient(0).re]);
        let terms = (1..=v.degree() as i64)
            .map(|k| FourierBlock { frequency: vec![k], coefficient: ComplexMatrix::from_element(1, 1, v.coefficient(k)) })
            .collect();
        Self::TrigBlocks(TrigBlocks { constant, terms })
    }

    fn block_dim(&self) -> Option<usize> {
        match self {
            Self::Free => None,
            Self::Constant(h) => Some(h.dim()),
            Self::TrigBlocks(t) => Some(t.constant.dim()),
            Self::Dual(v) => Some(v.degree()),
        }
    }

    fn validate(&self, block_dim: usize, base_dim: usize) -> Result<()> {
        if let Some(d) = self.block_dim() {
            if d != block_dim {
                return Err(Error::InvalidInput(format!("potential blocks are {d}x{d}, coupling is {block_dim}x{block_dim}")));
            }
        }
        if let Self::TrigBlocks(t) = self {
            for term in &t.terms {
                if term.frequency.len() != base_dim {
                    return Err(Error::InvalidInput("Fourier frequency length differs from base dimension".into()));
                }
                if term.coefficient.shape() != (block_dim, block_dim) {
                    return Err(Error::InvalidInput("Fourier coefficient has wrong shape".into()));
                }
                matkernel::ensure_finite(&term.coefficient)?;
            }
        }
        if let Self::Dual(_) = self {
            if base_dim != 1 {
                return Err(Error::InvalidInput("dual potential needs a one-dimensional base".into()));
            }
        }
        Ok(())
    }

    pub fn eval(&self, block_dim: usize, theta: &[f64]) -> ComplexMatrix {
        match self {
            Self::Free => ComplexMatrix::zeros(block_dim, block_dim),
            Self::Constant(h) => h.as_matrix().clone(),
            Self::TrigBlocks(t) => t.eval(theta),
            Self::Dual(v) => v.dual_block(theta[0]),
        }
    }
}

/// `(Hu)_n = C* u_{n−1} + f(T^{n−1}θ) u_n + C u_{n+1}` on `ℓ²(ℤ, ℂᵐ)`,
/// with the coupling block `C` invertible.
#[derive(Debug, Clone)]
pub struct OperatorModel {
    coupling: ComplexMatrix,
    coupling_inv: ComplexMatrix,
    coupling_path: GlPath,
    potential: Potential,
    base: BaseDynamics,
    condition: f64,
    potential_bound: f64,
    tolerance: ToleranceProfile,
}

const BOUND_SAMPLES: usize = 10_000;

impl OperatorModel {
    pub fn new(coupling: ComplexMatrix, potential: Potential, base: BaseDynamics) -> Result<Self> {
        Self::with_tolerance(coupling, potential, base, ToleranceProfile::default())
    }

    pub fn with_tolerance(coupling: ComplexMatrix, potential: Potential, base: BaseDynamics, tolerance: ToleranceProfile) -> Result<Self> {
        if !coupling.is_square() || coupling.nrows() == 0 {
            return Err(Error::InvalidInput("coupling block must be square and non-empty".into()));
        }
        matkernel::ensure_finite(&coupling)?;
        let block_dim = coupling.nrows();
        potential.validate(block_dim, base.dim())?;
        let sv = singular_values(&coupling);
        let coupling_inv = matkernel::inverse(&coupling)?;
        let coupling_path = GlPath::new(&coupling)?;
        let condition = sv[0] / sv[block_dim - 1];
        let mut model = Self { coupling, coupling_inv, coupling_path, potential, base, condition, potential_bound: 0.0, tolerance };
        model.potential_bound = model.sample_potential_bound()?;
        Ok(model)
    }

    /// `m = 1`, `C = 1`, zero potential, golden-mean rotation.
    pub fn free_laplacian() -> Self {
        Self::new(matkernel::identity(1), Potential::Free, BaseDynamics::golden_rotation()).expect("free Laplacian is well formed")
    }

    /// Sup of `‖f‖` over a deterministic Kronecker sample of the base,
    /// checking Hermiticity at every sample.
    fn sample_potential_bound(&self) -> Result<f64> {
        let samples = match self.potential {
            Potential::Free => return Ok(0.0),
            Potential::Constant(_) => 1,
            _ => BOUND_SAMPLES,
        };
        let d = self.base.dim();
        let steps: Vec<f64> = (0..d).map(|i| ((i + 2) as f64).sqrt().fract()).collect();
        let mut bound = 0.0f64;
        for s in 0..samples {
            let theta: Vec<f64> = steps.iter().map(|a| wrap_unit(0.5 + s as f64 * a)).collect();
            let block = self.potential.eval(self.block_dim(), &theta);
            let h = HermitianMatrix::with_tolerance(block, &self.tolerance)?;
            let ev = hermitian_eigenvalues(&h);
            bound = bound.max(ev[0].abs()).max(ev[ev.len() - 1].abs());
        }
        Ok(bound)
    }

    pub fn block_dim(&self) -> usize {
        self.coupling.nrows()
    }

    pub fn coupling(&self) -> &ComplexMatrix {
        &self.coupling
    }

    pub fn coupling_inv(&self) -> &ComplexMatrix {
        &self.coupling_inv
    }

    pub fn coupling_path(&self) -> &GlPath {
        &self.coupling_path
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn base(&self) -> &BaseDynamics {
        &self.base
    }

    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    /// Sampled bound on `sup ‖f(θ)‖`.
    pub fn potential_bound(&self) -> f64 {
        self.potential_bound
    }

    pub fn tolerance(&self) -> &ToleranceProfile {
        &self.tolerance
    }

    /// `‖H‖` bound: `sup‖f‖ + 2‖C‖`.
    pub fn norm_bound(&self) -> f64 {
        self.potential_bound + 2.0 * singular_values(&self.coupling)[0]
    }

    pub fn potential_at(&self, theta: &BasePoint) -> ComplexMatrix {
        self.potential.eval(self.block_dim(), theta.coords())
    }

    pub fn with_base(&self, base: BaseDynamics) -> Result<Self> {
        Self::with_tolerance(self.coupling.clone(), self.potential.clone(), base, self.tolerance)
    }
}

/// The `mN × mN` matrix of `H` restricted to sites `1..=N`, laid out with
/// site `N` in the top-left block.
#[derive(Debug, Clone)]
pub struct FiniteRestriction {
    pub sites: usize,
    pub matrix: HermitianMatrix,
}

pub fn finite_restriction(model: &OperatorModel, theta: &BasePoint, sites: usize) -> Result<FiniteRestriction> {
    if sites == 0 {
        return Err(Error::InvalidInput("restriction needs at least one site".into()));
    }
    let orbit = OrbitCache::build(model, theta, sites)?;
    let m = model.block_dim();
    let dim = m * sites;
    let mut h = ComplexMatrix::zeros(dim, dim);
    let adj = model.coupling.adjoint();
    for row in 0..sites {
        let site = sites - row;
        h.view_mut((row * m, row * m), (m, m)).copy_from(orbit.block(site - 1));
        if row + 1 < sites {
            h.view_mut((row * m, (row + 1) * m), (m, m)).copy_from(&adj);
            h.view_mut(((row + 1) * m, row * m), (m, m)).copy_from(&model.coupling);
        }
    }
    Ok(FiniteRestriction { sites, matrix: HermitianMatrix::symmetrize(h) })
}

/// Block-tridiagonal form of a finite restriction, used for inertia counts
/// in `O(N m³)` without assembling the dense matrix.
#[derive(Debug, Clone)]
pub struct BlockTridiagonal {
    block_dim: usize,
    /// Diagonal blocks in site order `1..=N`, row-major.
    diagonal: Vec<Vec<Complex>>,
    /// `C`, row-major.
    coupling: Vec<Complex>,
    pivot_floor: f64,
}

fn row_major(m: &ComplexMatrix) -> Vec<Complex> {
    let (r, c) = m.shape();
    (0..r).flat_map(|i| (0..c).map(move |j| (i, j))).map(|ij| m[ij]).collect()
}

impl BlockTridiagonal {
    pub fn from_orbit(model: &OperatorModel, orbit: &OrbitCache) -> Self {
        Self::from_blocks(model.coupling(), orbit.blocks().iter().map(row_major).collect())
    }

    pub fn new(model: &OperatorModel, theta: &BasePoint, sites: usize) -> Result<Self> {
        if sites == 0 {
            return Err(Error::InvalidInput("restriction needs at least one site".into()));
        }
        Ok(Self::from_orbit(model, &OrbitCache::build(model, theta, sites)?))
    }

    fn from_blocks(coupling: &ComplexMatrix, diagonal: Vec<Vec<Complex>>) -> Self {
        let c_norm = max_abs(coupling);
        Self { block_dim: coupling.nrows(), diagonal, coupling: row_major(coupling), pivot_floor: 1e-280 * c_norm.max(1.0).powi(2) }
    }

    pub fn sites(&self) -> usize {
        self.diagonal.len()
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn dim(&self) -> usize {
        self.block_dim * self.sites()
    }

    /// Adds `shift[n]·I` to the diagonal block of site `n+1`.
    pub fn with_site_shifts(&self, shift: &[f64]) -> Self {
        let m = self.block_dim;
        let mut out = self.clone();
        for (block, s) in out.diagonal.iter_mut().zip(shift) {
            for i in 0..m {
                block[i * m + i] += s;
            }
        }
        out
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let m = self.block_dim;
        let off: Vec<f64> =
            (0..m).map(|i| (0..m).map(|j| self.coupling[i * m + j].norm() + self.coupling[j * m + i].norm()).sum()).collect();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for block in &self.diagonal {
            for i in 0..m {
                let radius: f64 = (0..m).filter(|&j| j != i).map(|j| block[i * m + j].norm()).sum::<f64>() + off[i];
                lo = lo.min(block[i * m + i].re - radius);
                hi = hi.max(block[i * m + i].re + radius);
            }
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `x`, by Sylvester inertia of a
    /// block `LDL*` factorisation of `H − x`.
    pub fn count_below(&self, x: f64) -> usize {
        if self.block_dim == 1 {
            return self.count_below_scalar(x);
        }
        let m = self.block_dim;
        let mut work = BlockPivotWork::new(m);
        let mut negatives = 0;
        for (n, block) in self.diagonal.iter().enumerate() {
            work.pivot.copy_from_slice(block);
            for i in 0..m {
                work.pivot[i * m + i] -= x;
            }
            if n > 0 {
                work.subtract_schur_complement(&self.coupling);
            }
            negatives += work.factor(self.pivot_floor);
        }
        negatives
    }

    fn count_below_scalar(&self, x: f64) -> usize {
        let c2 = self.coupling[0].norm_sqr();
        let mut d = 1.0;
        let mut negatives = 0;
        for (n, block) in self.diagonal.iter().enumerate() {
            let mut next = block[0].re - x;
            if n > 0 {
                next -= c2 / d;
            }
            if next.abs() < self.pivot_floor {
                next = -self.pivot_floor;
            }
            if next < 0.0 {
                negatives += 1;
            }
            d = next;
        }
        negatives
    }

    /// Number of eigenvalues `≤ energy`, allowing `slack`.
    pub fn count_at_most(&self, energy: f64, slack: f64) -> usize {
        self.count_below(energy + slack)
    }

    /// All eigenvalues, ascending, by bisection on the inertia count until
    /// each bracket is narrower than `tol`.
    pub fn eigenvalues(&self, tol: f64) -> Vec<f64> {
        let (lo, hi) = self.spectral_bounds();
        let (lo, hi) = (lo - 1e-9 * (1.0 + lo.abs()), hi + 1e-9 * (1.0 + hi.abs()));
        let mut out = Vec::with_capacity(self.dim());
        self.bisect(lo, hi, 0, self.dim(), tol, &mut out);
        out
    }

    fn bisect(&self, lo: f64, hi: f64, below_lo: usize, below_hi: usize, tol: f64, out: &mut Vec<f64>) {
        if below_hi == below_lo {
            return;
        }
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            out.extend(std::iter::repeat(mid).take(below_hi - below_lo));
            return;
        }
        let below_mid = self.count_below(mid);
        self.bisect(lo, mid, below_lo, below_mid, tol, out);
        self.bisect(mid, hi, below_mid, below_hi, tol, out);
    }
}

/// Scratch space for one step of the block factorisation.
struct BlockPivotWork {
    m: usize,
    /// Current pivot block `D_n`, overwritten by its `LDL*` factors.
    pivot: Vec<Complex>,
    /// `D_{n-1}⁻¹` from the previous step.
    inverse: Vec<Complex>,
    tmp: Vec<Complex>,
    diag: Vec<f64>,
    col: Vec<Complex>,
}

impl BlockPivotWork {
    fn new(m: usize) -> Self {
        Self { m, pivot: vec![ZERO; m * m], inverse: vec![ZERO; m * m], tmp: vec![ZERO; m * m], diag: vec![0.0; m], col: vec![ZERO; m] }
    }

    /// `D_n −= C* D_{n−1}⁻¹ C`.
    fn subtract_schur_complement(&mut self, c: &[Complex]) {
        let m = self.m;
        // tmp = D⁻¹ C
        for i in 0..m {
            for j in 0..m {
                let mut s = ZERO;
                for k in 0..m {
                    s += self.inverse[i * m + k] * c[k * m + j];
                }
                self.tmp[i * m + j] = s;
            }
        }
        for i in 0..m {
            for j in 0..m {
                let mut s = ZERO;
                for k in 0..m {
                    s += c[k * m + i].conj() * self.tmp[k * m + j];
                }
                self.pivot[i * m + j] -= s;
            }
        }
    }

    /// Factors the Hermitian pivot as `L D L*`, returns the number of
    /// negative entries of `D`, and stores the pivot inverse for the next
    /// step.
    fn factor(&mut self, floor: f64) -> usize {
        let m = self.m;
        let a = &mut self.pivot;
        let d = &mut self.diag;
        let mut negatives = 0;
        for j in 0..m {
            let mut djj = a[j * m + j].re;
            for k in 0..j {
                djj -= d[k] * a[j * m + k].norm_sqr();
            }
            if djj.abs() < floor {
                djj = -floor;
            }
            if djj < 0.0 {
                negatives += 1;
            }
            d[j] = djj;
            for i in j + 1..m {
                let mut s = a[i * m + j];
                for k in 0..j {
                    s -= a[i * m + k] * d[k] * a[j * m + k].conj();
                }
                a[i * m + j] = s / djj;
            }
        }
        // inverse = L⁻* D⁻¹ L⁻¹, column by column
        for col in 0..m {
            let y = &mut self.col;
            y.fill(ZERO);
            y[col] = matkernel::ONE;
            for i in 0..m {
                let mut s = y[i];
                for k in 0..i {
                    s -= a[i * m + k] * y[k];
                }
                y[i] = s;
            }
            for (yi, di) in y.iter_mut().zip(d.iter()) {
                *yi /= di;
            }
            for i in (0..m).rev() {
                let mut s = y[i];
                for k in i + 1..m {
                    s -= a[k * m + i].conj() * y[k];
                }
                y[i] = s;
            }
            for (i, yi) in y.iter().enumerate() {
                self.inverse[i * m + col] = *yi;
            }
        }
        negatives
    }
}

/// `𝒩^N_θ(E)`: fraction of eigenvalues of `H^N` at most `E`.
pub fn eigenvalue_count(model: &OperatorModel, theta: &BasePoint, sites: usize, energy: f64) -> Result<f64> {
    let tri = BlockTridiagonal::new(model, theta, sites)?;
    Ok(tri.count_at_most(energy, model.tolerance.count_slack) as f64 / tri.dim() as f64)
}

/// IDS estimates on an energy grid from a single restriction at `theta`.
pub fn ids(model: &OperatorModel, theta: &BasePoint, sites: usize, energies: &[f64]) -> Result<Vec<f64>> {
    let tri = BlockTridiagonal::new(model, theta, sites)?;
    let slack = model.tolerance.count_slack;
    let dim = tri.dim() as f64;
    Ok(energies.par_iter().map(|&e| tri.count_at_most(e, slack) as f64 / dim).collect())
}

/// IDS averaged over several base points.
pub fn ids_averaged(model: &OperatorModel, thetas: &[BasePoint], sites: usize, energies: &[f64]) -> Result<Vec<f64>> {
    if thetas.is_empty() {
        return Err(Error::InvalidInput("need at least one base point".into()));
    }
    let mut total = vec![0.0; energies.len()];
    for theta in thetas {
        for (t, v) in total.iter_mut().zip(ids(model, theta, sites, energies)?) {
            *t += v;
        }
    }
    Ok(total.into_iter().map(|t| t / thetas.len() as f64).collect())
}
