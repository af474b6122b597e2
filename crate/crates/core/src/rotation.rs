//! Fibered rotation numbers by continuous tracking of `arg det W` along an
//! explicit path from the identity to the transfer matrices, plus
//! eigenphase curves, the characteristic-polynomial identity and the
//! rotation shift under conjugation.

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;

use itertools::Itertools;
use rayon::prelude::*;

use crate::cocycle::{frame_to_unitary, raw_transfer_from_block, transfer_from_block, turns, LagrangianFrame, UnitaryPoint};
use crate::error::{Error, Result};
use crate::matkernel::{self, identity, real, Complex, ComplexMatrix, I};
use crate::model::{finite_restriction, BasePoint, OperatorModel};
use crate::scan::OrbitCache;
use crate::tolerance::ToleranceProfile;

/// `D = E − f − CC* − I`, the shear used by the path.
fn path_shear(model: &OperatorModel, energy: f64, block: &ComplexMatrix) -> ComplexMatrix {
    let m = model.block_dim();
    identity(m) * real(energy - 1.0) - block - model.coupling() * model.coupling().adjoint()
}

/// `P^s = G₁⁻¹ G₂(s) G₁` on `[0, 1]` at a point with potential `block`,
/// where `G₁ = [[I, −CC*], [0, I]]` and
/// `G₂(s) = [[I, sD], [0, I]] [[I, 0], [sI, I]] diag(V(s)⁻¹, V(s)*)`.
fn unit_path_matrix(model: &OperatorModel, energy: f64, block: &ComplexMatrix, s: f64) -> ComplexMatrix {
    let m = model.block_dim();
    let path = model.coupling_path();
    let gram = model.coupling() * model.coupling().adjoint();
    let shear = path_shear(model, energy, block);
    let mut g1 = identity(2 * m);
    g1.view_mut((0, m), (m, m)).copy_from(&(-&gram));
    let mut g1_inv = identity(2 * m);
    g1_inv.view_mut((0, m), (m, m)).copy_from(&gram);
    let mut upper = identity(2 * m);
    upper.view_mut((0, m), (m, m)).copy_from(&(shear * real(s)));
    let mut lower = identity(2 * m);
    lower.view_mut((m, 0), (m, m)).copy_from(&(identity(m) * real(s)));
    let mut scale = ComplexMatrix::zeros(2 * m, 2 * m);
    scale.view_mut((0, 0), (m, m)).copy_from(&path.eval_inverse(s));
    scale.view_mut((m, m), (m, m)).copy_from(&path.eval(s).adjoint());
    g1_inv * upper * lower * scale * g1
}

/// The homotopy `t ↦ P^t_E(θ)`, `P^0 = I`, `P^n = A_{E,n}(θ)`, extended
/// past `t = 1` by `P^t = P^{t−n}(Tⁿθ) A_{E,n}(θ)`.
#[derive(Debug, Clone)]
pub struct HomotopyPath<'a> {
    model: &'a OperatorModel,
    energy: f64,
    theta: BasePoint,
}

impl<'a> HomotopyPath<'a> {
    pub fn new(model: &'a OperatorModel, energy: f64, theta: BasePoint) -> Self {
        Self { model, energy, theta }
    }

    pub fn eval(&self, t: f64) -> Result<ComplexMatrix> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidInput("path time must be finite and non-negative".into()));
        }
        let whole = t.floor() as i64;
        let frac = t - whole as f64;
        let product = crate::cocycle::transfer_product(self.model, self.energy, &self.theta, whole)?;
        if frac == 0.0 {
            return Ok(product);
        }
        let point = self.model.base().advance(&self.theta, whole)?;
        let block = self.model.potential_at(&point);
        Ok(unit_path_matrix(self.model, self.energy, &block, frac) * product)
    }
}

pub fn homotopy_eval(path: &HomotopyPath<'_>, t: f64) -> Result<ComplexMatrix> {
    path.eval(t)
}

/// Continuous branch of `arg det W / 2π` along a tracked path.
#[derive(Debug, Clone)]
pub struct PhaseLedger {
    start: f64,
    accumulated: f64,
    last_point: UnitaryPoint,
    substep_budget: usize,
    steps: usize,
}

impl PhaseLedger {
    /// Principal phase of the initial point, in turns.
    pub fn start(&self) -> f64 {
        self.start
    }

    /// Lifted phase of the final point, in turns.
    pub fn accumulated(&self) -> f64 {
        self.accumulated
    }

    /// `accumulated − start`: `m x_E^N` with the lift anchored at zero.
    pub fn total(&self) -> f64 {
        self.accumulated - self.start
    }

    pub fn last_point(&self) -> &UnitaryPoint {
        &self.last_point
    }

    /// Largest number of substeps used on any unit step.
    pub fn substep_budget(&self) -> usize {
        self.substep_budget
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Distance between `accumulated mod 1` and the principal phase of the
    /// last point, on the circle.
    pub fn branch_defect(&self) -> f64 {
        circle_distance(self.accumulated, self.last_point.det_turns())
    }
}

pub(crate) fn circle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Signed representative of `x mod 1` in `(−1/2, 1/2]`.
pub(crate) fn centered(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r > 0.5 {
        r - 1.0
    } else {
        r
    }
}

/// How a tracked frame is read before taking its phase.
#[derive(Debug, Clone)]
enum FrameView {
    Plain,
    /// Multiply by `B(θ + tα)⁻¹`, the inverse of a rotation by
    /// `π⟨r, θ⟩/2` in the `(x₁, y₁)` plane, at the orbit lift.
    Conjugated {
        weights: Vec<f64>,
        alpha: Vec<f64>,
        theta0: Vec<f64>,
    },
}

impl FrameView {
    fn apply(&self, t: f64, frame: &ComplexMatrix) -> ComplexMatrix {
        match self {
            FrameView::Plain => frame.clone(),
            FrameView::Conjugated { weights, alpha, theta0 } => {
                let pairing: f64 = weights.iter().zip(alpha.iter().zip(theta0)).map(|(r, (a, x))| r * (x + t * a)).sum();
                let psi = -FRAC_PI_2 * pairing;
                let m = frame.nrows() / 2;
                let mut out = frame.clone();
                let (c, s) = (psi.cos(), psi.sin());
                for col in 0..frame.ncols() {
                    let (x1, y1) = (frame[(0, col)], frame[(m, col)]);
                    out[(0, col)] = x1 * c - y1 * s;
                    out[(m, col)] = x1 * s + y1 * c;
                }
                out
            }
        }
    }
}

/// `det W` of a stacked frame, on the unit circle.
fn det_phase(frame: &ComplexMatrix) -> Complex {
    let m = frame.ncols();
    let x = frame.view((0, 0), (m, m));
    let y = frame.view((m, 0), (m, m));
    let q = matkernel::determinant(&(x + y * I)) / matkernel::determinant(&(x - y * I));
    q / q.norm()
}

/// Tracks `arg det W` of several views of the frame `P^t Λ₀` over `steps`
/// unit steps.
struct PhaseTracker<'a> {
    model: &'a OperatorModel,
    energy: f64,
    tol: ToleranceProfile,
    gram: ComplexMatrix,
    /// `(V(k/L)⁻¹, V(k/L)*)` for `k = 1..L`, keyed by `L`.
    tables: HashMap<usize, Vec<(ComplexMatrix, ComplexMatrix)>>,
}

impl<'a> PhaseTracker<'a> {
    fn new(model: &'a OperatorModel, energy: f64) -> Self {
        Self { model, energy, tol: *model.tolerance(), gram: model.coupling() * model.coupling().adjoint(), tables: HashMap::new() }
    }

    fn table(&mut self, level: usize) -> &[(ComplexMatrix, ComplexMatrix)] {
        let path = self.model.coupling_path();
        self.tables.entry(level).or_insert_with(|| {
            (1..level)
                .map(|k| {
                    let s = k as f64 / level as f64;
                    (path.eval_inverse(s), path.eval(s).adjoint())
                })
                .collect()
        })
    }

    /// `P^s Λ` for a frame, without forming `P^s`.
    fn apply_partial(
        gram: &ComplexMatrix,
        shear: &ComplexMatrix,
        s: f64,
        vinv: &ComplexMatrix,
        vadj: &ComplexMatrix,
        frame: &ComplexMatrix,
    ) -> ComplexMatrix {
        let m = frame.ncols();
        let x = frame.view((0, 0), (m, m));
        let y = frame.view((m, 0), (m, m));
        let a = vinv * (x - gram * y);
        let b = vadj * y;
        let b2 = &a * real(s) + b;
        let a2 = a + shear * &b2 * real(s);
        let mut out = ComplexMatrix::zeros(2 * m, m);
        out.view_mut((0, 0), (m, m)).copy_from(&(a2 + gram * &b2));
        out.view_mut((m, 0), (m, m)).copy_from(&b2);
        out
    }

    /// One unit step from time `t0`; returns per-view phase increments, the
    /// transported frame, and the substep count used.
    fn unit_step(
        &mut self,
        t0: f64,
        block: &ComplexMatrix,
        frame: &ComplexMatrix,
        views: &[FrameView],
        last: &[Complex],
    ) -> Result<(Vec<f64>, ComplexMatrix, Vec<Complex>, usize)> {
        let shear = path_shear(self.model, self.energy, block);
        let step = transfer_from_block(self.model, self.energy, block);
        let end = &step * frame;
        let end_phases: Vec<Complex> = views.iter().map(|v| det_phase(&v.apply(t0 + 1.0, &end))).collect();
        let mut level = self.tol.initial_substeps.max(1);
        loop {
            let gram = self.gram.clone();
            let table = self.table(level).to_vec();
            let mut prev = last.to_vec();
            let mut totals = vec![0.0; views.len()];
            let mut ok = true;
            for k in 1..=level {
                let s = k as f64 / level as f64;
                let phases: Vec<Complex> = if k == level {
                    end_phases.clone()
                } else {
                    let (vinv, vadj) = &table[k - 1];
                    let f = Self::apply_partial(&gram, &shear, s, vinv, vadj, frame);
                    views.iter().map(|v| det_phase(&v.apply(t0 + s, &f))).collect()
                };
                for ((tot, p), q) in totals.iter_mut().zip(&mut prev).zip(&phases) {
                    let inc = turns(q / *p);
                    if inc.abs() >= self.tol.max_phase_step {
                        ok = false;
                    }
                    *tot += inc;
                    *p = *q;
                }
                if !ok {
                    break;
                }
            }
            if ok {
                return Ok((totals, end, end_phases, level));
            }
            level *= 2;
            if level > self.tol.max_substeps {
                return Err(Error::RefinementExhausted { substeps: level / 2 });
            }
        }
    }

    fn run(&mut self, orbit: &OrbitCache, frame0: &LagrangianFrame, views: &[FrameView]) -> Result<Vec<PhaseLedger>> {
        let steps = orbit.len();
        let mut frame = frame0.stacked().clone();
        let mut last: Vec<Complex> = views.iter().map(|v| det_phase(&v.apply(0.0, &frame))).collect();
        let starts: Vec<f64> = last.iter().map(|z| turns(*z)).collect();
        let mut acc = starts.clone();
        let mut budget = 0;
        for n in 0..steps {
            let (inc, end, phases, used) = self.unit_step(n as f64, orbit.block(n), &frame, views, &last)?;
            for (a, i) in acc.iter_mut().zip(inc) {
                *a += i;
            }
            last = phases;
            budget = budget.max(used);
            frame = matkernel::orthonormalize(&end);
        }
        views
            .iter()
            .zip(starts.iter().zip(acc))
            .map(|(v, (&start, accumulated))| {
                let last_frame = LagrangianFrame::from_stacked(v.apply(steps as f64, &frame));
                Ok(PhaseLedger { start, accumulated, last_point: frame_to_unitary(&last_frame)?, substep_budget: budget, steps })
            })
            .collect()
    }
}

/// Rotation-number estimate `m x_E^N / N` in turns and its ledger.
#[derive(Debug, Clone)]
pub struct RotationEstimate {
    pub estimate: f64,
    pub ledger: PhaseLedger,
}

pub fn rot_number(
    model: &OperatorModel,
    energy: f64,
    theta0: &BasePoint,
    frame0: &LagrangianFrame,
    steps: usize,
) -> Result<RotationEstimate> {
    if steps == 0 {
        return Err(Error::InvalidInput("need at least one step".into()));
    }
    let orbit = OrbitCache::build(model, theta0, steps)?;
    rot_number_on_orbit(model, energy, &orbit, frame0)
}

/// As [`rot_number`], reusing a precomputed orbit.
pub fn rot_number_on_orbit(model: &OperatorModel, energy: f64, orbit: &OrbitCache, frame0: &LagrangianFrame) -> Result<RotationEstimate> {
    if frame0.block_dim() != model.block_dim() {
        return Err(Error::InvalidInput("frame size differs from block size".into()));
    }
    let ledger = PhaseTracker::new(model, energy).run(orbit, frame0, &[FrameView::Plain])?.remove(0);
    Ok(RotationEstimate { estimate: ledger.total() / orbit.len() as f64, ledger })
}

/// `m x_E^N` from `[I; 0]` at each energy, in parallel.
pub fn rotation_totals(model: &OperatorModel, theta0: &BasePoint, steps: usize, energies: &[f64]) -> Result<Vec<f64>> {
    let orbit = OrbitCache::build(model, theta0, steps)?;
    let frame = LagrangianFrame::horizontal(model.block_dim());
    energies.par_iter().map(|&e| rot_number_on_orbit(model, e, &orbit, &frame).map(|r| r.ledger.total())).collect()
}

/// `rot(B⁻¹(θ+α) A B(θ)) − rot(A)` at resolution `steps`, reduced into
/// `[0, 1)`, where `B(θ)` rotates the `(x₁, y₁)` plane by `π⟨r, θ⟩/2`.
pub fn conjugation_shift(model: &OperatorModel, energy: f64, weights: &[i64], steps: usize) -> Result<f64> {
    let alpha = model.base().rotation_vector().ok_or(Error::UnsupportedBase)?.to_vec();
    if weights.len() != alpha.len() {
        return Err(Error::InvalidInput("weight vector length differs from torus dimension".into()));
    }
    if steps == 0 {
        return Err(Error::InvalidInput("need at least one step".into()));
    }
    let theta0 = BasePoint::origin(alpha.len());
    let orbit = OrbitCache::build(model, &theta0, steps)?;
    let m = model.block_dim();
    let view = FrameView::Conjugated { weights: weights.iter().map(|&r| r as f64).collect(), alpha, theta0: theta0.coords().to_vec() };
    // the conjugated cocycle starts from [I; 0]; the original from B(θ₀)[I; 0]
    let inverse_view_start = match &view {
        FrameView::Conjugated { weights, theta0, .. } => {
            let pairing: f64 = weights.iter().zip(theta0).map(|(r, x)| r * x).sum();
            FRAC_PI_2 * pairing
        }
        FrameView::Plain => 0.0,
    };
    let mut start = LagrangianFrame::horizontal(m).stacked().clone();
    let (c, s) = (inverse_view_start.cos(), inverse_view_start.sin());
    start[(m, 0)] = real(s);
    start[(0, 0)] = real(c);
    let frame0 = LagrangianFrame::from_stacked(start);
    let ledgers = PhaseTracker::new(model, energy).run(&orbit, &frame0, &[FrameView::Plain, view])?;
    let shift = (ledgers[1].total() - ledgers[0].total()) / steps as f64;
    Ok(shift.rem_euclid(1.0))
}

/// `|det(C)^N det U_z(N+1) − det(z − H^N)| / max(1, |det(z − H^N)|)`,
/// where `U_z(N+1)` is the top-left block of `Â_{z,N}(θ)`.
pub fn char_poly_identity(model: &OperatorModel, theta: &BasePoint, sites: usize, z: Complex) -> Result<f64> {
    let (frame, det_r) = normalized_frame(model, z, theta, sites)?;
    let top = frame.view((0, 0), (model.block_dim(), model.block_dim())).into_owned();
    let lhs = matkernel::determinant(model.coupling()).powu(sites as u32) * det_r * matkernel::determinant(&top);
    let h = finite_restriction(model, theta, sites)?;
    let shifted = identity(model.block_dim() * sites) * z - h.matrix.as_matrix();
    let d = matkernel::det_with_arg(&shifted)?.value();
    Ok((lhs - d).norm() / d.norm().max(1.0))
}

/// The frame `Â_{z,N}(θ)[I; 0]` as `Q R_N ... R_1` with `Q` orthonormal,
/// returned as `(Q, Π det R_k)`. Multiplying the raw product out first loses
/// all relative accuracy in its upper-left block once the entries grow.
fn normalized_frame(model: &OperatorModel, z: Complex, theta: &BasePoint, sites: usize) -> Result<(ComplexMatrix, Complex)> {
    let mut frame = LagrangianFrame::horizontal(model.block_dim()).stacked().clone();
    let mut det = Complex::new(1.0, 0.0);
    for k in 0..sites {
        let p = model.base().advance(theta, k as i64)?;
        let qr = (raw_transfer_from_block(model, z, &model.potential_at(&p)) * frame).qr();
        det *= qr.r().diagonal().iter().product::<Complex>();
        frame = qr.q();
    }
    Ok((frame, det))
}

/// `dim ker U_E(N+1)`, the multiplicity of `E` as an eigenvalue of `H^N`.
pub fn kernel_multiplicity(model: &OperatorModel, theta: &BasePoint, sites: usize, energy: f64) -> Result<usize> {
    let m = model.block_dim();
    let (frame, _) = normalized_frame(model, real(energy), theta, sites)?;
    let top = frame.view((0, 0), (m, m)).into_owned();
    Ok(matkernel::kernel_dim(&top, 1.0, model.tolerance().kernel_cutoff))
}

/// `Ω(E, n) = 2 M⁻* S M⁻¹` with `M = X − iY` and
/// `S = −Σ_{k<n} (C⁻¹X_k)*(C⁻¹X_k)` for the raw frames
/// `[X_k; Y_k] = A_{E,k}(θ)[I; 0]`, so that `dW/dE = iWΩ`.
pub fn phase_velocity(model: &OperatorModel, energy: f64, theta: &BasePoint, steps: usize) -> Result<(UnitaryPoint, ComplexMatrix)> {
    let m = model.block_dim();
    let orbit = OrbitCache::build(model, theta, steps)?;
    // [X_k; Y_k] = Q_k R_k ... R_1 with Q_k orthonormal, so that
    // X_k M⁻¹ = Q_k^top (R_{k+1} ... R_n)⁻¹ (Q_n^top − i Q_n^bottom)⁻¹
    // never forms the exponentially large raw frames.
    let mut frame = LagrangianFrame::horizontal(m).stacked().clone();
    let mut tops = Vec::with_capacity(steps);
    let mut factors = Vec::with_capacity(steps);
    for n in 0..steps {
        tops.push(frame.view((0, 0), (m, m)).into_owned());
        let qr = (transfer_from_block(model, energy, orbit.block(n)) * frame).qr();
        factors.push(qr.r());
        frame = qr.q();
    }
    let lag = LagrangianFrame::from_stacked(frame);
    let w = frame_to_unitary(&lag)?;
    let minv = matkernel::inverse(&(lag.x() - lag.y() * I))?;
    let mut tail = identity(m);
    let mut s = ComplexMatrix::zeros(m, m);
    for (top, r) in tops.iter().zip(&factors).rev() {
        tail = r.solve_upper_triangular(&tail).ok_or(Error::SingularMatrix { sigma_min: 0.0 })?;
        let cx = model.coupling_inv() * top * &tail * &minv;
        s -= cx.adjoint() * &cx;
    }
    let omega = s * real(2.0);
    Ok((w, omega))
}

/// Eigenphase branches of `W_{Λ_N(E)}` over an energy grid, in turns.
#[derive(Debug, Clone)]
pub struct PhaseCurves {
    pub energies: Vec<f64>,
    pub sites: usize,
    /// `phases[i][j]` is branch `j` at `energies[i]`.
    pub phases: Vec<Vec<f64>>,
    /// `m x_E^N` at each energy.
    pub totals: Vec<f64>,
}

/// A branch passing through an integer between two grid energies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub branch: usize,
    pub level: i64,
    pub lower: f64,
    pub upper: f64,
}

impl PhaseCurves {
    pub fn branch(&self, j: usize) -> Vec<f64> {
        self.phases.iter().map(|p| p[j]).collect()
    }

    /// Integer values attained by a branch, bracketed by grid energies.
    pub fn integer_crossings(&self) -> Vec<Crossing> {
        let m = self.phases.first().map_or(0, Vec::len);
        let mut out = Vec::new();
        for j in 0..m {
            for i in 1..self.energies.len() {
                let (a, b) = (self.phases[i - 1][j], self.phases[i][j]);
                let (hi, lo) = (a.max(b), a.min(b));
                let mut level = lo.ceil() as i64;
                while (level as f64) <= hi {
                    // a crossing exactly at a grid point is reported once
                    if level as f64 != a || i == 1 {
                        out.push(Crossing { branch: j, level, lower: self.energies[i - 1], upper: self.energies[i] });
                    }
                    level += 1;
                }
            }
        }
        out
    }
}

struct PhaseSample {
    principal: Vec<f64>,
    total: f64,
}

fn phase_sample(model: &OperatorModel, orbit: &OrbitCache, energy: f64) -> Result<PhaseSample> {
    let est = rot_number_on_orbit(model, energy, orbit, &LagrangianFrame::horizontal(model.block_dim()))?;
    Ok(PhaseSample { principal: est.ledger.last_point().eigenphases(), total: est.ledger.total() })
}

const MAX_CURVE_DEPTH: usize = 24;

/// Continues `lifts` (branches at `lo`) to the sample at `hi`, bisecting
/// the energy interval while the matching is ambiguous.
fn continue_branches(
    model: &OperatorModel,
    orbit: &OrbitCache,
    lo: f64,
    lifts: &[f64],
    hi: f64,
    target: &PhaseSample,
    depth: usize,
) -> Result<Vec<f64>> {
    let m = lifts.len();
    let best = (0..m)
        .permutations(m)
        .map(|perm| {
            let deltas: Vec<f64> = (0..m).map(|j| centered(target.principal[perm[j]] - lifts[j])).collect();
            let cost: f64 = deltas.iter().map(|d| d.abs()).sum();
            (cost, deltas)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, d)| d)
        .unwrap_or_default();
    let next: Vec<f64> = lifts.iter().zip(&best).map(|(l, d)| l + d).collect();
    let max_step = best.iter().fold(0.0f64, |a, d| a.max(d.abs()));
    let sum_err = (next.iter().sum::<f64>() - target.total).abs();
    if max_step < model.tolerance().max_phase_step && sum_err < 1e-7 {
        return Ok(next);
    }
    if depth >= MAX_CURVE_DEPTH {
        return Err(Error::RefinementExhausted { substeps: 1 << depth });
    }
    let mid = 0.5 * (lo + hi);
    let mid_sample = phase_sample(model, orbit, mid)?;
    let mid_lifts = continue_branches(model, orbit, lo, lifts, mid, &mid_sample, depth + 1)?;
    continue_branches(model, orbit, mid, &mid_lifts, hi, target, depth + 1)
}

/// Eigenphase branches of `W_{Λ_N(E)}`, `Λ_N(E) = A_{E,N}(θ₀)[I; 0]`,
/// continued in `E` so that they sum to `m x_E^N` at every grid point.
pub fn phase_curves(model: &OperatorModel, theta0: &BasePoint, sites: usize, energies: &[f64]) -> Result<PhaseCurves> {
    if energies.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput("energy grid must be strictly increasing".into()));
    }
    if energies.is_empty() || sites == 0 {
        return Ok(PhaseCurves { energies: energies.to_vec(), sites, phases: Vec::new(), totals: Vec::new() });
    }
    let orbit = OrbitCache::build(model, theta0, sites)?;
    let samples: Vec<PhaseSample> = energies.par_iter().map(|&e| phase_sample(model, &orbit, e)).collect::<Result<_>>()?;
    let m = model.block_dim();
    let first = &samples[0];
    let mut lifts = first.principal.clone();
    lifts.sort_by(f64::total_cmp);
    let remainder = (first.total - lifts.iter().sum::<f64>()).round() as i64;
    let (q, r) = (remainder.div_euclid(m as i64), remainder.rem_euclid(m as i64) as usize);
    for (j, l) in lifts.iter_mut().enumerate() {
        *l += (q + i64::from(j < r)) as f64;
    }
    let mut phases = vec![lifts.clone()];
    for i in 1..energies.len() {
        lifts = continue_branches(model, &orbit, energies[i - 1], &lifts, energies[i], &samples[i], 0)?;
        phases.push(lifts.clone());
    }
    Ok(PhaseCurves { energies: energies.to_vec(), sites, phases, totals: samples.iter().map(|s| s.total).collect() })
}

/// `arg det W` phases in turns of a sequence of frames, unwrapped.
pub fn unwrap_turns(points: &[Complex]) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    for (i, z) in points.iter().enumerate() {
        if i == 0 {
            acc = turns(*z);
        } else {
            acc += turns(z / points[i - 1]);
        }
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::transfer_product;
    use crate::matkernel::{max_abs, singular_values};
    use crate::model::{BlockTridiagonal, Potential};
    use crate::random::random_matrix;
    use crate::random::random_model;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn free() -> OperatorModel {
        OperatorModel::free_laplacian()
    }

    #[test]
    fn path_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let model = random_model(&mut rng, 2);
        let theta = BasePoint::from(0.23);
        let path = HomotopyPath::new(&model, 0.4, theta.clone());
        assert!(max_abs(&(path.eval(0.0).unwrap() - identity(4))) < 1e-15);
        let block = model.potential_at(&theta);
        let one = unit_path_matrix(&model, 0.4, &block, 1.0);
        let exact = transfer_product(&model, 0.4, &theta, 1).unwrap();
        assert!(max_abs(&(one - &exact)) < 1e-9);
        assert!(max_abs(&(unit_path_matrix(&model, 0.4, &block, 0.0) - identity(4))) < 1e-12);
        let two = transfer_product(&model, 0.4, &theta, 2).unwrap();
        assert!(max_abs(&(path.eval(2.0).unwrap() - two)) < 1e-9);
        // continuity across an integer time
        let left = path.eval(1.0 - 1e-9).unwrap();
        let right = path.eval(1.0 + 1e-9).unwrap();
        assert!(max_abs(&(left - right)) < 1e-6);
    }

    #[test]
    fn free_rotation_at_band_centre() {
        let r = rot_number(&free(), 0.0, &BasePoint::from(0.0), &LagrangianFrame::horizontal(1), 4000).unwrap();
        assert!((r.estimate - 0.5).abs() < 1e-2, "{}", r.estimate);
    }

    #[test]
    fn free_rotation_vanishes_at_large_energy() {
        let r = rot_number(&free(), 50.0, &BasePoint::from(0.0), &LagrangianFrame::horizontal(1), 1000).unwrap();
        assert!(r.estimate.abs() < 1e-2);
    }

    #[test]
    fn free_rotation_is_full_below_spectrum() {
        let r = rot_number(&free(), -3.0, &BasePoint::from(0.0), &LagrangianFrame::horizontal(1), 1000).unwrap();
        assert!((r.estimate - 1.0).abs() < 1e-2, "{}", r.estimate);
    }

    #[test]
    fn ledger_matches_fine_sampling_of_the_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let model = random_model(&mut rng, 2);
        let theta = BasePoint::from(0.6);
        let e = 0.7;
        let frame0 = LagrangianFrame::horizontal(2);
        let r = rot_number(&model, e, &theta, &frame0, 1).unwrap();
        let path = HomotopyPath::new(&model, e, theta);
        let samples: Vec<Complex> =
            (0..=10_000).map(|k| frame0.transformed(&path.eval(k as f64 / 10_000.0).unwrap()).det_phase()).collect();
        let unwrapped = unwrap_turns(&samples);
        assert!((unwrapped[10_000] - unwrapped[0] - r.ledger.total()).abs() < 1e-6);
    }

    #[test]
    fn ledger_is_stable_under_substep_refinement() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let coarse = random_model(&mut rng, 2);
        let mut tol = *coarse.tolerance();
        tol.initial_substeps = 32;
        let fine =
            OperatorModel::with_tolerance(coarse.coupling().clone(), coarse.potential().clone(), coarse.base().clone(), tol).unwrap();
        let theta = BasePoint::from(0.1);
        let frame = LagrangianFrame::horizontal(2);
        let a = rot_number(&coarse, 0.2, &theta, &frame, 50).unwrap();
        let b = rot_number(&fine, 0.2, &theta, &frame, 50).unwrap();
        assert!((a.ledger.accumulated() - b.ledger.accumulated()).abs() < 1e-7);
        assert!(a.ledger.branch_defect() < 1e-8);
    }

    #[test]
    fn frame_independence_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let model = random_model(&mut rng, 2);
        let theta = BasePoint::from(0.3);
        let other = LagrangianFrame::horizontal(2).transformed(&transfer_product(&model, 1.3, &BasePoint::from(0.9), 2).unwrap());
        for n in [10, 100] {
            let a = rot_number(&model, 0.1, &theta, &LagrangianFrame::horizontal(2), n).unwrap();
            let b = rot_number(&model, 0.1, &theta, &other.orthonormalized(), n).unwrap();
            assert!((a.estimate - b.estimate).abs() * n as f64 <= 2.0 + 1e-3);
        }
    }

    #[test]
    fn bridge_inequality_small_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let model = random_model(&mut rng, 2);
        let theta = BasePoint::from(0.5);
        let sites = 6;
        let ev = BlockTridiagonal::new(&model, &theta, sites).unwrap().eigenvalues(1e-13);
        for w in ev.windows(2).filter(|w| w[1] - w[0] > 1e-3) {
            let e = 0.5 * (w[0] + w[1]);
            let below = ev.iter().filter(|&&x| x <= e).count() as f64;
            let ell = (2 * sites) as f64 - below;
            let total = rot_number(&model, e, &theta, &LagrangianFrame::horizontal(2), sites + 1).unwrap().ledger.total();
            assert!(total >= ell - 1e-6 && total <= ell + 2.0 + 1e-6, "{ell} {total}");
        }
    }

    #[test]
    fn char_poly_examples() {
        let b = 0.37;
        let constant = OperatorModel::new(
            identity(1),
            Potential::Constant(crate::HermitianMatrix::from_real_diagonal(&[b])),
            crate::BaseDynamics::golden_rotation(),
        )
        .unwrap();
        let z = Complex::new(0.3, -1.2);
        let u = crate::cocycle::raw_transfer_product(&constant, z, &BasePoint::from(0.0), 1).unwrap()[(0, 0)];
        assert_eq!(u, z - real(b));
        assert!(char_poly_identity(&free(), &BasePoint::from(0.0), 3, Complex::new(0.0, 0.0)).unwrap() < 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let model = random_model(&mut rng, 2);
        let z = Complex::new(rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0));
        assert!(char_poly_identity(&model, &BasePoint::from(0.4), 6, z).unwrap() < 1e-8);
    }

    #[test]
    fn kernel_dimension_detects_eigenvalues() {
        // H² of the free Laplacian has eigenvalues ±1
        assert_eq!(kernel_multiplicity(&free(), &BasePoint::from(0.0), 2, 1.0).unwrap(), 1);
        assert_eq!(kernel_multiplicity(&free(), &BasePoint::from(0.0), 2, 0.5).unwrap(), 0);
    }

    #[test]
    fn free_phase_curve_is_monotone_with_two_crossings() {
        let grid: Vec<f64> = (0..=600).map(|k| -3.0 + 0.01 * k as f64 + 1e-4).collect();
        let curves = phase_curves(&free(), &BasePoint::from(0.0), 3, &grid).unwrap();
        let branch = curves.branch(0);
        assert!(branch.windows(2).all(|w| w[1] <= w[0] + 1e-9));
        let crossings = curves.integer_crossings();
        assert_eq!(crossings.len(), 2, "{crossings:?}");
        assert!(crossings[0].lower < -1.0 && crossings[0].upper > -1.0 || crossings[1].lower < -1.0 && crossings[1].upper > -1.0);
        assert!(crossings.iter().any(|c| c.lower < 1.0 && c.upper > 1.0));
        for (p, t) in curves.phases.iter().zip(&curves.totals) {
            assert!((p.iter().sum::<f64>() - t).abs() < 1e-7);
        }
    }

    #[test]
    fn no_integer_phase_above_spectrum() {
        let grid: Vec<f64> = (0..50).map(|k| 3.5 + 0.1 * k as f64).collect();
        let curves = phase_curves(&free(), &BasePoint::from(0.0), 5, &grid).unwrap();
        for p in &curves.phases {
            assert!(p.iter().all(|x| (x - x.round()).abs() > 1e-6));
        }
    }

    #[test]
    fn conjugation_shift_values() {
        let model = free();
        let alpha = model.base().rotation_vector().unwrap()[0];
        let zero = conjugation_shift(&model, 3.0, &[0], 200).unwrap();
        assert!(circle_distance(zero, 0.0) < 1e-6);
        let one = conjugation_shift(&model, 3.0, &[1], 2000).unwrap();
        assert!(circle_distance(one, -alpha / 2.0) < 5e-3);
        let two = conjugation_shift(&model, 3.0, &[2], 2000).unwrap();
        assert!(circle_distance(two, -alpha) < 5e-3);
        let doubling = model.with_base(crate::BaseDynamics::Doubling).unwrap();
        assert_eq!(conjugation_shift(&doubling, 3.0, &[1], 10), Err(Error::UnsupportedBase));
    }

    #[test]
    fn phase_velocity_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..5 {
            let m = rng.gen_range(1..4);
            let model = random_model(&mut rng, m);
            let theta = BasePoint::from(rng.gen::<f64>());
            let e = rng.gen_range(-2.0..2.0);
            let n = rng.gen_range(1..8);
            let h = 1e-6;
            let (w, omega) = phase_velocity(&model, e, &theta, n).unwrap();
            let (wp, _) = phase_velocity(&model, e + h, &theta, n).unwrap();
            let (wm, _) = phase_velocity(&model, e - h, &theta, n).unwrap();
            let fd = (wp.as_matrix() - wm.as_matrix()) / real(2.0 * h);
            let exact = w.as_matrix() * &omega * I;
            assert!(max_abs(&(&fd - &exact)) < 1e-4 * max_abs(&exact), "{} vs {}", max_abs(&(&fd - &exact)), max_abs(&exact));
            let herm = crate::HermitianMatrix::symmetrize(omega.clone());
            let top = crate::matkernel::hermitian_eigenvalues(&herm).last().copied().unwrap();
            assert!(top <= 1e-8);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn ledger_stays_on_branch(seed in any::<u64>(), m in 1usize..4, steps in 1usize..30) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = random_model(&mut rng, m);
            let r = rot_number(&model, rng.gen_range(-4.0..4.0), &BasePoint::from(rng.gen::<f64>()), &LagrangianFrame::horizontal(m), steps).unwrap();
            prop_assert!(r.ledger.branch_defect() < 1e-8);
        }

        #[test]
        fn random_frames_respect_independence_bound(seed in any::<u64>(), m in 1usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = random_model(&mut rng, m);
            let theta = BasePoint::from(rng.gen::<f64>());
            let e = rng.gen_range(-3.0..3.0);
            let g = random_matrix(&mut rng, m, m);
            let herm = (&g + g.adjoint()) * real(0.5);
            let s = singular_values(&herm);
            prop_assume!(s.iter().all(|x| x.is_finite()));
            let other = LagrangianFrame::new(identity(m), herm).unwrap().orthonormalized();
            let a = rot_number(&model, e, &theta, &LagrangianFrame::horizontal(m), 40).unwrap();
            let b = rot_number(&model, e, &theta, &other, 40).unwrap();
            prop_assert!((a.estimate - b.estimate).abs() * 40.0 <= m as f64 + 1e-3);
        }
    }
}
