//! Numerical uniform-hyperbolicity detection: Lyapunov gap, invariant
//! stable/unstable Lagrangian sections, their continuity in `θ`, and the
//! winding degrees of the unstable section on a torus base.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cocycle::{symplectic_inverse, transfer_from_block, turns, LagrangianFrame};
use crate::error::{Error, Result};
use crate::matkernel::{self, singular_values, smallest_singular_value, subspace_distance, Complex, ComplexMatrix};
use crate::model::{wrap_unit, BasePoint, OperatorModel};

/// Knobs of [`uh_test`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UhParams {
    /// Burn-in length of the forward and backward sweeps.
    pub n_iter: usize,
    /// Orbit samples on which the splitting is recorded.
    pub sample_count: usize,
    /// Required per-step ratio `σ_m / σ_{m+1}`.
    pub gap_threshold: f64,
    /// Neighbouring samples further apart than this (subspace distance)
    /// trigger bisection of the base interval between them.
    pub jump_threshold: f64,
    /// Bisection depth at which a persisting jump is a discontinuity.
    pub max_depth: usize,
    /// Cap on extra section evaluations spent on continuity checks.
    pub probe_budget: usize,
}

impl Default for UhParams {
    fn default() -> Self {
        Self { n_iter: 2000, sample_count: 500, gap_threshold: 0.01f64.exp(), jump_threshold: 0.25, max_depth: 14, probe_budget: 400 }
    }
}

/// Three-valued outcome; only `Uh` certifies a spectral gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UhVerdict {
    Uh,
    NotUh,
    Inconclusive,
}

impl fmt::Display for UhVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UhVerdict::Uh => "uh",
            UhVerdict::NotUh => "not-uh",
            UhVerdict::Inconclusive => "inconclusive",
        })
    }
}

/// Invariant splitting sampled along the orbit `θ_k = T^k θ₀`.
#[derive(Debug, Clone)]
pub struct SplittingEstimate {
    pub energy: f64,
    pub samples: Vec<BasePoint>,
    pub unstable: Vec<LagrangianFrame>,
    pub stable: Vec<LagrangianFrame>,
    /// `ln(σ_m / σ_{m+1})` per step, from the Lyapunov spectrum.
    pub gap: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct UhOutcome {
    pub verdict: UhVerdict,
    /// Lyapunov exponents in decreasing order.
    pub exponents: Vec<f64>,
    pub splitting: Option<SplittingEstimate>,
    /// Section evaluations spent on continuity refinement.
    pub probes: usize,
}

impl UhOutcome {
    pub fn is_uh(&self) -> bool {
        self.verdict == UhVerdict::Uh
    }
}

const INVARIANCE_TOL: f64 = 1e-6;
const TRANSVERSALITY_TOL: f64 = 1e-6;
/// `ln 1e8`: burn-in that shrinks an initial error by eight digits.
const PROBE_DIGITS: f64 = 18.42;

fn generic_unitary(n: usize, seed: u64) -> ComplexMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = ComplexMatrix::from_fn(n, n, |_, _| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    matkernel::orthonormalize(&g)
}

fn step_matrix(model: &OperatorModel, energy: f64, theta: &BasePoint) -> ComplexMatrix {
    transfer_from_block(model, energy, &model.potential_at(theta))
}

fn leading(q: &ComplexMatrix, m: usize) -> ComplexMatrix {
    q.columns(0, m).into_owned()
}

/// QR step returning the new orthonormal frame and `ln |R_ii|`.
fn qr_step(a: &ComplexMatrix, q: &ComplexMatrix) -> (ComplexMatrix, Vec<f64>) {
    let qr = (a * q).qr();
    let r = qr.r();
    let logs = (0..r.ncols()).map(|i| r[(i, i)].norm().ln()).collect();
    (qr.q(), logs)
}

/// Unstable `m`-plane at `θ` by forward iteration from `T^{−burn_in}θ`.
fn unstable_probe(model: &OperatorModel, energy: f64, theta: &BasePoint, burn_in: usize, init: &ComplexMatrix) -> Result<ComplexMatrix> {
    let base = model.base();
    let m = model.block_dim();
    let mut point = base.advance(theta, -(burn_in as i64))?;
    let mut q = leading(init, m);
    for _ in 0..burn_in {
        q = matkernel::orthonormalize(&(step_matrix(model, energy, &point) * q));
        point = base.advance(&point, 1)?;
    }
    Ok(q)
}

struct ForwardSweep {
    exponents: Vec<f64>,
    unstable: Vec<ComplexMatrix>,
}

fn forward_sweep(model: &OperatorModel, energy: f64, theta0: &BasePoint, params: &UhParams, init: &ComplexMatrix) -> Result<ForwardSweep> {
    let base = model.base();
    let m = model.block_dim();
    let mut point = base.advance(theta0, -(params.n_iter as i64))?;
    let mut q = init.clone();
    let mut sums = vec![0.0; 2 * m];
    let mut unstable = Vec::with_capacity(params.sample_count);
    let total = params.n_iter + params.sample_count;
    for k in 0..total {
        if k >= params.n_iter {
            unstable.push(leading(&q, m));
        }
        let (next, logs) = qr_step(&step_matrix(model, energy, &point), &q);
        for (s, l) in sums.iter_mut().zip(logs) {
            *s += l;
        }
        q = next;
        point = base.advance(&point, 1)?;
    }
    let mut exponents: Vec<f64> = sums.iter().map(|s| s / total as f64).collect();
    exponents.sort_by(|a, b| b.total_cmp(a));
    Ok(ForwardSweep { exponents, unstable })
}

fn backward_sweep(
    model: &OperatorModel,
    energy: f64,
    samples: &[BasePoint],
    params: &UhParams,
    init: &ComplexMatrix,
) -> Result<Vec<ComplexMatrix>> {
    let base = model.base();
    let m = model.block_dim();
    let count = samples.len();
    let mut point = base.advance(&samples[0], (count + params.n_iter) as i64)?;
    let mut q = init.clone();
    let mut stable = vec![ComplexMatrix::zeros(0, 0); count];
    for k in (0..count + params.n_iter).rev() {
        point = base.advance(&point, -1)?;
        let inv = symplectic_inverse(&step_matrix(model, energy, &point));
        q = qr_step(&inv, &q).0;
        if k < count {
            stable[k] = leading(&q, m);
        }
    }
    Ok(stable)
}

/// Shortest displacement from `a` to `b` on the torus, coordinatewise.
fn torus_offset(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| crate::rotation::centered(y - x)).collect()
}

fn torus_distance(a: &[f64], b: &[f64]) -> f64 {
    torus_offset(a, b).iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Neighbour pairs used for the continuity check: consecutive in the
/// circle order for one-dimensional bases, nearest neighbours otherwise.
fn neighbour_pairs(samples: &[BasePoint]) -> Vec<(usize, usize)> {
    let n = samples.len();
    if n < 2 {
        return Vec::new();
    }
    if samples[0].dim() == 1 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| samples[a].coords()[0].total_cmp(&samples[b].coords()[0]));
        return (0..n).map(|i| (order[i], order[(i + 1) % n])).collect();
    }
    (0..n)
        .map(|i| {
            let j = (0..n)
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    torus_distance(samples[i].coords(), samples[a].coords())
                        .total_cmp(&torus_distance(samples[i].coords(), samples[b].coords()))
                })
                .unwrap_or(i);
            (i, j)
        })
        .collect()
}

enum Continuity {
    Continuous,
    Jump,
    OutOfBudget,
}

/// Bisects base intervals between neighbouring samples whose unstable
/// planes differ by more than the jump threshold. A jump that survives
/// `max_depth` halvings marks a discontinuous section.
#[allow(clippy::too_many_arguments)]
fn check_continuity(
    model: &OperatorModel,
    energy: f64,
    samples: &[BasePoint],
    unstable: &[ComplexMatrix],
    gap: f64,
    params: &UhParams,
    init: &ComplexMatrix,
    probes: &mut usize,
) -> Result<Continuity> {
    let burn_in = params.n_iter.min((PROBE_DIGITS / gap).ceil() as usize);
    for (a, b) in neighbour_pairs(samples) {
        let start = samples[a].coords().to_vec();
        let offset = torus_offset(&start, samples[b].coords());
        let mut stack = vec![(0.0, unstable[a].clone(), 1.0, unstable[b].clone(), 0usize)];
        while let Some((lo, qa, hi, qb, depth)) = stack.pop() {
            if subspace_distance(&qa, &qb) <= params.jump_threshold {
                continue;
            }
            if depth >= params.max_depth {
                return Ok(Continuity::Jump);
            }
            if *probes >= params.probe_budget {
                return Ok(Continuity::OutOfBudget);
            }
            *probes += 1;
            let mid = 0.5 * (lo + hi);
            let point = BasePoint::new(start.iter().zip(&offset).map(|(x, o)| wrap_unit(x + mid * o)).collect());
            let qm = unstable_probe(model, energy, &point, burn_in, init)?;
            stack.push((lo, qa, mid, qm.clone(), depth + 1));
            stack.push((mid, qm, hi, qb, depth + 1));
        }
    }
    Ok(Continuity::Continuous)
}

/// Decides whether the cocycle `(T, A_E)` is uniformly hyperbolic.
///
/// The Lyapunov gap `γ_m − γ_{m+1}` must reach `ln gap_threshold`; the
/// forward (unstable) and backward (stable) sections must converge, be
/// transverse and invariant on the samples, and the unstable section must
/// be continuous in `θ` at the resolution of adaptive bisection.
pub fn uh_test(model: &OperatorModel, energy: f64, params: &UhParams) -> Result<UhOutcome> {
    if !model.base().is_invertible() {
        return Err(Error::UnsupportedDirection);
    }
    if params.sample_count < 2 || params.n_iter == 0 {
        return Err(Error::InvalidInput("need at least two samples and a positive burn-in".into()));
    }
    let m = model.block_dim();
    let theta0 = BasePoint::origin(model.base().dim());
    let init = generic_unitary(2 * m, 0x5eed);
    let fwd = forward_sweep(model, energy, &theta0, params, &init)?;
    let gap = fwd.exponents[m - 1] - fwd.exponents[m];
    let mut outcome = UhOutcome { verdict: UhVerdict::NotUh, exponents: fwd.exponents.clone(), splitting: None, probes: 0 };
    if !(gap >= params.gap_threshold.ln()) {
        return Ok(outcome);
    }
    let samples: Vec<BasePoint> = (0..params.sample_count).map(|k| model.base().advance(&theta0, k as i64)).collect::<Result<_>>()?;
    let check = forward_sweep(model, energy, &theta0, params, &generic_unitary(2 * m, 0xfeed))?;
    let converged = fwd.unstable.iter().zip(&check.unstable).all(|(a, b)| subspace_distance(a, b) < INVARIANCE_TOL);
    let stable = backward_sweep(model, energy, &samples, params, &init)?;
    let transverse = fwd.unstable.iter().zip(&stable).all(|(u, s)| {
        let mut both = ComplexMatrix::zeros(2 * m, 2 * m);
        both.columns_mut(0, m).copy_from(u);
        both.columns_mut(m, m).copy_from(s);
        smallest_singular_value(&both) > TRANSVERSALITY_TOL
    });
    let invariant = (0..samples.len() - 1).all(|k| {
        let a = step_matrix(model, energy, &samples[k]);
        let pushed_u = matkernel::orthonormalize(&(&a * &fwd.unstable[k]));
        let pushed_s = matkernel::orthonormalize(&(&a * &stable[k]));
        subspace_distance(&pushed_u, &fwd.unstable[k + 1]) < INVARIANCE_TOL && subspace_distance(&pushed_s, &stable[k + 1]) < INVARIANCE_TOL
    });
    let splitting = |converged: bool| SplittingEstimate {
        energy,
        samples: samples.clone(),
        unstable: fwd.unstable.iter().map(|q| LagrangianFrame::from_stacked(q.clone())).collect(),
        stable: stable.iter().map(|q| LagrangianFrame::from_stacked(q.clone())).collect(),
        gap,
        converged,
    };
    if !converged || !invariant {
        outcome.verdict = UhVerdict::Inconclusive;
        outcome.splitting = Some(splitting(false));
        return Ok(outcome);
    }
    if !transverse {
        outcome.splitting = Some(splitting(false));
        return Ok(outcome);
    }
    let mut probes = 0;
    let continuity = check_continuity(model, energy, &samples, &fwd.unstable, gap, params, &init, &mut probes)?;
    outcome.probes = probes;
    match continuity {
        Continuity::Continuous => {
            outcome.verdict = UhVerdict::Uh;
            outcome.splitting = Some(splitting(true));
        }
        Continuity::Jump => outcome.splitting = Some(splitting(false)),
        Continuity::OutOfBudget => {
            outcome.verdict = UhVerdict::Inconclusive;
            outcome.splitting = Some(splitting(false));
        }
    }
    Ok(outcome)
}

/// Winding numbers of `det W_{Λu}` around the coordinate loops of a torus.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SectionDegree(pub Vec<i64>);

/// Winds `det W_{Λu(θ₀ + t e_j)}`, `t ∈ [0, 1]`, over `grid` steps for each
/// coordinate `j`, starting from the first sample of a converged splitting.
pub fn section_degree(model: &OperatorModel, splitting: &SplittingEstimate, grid: usize) -> Result<SectionDegree> {
    let dim = model.base().rotation_vector().ok_or(Error::UnsupportedBase)?.len();
    if !splitting.converged || splitting.samples.is_empty() {
        return Err(Error::InvalidInput("section degree needs a converged splitting".into()));
    }
    if grid < 2 {
        return Err(Error::RefineGrid { step: 1.0 });
    }
    let m = model.block_dim();
    let burn_in = (PROBE_DIGITS / splitting.gap).ceil() as usize;
    let init = generic_unitary(2 * m, 0x5eed);
    let theta0 = splitting.samples[0].coords().to_vec();
    let mut degrees = Vec::with_capacity(dim);
    for j in 0..dim {
        let mut phases = Vec::with_capacity(grid + 1);
        for i in 0..=grid {
            let mut coords = theta0.clone();
            coords[j] = wrap_unit(coords[j] + i as f64 / grid as f64);
            let q = unstable_probe(model, splitting.energy, &BasePoint::new(coords), burn_in, &init)?;
            phases.push(LagrangianFrame::from_stacked(q).det_phase());
        }
        let mut total = 0.0;
        for w in phases.windows(2) {
            let inc = turns(w[1] / w[0]);
            if inc.abs() >= model.tolerance().max_phase_step {
                return Err(Error::RefineGrid { step: inc });
            }
            total += inc;
        }
        if (total - total.round()).abs() > 1e-3 {
            return Err(Error::RefineGrid { step: total - total.round() });
        }
        degrees.push(total.round() as i64);
    }
    Ok(SectionDegree(degrees))
}

/// Fitted bound `‖A_{E,n}|_{Λs}‖ ≤ c·rate^{−n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionFit {
    pub constant: f64,
    pub rate: f64,
    /// `‖A_{E,n}|_{Λs}‖` for `n = 1..=steps`.
    pub norms: Vec<f64>,
}

/// Norms of the cocycle restricted to the stable section along the sample
/// orbit, `n = 1..=steps`, and a log-linear fit `c·rate^{−n}` bounding them.
pub fn stable_contraction(model: &OperatorModel, splitting: &SplittingEstimate, steps: usize) -> Result<ContractionFit> {
    if steps == 0 || steps >= splitting.samples.len() {
        return Err(Error::InvalidInput("contraction window must fit inside the samples".into()));
    }
    let m = model.block_dim();
    let mut product = matkernel::identity(m);
    let mut norms = Vec::with_capacity(steps);
    for k in 0..steps {
        let a = step_matrix(model, splitting.energy, &splitting.samples[k]);
        let restricted = splitting.stable[k + 1].stacked().adjoint() * a * splitting.stable[k].stacked();
        product = restricted * product;
        norms.push(singular_values(&product)[0]);
    }
    let n = steps as f64;
    let xs: Vec<f64> = (1..=steps).map(|k| k as f64).collect();
    let ys: Vec<f64> = norms.iter().map(|x| x.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>().max(f64::MIN_POSITIVE);
    let rate = (-slope).exp();
    let constant = norms.iter().zip(&xs).map(|(v, x)| v * rate.powf(*x)).fold(0.0, f64::max);
    Ok(ContractionFit { constant, rate, norms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duality::{build_dual, TrigPolynomial};
    use crate::matkernel::identity;
    use crate::model::{BaseDynamics, Potential};
    use crate::HermitianMatrix;

    fn free() -> OperatorModel {
        OperatorModel::free_laplacian()
    }

    fn quick() -> UhParams {
        UhParams { n_iter: 600, sample_count: 200, ..UhParams::default() }
    }

    #[test]
    fn free_laplacian_outside_and_inside_spectrum() {
        let out = uh_test(&free(), 3.0, &quick()).unwrap();
        assert_eq!(out.verdict, UhVerdict::Uh);
        assert!((out.exponents[0] - 1.5f64.acosh()).abs() < 1e-2);
        let s = out.splitting.unwrap();
        assert!(s.converged);
        assert!(out.exponents[0] + out.exponents[1] < 1e-9);
        let inside = uh_test(&free(), 0.0, &quick()).unwrap();
        assert_eq!(inside.verdict, UhVerdict::NotUh);
        assert!(!inside.is_uh());
    }

    #[test]
    fn dual_cosine_gap_is_hyperbolic() {
        // the largest gap of 3·(u_{n−1} + u_{n+1}) + 2cos 2π(θ + nα) sits near 0
        let v = TrigPolynomial::cosine(3.0, BaseDynamics::golden_rotation().rotation_vector().unwrap()[0]).unwrap();
        let model = build_dual(&v).unwrap();
        assert!(uh_test(&model, 6.5, &quick()).unwrap().is_uh());
    }

    #[test]
    fn stable_direction_contracts() {
        let out = uh_test(&free(), 3.0, &quick()).unwrap();
        let s = out.splitting.unwrap();
        let ContractionFit { norms, constant: c, rate } = stable_contraction(&free(), &s, 50).unwrap();
        assert!(rate > 1.0);
        for (n, v) in norms.iter().enumerate() {
            assert!(*v <= c * rate.powi(-(n as i32 + 1)) * (1.0 + 1e-9));
        }
    }

    #[test]
    fn constant_cocycle_has_degree_zero() {
        let model = OperatorModel::new(identity(1), Potential::Free, BaseDynamics::golden_rotation()).unwrap();
        let out = uh_test(&model, 3.0, &quick()).unwrap();
        let s = out.splitting.unwrap();
        assert_eq!(section_degree(&model, &s, 64).unwrap(), SectionDegree(vec![0]));
    }

    #[test]
    fn two_band_constant_model_has_a_gap() {
        let f = HermitianMatrix::from_real_diagonal(&[0.0, 10.0]);
        let model = OperatorModel::new(identity(2), Potential::Constant(f), BaseDynamics::golden_rotation()).unwrap();
        assert!(uh_test(&model, 5.0, &quick()).unwrap().is_uh());
        assert!(!uh_test(&model, 1.0, &quick()).unwrap().is_uh());
        assert!(!uh_test(&model, 10.5, &quick()).unwrap().is_uh());
    }

    #[test]
    fn non_invertible_base_is_rejected() {
        let model = free().with_base(BaseDynamics::Doubling).unwrap();
        assert_eq!(uh_test(&model, 3.0, &quick()).unwrap_err(), Error::UnsupportedDirection);
    }
}
