//! Finite unions of closed intervals, the ★-product, and Monte Carlo
//! spectra of random diagonal perturbations `H_θ + ω_n·I`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaps::{detect_gaps, GapKind, GapScan};
use crate::model::{BasePoint, BlockTridiagonal, OperatorModel};

/// Sorted, pairwise disjoint closed intervals; points are zero-width
/// intervals.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpectralSet(Vec<[f64; 2]>);

impl SpectralSet {
    /// Normalises arbitrary intervals: sorts and merges overlaps.
    pub fn new(intervals: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut v: Vec<[f64; 2]> = Vec::new();
        for (lo, hi) in intervals {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::InvalidInput(format!("invalid interval [{lo}, {hi}]")));
            }
            v.push([lo, hi]);
        }
        Ok(Self::normalized(v))
    }

    fn normalized(mut v: Vec<[f64; 2]>) -> Self {
        v.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        let mut out: Vec<[f64; 2]> = Vec::with_capacity(v.len());
        for iv in v {
            match out.last_mut() {
                Some(last) if iv[0] <= last[1] => last[1] = last[1].max(iv[1]),
                _ => out.push(iv),
            }
        }
        Self(out)
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new([(lo, hi)])
    }

    pub fn points(points: &[f64]) -> Result<Self> {
        Self::new(points.iter().map(|&p| (p, p)))
    }

    pub fn intervals(&self) -> &[[f64; 2]] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> Option<f64> {
        self.0.first().map(|iv| iv[0])
    }

    pub fn max(&self) -> Option<f64> {
        self.0.last().map(|iv| iv[1])
    }

    pub fn diameter(&self) -> f64 {
        match (self.min(), self.max()) {
            (Some(lo), Some(hi)) => hi - lo,
            _ => 0.0,
        }
    }

    pub fn hull(&self) -> Self {
        match (self.min(), self.max()) {
            (Some(lo), Some(hi)) => Self(vec![[lo, hi]]),
            _ => Self::default(),
        }
    }

    pub fn minkowski_sum(&self, other: &Self) -> Self {
        Self::normalized(self.0.iter().flat_map(|a| other.0.iter().map(move |b| [a[0] + b[0], a[1] + b[1]])).collect())
    }

    pub fn union(&self, other: &Self) -> Self {
        Self::normalized(self.0.iter().chain(&other.0).copied().collect())
    }

    /// Widens every interval by `radius` on both sides.
    pub fn thicken(&self, radius: f64) -> Self {
        Self::normalized(self.0.iter().map(|iv| [iv[0] - radius, iv[1] + radius]).collect())
    }

    /// Removes the open interval `(lo, hi)`.
    pub fn remove_open(&self, lo: f64, hi: f64) -> Self {
        let mut out = Vec::new();
        for iv in &self.0 {
            if iv[1] <= lo || iv[0] >= hi {
                out.push(*iv);
                continue;
            }
            if iv[0] <= lo {
                out.push([iv[0], lo]);
            }
            if iv[1] >= hi {
                out.push([hi, iv[1]]);
            }
        }
        Self::normalized(out)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.distance(x) == 0.0
    }

    pub fn distance(&self, x: f64) -> f64 {
        let i = self.0.partition_point(|iv| iv[1] < x);
        let mut best = f64::INFINITY;
        if let Some(iv) = self.0.get(i) {
            best = best.min((iv[0] - x).max(0.0));
        }
        if i > 0 {
            best = best.min(x - self.0[i - 1][1]);
        }
        best
    }

    /// Points spaced at most `step` apart covering every interval,
    /// endpoints included.
    pub fn grid(&self, step: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for iv in &self.0 {
            let n = ((iv[1] - iv[0]) / step).ceil().max(1.0) as usize;
            out.extend((0..=n).map(|k| iv[0] + (iv[1] - iv[0]) * k as f64 / n as f64));
        }
        out
    }
}

/// `A ★ B`: `A + ch(B)` if `diam A ≥ diam B`, otherwise `ch(A) + B`.
pub fn star(a: &SpectralSet, b: &SpectralSet) -> Result<SpectralSet> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(if a.diameter() >= b.diameter() { a.minkowski_sum(&b.hull()) } else { a.hull().minkowski_sum(b) })
}

/// I.i.d. site shifts drawn uniformly from a finite support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomDiagonalLaw {
    support: Vec<f64>,
    seed: u64,
}

impl RandomDiagonalLaw {
    pub fn new(mut support: Vec<f64>, seed: u64) -> Result<Self> {
        if support.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidLaw("support values must be finite".into()));
        }
        support.sort_by(f64::total_cmp);
        support.dedup();
        if support.len() < 2 {
            return Err(Error::InvalidLaw("support needs at least two distinct values".into()));
        }
        Ok(Self { support, seed })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn support_set(&self) -> SpectralSet {
        SpectralSet::normalized(self.support.iter().map(|&s| [s, s]).collect())
    }

    /// Realization `index`, drawn from its own stream of the seeded
    /// generator, together with a base point.
    pub fn sample(&self, index: u64, sites: usize, base_dim: usize) -> (BasePoint, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let theta = BasePoint::new((0..base_dim).map(|_| rng.gen::<f64>()).collect());
        let shifts = (0..sites).map(|_| self.support[rng.gen_range(0..self.support.len())]).collect();
        (theta, shifts)
    }

    /// Constant realizations for each support value and two-sided
    /// constant realizations `s` on the left half, `s'` on the right.
    pub fn structured(&self, sites: usize) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = self.support.iter().map(|&s| vec![s; sites]).collect();
        for &left in &self.support {
            for &right in &self.support {
                if left != right {
                    out.push((0..sites).map(|n| if n < sites / 2 { left } else { right }).collect());
                }
            }
        }
        out
    }
}

/// Union of perturbed finite-volume spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSpectrum {
    /// All eigenvalues found, ascending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues thickened by half the merge radius, so points closer
    /// than the radius coalesce.
    pub set: SpectralSet,
    pub merge_radius: f64,
}

const EIGEN_TOL: f64 = 1e-11;

/// Twice the median eigenvalue spacing of the unperturbed restriction.
pub fn merge_radius(model: &OperatorModel, sites: usize) -> Result<f64> {
    let tri = BlockTridiagonal::new(model, &BasePoint::origin(model.base().dim()), sites)?;
    let ev = tri.eigenvalues(EIGEN_TOL);
    let mut gaps: Vec<f64> = ev.windows(2).map(|w| w[1] - w[0]).collect();
    if gaps.is_empty() {
        return Ok(0.0);
    }
    gaps.sort_by(f64::total_cmp);
    Ok(2.0 * gaps[gaps.len() / 2])
}

/// Eigenvalues of `H_θ^N + diag(ω)` over the structured realizations at
/// `θ = 0` and `realizations` random `(θ, ω)`; deterministic in the seed.
pub fn monte_carlo_sigma1(model: &OperatorModel, law: &RandomDiagonalLaw, sites: usize, realizations: usize) -> Result<MonteCarloSpectrum> {
    if realizations == 0 {
        return Err(Error::InvalidInput("need at least one realization".into()));
    }
    let dim = model.base().dim();
    let origin = BlockTridiagonal::new(model, &BasePoint::origin(dim), sites)?;
    let structured = law.structured(sites);
    let mut spectra: Vec<Vec<f64>> = structured.par_iter().map(|w| origin.with_site_shifts(w).eigenvalues(EIGEN_TOL)).collect();
    let random: Vec<Vec<f64>> = (0..realizations as u64)
        .into_par_iter()
        .map(|i| {
            let (theta, shifts) = law.sample(i, sites, dim);
            Ok(BlockTridiagonal::new(model, &theta, sites)?.with_site_shifts(&shifts).eigenvalues(EIGEN_TOL))
        })
        .collect::<Result<_>>()?;
    spectra.extend(random);
    let mut eigenvalues: Vec<f64> = spectra.into_iter().flatten().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let radius = merge_radius(model, sites)?;
    let set = SpectralSet::normalized(eigenvalues.iter().map(|&e| [e - radius / 2.0, e + radius / 2.0]).collect());
    Ok(MonteCarloSpectrum { eigenvalues, set, merge_radius: radius })
}

/// `Σ₀` as the scanned energy window minus the detected gaps.
pub fn sigma0_from_gaps(model: &OperatorModel, scan: &GapScan) -> Result<SpectralSet> {
    let mut set = SpectralSet::interval(scan.lower, scan.upper)?;
    for gap in detect_gaps(model, scan)? {
        let (lo, hi) = match gap.kind {
            GapKind::Below => (f64::NEG_INFINITY, gap.upper),
            GapKind::Above => (gap.lower, f64::INFINITY),
            GapKind::Interior => (gap.lower, gap.upper),
        };
        set = set.remove_open(lo, hi);
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BigStarReport {
    /// Largest distance of a sampled eigenvalue from `Σ₀ ★ S`.
    pub subset_violation: f64,
    /// Largest distance from a point of `Σ₀ ★ S` to the sampled set.
    pub coverage_gap: f64,
    pub predicted: SpectralSet,
    pub sampled: MonteCarloSpectrum,
}

/// Compares the Monte Carlo spectrum with `Σ₀ ★ S` for a given `Σ₀`.
pub fn check_bigstar_with(
    model: &OperatorModel,
    law: &RandomDiagonalLaw,
    sites: usize,
    realizations: usize,
    sigma0: &SpectralSet,
) -> Result<BigStarReport> {
    let predicted = star(sigma0, &law.support_set())?;
    let sampled = monte_carlo_sigma1(model, law, sites, realizations)?;
    let subset_violation = sampled.eigenvalues.iter().map(|&e| predicted.distance(e)).fold(0.0, f64::max);
    let coverage_gap = predicted.grid(1e-3).into_iter().map(|x| sampled.set.distance(x)).fold(0.0, f64::max);
    Ok(BigStarReport { subset_violation, coverage_gap, predicted, sampled })
}

/// As [`check_bigstar_with`], with `Σ₀` from a gap scan of the
/// unperturbed model over its norm bound at resolution 400.
pub fn check_bigstar(model: &OperatorModel, law: &RandomDiagonalLaw, sites: usize, realizations: usize) -> Result<BigStarReport> {
    let bound = model.norm_bound() + 0.5;
    let sigma0 = sigma0_from_gaps(model, &GapScan::new(-bound, bound, 400, sites))?;
    check_bigstar_with(model, law, sites, realizations, &sigma0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkernel::identity;
    use crate::model::{BaseDynamics, Potential};
    use crate::HermitianMatrix;
    use proptest::prelude::*;

    fn set(v: &[(f64, f64)]) -> SpectralSet {
        SpectralSet::new(v.iter().copied()).unwrap()
    }

    #[test]
    fn star_examples() {
        assert_eq!(star(&set(&[(0.0, 2.0)]), &SpectralSet::points(&[0.0, 1.0]).unwrap()).unwrap(), set(&[(0.0, 3.0)]));
        assert_eq!(star(&set(&[(0.0, 1.0)]), &SpectralSet::points(&[0.0, 3.0]).unwrap()).unwrap(), set(&[(0.0, 1.0), (3.0, 4.0)]));
        assert_eq!(star(&set(&[(-2.0, 2.0)]), &SpectralSet::points(&[0.0, 5.0]).unwrap()).unwrap(), set(&[(-2.0, 2.0), (3.0, 7.0)]));
        assert_eq!(star(&SpectralSet::default(), &set(&[(0.0, 1.0)])), Err(Error::EmptySet));
    }

    #[test]
    fn star_tie_uses_first_branch() {
        let a = set(&[(0.0, 0.5), (1.5, 2.0)]);
        let b = SpectralSet::points(&[0.0, 2.0]).unwrap();
        assert_eq!(star(&a, &b).unwrap(), a.minkowski_sum(&b.hull()));
        assert_eq!(star(&a, &b).unwrap(), set(&[(0.0, 4.0)]));
        assert_eq!(star(&b, &a).unwrap(), set(&[(0.0, 4.0)]));
    }

    #[test]
    fn interval_arithmetic() {
        let s = set(&[(3.0, 4.0), (0.0, 1.0), (0.5, 2.0)]);
        assert_eq!(s.intervals(), &[[0.0, 2.0], [3.0, 4.0]]);
        assert_eq!(s.distance(2.5), 0.5);
        assert_eq!(s.distance(-1.0), 1.0);
        assert_eq!(s.distance(5.0), 1.0);
        assert!(s.contains(3.5));
        assert_eq!(s.remove_open(1.0, 3.5).intervals(), &[[0.0, 1.0], [3.5, 4.0]]);
        assert_eq!(s.diameter(), 4.0);
        assert_eq!(serde_json::to_string(&s).unwrap(), "[[0.0,2.0],[3.0,4.0]]");
    }

    #[test]
    fn degenerate_law_is_rejected() {
        assert!(matches!(RandomDiagonalLaw::new(vec![0.0], 1), Err(Error::InvalidLaw(_))));
        assert!(matches!(RandomDiagonalLaw::new(vec![2.0, 2.0], 1), Err(Error::InvalidLaw(_))));
    }

    #[test]
    fn constant_realization_is_a_shift() {
        let model = OperatorModel::free_laplacian();
        let law = RandomDiagonalLaw::new(vec![0.0, 5.0], 7).unwrap();
        let mc = monte_carlo_sigma1(&model, &law, 50, 3).unwrap();
        let base = BlockTridiagonal::new(&model, &BasePoint::from(0.0), 50).unwrap().eigenvalues(1e-12);
        for e in base {
            let target = e + 5.0;
            let nearest = mc.eigenvalues.iter().map(|x| (x - target).abs()).fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-8);
        }
    }

    #[test]
    fn constant_potential_shift_structure() {
        let model = OperatorModel::new(
            identity(1),
            Potential::Constant(HermitianMatrix::from_real_diagonal(&[0.3])),
            BaseDynamics::golden_rotation(),
        )
        .unwrap();
        let law = RandomDiagonalLaw::new(vec![0.0, 20.0], 3).unwrap();
        let sigma0 = SpectralSet::interval(-1.7, 2.3).unwrap();
        let report = check_bigstar_with(&model, &law, 60, 20, &sigma0).unwrap();
        assert!(report.subset_violation < 1e-6);
    }

    #[test]
    fn monte_carlo_is_deterministic_and_monotone() {
        let model = OperatorModel::free_laplacian();
        let law = RandomDiagonalLaw::new(vec![0.0, 1.0, 4.0], 11).unwrap();
        let a = monte_carlo_sigma1(&model, &law, 40, 10).unwrap();
        let b = monte_carlo_sigma1(&model, &law, 40, 10).unwrap();
        assert_eq!(a, b);
        let more = monte_carlo_sigma1(&model, &law, 40, 20).unwrap();
        for e in &a.eigenvalues {
            assert!(more.set.contains(*e));
        }
    }

    proptest! {
        #[test]
        fn star_is_symmetric(a in 0.0f64..3.0, b in 0.0f64..3.0, lo in -2.0f64..2.0) {
            let x = SpectralSet::new([(lo, lo + a)]).unwrap();
            let y = SpectralSet::points(&[0.0, b]).unwrap();
            prop_assert_eq!(star(&x, &y).unwrap(), star(&y, &x).unwrap());
        }

        #[test]
        fn normalisation_is_idempotent(v in proptest::collection::vec((-5.0f64..5.0, 0.0f64..2.0), 1..10)) {
            let s = SpectralSet::new(v.iter().map(|&(lo, w)| (lo, lo + w))).unwrap();
            prop_assert_eq!(SpectralSet::new(s.intervals().iter().map(|iv| (iv[0], iv[1]))).unwrap(), s.clone());
            prop_assert!(s.intervals().windows(2).all(|w| w[0][1] < w[1][0]));
        }
    }
}
