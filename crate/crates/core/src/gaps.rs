//! Spectral gaps: detection from IDS flatness certified by uniform
//! hyperbolicity, labels in the frequency module `ℤᵈα + ℤ`, and the
//! identity `m(1 − 𝒩(E)) ≡ rot(E)` modulo that module.

use itertools::Itertools;
use rayon::prelude::*;

use crate::cocycle::LagrangianFrame;
use crate::error::{Error, Result};
use crate::hyperbolicity::{section_degree, uh_test, SectionDegree, UhParams};
use crate::model::{ids, BasePoint, OperatorModel};
use crate::rotation::rot_number;

/// `ℤᵈα + ℤ` searched over `|k|∞ ≤ k_max`, or plain `ℤ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGroup {
    alpha: Vec<f64>,
    k_max: i64,
    label_tol: f64,
}

/// `(k, j)` standing for `⟨k, α⟩ + j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GapLabel {
    pub k: Vec<i64>,
    pub j: i64,
}

/// Closest group element found by [`LabelGroup::nearest`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatch {
    pub label: GapLabel,
    pub distance: f64,
}

impl LabelGroup {
    pub fn torus(alpha: Vec<f64>, k_max: i64) -> Result<Self> {
        if alpha.iter().any(|a| !a.is_finite()) || k_max < 0 {
            return Err(Error::InvalidInput("label group needs finite frequencies and k_max ≥ 0".into()));
        }
        Ok(Self { alpha, k_max, label_tol: 1e-2 })
    }

    pub fn integers() -> Self {
        Self { alpha: Vec::new(), k_max: 0, label_tol: 1e-2 }
    }

    /// The group of a model's base: its rotation vector if it has one.
    pub fn for_model(model: &OperatorModel) -> Self {
        let tol = model.tolerance();
        match model.base().rotation_vector() {
            Some(alpha) => Self { alpha: alpha.to_vec(), k_max: tol.k_max, label_tol: tol.label_tol },
            None => Self { label_tol: tol.label_tol, ..Self::integers() },
        }
    }

    pub fn with_label_tol(mut self, tol: f64) -> Self {
        self.label_tol = tol;
        self
    }

    pub fn label_tol(&self) -> f64 {
        self.label_tol
    }

    pub fn k_max(&self) -> i64 {
        self.k_max
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn is_integers(&self) -> bool {
        self.alpha.is_empty()
    }

    /// `x mod 1` in `[0, 1)` for the torus kind, `x` otherwise.
    pub fn reduce(&self, x: f64) -> f64 {
        if self.is_integers() {
            x
        } else {
            x.rem_euclid(1.0)
        }
    }

    pub fn value(&self, label: &GapLabel) -> f64 {
        label.k.iter().zip(&self.alpha).map(|(k, a)| *k as f64 * a).sum::<f64>() + label.j as f64
    }

    fn candidates(&self) -> Box<dyn Iterator<Item = Vec<i64>> + '_> {
        if self.alpha.is_empty() {
            return Box::new(std::iter::once(Vec::new()));
        }
        Box::new((0..self.alpha.len()).map(|_| -self.k_max..=self.k_max).multi_cartesian_product())
    }

    /// Among group elements within `label_tol` of `x`, the one with the
    /// smallest `|k|₁`; otherwise the overall closest.
    pub fn nearest(&self, x: f64) -> LabelMatch {
        let mut best: Option<(bool, i64, f64, GapLabel)> = None;
        for k in self.candidates() {
            let shifted = x - k.iter().zip(&self.alpha).map(|(k, a)| *k as f64 * a).sum::<f64>();
            let j = shifted.round() as i64;
            let distance = (shifted - j as f64).abs();
            let within = distance < self.label_tol;
            let weight: i64 = k.iter().map(|v| v.abs()).sum();
            let key = (!within, if within { weight } else { 0 }, distance);
            let better = match &best {
                None => true,
                Some((w, n, d, _)) => key.0.cmp(w).then(key.1.cmp(n)).then(key.2.total_cmp(d)).is_lt(),
            };
            if better {
                best = Some((key.0, key.1, key.2, GapLabel { k, j }));
            }
        }
        let (_, _, distance, label) = best.expect("label search has at least one candidate");
        LabelMatch { label, distance }
    }

    /// `min_g |x − g|` over the searched group elements.
    pub fn distance(&self, x: f64) -> f64 {
        self.candidates()
            .map(|k| {
                let shifted = x - k.iter().zip(&self.alpha).map(|(k, a)| *k as f64 * a).sum::<f64>();
                (shifted - shifted.round()).abs()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GapKind {
    /// Below the spectrum, `𝒩 = 0`.
    Below,
    Interior,
    /// Above the spectrum, `𝒩 = 1`.
    Above,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapRecord {
    pub lower: f64,
    pub upper: f64,
    pub kind: GapKind,
    pub ids_value: f64,
    pub label: Option<GapLabel>,
    /// Distance from `m·ids_value` to the nearest searched label.
    pub label_distance: f64,
    /// Rotation estimate at the gap midpoint, in turns per step.
    pub rot_value: f64,
    pub degree: Option<SectionDegree>,
}

impl GapRecord {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    /// Distance mod 1 between `m·𝒩 − m` and `−⟨r, α⟩` when a degree is
    /// known; an empirical cross-check, not an invariant.
    pub fn degree_discrepancy(&self, group: &LabelGroup, block_dim: usize) -> Option<f64> {
        let degree = self.degree.as_ref()?;
        let m = block_dim as f64;
        let winding: f64 = degree.0.iter().zip(group.alpha()).map(|(r, a)| *r as f64 * a).sum();
        let d = (m * self.ids_value - m + winding).rem_euclid(1.0);
        Some(d.min(1.0 - d))
    }
}

/// Scan settings for [`detect_gaps`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapScan {
    pub lower: f64,
    pub upper: f64,
    pub resolution: usize,
    pub sites: usize,
    pub uh: UhParams,
    /// Bisection steps refining each gap edge.
    pub edge_steps: usize,
    /// Grid of the winding computation; zero disables degrees.
    pub degree_grid: usize,
}

impl GapScan {
    pub fn new(lower: f64, upper: f64, resolution: usize, sites: usize) -> Self {
        Self { lower, upper, resolution, sites, uh: UhParams::default(), edge_steps: 10, degree_grid: 0 }
    }

    pub fn energies(&self) -> Vec<f64> {
        let step = (self.upper - self.lower) / (self.resolution - 1) as f64;
        (0..self.resolution).map(|i| self.lower + step * i as f64).collect()
    }
}

fn is_uh(model: &OperatorModel, energy: f64, params: &UhParams) -> Result<bool> {
    Ok(uh_test(model, energy, params)?.is_uh())
}

/// Moves from `outside` toward `inside` (which is UH) and returns the
/// outermost UH energy found by bisection.
fn refine_edge(model: &OperatorModel, mut outside: f64, mut inside: f64, steps: usize, params: &UhParams) -> Result<f64> {
    for _ in 0..steps {
        let mid = 0.5 * (outside + inside);
        if is_uh(model, mid, params)? {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    Ok(inside)
}

/// Maximal runs of grid energies over which `ids` varies by at most the
/// flatness tolerance, as index pairs `(first, last)` with `first < last`.
pub fn flat_runs(values: &[f64], flatness: f64) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut i = 0;
    while i + 1 < values.len() {
        let mut j = i;
        while j + 1 < values.len() && values[j + 1] - values[i] <= flatness {
            j += 1;
        }
        if j > i {
            runs.push((i, j));
            i = j + 1;
        } else {
            i += 1;
        }
    }
    runs
}

/// Gaps of the spectrum inside `[scan.lower, scan.upper]`: flat IDS runs
/// whose midpoint passes [`uh_test`], with edges refined by bisection on
/// the hyperbolicity flag.
pub fn detect_gaps(model: &OperatorModel, scan: &GapScan) -> Result<Vec<GapRecord>> {
    if scan.resolution < 50 {
        return Err(Error::InvalidInput("gap scan needs at least 50 energies".into()));
    }
    if !(scan.lower < scan.upper) || scan.sites == 0 {
        return Err(Error::InvalidInput("gap scan needs a non-empty range and sites".into()));
    }
    let energies = scan.energies();
    let theta = BasePoint::origin(model.base().dim());
    let values = ids(model, &theta, scan.sites, &energies)?;
    let flatness = model.tolerance().ids_flatness;
    let group = LabelGroup::for_model(model);
    let m = model.block_dim();
    let records: Vec<Option<GapRecord>> = flat_runs(&values, flatness)
        .into_par_iter()
        .map(|(i, j)| -> Result<Option<GapRecord>> {
            let mid = 0.5 * (energies[i] + energies[j]);
            if !is_uh(model, mid, &scan.uh)? {
                return Ok(None);
            }
            let ids_value = ids(model, &theta, scan.sites, &[mid])?[0];
            let kind = if ids_value <= flatness {
                GapKind::Below
            } else if ids_value >= 1.0 - flatness {
                GapKind::Above
            } else {
                GapKind::Interior
            };
            let lower = if i == 0 { energies[0] } else { refine_edge(model, energies[i - 1], mid, scan.edge_steps, &scan.uh)? };
            let last = energies.len() - 1;
            let upper = if j == last { energies[last] } else { refine_edge(model, energies[j + 1], mid, scan.edge_steps, &scan.uh)? };
            let rot_value = rot_number(model, mid, &theta, &LagrangianFrame::horizontal(m), scan.sites)?.estimate;
            let degree = if scan.degree_grid > 0 && model.base().rotation_vector().is_some() {
                uh_test(model, mid, &scan.uh)?.splitting.and_then(|s| section_degree(model, &s, scan.degree_grid).ok())
            } else {
                None
            };
            let record = GapRecord { lower, upper, kind, ids_value, label: None, label_distance: f64::NAN, rot_value, degree };
            Ok(Some(label_gap(&record, &group, m)))
        })
        .collect::<Result<_>>()?;
    Ok(records.into_iter().flatten().collect())
}

/// Attaches the label of `m·ids_value`, if one lies within the group's
/// tolerance.
pub fn label_gap(record: &GapRecord, group: &LabelGroup, block_dim: usize) -> GapRecord {
    let found = group.nearest(block_dim as f64 * record.ids_value);
    GapRecord { label: (found.distance < group.label_tol()).then_some(found.label), label_distance: found.distance, ..record.clone() }
}

/// Both sides of `m(1 − 𝒩(E)) = rot(E)` and their distance modulo the group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdsRotCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub distance: f64,
}

pub fn verify_ids_rot(model: &OperatorModel, energy: f64, sites: usize, group: &LabelGroup) -> Result<IdsRotCheck> {
    let theta = BasePoint::origin(model.base().dim());
    let m = model.block_dim();
    let lhs = m as f64 * (1.0 - ids(model, &theta, sites, &[energy])?[0]);
    let rhs = rot_number(model, energy, &theta, &LagrangianFrame::horizontal(m), sites)?.estimate;
    Ok(IdsRotCheck { lhs, rhs, distance: group.distance(lhs - rhs) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkernel::identity;
    use crate::model::{BaseDynamics, Potential};
    use crate::HermitianMatrix;

    const GOLDEN: f64 = 0.618_033_988_749_894_9;

    fn quick(lower: f64, upper: f64) -> GapScan {
        GapScan { uh: UhParams { n_iter: 600, sample_count: 200, ..UhParams::default() }, ..GapScan::new(lower, upper, 200, 400) }
    }

    #[test]
    fn trivial_labels() {
        let group = LabelGroup::torus(vec![GOLDEN], 20).unwrap();
        assert_eq!(group.nearest(0.0).label, GapLabel { k: vec![0], j: 0 });
        assert_eq!(group.nearest(1.0).label, GapLabel { k: vec![0], j: 1 });
        let m = group.nearest(1.0 - GOLDEN);
        assert_eq!(m.label, GapLabel { k: vec![-1], j: 1 });
        assert!(m.distance < 1e-12);
        assert_eq!(LabelGroup::integers().nearest(2.004).label, GapLabel { k: vec![], j: 2 });
        assert!((LabelGroup::integers().distance(0.3) - 0.3).abs() < 1e-15);
        assert!((group.reduce(-0.25) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn label_prefers_short_vectors() {
        // 2α − 1 ≈ 0.236 wins over longer vectors landing within tolerance
        let group = LabelGroup::torus(vec![GOLDEN], 20).unwrap();
        let found = group.nearest(2.0 * GOLDEN - 1.0 + 1e-3);
        assert_eq!(found.label, GapLabel { k: vec![2], j: -1 });
    }

    #[test]
    fn flat_runs_are_maximal() {
        let v = [0.0, 0.0, 0.001, 0.1, 0.2, 0.2, 0.2, 0.5, 1.0];
        assert_eq!(flat_runs(&v, 2e-3), vec![(0, 2), (4, 6)]);
        assert!(flat_runs(&[0.0], 2e-3).is_empty());
    }

    #[test]
    fn free_laplacian_has_only_outer_gaps() {
        let gaps = detect_gaps(&OperatorModel::free_laplacian(), &quick(-4.0, 4.0)).unwrap();
        assert_eq!(gaps.len(), 2, "{gaps:?}");
        assert_eq!(gaps[0].kind, GapKind::Below);
        assert_eq!(gaps[1].kind, GapKind::Above);
        assert!((gaps[0].upper + 2.0).abs() < 0.05 && (gaps[1].lower - 2.0).abs() < 0.05);
        assert_eq!(gaps[0].label, Some(GapLabel { k: vec![0], j: 0 }));
        assert_eq!(gaps[1].label, Some(GapLabel { k: vec![0], j: 1 }));
    }

    #[test]
    fn two_shifted_bands_leave_one_interior_gap() {
        let f = HermitianMatrix::from_real_diagonal(&[0.0, 10.0]);
        let model = OperatorModel::new(identity(2), Potential::Constant(f), BaseDynamics::golden_rotation()).unwrap();
        let gaps = detect_gaps(&model, &quick(-3.0, 13.0)).unwrap();
        let interior: Vec<_> = gaps.iter().filter(|g| g.kind == GapKind::Interior).collect();
        assert_eq!(interior.len(), 1);
        assert!((interior[0].lower - 2.0).abs() < 0.05 && (interior[0].upper - 8.0).abs() < 0.05);
        assert!((interior[0].ids_value - 0.5).abs() < 1e-2);
        assert_eq!(interior[0].label, Some(GapLabel { k: vec![0], j: 1 }));
    }

    #[test]
    fn ids_rot_identity_outside_spectrum() {
        let model = OperatorModel::free_laplacian();
        let group = LabelGroup::for_model(&model);
        let above = verify_ids_rot(&model, 3.0, 1000, &group).unwrap();
        assert_eq!(above.lhs, 0.0);
        assert!(above.rhs.abs() < 1e-2 && above.distance < 1e-2);
        let below = verify_ids_rot(&model, -3.0, 1000, &group).unwrap();
        assert_eq!(below.lhs, 1.0);
        assert!(below.distance < 1e-2);
    }

    #[test]
    fn small_resolution_is_rejected() {
        let scan = GapScan::new(-1.0, 1.0, 10, 100);
        assert!(detect_gaps(&OperatorModel::free_laplacian(), &scan).is_err());
    }
}
