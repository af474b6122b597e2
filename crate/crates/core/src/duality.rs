//! Aubry duality: block operators dual to scalar quasi-periodic operators
//! with trigonometric-polynomial potentials.

use std::f64::consts::TAU;

use crate::cocycle::transfer_step;
use crate::error::{Error, Result};
use crate::matkernel::{self, max_abs, real, Complex, ComplexMatrix, ONE, ZERO};
use crate::model::{ids, BaseDynamics, BasePoint, OperatorModel, Potential};

/// Real-valued `v(θ) = Σ_{|k|≤d} v̂_k e^{2πikθ}` with `v̂_{−k} = conj(v̂_k)`,
/// together with its rotation frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPolynomial {
    /// `v̂_0, …, v̂_d`.
    coeffs: Vec<Complex>,
    alpha: f64,
}

impl TrigPolynomial {
    /// `coeffs` lists `v̂_0, v̂_1, …, v̂_d`; negative modes are implied.
    pub fn new(coeffs: Vec<Complex>, alpha: f64) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(Error::InvalidInput("trigonometric polynomial needs degree at least 1".into()));
        }
        if coeffs.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) || !alpha.is_finite() {
            return Err(Error::InvalidInput("coefficients and frequency must be finite".into()));
        }
        if coeffs[0].im.abs() > 1e-14 {
            return Err(Error::InvalidInput("constant coefficient must be real".into()));
        }
        if coeffs[coeffs.len() - 1].norm() == 0.0 {
            return Err(Error::DegreeZeroLeading);
        }
        Ok(Self { coeffs, alpha })
    }

    /// `v = 2λ cos 2πθ`.
    pub fn cosine(lambda: f64, alpha: f64) -> Result<Self> {
        Self::new(vec![ZERO, real(lambda)], alpha)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `v̂_k` for `|k| ≤ d`, zero beyond.
    pub fn coefficient(&self, k: i64) -> Complex {
        match self.coeffs.get(k.unsigned_abs() as usize) {
            Some(z) if k >= 0 => *z,
            Some(z) => z.conj(),
            None => ZERO,
        }
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let d = self.degree() as i64;
        (-d..=d).map(|k| (self.coefficient(k) * Complex::from_polar(1.0, TAU * k as f64 * theta)).re).sum()
    }

    /// Upper-triangular Toeplitz coupling with first row `(v̂_d, …, v̂_1)`.
    pub fn dual_coupling(&self) -> ComplexMatrix {
        let d = self.degree();
        ComplexMatrix::from_fn(d, d, |i, j| if j >= i { self.coefficient((d - (j - i)) as i64) } else { ZERO })
    }

    /// Dual potential block: diagonal `2cos 2π(θ + (d−1−i)α) + v̂_0`, entry
    /// `(i, j)` equal to `v̂_{i−j}` off the diagonal.
    pub fn dual_block(&self, theta: f64) -> ComplexMatrix {
        let d = self.degree();
        ComplexMatrix::from_fn(d, d, |i, j| {
            if i == j {
                real(2.0 * (TAU * (theta + (d - 1 - i) as f64 * self.alpha)).cos()) + self.coefficient(0)
            } else {
                self.coefficient(i as i64 - j as i64)
            }
        })
    }

    /// The one-step companion matrix of `L u = E u`, of size `2d × 2d`.
    pub fn one_step(&self, energy: f64, theta: f64) -> ComplexMatrix {
        let d = self.degree() as i64;
        let size = 2 * self.degree();
        let lead = self.coefficient(d);
        let mut out = ComplexMatrix::zeros(size, size);
        for (col, k) in (-d..d).rev().enumerate() {
            let entry = if k == 0 { real(energy - 2.0 * (TAU * theta).cos()) - self.coefficient(0) } else { -self.coefficient(k) };
            out[(0, col)] = entry / lead;
        }
        for i in 1..size {
            out[(i, i - 1)] = ONE;
        }
        out
    }
}

/// The block operator dual to `H_v`: `m = d`, coupling and potential from
/// [`TrigPolynomial`], driven by the rotation `dα`.
pub fn build_dual(v: &TrigPolynomial) -> Result<OperatorModel> {
    let base = BaseDynamics::torus(vec![v.degree() as f64 * v.alpha])?;
    OperatorModel::new(v.dual_coupling(), Potential::Dual(v.clone()), base)
}

/// The scalar operator `u_{n−1} + u_{n+1} + v(θ + nα)u_n`.
pub fn scalar_model(v: &TrigPolynomial) -> Result<OperatorModel> {
    OperatorModel::new(matkernel::identity(1), Potential::scalar_trig(v), BaseDynamics::torus(vec![v.alpha])?)
}

/// Relative residual between the `d`-fold product of one-step matrices
/// and the block transfer matrix `Â_E(θ)` of the dual model.
pub fn check_factorization(v: &TrigPolynomial, energy: f64, theta: f64) -> Result<f64> {
    let dual = build_dual(v)?;
    let d = v.degree();
    let mut product = matkernel::identity(2 * d);
    for j in 0..d {
        product = v.one_step(energy, theta + j as f64 * v.alpha) * product;
    }
    let target = transfer_step(&dual, energy, &BasePoint::from(theta))?.raw;
    Ok(max_abs(&(product - &target)) / max_abs(&target))
}

/// `max |𝒩^L(E) − 𝒩^H(E)|` over the grid, both from single restrictions
/// with `sites` sites.
pub fn check_ids_duality(v: &TrigPolynomial, energies: &[f64], sites: usize) -> Result<f64> {
    let dual = build_dual(v)?;
    let scalar = scalar_model(v)?;
    let theta = BasePoint::from(0.0);
    let a = ids(&dual, &theta, sites, energies)?;
    let b = ids(&scalar, &theta, sites, energies)?;
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::{symplectic_defect, transfer_from_block};
    use proptest::prelude::*;

    const GOLDEN: f64 = 0.618_033_988_749_894_9;

    #[test]
    fn degree_one_is_the_scalar_dual() {
        let v = TrigPolynomial::cosine(3.0, GOLDEN).unwrap();
        let model = build_dual(&v).unwrap();
        assert_eq!(model.block_dim(), 1);
        assert_eq!(model.coupling()[(0, 0)], real(3.0));
        let f = model.potential_at(&BasePoint::from(0.1));
        assert!((f[(0, 0)].re - 2.0 * (TAU * 0.1).cos()).abs() < 1e-15);
    }

    #[test]
    fn degree_two_blocks() {
        let v = TrigPolynomial::new(vec![ZERO, ONE, ONE], GOLDEN).unwrap();
        assert_eq!(v.dual_coupling(), matkernel::from_row_major(2, 2, &[ONE, ONE, ZERO, ONE]).unwrap());
        let theta = 0.27;
        let f = v.dual_block(theta);
        let expected = [[2.0 * (TAU * (theta + GOLDEN)).cos(), 1.0], [1.0, 2.0 * (TAU * theta).cos()]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((f[(i, j)] - real(expected[i][j])).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_leading_coefficient_is_rejected() {
        assert_eq!(TrigPolynomial::new(vec![ZERO, ONE, ZERO], GOLDEN), Err(Error::DegreeZeroLeading));
    }

    #[test]
    fn factorization_residuals() {
        let v1 = TrigPolynomial::cosine(1.3, GOLDEN).unwrap();
        assert!(check_factorization(&v1, 0.4, 0.8).unwrap() < 1e-14);
        let v2 = TrigPolynomial::new(vec![ZERO, ONE, ONE], GOLDEN).unwrap();
        assert!(check_factorization(&v2, 0.7, 0.3).unwrap() < 1e-12);
        let v3 = TrigPolynomial::new(vec![real(0.3), Complex::new(0.5, -0.2), real(-0.8), Complex::new(0.4, 0.9)], GOLDEN).unwrap();
        assert!(check_factorization(&v3, -1.1, 0.61).unwrap() < 1e-11);
    }

    #[test]
    fn conjugated_one_step_is_symplectic() {
        let v = TrigPolynomial::new(vec![real(0.3), Complex::new(0.5, -0.2), real(-0.8)], GOLDEN).unwrap();
        let dual = build_dual(&v).unwrap();
        let mut p = matkernel::identity(4);
        p.view_mut((0, 0), (2, 2)).copy_from(dual.coupling());
        let pinv = matkernel::inverse(&p).unwrap();
        for k in 0..10 {
            let step = &p * v.one_step(0.3 * k as f64 - 1.0, 0.07 * k as f64) * &pinv;
            assert!(symplectic_defect(&step) < 1e-10);
        }
        let a = transfer_from_block(&dual, 0.2, &dual.potential_at(&BasePoint::from(0.5)));
        assert!(symplectic_defect(&a) < 1e-10);
    }

    #[test]
    fn ids_agree_far_from_spectrum() {
        let v = TrigPolynomial::new(vec![ZERO, ONE, ONE], GOLDEN).unwrap();
        assert_eq!(check_ids_duality(&v, &[-50.0, 50.0], 200).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn dual_blocks_are_hermitian(d in 1usize..5, theta in 0.0f64..1.0, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut coeffs = vec![real(rng.gen_range(-1.0..1.0))];
            coeffs.extend((0..d).map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))));
            let v = TrigPolynomial::new(coeffs, GOLDEN).unwrap();
            let f = v.dual_block(theta);
            prop_assert_eq!(f.adjoint(), f);
            prop_assert!(check_factorization(&v, rng.gen_range(-3.0..3.0), theta).unwrap() < 1e-11);
        }
    }
}
