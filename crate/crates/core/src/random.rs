//! Seeded random matrices and operators for property checks and
//! benchmarks.

use rand::Rng;

use crate::cocycle::LagrangianFrame;
use crate::matkernel::{identity, orthonormalize, real, singular_values, Complex, ComplexMatrix, HermitianMatrix};
use crate::model::{BaseDynamics, FourierBlock, OperatorModel, Potential, TrigBlocks};

/// Entries uniform in `[−1, 1] + i[−1, 1]`.
pub fn random_complex<R: Rng>(rng: &mut R) -> Complex {
    Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| random_complex(rng))
}

pub fn random_hermitian<R: Rng>(rng: &mut R, n: usize) -> HermitianMatrix {
    HermitianMatrix::symmetrize(random_matrix(rng, n, n))
}

pub fn random_unitary<R: Rng>(rng: &mut R, n: usize) -> ComplexMatrix {
    orthonormalize(&random_matrix(rng, n, n))
}

/// Model over the golden rotation with `cond(C) ≤ 100` and a potential
/// `F₀ + F e(θ) + F* e(−θ)` with random `F₀ = F₀*` and `F`.
pub fn random_model<R: Rng>(rng: &mut R, m: usize) -> OperatorModel {
    loop {
        let c = random_matrix(rng, m, m) + identity(m) * real(rng.gen_range(0.5..1.5));
        let s = singular_values(&c);
        if s[0] / s[m - 1] > 100.0 {
            continue;
        }
        let potential = Potential::TrigBlocks(TrigBlocks {
            constant: random_hermitian(rng, m),
            terms: vec![FourierBlock { frequency: vec![1], coefficient: random_matrix(rng, m, m) }],
        });
        return OperatorModel::new(c, potential, BaseDynamics::golden_rotation()).expect("random model is valid");
    }
}

/// Orthonormal Lagrangian frame `[I; S]` with random Hermitian `S`.
pub fn random_lagrangian<R: Rng>(rng: &mut R, m: usize) -> LagrangianFrame {
    let s = random_hermitian(rng, m).into_inner();
    LagrangianFrame::new(identity(m), s).expect("graph of a Hermitian matrix is Lagrangian").orthonormalized()
}
