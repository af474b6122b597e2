//! Cross-module invariants on random models.

use fibrot::cocycle::{symplectic_defect, transfer_product};
use fibrot::matkernel::spectral_norm;
use fibrot::model::{ids, BlockTridiagonal};
use fibrot::perturb::{star, SpectralSet};
use fibrot::random::{random_lagrangian, random_model};
use fibrot::rotation::{kernel_multiplicity, rot_number};
use fibrot::{BasePoint, LagrangianFrame, OperatorModel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup(seed: u64, m: usize) -> (ChaCha8Rng, OperatorModel, BasePoint) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = random_model(&mut rng, m);
    let theta = BasePoint::from(rng.gen::<f64>());
    (rng, model, theta)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ids_is_a_distribution(seed in any::<u64>(), m in 1usize..4, sites in 1usize..40) {
        let (_, model, theta) = setup(seed, m);
        let bound = model.norm_bound();
        let grid: Vec<f64> = (0..41).map(|k| -bound - 0.5 + (2.0 * bound + 1.0) * k as f64 / 40.0).collect();
        let values = ids(&model, &theta, sites, &grid).unwrap();
        prop_assert_eq!(values[0], 0.0);
        prop_assert_eq!(*values.last().unwrap(), 1.0);
        prop_assert!(values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn sturm_count_matches_eigenvalues(seed in any::<u64>(), m in 1usize..4, sites in 1usize..20) {
        let (mut rng, model, theta) = setup(seed, m);
        let tri = BlockTridiagonal::new(&model, &theta, sites).unwrap();
        let ev = tri.eigenvalues(1e-13);
        prop_assert_eq!(ev.len(), m * sites);
        let e = rng.gen_range(-model.norm_bound()..model.norm_bound());
        if ev.iter().all(|x| (x - e).abs() > 1e-8) {
            prop_assert_eq!(tri.count_below(e), ev.iter().filter(|&&x| x < e).count());
        }
    }

    #[test]
    fn eigenvalues_are_transfer_kernels(seed in any::<u64>(), m in 1usize..4, sites in 1usize..12) {
        let (_, model, theta) = setup(seed, m);
        let ev = BlockTridiagonal::new(&model, &theta, sites).unwrap().eigenvalues(1e-13);
        let isolated = ev.iter().enumerate().find(|(i, x)| {
            ev.iter().enumerate().all(|(j, y)| *i == j || (*x - y).abs() > 1e-3)
        });
        if let Some((_, &e)) = isolated {
            prop_assert_eq!(kernel_multiplicity(&model, &theta, sites, e).unwrap(), 1);
        }
    }

    #[test]
    fn transfer_products_are_symplectic(seed in any::<u64>(), m in 1usize..4, n in -15i64..15, e in -5.0f64..5.0) {
        let (_, model, theta) = setup(seed, m);
        let a = transfer_product(&model, e, &theta, n).unwrap();
        prop_assert!(symplectic_defect(&a) < 1e-9 * spectral_norm(&a).powi(2));
    }

    #[test]
    fn rotation_lies_in_the_allowed_range(seed in any::<u64>(), m in 1usize..4, steps in 1usize..200, e in -12.0f64..12.0) {
        let (mut rng, model, theta) = setup(seed, m);
        let frame = random_lagrangian(&mut rng, m);
        let rot = rot_number(&model, e, &theta, &frame, steps).unwrap().estimate;
        prop_assert!(rot > -1.0 - 1e-9 && rot < m as f64 + 1.0 + 1e-9, "{}", rot);
        let flat = rot_number(&model, e, &theta, &LagrangianFrame::horizontal(m), steps).unwrap().estimate;
        prop_assert!(steps as f64 * (rot - flat).abs() <= m as f64 + 1e-6);
    }

    #[test]
    fn star_contains_shifted_copies(lo in -5.0f64..5.0, width in 0.0f64..3.0, shift in 0.0f64..10.0) {
        let a = SpectralSet::interval(lo, lo + width).unwrap();
        let b = SpectralSet::points(&[0.0, shift]).unwrap();
        let s = star(&a, &b).unwrap();
        prop_assert!(s.contains(lo) && s.contains(lo + width));
        prop_assert!(s.contains(lo + shift) && s.contains(lo + width + shift));
        prop_assert!(s.min().unwrap() >= lo - 1e-12 && s.max().unwrap() <= lo + width + shift + 1e-12);
    }
}
