mod common;

use common::*;
use proptest::prelude::*;
use unmix_core::simgen::synthetic_library;
use unmix_core::{estimate_order, estimate_subspace, generate, project_complement, PixelMatrix, SceneSpec};

#[test]
fn energy_order_matches_singular_value_cumsum() {
    let lib = synthetic_library::<f64>(100, 120, 7).unwrap();
    for seed in 0..5 {
        let scene = generate(&lib, &SceneSpec { materials: 6, pixels: 500, dmer_db: 20.0, snr_db: 35.0, seed }).unwrap();
        let sv = scene.y.values().clone().svd(false, false).singular_values;
        let energies: Vec<f64> = sv.iter().map(|s| s * s).collect();
        let total: f64 = energies.iter().sum();
        let mut acc = 0.0;
        let mut want = energies.len();
        for (r, e) in energies.iter().enumerate() {
            acc += e;
            if acc >= 0.9999 * total {
                want = r + 1;
                break;
            }
        }
        assert_eq!(estimate_order(&scene.y, 0.9999).unwrap(), want, "seed {seed}");
    }
}

#[test]
fn noiseless_mixture_span_is_recovered() {
    let mut rng = rng(3);
    let a = gaussian_matrix(&mut rng, 30, 5);
    let s = gaussian_matrix(&mut rng, 5, 80);
    let u = estimate_subspace(&PixelMatrix::new(&a * s).unwrap(), 5).unwrap();
    for col in a.column_iter() {
        let r = project_complement(&u, &col.into_owned()).unwrap();
        assert!(r.norm() <= 1e-8 * col.norm());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn complement_is_idempotent_and_pythagorean(seed in 0u64..100_000, dim in 1usize..6) {
        let mut rng = rng(seed);
        let u = random_subspace(&mut rng, 10, dim);
        let x = gaussian_vector(&mut rng, 10);
        let once = project_complement(&u, &x).unwrap();
        let twice = project_complement(&u, &once).unwrap();
        prop_assert!((&twice - &once).norm() <= 1e-10);
        let par = u.project(&x).unwrap();
        let lhs = x.norm_squared();
        let rhs = par.norm_squared() + once.norm_squared();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs);
        let dense = dense_complement(&u) * &x;
        prop_assert!((&dense - &once).norm() <= 1e-12 * x.norm().max(1.0));
        for col in u.basis().column_iter() {
            prop_assert!(col.dot(&once).abs() <= 1e-10);
        }
    }
}
