mod common;

use std::sync::Arc;

use folin_core::affine::{lie_f, AffineSystem, RelativeDegreeProfile};
use folin_core::aircraft::{diffeo_forward, diffeo_inverse, OutputSet};
use folin_core::iol::{lambda_snapshot, LinearizingController};
use folin_core::linalg::pseudo_inverse_full;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix_strategy() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..=6, 1usize..=6, 0usize..=6).prop_flat_map(|(r, c, k)| {
        let k = k.min(r).min(c);
        (
            prop::collection::vec(-3.0f64..3.0, r * k),
            prop::collection::vec(-3.0f64..3.0, k * c),
        )
            .prop_map(move |(a, b)| DMatrix::from_vec(r, k, a) * DMatrix::from_vec(k, c, b))
    })
}

fn frob_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / (1.0 + b.norm())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn penrose_conditions(a in matrix_strategy()) {
        let p = pseudo_inverse_full(&a, 1e-10);
        let x = &p.matrix;
        prop_assert!(frob_rel(&(&a * x * &a), &a) < 1e-8);
        prop_assert!(frob_rel(&(x * &a * x), x) < 1e-8);
        let ax = &a * x;
        let xa = x * &a;
        prop_assert!(frob_rel(&ax.transpose(), &ax) < 1e-8);
        prop_assert!(frob_rel(&xa.transpose(), &xa) < 1e-8);
    }

    #[test]
    fn projection_is_symmetric_idempotent_with_rank_trace(a in matrix_strategy()) {
        let p = pseudo_inverse_full(&a, 1e-10);
        let lam = &a * &p.matrix;
        prop_assert!((&lam * &lam - &lam).norm() <= 1e-8 * (1.0 + lam.norm()));
        prop_assert!((&lam - lam.transpose()).norm() <= 1e-10 * (1.0 + lam.norm()));
        prop_assert!((lam.trace() - p.rank as f64).abs() < 1e-6);
    }

    #[test]
    fn tall_full_rank_projection_has_small_eigenvalue_count(
        ly in 2usize..=6, data in prop::collection::vec(-2.0f64..2.0, 36), lu_frac in 0.0f64..1.0
    ) {
        let lu = 1 + ((ly - 1) as f64 * lu_frac) as usize;
        prop_assume!(lu < ly);
        let g = DMatrix::from_iterator(ly, lu, data.into_iter().take(ly * lu));
        let sigma = g.singular_values();
        prop_assume!(sigma.min() > 1e-3 * sigma.max());
        let sys = AffineSystem::new(ly, lu, ly, |x| DVector::zeros(x.len()), move |_| g.clone(), |x| x.clone());
        let mut profile = RelativeDegreeProfile::new(vec![1; ly]);
        profile.verified_at = vec![DVector::zeros(ly)];
        let snap = lambda_snapshot(&sys, &profile, &DVector::zeros(ly), 1e-12).unwrap();
        prop_assert_eq!(snap.small_eigenvalue_count(), ly - lu);
        prop_assert_eq!(snap.rank, lu);
    }

    #[test]
    fn lie_derivative_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, x0 in -1.0f64..1.0, x1 in -1.0f64..1.0) {
        let sys = AffineSystem::new(
            2, 1, 1,
            |x| DVector::from_vec(vec![x[1], -x[0].sin() - 0.2 * x[1]]),
            |_| DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
            |x| DVector::from_vec(vec![x[0]]),
        );
        let z1 = |x: &DVector<f64>| x[0] * x[1];
        let z2 = |x: &DVector<f64>| x[0].cos() + x[1] * x[1];
        let combo = move |x: &DVector<f64>| a * z1(x) + b * z2(x);
        let x = DVector::from_vec(vec![x0, x1]);
        let lhs = lie_f(&sys, &combo, &x).unwrap();
        let rhs = a * lie_f(&sys, &z1, &x).unwrap() + b * lie_f(&sys, &z2, &x).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-7 * (1.0 + rhs.abs()));
    }

    #[test]
    fn change_of_variables_round_trip(seed in any::<u64>()) {
        let p = common::params();
        let r = common::trim_at(250.0).reference();
        let x = common::random_states(seed, 1, OutputSet::Two, &r).remove(0);
        let back = diffeo_inverse(&p, &r, &diffeo_forward(&p, &r, &x)).unwrap();
        prop_assert!((back - x).amax() < 1e-9);
    }
}

#[test]
fn controller_is_a_pure_function_of_state() {
    let p = common::params();
    let r = common::trim_at(250.0).reference();
    let ctrl = folin_core::scenario::build_controller(&p, &r, OutputSet::Three, Default::default(), 1e-12).unwrap();
    let states = common::random_states(1, 30, OutputSet::Three, &r);
    let v = DVector::from_vec(vec![0.1, -0.2, 0.3]);
    let forward: Vec<_> = states.iter().map(|x| ctrl.control(x, &v).unwrap()).collect();
    let backward: Vec<_> = states.iter().rev().map(|x| ctrl.control(x, &v).unwrap()).collect();
    for (a, b) in forward.iter().zip(backward.iter().rev()) {
        assert_eq!(a, b);
    }
    let shared = Arc::new(ctrl);
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let c: Arc<LinearizingController> = shared.clone();
            let s = states.clone();
            let v = v.clone();
            std::thread::spawn(move || s.iter().map(|x| c.control(x, &v).unwrap()).collect::<Vec<_>>())
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), forward);
    }
}
