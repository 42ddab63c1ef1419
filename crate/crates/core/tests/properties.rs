use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robust_vecm::experiments::nmse;
use robust_vecm::mm::{rank_truncate, MmSolver};
use robust_vecm::objective::{group_regularizer, penalized_objective, rat_value, robust_weights};
use robust_vecm::simulate::{is_stable, simulate};
use robust_vecm::{
    assemble_matrix_form, DgpSpec, Innovation, LossKind, MatrixForm, ObjectiveConfig, RatParams,
    SolverOptions, VecmParams,
};

fn random_matrix(seed: u64, r: usize, c: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-2.0..2.0))
}

fn sorted_sv(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn innovation() -> impl Strategy<Value = Innovation> {
    prop_oneof![
        Just(Innovation::Gaussian),
        Just(Innovation::Cauchy),
        (1.5f64..30.0).prop_map(Innovation::StudentT),
    ]
}

fn loss() -> impl Strategy<Value = LossKind> {
    prop_oneof![
        Just(LossKind::Cauchy),
        Just(LossKind::Gaussian),
        (0.5f64..50.0).prop_map(LossKind::StudentT),
    ]
}

fn small_dgp() -> impl Strategy<Value = DgpSpec> {
    (2usize..5, 1usize..3, any::<u64>(), innovation()).prop_flat_map(|(k, p, seed, innovation)| {
        (1..k).prop_flat_map(move |r| {
            (r..=k, 40usize..120).prop_map(move |(active, n)| DgpSpec {
                k,
                p,
                r,
                n,
                active,
                innovation,
                seed,
            })
        })
    })
}

fn random_instance(seed: u64, k: usize, n: usize) -> (MatrixForm, VecmParams) {
    let mut dx = random_matrix(seed ^ 3, 1, n);
    dx.fill(1.0);
    let mf = MatrixForm::from_blocks(random_matrix(seed, k, n), random_matrix(seed ^ 1, k, n), dx, 1).unwrap();
    let s = random_matrix(seed ^ 2, k, k);
    let params = VecmParams {
        k,
        p: 1,
        r: k,
        pi: random_matrix(seed ^ 4, k, k),
        gamma: random_matrix(seed ^ 5, k, 1),
        sigma: &s * s.transpose() + DMatrix::identity(k, k) * 0.1,
    };
    (mf, params)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn truncation_is_best_rank_r(seed in any::<u64>(), k in 1usize..7, r in 0usize..7) {
        let p = random_matrix(seed, k, k);
        let t = rank_truncate(&p, r).unwrap();
        let s = sorted_sv(&p);
        let st = sorted_sv(&t);
        let tail: f64 = s.iter().skip(r).map(|v| v * v).sum();
        prop_assert!(((&p - &t).norm_squared() - tail).abs() <= 1e-10 * p.norm_squared().max(1.0));
        for v in st.iter().skip(r) {
            prop_assert!(*v <= 1e-10 * s[0].max(1.0));
        }
        let again = rank_truncate(&t, r).unwrap();
        prop_assert!((&again - &t).norm() <= 1e-10 * t.norm().max(1.0));
    }

    #[test]
    fn rat_is_bounded_even_and_nondecreasing(scale in 0.01f64..5.0, eps in 1e-5f64..0.5, a in 0.0f64..100.0, b in 0.0f64..100.0) {
        let rp = RatParams::new(scale, eps).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert_eq!(rat_value(0.0, &rp), 0.0);
        prop_assert_eq!(rat_value(-a, &rp), rat_value(a, &rp));
        prop_assert!(rat_value(lo, &rp) <= rat_value(hi, &rp));
        prop_assert!(rat_value(hi, &rp) < rp.supremum());
        prop_assert!(rat_value(lo, &rp) >= 0.0);
    }

    #[test]
    fn regularizer_depends_only_on_column_norms(seed in any::<u64>(), k in 1usize..6) {
        let pi = random_matrix(seed, k, k);
        let q = random_matrix(seed ^ 9, k, k).qr().q();
        let rp = RatParams::default_for(k);
        let rotated = &q * &pi;
        prop_assert!((group_regularizer(&pi, &rp) - group_regularizer(&rotated, &rp)).abs() <= 1e-12 * k as f64);
    }

    #[test]
    fn weights_are_positive_and_bounded(seed in any::<u64>(), k in 1usize..5, n in 6usize..40, kind in loss()) {
        let (mf, params) = random_instance(seed, k, n);
        let w = robust_weights(&params, &mf, kind).unwrap();
        let kf = k as f64;
        let top = match kind {
            LossKind::Cauchy => 1.0 + kf,
            LossKind::StudentT(df) => (df + kf) / df,
            LossKind::Gaussian => 1.0,
        };
        for v in w.iter() {
            prop_assert!(*v > 0.0 && *v <= top * (1.0 + 1e-12));
        }
    }

    #[test]
    fn mm_step_never_increases_objective(seed in any::<u64>(), k in 2usize..5, n in 8usize..40, kind in loss(), xi in 0.0f64..10.0) {
        let (mf, _) = random_instance(seed, k, n);
        let cfg = ObjectiveConfig::new(RatParams::default_for(k), xi, kind).unwrap();
        let mut solver = MmSolver::new(&mf, SolverOptions::new(k - 1, cfg)).unwrap();
        for _ in 0..5 {
            let before = *solver.state().obj_trace.last().unwrap();
            let after = solver.step().unwrap();
            prop_assert!(after <= before + 1e-9 * before.abs().max(1.0));
            let again = penalized_objective(&solver.state().params, &mf, &cfg).unwrap();
            prop_assert_eq!(after, again);
        }
    }

    #[test]
    fn nmse_is_scale_invariant(seed in any::<u64>(), k in 1usize..6, c in 1e-3f64..1e3) {
        let a = random_matrix(seed, k, k);
        let b = random_matrix(seed ^ 7, k, k);
        prop_assert_eq!(nmse(&b, &b).unwrap(), 0.0);
        let (x, y) = (nmse(&a, &b).unwrap(), nmse(&(&a * c), &(&b * c)).unwrap());
        prop_assert!((x - y).abs() <= 1e-12 * x.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulated_truth_is_stable_sparse_and_reproducible(spec in small_dgp()) {
        let a = simulate(&spec).unwrap();
        let b = simulate(&spec).unwrap();
        prop_assert_eq!(&a, &b);
        let t = &a.params;
        prop_assert!(is_stable(t));
        prop_assert_eq!(a.support.len(), spec.active);
        let s = sorted_sv(&t.pi);
        prop_assert!(s[spec.r - 1] > 1e-8);
        for v in s.iter().skip(spec.r) {
            prop_assert!(*v <= 1e-10);
        }
        for j in (0..spec.k).filter(|j| !a.support.contains(j)) {
            prop_assert_eq!(t.pi.column(j).norm(), 0.0);
        }
        prop_assert!(t.sigma.clone().cholesky().is_some());
        let path = a.path.as_ref().unwrap();
        prop_assert_eq!(path.n(), spec.n);
        let mf = assemble_matrix_form(path, spec.p).unwrap();
        prop_assert_eq!(mf.n(), spec.n);
    }

    #[test]
    fn truth_does_not_depend_on_innovation_family(spec in small_dgp()) {
        let other = DgpSpec { innovation: Innovation::Gaussian, ..spec };
        prop_assert_eq!(simulate(&spec).unwrap().params, simulate(&other).unwrap().params);
    }
}
