//! The MM surrogate, checked globally on tiny instances: it upper-bounds the
//! objective everywhere, touches it at the expansion point, and its profiled
//! Π-quadratic plus the isotropic bound lead to the step the solver takes.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robust_vecm::mm::{
    proximal_target, q_coefficients, rank_truncate, rat_majorizer, MajorizerData, MmSolver,
    SurrogateQuadratic,
};
use robust_vecm::objective::{mahalanobis, penalized_objective, robust_weights};
use robust_vecm::vecm::residuals;
use robust_vecm::{Init, LossKind, MatrixForm, ObjectiveConfig, RatParams, SolverOptions, VecmParams};

fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

struct Instance {
    mf: MatrixForm,
    at: VecmParams,
    cfg: ObjectiveConfig,
}

fn instance(rng: &mut ChaCha8Rng, loss: LossKind) -> Instance {
    let k = rng.random_range(2..=3);
    let n = rng.random_range(k + 3..=8);
    let r = rng.random_range(1..k);
    let mut dx = uniform(rng, 1, n);
    dx.fill(1.0);
    let mf = MatrixForm::from_blocks(uniform(rng, k, n) * 2.0, uniform(rng, k, n) * 2.0, dx, 1).unwrap();
    let s = uniform(rng, k, k);
    let at = VecmParams {
        k,
        p: 1,
        r,
        pi: uniform(rng, k, r) * uniform(rng, r, k),
        gamma: uniform(rng, k, 1),
        sigma: &s * s.transpose() + DMatrix::identity(k, k) * 0.3,
    };
    let cfg = ObjectiveConfig::new(RatParams::new(0.4, 0.05).unwrap(), rng.random_range(0.0..2.0), loss).unwrap();
    Instance { mf, at, cfg }
}

/// Full surrogate `U(Π, Γ)` at fixed `Σ_k`, built from the expansion point.
fn full_surrogate(inst: &Instance, pi: &DMatrix<f64>, gamma: &DMatrix<f64>) -> f64 {
    let Instance { mf, at, cfg } = inst;
    let k = at.k;
    let (logdet, d0) = mahalanobis(&at.sigma, &residuals(at, mf).unwrap()).unwrap();
    let trial = VecmParams {
        pi: pi.clone(),
        gamma: gamma.clone(),
        ..at.clone()
    };
    let (_, d) = mahalanobis(&at.sigma, &residuals(&trial, mf).unwrap()).unwrap();
    let data: f64 = d0
        .iter()
        .zip(d.iter())
        .map(|(&a, &b)| cfg.loss.sample_loss(a, k) + 0.5 * cfg.loss.weight(a, k) * (b - a))
        .sum();
    let pen: f64 = (0..k)
        .map(|j| {
            let (q, c) = rat_majorizer(at.pi.column(j).norm(), &cfg.rat);
            0.5 * q * pi.column(j).norm_squared() + c
        })
        .sum();
    0.5 * mf.n() as f64 * logdet + data + cfg.xi * pen
}

fn parts(inst: &Instance) -> (MajorizerData, SurrogateQuadratic) {
    let w = robust_weights(&inst.at, &inst.mf, inst.cfg.loss).unwrap();
    let data = MajorizerData::new(&inst.mf, &w).unwrap();
    let q = q_coefficients(&inst.at.pi, &inst.cfg.rat);
    let sur = SurrogateQuadratic::new(&inst.at.sigma, &data.a, &data.c, inst.cfg.xi, q).unwrap();
    (data, sur)
}

const LOSSES: [LossKind; 3] = [LossKind::Cauchy, LossKind::StudentT(2.0), LossKind::Gaussian];

#[test]
fn surrogate_bounds_objective_and_touches_at_expansion_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..60 {
        let inst = instance(&mut rng, LOSSES[i % 3]);
        let f0 = penalized_objective(&inst.at, &inst.mf, &inst.cfg).unwrap();
        let u0 = full_surrogate(&inst, &inst.at.pi, &inst.at.gamma);
        assert!((f0 - u0).abs() <= 1e-10 * f0.abs().max(1.0), "{f0} vs {u0}");
        for _ in 0..20 {
            let k = inst.at.k;
            let pi = uniform(&mut rng, k, k) * 3.0;
            let gamma = uniform(&mut rng, k, 1) * 3.0;
            let f = penalized_objective(&VecmParams { pi: pi.clone(), gamma: gamma.clone(), ..inst.at.clone() }, &inst.mf, &inst.cfg).unwrap();
            let u = full_surrogate(&inst, &pi, &gamma);
            assert!(f <= u + 1e-10 * u.abs().max(1.0), "surrogate below objective: {f} > {u}");
        }
    }
}

#[test]
fn profiled_quadratic_matches_full_surrogate_up_to_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..60 {
        let inst = instance(&mut rng, LOSSES[i % 3]);
        let (data, sur) = parts(&inst);
        let k = inst.at.k;
        let offset = |pi: &DMatrix<f64>| full_surrogate(&inst, pi, &data.gamma(pi)) - sur.value(pi);
        let base = offset(&inst.at.pi);
        for _ in 0..20 {
            let pi = uniform(&mut rng, k, k) * 3.0;
            let profiled = full_surrogate(&inst, &pi, &data.gamma(&pi));
            assert!((offset(&pi) - base).abs() <= 1e-9 * base.abs().max(1.0));
            // the closed-form Γ minimizes the surrogate
            let other = full_surrogate(&inst, &pi, &(data.gamma(&pi) + uniform(&mut rng, k, 1) * 0.1));
            assert!(profiled <= other + 1e-10 * other.abs().max(1.0));
        }
    }
}

#[test]
fn isotropic_bound_majorizes_profiled_quadratic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..60 {
        let inst = instance(&mut rng, LOSSES[i % 3]);
        let (_, sur) = parts(&inst);
        let (pk, psi) = (&inst.at.pi, sur.psi());
        let (v0, g0) = (sur.value(pk), sur.gradient(pk));
        for _ in 0..20 {
            let pi = uniform(&mut rng, inst.at.k, inst.at.k) * 3.0;
            let d = &pi - pk;
            let bound = v0 + g0.dot(&d) + 0.5 * psi * d.norm_squared();
            let v = sur.value(&pi);
            assert!(v <= bound + 1e-10 * bound.abs().max(1.0), "{v} > {bound}");
        }
    }
}

#[test]
fn solver_step_is_truncated_gradient_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..30 {
        let inst = instance(&mut rng, LOSSES[i % 3]);
        let (data, sur) = parts(&inst);
        let expected = rank_truncate(&proximal_target(&inst.at.pi, &sur, sur.psi()), inst.at.r).unwrap();
        let mut opts = SolverOptions::new(inst.at.r, inst.cfg);
        opts.init = Init::Provided(inst.at.clone());
        let mut solver = MmSolver::new(&inst.mf, opts).unwrap();
        solver.step().unwrap();
        let got = &solver.state().params;
        assert!((&got.pi - &expected).norm() <= 1e-10 * expected.norm().max(1.0));
        let (gamma, _) = data.gamma_sigma(&expected);
        assert!((&got.gamma - gamma).norm() <= 1e-10 * got.gamma.norm().max(1.0));
    }
}
