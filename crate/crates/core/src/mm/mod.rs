//! Majorization-minimization solver for the robust sparse low-rank VECM.
//!
//! Each iteration reweights the data from the current residuals, profiles `Γ`
//! and `Σ` out in closed form, bounds the remaining quadratic in `Π` by an
//! isotropic one and solves that by truncated SVD. The objective is
//! nonincreasing along the iterates; [`MmSolver::step`] fails rather than
//! report an ascent.

pub mod blocks;
pub mod majorizers;
pub mod surrogate;

use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, VecmError};
use crate::linalg::pseudo_inverse;
use crate::objective::{penalized_objective, robust_weights, ObjectiveConfig};
use crate::vecm::{factorize_pi, CointFactors, MatrixForm, VecmParams};

pub use blocks::{
    closed_form_gamma_sigma, floor_sigma, projection_matrix, weighted_blocks, MajorizerData,
    Projector, WeightedBlocks, SIGMA_FLOOR,
};
pub use majorizers::{log1p_majorizer, logdet_majorizer, quadratic_majorizer, rat_majorizer};
pub use surrogate::{proximal_target, psi_bound, q_coefficients, rank_truncate, SurrogateQuadratic};

/// Relative slack tolerated on a single objective step before it counts as an ascent.
pub const DESCENT_SLACK: f64 = 1e-9;

/// Starting point of the iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Unweighted least squares for `(Π, Γ)`, `Π` truncated to rank `r`, then the
    /// residual scatter for `Σ`.
    GaussianWarmStart,
    Provided(VecmParams),
    /// `Π = 0` with `Γ`, `Σ` from the unweighted closed form.
    ZeroPi,
    /// Small random rank-`r` `Π` drawn from the seed, then as `ZeroPi`.
    Random(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    pub rel_tol: f64,
    pub rank: usize,
    pub cfg: ObjectiveConfig,
    pub init: Init,
}

impl SolverOptions {
    pub fn new(rank: usize, cfg: ObjectiveConfig) -> Self {
        Self {
            max_iter: 2000,
            rel_tol: 1e-8,
            rank,
            cfg,
            init: Init::GaussianWarmStart,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.max_iter == 0 {
            return Err(VecmError::InvalidInput("max_iter must be >= 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(VecmError::InvalidInput("rel_tol must be > 0".into()));
        }
        if self.rank >= k {
            return Err(VecmError::InvalidInput(format!(
                "rank {} must be below K = {k}",
                self.rank
            )));
        }
        self.cfg.loss.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIter,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Converged => "converged",
            Termination::MaxIter => "max_iter",
        })
    }
}

/// `|F_prev − F_new| ≤ rel_tol · max(1, |F_prev|)`.
pub fn converged(prev: f64, next: f64, rel_tol: f64) -> bool {
    (prev - next).abs() <= rel_tol * prev.abs().max(1.0)
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub params: VecmParams,
    /// Weights used for the most recent update (all ones before the first step).
    pub weights: DVector<f64>,
    pub qvec: DVector<f64>,
    pub psi: f64,
    pub obj_trace: Vec<f64>,
    pub iter: usize,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub params: VecmParams,
    pub factors: CointFactors,
    pub obj_trace: Vec<f64>,
    pub iterations: usize,
    pub terminated: Termination,
    pub wall_time: f64,
}

impl FitReport {
    pub fn final_objective(&self) -> f64 {
        *self.obj_trace.last().expect("trace holds the initial value")
    }
}

/// Unweighted data used by the initializers.
fn unit_majorizer(mf: &MatrixForm) -> Result<MajorizerData> {
    MajorizerData::new(mf, &DVector::from_element(mf.n(), 1.0))
}

/// Build `θ⁽⁰⁾` for the chosen initializer.
pub fn initial_params(mf: &MatrixForm, init: &Init, rank: usize) -> Result<VecmParams> {
    let k = mf.k();
    let p = mf.p;
    let from_pi = |data: &MajorizerData, pi: DMatrix<f64>| {
        let (gamma, sigma) = data.gamma_sigma(&pi);
        VecmParams {
            k,
            p,
            r: rank,
            pi,
            gamma,
            sigma,
        }
    };
    match init {
        Init::Provided(params) => {
            if params.k != k || params.p != p {
                return Err(VecmError::InvalidInput(format!(
                    "initial params (K={}, p={}) do not match data (K={k}, p={p})",
                    params.k, params.p
                )));
            }
            let mut params = params.clone();
            params.r = rank;
            params.validate()?;
            Ok(params)
        }
        Init::ZeroPi => Ok(from_pi(&unit_majorizer(mf)?, DMatrix::zeros(k, k))),
        Init::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut draw = |r: usize, c: usize| -> DMatrix<f64> {
                DMatrix::from_fn(r, c, |_, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    0.1 * z
                })
            };
            let pi = draw(k, rank) * draw(rank, k);
            Ok(from_pi(&unit_majorizer(mf)?, pi))
        }
        Init::GaussianWarmStart => {
            let data = unit_majorizer(mf)?;
            // Frisch–Waugh: Π_LS = (ΔY M Y₋₁ᵀ)(Y₋₁ M Y₋₁ᵀ)⁺
            let pi_ls = &data.c * pseudo_inverse(&data.a, 1e-12)?;
            let pi = rank_truncate(&pi_ls, rank)?;
            Ok(from_pi(&data, pi))
        }
    }
}

/// Stepwise driver; [`fit`] runs it to termination.
pub struct MmSolver<'a> {
    mf: &'a MatrixForm,
    opts: SolverOptions,
    state: SolverState,
    started: Instant,
}

impl<'a> MmSolver<'a> {
    pub fn new(mf: &'a MatrixForm, opts: SolverOptions) -> Result<Self> {
        let started = Instant::now();
        opts.validate(mf.k())?;
        let params = initial_params(mf, &opts.init, opts.rank)?;
        let f0 = penalized_objective(&params, mf, &opts.cfg)?;
        let k = mf.k();
        let state = SolverState {
            params,
            weights: DVector::from_element(mf.n(), 1.0),
            qvec: DVector::zeros(k),
            psi: 0.0,
            obj_trace: vec![f0],
            iter: 0,
        };
        Ok(Self {
            mf,
            opts,
            state,
            started,
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    /// One MM update; returns the new objective value.
    pub fn step(&mut self) -> Result<f64> {
        let mf = self.mf;
        let cfg = &self.opts.cfg;
        let cur = &self.state.params;

        let w = robust_weights(cur, mf, cfg.loss)?;
        let data = MajorizerData::new(mf, &w)?;
        let q = q_coefficients(&cur.pi, &cfg.rat);
        let surrogate = SurrogateQuadratic::new(&cur.sigma, &data.a, &data.c, cfg.xi, q)?;
        let psi = surrogate.psi();

        let pi = if self.opts.rank == 0 {
            DMatrix::zeros(mf.k(), mf.k())
        } else {
            let target = proximal_target(&cur.pi, &surrogate, psi);
            rank_truncate(&target, self.opts.rank)?
        };
        let (gamma, sigma) = data.gamma_sigma(&pi);
        let next = VecmParams {
            k: cur.k,
            p: cur.p,
            r: cur.r,
            pi,
            gamma,
            sigma,
        };
        let f_new = penalized_objective(&next, mf, cfg)?;
        let f_old = *self.state.obj_trace.last().expect("nonempty trace");
        let iter = self.state.iter + 1;
        if !f_new.is_finite() || f_new > f_old + DESCENT_SLACK * f_old.abs() {
            return Err(VecmError::NonDescent {
                iter,
                previous: f_old,
                current: f_new,
            });
        }

        self.state.params = next;
        self.state.weights = w;
        self.state.qvec = surrogate.q;
        self.state.psi = psi;
        self.state.obj_trace.push(f_new);
        self.state.iter = iter;
        Ok(f_new)
    }

    pub fn run(mut self) -> Result<FitReport> {
        let mut terminated = Termination::MaxIter;
        for _ in 0..self.opts.max_iter {
            let prev = *self.state.obj_trace.last().expect("nonempty trace");
            let next = self.step()?;
            if converged(prev, next, self.opts.rel_tol) {
                terminated = Termination::Converged;
                break;
            }
        }
        let factors = factorize_pi(&self.state.params.pi, self.opts.rank)?;
        Ok(FitReport {
            factors,
            iterations: self.state.iter,
            terminated,
            wall_time: self.started.elapsed().as_secs_f64(),
            params: self.state.params,
            obj_trace: self.state.obj_trace,
        })
    }
}

/// Run the MM iteration to convergence or `max_iter`.
pub fn fit(mf: &MatrixForm, opts: &SolverOptions) -> Result<FitReport> {
    MmSolver::new(mf, opts.clone())?.run()
}
