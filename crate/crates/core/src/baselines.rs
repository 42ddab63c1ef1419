//! Comparison estimators: projected gradient descent on the same penalized
//! objective, and the MM pipeline run under Gaussian or Student-t weights.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::error::{Result, VecmError};
use crate::mm::{converged, fit, floor_sigma, initial_params, rank_truncate, FitReport, Init, SolverOptions, Termination};
use crate::objective::{
    mahalanobis, objective_gradient, penalized_objective, LossKind, ObjectiveConfig,
};
use crate::vecm::{factorize_pi, residuals, MatrixForm, VecmParams};

/// Smallest backtracking step tried before giving up.
const MIN_STEP: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    Fixed(f64),
    /// Armijo backtracking: shrink by `shrink` until the sufficient-decrease
    /// condition with constant `c` holds.
    Backtracking { shrink: f64, c: f64 },
}

impl StepRule {
    fn validate(&self) -> Result<()> {
        match *self {
            StepRule::Fixed(eta) if !(eta > 0.0 && eta.is_finite()) => Err(VecmError::InvalidInput(
                format!("fixed step must be positive, got {eta}"),
            )),
            StepRule::Backtracking { shrink, c }
                if !(shrink > 0.0 && shrink < 1.0 && c > 0.0 && c < 1.0) =>
            {
                Err(VecmError::InvalidInput(format!(
                    "backtracking needs shrink, c in (0,1), got {shrink}, {c}"
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdOptions {
    pub step: StepRule,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub cfg: ObjectiveConfig,
    pub rank: usize,
    pub init: Init,
}

impl GdOptions {
    pub fn new(rank: usize, cfg: ObjectiveConfig) -> Self {
        Self {
            step: StepRule::Backtracking { shrink: 0.5, c: 1e-4 },
            max_iter: 5000,
            rel_tol: 1e-8,
            cfg,
            rank,
            init: Init::GaussianWarmStart,
        }
    }
}

/// Weighted residual scatter `(1/N) Σ_t w_t e_t e_tᵀ` at `(Π, Γ)` with weights from the current `Σ`.
fn scatter_update(params: &VecmParams, mf: &MatrixForm, loss: LossKind) -> Result<DMatrix<f64>> {
    let e = residuals(params, mf)?;
    let (_, delta) = mahalanobis(&params.sigma, &e)?;
    let k = mf.k();
    let mut ew = e.clone();
    for (t, mut col) in ew.column_iter_mut().enumerate() {
        col *= loss.weight(delta[t], k);
    }
    let mut sigma = ew * e.transpose() / mf.n() as f64;
    floor_sigma(&mut sigma);
    Ok(sigma)
}

/// Projected gradient descent on `(Π, Γ)` alternating with closed-form `Σ` updates.
pub fn fit_gd(mf: &MatrixForm, opts: &GdOptions) -> Result<FitReport> {
    let started = Instant::now();
    let k = mf.k();
    if opts.rank >= k {
        return Err(VecmError::InvalidInput(format!("rank {} must be below K = {k}", opts.rank)));
    }
    if opts.max_iter == 0 || !(opts.rel_tol > 0.0) {
        return Err(VecmError::InvalidInput("max_iter >= 1 and rel_tol > 0 required".into()));
    }
    opts.step.validate()?;
    opts.cfg.loss.validate()?;

    let cfg = &opts.cfg;
    let mut params = initial_params(mf, &opts.init, opts.rank)?;
    let mut trace = vec![penalized_objective(&params, mf, cfg)?];
    let mut terminated = Termination::MaxIter;
    let mut step = 1.0;

    for iter in 1..=opts.max_iter {
        let f_old = *trace.last().expect("nonempty trace");
        let (g_pi, g_gamma) = objective_gradient(&params, mf, cfg)?;

        let candidate = |t: f64| -> Result<VecmParams> {
            Ok(VecmParams {
                pi: rank_truncate(&(&params.pi - &g_pi * t), opts.rank)?,
                gamma: &params.gamma - &g_gamma * t,
                ..params.clone()
            })
        };

        let moved = match opts.step {
            StepRule::Fixed(eta) => candidate(eta)?,
            StepRule::Backtracking { shrink, c } => {
                let mut t = (step / shrink).min(1.0);
                loop {
                    let cand = candidate(t)?;
                    let f = penalized_objective(&cand, mf, cfg)?;
                    let moved2 = (&cand.pi - &params.pi).norm_squared()
                        + (&cand.gamma - &params.gamma).norm_squared();
                    if f.is_finite() && f <= f_old - c / t * moved2 {
                        step = t;
                        break cand;
                    }
                    t *= shrink;
                    if t < MIN_STEP {
                        return Err(VecmError::StepUnderflow {
                            iter,
                            objective: f_old,
                        });
                    }
                }
            }
        };

        let sigma = scatter_update(&moved, mf, cfg.loss)?;
        params = VecmParams { sigma, ..moved };
        let f_new = penalized_objective(&params, mf, cfg)?;
        trace.push(f_new);
        if converged(f_old, f_new, opts.rel_tol) {
            terminated = Termination::Converged;
            break;
        }
    }

    let factors = factorize_pi(&params.pi, opts.rank)?;
    Ok(FitReport {
        iterations: trace.len() - 1,
        params,
        factors,
        obj_trace: trace,
        terminated,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

/// MM fit under a Gaussian or Student-t weight family; all other machinery is shared.
pub fn fit_with_loss(mf: &MatrixForm, opts: &SolverOptions) -> Result<FitReport> {
    match opts.cfg.loss {
        LossKind::Gaussian | LossKind::StudentT(_) => fit(mf, opts),
        LossKind::Cauchy => Err(VecmError::InvalidInput(
            "fit_with_loss expects a Gaussian or Student-t loss".into(),
        )),
    }
}
