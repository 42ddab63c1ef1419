//! Robust loss, smoothed Geman group penalty and the penalized objective.
//!
//! The loss family is elliptical: every variant depends on the residuals only
//! through the Mahalanobis terms `δ_t = r_tᵀ Σ⁻¹ r_t` and `log det Σ`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, VecmError};
use crate::linalg::cholesky;
use crate::vecm::{residuals, MatrixForm, VecmParams};

/// Parameters of the smoothed rational (Geman) function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatParams {
    /// Scale of the rational function, `|x| / (scale + |x|)`.
    pub scale: f64,
    /// Half-width of the quadratic cap around zero.
    pub eps: f64,
}

impl RatParams {
    pub fn new(scale: f64, eps: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) || !(eps > 0.0 && eps.is_finite()) {
            return Err(VecmError::InvalidInput(format!(
                "rat parameters must be positive, got scale={scale}, eps={eps}"
            )));
        }
        Ok(Self { scale, eps })
    }

    /// `scale = 0.1·√K`, `eps = 1e-3`.
    pub fn default_for(k: usize) -> Self {
        Self {
            scale: 0.1 * (k as f64).sqrt(),
            eps: 1e-3,
        }
    }

    /// Value the function approaches as `|x| → ∞`.
    pub fn supremum(&self) -> f64 {
        1.0 - self.offset()
    }

    fn offset(&self) -> f64 {
        let (p, e) = (self.scale, self.eps);
        (2.0 * e * e + p * e) / (2.0 * (p + e) * (p + e))
    }
}

/// Smoothed Geman function: quadratic for `|x| ≤ ε`, shifted `|x|/(p+|x|)` beyond.
pub fn rat_value(x: f64, rp: &RatParams) -> f64 {
    let (p, e) = (rp.scale, rp.eps);
    let a = x.abs();
    if a <= e {
        p * a * a / (2.0 * e * (p + e) * (p + e))
    } else {
        a / (p + a) - rp.offset()
    }
}

/// Derivative of [`rat_value`].
pub fn rat_derivative(x: f64, rp: &RatParams) -> f64 {
    let (p, e) = (rp.scale, rp.eps);
    let a = x.abs();
    let slope = if a <= e {
        p * a / (e * (p + e) * (p + e))
    } else {
        p / ((p + a) * (p + a))
    };
    slope * x.signum()
}

/// `R(Π) = Σ_i rat(‖π_i‖₂)` over the columns of `Π`.
pub fn group_regularizer(pi: &DMatrix<f64>, rp: &RatParams) -> f64 {
    pi.column_iter().map(|c| rat_value(c.norm(), rp)).sum()
}

/// Innovation law assumed by the loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Cauchy,
    StudentT(f64),
    Gaussian,
}

impl LossKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LossKind::StudentT(df) if !(df > 0.0 && df.is_finite()) => Err(
                VecmError::InvalidInput(format!("Student-t df must be positive, got {df}")),
            ),
            _ => Ok(()),
        }
    }

    /// Per-sample loss term as a function of `δ_t` (constants dropped).
    pub fn sample_loss(&self, delta: f64, k: usize) -> f64 {
        let k = k as f64;
        match *self {
            LossKind::Cauchy => 0.5 * (1.0 + k) * delta.ln_1p(),
            LossKind::StudentT(df) => 0.5 * (df + k) * (delta / df).ln_1p(),
            LossKind::Gaussian => 0.5 * delta,
        }
    }

    /// IRLS weight: twice the derivative of [`sample_loss`](Self::sample_loss) in `δ`.
    pub fn weight(&self, delta: f64, k: usize) -> f64 {
        let k = k as f64;
        match *self {
            LossKind::Cauchy => (1.0 + k) / (1.0 + delta),
            LossKind::StudentT(df) => (df + k) / (df + delta),
            LossKind::Gaussian => 1.0,
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossKind::Cauchy => write!(f, "cauchy"),
            LossKind::StudentT(df) => write!(f, "student:{df}"),
            LossKind::Gaussian => write!(f, "gaussian"),
        }
    }
}

impl FromStr for LossKind {
    type Err = VecmError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let kind = match s.as_str() {
            "cauchy" => LossKind::Cauchy,
            "gaussian" | "normal" => LossKind::Gaussian,
            _ => {
                let df = s
                    .strip_prefix("student:")
                    .or_else(|| s.strip_prefix("t:"))
                    .ok_or_else(|| VecmError::Parse(format!("unknown loss kind '{s}'")))?;
                let df: f64 = df
                    .parse()
                    .map_err(|_| VecmError::Parse(format!("bad degrees of freedom '{df}'")))?;
                LossKind::StudentT(df)
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub rat: RatParams,
    pub xi: f64,
    pub loss: LossKind,
}

impl ObjectiveConfig {
    pub fn new(rat: RatParams, xi: f64, loss: LossKind) -> Result<Self> {
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(VecmError::InvalidInput(format!("xi must be >= 0, got {xi}")));
        }
        loss.validate()?;
        Ok(Self { rat, xi, loss })
    }
}

/// `log det Σ` and the Mahalanobis terms `δ_t = e_tᵀ Σ⁻¹ e_t` for the columns of `e`.
pub fn mahalanobis(sigma: &DMatrix<f64>, e: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let chol = cholesky(sigma, "Sigma")?;
    let l = chol.l();
    let logdet = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let z = l
        .solve_lower_triangular(e)
        .ok_or(VecmError::NotPositiveDefinite("Sigma"))?;
    let delta = DVector::from_iterator(e.ncols(), z.column_iter().map(|c| c.norm_squared()));
    Ok((logdet, delta))
}

/// Negative log-likelihood of `kind` for residual matrix `e`, constants dropped.
pub fn loss_from_residuals(sigma: &DMatrix<f64>, e: &DMatrix<f64>, kind: LossKind) -> Result<f64> {
    let k = e.nrows();
    let n = e.ncols() as f64;
    let (logdet, delta) = mahalanobis(sigma, e)?;
    let sum: f64 = delta.iter().map(|&d| kind.sample_loss(d, k)).sum();
    Ok(0.5 * n * logdet + sum)
}

/// Cauchy negative log-likelihood.
pub fn cauchy_loss(params: &VecmParams, mf: &MatrixForm) -> Result<f64> {
    loss(params, mf, LossKind::Cauchy)
}

pub fn loss(params: &VecmParams, mf: &MatrixForm, kind: LossKind) -> Result<f64> {
    let e = residuals(params, mf)?;
    loss_from_residuals(&params.sigma, &e, kind)
}

/// `F(θ) = L(θ) + ξ R(Π)` with `L` chosen by `cfg.loss`.
pub fn penalized_objective(params: &VecmParams, mf: &MatrixForm, cfg: &ObjectiveConfig) -> Result<f64> {
    let l = loss(params, mf, cfg.loss)?;
    Ok(l + cfg.xi * group_regularizer(&params.pi, &cfg.rat))
}

/// Robust weights `w_t` evaluated at `params`.
pub fn robust_weights(params: &VecmParams, mf: &MatrixForm, kind: LossKind) -> Result<DVector<f64>> {
    let e = residuals(params, mf)?;
    let (_, delta) = mahalanobis(&params.sigma, &e)?;
    Ok(delta.map(|d| kind.weight(d, mf.k())))
}

/// Gradients of `F` with respect to `Π` and `Γ`, holding `Σ` fixed.
///
/// `∇_Π F = −Σ⁻¹ E W Y₋₁ᵀ + ξ Π diag(rat'(‖π_i‖)/‖π_i‖)` and `∇_Γ F = −Σ⁻¹ E W ΔXᵀ`.
pub fn objective_gradient(
    params: &VecmParams,
    mf: &MatrixForm,
    cfg: &ObjectiveConfig,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let k = mf.k();
    let e = residuals(params, mf)?;
    let chol = cholesky(&params.sigma, "Sigma")?;
    let (_, delta) = mahalanobis(&params.sigma, &e)?;
    let mut ew = e;
    for (t, mut col) in ew.column_iter_mut().enumerate() {
        col *= cfg.loss.weight(delta[t], k);
    }
    let sinv_ew = chol.solve(&ew);
    let mut grad_pi = -(&sinv_ew * mf.ylag.transpose());
    let grad_gamma = -(&sinv_ew * mf.dx.transpose());

    if cfg.xi > 0.0 {
        for (i, col) in params.pi.column_iter().enumerate() {
            let norm = col.norm();
            let ratio = if norm <= cfg.rat.eps {
                let (p, eps) = (cfg.rat.scale, cfg.rat.eps);
                p / (eps * (p + eps) * (p + eps))
            } else {
                rat_derivative(norm, &cfg.rat) / norm
            };
            let mut g = grad_pi.column_mut(i);
            g.axpy(cfg.xi * ratio, &col, 1.0);
        }
    }
    Ok((grad_pi, grad_gamma))
}
