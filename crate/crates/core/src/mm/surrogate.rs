//! Quadratic surrogate in `Π` and its isotropic upper bound.
//!
//! The surrogate Hessian acts on `vec(Π)` as `G = A ⊗ Σ⁻¹ + ξ diag(q) ⊗ I_K`. It
//! is never formed; [`SurrogateQuadratic::apply_g`] evaluates `Σ⁻¹ Π A + ξ Π diag(q)`.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::{cholesky, svd, sym_eig_extremes, symmetrize};
use crate::mm::majorizers::rat_majorizer;
use crate::objective::RatParams;

/// Curvatures `q_i` of the per-column quadratic bounds on the group penalty.
pub fn q_coefficients(pi: &DMatrix<f64>, rp: &RatParams) -> DVector<f64> {
    DVector::from_iterator(
        pi.ncols(),
        pi.column_iter().map(|c| rat_majorizer(c.norm(), rp).0),
    )
}

#[derive(Debug, Clone)]
pub struct SurrogateQuadratic {
    pub sigma_inv: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub xi: f64,
    pub q: DVector<f64>,
}

impl SurrogateQuadratic {
    /// `a = Ȳ₋₁M̄Ȳ₋₁ᵀ`, `c = ΔȲM̄Ȳ₋₁ᵀ`; `H = Σ⁻¹ c`.
    pub fn new(
        sigma: &DMatrix<f64>,
        a: &DMatrix<f64>,
        c: &DMatrix<f64>,
        xi: f64,
        q: DVector<f64>,
    ) -> Result<Self> {
        let chol = cholesky(sigma, "Sigma")?;
        let mut sigma_inv = chol.inverse();
        symmetrize(&mut sigma_inv);
        let h = chol.solve(c);
        Ok(Self {
            sigma_inv,
            a: a.clone(),
            h,
            xi,
            q,
        })
    }

    /// `unvec(G · vec(Π))`.
    pub fn apply_g(&self, pi: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = &self.sigma_inv * pi * &self.a;
        if self.xi != 0.0 {
            for (i, mut col) in out.column_iter_mut().enumerate() {
                col.axpy(self.xi * self.q[i], &pi.column(i), 1.0);
            }
        }
        out
    }

    /// Gradient of the quadratic surrogate, `G·vec(Π) − vec(H)`.
    pub fn gradient(&self, pi: &DMatrix<f64>) -> DMatrix<f64> {
        self.apply_g(pi) - &self.h
    }

    /// `½ vec(Π)ᵀ G vec(Π) − ⟨H, Π⟩`.
    pub fn value(&self, pi: &DMatrix<f64>) -> f64 {
        0.5 * pi.dot(&self.apply_g(pi)) - self.h.dot(pi)
    }

    pub fn psi(&self) -> f64 {
        psi_bound(&self.a, &self.sigma_inv, self.xi, &self.q)
    }
}

/// `λ_max(A)·λ_max(Σ⁻¹) + ξ·max_i q_i`, an upper bound on `λ_max(G)`.
pub fn psi_bound(a: &DMatrix<f64>, sigma_inv: &DMatrix<f64>, xi: f64, q: &DVector<f64>) -> f64 {
    let (_, amax) = sym_eig_extremes(a);
    let (_, smax) = sym_eig_extremes(sigma_inv);
    let qmax = q.iter().copied().fold(0.0, f64::max);
    let bound = amax.max(0.0) * smax + xi * qmax;
    // A and ξq can both vanish (regressors explain Y₋₁ exactly); the step is then a no-op.
    bound.max(f64::MIN_POSITIVE)
}

/// `P = Π − ψ⁻¹ (G·vec(Π) − vec(H))`, a gradient step of length `1/ψ` on the surrogate.
pub fn proximal_target(pi: &DMatrix<f64>, surrogate: &SurrogateQuadratic, psi: f64) -> DMatrix<f64> {
    pi - surrogate.gradient(pi) / psi
}

/// Best rank-≤`r` Frobenius approximation: keep the `r` leading singular triplets.
pub fn rank_truncate(p: &DMatrix<f64>, r: usize) -> Result<DMatrix<f64>> {
    let k = p.nrows().min(p.ncols());
    if r >= k {
        return Ok(p.clone());
    }
    if r == 0 {
        return Ok(DMatrix::zeros(p.nrows(), p.ncols()));
    }
    let d = svd(p)?;
    let mut out = DMatrix::zeros(p.nrows(), p.ncols());
    for j in 0..r {
        out.ger(d.s[j], &d.u.column(j), &d.v.column(j), 1.0);
    }
    Ok(out)
}
