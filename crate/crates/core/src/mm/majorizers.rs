//! Upper bounds used to build the surrogate chain. Each bound touches its
//! target at the expansion point.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::cholesky;
use crate::objective::RatParams;

/// Tangent-line bound on the concave `log(1 + x)`, expanded at `x0 > −1`.
pub fn log1p_majorizer(x: f64, x0: f64) -> f64 {
    x0.ln_1p() + (x - x0) / (1.0 + x0)
}

/// Tangent-plane bound on the concave `log det R`, expanded at SPD `r0`:
/// `Tr(r0⁻¹ R) + log det r0 − K`.
pub fn logdet_majorizer(r: &DMatrix<f64>, r0: &DMatrix<f64>) -> Result<f64> {
    let chol = cholesky(r0, "expansion point")?;
    let logdet0 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let trace = chol.solve(r).trace();
    Ok(trace + logdet0 - r0.nrows() as f64)
}

/// Quadratic bound `rat(x) ≤ (q/2)·x² + c` expanded at `x0`; returns `(q, c)`.
pub fn rat_majorizer(x0: f64, rp: &RatParams) -> (f64, f64) {
    let (p, e) = (rp.scale, rp.eps);
    let m = x0.abs().max(e);
    let q = p / (m * (p + m) * (p + m));
    let c = (p * m + 2.0 * m * m) / (2.0 * (p + m) * (p + m))
        - (p * e + 2.0 * e * e) / (2.0 * (p + e) * (p + e));
    (q, c)
}

/// Bound on `xᵀ A x` for symmetric `B ⪰ A`, expanded at `x0`:
/// `xᵀBx + 2·x0ᵀ(A−B)x + x0ᵀ(B−A)x0`.
pub fn quadratic_majorizer(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    x: &DVector<f64>,
    x0: &DVector<f64>,
) -> f64 {
    let d = a - b;
    x.dot(&(b * x)) + 2.0 * x0.dot(&(&d * x)) - x0.dot(&(&d * x0))
}
