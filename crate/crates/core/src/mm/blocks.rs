//! Weighted regression blocks, the residual-maker `M̄` and the closed-form
//! minimizers of the weighted surrogate over `Γ` and `Σ`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Result, VecmError};
use crate::linalg::{sym_eig_extremes, symmetrize};
use crate::vecm::MatrixForm;

/// Smallest eigenvalue enforced on every scatter update.
pub const SIGMA_FLOOR: f64 = 1e-10;

/// `ΔY`, `Y₋₁`, `ΔX`, each right-multiplied by `diag(√w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedBlocks {
    pub dy: DMatrix<f64>,
    pub ylag: DMatrix<f64>,
    pub dx: DMatrix<f64>,
}

impl WeightedBlocks {
    pub fn n(&self) -> usize {
        self.dy.ncols()
    }
}

pub fn weighted_blocks(mf: &MatrixForm, w: &DVector<f64>) -> Result<WeightedBlocks> {
    if w.len() != mf.n() {
        return Err(VecmError::InvalidInput(format!(
            "weight vector has length {}, expected {}",
            w.len(),
            mf.n()
        )));
    }
    if let Some((index, &value)) = w.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(VecmError::NonPositiveWeight { index, value });
    }
    let scale = |m: &DMatrix<f64>| {
        let mut out = m.clone();
        for (t, mut col) in out.column_iter_mut().enumerate() {
            col *= w[t].sqrt();
        }
        out
    };
    Ok(WeightedBlocks {
        dy: scale(&mf.dy),
        ylag: scale(&mf.ylag),
        dx: scale(&mf.dx),
    })
}

/// Implicit `M̄ = I − ΔX̄ᵀ(ΔX̄ΔX̄ᵀ)⁻¹ΔX̄`, applied from the right to row blocks.
#[derive(Debug, Clone)]
pub struct Projector {
    dx: DMatrix<f64>,
    gram: Cholesky<f64, Dyn>,
}

impl Projector {
    pub fn new(dx: &DMatrix<f64>) -> Result<Self> {
        let m = dx.nrows();
        let gram = dx * dx.transpose();
        let chol = Cholesky::new(gram).ok_or(VecmError::CollinearRegressors { dim: m })?;
        // Cholesky can succeed on numerically singular Grams; reject those too.
        let diag = chol.l_dirty().diagonal();
        let max = diag.amax();
        if diag.iter().any(|&d| d <= max * 1e-7) {
            return Err(VecmError::CollinearRegressors { dim: m });
        }
        Ok(Self {
            dx: dx.clone(),
            gram: chol,
        })
    }

    /// `V ΔX̄ᵀ (ΔX̄ΔX̄ᵀ)⁻¹`, the regression coefficients of the rows of `V` on `ΔX̄`.
    pub fn coefficients(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        self.gram.solve(&(&self.dx * v.transpose())).transpose()
    }

    /// `V M̄ = V − (V ΔX̄ᵀ (ΔX̄ΔX̄ᵀ)⁻¹) ΔX̄`.
    pub fn apply(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        v - self.coefficients(v) * &self.dx
    }
}

/// Dense `N × N` residual-maker. Only for small instances and tests.
pub fn projection_matrix(dx: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let proj = Projector::new(dx)?;
    let n = dx.ncols();
    let mut m = proj.apply(&DMatrix::identity(n, n));
    symmetrize(&mut m);
    Ok(m)
}

/// Add `δ·I` so the smallest eigenvalue is at least [`SIGMA_FLOOR`].
pub fn floor_sigma(sigma: &mut DMatrix<f64>) {
    symmetrize(sigma);
    let (min, _) = sym_eig_extremes(sigma);
    let delta = (SIGMA_FLOOR - min).max(0.0);
    if delta > 0.0 {
        for i in 0..sigma.nrows() {
            sigma[(i, i)] += delta;
        }
    }
}

/// Per-iteration quantities that do not depend on `Π`.
#[derive(Debug, Clone)]
pub struct MajorizerData {
    pub blocks: WeightedBlocks,
    pub projector: Projector,
    /// `ΔȲ M̄`
    pub dy_res: DMatrix<f64>,
    /// `Ȳ₋₁ M̄`
    pub ylag_res: DMatrix<f64>,
    /// `A = Ȳ₋₁ M̄ Ȳ₋₁ᵀ`
    pub a: DMatrix<f64>,
    /// `C = ΔȲ M̄ Ȳ₋₁ᵀ`
    pub c: DMatrix<f64>,
}

impl MajorizerData {
    pub fn new(mf: &MatrixForm, w: &DVector<f64>) -> Result<Self> {
        let blocks = weighted_blocks(mf, w)?;
        let projector = Projector::new(&blocks.dx)?;
        let dy_res = projector.apply(&blocks.dy);
        let ylag_res = projector.apply(&blocks.ylag);
        let mut a = &ylag_res * ylag_res.transpose();
        symmetrize(&mut a);
        let c = &dy_res * ylag_res.transpose();
        Ok(Self {
            blocks,
            projector,
            dy_res,
            ylag_res,
            a,
            c,
        })
    }

    pub fn n(&self) -> usize {
        self.blocks.n()
    }

    /// `Γ(Π) = (ΔȲ − ΠȲ₋₁) ΔX̄ᵀ (ΔX̄ΔX̄ᵀ)⁻¹`.
    pub fn gamma(&self, pi: &DMatrix<f64>) -> DMatrix<f64> {
        let e = &self.blocks.dy - pi * &self.blocks.ylag;
        self.projector.coefficients(&e)
    }

    /// `Σ(Π) = (1/N)(ΔȲ − ΠȲ₋₁) M̄ (ΔȲ − ΠȲ₋₁)ᵀ`, without flooring.
    pub fn raw_sigma(&self, pi: &DMatrix<f64>) -> DMatrix<f64> {
        let e = &self.dy_res - pi * &self.ylag_res;
        let mut s = &e * e.transpose() / self.n() as f64;
        symmetrize(&mut s);
        s
    }

    /// Closed-form `(Γ(Π), Σ(Π))` with `Σ` floored.
    pub fn gamma_sigma(&self, pi: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut sigma = self.raw_sigma(pi);
        floor_sigma(&mut sigma);
        (self.gamma(pi), sigma)
    }
}

/// Closed-form minimizers of the weighted surrogate over `Γ` and `Σ` for fixed `Π`.
pub fn closed_form_gamma_sigma(
    pi: &DMatrix<f64>,
    dy_bar: &DMatrix<f64>,
    ylag_bar: &DMatrix<f64>,
    dx_bar: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let proj = Projector::new(dx_bar)?;
    let e = dy_bar - pi * ylag_bar;
    let gamma = proj.coefficients(&e);
    let e_res = &e - &gamma * dx_bar;
    let mut sigma = &e_res * e_res.transpose() / dy_bar.ncols() as f64;
    floor_sigma(&mut sigma);
    Ok((gamma, sigma))
}
