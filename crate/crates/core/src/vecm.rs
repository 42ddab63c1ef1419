//! VECM parameterization and the regression blocks of its matrix form
//!
//! ```text
//! Δy_t = ν + Π y_{t-1} + Σ_{i=1}^{p-1} Γ_i Δy_{t-i} + ε_t
//! ΔY   = Π Y_{-1} + Γ ΔX + E,      Γ = [Γ_1, …, Γ_{p-1}, ν]
//! ```
//!
//! Column `t` of `dY`, `ylag` and `dx` always refer to the same time index.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, VecmError};
use crate::linalg::{check_finite, check_shape, singular_values, svd, sym_eig_extremes};

/// Relative singular-value threshold separating "zero" from "nonzero" in rank checks.
pub const RANK_TOL: f64 = 1e-8;

/// Relative asymmetry tolerated in a scatter matrix.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Number of regressor rows in `ΔX`: `K·(p−1)` lagged differences plus the drift.
pub fn regressor_dim(k: usize, p: usize) -> usize {
    k * (p - 1) + 1
}

/// Full parameter set `{Π, Γ, Σ}` with its dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct VecmParams {
    pub k: usize,
    pub p: usize,
    pub r: usize,
    pub pi: DMatrix<f64>,
    /// `[Γ_1, …, Γ_{p−1}, ν]`; the last column is the drift.
    pub gamma: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

impl VecmParams {
    pub fn new(
        k: usize,
        p: usize,
        r: usize,
        pi: DMatrix<f64>,
        gamma: DMatrix<f64>,
        sigma: DMatrix<f64>,
    ) -> Result<Self> {
        let params = Self {
            k,
            p,
            r,
            pi,
            gamma,
            sigma,
        };
        params.validate()?;
        Ok(params)
    }

    /// `Π = 0`, `Γ = 0`, `Σ = I`.
    pub fn zeros(k: usize, p: usize, r: usize) -> Self {
        Self {
            k,
            p,
            r,
            pi: DMatrix::zeros(k, k),
            gamma: DMatrix::zeros(k, regressor_dim(k, p)),
            sigma: DMatrix::identity(k, k),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k;
        if k == 0 || self.p == 0 {
            return Err(VecmError::InvalidInput("K and p must be positive".into()));
        }
        // r == K is the stationary full-rank case, admitted for the scalar DGP.
        if self.r > k {
            return Err(VecmError::InvalidInput(format!(
                "cointegration rank {} exceeds K = {k}",
                self.r
            )));
        }
        check_shape(&self.pi, k, k, "Pi")?;
        check_shape(&self.gamma, k, regressor_dim(k, self.p), "Gamma")?;
        check_shape(&self.sigma, k, k, "Sigma")?;
        check_finite(&self.pi, "Pi")?;
        check_finite(&self.gamma, "Gamma")?;
        check_finite(&self.sigma, "Sigma")?;
        check_rank(&self.pi, self.r)?;
        check_scatter(&self.sigma)
    }

    /// Short-run blocks `Γ_1 … Γ_{p−1}` as separate `K×K` matrices.
    pub fn gamma_lags(&self) -> Vec<DMatrix<f64>> {
        (0..self.p - 1)
            .map(|i| self.gamma.columns(i * self.k, self.k).into_owned())
            .collect()
    }

    pub fn drift(&self) -> DVector<f64> {
        self.gamma.column(self.gamma.ncols() - 1).into_owned()
    }

    /// Coefficients `A_1 … A_p` of the equivalent VAR(p) in levels.
    pub fn var_coefficients(&self) -> Vec<DMatrix<f64>> {
        let k = self.k;
        let lags = self.gamma_lags();
        let eye = DMatrix::<f64>::identity(k, k);
        if self.p == 1 {
            return vec![&eye + &self.pi];
        }
        let mut out = Vec::with_capacity(self.p);
        out.push(&eye + &self.pi + &lags[0]);
        for i in 1..self.p - 1 {
            out.push(&lags[i] - &lags[i - 1]);
        }
        out.push(-&lags[self.p - 2]);
        out
    }

    /// Companion matrix (`Kp × Kp`) of the VAR(p) in levels.
    pub fn companion(&self) -> DMatrix<f64> {
        let k = self.k;
        let kp = k * self.p;
        let mut c = DMatrix::zeros(kp, kp);
        for (i, a) in self.var_coefficients().iter().enumerate() {
            c.view_mut((0, i * k), (k, k)).copy_from(a);
        }
        for i in k..kp {
            c[(i, i - k)] = 1.0;
        }
        c
    }
}

/// Errors if `σ_{r+1} > RANK_TOL · σ_1`.
pub fn check_rank(pi: &DMatrix<f64>, r: usize) -> Result<()> {
    let sv = singular_values(pi)?;
    let largest = sv.first().copied().unwrap_or(0.0);
    let offending: Vec<f64> = sv
        .iter()
        .skip(r)
        .copied()
        .filter(|&s| s > RANK_TOL * largest)
        .collect();
    if offending.is_empty() {
        Ok(())
    } else {
        Err(VecmError::RankViolation {
            rank: r,
            largest,
            offending,
        })
    }
}

fn check_scatter(sigma: &DMatrix<f64>) -> Result<()> {
    let scale = sigma.amax().max(f64::MIN_POSITIVE);
    let asym = (sigma - sigma.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(VecmError::InvalidInput(format!(
            "Sigma is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let (min, _) = sym_eig_extremes(sigma);
    if min <= 0.0 {
        return Err(VecmError::NotPositiveDefinite("Sigma"));
    }
    Ok(())
}

/// Cointegration factors with `Π = α βᵀ` and `βᵀβ = I_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct CointFactors {
    pub alpha: DMatrix<f64>,
    pub beta: DMatrix<f64>,
}

impl CointFactors {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.alpha * self.beta.transpose()
    }
}

/// Factor a rank-≤r matrix as `α βᵀ` with `β = V_r`, `α = U_r S_r`.
///
/// Each column of `β` is signed so its largest-magnitude entry is positive. A zero
/// matrix falls back to `β = [e_1 … e_r]`, `α = 0`.
pub fn factorize_pi(pi: &DMatrix<f64>, r: usize) -> Result<CointFactors> {
    let k = pi.nrows();
    if pi.ncols() != k {
        return Err(VecmError::InvalidInput("Pi must be square".into()));
    }
    if r > k {
        return Err(VecmError::InvalidInput(format!("rank {r} exceeds K = {k}")));
    }
    check_finite(pi, "Pi")?;
    check_rank(pi, r)?;

    let mut alpha = DMatrix::zeros(k, r);
    let mut beta = DMatrix::zeros(k, r);
    if pi.amax() == 0.0 {
        for j in 0..r {
            beta[(j, j)] = 1.0;
        }
        return Ok(CointFactors { alpha, beta });
    }

    let d = svd(pi)?;
    for j in 0..r {
        let s = d.s[j];
        let mut v = d.v.column(j).into_owned();
        let mut uj = d.u.column(j).into_owned();
        let pivot = v.iamax();
        if v[pivot] < 0.0 {
            v.neg_mut();
            uj.neg_mut();
        }
        beta.set_column(j, &v);
        alpha.set_column(j, &(uj * s));
    }
    Ok(CointFactors { alpha, beta })
}

/// Observed series with its pre-sample values.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    /// `K × p₀` matrix holding `y_{1−p₀}, …, y_0` (oldest first).
    pub presample: DMatrix<f64>,
    /// `K × N` matrix holding `y_1, …, y_N`.
    pub observations: DMatrix<f64>,
}

impl SamplePath {
    pub fn new(presample: DMatrix<f64>, observations: DMatrix<f64>) -> Result<Self> {
        let k = observations.nrows();
        let n = observations.ncols();
        if k == 0 {
            return Err(VecmError::InvalidInput("series dimension K must be positive".into()));
        }
        if presample.nrows() != k {
            return Err(VecmError::InvalidInput(format!(
                "presample has {} rows, observations have {k}",
                presample.nrows()
            )));
        }
        if n <= k {
            return Err(VecmError::InvalidInput(format!(
                "need N > K observations, got N = {n}, K = {k}"
            )));
        }
        check_finite(&presample, "presample")?;
        check_finite(&observations, "observations")?;
        Ok(Self {
            presample,
            observations,
        })
    }

    pub fn k(&self) -> usize {
        self.observations.nrows()
    }

    pub fn n(&self) -> usize {
        self.observations.ncols()
    }
}

/// Regression blocks `ΔY`, `Y₋₁`, `ΔX`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixForm {
    pub dy: DMatrix<f64>,
    pub ylag: DMatrix<f64>,
    pub dx: DMatrix<f64>,
    pub p: usize,
}

impl MatrixForm {
    /// Assemble from precomputed blocks, checking shapes and the drift row.
    pub fn from_blocks(
        dy: DMatrix<f64>,
        ylag: DMatrix<f64>,
        dx: DMatrix<f64>,
        p: usize,
    ) -> Result<Self> {
        let k = dy.nrows();
        let n = dy.ncols();
        if p == 0 {
            return Err(VecmError::InvalidInput("lag order p must be >= 1".into()));
        }
        check_shape(&ylag, k, n, "Ylag")?;
        check_shape(&dx, regressor_dim(k, p), n, "dX")?;
        check_finite(&dy, "dY")?;
        check_finite(&ylag, "Ylag")?;
        check_finite(&dx, "dX")?;
        if dx.row(dx.nrows() - 1).iter().any(|&v| v != 1.0) {
            return Err(VecmError::InvalidInput("last row of dX must be all ones".into()));
        }
        Ok(Self { dy, ylag, dx, p })
    }

    pub fn k(&self) -> usize {
        self.dy.nrows()
    }

    pub fn n(&self) -> usize {
        self.dy.ncols()
    }

    pub fn m(&self) -> usize {
        self.dx.nrows()
    }
}

/// Build `ΔY`, `Y₋₁`, `ΔX` from a sample path. Uses the most recent `p` presample columns.
pub fn assemble_matrix_form(path: &SamplePath, p: usize) -> Result<MatrixForm> {
    if p == 0 {
        return Err(VecmError::InvalidInput("lag order p must be >= 1".into()));
    }
    let k = path.observations.nrows();
    let n = path.observations.ncols();
    let avail = path.presample.ncols();
    if avail < p {
        return Err(VecmError::InvalidInput(format!(
            "lag order {p} needs {p} presample columns, found {avail}"
        )));
    }
    if n == 0 {
        return Err(VecmError::InvalidInput("no observations".into()));
    }
    check_finite(&path.presample, "presample")?;
    check_finite(&path.observations, "observations")?;

    // z[j] for j in 0..p+n: the last p presample columns followed by the observations.
    let first = avail - p;
    let z = |j: usize, i: usize| -> f64 {
        if j < p {
            path.presample[(i, first + j)]
        } else {
            path.observations[(i, j - p)]
        }
    };

    let m = regressor_dim(k, p);
    let mut dy = DMatrix::zeros(k, n);
    let mut ylag = DMatrix::zeros(k, n);
    let mut dx = DMatrix::zeros(m, n);
    for t in 0..n {
        let cur = p + t;
        for i in 0..k {
            dy[(i, t)] = z(cur, i) - z(cur - 1, i);
            ylag[(i, t)] = z(cur - 1, i);
        }
        for lag in 1..p {
            for i in 0..k {
                dx[((lag - 1) * k + i, t)] = z(cur - lag, i) - z(cur - lag - 1, i);
            }
        }
        dx[(m - 1, t)] = 1.0;
    }
    Ok(MatrixForm { dy, ylag, dx, p })
}

/// `E = ΔY − Π Y₋₁ − Γ ΔX`.
pub fn residuals(params: &VecmParams, mf: &MatrixForm) -> Result<DMatrix<f64>> {
    let k = mf.k();
    if params.k != k || params.p != mf.p {
        return Err(VecmError::InvalidInput(format!(
            "params (K={}, p={}) do not match data (K={k}, p={})",
            params.k, params.p, mf.p
        )));
    }
    check_shape(&params.pi, k, k, "Pi")?;
    check_shape(&params.gamma, k, mf.m(), "Gamma")?;
    Ok(&mf.dy - &params.pi * &mf.ylag - &params.gamma * &mf.dx)
}
