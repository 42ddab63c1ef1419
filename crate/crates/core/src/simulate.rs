//! Ground-truth generation and path simulation for cointegrated VECMs with
//! group-sparse `Π` and Gaussian, Student-t or Cauchy innovations.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Result, VecmError};
use crate::linalg::cholesky;
use crate::vecm::{assemble_matrix_form, regressor_dim, MatrixForm, SamplePath, VecmParams};

pub const BURN_IN: usize = 200;
pub const MAX_STABILITY_RETRIES: usize = 60;
/// Tolerance on `|λ| − 1` for an eigenvalue to count as a unit root.
pub const UNIT_ROOT_TOL: f64 = 1e-6;
/// Required gap below one for the stationary eigenvalues.
pub const STABILITY_MARGIN: f64 = 1e-3;

const TRUTH_STREAM: u64 = 0;
const PATH_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Innovation {
    Gaussian,
    StudentT(f64),
    Cauchy,
}

impl fmt::Display for Innovation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Innovation::Gaussian => write!(f, "gaussian"),
            Innovation::StudentT(df) => write!(f, "student:{df}"),
            Innovation::Cauchy => write!(f, "cauchy"),
        }
    }
}

impl FromStr for Innovation {
    type Err = VecmError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "gaussian" | "normal" => Ok(Innovation::Gaussian),
            "cauchy" => Ok(Innovation::Cauchy),
            _ => {
                let df = s
                    .strip_prefix("student:")
                    .or_else(|| s.strip_prefix("t:"))
                    .ok_or_else(|| VecmError::Parse(format!("unknown innovation '{s}'")))?;
                let df: f64 = df
                    .parse()
                    .map_err(|_| VecmError::Parse(format!("bad degrees of freedom '{df}'")))?;
                if !(df > 0.0 && df.is_finite()) {
                    return Err(VecmError::InvalidInput(format!("df must be positive, got {df}")));
                }
                Ok(Innovation::StudentT(df))
            }
        }
    }
}

/// Data-generating process.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpSpec {
    pub k: usize,
    pub p: usize,
    pub r: usize,
    pub n: usize,
    /// Number of nonzero columns of `Π`.
    pub active: usize,
    pub innovation: Innovation,
    pub seed: u64,
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.p == 0 || self.n == 0 {
            return Err(VecmError::InvalidInput("K, p, N must be positive".into()));
        }
        if !(self.r <= self.active && self.active <= self.k) {
            return Err(VecmError::InvalidInput(format!(
                "need r <= active <= K, got r={}, active={}, K={}",
                self.r, self.active, self.k
            )));
        }
        if let Innovation::StudentT(df) = self.innovation {
            if !(df > 0.0) {
                return Err(VecmError::InvalidInput(format!("df must be positive, got {df}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub params: VecmParams,
    /// Sorted indices of the nonzero columns of `Π`.
    pub support: Vec<usize>,
    pub path: Option<SamplePath>,
}

/// Companion eigenvalue summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Stability {
    pub unit_roots: usize,
    /// Largest modulus among the eigenvalues that are not unit roots.
    pub max_stationary_modulus: f64,
}

pub fn companion_stability(params: &VecmParams) -> Stability {
    let eig = params.companion().complex_eigenvalues();
    let mut unit_roots = 0;
    let mut max_stationary_modulus: f64 = 0.0;
    for z in eig.iter() {
        let m = z.norm();
        if (m - 1.0).abs() <= UNIT_ROOT_TOL {
            unit_roots += 1;
        } else {
            max_stationary_modulus = max_stationary_modulus.max(m);
        }
    }
    Stability {
        unit_roots,
        max_stationary_modulus,
    }
}

/// Exactly `K − r` unit roots and every other root at most `1 − STABILITY_MARGIN` in modulus.
pub fn is_stable(params: &VecmParams) -> bool {
    let s = companion_stability(params);
    s.unit_roots == params.k - params.r && s.max_stationary_modulus <= 1.0 - STABILITY_MARGIN
}

fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

/// Draw `θ` with a group-sparse rank-`r` `Π`.
///
/// `β` has orthonormal columns supported on `active` random rows. `α` is
/// `−β D + (I − ββᵀ) Z` with `D = diag(d_i)`, `d_i ~ U(0.2, 0.8)` and `Z` i.i.d.
/// normal scaled by `0.5/√K`, so `I_r + βᵀα = I − D` stays strictly inside the
/// unit circle. Unstable draws (possible through `Γ` when `p > 1`) are redrawn with
/// `α` and `Γ` shrunk by half each time.
pub fn make_ground_truth(spec: &DgpSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let (k, p, r) = (spec.k, spec.p, spec.r);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(TRUTH_STREAM);

    let mut support: Vec<usize> = sample(&mut rng, k, spec.active).into_vec();
    support.sort_unstable();

    let mut beta = DMatrix::zeros(k, r);
    if r > 0 {
        let block = normal_matrix(&mut rng, spec.active, r, 1.0);
        let q = block.qr().q();
        for (row, &idx) in support.iter().enumerate() {
            for j in 0..r {
                beta[(idx, j)] = q[(row, j)];
            }
        }
    }

    let a = normal_matrix(&mut rng, k, k, 1.0);
    let sigma = &a * a.transpose() / k as f64 + DMatrix::identity(k, k) * 0.1;

    let sqrt_k = (k as f64).sqrt();
    let eye = DMatrix::<f64>::identity(k, k);
    let beta_perp = &eye - &beta * beta.transpose();
    let m = regressor_dim(k, p);

    for attempt in 0..MAX_STABILITY_RETRIES {
        let shrink = 0.5f64.powi(attempt as i32);
        let d = DVector::from_fn(r, |_, _| rng.random_range(0.2..0.8));
        let z = normal_matrix(&mut rng, k, r, 0.5 / sqrt_k);
        let alpha = (-(&beta * DMatrix::from_diagonal(&d)) + &beta_perp * z) * shrink;
        let mut pi = &alpha * beta.transpose();
        for j in 0..k {
            if support.binary_search(&j).is_err() {
                pi.column_mut(j).fill(0.0);
            }
        }
        let mut gamma = normal_matrix(&mut rng, k, m, 0.2 / sqrt_k * shrink);
        gamma.column_mut(m - 1).fill(0.0);

        let params = VecmParams {
            k,
            p,
            r,
            pi,
            gamma,
            sigma: sigma.clone(),
        };
        if is_stable(&params) {
            params.validate()?;
            return Ok(GroundTruth {
                params,
                support,
                path: None,
            });
        }
    }
    Err(VecmError::GenerationFailure {
        attempts: MAX_STABILITY_RETRIES,
    })
}

/// Innovation sampler holding the Cholesky factor of `Σ`.
#[derive(Debug, Clone)]
pub struct InnovationSampler {
    kind: Innovation,
    chol_l: DMatrix<f64>,
    chi2: Option<ChiSquared<f64>>,
}

impl InnovationSampler {
    pub fn new(kind: Innovation, sigma: &DMatrix<f64>) -> Result<Self> {
        let chol_l = cholesky(sigma, "Sigma")?.l();
        let df = match kind {
            Innovation::Gaussian => None,
            Innovation::Cauchy => Some(1.0),
            Innovation::StudentT(df) => Some(df),
        };
        let chi2 = df
            .map(|df| {
                ChiSquared::new(df)
                    .map_err(|e| VecmError::InvalidInput(format!("chi-square({df}): {e}")))
            })
            .transpose()?;
        Ok(Self { kind, chol_l, chi2 })
    }

    pub fn kind(&self) -> Innovation {
        self.kind
    }

    /// `L z` for Gaussian; `L z / √(g/df)` with `g ~ χ²(df)` otherwise.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let k = self.chol_l.nrows();
        let z = DVector::from_fn(k, |_, _| {
            let v: f64 = StandardNormal.sample(rng);
            v
        });
        let x = &self.chol_l * z;
        match (&self.chi2, self.kind) {
            (Some(chi2), Innovation::StudentT(df)) => x / (chi2.sample(rng) / df).sqrt(),
            (Some(chi2), Innovation::Cauchy) => x / chi2.sample(rng).sqrt(),
            _ => x,
        }
    }
}

pub fn draw_innovation<R: Rng + ?Sized>(
    kind: Innovation,
    sigma: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    Ok(InnovationSampler::new(kind, sigma)?.draw(rng))
}

/// Iterate the VECM from a zero state, discard [`BURN_IN`] steps and return
/// `p` presample columns plus `N` observations.
pub fn simulate_path(truth: &GroundTruth, spec: &DgpSpec) -> Result<SamplePath> {
    spec.validate()?;
    let params = &truth.params;
    if params.k != spec.k || params.p != spec.p {
        return Err(VecmError::InvalidInput("ground truth does not match the DGP spec".into()));
    }
    if !is_stable(params) {
        return Err(VecmError::InvalidInput(
            "ground truth fails the companion stability check".into(),
        ));
    }
    let (k, p) = (spec.k, spec.p);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(PATH_STREAM);
    let sampler = InnovationSampler::new(spec.innovation, &params.sigma)?;
    let lags = params.gamma_lags();
    let drift = params.drift();

    let total = p + BURN_IN + spec.n;
    let mut levels: Vec<DVector<f64>> = vec![DVector::zeros(k); p];
    levels.reserve(total - p);
    for step in 0..BURN_IN + spec.n {
        let t = levels.len();
        let prev = &levels[t - 1];
        let mut dy = &params.pi * prev + &drift;
        for (i, g) in lags.iter().enumerate() {
            // Δy_{t-1-i}
            let d = &levels[t - 1 - i] - &levels[t - 2 - i];
            dy += g * d;
        }
        dy += sampler.draw(&mut rng);
        let next = prev + dy;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(VecmError::SimulationOverflow { step });
        }
        levels.push(next);
    }
    let start = p + BURN_IN;
    let presample = DMatrix::from_columns(&levels[start - p..start]);
    let observations = DMatrix::from_columns(&levels[start..]);
    SamplePath::new(presample, observations)
}

/// Noise-free instance: regressors `Y₋₁`, `ΔX` from the simulated path, responses
/// replaced by `ΠY₋₁ + ΓΔX` so the truth fits with zero residuals.
///
/// A path with the innovations switched off is useless here: it either stays at
/// zero or settles to a constant level that the drift absorbs, leaving `Π`
/// unidentified.
pub fn exact_matrix_form(truth: &GroundTruth) -> Result<MatrixForm> {
    let path = truth
        .path
        .as_ref()
        .ok_or_else(|| VecmError::InvalidInput("ground truth has no simulated path".into()))?;
    let mf = assemble_matrix_form(path, truth.params.p)?;
    let dy = &truth.params.pi * &mf.ylag + &truth.params.gamma * &mf.dx;
    MatrixForm::from_blocks(dy, mf.ylag, mf.dx, mf.p)
}

/// Ground truth together with its simulated path.
pub fn simulate(spec: &DgpSpec) -> Result<GroundTruth> {
    let mut truth = make_ground_truth(spec)?;
    truth.path = Some(simulate_path(&truth, spec)?);
    Ok(truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn spec(k: usize, r: usize, active: usize, seed: u64) -> DgpSpec {
        DgpSpec {
            k,
            p: 1,
            r,
            n: 200,
            active,
            innovation: Innovation::Gaussian,
            seed,
        }
    }

    #[test]
    fn scalar_truth_is_mean_reverting() {
        for seed in 0..20 {
            let t = make_ground_truth(&spec(1, 1, 1, seed)).unwrap();
            let pi = t.params.pi[(0, 0)];
            assert!(-2.0 < pi && pi < 0.0, "pi = {pi}");
            let root = 1.0 + pi;
            assert!(root.abs() < 1.0);
        }
    }

    #[test]
    fn support_and_rank_are_exact() {
        for seed in 0..10 {
            let mut s = spec(5, 3, 4, seed);
            s.p = 2;
            let t = make_ground_truth(&s).unwrap();
            let zero_cols: Vec<usize> = (0..5)
                .filter(|&j| t.params.pi.column(j).iter().all(|&v| v == 0.0))
                .collect();
            assert_eq!(zero_cols.len(), 1);
            assert!(!t.support.contains(&zero_cols[0]));
            let sorted = crate::linalg::singular_values(&t.params.pi).unwrap();
            assert!(sorted[2] > 1e-6 * sorted[0]);
            assert!(sorted[3] < 1e-12 * sorted[0]);
            let st = companion_stability(&t.params);
            assert_eq!(st.unit_roots, 2);
            assert!(st.max_stationary_modulus <= 1.0 - STABILITY_MARGIN);
        }
    }

    #[test]
    fn truth_is_deterministic() {
        let s = spec(4, 2, 3, 99);
        assert_eq!(make_ground_truth(&s).unwrap(), make_ground_truth(&s).unwrap());
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(make_ground_truth(&spec(5, 3, 2, 0)).is_err());
        let mut s = spec(3, 1, 2, 0);
        s.innovation = Innovation::StudentT(-1.0);
        assert!(make_ground_truth(&s).is_err());
    }

    #[test]
    fn exact_instance_has_zero_residuals() {
        let mut s = spec(4, 2, 3, 11);
        s.p = 2;
        let truth = simulate(&s).unwrap();
        let mf = exact_matrix_form(&truth).unwrap();
        let e = crate::vecm::residuals(&truth.params, &mf).unwrap();
        assert!(e.amax() < 1e-12 * mf.dy.amax());
        let noisy = assemble_matrix_form(truth.path.as_ref().unwrap(), 2).unwrap();
        assert_eq!(mf.ylag, noisy.ylag);
        assert_eq!(mf.dx, noisy.dx);
    }

    #[test]
    fn white_noise_reduction() {
        // Π = −1 makes y_t = ε_t.
        let s = DgpSpec {
            n: 1000,
            ..spec(1, 1, 1, 17)
        };
        let truth = GroundTruth {
            params: VecmParams::new(
                1,
                1,
                1,
                DMatrix::from_element(1, 1, -1.0),
                DMatrix::zeros(1, 1),
                DMatrix::from_element(1, 1, 2.0),
            )
            .unwrap(),
            support: vec![0],
            path: None,
        };
        let path = simulate_path(&truth, &s).unwrap();
        let obs = path.observations.row(0);
        let mean = obs.mean();
        let var = obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 999.0;
        assert!((var - 2.0).abs() < 0.2, "sample variance {var}");
    }

    #[test]
    fn path_is_deterministic() {
        let mut s = spec(3, 1, 2, 5);
        s.innovation = Innovation::StudentT(3.0);
        s.p = 2;
        let a = simulate(&s).unwrap();
        let b = simulate(&s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.path.as_ref().unwrap().presample.ncols(), 2);
        assert_eq!(a.path.as_ref().unwrap().n(), 200);
    }

    #[test]
    fn gaussian_sample_covariance_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sampler = InnovationSampler::new(Innovation::Gaussian, &DMatrix::identity(2, 2)).unwrap();
        let n = 100_000;
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..n {
            let x = sampler.draw(&mut rng);
            acc += &x * x.transpose();
        }
        acc /= n as f64;
        assert!((acc - DMatrix::identity(2, 2)).amax() < 0.05);
    }

    #[test]
    fn cauchy_quartiles_are_plus_minus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sampler = InnovationSampler::new(Innovation::Cauchy, &DMatrix::identity(1, 1)).unwrap();
        let mut xs: Vec<f64> = (0..100_000).map(|_| sampler.draw(&mut rng)[0]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q1 = xs[25_000];
        let q3 = xs[75_000];
        assert!((q1 + 1.0).abs() < 0.05, "q1 = {q1}");
        assert!((q3 - 1.0).abs() < 0.05, "q3 = {q3}");
    }

    #[test]
    fn large_df_student_is_close_to_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sampler =
            InnovationSampler::new(Innovation::StudentT(1e6), &DMatrix::identity(1, 1)).unwrap();
        let mut xs: Vec<f64> = (0..10_000).map(|_| sampler.draw(&mut rng)[0]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len() as f64;
        let normal = |x: f64| Normal::standard().cdf(x);
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = normal(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.02, "KS distance {ks}");
    }

    #[test]
    fn innovation_parsing() {
        assert_eq!("student:3".parse::<Innovation>().unwrap(), Innovation::StudentT(3.0));
        assert_eq!("cauchy".parse::<Innovation>().unwrap(), Innovation::Cauchy);
        assert!("student:0".parse::<Innovation>().is_err());
    }
}
