//! Monte Carlo harness: MM-vs-GD convergence traces and NMSE sweeps over
//! Student-t degrees of freedom for the Cauchy, Gaussian and true-t losses.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Deserialize;

use crate::baselines::{fit_gd, fit_with_loss, GdOptions};
use crate::error::{Result, VecmError};
use crate::io::{fmt_f64, write_trace_csv};
use crate::mm::{fit, initial_params, FitReport, Init, SolverOptions};
use crate::objective::{LossKind, ObjectiveConfig, RatParams};
use crate::simulate::{simulate, DgpSpec, Innovation};
use crate::vecm::{assemble_matrix_form, MatrixForm};

/// `‖Π̂ − Π‖²_F / ‖Π‖²_F`.
pub fn nmse(pi_hat: &DMatrix<f64>, pi_true: &DMatrix<f64>) -> Result<f64> {
    if pi_hat.shape() != pi_true.shape() {
        return Err(VecmError::InvalidInput("NMSE operands differ in shape".into()));
    }
    let denom = pi_true.norm_squared();
    if denom == 0.0 {
        return Err(VecmError::UndefinedMetric);
    }
    Ok((pi_hat - pi_true).norm_squared() / denom)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median absolute deviation about the median.
pub fn mad(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let m = median(&mut v);
    let mut dev: Vec<f64> = v.iter().map(|x| (x - m).abs()).collect();
    median(&mut dev)
}

/// Default penalty weight `0.1 · √N · MAD(ΔY)`.
pub fn default_xi(mf: &MatrixForm) -> f64 {
    0.1 * (mf.n() as f64).sqrt() * mad(mf.dy.as_slice())
}

/// First iteration whose objective is at most `level`.
pub fn iterations_to_reach(trace: &[f64], level: f64) -> Option<usize> {
    trace.iter().position(|&f| f <= level)
}

/// Solver settings shared by the experiment drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSettings {
    /// `None` selects [`default_xi`] per dataset.
    pub xi: Option<f64>,
    /// `None` selects [`RatParams::default_for`].
    pub rat: Option<RatParams>,
    pub max_iter: usize,
    pub gd_max_iter: usize,
    pub rel_tol: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            xi: None,
            rat: None,
            max_iter: 2000,
            gd_max_iter: 5000,
            rel_tol: 1e-8,
        }
    }
}

impl FitSettings {
    pub fn objective(&self, mf: &MatrixForm, loss: LossKind) -> Result<ObjectiveConfig> {
        let rat = self.rat.unwrap_or_else(|| RatParams::default_for(mf.k()));
        let xi = self.xi.unwrap_or_else(|| default_xi(mf));
        ObjectiveConfig::new(rat, xi, loss)
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceRun {
    pub xi: f64,
    pub mm: FitReport,
    pub gd: FitReport,
}

impl ConvergenceRun {
    /// Iterations each solver needs to get within `tol` of MM's final objective.
    pub fn iterations_to_mm_final(&self, tol: f64) -> (Option<usize>, Option<usize>) {
        let level = self.mm.final_objective() + tol;
        (
            iterations_to_reach(&self.mm.obj_trace, level),
            iterations_to_reach(&self.gd.obj_trace, level),
        )
    }
}

/// Simulate one instance and fit it with MM and GD from the same starting point.
pub fn run_convergence(dgp: &DgpSpec, loss: LossKind, settings: &FitSettings) -> Result<ConvergenceRun> {
    let truth = simulate(dgp)?;
    let path = truth.path.as_ref().expect("simulate returns a path");
    let mf = assemble_matrix_form(path, dgp.p)?;
    let cfg = settings.objective(&mf, loss)?;
    let init = Init::Provided(initial_params(&mf, &Init::GaussianWarmStart, dgp.r)?);

    let mut mm_opts = SolverOptions::new(dgp.r, cfg);
    mm_opts.max_iter = settings.max_iter;
    mm_opts.rel_tol = settings.rel_tol;
    mm_opts.init = init.clone();
    let mm = fit(&mf, &mm_opts)?;

    let mut gd_opts = GdOptions::new(dgp.r, cfg);
    gd_opts.max_iter = settings.gd_max_iter;
    gd_opts.rel_tol = settings.rel_tol;
    gd_opts.init = init;
    let gd = fit_gd(&mf, &gd_opts)?;

    Ok(ConvergenceRun { xi: cfg.xi, mm, gd })
}

/// `mm_trace.csv`, `gd_trace.csv`, the aligned `convergence.csv`
/// (`iter,mm,gd`, blank once a solver has stopped) and `convergence.dat`.
pub fn write_convergence(run: &ConvergenceRun, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    write_trace_csv(&run.mm.obj_trace, fs::File::create(out_dir.join("mm_trace.csv"))?)?;
    write_trace_csv(&run.gd.obj_trace, fs::File::create(out_dir.join("gd_trace.csv"))?)?;

    let len = run.mm.obj_trace.len().max(run.gd.obj_trace.len());
    let cell = |t: &[f64], i: usize| t.get(i).map(|&v| fmt_f64(v)).unwrap_or_default();
    let mut w = csv::Writer::from_path(out_dir.join("convergence.csv"))?;
    w.write_record(["iter", "mm", "gd"])?;
    for i in 0..len {
        w.write_record([i.to_string(), cell(&run.mm.obj_trace, i), cell(&run.gd.obj_trace, i)])?;
    }
    w.flush()?;

    let mut dat = fs::File::create(out_dir.join("convergence.dat"))?;
    writeln!(dat, "# objective value per iteration; xi = {}", fmt_f64(run.xi))?;
    writeln!(dat, "# iter mm gd   (NaN once a solver has stopped)")?;
    for i in 0..len {
        let get = |t: &[f64]| t.get(i).map(|&v| fmt_f64(v)).unwrap_or_else(|| "NaN".into());
        writeln!(dat, "{i} {} {}", get(&run.mm.obj_trace), get(&run.gd.obj_trace))?;
    }
    Ok(())
}

/// Loss assumption used by the estimator in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BenchLoss {
    Cauchy,
    Gaussian,
    /// Student-t with the data-generating degrees of freedom.
    TrueStudentT,
}

impl BenchLoss {
    pub const ALL: [BenchLoss; 3] = [BenchLoss::Cauchy, BenchLoss::Gaussian, BenchLoss::TrueStudentT];

    pub fn loss_kind(self, df: f64) -> LossKind {
        match self {
            BenchLoss::Cauchy => LossKind::Cauchy,
            BenchLoss::Gaussian => LossKind::Gaussian,
            BenchLoss::TrueStudentT => LossKind::StudentT(df),
        }
    }
}

impl fmt::Display for BenchLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchLoss::Cauchy => "cauchy",
            BenchLoss::Gaussian => "gaussian",
            BenchLoss::TrueStudentT => "student",
        })
    }
}

impl FromStr for BenchLoss {
    type Err = VecmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cauchy" => Ok(BenchLoss::Cauchy),
            "gaussian" | "normal" => Ok(BenchLoss::Gaussian),
            "student" | "t" | "true-t" => Ok(BenchLoss::TrueStudentT),
            other => Err(VecmError::Parse(format!("unknown bench loss '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    /// Template; `innovation` and `seed` are overridden per cell.
    pub dgp: DgpSpec,
    pub df_grid: Vec<f64>,
    pub reps: usize,
    pub losses: Vec<BenchLoss>,
    pub seed_base: u64,
    pub settings: FitSettings,
    /// Record wall-clock seconds per fit (breaks byte-reproducibility of outputs).
    pub timing: bool,
}

impl BenchSpec {
    pub const DEFAULT_DF_GRID: [f64; 7] = [2.5, 3.0, 4.0, 5.0, 7.0, 10.0, 20.0];
    pub const DESK_REPS: usize = 20;
    pub const FULL_REPS: usize = 50;

    pub fn desk(dgp: DgpSpec) -> Self {
        Self {
            dgp,
            df_grid: Self::DEFAULT_DF_GRID.to_vec(),
            reps: Self::DESK_REPS,
            losses: BenchLoss::ALL.to_vec(),
            seed_base: 0,
            settings: FitSettings::default(),
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        if self.reps == 0 {
            return Err(VecmError::InvalidInput("reps must be >= 1".into()));
        }
        if self.df_grid.is_empty() {
            return Err(VecmError::InvalidInput("df grid is empty".into()));
        }
        if self.df_grid.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(VecmError::InvalidInput("df values must be positive and finite".into()));
        }
        if self.df_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(VecmError::InvalidInput("df grid must be strictly increasing".into()));
        }
        if self.losses.is_empty() {
            return Err(VecmError::InvalidInput("no losses selected".into()));
        }
        if self.dgp.r >= self.dgp.k {
            return Err(VecmError::InvalidInput("rank must be below K".into()));
        }
        Ok(())
    }

    pub fn seed(&self, rep: usize) -> u64 {
        self.seed_base.wrapping_add(rep as u64)
    }
}

/// One (df, rep, loss) fit. `nmse` is `None` when the replication failed.
#[derive(Debug, Clone, PartialEq)]
pub struct RepRecord {
    pub df: f64,
    pub rep: usize,
    pub loss: BenchLoss,
    pub nmse: Option<f64>,
    pub iters: usize,
    pub seconds: Option<f64>,
    pub error: Option<String>,
    /// Column norms of the estimate, for support diagnostics.
    pub column_norms: Vec<f64>,
    /// Indices of the nonzero columns of the true `Π`.
    pub support: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmseRow {
    pub df: f64,
    pub loss: BenchLoss,
    pub mean: f64,
    pub stderr: f64,
    /// Successful replications.
    pub reps: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmseTable {
    pub rows: Vec<NmseRow>,
}

impl NmseTable {
    pub fn get(&self, df: f64, loss: BenchLoss) -> Option<&NmseRow> {
        self.rows.iter().find(|r| r.df == df && r.loss == loss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub records: Vec<RepRecord>,
    pub table: NmseTable,
}

/// Mean and standard error (sample standard deviation over `√n`).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn run_cell(spec: &BenchSpec, df: f64, rep: usize) -> Vec<RepRecord> {
    let dgp = DgpSpec {
        innovation: Innovation::StudentT(df),
        seed: spec.seed(rep),
        ..spec.dgp.clone()
    };
    let failed = |loss, msg: String| RepRecord {
        df,
        rep,
        loss,
        nmse: None,
        iters: 0,
        seconds: None,
        error: Some(msg),
        column_norms: Vec::new(),
        support: Vec::new(),
    };
    let prepared = simulate(&dgp).and_then(|truth| {
        let mf = assemble_matrix_form(truth.path.as_ref().expect("path"), dgp.p)?;
        Ok((truth, mf))
    });
    let (truth, mf) = match prepared {
        Ok(v) => v,
        Err(e) => return spec.losses.iter().map(|&l| failed(l, e.to_string())).collect(),
    };

    spec.losses
        .iter()
        .map(|&loss| {
            let started = Instant::now();
            let outcome = spec
                .settings
                .objective(&mf, loss.loss_kind(df))
                .and_then(|cfg| {
                    let mut opts = SolverOptions::new(dgp.r, cfg);
                    opts.max_iter = spec.settings.max_iter;
                    opts.rel_tol = spec.settings.rel_tol;
                    match loss {
                        BenchLoss::Cauchy => fit(&mf, &opts),
                        _ => fit_with_loss(&mf, &opts),
                    }
                })
                .and_then(|rep_fit| Ok((nmse(&rep_fit.params.pi, &truth.params.pi)?, rep_fit)));
            match outcome {
                Ok((value, report)) => RepRecord {
                    df,
                    rep,
                    loss,
                    nmse: Some(value),
                    iters: report.iterations,
                    seconds: spec.timing.then(|| started.elapsed().as_secs_f64()),
                    error: None,
                    column_norms: report.params.pi.column_iter().map(|c| c.norm()).collect(),
                    support: truth.support.clone(),
                },
                Err(e) => failed(loss, e.to_string()),
            }
        })
        .collect()
}

/// Aggregate per-replication records into the NMSE table, in `(df, loss)` order.
pub fn aggregate(records: &[RepRecord], df_grid: &[f64], losses: &[BenchLoss]) -> NmseTable {
    let mut rows = Vec::new();
    for &df in df_grid {
        for &loss in losses {
            let cell: Vec<&RepRecord> = records.iter().filter(|r| r.df == df && r.loss == loss).collect();
            let ok: Vec<f64> = cell.iter().filter_map(|r| r.nmse).collect();
            let (mean, stderr) = mean_stderr(&ok);
            rows.push(NmseRow {
                df,
                loss,
                mean,
                stderr,
                reps: ok.len(),
                failures: cell.len() - ok.len(),
            });
        }
    }
    NmseTable { rows }
}

/// Paired differences `NMSE(b) − NMSE(a)` at `df` over replications where both succeeded.
pub fn paired_gap(records: &[RepRecord], df: f64, a: BenchLoss, b: BenchLoss) -> (f64, f64, usize) {
    let find = |rep: usize, loss: BenchLoss| {
        records
            .iter()
            .find(|r| r.df == df && r.rep == rep && r.loss == loss)
            .and_then(|r| r.nmse)
    };
    let reps: Vec<usize> = records.iter().filter(|r| r.df == df && r.loss == a).map(|r| r.rep).collect();
    let diffs: Vec<f64> = reps
        .into_iter()
        .filter_map(|rep| Some(find(rep, b)? - find(rep, a)?))
        .collect();
    let (mean, se) = mean_stderr(&diffs);
    (mean, se, diffs.len())
}

/// Run every `(df, rep)` cell (in parallel) and every loss on the cell's shared dataset.
pub fn run_nmse_sweep(spec: &BenchSpec) -> Result<SweepResult> {
    spec.validate()?;
    let cells: Vec<(f64, usize)> = spec
        .df_grid
        .iter()
        .flat_map(|&df| (0..spec.reps).map(move |rep| (df, rep)))
        .collect();
    let records: Vec<RepRecord> = cells
        .par_iter()
        .map(|&(df, rep)| run_cell(spec, df, rep))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let table = aggregate(&records, &spec.df_grid, &spec.losses);
    Ok(SweepResult { records, table })
}

pub fn write_records_csv<W: Write>(records: &[RepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["df", "rep", "loss", "nmse", "iters", "seconds"])?;
    for r in records {
        w.write_record([
            fmt_f64(r.df),
            r.rep.to_string(),
            r.loss.to_string(),
            r.nmse.map(fmt_f64).unwrap_or_else(|| "NaN".into()),
            r.iters.to_string(),
            r.seconds.map(fmt_f64).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table_csv<W: Write>(table: &NmseTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["df", "loss", "mean_nmse", "stderr_nmse", "reps", "failures"])?;
    for r in &table.rows {
        w.write_record([
            fmt_f64(r.df),
            r.loss.to_string(),
            fmt_f64(r.mean),
            fmt_f64(r.stderr),
            r.reps.to_string(),
            r.failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Gnuplot-style block: one line per df with `mean stderr` per loss.
pub fn write_table_dat<W: Write>(table: &NmseTable, losses: &[BenchLoss], xi_note: &str, mut out: W) -> Result<()> {
    writeln!(out, "# NMSE(Pi) versus Student-t degrees of freedom; xi = {xi_note}")?;
    let cols: Vec<String> = losses.iter().map(|l| format!("{l}_mean {l}_stderr")).collect();
    writeln!(out, "# df {}", cols.join(" "))?;
    let mut dfs: Vec<f64> = table.rows.iter().map(|r| r.df).collect();
    dfs.dedup();
    for df in dfs {
        let mut line = fmt_f64(df);
        for &loss in losses {
            match table.get(df, loss) {
                Some(r) => line.push_str(&format!(" {} {}", fmt_f64(r.mean), fmt_f64(r.stderr))),
                None => line.push_str(" NaN NaN"),
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// `records.csv`, `nmse_table.csv` and `nmse.dat` under `out_dir`.
pub fn write_sweep(result: &SweepResult, spec: &BenchSpec, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    write_records_csv(&result.records, fs::File::create(out_dir.join("records.csv"))?)?;
    write_table_csv(&result.table, fs::File::create(out_dir.join("nmse_table.csv"))?)?;
    let xi_note = match spec.settings.xi {
        Some(xi) => fmt_f64(xi),
        None => "0.1*sqrt(N)*MAD(dY) per dataset".into(),
    };
    write_table_dat(
        &result.table,
        &spec.losses,
        &xi_note,
        fs::File::create(out_dir.join("nmse.dat"))?,
    )
}

/// Flat key-value bench configuration (TOML syntax). Every key is optional.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub k: Option<usize>,
    pub p: Option<usize>,
    pub r: Option<usize>,
    pub n: Option<usize>,
    pub active: Option<usize>,
    pub df_grid: Option<Vec<f64>>,
    pub reps: Option<usize>,
    pub losses: Option<Vec<String>>,
    pub seed_base: Option<u64>,
    pub xi: Option<f64>,
    pub rat_scale: Option<f64>,
    pub eps: Option<f64>,
    pub max_iter: Option<usize>,
    pub rel_tol: Option<f64>,
    pub timing: Option<bool>,
}

impl BenchConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| VecmError::Parse(e.to_string()))
    }

    /// Desk-scale defaults (K=5, p=1, r=3, N=1000, 4 active columns) overridden by the config.
    pub fn into_spec(self) -> Result<BenchSpec> {
        let k = self.k.unwrap_or(5);
        let dgp = DgpSpec {
            k,
            p: self.p.unwrap_or(1),
            r: self.r.unwrap_or(3),
            n: self.n.unwrap_or(1000),
            active: self.active.unwrap_or(4.min(k)),
            innovation: Innovation::Gaussian,
            seed: 0,
        };
        let mut spec = BenchSpec::desk(dgp);
        if let Some(g) = self.df_grid {
            spec.df_grid = g;
        }
        if let Some(r) = self.reps {
            spec.reps = r;
        }
        if let Some(ls) = self.losses {
            spec.losses = ls.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        }
        spec.seed_base = self.seed_base.unwrap_or(0);
        spec.settings.xi = self.xi;
        if self.rat_scale.is_some() || self.eps.is_some() {
            let d = RatParams::default_for(k);
            spec.settings.rat = Some(RatParams::new(
                self.rat_scale.unwrap_or(d.scale),
                self.eps.unwrap_or(d.eps),
            )?);
        }
        if let Some(m) = self.max_iter {
            spec.settings.max_iter = m;
        }
        if let Some(t) = self.rel_tol {
            spec.settings.rel_tol = t;
        }
        spec.timing = self.timing.unwrap_or(false);
        spec.validate()?;
        Ok(spec)
    }
}
