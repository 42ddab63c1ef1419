use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use robust_vecm::baselines::{fit_gd, GdOptions};
use robust_vecm::experiments::{
    default_xi, nmse, run_convergence, run_nmse_sweep, write_convergence, write_sweep, BenchConfig,
    FitSettings,
};
use robust_vecm::io::{
    fit_params_from_document, fit_report_document, fmt_f64, ground_truth_document,
    ground_truth_from_document, load_path, save_path, write_trace_csv, KvDocument,
};
use robust_vecm::mm::{fit, Init};
use robust_vecm::{
    assemble_matrix_form, simulate, DgpSpec, Innovation, LossKind, ObjectiveConfig, RatParams,
    Result, SolverOptions,
};

#[derive(Parser)]
#[command(name = "rsvecm", version, about = "Robust sparse low-rank VECM estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a cointegrated series and its ground truth.
    Simulate {
        #[command(flatten)]
        dgp: DgpArgs,
        /// Series CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth file to write.
        #[arg(long)]
        truth: PathBuf,
    },
    /// Fit a VECM to a series CSV.
    Fit(FitArgs),
    /// NMSE of a fit report against a ground-truth file.
    Score {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// NMSE sweep over Student-t degrees of freedom.
    Bench {
        /// Flat key-value (TOML) config; omitted keys take desk-scale defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Record per-fit wall-clock seconds.
        #[arg(long)]
        timing: bool,
    },
    /// MM-versus-GD objective traces on one simulated instance.
    Convergence {
        #[command(flatten)]
        dgp: DgpArgs,
        #[arg(long, default_value = "cauchy")]
        loss: LossKind,
        #[arg(long)]
        xi: Option<f64>,
        #[arg(long, default_value_t = 2000)]
        max_iter: usize,
        #[arg(long, default_value_t = 5000)]
        gd_max_iter: usize,
        #[arg(long, default_value_t = 1e-8)]
        rel_tol: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct DgpArgs {
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Lag order.
    #[arg(long, default_value_t = 1)]
    p: usize,
    /// Cointegration rank.
    #[arg(long, default_value_t = 3)]
    r: usize,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Number of nonzero columns of Pi (defaults to K).
    #[arg(long)]
    active: Option<usize>,
    /// gaussian, cauchy or student:<df>.
    #[arg(long, default_value = "student:3")]
    innovation: Innovation,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl DgpArgs {
    fn spec(&self) -> DgpSpec {
        DgpSpec {
            k: self.k,
            p: self.p,
            r: self.r,
            n: self.n,
            active: self.active.unwrap_or(self.k),
            innovation: self.innovation,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Mm,
    Gd,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Warm,
    Zero,
    Random,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1)]
    p: usize,
    #[arg(long)]
    r: usize,
    #[arg(long, value_enum, default_value = "mm")]
    solver: Solver,
    /// cauchy, gaussian or student:<df>.
    #[arg(long, default_value = "cauchy")]
    loss: LossKind,
    /// Penalty weight; defaults to 0.1·sqrt(N)·MAD(dY).
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    rat_scale: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 1e-8)]
    rel_tol: f64,
    /// Defaults to 2000 for MM and 5000 for GD.
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, value_enum, default_value = "warm")]
    init: InitArg,
    /// Seed for `--init random`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Include wall-clock time in the report.
    #[arg(long)]
    timing: bool,
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let path = load_path(&a.input)?;
    let mf = assemble_matrix_form(&path, a.p)?;
    let d = RatParams::default_for(mf.k());
    let rat = RatParams::new(a.rat_scale.unwrap_or(d.scale), a.eps.unwrap_or(d.eps))?;
    let xi = a.xi.unwrap_or_else(|| default_xi(&mf));
    let cfg = ObjectiveConfig::new(rat, xi, a.loss)?;
    let init = match a.init {
        InitArg::Warm => Init::GaussianWarmStart,
        InitArg::Zero => Init::ZeroPi,
        InitArg::Random => Init::Random(a.seed),
    };
    let (report, solver) = match a.solver {
        Solver::Mm => {
            let mut o = SolverOptions::new(a.r, cfg);
            o.rel_tol = a.rel_tol;
            o.max_iter = a.max_iter.unwrap_or(o.max_iter);
            o.init = init;
            (fit(&mf, &o)?, "mm")
        }
        Solver::Gd => {
            let mut o = GdOptions::new(a.r, cfg);
            o.rel_tol = a.rel_tol;
            o.max_iter = a.max_iter.unwrap_or(o.max_iter);
            o.init = init;
            (fit_gd(&mf, &o)?, "gd")
        }
    };
    let meta = [
        ("solver", solver.to_string()),
        ("loss", a.loss.to_string()),
        ("n", mf.n().to_string()),
        ("xi", fmt_f64(xi)),
        ("xi_source", if a.xi.is_some() { "flag" } else { "0.1*sqrt(N)*MAD(dY)" }.to_string()),
        ("rat_scale", fmt_f64(rat.scale)),
        ("eps", fmt_f64(rat.eps)),
        ("rel_tol", fmt_f64(a.rel_tol)),
    ];
    if let Some(file) = &a.report {
        fit_report_document(&report, &meta, a.timing).save(file)?;
    }
    if let Some(file) = &a.trace {
        write_trace_csv(&report.obj_trace, fs::File::create(file)?)?;
    }
    println!(
        "{solver}: {} after {} iterations, objective {}",
        report.terminated,
        report.iterations,
        fmt_f64(report.final_objective())
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { dgp, out, truth } => {
            let spec = dgp.spec();
            let gt = simulate::simulate(&spec)?;
            save_path(gt.path.as_ref().expect("simulate returns a path"), &out)?;
            ground_truth_document(&gt, &spec).save(&truth)?;
            println!("wrote {} observations of K = {} to {}", spec.n, spec.k, out.display());
        }
        Command::Fit(a) => cmd_fit(&a)?,
        Command::Score { truth, report } => {
            let (truth, _) = ground_truth_from_document(&KvDocument::load(&truth)?)?;
            let est = fit_params_from_document(&KvDocument::load(&report)?)?;
            println!("nmse = {}", fmt_f64(nmse(&est.pi, &truth.pi)?));
        }
        Command::Bench {
            config,
            out_dir,
            timing,
        } => {
            let cfg = match config {
                Some(file) => BenchConfig::parse(&fs::read_to_string(file)?)?,
                None => BenchConfig::default(),
            };
            let mut spec = cfg.into_spec()?;
            spec.timing |= timing;
            let result = run_nmse_sweep(&spec)?;
            write_sweep(&result, &spec, &out_dir)?;
            for row in &result.table.rows {
                println!(
                    "df={} loss={} mean_nmse={} stderr={} reps={} failures={}",
                    fmt_f64(row.df),
                    row.loss,
                    fmt_f64(row.mean),
                    fmt_f64(row.stderr),
                    row.reps,
                    row.failures
                );
            }
        }
        Command::Convergence {
            dgp,
            loss,
            xi,
            max_iter,
            gd_max_iter,
            rel_tol,
            out_dir,
        } => {
            let settings = FitSettings {
                xi,
                rat: None,
                max_iter,
                gd_max_iter,
                rel_tol,
            };
            let run = run_convergence(&dgp.spec(), loss, &settings)?;
            write_convergence(&run, &out_dir)?;
            let (mm_it, gd_it) = run.iterations_to_mm_final(1e-3);
            let show = |v: Option<usize>| v.map_or("never".to_string(), |i| i.to_string());
            println!(
                "mm: {} iterations, final {}; gd: {} iterations, final {}",
                run.mm.iterations,
                fmt_f64(run.mm.final_objective()),
                run.gd.iterations,
                fmt_f64(run.gd.final_objective())
            );
            println!(
                "iterations to reach mm final + 1e-3: mm {}, gd {}",
                show(mm_it),
                show(gd_it)
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
