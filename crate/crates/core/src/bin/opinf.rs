//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use opinf_core::dmd;
use opinf_core::error::{Error, Result};
use opinf_core::experiment::{self, ExperimentConfig, FomIntegrator, InitialCondition, LCurveRange, Method, ModelSource};
use opinf_core::io;
use opinf_core::linalg::{expand_quadratic_operator, Tolerance};
use opinf_core::model::QuadDaeModel;
use opinf_core::opinf::{self as oi, RegressorFlags};
use opinf_core::pod;
use opinf_core::simulate::{estimate_derivatives, TimeGrid};

#[derive(Parser)]
#[command(
    name = "opinf",
    version,
    about = "Operator inference, POD and DMD reduced models for quadratic flow DAEs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random stable demo model and write it to --out.
    Generate {
        #[command(flatten)]
        gen: GenArgs,
        /// Model manifest to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the full-order model and write a snapshot set to --out.
    Simulate {
        #[command(flatten)]
        src: SourceArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        sig: SignalArgs,
        /// Snapshot manifest to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute POD bases of a snapshot set.
    Pod {
        /// Snapshot manifest.
        #[arg(long)]
        snapshots: PathBuf,
        /// Basis order (repeatable).
        #[arg(long = "order", required = true)]
        orders: Vec<usize>,
        /// Model manifest; enables the constraint residual and the divergence-free correction.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Output directory for `basis_r<order>.oifs` and `singular_values.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Learn a reduced model from a snapshot set by operator inference.
    Infer {
        #[arg(long)]
        snapshots: PathBuf,
        #[arg(long)]
        order: usize,
        /// opinf (quadratic) or opinf_lin (linear).
        #[arg(long, default_value = "opinf")]
        method: String,
        #[command(flatten)]
        tol: TolArgs,
        /// Reduced-model manifest to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a DMD baseline on the projected snapshots.
    Dmd {
        #[arg(long)]
        snapshots: PathBuf,
        #[arg(long)]
        order: usize,
        /// dmd, dmdc or dmdquad.
        #[arg(long, default_value = "dmdc")]
        method: String,
        /// Relative singular-value threshold.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Output directory for the operator blobs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a full comparison experiment and write all artifacts.
    Compare {
        /// JSON experiment configuration; flags below are ignored when given.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        src: SourceArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        sig: SignalArgs,
        /// Reduced order (repeatable).
        #[arg(long = "order", default_values_t = [3])]
        orders: Vec<usize>,
        /// Method (repeatable): opinf, opinf_lin, pod, dmd, dmdc, dmdquad.
        #[arg(long = "method", default_values = ["opinf", "dmd", "dmdc", "dmdquad"])]
        methods: Vec<String>,
        #[command(flatten)]
        tol: TolArgs,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scan OpInf truncation thresholds and report the L-curve knee.
    Lcurve {
        #[arg(long)]
        snapshots: PathBuf,
        #[arg(long)]
        order: usize,
        #[arg(long, default_value = "opinf")]
        method: String,
        #[arg(long, default_value_t = 1e-11)]
        lcurve_min: f64,
        #[arg(long, default_value_t = 1e-6)]
        lcurve_max: f64,
        #[arg(long, default_value_t = 11)]
        lcurve_points: usize,
        /// CSV file to write.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate an external snapshot set, optionally against a model.
    Ingest {
        #[arg(long)]
        snapshots: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    nv: usize,
    #[arg(long = "np", default_value_t = 1)]
    np: usize,
    #[arg(long, default_value_t = 1)]
    m: usize,
    /// Add a constraint input map Bperp.
    #[arg(long)]
    inhomogeneous: bool,
}

#[derive(Args, Clone)]
struct SourceArgs {
    /// Model manifest; a generated model is used when absent.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    gen: GenArgs,
}

impl SourceArgs {
    fn source(&self) -> ModelSource {
        match &self.model {
            Some(p) => ModelSource::File(p.clone()),
            None => ModelSource::Generate {
                seed: self.gen.seed,
                nv: self.gen.nv,
                np: self.gen.np,
                m: self.gen.m,
                inhomogeneous: self.gen.inhomogeneous,
            },
        }
    }
}

#[derive(Args, Clone)]
struct GridArgs {
    #[arg(long, default_value_t = 0.0)]
    t0: f64,
    #[arg(long, default_value_t = 10.0)]
    tend: f64,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, value_enum, default_value_t = Integrator::Imex)]
    integrator: Integrator,
    /// Start from the steady Stokes state instead of zero.
    #[arg(long)]
    stokes: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Integrator {
    Imex,
    Rk4,
}

#[derive(Args, Clone)]
struct SignalArgs {
    /// Input signals, one per channel (repeatable or comma separated): zero, sin-decay, cos-decay, const:<x>.
    #[arg(long = "inputs", value_delimiter = ',', default_values = ["sin-decay"])]
    inputs: Vec<String>,
    /// Constraint input signal for models with Bperp.
    #[arg(long)]
    uperp: Option<String>,
}

#[derive(Args, Clone)]
struct TolArgs {
    /// Absolute truncation threshold; the L-curve knee is used when absent.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 1e-11)]
    lcurve_min: f64,
    #[arg(long, default_value_t = 1e-6)]
    lcurve_max: f64,
    #[arg(long, default_value_t = 11)]
    lcurve_points: usize,
}

impl TolArgs {
    fn range(&self) -> LCurveRange {
        LCurveRange {
            min: self.lcurve_min,
            max: self.lcurve_max,
            points: self.lcurve_points,
        }
    }
}

fn config_from_flags(src: &SourceArgs, grid: &GridArgs, sig: &SignalArgs) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::demo();
    cfg.model = src.source();
    cfg.grid = TimeGrid {
        t0: grid.t0,
        t_end: grid.tend,
        steps: grid.steps,
    };
    cfg.inputs = sig.inputs.clone();
    cfg.uperp = sig.uperp.clone();
    cfg.fom_integrator = match grid.integrator {
        Integrator::Imex => FomIntegrator::Imex,
        Integrator::Rk4 => FomIntegrator::Rk4,
    };
    cfg.initial = if grid.stokes {
        InitialCondition::Stokes
    } else {
        InitialCondition::Zero
    };
    cfg.tol = None;
    cfg
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn load_snapshots(path: &Path) -> Result<opinf_core::SnapshotSet> {
    io::ingest_snapshots(path, None).map(|(s, _)| s)
}

fn opinf_flags(method: &str, set: &opinf_core::SnapshotSet) -> Result<RegressorFlags> {
    let mut flags = match Method::parse(method)? {
        Method::Opinf => RegressorFlags::quadratic(),
        Method::OpinfLin => RegressorFlags::linear(),
        m => return Err(Error::InvalidArgument(format!("{} is not an operator-inference method", m.name()))),
    };
    if set.u.is_none() {
        flags.input = false;
    }
    if set.uperp.is_some() {
        flags = flags.with_constant();
    }
    Ok(flags)
}

struct Projected {
    xhat: opinf_core::DenseMatrix,
    xdot: opinf_core::DenseMatrix,
}

fn project(set: &opinf_core::SnapshotSet, order: usize) -> Result<Projected> {
    let dt = set
        .uniform_step()
        .ok_or_else(|| Error::InvalidArgument("derivative estimation needs a uniform time grid".into()))?;
    let basis = pod::pod_basis(&set.v, order, None)?;
    let xhat = pod::project_snapshots(&basis, &set.v)?;
    let xdot = estimate_derivatives(&xhat, dt)?;
    Ok(Projected { xhat, xdot })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { gen, out } => {
            let src = SourceArgs { model: None, gen };
            let model = src.source().load()?;
            let report = model.validate()?;
            io::save_model(&out, &model)?;
            print_json(&report);
        }
        Command::Simulate { src, grid, sig, out } => {
            let cfg = config_from_flags(&src, &grid, &sig);
            cfg.validate()?;
            let model = cfg.model.load()?;
            let (set, warnings) = experiment::simulate_fom(&cfg, &model)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            io::save_snapshots(&out, &set)?;
            println!("wrote {} snapshots of dimension {} to {}", set.len(), set.v.nrows(), out.display());
        }
        Command::Pod {
            snapshots,
            orders,
            model,
            out,
        } => {
            let set = load_snapshots(&snapshots)?;
            let model: Option<QuadDaeModel> = model.map(|p| io::load_model(&p)).transpose()?;
            let proj = model.as_ref().map(opinf_core::transform::LerayProjector::new).transpose()?;
            if let Some(d) = &out {
                std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            }
            let mut rows = Vec::new();
            for &r in &orders {
                let basis = pod::pod_basis(&set.v, r, None)?;
                let mut row = serde_json::json!({ "order": r, "numerical_rank": basis.numerical_rank() });
                if let (Some(m), Some(p)) = (&model, &proj) {
                    row["constraint_residual"] = pod::constraint_residual(&m.a12, &basis.vectors)?.into();
                    let corrected = pod::divfree_correct(&basis, p)?;
                    row["corrected_order"] = corrected.order().into();
                    row["corrected_constraint_residual"] = pod::constraint_residual(&m.a12, &corrected.vectors)?.into();
                    if let Some(d) = &out {
                        io::write_matrix(&d.join(format!("basis_divfree_r{r}.oifs")), &corrected.vectors)?;
                    }
                }
                if let Some(d) = &out {
                    io::write_matrix(&d.join(format!("basis_r{r}.oifs")), &basis.vectors)?;
                    let sv = opinf_core::DenseMatrix::from_column_slice(basis.singular_values.len(), 1, &basis.singular_values);
                    io::write_matrix(&d.join("singular_values.csv"), &sv)?;
                }
                rows.push(row);
            }
            print_json(&rows);
        }
        Command::Infer {
            snapshots,
            order,
            method,
            tol,
            out,
        } => {
            let set = load_snapshots(&snapshots)?;
            let flags = opinf_flags(&method, &set)?;
            let pr = project(&set, order)?;
            let tolerance = match tol.tol {
                Some(t) => Tolerance::Absolute(t),
                None => {
                    let d = oi::assemble_regressors(&pr.xhat, set.u.as_ref(), None, flags)?;
                    let r = tol.range();
                    let pts = oi::l_curve_scan(&d.matrix, &pr.xdot, &oi::log_spaced(r.min, r.max, r.points)?)?;
                    Tolerance::Absolute(oi::pick_tolerance(&pts)?)
                }
            };
            let (rom, info) = oi::infer_velocity_model(&pr.xhat, &pr.xdot, set.u.as_ref(), None, flags, tolerance)?;
            if let Some(o) = &out {
                io::save_rom(o, &rom)?;
            }
            print_json(&info);
        }
        Command::Dmd {
            snapshots,
            order,
            method,
            tol,
            out,
        } => {
            let set = load_snapshots(&snapshots)?;
            let pr = project(&set, order)?;
            let tol = Tolerance::Relative(tol);
            let u = set.u.clone().unwrap_or_else(|| opinf_core::DenseMatrix::zeros(0, set.len()));
            let (m, info) = match Method::parse(&method)? {
                Method::Dmd => dmd::dmd(&pr.xhat, tol)?,
                Method::Dmdc => dmd::dmdc(&pr.xhat, &u, tol)?,
                Method::Dmdquad => dmd::dmdquad(&pr.xhat, &u, tol)?,
                m => return Err(Error::InvalidArgument(format!("{} is not a DMD method", m.name()))),
            };
            if let Some(d) = &out {
                std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
                io::write_matrix(&d.join("a.oifs"), &m.a)?;
                if let Some(b) = &m.b {
                    io::write_matrix(&d.join("b.oifs"), b)?;
                }
                if let Some(h) = &m.h {
                    io::write_matrix(&d.join("h.oifs"), &expand_quadratic_operator(h)?)?;
                }
            }
            print_json(&info);
        }
        Command::Compare {
            config,
            src,
            grid,
            sig,
            orders,
            methods,
            tol,
            out,
        } => {
            let cfg = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                    let mut cfg = ExperimentConfig::from_json(&text)?;
                    if out.is_some() {
                        cfg.output_dir = out;
                    }
                    cfg
                }
                None => {
                    let mut cfg = config_from_flags(&src, &grid, &sig);
                    cfg.orders = orders;
                    cfg.methods = methods.iter().map(|m| Method::parse(m)).collect::<Result<_>>()?;
                    cfg.tol = tol.tol.map(Tolerance::Absolute);
                    cfg.lcurve = tol.range();
                    cfg.output_dir = out;
                    cfg
                }
            };
            let summary = experiment::run_experiment(&cfg)?;
            println!("{:<10} {:>5} {:>14} {:>14}", "method", "order", "rel_l2_error", "constraint");
            for r in &summary.results {
                let fmt = |x: Option<f64>| x.map_or("-".to_string(), |x| format!("{x:.6e}"));
                println!(
                    "{:<10} {:>5} {:>14} {:>14}{}",
                    r.method.name(),
                    r.order,
                    fmt(r.rel_l2_error),
                    fmt(r.trajectory_constraint_residual),
                    r.message.as_ref().map_or(String::new(), |m| format!("  ({m})"))
                );
            }
        }
        Command::Lcurve {
            snapshots,
            order,
            method,
            lcurve_min,
            lcurve_max,
            lcurve_points,
            out,
        } => {
            let set = load_snapshots(&snapshots)?;
            let flags = opinf_flags(&method, &set)?;
            let pr = project(&set, order)?;
            let d = oi::assemble_regressors(&pr.xhat, set.u.as_ref(), None, flags)?;
            let pts = oi::l_curve_scan(&d.matrix, &pr.xdot, &oi::log_spaced(lcurve_min, lcurve_max, lcurve_points)?)?;
            let knee = oi::pick_tolerance(&pts)?;
            let mut csv = String::from("tol,residual_norm,solution_norm,rank\n");
            for p in &pts {
                csv.push_str(&format!("{:e},{:e},{:e},{}\n", p.tol, p.residual_norm, p.solution_norm, p.rank));
            }
            match &out {
                Some(o) => std::fs::write(o, &csv).map_err(|e| Error::io(o, e))?,
                None => print!("{csv}"),
            }
            println!("knee tol = {knee:e}");
        }
        Command::Ingest { snapshots, model } => {
            let model = model.map(|p| io::load_model(&p)).transpose()?;
            let (_, report) = io::ingest_snapshots(&snapshots, model.as_ref())?;
            print_json(&report);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
