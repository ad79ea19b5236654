//! Experiment orchestration: simulate a full-order model, reduce it with every
//! requested method at every requested order, and write the results.
//!
//! Output directory layout:
//!
//! | file | content |
//! |------|---------|
//! | `summary.json` | configuration echo and per method × order metrics (byte-deterministic) |
//! | `timings.json` | wall-clock times, kept apart so the summary stays deterministic |
//! | `singular_values.csv` | `index,sigma` of the velocity snapshot matrix |
//! | `constraint_residual.csv` | basis and trajectory constraint residuals per run |
//! | `lcurve.csv` | OpInf L-curve scan per order |
//! | `traj_fom.csv`, `traj_<method>_r<order>.csv` | `t` followed by the velocity components |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dmd::{self, DiscreteModel};
use crate::error::{Error, Result};
use crate::io;
use crate::linalg::{DenseMatrix, Tolerance, Vector};
use crate::model::{random_demo, random_demo_inhomogeneous, QuadDaeModel, ReducedQuadModel, SnapshotSet};
use crate::opinf::{self, LCurvePoint, RegressorFlags};
use crate::pod::{self, PodBasis};
use crate::simulate::{estimate_derivatives, imex_euler_dae, integrate_fom_ode, integrate_ode, stokes_steady, Inputs, Signal, TimeGrid};
use crate::transform::LerayProjector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Opinf,
    OpinfLin,
    Pod,
    Dmd,
    Dmdc,
    Dmdquad,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Opinf,
        Method::OpinfLin,
        Method::Pod,
        Method::Dmd,
        Method::Dmdc,
        Method::Dmdquad,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Opinf => "opinf",
            Method::OpinfLin => "opinf_lin",
            Method::Pod => "pod",
            Method::Dmd => "dmd",
            Method::Dmdc => "dmdc",
            Method::Dmdquad => "dmdquad",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}' (opinf, opinf_lin, pod, dmd, dmdc, dmdquad)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    Generate {
        seed: u64,
        nv: usize,
        np: usize,
        m: usize,
        #[serde(default)]
        inhomogeneous: bool,
    },
    File(PathBuf),
}

impl ModelSource {
    pub fn load(&self) -> Result<QuadDaeModel> {
        match self {
            ModelSource::Generate {
                seed,
                nv,
                np,
                m,
                inhomogeneous: false,
            } => random_demo(*seed, *nv, *np, *m),
            ModelSource::Generate {
                seed,
                nv,
                np,
                m,
                inhomogeneous: true,
            } => random_demo_inhomogeneous(*seed, *nv, *np, *m),
            ModelSource::File(p) => io::load_model(p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FomIntegrator {
    /// Semi-implicit Euler on the DAE.
    #[default]
    Imex,
    /// RK4 on the velocity ODE.
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    #[default]
    Zero,
    /// Steady Stokes solution for the inputs at `t0`.
    Stokes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LCurveRange {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for LCurveRange {
    fn default() -> Self {
        LCurveRange {
            min: 1e-11,
            max: 1e-6,
            points: 11,
        }
    }
}

fn default_signals() -> Vec<String> {
    vec!["sin-decay".into()]
}

fn default_methods() -> Vec<Method> {
    vec![Method::Opinf, Method::Dmd, Method::Dmdc, Method::Dmdquad]
}

/// Experiment description. Fields other than `model`, `grid` and `orders` have defaults:
/// `inputs = ["sin-decay"]` (one per input channel), no constraint input,
/// `methods = [opinf, dmd, dmdc, dmdquad]`, `tol = null` (L-curve knee),
/// `lcurve = {min: 1e-11, max: 1e-6, points: 11}`, `dmd_tol = relative 1e-10`,
/// `fom_integrator = imex`, `initial = zero`, `output_dir = null` (no files).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    pub grid: TimeGrid,
    #[serde(default = "default_signals")]
    pub inputs: Vec<String>,
    #[serde(default)]
    pub uperp: Option<String>,
    pub orders: Vec<usize>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// OpInf truncation threshold; `None` picks the L-curve knee per order.
    #[serde(default)]
    pub tol: Option<Tolerance>,
    #[serde(default)]
    pub lcurve: LCurveRange,
    #[serde(default = "default_dmd_tol")]
    pub dmd_tol: Tolerance,
    #[serde(default)]
    pub fom_integrator: FomIntegrator,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_dmd_tol() -> Tolerance {
    dmd::DEFAULT_TOL
}

impl ExperimentConfig {
    /// The low-order demo: seed 0, `n_v = 4`, `n_p = 1`, one `sin-decay` input,
    /// zero initial condition, absolute OpInf threshold `1e-4`.
    pub fn demo() -> Self {
        ExperimentConfig {
            model: ModelSource::Generate {
                seed: 0,
                nv: 4,
                np: 1,
                m: 1,
                inhomogeneous: false,
            },
            grid: TimeGrid {
                t0: 0.0,
                t_end: 10.0,
                steps: 1000,
            },
            inputs: default_signals(),
            uperp: None,
            orders: vec![3],
            methods: default_methods(),
            tol: Some(Tolerance::Absolute(1e-4)),
            lcurve: LCurveRange::default(),
            dmd_tol: dmd::DEFAULT_TOL,
            fom_integrator: FomIntegrator::Imex,
            initial: InitialCondition::Zero,
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
            offset: text
                .split_inclusive('\n')
                .take(e.line().saturating_sub(1))
                .map(str::len)
                .sum::<usize>() as u64
                + e.column().saturating_sub(1) as u64,
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.check()?;
        if self.grid.steps < 4 {
            return Err(Error::InvalidArgument(
                "the grid needs at least 4 steps for derivative estimation".into(),
            ));
        }
        if self.orders.is_empty() || self.orders.contains(&0) {
            return Err(Error::InvalidArgument(
                "orders must be a non-empty list of positive integers".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("methods must not be empty".into()));
        }
        let positive = |t: Tolerance| match t {
            Tolerance::Absolute(v) | Tolerance::Relative(v) => v >= 0.0 && v.is_finite(),
        };
        if self.tol.is_some_and(|t| !positive(t)) || !positive(self.dmd_tol) {
            return Err(Error::InvalidArgument("tolerances must be finite and non-negative".into()));
        }
        let l = self.lcurve;
        if !(l.min > 0.0 && l.max >= l.min && l.max.is_finite()) || l.points < 3 {
            return Err(Error::InvalidArgument(
                "l-curve range needs 0 < min <= max and at least 3 points".into(),
            ));
        }
        self.signals()?;
        Ok(())
    }

    pub fn signals(&self) -> Result<Inputs> {
        let u = self.inputs.iter().map(|s| Signal::by_name(s)).collect::<Result<Vec<_>>>()?;
        let mut inputs = Inputs::new(u);
        if let Some(s) = &self.uperp {
            inputs = inputs.with_uperp(Signal::by_name(s)?);
        }
        Ok(inputs)
    }
}

/// `sqrt(Σ w_k ‖v_k − v̂_k‖² Δt) / sqrt(Σ w_k ‖v_k‖² Δt)` with trapezoidal weights
/// (`w = 1/2` at both ends, `1` inside).
pub fn error_l2(reference: &DenseMatrix, candidate: &DenseMatrix, dt: f64) -> Result<f64> {
    if reference.shape() != candidate.shape() {
        return Err(Error::dim(
            "error_l2 trajectories",
            format!("{}x{}", reference.nrows(), reference.ncols()),
            format!("{}x{}", candidate.nrows(), candidate.ncols()),
        ));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let n = reference.ncols();
    let weight = |k: usize| if n > 1 && (k == 0 || k == n - 1) { 0.5 } else { 1.0 };
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..n {
        let w = weight(k) * dt;
        num += w * (reference.column(k) - candidate.column(k)).norm_squared();
        den += w * reference.column(k).norm_squared();
    }
    if den == 0.0 {
        return Err(Error::InvalidArgument("reference trajectory has zero norm".into()));
    }
    let e = (num / den).sqrt();
    if !e.is_finite() {
        return Err(Error::NonFinite("error_l2"));
    }
    Ok(e)
}

#[derive(Debug, Clone, Serialize)]
pub struct FomInfo {
    pub nv: usize,
    pub np: usize,
    pub m: usize,
    pub homogeneous: bool,
    pub columns: usize,
    pub dt: f64,
    pub snapshot_rank: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodResult {
    pub method: Method,
    pub order: usize,
    /// Order actually used; smaller than `order` when a divergence-free
    /// correction drops directions.
    pub effective_order: Option<usize>,
    pub ok: bool,
    pub message: Option<String>,
    pub rel_l2_error: Option<f64>,
    pub pressure_rel_l2_error: Option<f64>,
    /// `‖A12ᵀV‖_F / ‖V‖_F` of the velocity basis.
    pub basis_constraint_residual: Option<f64>,
    /// Largest `‖A12ᵀ v̂_k + Bperp u⊥_k‖ / ‖v_k‖` along the lifted trajectory.
    pub trajectory_constraint_residual: Option<f64>,
    pub tol: Option<f64>,
    pub rank: Option<usize>,
    pub trajectory_file: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultSummary {
    pub config: ExperimentConfig,
    pub fom: Option<FomInfo>,
    pub results: Vec<MethodResult>,
    /// Set when a pipeline stage failed before all runs finished.
    pub error: Option<String>,
}

impl ResultSummary {
    pub fn get(&self, method: Method, order: usize) -> Option<&MethodResult> {
        self.results.iter().find(|r| r.method == method && r.order == order)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

/// Output of a single method × order run.
struct RunOutput {
    result: MethodResult,
    trajectory: Option<DenseMatrix>,
    lcurve: Vec<LCurvePoint>,
    seconds: f64,
}

/// Shared data for all runs.
struct Stage<'a> {
    cfg: &'a ExperimentConfig,
    model: &'a QuadDaeModel,
    proj: &'a LerayProjector,
    inputs: &'a Inputs,
    snaps: &'a SnapshotSet,
    /// Velocity snapshots with the constraint-input offset removed.
    vtop: DenseMatrix,
    dt: f64,
}

impl Stage<'_> {
    fn u_data(&self) -> DenseMatrix {
        self.snaps.u.clone().unwrap_or_else(|| DenseMatrix::zeros(0, self.snaps.len()))
    }

    fn trajectory_residual(&self, v: &DenseMatrix) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..v.ncols() {
            let up = self.inputs.uperp_at(self.snaps.times[k]);
            let scale = self.snaps.v.column(k).norm().max(f64::MIN_POSITIVE);
            worst = worst.max(self.model.constraint_residual(&v.column(k).into_owned(), up) / scale);
        }
        worst
    }

    fn rollout_rom(&self, rom: &ReducedQuadModel, x0: &Vector) -> Result<DenseMatrix> {
        integrate_ode(
            |t, x| rom.rhs(x, &self.inputs.u_at(t), self.inputs.uperp_at(t), self.inputs.uperp_dot_at(t)),
            x0,
            &self.cfg.grid,
        )
    }

    fn run(&self, method: Method, order: usize) -> RunOutput {
        let start = Instant::now();
        let mut result = MethodResult {
            method,
            order,
            effective_order: None,
            ok: false,
            message: None,
            rel_l2_error: None,
            pressure_rel_l2_error: None,
            basis_constraint_residual: None,
            trajectory_constraint_residual: None,
            tol: None,
            rank: None,
            trajectory_file: None,
        };
        let mut lcurve = Vec::new();
        let outcome = self.run_inner(method, order, &mut result, &mut lcurve);
        let trajectory = match outcome {
            Ok(v) => {
                result.ok = true;
                Some(v)
            }
            Err(e) => {
                result.message = Some(e.to_string());
                None
            }
        };
        RunOutput {
            result,
            trajectory,
            lcurve,
            seconds: start.elapsed().as_secs_f64(),
        }
    }

    fn run_inner(&self, method: Method, order: usize, res: &mut MethodResult, lcurve: &mut Vec<LCurvePoint>) -> Result<DenseMatrix> {
        let v = &self.snaps.v;
        let raw_basis = || pod::pod_basis(v, order, None).map_err(|e| e.in_stage("pod basis"));
        let times = &self.snaps.times;
        let u = self.u_data();
        let lifted = match method {
            Method::Opinf | Method::OpinfLin => {
                let basis = raw_basis()?;
                res.basis_constraint_residual = pod::constraint_residual(&self.model.a12, &basis.vectors).ok();
                let xhat = pod::project_snapshots(&basis, v)?;
                let xdot = estimate_derivatives(&xhat, self.dt).map_err(|e| e.in_stage("derivatives"))?;
                let mut flags = if method == Method::Opinf {
                    RegressorFlags::quadratic()
                } else {
                    RegressorFlags::linear()
                };
                let udot = self.snaps.uperp.as_ref().map(|_| self.inputs.sample_uperp_dot(times));
                if self.snaps.uperp.is_some() {
                    flags = flags.with_constant().with_input_derivative();
                }
                let tol = match self.cfg.tol {
                    Some(t) => t,
                    None => {
                        let d = opinf::assemble_regressors(&xhat, Some(&u), udot.as_ref(), flags)?;
                        let tols = opinf::log_spaced(self.cfg.lcurve.min, self.cfg.lcurve.max, self.cfg.lcurve.points)?;
                        *lcurve = opinf::l_curve_scan(&d.matrix, &xdot, &tols).map_err(|e| e.in_stage("l-curve"))?;
                        Tolerance::Absolute(opinf::pick_tolerance(lcurve)?)
                    }
                };
                let (rom, info) = opinf::infer_velocity_model(&xhat, &xdot, Some(&u), udot.as_ref(), flags, tol)
                    .map_err(|e| e.in_stage("velocity inference"))?;
                res.tol = Some(info.tol_used);
                res.rank = Some(info.rank);
                res.effective_order = Some(order);
                let xr = self
                    .rollout_rom(&rom, &xhat.column(0).into_owned())
                    .map_err(|e| e.in_stage("rom simulation"))?;
                if let Some(p) = &self.snaps.p {
                    if method == Method::Opinf {
                        res.pressure_rel_l2_error = self.pressure_error(p, &xhat, &xr, &u, udot.as_ref(), flags, tol);
                    }
                }
                &basis.vectors * xr
            }
            Method::Pod => {
                let (rom, b, offset) = self.galerkin(order)?;
                res.basis_constraint_residual = pod::constraint_residual(&self.model.a12, &b.vectors).ok();
                res.effective_order = Some(b.order());
                let v0 = self.vtop.column(0).into_owned();
                let xr = self
                    .rollout_rom(&rom, &(b.vectors.transpose() * v0))
                    .map_err(|e| e.in_stage("rom simulation"))?;
                let mut out = &b.vectors * xr;
                if let Some(sp) = offset {
                    for (k, &t) in times.iter().enumerate() {
                        let mut col = out.column_mut(k);
                        col += &sp * self.inputs.uperp_at(t);
                    }
                }
                out
            }
            Method::Dmd | Method::Dmdc | Method::Dmdquad => {
                let basis = raw_basis()?;
                res.basis_constraint_residual = pod::constraint_residual(&self.model.a12, &basis.vectors).ok();
                res.effective_order = Some(order);
                let xhat = pod::project_snapshots(&basis, v)?;
                let tol = self.cfg.dmd_tol;
                let (dm, info): (DiscreteModel, _) = match method {
                    Method::Dmd => dmd::dmd(&xhat, tol),
                    Method::Dmdc => dmd::dmdc(&xhat, &u, tol),
                    _ => dmd::dmdquad(&xhat, &u, tol),
                }
                .map_err(|e| e.in_stage("dmd fit"))?;
                res.tol = Some(info.tol_used);
                res.rank = Some(info.rank);
                let steps = xhat.ncols() - 1;
                let xr = dmd::rollout(&dm, &xhat.column(0).into_owned(), Some(&u), steps).map_err(|e| e.in_stage("dmd rollout"))?;
                &basis.vectors * xr
            }
        };
        let err = error_l2(v, &lifted, self.dt)?;
        res.rel_l2_error = Some(err);
        res.trajectory_constraint_residual = Some(self.trajectory_residual(&lifted));
        Ok(lifted)
    }

    #[allow(clippy::too_many_arguments)]
    fn pressure_error(
        &self,
        p: &DenseMatrix,
        xhat: &DenseMatrix,
        xr: &DenseMatrix,
        u: &DenseMatrix,
        udot: Option<&DenseMatrix>,
        flags: RegressorFlags,
        tol: Tolerance,
    ) -> Option<f64> {
        let (map, _) = opinf::infer_pressure_map(p, xhat, Some(u), udot, flags, tol).ok()?;
        let pr = map.predict_trajectory(xr, Some(u), udot);
        error_l2(p, &pr, self.dt).ok()
    }

    /// Intrusive reduction on the divergence-free corrected POD basis of the
    /// offset-free snapshots.
    fn galerkin(&self, order: usize) -> Result<(ReducedQuadModel, PodBasis, Option<Vector>)> {
        let raw = pod::pod_basis(&self.vtop, order, None).map_err(|e| e.in_stage("pod basis"))?;
        let basis = pod::divfree_correct(&raw, self.proj).map_err(|e| e.in_stage("divergence-free correction"))?;
        if self.model.is_homogeneous() {
            let rom = pod::galerkin_reduce(self.model, &basis, None)
                .and_then(|g| g.ode())
                .map_err(|e| e.in_stage("galerkin reduction"))?;
            Ok((rom, basis, None))
        } else {
            let (rom, sp) = pod::galerkin_reduce_corrected(self.model, self.proj, &basis).map_err(|e| e.in_stage("galerkin reduction"))?;
            Ok((rom, basis, Some(sp)))
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("OPINF_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("OPINF_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Error::InvalidArgument("OPINF_THREADS must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker threads: {e}")))
}

/// Runs the full-order simulation for a configuration.
pub fn simulate_fom(cfg: &ExperimentConfig, model: &QuadDaeModel) -> Result<(SnapshotSet, Vec<String>)> {
    let inputs = cfg.signals()?;
    if model.is_homogeneous() && inputs.uperp.is_some() {
        return Err(Error::InvalidArgument(
            "a constraint input was given but the model has no Bperp".into(),
        ));
    }
    let v0 = match cfg.initial {
        InitialCondition::Zero => {
            let mut v0 = Vector::zeros(model.nv());
            if model.bperp.is_some() {
                // Consistent start: the offset part of the zero-velocity decomposition.
                let proj = LerayProjector::new(model)?;
                v0 = proj.s_perp(model)? * inputs.uperp_at(cfg.grid.t0);
            }
            v0
        }
        InitialCondition::Stokes => stokes_steady(model, &inputs.u_at(cfg.grid.t0), inputs.uperp_at(cfg.grid.t0))?.0,
    };
    match cfg.fom_integrator {
        FomIntegrator::Imex => imex_euler_dae(model, &v0, &inputs, &cfg.grid).map(|s| (s.snapshots, s.warnings)),
        FomIntegrator::Rk4 => integrate_fom_ode(model, &v0, &inputs, &cfg.grid).map(|s| (s, Vec::new())),
    }
}

fn csv_number(x: f64) -> String {
    format!("{x:e}")
}

/// Writes `t,v_0,…` rows; values use the shortest round-trip representation.
pub fn trajectory_csv(times: &[f64], v: &DenseMatrix) -> String {
    let mut s = String::from("t");
    for i in 0..v.nrows() {
        let _ = write!(s, ",v{i}");
    }
    s.push('\n');
    for (k, &t) in times.iter().enumerate() {
        s.push_str(&csv_number(t));
        for x in v.column(k).iter() {
            s.push(',');
            s.push_str(&csv_number(*x));
        }
        s.push('\n');
    }
    s
}

/// Parses a file written by [`trajectory_csv`] into `(times, V)`.
pub fn parse_trajectory_csv(text: &str) -> Result<(Vec<f64>, DenseMatrix)> {
    let body = text.split_once('\n').map_or("", |(_, rest)| rest);
    let header_len = text.len() - body.len();
    let m = io::decode_csv(body).map_err(|e| match e {
        Error::Parse { offset, message } => Error::Parse {
            offset: offset + header_len as u64,
            message,
        },
        e => e,
    })?;
    if m.ncols() == 0 {
        return Err(Error::Parse {
            offset: header_len as u64,
            message: "trajectory file has no data rows".into(),
        });
    }
    let times = m.column(0).iter().copied().collect();
    let v = m.columns(1, m.ncols() - 1).transpose();
    Ok((times, v))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

struct Artifacts {
    dir: Option<PathBuf>,
}

impl Artifacts {
    fn write(&self, name: &str, text: &str) -> Result<()> {
        match &self.dir {
            Some(d) => write_file(&d.join(name), text),
            None => Ok(()),
        }
    }
}

/// Runs an experiment and, if `output_dir` is set, writes every artifact.
/// Failures of individual method × order runs are recorded in the summary;
/// a failure of a shared stage aborts the run after writing the partial summary.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultSummary> {
    cfg.validate()?;
    let art = Artifacts {
        dir: cfg.output_dir.clone(),
    };
    if let Some(d) = &art.dir {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut summary = ResultSummary {
        config: cfg.clone(),
        fom: None,
        results: Vec::new(),
        error: None,
    };
    let mut timings = Vec::new();
    let outcome = run_stages(cfg, &art, &mut summary, &mut timings);
    if let Err(e) = &outcome {
        summary.error = Some(e.to_string());
    }
    art.write("summary.json", &summary.to_json())?;
    let mut t = serde_json::to_string_pretty(&timings).expect("timings serialize");
    t.push('\n');
    art.write("timings.json", &t)?;
    outcome.map(|_| summary)
}

fn run_stages(cfg: &ExperimentConfig, art: &Artifacts, summary: &mut ResultSummary, timings: &mut Vec<Timing>) -> Result<()> {
    let clock = Instant::now();
    let model = cfg.model.load().map_err(|e| e.in_stage("model"))?;
    model.validate().map_err(|e| e.in_stage("model"))?;
    let inputs = cfg.signals()?;
    if inputs.u.len() != model.m() {
        return Err(Error::dim("number of input signals vs model inputs", model.m(), inputs.u.len()).in_stage("config"));
    }
    let proj = LerayProjector::new(&model).map_err(|e| e.in_stage("model"))?;

    let (snaps, warnings) = simulate_fom(cfg, &model).map_err(|e| e.in_stage("full-order simulation"))?;
    timings.push(Timing {
        stage: "full-order simulation".into(),
        seconds: clock.elapsed().as_secs_f64(),
    });
    let sv = pod::pod_basis(&snaps.v, 1, None)
        .map(|b| b.singular_values)
        .map_err(|e| e.in_stage("snapshot svd"))?;
    let dt = cfg.grid.dt();
    summary.fom = Some(FomInfo {
        nv: model.nv(),
        np: model.np(),
        m: model.m(),
        homogeneous: model.is_homogeneous(),
        columns: snaps.len(),
        dt,
        snapshot_rank: pod::numerical_rank(&sv),
        warnings,
    });
    art.write("traj_fom.csv", &trajectory_csv(&snaps.times, &snaps.v))?;
    let mut s = String::from("index,sigma\n");
    for (i, x) in sv.iter().enumerate() {
        let _ = writeln!(s, "{i},{}", csv_number(*x));
    }
    art.write("singular_values.csv", &s)?;

    let vtop = match &model.bperp {
        None => snaps.v.clone(),
        Some(_) => {
            let sp = proj.s_perp(&model)?;
            let mut vt = snaps.v.clone();
            for (k, &t) in snaps.times.iter().enumerate() {
                let mut c = vt.column_mut(k);
                c -= &sp * inputs.uperp_at(t);
            }
            vt
        }
    };
    let stage = Stage {
        cfg,
        model: &model,
        proj: &proj,
        inputs: &inputs,
        snaps: &snaps,
        vtop,
        dt,
    };

    let mut jobs: Vec<(Method, usize)> = Vec::new();
    for &order in &cfg.orders {
        for &method in &cfg.methods {
            if !jobs.contains(&(method, order)) {
                jobs.push((method, order));
            }
        }
    }
    let pool = thread_pool()?;
    let outputs: Vec<RunOutput> = pool.install(|| jobs.par_iter().map(|&(m, r)| stage.run(m, r)).collect());

    let mut lc = String::from("order,tol,residual_norm,solution_norm,rank,selected\n");
    let mut cr = String::from("method,order,basis_residual,trajectory_residual\n");
    for mut out in outputs {
        let res = &mut out.result;
        if let Some(traj) = &out.trajectory {
            let name = format!("traj_{}_r{}.csv", res.method.name(), res.order);
            art.write(&name, &trajectory_csv(&snaps.times, traj))?;
            res.trajectory_file = art.dir.as_ref().map(|_| name);
        }
        if res.method == Method::Opinf {
            for p in &out.lcurve {
                let selected = res.tol == Some(p.tol);
                let _ = writeln!(
                    lc,
                    "{},{},{},{},{},{}",
                    res.order,
                    csv_number(p.tol),
                    csv_number(p.residual_norm),
                    csv_number(p.solution_norm),
                    p.rank,
                    selected
                );
            }
        }
        let opt = |x: Option<f64>| x.map_or(String::new(), csv_number);
        let _ = writeln!(
            cr,
            "{},{},{},{}",
            res.method.name(),
            res.order,
            opt(res.basis_constraint_residual),
            opt(res.trajectory_constraint_residual)
        );
        timings.push(Timing {
            stage: format!("{} r={}", res.method.name(), res.order),
            seconds: out.seconds,
        });
        summary.results.push(out.result);
    }
    art.write("lcurve.csv", &lc)?;
    art.write("constraint_residual.csv", &cr)?;
    Ok(())
}
