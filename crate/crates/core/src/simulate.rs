//! Time integration and derivative estimation.

use nalgebra::LU;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Vector};
use crate::model::{QuadDaeModel, SnapshotSet};
use crate::transform::LerayProjector;

/// Uniform grid `t_k = t0 + k Δt`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub t_end: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, steps: usize) -> Result<Self> {
        let g = TimeGrid { t0, t_end, steps };
        g.check()?;
        Ok(g)
    }

    pub fn check(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidArgument("time grid needs at least one step".into()));
        }
        if !(self.t_end > self.t0) || !self.t0.is_finite() || !self.t_end.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "time grid needs finite t0 < tend, got [{}, {}]",
                self.t0, self.t_end
            )));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t_end
        } else {
            self.t0 + k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }
}

/// Scalar input signals with analytic derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Signal {
    Zero,
    Constant {
        value: f64,
    },
    /// `amplitude · sin(freq t + phase) · exp(−decay t)`.
    Sinusoid {
        amplitude: f64,
        freq: f64,
        phase: f64,
        decay: f64,
    },
}

impl Signal {
    /// `u(t) = sin(2t) e^{−0.05t}`.
    pub fn sin_decay() -> Self {
        Signal::Sinusoid {
            amplitude: 1.0,
            freq: 2.0,
            phase: 0.0,
            decay: 0.05,
        }
    }

    /// Resolves the named signals accepted on the command line.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "zero" => Ok(Signal::Zero),
            "sin-decay" => Ok(Signal::sin_decay()),
            "cos-decay" => Ok(Signal::Sinusoid {
                amplitude: 1.0,
                freq: 3.0,
                phase: std::f64::consts::FRAC_PI_2,
                decay: 0.1,
            }),
            _ => name
                .strip_prefix("const:")
                .and_then(|v| v.parse::<f64>().ok())
                .map(|value| Signal::Constant { value })
                .ok_or_else(|| Error::InvalidArgument(format!("unknown signal '{name}' (zero, sin-decay, cos-decay, const:<x>)"))),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Signal::Zero => 0.0,
            Signal::Constant { value } => value,
            Signal::Sinusoid {
                amplitude,
                freq,
                phase,
                decay,
            } => amplitude * (freq * t + phase).sin() * (-decay * t).exp(),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            Signal::Zero | Signal::Constant { .. } => 0.0,
            Signal::Sinusoid {
                amplitude,
                freq,
                phase,
                decay,
            } => {
                let arg = freq * t + phase;
                amplitude * (-decay * t).exp() * (freq * arg.cos() - decay * arg.sin())
            }
        }
    }
}

/// Input channels `u(t)` plus the optional constraint input `u⊥(t)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Inputs {
    pub u: Vec<Signal>,
    #[serde(default)]
    pub uperp: Option<Signal>,
}

impl Inputs {
    pub fn new(u: Vec<Signal>) -> Self {
        Inputs { u, uperp: None }
    }

    pub fn with_uperp(mut self, s: Signal) -> Self {
        self.uperp = Some(s);
        self
    }

    pub fn u_at(&self, t: f64) -> Vector {
        Vector::from_iterator(self.u.len(), self.u.iter().map(|s| s.value(t)))
    }

    pub fn uperp_at(&self, t: f64) -> f64 {
        self.uperp.as_ref().map_or(0.0, |s| s.value(t))
    }

    pub fn uperp_dot_at(&self, t: f64) -> f64 {
        self.uperp.as_ref().map_or(0.0, |s| s.derivative(t))
    }

    /// `m × (N+1)` samples on a grid.
    pub fn sample_u(&self, times: &[f64]) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.u.len(), times.len());
        for (k, &t) in times.iter().enumerate() {
            out.set_column(k, &self.u_at(t));
        }
        out
    }

    pub fn sample_uperp(&self, times: &[f64]) -> DenseMatrix {
        DenseMatrix::from_iterator(1, times.len(), times.iter().map(|&t| self.uperp_at(t)))
    }

    pub fn sample_uperp_dot(&self, times: &[f64]) -> DenseMatrix {
        DenseMatrix::from_iterator(1, times.len(), times.iter().map(|&t| self.uperp_dot_at(t)))
    }

    fn check(&self, model: &QuadDaeModel) -> Result<()> {
        if self.u.len() != model.m() {
            return Err(Error::dim("number of input signals", model.m(), self.u.len()));
        }
        Ok(())
    }
}

/// Result of a full-order simulation.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub snapshots: SnapshotSet,
    /// Non-fatal diagnostics, e.g. an inconsistent initial value.
    pub warnings: Vec<String>,
}

/// Semi-implicit Euler for the DAE: linear terms and the constraint implicit,
/// the quadratic term explicit, inputs sampled at `t_{k+1}`. Each step solves
///
/// ```text
/// [E11 − Δt A11   −Δt A12] [v_{k+1}]   [E11 v_k + Δt (H(v_k⊗v_k) + B1 u_{k+1})]
/// [A12ᵀ              0   ] [p_{k+1}] = [−Bperp u⊥(t_{k+1})                    ]
/// ```
///
/// with one LU factorization reused for all steps. The pressure at `t0` is
/// taken from the pressure Poisson equation.
pub fn imex_euler_dae(model: &QuadDaeModel, v0: &Vector, inputs: &Inputs, grid: &TimeGrid) -> Result<Simulation> {
    grid.check()?;
    model.check_shapes()?;
    inputs.check(model)?;
    if v0.len() != model.nv() {
        return Err(Error::dim("initial velocity", model.nv(), v0.len()));
    }
    let (nv, np) = (model.nv(), model.np());
    let dt = grid.dt();
    let times = grid.times();
    let proj = LerayProjector::new(model)?;

    let mut warnings = Vec::new();
    let res0 = model.constraint_residual(v0, inputs.uperp_at(grid.t0));
    if res0 > 1e-8 {
        warnings.push(format!("initial velocity violates the constraint (residual {res0:.3e})"));
    }

    let mut k = DenseMatrix::zeros(nv + np, nv + np);
    k.view_mut((0, 0), (nv, nv)).copy_from(&(&model.e11 - &model.a11 * dt));
    k.view_mut((0, nv), (nv, np)).copy_from(&(&model.a12 * -dt));
    k.view_mut((nv, 0), (np, nv)).copy_from(&model.a12.transpose());
    let lu = LU::new(k);
    if !lu.is_invertible() {
        return Err(Error::Singular("IMEX saddle-point matrix"));
    }

    let n = grid.steps;
    let mut v = DenseMatrix::zeros(nv, n + 1);
    let mut p = DenseMatrix::zeros(np, n + 1);
    v.set_column(0, v0);
    let p0 = proj.pressure_from_velocity(model, v0, &inputs.u_at(grid.t0), inputs.uperp_dot_at(grid.t0))?;
    p.set_column(0, &p0);

    let mut rhs = Vector::zeros(nv + np);
    let mut vk = v0.clone();
    for step in 0..n {
        let t1 = times[step + 1];
        let force = &model.e11 * &vk + (model.quadratic_term(&vk) + &model.b1 * inputs.u_at(t1)) * dt;
        rhs.rows_mut(0, nv).copy_from(&force);
        if let Some(b) = &model.bperp {
            rhs.rows_mut(nv, np).copy_from(&(b.column(0) * -inputs.uperp_at(t1)));
        }
        let sol = lu.solve(&rhs).ok_or(Error::Singular("IMEX saddle-point solve"))?;
        if !sol.iter().all(|x| x.is_finite()) {
            return Err(Error::BlowUp { step: step + 1, time: t1 });
        }
        vk = sol.rows(0, nv).into_owned();
        v.set_column(step + 1, &vk);
        p.set_column(step + 1, &sol.rows(nv, np));
    }

    let snapshots = SnapshotSet::new(
        times.clone(),
        v,
        (np > 0).then_some(p),
        (model.m() > 0).then(|| inputs.sample_u(&times)),
        model.bperp.as_ref().map(|_| inputs.sample_uperp(&times)),
    )?;
    Ok(Simulation { snapshots, warnings })
}

/// Classical four-stage Runge–Kutta with fixed step; returns one column per grid point.
pub fn integrate_ode<F>(rhs: F, x0: &Vector, grid: &TimeGrid) -> Result<DenseMatrix>
where
    F: Fn(f64, &Vector) -> Vector,
{
    grid.check()?;
    let dt = grid.dt();
    let mut out = DenseMatrix::zeros(x0.len(), grid.steps + 1);
    out.set_column(0, x0);
    let mut x = x0.clone();
    for k in 0..grid.steps {
        let t = grid.time(k);
        let k1 = rhs(t, &x);
        let k2 = rhs(t + 0.5 * dt, &(&x + &k1 * (0.5 * dt)));
        let k3 = rhs(t + 0.5 * dt, &(&x + &k2 * (0.5 * dt)));
        let k4 = rhs(t + dt, &(&x + &k3 * dt));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp {
                step: k + 1,
                time: grid.time(k + 1),
            });
        }
        out.set_column(k + 1, &x);
    }
    Ok(out)
}

/// Integrates the velocity ODE of the DAE with [`integrate_ode`] and recovers
/// the pressure from the pressure Poisson equation at every grid point.
pub fn integrate_fom_ode(model: &QuadDaeModel, v0: &Vector, inputs: &Inputs, grid: &TimeGrid) -> Result<SnapshotSet> {
    inputs.check(model)?;
    let proj = LerayProjector::new(model)?;
    let v = integrate_ode(
        |t, v| {
            proj.ode_rhs(model, v, &inputs.u_at(t), inputs.uperp_dot_at(t))
                .expect("dimensions checked above")
        },
        v0,
        grid,
    )?;
    let times = grid.times();
    let np = model.np();
    let mut p = DenseMatrix::zeros(np, times.len());
    for (k, &t) in times.iter().enumerate() {
        let pk = proj.pressure_from_velocity(model, &v.column(k).into_owned(), &inputs.u_at(t), inputs.uperp_dot_at(t))?;
        p.set_column(k, &pk);
    }
    SnapshotSet::new(
        times.clone(),
        v,
        (np > 0).then_some(p),
        (model.m() > 0).then(|| inputs.sample_u(&times)),
        model.bperp.as_ref().map(|_| inputs.sample_uperp(&times)),
    )
}

/// Steady Stokes state: solves `A11 v + A12 p + B1 u0 = 0`, `A12ᵀ v + Bperp u⊥0 = 0`.
pub fn stokes_steady(model: &QuadDaeModel, u0: &Vector, uperp0: f64) -> Result<(Vector, Vector)> {
    model.check_shapes()?;
    if u0.len() != model.m() {
        return Err(Error::dim("Stokes input", model.m(), u0.len()));
    }
    let (nv, np) = (model.nv(), model.np());
    let mut k = DenseMatrix::zeros(nv + np, nv + np);
    k.view_mut((0, 0), (nv, nv)).copy_from(&model.a11);
    k.view_mut((0, nv), (nv, np)).copy_from(&model.a12);
    k.view_mut((nv, 0), (np, nv)).copy_from(&model.a12.transpose());
    let mut rhs = Vector::zeros(nv + np);
    rhs.rows_mut(0, nv).copy_from(&(-(&model.b1 * u0)));
    if let Some(b) = &model.bperp {
        rhs.rows_mut(nv, np).copy_from(&(b.column(0) * -uperp0));
    }
    let lu = LU::new(k);
    if !lu.is_invertible() {
        return Err(Error::Singular("Stokes saddle-point matrix"));
    }
    let sol = lu.solve(&rhs).ok_or(Error::Singular("Stokes saddle-point matrix"))?;
    Ok((sol.rows(0, nv).into_owned(), sol.rows(nv, np).into_owned()))
}

/// Fourth-order finite differences along the columns of `x` (uniform step `dt`):
/// five-point central stencils inside, one-sided five-point stencils at the
/// first and last two samples.
pub fn estimate_derivatives(x: &DenseMatrix, dt: f64) -> Result<DenseMatrix> {
    let n = x.ncols();
    if n < 5 {
        return Err(Error::InvalidArgument(format!(
            "fourth-order differences need at least 5 samples, got {n}"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {dt}")));
    }
    let c = 1.0 / (12.0 * dt);
    let mut d = DenseMatrix::zeros(x.nrows(), n);
    let col = |k: usize| x.column(k);
    let stencil = |idx: [usize; 5], w: [f64; 5]| {
        let mut acc = col(idx[0]) * w[0];
        for i in 1..5 {
            acc += col(idx[i]) * w[i];
        }
        acc * c
    };
    d.set_column(0, &stencil([0, 1, 2, 3, 4], [-25.0, 48.0, -36.0, 16.0, -3.0]));
    d.set_column(1, &stencil([0, 1, 2, 3, 4], [-3.0, -10.0, 18.0, -6.0, 1.0]));
    for k in 2..n - 2 {
        d.set_column(k, &stencil([k - 2, k - 1, k + 1, k + 2, k], [1.0, -8.0, 8.0, -1.0, 0.0]));
    }
    let l = n - 1;
    d.set_column(l - 1, &stencil([l, l - 1, l - 2, l - 3, l - 4], [3.0, 10.0, -18.0, 6.0, -1.0]));
    d.set_column(l, &stencil([l, l - 1, l - 2, l - 3, l - 4], [25.0, -48.0, 36.0, -16.0, 3.0]));
    Ok(d)
}
