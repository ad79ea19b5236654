//! Full-order DAE and reduced-order ODE containers.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{quad_dim, quadratic_vector, spd_factor, thin_svd, DenseMatrix, Vector};

/// Index-2 quadratic DAE
///
/// ```text
/// E11 v' = A11 v + A12 p + H (v ⊗ v) + B1 u
///      0 = A12ᵀ v + Bperp u⊥
/// ```
///
/// `h` is stored in the compact monomial layout (`n_v × n_v(n_v+1)/2`).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadDaeModel {
    pub e11: DenseMatrix,
    pub a11: DenseMatrix,
    pub a12: DenseMatrix,
    pub h: DenseMatrix,
    pub b1: DenseMatrix,
    /// `n_p × 1`; `None` for a homogeneous constraint.
    pub bperp: Option<DenseMatrix>,
    pub cv: Option<DenseMatrix>,
    pub cp: Option<DenseMatrix>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub nv: usize,
    pub np: usize,
    pub m: usize,
    pub e11_spd: bool,
    pub e11_rcond_estimate: f64,
    pub a12_rank: usize,
    /// Reciprocal condition estimate of `S = A12ᵀ E11⁻¹ A12`; 1 when `n_p = 0`.
    pub s_rcond_estimate: f64,
    pub homogeneous: bool,
}

impl QuadDaeModel {
    pub fn nv(&self) -> usize {
        self.e11.nrows()
    }

    pub fn np(&self) -> usize {
        self.a12.ncols()
    }

    pub fn m(&self) -> usize {
        self.b1.ncols()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.bperp.as_ref().is_none_or(|b| b.iter().all(|&x| x == 0.0))
    }

    /// Shape checks only; see [`QuadDaeModel::validate`] for the numerical ones.
    pub fn check_shapes(&self) -> Result<()> {
        let nv = self.nv();
        let np = self.np();
        let sq = |m: &DenseMatrix, what: &'static str| {
            if m.nrows() != nv || m.ncols() != nv {
                Err(Error::dim(what, format!("{nv}x{nv}"), format!("{}x{}", m.nrows(), m.ncols())))
            } else {
                Ok(())
            }
        };
        sq(&self.e11, "E11")?;
        sq(&self.a11, "A11")?;
        if self.a12.nrows() != nv {
            return Err(Error::dim("A12 rows", nv, self.a12.nrows()));
        }
        if self.h.nrows() != nv || self.h.ncols() != quad_dim(nv) {
            return Err(Error::dim(
                "H (compact)",
                format!("{nv}x{}", quad_dim(nv)),
                format!("{}x{}", self.h.nrows(), self.h.ncols()),
            ));
        }
        if self.b1.nrows() != nv {
            return Err(Error::dim("B1 rows", nv, self.b1.nrows()));
        }
        if let Some(b) = &self.bperp {
            if b.nrows() != np || b.ncols() != 1 {
                return Err(Error::dim("Bperp", format!("{np}x1"), format!("{}x{}", b.nrows(), b.ncols())));
            }
        }
        if let Some(c) = &self.cv {
            if c.ncols() != nv {
                return Err(Error::dim("Cv cols", nv, c.ncols()));
            }
        }
        if let Some(c) = &self.cp {
            if c.ncols() != np {
                return Err(Error::dim("Cp cols", np, c.ncols()));
            }
        }
        if nv <= np {
            return Err(Error::InvalidArgument(format!("need n_v > n_p, got n_v={nv}, n_p={np}")));
        }
        for (m, what) in [
            (&self.e11, "E11"),
            (&self.a11, "A11"),
            (&self.a12, "A12"),
            (&self.h, "H"),
            (&self.b1, "B1"),
        ] {
            crate::linalg::ensure_finite(m, what)?;
        }
        Ok(())
    }

    /// Checks that `E11` is SPD, `A12` has full column rank and `S` is nonsingular.
    pub fn validate(&self) -> Result<ValidationReport> {
        self.check_shapes()?;
        let e = spd_factor(&self.e11).map_err(|_| Error::NotPositiveDefinite("E11"))?;
        let np = self.np();
        let (a12_rank, s_rcond) = if np == 0 {
            (0, 1.0)
        } else {
            let (_, sv, _) = thin_svd(&self.a12)?;
            let rank = if sv[0] == 0.0 {
                0
            } else {
                sv.iter().take_while(|&&s| s > 1e-13 * sv[0]).count()
            };
            if rank < np {
                return Err(Error::Singular("A12 is rank deficient, so S = A12ᵀ E11⁻¹ A12 is singular"));
            }
            let s = self.a12.transpose() * e.solve(&self.a12);
            let sf = spd_factor(&symmetrize(&s)).map_err(|_| Error::Singular("S = A12ᵀ E11⁻¹ A12"))?;
            (rank, sf.rcond_estimate())
        };
        Ok(ValidationReport {
            nv: self.nv(),
            np,
            m: self.m(),
            e11_spd: true,
            e11_rcond_estimate: e.rcond_estimate(),
            a12_rank,
            s_rcond_estimate: s_rcond,
            homogeneous: self.is_homogeneous(),
        })
    }

    /// `H (v ⊗ v)`.
    pub fn quadratic_term(&self, v: &Vector) -> Vector {
        &self.h * quadratic_vector(v)
    }

    /// Residuals `(A11 v + A12 p + H(v⊗v) + B1 u,  A12ᵀ v + Bperp u⊥)`.
    pub fn dae_rhs(&self, v: &Vector, p: &Vector, u: &Vector, uperp: f64) -> Result<(Vector, Vector)> {
        if v.len() != self.nv() {
            return Err(Error::dim("dae_rhs velocity", self.nv(), v.len()));
        }
        if p.len() != self.np() {
            return Err(Error::dim("dae_rhs pressure", self.np(), p.len()));
        }
        if u.len() != self.m() {
            return Err(Error::dim("dae_rhs input", self.m(), u.len()));
        }
        let rd = &self.a11 * v + &self.a12 * p + self.quadratic_term(v) + &self.b1 * u;
        let mut ra = self.a12.transpose() * v;
        if let Some(b) = &self.bperp {
            ra += b.column(0) * uperp;
        }
        Ok((rd, ra))
    }

    /// Constraint residual `‖A12ᵀ v + Bperp u⊥‖`.
    pub fn constraint_residual(&self, v: &Vector, uperp: f64) -> f64 {
        let mut ra = self.a12.transpose() * v;
        if let Some(b) = &self.bperp {
            ra += b.column(0) * uperp;
        }
        ra.norm()
    }
}

pub(crate) fn symmetrize(m: &DenseMatrix) -> DenseMatrix {
    (m + m.transpose()) * 0.5
}

/// SplitMix64 stream feeding Box–Muller standard normals.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
    spare: Option<f64>,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed, spare: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box–Muller; normals are produced in pairs
    /// `(r cos θ, r sin θ)` and consumed in that order.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// `rows × cols` matrix of normals, filled column-major.
    pub fn normal_matrix(&mut self, rows: usize, cols: usize) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(rows, cols);
        for x in m.iter_mut() {
            *x = self.next_normal();
        }
        m
    }
}

/// Deterministic synthetic model.
///
/// Draw order from one SplitMix64 stream: `W` (n_v×n_v), `G` (n_v×n_v), `A12`,
/// `B1`, compact `H`. Then `A11 = −I − WᵀW/n_v`, `E11 = I + 0.1 GᵀG`, and
/// `A12`, `B1`, `H` are scaled by `1/n_v`. `Bperp` is absent.
pub fn random_demo(seed: u64, nv: usize, np: usize, m: usize) -> Result<QuadDaeModel> {
    random_demo_stream(seed, nv, np, m).map(|(model, _)| model)
}

/// [`random_demo`] followed by an `n_p × 1` constraint input map drawn from the
/// same stream (unscaled normals).
pub fn random_demo_inhomogeneous(seed: u64, nv: usize, np: usize, m: usize) -> Result<QuadDaeModel> {
    if np == 0 {
        return Err(Error::InvalidArgument("an inhomogeneous constraint needs n_p >= 1".into()));
    }
    let (mut model, mut rng) = random_demo_stream(seed, nv, np, m)?;
    model.bperp = Some(rng.normal_matrix(np, 1));
    Ok(model)
}

fn random_demo_stream(seed: u64, nv: usize, np: usize, m: usize) -> Result<(QuadDaeModel, SplitMix64)> {
    if nv == 0 || nv <= np {
        return Err(Error::InvalidArgument(format!(
            "need n_v > n_p >= 0 and n_v >= 1, got n_v={nv}, n_p={np}"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let scale = 1.0 / nv as f64;
    let w = rng.normal_matrix(nv, nv);
    let g = rng.normal_matrix(nv, nv);
    let a12 = rng.normal_matrix(nv, np) * scale;
    let b1 = rng.normal_matrix(nv, m) * scale;
    let h = rng.normal_matrix(nv, quad_dim(nv)) * scale;
    let eye = DenseMatrix::identity(nv, nv);
    let a11 = -&eye - w.transpose() * &w * scale;
    let e11 = &eye + g.transpose() * &g * 0.1;
    let model = QuadDaeModel {
        e11,
        a11,
        a12,
        h,
        b1,
        bperp: None,
        cv: None,
        cp: None,
    };
    Ok((model, rng))
}

/// Low-order ODE
///
/// ```text
/// x' = A x + H φ(x) + B u + c + N x u⊥ + d u⊥ + e u⊥² + k u̇⊥
/// ```
///
/// with `φ` the compact quadratic features. Optional terms are absent when `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedQuadModel {
    pub a: DenseMatrix,
    pub h: Option<DenseMatrix>,
    pub b: Option<DenseMatrix>,
    pub c: Option<Vector>,
    pub n: Option<DenseMatrix>,
    pub k: Option<Vector>,
    /// Coefficient of `u⊥`.
    pub d: Option<Vector>,
    /// Coefficient of `u⊥²`.
    pub e: Option<Vector>,
}

impl ReducedQuadModel {
    pub fn new(a: DenseMatrix) -> Self {
        ReducedQuadModel {
            a,
            h: None,
            b: None,
            c: None,
            n: None,
            k: None,
            d: None,
            e: None,
        }
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.as_ref().map_or(0, |b| b.ncols())
    }

    pub fn check(&self) -> Result<()> {
        let r = self.order();
        if self.a.ncols() != r {
            return Err(Error::dim("reduced A", format!("{r}x{r}"), format!("{}x{}", r, self.a.ncols())));
        }
        if let Some(h) = &self.h {
            if h.nrows() != r || h.ncols() != quad_dim(r) {
                return Err(Error::dim(
                    "reduced H",
                    format!("{r}x{}", quad_dim(r)),
                    format!("{}x{}", h.nrows(), h.ncols()),
                ));
            }
        }
        if let Some(b) = &self.b {
            if b.nrows() != r {
                return Err(Error::dim("reduced B rows", r, b.nrows()));
            }
        }
        if let Some(n) = &self.n {
            if n.nrows() != r || n.ncols() != r {
                return Err(Error::dim("reduced N", format!("{r}x{r}"), format!("{}x{}", n.nrows(), n.ncols())));
            }
        }
        for (v, what) in [
            (&self.c, "reduced c"),
            (&self.k, "reduced k"),
            (&self.d, "reduced d"),
            (&self.e, "reduced e"),
        ] {
            if let Some(v) = v {
                if v.len() != r {
                    return Err(Error::dim(what, r, v.len()));
                }
            }
        }
        let finite = self.a.iter().all(|x| x.is_finite())
            && [&self.h, &self.b, &self.n]
                .iter()
                .all(|m| m.as_ref().is_none_or(|m| m.iter().all(|x| x.is_finite())))
            && [&self.c, &self.k, &self.d, &self.e]
                .iter()
                .all(|v| v.as_ref().is_none_or(|v| v.iter().all(|x| x.is_finite())));
        if !finite {
            return Err(Error::NonFinite("reduced model operators"));
        }
        Ok(())
    }

    /// Right-hand side at state `x` with input `u`, constraint input `u⊥` and its derivative.
    pub fn rhs(&self, x: &Vector, u: &Vector, uperp: f64, udot_perp: f64) -> Vector {
        let mut dx = &self.a * x;
        if let Some(h) = &self.h {
            dx += h * quadratic_vector(x);
        }
        if let Some(b) = &self.b {
            if b.ncols() > 0 {
                dx += b * u;
            }
        }
        if let Some(c) = &self.c {
            dx += c;
        }
        if let Some(n) = &self.n {
            dx += n * x * uperp;
        }
        if let Some(d) = &self.d {
            dx += d * uperp;
        }
        if let Some(e) = &self.e {
            dx += e * (uperp * uperp);
        }
        if let Some(k) = &self.k {
            dx += k * udot_perp;
        }
        dx
    }
}

/// Time grid plus trajectories, one column per time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub times: Vec<f64>,
    pub v: DenseMatrix,
    pub p: Option<DenseMatrix>,
    pub u: Option<DenseMatrix>,
    /// `1 × (N+1)`.
    pub uperp: Option<DenseMatrix>,
}

impl SnapshotSet {
    pub fn new(
        times: Vec<f64>,
        v: DenseMatrix,
        p: Option<DenseMatrix>,
        u: Option<DenseMatrix>,
        uperp: Option<DenseMatrix>,
    ) -> Result<Self> {
        let set = SnapshotSet { times, v, p, u, uperp };
        set.check()?;
        Ok(set)
    }

    pub fn check(&self) -> Result<()> {
        let n = self.times.len();
        if n == 0 {
            return Err(Error::Empty("snapshot time grid"));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("snapshot times must be strictly increasing".into()));
        }
        let blocks = [
            ("velocity", Some(&self.v)),
            ("pressure", self.p.as_ref()),
            ("inputs", self.u.as_ref()),
            ("constraint inputs", self.uperp.as_ref()),
        ];
        for (what, block) in blocks {
            if let Some(b) = block {
                if b.ncols() != n {
                    return Err(Error::Dimension {
                        context: "snapshot columns vs time points",
                        expected: format!("{n} columns"),
                        actual: format!("{} columns in {what}", b.ncols()),
                    });
                }
                crate::linalg::ensure_finite(b, "snapshot data")?;
            }
        }
        if let Some(up) = &self.uperp {
            if up.nrows() != 1 {
                return Err(Error::dim("constraint input rows", 1, up.nrows()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Mean step if the grid is uniform (`max|Δt_i − Δt| ≤ 1e-12 Δt`).
    pub fn uniform_step(&self) -> Option<f64> {
        if self.times.len() < 2 {
            return None;
        }
        let n = self.times.len() - 1;
        let dt = (self.times[n] - self.times[0]) / n as f64;
        let uniform = self.times.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-12 * dt);
        uniform.then_some(dt)
    }
}
