//! Operator inference for the reduced velocity ODE and the pressure map.
//!
//! Given projected states `X̂`, derivative estimates `Ẋ̂` and inputs, the
//! operators solve `min ‖Ẋ̂ − O·𝒟‖_F` with a truncated-SVD pseudoinverse of the
//! regressor matrix `𝒟`. Quadratic regressors use the compact monomial layout,
//! so cross terms are never duplicated inside `𝒟`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    lstsq_from_svd, min_norm_lstsq_with, quad_dim, quadratic_features, quadratic_vector, thin_svd, DenseMatrix, Tolerance, TruncatedSvd,
    Vector,
};
use crate::model::ReducedQuadModel;

/// Which regressor blocks to include. Blocks are always stacked in the order
/// state, quadratic, input, constant, input derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegressorFlags {
    pub state: bool,
    pub quadratic: bool,
    pub input: bool,
    pub constant: bool,
    pub input_derivative: bool,
}

impl RegressorFlags {
    /// `[X̂; X̂ ⊗̃ X̂; U]`.
    pub const fn quadratic() -> Self {
        RegressorFlags {
            state: true,
            quadratic: true,
            input: true,
            constant: false,
            input_derivative: false,
        }
    }

    /// `[X̂; U]`.
    pub const fn linear() -> Self {
        RegressorFlags {
            state: true,
            quadratic: false,
            input: true,
            constant: false,
            input_derivative: false,
        }
    }

    pub const fn with_constant(mut self) -> Self {
        self.constant = true;
        self
    }

    pub const fn with_input_derivative(mut self) -> Self {
        self.input_derivative = true;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    State,
    Quadratic,
    Input,
    Constant,
    InputDerivative,
}

/// Stacked regressor matrix `𝒟` with its block layout.
#[derive(Debug, Clone)]
pub struct RegressorMatrix {
    pub blocks: Vec<(BlockKind, usize)>,
    pub matrix: DenseMatrix,
    pub order: usize,
}

impl RegressorMatrix {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    /// Row offset and height of a block.
    pub fn block(&self, kind: BlockKind) -> Option<(usize, usize)> {
        let mut off = 0;
        for &(k, rows) in &self.blocks {
            if k == kind {
                return Some((off, rows));
            }
            off += rows;
        }
        None
    }

    /// Splits an operator `O` (`q × rows`) into the blocks of this layout.
    pub fn unpack(&self, op: &DenseMatrix) -> UnpackedOperators {
        let take = |kind| self.block(kind).map(|(off, rows)| op.columns(off, rows).into_owned());
        let vec_of = |m: Option<DenseMatrix>| m.map(|m| Vector::from_column_slice(m.as_slice()));
        UnpackedOperators {
            a: take(BlockKind::State),
            h: take(BlockKind::Quadratic),
            b: take(BlockKind::Input),
            c: vec_of(take(BlockKind::Constant)),
            k: vec_of(take(BlockKind::InputDerivative)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct UnpackedOperators {
    pub a: Option<DenseMatrix>,
    pub h: Option<DenseMatrix>,
    pub b: Option<DenseMatrix>,
    pub c: Option<Vector>,
    pub k: Option<Vector>,
}

pub fn assemble_regressors(
    xhat: &DenseMatrix,
    u: Option<&DenseMatrix>,
    udot_perp: Option<&DenseMatrix>,
    flags: RegressorFlags,
) -> Result<RegressorMatrix> {
    let cols = xhat.ncols();
    let r = xhat.nrows();
    let mut parts: Vec<(BlockKind, DenseMatrix)> = Vec::new();
    if flags.state {
        parts.push((BlockKind::State, xhat.clone()));
    }
    if flags.quadratic {
        parts.push((BlockKind::Quadratic, quadratic_features(xhat)));
    }
    if flags.input {
        let u = u.ok_or_else(|| Error::InvalidArgument("input block requested but no input data given".into()))?;
        if u.ncols() != cols {
            return Err(Error::dim("input data columns", cols, u.ncols()));
        }
        parts.push((BlockKind::Input, u.clone()));
    }
    if flags.constant {
        parts.push((BlockKind::Constant, DenseMatrix::from_element(1, cols, 1.0)));
    }
    if flags.input_derivative {
        let d = udot_perp
            .ok_or_else(|| Error::InvalidArgument("input-derivative block requested but no constraint-input derivative given".into()))?;
        if d.ncols() != cols {
            return Err(Error::dim("constraint-input derivative columns", cols, d.ncols()));
        }
        parts.push((BlockKind::InputDerivative, d.clone()));
    }
    if parts.is_empty() {
        return Err(Error::InvalidArgument("no regressor blocks selected".into()));
    }
    let rows: usize = parts.iter().map(|(_, m)| m.nrows()).sum();
    let mut matrix = DenseMatrix::zeros(rows, cols);
    let mut off = 0;
    for (_, m) in &parts {
        matrix.view_mut((off, 0), (m.nrows(), cols)).copy_from(m);
        off += m.nrows();
    }
    crate::linalg::ensure_finite(&matrix, "regressor matrix")?;
    Ok(RegressorMatrix {
        blocks: parts.iter().map(|(k, m)| (*k, m.nrows())).collect(),
        matrix,
        order: r,
    })
}

/// Diagnostics of one least-squares solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveInfo {
    pub rank: usize,
    pub tol_used: f64,
    pub regressor_rows: usize,
    pub residual_norm: f64,
    pub singular_values: Vec<f64>,
}

fn solve(d: &RegressorMatrix, rhs: &DenseMatrix, tol: Tolerance) -> Result<(DenseMatrix, SolveInfo)> {
    let (op, svd) = min_norm_lstsq_with(&d.matrix, rhs, tol)?;
    let residual_norm = (rhs - &op * &d.matrix).norm();
    let info = SolveInfo {
        rank: svd.rank,
        tol_used: svd.tol_used,
        regressor_rows: d.rows(),
        residual_norm,
        singular_values: svd.all_singular_values,
    };
    Ok((op, info))
}

/// Learns `x' = Â x + Ĥ φ(x) + B̂ u [+ ĉ] [+ k̂ u̇⊥]` from projected data.
pub fn infer_velocity_model(
    xhat: &DenseMatrix,
    xhat_dot: &DenseMatrix,
    u: Option<&DenseMatrix>,
    udot_perp: Option<&DenseMatrix>,
    flags: RegressorFlags,
    tol: Tolerance,
) -> Result<(ReducedQuadModel, SolveInfo)> {
    if xhat_dot.nrows() != xhat.nrows() || xhat_dot.ncols() != xhat.ncols() {
        return Err(Error::dim(
            "derivative data",
            format!("{}x{}", xhat.nrows(), xhat.ncols()),
            format!("{}x{}", xhat_dot.nrows(), xhat_dot.ncols()),
        ));
    }
    if !flags.state {
        return Err(Error::InvalidArgument("the velocity model needs the state block".into()));
    }
    let d = assemble_regressors(xhat, u, udot_perp, flags)?;
    let (op, info) = solve(&d, xhat_dot, tol)?;
    let parts = d.unpack(&op);
    let mut rom = ReducedQuadModel::new(parts.a.expect("state block present"));
    rom.h = parts.h;
    rom.b = parts.b;
    rom.c = parts.c;
    rom.k = parts.k;
    Ok((rom, info))
}

/// Algebraic reduced pressure map `p̂ = Âp x + Ĥp φ(x) + B̂p u [+ ĉp] [+ k̂p u̇⊥]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureMap {
    pub a: DenseMatrix,
    pub h: Option<DenseMatrix>,
    pub b: Option<DenseMatrix>,
    pub c: Option<Vector>,
    pub k: Option<Vector>,
}

impl PressureMap {
    pub fn predict(&self, x: &Vector, u: &Vector, udot_perp: f64) -> Vector {
        let mut p = &self.a * x;
        if let Some(h) = &self.h {
            p += h * quadratic_vector(x);
        }
        if let Some(b) = &self.b {
            if b.ncols() > 0 {
                p += b * u;
            }
        }
        if let Some(c) = &self.c {
            p += c;
        }
        if let Some(k) = &self.k {
            p += k * udot_perp;
        }
        p
    }

    /// Evaluates the map along a reduced trajectory.
    pub fn predict_trajectory(&self, xhat: &DenseMatrix, u: Option<&DenseMatrix>, udot_perp: Option<&DenseMatrix>) -> DenseMatrix {
        let m = self.b.as_ref().map_or(0, |b| b.ncols());
        let mut out = DenseMatrix::zeros(self.a.nrows(), xhat.ncols());
        for k in 0..xhat.ncols() {
            let uk = u.map_or_else(|| Vector::zeros(m), |u| u.column(k).into_owned());
            let dk = udot_perp.map_or(0.0, |d| d[(0, k)]);
            out.set_column(k, &self.predict(&xhat.column(k).into_owned(), &uk, dk));
        }
        out
    }
}

/// Fits the pressure map; the right-hand side is `P̂` itself.
pub fn infer_pressure_map(
    phat: &DenseMatrix,
    xhat: &DenseMatrix,
    u: Option<&DenseMatrix>,
    udot_perp: Option<&DenseMatrix>,
    flags: RegressorFlags,
    tol: Tolerance,
) -> Result<(PressureMap, SolveInfo)> {
    if phat.ncols() != xhat.ncols() {
        return Err(Error::dim("pressure data columns", xhat.ncols(), phat.ncols()));
    }
    if !flags.state {
        return Err(Error::InvalidArgument("the pressure map needs the state block".into()));
    }
    let d = assemble_regressors(xhat, u, udot_perp, flags)?;
    let (op, info) = solve(&d, phat, tol)?;
    let parts = d.unpack(&op);
    Ok((
        PressureMap {
            a: parts.a.expect("state block present"),
            h: parts.h,
            b: parts.b,
            c: parts.c,
            k: parts.k,
        },
        info,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LCurvePoint {
    pub tol: f64,
    pub residual_norm: f64,
    pub solution_norm: f64,
    pub rank: usize,
}

/// Solves the least-squares problem for every tolerance from one SVD of `𝒟`.
/// Tolerances that remove every singular value give the zero solution.
pub fn l_curve_scan(d: &DenseMatrix, rhs: &DenseMatrix, tols: &[f64]) -> Result<Vec<LCurvePoint>> {
    if d.ncols() != rhs.ncols() {
        return Err(Error::dim("l-curve sample count", d.ncols(), rhs.ncols()));
    }
    if tols.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidArgument("l-curve tolerances must be positive".into()));
    }
    if tols.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("l-curve tolerances must be sorted ascending".into()));
    }
    let (u, s, v) = thin_svd(d)?;
    let rhs_norm = rhs.norm();
    let mut out = Vec::with_capacity(tols.len());
    for &tol in tols {
        let rank = s.iter().take_while(|&&x| x > tol).count();
        if rank == 0 {
            out.push(LCurvePoint {
                tol,
                residual_norm: rhs_norm,
                solution_norm: 0.0,
                rank,
            });
            continue;
        }
        let svd = TruncatedSvd {
            left_vectors: u.columns(0, rank).into_owned(),
            singular_values: s[..rank].to_vec(),
            right_vectors: v.columns(0, rank).into_owned(),
            rank,
            tol_used: tol,
            all_singular_values: Vec::new(),
        };
        let x = lstsq_from_svd(&svd, rhs);
        out.push(LCurvePoint {
            tol,
            residual_norm: (rhs - &x * d).norm(),
            solution_norm: x.norm(),
            rank,
        });
    }
    Ok(out)
}

/// `n` tolerances spaced logarithmically over `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo) || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "need 0 < lo <= hi and n >= 1, got [{lo}, {hi}], n={n}"
        )));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    Ok((0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect())
}

/// Knee of an L-curve: the vertex with the sharpest turn of the polyline
/// `(log ‖residual‖, log ‖solution‖)` ordered by tolerance. Runs of identical
/// points are merged and represented by their largest tolerance; ties go to
/// the larger tolerance; a polyline without any turn yields the largest tolerance.
pub fn pick_tolerance(points: &[LCurvePoint]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 l-curve points, got {}",
            points.len()
        )));
    }
    let mut pts: Vec<LCurvePoint> = points.to_vec();
    pts.sort_by(|a, b| a.tol.total_cmp(&b.tol));
    let largest = pts.last().expect("non-empty").tol;
    let floor = f64::MIN_POSITIVE;
    let coord = |p: &LCurvePoint| (p.residual_norm.max(floor).log10(), p.solution_norm.max(floor).log10());

    let mut merged: Vec<(f64, (f64, f64))> = Vec::new();
    for p in &pts {
        let c = coord(p);
        match merged.last_mut() {
            Some(last) if (last.1 .0 - c.0).abs() <= 1e-12 && (last.1 .1 - c.1).abs() <= 1e-12 => last.0 = p.tol,
            _ => merged.push((p.tol, c)),
        }
    }
    if merged.len() < 3 {
        return Ok(match merged.len() {
            1 => largest,
            // A single segment: the end of the first run is the only corner candidate.
            _ => merged[0].0,
        });
    }
    let mut best: Option<(f64, f64)> = None;
    for w in merged.windows(3) {
        let (p0, p1, p2) = (w[0].1, w[1].1, w[2].1);
        let (ax, ay) = (p1.0 - p0.0, p1.1 - p0.1);
        let (bx, by) = (p2.0 - p1.0, p2.1 - p1.1);
        let angle = (ax * by - ay * bx).atan2(ax * bx + ay * by).abs();
        match best {
            Some((a, _)) if angle < a - 1e-12 => {}
            _ => best = Some((angle, w[1].0)),
        }
    }
    let (angle, tol) = best.expect("at least one interior vertex");
    Ok(if angle <= 1e-12 { largest } else { tol })
}

/// Number of regressor rows for a given layout.
pub fn regressor_rows(r: usize, m: usize, flags: RegressorFlags) -> usize {
    let mut rows = 0;
    if flags.state {
        rows += r;
    }
    if flags.quadratic {
        rows += quad_dim(r);
    }
    if flags.input {
        rows += m;
    }
    if flags.constant {
        rows += 1;
    }
    if flags.input_derivative {
        rows += 1;
    }
    rows
}
