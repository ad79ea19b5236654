//! Discrete Leray projection and the velocity-only form of the DAE.
//!
//! With `S = A12ᵀ E11⁻¹ A12`:
//!
//! ```text
//! Π  = I − E11⁻¹ A12 S⁻¹ A12ᵀ
//! Πᵀ = I − A12 S⁻¹ A12ᵀ E11⁻¹
//! p  = −S⁻¹ (A12ᵀ E11⁻¹ f(v, u) + Bperp u̇⊥)
//! E11 v' = Πᵀ f(v, u) − A12 S⁻¹ Bperp u̇⊥
//! ```
//!
//! where `f(v, u) = A11 v + H(v⊗v) + B1 u`. Nothing here forms `Π` densely.

use crate::error::{Error, Result};
use crate::linalg::{orthonormal_span, quadratic_vector, spd_factor, sym_features, DenseMatrix, SpdFactor, Vector};
use crate::model::{symmetrize, QuadDaeModel};

/// Factored discrete Leray projector of one model.
#[derive(Debug, Clone)]
pub struct LerayProjector {
    e11: SpdFactor,
    a12: DenseMatrix,
    /// `E11⁻¹ A12`.
    e_inv_a12: DenseMatrix,
    /// Factor of `S`; `None` when `n_p = 0`.
    s: Option<SpdFactor>,
}

impl LerayProjector {
    pub fn new(model: &QuadDaeModel) -> Result<Self> {
        model.check_shapes()?;
        let e11 = spd_factor(&model.e11).map_err(|_| Error::NotPositiveDefinite("E11"))?;
        let e_inv_a12 = e11.solve(&model.a12);
        let s = if model.np() == 0 {
            None
        } else {
            let s = model.a12.transpose() * &e_inv_a12;
            Some(spd_factor(&symmetrize(&s)).map_err(|_| Error::Singular("S = A12ᵀ E11⁻¹ A12"))?)
        };
        Ok(LerayProjector {
            e11,
            a12: model.a12.clone(),
            e_inv_a12,
            s,
        })
    }

    pub fn nv(&self) -> usize {
        self.a12.nrows()
    }

    pub fn e11(&self) -> &SpdFactor {
        &self.e11
    }

    fn check_len(&self, x: &DenseMatrix) -> Result<()> {
        if x.nrows() != self.nv() {
            return Err(Error::dim("Leray projector operand rows", self.nv(), x.nrows()));
        }
        Ok(())
    }

    /// `S⁻¹ y`; identity-sized zero when there is no pressure.
    fn s_solve(&self, y: &DenseMatrix) -> DenseMatrix {
        match &self.s {
            Some(s) => s.solve(y),
            None => DenseMatrix::zeros(0, y.ncols()),
        }
    }

    /// `Π X`, column by column.
    pub fn apply_mat(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_len(x)?;
        let coef = self.s_solve(&(self.a12.transpose() * x));
        Ok(x - &self.e_inv_a12 * coef)
    }

    /// `Πᵀ X`, column by column.
    pub fn apply_t_mat(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_len(x)?;
        let coef = self.s_solve(&(self.e_inv_a12.transpose() * x));
        Ok(x - &self.a12 * coef)
    }

    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        self.apply_mat(&as_col(x)).map(into_vec)
    }

    pub fn apply_t(&self, x: &Vector) -> Result<Vector> {
        self.apply_t_mat(&as_col(x)).map(into_vec)
    }

    /// `Π` as a dense matrix; for diagnostics and small problems only.
    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.nv();
        self.apply_mat(&DenseMatrix::identity(n, n)).expect("identity has matching rows")
    }

    /// `f(v, u) = A11 v + H(v⊗v) + B1 u`.
    fn forcing(model: &QuadDaeModel, v: &Vector, u: &Vector) -> Result<Vector> {
        if v.len() != model.nv() {
            return Err(Error::dim("velocity length", model.nv(), v.len()));
        }
        if u.len() != model.m() {
            return Err(Error::dim("input length", model.m(), u.len()));
        }
        Ok(&model.a11 * v + &model.h * quadratic_vector(v) + &model.b1 * u)
    }

    fn pressure_from_forcing(&self, model: &QuadDaeModel, f: &Vector, udot_perp: f64) -> Vector {
        let mut rhs = self.e_inv_a12.transpose() * f;
        if let Some(b) = &model.bperp {
            rhs += b.column(0) * udot_perp;
        }
        -into_vec(self.s_solve(&as_col(&rhs)))
    }

    /// Pressure that keeps the constraint satisfied along the flow.
    pub fn pressure_from_velocity(&self, model: &QuadDaeModel, v: &Vector, u: &Vector, udot_perp: f64) -> Result<Vector> {
        let f = Self::forcing(model, v, u)?;
        Ok(self.pressure_from_forcing(model, &f, udot_perp))
    }

    /// Velocity derivative of the underlying ODE.
    pub fn ode_rhs(&self, model: &QuadDaeModel, v: &Vector, u: &Vector, udot_perp: f64) -> Result<Vector> {
        let f = Self::forcing(model, v, u)?;
        let p = self.pressure_from_forcing(model, &f, udot_perp);
        Ok(self.e11.solve_vec(&(f + &self.a12 * p)))
    }

    /// `S⊥ = −E11⁻¹ A12 S⁻¹ Bperp`, the velocity offset per unit of `u⊥`.
    pub fn s_perp(&self, model: &QuadDaeModel) -> Result<Vector> {
        let b = model
            .bperp
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("model has no constraint input map Bperp".into()))?;
        Ok(-into_vec(&self.e_inv_a12 * self.s_solve(b)))
    }

    /// Splits `v` into `(Π v, S⊥ u⊥)`. For homogeneous models the second part is zero.
    pub fn decompose_velocity(&self, model: &QuadDaeModel, v: &Vector, uperp: f64) -> Result<(Vector, Vector)> {
        let top = self.apply(v)?;
        let perp = match &model.bperp {
            Some(_) => self.s_perp(model)? * uperp,
            None => Vector::zeros(self.nv()),
        };
        Ok((top, perp))
    }
}

fn as_col(x: &Vector) -> DenseMatrix {
    DenseMatrix::from_column_slice(x.len(), 1, x.as_slice())
}

fn into_vec(m: DenseMatrix) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

/// Operators of the `v⊤` equation for an inhomogeneous constraint.
///
/// With `v = v⊤ + S⊥ u⊥`:
///
/// ```text
/// E11 v⊤' = A11 v⊤ + H(v⊤⊗v⊤) + N v⊤ u⊥ + a11_s_perp u⊥ + c2 u⊥² + A12 p + B1 u − E11 S⊥ u̇⊥
/// ```
#[derive(Debug, Clone)]
pub struct CorrectedOperators {
    pub a11: DenseMatrix,
    /// Compact layout, unchanged from the model.
    pub h: DenseMatrix,
    /// `H(I ⊗ S⊥ + S⊥ ⊗ I)`.
    pub n: DenseMatrix,
    /// `H(S⊥ ⊗ S⊥)`.
    pub c2: Vector,
    /// `A11 S⊥`.
    pub a11_s_perp: Vector,
    pub s_perp: Vector,
}

pub fn corrected_operators(model: &QuadDaeModel, proj: &LerayProjector) -> Result<CorrectedOperators> {
    let s = proj.s_perp(model)?;
    let nv = model.nv();
    let mut n = DenseMatrix::zeros(nv, nv);
    for i in 0..nv {
        let mut e = Vector::zeros(nv);
        e[i] = 1.0;
        let col = &model.h * sym_features(&e, &s) * 2.0;
        n.set_column(i, &col);
    }
    Ok(CorrectedOperators {
        a11: model.a11.clone(),
        h: model.h.clone(),
        n,
        c2: &model.h * quadratic_vector(&s),
        a11_s_perp: &model.a11 * &s,
        s_perp: s,
    })
}

/// `Π̃ = I − Q Qᵀ` with `Q` an orthonormal basis of the pressure-gradient snapshots.
#[derive(Debug, Clone)]
pub struct EmpiricalProjector {
    pub q: DenseMatrix,
}

impl EmpiricalProjector {
    pub fn apply_mat(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.nrows() != self.q.nrows() {
            return Err(Error::dim("empirical projector operand rows", self.q.nrows(), x.nrows()));
        }
        Ok(x - &self.q * (self.q.transpose() * x))
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.q.nrows();
        DenseMatrix::identity(n, n) - &self.q * self.q.transpose()
    }
}

/// Builds `Π̃` from snapshots `A12 p(t_k)`. All-zero snapshots give `Π̃ = I`.
pub fn empirical_divfree_projector(pressure_gradients: &DenseMatrix) -> Result<EmpiricalProjector> {
    crate::linalg::ensure_finite(pressure_gradients, "pressure-gradient snapshots")?;
    let nv = pressure_gradients.nrows();
    if pressure_gradients.ncols() == 0 || pressure_gradients.iter().all(|&x| x == 0.0) {
        return Ok(EmpiricalProjector {
            q: DenseMatrix::zeros(nv, 0),
        });
    }
    Ok(EmpiricalProjector {
        q: orthonormal_span(pressure_gradients, 1e-13)?,
    })
}
