//! POD bases and intrusive Galerkin reduction.

use crate::error::{Error, Result};
use crate::linalg::{quad_dim, quad_index, spd_factor, sym_features, thin_svd, DenseMatrix, SpdFactor, Vector};
use crate::model::{QuadDaeModel, ReducedQuadModel};
use crate::transform::{corrected_operators, LerayProjector};

/// Relative singular-value threshold defining numerical rank.
pub const RANK_REL_TOL: f64 = 1e-13;

/// Reduction basis, orthonormal in the Euclidean or the `E11` inner product.
#[derive(Debug, Clone)]
pub struct PodBasis {
    pub vectors: DenseMatrix,
    /// All singular values of the (possibly weighted) snapshot matrix, descending.
    pub singular_values: Vec<f64>,
    /// Cholesky factor `L` of `E11` for a mass-weighted basis.
    pub weight: Option<DenseMatrix>,
}

impl PodBasis {
    pub fn order(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn numerical_rank(&self) -> usize {
        numerical_rank(&self.singular_values)
    }

    /// Leading `r` columns.
    pub fn truncate(&self, r: usize) -> Result<PodBasis> {
        if r == 0 || r > self.order() {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate an order-{} basis to {r}",
                self.order()
            )));
        }
        Ok(PodBasis {
            vectors: self.vectors.columns(0, r).into_owned(),
            singular_values: self.singular_values.clone(),
            weight: self.weight.clone(),
        })
    }
}

pub fn numerical_rank(sv: &[f64]) -> usize {
    match sv.first() {
        Some(&s0) if s0 > 0.0 => sv.iter().take_while(|&&s| s > RANK_REL_TOL * s0).count(),
        _ => 0,
    }
}

/// Dominant `r`-dimensional POD basis.
///
/// Plain: the `r` leading left singular vectors of the snapshots. Weighted by
/// `E11 = L Lᵀ`: `V = L⁻ᵀ Ũ_r` with `Ũ_r` the leading left singular vectors of
/// `Lᵀ · snapshots`, so that `Vᵀ E11 V = I` and `V` minimizes the projection
/// error in the `E11` norm.
pub fn pod_basis(snapshots: &DenseMatrix, r: usize, weight: Option<&DenseMatrix>) -> Result<PodBasis> {
    if r == 0 {
        return Err(Error::InvalidArgument("POD order must be at least 1".into()));
    }
    let factor: Option<SpdFactor> = match weight {
        Some(e) => {
            if e.nrows() != snapshots.nrows() {
                return Err(Error::dim("POD weight size", snapshots.nrows(), e.nrows()));
            }
            Some(spd_factor(e)?)
        }
        None => None,
    };
    let data = match &factor {
        Some(f) => f.mul_lt(snapshots),
        None => snapshots.clone(),
    };
    let (u, sv, _) = thin_svd(&data)?;
    let rank = numerical_rank(&sv);
    if r > rank {
        return Err(Error::RankDeficient {
            requested: r,
            available: rank,
        });
    }
    let lead = u.columns(0, r).into_owned();
    let vectors = match &factor {
        Some(f) => f.solve_lt(&lead),
        None => lead,
    };
    Ok(PodBasis {
        vectors,
        singular_values: sv,
        weight: factor.map(|f| f.l()),
    })
}

/// `‖A12ᵀ V‖_F / ‖V‖_F`.
pub fn constraint_residual(a12: &DenseMatrix, basis: &DenseMatrix) -> Result<f64> {
    if a12.nrows() != basis.nrows() {
        return Err(Error::dim("constraint_residual rows", a12.nrows(), basis.nrows()));
    }
    let vn = basis.norm();
    if vn == 0.0 {
        return Err(Error::Empty("constraint_residual of a zero basis"));
    }
    Ok((a12.transpose() * basis).norm() / vn)
}

/// `X̂ = Vᵀ X`.
pub fn project_snapshots(basis: &PodBasis, snapshots: &DenseMatrix) -> Result<DenseMatrix> {
    if basis.dim() != snapshots.nrows() {
        return Err(Error::dim("project_snapshots rows", basis.dim(), snapshots.nrows()));
    }
    Ok(basis.vectors.transpose() * snapshots)
}

/// Compact reduced quadratic operator `Vᵀ H (V ⊗ V)` of a compact full operator.
pub fn reduce_quadratic(h: &DenseMatrix, v: &DenseMatrix, left: &DenseMatrix) -> DenseMatrix {
    let r = v.ncols();
    let cols: Vec<Vector> = (0..r).map(|i| v.column(i).into_owned()).collect();
    let mut out = DenseMatrix::zeros(left.ncols(), quad_dim(r));
    for i in 0..r {
        for j in i..r {
            let scale = if i == j { 1.0 } else { 2.0 };
            let col = left.transpose() * (h * sym_features(&cols[i], &cols[j])) * scale;
            out.set_column(quad_index(r, i, j), &col);
        }
    }
    out
}

/// Galerkin-projected DAE operators.
#[derive(Debug, Clone)]
pub struct GalerkinRom {
    pub e: DenseMatrix,
    pub a: DenseMatrix,
    /// `Vᵀ A12 Vp` (or `Vᵀ A12` without a pressure basis).
    pub a12: DenseMatrix,
    pub h: DenseMatrix,
    pub b: DenseMatrix,
    /// `‖Ã12‖ ≤ 1e-10`: the reduced velocity equation does not see the pressure.
    pub decoupled: bool,
}

impl GalerkinRom {
    /// Pure ODE form `x' = Ẽ⁻¹Ã x + Ẽ⁻¹H̃ φ(x) + Ẽ⁻¹B̃ u`, dropping `Ã12`.
    pub fn ode(&self) -> Result<ReducedQuadModel> {
        let ef = spd_factor(&crate::model::symmetrize(&self.e)).map_err(|_| Error::Singular("reduced mass matrix"))?;
        let mut rom = ReducedQuadModel::new(ef.solve(&self.a));
        rom.h = Some(ef.solve(&self.h));
        rom.b = Some(ef.solve(&self.b));
        Ok(rom)
    }
}

pub fn galerkin_reduce(model: &QuadDaeModel, vv: &PodBasis, vp: Option<&PodBasis>) -> Result<GalerkinRom> {
    model.check_shapes()?;
    if vv.dim() != model.nv() {
        return Err(Error::dim("velocity basis rows", model.nv(), vv.dim()));
    }
    let v = &vv.vectors;
    let vt = v.transpose();
    let a12 = match vp {
        Some(p) => {
            if p.dim() != model.np() {
                return Err(Error::dim("pressure basis rows", model.np(), p.dim()));
            }
            &vt * &model.a12 * &p.vectors
        }
        None => &vt * &model.a12,
    };
    let e = &vt * &model.e11 * v;
    spd_factor(&crate::model::symmetrize(&e)).map_err(|_| Error::Singular("reduced mass matrix VᵀE11V"))?;
    let decoupled = a12.norm() <= 1e-10;
    Ok(GalerkinRom {
        a: &vt * &model.a11 * v,
        h: reduce_quadratic(&model.h, v, v),
        b: &vt * &model.b1,
        a12,
        e,
        decoupled,
    })
}

/// Galerkin reduction of the corrected `v⊤` equation with a divergence-free basis.
/// The state is approximated by `v ≈ V x + S⊥ u⊥`; the returned model carries
/// the bilinear (`N`), `u⊥` and `u⊥²` terms. The `u̇⊥` term vanishes because
/// `Vᵀ E11 S⊥ = −Vᵀ A12 S⁻¹ Bperp = 0`.
pub fn galerkin_reduce_corrected(model: &QuadDaeModel, proj: &LerayProjector, vv: &PodBasis) -> Result<(ReducedQuadModel, Vector)> {
    let base = galerkin_reduce(model, vv, None)?;
    let corr = corrected_operators(model, proj)?;
    let mut rom = base.ode()?;
    let ef = spd_factor(&crate::model::symmetrize(&base.e))?;
    let vt = vv.vectors.transpose();
    rom.n = Some(ef.solve(&(&vt * &corr.n * &vv.vectors)));
    let to_vec = |m: DenseMatrix| Vector::from_column_slice(m.as_slice());
    let col = |x: &Vector| DenseMatrix::from_column_slice(x.len(), 1, x.as_slice());
    rom.d = Some(to_vec(ef.solve(&(&vt * col(&corr.a11_s_perp)))));
    rom.e = Some(to_vec(ef.solve(&(&vt * col(&corr.c2)))));
    Ok((rom, corr.s_perp))
}

/// Replaces every column by its Leray projection and re-orthonormalizes
/// (Euclidean, or in `E11` for a weighted basis). Directions annihilated by the
/// projection are dropped.
pub fn divfree_correct(basis: &PodBasis, proj: &LerayProjector) -> Result<PodBasis> {
    let projected = proj.apply_mat(&basis.vectors)?;
    let vectors = match &basis.weight {
        None => {
            let (u, sv, _) = thin_svd(&projected)?;
            let rank = numerical_rank(&sv).min(basis.order());
            if rank == 0 {
                return Err(Error::RankDeficient {
                    requested: basis.order(),
                    available: 0,
                });
            }
            u.columns(0, rank).into_owned()
        }
        Some(l) => {
            let lt = l.transpose();
            let (u, sv, _) = thin_svd(&(&lt * &projected))?;
            let rank = numerical_rank(&sv).min(basis.order());
            if rank == 0 {
                return Err(Error::RankDeficient {
                    requested: basis.order(),
                    available: 0,
                });
            }
            let lead = u.columns(0, rank).into_owned();
            lt.solve_upper_triangular(&lead).ok_or(Error::Singular("E11 factor"))?
        }
    };
    Ok(PodBasis {
        vectors,
        singular_values: basis.singular_values.clone(),
        weight: basis.weight.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gram_deviation;
    use crate::model::{random_demo, SplitMix64};

    #[test]
    fn diagonal_snapshots() {
        let s = DenseMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let b = pod_basis(&s, 1, None).unwrap();
        assert!((b.vectors[(0, 0)].abs() - 1.0).abs() < 1e-15);
        assert!(b.vectors[(1, 0)].abs() < 1e-15);
        assert_eq!(b.singular_values.len(), 2);
        assert!((b.singular_values[0] - 2.0).abs() < 1e-15 && (b.singular_values[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn full_rank_reproduces_snapshots() {
        let s = SplitMix64::new(3).normal_matrix(6, 4);
        let b = pod_basis(&s, 4, None).unwrap();
        let rec = &b.vectors * (b.vectors.transpose() * &s);
        assert!((s - rec).norm() <= 1e-10);
        assert!(gram_deviation(&b.vectors) < 1e-10);
    }

    #[test]
    fn weighted_basis_is_mass_orthonormal() {
        let e = DenseMatrix::from_diagonal(&Vector::from_vec(vec![4.0, 1.0]));
        let s = DenseMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.5, -1.0, 0.3, 2.0]);
        let b = pod_basis(&s, 2, Some(&e)).unwrap();
        let g = b.vectors.transpose() * &e * &b.vectors;
        assert!((g - DenseMatrix::identity(2, 2)).norm() < 1e-12);
        assert!(b.weight.is_some());
    }

    #[test]
    fn rank_checks() {
        let s = DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            pod_basis(&s, 2, None),
            Err(Error::RankDeficient {
                requested: 2,
                available: 1
            })
        ));
        assert!(pod_basis(&s, 0, None).is_err());
    }

    #[test]
    fn constraint_residual_examples() {
        let a12 = DenseMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert_eq!(constraint_residual(&a12, &a12).unwrap(), 1.0);
        assert_eq!(constraint_residual(&DenseMatrix::zeros(2, 1), &a12).unwrap(), 0.0);
        assert!(constraint_residual(&a12, &DenseMatrix::zeros(2, 1)).is_err());

        let m = random_demo(8, 6, 2, 1).unwrap();
        let proj = LerayProjector::new(&m).unwrap();
        let raw = PodBasis {
            vectors: SplitMix64::new(2).normal_matrix(6, 3),
            singular_values: vec![],
            weight: None,
        };
        let fixed = divfree_correct(&raw, &proj).unwrap();
        assert!(constraint_residual(&m.a12, &fixed.vectors).unwrap() <= 1e-10);
    }

    #[test]
    fn projection_examples() {
        let id = PodBasis {
            vectors: DenseMatrix::identity(3, 3),
            singular_values: vec![],
            weight: None,
        };
        let x = SplitMix64::new(1).normal_matrix(3, 5);
        assert_eq!(project_snapshots(&id, &x).unwrap(), x);
        let e1 = PodBasis {
            vectors: DenseMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]),
            singular_values: vec![],
            weight: None,
        };
        let ortho = DenseMatrix::from_column_slice(3, 1, &[0.0, 2.0, -1.0]);
        assert_eq!(project_snapshots(&e1, &ortho).unwrap()[(0, 0)], 0.0);
        let inside = DenseMatrix::from_column_slice(3, 1, &[3.5, 0.0, 0.0]);
        assert_eq!(&e1.vectors * project_snapshots(&e1, &inside).unwrap(), inside);
        assert!(project_snapshots(&e1, &DenseMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn galerkin_identity_basis_is_exact() {
        let m = random_demo(6, 4, 1, 2).unwrap();
        let id = PodBasis {
            vectors: DenseMatrix::identity(4, 4),
            singular_values: vec![],
            weight: None,
        };
        let g = galerkin_reduce(&m, &id, None).unwrap();
        assert!((g.e.clone() - &m.e11).norm() < 1e-15);
        assert!((g.a.clone() - &m.a11).norm() < 1e-15);
        assert!((g.h.clone() - &m.h).norm() < 1e-15);
        assert!((g.b.clone() - &m.b1).norm() < 1e-15);
        assert!((g.a12.clone() - &m.a12).norm() < 1e-15);
        assert!(!g.decoupled);
    }

    #[test]
    fn galerkin_first_unit_vector() {
        let m = random_demo(6, 4, 1, 2).unwrap();
        let e1 = PodBasis {
            vectors: DenseMatrix::from_column_slice(4, 1, &[1.0, 0.0, 0.0, 0.0]),
            singular_values: vec![],
            weight: None,
        };
        let g = galerkin_reduce(&m, &e1, None).unwrap();
        assert_eq!(g.a[(0, 0)], m.a11[(0, 0)]);
        assert_eq!(g.e[(0, 0)], m.e11[(0, 0)]);
        assert_eq!(g.h[(0, 0)], m.h[(0, 0)]);
        assert_eq!(g.b.row(0), m.b1.row(0));
    }

    #[test]
    fn galerkin_quadratic_matches_lifted_evaluation() {
        let m = random_demo(12, 6, 2, 1).unwrap();
        let v = crate::linalg::orthonormal_span(&SplitMix64::new(4).normal_matrix(6, 3), 1e-13).unwrap();
        let basis = PodBasis {
            vectors: v.clone(),
            singular_values: vec![],
            weight: None,
        };
        let g = galerkin_reduce(&m, &basis, None).unwrap();
        let mut rng = SplitMix64::new(77);
        for _ in 0..4 {
            let x = Vector::from_iterator(3, (0..3).map(|_| rng.next_normal()));
            let lhs = &g.h * crate::linalg::quadratic_vector(&x);
            let rhs = v.transpose() * m.quadratic_term(&(&v * &x));
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn divfree_examples() {
        let m = QuadDaeModel {
            e11: DenseMatrix::identity(2, 2),
            a11: -DenseMatrix::identity(2, 2),
            a12: DenseMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            h: DenseMatrix::zeros(2, 3),
            b1: DenseMatrix::zeros(2, 1),
            bperp: None,
            cv: None,
            cp: None,
        };
        let proj = LerayProjector::new(&m).unwrap();
        let b = PodBasis {
            vectors: DenseMatrix::identity(2, 2),
            singular_values: vec![],
            weight: None,
        };
        let c = divfree_correct(&b, &proj).unwrap();
        assert_eq!(c.order(), 1);
        assert!((c.vectors[(1, 0)].abs() - 1.0).abs() < 1e-15);

        let pure = PodBasis {
            vectors: DenseMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            singular_values: vec![],
            weight: None,
        };
        assert!(divfree_correct(&pure, &proj).is_err());
    }

    #[test]
    fn divfree_preserves_divergence_free_span() {
        let m = random_demo(21, 7, 2, 1).unwrap();
        let proj = LerayProjector::new(&m).unwrap();
        let raw = proj.apply_mat(&SplitMix64::new(5).normal_matrix(7, 3)).unwrap();
        let q = crate::linalg::orthonormal_span(&raw, 1e-13).unwrap();
        let b = PodBasis {
            vectors: q.clone(),
            singular_values: vec![],
            weight: None,
        };
        let c = divfree_correct(&b, &proj).unwrap();
        // Largest principal angle: ‖(I − QQᵀ) C‖₂.
        let resid = &c.vectors - &q * (q.transpose() * &c.vectors);
        assert!(resid.norm() < 1e-12);
    }

    #[test]
    fn weighted_divfree_stays_mass_orthonormal() {
        let m = random_demo(21, 7, 2, 1).unwrap();
        let proj = LerayProjector::new(&m).unwrap();
        let snaps = SplitMix64::new(5).normal_matrix(7, 5);
        let b = pod_basis(&snaps, 4, Some(&m.e11)).unwrap();
        let c = divfree_correct(&b, &proj).unwrap();
        let g = c.vectors.transpose() * &m.e11 * &c.vectors;
        assert!((g - DenseMatrix::identity(c.order(), c.order())).norm() < 1e-10);
        assert!(constraint_residual(&m.a12, &c.vectors).unwrap() <= 1e-10);
    }
}
