//! Discrete-time DMD baselines fitted on snapshot pairs `x_k → x_{k+1}`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, min_norm_lstsq_with, quad_dim, quadratic_features, quadratic_vector, DenseMatrix, Tolerance, Vector};

pub const DEFAULT_TOL: Tolerance = Tolerance::Relative(1e-10);

/// `x_{k+1} = A x_k + H φ(x_k) + B u_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub a: DenseMatrix,
    pub b: Option<DenseMatrix>,
    /// Compact quadratic operator, `r × r(r+1)/2`.
    pub h: Option<DenseMatrix>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DmdInfo {
    pub rank: usize,
    pub tol_used: f64,
}

impl DiscreteModel {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn step(&self, x: &Vector, u: Option<&Vector>) -> Vector {
        let mut next = &self.a * x;
        if let Some(h) = &self.h {
            next += h * quadratic_vector(x);
        }
        if let (Some(b), Some(u)) = (&self.b, u) {
            next += b * u;
        }
        next
    }
}

fn pairs(x: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    if x.ncols() < 2 {
        return Err(Error::InvalidArgument(format!("DMD needs at least 2 snapshots, got {}", x.ncols())));
    }
    let k = x.ncols() - 1;
    Ok((x.columns(0, k).into_owned(), x.columns(1, k).into_owned()))
}

fn inputs_for(u: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    if u.ncols() < k {
        return Err(Error::dim("DMD input columns", k + 1, u.ncols()));
    }
    Ok(u.columns(0, k).into_owned())
}

// A data matrix with no singular value above the threshold (e.g. a zero
// trajectory) yields the zero operator rather than an error.
fn fit(d: &DenseMatrix, rhs: &DenseMatrix, tol: Tolerance) -> Result<(DenseMatrix, DmdInfo)> {
    ensure_finite(d, "DMD regressors")?;
    match min_norm_lstsq_with(d, rhs, tol) {
        Ok((op, svd)) => Ok((
            op,
            DmdInfo {
                rank: svd.rank,
                tol_used: svd.tol_used,
            },
        )),
        Err(Error::ToleranceTooLarge { tol, .. }) => Ok((DenseMatrix::zeros(rhs.nrows(), d.nrows()), DmdInfo { rank: 0, tol_used: tol })),
        Err(e) => Err(e),
    }
}

fn stack(parts: &[&DenseMatrix]) -> DenseMatrix {
    let rows = parts.iter().map(|p| p.nrows()).sum();
    let cols = parts[0].ncols();
    let mut out = DenseMatrix::zeros(rows, cols);
    let mut off = 0;
    for p in parts {
        out.view_mut((off, 0), (p.nrows(), cols)).copy_from(*p);
        off += p.nrows();
    }
    out
}

pub fn dmd(x: &DenseMatrix, tol: Tolerance) -> Result<(DiscreteModel, DmdInfo)> {
    let (x0, x1) = pairs(x)?;
    let (a, info) = fit(&x0, &x1, tol)?;
    Ok((DiscreteModel { a, b: None, h: None }, info))
}

/// DMD with control; `u` needs at least one column per pair.
pub fn dmdc(x: &DenseMatrix, u: &DenseMatrix, tol: Tolerance) -> Result<(DiscreteModel, DmdInfo)> {
    let (x0, x1) = pairs(x)?;
    let uk = inputs_for(u, x0.ncols())?;
    let r = x.nrows();
    let (op, info) = fit(&stack(&[&x0, &uk]), &x1, tol)?;
    Ok((
        DiscreteModel {
            a: op.columns(0, r).into_owned(),
            b: Some(op.columns(r, uk.nrows()).into_owned()),
            h: None,
        },
        info,
    ))
}

/// DMD with a quadratic term and control.
pub fn dmdquad(x: &DenseMatrix, u: &DenseMatrix, tol: Tolerance) -> Result<(DiscreteModel, DmdInfo)> {
    let (x0, x1) = pairs(x)?;
    let uk = inputs_for(u, x0.ncols())?;
    let r = x.nrows();
    let q = quad_dim(r);
    let (op, info) = fit(&stack(&[&x0, &quadratic_features(&x0), &uk]), &x1, tol)?;
    Ok((
        DiscreteModel {
            a: op.columns(0, r).into_owned(),
            h: Some(op.columns(r, q).into_owned()),
            b: Some(op.columns(r + q, uk.nrows()).into_owned()),
        },
        info,
    ))
}

/// Iterates the map for `steps` steps, returning `steps + 1` columns.
/// Input column `k` drives step `k`.
pub fn rollout(model: &DiscreteModel, x0: &Vector, u: Option<&DenseMatrix>, steps: usize) -> Result<DenseMatrix> {
    let r = model.order();
    if x0.len() != r {
        return Err(Error::dim("rollout initial state", r, x0.len()));
    }
    if let Some(b) = &model.b {
        let u = u.ok_or_else(|| Error::InvalidArgument("model has an input operator but no inputs were given".into()))?;
        if u.nrows() != b.ncols() {
            return Err(Error::dim("rollout input rows", b.ncols(), u.nrows()));
        }
        if u.ncols() < steps {
            return Err(Error::dim("rollout input columns", steps, u.ncols()));
        }
    }
    let mut out = DenseMatrix::zeros(r, steps + 1);
    out.set_column(0, x0);
    let mut x = x0.clone();
    for k in 0..steps {
        let uk = u.map(|u| u.column(k).into_owned());
        x = model.step(&x, uk.as_ref());
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                step: k + 1,
                time: (k + 1) as f64,
            });
        }
        out.set_column(k + 1, &x);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SplitMix64;

    const EXACT: Tolerance = Tolerance::Absolute(0.0);

    fn row(v: &[f64]) -> DenseMatrix {
        DenseMatrix::from_row_slice(1, v.len(), v)
    }

    #[test]
    fn geometric_sequence() {
        let (m, _) = dmd(&row(&[1.0, 0.5, 0.25]), EXACT).unwrap();
        assert!((m.a[(0, 0)] - 0.5).abs() < 1e-14);
        assert!(dmd(&row(&[1.0]), EXACT).is_err());
    }

    #[test]
    fn constant_data_is_fixed_point() {
        let x = DenseMatrix::from_fn(3, 6, |i, _| [1.0, -2.0, 0.5][i]);
        let (m, _) = dmd(&x, DEFAULT_TOL).unwrap();
        let c = x.column(0).into_owned();
        assert!((&m.a * &c - &c).norm() < 1e-12);
    }

    #[test]
    fn dmdc_hand_solve() {
        let (m, _) = dmdc(&row(&[1.0, 1.5, 1.75]), &row(&[1.0, 1.0]), EXACT).unwrap();
        assert!((m.a[(0, 0)] - 0.5).abs() < 1e-13);
        assert!((m.b.unwrap()[(0, 0)] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn dmdc_with_zero_input_matches_dmd() {
        let a = DenseMatrix::from_row_slice(2, 2, &[0.9, 0.1, -0.2, 0.8]);
        let x = rollout(&DiscreteModel { a, b: None, h: None }, &Vector::from_vec(vec![1.0, 0.3]), None, 8).unwrap();
        let (plain, _) = dmd(&x, DEFAULT_TOL).unwrap();
        let (ctrl, _) = dmdc(&x, &DenseMatrix::zeros(1, 8), DEFAULT_TOL).unwrap();
        assert!((plain.a - ctrl.a).norm() < 1e-12);
        assert_eq!(ctrl.b.unwrap().norm(), 0.0);
    }

    #[test]
    fn random_linear_recovery() {
        let mut rng = SplitMix64::new(11);
        let a = rng.normal_matrix(4, 4) * 0.2;
        let b = rng.normal_matrix(4, 2);
        let u = rng.normal_matrix(2, 30);
        let truth = DiscreteModel {
            a: a.clone(),
            b: Some(b.clone()),
            h: None,
        };
        let x = rollout(&truth, &rng.normal_matrix(4, 1).column(0).into_owned(), Some(&u), 30).unwrap();
        let (m, info) = dmdc(&x, &u, EXACT).unwrap();
        assert_eq!(info.rank, 6);
        assert!((&m.a - &a).norm() < 1e-10);
        assert!((m.b.as_ref().unwrap() - b).norm() < 1e-10);

        let free = DiscreteModel {
            a: a.clone(),
            b: None,
            h: None,
        };
        let x = rollout(&free, &rng.normal_matrix(4, 1).column(0).into_owned(), None, 12).unwrap();
        let (m, info) = dmd(&x, EXACT).unwrap();
        assert_eq!(info.rank, 4);
        assert!((&m.a - &a).norm() < 1e-10);
    }

    #[test]
    fn recovered_dmdc_rollout_reproduces_data() {
        let mut rng = SplitMix64::new(12);
        let truth = DiscreteModel {
            a: rng.normal_matrix(3, 3) * 0.3,
            b: Some(rng.normal_matrix(3, 1)),
            h: None,
        };
        let u = rng.normal_matrix(1, 20);
        let x0 = Vector::from_vec(vec![1.0, 0.0, -1.0]);
        let x = rollout(&truth, &x0, Some(&u), 20).unwrap();
        let (m, _) = dmdc(&x, &u, DEFAULT_TOL).unwrap();
        assert!((rollout(&m, &x0, Some(&u), 20).unwrap() - x).norm() < 1e-8);
    }

    #[test]
    fn quadratic_recovery_and_linear_data() {
        let mut rng = SplitMix64::new(5);
        let (r, m) = (2, 1);
        let a = rng.normal_matrix(r, r) * 0.3;
        let h = rng.normal_matrix(r, quad_dim(r)) * 0.1;
        let b = rng.normal_matrix(r, m);
        let u = rng.normal_matrix(m, 40) * 0.5;
        let truth = DiscreteModel {
            a: a.clone(),
            b: Some(b.clone()),
            h: Some(h.clone()),
        };
        let x = rollout(&truth, &Vector::from_vec(vec![0.4, -0.3]), Some(&u), 40).unwrap();
        let (fit, info) = dmdquad(&x, &u, EXACT).unwrap();
        assert_eq!(info.rank, r + quad_dim(r) + m);
        assert!((fit.a - a).norm() < 1e-9);
        assert!((fit.h.unwrap() - h).norm() < 1e-9);
        assert!((fit.b.unwrap() - b).norm() < 1e-9);

        // Purely linear data: the quadratic block is identified as zero.
        let x = rollout(
            &DiscreteModel { h: None, ..truth },
            &Vector::from_vec(vec![0.4, -0.3]),
            Some(&u),
            40,
        )
        .unwrap();
        let (fit, _) = dmdquad(&x, &u, EXACT).unwrap();
        assert!(fit.h.unwrap().norm() < 1e-9);
    }

    #[test]
    fn zero_trajectory_gives_zero_operators() {
        let (m, info) = dmdquad(&DenseMatrix::zeros(2, 5), &DenseMatrix::zeros(1, 5), DEFAULT_TOL).unwrap();
        assert_eq!(info.rank, 0);
        assert_eq!(m.a.norm() + m.h.unwrap().norm() + m.b.unwrap().norm(), 0.0);
    }

    #[test]
    fn rollout_examples() {
        let half = DiscreteModel {
            a: DenseMatrix::from_element(1, 1, 0.5),
            b: None,
            h: None,
        };
        let x = rollout(&half, &Vector::from_element(1, 1.0), None, 3).unwrap();
        assert_eq!(x, row(&[1.0, 0.5, 0.25, 0.125]));
        let id = DiscreteModel {
            a: DenseMatrix::identity(2, 2),
            b: Some(DenseMatrix::zeros(2, 1)),
            h: Some(DenseMatrix::zeros(2, 3)),
        };
        let x = rollout(&id, &Vector::from_vec(vec![1.0, 2.0]), Some(&DenseMatrix::zeros(1, 4)), 4).unwrap();
        assert!(x.column_iter().all(|c| c == x.column(0)));
        let blow = DiscreteModel {
            a: DenseMatrix::from_element(1, 1, 1e200),
            b: None,
            h: None,
        };
        assert!(matches!(
            rollout(&blow, &Vector::from_element(1, 1e200), None, 3),
            Err(Error::BlowUp { .. })
        ));
        assert!(rollout(&id, &Vector::from_vec(vec![1.0, 2.0]), None, 2).is_err());
    }
}
