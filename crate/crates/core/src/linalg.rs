//! Dense linear algebra shared by the whole pipeline.
//!
//! Matrices are `nalgebra::DMatrix<f64>` (column-major). Quadratic terms use two
//! layouts: the full Kronecker layout, where `x ⊗ x` has `n²` entries indexed
//! `i * n + j`, and the compact layout holding the unique monomials `x_i x_j`
//! for `i <= j` in lexicographic order.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Gram deviation allowed for the orthonormal factors of an SVD.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// Number of unique quadratic monomials in `n` variables.
pub fn quad_dim(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Position of the monomial `x_i x_j` (`i <= j`) in the compact layout.
pub fn quad_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < n);
    i * n - i * (i + 1) / 2 + j
}

/// Inverse of [`quad_dim`]: the `n` with `n(n+1)/2 == k`, if any.
pub fn quad_order(k: usize) -> Option<usize> {
    let mut n = ((2.0 * k as f64).sqrt()) as usize;
    while quad_dim(n) < k {
        n += 1;
    }
    while n > 0 && quad_dim(n) > k {
        n -= 1;
    }
    (quad_dim(n) == k).then_some(n)
}

pub(crate) fn ensure_finite(m: &DenseMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Column-wise Kronecker product: column `i` of the result is `g_i ⊗ g_i`.
pub fn kron_columnwise(g: &DenseMatrix) -> Result<DenseMatrix> {
    ensure_finite(g, "kron_columnwise input")?;
    let r = g.nrows();
    let mut out = DenseMatrix::zeros(r * r, g.ncols());
    for (c, col) in g.column_iter().enumerate() {
        for i in 0..r {
            for j in 0..r {
                out[(i * r + j, c)] = col[i] * col[j];
            }
        }
    }
    Ok(out)
}

/// Merges the duplicated cross terms of a column-wise Kronecker product into
/// the compact monomial layout. Cross terms keep the value `x_i x_j`.
pub fn compress_quadratic(g_kron: &DenseMatrix) -> Result<DenseMatrix> {
    let rows = g_kron.nrows();
    let r = (rows as f64).sqrt().round() as usize;
    if r * r != rows {
        return Err(Error::dim("compress_quadratic rows", "a perfect square", rows));
    }
    let mut out = DenseMatrix::zeros(quad_dim(r), g_kron.ncols());
    for c in 0..g_kron.ncols() {
        let mut k = 0;
        for i in 0..r {
            for j in i..r {
                out[(k, c)] = g_kron[(i * r + j, c)];
                k += 1;
            }
        }
    }
    Ok(out)
}

/// Compact quadratic features of every column, equivalent to
/// `compress_quadratic(kron_columnwise(x))` without the `r²` intermediate.
pub fn quadratic_features(x: &DenseMatrix) -> DenseMatrix {
    let r = x.nrows();
    let mut out = DenseMatrix::zeros(quad_dim(r), x.ncols());
    for (c, col) in x.column_iter().enumerate() {
        let mut k = 0;
        for i in 0..r {
            for j in i..r {
                out[(k, c)] = col[i] * col[j];
                k += 1;
            }
        }
    }
    out
}

/// Compact features of a single vector.
pub fn quadratic_vector(x: &Vector) -> Vector {
    let r = x.len();
    let mut out = Vector::zeros(quad_dim(r));
    let mut k = 0;
    for i in 0..r {
        for j in i..r {
            out[k] = x[i] * x[j];
            k += 1;
        }
    }
    out
}

/// Symmetrized compact features of `a ⊗ b`: for a compact operator `H`,
/// `H * sym_features(a, b) == (H_full (a⊗b) + H_full (b⊗a)) / 2`.
pub fn sym_features(a: &Vector, b: &Vector) -> Vector {
    let r = a.len();
    let mut out = Vector::zeros(quad_dim(r));
    let mut k = 0;
    for i in 0..r {
        out[k] = a[i] * b[i];
        k += 1;
        for j in (i + 1)..r {
            out[k] = 0.5 * (a[i] * b[j] + a[j] * b[i]);
            k += 1;
        }
    }
    out
}

/// Converts a compact quadratic operator to the `H (v ⊗ v)` convention,
/// splitting every cross-term coefficient evenly between its two slots.
pub fn expand_quadratic_operator(h_compact: &DenseMatrix) -> Result<DenseMatrix> {
    let r = quad_order(h_compact.ncols())
        .ok_or_else(|| Error::dim("expand_quadratic_operator cols", "a triangular number", h_compact.ncols()))?;
    let mut out = DenseMatrix::zeros(h_compact.nrows(), r * r);
    let mut k = 0;
    for i in 0..r {
        out.set_column(i * r + i, &h_compact.column(k));
        k += 1;
        for j in (i + 1)..r {
            let half = h_compact.column(k) * 0.5;
            out.set_column(i * r + j, &half);
            out.set_column(j * r + i, &half);
            k += 1;
        }
    }
    Ok(out)
}

/// Inverse of [`expand_quadratic_operator`]; accepts any full operator, symmetric or not.
pub fn compress_quadratic_operator(h_full: &DenseMatrix) -> Result<DenseMatrix> {
    let cols = h_full.ncols();
    let r = (cols as f64).sqrt().round() as usize;
    if r * r != cols {
        return Err(Error::dim("compress_quadratic_operator cols", "a perfect square", cols));
    }
    let mut out = DenseMatrix::zeros(h_full.nrows(), quad_dim(r));
    let mut k = 0;
    for i in 0..r {
        out.set_column(k, &h_full.column(i * r + i));
        k += 1;
        for j in (i + 1)..r {
            let merged = h_full.column(i * r + j) + h_full.column(j * r + i);
            out.set_column(k, &merged);
            k += 1;
        }
    }
    Ok(out)
}

/// Singular triplets with `σ > tol_used`.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub left_vectors: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub right_vectors: DenseMatrix,
    pub rank: usize,
    pub tol_used: f64,
    /// Every singular value of the input, descending, including the dropped ones.
    pub all_singular_values: Vec<f64>,
}

impl TruncatedSvd {
    /// `Ũ Σ̃ Ṽᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.left_vectors.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.right_vectors.transpose()
    }
}

/// Full thin SVD with singular values sorted descending.
pub(crate) fn thin_svd(m: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::Empty("svd of an empty matrix"));
    }
    ensure_finite(m, "svd input")?;
    // nalgebra's SVD loses accuracy on clustered spectra (e.g. projector
    // images), so the decomposition itself is delegated to faer.
    // Sequential kernels keep results independent of the thread count.
    faer::set_global_parallelism(faer::Par::Seq);
    let fm = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let svd = fm.thin_svd().map_err(|_| Error::NonFinite("svd did not converge"))?;
    let (fu, fv) = (svd.U(), svd.V());
    let fs = svd.S().column_vector();
    let k = fs.nrows();
    let u = DenseMatrix::from_fn(m.nrows(), k, |i, j| fu[(i, j)]);
    let v = DenseMatrix::from_fn(m.ncols(), k, |i, j| fv[(i, j)]);
    let s: Vec<f64> = (0..k).map(|i| fs[i]).collect();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let mut left = DenseMatrix::zeros(m.nrows(), k);
    let mut right = DenseMatrix::zeros(m.ncols(), k);
    let mut values = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        left.set_column(dst, &u.column(src));
        right.set_column(dst, &v.column(src));
        values.push(s[src]);
    }
    Ok((left, values, right))
}

/// Deterministic SVD keeping exactly the triplets with `σ > tol`.
///
/// A rank-0 result is returned as such; callers decide whether that is an error.
pub fn truncated_svd(m: &DenseMatrix, tol: f64) -> Result<TruncatedSvd> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("svd tolerance must be >= 0, got {tol}")));
    }
    let (u, s, v) = thin_svd(m)?;
    let rank = s.iter().take_while(|&&x| x > tol).count();
    Ok(TruncatedSvd {
        left_vectors: u.columns(0, rank).into_owned(),
        singular_values: s[..rank].to_vec(),
        right_vectors: v.columns(0, rank).into_owned(),
        rank,
        tol_used: tol,
        all_singular_values: s,
    })
}

/// How a truncation threshold is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum Tolerance {
    /// Keep `σ > tol`.
    Absolute(f64),
    /// Keep `σ > tol · σ₁`.
    Relative(f64),
}

impl Tolerance {
    pub fn resolve(self, largest: f64) -> f64 {
        match self {
            Tolerance::Absolute(t) => t,
            Tolerance::Relative(t) => t * largest,
        }
    }
}

/// `RHS · Ṽ Σ̃⁻¹ Ũᵀ` from an already computed truncated SVD of the data.
pub(crate) fn lstsq_from_svd(svd: &TruncatedSvd, rhs: &DenseMatrix) -> DenseMatrix {
    let mut rv = rhs * &svd.right_vectors;
    for (j, s) in svd.singular_values.iter().enumerate() {
        rv.column_mut(j).unscale_mut(*s);
    }
    rv * svd.left_vectors.transpose()
}

fn check_lstsq_dims(d: &DenseMatrix, rhs: &DenseMatrix) -> Result<()> {
    if d.ncols() != rhs.ncols() {
        return Err(Error::dim("least-squares sample count", d.ncols(), rhs.ncols()));
    }
    Ok(())
}

/// Minimum-norm solution `X` of `min ‖X·D − RHS‖_F` over the singular
/// directions of `D` with `σ > tol`.
pub fn min_norm_lstsq(d: &DenseMatrix, rhs: &DenseMatrix, tol: f64) -> Result<DenseMatrix> {
    min_norm_lstsq_with(d, rhs, Tolerance::Absolute(tol)).map(|(x, _)| x)
}

/// Like [`min_norm_lstsq`] with a relative or absolute threshold; also returns the SVD used.
pub fn min_norm_lstsq_with(d: &DenseMatrix, rhs: &DenseMatrix, tol: Tolerance) -> Result<(DenseMatrix, TruncatedSvd)> {
    check_lstsq_dims(d, rhs)?;
    ensure_finite(rhs, "least-squares right-hand side")?;
    let (u, s, v) = thin_svd(d)?;
    let largest = s.first().copied().unwrap_or(0.0);
    let abs_tol = tol.resolve(largest);
    let rank = s.iter().take_while(|&&x| x > abs_tol).count();
    if rank == 0 {
        return Err(Error::ToleranceTooLarge { tol: abs_tol, largest });
    }
    let svd = TruncatedSvd {
        left_vectors: u.columns(0, rank).into_owned(),
        singular_values: s[..rank].to_vec(),
        right_vectors: v.columns(0, rank).into_owned(),
        rank,
        tol_used: abs_tol,
        all_singular_values: s,
    };
    Ok((lstsq_from_svd(&svd, rhs), svd))
}

/// Cholesky factor `L` (lower triangular) with `L Lᵀ = M`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    pub fn l(&self) -> DenseMatrix {
        self.chol.l()
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// `M⁻¹ b`.
    pub fn solve(&self, b: &DenseMatrix) -> DenseMatrix {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &Vector) -> Vector {
        self.chol.solve(b)
    }

    /// `L⁻ᵀ b`.
    pub fn solve_lt(&self, b: &DenseMatrix) -> DenseMatrix {
        let mut x = b.clone();
        self.chol.l_dirty().tr_solve_lower_triangular_mut(&mut x);
        x
    }

    /// `Lᵀ b`.
    pub fn mul_lt(&self, b: &DenseMatrix) -> DenseMatrix {
        self.chol.l().transpose() * b
    }

    /// Reciprocal condition estimate from the factor's diagonal, `(min l_ii / max l_ii)²`.
    pub fn rcond_estimate(&self) -> f64 {
        let l = self.chol.l_dirty();
        let d = l.diagonal();
        let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        if hi == 0.0 {
            0.0
        } else {
            (lo / hi).powi(2)
        }
    }
}

/// Cholesky factorization of a symmetric positive definite matrix.
pub fn spd_factor(m: &DenseMatrix) -> Result<SpdFactor> {
    if m.nrows() != m.ncols() {
        return Err(Error::dim("spd_factor", "square matrix", format!("{}x{}", m.nrows(), m.ncols())));
    }
    if m.nrows() == 0 {
        return Err(Error::Empty("spd_factor of a 0x0 matrix"));
    }
    ensure_finite(m, "spd_factor input")?;
    let scale = m.amax();
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(Error::NotPositiveDefinite("matrix is not symmetric"));
    }
    let sym = (m + m.transpose()) * 0.5;
    Cholesky::new(sym)
        .map(|chol| SpdFactor { chol })
        .ok_or(Error::NotPositiveDefinite("non-positive pivot in Cholesky factorization"))
}

/// Frobenius norm of `Qᵀ Q − I`.
pub fn gram_deviation(q: &DenseMatrix) -> f64 {
    let g = q.transpose() * q;
    (g - DenseMatrix::identity(q.ncols(), q.ncols())).norm()
}

/// Orthonormal basis for the column span of `m`, dropping directions with
/// `σ ≤ rel_tol · σ₁`.
pub fn orthonormal_span(m: &DenseMatrix, rel_tol: f64) -> Result<DenseMatrix> {
    let (u, s, _) = thin_svd(m)?;
    let largest = s.first().copied().unwrap_or(0.0);
    if largest == 0.0 {
        return Ok(DenseMatrix::zeros(m.nrows(), 0));
    }
    let rank = s.iter().take_while(|&&x| x > rel_tol * largest).count();
    Ok(u.columns(0, rank).into_owned())
}
