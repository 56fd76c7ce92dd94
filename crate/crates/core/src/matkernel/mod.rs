//! Dense complex linear algebra used by every other module.
//!
//! Factorisations (LU, SVD, Schur) come from `nalgebra`; the exponential is
//! implemented here. Determinants are returned in [`ScaledComplex`] form.

mod expm;
mod matrix;
mod scaled;

pub use expm::matexp;
pub use matrix::CMatrix;
pub use scaled::ScaledComplex;

use nalgebra::linalg::Schur;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative singular-value threshold used for every rank decision unless a
/// caller overrides it.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Absolute distance under which computed eigenvalues are merged.
pub const EIGEN_CLUSTER_TOL: f64 = 1e-7;

fn require_square(m: &CMatrix, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::dim(format!(
            "{what} needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )))
    }
}

/// Plain LU determinant; exact for `1×1` and used where entries are of
/// moderate size and no log scaling is needed.
pub fn det(m: &CMatrix) -> Result<Complex64> {
    require_square(m, "det")?;
    Ok(m.as_dmatrix().clone().determinant())
}

/// Determinant via partial-pivoting LU, accumulated in log form.
pub fn det_scaled(m: &CMatrix) -> Result<ScaledComplex> {
    require_square(m, "det_scaled")?;
    let n = m.rows();
    let lu = m.as_dmatrix().clone().lu();
    let u = lu.u();
    let mut log_mag = 0.0;
    let mut phase = 0.0;
    for i in 0..n {
        let d = u[(i, i)];
        if d.re == 0.0 && d.im == 0.0 {
            return Ok(ScaledComplex::ZERO);
        }
        log_mag += d.re.hypot(d.im).ln();
        phase += d.im.atan2(d.re);
    }
    if lu.p().determinant::<f64>() < 0.0 {
        phase += std::f64::consts::PI;
    }
    Ok(ScaledComplex::from_log_polar(log_mag, phase))
}

/// Singular values in non-increasing order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = m.as_dmatrix().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values above `tol·σ_max`; the zero matrix has rank 0.
pub fn numerical_rank(m: &CMatrix, tol: f64) -> usize {
    rank_from_singular_values(&singular_values(m), tol, 0.0)
}

/// Rank with an absolute floor: singular values must exceed
/// `tol·max(σ_max, scale)`. `scale` is the magnitude the matrix would have
/// without cancellation, so exact-structure zeros are not promoted to rank 1.
pub fn numerical_rank_scaled(m: &CMatrix, tol: f64, scale: f64) -> usize {
    rank_from_singular_values(&singular_values(m), tol, scale)
}

pub(crate) fn rank_from_singular_values(s: &[f64], tol: f64, scale: f64) -> usize {
    let top = s.first().copied().unwrap_or(0.0).max(scale);
    if top == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > tol * top).count()
}

/// Rows spanning the bilinear orthogonal complement of the row space of `a`:
/// returns `U` with `A·Uᵀ = 0` (plain transpose).
pub fn nullspace_rows(a: &CMatrix, tol: f64) -> Result<CMatrix> {
    let (n, big_n) = a.shape();
    if big_n <= n {
        return Err(Error::dim(format!(
            "nullspace_rows needs more columns than rows, got {n}x{big_n}"
        )));
    }
    let (sigma, rows) = right_singular_rows(a)?;
    let top = sigma[0];
    let sigma_n = sigma[n - 1];
    if top == 0.0 || sigma_n <= tol * top {
        return Err(Error::Degenerate(format!(
            "matrix does not have full row rank {n} (σ_{n}/σ_1 = {:.3e})",
            if top == 0.0 { 0.0 } else { sigma_n / top }
        )));
    }
    Ok(rows.submatrix(n, 0, big_n - n, big_n))
}

/// Singular values of `a` padded to `N×N` (non-increasing) and the matching
/// right singular vectors as rows, unconjugated, so the last `N − rank` rows
/// satisfy `A·uᵀ ≈ 0`.
pub(crate) fn right_singular_rows(a: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let (n, big_n) = a.shape();
    // Pad to square so the SVD returns a full set of right singular vectors.
    let mut padded = DMatrix::<Complex64>::zeros(big_n.max(n), big_n);
    padded.view_mut((0, 0), (n, big_n)).copy_from(a.as_dmatrix());
    let svd = padded.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Degenerate("SVD did not return right singular vectors".into()))?;
    let mut order: Vec<usize> = (0..big_n).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma = order.iter().map(|&k| svd.singular_values[k]).collect();
    // Row k of Vᴴ is conj(v_k)ᵀ; the vectors v_k themselves are wanted.
    let rows = CMatrix::from_fn(big_n, big_n, |i, c| v_t[(order[i], c)].conj());
    Ok((sigma, rows))
}

/// Moore–Penrose pseudo-inverse.
pub fn pseudo_inverse(m: &CMatrix) -> Result<CMatrix> {
    let pinv = m
        .as_dmatrix()
        .clone()
        .pseudo_inverse(1e-14)
        .map_err(|e| Error::Degenerate(e.to_string()))?;
    CMatrix::from_dmatrix(pinv)
}

/// Solves `M·X = rhs`; `None` when `M` is exactly singular.
pub fn solve(m: &CMatrix, rhs: &CMatrix) -> Result<Option<CMatrix>> {
    require_square(m, "solve")?;
    if m.rows() != rhs.rows() {
        return Err(Error::dim("solve: right-hand side has wrong row count"));
    }
    let lu = m.as_dmatrix().clone().lu();
    Ok(lu.solve(rhs.as_dmatrix()).and_then(|x| CMatrix::from_dmatrix(x).ok()))
}

pub fn inverse(m: &CMatrix) -> Result<Option<CMatrix>> {
    solve(m, &CMatrix::identity(m.rows()))
}

/// Reciprocal 2-norm condition number `σ_min/σ_max` (0 for singular input).
pub fn reciprocal_condition(m: &CMatrix) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if hi > 0.0 => lo / hi,
        _ => 0.0,
    }
}

/// Raw eigenvalues (with repetition) from a complex Schur decomposition.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>> {
    require_square(m, "eigenvalues")?;
    let n = m.rows();
    if n == 1 {
        return Ok(vec![m[(0, 0)]]);
    }
    let schur = Schur::try_new(m.as_dmatrix().clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Degenerate("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

/// `M = V·diag(λ)·V⁻¹`.
#[derive(Clone, Debug)]
pub struct Diagonalization {
    pub values: Vec<Complex64>,
    pub vectors: CMatrix,
    pub inverse: CMatrix,
}

/// All `k`-element subsets of `0..n` in lexicographic order.
pub(crate) fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..=n - (k - cur.len()) {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Eigenvectors by back substitution on the Schur factor. Returns `None` for
/// repeated eigenvalues or when `rcond(V) < min_rcond`.
pub fn diagonalize(m: &CMatrix, min_rcond: f64) -> Result<Option<Diagonalization>> {
    require_square(m, "diagonalize")?;
    let n = m.rows();
    if n == 1 {
        let id = CMatrix::identity(1);
        return Ok(Some(Diagonalization {
            values: vec![m[(0, 0)]],
            vectors: id.clone(),
            inverse: id,
        }));
    }
    let schur = Schur::try_new(m.as_dmatrix().clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Degenerate("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let scale = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut y = DMatrix::<Complex64>::zeros(n, n);
    for k in 0..n {
        y[(k, k)] = Complex64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let d = t[(j, j)] - t[(k, k)];
            if d.norm() <= 1e3 * f64::EPSILON * scale {
                return Ok(None);
            }
            let s: Complex64 = (j + 1..=k).map(|l| t[(j, l)] * y[(l, k)]).sum();
            y[(j, k)] = -s / d;
        }
        let norm = y.column(k).norm();
        y.column_mut(k).unscale_mut(norm);
    }
    let vectors = CMatrix::from_dmatrix(q * y)?;
    if reciprocal_condition(&vectors) < min_rcond {
        return Ok(None);
    }
    let Some(inverse) = inverse(&vectors)? else {
        return Ok(None);
    };
    Ok(Some(Diagonalization {
        values: (0..n).map(|i| t[(i, i)]).collect(),
        vectors,
        inverse,
    }))
}

/// An eigenvalue together with its algebraic multiplicity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub value: Complex64,
    pub multiplicity: usize,
}

/// Eigenvalues grouped by single-linkage clustering at
/// [`EIGEN_CLUSTER_TOL`]; each cluster is reported at its centroid.
pub fn eig(m: &CMatrix) -> Result<Vec<Eigenvalue>> {
    Ok(cluster_eigenvalues(&eigenvalues(m)?, EIGEN_CLUSTER_TOL))
}

pub fn cluster_eigenvalues(values: &[Complex64], tol: f64) -> Vec<Eigenvalue> {
    let n = values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if (values[i] - values[j]).norm() <= tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj] = ri;
                }
            }
        }
    }
    let mut groups: Vec<(usize, Complex64, usize)> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        let r = find(&mut parent, i);
        match groups.iter_mut().find(|g| g.0 == r) {
            Some(g) => {
                g.1 += v;
                g.2 += 1;
            }
            None => groups.push((r, v, 1)),
        }
    }
    let mut out: Vec<Eigenvalue> = groups
        .into_iter()
        .map(|(_, sum, k)| Eigenvalue {
            value: sum / k as f64,
            multiplicity: k,
        })
        .collect();
    out.sort_by(|a, b| {
        a.value
            .re
            .total_cmp(&b.value.re)
            .then(a.value.im.total_cmp(&b.value.im))
    });
    out
}
