//! Rectangular data `(A, B, C)` and the rank-one admissibility test.
//!
//! `A` and `C` are `n×N`, `B` is `N×N` with `N > n`. With `U` a basis of the
//! bilinear complement of the row space of `A`, the triple is admissible when
//! `rank(A·B·Uᵀ) ≤ 1`, `A` and `C` have full rank and `det(A·Cᵀ) ≠ 0`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkernel::{
    nullspace_rows, numerical_rank, numerical_rank_scaled, pseudo_inverse, rank_from_singular_values,
    right_singular_rows, singular_values, CMatrix, DEFAULT_RANK_TOL,
};
use crate::sample::ComplexSampler;

/// Attempts made by [`random_admissible`] before giving up.
pub const MAX_RESAMPLES: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct RankOneTriple {
    a: CMatrix,
    b: CMatrix,
    c: CMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripleReport {
    #[serde(rename = "rank_of_ABUt")]
    pub rank_of_abut: usize,
    pub second_singular_ratio: f64,
    pub nondegeneracy_ok: bool,
    pub full_rank_ok: bool,
    pub admissible: bool,
}

fn check_shapes(a: &CMatrix, b: &CMatrix, c: &CMatrix) -> Result<(usize, usize)> {
    let (n, big_n) = a.shape();
    if c.shape() != (n, big_n) {
        return Err(Error::dim(format!(
            "C is {}x{} but A is {n}x{big_n}",
            c.rows(),
            c.cols()
        )));
    }
    if b.shape() != (big_n, big_n) {
        return Err(Error::dim(format!(
            "B is {}x{} but must be {big_n}x{big_n}",
            b.rows(),
            b.cols()
        )));
    }
    if big_n <= n {
        return Err(Error::dim(format!("need N > n, got n = {n}, N = {big_n}")));
    }
    Ok((n, big_n))
}

/// Checks the hypotheses on `(A, B, C)` at relative tolerance `tol`.
///
/// Zero tests are made against the size the product would have without
/// cancellation (`‖A‖‖B‖` for `A·B·Uᵀ`, `‖A‖‖C‖` for `A·Cᵀ`), so an exactly
/// vanishing `A·B·Uᵀ` reports rank 0 rather than the rank of its roundoff.
pub fn validate_triple(a: &CMatrix, b: &CMatrix, c: &CMatrix, tol: f64) -> Result<TripleReport> {
    let (n, big_n) = check_shapes(a, b, c)?;

    let (sigma_a, right_rows) = right_singular_rows(a)?;
    let rank_a = rank_from_singular_values(&sigma_a[..n], tol, 0.0);
    let full_rank_ok = rank_a == n && numerical_rank(c, tol) == n;

    // Complement of the numerical row space; has N − n rows when A is full rank.
    let u = right_singular_rows_tail(&right_rows, rank_a, big_n);
    let norm_a = sigma_a[0];
    let norm_b = b.norm2();

    let abut = &(a * b) * &u.transpose();
    let s = singular_values(&abut);
    let rank_of_abut = rank_from_singular_values(&s, tol, norm_a * norm_b);
    let second_singular_ratio = match (s.first(), s.get(1)) {
        (Some(&s1), Some(&s2)) if s1 > 0.0 => s2 / s1,
        _ => 0.0,
    };

    let act = a * &c.transpose();
    let nondegeneracy_ok = numerical_rank_scaled(&act, tol, norm_a * c.norm2()) == n;

    let admissible = rank_of_abut <= 1 && nondegeneracy_ok && full_rank_ok;
    Ok(TripleReport {
        rank_of_abut,
        second_singular_ratio,
        nondegeneracy_ok,
        full_rank_ok,
        admissible,
    })
}

fn right_singular_rows_tail(rows: &CMatrix, rank: usize, big_n: usize) -> CMatrix {
    rows.submatrix(rank, 0, big_n - rank, big_n)
}

impl RankOneTriple {
    /// Validates at [`DEFAULT_RANK_TOL`] and copies the inputs.
    pub fn new(a: CMatrix, b: CMatrix, c: CMatrix) -> Result<Self> {
        Self::with_tolerance(a, b, c, DEFAULT_RANK_TOL)
    }

    pub fn with_tolerance(a: CMatrix, b: CMatrix, c: CMatrix, tol: f64) -> Result<Self> {
        let report = validate_triple(&a, &b, &c, tol)?;
        if !report.admissible {
            let reason = if !report.full_rank_ok {
                "A or C is not of full rank".to_string()
            } else if !report.nondegeneracy_ok {
                "det(A·Cᵀ) vanishes".to_string()
            } else {
                format!("rank(A·B·Uᵀ) = {} > 1", report.rank_of_abut)
            };
            return Err(Error::Inadmissible {
                reason,
                report: Some(Box::new(report)),
            });
        }
        Ok(RankOneTriple { a, b, c })
    }

    /// Skips validation; shapes are still checked. Used for negative controls.
    pub fn new_unchecked(a: CMatrix, b: CMatrix, c: CMatrix) -> Result<Self> {
        check_shapes(&a, &b, &c)?;
        Ok(RankOneTriple { a, b, c })
    }

    pub fn a(&self) -> &CMatrix {
        &self.a
    }

    pub fn b(&self) -> &CMatrix {
        &self.b
    }

    pub fn c(&self) -> &CMatrix {
        &self.c
    }

    /// Row count `n` of `A` and `C`.
    pub fn n(&self) -> usize {
        self.a.rows()
    }

    /// Ambient dimension `N`.
    pub fn big_n(&self) -> usize {
        self.a.cols()
    }

    pub fn report(&self, tol: f64) -> TripleReport {
        validate_triple(&self.a, &self.b, &self.c, tol).expect("shapes checked on construction")
    }

    /// Same `A` and `C` with a different `B`, unvalidated.
    pub fn with_b_unchecked(&self, b: CMatrix) -> Result<Self> {
        Self::new_unchecked(self.a.clone(), b, self.c.clone())
    }
}

/// Random admissible triple.
///
/// `A`, `C` and `B₀` are drawn uniformly from the complex unit square, and
/// `B = B₀ − M₁(A·B₀·Uᵀ − a·bᵀ)M₂` with `A·M₁ = I` and `M₂·Uᵀ = I`, which
/// forces `A·B·Uᵀ = a·bᵀ`.
pub fn random_admissible(n: usize, big_n: usize, seed: u64) -> Result<RankOneTriple> {
    if n == 0 || big_n <= n {
        return Err(Error::dim(format!("need N > n ≥ 1, got n = {n}, N = {big_n}")));
    }
    let mut s = ComplexSampler::new(seed);
    for _ in 0..MAX_RESAMPLES {
        let a = s.unit_square_matrix(n, big_n);
        let c = s.unit_square_matrix(n, big_n);
        let b0 = s.unit_square_matrix(big_n, big_n);
        let av = s.unit_square_vector(n);
        let bv = s.unit_square_vector(big_n - n);
        let Ok(b) = rank_one_correction(&a, &b0, &av, &bv) else {
            continue;
        };
        if let Ok(t) = RankOneTriple::new(a, b, c) {
            return Ok(t);
        }
    }
    Err(Error::GenerationFailure {
        n,
        big_n,
        attempts: MAX_RESAMPLES,
    })
}

/// Returns `B` with `A·B·Uᵀ = a·bᵀ`, obtained from `b0` by a correction
/// supported on the pseudo-inverse factors of `A` and `Uᵀ`.
pub fn rank_one_correction(
    a: &CMatrix,
    b0: &CMatrix,
    av: &[Complex64],
    bv: &[Complex64],
) -> Result<CMatrix> {
    let u = nullspace_rows(a, DEFAULT_RANK_TOL)?;
    let ut = u.transpose();
    let r = &(a * b0) * &ut;
    let target = CMatrix::outer(av, bv);
    let m1 = pseudo_inverse(a)?;
    let m2 = pseudo_inverse(&ut)?;
    let correction = &(&m1 * &(&r - &target)) * &m2;
    Ok(b0 - &correction)
}
