//! Builders that embed the classical special cases as rank-one triples, and
//! their closed-form tau expressions.
//!
//! * almost-intertwining `rank(XZ − YX) ≤ 1`: `A = [X I]`, `B = diag(Z, Y)`;
//! * Calogero–Moser `rank([X,Z] + I) ≤ 1`: `A = [X I]`, `B = [[Z,0],[I,Z]]`,
//!   `C = [I 0]`, giving Wilson's `det(X + g′(Z))` up to `det e^{g(Z)}`;
//! * KdV pairs `rank(XZ + ZX) ≤ 1`: intertwining with `Y = −Z`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matkernel::{
    det_scaled, numerical_rank_scaled, pseudo_inverse, reciprocal_condition, CMatrix, ScaledComplex,
    DEFAULT_RANK_TOL,
};
use crate::sample::ComplexSampler;
use crate::tau::TimeVector;
use crate::triple::{validate_triple, RankOneTriple};

/// Below this reciprocal condition number `X` counts as singular.
const SINGULAR_X_RCOND: f64 = 1e-13;

const MAX_RESAMPLES: usize = 100;

fn require_square(m: &CMatrix, name: &str) -> Result<usize> {
    if !m.is_square() || m.rows() == 0 {
        return Err(Error::dim(format!("{name} must be square and non-empty, got {}x{}", m.rows(), m.cols())));
    }
    Ok(m.rows())
}

/// Rank of `m` with zero measured against `scale`, the size of the terms it
/// was formed from.
fn rank(m: &CMatrix, scale: f64) -> usize {
    numerical_rank_scaled(m, DEFAULT_RANK_TOL, scale)
}

/// `X` (`n×(N−n)`), `Y` (`n×n`), `Z` (`(N−n)×(N−n)`).
#[derive(Clone, Debug, PartialEq)]
pub struct IntertwiningData {
    x: CMatrix,
    y: CMatrix,
    z: CMatrix,
}

impl IntertwiningData {
    /// Checks dimensions only; the rank condition is checked by
    /// [`from_intertwining`].
    pub fn new(x: CMatrix, y: CMatrix, z: CMatrix) -> Result<Self> {
        let n = require_square(&y, "Y")?;
        let m = require_square(&z, "Z")?;
        if x.shape() != (n, m) {
            return Err(Error::dim(format!("X must be {n}x{m}, got {}x{}", x.rows(), x.cols())));
        }
        Ok(IntertwiningData { x, y, z })
    }

    pub fn x(&self) -> &CMatrix {
        &self.x
    }

    pub fn y(&self) -> &CMatrix {
        &self.y
    }

    pub fn z(&self) -> &CMatrix {
        &self.z
    }

    /// `XZ − YX`.
    pub fn defect(&self) -> CMatrix {
        &(&self.x * &self.z) - &(&self.y * &self.x)
    }

    pub fn defect_rank(&self) -> usize {
        let scale = self.x.norm2() * (self.z.norm2() + self.y.norm2());
        rank(&self.defect(), scale)
    }
}

/// Square `X`, `Z` of equal size.
#[derive(Clone, Debug, PartialEq)]
pub struct CalogeroMoserData {
    x: CMatrix,
    z: CMatrix,
}

impl CalogeroMoserData {
    pub fn new(x: CMatrix, z: CMatrix) -> Result<Self> {
        let n = require_square(&x, "X")?;
        if z.shape() != (n, n) {
            return Err(Error::dim(format!("Z must be {n}x{n}, got {}x{}", z.rows(), z.cols())));
        }
        Ok(CalogeroMoserData { x, z })
    }

    pub fn x(&self) -> &CMatrix {
        &self.x
    }

    pub fn z(&self) -> &CMatrix {
        &self.z
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    /// `[X,Z] + I`.
    pub fn defect(&self) -> CMatrix {
        let comm = &(&self.x * &self.z) - &(&self.z * &self.x);
        comm.add_identity(Complex64::new(1.0, 0.0))
    }

    pub fn defect_rank(&self) -> usize {
        rank(&self.defect(), 1.0 + 2.0 * self.x.norm2() * self.z.norm2())
    }
}

/// Square `X`, `Z` of equal size with `rank(XZ + ZX) ≤ 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct KdVPairData {
    x: CMatrix,
    z: CMatrix,
}

impl KdVPairData {
    pub fn new(x: CMatrix, z: CMatrix) -> Result<Self> {
        let n = require_square(&x, "X")?;
        if z.shape() != (n, n) {
            return Err(Error::dim(format!("Z must be {n}x{n}, got {}x{}", z.rows(), z.cols())));
        }
        Ok(KdVPairData { x, z })
    }

    pub fn x(&self) -> &CMatrix {
        &self.x
    }

    pub fn z(&self) -> &CMatrix {
        &self.z
    }

    /// `XZ + ZX`.
    pub fn defect(&self) -> CMatrix {
        &(&self.x * &self.z) + &(&self.z * &self.x)
    }

    pub fn defect_rank(&self) -> usize {
        rank(&self.defect(), 2.0 * self.x.norm2() * self.z.norm2())
    }
}

/// Rejection carrying the general validator's view of the embedded triple.
fn inadmissible(what: &str, r: usize, a: &CMatrix, b: &CMatrix, c: &CMatrix) -> Error {
    Error::Inadmissible {
        reason: format!("rank({what}) = {r} > 1"),
        report: validate_triple(a, b, c, DEFAULT_RANK_TOL).ok().map(Box::new),
    }
}

/// Runs the general validator; a vanishing `det(A·Cᵀ)` is reported as a
/// degeneracy rather than an admissibility failure.
fn build(a: CMatrix, b: CMatrix, c: CMatrix, degenerate_hint: &str) -> Result<RankOneTriple> {
    let report = validate_triple(&a, &b, &c, DEFAULT_RANK_TOL)?;
    if report.full_rank_ok && !report.nondegeneracy_ok {
        return Err(Error::Degenerate(format!("det(A·Cᵀ) vanishes; {degenerate_hint}")));
    }
    RankOneTriple::new(a, b, c)
}

/// `A = [X I]`, `B = diag(Z, Y)`. Without `C`, `N = 2n` is required and
/// `C = [I I]` is used, which gives `τ = det(X·e^{g(Z)} + e^{g(Y)})`.
pub fn from_intertwining(d: &IntertwiningData, c: Option<&CMatrix>) -> Result<RankOneTriple> {
    let n = d.y.rows();
    let m = d.z.rows();
    let id = CMatrix::identity(n);
    let a = CMatrix::hstack(&[&d.x, &id])?;
    let b = CMatrix::block_diag(&d.z, &d.y);
    let c = match c {
        Some(c) => c.clone(),
        None if m == n => CMatrix::hstack(&[&id, &id])?,
        None => {
            return Err(Error::dim(format!(
                "default C = [I I] needs N = 2n, got n = {n}, N = {}",
                n + m
            )))
        }
    };
    let r = d.defect_rank();
    if r > 1 {
        return Err(inadmissible("XZ − YX", r, &a, &b, &c));
    }
    build(a, b, c, "choose a different C or perturb X")
}

/// `A = [X I]`, `B = [[Z,0],[I,Z]]`, `C = [I 0]`.
pub fn from_calogero_moser(d: &CalogeroMoserData) -> Result<RankOneTriple> {
    if reciprocal_condition(&d.x) < SINGULAR_X_RCOND {
        return Err(Error::Degenerate(
            "det X vanishes; translate the times (X → X + s·I via t₁ → t₁ + s) so that det X ≠ 0".into(),
        ));
    }
    let n = d.n();
    let id = CMatrix::identity(n);
    let zero = CMatrix::zeros(n, n);
    let a = CMatrix::hstack(&[&d.x, &id])?;
    let top = CMatrix::hstack(&[&d.z, &zero])?;
    let bottom = CMatrix::hstack(&[&id, &d.z])?;
    let b = CMatrix::vstack(&[&top, &bottom])?;
    let c = CMatrix::hstack(&[&id, &zero])?;
    let r = d.defect_rank();
    if r > 1 {
        return Err(inadmissible("[X,Z] + I", r, &a, &b, &c));
    }
    build(a, b, c, "det X vanishes; translate the times")
}

/// Intertwining embedding with `Y = −Z` and `C = [I I]`. At zero even times
/// `τ = det e^{−g(Z)} · det(X·e^{2g(Z)} + I)`.
pub fn from_kdv_pair(d: &KdVPairData) -> Result<RankOneTriple> {
    let data = IntertwiningData::new(d.x.clone(), d.z.scale(Complex64::new(-1.0, 0.0)), d.z.clone())?;
    from_intertwining(&data, None).map_err(|e| match e {
        Error::Inadmissible { report, .. } if d.defect_rank() > 1 => Error::Inadmissible {
            reason: format!("rank(XZ + ZX) = {} > 1", d.defect_rank()),
            report,
        },
        other => other,
    })
}

/// `g′(Z) = Σ i·tᵢ·Z^{i−1}` by Horner's rule.
pub fn g_prime_of_matrix(t: &TimeVector, z: &CMatrix) -> CMatrix {
    let id = CMatrix::identity(z.rows());
    let mut acc = CMatrix::zeros(z.rows(), z.cols());
    for (i, &ti) in t.values().iter().enumerate().rev() {
        acc = &(&acc * z) + &id.scale(ti * (i + 1) as f64);
    }
    acc
}

/// Wilson's `det(X + Σ i·tᵢ·Z^{i−1})`.
pub fn wilson_tau_closed_form(d: &CalogeroMoserData, t: &TimeVector) -> ScaledComplex {
    det_scaled(&(&d.x + &g_prime_of_matrix(t, &d.z))).expect("X is square by construction")
}

/// Calogero–Moser data with `[X,Z] + I` of rank one: `Z = diag(zᵢ)`,
/// `Xᵢⱼ = 1/(zⱼ − zᵢ)` off the diagonal and random momenta on it, then both
/// conjugated by a random `G`. Samples with close `zᵢ`, nearly singular `X`
/// or ill-conditioned `G` are redrawn.
pub fn random_calogero_moser(n: usize, seed: u64) -> Result<CalogeroMoserData> {
    if n == 0 {
        return Err(Error::dim("n must be positive"));
    }
    let mut s = ComplexSampler::new(seed);
    for _ in 0..MAX_RESAMPLES {
        let zs = s.centered_vector(n, 1.0);
        let min_gap = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| (zs[i] - zs[j]).norm())
            .fold(f64::INFINITY, f64::min);
        if min_gap < 0.2 {
            continue;
        }
        let p = s.centered_vector(n, 1.0);
        let x0 = CMatrix::from_fn(n, n, |i, j| if i == j { p[i] } else { (zs[j] - zs[i]).inv() });
        let g = s.centered_matrix(n, n, 1.0).add_identity(Complex64::new(1.5, 0.0));
        if reciprocal_condition(&g) < 0.05 {
            continue;
        }
        let Some(gi) = crate::matkernel::inverse(&g)? else {
            continue;
        };
        let x = &(&g * &x0) * &gi;
        let z = &(&g * &CMatrix::from_diagonal(&zs)) * &gi;
        if reciprocal_condition(&x) < 1e-6 {
            continue;
        }
        let d = CalogeroMoserData::new(x, z)?;
        if d.defect_rank() <= 1 {
            return Ok(d);
        }
    }
    Err(Error::GenerationFailure {
        n,
        big_n: 2 * n,
        attempts: MAX_RESAMPLES,
    })
}

/// Intertwining data with `XZ − YX = a·bᵀ` for random `a`, `b`. For
/// `n ≤ m` the pair `X`, `Y` is drawn and `Z = X⁺(YX + abᵀ)`; otherwise `X`,
/// `Z` are drawn and `Y = (XZ − abᵀ)X⁺`. Samples where `det(X + I)` would be
/// nearly singular (for `n = m`) are redrawn.
pub fn random_intertwining(n: usize, m: usize, seed: u64) -> Result<IntertwiningData> {
    if n == 0 || m == 0 {
        return Err(Error::dim("block sizes must be positive"));
    }
    let mut s = ComplexSampler::new(seed);
    for _ in 0..MAX_RESAMPLES {
        let x = s.centered_matrix(n, m, 1.0);
        let ab = CMatrix::outer(&s.centered_vector(n, 1.0), &s.centered_vector(m, 1.0));
        let xp = pseudo_inverse(&x)?;
        let (y, z) = if n <= m {
            let y = s.centered_matrix(n, n, 1.0);
            let z = &xp * &(&(&y * &x) + &ab);
            (y, z)
        } else {
            let z = s.centered_matrix(m, m, 1.0);
            let y = &(&(&x * &z) - &ab) * &xp;
            (y, z)
        };
        let d = IntertwiningData::new(x, y, z)?;
        if d.defect_rank() > 1 {
            continue;
        }
        if n == m && reciprocal_condition(&d.x.add_identity(Complex64::new(1.0, 0.0))) < 1e-4 {
            continue;
        }
        return Ok(d);
    }
    Err(Error::GenerationFailure {
        n,
        big_n: n + m,
        attempts: MAX_RESAMPLES,
    })
}
