//! Residuals for the identities satisfied by rank-one tau functions.
//!
//! Every residual is relative to the largest term that contributes to it, so
//! values stay meaningful when `τ` spans hundreds of orders of magnitude.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cases::{from_calogero_moser, from_intertwining, wilson_tau_closed_form, CalogeroMoserData, IntertwiningData};
use crate::error::{Error, Result};
use crate::matkernel::{
    det, det_scaled, diagonalize, eigenvalues, matexp, numerical_rank, reciprocal_condition, solve, subsets, CMatrix,
    ScaledComplex, DEFAULT_RANK_TOL,
};
use crate::tau::{evolve, FiniteDifference, MiwaShift, MiwaShiftList, TauEvaluator, TimeVector};
use crate::triple::RankOneTriple;

pub const HBDE_TOL: f64 = 1e-8;
pub const KP_TOL: f64 = 1e-4;
/// Identities that hold exactly and only see roundoff.
pub const EXACT_TOL: f64 = 1e-10;
pub const H3_TOL: f64 = 1e-10;
pub const BETHE_TOL: f64 = 1e-8;

/// Below this every HBDE term is treated as zero.
const INDETERMINATE_LOG: f64 = -690.775_527_898_213_7; // ln(1e-300)

/// Denominators in the Bethe products smaller than this (relative) are
/// treated as collisions.
const BETHE_COLLISION: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(default)]
    pub context: BTreeMap<String, Value>,
}

impl VerificationReport {
    /// `pass` is `residual ≤ tolerance`; a NaN residual never passes.
    pub fn new(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        VerificationReport {
            name: name.into(),
            residual,
            tolerance,
            pass: residual <= tolerance,
            context: BTreeMap::new(),
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self.pass = self.residual <= tolerance;
        self
    }

    pub fn with_context(mut self, key: &str, value: Value) -> Self {
        self.context.insert(key.to_string(), value);
        self
    }
}

/// `[re, im]`.
pub fn complex_json(z: Complex64) -> Value {
    json!([z.re, z.im])
}

fn complexes_json(zs: &[Complex64]) -> Value {
    Value::Array(zs.iter().map(|&z| complex_json(z)).collect())
}

fn scaled_json(v: ScaledComplex) -> Value {
    json!({ "log_magnitude": v.log_magnitude(), "phase": v.phase() })
}

fn check_parameters(c: [Complex64; 3]) -> Result<()> {
    for i in 0..3 {
        if c[i].norm() == 0.0 {
            return Err(Error::Degenerate("lattice parameters must be non-zero".into()));
        }
        for j in i + 1..3 {
            if c[i] == c[j] {
                return Err(Error::Degenerate("lattice parameters must be pairwise distinct".into()));
            }
        }
    }
    Ok(())
}

fn lattice_shifts(c: [Complex64; 3], k: [i32; 3]) -> MiwaShiftList {
    MiwaShiftList::new(
        c.iter()
            .zip(k)
            .map(|(&c, multiplicity)| MiwaShift { c, multiplicity })
            .collect(),
    )
    .expect("parameters checked non-zero")
}

/// The three-term lattice equation
/// `(c₂−c₃)τ_{l+1}^{m,n}τ_l^{m+1,n+1} − (c₁−c₃)τ_l^{m+1,n}τ_{l+1}^{m,n+1}
///  + (c₁−c₂)τ_l^{m,n+1}τ_{l+1}^{m+1,n}` with exact Miwa shifts at base `t`.
pub fn hbde_residual(
    tr: &RankOneTriple,
    t: &TimeVector,
    c: [Complex64; 3],
    lattice: [i32; 3],
) -> Result<VerificationReport> {
    hbde_residual_with(&TauEvaluator::new(tr)?, t, c, lattice)
}

pub fn hbde_residual_with(
    ev: &TauEvaluator,
    t: &TimeVector,
    c: [Complex64; 3],
    lattice: [i32; 3],
) -> Result<VerificationReport> {
    check_parameters(c)?;
    let [l, m, n] = lattice;
    let at = |dl: i32, dm: i32, dn: i32| ev.tau_miwa(t, &lattice_shifts(c, [l + dl, m + dm, n + dn]));
    let terms = [
        (at(1, 0, 0)? * at(0, 1, 1)?).scale_complex(c[1] - c[2]),
        (at(0, 1, 0)? * at(1, 0, 1)?).scale_complex(-(c[0] - c[2])),
        (at(0, 0, 1)? * at(1, 1, 0)?).scale_complex(c[0] - c[1]),
    ];
    let top = terms.iter().map(|v| v.log_magnitude()).fold(f64::NEG_INFINITY, f64::max);
    if top < INDETERMINATE_LOG {
        return Err(Error::IndeterminateScale);
    }
    let sum = ScaledComplex::sum(&terms);
    let residual = if sum.is_zero() { 0.0 } else { (sum.log_magnitude() - top).exp() };
    Ok(VerificationReport::new("hbde", residual, HBDE_TOL)
        .with_context("c", complexes_json(&c))
        .with_context("lattice", json!(lattice))
        .with_context("t", complexes_json(t.values()))
        .with_context("terms", Value::Array(terms.iter().map(|&v| scaled_json(v)).collect())))
}

/// `τ_discrete(l,m,n) = (c₁^l c₂^m c₃^n)^{rows(A)} · τ_miwa(l,m,n)`.
pub fn gauge_link_residual(
    ev: &TauEvaluator,
    t: &TimeVector,
    c: [Complex64; 3],
    lattice: [i32; 3],
) -> Result<VerificationReport> {
    check_parameters(c)?;
    let n = ev.triple().n() as i32;
    let discrete = ev.tau_discrete(lattice, c, Some(t))?;
    let miwa = ev.tau_miwa(t, &lattice_shifts(c, lattice))?;
    let gauge = c
        .iter()
        .zip(lattice)
        .fold(ScaledComplex::ONE, |acc, (&c, k)| acc * ScaledComplex::from_complex(c).powi(k * n));
    let residual = ScaledComplex::relative_difference(discrete, miwa * gauge);
    Ok(VerificationReport::new("gauge_link", residual, EXACT_TOL)
        .with_context("c", complexes_json(&c))
        .with_context("lattice", json!(lattice)))
}

/// First KP equation in Hirota form
/// `[2(τ₁₁₁₁τ − 4τ₁₁₁τ₁ + 3τ₁₁²) − 8(τ₁₃τ − τ₁τ₃) + 6(τ₂₂τ − τ₂²)] / τ²`.
///
/// The numerator is formed from `F = log τ` as
/// `2(F₁₁₁₁ + 6F₁₁² − 4F₁₃ + 3F₂₂)`, which is the same quantity without the
/// cancellation among powers of `F₁`. The scale is the largest single product
/// of log-derivatives in the expanded `τ`-form; the `τ`-form monomials
/// themselves can cancel exactly (for `τ` linear in `t₁` they all vanish).
pub fn kp_residual(tr: &RankOneTriple, t: &TimeVector) -> Result<VerificationReport> {
    kp_residual_with(&TauEvaluator::new(tr)?, t, &FiniteDifference::default())
}

pub fn kp_residual_with(ev: &TauEvaluator, t: &TimeVector, fd: &FiniteDifference) -> Result<VerificationReport> {
    let d = |o: [u32; 3]| ev.log_derivative(t, o, fd);
    let f1 = d([1, 0, 0])?;
    let f11 = d([2, 0, 0])?;
    let f111 = d([3, 0, 0])?;
    let f1111 = d([4, 0, 0])?;
    let f2 = d([0, 1, 0])?;
    let f22 = d([0, 2, 0])?;
    let f3 = d([0, 0, 1])?;
    let f13 = d([1, 0, 1])?;

    let numerator = (f1111 + f11 * f11 * 6.0 - f13 * 4.0 + f22 * 3.0) * 2.0;
    // every product of log-derivatives in the expanded τ-form, before cancellation
    let (p1, p11) = (f1.norm(), f11.norm());
    let expanded = [
        2.0 * f1111.norm(),
        8.0 * p1 * f111.norm(),
        6.0 * p11 * p11,
        24.0 * p1 * p1 * p11,
        8.0 * p1.powi(4),
        8.0 * f13.norm(),
        8.0 * p1 * f3.norm(),
        6.0 * f22.norm(),
        6.0 * f2.norm_sqr(),
    ];
    let f_terms = [2.0 * f1111.norm(), 12.0 * p11 * p11, 8.0 * f13.norm(), 6.0 * f22.norm()];
    let scale = expanded.iter().copied().fold(0.0, f64::max);
    let f_scale = f_terms.iter().copied().fold(0.0, f64::max);
    let ratio = |s: f64| if numerator.norm() == 0.0 { 0.0 } else { numerator.norm() / s };
    Ok(VerificationReport::new("kp", ratio(scale), KP_TOL)
        .with_context("t", complexes_json(t.values()))
        .with_context("numerator", complex_json(numerator))
        .with_context("scale", json!(scale))
        .with_context("residual_vs_log_terms", json!(ratio(f_scale))))
}

fn h1(p: &CMatrix, c: Complex64) -> Result<Complex64> {
    det(&p.scale(Complex64::new(-1.0, 0.0)).add_identity(c))
}

fn h2(p: &CMatrix, q: &CMatrix, a: Complex64, b: Complex64) -> Result<Complex64> {
    let pa = p.scale(Complex64::new(-1.0, 0.0)).add_identity(a);
    let pb = p.scale(Complex64::new(-1.0, 0.0)).add_identity(b);
    det(&(&(&pa * &pb) + q))
}

/// `h₁(c) = det(c − P)`, `h₂(a,b) = det((a − P)(b − P) + Q)`.
///
/// The residual is the weighted combination
/// `(c₂−c₃)h₁(c₁)h₂(c₂,c₃) − (c₁−c₃)h₁(c₂)h₂(c₁,c₃) + (c₁−c₂)h₁(c₃)h₂(c₁,c₂)`,
/// which vanishes when `rank Q ≤ 1`. The unweighted combination
/// `h₁(c₁)h₂(c₂,c₃) − h₁(c₂)h₂(c₁,c₃) + h₁(c₃)h₂(c₁,c₂)` does not vanish in
/// general (8 for `P = 0`, `Q = 1`, `c = (1,2,3)`) and is reported in the
/// context under `printed`.
pub fn h3_residual(p: &CMatrix, q: &CMatrix, c: [Complex64; 3]) -> Result<VerificationReport> {
    if !p.is_square() || q.shape() != p.shape() {
        return Err(Error::dim("P and Q must be square of equal size"));
    }
    let [c1, c2, c3] = c;
    let products = [
        h1(p, c1)? * h2(p, q, c2, c3)?,
        -(h1(p, c2)? * h2(p, q, c1, c3)?),
        h1(p, c3)? * h2(p, q, c1, c2)?,
    ];
    let weights = [c2 - c3, c1 - c3, c1 - c2];
    let weighted: Vec<Complex64> = products.iter().zip(weights).map(|(&t, w)| t * w).collect();
    let printed: Complex64 = products.iter().sum();
    let sum: Complex64 = weighted.iter().sum();
    let relative = |s: Complex64, terms: &[Complex64]| {
        let top = terms.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if s.norm() == 0.0 {
            0.0
        } else {
            s.norm() / top
        }
    };
    Ok(VerificationReport::new("h3", relative(sum, &weighted), H3_TOL)
        .with_context("c", complexes_json(&c))
        .with_context("rank_q", json!(numerical_rank(q, DEFAULT_RANK_TOL)))
        .with_context("weighted", complex_json(sum))
        .with_context("printed", complex_json(printed))
        .with_context("printed_relative", json!(relative(printed, &products))))
}

/// `X(m) = −ηX(λ₁ − Z) − mη(λ₂ − Z)⁻¹(λ₁ − Z)`.
pub fn bethe_matrix(d: &CalogeroMoserData, eta: Complex64, lambda1: Complex64, lambda2: Complex64, m: i32) -> Result<CMatrix> {
    let minus_z = d.z().scale(Complex64::new(-1.0, 0.0));
    let l1 = minus_z.add_identity(lambda1);
    let l2 = minus_z.add_identity(lambda2);
    if reciprocal_condition(&l2) < 1e-13 {
        return Err(Error::Degenerate(format!("λ₂ = {lambda2} is an eigenvalue of Z")));
    }
    let inv_l2 = solve(&l2, &CMatrix::identity(d.n()))?
        .ok_or_else(|| Error::Degenerate(format!("λ₂ = {lambda2} is an eigenvalue of Z")))?;
    let first = (d.x() * &l1).scale(-eta);
    let second = (&inv_l2 * &l1).scale(-eta * m as f64);
    Ok(&first + &second)
}

/// Nested Bethe equations for the eigenvalues `x^{m−1}, x^m, x^{m+1}` of
/// `X(m−1), X(m), X(m+1)`:
/// `Π_k (x_j^m−x_k^{m−1})(x_j^m−x_k^m+η)(x_j^m−x_k^{m+1}−η) /
///  [(x_j^m−x_k^{m−1}+η)(x_j^m−x_k^m−η)(x_j^m−x_k^{m+1})] = −1`.
/// The residual is `max_j |Π + 1|`.
pub fn bethe_check(
    d: &CalogeroMoserData,
    eta: Complex64,
    lambda1: Complex64,
    lambda2: Complex64,
    m: i32,
) -> Result<VerificationReport> {
    if eta.norm() == 0.0 {
        return Err(Error::Degenerate("η must be non-zero".into()));
    }
    let prev = eigenvalues(&bethe_matrix(d, eta, lambda1, lambda2, m - 1)?)?;
    let cur = eigenvalues(&bethe_matrix(d, eta, lambda1, lambda2, m)?)?;
    let next = eigenvalues(&bethe_matrix(d, eta, lambda1, lambda2, m + 1)?)?;
    let scale = prev
        .iter()
        .chain(&cur)
        .chain(&next)
        .map(|z| z.norm())
        .fold(eta.norm().max(1.0), f64::max);
    let floor = BETHE_COLLISION * scale;

    let mut residual: f64 = 0.0;
    for (j, &x) in cur.iter().enumerate() {
        let mut prod = Complex64::new(1.0, 0.0);
        for k in 0..cur.len() {
            let num = (x - prev[k]) * (x - cur[k] + eta) * (x - next[k] - eta);
            let dens = [x - prev[k] + eta, x - cur[k] - eta, x - next[k]];
            if dens.iter().any(|z| z.norm() < floor) {
                return Err(Error::DegenerateSpectrum(format!(
                    "Bethe denominator vanishes at j = {j}, k = {k}"
                )));
            }
            prod *= num / (dens[0] * dens[1] * dens[2]);
        }
        residual = residual.max((prod + 1.0).norm());
    }
    Ok(VerificationReport::new("bethe", residual, BETHE_TOL)
        .with_context("eta", complex_json(eta))
        .with_context("lambda", complexes_json(&[lambda1, lambda2]))
        .with_context("m", json!(m))
        .with_context("eigenvalues", complexes_json(&cur))
        .with_context("defect_rank", json!(d.defect_rank())))
}

/// `τ` of the Calogero–Moser triple against `det e^{g(Z)} · det(X + g′(Z))`.
pub fn crosscheck_wilson(d: &CalogeroMoserData, t: &TimeVector) -> Result<VerificationReport> {
    let tr = from_calogero_moser(d)?;
    let lhs = TauEvaluator::new(&tr)?.tau(t)?;
    let ev = evolve(d.z(), t)?;
    let gauge = det_scaled(&ev.exp)? * ScaledComplex::exp(ev.mu * d.n() as f64);
    let rhs = gauge * wilson_tau_closed_form(d, t);
    Ok(VerificationReport::new("crosscheck_wilson", ScaledComplex::relative_difference(lhs, rhs), EXACT_TOL)
        .with_context("t", complexes_json(t.values()))
        .with_context("tau", scaled_json(lhs))
        .with_context("closed_form", scaled_json(rhs)))
}

/// `τ` of the intertwining triple with `C = [I I]` against
/// `det(X·e^{g(Z)} + e^{g(Y)})`.
pub fn crosscheck_intertwining(d: &IntertwiningData, t: &TimeVector) -> Result<VerificationReport> {
    if d.x().rows() != d.x().cols() {
        return Err(Error::dim("the intertwining cross-check needs N = 2n"));
    }
    let tr = from_intertwining(d, None)?;
    let lhs = TauEvaluator::new(&tr)?.tau(t)?;
    let (rhs, route) = match intertwining_closed_form_spectral(d, t)? {
        Some(v) => (v, "spectral"),
        None => (intertwining_closed_form_dense(d, t)?, "dense"),
    };
    Ok(VerificationReport::new(
        "crosscheck_intertwining",
        ScaledComplex::relative_difference(lhs, rhs),
        EXACT_TOL,
    )
    .with_context("t", complexes_json(t.values()))
    .with_context("tau", scaled_json(lhs))
    .with_context("closed_form", scaled_json(rhs))
    .with_context("closed_form_route", json!(route)))
}

/// `det(X·e^{g(Z)} + e^{g(Y)})` with one common scalar shift on both
/// exponentials.
fn intertwining_closed_form_dense(d: &IntertwiningData, t: &TimeVector) -> Result<ScaledComplex> {
    let top = eigenvalues(d.z())?
        .iter()
        .chain(eigenvalues(d.y())?.iter())
        .map(|&l| t.g(l).re)
        .fold(f64::NEG_INFINITY, f64::max);
    let mu = Complex64::new(top, 0.0);
    let gz = t.g_of_matrix(d.z());
    let gy = t.g_of_matrix(d.y());
    let m = &(d.x() * &matexp(&gz.shift_diagonal(mu))?) + &matexp(&gy.shift_diagonal(mu))?;
    Ok(det_scaled(&m)? * ScaledComplex::exp(mu * d.x().rows() as f64))
}

/// The same determinant through eigenbases `Z = V_z·Λ_z·V_z⁻¹`,
/// `Y = V_y·Λ_y·V_y⁻¹`:
/// `V_y⁻¹·M·V_z = P·e^{g(Λ_z)} + e^{g(Λ_y)}·Q` with `P = V_y⁻¹XV_z`,
/// `Q = V_y⁻¹V_z`, expanded over column sets `S` taken from the first term and
/// row sets `T` of the same size:
/// `Σ ± det P[T,S]·det Q[T̄,S̄]·Π_{j∈S} e^{g(z_j)}·Π_{i∈T̄} e^{g(y_i)}`.
/// The exponentials then never meet inside a determinant, so a wide spread
/// of `Re g` costs no digits. `None` when either matrix is not safely
/// diagonalizable.
fn intertwining_closed_form_spectral(d: &IntertwiningData, t: &TimeVector) -> Result<Option<ScaledComplex>> {
    const MIN_RCOND: f64 = 1e-6;
    let (Some(dz), Some(dy)) = (diagonalize(d.z(), MIN_RCOND)?, diagonalize(d.y(), MIN_RCOND)?) else {
        return Ok(None);
    };
    let n = d.x().rows();
    let p = &(&dy.inverse * d.x()) * &dz.vectors;
    let q = &dy.inverse * &dz.vectors;
    let gz: Vec<Complex64> = dz.values.iter().map(|&l| t.g(l)).collect();
    let gy: Vec<Complex64> = dy.values.iter().map(|&l| t.g(l)).collect();
    let minor = |m: &CMatrix, rows: &[usize], cols: &[usize]| -> Result<Complex64> {
        if rows.is_empty() {
            return Ok(Complex64::new(1.0, 0.0));
        }
        det(&CMatrix::from_fn(rows.len(), cols.len(), |i, j| m.get(rows[i], cols[j])))
    };
    let complement = |set: &[usize]| -> Vec<usize> { (0..n).filter(|i| !set.contains(i)).collect() };
    let mut terms = Vec::new();
    for k in 0..=n {
        for s in subsets(n, k) {
            let sc = complement(&s);
            for r in subsets(n, k) {
                let rc = complement(&r);
                let sign = if (s.iter().sum::<usize>() + r.iter().sum::<usize>()) % 2 == 0 { 1.0 } else { -1.0 };
                let coeff = minor(&p, &r, &s)? * minor(&q, &rc, &sc)? * sign;
                let exponent: Complex64 = s.iter().map(|&j| gz[j]).sum::<Complex64>() + rc.iter().map(|&i| gy[i]).sum::<Complex64>();
                terms.push(ScaledComplex::exp(exponent).scale_complex(coeff));
            }
        }
    }
    let gauge = ScaledComplex::from_complex(det(&dy.vectors)? / det(&dz.vectors)?);
    Ok(Some(ScaledComplex::sum(&terms) * gauge))
}
