//! Evaluation of `τ(t) = det(A·e^{g(B)}·Cᵀ)`, its exact Miwa shifts, the
//! discrete lattice form, and derivatives of `log τ`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkernel::{
    det_scaled, diagonalize, eigenvalues, matexp, reciprocal_condition, solve, subsets, CMatrix, ScaledComplex,
};
use crate::triple::RankOneTriple;

/// Number of KP times kept when nothing else is specified.
pub const DEFAULT_TRUNCATION: usize = 6;

/// Default base step for finite differences of `∂ log τ`.
pub const DEFAULT_FD_STEP: f64 = 1e-3;

/// Below this reciprocal condition number a shift factor or the matrix
/// `A·e^{g(B)}·Cᵀ` is treated as singular.
const SINGULAR_RCOND: f64 = 1e-13;

/// Grid samples with `|τ| < POLE_RATIO · max|τ|` are flagged as poles.
pub const POLE_RATIO: f64 = 1e-10;

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Truncated KP times `(t₁, …, t_K)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Complex64>", into = "Vec<Complex64>")]
pub struct TimeVector(Vec<Complex64>);

impl TryFrom<Vec<Complex64>> for TimeVector {
    type Error = Error;
    fn try_from(v: Vec<Complex64>) -> Result<Self> {
        TimeVector::new(v)
    }
}

impl From<TimeVector> for Vec<Complex64> {
    fn from(t: TimeVector) -> Self {
        t.0
    }
}

impl TimeVector {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::dim("time vector must have at least one entry"));
        }
        if let Some(i) = values.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite { row: i, col: 0 });
        }
        Ok(TimeVector(values))
    }

    pub fn zeros(k: usize) -> Self {
        TimeVector(vec![re(0.0); k.max(1)])
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&x| re(x)).collect())
    }

    pub fn values(&self) -> &[Complex64] {
        &self.0
    }

    /// Truncation order `K`.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `tᵢ` with 1-based index; zero beyond the truncation.
    pub fn get(&self, i: usize) -> Complex64 {
        assert!(i >= 1, "KP times are 1-based");
        self.0.get(i - 1).copied().unwrap_or(re(0.0))
    }

    /// Pads with zeros or drops trailing entries to reach length `k`.
    pub fn with_truncation(&self, k: usize) -> Self {
        let mut v = self.0.clone();
        v.resize(k.max(1), re(0.0));
        TimeVector(v)
    }

    /// Copy with `tᵢ` replaced, extending the truncation if needed.
    pub fn with_time(&self, i: usize, value: Complex64) -> Self {
        assert!(i >= 1, "KP times are 1-based");
        let mut v = self.0.clone();
        if v.len() < i {
            v.resize(i, re(0.0));
        }
        v[i - 1] = value;
        TimeVector(v)
    }

    /// Copy with `tᵢ += delta`.
    pub fn offset(&self, i: usize, delta: Complex64) -> Self {
        self.with_time(i, self.get(i) + delta)
    }

    /// `g(z) = Σ tᵢ zⁱ`.
    pub fn g(&self, z: Complex64) -> Complex64 {
        self.0.iter().rev().fold(re(0.0), |acc, &t| (acc + t) * z)
    }

    /// `g(B) = Σ tᵢ Bⁱ` by Horner's rule.
    pub fn g_of_matrix(&self, b: &CMatrix) -> CMatrix {
        let id = CMatrix::identity(b.rows());
        let mut acc = CMatrix::zeros(b.rows(), b.cols());
        for &t in self.0.iter().rev() {
            acc = &(&acc + &id.scale(t)) * b;
        }
        acc
    }

    /// Series form of `t − k[c⁻¹]`, i.e. `tᵢ − k·c⁻ⁱ/i`, kept to order `order`.
    ///
    /// Only exact in the limit `order → ∞`; [`tau_miwa`] applies the shift in
    /// closed form instead.
    pub fn miwa_series_shift(&self, c: Complex64, k: i32, order: usize) -> Self {
        let mut out = self.with_truncation(order.max(self.len()));
        let inv = c.inv();
        let mut p = re(1.0);
        for i in 1..=order {
            p *= inv;
            out.0[i - 1] -= p * (k as f64 / i as f64);
        }
        out
    }
}

/// One lattice step: subtract `multiplicity·[c⁻¹]` from the times.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiwaShift {
    pub c: Complex64,
    pub multiplicity: i32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MiwaShiftList(Vec<MiwaShift>);

impl MiwaShiftList {
    pub fn new(shifts: Vec<MiwaShift>) -> Result<Self> {
        for s in &shifts {
            check_parameter(s.c)?;
        }
        Ok(MiwaShiftList(shifts))
    }

    pub fn empty() -> Self {
        MiwaShiftList(Vec::new())
    }

    pub fn single(c: Complex64, multiplicity: i32) -> Result<Self> {
        Self::new(vec![MiwaShift { c, multiplicity }])
    }

    pub fn push(&mut self, c: Complex64, multiplicity: i32) -> Result<()> {
        check_parameter(c)?;
        self.0.push(MiwaShift { c, multiplicity });
        Ok(())
    }

    pub fn shifts(&self) -> &[MiwaShift] {
        &self.0
    }

    /// Applying `self` and then `other`.
    pub fn compose(&self, other: &MiwaShiftList) -> MiwaShiftList {
        MiwaShiftList(self.0.iter().chain(other.0.iter()).copied().collect())
    }

    /// Equal parameters combined, zero multiplicities dropped.
    pub fn merged(&self) -> MiwaShiftList {
        let mut out: Vec<MiwaShift> = Vec::new();
        for s in &self.0 {
            match out.iter_mut().find(|o| o.c == s.c) {
                Some(o) => o.multiplicity += s.multiplicity,
                None => out.push(*s),
            }
        }
        out.retain(|s| s.multiplicity != 0);
        MiwaShiftList(out)
    }
}

fn check_parameter(c: Complex64) -> Result<()> {
    if !(c.re.is_finite() && c.im.is_finite()) || (c.re == 0.0 && c.im == 0.0) {
        return Err(Error::Degenerate(format!("Miwa parameter must be finite and non-zero, got {c}")));
    }
    Ok(())
}

/// Eigenvector matrices with a worse reciprocal condition number send the
/// evaluator to the dense route.
const SPECTRAL_RCOND: f64 = 1e-6;

/// `e^{g(B) − μI}` with the scalar `e^{μ}` carried separately so that large
/// times do not overflow the matrix exponential.
pub(crate) struct Evolution {
    pub(crate) exp: CMatrix,
    pub(crate) mu: Complex64,
}

/// `μ` is the largest `Re g(λ)` over the spectrum (imaginary part from the
/// trace), so the shifted exponential has entries of order one.
pub(crate) fn evolve(b: &CMatrix, t: &TimeVector) -> Result<Evolution> {
    let gb = t.g_of_matrix(b);
    let n = b.rows() as f64;
    let top = eigenvalues(b)?
        .iter()
        .map(|&l| t.g(l).re)
        .fold(f64::NEG_INFINITY, f64::max);
    let re_mu = if top.is_finite() { top } else { gb.trace().re / n };
    let mu = Complex64::new(re_mu, gb.trace().im / n);
    let exp = matexp(&gb.shift_diagonal(mu))?;
    Ok(Evolution { exp, mu })
}

fn invert_factor(f: &CMatrix, c: Complex64) -> Result<CMatrix> {
    if reciprocal_condition(f) < SINGULAR_RCOND {
        return Err(Error::SingularShift { c });
    }
    solve(f, &CMatrix::identity(f.rows()))?.ok_or(Error::SingularShift { c })
}

fn factor_power(f: &CMatrix, k: i32, c: Complex64) -> Result<CMatrix> {
    if k >= 0 {
        Ok(f.powu(k as u32))
    } else {
        Ok(invert_factor(f, c)?.powu(k.unsigned_abs()))
    }
}

/// `Π (I − B/c)^k` over the list.
pub fn miwa_factor(b: &CMatrix, shifts: &MiwaShiftList) -> Result<CMatrix> {
    let factors: Vec<Factor> = shifts.shifts().iter().map(|s| Factor::Miwa(s.c, s.multiplicity)).collect();
    dense_factor(b, &factors)
}

/// A polynomial factor in `B` raised to an integer power.
#[derive(Clone, Copy, Debug)]
enum Factor {
    /// `(I − B/c)^k`
    Miwa(Complex64, i32),
    /// `(cI − B)^k`
    Lattice(Complex64, i32),
}

impl Factor {
    fn parts(&self) -> (Complex64, i32) {
        match *self {
            Factor::Miwa(c, k) | Factor::Lattice(c, k) => (c, k),
        }
    }

    fn scalar(&self, lambda: Complex64) -> Result<ScaledComplex> {
        let (c, k) = self.parts();
        let base = match self {
            Factor::Miwa(..) => re(1.0) - lambda / c,
            Factor::Lattice(..) => c - lambda,
        };
        if k < 0 && (c - lambda).norm() <= SINGULAR_RCOND * c.norm().max(lambda.norm()) {
            return Err(Error::SingularShift { c });
        }
        Ok(ScaledComplex::from_complex(base).powi(k))
    }

    fn matrix(&self, b: &CMatrix) -> CMatrix {
        let id = CMatrix::identity(b.rows());
        match *self {
            Factor::Miwa(c, _) => &id - &b.scale(c.inv()),
            Factor::Lattice(c, _) => &id.scale(c) - b,
        }
    }
}

fn dense_factor(b: &CMatrix, factors: &[Factor]) -> Result<CMatrix> {
    let mut acc = CMatrix::identity(b.rows());
    for f in factors {
        let (c, k) = f.parts();
        if k != 0 {
            acc = &acc * &factor_power(&f.matrix(b), k, c)?;
        }
    }
    Ok(acc)
}

fn lattice_factors(lattice: [i32; 3], params: [Complex64; 3]) -> Vec<Factor> {
    lattice.iter().zip(params.iter()).map(|(&k, &c)| Factor::Lattice(c, k)).collect()
}

/// Cauchy–Binet expansion over the eigenbasis `B = V·diag(λ)·V⁻¹`:
/// `τ = Σ_S det((AV)_{·S})·det((V⁻¹Cᵀ)_{S·})·Π_{i∈S} w(λᵢ)` over `n`-subsets `S`.
struct Spectral {
    lambdas: Vec<Complex64>,
    terms: Vec<(Vec<usize>, ScaledComplex)>,
}

impl Spectral {
    fn new(tr: &RankOneTriple) -> Result<Option<Self>> {
        let Some(d) = diagonalize(tr.b(), SPECTRAL_RCOND)? else {
            return Ok(None);
        };
        let x = tr.a() * &d.vectors;
        let y = &d.inverse * &tr.c().transpose();
        let n = tr.n();
        let mut terms = Vec::new();
        for s in subsets(tr.big_n(), n) {
            let xs = CMatrix::from_fn(n, n, |i, j| x[(i, s[j])]);
            let ys = CMatrix::from_fn(n, n, |i, j| y[(s[i], j)]);
            let c = det_scaled(&xs)? * det_scaled(&ys)?;
            if !c.is_zero() {
                terms.push((s, c));
            }
        }
        Ok(Some(Spectral { lambdas: d.values, terms }))
    }

    fn weights(&self, t: Option<&TimeVector>, factors: &[Factor]) -> Result<Vec<ScaledComplex>> {
        self.lambdas
            .iter()
            .map(|&l| {
                let mut w = t.map_or(ScaledComplex::ONE, |t| ScaledComplex::exp(t.g(l)));
                for f in factors {
                    if f.parts().1 != 0 {
                        w = w * f.scalar(l)?;
                    }
                }
                Ok(w)
            })
            .collect()
    }

    /// `Σ_S c_S·Π w·p(S)` and the largest term magnitude (log).
    fn sum(&self, w: &[ScaledComplex], p: impl Fn(&[usize]) -> Complex64) -> (ScaledComplex, f64) {
        let terms: Vec<ScaledComplex> = self
            .terms
            .iter()
            .map(|(s, c)| s.iter().fold(*c, |acc, &i| acc * w[i]).scale_complex(p(s)))
            .collect();
        let top = terms.iter().map(|v| v.log_magnitude()).fold(f64::NEG_INFINITY, f64::max);
        (ScaledComplex::sum(&terms), top)
    }

    fn power_sum(&self, s: &[usize], k: u32) -> Complex64 {
        s.iter().map(|&i| self.lambdas[i].powu(k)).sum()
    }
}

/// Prepared evaluator for one triple.
///
/// When `B` has simple spectrum and well-conditioned eigenvectors, `τ` is
/// summed over the eigenbasis in log-scaled form; this keeps full relative
/// accuracy even when `Re g(λ)` spreads over hundreds of units. Otherwise the
/// dense route `det(A·e^{g(B)}·Cᵀ)` is used.
pub struct TauEvaluator<'a> {
    triple: &'a RankOneTriple,
    spectral: Option<Spectral>,
}

impl<'a> TauEvaluator<'a> {
    pub fn new(triple: &'a RankOneTriple) -> Result<Self> {
        Ok(TauEvaluator {
            triple,
            spectral: Spectral::new(triple)?,
        })
    }

    /// Forces the dense route.
    pub fn dense(triple: &'a RankOneTriple) -> Self {
        TauEvaluator { triple, spectral: None }
    }

    pub fn is_spectral(&self) -> bool {
        self.spectral.is_some()
    }

    pub fn triple(&self) -> &RankOneTriple {
        self.triple
    }

    fn eval(&self, t: Option<&TimeVector>, factors: &[Factor]) -> Result<ScaledComplex> {
        let v = match &self.spectral {
            Some(sp) => sp.sum(&sp.weights(t, factors)?, |_| re(1.0)).0,
            None => {
                let f = dense_factor(self.triple.b(), factors)?;
                match t {
                    Some(t) => {
                        let ev = evolve(self.triple.b(), t)?;
                        self.dense_det(&(&ev.exp * &f), ev.mu)?
                    }
                    None => self.dense_det(&f, re(0.0))?,
                }
            }
        };
        if v.log_magnitude().is_nan() || v.log_magnitude() == f64::INFINITY {
            return Err(Error::Range("tau is not representable".into()));
        }
        Ok(v)
    }

    fn dense_det(&self, inner: &CMatrix, mu: Complex64) -> Result<ScaledComplex> {
        let tr = self.triple;
        let m = &(tr.a() * inner) * &tr.c().transpose();
        Ok(det_scaled(&m)? * ScaledComplex::exp(mu * tr.n() as f64))
    }

    pub fn tau(&self, t: &TimeVector) -> Result<ScaledComplex> {
        self.eval(Some(t), &[])
    }

    pub fn tau_miwa(&self, t: &TimeVector, shifts: &MiwaShiftList) -> Result<ScaledComplex> {
        let factors: Vec<Factor> = shifts.shifts().iter().map(|s| Factor::Miwa(s.c, s.multiplicity)).collect();
        self.eval(Some(t), &factors)
    }

    pub fn tau_discrete(
        &self,
        lattice: [i32; 3],
        params: [Complex64; 3],
        t: Option<&TimeVector>,
    ) -> Result<ScaledComplex> {
        self.eval(t, &lattice_factors(lattice, params))
    }

    /// `τ(t)`, or a pole error when it vanishes to working precision
    /// (relative to its largest term, or `rcond(A·e^{g(B)}·Cᵀ)` on the dense route).
    pub fn tau_nonvanishing(&self, t: &TimeVector) -> Result<ScaledComplex> {
        if let Some(sp) = &self.spectral {
            let (tau, top) = sp.sum(&sp.weights(Some(t), &[])?, |_| re(1.0));
            if tau.is_zero() || tau.log_magnitude() < top + SINGULAR_RCOND.ln() {
                return Err(pole_at(t));
            }
            return Ok(tau);
        }
        let tr = self.triple;
        let ev = evolve(tr.b(), t)?;
        let m = &(tr.a() * &ev.exp) * &tr.c().transpose();
        if dense_vanishes(tr, &ev.exp, &m)? {
            return Err(pole_at(t));
        }
        self.dense_det(&ev.exp, ev.mu)
    }

    /// `∂_{t_k} log τ`, exact on both routes.
    pub fn log_first_derivative(&self, t: &TimeVector, k: usize) -> Result<Complex64> {
        assert!(k >= 1, "KP times are 1-based");
        let tr = self.triple;
        if let Some(sp) = &self.spectral {
            let w = sp.weights(Some(t), &[])?;
            let (tau, top) = sp.sum(&w, |_| re(1.0));
            if tau.is_zero() || tau.log_magnitude() < top + SINGULAR_RCOND.ln() {
                return Err(pole_at(t));
            }
            let (d, _) = sp.sum(&w, |s| sp.power_sum(s, k as u32));
            return Ok((d / tau).to_complex());
        }
        let ev = evolve(tr.b(), t)?;
        let ct = tr.c().transpose();
        let m = &(tr.a() * &ev.exp) * &ct;
        if dense_vanishes(tr, &ev.exp, &m)? {
            return Err(pole_at(t));
        }
        let rhs = &(&(tr.a() * &tr.b().powu(k as u32)) * &ev.exp) * &ct;
        let x = solve(&m, &rhs)?.ok_or_else(|| pole_at(t))?;
        Ok(x.trace())
    }

    /// Closed-form mixed partial of `log τ` in `t₁, t₂, t₃` (any order),
    /// available on the spectral route only.
    pub fn exact_log_derivative(&self, t: &TimeVector, orders: [u32; 3]) -> Option<Result<Complex64>> {
        let sp = self.spectral.as_ref()?;
        Some((|| {
            let w = sp.weights(Some(t), &[])?;
            let (tau, top) = sp.sum(&w, |_| re(1.0));
            if tau.is_zero() || tau.log_magnitude() < top + SINGULAR_RCOND.ln() {
                return Err(pole_at(t));
            }
            let moment = |a: [u32; 3]| -> Complex64 {
                let (v, _) = sp.sum(&w, |s| {
                    (0..3).fold(re(1.0), |acc, d| acc * sp.power_sum(s, d as u32 + 1).powu(a[d]))
                });
                (v / tau).to_complex()
            };
            Ok(cumulant(orders, &moment))
        })())
    }
}

/// `det(A·E·Cᵀ)` is numerically zero: `rcond` below the threshold, or the
/// determinant tiny against `(‖A‖‖E‖‖C‖)ⁿ` (the only test that means anything
/// for `n = 1`).
fn dense_vanishes(tr: &RankOneTriple, inner: &CMatrix, m: &CMatrix) -> Result<bool> {
    if reciprocal_condition(m) < SINGULAR_RCOND {
        return Ok(true);
    }
    let size = tr.a().norm2() * inner.norm2() * tr.c().norm2();
    let d = det_scaled(m)?;
    Ok(d.is_zero() || d.log_magnitude() < SINGULAR_RCOND.ln() + tr.n() as f64 * size.ln())
}

fn pole_at(t: &TimeVector) -> Error {
    Error::Pole(format!("A·e^(g(B))·Cᵀ is singular at t = {:?}", t.values()))
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Joint cumulant `∂^α log τ` from moments `∂^β τ / τ` by the recursion
/// `m_α = Σ_{β ≤ α−e} C(α−e, β)·κ_{β+e}·m_{α−e−β}`.
fn cumulant(alpha: [u32; 3], moment: &dyn Fn([u32; 3]) -> Complex64) -> Complex64 {
    let Some(j) = (0..3).find(|&d| alpha[d] > 0) else {
        return re(0.0);
    };
    let mut rest = alpha;
    rest[j] -= 1;
    let mut acc = moment(alpha);
    for b0 in 0..=rest[0] {
        for b1 in 0..=rest[1] {
            for b2 in 0..=rest[2] {
                let beta = [b0, b1, b2];
                if beta == rest {
                    continue;
                }
                let mut up = beta;
                up[j] += 1;
                let comp = [rest[0] - b0, rest[1] - b1, rest[2] - b2];
                let c = binom(rest[0], b0) * binom(rest[1], b1) * binom(rest[2], b2);
                acc -= cumulant(up, moment) * moment(comp) * c;
            }
        }
    }
    acc
}

/// `τ(t) = det(A·e^{g(B)}·Cᵀ)`. The triple is not re-validated.
pub fn tau(tr: &RankOneTriple, t: &TimeVector) -> Result<ScaledComplex> {
    TauEvaluator::new(tr)?.tau(t)
}

/// `τ` at `t − Σ kⱼ[cⱼ⁻¹]`, i.e. `det(A·e^{g(B)}·Π(I − B/cⱼ)^{kⱼ}·Cᵀ)`.
pub fn tau_miwa(tr: &RankOneTriple, t: &TimeVector, shifts: &MiwaShiftList) -> Result<ScaledComplex> {
    TauEvaluator::new(tr)?.tau_miwa(t, shifts)
}

/// Lattice tau `det(A·(c₁I − B)^l·(c₂I − B)^m·(c₃I − B)^n·Cᵀ)`, optionally
/// premultiplied by `e^{g(B)}`.
pub fn tau_discrete(
    tr: &RankOneTriple,
    lattice: [i32; 3],
    params: [Complex64; 3],
    t: Option<&TimeVector>,
) -> Result<ScaledComplex> {
    TauEvaluator::new(tr)?.tau_discrete(lattice, params, t)
}

/// Finite-difference settings for derivatives of order ≥ 2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiniteDifference {
    /// Step for one differentiation; stencils of order `r` use `step·STEP_GROWTH[r−1]`.
    pub step: f64,
}

/// Step multipliers per stencil order, balancing `h⁴` truncation after
/// Richardson against `ε/hʳ` roundoff.
const STEP_GROWTH: [f64; 3] = [1.0, 2.5, 5.0];

impl Default for FiniteDifference {
    fn default() -> Self {
        FiniteDifference { step: DEFAULT_FD_STEP }
    }
}

/// `∂_{t_k} log τ = tr[(A e^{g(B)} Cᵀ)⁻¹ · A Bᵏ e^{g(B)} Cᵀ]`.
pub fn log_tau_first_derivative(tr: &RankOneTriple, t: &TimeVector, k: usize) -> Result<Complex64> {
    TauEvaluator::new(tr)?.log_first_derivative(t, k)
}

fn central_stencil(order: u32) -> &'static [(i32, f64)] {
    match order {
        1 => &[(-1, -0.5), (1, 0.5)],
        2 => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        3 => &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
        _ => unreachable!("stencil order {order}"),
    }
}

/// Mixed partial `∂^{a₁}_{t₁}∂^{a₂}_{t₂}∂^{a₃}_{t₃} log τ` for total order 1–4.
pub fn log_tau_derivative(tr: &RankOneTriple, t: &TimeVector, orders: [u32; 3]) -> Result<Complex64> {
    log_tau_derivative_with(tr, t, orders, &FiniteDifference::default())
}

pub fn log_tau_derivative_with(
    tr: &RankOneTriple,
    t: &TimeVector,
    orders: [u32; 3],
    fd: &FiniteDifference,
) -> Result<Complex64> {
    TauEvaluator::new(tr)?.log_derivative(t, orders, fd)
}

impl TauEvaluator<'_> {
    /// Mixed partial of `log τ`: one differentiation exact, the rest by
    /// Richardson-extrapolated central differences.
    pub fn log_derivative(&self, t: &TimeVector, orders: [u32; 3], fd: &FiniteDifference) -> Result<Complex64> {
        log_derivative_fd(self, t, orders, fd)
    }
}

fn log_derivative_fd(ev: &TauEvaluator, t: &TimeVector, orders: [u32; 3], fd: &FiniteDifference) -> Result<Complex64> {
    let total: u32 = orders.iter().sum();
    if total == 0 || total > 4 {
        return Err(Error::dim(format!("derivative order {total} outside 1..=4")));
    }
    // One differentiation is done exactly; the rest by central differences.
    let exact = (0..3).rev().find(|&d| orders[d] > 0).unwrap();
    let mut rest = orders;
    rest[exact] -= 1;
    let fd_order: u32 = rest.iter().sum();
    if fd_order == 0 {
        return ev.log_first_derivative(t, exact + 1);
    }
    let h = fd.step * STEP_GROWTH[fd_order as usize - 1];
    let coarse = fd_estimate(ev, t, exact + 1, rest, h)?;
    let fine = fd_estimate(ev, t, exact + 1, rest, h / 2.0)?;
    Ok((fine * 4.0 - coarse) / 3.0)
}

fn fd_estimate(ev: &TauEvaluator, t: &TimeVector, exact: usize, rest: [u32; 3], h: f64) -> Result<Complex64> {
    // tensor product of 1-D central stencils
    let mut points: Vec<([i32; 3], f64)> = vec![([0; 3], 1.0)];
    for d in 0..3 {
        if rest[d] == 0 {
            continue;
        }
        let stencil = central_stencil(rest[d]);
        points = points
            .into_iter()
            .flat_map(|(off, w)| {
                stencil.iter().map(move |&(o, sw)| {
                    let mut off = off;
                    off[d] = o;
                    (off, w * sw)
                })
            })
            .collect();
    }
    let order: u32 = rest.iter().sum();
    let mut acc = re(0.0);
    for (off, w) in points {
        let mut shifted = t.clone();
        for (d, &o) in off.iter().enumerate() {
            if o != 0 {
                shifted = shifted.offset(d + 1, re(o as f64 * h));
            }
        }
        acc += ev.log_first_derivative(&shifted, exact)? * w;
    }
    Ok(acc / h.powi(order as i32))
}

/// Inclusive uniform grid `start:end:count`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub start: f64,
    pub end: f64,
    pub count: usize,
}

impl Grid1D {
    pub fn new(start: f64, end: f64, count: usize) -> Result<Self> {
        if count == 0 || !start.is_finite() || !end.is_finite() {
            return Err(Error::dim(format!("invalid grid {start}:{end}:{count}")));
        }
        if count == 1 && start != end {
            return Err(Error::dim("a one-point grid needs start == end"));
        }
        Ok(Grid1D { start, end, count })
    }

    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let step = (self.end - self.start) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| if i + 1 == self.count { self.end } else { self.start + step * i as f64 })
            .collect()
    }
}

impl FromStr for Grid1D {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::dim(format!("grid '{s}' is not start:end:count")));
        }
        let bad = |_| Error::dim(format!("grid '{s}' is not start:end:count"));
        let start: f64 = parts[0].trim().parse().map_err(bad)?;
        let end: f64 = parts[1].trim().parse().map_err(bad)?;
        let count: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| Error::dim(format!("grid '{s}' has a non-integer count")))?;
        Grid1D::new(start, end, count)
    }
}

impl fmt::Display for Grid1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.end, self.count)
    }
}

/// Sampling ranges over `t₁` and optionally `t₂`, `t₃`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t1: Grid1D,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t2: Option<Grid1D>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t3: Option<Grid1D>,
}

impl TimeGrid {
    pub fn t1_only(t1: Grid1D) -> Self {
        TimeGrid { t1, t2: None, t3: None }
    }

    /// Number of active axes (1–3).
    pub fn dims(&self) -> usize {
        1 + self.t2.is_some() as usize + self.t3.is_some() as usize
    }

    /// Grid coordinates, `t₁` varying fastest.
    pub fn coordinates(&self) -> Vec<Vec<f64>> {
        let p1 = self.t1.points();
        let p2 = self.t2.map(|g| g.points());
        let p3 = self.t3.map(|g| g.points());
        let mut out = Vec::new();
        for &x3 in p3.as_deref().unwrap_or(&[f64::NAN]) {
            for &x2 in p2.as_deref().unwrap_or(&[f64::NAN]) {
                for &x1 in &p1 {
                    let mut c = vec![x1];
                    if p2.is_some() {
                        c.push(x2);
                    }
                    if p3.is_some() {
                        c.push(x3);
                    }
                    out.push(c);
                }
            }
        }
        out
    }

    fn apply(&self, base: &TimeVector, coords: &[f64]) -> TimeVector {
        let mut t = base.with_time(1, re(coords[0]));
        let mut k = 1;
        if self.t2.is_some() {
            t = t.with_time(2, re(coords[k]));
            k += 1;
        }
        if self.t3.is_some() {
            t = t.with_time(3, re(coords[k]));
        }
        t
    }
}

/// One grid point: coordinates, `τ` there, the sampled value and a pole flag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSample {
    pub coords: Vec<f64>,
    pub tau: ScaledComplex,
    pub value: Option<Complex64>,
    pub pole: bool,
}

fn flag_poles(samples: &mut [GridSample]) {
    let top = samples
        .iter()
        .map(|s| s.tau.log_magnitude())
        .fold(f64::NEG_INFINITY, f64::max);
    let floor = top + POLE_RATIO.ln();
    for s in samples.iter_mut() {
        if s.tau.is_zero() || s.tau.log_magnitude() < floor {
            s.pole = true;
            s.value = None;
        }
    }
}

/// `τ` sampled over `grid`, other times taken from `base`.
pub fn tau_grid(tr: &RankOneTriple, grid: &TimeGrid, base: &TimeVector) -> Result<Vec<GridSample>> {
    let ev = TauEvaluator::new(tr)?;
    let mut out = Vec::new();
    for coords in grid.coordinates() {
        let v = ev.tau(&grid.apply(base, &coords))?;
        out.push(GridSample {
            coords,
            tau: v,
            value: Some(v.to_complex()),
            pole: false,
        });
    }
    flag_poles(&mut out);
    Ok(out)
}

/// `u = 2∂²_{t₁} log τ` over `grid`. Zeros of `τ` become pole markers.
pub fn u_field(tr: &RankOneTriple, grid: &TimeGrid, base: &TimeVector) -> Result<Vec<GridSample>> {
    let ev = TauEvaluator::new(tr)?;
    let fd = FiniteDifference::default();
    let mut out = Vec::new();
    for coords in grid.coordinates() {
        let t = grid.apply(base, &coords);
        let tv = ev.tau(&t)?;
        let (value, pole) = match ev.log_derivative(&t, [2, 0, 0], &fd) {
            Ok(d) => (Some(d * 2.0), false),
            Err(Error::Pole(_)) => (None, true),
            Err(e) => return Err(e),
        };
        out.push(GridSample {
            coords,
            tau: tv,
            value,
            pole,
        });
    }
    flag_poles(&mut out);
    Ok(out)
}
