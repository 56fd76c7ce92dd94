//! Baker–Akhiezer functions of a rank-one triple and the pole structure of
//! the dual wave function.
//!
//! `ψ(t, z) = τ(t − [z⁻¹])/τ(t) · e^{g(z)}` and
//! `ψ*(t, z) = τ(t + [z⁻¹])/τ(t) · e^{−g(z)}`; with `p(z) = det(zI − B)`,
//! `p(z)·ψ*·e^{g(z)}` is a polynomial of degree `N` in `z`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::matkernel::{det_scaled, eig, eigenvalues, Eigenvalue, ScaledComplex};
use crate::tau::{MiwaShiftList, TauEvaluator, TimeVector};
use crate::triple::RankOneTriple;
use crate::verify::{complex_json, VerificationReport};

pub const POLYNOMIALITY_TOL: f64 = 1e-8;

/// Interpolation circles tried before giving up.
const MAX_RADII: usize = 5;

/// Nodes closer than this to an eigenvalue of `B` count as collisions.
const NODE_CLEARANCE: f64 = 0.5;

/// One value of a wave function, kept as `ratio · e^{exponent}` where
/// `ratio → 1` as `z → ∞`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BASample {
    /// `x` for the stationary function, `t₁` for the time-dependent ones.
    pub x: Complex64,
    pub z: Complex64,
    pub ratio: ScaledComplex,
    pub exponent: Complex64,
}

impl BASample {
    pub fn value(&self) -> ScaledComplex {
        self.ratio * ScaledComplex::exp(self.exponent)
    }

    pub fn to_complex(&self) -> Complex64 {
        self.value().to_complex()
    }
}

fn nonzero(z: Complex64) -> Result<()> {
    if z.norm() == 0.0 || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::Degenerate(format!("spectral parameter must be finite and non-zero, got {z}")));
    }
    Ok(())
}

/// `det(A·e^{xB}·(zI − B)·Cᵀ) / (zⁿ·det(A·e^{xB}·Cᵀ)) · e^{xz}`.
///
/// The power is `zⁿ` (rows of `A`), the degree of the numerator in `z`, so
/// that `ψ·e^{−xz} → 1`.
pub fn psi_stationary(tr: &RankOneTriple, x: Complex64, z: Complex64) -> Result<BASample> {
    nonzero(z)?;
    let ev = TauEvaluator::new(tr)?;
    let t = TimeVector::new(vec![x])?;
    let den = ev.tau_nonvanishing(&t)?;
    let num = ev.tau_discrete([1, 0, 0], [z, z, z], Some(&t))?;
    let zn = ScaledComplex::from_complex(z).powi(tr.n() as i32);
    Ok(BASample {
        x,
        z,
        ratio: num / (zn * den),
        exponent: x * z,
    })
}

/// `τ(t − [z⁻¹])/τ(t) · e^{g(z)}`.
pub fn psi_time(tr: &RankOneTriple, t: &TimeVector, z: Complex64) -> Result<BASample> {
    shifted_ratio(&TauEvaluator::new(tr)?, t, z, 1)
}

/// `τ(t + [z⁻¹])/τ(t) · e^{−g(z)}`; singular when `z` is an eigenvalue of `B`.
pub fn psi_dual(tr: &RankOneTriple, t: &TimeVector, z: Complex64) -> Result<BASample> {
    shifted_ratio(&TauEvaluator::new(tr)?, t, z, -1)
}

fn shifted_ratio(ev: &TauEvaluator, t: &TimeVector, z: Complex64, k: i32) -> Result<BASample> {
    nonzero(z)?;
    let den = ev.tau_nonvanishing(t)?;
    let num = ev.tau_miwa(t, &MiwaShiftList::single(z, k)?)?;
    Ok(BASample {
        x: t.get(1),
        z,
        ratio: num / den,
        exponent: t.g(z) * k as f64,
    })
}

/// Eigenvalues of `B` with algebraic multiplicities; `p(z) = det(zI − B)`
/// has degree `char_poly_degree`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralSupport {
    pub points: Vec<Eigenvalue>,
    pub char_poly_degree: usize,
}

pub fn grassmann_support(tr: &RankOneTriple) -> Result<SpectralSupport> {
    Ok(SpectralSupport {
        points: eig(tr.b())?,
        char_poly_degree: tr.big_n(),
    })
}

/// Checks that `q(z) = det(zI − B)·τ(t + [z⁻¹])/τ(t)` is a polynomial of
/// degree `N`: it is interpolated at `N + 1` roots of unity on a circle of
/// radius `2 + max|λ(B)|` and compared with direct evaluation at `N`
/// interleaved nodes on the same circle and `N` nodes on a circle `1.5×`
/// larger. The residual is the largest error relative to
/// `Σ |aⱼ|·|z|ʲ` for the fitted coefficients `aⱼ`.
pub fn polynomiality_check(tr: &RankOneTriple, t: &TimeVector) -> Result<VerificationReport> {
    let spectrum = eigenvalues(tr.b())?;
    let mut radius = 2.0 + spectrum.iter().map(|l| l.norm()).fold(0.0, f64::max);
    for _ in 0..MAX_RADII {
        match polynomiality_check_at_radius(tr, t, radius) {
            Err(Error::Geometry(_)) | Err(Error::SingularShift { .. }) => radius *= 1.25,
            other => return other,
        }
    }
    Err(Error::Geometry(format!(
        "no interpolation circle clear of the spectrum after {MAX_RADII} radii"
    )))
}

fn circle(radius: f64, count: usize, phase: f64) -> Vec<Complex64> {
    (0..count)
        .map(|k| Complex64::from_polar(radius, 2.0 * PI * (k as f64 + phase) / count as f64))
        .collect()
}

/// [`polynomiality_check`] on a caller-chosen circle.
pub fn polynomiality_check_at_radius(tr: &RankOneTriple, t: &TimeVector, radius: f64) -> Result<VerificationReport> {
    let big_n = tr.big_n();
    let spectrum = eigenvalues(tr.b())?;
    let nodes = circle(radius, big_n + 1, 0.0);
    let mut checks = circle(radius, big_n + 1, 0.5);
    checks.truncate(big_n);
    checks.extend(circle(1.5 * radius, big_n, 0.25));
    for z in nodes.iter().chain(&checks) {
        if spectrum.iter().any(|l| (z - l).norm() < NODE_CLEARANCE) {
            return Err(Error::Geometry(format!("node {z} is too close to the spectrum of B")));
        }
    }

    let ev = TauEvaluator::new(tr)?;
    let tau = ev.tau_nonvanishing(t)?;
    let b = tr.b();
    let q = |z: Complex64| -> Result<Complex64> {
        let p = det_scaled(&b.scale(Complex64::new(-1.0, 0.0)).add_identity(z))?;
        let shifted = ev.tau_miwa(t, &MiwaShiftList::single(z, -1)?)?;
        Ok((p * shifted / tau).to_complex())
    };

    // interpolation on roots of unity is a discrete Fourier transform
    let samples: Vec<Complex64> = nodes.iter().map(|&z| q(z)).collect::<Result<_>>()?;
    let m = big_n + 1;
    let coeffs: Vec<Complex64> = (0..m)
        .map(|j| {
            let s: Complex64 = samples
                .iter()
                .enumerate()
                .map(|(k, &v)| v * Complex64::from_polar(1.0, -2.0 * PI * (j * k) as f64 / m as f64))
                .sum();
            s / (m as f64 * radius.powi(j as i32))
        })
        .collect();

    let mut residual: f64 = 0.0;
    for &z in &checks {
        let fit = coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * z + a);
        let scale: f64 = coeffs
            .iter()
            .enumerate()
            .map(|(j, a)| a.norm() * z.norm().powi(j as i32))
            .sum();
        let err = (q(z)? - fit).norm();
        residual = residual.max(if err == 0.0 { 0.0 } else { err / scale });
    }
    let lead = coeffs[big_n];
    Ok(VerificationReport::new("polynomiality", residual, POLYNOMIALITY_TOL)
        .with_context("radius", json!(radius))
        .with_context("degree", json!(big_n))
        .with_context("leading_coefficient", complex_json(lead)))
}
