//! Tau-functions of the KP hierarchy built from rectangular matrix triples
//! `(A, B, C)` with `rank(A·B·Uᵀ) ≤ 1`, together with numerical checks of the
//! bilinear identities they satisfy.
//!
//! The continuous tau-function is `τ(t) = det(A·e^{g(B)}·Cᵀ)` with
//! `g(x) = Σ tᵢ xⁱ`. Miwa shifts act exactly as matrix factors
//! `(I − B/c)^k`, which gives the discrete lattice form used by the
//! Hirota bilinear difference equation.
//!
//! ```
//! use kp_rankone::{random_admissible, TimeVector};
//! use kp_rankone::tau::TauEvaluator;
//! use kp_rankone::verify::hbde_residual;
//! use num_complex::Complex64;
//!
//! let tr = random_admissible(2, 5, 42)?;
//! let t = TimeVector::from_real(&[0.3, -0.1, 0.2])?;
//! let tau = TauEvaluator::new(&tr)?.tau(&t)?;
//! assert!(tau.log_magnitude().is_finite());
//! let c = [1.5, 2.0, 2.5].map(|x| Complex64::new(x, 1.0));
//! assert!(hbde_residual(&tr, &t, c, [0, 0, 0])?.pass);
//! # Ok::<(), kp_rankone::Error>(())
//! ```

pub mod baker;
pub mod cases;
pub mod error;
pub mod matkernel;
pub mod sample;
pub mod tau;
pub mod triple;
pub mod verify;

pub use error::{Error, Result};
pub use matkernel::{CMatrix, ScaledComplex};
pub use tau::{MiwaShift, MiwaShiftList, TimeVector};
pub use triple::{random_admissible, validate_triple, RankOneTriple, TripleReport};
pub use verify::VerificationReport;
