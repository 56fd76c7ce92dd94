//! Matrix exponential by scaling and squaring with diagonal Padé approximants
//! (Higham 2005). No diagonalisation is involved, so defective matrices such
//! as Jordan blocks are handled like any other input.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::CMatrix;
use crate::error::{Error, Result};

const THETA_3: f64 = 1.495_585_217_958_292e-2;
const THETA_5: f64 = 2.539_398_330_063_23e-1;
const THETA_7: f64 = 9.504_178_996_162_932e-1;
const THETA_9: f64 = 2.097_847_961_257_068;
const THETA_13: f64 = 5.371_920_351_148_152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const B9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

type M = DMatrix<Complex64>;

fn norm1(m: &M) -> f64 {
    m.column_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Odd/even split `U = A·Σ b_{2k+1} A^{2k}`, `V = Σ b_{2k} A^{2k}` for the
/// low-degree approximants, given the even powers `I, A², A⁴, …`.
fn pade_low(a: &M, even_powers: &[M], b: &[f64]) -> (M, M) {
    let n = a.nrows();
    let mut u_inner = M::zeros(n, n);
    let mut v = M::zeros(n, n);
    for (k, p) in even_powers.iter().enumerate() {
        u_inner += p * re(b[2 * k + 1]);
        v += p * re(b[2 * k]);
    }
    (a * u_inner, v)
}

fn pade13(a: &M) -> (M, M) {
    let n = a.nrows();
    let id = M::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &B13;
    let u_hi = &a6 * re(b[13]) + &a4 * re(b[11]) + &a2 * re(b[9]);
    let u = a * (&a6 * u_hi + &a6 * re(b[7]) + &a4 * re(b[5]) + &a2 * re(b[3]) + &id * re(b[1]));
    let v_hi = &a6 * re(b[12]) + &a4 * re(b[10]) + &a2 * re(b[8]);
    let v = &a6 * v_hi + &a6 * re(b[6]) + &a4 * re(b[4]) + &a2 * re(b[2]) + &id * re(b[0]);
    (u, v)
}

/// `exp(M)` for a square complex matrix.
pub fn matexp(m: &CMatrix) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(Error::dim(format!(
            "matexp needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let a = m.as_dmatrix();
    let n = a.nrows();
    if n == 1 {
        let e = a[(0, 0)].exp();
        return CMatrix::from_dmatrix(M::from_element(1, 1, e))
            .map_err(|_| Error::Range("matrix exponential overflowed".into()));
    }
    let norm = norm1(a);
    let id = M::identity(n, n);

    let (u, v, squarings) = if norm <= THETA_9 {
        let a2 = a * a;
        let mut evens = vec![id.clone(), a2.clone()];
        let b: &[f64] = if norm <= THETA_3 {
            &B3
        } else if norm <= THETA_5 {
            evens.push(&a2 * &a2);
            &B5
        } else if norm <= THETA_7 {
            let a4 = &a2 * &a2;
            evens.push(a4.clone());
            evens.push(&a4 * &a2);
            &B7
        } else {
            let a4 = &a2 * &a2;
            let a6 = &a4 * &a2;
            evens.push(a4);
            evens.push(a6.clone());
            evens.push(&a6 * &a2);
            &B9
        };
        let (u, v) = pade_low(a, &evens, b);
        (u, v, 0u32)
    } else {
        let s = (norm / THETA_13).log2().ceil().max(0.0) as u32;
        let scaled = a * re(0.5f64.powi(s as i32));
        let (u, v) = pade13(&scaled);
        (u, v, s)
    };

    let p = &v + &u;
    let q = &v - &u;
    let lu = q.lu();
    let mut r = lu
        .solve(&p)
        .ok_or_else(|| Error::Range("Padé denominator is singular".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    CMatrix::from_dmatrix(r).map_err(|_| Error::Range("matrix exponential overflowed".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn taylor_oracle(m: &CMatrix) -> CMatrix {
        // plain series on a scaled copy, then square back up
        let norm = m.norm1();
        let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
        let a = m.scale(re(0.5f64.powi(s as i32)));
        let n = m.rows();
        let mut term = CMatrix::identity(n);
        let mut sum = CMatrix::identity(n);
        for k in 1..40 {
            term = (&term * &a).scale(re(1.0 / k as f64));
            sum = &sum + &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let e = matexp(&CMatrix::zeros(2, 2)).unwrap();
        assert_eq!(e, CMatrix::identity(2));
    }

    #[test]
    fn nilpotent_series_terminates() {
        let n = CMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        let e = matexp(&n).unwrap();
        let want = CMatrix::from_real(2, 2, &[1.0, 1.0, 0.0, 1.0]).unwrap();
        assert!((&e - &want).max_abs() < 1e-15);
    }

    #[test]
    fn diagonal_matches_scalar_exponentials() {
        let d = CMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 2.0]).unwrap();
        let e = matexp(&d).unwrap();
        assert!((e[(0, 0)].re - 1f64.exp()).abs() < 1e-12 * 1f64.exp());
        assert!((e[(1, 1)].re - 2f64.exp()).abs() < 1e-12 * 2f64.exp());
        assert!(e[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn jordan_block_is_exact() {
        // exp([[z,0],[1,z]]) = e^z [[1,0],[1,1]]
        let z = Complex64::new(0.3, -1.2);
        let b = CMatrix::from_row_major(2, 2, vec![z, re(0.0), re(1.0), z]).unwrap();
        let e = matexp(&b).unwrap();
        let ez = z.exp();
        assert!((e[(1, 0)] - ez).norm() < 1e-14);
        assert!((e[(0, 0)] - ez).norm() < 1e-14);
        assert!(e[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn large_norm_diagonal_relative_accuracy() {
        let d = CMatrix::from_diagonal(&[Complex64::new(20.0, 3.0), Complex64::new(-10.0, 5.0), re(29.0)]);
        let e = matexp(&d).unwrap();
        for (i, z) in [Complex64::new(20.0, 3.0), Complex64::new(-10.0, 5.0), re(29.0)]
            .iter()
            .enumerate()
        {
            assert!((e[(i, i)] - z.exp()).norm() <= 1e-12 * 29f64.exp());
        }
    }

    #[test]
    fn agrees_with_taylor_oracle_on_every_pade_branch() {
        for (scale, seed) in [(0.005, 1.0), (0.1, 2.0), (0.4, 3.0), (1.0, 4.0), (6.0, 5.0), (25.0, 6.0)] {
            let m = CMatrix::from_fn(4, 4, |i, j| {
                let x = ((i * 7 + j * 3) as f64 + seed).sin();
                let y = ((i * 5 + j * 11) as f64 * seed).cos();
                Complex64::new(x, y).scale(scale / 4.0)
            });
            let e = matexp(&m).unwrap();
            let o = taylor_oracle(&m);
            let rel = (&e - &o).frobenius_norm() / o.frobenius_norm();
            assert!(rel < 1e-12, "scale {scale}: rel {rel}");
        }
    }

    #[test]
    fn non_square_is_dimension_error() {
        assert!(matches!(matexp(&CMatrix::zeros(2, 3)), Err(Error::Dimension(_))));
    }
}
