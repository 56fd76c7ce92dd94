//! Seeded random sampling of complex scalars, vectors and matrices.
//!
//! Every generator is ChaCha8 seeded through `SeedableRng::seed_from_u64`,
//! which is specified by `rand_core` and portable across platforms, so a
//! seed pins the exact sequence of samples.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::matkernel::CMatrix;

const MAX_REJECTIONS: usize = 10_000;

pub struct ComplexSampler {
    rng: ChaCha8Rng,
}

impl ComplexSampler {
    pub fn new(seed: u64) -> Self {
        ComplexSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn real(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..hi)
    }

    pub fn index(&mut self, upper: usize) -> usize {
        self.rng.gen_range(0..upper)
    }

    /// Uniform on the unit square `[0,1) + i[0,1)`.
    pub fn unit_square(&mut self) -> Complex64 {
        Complex64::new(self.rng.gen::<f64>(), self.rng.gen::<f64>())
    }

    /// Uniform on `[-r, r) + i[-r, r)`.
    pub fn centered(&mut self, r: f64) -> Complex64 {
        Complex64::new(self.rng.gen_range(-r..r), self.rng.gen_range(-r..r))
    }

    /// Uniform in radius and angle on the annulus `r_min ≤ |z| ≤ r_max`.
    pub fn annulus(&mut self, r_min: f64, r_max: f64) -> Complex64 {
        let r = self.rng.gen_range(r_min..=r_max);
        let theta = self.rng.gen_range(-PI..PI);
        Complex64::from_polar(r, theta)
    }

    /// Uniform on the closed disc `|z| ≤ r`.
    pub fn disc(&mut self, r: f64) -> Complex64 {
        let rho = r * self.rng.gen::<f64>().sqrt();
        let theta = self.rng.gen_range(-PI..PI);
        Complex64::from_polar(rho, theta)
    }

    /// `count` annulus points at least `gap` from each other and from every
    /// point of `avoid`, by rejection. `None` after `MAX_REJECTIONS` draws.
    pub fn annulus_avoiding(
        &mut self,
        count: usize,
        r_min: f64,
        r_max: f64,
        avoid: &[Complex64],
        gap: f64,
    ) -> Option<Vec<Complex64>> {
        let mut out: Vec<Complex64> = Vec::with_capacity(count);
        for _ in 0..MAX_REJECTIONS {
            if out.len() == count {
                break;
            }
            let z = self.annulus(r_min, r_max);
            if avoid.iter().chain(out.iter()).all(|w| (z - w).norm() >= gap) {
                out.push(z);
            }
        }
        (out.len() == count).then_some(out)
    }

    pub fn unit_square_matrix(&mut self, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| self.unit_square())
    }

    pub fn unit_square_vector(&mut self, len: usize) -> Vec<Complex64> {
        (0..len).map(|_| self.unit_square()).collect()
    }

    pub fn centered_matrix(&mut self, rows: usize, cols: usize, r: f64) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| self.centered(r))
    }

    pub fn centered_vector(&mut self, len: usize, r: f64) -> Vec<Complex64> {
        (0..len).map(|_| self.centered(r)).collect()
    }

    /// Sum of `rank` random outer products, rescaled to spectral norm `norm`.
    pub fn rank_r_matrix(&mut self, dim: usize, rank: usize, norm: f64) -> CMatrix {
        let mut m = CMatrix::zeros(dim, dim);
        for _ in 0..rank {
            let a = self.centered_vector(dim, 1.0);
            let b = self.centered_vector(dim, 1.0);
            m = &m + &CMatrix::outer(&a, &b);
        }
        let current = m.norm2();
        if current > 0.0 {
            m = m.scale(Complex64::new(norm / current, 0.0));
        }
        m
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
