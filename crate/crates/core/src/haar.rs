//! Haar-distributed unitary matrices.
//!
//! A matrix of i.i.d. standard complex Gaussians is orthonormalised column by
//! column (modified Gram–Schmidt). Gram–Schmidt yields `R` with a positive
//! real diagonal, which is the phase convention that makes the `Q` factor
//! exactly Haar distributed.

use alloc::vec::Vec;

use num_complex::Complex64;
use rand_core::RngCore;
use rand_distr::{Distribution, StandardNormal};

/// Square complex matrix stored column-major.
#[derive(Debug, Clone)]
pub struct Unitary {
    dim: usize,
    cols: Vec<Complex64>,
}

impl Unitary {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry `(row, col)`.
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.cols[col * self.dim + row]
    }

    /// `|U_{ij}|^2`, a doubly stochastic matrix, written row-major into `out`.
    pub fn abs_sq_into(&self, out: &mut [f64]) {
        let n = self.dim;
        for col in 0..n {
            for row in 0..n {
                out[row * n + col] = self.cols[col * n + row].norm_sqr();
            }
        }
    }
}

/// Draws one Haar-random `dim x dim` unitary matrix.
pub fn sample_unitary<R: RngCore + ?Sized>(dim: usize, rng: &mut R) -> Unitary {
    let mut cols = Vec::with_capacity(dim * dim);
    let scale = core::f64::consts::FRAC_1_SQRT_2;
    for _ in 0..dim * dim {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        cols.push(Complex64::new(re * scale, im * scale));
    }
    for k in 0..dim {
        for j in 0..k {
            let mut proj = Complex64::new(0.0, 0.0);
            for r in 0..dim {
                proj += cols[j * dim + r].conj() * cols[k * dim + r];
            }
            for r in 0..dim {
                let qj = cols[j * dim + r];
                cols[k * dim + r] -= proj * qj;
            }
        }
        let norm = libm::sqrt((0..dim).map(|r| cols[k * dim + r].norm_sqr()).sum::<f64>());
        for r in 0..dim {
            cols[k * dim + r] /= norm;
        }
    }
    Unitary { dim, cols }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;
    use rand_core::SeedableRng;

    #[test]
    fn columns_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in 1..=5 {
            let u = sample_unitary(dim, &mut rng);
            for a in 0..dim {
                for b in 0..dim {
                    let mut ip = Complex64::new(0.0, 0.0);
                    for r in 0..dim {
                        ip += u.get(r, a).conj() * u.get(r, b);
                    }
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert!((ip.re - expect).abs() < 1e-12 && ip.im.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn moduli_are_doubly_stochastic_with_uniform_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dim = 3;
        let mut mean = [0.0; 9];
        let mut buf = [0.0; 9];
        let draws = 20_000;
        for _ in 0..draws {
            let u = sample_unitary(dim, &mut rng);
            u.abs_sq_into(&mut buf);
            for r in 0..dim {
                let row: f64 = buf[r * dim..(r + 1) * dim].iter().sum();
                assert!((row - 1.0).abs() < 1e-12);
            }
            for (m, b) in mean.iter_mut().zip(&buf) {
                *m += b / draws as f64;
            }
        }
        // E|U_ij|^2 = 1/dim under Haar measure.
        for m in mean {
            assert!((m - 1.0 / 3.0).abs() < 0.01, "{m}");
        }
    }
}
