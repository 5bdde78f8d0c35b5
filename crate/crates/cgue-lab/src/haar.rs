//! Haar-distributed random unitaries and unitary conjugation.
//!
//! Sampling follows the Ginibre/QR construction: orthonormalize a
//! complex Gaussian matrix and fix the phases by normalizing the
//! diagonal of the triangular factor. The phase correction is what
//! makes the distribution exactly Haar rather than merely unitary.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::hermitian::HermitianMatrix;

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone)]
pub struct ComplexMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut entries = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                entries.push(f(i, j));
            }
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.dim + j]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self.get(j, i).conj())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let n = self.dim;
        let mut out = vec![Complex64::default(); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.entries[i * n + k];
                if a == Complex64::default() {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * other.entries[k * n + j];
                }
            }
        }
        Self { dim: n, entries: out }
    }

    /// Max |(U^dagger U - 1)_ij|; diagnostic.
    pub fn unitarity_defect(&self) -> f64 {
        let p = self.adjoint().mul(self);
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p.get(i, j) - Complex64::new(expect, 0.0)).norm());
            }
        }
        worst
    }
}

/// Draws a Haar-distributed unitary.
pub fn sample_haar(dim: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let g = faer::Mat::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = g.qr();
    let q = qr.compute_Q();
    let r = qr.R().to_owned();
    ComplexMatrix::from_fn(dim, |i, j| {
        let d = r[(j, j)];
        q[(i, j)] * (d / d.norm())
    })
}

/// U H U^dagger.
pub fn conjugate(u: &ComplexMatrix, h: &HermitianMatrix) -> HermitianMatrix {
    let n = u.dim();
    debug_assert_eq!(n, h.dim());
    // tmp = U H
    let mut tmp = vec![Complex64::default(); n * n];
    for i in 0..n {
        for k in 0..n {
            let a = u.get(i, k);
            for j in 0..n {
                tmp[i * n + j] += a * h.get(k, j);
            }
        }
    }
    // out = tmp U^dagger
    let mut out = vec![Complex64::default(); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = Complex64::default();
            for k in 0..n {
                acc += tmp[i * n + k] * u.get(j, k).conj();
            }
            out[i * n + j] = acc;
        }
    }
    // clean rounding so the Hermiticity invariant holds exactly
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (out[i * n + j] + out[j * n + i].conj());
            out[i * n + j] = avg;
            out[j * n + i] = avg.conj();
        }
        out[i * n + i] = Complex64::new(out[i * n + i].re, 0.0);
    }
    HermitianMatrix::from_entries(n, out).expect("conjugation preserves Hermiticity")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermitian::trace_inner_product;
    use crate::rng;

    #[test]
    fn haar_unitaries_are_unitary_and_deterministic() {
        let mut r1 = rng::stream(1, rng::domain::HAAR, 0);
        let mut r2 = rng::stream(1, rng::domain::HAAR, 0);
        let u1 = sample_haar(6, &mut r1);
        let u2 = sample_haar(6, &mut r2);
        assert!(u1.unitarity_defect() < 1e-12);
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(u1.get(i, j), u2.get(i, j));
            }
        }
    }

    #[test]
    fn conjugation_preserves_spectrum_and_norm() {
        let h = HermitianMatrix::from_diagonal(&[1.0, 2.0, 5.0]);
        let mut r = rng::stream(2, rng::domain::HAAR, 0);
        let u = sample_haar(3, &mut r);
        let c = conjugate(&u, &h);
        let before = trace_inner_product(&h, &h).unwrap();
        let after = trace_inner_product(&c, &c).unwrap();
        assert!((before - after).abs() < 1e-10);
        assert!((c.trace() - h.trace()).abs() < 1e-10);
        let vals = crate::hermitian::eigenvalues(&c).unwrap();
        for (v, expect) in vals.iter().zip([1.0, 2.0, 5.0]) {
            assert!((v - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn first_entry_modulus_has_haar_mean() {
        // E |u_00|^2 = 1/N under Haar
        let n = 4;
        let samples = 4000;
        let mut acc = 0.0;
        for k in 0..samples {
            let mut r = rng::stream(3, rng::domain::HAAR, k);
            let u = sample_haar(n, &mut r);
            acc += u.get(0, 0).norm_sqr();
        }
        let mean = acc / samples as f64;
        assert!(
            (mean - 1.0 / n as f64).abs() < 0.02,
            "E|u00|^2 = {mean}, expected {}",
            1.0 / n as f64
        );
    }
}
