//! Embedded k-body unitary ensembles on fermionic Slater-determinant
//! spaces.
//!
//! `m` spinless fermions occupy `l` degenerate single-particle states;
//! the Hilbert space is the C(l, m) Slater determinants, stored as
//! bitmasks. A Hermitian Gaussian coefficient matrix drawn on the
//! C(l, k)-dimensional k-particle space is lifted to the m-particle
//! space in second quantization: annihilate a k-subset, create a
//! k-subset, with the fermionic sign from bit counting.

use num_complex::Complex64;

use crate::basis::matrix_from_coefficients;
use crate::error::{Error, Result};
use crate::hermitian::HermitianMatrix;
use crate::rng;

/// Guard for dense diagonalization downstream.
pub const MAX_DENSE_DIM: usize = 4096;

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as u64
}

/// Enumerates all masks over `l` bits with exactly `k` bits set,
/// ascending numeric order.
fn subsets(l: usize, k: usize) -> Vec<u64> {
    let count = binomial(l, k) as usize;
    let mut out = Vec::with_capacity(count);
    if k == 0 {
        out.push(0);
        return out;
    }
    let mut mask: u64 = (1 << k) - 1;
    let limit: u64 = 1 << l;
    while mask < limit {
        out.push(mask);
        // Gosper's hack: next mask with the same popcount
        let c = mask & mask.wrapping_neg();
        let r = mask + c;
        mask = (((r ^ mask) >> 2) / c) | r;
    }
    out
}

/// Applies the ordered annihilator product for subset `j` (lowest state
/// first) to `state`; returns the sign and remaining state, or None.
fn annihilate_subset(state: u64, j: u64) -> Option<(i32, u64)> {
    if state & j != j {
        return None;
    }
    let mut s = state;
    let mut sign = 1i32;
    let mut rest = j;
    while rest != 0 {
        let bit = rest & rest.wrapping_neg();
        let below = (s & (bit - 1)).count_ones();
        if below % 2 == 1 {
            sign = -sign;
        }
        s &= !bit;
        rest &= !bit;
    }
    Some((sign, s))
}

/// Applies the ordered creator product for subset `i` (highest state
/// first) to `state`; returns the sign and new state, or None.
fn create_subset(state: u64, i: u64) -> Option<(i32, u64)> {
    if state & i != 0 {
        return None;
    }
    let mut s = state;
    let mut sign = 1i32;
    let mut rest = i;
    while rest != 0 {
        let bit = 1u64 << (63 - rest.leading_zeros());
        let below = (s & (bit - 1)).count_ones();
        if below % 2 == 1 {
            sign = -sign;
        }
        s |= bit;
        rest &= !bit;
    }
    Some((sign, s))
}

/// Precomputed spaces and operator index maps for one (l, m, k) triple.
#[derive(Debug, Clone)]
pub struct EgueBuilder {
    pub l: usize,
    pub m: usize,
    pub k: usize,
    /// m-particle Slater determinants, ascending masks.
    states: Vec<u64>,
    /// k-particle subsets, ascending masks; indexes the coefficient matrix.
    k_subsets: Vec<u64>,
}

impl EgueBuilder {
    pub fn new(l: usize, m: usize, k: usize) -> Result<Self> {
        if !(1 <= k && k <= m && m <= l) {
            return Err(Error::invalid(format!(
                "need 1 <= k <= m <= l, got l={l} m={m} k={k}"
            )));
        }
        if l > 63 {
            return Err(Error::Capacity(format!("l = {l} exceeds bitmask width")));
        }
        let dim = binomial(l, m);
        if dim as usize > MAX_DENSE_DIM {
            return Err(Error::Capacity(format!(
                "C({l},{m}) = {dim} exceeds the dense envelope {MAX_DENSE_DIM}"
            )));
        }
        Ok(Self {
            l,
            m,
            k,
            states: subsets(l, m),
            k_subsets: subsets(l, k),
        })
    }

    /// Hilbert-space dimension C(l, m).
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    /// Dimension C(l, k) of the k-particle coefficient space.
    pub fn coefficient_dim(&self) -> usize {
        self.k_subsets.len()
    }

    /// Number of independent real Gaussian coefficients: the k-particle
    /// coefficient matrix is Hermitian of dimension C(l, k).
    pub fn independent_coefficient_count(&self) -> u64 {
        let d = self.coefficient_dim() as u64;
        d * d
    }

    fn state_index(&self, mask: u64) -> usize {
        self.states.binary_search(&mask).expect("state in space")
    }

    /// Draws the k-particle GUE coefficient matrix and lifts it to the
    /// m-particle space. Deterministic in `(seed, sample_index)`.
    pub fn build(&self, lambda: f64, seed: u64, sample_index: u64) -> HermitianMatrix {
        let dk = self.coefficient_dim();
        let sigma = lambda / (dk as f64).sqrt();
        let mut stream = rng::stream(seed, rng::domain::EGUE, sample_index);
        let coeffs: Vec<f64> = (0..dk * dk)
            .map(|_| sigma * rand::Rng::sample::<f64, _>(&mut stream, rand_distr::StandardNormal))
            .collect();
        let w = matrix_from_coefficients(dk, &coeffs);
        self.lift(&w)
    }

    /// Lifts a Hermitian coefficient matrix W on the k-particle space:
    /// H = sum_{I,J} W_IJ A^dag_I A_J.
    pub fn lift(&self, w: &HermitianMatrix) -> HermitianMatrix {
        let n = self.dim();
        let mut entries = vec![Complex64::default(); n * n];
        for (col, &s) in self.states.iter().enumerate() {
            for (j_idx, &j) in self.k_subsets.iter().enumerate() {
                let Some((sign_a, s1)) = annihilate_subset(s, j) else {
                    continue;
                };
                for (i_idx, &i) in self.k_subsets.iter().enumerate() {
                    let Some((sign_c, s2)) = create_subset(s1, i) else {
                        continue;
                    };
                    let row = self.state_index(s2);
                    let sign = (sign_a * sign_c) as f64;
                    entries[row * n + col] += sign * w.get(i_idx, j_idx);
                }
            }
        }
        HermitianMatrix::from_entries(n, entries)
            .expect("lift of a Hermitian coefficient matrix is Hermitian")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_counting() {
        assert_eq!(binomial(12, 4), 495);
        let b = EgueBuilder::new(12, 4, 2).unwrap();
        assert_eq!(b.dim(), 495);
        assert_eq!(b.coefficient_dim(), 66);
        assert_eq!(b.independent_coefficient_count(), 66 * 66);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(EgueBuilder::new(4, 5, 1).is_err());
        assert!(EgueBuilder::new(4, 2, 3).is_err());
        assert!(EgueBuilder::new(4, 2, 0).is_err());
    }

    #[test]
    fn k_equals_m_lift_is_the_identity_map() {
        // annihilating the full m-subset and recreating another is a
        // bijection between coefficient entries and matrix entries
        let b = EgueBuilder::new(6, 2, 2).unwrap();
        let h = b.build(1.0, 9, 0);
        let dk = b.coefficient_dim();
        let sigma = 1.0 / (dk as f64).sqrt();
        let mut stream = rng::stream(9, rng::domain::EGUE, 0);
        let coeffs: Vec<f64> = (0..dk * dk)
            .map(|_| sigma * rand::Rng::sample::<f64, _>(&mut stream, rand_distr::StandardNormal))
            .collect();
        let w = matrix_from_coefficients(dk, &coeffs);
        assert_eq!(b.dim(), dk);
        for i in 0..dk {
            for j in 0..dk {
                assert!(
                    (h.get(i, j) - w.get(i, j)).norm() < 1e-14,
                    "lift differs at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn lift_output_is_hermitian() {
        let b = EgueBuilder::new(8, 3, 2).unwrap();
        let h = b.build(1.0, 4, 7);
        assert!(h.check_hermitian().is_ok());
        assert_eq!(h.dim(), 56);
        // deterministic
        let h2 = b.build(1.0, 4, 7);
        assert_eq!(h.entries(), h2.entries());
    }

    #[test]
    fn one_body_lift_counts_particles() {
        // k=1 with W = identity on the 1-particle space gives the number
        // operator: H |S> = m |S>
        let b = EgueBuilder::new(5, 2, 1).unwrap();
        let w = HermitianMatrix::identity(5);
        let h = b.lift(&w);
        for i in 0..b.dim() {
            for j in 0..b.dim() {
                let expect = if i == j { 2.0 } else { 0.0 };
                assert!((h.get(i, j) - Complex64::new(expect, 0.0)).norm() < 1e-12);
            }
        }
    }
}
