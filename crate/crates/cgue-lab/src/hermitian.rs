//! Dense Hermitian matrices, the trace scalar product, and the
//! eigendecomposition contract everything else builds on.
//!
//! Matrices are immutable after construction and safe to share across
//! workers. The working envelope is dense double precision, dimensions
//! up to a couple of thousand.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Hermiticity tolerance applied after arithmetic.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// A dense N x N complex Hermitian matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl HermitianMatrix {
    /// Builds from row-major entries, checking the Hermiticity invariant.
    pub fn from_entries(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("matrix dimension must be positive"));
        }
        if entries.len() != dim * dim {
            return Err(Error::invalid(format!(
                "expected {} entries for dim {}, got {}",
                dim * dim,
                dim,
                entries.len()
            )));
        }
        let m = Self { dim, entries };
        m.check_hermitian()?;
        Ok(m)
    }

    /// Builds from a function over (row, col) given for the upper triangle;
    /// the lower triangle is filled by conjugation and the diagonal
    /// imaginary part is dropped.
    pub fn from_upper(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut entries = vec![Complex64::default(); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = Complex64::new(f(i, i).re, 0.0);
            for j in (i + 1)..dim {
                let v = f(i, j);
                entries[i * dim + j] = v;
                entries[j * dim + i] = v.conj();
            }
        }
        Self { dim, entries }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![Complex64::default(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut m = Self::zeros(dim);
        for (i, &d) in diag.iter().enumerate() {
            m.entries[i * dim + i] = Complex64::new(d, 0.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub(crate) fn check_hermitian(&self) -> Result<()> {
        let n = self.dim;
        for i in 0..n {
            if self.entries[i * n + i].im.abs() > HERMITICITY_TOL {
                return Err(Error::invalid(format!(
                    "diagonal entry {i} has imaginary part {:.3e}",
                    self.entries[i * n + i].im
                )));
            }
            for j in (i + 1)..n {
                let d = self.entries[i * n + j] - self.entries[j * n + i].conj();
                if d.norm() > HERMITICITY_TOL {
                    return Err(Error::invalid(format!(
                        "entries ({i},{j}) and ({j},{i}) are not conjugate: deviation {:.3e}",
                        d.norm()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Trace (real for Hermitian input).
    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.entries[i * self.dim + i].re).sum()
    }

    /// Frobenius norm, equals sqrt(<A|A>).
    pub fn frobenius_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// In-place `self += factor * other`.
    pub fn add_scaled(&mut self, factor: f64, other: &HermitianMatrix) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            *a += factor * b;
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|z| factor * z).collect(),
        }
    }

    /// Subtracts the trace part: H - (tr H / N) 1_N. The result is
    /// traceless and differs from the input by a multiple of the identity.
    pub fn center(&self) -> Self {
        let shift = self.trace() / self.dim as f64;
        let mut out = self.clone();
        for i in 0..self.dim {
            out.entries[i * self.dim + i] -= shift;
        }
        out
    }

    /// FNV-1a over the raw entry bit patterns; used to tag numeric
    /// failures with the offending matrix.
    pub fn content_hash(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        let mut eat = |bits: u64| {
            for b in bits.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(self.dim as u64);
        for z in &self.entries {
            eat(z.re.to_bits());
            eat(z.im.to_bits());
        }
        h
    }
}

/// Trace scalar product Tr(ab); real because both arguments are Hermitian.
pub fn trace_inner_product(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            a.dim, b.dim
        )));
    }
    // Tr(AB) = sum_{ij} A_ij B_ji = sum_{ij} A_ij conj(B_ij) for Hermitian B.
    let mut acc = 0.0;
    for (x, y) in a.entries.iter().zip(&b.entries) {
        acc += x.re * y.re + x.im * y.im;
    }
    Ok(acc)
}

/// Eigendecomposition H = V x V^dagger with ascending real eigenvalues
/// and unitary V (columns are eigenvectors).
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Row-major N x N; column k is the eigenvector for eigenvalues[k].
    pub eigenvectors: Vec<Complex64>,
    dim: usize,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eigenvector(&self, k: usize) -> impl Iterator<Item = Complex64> + '_ {
        (0..self.dim).map(move |row| self.eigenvectors[row * self.dim + k])
    }

    /// Reconstructs V x V^dagger.
    pub fn reconstruct(&self) -> HermitianMatrix {
        let n = self.dim;
        let mut entries = vec![Complex64::default(); n * n];
        for k in 0..n {
            let lam = self.eigenvalues[k];
            for i in 0..n {
                let vi = self.eigenvectors[i * n + k];
                for j in 0..n {
                    let vj = self.eigenvectors[j * n + k];
                    entries[i * n + j] += lam * vi * vj.conj();
                }
            }
        }
        HermitianMatrix { dim: n, entries }
    }
}

/// Diagonalizes a Hermitian matrix; eigenvalues come back ascending
/// (solver order stabilized by sorting).
pub fn eigendecompose(h: &HermitianMatrix) -> Result<EigenDecomposition> {
    let n = h.dim;
    let m = faer::Mat::from_fn(n, n, |i, j| h.get(i, j));
    let evd = m
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| Error::NumericFailure {
            context: "eigendecomposition did not converge".into(),
            matrix_hash: Some(h.content_hash()),
        })?;

    let mut order: Vec<usize> = (0..n).collect();
    let raw: Vec<f64> = (0..n).map(|i| evd.S()[i].re).collect();
    order.sort_by(|&a, &b| raw[a].partial_cmp(&raw[b]).expect("eigenvalue NaN"));

    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenvectors = vec![Complex64::default(); n * n];
    let u = evd.U();
    for (dst, &src) in order.iter().enumerate() {
        eigenvalues.push(raw[src]);
        for row in 0..n {
            eigenvectors[row * n + dst] = u[(row, src)];
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
        dim: n,
    })
}

/// Eigenvalues only, ascending.
pub fn eigenvalues(h: &HermitianMatrix) -> Result<Vec<f64>> {
    let n = h.dim;
    let m = faer::Mat::from_fn(n, n, |i, j| h.get(i, j));
    let s = m
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|_| Error::NumericFailure {
            context: "eigenvalue computation did not converge".into(),
            matrix_hash: Some(h.content_hash()),
        })?;
    let mut vals: Vec<f64> = s.into_iter().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).expect("eigenvalue NaN"));
    Ok(vals)
}
