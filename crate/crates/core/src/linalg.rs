//! Small dense complex linear algebra used by the detectors.
//!
//! Matrices here are tiny (at most 32×12), so everything is row-major
//! `Vec<Complex64>` with straightforward loops.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn column(&self, c: usize) -> Vec<Complex64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    /// Columns reordered so that column `k` of the result is column `order[k]` of `self`.
    pub fn permute_columns(&self, order: &[usize]) -> Self {
        Self::from_fn(self.rows, order.len(), |r, c| self[(r, order[c])])
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(x.len(), self.cols);
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `selfᴴ · x`
    pub fn herm_mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![ZERO; self.cols];
        for (row, xr) in self.data.chunks_exact(self.cols).zip(x) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a.conj() * xr;
            }
        }
        out
    }

    /// Gram matrix `selfᴴ · self`.
    pub fn gram(&self) -> Self {
        let n = self.cols;
        let mut g = Self::zeros(n, n);
        for row in self.data.chunks_exact(n) {
            for i in 0..n {
                let ai = row[i].conj();
                for j in i..n {
                    g.data[i * n + j] += ai * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                g.data[i * n + j] = g.data[j * n + i].conj();
            }
        }
        g
    }

    /// Sum of squared magnitudes of every entry.
    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Order-sensitive fingerprint of the exact entry bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        let mut eat = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(self.rows as u64);
        eat(self.cols as u64);
        for v in &self.data {
            eat(v.re.to_bits());
            eat(v.im.to_bits());
        }
        h
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Squared Euclidean norm of `y − h·x`.
pub fn residual_sq(h: &CMatrix, y: &[Complex64], x: &[Complex64]) -> f64 {
    h.as_slice()
        .chunks_exact(h.cols())
        .zip(y)
        .map(|(row, yr)| {
            let hx: Complex64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            (yr - hx).norm_sqr()
        })
        .sum()
}

/// Lower-triangular Cholesky factor of a Hermitian positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: CMatrix,
}

impl Cholesky {
    /// Fails with [`Error::SingularChannel`] when a pivot falls below
    /// `rel_tol` times the largest diagonal entry.
    pub fn new(a: &CMatrix, rel_tol: f64) -> Result<Self> {
        let n = a.rows();
        let scale = (0..n).map(|i| a[(i, i)].re).fold(0.0f64, f64::max);
        let mut l = CMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > rel_tol * scale) || scale == 0.0 {
                return Err(Error::SingularChannel);
            }
            let djj = d.sqrt();
            l[(j, j)] = Complex64::new(djj, 0.0);
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { l })
    }

    /// Solves `A·x = b`.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.l.rows();
        let mut z = b.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.l[(i, k)] * z[k];
            }
            z[i] = s / self.l[(i, i)].re;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)].conj() * z[k];
            }
            z[i] = s / self.l[(i, i)].re;
        }
        z
    }

    /// Real diagonal of `A⁻¹`.
    pub fn inverse_diagonal(&self) -> Vec<f64> {
        let n = self.l.rows();
        // diag(A⁻¹)_i = ‖L⁻¹ e_i‖² over the columns of L⁻¹
        let mut linv = CMatrix::zeros(n, n);
        for c in 0..n {
            for i in c..n {
                let mut s = if i == c { Complex64::new(1.0, 0.0) } else { ZERO };
                for k in c..i {
                    s -= self.l[(i, k)] * linv[(k, c)];
                }
                linv[(i, c)] = s / self.l[(i, i)].re;
            }
        }
        (0..n)
            .map(|i| (i..n).map(|r| linv[(r, i)].norm_sqr()).sum())
            .collect()
    }
}

/// Thin QR factorization with greedy column ordering.
///
/// Built with modified Gram–Schmidt from the first column outward; at
/// each step the remaining column with the largest residual norm is
/// taken, so `|r_00|` is the largest and the last diagonal entries are the
/// weakest. `order[k]` is the original column placed at position `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortedQr {
    pub order: Vec<usize>,
    pub q: CMatrix,
    pub r: CMatrix,
}

impl SortedQr {
    pub fn new(a: &CMatrix) -> Self {
        let (m, n) = (a.rows(), a.cols());
        let mut cols: Vec<Vec<Complex64>> = (0..n).map(|c| a.column(c)).collect();
        let mut orig: Vec<usize> = (0..n).collect();
        let mut q = CMatrix::zeros(m, n);
        let mut r = CMatrix::zeros(n, n);
        let norm_sq = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>();
        for k in 0..n {
            // pick the strongest remaining column; ties go to the lower original index
            let mut best = k;
            let mut best_norm = norm_sq(&cols[k]);
            for j in (k + 1)..n {
                let nj = norm_sq(&cols[j]);
                if nj > best_norm {
                    best = j;
                    best_norm = nj;
                }
            }
            cols.swap(k, best);
            orig.swap(k, best);
            for i in 0..k {
                r.data.swap(i * n + k, i * n + best);
            }
            let rkk = best_norm.sqrt();
            r[(k, k)] = Complex64::new(rkk, 0.0);
            if rkk > 0.0 {
                for i in 0..m {
                    q[(i, k)] = cols[k][i] / rkk;
                }
            }
            for j in (k + 1)..n {
                let mut proj = ZERO;
                for i in 0..m {
                    proj += q[(i, k)].conj() * cols[j][i];
                }
                r[(k, j)] = proj;
                for i in 0..m {
                    let qik = q[(i, k)];
                    cols[j][i] -= qik * proj;
                }
            }
        }
        Self { order: orig, q, r }
    }
}
