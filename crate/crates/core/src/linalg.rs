//! Dense and sparse complex linear algebra shared by the rest of the crate.
//!
//! Everything here is sized for the composite systems the simulator deals
//! with (total dimension well below a hundred), so dense `nalgebra` matrices
//! are used throughout. [`SparseMatrix`] exists only to speed up the inner
//! loops of the integrators, where operators are applied many thousands of
//! times per evolution.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);

/// Largest absolute entry of `m - m†`.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(m + m†) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Eigen-decomposition of a Hermitian matrix; eigenvalues ascending,
/// eigenvectors as columns.
pub fn eigh(m: &CMatrix) -> (DVector<f64>, CMatrix) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Applies `f` to the spectrum of a Hermitian matrix.
pub fn hermitian_map(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (values, vectors) = eigh(m);
    let diag = CMatrix::from_diagonal(&DVector::from_iterator(
        values.len(),
        values.iter().map(|&v| C64::new(f(v), 0.0)),
    ));
    &vectors * diag * vectors.adjoint()
}

/// Principal square root of a positive semidefinite matrix; negative
/// eigenvalues (numerical noise) are clamped to zero.
pub fn sqrt_psd(m: &CMatrix) -> CMatrix {
    hermitian_map(m, |v| v.max(0.0).sqrt())
}

/// `exp(-i h t)` for Hermitian `h`.
pub fn unitary_exp(h: &CMatrix, t: f64) -> CMatrix {
    let (values, vectors) = eigh(h);
    let diag = CMatrix::from_diagonal(&DVector::from_iterator(
        values.len(),
        values.iter().map(|&v| C64::from_polar(1.0, -v * t)),
    ));
    &vectors * diag * vectors.adjoint()
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Spectral norm (largest singular value).
pub fn operator_norm(m: &CMatrix) -> f64 {
    let gram = m.adjoint() * m;
    let (values, _) = eigh(&gram);
    values.iter().cloned().fold(0.0, f64::max).sqrt()
}

/// Trace norm `Tr|m|` of a Hermitian matrix.
pub fn trace_norm_hermitian(m: &CMatrix) -> f64 {
    let (values, _) = eigh(m);
    values.iter().map(|v| v.abs()).sum()
}

/// Coordinate-list sparse matrix used inside the integrator hot loops.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    rows: Vec<u32>,
    cols: Vec<u32>,
    values: Vec<C64>,
}

impl SparseMatrix {
    pub fn new(dim: usize) -> Self {
        Self { dim, rows: Vec::new(), cols: Vec::new(), values: Vec::new() }
    }

    /// Keeps entries with modulus above `threshold`.
    pub fn from_dense(m: &CMatrix, threshold: f64) -> Self {
        let mut out = Self::new(m.nrows());
        // column-major traversal keeps entries grouped by column
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                let v = m[(r, c)];
                if v.norm() > threshold {
                    out.push(r, c, v);
                }
            }
        }
        out
    }

    pub fn push(&mut self, row: usize, col: usize, value: C64) {
        self.rows.push(row as u32);
        self.cols.push(col as u32);
        self.values.push(value);
    }

    pub fn clear(&mut self) {
        self.rows.clear();
        self.cols.clear();
        self.values.clear();
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        self.rows
            .iter()
            .zip(&self.cols)
            .zip(&self.values)
            .map(|((&r, &c), &v)| (r as usize, c as usize, v))
    }

    pub fn adjoint(&self) -> Self {
        Self {
            dim: self.dim,
            rows: self.cols.clone(),
            cols: self.rows.clone(),
            values: self.values.iter().map(|v| v.conj()).collect(),
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.entries() {
            m[(r, c)] += v;
        }
        m
    }

    /// Copies the sparsity pattern of `self` into `out`, scaling entry `k`
    /// by `p[row] * conj(p[col]) * scale`.
    pub fn phased_into(&self, p: &[C64], scale: C64, out: &mut SparseMatrix) {
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.values) {
            out.rows.push(r);
            out.cols.push(c);
            out.values.push(v * scale * p[r as usize] * p[c as usize].conj());
        }
    }

    /// Appends the entries of `self` scaled by `scale`.
    pub fn scaled_into(&self, scale: C64, out: &mut SparseMatrix) {
        out.rows.extend_from_slice(&self.rows);
        out.cols.extend_from_slice(&self.cols);
        out.values.extend(self.values.iter().map(|v| v * scale));
    }

    /// `out += self * x` where `x` and `out` are row-major `dim × width`.
    pub fn mul_rows_add(&self, x: &[C64], out: &mut [C64], width: usize) {
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.values) {
            let src = &x[c as usize * width..(c as usize + 1) * width];
            let dst = &mut out[r as usize * width..(r as usize + 1) * width];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += v * s;
            }
        }
    }

    /// `out += self * x` where `x` and `out` are column-major `dim × ncols`.
    pub fn mul_add(&self, x: &[C64], out: &mut [C64]) {
        let n = self.dim;
        let ncols = x.len() / n;
        for j in 0..ncols {
            let xc = &x[j * n..(j + 1) * n];
            let oc = &mut out[j * n..(j + 1) * n];
            for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.values) {
                oc[r as usize] += v * xc[c as usize];
            }
        }
    }
}
