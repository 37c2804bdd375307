//! Dense coefficient vectors over the standard basis and the small set of
//! kernels (dot, axpy, dgemm) everything else is built on.

use std::ops::Index;

const BLOCK: usize = 4096;

/// Element of a truncated l2 with coefficients on e_1, e_2, ...
///
/// Coefficients past `active_len()` are implicitly zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoeffVector {
    coeffs: Vec<f64>,
}

impl CoeffVector {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(len: usize) -> Self {
        Self { coeffs: vec![0.0; len] }
    }

    /// Unit vector e_k (1-based, as in the basis indexing).
    pub fn basis(k: usize) -> Self {
        assert!(k >= 1, "basis index starts at 1");
        let mut coeffs = vec![0.0; k];
        coeffs[k - 1] = 1.0;
        Self { coeffs }
    }

    pub fn active_len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coeffs
    }

    /// Coefficient of e_k (1-based); zero beyond the active length.
    pub fn coeff(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        self.coeffs.get(k - 1).copied().unwrap_or(0.0)
    }

    /// Grow the active length, padding with zeros. Never shrinks.
    pub fn extend_to(&mut self, len: usize) {
        if len > self.coeffs.len() {
            self.coeffs.resize(len, 0.0);
        }
    }

    pub fn dot(&self, other: &CoeffVector) -> f64 {
        dot(&self.coeffs, &other.coeffs)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coeffs)
    }

    pub fn scaled(&self, a: f64) -> CoeffVector {
        CoeffVector::new(self.coeffs.iter().map(|x| a * x).collect())
    }

    /// a·u + v with active length the max of both.
    pub fn axpy(a: f64, u: &CoeffVector, v: &CoeffVector) -> CoeffVector {
        let n = u.active_len().max(v.active_len());
        let mut out = v.clone();
        out.extend_to(n);
        axpy(a, &u.coeffs, &mut out.coeffs[..u.active_len()]);
        out
    }
}

impl From<Vec<f64>> for CoeffVector {
    fn from(v: Vec<f64>) -> Self {
        Self::new(v)
    }
}

impl Index<usize> for CoeffVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.coeffs[i]
    }
}

/// Σ u_k v_k over the common prefix.
///
/// Eight independent lanes inside blocks of 4096 terms, pairwise reduction
/// across blocks, so long sums do not drift and results are reproducible.
pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    let n = u.len().min(v.len());
    dot_pairwise(&u[..n], &v[..n])
}

fn dot_pairwise(u: &[f64], v: &[f64]) -> f64 {
    if u.len() <= BLOCK {
        return dot_block(u, v);
    }
    let half = (u.len() / 2 / BLOCK).max(1) * BLOCK;
    dot_pairwise(&u[..half], &v[..half]) + dot_pairwise(&u[half..], &v[half..])
}

#[inline]
fn dot_block(u: &[f64], v: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let mut cu = u.chunks_exact(8);
    let mut cv = v.chunks_exact(8);
    for (a, b) in (&mut cu).zip(&mut cv) {
        for l in 0..8 {
            acc[l] += a[l] * b[l];
        }
    }
    let mut tail = 0.0;
    for (a, b) in cu.remainder().iter().zip(cv.remainder()) {
        tail += a * b;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// v += a·u on the common prefix.
pub fn axpy(a: f64, u: &[f64], v: &mut [f64]) {
    for (y, x) in v.iter_mut().zip(u) {
        *y += a * x;
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

/// C = A · Bᵀ where A holds `m` rows and B holds `n` rows, each row read
/// over its first `k` entries (`lda`, `ldb`, `ldc` are row strides).
#[allow(clippy::too_many_arguments)]
pub fn gemm_abt(
    m: usize,
    n: usize,
    k: usize,
    a: &[f64],
    lda: usize,
    b: &[f64],
    ldb: usize,
    c: &mut [f64],
    ldc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            c[i * ldc..i * ldc + n].iter_mut().for_each(|x| *x = 0.0);
        }
        return;
    }
    assert!(a.len() >= (m - 1) * lda + k, "A too short");
    assert!(b.len() >= (n - 1) * ldb + k, "B too short");
    assert!(c.len() >= (m - 1) * ldc + n, "C too short");
    // SAFETY: the asserts above bound every index touched by dgemm for the
    // given strides; A, B are read-only and C is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            lda as isize,
            1,
            b.as_ptr(),
            1,
            ldb as isize,
            0.0,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}
