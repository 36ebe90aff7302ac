//! Dense complex and Hermitian linear algebra.
//!
//! Every matrix in this crate is tiny (at most `N_T + 1 ≤ 10` complex rows in the
//! simulated scenarios), so the routines favour accuracy and simplicity over speed.
//! The Hermitian eigensolver runs cyclic Jacobi on the real symmetric embedding
//! `[[Re H, -Im H], [Im H, Re H]]` and folds the doubled spectrum back into complex
//! eigenpairs.

pub mod real;

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
pub use real::Mat;

pub type C64 = Complex64;
pub type CVector = Vec<C64>;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Euclidean norm of a complex vector.
pub fn norm(v: &[C64]) -> f64 {
    norm_sqr(v).sqrt()
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `aᴴ b`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// General dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.4e}{:+.4e}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    /// Builds a matrix from row-major entries, rejecting non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!("empty {rows}x{cols} matrix")));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("complex matrix entry".into()));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix { rows, cols, data: vec![C64::default(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        ComplexMatrix { rows, cols, data }
    }

    /// Stacks equally long vectors as columns.
    pub fn from_columns(columns: &[CVector]) -> Self {
        let rows = columns.first().map_or(0, |c| c.len());
        Self::from_fn(rows, columns.len(), |i, j| columns[j][i])
    }

    /// A single column `n × 1`.
    pub fn column_vector(v: &[C64]) -> Self {
        Self::from_fn(v.len(), 1, |i, _| v[i])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> CVector {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::default() {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[C64]) -> CVector {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        (0..self.rows).map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    /// `selfᴴ v`.
    pub fn adjoint_matvec(&self, v: &[C64]) -> CVector {
        assert_eq!(self.rows, v.len(), "adjoint matvec dimension mismatch");
        let mut out = vec![C64::default(); self.cols];
        for i in 0..self.rows {
            for (j, o) in out.iter_mut().enumerate() {
                *o += self[(i, j)].conj() * v[i];
            }
        }
        out
    }

    pub fn scale(&self, a: C64) -> Self {
        ComplexMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * a).collect() }
    }

    pub fn sub(&self, other: &ComplexMatrix) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add(&self, other: &ComplexMatrix) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Solves `self · X = rhs` by LU with partial pivoting.
    pub fn solve(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.rows != self.cols || rhs.rows != self.rows {
            return Err(Error::Dimension("solve needs a square system".into()));
        }
        let n = self.rows;
        let m = rhs.cols;
        let mut a = self.clone();
        let mut b = rhs.clone();
        let scale = a.max_abs();
        for k in 0..n {
            let piv = (k..n)
                .max_by(|&i, &j| a[(i, k)].norm().total_cmp(&a[(j, k)].norm()))
                .expect("non-empty pivot range");
            if a[(piv, k)].norm() <= 1e-300_f64.max(1e-15 * scale * f64::EPSILON) {
                return Err(Error::Singular(format!("zero pivot in column {k}")));
            }
            if piv != k {
                for j in 0..n {
                    a.data.swap(k * n + j, piv * n + j);
                }
                for j in 0..m {
                    b.data.swap(k * m + j, piv * m + j);
                }
            }
            let d = a[(k, k)];
            for i in (k + 1)..n {
                let f = a[(i, k)] / d;
                if f == C64::default() {
                    continue;
                }
                for j in k..n {
                    let v = a[(k, j)];
                    a[(i, j)] -= f * v;
                }
                for j in 0..m {
                    let v = b[(k, j)];
                    b[(i, j)] -= f * v;
                }
            }
        }
        for i in (0..n).rev() {
            for j in 0..m {
                let mut s = b[(i, j)];
                for k in (i + 1)..n {
                    s -= a[(i, k)] * b[(k, j)];
                }
                b[(i, j)] = s / a[(i, i)];
            }
        }
        Ok(b)
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Hermitian matrix stored as its packed upper triangle.
///
/// Only entries with `i ≤ j` are stored, and diagonal entries are kept real, so
/// `H = Hᴴ` holds by construction.
#[derive(Clone, PartialEq)]
pub struct HermitianMatrix {
    n: usize,
    upper: Vec<C64>,
}

impl fmt::Debug for HermitianMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hermitian{:?}", self.to_dense())
    }
}

#[inline]
fn packed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < n);
    i * n - i * (i + 1) / 2 + j
}

impl HermitianMatrix {
    pub fn zeros(n: usize) -> Self {
        HermitianMatrix { n, upper: vec![C64::default(); n * (n + 1) / 2] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_real_diag(&vec![1.0; n])
    }

    pub fn from_real_diag(d: &[f64]) -> Self {
        let mut h = Self::zeros(d.len());
        for (i, v) in d.iter().enumerate() {
            h.set(i, i, C64::new(*v, 0.0));
        }
        h
    }

    /// Builds from a closure evaluated on the upper triangle (`i ≤ j`).
    pub fn from_upper_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut h = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                h.set(i, j, f(i, j));
            }
        }
        h
    }

    /// Hermitian part `(A + Aᴴ)/2` of a square matrix.
    pub fn from_dense(a: &ComplexMatrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::Dimension("Hermitian matrix must be square".into()));
        }
        if !a.is_finite() {
            return Err(Error::NonFinite("Hermitian matrix entry".into()));
        }
        Ok(Self::from_upper_fn(a.rows(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)].conj())))
    }

    /// Rank-one matrix `v vᴴ`.
    pub fn outer(v: &[C64]) -> Self {
        Self::from_upper_fn(v.len(), |i, j| v[i] * v[j].conj())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        if i <= j {
            self.upper[packed_index(self.n, i, j)]
        } else {
            self.upper[packed_index(self.n, j, i)].conj()
        }
    }

    /// Sets entry `(i, j)` and implicitly its mirror; diagonal imaginary parts are dropped.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        if i == j {
            self.upper[packed_index(self.n, i, i)] = C64::new(v.re, 0.0);
        } else if i < j {
            self.upper[packed_index(self.n, i, j)] = v;
        } else {
            self.upper[packed_index(self.n, j, i)] = v.conj();
        }
    }

    pub fn to_dense(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn add(&self, other: &HermitianMatrix) -> Self {
        assert_eq!(self.n, other.n, "Hermitian add dimension mismatch");
        HermitianMatrix { n: self.n, upper: self.upper.iter().zip(&other.upper).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &HermitianMatrix) -> Self {
        assert_eq!(self.n, other.n, "Hermitian sub dimension mismatch");
        HermitianMatrix { n: self.n, upper: self.upper.iter().zip(&other.upper).map(|(a, b)| a - b).collect() }
    }

    pub fn scale(&self, a: f64) -> Self {
        HermitianMatrix { n: self.n, upper: self.upper.iter().map(|z| z * a).collect() }
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &HermitianMatrix) {
        assert_eq!(self.n, other.n, "Hermitian axpy dimension mismatch");
        for (s, o) in self.upper.iter_mut().zip(&other.upper) {
            *s += o * a;
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i).re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in i..self.n {
                let w = if i == j { 1.0 } else { 2.0 };
                s += w * self.get(i, j).norm_sqr();
            }
        }
        s.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.upper.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `xᴴ H x` (real for Hermitian `H`).
    pub fn quad_form(&self, x: &[C64]) -> f64 {
        inner(x, &self.matvec(x)).re
    }

    pub fn matvec(&self, x: &[C64]) -> CVector {
        assert_eq!(x.len(), self.n, "Hermitian matvec dimension mismatch");
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j) * x[j]).sum()).collect()
    }

    /// `Bᴴ H B` for an `n × m` matrix `B`.
    pub fn congruence(&self, b: &ComplexMatrix) -> HermitianMatrix {
        assert_eq!(b.rows(), self.n, "congruence dimension mismatch");
        let hb = self.to_dense().matmul(b);
        let m = b.cols();
        HermitianMatrix::from_upper_fn(m, |i, j| (0..self.n).map(|k| b[(k, i)].conj() * hb[(k, j)]).sum())
    }

    /// Real trace inner product `Tr(self · other)`.
    pub fn trace_product(&self, other: &HermitianMatrix) -> f64 {
        assert_eq!(self.n, other.n);
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += (self.get(i, j) * other.get(j, i)).re;
            }
        }
        s
    }

    /// Keeps only the main diagonal (`diag(X)` in the SI model).
    pub fn diagonal_part(&self) -> HermitianMatrix {
        Self::from_real_diag(&(0..self.n).map(|i| self.get(i, i).re).collect::<Vec<_>>())
    }

    /// Largest modulus among the stored entries.
    pub fn max_abs(&self) -> f64 {
        self.upper.iter().fold(0.0, |m, z| m.max(z.norm()))
    }
}

/// Real symmetric embedding `[[Re H, -Im H], [Im H, Re H]]`.
///
/// The embedding is PSD iff `H` is, every eigenvalue of `H` appears twice, and the
/// trace doubles.
pub fn real_embed(h: &HermitianMatrix) -> Mat {
    let n = h.dim();
    let mut m = Mat::zeros(2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = h.get(i, j);
            m.set(i, j, z.re);
            m.set(i + n, j + n, z.re);
            m.set(i, j + n, -z.im);
            m.set(i + n, j, z.im);
        }
    }
    m
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEig {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Unitary matrix whose columns are the matching eigenvectors.
    pub vectors: ComplexMatrix,
}

impl HermitianEig {
    pub fn vector(&self, k: usize) -> CVector {
        self.vectors.column(k)
    }

    pub fn max(&self) -> f64 {
        *self.values.last().expect("non-empty spectrum")
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }
}

/// Eigenvalues (ascending) and unitary eigenvectors of `H`.
pub fn hermitian_eig(h: &HermitianMatrix) -> Result<HermitianEig> {
    let n = h.dim();
    if !h.is_finite() {
        return Err(Error::NonFinite("hermitian_eig input".into()));
    }
    let (rvals, rvecs) = real::symmetric_eig(&real_embed(h))?;

    // Each eigenvalue of H shows up twice in the embedding, with real eigenvectors
    // [a; b] and [-b; a] that both map to a + ib up to a complex phase. Walk clusters
    // of (numerically) equal real eigenvalues and greedily keep the candidates that
    // add the most new complex direction.
    let scale = rvals.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let cluster_tol = 1e-9 * scale;
    let mut chosen: Vec<CVector> = Vec::with_capacity(n);
    let mut start = 0;
    while start < rvals.len() {
        let mut end = start + 1;
        while end < rvals.len() && rvals[end] - rvals[end - 1] <= cluster_tol {
            end += 1;
        }
        let want = (end - start + 1) / 2;
        let mut pool: Vec<CVector> = (start..end)
            .map(|c| (0..n).map(|i| C64::new(rvecs.get(i, c), rvecs.get(i + n, c))).collect())
            .collect();
        for _ in 0..want {
            if chosen.len() == n {
                break;
            }
            let mut best: Option<(usize, CVector, f64)> = None;
            for (idx, cand) in pool.iter().enumerate() {
                let mut r = cand.clone();
                // two passes of classical Gram-Schmidt for stability
                for _ in 0..2 {
                    for q in &chosen {
                        let proj = inner(q, &r);
                        for (ri, qi) in r.iter_mut().zip(q) {
                            *ri -= proj * qi;
                        }
                    }
                }
                let rn = norm(&r);
                if best.as_ref().map_or(true, |b| rn > b.2) {
                    best = Some((idx, r, rn));
                }
            }
            let Some((idx, r, rn)) = best else { break };
            if rn < 1e-6 {
                break;
            }
            pool.swap_remove(idx);
            chosen.push(r.into_iter().map(|z| z / rn).collect());
        }
        start = end;
    }
    if chosen.len() != n {
        return Err(Error::Convergence(format!(
            "could not recover {n} complex eigenvectors from the real embedding (got {})",
            chosen.len()
        )));
    }
    let mut pairs: Vec<(f64, CVector)> = chosen.into_iter().map(|v| (h.quad_form(&v), v)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let values = pairs.iter().map(|p| p.0).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |i, j| pairs[j].1[i]);
    Ok(HermitianEig { values, vectors })
}

/// PSD test with a tolerance relative to `max(1, ‖H‖_F)`.
pub fn is_psd(h: &HermitianMatrix, tol: f64) -> bool {
    match hermitian_eig(h) {
        Ok(e) => e.min() >= -tol * h.frobenius_norm().max(1.0),
        Err(_) => false,
    }
}

/// Inverse of a Hermitian positive definite matrix via its eigen-decomposition.
pub fn hermitian_inverse(h: &HermitianMatrix) -> Result<HermitianMatrix> {
    let e = hermitian_eig(h)?;
    if e.min() <= 0.0 {
        return Err(Error::Singular(format!("matrix is not positive definite (λ_min = {:.3e})", e.min())));
    }
    let n = h.dim();
    Ok(HermitianMatrix::from_upper_fn(n, |i, j| {
        (0..n).map(|k| e.vectors[(i, k)] * e.vectors[(j, k)].conj() / e.values[k]).sum()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut impl Rng) -> HermitianMatrix {
        HermitianMatrix::from_upper_fn(n, |i, j| {
            if i == j {
                c64(rng.random_range(-1.0..1.0), 0.0)
            } else {
                c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            }
        })
    }

    fn random_vector(n: usize, rng: &mut impl Rng) -> CVector {
        (0..n).map(|_| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    }

    fn reconstruction_error(h: &HermitianMatrix, e: &HermitianEig) -> f64 {
        let n = h.dim();
        let rec = HermitianMatrix::from_upper_fn(n, |i, j| {
            (0..n).map(|k| e.vectors[(i, k)] * e.vectors[(j, k)].conj() * e.values[k]).sum()
        });
        rec.sub(h).frobenius_norm()
    }

    fn unitarity_error(u: &ComplexMatrix) -> f64 {
        u.adjoint().matmul(u).sub(&ComplexMatrix::identity(u.cols())).frobenius_norm()
    }

    #[test]
    fn eig_identity() {
        let e = hermitian_eig(&HermitianMatrix::identity(2)).unwrap();
        assert_eq!(e.values.len(), 2);
        for v in &e.values {
            assert!((v - 1.0).abs() < 1e-15);
        }
        assert!(unitarity_error(&e.vectors) < 1e-12);
    }

    #[test]
    fn eig_diagonal() {
        let e = hermitian_eig(&HermitianMatrix::from_real_diag(&[3.0, -1.0])).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-15);
        assert!((e.values[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn eig_real_symmetric_two_by_two() {
        // characteristic polynomial (2-λ)² - 1 = 0  ⇒  λ ∈ {1, 3}
        let h = HermitianMatrix::from_upper_fn(2, |i, j| if i == j { c64(2.0, 0.0) } else { c64(1.0, 0.0) });
        let e = hermitian_eig(&h).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14);
        assert!((e.values[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn eig_random_reconstruction_and_unitarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=12 {
            for _ in 0..5 {
                let h = random_hermitian(n, &mut rng);
                let e = hermitian_eig(&h).unwrap();
                assert!(reconstruction_error(&h, &e) <= 1e-10 * h.frobenius_norm());
                assert!(unitarity_error(&e.vectors) <= 1e-10);
            }
        }
    }

    #[test]
    fn eig_handles_repeated_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // U diag(2,2,2,-1,-1) Uᴴ with random unitary U
        let a = random_hermitian(5, &mut rng);
        let basis = hermitian_eig(&a).unwrap().vectors;
        let d = [2.0, 2.0, 2.0, -1.0, -1.0];
        let h = HermitianMatrix::from_upper_fn(5, |i, j| (0..5).map(|k| basis[(i, k)] * basis[(j, k)].conj() * d[k]).sum());
        let e = hermitian_eig(&h).unwrap();
        assert!(reconstruction_error(&h, &e) <= 1e-10 * h.frobenius_norm());
        assert!(unitarity_error(&e.vectors) <= 1e-10);
        assert!((e.values[0] + 1.0).abs() < 1e-12 && (e.values[4] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn psd_examples() {
        assert!(is_psd(&HermitianMatrix::identity(3), 0.0));
        assert!(!is_psd(&HermitianMatrix::from_real_diag(&[1.0, -1e-3]), 1e-9));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_vector(6, &mut rng);
        // Gram matrix: exact PSD up to round-off of the eigensolver
        assert!(is_psd(&HermitianMatrix::outer(&v), 1e-14));
    }

    #[test]
    fn real_embed_examples() {
        assert_eq!(real_embed(&HermitianMatrix::identity(3)), Mat::identity(6));
        // [[0,-i],[i,0]]
        let h = HermitianMatrix::from_upper_fn(2, |i, j| if i == j { c64(0.0, 0.0) } else { c64(0.0, -1.0) });
        let expected = Mat::from_row_major(
            4,
            vec![0., 0., 0., 1., 0., 0., -1., 0., 0., -1., 0., 0., 1., 0., 0., 0.],
        );
        assert_eq!(real_embed(&h), expected);
    }

    #[test]
    fn real_embed_doubles_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..=8 {
            let h = random_hermitian(n, &mut rng);
            let e = hermitian_eig(&h).unwrap();
            let (rv, _) = real::symmetric_eig(&real_embed(&h)).unwrap();
            for k in 0..n {
                assert!((rv[2 * k] - e.values[k]).abs() < 1e-12);
                assert!((rv[2 * k + 1] - e.values[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn solve_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = ComplexMatrix::from_fn(4, 4, |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let x = a.solve(&ComplexMatrix::identity(4)).unwrap();
        assert!(a.matmul(&x).sub(&ComplexMatrix::identity(4)).frobenius_norm() < 1e-12);
        let b = random_hermitian(4, &mut rng);
        let spd = HermitianMatrix::from_dense(&b.to_dense().matmul(&b.to_dense())).unwrap().add(&HermitianMatrix::identity(4));
        let inv = hermitian_inverse(&spd).unwrap();
        assert!(spd.to_dense().matmul(&inv.to_dense()).sub(&ComplexMatrix::identity(4)).frobenius_norm() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_entries() {
        assert!(ComplexMatrix::new(1, 2, vec![c64(f64::NAN, 0.0), c64(1.0, 0.0)]).is_err());
        assert!(ComplexMatrix::new(2, 2, vec![c64(1.0, 0.0)]).is_err());
    }

    fn hermitian_strategy() -> impl Strategy<Value = HermitianMatrix> {
        (1usize..=12, any::<u64>()).prop_map(|(n, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // mix of definite, indefinite and near-singular matrices
            let a = random_hermitian(n, &mut rng);
            let shift: f64 = rng.random_range(-0.5..2.5);
            a.add(&HermitianMatrix::identity(n).scale(shift))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn psd_agrees_with_embedding(h in hermitian_strategy()) {
            let tol = 1e-10;
            let embedded = real_embed(&h);
            let rmin = real::min_eigenvalue(&embedded).unwrap();
            let embedded_psd = rmin >= -tol * embedded.frobenius_norm().max(1.0);
            // the embedding has √2 times the Frobenius norm; compare against a tolerance
            // band wide enough to cover that difference
            let e = hermitian_eig(&h).unwrap();
            if e.min().abs() > 1e-8 * h.frobenius_norm().max(1.0) {
                prop_assert_eq!(is_psd(&h, tol), embedded_psd);
            }
        }

        #[test]
        fn embedding_trace_doubles(h in hermitian_strategy()) {
            let t = real_embed(&h).trace();
            prop_assert!((t - 2.0 * h.trace()).abs() <= 1e-12 * t.abs().max(1.0));
        }

        #[test]
        fn eig_reconstruction_bound(h in hermitian_strategy()) {
            let e = hermitian_eig(&h).unwrap();
            prop_assert!(reconstruction_error(&h, &e) <= 1e-10 * h.frobenius_norm().max(f64::MIN_POSITIVE));
        }
    }
}
