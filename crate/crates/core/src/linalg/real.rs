//! Small dense real kernels used by the eigensolver and the interior-point solver.
//!
//! Matrices are square and stored row-major, except the tall factor of [`Qr`]. Sizes in this crate never exceed
//! a few dozen rows, so everything here is plain O(n³) code without blocking.

use crate::error::{Error, Result};

/// Square real matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    n: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        Mat { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Mat::zeros(d.len());
        for (i, v) in d.iter().enumerate() {
            m.data[i * d.len() + i] = *v;
        }
        m
    }

    pub fn from_row_major(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n, "row-major data has wrong length");
        Mat { n, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn transpose(&self) -> Mat {
        let n = self.n;
        let mut t = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t.data[j * n + i] = self.data[i * n + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        let n = self.n;
        debug_assert_eq!(n, other.n);
        let mut out = Mat::zeros(n);
        for i in 0..n {
            let orow = &mut out.data[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * n..(k + 1) * n];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · other`.
    pub fn tr_matmul(&self, other: &Mat) -> Mat {
        let n = self.n;
        let mut out = Mat::zeros(n);
        for k in 0..n {
            let arow = &self.data[k * n..(k + 1) * n];
            let brow = &other.data[k * n..(k + 1) * n];
            for i in 0..n {
                let a = arow[i];
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * n..(i + 1) * n];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · S · self` for a symmetric `S`; the result is symmetrized.
    pub fn congruence_t(&self, s: &Mat) -> Mat {
        let mut out = self.tr_matmul(&s.matmul(self));
        out.symmetrize();
        out
    }

    /// `self · S · selfᵀ` for a symmetric `S`; the result is symmetrized.
    pub fn congruence(&self, s: &Mat) -> Mat {
        let mut out = self.matmul(&s.matmul(&self.transpose()));
        out.symmetrize();
        out
    }

    pub fn symmetrize(&mut self) {
        let n = self.n;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = v;
                self.data[j * n + i] = v;
            }
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &Mat) {
        for (s, o) in self.data.iter_mut().zip(&other.data) {
            *s += a * o;
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.data[i * self.n + i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Frobenius inner product `tr(selfᵀ other)`.
    pub fn dot(&self, other: &Mat) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Eigen-decomposition of a real symmetric matrix by the cyclic Jacobi method.
///
/// Returns eigenvalues in ascending order and the matching orthonormal eigenvectors
/// stored as the columns of the returned matrix.
pub fn symmetric_eig(a: &Mat) -> Result<(Vec<f64>, Mat)> {
    const MAX_SWEEPS: usize = 100;
    let n = a.dim();
    let mut m = a.clone();
    m.symmetrize();
    let mut v = Mat::identity(n);
    if n <= 1 {
        return Ok((m.data.clone(), v));
    }
    let total = m.frobenius_norm();
    if total == 0.0 {
        return Ok((vec![0.0; n], v));
    }
    if !total.is_finite() {
        return Err(Error::Convergence("non-finite matrix passed to eigensolver".into()));
    }

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j) * m.get(i, j))
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * total {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                // skip negligible entries once they no longer affect the diagonal
                if apq.abs() < 1e-300
                    || (apq.abs() * 1e18 < app.abs() && apq.abs() * 1e18 < aqq.abs())
                {
                    m.set(p, q, 0.0);
                    m.set(q, p, 0.0);
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                m.set(p, q, 0.0);
                m.set(q, p, 0.0);
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    if !converged {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j) * m.get(i, j))
            .sum::<f64>()
            .sqrt();
        if off > 1e-13 * total {
            return Err(Error::Convergence(format!(
                "Jacobi eigensolver stalled after {MAX_SWEEPS} sweeps (off-diagonal {off:.3e})"
            )));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| m.get(a, a).total_cmp(&m.get(b, b)));
    let values: Vec<f64> = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vecs = Mat::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for k in 0..n {
            vecs.set(k, col, v.get(k, src));
        }
    }
    Ok((values, vecs))
}

/// Smallest eigenvalue of a real symmetric matrix.
pub fn min_eigenvalue(a: &Mat) -> Result<f64> {
    if a.dim() == 1 {
        return Ok(a.get(0, 0));
    }
    let (vals, _) = symmetric_eig(a)?;
    Ok(vals[0])
}

/// Lower Cholesky factor `L` with `A = L Lᵀ`; `None` when `A` is not positive definite.
pub fn cholesky(a: &Mat) -> Option<Mat> {
    let n = a.dim();
    let mut l = Mat::zeros(n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l.set(j, j, d);
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` in place given the lower Cholesky factor.
pub fn cholesky_solve(l: &Mat, b: &mut [f64]) {
    let n = l.dim();
    for i in 0..n {
        let mut s = b[i];
        let row = l.row(i);
        for k in 0..i {
            s -= row[k] * b[k];
        }
        b[i] = s / row[i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l.get(k, i) * b[k];
        }
        b[i] = s / l.get(i, i);
    }
}

/// Singular value decomposition `A = U diag(σ) Vᵀ` by one-sided (Hestenes) Jacobi.
///
/// Singular values are not sorted. Columns of `U` belonging to zero singular values
/// are left as zero vectors; callers in this crate only decompose nonsingular matrices.
pub fn svd(a: &Mat) -> Result<(Mat, Vec<f64>, Mat)> {
    const MAX_SWEEPS: usize = 80;
    let n = a.dim();
    // work on columns: store Aᵀ so that columns become contiguous rows
    let mut cols = a.transpose();
    let mut v = Mat::identity(n);
    let mut converged = n <= 1;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                {
                    let cp = cols.row(p);
                    let cq = cols.row(q);
                    for k in 0..n {
                        alpha += cp[k] * cp[k];
                        beta += cq[k] * cq[k];
                        gamma += cp[k] * cq[k];
                    }
                }
                if gamma == 0.0 || gamma.abs() <= n as f64 * f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..n {
                    let xp = cols.get(p, k);
                    let xq = cols.get(q, k);
                    cols.set(p, k, c * xp - s * xq);
                    cols.set(q, k, s * xp + c * xq);
                }
                for k in 0..n {
                    let vp = v.get(k, p);
                    let vq = v.get(k, q);
                    v.set(k, p, c * vp - s * vq);
                    v.set(k, q, s * vp + c * vq);
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Convergence(format!(
            "one-sided Jacobi SVD did not converge in {MAX_SWEEPS} sweeps"
        )));
    }
    let mut sigma = vec![0.0; n];
    let mut u = Mat::zeros(n);
    for j in 0..n {
        let norm = cols.row(j).iter().map(|x| x * x).sum::<f64>().sqrt();
        sigma[j] = norm;
        if norm > 0.0 {
            for k in 0..n {
                u.set(k, j, cols.get(j, k) / norm);
            }
        }
    }
    Ok((u, sigma, v))
}

/// Householder QR of a tall `m × n` matrix given by its columns.
#[derive(Clone, Debug)]
pub struct Qr {
    m: usize,
    /// Column `j` holds the Householder vector in rows `j..` and `R` above the diagonal.
    cols: Vec<Vec<f64>>,
    beta: Vec<f64>,
    rdiag: Vec<f64>,
}

impl Qr {
    pub fn new(mut cols: Vec<Vec<f64>>) -> Self {
        let n = cols.len();
        let m = cols.first().map_or(0, Vec::len);
        assert!(m >= n, "QR needs at least as many rows as columns");
        let mut beta = vec![0.0; n];
        let mut rdiag = vec![0.0; n];
        for j in 0..n {
            let (head, tail) = cols.split_at_mut(j + 1);
            let v = &mut head[j][j..];
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let alpha = if v[0] > 0.0 { -norm } else { norm };
            v[0] -= alpha;
            let vn2 = v.iter().map(|x| x * x).sum::<f64>();
            rdiag[j] = alpha;
            if vn2 == 0.0 {
                continue;
            }
            beta[j] = 2.0 / vn2;
            for c in tail.iter_mut() {
                let t = beta[j] * v.iter().zip(&c[j..]).map(|(a, b)| a * b).sum::<f64>();
                for (ci, vi) in c[j..].iter_mut().zip(v.iter()) {
                    *ci -= t * vi;
                }
            }
        }
        Qr { m, cols, beta, rdiag }
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    /// `|R_jj|` for every column.
    pub fn diagonal(&self) -> Vec<f64> {
        self.rdiag.iter().map(|d| d.abs()).collect()
    }

    /// First `n` entries of `Qᵀ y`.
    pub fn qt_head(&self, y: &[f64]) -> Vec<f64> {
        let mut y = y.to_vec();
        for (j, c) in self.cols.iter().enumerate() {
            if self.beta[j] == 0.0 {
                continue;
            }
            let v = &c[j..];
            let t = self.beta[j] * v.iter().zip(&y[j..]).map(|(a, b)| a * b).sum::<f64>();
            for (yi, vi) in y[j..].iter_mut().zip(v) {
                *yi -= t * vi;
            }
        }
        y.truncate(self.cols.len());
        y
    }

    /// Solves `R x = b` in place.
    pub fn r_solve(&self, b: &mut [f64]) {
        let n = self.cols.len();
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.cols[k][i] * b[k];
            }
            b[i] = s / self.rdiag[i];
        }
    }

    /// Solves `Rᵀ x = b` in place.
    pub fn rt_solve(&self, b: &mut [f64]) {
        let n = self.cols.len();
        for i in 0..n {
            let mut s = b[i];
            let c = &self.cols[i];
            for k in 0..i {
                s -= c[k] * b[k];
            }
            b[i] = s / self.rdiag[i];
        }
    }
}
