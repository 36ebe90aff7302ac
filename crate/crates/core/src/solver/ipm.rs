//! Homogeneous self-dual interior-point method with Nesterov–Todd scaling.
//!
//! Embedding: find `x, s ⪰ 0, z ⪰ 0, τ ≥ 0, κ ≥ 0` with
//! `A*(z) = cτ`, `s = Ax + F0 τ`, `κ = −cᵀx − ⟨F0, z⟩`.

use crate::linalg::real::{cholesky, cholesky_solve, min_eigenvalue, svd, Qr};
use crate::linalg::Mat;

use super::lower::Lowered;
use super::{IterateRecord, Settings};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Outcome {
    Converged,
    PrimalInfeasible,
    DualInfeasible,
    Stalled,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub(crate) struct Iterate {
    pub x: Vec<f64>,
    pub z: Vec<Mat>,
    pub tau: f64,
}

pub(crate) struct IpmResult {
    pub outcome: Outcome,
    /// Best iterate seen (final one on convergence).
    pub best: Iterate,
    pub iterations: usize,
    pub history: Vec<IterateRecord>,
}

struct Scaling {
    r: Mat,
    rti: Mat,
    lambda: Vec<f64>,
}

impl Scaling {
    fn identity(n: usize) -> Self {
        Scaling { r: Mat::identity(n), rti: Mat::identity(n), lambda: vec![1.0; n] }
    }

    /// Nesterov–Todd scaling of the pair `(s, z)`: `rᵀ z r = r⁻¹ s r⁻ᵀ = diag(λ)`.
    fn nt(s: &Mat, z: &Mat) -> Option<Self> {
        let l1 = cholesky(s)?;
        let l2 = cholesky(z)?;
        let (u, sv, v) = svd(&l2.tr_matmul(&l1)).ok()?;
        if sv.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return None;
        }
        let dm = Mat::from_diag(&sv.iter().map(|x| 1.0 / x.sqrt()).collect::<Vec<_>>());
        Some(Scaling { r: l1.matmul(&v).matmul(&dm), rti: l2.matmul(&u).matmul(&dm), lambda: sv })
    }

    /// `rtiᵀ M rti`: maps primal-slack quantities into the scaled space.
    fn fwd(&self, m: &Mat) -> Mat {
        self.rti.congruence_t(m)
    }

    /// `rti M rtiᵀ`: maps scaled dual quantities back.
    fn back(&self, m: &Mat) -> Mat {
        self.rti.congruence(m)
    }
}

/// `X` with `λ ∘ X = D`, i.e. `X_ij = 2 D_ij / (λ_i + λ_j)`.
fn lambda_solve(lambda: &[f64], d: &Mat) -> Mat {
    let n = lambda.len();
    let mut x = Mat::zeros(n);
    for i in 0..n {
        for j in 0..n {
            x.set(i, j, 2.0 * d.get(i, j) / (lambda[i] + lambda[j]));
        }
    }
    x
}

/// `(AB + BA)/2`
fn sym_product(a: &Mat, b: &Mat) -> Mat {
    let mut m = a.matmul(b);
    m.axpy(1.0, &b.matmul(a));
    m.scale(0.5);
    m
}

/// Largest `α` with `diag(λ) + αΔ ⪰ 0`, or `∞`.
fn max_step(lambda: &[f64], delta: &Mat) -> f64 {
    let n = lambda.len();
    let mut y = Mat::zeros(n);
    for i in 0..n {
        for j in 0..n {
            y.set(i, j, delta.get(i, j) / (lambda[i] * lambda[j]).sqrt());
        }
    }
    match min_eigenvalue(&y) {
        Ok(e) if e < 0.0 => -1.0 / e,
        Ok(_) => f64::INFINITY,
        Err(_) => 0.0,
    }
}

/// Appends `[M_ii, √2·M_ij (i < j)]`, which preserves the trace inner product.
fn svec_into(m: &Mat, out: &mut Vec<f64>) {
    let n = m.dim();
    for i in 0..n {
        out.push(m.get(i, i));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(std::f64::consts::SQRT_2 * m.get(i, j));
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Rhs {
    e1: Vec<f64>,
    e2: Vec<Mat>,
    e3: f64,
    ds: Vec<Mat>,
    dk: f64,
}

struct Direction {
    dx: Vec<f64>,
    dtau: f64,
    ds: Vec<Mat>,
    dz: Vec<Mat>,
    dkappa: f64,
}

/// Per-iteration factorization data.
enum Factor {
    Normal { l: Mat, m: Mat },
    Qr(Qr),
}

struct Kkt {
    qr: Factor,
    u2: Vec<f64>,
    dz2: Vec<Mat>,
    h: Vec<Mat>,
    xt: Vec<f64>,
    denom: f64,
}

/// Merit below which Newton systems are solved through QR instead of normal equations.
const ACCURATE_BELOW: f64 = 1e-5;

pub(crate) struct Ipm<'a> {
    lp: &'a Lowered,
    settings: &'a Settings,
    f0_norm: f64,
    c_norm: f64,
    degree: f64,
}

impl<'a> Ipm<'a> {
    pub fn new(lp: &'a Lowered, settings: &'a Settings) -> Self {
        let f0_norm = lp.blocks.iter().map(|b| b.f0.frobenius_norm().powi(2)).sum::<f64>().sqrt();
        let c_norm = norm(&lp.c);
        let degree = lp.blocks.iter().map(|b| b.size as f64).sum::<f64>();
        Ipm { lp, settings, f0_norm, c_norm, degree }
    }

    fn apply_a(&self, x: &[f64]) -> Vec<Mat> {
        self.lp.blocks.iter().map(|b| b.apply(x)).collect()
    }

    fn adjoint(&self, z: &[Mat]) -> Vec<f64> {
        let mut out = vec![0.0; self.lp.n];
        for (b, zi) in self.lp.blocks.iter().zip(z) {
            b.adjoint_into(zi, &mut out);
        }
        out
    }

    /// `M_uv = Σ_i Tr(F_iu R_i F_iv R_i)` with `R_i = rti rtiᵀ`.
    fn normal_matrix(&self, w: &[Scaling]) -> Mat {
        let n = self.lp.n;
        let mut m = vec![0.0; n * n];
        for (b, sc) in self.lp.blocks.iter().zip(w) {
            let size = b.size;
            let rm = sc.rti.matmul(&sc.rti.transpose());
            let g: Vec<Vec<f64>> = b.cols.iter().map(|c| c.times_dense(&rm)).collect();
            let nc = b.cols.len();
            let mut gram = vec![0.0; nc * nc];
            for a in 0..nc {
                let ca = &b.cols[a];
                for bb in a..nc {
                    let cb = &b.cols[bb];
                    let mut acc = 0.0;
                    for (ra, &i) in ca.rows.iter().enumerate() {
                        let ga = &g[a][ra * size..(ra + 1) * size];
                        for (rb, &j) in cb.rows.iter().enumerate() {
                            acc += ga[j] * g[bb][rb * size + i];
                        }
                    }
                    gram[a * nc + bb] = acc;
                    gram[bb * nc + a] = acc;
                }
            }
            for (p, la) in b.links.iter().enumerate() {
                for lb in &b.links[p..] {
                    let v = la.weight * lb.weight * gram[la.col * nc + lb.col];
                    m[la.coord * n + lb.coord] += v;
                    if la.coord != lb.coord {
                        m[lb.coord * n + la.coord] += v;
                    } else if !std::ptr::eq(la, lb) {
                        m[la.coord * n + la.coord] += v;
                    }
                }
            }
        }
        Mat::from_row_major(n, m)
    }

    /// Columns of `Â` in symmetric vectorization, one per coordinate.
    fn scaled_columns(&self, w: &[Scaling]) -> Vec<Vec<f64>> {
        let rows: usize = self.lp.blocks.iter().map(|b| b.size * (b.size + 1) / 2).sum();
        let mut out = vec![vec![0.0; rows]; self.lp.n];
        let mut off = 0;
        for (b, sc) in self.lp.blocks.iter().zip(w) {
            let size = b.size;
            let len = size * (size + 1) / 2;
            let hats: Vec<Vec<f64>> = b
                .cols
                .iter()
                .map(|c| {
                    let g = c.times_dense(&sc.rti);
                    let mut h = Mat::zeros(size);
                    for (r, &i) in c.rows.iter().enumerate() {
                        let gr = &g[r * size..(r + 1) * size];
                        let ri = sc.rti.row(i);
                        for (a, ra) in ri.iter().enumerate() {
                            if *ra != 0.0 {
                                for (bb, gv) in gr.iter().enumerate() {
                                    h.add_to(a, bb, ra * gv);
                                }
                            }
                        }
                    }
                    let mut v = Vec::with_capacity(len);
                    svec_into(&h, &mut v);
                    v
                })
                .collect();
            for l in &b.links {
                for (d, v) in out[l.coord][off..off + len].iter_mut().zip(&hats[l.col]) {
                    *d += l.weight * v;
                }
            }
            off += len;
        }
        out
    }

    /// Normal equations by Cholesky, or a QR factor of `Â` when `accurate` is set.
    fn factor(&self, w: &[Scaling], accurate: bool) -> Option<Factor> {
        if !accurate {
            let m = self.normal_matrix(w);
            if let Some(l) = cholesky(&m) {
                return Some(Factor::Normal { l, m });
            }
            let n = m.dim();
            let dmax = (0..n).map(|i| m.get(i, i).abs()).fold(0.0, f64::max).max(1e-300);
            let mut reg = 1e-14;
            while reg <= 1e-6 {
                let mut mr = m.clone();
                for i in 0..n {
                    mr.add_to(i, i, reg * dmax);
                }
                if let Some(l) = cholesky(&mr) {
                    return Some(Factor::Normal { l, m });
                }
                reg *= 100.0;
            }
            return None;
        }
        let cols = self.scaled_columns(w);
        let qr = Qr::new(cols.clone());
        let diag = qr.diagonal();
        let dmax = diag.iter().cloned().fold(0.0, f64::max);
        if !(dmax > 0.0) || !dmax.is_finite() {
            return None;
        }
        if diag.iter().all(|d| *d > 1e-12 * dmax) {
            return Some(Factor::Qr(qr));
        }
        // rank deficient: Tikhonov rows
        let n = cols.len();
        let reg = 1e-7 * dmax;
        let cols = cols
            .into_iter()
            .enumerate()
            .map(|(j, mut c)| {
                c.extend(std::iter::repeat_n(0.0, n));
                let m = c.len() - n;
                c[m + j] = reg;
                c
            })
            .collect();
        Some(Factor::Qr(Qr::new(cols)))
    }

    /// `M⁻¹(Â*q − e)` with `M = Â*Â`.
    fn msolve(&self, w: &[Scaling], f: &Factor, q: &[Mat], e: &[f64]) -> Vec<f64> {
        match f {
            Factor::Normal { l, m } => {
                let mut b = if q.is_empty() { vec![0.0; e.len()] } else { self.a_hat_adj(w, q) };
                for (bi, ei) in b.iter_mut().zip(e) {
                    *bi -= ei;
                }
                let mut x = b.clone();
                cholesky_solve(l, &mut x);
                for _ in 0..2 {
                    let mut r = b.clone();
                    for (i, ri) in r.iter_mut().enumerate() {
                        *ri -= dot(m.row(i), &x);
                    }
                    cholesky_solve(l, &mut r);
                    for (xi, ri) in x.iter_mut().zip(&r) {
                        *xi += ri;
                    }
                }
                x
            }
            Factor::Qr(qr) => {
                let mut y = Vec::with_capacity(qr.rows());
                for m in q {
                    svec_into(m, &mut y);
                }
                y.resize(qr.rows(), 0.0);
                let mut u = qr.qt_head(&y);
                qr.r_solve(&mut u);
                let mut v = e.to_vec();
                qr.rt_solve(&mut v);
                qr.r_solve(&mut v);
                for (a, b) in u.iter_mut().zip(&v) {
                    *a -= b;
                }
                u
            }
        }
    }

    /// `Â u = rtiᵀ (Σ u_c F_c) rti` per block.
    fn a_hat(&self, w: &[Scaling], u: &[f64]) -> Vec<Mat> {
        self.lp.blocks.iter().zip(w).map(|(b, sc)| sc.fwd(&b.apply(u))).collect()
    }

    /// `Â*(Q) = A*(rti Q rtiᵀ)`.
    fn a_hat_adj(&self, w: &[Scaling], q: &[Mat]) -> Vec<f64> {
        let back: Vec<Mat> = w.iter().zip(q).map(|(sc, qi)| sc.back(qi)).collect();
        self.adjoint(&back)
    }

    /// Factors `Â` and solves for the `Δτ` column. The scaled constant term is
    /// never formed: `F̂0 = h − Âx/τ` with `h = (λ − r̂_z)/τ`.
    fn prepare(&self, w: &[Scaling], x: &[f64], rz_hat: &[Mat], tau: f64, kappa: f64, accurate: bool) -> Option<Kkt> {
        let qr = self.factor(w, accurate)?;
        let h: Vec<Mat> = w
            .iter()
            .zip(rz_hat)
            .map(|(sc, r)| {
                let mut m = Mat::from_diag(&sc.lambda);
                m.axpy(-1.0, r);
                m.scale(1.0 / tau);
                m
            })
            .collect();
        let neg: Vec<Mat> = h
            .iter()
            .map(|f| {
                let mut m = f.clone();
                m.scale(-1.0);
                m
            })
            .collect();
        let mut u = self.msolve(w, &qr, &neg, &self.lp.c);
        let mut dz2 = Vec::new();
        for pass in 0..=self.settings.refinement_steps {
            dz2 = self
                .a_hat(w, &u)
                .iter()
                .zip(&neg)
                .map(|(a, f)| {
                    let mut d = f.clone();
                    d.axpy(-1.0, a);
                    d
                })
                .collect();
            if pass == self.settings.refinement_steps {
                break;
            }
            let r: Vec<f64> = self.a_hat_adj(w, &dz2).iter().zip(&self.lp.c).map(|(a, c)| c - a).collect();
            for (ui, d) in u.iter_mut().zip(self.msolve(w, &qr, &[], &r)) {
                *ui += d;
            }
        }
        let xt: Vec<f64> = x.iter().map(|v| v / tau).collect();
        let u2 = u.iter().zip(&xt).map(|(a, b)| a + b).collect();
        let denom = -dz2.iter().map(|d| d.dot(d)).sum::<f64>() - kappa / tau;
        if !(denom < 0.0) || !denom.is_finite() {
            return None;
        }
        Some(Kkt { qr, u2, dz2, h, xt, denom })
    }

    /// Solves the linearized embedding
    /// `Â*(Δz̃) − cΔτ = e1`, `Δs̃ − ÂΔx − F̂0Δτ = e2`, `Δκ + cᵀΔx + ⟨F̂0, Δz̃⟩ = e3`,
    /// `λ ∘ (Δs̃ + Δz̃) = d_s`, `κΔτ + τΔκ = d_κ`.
    fn solve_linear(&self, w: &[Scaling], kkt: &Kkt, rhs: &Rhs, tau: f64, kappa: f64) -> Direction {
        let ls: Vec<Mat> = w.iter().zip(&rhs.ds).map(|(sc, d)| lambda_solve(&sc.lambda, d)).collect();
        let q: Vec<Mat> = rhs
            .e2
            .iter()
            .zip(&ls)
            .map(|(e, l)| {
                let mut m = l.clone();
                m.axpy(-1.0, e);
                m
            })
            .collect();
        let u1 = self.msolve(w, &kkt.qr, &q, &rhs.e1);
        let au1 = self.a_hat(w, &u1);
        let dz1: Vec<Mat> = q
            .iter()
            .zip(&au1)
            .map(|(qi, a)| {
                let mut m = qi.clone();
                m.axpy(-1.0, a);
                m
            })
            .collect();
        let num = rhs.e3 - rhs.dk / tau
            - dot(&self.lp.c, &u1)
            - (kkt.h.iter().zip(&dz1).map(|(f, d)| f.dot(d)).sum::<f64>() - dot(&kkt.xt, &rhs.e1));
        let dtau = num / kkt.denom;
        let dx: Vec<f64> = u1.iter().zip(&kkt.u2).map(|(a, b)| a + dtau * b).collect();
        let dz: Vec<Mat> = dz1
            .iter()
            .zip(&kkt.dz2)
            .map(|(a, b)| {
                let mut m = a.clone();
                m.axpy(dtau, b);
                m
            })
            .collect();
        let ds: Vec<Mat> = ls
            .iter()
            .zip(&dz)
            .map(|(l, d)| {
                let mut m = l.clone();
                m.axpy(-1.0, d);
                m
            })
            .collect();
        let dkappa = (rhs.dk - kappa * dtau) / tau;
        Direction { dx, dtau, ds, dz, dkappa }
    }

    /// `rhs − L(d)` for the linear system of [`Self::solve_linear`].
    fn linear_residual(&self, w: &[Scaling], kkt: &Kkt, rhs: &Rhs, d: &Direction, tau: f64, kappa: f64) -> Rhs {
        let atz = self.a_hat_adj(w, &d.dz);
        let e1 = rhs.e1.iter().zip(&atz).zip(&self.lp.c).map(|((e, a), c)| e - (a - c * d.dtau)).collect();
        let shifted: Vec<f64> = d.dx.iter().zip(&kkt.xt).map(|(a, b)| a - d.dtau * b).collect();
        let adx = self.a_hat(w, &shifted);
        let e2 = (0..w.len())
            .map(|i| {
                let mut m = rhs.e2[i].clone();
                m.axpy(-1.0, &d.ds[i]);
                m.axpy(1.0, &adx[i]);
                m.axpy(d.dtau, &kkt.h[i]);
                m
            })
            .collect();
        let e3 = rhs.e3
            - (d.dkappa + dot(&self.lp.c, &d.dx) + kkt.h.iter().zip(&d.dz).map(|(f, z)| f.dot(z)).sum::<f64>()
                - dot(&kkt.xt, &atz));
        let ds = (0..w.len())
            .map(|i| {
                let mut sum = d.ds[i].clone();
                sum.axpy(1.0, &d.dz[i]);
                let lam = Mat::from_diag(&w[i].lambda);
                let mut m = rhs.ds[i].clone();
                m.axpy(-1.0, &sym_product(&lam, &sum));
                m
            })
            .collect();
        let dk = rhs.dk - (kappa * d.dtau + tau * d.dkappa);
        Rhs { e1, e2, e3, ds, dk }
    }

    fn direction(&self, w: &[Scaling], kkt: &Kkt, rhs: &Rhs, tau: f64, kappa: f64) -> Direction {
        let mut d = self.solve_linear(w, kkt, rhs, tau, kappa);
        for _ in 0..self.settings.refinement_steps {
            let r = self.linear_residual(w, kkt, rhs, &d, tau, kappa);
            let c = self.solve_linear(w, kkt, &r, tau, kappa);
            for (a, b) in d.dx.iter_mut().zip(&c.dx) {
                *a += b;
            }
            for i in 0..w.len() {
                d.ds[i].axpy(1.0, &c.ds[i]);
                d.dz[i].axpy(1.0, &c.dz[i]);
            }
            d.dtau += c.dtau;
            d.dkappa += c.dkappa;
        }
        d
    }

    fn step_length(&self, w: &[Scaling], d: &Direction, tau: f64, kappa: f64) -> f64 {
        let mut a = f64::INFINITY;
        for (sc, (ds, dz)) in w.iter().zip(d.ds.iter().zip(&d.dz)) {
            a = a.min(max_step(&sc.lambda, ds)).min(max_step(&sc.lambda, dz));
        }
        if d.dtau < 0.0 {
            a = a.min(-tau / d.dtau);
        }
        if d.dkappa < 0.0 {
            a = a.min(-kappa / d.dkappa);
        }
        a
    }

    pub fn run(&self) -> IpmResult {
        let lp = self.lp;
        let st = self.settings;
        let nb = lp.blocks.len();
        let mut x = vec![0.0; lp.n];
        let (mut tau, mut kappa) = (1.0, 1.0);
        let mut s: Vec<Mat> = lp.blocks.iter().map(|b| Mat::identity(b.size)).collect();
        let mut z = s.clone();
        let mut history = Vec::new();
        let mut best: Option<(f64, Iterate)> = None;
        let mut outcome = Outcome::IterationLimit;
        let mut iterations = 0;

        for iter in 0..=st.max_iterations {
            iterations = iter;
            let w: Vec<Scaling> = if iter == 0 {
                lp.blocks.iter().map(|b| Scaling::identity(b.size)).collect()
            } else {
                match s.iter().zip(&z).map(|(a, b)| Scaling::nt(a, b)).collect::<Option<Vec<_>>>() {
                    Some(w) => w,
                    None => {
                        outcome = Outcome::Stalled;
                        break;
                    }
                }
            };
            let ax = self.apply_a(&x);
            let rz: Vec<Mat> = (0..nb)
                .map(|i| {
                    let mut m = s[i].clone();
                    m.axpy(-1.0, &ax[i]);
                    m.axpy(-tau, &lp.blocks[i].f0);
                    m
                })
                .collect();
            let atz = self.adjoint(&z);
            let rx: Vec<f64> = atz.iter().zip(&lp.c).map(|(a, c)| a - tau * c).collect();
            let cx = dot(&lp.c, &x);
            let f0z: f64 = lp.blocks.iter().zip(&z).map(|(b, zi)| b.f0.dot(zi)).sum();
            let rtau = kappa + cx + f0z;
            let gap: f64 = w.iter().map(|sc| sc.lambda.iter().map(|l| l * l).sum::<f64>()).sum();
            let mu = (gap + tau * kappa) / (self.degree + 1.0);
            let pcost = cx / tau;
            let dcost = -f0z / tau;
            let rz_norm = rz.iter().map(|m| m.frobenius_norm().powi(2)).sum::<f64>().sqrt();
            let pres = rz_norm / tau / self.f0_norm.max(1.0);
            let dres = norm(&rx) / tau / self.c_norm.max(1.0);
            let abs_gap = gap / (tau * tau);
            let rel_gap = abs_gap / pcost.abs().max(dcost.abs()).max(1.0);
            let zr: f64 = rz.iter().zip(&z).map(|(a, b)| a.dot(b)).sum();
            history.push(IterateRecord {
                primal: pcost,
                dual: dcost,
                gap: abs_gap,
                residual_term: (zr + dot(&x, &rx)) / (tau * tau),
            });
            let merit = pres.max(dres).max(rel_gap);
            if merit.is_finite() && best.as_ref().is_none_or(|(m, _)| merit < *m) {
                best = Some((merit, Iterate { x: x.clone(), z: z.clone(), tau }));
            }
            if pres <= st.feas_tol && dres <= st.feas_tol && (rel_gap <= st.gap_tol || abs_gap <= st.abs_gap_tol) {
                best = Some((merit, Iterate { x, z, tau }));
                outcome = Outcome::Converged;
                break;
            }
            if f0z < 0.0 && norm(&atz) / self.c_norm.max(1.0) <= st.feas_tol * -f0z {
                let z_norm = z.iter().map(|m| m.frobenius_norm()).sum::<f64>();
                if -f0z > st.feas_tol * z_norm * self.f0_norm.max(1.0) {
                    best = Some((0.0, Iterate { x, z, tau }));
                    outcome = Outcome::PrimalInfeasible;
                    break;
                }
            }
            if cx < 0.0 {
                let r: f64 = s
                    .iter()
                    .zip(&ax)
                    .map(|(si, ai)| {
                        let mut m = ai.clone();
                        m.axpy(-1.0, si);
                        m.frobenius_norm().powi(2)
                    })
                    .sum::<f64>()
                    .sqrt();
                if r / self.f0_norm.max(1.0) <= st.feas_tol * -cx {
                    best = Some((0.0, Iterate { x, z, tau }));
                    outcome = Outcome::DualInfeasible;
                    break;
                }
            }
            if iter == st.max_iterations {
                break;
            }

            let rz_hat: Vec<Mat> = w.iter().zip(&rz).map(|(sc, r)| sc.fwd(r)).collect();
            let Some(kkt) = self.prepare(&w, &x, &rz_hat, tau, kappa, merit <= ACCURATE_BELOW) else {
                outcome = Outcome::Stalled;
                break;
            };
            let lam2: Vec<Mat> = w
                .iter()
                .map(|sc| Mat::from_diag(&sc.lambda.iter().map(|l| -l * l).collect::<Vec<_>>()))
                .collect();
            let newton = |eta: f64, ds: Vec<Mat>, dk: f64| Rhs {
                e1: rx.iter().map(|r| -eta * r).collect(),
                e2: rz_hat
                    .iter()
                    .map(|r| {
                        let mut m = r.clone();
                        m.scale(-eta);
                        m
                    })
                    .collect(),
                e3: -eta * rtau,
                ds,
                dk,
            };
            let aff = self.direction(&w, &kkt, &newton(1.0, lam2.clone(), -tau * kappa), tau, kappa);
            let alpha_aff = self.step_length(&w, &aff, tau, kappa).min(1.0);
            let sigma = (1.0 - alpha_aff).powi(3);
            let ds_rhs: Vec<Mat> = (0..nb)
                .map(|i| {
                    let mut m = lam2[i].clone();
                    m.axpy(-1.0, &sym_product(&aff.ds[i], &aff.dz[i]));
                    for k in 0..m.dim() {
                        m.add_to(k, k, sigma * mu);
                    }
                    m
                })
                .collect();
            let dk = -tau * kappa - aff.dtau * aff.dkappa + sigma * mu;
            let dir = self.direction(&w, &kkt, &newton(1.0 - sigma, ds_rhs, dk), tau, kappa);
            let alpha = (st.step_fraction * self.step_length(&w, &dir, tau, kappa)).min(1.0);
            if !(alpha > 1e-12) {
                outcome = Outcome::Stalled;
                break;
            }

            for (i, sc) in w.iter().enumerate() {
                s[i].axpy(alpha, &sc.r.congruence(&dir.ds[i]));
                z[i].axpy(alpha, &sc.rti.congruence(&dir.dz[i]));
            }
            for (xi, d) in x.iter_mut().zip(&dir.dx) {
                *xi += alpha * d;
            }
            tau += alpha * dir.dtau;
            kappa += alpha * dir.dkappa;
            if !(tau > 0.0 && kappa > 0.0) || x.iter().any(|v| !v.is_finite()) {
                outcome = Outcome::Stalled;
                break;
            }
        }
        let best = best.map(|b| b.1).unwrap_or_else(|| Iterate {
            x: vec![0.0; lp.n],
            z: lp.blocks.iter().map(|b| Mat::identity(b.size)).collect(),
            tau: 1.0,
        });
        IpmResult { outcome, best, iterations, history }
    }
}
