//! Independent ground truth: exact worst-case leakage over the error balls,
//! sampled lower bounds, LMI line searches and solution audits.

use std::collections::BTreeMap;

use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::channel::{unit_ball_sample, unit_sphere_sample, ChannelRealization, EstimatedCsi, SystemConfig};
use crate::error::Result;
use crate::linalg::{c64, hermitian_eig, hermitian_inverse, norm, CVector, HermitianMatrix, C64};
use crate::problem::{c5a_lmi, c5b_lmi, Assignment, MatrixSum, ScalarAffine};
use crate::receivers::{evaluate_dl_sinr, evaluate_ul_sinr, ReceiverBank};
use crate::recovery::BeamformingSolution;

/// Bisection stops once `|‖Δ(μ)‖ − ε| ≤ BISECTION_TOL · ε`.
pub const BISECTION_TOL: f64 = 1e-10;
/// `x̂` counts as orthogonal to the top eigenspace below this relative component.
pub const HARD_CASE_TOL: f64 = 1e-12;
/// Relative slack accepted by [`audit`].
pub const AUDIT_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct WorstCase {
    pub value: f64,
    pub maximizer: CVector,
    pub hard_case: bool,
}

fn quad(a: &HermitianMatrix, x: &[C64], d: &[C64]) -> f64 {
    let y: CVector = x.iter().zip(d).map(|(a, b)| a + b).collect();
    a.quad_form(&y)
}

/// `max_{‖Δ‖ ≤ ε} (x̂ + Δ)ᴴ A (x̂ + Δ)` for `A ⪰ 0`.
pub fn worst_case_quadratic(a: &HermitianMatrix, x_hat: &[C64], eps: f64) -> Result<WorstCase> {
    let n = x_hat.len();
    if eps <= 0.0 {
        return Ok(WorstCase { value: a.quad_form(x_hat), maximizer: vec![C64::default(); n], hard_case: false });
    }
    let eig = hermitian_eig(a)?;
    let lam: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();
    let top = lam[n - 1];
    let c = eig.vectors.adjoint_matvec(x_hat);
    let band = top * 1e-12;
    let in_top: Vec<bool> = lam.iter().map(|l| *l >= top - band).collect();
    let top_norm = c.iter().zip(&in_top).filter(|(_, t)| **t).map(|(z, _)| z.norm_sqr()).sum::<f64>().sqrt();
    let x_norm = norm(x_hat);

    let from_eigen = |d: &[C64]| eig.vectors.matvec(d);
    // Δ(μ) in the eigenbasis, with `s = μ − λ_max`.
    let delta = |s: f64, skip_top: bool| -> CVector {
        (0..n)
            .map(|i| {
                if skip_top && in_top[i] {
                    C64::default()
                } else {
                    c[i] * (lam[i] / ((top - lam[i]) + s))
                }
            })
            .collect()
    };
    let dnorm = |d: &[C64]| d.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();

    let hard = top_norm < HARD_CASE_TOL * x_norm.max(f64::MIN_POSITIVE) || top <= 0.0;
    if hard {
        let base = if top > 0.0 { delta(0.0, true) } else { vec![C64::default(); n] };
        let bn = dnorm(&base);
        if bn <= eps {
            let mut d = base;
            let t = (eps * eps - bn * bn).max(0.0).sqrt();
            d[n - 1] += c64(t, 0.0);
            let m = from_eigen(&d);
            return Ok(WorstCase { value: quad(a, x_hat, &m), maximizer: m, hard_case: true });
        }
    }

    let ax = lam.iter().zip(&c).map(|(l, z)| (l * z).norm_sqr()).sum::<f64>().sqrt();
    let (mut lo, mut hi) = (0.0, ax / eps);
    let mut s = hi;
    for _ in 0..400 {
        s = 0.5 * (lo + hi);
        let r = dnorm(&delta(s, hard)) - eps;
        if r.abs() <= BISECTION_TOL * eps || hi - lo <= f64::EPSILON * (top + hi) {
            break;
        }
        if r > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
    }
    let mut d = delta(s, hard);
    let dn = dnorm(&d);
    if dn > 0.0 {
        for z in d.iter_mut() {
            *z *= eps / dn;
        }
    }
    let m = from_eigen(&d);
    Ok(WorstCase { value: quad(a, x_hat, &m), maximizer: m, hard_case: hard })
}

/// `max_{l ∈ ball(l̂, ε)} lᴴ (Σ_k W_k) l`
pub fn worst_case_dl_leakage(w_sum: &HermitianMatrix, l_hat: &[C64], eps: f64) -> Result<f64> {
    Ok(worst_case_quadratic(w_sum, l_hat, eps)?.value)
}

/// `max_{e ∈ ball(ê, ε)} Σ_j P_j |e_j|²`
pub fn worst_case_ul_leakage(p: &[f64], e_hat: &[C64], eps: f64) -> Result<f64> {
    Ok(worst_case_quadratic(&HermitianMatrix::from_real_diag(p), e_hat, eps)?.value)
}

/// Largest value of the quadratic over `n` uniform points of the sphere `‖Δ‖ = ε`.
pub fn sampled_lower_bound(a: &HermitianMatrix, x_hat: &[C64], eps: f64, n: usize, rng: &mut ChaCha20Rng) -> f64 {
    let mut best = a.quad_form(x_hat);
    if eps <= 0.0 {
        return best;
    }
    for _ in 0..n.max(1) {
        let d: CVector = unit_sphere_sample(x_hat.len(), rng).into_iter().map(|z| z * eps).collect();
        best = best.max(quad(a, x_hat, &d));
    }
    best
}

/// Smallest corner value `t` for which `lmi(α, t) ⪰ 0` for some `α ∈ [0, α_max]`,
/// where `t` enters only the bottom-right entry with unit coefficient.
fn lmi_line_search(lmi: impl Fn(f64) -> HermitianMatrix, alpha_max: f64) -> Result<f64> {
    let corner_min = |alpha: f64| -> Result<f64> {
        let m = lmi(alpha);
        let d = m.dim() - 1;
        let top = HermitianMatrix::from_upper_fn(d, |i, j| m.get(i, j));
        if hermitian_eig(&top)?.min() <= 0.0 {
            return Ok(f64::INFINITY);
        }
        let inv = hermitian_inverse(&top)?;
        let col: CVector = (0..d).map(|i| m.get(i, d)).collect();
        Ok(inv.quad_form(&col) - m.get(d, d).re)
    };
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (0.0, alpha_max);
    let mut c = hi - g * (hi - lo);
    let mut e = lo + g * (hi - lo);
    let (mut fc, mut fe) = (corner_min(c)?, corner_min(e)?);
    for _ in 0..300 {
        if fc < fe {
            hi = e;
            e = c;
            fe = fc;
            c = hi - g * (hi - lo);
            fc = corner_min(c)?;
        } else {
            lo = c;
            c = e;
            fc = fe;
            e = lo + g * (hi - lo);
            fe = corner_min(e)?;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(fc.min(fe))
}

/// Upper end of the multiplier search relative to `‖A‖`. With `ε = 0` the bound
/// is only approached as the multiplier grows, to within `1e-12` relative here.
fn multiplier_span(x_norm: f64, eps: f64) -> f64 {
    if eps > 0.0 {
        1.0 + x_norm / eps
    } else {
        1e12
    }
}

fn constant_lmi(block: crate::problem::LmiBlock) -> HermitianMatrix {
    block.evaluate(&Assignment { values: Vec::new() })
}

/// Minimum `δ` admitted by the downlink S-procedure LMI at a fixed `Σ_k W_k`.
pub fn lmi_min_dl_bound(w_sum: &HermitianMatrix, l_hat: &[C64], eps: f64) -> Result<f64> {
    let span = w_sum.frobenius_norm() * multiplier_span(norm(l_hat), eps);
    let ws = MatrixSum::constant(w_sum.clone());
    lmi_line_search(
        |alpha| constant_lmi(c5a_lmi(&ws, l_hat, eps, &ScalarAffine::constant(alpha), &ScalarAffine::constant(0.0))),
        4.0 * span + f64::MIN_POSITIVE,
    )
}

/// Minimum `τ − δ` admitted by the uplink S-procedure LMI at fixed powers.
pub fn lmi_min_ul_bound(p: &[f64], e_hat: &[C64], eps: f64) -> Result<f64> {
    let pmax = p.iter().cloned().fold(0.0, f64::max);
    let span = pmax * multiplier_span(norm(e_hat), eps);
    let pa: Vec<ScalarAffine> = p.iter().map(|x| ScalarAffine::constant(*x)).collect();
    lmi_line_search(
        |beta| {
            constant_lmi(c5b_lmi(
                &pa,
                e_hat,
                eps,
                &ScalarAffine::constant(beta),
                &ScalarAffine::constant(0.0),
                &ScalarAffine::constant(0.0),
            ))
        },
        4.0 * span + f64::MIN_POSITIVE,
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    /// watts, per primary receiver
    pub worst_dl: Vec<f64>,
    pub worst_ul: Vec<f64>,
    /// `max_r (worst_dl + worst_ul)`
    pub worst_total: f64,
    pub tau: f64,
    /// `τ* − worst_total`
    pub slack: f64,
    /// Leakage at the true primary-network channels, per receiver.
    pub true_leakage: Vec<f64>,
    /// `SINR / Γ − 1`
    pub dl_margins: Vec<f64>,
    pub ul_margins: Vec<f64>,
    /// `1 − ΣTr(W_k) / P_max`
    pub power_margin: f64,
    pub constraints: BTreeMap<String, bool>,
    /// Largest relative shortfall over every check.
    pub max_violation: f64,
}

impl AuditReport {
    pub fn pass(&self) -> bool {
        self.constraints.values().all(|v| *v)
    }
}

/// Which constraints an audit checks. Half-duplex phases only carry one link.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AuditScope {
    Full,
    DownlinkOnly,
    UplinkOnly,
}

/// Recomputes every constraint of a recovered solution from the scalar-form
/// evaluators and the exact worst-case oracle.
pub fn audit(
    sol: &BeamformingSolution,
    receivers: &ReceiverBank,
    truth: &ChannelRealization,
    cfg: &SystemConfig,
) -> Result<AuditReport> {
    audit_scoped(sol, receivers, truth, cfg, AuditScope::Full)
}

pub fn audit_scoped(
    sol: &BeamformingSolution,
    receivers: &ReceiverBank,
    truth: &ChannelRealization,
    cfg: &SystemConfig,
    scope: AuditScope,
) -> Result<AuditReport> {
    let csi = truth.estimated();
    let mut constraints = BTreeMap::new();
    let mut worst_violation: f64 = 0.0;
    let mut check = |name: String, margin: f64| {
        worst_violation = worst_violation.max(-margin);
        constraints.insert(name, margin >= -AUDIT_TOL);
    };

    let dl_margins: Vec<f64> =
        (0..cfg.k).map(|k| evaluate_dl_sinr(k, &sol.w, &sol.p, &csi, cfg) / cfg.gamma_dl - 1.0).collect();
    let ul_margins: Vec<f64> =
        (0..cfg.j).map(|j| evaluate_ul_sinr(j, receivers, &sol.p, &sol.w, &csi, cfg) / cfg.gamma_ul - 1.0).collect();
    let total_power: f64 = sol.w.iter().map(|w| norm(w).powi(2)).sum();
    let power_margin = 1.0 - total_power / cfg.p_dl_max;
    if scope != AuditScope::UplinkOnly {
        for (k, m) in dl_margins.iter().enumerate() {
            check(format!("C1[{k}]"), *m);
        }
        check("C3".into(), power_margin);
    }
    if scope != AuditScope::DownlinkOnly {
        for (j, m) in ul_margins.iter().enumerate() {
            check(format!("C2[{j}]"), *m);
        }
        for (j, p) in sol.p.iter().enumerate() {
            check(format!("C4[{j}]"), (cfg.p_ul_max - p).min(*p) / cfg.p_ul_max);
        }
    }

    let w_sum = sum_outer(&sol.w, cfg.n_t);
    let mut worst_dl = Vec::with_capacity(cfg.r);
    let mut worst_ul = Vec::with_capacity(cfg.r);
    let mut true_leakage = Vec::with_capacity(cfg.r);
    let mut worst_total: f64 = 0.0;
    for r in 0..cfg.r {
        let dl = worst_case_dl_leakage(&w_sum, &csi.l_hat[r], csi.eps_dl[r])?;
        let ul = worst_case_ul_leakage(&sol.p, &csi.e_hat_vec(r), csi.eps_ul_stacked(r))?;
        let actual = leakage(&w_sum, &sol.p, &truth.l_true[r], &truth.e_true_vec(r));
        worst_dl.push(dl);
        worst_ul.push(ul);
        true_leakage.push(actual);
        worst_total = worst_total.max(dl + ul);
        let scale = sol.tau.max(f64::MIN_POSITIVE);
        check(format!("C5[{r}]"), (sol.tau - dl - ul) / scale);
        check(format!("true[{r}]"), (sol.tau - actual) / scale);
    }
    Ok(AuditReport {
        worst_dl,
        worst_ul,
        worst_total,
        tau: sol.tau,
        slack: sol.tau - worst_total,
        true_leakage,
        dl_margins,
        ul_margins,
        power_margin,
        constraints,
        max_violation: worst_violation.max(0.0),
    })
}

fn sum_outer(w: &[CVector], n: usize) -> HermitianMatrix {
    let mut s = HermitianMatrix::zeros(n);
    for x in w {
        s.axpy(1.0, &HermitianMatrix::outer(x));
    }
    s
}

/// `lᴴ (Σ_k W_k) l + Σ_j P_j |e_j|²`
pub fn leakage(w_sum: &HermitianMatrix, p: &[f64], l: &[C64], e: &[C64]) -> f64 {
    w_sum.quad_form(l) + p.iter().zip(e).map(|(p, e)| p * e.norm_sqr()).sum::<f64>()
}

/// Largest leakage, over receivers and `n` random channels drawn inside the
/// error balls (`l_r` in its ball, each `e_{j,r}` in its disk).
pub fn max_perturbed_leakage(
    w: &[CVector],
    p: &[f64],
    csi: &EstimatedCsi,
    n: usize,
    rng: &mut ChaCha20Rng,
) -> f64 {
    let w_sum = sum_outer(w, csi.n_t());
    let mut best: f64 = 0.0;
    for _ in 0..n {
        for r in 0..csi.r() {
            let l: CVector = csi.l_hat[r]
                .iter()
                .zip(unit_ball_sample(csi.n_t(), rng))
                .map(|(a, b)| a + b * csi.eps_dl[r])
                .collect();
            let e: CVector = (0..csi.j()).map(|j| csi.e_hat[j][r] + unit_ball_sample(1, rng)[0] * csi.eps_ul[j][r]).collect();
            best = best.max(leakage(&w_sum, p, &l, &e));
        }
    }
    best
}
