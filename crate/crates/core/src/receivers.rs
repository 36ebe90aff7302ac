//! Uplink receive beamformers and the SINR / self-interference evaluators.

use serde::Serialize;

use crate::channel::{EstimatedCsi, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, inner, norm_sqr, CVector, ComplexMatrix, HermitianMatrix, C64};

/// Condition-number ceiling for `G` above which a zero-forcing bank is refused.
pub const ZF_MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceiverKind {
    ZeroForcing,
    Mmse,
}

#[derive(Clone, Debug)]
pub struct ReceiverBank {
    pub v: Vec<CVector>,
    pub kind: ReceiverKind,
}

impl ReceiverBank {
    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }
}

/// `V = G (GᴴG)⁻¹`, column `j` is `v_j`.
pub fn zf_receivers(g: &[CVector]) -> Result<ReceiverBank> {
    if g.is_empty() {
        return Ok(ReceiverBank { v: Vec::new(), kind: ReceiverKind::ZeroForcing });
    }
    let n = g[0].len();
    if g.len() > n {
        return Err(Error::Degenerate(format!("{} uplink users exceed {n} antennas", g.len())));
    }
    let gm = ComplexMatrix::from_columns(g);
    let gram = HermitianMatrix::from_dense(&gm.adjoint().matmul(&gm))?;
    let eig = hermitian_eig(&gram)?;
    if !(eig.min() > 0.0) || eig.max() / eig.min() > ZF_MAX_CONDITION * ZF_MAX_CONDITION {
        return Err(Error::Degenerate("uplink channel matrix is numerically rank deficient".into()));
    }
    let inv = gram.to_dense().solve(&ComplexMatrix::identity(g.len()))?;
    let v = gm.matmul(&inv);
    Ok(ReceiverBank { v: (0..g.len()).map(|j| v.column(j)).collect(), kind: ReceiverKind::ZeroForcing })
}

/// `v_j = (Σ_n P_n g_n g_nᴴ + σ² I)⁻¹ g_j`.
pub fn mmse_receivers(g: &[CVector], p: &[f64], sigma2_ul: f64) -> Result<ReceiverBank> {
    if g.is_empty() {
        return Ok(ReceiverBank { v: Vec::new(), kind: ReceiverKind::Mmse });
    }
    if !(sigma2_ul > 0.0) || p.iter().any(|x| !(*x >= 0.0)) || p.len() != g.len() {
        return Err(Error::Domain("MMSE needs σ² > 0 and one nonnegative power per user".into()));
    }
    let n = g[0].len();
    let mut cov = HermitianMatrix::identity(n).scale(sigma2_ul);
    for (gj, pj) in g.iter().zip(p) {
        cov.axpy(*pj, &HermitianMatrix::outer(gj));
    }
    let rhs = ComplexMatrix::from_columns(g);
    let v = cov.to_dense().solve(&rhs)?;
    Ok(ReceiverBank { v: (0..g.len()).map(|j| v.column(j)).collect(), kind: ReceiverKind::Mmse })
}

/// `ρ·Hᴴ diag(|v|²) H`, so that `I_SI = Σ_k Tr(W_k · si_matrix)`.
pub fn si_matrix(v: &[C64], h_si: &ComplexMatrix, rho: f64) -> HermitianMatrix {
    let n = h_si.rows();
    let mut q = HermitianMatrix::zeros(n);
    for (i, vi) in v.iter().enumerate() {
        let w = rho * vi.norm_sqr();
        if w == 0.0 {
            continue;
        }
        // row i of H_SI, conjugated, is the i-th column of H_SIᴴ
        let a: CVector = h_si.row(i).iter().map(|z| z.conj()).collect();
        q.axpy(w, &HermitianMatrix::outer(&a));
    }
    q
}

/// `Tr(ρ V_j diag(Σ_k H_SI W_k H_SIᴴ))`.
pub fn si_power(v: &[C64], h_si: &ComplexMatrix, w: &[HermitianMatrix], rho: f64) -> f64 {
    let mut total = 0.0;
    for wk in w {
        let m = h_si.matmul(&wk.to_dense()).matmul(&h_si.adjoint());
        for (i, vi) in v.iter().enumerate() {
            total += rho * vi.norm_sqr() * m[(i, i)].re;
        }
    }
    total.max(0.0)
}

/// Downlink SINR of user `k` for beamformers `w` and uplink powers `p`.
pub fn evaluate_dl_sinr(k: usize, w: &[CVector], p: &[f64], csi: &EstimatedCsi, cfg: &SystemConfig) -> f64 {
    let h = &csi.h[k];
    let signal = inner(h, &w[k]).norm_sqr();
    let mut interference = 0.0;
    for (m, wm) in w.iter().enumerate() {
        if m != k {
            interference += inner(h, wm).norm_sqr();
        }
    }
    for (j, pj) in p.iter().enumerate() {
        interference += pj * csi.f[j][k].norm_sqr();
    }
    signal / (interference + cfg.sigma2_dl)
}

/// Uplink SINR of user `j`; the self-interference uses `W_k = w_k w_kᴴ`.
pub fn evaluate_ul_sinr(
    j: usize,
    rx: &ReceiverBank,
    p: &[f64],
    w: &[CVector],
    csi: &EstimatedCsi,
    cfg: &SystemConfig,
) -> f64 {
    let wm: Vec<HermitianMatrix> = w.iter().map(|x| HermitianMatrix::outer(x)).collect();
    evaluate_ul_sinr_cov(j, rx, p, &wm, csi, cfg)
}

/// Uplink SINR of user `j` with general transmit covariances.
pub fn evaluate_ul_sinr_cov(
    j: usize,
    rx: &ReceiverBank,
    p: &[f64],
    w: &[HermitianMatrix],
    csi: &EstimatedCsi,
    cfg: &SystemConfig,
) -> f64 {
    let v = &rx.v[j];
    let signal = p[j] * inner(&csi.g[j], v).norm_sqr();
    let mut interference = 0.0;
    for (n, gn) in csi.g.iter().enumerate() {
        if n != j {
            interference += p[n] * inner(gn, v).norm_sqr();
        }
    }
    interference += si_power(v, &csi.h_si, w, cfg.rho);
    signal / (interference + cfg.sigma2_ul * norm_sqr(v))
}

/// Downlink SINR in trace form, `Tr(H_k W_k) / (Σ_{m≠k} Tr(H_k W_m) + Σ_j P_j|f_jk|² + σ²)`.
pub fn evaluate_dl_sinr_trace(k: usize, w: &[HermitianMatrix], p: &[f64], csi: &EstimatedCsi, cfg: &SystemConfig) -> f64 {
    let hk = HermitianMatrix::outer(&csi.h[k]);
    let signal = hk.trace_product(&w[k]);
    let mut den = cfg.sigma2_dl;
    for (m, wm) in w.iter().enumerate() {
        if m != k {
            den += hk.trace_product(wm);
        }
    }
    for (j, pj) in p.iter().enumerate() {
        den += pj * csi.f[j][k].norm_sqr();
    }
    signal / den
}

/// Uplink SINR in trace form with the self-interference written as `Tr(W_k Q_j)`.
pub fn evaluate_ul_sinr_trace(
    j: usize,
    rx: &ReceiverBank,
    p: &[f64],
    w: &[HermitianMatrix],
    csi: &EstimatedCsi,
    cfg: &SystemConfig,
) -> f64 {
    let vj = HermitianMatrix::outer(&rx.v[j]);
    let signal = p[j] * vj.trace_product(&HermitianMatrix::outer(&csi.g[j]));
    let q = si_matrix(&rx.v[j], &csi.h_si, cfg.rho);
    let mut den = cfg.sigma2_ul * vj.trace();
    for (n, gn) in csi.g.iter().enumerate() {
        if n != j {
            den += p[n] * vj.trace_product(&HermitianMatrix::outer(gn));
        }
    }
    for wk in w {
        den += q.trace_product(wk);
    }
    signal / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_geometry, draw_realization};
    use crate::linalg::{c64, norm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::{ChaCha20Rng, ChaCha8Rng};

    fn random_vec(n: usize, rng: &mut impl Rng) -> CVector {
        (0..n).map(|_| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    }

    fn instance(seed: u64, cfg: &SystemConfig) -> EstimatedCsi {
        let mut r = ChaCha20Rng::seed_from_u64(seed);
        let geo = draw_geometry(cfg, &mut r);
        draw_realization(cfg, &geo, &mut r).unwrap().estimated()
    }

    #[test]
    fn zf_of_orthonormal_channels_is_identity_map() {
        let e = |i: usize| -> CVector { (0..4).map(|k| c64(if k == i { 1.0 } else { 0.0 }, 0.0)).collect() };
        let g = vec![e(0), e(2)];
        let bank = zf_receivers(&g).unwrap();
        for (v, gj) in bank.v.iter().zip(&g) {
            for (a, b) in v.iter().zip(gj) {
                assert!((a - b).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn zf_single_user_is_scaled_matched_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = random_vec(5, &mut rng);
        let bank = zf_receivers(std::slice::from_ref(&g)).unwrap();
        let n2 = norm_sqr(&g);
        for (a, b) in bank.v[0].iter().zip(&g) {
            assert!((a - b / n2).norm() < 1e-14);
        }
    }

    #[test]
    fn zf_residual_is_kronecker() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let g: Vec<CVector> = (0..5).map(|_| random_vec(6, &mut rng)).collect();
            let bank = zf_receivers(&g).unwrap();
            for (n, gn) in g.iter().enumerate() {
                for (j, v) in bank.v.iter().enumerate() {
                    let target = if n == j { 1.0 } else { 0.0 };
                    assert!((inner(gn, v) - c64(target, 0.0)).norm() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn zf_rejects_dependent_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_vec(4, &mut rng);
        let b: CVector = a.iter().map(|z| z * c64(0.0, 2.0)).collect();
        assert!(matches!(zf_receivers(&[a, b]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn mmse_zero_power_is_matched_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g: Vec<CVector> = (0..3).map(|_| random_vec(4, &mut rng)).collect();
        let bank = mmse_receivers(&g, &[0.0; 3], 0.5).unwrap();
        for (v, gj) in bank.v.iter().zip(&g) {
            for (a, b) in v.iter().zip(gj) {
                assert!((a - b / 0.5).norm() < 1e-14);
            }
        }
    }

    fn no_si_cfg() -> SystemConfig {
        SystemConfig { k: 1, j: 1, r: 1, n_t: 4, ..SystemConfig::default() }
    }

    #[test]
    fn mmse_single_user_sinr() {
        let cfg = no_si_cfg();
        let csi = instance(8, &cfg);
        let p = [3e-3];
        let bank = mmse_receivers(&csi.g, &p, cfg.sigma2_ul).unwrap();
        let sinr = evaluate_ul_sinr(0, &bank, &p, &[], &csi, &cfg);
        let expected = p[0] * norm_sqr(&csi.g[0]) / cfg.sigma2_ul;
        assert!((sinr / expected - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mmse_dominates_zf_without_si() {
        let cfg = SystemConfig { k: 1, j: 4, r: 1, n_t: 5, ..SystemConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for seed in 0..1000 {
            let csi = instance(seed, &cfg);
            let p: Vec<f64> = (0..cfg.j).map(|_| rng.random_range(1e-5..1e-2)).collect();
            let zf = zf_receivers(&csi.g).unwrap();
            let mmse = mmse_receivers(&csi.g, &p, cfg.sigma2_ul).unwrap();
            for j in 0..cfg.j {
                let a = evaluate_ul_sinr(j, &zf, &p, &[], &csi, &cfg);
                let b = evaluate_ul_sinr(j, &mmse, &p, &[], &csi, &cfg);
                assert!(b >= a * (1.0 - 1e-9), "seed {seed} user {j}: mmse {b} < zf {a}");
            }
        }
    }

    #[test]
    fn si_power_examples() {
        let h = ComplexMatrix::identity(2);
        let w = [HermitianMatrix::from_real_diag(&[1.0, 2.0])];
        let v = [c64(1.0, 0.0), c64(0.0, 0.0)];
        assert!((si_power(&v, &h, &w, 0.25) - 0.25).abs() < 1e-15);
        assert_eq!(si_power(&v, &h, &[HermitianMatrix::zeros(2)], 0.25), 0.0);
        assert_eq!(si_power(&v, &h, &w, 0.0), 0.0);
    }

    #[test]
    fn si_matrix_matches_si_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let h = ComplexMatrix::from_fn(4, 4, |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let v = random_vec(4, &mut rng);
            let w: Vec<HermitianMatrix> = (0..3).map(|_| HermitianMatrix::outer(&random_vec(4, &mut rng))).collect();
            let q = si_matrix(&v, &h, 1e-3);
            let via_q: f64 = w.iter().map(|wk| q.trace_product(wk)).sum();
            let direct = si_power(&v, &h, &w, 1e-3);
            assert!((via_q - direct).abs() <= 1e-12 * direct.abs().max(1e-300));
        }
    }

    #[test]
    fn single_user_dl_sinr() {
        let cfg = SystemConfig { k: 1, j: 0, r: 1, n_t: 3, ..SystemConfig::default() };
        let csi = instance(14, &cfg);
        let h = &csi.h[0];
        let pw: f64 = 0.2;
        let w: CVector = h.iter().map(|z| z * (pw.sqrt() / norm(h))).collect();
        let sinr = evaluate_dl_sinr(0, &[w], &[], &csi, &cfg);
        assert!((sinr / (norm_sqr(h) * pw / cfg.sigma2_dl) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_beam_gives_zero_sinr() {
        let cfg = SystemConfig { k: 1, j: 0, r: 1, n_t: 2, ..SystemConfig::default() };
        let mut csi = instance(15, &cfg);
        csi.h[0] = vec![c64(1.0, 0.0), c64(0.0, 0.0)];
        let w = vec![c64(0.0, 0.0), c64(0.0, 3.0)];
        assert_eq!(evaluate_dl_sinr(0, &[w], &[], &csi, &cfg), 0.0);
    }

    #[test]
    fn zf_uplink_cross_terms_vanish() {
        let cfg = SystemConfig::default();
        let csi = instance(16, &cfg);
        let bank = zf_receivers(&csi.g).unwrap();
        let p = vec![1e-3; cfg.j];
        let w: Vec<CVector> = (0..cfg.k).map(|k| csi.h[k].iter().map(|z| z * 1e3).collect()).collect();
        let wm: Vec<HermitianMatrix> = w.iter().map(|x| HermitianMatrix::outer(x)).collect();
        for j in 0..cfg.j {
            let sinr = evaluate_ul_sinr(j, &bank, &p, &w, &csi, &cfg);
            let si = si_power(&bank.v[j], &csi.h_si, &wm, cfg.rho);
            let expected = p[j] / (si + cfg.sigma2_ul * norm_sqr(&bank.v[j]));
            assert!((sinr / expected - 1.0).abs() < 1e-9);
        }
        let single = SystemConfig { j: 1, ..cfg.clone() };
        let csi1 = instance(17, &single);
        let bank1 = zf_receivers(&csi1.g).unwrap();
        let sinr = evaluate_ul_sinr(0, &bank1, &[2e-3], &[], &csi1, &single);
        assert!((sinr / (2e-3 / (single.sigma2_ul * norm_sqr(&bank1.v[0]))) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_and_trace_forms_agree() {
        let cfg = SystemConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        for seed in 0..50 {
            let csi = instance(100 + seed, &cfg);
            let bank = zf_receivers(&csi.g).unwrap();
            let w: Vec<CVector> = (0..cfg.k).map(|_| random_vec(cfg.n_t, &mut rng).iter().map(|z| z * 0.1).collect()).collect();
            let wm: Vec<HermitianMatrix> = w.iter().map(|x| HermitianMatrix::outer(x)).collect();
            let p: Vec<f64> = (0..cfg.j).map(|_| rng.random_range(0.0..1e-2)).collect();
            for k in 0..cfg.k {
                let a = evaluate_dl_sinr(k, &w, &p, &csi, &cfg);
                let b = evaluate_dl_sinr_trace(k, &wm, &p, &csi, &cfg);
                assert!((a - b).abs() <= 1e-10 * a.abs());
            }
            for j in 0..cfg.j {
                let a = evaluate_ul_sinr(j, &bank, &p, &w, &csi, &cfg);
                let b = evaluate_ul_sinr_trace(j, &bank, &p, &wm, &csi, &cfg);
                assert!((a - b).abs() <= 1e-10 * a.abs());
            }
        }
    }
}
