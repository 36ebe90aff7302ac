use fdcr::channel::SystemConfig;
use fdcr::experiments::{draw_trial, trial_rng};
use fdcr::linalg::{inner, CVector, HermitianMatrix, C64};
use fdcr::receivers::{
    evaluate_dl_sinr, evaluate_dl_sinr_trace, evaluate_ul_sinr, evaluate_ul_sinr_trace, mmse_receivers, si_power,
};
use proptest::prelude::*;
use rand::Rng;

fn beams(nt: usize, k: usize, seed: u64) -> Vec<CVector> {
    let mut rng = trial_rng(seed, 99);
    (0..k).map(|_| (0..nt).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 0.3).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn zf_inverts_the_uplink_channels(seed in any::<u64>(), nt in 5usize..=9) {
        let cfg = SystemConfig { n_t: nt, ..SystemConfig::default() };
        let d = draw_trial(&cfg, &mut trial_rng(seed, 1)).unwrap();
        let g = &d.truth.g;
        // scale out the path gain so the tolerance is relative
        for (j, v) in d.zf.v.iter().enumerate() {
            for (n, gn) in g.iter().enumerate() {
                let x = inner(gn, v);
                let want = if n == j { 1.0 } else { 0.0 };
                prop_assert!((x - C64::new(want, 0.0)).norm() <= 1e-10, "gᴴv = {x} at ({n}, {j})");
            }
        }
    }

    #[test]
    fn sinrs_are_finite_and_forms_agree(seed in any::<u64>(), nt in 5usize..=9) {
        let cfg = SystemConfig { n_t: nt, ..SystemConfig::default() };
        let d = draw_trial(&cfg, &mut trial_rng(seed, 2)).unwrap();
        let csi = d.truth.estimated();
        let w = beams(nt, cfg.k, seed);
        let covs: Vec<HermitianMatrix> = w.iter().map(|x| HermitianMatrix::outer(x)).collect();
        let p: Vec<f64> = (0..cfg.j).map(|j| cfg.p_ul_max * (j + 1) as f64 / cfg.j as f64).collect();
        for k in 0..cfg.k {
            let a = evaluate_dl_sinr(k, &w, &p, &csi, &cfg);
            let b = evaluate_dl_sinr_trace(k, &covs, &p, &csi, &cfg);
            prop_assert!(a.is_finite() && a >= 0.0);
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1e-300));
        }
        for j in 0..cfg.j {
            let a = evaluate_ul_sinr(j, &d.zf, &p, &w, &csi, &cfg);
            let b = evaluate_ul_sinr_trace(j, &d.zf, &p, &covs, &csi, &cfg);
            prop_assert!(a.is_finite() && a >= 0.0);
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1e-300));
            let si = si_power(&d.zf.v[j], &csi.h_si, &covs, cfg.rho);
            prop_assert!(si.is_finite() && si >= 0.0);
        }
    }

    #[test]
    fn mmse_beats_zf_without_self_interference(seed in any::<u64>()) {
        let cfg = SystemConfig { n_t: 7, ..SystemConfig::default() };
        let d = draw_trial(&cfg, &mut trial_rng(seed, 3)).unwrap();
        let csi = d.truth.estimated();
        let p = vec![cfg.p_ul_max; cfg.j];
        let mmse = mmse_receivers(&csi.g, &p, cfg.sigma2_ul).unwrap();
        let quiet = SystemConfig { rho: 1e-300, ..cfg.clone() };
        let w = vec![vec![C64::default(); cfg.n_t]; cfg.k];
        for j in 0..cfg.j {
            let zf = evaluate_ul_sinr(j, &d.zf, &p, &w, &csi, &quiet);
            let mm = evaluate_ul_sinr(j, &mmse, &p, &w, &csi, &quiet);
            prop_assert!(mm >= zf * (1.0 - 1e-9), "mmse {mm} < zf {zf}");
        }
    }
}
