use fdcr::channel::{db_to_linear, SystemConfig};
use fdcr::experiments::{draw_trial, run_baseline2, trial_rng, Draw, Scheme, TrialStatus};
use fdcr::linalg::{CVector, HermitianMatrix};
use fdcr::oracle::{sampled_lower_bound, worst_case_dl_leakage, worst_case_quadratic, worst_case_ul_leakage};
use fdcr::problem::{build_baseline1, build_relaxed, RobustInstance};
use fdcr::receivers::{evaluate_dl_sinr, evaluate_ul_sinr};
use fdcr::recovery::{numeric_rank, recover, recover_with, Provenance, Stage, RANK_TOL};
use fdcr::solver::{solve, Settings, SolveReport};
use fdcr::verify::random_psd;
use proptest::prelude::*;

fn feasible(nt: usize, gamma_db: f64, seed: u64) -> Vec<(Draw, RobustInstance, SolveReport, SystemConfig)> {
    let cfg = SystemConfig { n_t: nt, gamma_dl: db_to_linear(gamma_db), ..SystemConfig::default() };
    let mut out = Vec::new();
    for t in 0..12 {
        let d = draw_trial(&cfg, &mut trial_rng(seed, t)).unwrap();
        let inst = RobustInstance::new(d.truth.estimated(), d.zf.clone(), cfg.clone()).unwrap();
        let rep = solve(&build_relaxed(&inst).0, &Settings::default()).unwrap();
        if rep.is_optimal() {
            out.push((d, inst, rep, cfg.clone()));
        }
    }
    assert!(!out.is_empty());
    out
}

#[test]
fn auxiliary_recovery_keeps_tau_and_certifies_pi() {
    for (_, inst, rep, cfg) in feasible(6, 6.0, 21).into_iter().take(4) {
        let sol = recover_with(&rep, &inst, &Settings::default(), true).unwrap();
        assert_eq!(sol.provenance, Provenance::ViaAuxiliary);
        if matches!(sol.stage, Some(Stage::Frozen(_))) {
            assert!((sol.tau - rep.primal_objective).abs() <= 1e-9 * rep.primal_objective);
        }
        if let Some(pi) = &sol.pi_min_eig {
            assert!(pi.iter().all(|e| *e > 0.0), "Π min eigenvalues {pi:?}");
        }
        let csi = inst.csi.clone();
        for k in 0..cfg.k {
            let s = evaluate_dl_sinr(k, &sol.w, &sol.p, &csi, &cfg);
            assert!(s >= cfg.gamma_dl * (1.0 - 1e-6), "DL SINR {s} below {}", cfg.gamma_dl);
        }
        for j in 0..cfg.j {
            let s = evaluate_ul_sinr(j, &inst.receivers, &sol.p, &sol.w, &csi, &cfg);
            assert!(s >= cfg.gamma_ul * (1.0 - 1e-6), "UL SINR {s} below {}", cfg.gamma_ul);
        }
    }
}

#[test]
fn relaxed_solutions_are_rank_one() {
    for (_, inst, rep, _) in feasible(9, 10.0, 22) {
        let (_, layout) = build_relaxed(&inst);
        for v in &layout.w {
            assert!(numeric_rank(rep.assignment.matrix(*v), RANK_TOL) <= 1);
        }
        let sol = recover(&rep, &inst, &Settings::default()).unwrap();
        assert!(sol.w_cov.iter().all(|w| numeric_rank(w, RANK_TOL) <= 1));
    }
}

#[test]
fn epigraph_value_matches_oracle() {
    for (_, inst, rep, _) in feasible(7, 6.0, 23) {
        let sol = recover(&rep, &inst, &Settings::default()).unwrap();
        let w_sum = sol.w_cov.iter().fold(HermitianMatrix::zeros(7), |a, b| a.add(b));
        let csi = &inst.csi;
        let worst = (0..csi.l_hat.len())
            .map(|r| {
                let e: CVector = csi.e_hat.iter().map(|row| row[r]).collect();
                let eps_ul = csi.eps_ul.iter().map(|row| row[r] * row[r]).sum::<f64>().sqrt();
                worst_case_dl_leakage(&w_sum, &csi.l_hat[r], csi.eps_dl[r]).unwrap()
                    + worst_case_ul_leakage(&sol.p, &e, eps_ul).unwrap()
            })
            .fold(0.0, f64::max);
        assert!((worst - sol.tau).abs() <= 1e-6 * sol.tau, "oracle {worst} vs τ {}", sol.tau);
    }
}

#[test]
fn baseline1_never_beats_the_joint_design() {
    let cfg = SystemConfig { n_t: 6, gamma_dl: db_to_linear(6.0), ..SystemConfig::default() };
    for t in 0..10 {
        let d = draw_trial(&cfg, &mut trial_rng(24, t)).unwrap();
        let inst = RobustInstance::new(d.truth.estimated(), d.zf.clone(), cfg.clone()).unwrap();
        let joint = solve(&build_relaxed(&inst).0, &Settings::default()).unwrap();
        let fixed = solve(&build_baseline1(&inst).unwrap().0, &Settings::default()).unwrap();
        if fixed.is_optimal() {
            assert!(joint.is_optimal());
            assert!(fixed.primal_objective >= joint.primal_objective * (1.0 - 1e-6));
        }
    }
}

#[test]
fn baseline2_reports_half_of_both_phases() {
    let cfg = SystemConfig { n_t: 6, gamma_dl: db_to_linear(6.0), ..SystemConfig::default() };
    let d = draw_trial(&cfg, &mut trial_rng(25, 0)).unwrap();
    let o = run_baseline2(&d, &cfg, &Settings::default()).unwrap();
    assert_eq!(o.scheme, Scheme::Baseline2);
    assert_eq!(o.status, TrialStatus::Feasible, "{}", o.message);
    assert_eq!(o.audits.len(), 2);
    let sum: f64 = o.audits.iter().map(|a| a.tau).sum();
    assert!((o.leakage.unwrap() - sum / 2.0).abs() <= 1e-15 * sum);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn exact_worst_case_dominates_samples(seed in any::<u64>(), n in 2usize..=8, frac in 0.0f64..1.0) {
        let mut rng = trial_rng(seed, 5);
        let a = random_psd(n, 1 + (seed as usize % n), &mut rng);
        let x: CVector = (0..n).map(|_| fdcr::channel::complex_normal(&mut rng)).collect();
        let eps = frac * fdcr::linalg::norm(&x);
        let exact = worst_case_quadratic(&a, &x, eps).unwrap().value;
        let sampled = sampled_lower_bound(&a, &x, eps, 200, &mut rng);
        prop_assert!(exact >= sampled * (1.0 - 1e-12), "exact {exact} < sampled {sampled}");
    }
}
