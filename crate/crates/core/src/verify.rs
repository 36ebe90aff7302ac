//! Self-checks run by `fdcr verify`.

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::channel::{complex_normal, linear_to_db, SystemConfig};
use crate::experiments::{draw_trial, run_scenario, trial_rng, Scenario, Scheme};
use crate::linalg::{norm, CVector, HermitianMatrix};
use crate::oracle::{
    audit, lmi_min_dl_bound, lmi_min_ul_bound, max_perturbed_leakage, worst_case_dl_leakage, worst_case_ul_leakage,
};
use crate::problem::{build_nominal, build_relaxed, hd_sinr_target, RobustInstance};
use crate::recovery::{numeric_rank, recover, RANK_TOL};
use crate::solver::{kkt_residuals, solve, Settings};
use crate::Result;

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Random PSD matrix `G Gᴴ` of rank at most `rank`.
pub fn random_psd(n: usize, rank: usize, rng: &mut ChaCha20Rng) -> HermitianMatrix {
    let mut out = HermitianMatrix::zeros(n);
    for _ in 0..rank {
        let g: CVector = (0..n).map(|_| complex_normal(rng)).collect();
        out = out.add(&HermitianMatrix::outer(&g));
    }
    out
}

/// Largest relative gap between the S-procedure bound and the exact worst case
/// over `n` random downlink and uplink tuples.
pub fn s_procedure_gap(n: usize, rng: &mut ChaCha20Rng) -> Result<(f64, f64)> {
    let (mut dl, mut ul) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let nt = rng.random_range(2..=9);
        let w = random_psd(nt, rng.random_range(1..=nt), rng);
        let l: CVector = (0..nt).map(|_| complex_normal(rng)).collect();
        let eps = rng.random::<f64>() * norm(&l);
        dl = dl.max(rel(lmi_min_dl_bound(&w, &l, eps)?, worst_case_dl_leakage(&w, &l, eps)?));

        let j = rng.random_range(1..=5);
        let p: Vec<f64> = (0..j).map(|_| rng.random::<f64>()).collect();
        let e: CVector = (0..j).map(|_| complex_normal(rng)).collect();
        let eps = rng.random::<f64>() * norm(&e);
        ul = ul.max(rel(lmi_min_ul_bound(&p, &e, eps)?, worst_case_ul_leakage(&p, &e, eps)?));
    }
    Ok((dl, ul))
}

/// Runs the check table. Every check is deterministic given `seed`.
pub fn run_checks(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut rng = trial_rng(seed, u64::MAX);

    let (dl, ul) = s_procedure_gap(100, &mut rng)?;
    out.push(check("s-procedure (dl)", dl <= 1e-6, format!("max rel gap {dl:.2e} over 100 tuples")));
    out.push(check("s-procedure (ul)", ul <= 1e-6, format!("max rel gap {ul:.2e} over 100 tuples")));

    let hd = linear_to_db(hd_sinr_target(crate::channel::db_to_linear(6.0)));
    out.push(check("hd target of 6 dB", (hd - 13.77).abs() <= 0.01, format!("{hd:.4} dB")));

    let settings = Settings::default();
    let cfg = SystemConfig { gamma_dl: crate::channel::db_to_linear(6.0), ..SystemConfig::default() };
    let mut solved = None;
    for t in 0..20 {
        let draw = draw_trial(&cfg, &mut trial_rng(seed, t))?;
        let inst = RobustInstance::new(draw.truth.estimated(), draw.zf.clone(), cfg.clone())?;
        let (prob, layout) = build_relaxed(&inst);
        let rep = solve(&prob, &settings)?;
        if rep.is_optimal() {
            solved = Some((t, draw, inst, prob, layout, rep));
            break;
        }
    }
    let Some((t, draw, inst, prob, layout, rep)) = solved else {
        out.push(check("feasible trial", false, "no feasible realization in 20 draws".into()));
        return Ok(out);
    };
    let kkt = kkt_residuals(&prob, &rep)?;
    out.push(check(
        "solver certificate",
        rep.rel_gap <= 1e-7 && rep.primal_infeasibility <= 1e-8 && kkt.max() <= 1e-6,
        format!("trial {t}: gap {:.1e}, primal {:.1e}, kkt {:.1e}", rep.rel_gap, rep.primal_infeasibility, kkt.max()),
    ));
    let ranks: Vec<usize> = layout.w.iter().map(|v| numeric_rank(rep.assignment.matrix(*v), RANK_TOL)).collect();
    match recover(&rep, &inst, &settings) {
        Ok(sol) => {
            out.push(check("rank-one recovery", true, format!("relaxed ranks {ranks:?}, {:?}", sol.provenance)));
            let a = audit(&sol, &draw.zf, &draw.truth, &cfg)?;
            out.push(check("audit", a.pass(), format!("worst {:.4e} W, tau {:.4e} W", a.worst_total, a.tau)));
            let csi = draw.truth.estimated();
            let worst = max_perturbed_leakage(&sol.w, &sol.p, &csi, 1000, &mut rng);
            out.push(check(
                "perturbed leakage",
                worst <= sol.tau + 1e-9,
                format!("max over 1000 draws {worst:.4e} W, tau {:.4e} W", sol.tau),
            ));
        }
        Err(e) => out.push(check("rank-one recovery", false, e.to_string())),
    }

    let exact = SystemConfig { kappa2: 0.0, ..cfg.clone() };
    let mut csi = draw.truth.estimated();
    csi.eps_dl.iter_mut().for_each(|e| *e = 0.0);
    csi.eps_ul.iter_mut().flatten().for_each(|e| *e = 0.0);
    let inst0 = RobustInstance::new(csi, draw.zf.clone(), exact)?;
    let robust = solve(&build_relaxed(&inst0).0, &settings)?;
    let nominal = solve(&build_nominal(&inst0).0, &settings)?;
    let agree = robust.is_optimal() && nominal.is_optimal() && rel(robust.primal_objective, nominal.primal_objective) <= 1e-6;
    out.push(check(
        "kappa = 0 robust vs nominal",
        agree,
        format!("{:.6e} vs {:.6e}", robust.primal_objective, nominal.primal_objective),
    ));

    let s = Scenario {
        values: vec![6.0],
        nt: vec![6],
        trials: 3,
        seed,
        schemes: vec![Scheme::Proposed, Scheme::Baseline1],
        record_timing: false,
        ..Scenario::fig2()
    };
    let one = run_scenario(&s, 1)?.to_csv();
    let two = run_scenario(&s, 2)?.to_csv();
    out.push(check("determinism across threads", one == two, format!("{} csv bytes", one.len())));
    Ok(out)
}
