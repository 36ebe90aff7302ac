use std::time::Instant;

use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{draw_geometry, draw_realization, ChannelRealization, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{CVector, HermitianMatrix, C64};
use crate::oracle::{audit_scoped, AuditReport, AuditScope};
use crate::problem::{
    build_baseline1, build_baseline2_dl, build_baseline2_ul, build_relaxed, hd_sinr_target, zf_dl_directions,
    Layout, RobustInstance,
};
use crate::receivers::{mmse_receivers, zf_receivers, ReceiverBank};
use crate::recovery::{rank_one_min_trace, recover, BeamformingSolution, Provenance};
use crate::solver::{solve, Settings, SolveReport, SolveStatus};

/// Redraws allowed for a realization whose ZF beamformers are degenerate.
pub const MAX_RESAMPLES: usize = 100;
const BASELINE2_MAX_ROUNDS: usize = 20;
const BASELINE2_POWER_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Proposed,
    Baseline1,
    Baseline2,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Proposed, Scheme::Baseline1, Scheme::Baseline2];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Baseline1 => "baseline1",
            Scheme::Baseline2 => "baseline2",
        }
    }

    pub fn parse(s: &str) -> Option<Scheme> {
        Scheme::ALL.into_iter().find(|x| x.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrialStatus {
    Feasible,
    Infeasible,
    NumericalFailure,
    AuditFailed,
}

#[derive(Clone, Debug, Serialize)]
pub struct SchemeOutcome {
    pub scheme: Scheme,
    pub status: TrialStatus,
    /// Reported leakage metric in watts: `τ*`, or the time-shared average for baseline 2.
    pub leakage: Option<f64>,
    pub solve_ms: f64,
    pub audits: Vec<AuditReport>,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialResult {
    pub resamples: usize,
    pub outcomes: Vec<SchemeOutcome>,
}

impl TrialResult {
    pub fn outcome(&self, s: Scheme) -> Option<&SchemeOutcome> {
        self.outcomes.iter().find(|o| o.scheme == s)
    }
}

/// A realization together with the ZF beamformers it needs.
pub struct Draw {
    pub truth: ChannelRealization,
    pub zf: ReceiverBank,
    pub resamples: usize,
}

/// Draws geometry and channels, redrawing while the uplink or downlink channel
/// matrix is numerically rank deficient.
pub fn draw_trial(cfg: &SystemConfig, rng: &mut ChaCha20Rng) -> Result<Draw> {
    draw_trial_nested(cfg, cfg.n_t, rng)
}

/// [`draw_trial`] with the true channels drawn for `n_max` antennas and cut to
/// the first `cfg.n_t`, so runs at different antenna counts share their fading.
pub fn draw_trial_nested(cfg: &SystemConfig, n_max: usize, rng: &mut ChaCha20Rng) -> Result<Draw> {
    let full_cfg = SystemConfig { n_t: n_max.max(cfg.n_t), ..cfg.clone() };
    for resamples in 0..MAX_RESAMPLES {
        let geo = draw_geometry(cfg, rng);
        let full = draw_realization(&full_cfg, &geo, rng)?;
        let truth = full.truncated(cfg.n_t, cfg.kappa(), rng)?;
        let zf = match zf_receivers(&truth.g) {
            Ok(z) => z,
            Err(Error::Degenerate(_)) => continue,
            Err(e) => return Err(e),
        };
        match zf_dl_directions(&truth.h) {
            Ok(_) => return Ok(Draw { truth, zf, resamples }),
            Err(Error::Degenerate(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Degenerate(format!("no usable realization in {MAX_RESAMPLES} draws")))
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn outcome(scheme: Scheme, status: TrialStatus, solve_ms: f64, message: impl Into<String>) -> SchemeOutcome {
    SchemeOutcome { scheme, status, leakage: None, solve_ms, audits: Vec::new(), message: message.into() }
}

fn status_of(rep: &SolveReport) -> TrialStatus {
    match rep.status {
        SolveStatus::Optimal => TrialStatus::Feasible,
        SolveStatus::Infeasible => TrialStatus::Infeasible,
        SolveStatus::NumericalFailure => TrialStatus::NumericalFailure,
    }
}

fn scalars(rep: &SolveReport, layout: &Layout) -> (Vec<f64>, f64, Vec<f64>, Vec<Option<f64>>, Vec<Option<f64>>) {
    let a = &rep.assignment;
    (
        layout.p.iter().map(|v| a.scalar(*v)).collect(),
        layout.tau.map_or(0.0, |v| a.scalar(v)),
        layout.delta.iter().map(|v| a.scalar(*v)).collect(),
        layout.alpha.iter().map(|v| v.map(|v| a.scalar(v))).collect(),
        layout.beta.iter().map(|v| v.map(|v| a.scalar(v))).collect(),
    )
}

/// Solution of a problem whose downlink is given by `w` directly.
fn solution_from(rep: &SolveReport, layout: &Layout, w: Vec<CVector>) -> BeamformingSolution {
    let (p, tau, delta, alpha, beta) = scalars(rep, layout);
    BeamformingSolution {
        w_cov: w.iter().map(|x| HermitianMatrix::outer(x)).collect(),
        w,
        p,
        tau,
        delta,
        alpha,
        beta,
        provenance: Provenance::Direct,
        stage: None,
        relaxed: rep.clone(),
        auxiliary: None,
        pi_min_eig: None,
        max_violation: 0.0,
    }
}

fn finish(scheme: Scheme, leakage: f64, solve_ms: f64, audits: Vec<AuditReport>) -> SchemeOutcome {
    let pass = audits.iter().all(|a| a.pass());
    SchemeOutcome {
        scheme,
        status: if pass { TrialStatus::Feasible } else { TrialStatus::AuditFailed },
        leakage: Some(leakage),
        solve_ms,
        message: if pass { String::new() } else { "audit failed".into() },
        audits,
    }
}

pub fn run_proposed(draw: &Draw, cfg: &SystemConfig, settings: &Settings) -> Result<SchemeOutcome> {
    let t = Instant::now();
    let inst = RobustInstance::new(draw.truth.estimated(), draw.zf.clone(), cfg.clone())?;
    let (prob, _) = build_relaxed(&inst);
    let rep = solve(&prob, settings)?;
    if !rep.is_optimal() {
        return Ok(outcome(Scheme::Proposed, status_of(&rep), ms(t), rep.message));
    }
    let sol = match recover(&rep, &inst, settings) {
        Ok(s) => s,
        Err(e) => return Ok(outcome(Scheme::Proposed, TrialStatus::NumericalFailure, ms(t), e.to_string())),
    };
    let elapsed = ms(t);
    let a = audit_scoped(&sol, &draw.zf, &draw.truth, cfg, AuditScope::Full)?;
    Ok(finish(Scheme::Proposed, sol.tau, elapsed, vec![a]))
}

pub fn run_baseline1(draw: &Draw, cfg: &SystemConfig, settings: &Settings) -> Result<SchemeOutcome> {
    let t = Instant::now();
    let inst = RobustInstance::new(draw.truth.estimated(), draw.zf.clone(), cfg.clone())?;
    let (prob, layout) = build_baseline1(&inst)?;
    let rep = solve(&prob, settings)?;
    if !rep.is_optimal() {
        return Ok(outcome(Scheme::Baseline1, status_of(&rep), ms(t), rep.message));
    }
    let dirs = layout.directions.as_ref().expect("fixed directions");
    let w: Vec<CVector> = layout
        .w
        .iter()
        .zip(dirs)
        .map(|(v, d)| {
            let s = rep.assignment.scalar(*v).max(0.0).sqrt();
            d.iter().map(|z| z * s).collect()
        })
        .collect();
    let elapsed = ms(t);
    let sol = solution_from(&rep, &layout, w);
    let a = audit_scoped(&sol, &draw.zf, &draw.truth, cfg, AuditScope::Full)?;
    Ok(finish(Scheme::Baseline1, sol.tau, elapsed, vec![a]))
}

fn max_relative_change(old: &[f64], new: &[f64]) -> f64 {
    old.iter().zip(new).map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)).fold(0.0, f64::max)
}

pub fn run_baseline2(draw: &Draw, cfg: &SystemConfig, settings: &Settings) -> Result<SchemeOutcome> {
    let t = Instant::now();
    let csi = draw.truth.estimated();
    let hd = SystemConfig { gamma_dl: hd_sinr_target(cfg.gamma_dl), gamma_ul: hd_sinr_target(cfg.gamma_ul), ..cfg.clone() };

    let inst = RobustInstance::new(csi.clone(), draw.zf.clone(), cfg.clone())?;
    let (dl_prob, dl_layout) = build_baseline2_dl(&inst);
    let dl_rep = solve(&dl_prob, settings)?;
    if !dl_rep.is_optimal() {
        return Ok(outcome(Scheme::Baseline2, status_of(&dl_rep), ms(t), format!("downlink phase: {}", dl_rep.message)));
    }
    let (w, dl_rep) = match rank_one_min_trace(&dl_prob, &dl_layout, &dl_rep, settings) {
        Ok((w, point)) => (w, SolveReport { assignment: point, ..dl_rep }),
        Err(e) => return Ok(outcome(Scheme::Baseline2, TrialStatus::NumericalFailure, ms(t), format!("downlink phase: {e}"))),
    };

    let mut rx = draw.zf.clone();
    let mut prev: Option<Vec<f64>> = None;
    let mut ul = None;
    for _ in 0..BASELINE2_MAX_ROUNDS {
        let inst = RobustInstance::new(csi.clone(), rx.clone(), cfg.clone())?;
        let (prob, layout) = build_baseline2_ul(&inst, &rx.v);
        let rep = solve(&prob, settings)?;
        if !rep.is_optimal() {
            return Ok(outcome(Scheme::Baseline2, status_of(&rep), ms(t), format!("uplink phase: {}", rep.message)));
        }
        let p: Vec<f64> = layout.p.iter().map(|v| rep.assignment.scalar(*v)).collect();
        let done = prev.as_ref().is_some_and(|q| max_relative_change(q, &p) <= BASELINE2_POWER_TOL);
        ul = Some((rep, layout, rx.clone()));
        if done {
            break;
        }
        rx = mmse_receivers(&csi.g, &p, cfg.sigma2_ul)?;
        prev = Some(p);
    }
    let (ul_rep, ul_layout, ul_rx) = ul.expect("at least one uplink round");
    let elapsed = ms(t);

    let mut dl_sol = solution_from(&dl_rep, &dl_layout, w);
    dl_sol.p = vec![0.0; cfg.j];
    let zero_w = vec![vec![C64::default(); cfg.n_t]; cfg.k];
    let ul_sol = solution_from(&ul_rep, &ul_layout, zero_w);
    let audits = vec![
        audit_scoped(&dl_sol, &ul_rx, &draw.truth, &hd, AuditScope::DownlinkOnly)?,
        audit_scoped(&ul_sol, &ul_rx, &draw.truth, &hd, AuditScope::UplinkOnly)?,
    ];
    Ok(finish(Scheme::Baseline2, 0.5 * (dl_sol.tau + ul_sol.tau), elapsed, audits))
}

/// Every requested scheme on one shared realization.
pub fn run_trial(cfg: &SystemConfig, rng: &mut ChaCha20Rng, schemes: &[Scheme], settings: &Settings) -> Result<TrialResult> {
    run_trial_nested(cfg, cfg.n_t, rng, schemes, settings)
}

/// [`run_trial`] on a realization from [`draw_trial_nested`].
pub fn run_trial_nested(
    cfg: &SystemConfig,
    n_max: usize,
    rng: &mut ChaCha20Rng,
    schemes: &[Scheme],
    settings: &Settings,
) -> Result<TrialResult> {
    cfg.validate()?;
    let draw = draw_trial_nested(cfg, n_max, rng)?;
    Ok(run_schemes(&draw, cfg, schemes, settings))
}

/// Runs each scheme on `draw`; errors become numerical failures of that scheme.
pub fn run_schemes(draw: &Draw, cfg: &SystemConfig, schemes: &[Scheme], settings: &Settings) -> TrialResult {
    let mut outcomes = Vec::with_capacity(schemes.len());
    for s in schemes {
        let o = match s {
            Scheme::Proposed => run_proposed(draw, cfg, settings),
            Scheme::Baseline1 => run_baseline1(draw, cfg, settings),
            Scheme::Baseline2 => run_baseline2(draw, cfg, settings),
        };
        outcomes.push(match o {
            Ok(o) => o,
            Err(e) => outcome(*s, TrialStatus::NumericalFailure, 0.0, e.to_string()),
        });
    }
    TrialResult { resamples: draw.resamples, outcomes }
}
