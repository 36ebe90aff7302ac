//! Interior-point solver for [`ConicProblem`]s.
//!
//! Complex blocks are solved through their real symmetric embedding; blocks whose
//! data are real stay real. Constraint data are equilibrated per block and the
//! variables are scaled by their declared units before the solve.

mod ipm;
mod lower;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::real::min_eigenvalue;
use crate::linalg::{HermitianMatrix, Mat};
use crate::problem::{Assignment, ConicProblem, ConstraintKind, VarShape};

use ipm::{Ipm, Outcome};
use lower::lower;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Settings {
    pub max_iterations: usize,
    /// Internal stopping target for the relative gap.
    pub gap_tol: f64,
    pub abs_gap_tol: f64,
    /// Internal stopping target for the scaled residuals.
    pub feas_tol: f64,
    /// A stalled solve is still accepted as optimal within these.
    pub accept_gap_tol: f64,
    pub accept_feas_tol: f64,
    pub step_fraction: f64,
    /// Iterative-refinement passes on each Newton system.
    pub refinement_steps: usize,
    /// Embed every block, even real ones.
    pub force_embedding: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            max_iterations: 100,
            gap_tol: 1e-9,
            abs_gap_tol: 1e-12,
            feas_tol: 1e-10,
            accept_gap_tol: 1e-7,
            accept_feas_tol: 1e-8,
            step_fraction: 0.99,
            refinement_steps: 1,
            force_embedding: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

/// Scaled objective values of one interior-point iterate.
#[derive(Clone, Copy, Debug)]
pub struct IterateRecord {
    pub primal: f64,
    pub dual: f64,
    /// `⟨s, z⟩/τ²`
    pub gap: f64,
    /// Residual part of `primal − dual`: `primal − dual = gap − residual_term`.
    pub residual_term: f64,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub assignment: Assignment,
    /// Multiplier of every block, in original units.
    pub duals: Vec<HermitianMatrix>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub rel_gap: f64,
    /// Largest PSD violation of any block at the returned point, scaled.
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
    pub wall_time: Duration,
    pub history: Vec<IterateRecord>,
    pub message: String,
}

impl SolveReport {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

fn violation(m: &Mat) -> f64 {
    match min_eigenvalue(m) {
        Ok(e) => (-e).max(0.0),
        Err(_) => f64::INFINITY,
    }
}

pub fn solve(p: &ConicProblem, settings: &Settings) -> Result<SolveReport> {
    let start = Instant::now();
    let lp = lower(p, settings.force_embedding)?;
    let res = Ipm::new(&lp, settings).run();
    let it = &res.best;
    let inv_tau = 1.0 / it.tau;
    let xs: Vec<f64> = it.x.iter().map(|v| v * inv_tau).collect();
    let zs: Vec<Mat> = it
        .z
        .iter()
        .map(|m| {
            let mut m = m.clone();
            m.scale(inv_tau);
            m
        })
        .collect();

    let assignment = lp.assignment(p, &xs);
    let duals: Vec<HermitianMatrix> = lp.blocks.iter().zip(&zs).map(|(b, z)| b.to_complex(z, 1.0 / lp.gamma)).collect();
    let primal_objective = p.objective_value(&assignment);
    let dual_objective = -p.blocks.iter().zip(&duals).map(|(b, z)| b.constant.trace_product(z)).sum::<f64>();

    let mut pinf: f64 = 0.0;
    let mut dviol: f64 = 0.0;
    let mut atz = vec![0.0; lp.n];
    let mut sz = 0.0;
    for (b, z) in lp.blocks.iter().zip(&zs) {
        let mut s = b.apply(&xs);
        s.axpy(1.0, &b.f0);
        pinf = pinf.max(violation(&s) / b.f0.frobenius_norm().max(1.0));
        dviol = dviol.max(violation(z) / z.frobenius_norm().max(1.0));
        sz += s.dot(z);
        b.adjoint_into(z, &mut atz);
    }
    let c_norm = lp.c.iter().map(|x| x * x).sum::<f64>().sqrt();
    let dres = atz.iter().zip(&lp.c).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt() / c_norm.max(1.0);
    let dual_infeasibility = dres.max(dviol);
    let ps: f64 = lp.c.iter().zip(&xs).map(|(c, x)| c * x).sum();
    let ds: f64 = -lp.blocks.iter().zip(&zs).map(|(b, z)| b.f0.dot(z)).sum::<f64>();
    let rel_gap = (ps - ds).abs().max(sz.abs()) / ps.abs().max(ds.abs()).max(1.0);

    let within = rel_gap <= settings.accept_gap_tol
        && pinf <= settings.accept_feas_tol
        && dual_infeasibility <= settings.accept_feas_tol;
    let (status, message) = match res.outcome {
        Outcome::Converged if within => (SolveStatus::Optimal, "converged".to_string()),
        Outcome::Converged => (SolveStatus::NumericalFailure, "converged iterate fails the acceptance check".into()),
        Outcome::PrimalInfeasible => (SolveStatus::Infeasible, "primal infeasibility certificate".into()),
        Outcome::DualInfeasible => (SolveStatus::Infeasible, "dual infeasibility certificate (unbounded)".into()),
        Outcome::Stalled | Outcome::IterationLimit if within => {
            (SolveStatus::Optimal, format!("{:?}; best iterate meets the acceptance tolerances", res.outcome))
        }
        o => (SolveStatus::NumericalFailure, format!("{o:?}")),
    };
    Ok(SolveReport {
        status,
        assignment,
        duals,
        primal_objective,
        dual_objective,
        rel_gap,
        primal_infeasibility: pinf,
        dual_infeasibility,
        iterations: res.iterations,
        wall_time: start.elapsed(),
        history: res.history,
        message,
    })
}

/// First-order optimality residuals of a report, in the solver's scaled units.
#[derive(Clone, Debug)]
pub struct KktResiduals {
    /// `‖c − Σ_i A_i*(Z_i)‖` restricted to each variable.
    pub stationarity: Vec<f64>,
    /// `‖S_i Z_i‖_F / max(1, ‖S_i‖_F ‖Z_i‖_F)` per block.
    pub complementarity: Vec<f64>,
    pub kinds: Vec<ConstraintKind>,
    pub primal_violation: f64,
    pub dual_violation: f64,
}

impl KktResiduals {
    pub fn max_stationarity(&self) -> f64 {
        self.stationarity.iter().cloned().fold(0.0, f64::max)
    }

    /// Complementarity of the `W_k ⪰ 0` blocks (and of untyped blocks).
    pub fn max_complementarity(&self) -> f64 {
        self.complementarity
            .iter()
            .zip(&self.kinds)
            .filter(|(_, k)| matches!(k, ConstraintKind::C6(_) | ConstraintKind::Other))
            .map(|(c, _)| *c)
            .fold(0.0, f64::max)
    }

    pub fn max(&self) -> f64 {
        self.max_stationarity().max(self.max_complementarity()).max(self.primal_violation).max(self.dual_violation)
    }
}

/// Recomputes stationarity, complementary slackness and sign conditions from the
/// reported primal point and multipliers.
pub fn kkt_residuals(p: &ConicProblem, rep: &SolveReport) -> Result<KktResiduals> {
    let lp = lower(p, false)?;
    let xs = lp.coordinates(p, &rep.assignment);
    let mut grad = lp.c.clone();
    for g in grad.iter_mut() {
        *g = -*g;
    }
    let mut complementarity = Vec::with_capacity(lp.blocks.len());
    let (mut pv, mut dv): (f64, f64) = (0.0, 0.0);
    for (i, b) in lp.blocks.iter().enumerate() {
        let z = lp.scaled_dual(i, &rep.duals[i]);
        let mut s = b.apply(&xs);
        s.axpy(1.0, &b.f0);
        complementarity.push(s.matmul(&z).frobenius_norm() / (s.frobenius_norm() * z.frobenius_norm()).max(1.0));
        pv = pv.max(violation(&s) / b.f0.frobenius_norm().max(1.0));
        dv = dv.max(violation(&z) / z.frobenius_norm().max(1.0));
        b.adjoint_into(&z, &mut grad);
    }
    let c_norm = lp.c.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    let stationarity = p
        .variables
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let o = lp.var_offset[i];
            let len = match v.shape {
                VarShape::Scalar => 1,
                VarShape::Hermitian(n) => n * n,
            };
            grad[o..o + len].iter().map(|g| g * g).sum::<f64>().sqrt() / c_norm
        })
        .collect();
    let kinds = p.blocks.iter().map(|b| b.kind).collect();
    Ok(KktResiduals { stationarity, complementarity, kinds, primal_violation: pv, dual_violation: dv })
}
