//! Rank-one recovery of the relaxed downlink covariances and beamformer extraction.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, CVector, HermitianMatrix, C64};
use crate::problem::{
    build_auxiliary, build_min_power, build_relaxed, min_trace_at, Assignment, ConicProblem, ConstraintKind, FrozenScalars, Layout,
    RobustInstance, VarId,
};
use crate::solver::{solve, Settings, SolveReport};

/// Eigenvalue-ratio tolerance used to call a matrix rank one.
pub const RANK_TOL: f64 = 1e-6;

/// Scaled constraint violation accepted on the recovered point.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// One attempt at a rank-one point when the relaxed covariances are not rank one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    /// Auxiliary problem with every scalar frozen and `δ_r` enlarged by the factor `1 + η`.
    Frozen(f64),
    /// `min Σ Tr(W_k)` with `τ` fixed at `τ*(1 + η)` and the other scalars free.
    MinPower(f64),
}

/// Tried in order. The frozen set has no interior at the exact relaxed optimum,
/// hence the small enlargements.
pub const STAGES: [Stage; 6] = [
    Stage::Frozen(0.0),
    Stage::Frozen(1e-8),
    Stage::Frozen(1e-7),
    Stage::MinPower(1e-6),
    Stage::MinPower(1e-5),
    Stage::MinPower(1e-4),
];

/// Relative `τ` relaxations tried by [`rank_one_min_trace`].
pub const TAU_RELAXATIONS: [f64; 3] = [1e-6, 1e-5, 1e-4];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Direct,
    ViaAuxiliary,
}

#[derive(Clone, Debug)]
pub struct BeamformingSolution {
    pub w_cov: Vec<HermitianMatrix>,
    pub w: Vec<CVector>,
    pub p: Vec<f64>,
    pub tau: f64,
    pub delta: Vec<f64>,
    pub alpha: Vec<Option<f64>>,
    pub beta: Vec<Option<f64>>,
    pub provenance: Provenance,
    /// Which attempt produced the point when it came from an auxiliary solve.
    pub stage: Option<Stage>,
    pub relaxed: SolveReport,
    pub auxiliary: Option<SolveReport>,
    /// Smallest eigenvalue of `Π_k / ‖Π_k‖_F` per user, from the auxiliary duals.
    pub pi_min_eig: Option<Vec<f64>>,
    /// Largest scaled violation of any relaxed-problem block at the rank-one point.
    pub max_violation: f64,
}

impl BeamformingSolution {
    /// `Π_k ≻ 0` held on every user, or was not needed.
    pub fn pi_positive(&self) -> bool {
        self.pi_min_eig.as_ref().is_none_or(|v| v.iter().all(|e| *e > 0.0))
    }
}

/// Number of eigenvalues above `tol · λ_max`.
pub fn numeric_rank(w: &HermitianMatrix, tol: f64) -> usize {
    let Ok(eig) = hermitian_eig(w) else { return usize::MAX };
    let top = eig.max();
    if top <= 0.0 {
        return 0;
    }
    eig.values.iter().filter(|v| **v > tol * top).count()
}

/// `√λ_max · u_max`, with the largest-magnitude entry made real-positive.
pub fn extract_beamformer(w: &HermitianMatrix) -> Result<CVector> {
    let n = w.dim();
    let rank = numeric_rank(w, RANK_TOL);
    if rank == 0 {
        return Ok(vec![C64::new(0.0, 0.0); n]);
    }
    if rank > 1 {
        return Err(Error::RankViolation(format!("numeric rank {rank}")));
    }
    let eig = hermitian_eig(w)?;
    let mut u = eig.vector(n - 1);
    let pivot = u.iter().cloned().max_by(|a, b| a.norm().total_cmp(&b.norm())).expect("non-empty");
    let phase = pivot.conj() / pivot.norm();
    let s = eig.max().sqrt();
    for x in u.iter_mut() {
        *x *= phase * s;
    }
    Ok(u)
}

fn frozen(report: &SolveReport, layout: &Layout) -> FrozenScalars {
    let a = &report.assignment;
    FrozenScalars {
        p: layout.p.iter().map(|v| a.scalar(*v)).collect(),
        tau: a.scalar(layout.tau.expect("relaxed problem has τ")),
        delta: layout.delta.iter().map(|v| a.scalar(*v)).collect(),
        alpha: layout.alpha.iter().map(|v| v.map(|v| a.scalar(v))).collect(),
        beta: layout.beta.iter().map(|v| v.map(|v| a.scalar(v))).collect(),
    }
}

/// Largest violation `−λ_min(F_b)` over the blocks, relative to the size of the
/// terms that make up each block.
pub fn max_block_violation(p: &ConicProblem, a: &Assignment) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for b in &p.blocks {
        let value = b.evaluate(a);
        let mut scale = b.constant.frobenius_norm();
        for (v, c) in &b.scalar_terms {
            scale += a.scalar(*v).abs() * c.frobenius_norm();
        }
        for t in &b.matrix_terms {
            for (v, c) in &t.vars {
                scale += c.abs() * t.map.apply(a.matrix(*v)).frobenius_norm();
            }
        }
        let min = hermitian_eig(&value)?.min();
        if min < 0.0 {
            worst = worst.max(-min / scale.max(f64::MIN_POSITIVE));
        }
    }
    Ok(worst)
}

/// `Π_k = I − Σ_b A_b*(Z_b)|_{W_k}` over every block except `W_k ⪰ 0` and the
/// downlink SINR constraint of user `k`.
fn pi_matrices(aux: &ConicProblem, layout: &Layout, duals: &[HermitianMatrix]) -> Vec<HermitianMatrix> {
    layout
        .w
        .iter()
        .enumerate()
        .map(|(k, wk)| {
            let n = aux.variables[wk.0].shape;
            let mut pi = match n {
                crate::problem::VarShape::Hermitian(n) => HermitianMatrix::identity(n),
                crate::problem::VarShape::Scalar => HermitianMatrix::identity(1),
            };
            for (b, z) in aux.blocks.iter().zip(duals) {
                if matches!(b.kind, ConstraintKind::C6(i) | ConstraintKind::C1(i) if i == k) {
                    continue;
                }
                for t in &b.matrix_terms {
                    for (v, c) in &t.vars {
                        if v == wk {
                            pi.axpy(-c, &t.map.adjoint(z));
                        }
                    }
                }
            }
            pi
        })
        .collect()
}

fn pi_min_eigs(pis: &[HermitianMatrix]) -> Result<Vec<f64>> {
    pis.iter().map(|p| Ok(hermitian_eig(p)?.min() / p.frobenius_norm().max(f64::MIN_POSITIVE))).collect()
}

/// Rank-one solution from an optimal relaxed solve: direct extraction when every
/// `W_k` is already rank one, otherwise through the [`STAGES`]. A candidate is
/// accepted only if its extracted rank-one point satisfies every relaxed
/// constraint within [`FEASIBILITY_TOL`], with `τ = τ*` or, for
/// [`Stage::MinPower`], `τ = τ*(1 + η)`.
pub fn recover(relaxed: &SolveReport, inst: &RobustInstance, settings: &Settings) -> Result<BeamformingSolution> {
    recover_with(relaxed, inst, settings, false)
}

/// [`recover`], optionally solving the auxiliary problem even when extraction
/// would already succeed.
pub fn recover_with(
    relaxed: &SolveReport,
    inst: &RobustInstance,
    settings: &Settings,
    force_auxiliary: bool,
) -> Result<BeamformingSolution> {
    if !relaxed.is_optimal() {
        return Err(Error::Solver(format!("relaxed solve not optimal: {}", relaxed.message)));
    }
    let (problem, layout) = build_relaxed(inst);
    let fixed = frozen(relaxed, &layout);
    let covs: Vec<HermitianMatrix> = layout.w.iter().map(|v| relaxed.assignment.matrix(*v).clone()).collect();

    let direct = !force_auxiliary && covs.iter().all(|w| numeric_rank(w, RANK_TOL) <= 1);
    if direct {
        let w = covs.iter().map(extract_beamformer).collect::<Result<Vec<_>>>()?;
        let point = with_covariances(&relaxed.assignment, &layout.w, &w);
        let max_violation = max_block_violation(&problem, &point)?;
        if max_violation > FEASIBILITY_TOL {
            return Err(Error::RankViolation(format!("rank-one point violates the constraints by {max_violation:.3e}")));
        }
        return Ok(BeamformingSolution {
            w_cov: w.iter().map(|x| HermitianMatrix::outer(x)).collect(),
            w,
            p: fixed.p,
            tau: fixed.tau,
            delta: fixed.delta,
            alpha: fixed.alpha,
            beta: fixed.beta,
            provenance: Provenance::Direct,
            stage: None,
            relaxed: relaxed.clone(),
            auxiliary: None,
            pi_min_eig: None,
            max_violation,
        });
    }

    let mut last = String::new();
    for stage in STAGES {
        let (aux, aux_layout) = match stage {
            Stage::Frozen(eta) => {
                let mut f = fixed.clone();
                for d in f.delta.iter_mut() {
                    *d *= 1.0 + eta;
                }
                build_auxiliary(inst, &f)
            }
            Stage::MinPower(eta) => build_min_power(inst, fixed.tau * (1.0 + eta)),
        };
        let rep = solve(&aux, settings)?;
        let a = &rep.assignment;
        let covs: Vec<HermitianMatrix> = aux_layout.w.iter().map(|v| a.matrix(*v).clone()).collect();
        if !covs.iter().all(|w| numeric_rank(w, RANK_TOL) <= 1) {
            last = format!("{stage:?}: {:?}, rank above one", rep.status);
            continue;
        }
        let w = covs.iter().map(extract_beamformer).collect::<Result<Vec<_>>>()?;
        let mut point = with_covariances(&relaxed.assignment, &layout.w, &w);
        let mut sol_scalars = fixed.clone();
        if let Stage::MinPower(eta) = stage {
            sol_scalars.tau = fixed.tau * (1.0 + eta);
            let pick = |v: VarId| a.scalar(v);
            sol_scalars.p = aux_layout.p.iter().map(|v| pick(*v)).collect();
            sol_scalars.delta = aux_layout.delta.iter().map(|v| pick(*v)).collect();
            sol_scalars.alpha = aux_layout.alpha.iter().map(|v| v.map(pick)).collect();
            sol_scalars.beta = aux_layout.beta.iter().map(|v| v.map(pick)).collect();
            set_scalars(&mut point, &layout, &sol_scalars);
        }
        let max_violation = max_block_violation(&problem, &point)?;
        if max_violation > FEASIBILITY_TOL {
            last = format!("{stage:?}: {:?}, violation {max_violation:.3e}", rep.status);
            continue;
        }
        let pis = match rep.is_optimal() {
            true => Some(pi_min_eigs(&pi_matrices(&aux, &aux_layout, &rep.duals))?),
            false => None,
        };
        return Ok(BeamformingSolution {
            w_cov: w.iter().map(|x| HermitianMatrix::outer(x)).collect(),
            w,
            p: sol_scalars.p,
            tau: sol_scalars.tau,
            delta: sol_scalars.delta,
            alpha: sol_scalars.alpha,
            beta: sol_scalars.beta,
            provenance: Provenance::ViaAuxiliary,
            stage: Some(stage),
            relaxed: relaxed.clone(),
            auxiliary: Some(rep),
            pi_min_eig: pis,
            max_violation,
        });
    }
    Err(Error::Solver(format!("no rank-one point recovered; last attempt {last}")))
}

/// Rank-one beamformers for a `min τ` problem other than the joint one: the
/// covariances as solved when already rank one, otherwise from `min Σ Tr(W_k)`
/// with `τ` fixed at `τ*(1 + η)`. Returns the beamformers and a point of `prob`
/// that satisfies every block within [`FEASIBILITY_TOL`].
pub fn rank_one_min_trace(
    prob: &ConicProblem,
    layout: &Layout,
    rep: &SolveReport,
    settings: &Settings,
) -> Result<(Vec<CVector>, Assignment)> {
    let ranks_ok = |a: &Assignment| layout.w.iter().all(|v| numeric_rank(a.matrix(*v), RANK_TOL) <= 1);
    let extract = |a: &Assignment| layout.w.iter().map(|v| extract_beamformer(a.matrix(*v))).collect::<Result<Vec<_>>>();
    let mut last = String::new();
    if ranks_ok(&rep.assignment) {
        let w = extract(&rep.assignment)?;
        let point = with_covariances(&rep.assignment, &layout.w, &w);
        let v = max_block_violation(prob, &point)?;
        if v <= FEASIBILITY_TOL {
            return Ok((w, point));
        }
        last = format!("direct: violation {v:.3e}");
    }
    let tau_id = layout.tau.ok_or_else(|| Error::InvalidConfig("problem has no τ".into()))?;
    let tau = rep.assignment.scalar(tau_id);
    for eta in TAU_RELAXATIONS {
        let (aux, aux_layout) = min_trace_at(prob, layout, tau * (1.0 + eta), "min-trace");
        let a = solve(&aux, settings)?;
        let x = &a.assignment;
        if !aux_layout.w.iter().all(|v| numeric_rank(x.matrix(*v), RANK_TOL) <= 1) {
            last = format!("η = {eta:e}: {:?}, rank above one", a.status);
            continue;
        }
        let w = aux_layout.w.iter().map(|v| extract_beamformer(x.matrix(*v))).collect::<Result<Vec<_>>>()?;
        let mut point = with_covariances(&rep.assignment, &layout.w, &w);
        let pick = |v: VarId| x.scalar(v);
        let f = FrozenScalars {
            p: aux_layout.p.iter().map(|v| pick(*v)).collect(),
            tau: tau * (1.0 + eta),
            delta: aux_layout.delta.iter().map(|v| pick(*v)).collect(),
            alpha: aux_layout.alpha.iter().map(|v| v.map(pick)).collect(),
            beta: aux_layout.beta.iter().map(|v| v.map(pick)).collect(),
        };
        set_scalars(&mut point, layout, &f);
        let v = max_block_violation(prob, &point)?;
        if v <= FEASIBILITY_TOL {
            return Ok((w, point));
        }
        last = format!("η = {eta:e}: {:?}, violation {v:.3e}", a.status);
    }
    Err(Error::Solver(format!("no rank-one point recovered; last attempt {last}")))
}

fn with_covariances(a: &Assignment, ids: &[VarId], w: &[CVector]) -> Assignment {
    let mut out = a.clone();
    for (v, x) in ids.iter().zip(w) {
        out.set_matrix(*v, HermitianMatrix::outer(x));
    }
    out
}

fn set_scalars(a: &mut Assignment, layout: &Layout, f: &FrozenScalars) {
    if let Some(v) = layout.tau {
        a.set_scalar(v, f.tau);
    }
    for (v, x) in layout.p.iter().zip(&f.p).chain(layout.delta.iter().zip(&f.delta)) {
        a.set_scalar(*v, *x);
    }
    for (v, x) in layout.alpha.iter().zip(&f.alpha).chain(layout.beta.iter().zip(&f.beta)) {
        if let (Some(v), Some(x)) = (v, x) {
            a.set_scalar(*v, *x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, norm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(n: usize, rng: &mut impl Rng) -> CVector {
        (0..n).map(|_| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn rank_of_simple_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_vec(5, &mut rng);
        assert_eq!(numeric_rank(&HermitianMatrix::outer(&v), RANK_TOL), 1);
        assert_eq!(numeric_rank(&HermitianMatrix::zeros(5), RANK_TOL), 0);
    }

    #[test]
    fn tiny_second_component_is_rank_one() {
        let v = vec![c64(1.0, 0.0), c64(0.0, 1.0), c64(0.5, 0.0)];
        let u = vec![c64(0.0, 1.0), c64(1.0, 0.0), c64(0.0, 0.0)];
        let mut w = HermitianMatrix::outer(&v);
        w.axpy(1e-12, &HermitianMatrix::outer(&u));
        assert_eq!(numeric_rank(&w, 1e-6), 1);
        w.axpy(1e-3, &HermitianMatrix::outer(&u));
        assert_eq!(numeric_rank(&w, 1e-6), 2);
    }

    #[test]
    fn extract_scaled_basis_vector() {
        let mut w = HermitianMatrix::zeros(3);
        w.set(0, 0, c64(4.0, 0.0));
        let x = extract_beamformer(&w).unwrap();
        assert!((x[0] - c64(2.0, 0.0)).norm() < 1e-12);
        assert!(x[1].norm() < 1e-12 && x[2].norm() < 1e-12);
    }

    #[test]
    fn extract_zero() {
        let x = extract_beamformer(&HermitianMatrix::zeros(4)).unwrap();
        assert!(x.iter().all(|c| *c == c64(0.0, 0.0)));
    }

    #[test]
    fn extract_reconstructs_random_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let v = random_vec(6, &mut rng);
            let w = HermitianMatrix::outer(&v);
            let x = extract_beamformer(&w).unwrap();
            assert!(HermitianMatrix::outer(&x).sub(&w).frobenius_norm() <= 1e-10 * w.frobenius_norm().max(1.0));
            let pivot = x.iter().cloned().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
            assert!(pivot.im.abs() < 1e-12 && pivot.re > 0.0);
            assert!((norm(&x) - norm(&v)).abs() < 1e-10);
        }
    }

    #[test]
    fn extract_rejects_rank_two() {
        let mut w = HermitianMatrix::identity(3);
        w.set(2, 2, c64(0.0, 0.0));
        assert!(matches!(extract_beamformer(&w), Err(Error::RankViolation(_))));
    }
}
