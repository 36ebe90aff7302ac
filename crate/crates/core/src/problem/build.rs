use crate::channel::{EstimatedCsi, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{norm, norm_sqr, CVector, ComplexMatrix, HermitianMatrix, C64};
use crate::receivers::{si_matrix, ReceiverBank};

use super::{
    b_matrix, c5a_lmi_named, c5b_lmi_named, ConicProblem, ConstraintKind, HermMap, LmiBlock, MatrixSum, ScalarAffine,
    VarId,
};

/// Everything a builder may read. The true primary-network channels are not
/// reachable from here: [`EstimatedCsi`] carries only estimates and radii.
#[derive(Clone, Debug)]
pub struct RobustInstance {
    pub csi: EstimatedCsi,
    pub receivers: ReceiverBank,
    pub cfg: SystemConfig,
}

impl RobustInstance {
    pub fn new(csi: EstimatedCsi, receivers: ReceiverBank, cfg: SystemConfig) -> Result<Self> {
        let n = cfg.n_t;
        let ok = csi.h.len() == cfg.k
            && csi.g.len() == cfg.j
            && csi.l_hat.len() == cfg.r
            && csi.h_si.rows() == n
            && csi.h.iter().chain(&csi.g).chain(&csi.l_hat).all(|v| v.len() == n)
            && receivers.v.len() == cfg.j;
        if !ok {
            return Err(Error::Dimension("channel estimates do not match the configuration".into()));
        }
        Ok(RobustInstance { csi, receivers, cfg })
    }
}

/// Variable ids of a problem produced by this module. Entries a given problem
/// does not have are empty / `None`.
#[derive(Clone, Debug, Default)]
pub struct Layout {
    /// Hermitian `W_k`, or scalar beam powers `p_k` for fixed directions.
    pub w: Vec<VarId>,
    pub p: Vec<VarId>,
    pub tau: Option<VarId>,
    pub delta: Vec<VarId>,
    pub alpha: Vec<Option<VarId>>,
    pub beta: Vec<Option<VarId>>,
    /// Unit-norm beam directions when `w` holds scalar powers.
    pub directions: Option<Vec<CVector>>,
}

/// Whether the downlink covariances are free or pinned to fixed directions.
#[derive(Clone, Debug)]
enum Downlink {
    Full(Vec<VarId>),
    Fixed { p: Vec<VarId>, dirs: Vec<HermitianMatrix> },
}

impl Downlink {
    /// Adds `map(Σ_k w_k W_k)` to the block.
    fn add(&self, block: &mut LmiBlock, weights: &[(usize, f64)], map: HermMap) {
        match self {
            Downlink::Full(w) => block.add_matrix_term(weights.iter().map(|(k, c)| (w[*k], *c)).collect(), map),
            Downlink::Fixed { p, dirs } => {
                for (k, c) in weights {
                    block.add_scalar(p[*k], map.apply(&dirs[*k]).scale(*c));
                }
            }
        }
    }
}

fn scalar_block(name: String, kind: ConstraintKind) -> LmiBlock {
    LmiBlock::new(name, kind, 1)
}

fn one(v: f64) -> HermitianMatrix {
    HermitianMatrix::from_real_diag(&[v])
}

fn column(v: &[C64]) -> ComplexMatrix {
    ComplexMatrix::column_vector(v)
}

/// Variable scales: a zero-forcing power-control point when one exists, single-user
/// minimum powers otherwise.
struct Units {
    w: Vec<f64>,
    p: Vec<f64>,
    tau: f64,
}

fn single_user_units(inst: &RobustInstance, v: &[CVector], g_dl: f64, g_ul: f64) -> (Vec<f64>, Vec<f64>) {
    let cfg = &inst.cfg;
    let w = inst.csi.h.iter().map(|h| (g_dl * cfg.sigma2_dl / norm_sqr(h)).clamp(1e-300, cfg.p_dl_max)).collect();
    let p = v
        .iter()
        .zip(&inst.csi.g)
        .map(|(vj, gj)| {
            let gain = crate::linalg::inner(gj, vj).norm_sqr().max(1e-300);
            (g_ul * cfg.sigma2_ul * norm_sqr(vj) / gain).clamp(1e-300, cfg.p_ul_max)
        })
        .collect();
    (w, p)
}

/// Fixed point of the SINR equations with ZF downlink directions and receivers `v`.
fn zf_power_point(inst: &RobustInstance, v: &[CVector], g_dl: f64, g_ul: f64, coupled: bool) -> Option<(Vec<CVector>, Vec<f64>, Vec<f64>)> {
    let cfg = &inst.cfg;
    let csi = &inst.csi;
    let dirs = zf_dl_directions(&csi.h).ok()?;
    let gain_dl: Vec<f64> = dirs.iter().zip(&csi.h).map(|(w, h)| crate::linalg::inner(h, w).norm_sqr()).collect();
    let gain_ul: Vec<Vec<f64>> =
        v.iter().map(|vj| csi.g.iter().map(|g| crate::linalg::inner(g, vj).norm_sqr()).collect()).collect();
    let si: Vec<Vec<f64>> = v
        .iter()
        .map(|vj| {
            let q = si_matrix(vj, &csi.h_si, cfg.rho);
            dirs.iter().map(|w| q.quad_form(w)).collect()
        })
        .collect();
    let (mut pw, mut q) = (vec![0.0; csi.k()], vec![0.0; csi.j()]);
    for _ in 0..500 {
        let next_pw: Vec<f64> = (0..csi.k())
            .map(|k| {
                let cci: f64 = if coupled { (0..csi.j()).map(|j| q[j] * csi.f[j][k].norm_sqr()).sum() } else { 0.0 };
                g_dl * (cfg.sigma2_dl + cci) / gain_dl[k]
            })
            .collect();
        let next_q: Vec<f64> = (0..csi.j())
            .map(|j| {
                let mut i = cfg.sigma2_ul * norm_sqr(&v[j]);
                i += (0..csi.j()).filter(|n| *n != j).map(|n| q[n] * gain_ul[j][n]).sum::<f64>();
                if coupled {
                    i += (0..csi.k()).map(|k| pw[k] * si[j][k]).sum::<f64>();
                }
                g_ul * i / gain_ul[j][j]
            })
            .collect();
        let change = next_pw.iter().zip(&pw).chain(next_q.iter().zip(&q)).map(|(a, b)| (a - b).abs() / a.abs().max(1e-300)).fold(0.0, f64::max);
        pw = next_pw;
        q = next_q;
        if pw.iter().chain(&q).any(|x| !x.is_finite()) || pw.iter().sum::<f64>() > 1e3 * cfg.p_dl_max {
            return None;
        }
        if change <= 1e-9 {
            return Some((dirs, pw, q));
        }
    }
    None
}

fn units(inst: &RobustInstance, v: &[CVector], g_dl: f64, g_ul: f64, coupled: bool) -> Units {
    let cfg = &inst.cfg;
    let csi = &inst.csi;
    let (mut w, mut p) = single_user_units(inst, v, g_dl, g_ul);
    let mut tau: f64 = 0.0;
    let point = zf_power_point(inst, v, g_dl, g_ul, coupled).or_else(|| zf_power_point(inst, v, g_dl, g_ul, false));
    match point {
        Some((dirs, pw, q)) => {
            for k in 0..w.len() {
                w[k] = w[k].max(pw[k]).min(cfg.p_dl_max);
            }
            for j in 0..p.len() {
                p[j] = p[j].max(q[j]).min(cfg.p_ul_max);
            }
            for r in 0..csi.r() {
                let dl: f64 =
                    dirs.iter().zip(&w).map(|(d, wk)| wk * (crate::linalg::inner(&csi.l_hat[r], d).norm() + csi.eps_dl[r]).powi(2)).sum();
                let ul: f64 = (0..csi.j()).map(|j| p[j] * (csi.e_hat[j][r].norm() + csi.eps_ul[j][r]).powi(2)).sum();
                tau = tau.max(dl + ul);
            }
        }
        None => {
            for r in 0..csi.r() {
                let dl = w.iter().sum::<f64>() * (csi.eps_dl[r].powi(2) + norm_sqr(&csi.l_hat[r]) / csi.n_t() as f64);
                let ul: f64 = (0..csi.j()).map(|j| p[j] * (csi.e_hat[j][r].norm() + csi.eps_ul[j][r]).powi(2)).sum();
                tau = tau.max(dl + ul);
            }
        }
    }
    if !(tau > 0.0 && tau.is_finite()) {
        tau = cfg.sigma2_dl;
    }
    Units { w, p, tau }
}

struct Builder<'a> {
    inst: &'a RobustInstance,
    prob: ConicProblem,
    layout: Layout,
}

impl<'a> Builder<'a> {
    fn new(inst: &'a RobustInstance, name: &str) -> Self {
        Builder { inst, prob: ConicProblem::new(name), layout: Layout::default() }
    }

    fn downlink_full(&mut self, units: &[f64]) -> Downlink {
        let n = self.inst.cfg.n_t;
        let ids: Vec<VarId> =
            units.iter().enumerate().map(|(k, u)| self.prob.add_hermitian_var(format!("W[{k}]"), n, *u)).collect();
        self.layout.w = ids.clone();
        Downlink::Full(ids)
    }

    fn downlink_fixed(&mut self, dirs: &[CVector], units: &[f64]) -> Downlink {
        let ids: Vec<VarId> =
            units.iter().enumerate().map(|(k, u)| self.prob.add_scalar_var(format!("p[{k}]"), *u)).collect();
        self.layout.w = ids.clone();
        self.layout.directions = Some(dirs.to_vec());
        Downlink::Fixed { p: ids, dirs: dirs.iter().map(|d| HermitianMatrix::outer(d)).collect() }
    }

    fn uplink_powers(&mut self, units: &[f64]) -> Vec<VarId> {
        let ids: Vec<VarId> =
            units.iter().enumerate().map(|(j, u)| self.prob.add_scalar_var(format!("P[{j}]"), *u)).collect();
        self.layout.p = ids.clone();
        ids
    }

    /// C1: `Tr(H_k W_k)/Γ − Σ_{m≠k} Tr(H_k W_m) − Σ_j P_j|f_jk|² − σ² ≥ 0`.
    fn c1(&mut self, dl: &Downlink, gamma: f64, cci: Option<&[VarId]>) {
        let csi = &self.inst.csi;
        for k in 0..csi.k() {
            let mut b = scalar_block(format!("C1[{k}]"), ConstraintKind::C1(k));
            b.constant = one(-self.inst.cfg.sigma2_dl);
            let weights: Vec<(usize, f64)> =
                (0..csi.k()).map(|m| (m, if m == k { 1.0 / gamma } else { -1.0 })).collect();
            dl.add(&mut b, &weights, HermMap::Congruence(vec![(1.0, column(&csi.h[k]))]));
            if let Some(p) = cci {
                for (j, pj) in p.iter().enumerate() {
                    b.add_scalar(*pj, one(-csi.f[j][k].norm_sqr()));
                }
            }
            self.prob.blocks.push(b);
        }
    }

    /// C2: `P_j Tr(V_j G_j)/Γ − Σ_{n≠j} P_n Tr(G_n V_j) − I_SI − σ²‖v_j‖² ≥ 0`.
    fn c2(&mut self, p: &[VarId], v: &[CVector], gamma: f64, si: Option<&Downlink>) {
        let csi = &self.inst.csi;
        for j in 0..csi.j() {
            let mut b = scalar_block(format!("C2[{j}]"), ConstraintKind::C2(j));
            b.constant = one(-self.inst.cfg.sigma2_ul * norm_sqr(&v[j]));
            for (n, pn) in p.iter().enumerate() {
                let gain = crate::linalg::inner(&csi.g[n], &v[j]).norm_sqr();
                let c = if n == j { gain / gamma } else { -gain };
                if c != 0.0 {
                    b.add_scalar(*pn, one(c));
                }
            }
            if let Some(dl) = si {
                let q = si_matrix(&v[j], &csi.h_si, self.inst.cfg.rho);
                let weights: Vec<(usize, f64)> = (0..csi.k()).map(|k| (k, -1.0)).collect();
                dl.add(&mut b, &weights, HermMap::Trace(q));
            }
            self.prob.blocks.push(b);
        }
    }

    /// C3: `P_DL − Σ_k Tr(W_k) ≥ 0`.
    fn c3(&mut self, dl: &Downlink) {
        let n = self.inst.cfg.n_t;
        let mut b = scalar_block("C3".into(), ConstraintKind::C3);
        b.constant = one(self.inst.cfg.p_dl_max);
        let weights: Vec<(usize, f64)> = (0..self.inst.cfg.k).map(|k| (k, -1.0)).collect();
        dl.add(&mut b, &weights, HermMap::Trace(HermitianMatrix::identity(n)));
        self.prob.blocks.push(b);
    }

    /// C4: `0 ≤ P_j ≤ P_max`.
    fn c4(&mut self, p: &[VarId]) {
        for (j, pj) in p.iter().enumerate() {
            let mut lo = scalar_block(format!("C4lo[{j}]"), ConstraintKind::C4Lower(j));
            lo.add_scalar(*pj, one(1.0));
            self.prob.blocks.push(lo);
            let mut hi = scalar_block(format!("C4hi[{j}]"), ConstraintKind::C4Upper(j));
            hi.constant = one(self.inst.cfg.p_ul_max);
            hi.add_scalar(*pj, one(-1.0));
            self.prob.blocks.push(hi);
        }
    }

    /// C6: `W_k ⪰ 0`, or `p_k ≥ 0` for fixed directions.
    fn c6(&mut self, dl: &Downlink) {
        let n = self.inst.cfg.n_t;
        match dl {
            Downlink::Full(w) => {
                for (k, wk) in w.iter().enumerate() {
                    let mut b = LmiBlock::new(format!("C6[{k}]"), ConstraintKind::C6(k), n);
                    b.add_matrix_term(vec![(*wk, 1.0)], HermMap::Congruence(vec![(1.0, ComplexMatrix::identity(n))]));
                    self.prob.blocks.push(b);
                }
            }
            Downlink::Fixed { p, .. } => {
                for (k, pk) in p.iter().enumerate() {
                    let mut b = scalar_block(format!("p[{k}]>=0"), ConstraintKind::BeamPower(k));
                    b.add_scalar(*pk, one(1.0));
                    self.prob.blocks.push(b);
                }
            }
        }
    }

    fn nonneg(&mut self, v: VarId, name: String, kind: ConstraintKind) {
        let mut b = scalar_block(name, kind);
        b.add_scalar(v, one(1.0));
        self.prob.blocks.push(b);
    }

    /// Downlink leakage constraint of receiver r bounded by `bound` (C̄5a or its ε = 0 form).
    fn c5a(&mut self, r: usize, dl: &Downlink, bound: &ScalarAffine, alpha_unit: f64) -> Option<VarId> {
        let csi = &self.inst.csi;
        let eps = csi.eps_dl[r];
        let l = &csi.l_hat[r];
        let k = csi.k();
        let weights: Vec<(usize, f64)> = (0..k).map(|m| (m, 1.0)).collect();
        if eps > 0.0 {
            let alpha = self.prob.add_scalar_var(format!("alpha[{r}]"), alpha_unit);
            let mut b = c5a_lmi_named(
                &format!("C5a[{r}]"),
                ConstraintKind::C5a(r),
                &MatrixSum { constant: None, vars: Vec::new() },
                l,
                eps,
                &ScalarAffine::var(alpha),
                bound,
            );
            dl.add(&mut b, &weights, HermMap::Congruence(vec![(-1.0, b_matrix(l))]));
            self.prob.blocks.push(b);
            Some(alpha)
        } else {
            let mut b = scalar_block(format!("C5a[{r}]"), ConstraintKind::C5aNominal(r));
            for (v, c) in &bound.terms {
                b.add_scalar(*v, one(*c));
            }
            b.constant = one(bound.constant);
            dl.add(&mut b, &weights.iter().map(|(m, _)| (*m, -1.0)).collect::<Vec<_>>(), HermMap::Congruence(vec![(1.0, column(l))]));
            self.prob.blocks.push(b);
            None
        }
    }

    /// Uplink leakage constraint `max Σ P_j|e_jr|² ≤ τ − δ_r` (C̄5b or its ε = 0 form).
    fn c5b(&mut self, r: usize, p: &[VarId], tau: VarId, delta: Option<VarId>, beta_unit: f64) -> Option<VarId> {
        let csi = &self.inst.csi;
        let e = csi.e_hat_vec(r);
        let eps = csi.eps_ul_stacked(r);
        let delta_expr = delta.map_or_else(ScalarAffine::default, ScalarAffine::var);
        if eps > 0.0 {
            let beta = self.prob.add_scalar_var(format!("beta[{r}]"), beta_unit);
            let pe: Vec<ScalarAffine> = p.iter().map(|v| ScalarAffine::var(*v)).collect();
            let b = c5b_lmi_named(
                &format!("C5b[{r}]"),
                ConstraintKind::C5b(r),
                &pe,
                &e,
                eps,
                &ScalarAffine::var(beta),
                &delta_expr,
                &ScalarAffine::var(tau),
            );
            self.prob.blocks.push(b);
            Some(beta)
        } else {
            let mut b = scalar_block(format!("C5b[{r}]"), ConstraintKind::C5bNominal(r));
            b.add_scalar(tau, one(1.0));
            if let Some(d) = delta {
                b.add_scalar(d, one(-1.0));
            }
            for (j, pj) in p.iter().enumerate() {
                b.add_scalar(*pj, one(-e[j].norm_sqr()));
            }
            self.prob.blocks.push(b);
            None
        }
    }

    fn finish(mut self) -> (ConicProblem, Layout) {
        debug_assert!(self.prob.check().is_ok(), "{:?}", self.prob.check());
        self.prob.blocks.shrink_to_fit();
        (self.prob, self.layout)
    }
}

fn build_joint(inst: &RobustInstance, name: &str, fixed_dirs: Option<&[CVector]>) -> (ConicProblem, Layout) {
    let cfg = &inst.cfg;
    let mut bld = Builder::new(inst, name);
    let Units { w: u_w, p: q, tau: t0 } = units(inst, &inst.receivers.v, cfg.gamma_dl, cfg.gamma_ul, true);
    let dl = match fixed_dirs {
        None => bld.downlink_full(&u_w),
        Some(d) => bld.downlink_fixed(d, &u_w),
    };
    let p = bld.uplink_powers(&q);
    let tau = bld.prob.add_scalar_var("tau", t0);
    bld.layout.tau = Some(tau);
    bld.prob.objective_scalar.push((tau, 1.0));

    bld.c1(&dl, cfg.gamma_dl, Some(&p));
    bld.c2(&p, &inst.receivers.v, cfg.gamma_ul, Some(&dl));
    bld.c3(&dl);
    bld.c4(&p);
    let alpha_unit: f64 = u_w.iter().sum();
    let beta_unit = q.iter().cloned().fold(0.0, f64::max).max(1e-300);
    for r in 0..cfg.r {
        let delta = bld.prob.add_scalar_var(format!("delta[{r}]"), t0);
        bld.layout.delta.push(delta);
        let alpha = bld.c5a(r, &dl, &ScalarAffine::var(delta), alpha_unit);
        let beta = bld.c5b(r, &p, tau, Some(delta), beta_unit);
        bld.layout.alpha.push(alpha);
        bld.layout.beta.push(beta);
    }
    bld.c6(&dl);
    for r in 0..cfg.r {
        let d = bld.layout.delta[r];
        bld.nonneg(d, format!("delta[{r}]>=0"), ConstraintKind::C8Delta(r));
        if let Some(a) = bld.layout.alpha[r] {
            bld.nonneg(a, format!("alpha[{r}]>=0"), ConstraintKind::C8Alpha(r));
        }
        if let Some(b) = bld.layout.beta[r] {
            bld.nonneg(b, format!("beta[{r}]>=0"), ConstraintKind::C8Beta(r));
        }
    }
    bld.finish()
}

/// The relaxed robust problem: minimise `τ` over `W_k ⪰ 0, P_j, τ, δ_r, α_r, β_r`.
pub fn build_relaxed(inst: &RobustInstance) -> (ConicProblem, Layout) {
    build_joint(inst, "relaxed", None)
}

/// Exact-CSI problem: `min τ` with `l̂ᴴ(Σ W_k)l̂ + Σ_j P_j|ê_jr|² ≤ τ` for every r.
pub fn build_nominal(inst: &RobustInstance) -> (ConicProblem, Layout) {
    let cfg = &inst.cfg;
    let csi = &inst.csi;
    let mut bld = Builder::new(inst, "nominal");
    let Units { w: u_w, p: q, tau: t0 } = units(inst, &inst.receivers.v, cfg.gamma_dl, cfg.gamma_ul, true);
    let dl = bld.downlink_full(&u_w);
    let p = bld.uplink_powers(&q);
    let tau = bld.prob.add_scalar_var("tau", t0);
    bld.layout.tau = Some(tau);
    bld.prob.objective_scalar.push((tau, 1.0));
    bld.c1(&dl, cfg.gamma_dl, Some(&p));
    bld.c2(&p, &inst.receivers.v, cfg.gamma_ul, Some(&dl));
    bld.c3(&dl);
    bld.c4(&p);
    for r in 0..cfg.r {
        let mut b = scalar_block(format!("C5[{r}]"), ConstraintKind::C5Nominal(r));
        b.add_scalar(tau, one(1.0));
        for (j, pj) in p.iter().enumerate() {
            b.add_scalar(*pj, one(-csi.e_hat[j][r].norm_sqr()));
        }
        let weights: Vec<(usize, f64)> = (0..cfg.k).map(|k| (k, -1.0)).collect();
        dl.add(&mut b, &weights, HermMap::Congruence(vec![(1.0, column(&csi.l_hat[r]))]));
        bld.prob.blocks.push(b);
    }
    bld.c6(&dl);
    bld.finish()
}

/// Optimal values of the scalar variables of the relaxed problem.
#[derive(Clone, Debug)]
pub struct FrozenScalars {
    pub p: Vec<f64>,
    pub tau: f64,
    pub delta: Vec<f64>,
    pub alpha: Vec<Option<f64>>,
    pub beta: Vec<Option<f64>>,
}

/// Rank-recovery problem: minimise `Σ_k Tr(W_k)` over the relaxed feasible set
/// with `P, τ, δ, α, β` fixed. Blocks that no longer involve `W` are dropped.
pub fn build_auxiliary(inst: &RobustInstance, fixed: &FrozenScalars) -> (ConicProblem, Layout) {
    let (relaxed, layout) = build_relaxed(inst);
    let mut values = Vec::new();
    for (v, x) in layout.p.iter().zip(&fixed.p) {
        values.push((*v, *x));
    }
    values.push((layout.tau.expect("relaxed problem has τ"), fixed.tau));
    for (v, x) in layout.delta.iter().zip(&fixed.delta) {
        values.push((*v, *x));
    }
    for (v, x) in layout.alpha.iter().zip(&fixed.alpha).chain(layout.beta.iter().zip(&fixed.beta)) {
        if let (Some(v), Some(x)) = (v, x) {
            values.push((*v, *x));
        }
    }
    let (mut aux, map) = relaxed.freeze(&values);
    aux.name = "auxiliary".into();
    let n = inst.cfg.n_t;
    let w: Vec<VarId> = layout.w.iter().map(|v| map[v.0].expect("W stays free")).collect();
    aux.objective_scalar.clear();
    aux.objective_matrix = w.iter().map(|v| (*v, HermitianMatrix::identity(n))).collect();
    (aux, Layout { w, ..Layout::default() })
}

/// Minimum-power problem over the relaxed feasible set with `τ` fixed at `tau`
/// and every other scalar free.
pub fn build_min_power(inst: &RobustInstance, tau: f64) -> (ConicProblem, Layout) {
    let (relaxed, layout) = build_relaxed(inst);
    min_trace_at(&relaxed, &layout, tau, "min-power")
}

/// `prob` with `τ` fixed and objective `Σ Tr(W_k)`; every other variable stays free.
pub fn min_trace_at(prob: &ConicProblem, layout: &Layout, tau: f64, name: &str) -> (ConicProblem, Layout) {
    let (mut prob, map) = prob.freeze(&[(layout.tau.expect("problem has τ"), tau)]);
    prob.name = name.into();
    let remap = |v: &VarId| map[v.0].expect("only τ is fixed");
    let out = Layout {
        w: layout.w.iter().map(remap).collect(),
        p: layout.p.iter().map(remap).collect(),
        tau: None,
        delta: layout.delta.iter().map(remap).collect(),
        alpha: layout.alpha.iter().map(|v| v.as_ref().map(remap)).collect(),
        beta: layout.beta.iter().map(|v| v.as_ref().map(remap)).collect(),
        directions: None,
    };
    prob.objective_scalar.clear();
    prob.objective_matrix =
        out.w.iter().map(|v| (*v, HermitianMatrix::identity(match prob.variables[v.0].shape {
            super::VarShape::Hermitian(n) => n,
            super::VarShape::Scalar => 1,
        }))).collect();
    (prob, out)
}

/// Unit-norm zero-forcing directions: `ŵ_k ∝` projection of `h_k` onto the null
/// space of the other users' channels.
pub fn zf_dl_directions(h: &[CVector]) -> Result<Vec<CVector>> {
    let k = h.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    let n = h[0].len();
    if k > n {
        return Err(Error::Degenerate(format!("{k} downlink users exceed {n} antennas")));
    }
    // columns of H (H^H H)^{-1} are orthogonal to every other h_m and have unit
    // inner product with their own h_k
    let hm = ComplexMatrix::from_columns(h);
    let gram = HermitianMatrix::from_dense(&hm.adjoint().matmul(&hm))?;
    let eig = crate::linalg::hermitian_eig(&gram)?;
    if !(eig.min() > 0.0) || eig.max() / eig.min() > 1e24 {
        return Err(Error::Degenerate("downlink channels are linearly dependent".into()));
    }
    let x = hm.matmul(&gram.to_dense().solve(&ComplexMatrix::identity(k))?);
    Ok((0..k)
        .map(|i| {
            let c = x.column(i);
            let nc = norm(&c);
            c.into_iter().map(|z| z / nc).collect()
        })
        .collect())
}

/// Baseline 1: the relaxed problem with `W_k = p_k ŵ_k ŵ_kᴴ` for ZF directions.
pub fn build_baseline1(inst: &RobustInstance) -> Result<(ConicProblem, Layout)> {
    let dirs = zf_dl_directions(&inst.csi.h)?;
    Ok(build_joint(inst, "baseline1", Some(&dirs)))
}

/// `(1 + Γ)² − 1`: the per-phase target that keeps the rate of a half-duplex slot.
pub fn hd_sinr_target(gamma: f64) -> f64 {
    gamma * (2.0 + gamma)
}

/// Half-duplex downlink phase: `min τ` with C̄5a (δ = τ), C1 at the HD target and no
/// co-channel interference, C3, C6.
pub fn build_baseline2_dl(inst: &RobustInstance) -> (ConicProblem, Layout) {
    let cfg = &inst.cfg;
    let gamma = hd_sinr_target(cfg.gamma_dl);
    let mut bld = Builder::new(inst, "baseline2-dl");
    let all = units(inst, &inst.receivers.v, gamma, hd_sinr_target(cfg.gamma_ul), false);
    let u_w = all.w;
    let t0 = all.tau;
    let dl = bld.downlink_full(&u_w);
    let tau = bld.prob.add_scalar_var("tau", t0);
    bld.layout.tau = Some(tau);
    bld.prob.objective_scalar.push((tau, 1.0));
    bld.c1(&dl, gamma, None);
    bld.c3(&dl);
    let alpha_unit: f64 = u_w.iter().sum();
    for r in 0..cfg.r {
        let a = bld.c5a(r, &dl, &ScalarAffine::var(tau), alpha_unit);
        bld.layout.alpha.push(a);
    }
    bld.c6(&dl);
    bld.nonneg(tau, "tau>=0".into(), ConstraintKind::TauNonneg);
    for r in 0..cfg.r {
        if let Some(a) = bld.layout.alpha[r] {
            bld.nonneg(a, format!("alpha[{r}]>=0"), ConstraintKind::C8Alpha(r));
        }
    }
    bld.finish()
}

/// Half-duplex uplink phase for fixed receivers `v`: `min τ` with C̄5b (δ = 0),
/// C2 at the HD target without self-interference, and C4.
pub fn build_baseline2_ul(inst: &RobustInstance, v: &[CVector]) -> (ConicProblem, Layout) {
    let cfg = &inst.cfg;
    let gamma = hd_sinr_target(cfg.gamma_ul);
    let mut bld = Builder::new(inst, "baseline2-ul");
    let all = units(inst, v, hd_sinr_target(cfg.gamma_dl), gamma, false);
    let q = all.p;
    let t0 = all.tau;
    let p = bld.uplink_powers(&q);
    let tau = bld.prob.add_scalar_var("tau", t0);
    bld.layout.tau = Some(tau);
    bld.prob.objective_scalar.push((tau, 1.0));
    bld.c2(&p, v, gamma, None);
    bld.c4(&p);
    let beta_unit = q.iter().cloned().fold(0.0, f64::max).max(1e-300);
    for r in 0..cfg.r {
        let b = bld.c5b(r, &p, tau, None, beta_unit);
        bld.layout.beta.push(b);
    }
    bld.nonneg(tau, "tau>=0".into(), ConstraintKind::TauNonneg);
    for r in 0..cfg.r {
        if let Some(b) = bld.layout.beta[r] {
            bld.nonneg(b, format!("beta[{r}]>=0"), ConstraintKind::C8Beta(r));
        }
    }
    bld.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_geometry, draw_realization};
    use crate::linalg::{c64, inner};
    use crate::receivers::zf_receivers;
    use rand::{Rng, SeedableRng};
    use rand_chacha::{ChaCha20Rng, ChaCha8Rng};

    fn instance(cfg: &SystemConfig, seed: u64) -> RobustInstance {
        let mut r = ChaCha20Rng::seed_from_u64(seed);
        let geo = draw_geometry(cfg, &mut r);
        let csi = draw_realization(cfg, &geo, &mut r).unwrap().estimated();
        let rx = zf_receivers(&csi.g).unwrap();
        RobustInstance::new(csi, rx, cfg.clone()).unwrap()
    }

    #[test]
    fn relaxed_block_census() {
        let cfg = SystemConfig { k: 3, j: 5, r: 2, n_t: 6, ..SystemConfig::default() };
        let (p, layout) = build_relaxed(&instance(&cfg, 1));
        assert!(p.check().is_ok());
        let dims = p.block_dims();
        assert_eq!(dims.get(&6), Some(&(3 + 2)));
        assert_eq!(dims.get(&7), Some(&2));
        assert_eq!(dims.get(&1), Some(&(3 + 5 + 1 + 10 + 6)));
        assert_eq!(p.variables.len(), 3 + 5 + 1 + 2 * 3);
        assert_eq!(layout.w.len(), 3);
        let count = |f: &dyn Fn(&ConstraintKind) -> bool| p.blocks.iter().filter(|b| f(&b.kind)).count();
        assert_eq!(count(&|k| matches!(k, ConstraintKind::C6(_))), 3);
        assert_eq!(count(&|k| matches!(k, ConstraintKind::C5a(_))), 2);
        assert_eq!(count(&|k| matches!(k, ConstraintKind::C5b(_))), 2);
    }

    #[test]
    fn zero_error_uses_nominal_constraints() {
        let cfg = SystemConfig { kappa2: 0.0, ..SystemConfig::default() };
        let (p, layout) = build_relaxed(&instance(&cfg, 2));
        assert!(layout.alpha.iter().chain(&layout.beta).all(Option::is_none));
        assert!(p.blocks.iter().all(|b| !matches!(b.kind, ConstraintKind::C5a(_) | ConstraintKind::C5b(_))));
        assert_eq!(p.blocks.iter().filter(|b| matches!(b.kind, ConstraintKind::C5aNominal(_))).count(), cfg.r);
    }

    #[test]
    fn auxiliary_keeps_only_blocks_with_w() {
        let cfg = SystemConfig::default();
        let inst = instance(&cfg, 3);
        let fixed = FrozenScalars {
            p: vec![1e-3; cfg.j],
            tau: 1e-9,
            delta: vec![1e-10; cfg.r],
            alpha: vec![Some(1e-3); cfg.r],
            beta: vec![Some(1e-3); cfg.r],
        };
        let (aux, layout) = build_auxiliary(&inst, &fixed);
        assert!(aux.check().is_ok());
        assert_eq!(aux.variables.len(), cfg.k);
        assert_eq!(layout.w.len(), cfg.k);
        // C1 ×K, C2 ×J, C3, C5a ×R, C6 ×K
        assert_eq!(aux.blocks.len(), cfg.k + cfg.j + 1 + cfg.r + cfg.k);
        assert_eq!(aux.objective_matrix.len(), cfg.k);
    }

    #[test]
    fn zf_directions_examples() {
        let e = |i: usize, n: usize| -> CVector { (0..n).map(|k| c64(if k == i { 2.0 } else { 0.0 }, 0.0)).collect() };
        let d = zf_dl_directions(&[e(0, 3), e(1, 3)]).unwrap();
        assert!((d[0][0] - c64(1.0, 0.0)).norm() < 1e-15 && (d[1][1] - c64(1.0, 0.0)).norm() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h1: CVector = (0..4).map(|_| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let d1 = zf_dl_directions(std::slice::from_ref(&h1)).unwrap();
        let nh = norm(&h1);
        for (a, b) in d1[0].iter().zip(&h1) {
            assert!((a - b / nh).norm() < 1e-14);
        }
        for _ in 0..100 {
            let h: Vec<CVector> =
                (0..3).map(|_| (0..6).map(|_| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()).collect();
            let d = zf_dl_directions(&h).unwrap();
            for k in 0..3 {
                assert!((norm(&d[k]) - 1.0).abs() < 1e-12);
                for m in 0..3 {
                    if m != k {
                        assert!(inner(&h[m], &d[k]).norm() <= 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn hd_target_values() {
        assert_eq!(hd_sinr_target(1.0), 3.0);
        let g = crate::channel::db_to_linear(6.0);
        let hd = hd_sinr_target(g);
        // (1 + 3.98107)² − 1 = 23.8111
        assert!((hd - 23.811_08).abs() < 1e-4);
        assert!((crate::channel::linear_to_db(hd) - 13.768).abs() < 0.005);
        for x in [1e-3, 1e-6, 1e-9] {
            assert!((hd_sinr_target(x) - (2.0 * x + x * x)).abs() <= 1e-15 * x.max(1e-300) + 1e-24);
        }
    }

    #[test]
    fn baseline2_phases_have_expected_shape() {
        let cfg = SystemConfig::default();
        let inst = instance(&cfg, 5);
        let (dl, dl_layout) = build_baseline2_dl(&inst);
        assert!(dl.check().is_ok());
        assert!(dl_layout.p.is_empty());
        assert!(dl.blocks.iter().all(|b| !matches!(b.kind, ConstraintKind::C2(_) | ConstraintKind::C5b(_))));
        let (ul, ul_layout) = build_baseline2_ul(&inst, &inst.receivers.v);
        assert!(ul.check().is_ok());
        assert!(ul_layout.w.is_empty());
        assert_eq!(ul.blocks.iter().filter(|b| matches!(b.kind, ConstraintKind::C5b(_))).count(), cfg.r);
    }
}
