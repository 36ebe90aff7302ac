//! Conic programs over scalar and Hermitian-PSD variables.
//!
//! A [`ConicProblem`] minimises a linear objective subject to a list of
//! [`LmiBlock`]s, each an affine Hermitian-valued map of the variables that must be
//! positive semidefinite. Scalar inequalities are `1 × 1` blocks.

mod build;

pub use build::*;

use std::collections::BTreeMap;

use crate::linalg::{C64, ComplexMatrix, HermitianMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarShape {
    Scalar,
    /// `N × N` Hermitian matrix.
    Hermitian(usize),
}

#[derive(Clone, Debug)]
pub struct Variable {
    pub name: String,
    pub shape: VarShape,
    /// Typical magnitude, used only to condition the solver.
    pub unit: f64,
}

/// Linear map from an `N × N` Hermitian variable into a block.
#[derive(Clone, Debug)]
pub enum HermMap {
    /// `X ↦ Σ_p s_p B_pᴴ X B_p` with every `B_p` of size `N × d`.
    Congruence(Vec<(f64, ComplexMatrix)>),
    /// `X ↦ Tr(Q X)` into a `1 × 1` block.
    Trace(HermitianMatrix),
}

impl HermMap {
    pub fn out_dim(&self) -> usize {
        match self {
            HermMap::Congruence(pieces) => pieces.first().map_or(0, |p| p.1.cols()),
            HermMap::Trace(_) => 1,
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            HermMap::Congruence(pieces) => pieces.first().map_or(0, |p| p.1.rows()),
            HermMap::Trace(q) => q.dim(),
        }
    }

    pub fn apply(&self, x: &HermitianMatrix) -> HermitianMatrix {
        match self {
            HermMap::Congruence(pieces) => {
                let mut out = HermitianMatrix::zeros(self.out_dim());
                for (s, b) in pieces {
                    out.axpy(*s, &x.congruence(b));
                }
                out
            }
            HermMap::Trace(q) => HermitianMatrix::from_real_diag(&[q.trace_product(x)]),
        }
    }

    /// Adjoint with respect to `⟨A, B⟩ = Re Tr(A B)`: returns an `N × N` matrix.
    pub fn adjoint(&self, z: &HermitianMatrix) -> HermitianMatrix {
        match self {
            HermMap::Congruence(pieces) => {
                let mut out = HermitianMatrix::zeros(self.in_dim());
                for (s, b) in pieces {
                    out.axpy(*s, &z.congruence(&b.adjoint()));
                }
                out
            }
            HermMap::Trace(q) => q.scale(z.get(0, 0).re),
        }
    }
}

/// Several Hermitian variables entering a block through the same map.
#[derive(Clone, Debug)]
pub struct MatrixTerm {
    pub vars: Vec<(VarId, f64)>,
    pub map: HermMap,
}

/// Which constraint of the model a block encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintKind {
    /// downlink SINR of user k
    C1(usize),
    /// uplink SINR of user j
    C2(usize),
    /// downlink power budget
    C3,
    /// `P_j ≥ 0`
    C4Lower(usize),
    /// `P_j ≤ P_max`
    C4Upper(usize),
    /// S-procedure LMI for the downlink leakage of receiver r
    C5a(usize),
    /// S-procedure LMI for the uplink leakage of receiver r
    C5b(usize),
    /// exact-CSI downlink leakage bound of receiver r
    C5aNominal(usize),
    /// exact-CSI uplink leakage bound of receiver r
    C5bNominal(usize),
    /// total leakage bound of receiver r without a split
    C5Nominal(usize),
    /// `W_k ⪰ 0`
    C6(usize),
    C8Delta(usize),
    C8Alpha(usize),
    C8Beta(usize),
    /// `τ ≥ 0` for problems without `δ`
    TauNonneg,
    /// `p_k ≥ 0` for a fixed-direction beam power
    BeamPower(usize),
    Other,
}

#[derive(Clone, Debug)]
pub struct LmiBlock {
    pub name: String,
    pub kind: ConstraintKind,
    pub dim: usize,
    pub constant: HermitianMatrix,
    pub scalar_terms: Vec<(VarId, HermitianMatrix)>,
    pub matrix_terms: Vec<MatrixTerm>,
}

impl LmiBlock {
    pub fn new(name: impl Into<String>, kind: ConstraintKind, dim: usize) -> Self {
        LmiBlock {
            name: name.into(),
            kind,
            dim,
            constant: HermitianMatrix::zeros(dim),
            scalar_terms: Vec::new(),
            matrix_terms: Vec::new(),
        }
    }

    /// Adds `coeff · x_v`, merging with an existing term for `v`.
    pub fn add_scalar(&mut self, v: VarId, coeff: HermitianMatrix) {
        assert_eq!(coeff.dim(), self.dim, "scalar coefficient dimension");
        if let Some(t) = self.scalar_terms.iter_mut().find(|t| t.0 == v) {
            t.1 = t.1.add(&coeff);
        } else {
            self.scalar_terms.push((v, coeff));
        }
    }

    pub fn add_constant(&mut self, m: &HermitianMatrix) {
        self.constant = self.constant.add(m);
    }

    pub fn add_matrix_term(&mut self, vars: Vec<(VarId, f64)>, map: HermMap) {
        assert_eq!(map.out_dim(), self.dim, "matrix term dimension");
        if !vars.is_empty() {
            self.matrix_terms.push(MatrixTerm { vars, map });
        }
    }

    pub fn is_constant(&self) -> bool {
        self.scalar_terms.is_empty() && self.matrix_terms.iter().all(|t| t.vars.is_empty())
    }

    pub fn uses(&self, v: VarId) -> bool {
        self.scalar_terms.iter().any(|t| t.0 == v) || self.matrix_terms.iter().any(|t| t.vars.iter().any(|x| x.0 == v))
    }

    /// Block value at the given assignment.
    pub fn evaluate(&self, a: &Assignment) -> HermitianMatrix {
        let mut out = self.constant.clone();
        for (v, c) in &self.scalar_terms {
            out.axpy(a.scalar(*v), c);
        }
        for t in &self.matrix_terms {
            let mut x = HermitianMatrix::zeros(t.map.in_dim());
            for (v, w) in &t.vars {
                x.axpy(*w, a.matrix(*v));
            }
            out = out.add(&t.map.apply(&x));
        }
        out
    }
}

/// Value of every variable of a problem, indexed by [`VarId`].
#[derive(Clone, Debug)]
pub struct Assignment {
    pub values: Vec<VarValue>,
}

#[derive(Clone, Debug)]
pub enum VarValue {
    Scalar(f64),
    Hermitian(HermitianMatrix),
}

impl Assignment {
    pub fn zeros(p: &ConicProblem) -> Self {
        Assignment {
            values: p
                .variables
                .iter()
                .map(|v| match v.shape {
                    VarShape::Scalar => VarValue::Scalar(0.0),
                    VarShape::Hermitian(n) => VarValue::Hermitian(HermitianMatrix::zeros(n)),
                })
                .collect(),
        }
    }

    pub fn scalar(&self, v: VarId) -> f64 {
        match &self.values[v.0] {
            VarValue::Scalar(x) => *x,
            VarValue::Hermitian(_) => panic!("variable {} is a matrix", v.0),
        }
    }

    pub fn matrix(&self, v: VarId) -> &HermitianMatrix {
        match &self.values[v.0] {
            VarValue::Hermitian(m) => m,
            VarValue::Scalar(_) => panic!("variable {} is a scalar", v.0),
        }
    }

    pub fn set_scalar(&mut self, v: VarId, x: f64) {
        self.values[v.0] = VarValue::Scalar(x);
    }

    pub fn set_matrix(&mut self, v: VarId, m: HermitianMatrix) {
        self.values[v.0] = VarValue::Hermitian(m);
    }
}

#[derive(Clone, Debug, Default)]
pub struct ConicProblem {
    pub name: String,
    pub variables: Vec<Variable>,
    /// `Σ c_v x_v`
    pub objective_scalar: Vec<(VarId, f64)>,
    /// `Σ Tr(C_v X_v)`
    pub objective_matrix: Vec<(VarId, HermitianMatrix)>,
    pub blocks: Vec<LmiBlock>,
}

impl ConicProblem {
    pub fn new(name: impl Into<String>) -> Self {
        ConicProblem { name: name.into(), ..Default::default() }
    }

    pub fn add_scalar_var(&mut self, name: impl Into<String>, unit: f64) -> VarId {
        self.variables.push(Variable { name: name.into(), shape: VarShape::Scalar, unit });
        VarId(self.variables.len() - 1)
    }

    pub fn add_hermitian_var(&mut self, name: impl Into<String>, n: usize, unit: f64) -> VarId {
        self.variables.push(Variable { name: name.into(), shape: VarShape::Hermitian(n), unit });
        VarId(self.variables.len() - 1)
    }

    pub fn var(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn block(&self, kind: ConstraintKind) -> Option<(usize, &LmiBlock)> {
        self.blocks.iter().enumerate().find(|(_, b)| b.kind == kind)
    }

    pub fn objective_value(&self, a: &Assignment) -> f64 {
        let mut v = 0.0;
        for (id, c) in &self.objective_scalar {
            v += c * a.scalar(*id);
        }
        for (id, c) in &self.objective_matrix {
            v += c.trace_product(a.matrix(*id));
        }
        v
    }

    /// Number of `k × k` blocks for each `k`.
    pub fn block_dims(&self) -> BTreeMap<usize, usize> {
        let mut m = BTreeMap::new();
        for b in &self.blocks {
            *m.entry(b.dim).or_insert(0) += 1;
        }
        m
    }

    /// Structural sanity: dimensions agree and every referenced variable exists
    /// with the right shape.
    pub fn check(&self) -> Result<(), String> {
        let nvar = self.variables.len();
        let shape = |v: VarId| self.variables.get(v.0).map(|x| x.shape);
        for (v, _) in &self.objective_scalar {
            if shape(*v) != Some(VarShape::Scalar) {
                return Err(format!("objective references non-scalar variable {}", v.0));
            }
        }
        for (v, c) in &self.objective_matrix {
            if shape(*v) != Some(VarShape::Hermitian(c.dim())) {
                return Err(format!("objective matrix term on variable {} has the wrong shape", v.0));
            }
        }
        for b in &self.blocks {
            if b.constant.dim() != b.dim {
                return Err(format!("block {}: constant has dimension {}", b.name, b.constant.dim()));
            }
            for (v, c) in &b.scalar_terms {
                if v.0 >= nvar || shape(*v) != Some(VarShape::Scalar) || c.dim() != b.dim {
                    return Err(format!("block {}: bad scalar term on variable {}", b.name, v.0));
                }
            }
            for t in &b.matrix_terms {
                if t.map.out_dim() != b.dim {
                    return Err(format!("block {}: matrix term maps into dimension {}", b.name, t.map.out_dim()));
                }
                for (v, _) in &t.vars {
                    if shape(*v) != Some(VarShape::Hermitian(t.map.in_dim())) {
                        return Err(format!("block {}: matrix term on variable {} has the wrong shape", b.name, v.0));
                    }
                }
            }
        }
        Ok(())
    }

    /// Replaces the given scalar variables by constants. Blocks left without any
    /// variable are dropped, and remaining variables keep their relative order.
    /// Returns the new problem and the old → new id map.
    pub fn freeze(&self, fixed: &[(VarId, f64)]) -> (ConicProblem, Vec<Option<VarId>>) {
        let value = |v: VarId| fixed.iter().find(|f| f.0 == v).map(|f| f.1);
        let mut map = Vec::with_capacity(self.variables.len());
        let mut out = ConicProblem::new(format!("{} (frozen)", self.name));
        for (i, var) in self.variables.iter().enumerate() {
            if value(VarId(i)).is_some() {
                assert_eq!(var.shape, VarShape::Scalar, "only scalar variables can be frozen");
                map.push(None);
            } else {
                out.variables.push(var.clone());
                map.push(Some(VarId(out.variables.len() - 1)));
            }
        }
        for (v, c) in &self.objective_scalar {
            if let Some(n) = map[v.0] {
                out.objective_scalar.push((n, *c));
            }
        }
        for (v, c) in &self.objective_matrix {
            out.objective_matrix.push((map[v.0].expect("matrix variables are never frozen"), c.clone()));
        }
        for b in &self.blocks {
            let mut nb = LmiBlock::new(b.name.clone(), b.kind, b.dim);
            nb.constant = b.constant.clone();
            for (v, c) in &b.scalar_terms {
                match (value(*v), map[v.0]) {
                    (Some(x), _) => nb.constant.axpy(x, c),
                    (None, Some(n)) => nb.scalar_terms.push((n, c.clone())),
                    (None, None) => unreachable!(),
                }
            }
            for t in &b.matrix_terms {
                nb.matrix_terms.push(MatrixTerm {
                    vars: t.vars.iter().map(|(v, w)| (map[v.0].expect("matrix variable"), *w)).collect(),
                    map: t.map.clone(),
                });
            }
            if !nb.is_constant() {
                out.blocks.push(nb);
            }
        }
        (out, map)
    }
}

/// `ℓ ↦ Σ c_v x_v + c₀` over scalar variables.
#[derive(Clone, Debug, Default)]
pub struct ScalarAffine {
    pub constant: f64,
    pub terms: Vec<(VarId, f64)>,
}

impl ScalarAffine {
    pub fn var(v: VarId) -> Self {
        ScalarAffine { constant: 0.0, terms: vec![(v, 1.0)] }
    }

    pub fn constant(c: f64) -> Self {
        ScalarAffine { constant: c, terms: Vec::new() }
    }

    pub fn evaluate(&self, a: &Assignment) -> f64 {
        self.constant + self.terms.iter().map(|(v, c)| c * a.scalar(*v)).sum::<f64>()
    }
}

/// `Σ w_k W_k + C` over Hermitian variables.
#[derive(Clone, Debug)]
pub struct MatrixSum {
    pub constant: Option<HermitianMatrix>,
    pub vars: Vec<(VarId, f64)>,
}

impl MatrixSum {
    pub fn vars(vars: &[VarId]) -> Self {
        MatrixSum { constant: None, vars: vars.iter().map(|v| (*v, 1.0)).collect() }
    }

    pub fn constant(m: HermitianMatrix) -> Self {
        MatrixSum { constant: Some(m), vars: Vec::new() }
    }
}

/// `B = [I_N  l̂]`.
pub fn b_matrix(l_hat: &[C64]) -> ComplexMatrix {
    let n = l_hat.len();
    ComplexMatrix::from_fn(n, n + 1, |i, j| {
        if j == n {
            l_hat[i]
        } else if i == j {
            C64::new(1.0, 0.0)
        } else {
            C64::default()
        }
    })
}

fn corner(dim: usize, v: f64) -> HermitianMatrix {
    let mut m = HermitianMatrix::zeros(dim);
    m.set(dim - 1, dim - 1, C64::new(v, 0.0));
    m
}

/// `diag(1, …, 1, −ε²)`
fn multiplier_pattern(dim: usize, eps: f64) -> HermitianMatrix {
    let mut d = vec![1.0; dim];
    d[dim - 1] = -eps * eps;
    HermitianMatrix::from_real_diag(&d)
}

fn add_affine(block: &mut LmiBlock, expr: &ScalarAffine, pattern: &HermitianMatrix) {
    if expr.constant != 0.0 {
        block.constant.axpy(expr.constant, pattern);
    }
    for (v, c) in &expr.terms {
        block.add_scalar(*v, pattern.scale(*c));
    }
}

/// `[[αI, 0], [0, −αε² + δ]] − Bᴴ (Σ_k W_k) B` with `B = [I  l̂]`.
pub fn c5a_lmi(w_sum: &MatrixSum, l_hat: &[C64], eps: f64, alpha: &ScalarAffine, delta: &ScalarAffine) -> LmiBlock {
    c5a_lmi_named("C5a", ConstraintKind::Other, w_sum, l_hat, eps, alpha, delta)
}

pub(crate) fn c5a_lmi_named(
    name: &str,
    kind: ConstraintKind,
    w_sum: &MatrixSum,
    l_hat: &[C64],
    eps: f64,
    alpha: &ScalarAffine,
    delta: &ScalarAffine,
) -> LmiBlock {
    let n = l_hat.len();
    let dim = n + 1;
    let mut block = LmiBlock::new(name, kind, dim);
    add_affine(&mut block, alpha, &multiplier_pattern(dim, eps));
    add_affine(&mut block, delta, &corner(dim, 1.0));
    let b = b_matrix(l_hat);
    if let Some(c) = &w_sum.constant {
        block.constant = block.constant.sub(&c.congruence(&b));
    }
    block.add_matrix_term(w_sum.vars.clone(), HermMap::Congruence(vec![(-1.0, b)]));
    block
}

/// `[[βI − P, −Pê], [−êᴴP, −βε² − δ + τ − êᴴPê]]` with `P = diag(P_1, …, P_J)`.
pub fn c5b_lmi(
    p: &[ScalarAffine],
    e_hat: &[C64],
    eps: f64,
    beta: &ScalarAffine,
    delta: &ScalarAffine,
    tau: &ScalarAffine,
) -> LmiBlock {
    c5b_lmi_named("C5b", ConstraintKind::Other, p, e_hat, eps, beta, delta, tau)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn c5b_lmi_named(
    name: &str,
    kind: ConstraintKind,
    p: &[ScalarAffine],
    e_hat: &[C64],
    eps: f64,
    beta: &ScalarAffine,
    delta: &ScalarAffine,
    tau: &ScalarAffine,
) -> LmiBlock {
    let j = e_hat.len();
    assert_eq!(p.len(), j, "one power per uplink user");
    let dim = j + 1;
    let mut block = LmiBlock::new(name, kind, dim);
    add_affine(&mut block, beta, &multiplier_pattern(dim, eps));
    add_affine(&mut block, delta, &corner(dim, -1.0));
    add_affine(&mut block, tau, &corner(dim, 1.0));
    for (jj, pj) in p.iter().enumerate() {
        // −b bᴴ with b = [e_j; conj(ê_j)]
        let mut b = vec![C64::default(); dim];
        b[jj] = C64::new(1.0, 0.0);
        b[j] = e_hat[jj].conj();
        add_affine(&mut block, pj, &HermitianMatrix::outer(&b).scale(-1.0));
    }
    block
}
