//! Lowering of a [`ConicProblem`] to real symmetric LMIs with diagonal equilibration.

use crate::error::{Error, Result};
use crate::linalg::{HermitianMatrix, Mat, C64};
use crate::problem::{Assignment, ConicProblem, HermMap, VarShape};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Part {
    Diag,
    Re,
    Im,
}

/// Coordinates of an `n × n` Hermitian matrix: the diagonal, then `(Re, Im)` of
/// every strictly upper entry in row order.
pub(crate) fn herm_basis(n: usize) -> Vec<(usize, usize, Part)> {
    let mut out: Vec<(usize, usize, Part)> = (0..n).map(|a| (a, a, Part::Diag)).collect();
    for a in 0..n {
        for b in (a + 1)..n {
            out.push((a, b, Part::Re));
            out.push((a, b, Part::Im));
        }
    }
    out
}

pub(crate) fn basis_matrix(n: usize, (a, b, part): (usize, usize, Part)) -> HermitianMatrix {
    let mut m = HermitianMatrix::zeros(n);
    match part {
        Part::Diag => m.set(a, a, C64::new(1.0, 0.0)),
        Part::Re => m.set(a, b, C64::new(1.0, 0.0)),
        Part::Im => m.set(a, b, C64::new(0.0, 1.0)),
    }
    m
}

fn coordinate(m: &HermitianMatrix, (a, b, part): (usize, usize, Part)) -> f64 {
    match part {
        Part::Diag => m.get(a, a).re,
        Part::Re => m.get(a, b).re,
        Part::Im => m.get(a, b).im,
    }
}

/// Symmetric real matrix stored by nonempty rows.
#[derive(Clone, Debug)]
pub(crate) struct SparseSym {
    pub rows: Vec<usize>,
    pub start: Vec<usize>,
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseSym {
    pub fn from_dense(m: &Mat) -> Self {
        let n = m.dim();
        let mut s = SparseSym { rows: Vec::new(), start: vec![0], idx: Vec::new(), val: Vec::new() };
        for i in 0..n {
            let before = s.idx.len();
            for (j, v) in m.row(i).iter().enumerate() {
                if *v != 0.0 {
                    s.idx.push(j);
                    s.val.push(*v);
                }
            }
            if s.idx.len() > before {
                s.rows.push(i);
                s.start.push(s.idx.len());
            }
        }
        s
    }

    pub fn row_entries(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.start[r], self.start[r + 1]);
        (&self.idx[a..b], &self.val[a..b])
    }

    /// `⟨self, m⟩ = Tr(self · m)` for symmetric `m`.
    pub fn dot(&self, m: &Mat) -> f64 {
        let mut acc = 0.0;
        for (r, &i) in self.rows.iter().enumerate() {
            let row = m.row(i);
            let (idx, val) = self.row_entries(r);
            for (j, v) in idx.iter().zip(val) {
                acc += v * row[*j];
            }
        }
        acc
    }

    pub fn add_to(&self, a: f64, m: &mut Mat) {
        for (r, &i) in self.rows.iter().enumerate() {
            let (idx, val) = self.row_entries(r);
            for (j, v) in idx.iter().zip(val) {
                m.add_to(i, *j, a * v);
            }
        }
    }

    /// Rows `rows[r]` of `self · R`, stacked.
    pub fn times_dense(&self, rm: &Mat) -> Vec<f64> {
        let n = rm.dim();
        let mut out = vec![0.0; self.rows.len() * n];
        for r in 0..self.rows.len() {
            let (idx, val) = self.row_entries(r);
            let dst = &mut out[r * n..(r + 1) * n];
            for (k, v) in idx.iter().zip(val) {
                for (d, x) in dst.iter_mut().zip(rm.row(*k)) {
                    *d += v * x;
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Link {
    pub coord: usize,
    pub col: usize,
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct LBlock {
    pub dim: usize,
    pub embedded: bool,
    /// Real dimension: `dim` or `2·dim`.
    pub size: usize,
    /// Equilibration of the complex indices.
    pub d: Vec<f64>,
    pub f0: Mat,
    pub cols: Vec<SparseSym>,
    pub links: Vec<Link>,
}

impl LBlock {
    /// `Σ x_c F_c` without the constant.
    pub fn apply(&self, x: &[f64]) -> Mat {
        let mut m = Mat::zeros(self.size);
        for l in &self.links {
            let a = l.weight * x[l.coord];
            if a != 0.0 {
                self.cols[l.col].add_to(a, &mut m);
            }
        }
        m
    }

    /// `out_c += ⟨F_c, z⟩`.
    pub fn adjoint_into(&self, z: &Mat, out: &mut [f64]) {
        let dots: Vec<f64> = self.cols.iter().map(|c| c.dot(z)).collect();
        for l in &self.links {
            out[l.coord] += l.weight * dots[l.col];
        }
    }

    /// Complex Hermitian `D Z D · scale` from a real (or embedded) `Z`.
    pub fn to_complex(&self, z: &Mat, scale: f64) -> HermitianMatrix {
        let n = self.dim;
        HermitianMatrix::from_upper_fn(n, |i, j| {
            let w = self.d[i] * self.d[j] * scale;
            if self.embedded {
                let re = z.get(i, j) + z.get(i + n, j + n);
                let im = z.get(i + n, j) - z.get(i, j + n);
                C64::new(re * w, im * w)
            } else {
                C64::new(z.get(i, j) * w, 0.0)
            }
        })
    }
}

fn to_real(h: &HermitianMatrix, d: &[f64], embedded: bool) -> Mat {
    let n = h.dim();
    if embedded {
        let mut m = Mat::zeros(2 * n);
        for i in 0..n {
            for j in 0..n {
                let z = h.get(i, j) * (d[i] * d[j]);
                m.set(i, j, z.re);
                m.set(i + n, j + n, z.re);
                m.set(i, j + n, -z.im);
                m.set(i + n, j, z.im);
            }
        }
        m
    } else {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, h.get(i, j).re * d[i] * d[j]);
            }
        }
        m
    }
}

fn is_real(h: &HermitianMatrix) -> bool {
    let n = h.dim();
    (0..n).all(|i| (i + 1..n).all(|j| h.get(i, j).im == 0.0))
}

/// `min cᵀx s.t. F0_i + Σ_c x_c F_{i,c} ⪰ 0` in scaled coordinates `x = unit ⊙ x̃`.
#[derive(Clone, Debug)]
pub(crate) struct Lowered {
    pub n: usize,
    pub var_offset: Vec<usize>,
    pub unit: Vec<f64>,
    pub c: Vec<f64>,
    /// Objective scale: scaled objective `= γ ·` original objective.
    pub gamma: f64,
    pub blocks: Vec<LBlock>,
}

pub(crate) fn lower(p: &ConicProblem, force_embedding: bool) -> Result<Lowered> {
    p.check().map_err(Error::Dimension)?;
    let mut var_offset = Vec::with_capacity(p.variables.len());
    let mut unit = Vec::new();
    for v in &p.variables {
        if !(v.unit > 0.0 && v.unit.is_finite()) {
            return Err(Error::Domain(format!("variable {} has unit {}", v.name, v.unit)));
        }
        var_offset.push(unit.len());
        let count = match v.shape {
            VarShape::Scalar => 1,
            VarShape::Hermitian(n) => n * n,
        };
        unit.extend(std::iter::repeat_n(v.unit, count));
    }
    let n = unit.len();

    let mut c = vec![0.0; n];
    for (v, a) in &p.objective_scalar {
        c[var_offset[v.0]] += a;
    }
    for (v, cm) in &p.objective_matrix {
        for (k, e) in herm_basis(cm.dim()).into_iter().enumerate() {
            c[var_offset[v.0] + k] += cm.trace_product(&basis_matrix(cm.dim(), e));
        }
    }
    let cmax = c.iter().zip(&unit).map(|(a, u)| (a * u).abs()).fold(0.0, f64::max);
    let gamma = if cmax > 0.0 { 1.0 / cmax } else { 1.0 };
    for (a, u) in c.iter_mut().zip(&unit) {
        *a *= u * gamma;
    }
    if c.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("objective".into()));
    }

    let mut blocks = Vec::with_capacity(p.blocks.len());
    for b in &p.blocks {
        let mut cols: Vec<HermitianMatrix> = Vec::new();
        let mut links = Vec::new();
        for (v, coeff) in &b.scalar_terms {
            links.push(Link { coord: var_offset[v.0], col: cols.len(), weight: p.variables[v.0].unit });
            cols.push(coeff.clone());
        }
        for t in &b.matrix_terms {
            let nin = t.map.in_dim();
            for (k, e) in herm_basis(nin).into_iter().enumerate() {
                let col = match &t.map {
                    HermMap::Trace(q) => {
                        HermitianMatrix::from_real_diag(&[q.trace_product(&basis_matrix(nin, e))])
                    }
                    map => map.apply(&basis_matrix(nin, e)),
                };
                if col.max_abs() == 0.0 {
                    continue;
                }
                for (v, w) in &t.vars {
                    links.push(Link { coord: var_offset[v.0] + k, col: cols.len(), weight: w * p.variables[v.0].unit });
                }
                cols.push(col);
            }
        }
        if !b.constant.is_finite() || cols.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite(format!("block {}", b.name)));
        }
        let embedded = b.dim > 1 && (force_embedding || !(is_real(&b.constant) && cols.iter().all(is_real)));
        let embedded = embedded || (force_embedding && b.dim == 1);

        // row Ruiz equilibration on the complex indices
        let mut colw = vec![0.0f64; cols.len()];
        for l in &links {
            colw[l.col] = colw[l.col].max(l.weight.abs());
        }
        let mut d = vec![1.0; b.dim];
        for _ in 0..10 {
            let mut rm = vec![0.0f64; b.dim];
            let mut scan = |m: &HermitianMatrix, w: f64| {
                for i in 0..b.dim {
                    for j in 0..b.dim {
                        rm[i] = rm[i].max(m.get(i, j).norm() * w * d[i] * d[j]);
                    }
                }
            };
            scan(&b.constant, 1.0);
            for (m, w) in cols.iter().zip(&colw) {
                scan(m, *w);
            }
            let mut done = true;
            for (di, r) in d.iter_mut().zip(&rm) {
                if *r > 0.0 {
                    done &= (r - 1.0).abs() < 0.05;
                    *di /= r.sqrt();
                }
            }
            if done {
                break;
            }
        }
        let f0 = to_real(&b.constant, &d, embedded);
        let cols: Vec<SparseSym> = cols.iter().map(|m| SparseSym::from_dense(&to_real(m, &d, embedded))).collect();
        let size = if embedded { 2 * b.dim } else { b.dim };
        blocks.push(LBlock { dim: b.dim, embedded, size, d, f0, cols, links });
    }
    Ok(Lowered { n, var_offset, unit, c, gamma, blocks })
}

impl Lowered {
    pub fn assignment(&self, p: &ConicProblem, xs: &[f64]) -> Assignment {
        let mut a = Assignment::zeros(p);
        for (i, v) in p.variables.iter().enumerate() {
            let o = self.var_offset[i];
            match v.shape {
                VarShape::Scalar => a.set_scalar(crate::problem::VarId(i), xs[o] * self.unit[o]),
                VarShape::Hermitian(n) => {
                    let mut m = HermitianMatrix::zeros(n);
                    for (k, e) in herm_basis(n).into_iter().enumerate() {
                        m.axpy(xs[o + k] * self.unit[o + k], &basis_matrix(n, e));
                    }
                    a.set_matrix(crate::problem::VarId(i), m);
                }
            }
        }
        a
    }

    /// Scaled coordinates of an assignment.
    pub fn coordinates(&self, p: &ConicProblem, a: &Assignment) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for (i, v) in p.variables.iter().enumerate() {
            let o = self.var_offset[i];
            match v.shape {
                VarShape::Scalar => x[o] = a.scalar(crate::problem::VarId(i)) / self.unit[o],
                VarShape::Hermitian(n) => {
                    let m = a.matrix(crate::problem::VarId(i));
                    for (k, e) in herm_basis(n).into_iter().enumerate() {
                        x[o + k] = coordinate(m, e) / self.unit[o + k];
                    }
                }
            }
        }
        x
    }

    /// Scaled dual block from a complex multiplier in original units.
    pub fn scaled_dual(&self, i: usize, z: &HermitianMatrix) -> Mat {
        let b = &self.blocks[i];
        let inv: Vec<f64> = b.d.iter().map(|x| 1.0 / x).collect();
        let mut m = to_real(z, &inv, b.embedded);
        if b.embedded {
            // ⟨embed(F), embed(Z)⟩ = 2 Re Tr(F Z)
            m.scale(0.5);
        }
        m.scale(self.gamma);
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, real_embed};

    #[test]
    fn basis_round_trip() {
        let n = 3;
        let h = HermitianMatrix::from_upper_fn(n, |i, j| c64((i + 2 * j) as f64, if i == j { 0.0 } else { (i as f64) - 1.5 }));
        let mut r = HermitianMatrix::zeros(n);
        for e in herm_basis(n) {
            r.axpy(coordinate(&h, e), &basis_matrix(n, e));
        }
        assert!(r.sub(&h).frobenius_norm() < 1e-15);
        assert_eq!(herm_basis(n).len(), 9);
    }

    #[test]
    fn embedding_matches_linalg() {
        let h = HermitianMatrix::from_upper_fn(2, |i, j| c64(1.0 + i as f64, (j as f64) - (i as f64)));
        assert_eq!(to_real(&h, &[1.0, 1.0], true), real_embed(&h));
    }

    #[test]
    fn dual_round_trip() {
        let l = Lowered { n: 0, var_offset: vec![], unit: vec![], c: vec![], gamma: 3.0, blocks: vec![] };
        let h = HermitianMatrix::from_upper_fn(2, |i, j| c64(2.0 + i as f64, if i == j { 0.0 } else { 0.7 }));
        for embedded in [true, false] {
            let h = if embedded { h.clone() } else { h.diagonal_part() };
            let b = LBlock {
                dim: 2,
                embedded,
                size: if embedded { 4 } else { 2 },
                d: vec![0.5, 4.0],
                f0: Mat::zeros(1),
                cols: vec![],
                links: vec![],
            };
            let l = Lowered { blocks: vec![b], ..l.clone() };
            let z = l.scaled_dual(0, &h);
            let back = l.blocks[0].to_complex(&z, 1.0 / l.gamma);
            assert!(back.sub(&h).frobenius_norm() < 1e-14, "{embedded}");
        }
    }
}
