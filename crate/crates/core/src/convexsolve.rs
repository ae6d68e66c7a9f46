//! Constraint systems over named complex and real variable blocks, their real
//! standard form, and LP/QP/SOCP solves through Clarabel.

use std::fmt::Write as _;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SecondOrderConeT, SolverStatus, SupportedConeT,
    ZeroConeT,
};
use nalgebra::{DMatrix, DVector};

use crate::{c64, CMat, CVec, Error, Result, C64};

/// Residual tolerance for accepted primal points and certificates.
pub const FEAS_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Complex,
    Real,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VarBlock {
    pub name: String,
    pub kind: VarKind,
    pub len: usize,
    /// First real coordinate of the block.
    pub offset: usize,
}

impl VarBlock {
    pub fn real_len(&self) -> usize {
        match self.kind {
            VarKind::Complex => 2 * self.len,
            VarKind::Real => self.len,
        }
    }
}

/// Handle to a variable block of one [`ConstraintSystem`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub usize);

/// Complex affine expression `Σ c·x[entry] + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(Var, usize, C64)>,
    pub constant: C64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    /// Complex expression equals zero.
    Eq,
    /// Real part equals zero.
    EqRe,
    /// Real part is nonpositive.
    Le,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub label: String,
    pub kind: RowKind,
    pub expr: LinExpr,
}

/// `‖Re x‖₂ ≤ Re t`.
#[derive(Clone, Debug, PartialEq)]
pub struct SocRow {
    pub label: String,
    pub t: LinExpr,
    pub x: Vec<LinExpr>,
}

/// `linear + scalar · factor = 0`, row by row, with a real scalar variable.
#[derive(Clone, Debug, PartialEq)]
pub struct BilinearRow {
    pub label: String,
    pub linear: LinExpr,
    pub scalar: (Var, usize),
    pub factor: LinExpr,
}

/// Affine block `Σ M_i x_i + constant`; each term's matrix has one column per
/// entry of its variable.
pub type Terms<'a> = &'a [(&'a CMat, Var)];

#[derive(Clone, Debug, Default)]
pub struct ConstraintSystem {
    pub blocks: Vec<VarBlock>,
    pub rows: Vec<Row>,
    pub socs: Vec<SocRow>,
    pub bilinear: Vec<BilinearRow>,
    real_dim: usize,
}

pub fn real_to_cmat(m: &DMatrix<f64>) -> CMat {
    m.map(|v| c64(v, 0.0))
}

pub fn real_to_cvec(v: &DVector<f64>) -> CVec {
    v.map(|x| c64(x, 0.0))
}

impl ConstraintSystem {
    pub fn new() -> Self {
        Self::default()
    }

    fn add_block(&mut self, name: &str, kind: VarKind, len: usize) -> Var {
        let block = VarBlock { name: name.to_string(), kind, len, offset: self.real_dim };
        self.real_dim += block.real_len();
        self.blocks.push(block);
        Var(self.blocks.len() - 1)
    }

    pub fn add_complex(&mut self, name: &str, len: usize) -> Var {
        self.add_block(name, VarKind::Complex, len)
    }

    pub fn add_real(&mut self, name: &str, len: usize) -> Var {
        self.add_block(name, VarKind::Real, len)
    }

    pub fn block(&self, v: Var) -> &VarBlock {
        &self.blocks[v.0]
    }

    pub fn var(&self, name: &str) -> Option<Var> {
        self.blocks.iter().position(|b| b.name == name).map(Var)
    }

    pub fn real_dim(&self) -> usize {
        self.real_dim
    }

    pub fn has_bilinear(&self) -> bool {
        !self.bilinear.is_empty()
    }

    fn exprs(&self, terms: Terms, constant: &CVec) -> Result<Vec<LinExpr>> {
        let n = constant.len();
        let mut out: Vec<LinExpr> = (0..n).map(|i| LinExpr { terms: vec![], constant: constant[i] }).collect();
        for (m, v) in terms {
            let b = self.block(*v);
            if m.nrows() != n || m.ncols() != b.len {
                return Err(Error::InvalidInput(format!(
                    "term on {} is {}×{}, expected {}×{}",
                    b.name,
                    m.nrows(),
                    m.ncols(),
                    n,
                    b.len
                )));
            }
            for (r, e) in out.iter_mut().enumerate() {
                for c in 0..b.len {
                    let coef = m[(r, c)];
                    if coef != C64::default() {
                        e.terms.push((*v, c, coef));
                    }
                }
            }
        }
        Ok(out)
    }

    fn push_rows(&mut self, label: &str, kind: RowKind, terms: Terms, constant: &CVec) -> Result<()> {
        for expr in self.exprs(terms, constant)? {
            self.rows.push(Row { label: label.to_string(), kind, expr });
        }
        Ok(())
    }

    /// Complex rows `Σ M_i x_i + constant = 0`.
    pub fn eq(&mut self, label: &str, terms: Terms, constant: &CVec) -> Result<()> {
        self.push_rows(label, RowKind::Eq, terms, constant)
    }

    /// Real rows `Re[Σ M_i x_i + constant] = 0`.
    pub fn eq_re(&mut self, label: &str, terms: Terms, constant: &CVec) -> Result<()> {
        self.push_rows(label, RowKind::EqRe, terms, constant)
    }

    /// Real rows `Re[Σ M_i x_i + constant] ≤ 0`.
    pub fn le(&mut self, label: &str, terms: Terms, constant: &CVec) -> Result<()> {
        self.push_rows(label, RowKind::Le, terms, constant)
    }

    /// `‖Re[x terms]‖ ≤ Re[t terms]`.
    pub fn soc(&mut self, label: &str, t: (Terms, &CVec), x: (Terms, &CVec)) -> Result<()> {
        let t = self.exprs(t.0, t.1)?;
        if t.len() != 1 {
            return Err(Error::InvalidInput("cone bound must be a single row".into()));
        }
        let x = self.exprs(x.0, x.1)?;
        self.socs.push(SocRow { label: label.to_string(), t: t.into_iter().next().unwrap(), x });
        Ok(())
    }

    /// Rows `linear + s · factor = 0` for a real scalar variable `s`.
    pub fn bilinear_eq(&mut self, label: &str, linear: (Terms, &CVec), scalar: Var, factor: (Terms, &CVec)) -> Result<()> {
        let b = self.block(scalar);
        if b.kind != VarKind::Real || b.len != 1 {
            return Err(Error::InvalidInput(format!("bilinear scalar {} must be a real scalar", b.name)));
        }
        let lin = self.exprs(linear.0, linear.1)?;
        let fac = self.exprs(factor.0, factor.1)?;
        if lin.len() != fac.len() {
            return Err(Error::InvalidInput("bilinear row blocks differ in length".into()));
        }
        for (l, f) in lin.into_iter().zip(fac) {
            self.bilinear.push(BilinearRow { label: label.to_string(), linear: l, scalar: (scalar, 0), factor: f });
        }
        Ok(())
    }

    pub fn fix_complex(&mut self, v: Var, value: &CVec) -> Result<()> {
        let id = CMat::identity(value.len(), value.len());
        self.eq(&format!("fix {}", self.block(v).name), &[(&id, v)], &(-value))
    }

    pub fn fix_real(&mut self, v: Var, value: &DVector<f64>) -> Result<()> {
        let id = CMat::identity(value.len(), value.len());
        self.eq_re(&format!("fix {}", self.block(v).name), &[(&id, v)], &real_to_cvec(&(-value)))
    }

    /// Real coordinates of one entry: `(re, Some(im))` for complex blocks.
    pub fn coords(&self, v: Var, entry: usize) -> (usize, Option<usize>) {
        let b = self.block(v);
        match b.kind {
            VarKind::Complex => (b.offset + 2 * entry, Some(b.offset + 2 * entry + 1)),
            VarKind::Real => (b.offset + entry, None),
        }
    }

    /// `(block name, entry, part)` of a real coordinate; part is "re", "im" or "".
    pub fn coordinate_name(&self, coord: usize) -> Option<(String, usize, &'static str)> {
        let b = self.blocks.iter().find(|b| coord >= b.offset && coord < b.offset + b.real_len())?;
        let local = coord - b.offset;
        Some(match b.kind {
            VarKind::Complex => (b.name.clone(), local / 2, if local.is_multiple_of(2) { "re" } else { "im" }),
            VarKind::Real => (b.name.clone(), local, ""),
        })
    }

    pub fn coordinate_index(&self, name: &str, entry: usize, part: &str) -> Option<usize> {
        let v = self.var(name)?;
        let (re, im) = self.coords(v, entry);
        match part {
            "im" => im,
            _ => Some(re),
        }
    }

    pub fn get_complex(&self, v: Var, x: &[f64]) -> CVec {
        let b = self.block(v);
        CVec::from_fn(b.len, |i, _| {
            let (re, im) = self.coords(v, i);
            c64(x[re], im.map(|j| x[j]).unwrap_or(0.0))
        })
    }

    pub fn get_real(&self, v: Var, x: &[f64]) -> DVector<f64> {
        let b = self.block(v);
        DVector::from_fn(b.len, |i, _| x[self.coords(v, i).0])
    }

    pub fn set_complex(&self, v: Var, value: &CVec, x: &mut [f64]) {
        for i in 0..value.len() {
            let (re, im) = self.coords(v, i);
            x[re] = value[i].re;
            if let Some(j) = im {
                x[j] = value[i].im;
            }
        }
    }

    pub fn set_real(&self, v: Var, value: &DVector<f64>, x: &mut [f64]) {
        for i in 0..value.len() {
            x[self.coords(v, i).0] = value[i];
        }
    }

    pub fn eval(&self, e: &LinExpr, x: &[f64]) -> C64 {
        e.terms.iter().fold(e.constant, |acc, &(v, i, c)| {
            let (re, im) = self.coords(v, i);
            acc + c * c64(x[re], im.map(|j| x[j]).unwrap_or(0.0))
        })
    }

    /// Largest violation of any row, cone or bilinear product at `x`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for r in &self.rows {
            let v = self.eval(&r.expr, x);
            worst = worst.max(match r.kind {
                RowKind::Eq => v.re.abs().max(v.im.abs()),
                RowKind::EqRe => v.re.abs(),
                RowKind::Le => v.re.max(0.0),
            });
        }
        for s in &self.socs {
            let t = self.eval(&s.t, x).re;
            let n = s.x.iter().map(|e| self.eval(e, x).re.powi(2)).sum::<f64>().sqrt();
            worst = worst.max(n - t);
        }
        for b in &self.bilinear {
            let (re, _) = self.coords(b.scalar.0, b.scalar.1);
            let v = self.eval(&b.linear, x) + self.eval(&b.factor, x) * x[re];
            worst = worst.max(v.re.abs().max(v.im.abs()));
        }
        worst
    }

    /// Appends another system's variables and rows, renaming blocks with `prefix`.
    /// Returns the variable offset to translate handles of `other`.
    pub fn append(&mut self, other: &ConstraintSystem, prefix: &str) -> usize {
        let shift = self.blocks.len();
        for b in &other.blocks {
            self.add_block(&format!("{prefix}{}", b.name), b.kind, b.len);
        }
        let remap = |e: &LinExpr| LinExpr {
            terms: e.terms.iter().map(|&(v, i, c)| (Var(v.0 + shift), i, c)).collect(),
            constant: e.constant,
        };
        for r in &other.rows {
            self.rows.push(Row { label: format!("{prefix}{}", r.label), kind: r.kind, expr: remap(&r.expr) });
        }
        for s in &other.socs {
            self.socs.push(SocRow { label: format!("{prefix}{}", s.label), t: remap(&s.t), x: s.x.iter().map(remap).collect() });
        }
        for b in &other.bilinear {
            self.bilinear.push(BilinearRow {
                label: format!("{prefix}{}", b.label),
                linear: remap(&b.linear),
                scalar: (Var(b.scalar.0 .0 + shift), b.scalar.1),
                factor: remap(&b.factor),
            });
        }
        shift
    }

    /// Realified linear and conic part. Bilinear rows are not representable and
    /// are rejected unless `drop_bilinear` is set.
    pub fn standard_form(&self, drop_bilinear: bool) -> Result<StandardForm> {
        if self.has_bilinear() && !drop_bilinear {
            return Err(Error::Unsupported("bilinear rows have no convex standard form".into()));
        }
        let n = self.real_dim;
        let mut eq_rows = Vec::new();
        let mut ineq_rows = Vec::new();
        for r in &self.rows {
            let (re, im) = self.realify(&r.expr);
            match r.kind {
                RowKind::Eq => {
                    eq_rows.push((format!("{} re", r.label), re));
                    eq_rows.push((format!("{} im", r.label), im));
                }
                RowKind::EqRe => eq_rows.push((r.label.clone(), re)),
                RowKind::Le => ineq_rows.push((r.label.clone(), re)),
            }
        }
        // expr = a·x + c; equalities become a·x = -c, inequalities a·x ≤ -c
        let pack = |rows: &[(String, (DVector<f64>, f64))]| {
            let mut a = DMatrix::zeros(rows.len(), n);
            let mut b = DVector::zeros(rows.len());
            for (i, (_, (coef, c))) in rows.iter().enumerate() {
                a.row_mut(i).copy_from(&coef.transpose());
                b[i] = -c;
            }
            (a, b)
        };
        let (a_eq, b_eq) = pack(&eq_rows);
        let (g, h) = pack(&ineq_rows);
        let socs = self
            .socs
            .iter()
            .map(|s| {
                let mut m = DMatrix::zeros(s.x.len() + 1, n);
                let mut c = DVector::zeros(s.x.len() + 1);
                for (i, e) in std::iter::once(&s.t).chain(s.x.iter()).enumerate() {
                    let (coef, k) = self.realify(e).0;
                    m.row_mut(i).copy_from(&coef.transpose());
                    c[i] = k;
                }
                SocBlock { label: s.label.clone(), m, c }
            })
            .collect();
        Ok(StandardForm {
            n,
            a_eq,
            b_eq,
            g,
            h,
            socs,
            eq_labels: eq_rows.into_iter().map(|r| r.0).collect(),
            ineq_labels: ineq_rows.into_iter().map(|r| r.0).collect(),
            names: (0..n).map(|i| self.coordinate_name(i).unwrap()).map(|(b, e, p)| format!("{b}[{e}]{p}")).collect(),
        })
    }

    /// Real and imaginary parts of an expression as `(coefficients, constant)`.
    pub fn realify(&self, e: &LinExpr) -> ((DVector<f64>, f64), (DVector<f64>, f64)) {
        let mut re = DVector::zeros(self.real_dim);
        let mut im = DVector::zeros(self.real_dim);
        for &(v, i, c) in &e.terms {
            let (r, j) = self.coords(v, i);
            re[r] += c.re;
            im[r] += c.im;
            if let Some(j) = j {
                re[j] -= c.im;
                im[j] += c.re;
            }
        }
        ((re, e.constant.re), (im, e.constant.im))
    }

    /// Plain-text listing of blocks and rows.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for b in &self.blocks {
            let _ = writeln!(s, "var {} {:?} {}", b.name, b.kind, b.len);
        }
        let fmt = |e: &LinExpr| {
            let mut t: Vec<String> = e
                .terms
                .iter()
                .map(|&(v, i, c)| format!("({:+.6e}{:+.6e}j)*{}[{}]", c.re, c.im, self.block(v).name, i))
                .collect();
            t.push(format!("({:+.6e}{:+.6e}j)", e.constant.re, e.constant.im));
            t.join(" + ")
        };
        for r in &self.rows {
            let op = match r.kind {
                RowKind::Eq => "= 0",
                RowKind::EqRe => "re = 0",
                RowKind::Le => "re <= 0",
            };
            let _ = writeln!(s, "{}: {} {}", r.label, fmt(&r.expr), op);
        }
        for c in &self.socs {
            let xs: Vec<String> = c.x.iter().map(fmt).collect();
            let _ = writeln!(s, "{}: ||re[{}]|| <= re {}", c.label, xs.join("; "), fmt(&c.t));
        }
        for b in &self.bilinear {
            let _ =
                writeln!(s, "{}: {} + {}[{}]*({}) = 0", b.label, fmt(&b.linear), self.block(b.scalar.0).name, b.scalar.1, fmt(&b.factor));
        }
        s
    }
}

/// `‖(m x + c)[1..]‖ ≤ (m x + c)[0]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SocBlock {
    pub label: String,
    pub m: DMatrix<f64>,
    pub c: DVector<f64>,
}

/// Real problem `a_eq x = b_eq`, `g x ≤ h`, cone blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardForm {
    pub n: usize,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub socs: Vec<SocBlock>,
    pub eq_labels: Vec<String>,
    pub ineq_labels: Vec<String>,
    pub names: Vec<String>,
}

impl StandardForm {
    pub fn new(a_eq: DMatrix<f64>, b_eq: DVector<f64>, g: DMatrix<f64>, h: DVector<f64>) -> Result<Self> {
        let n = a_eq.ncols().max(g.ncols());
        if (a_eq.nrows() > 0 && a_eq.ncols() != n) || (g.nrows() > 0 && g.ncols() != n) {
            return Err(Error::InvalidInput("equality and inequality blocks differ in width".into()));
        }
        if a_eq.nrows() != b_eq.len() || g.nrows() != h.len() {
            return Err(Error::InvalidInput("right-hand side length mismatch".into()));
        }
        let a_eq = if a_eq.ncols() == n { a_eq } else { DMatrix::zeros(0, n) };
        let g = if g.ncols() == n { g } else { DMatrix::zeros(0, n) };
        Ok(Self {
            n,
            eq_labels: (0..a_eq.nrows()).map(|i| format!("eq{i}")).collect(),
            ineq_labels: (0..g.nrows()).map(|i| format!("le{i}")).collect(),
            names: (0..n).map(|i| format!("x{i}")).collect(),
            a_eq,
            b_eq,
            g,
            h,
            socs: vec![],
        })
    }

    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        if self.a_eq.nrows() > 0 {
            worst = worst.max((&self.a_eq * x - &self.b_eq).amax());
        }
        if self.g.nrows() > 0 {
            worst = worst.max((&self.g * x - &self.h).max().max(0.0));
        }
        for s in &self.socs {
            let v = &s.m * x + &s.c;
            worst = worst.max(v.rows(1, v.len() - 1).norm() - v[0]);
        }
        worst
    }

    /// Standard-form listing for golden comparisons.
    pub fn dump(&self) -> String {
        let mut s = format!("n {}\n", self.n);
        let row = |r: nalgebra::DVectorView<f64>| -> String {
            r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| format!("{v:+.9e}*{}", self.names[j])).collect::<Vec<_>>().join(" ")
        };
        for i in 0..self.a_eq.nrows() {
            let r = self.a_eq.row(i).transpose();
            let _ = writeln!(s, "{}: {} = {:+.9e}", self.eq_labels[i], row(r.column(0)), self.b_eq[i]);
        }
        for i in 0..self.g.nrows() {
            let r = self.g.row(i).transpose();
            let _ = writeln!(s, "{}: {} <= {:+.9e}", self.ineq_labels[i], row(r.column(0)), self.h[i]);
        }
        for c in &self.socs {
            let _ = writeln!(s, "{}: cone of {} rows", c.label, c.m.nrows());
        }
        s
    }
}

/// Dual multipliers proving infeasibility: `a_eqᵀ y + gᵀ w + Σ socᵀ = 0`,
/// `b_eqᵀ y + hᵀ w + ... = -1`, `w ≥ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub eq: DVector<f64>,
    pub ineq: DVector<f64>,
    pub soc: Vec<DVector<f64>>,
    /// Largest deviation from the defining conditions.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Feasibility {
    Feasible(DVector<f64>),
    Infeasible(Certificate),
    Numerical(String),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, Feasibility::Infeasible(_))
    }
}

/// Convex quadratic objective `½ xᵀ p x + qᵀ x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Objective {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
}

impl Objective {
    pub fn zero(n: usize) -> Self {
        Self { p: DMatrix::zeros(n, n), q: DVector::zeros(n) }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.q.dot(x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Equality and inequality multipliers as returned by the solver.
    pub eq_dual: DVector<f64>,
    pub ineq_dual: DVector<f64>,
}

/// Sparse problem `a_eq x = b_eq`, `g x ≤ h`, cone blocks, given as
/// `(row, col, value)` triplets. Used for the larger signal-design QPs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseForm {
    pub n: usize,
    pub a_eq: Vec<(usize, usize, f64)>,
    pub b_eq: Vec<f64>,
    pub g: Vec<(usize, usize, f64)>,
    pub h: Vec<f64>,
    /// `‖(m x + c)[1..]‖ ≤ (m x + c)[0]` with `m` as triplets.
    pub socs: Vec<SocTriplets>,
}

/// Cone rows as `(triplets, constant)`.
pub type SocTriplets = (Vec<(usize, usize, f64)>, Vec<f64>);

fn triplets(m: &DMatrix<f64>) -> Vec<(usize, usize, f64)> {
    let mut t = Vec::new();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] != 0.0 {
                t.push((i, j, m[(i, j)]));
            }
        }
    }
    t
}

fn sparse_mul(t: &[(usize, usize, f64)], rows: usize, x: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(rows);
    for &(i, j, v) in t {
        out[i] += v * x[j];
    }
    out
}

impl SparseForm {
    pub fn from_dense(sf: &StandardForm) -> Self {
        Self {
            n: sf.n,
            a_eq: triplets(&sf.a_eq),
            b_eq: sf.b_eq.iter().copied().collect(),
            g: triplets(&sf.g),
            h: sf.h.iter().copied().collect(),
            socs: sf.socs.iter().map(|s| (triplets(&s.m), s.c.iter().copied().collect())).collect(),
        }
    }

    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        let ax = sparse_mul(&self.a_eq, self.b_eq.len(), x);
        for (v, b) in ax.iter().zip(&self.b_eq) {
            worst = worst.max((v - b).abs());
        }
        let gx = sparse_mul(&self.g, self.h.len(), x);
        for (v, h) in gx.iter().zip(&self.h) {
            worst = worst.max(v - h);
        }
        for (m, c) in &self.socs {
            let v = sparse_mul(m, c.len(), x) + DVector::from_column_slice(c);
            worst = worst.max(v.rows(1, v.len() - 1).norm() - v[0]);
        }
        worst
    }
}

struct Assembled {
    a: CscMatrix<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

fn assemble(sf: &SparseForm) -> Assembled {
    let (mut rows, mut cols, mut vals) = (Vec::new(), Vec::new(), Vec::new());
    let mut b = Vec::new();
    let mut push = |t: &[(usize, usize, f64)], sign: f64, base: usize| {
        for &(i, j, v) in t {
            rows.push(base + i);
            cols.push(j);
            vals.push(sign * v);
        }
    };
    let (ne, ni) = (sf.b_eq.len(), sf.h.len());
    push(&sf.a_eq, 1.0, 0);
    b.extend(sf.b_eq.iter());
    push(&sf.g, 1.0, ne);
    b.extend(sf.h.iter());
    let mut base = ne + ni;
    let mut cones = Vec::new();
    if ne > 0 {
        cones.push(ZeroConeT(ne));
    }
    if ni > 0 {
        cones.push(NonnegativeConeT(ni));
    }
    for (m, c) in &sf.socs {
        // slack s = c + m x  =>  -m x + s = c
        push(m, -1.0, base);
        b.extend(c.iter());
        cones.push(SecondOrderConeT(c.len()));
        base += c.len();
    }
    let a = CscMatrix::new_from_triplets(base, sf.n, rows, cols, vals);
    Assembled { a, b, cones }
}

/// Upper triangle of the symmetric part of `p`.
fn upper_triplets(p: &DMatrix<f64>) -> Vec<(usize, usize, f64)> {
    let mut t = Vec::new();
    for j in 0..p.ncols() {
        for i in 0..=j {
            let v = 0.5 * (p[(i, j)] + p[(j, i)]);
            if v != 0.0 {
                t.push((i, j, v));
            }
        }
    }
    t
}

struct RawSolve {
    status: SolverStatus,
    x: DVector<f64>,
    z: DVector<f64>,
    obj: f64,
}

/// `p` holds upper-triangle triplets (duplicates are summed).
fn run(sf: &SparseForm, p: &[(usize, usize, f64)], q: &[f64]) -> Result<RawSolve> {
    run_with(sf, p, q, 1e-10, false)
}

/// Solver settings tried in order while the factorization breaks down.
const FALLBACKS: [(f64, bool); 3] = [(1e-8, true), (1e-7, true), (1e-8, false)];

/// With `known_feasible`, an infeasibility verdict is treated like a
/// numerical failure and retried.
fn run_with(sf: &SparseForm, p: &[(usize, usize, f64)], q: &[f64], tol: f64, known_feasible: bool) -> Result<RawSolve> {
    let data = sf.a_eq.iter().chain(&sf.g).map(|t| &t.2).chain(&sf.b_eq).chain(&sf.h);
    if data.clone().any(|v| !v.is_finite()) || p.iter().any(|t| !t.2.is_finite()) || q.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("problem data is not finite".into()));
    }
    let asm = assemble(sf);
    let (pr, pc, pv) = (p.iter().map(|t| t.0).collect(), p.iter().map(|t| t.1).collect(), p.iter().map(|t| t.2).collect());
    let p = CscMatrix::new_from_triplets(sf.n, sf.n, pr, pc, pv);
    let mut last = None;
    for (reg, equilibrate) in FALLBACKS {
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(400)
            .tol_feas(tol)
            .tol_gap_abs(tol)
            .tol_gap_rel(tol)
            .tol_infeas_abs(tol)
            .tol_infeas_rel(tol)
            .presolve_enable(false)
            .static_regularization_constant(reg)
            .equilibrate_enable(equilibrate)
            .build()
            .map_err(|e| Error::Solver(format!("settings: {e}")))?;
        let mut solver = DefaultSolver::new(&p, q, &asm.a, &asm.b, &asm.cones, settings)
            .map_err(|e| Error::Solver(format!("setup: {e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let raw = RawSolve {
            status: sol.status,
            x: DVector::from_vec(sol.x.clone()),
            z: DVector::from_vec(sol.z.clone()),
            obj: sol.obj_val,
        };
        let retry = match raw.status {
            SolverStatus::NumericalError | SolverStatus::InsufficientProgress => true,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => known_feasible,
            _ => false,
        };
        if !retry {
            return Ok(raw);
        }
        last = Some(raw);
    }
    Ok(last.expect("at least one attempt"))
}

fn run_dense(sf: &StandardForm, obj: &Objective) -> Result<RawSolve> {
    run(&SparseForm::from_dense(sf), &upper_triplets(&obj.p), obj.q.as_slice())
}

fn certificate(sf: &StandardForm, z: &DVector<f64>) -> Option<Certificate> {
    let (ne, ni) = (sf.a_eq.nrows(), sf.g.nrows());
    let mut y = z.rows(0, ne).into_owned();
    let mut w = z.rows(ne, ni).into_owned();
    let mut socs = Vec::new();
    let mut base = ne + ni;
    for s in &sf.socs {
        socs.push(z.rows(base, s.m.nrows()).into_owned());
        base += s.m.nrows();
    }
    // clarabel's certificate has bᵀz < 0 with b = [b_eq; h; c]
    let mut bz = sf.b_eq.dot(&y) + sf.h.dot(&w);
    for (s, zs) in sf.socs.iter().zip(&socs) {
        bz += s.c.dot(zs);
    }
    // NaN counts as no certificate
    if bz.is_nan() || bz >= 0.0 {
        return None;
    }
    let scale = -1.0 / bz;
    y *= scale;
    w *= scale;
    for zs in &mut socs {
        *zs *= scale;
    }
    let mut atz = DVector::zeros(sf.n);
    if ne > 0 {
        atz += sf.a_eq.transpose() * &y;
    }
    if ni > 0 {
        atz += sf.g.transpose() * &w;
    }
    // cone rows entered as -m x + s = c
    for (s, zs) in sf.socs.iter().zip(&socs) {
        atz -= s.m.transpose() * zs;
    }
    let mut residual = atz.amax();
    if ni > 0 {
        residual = residual.max((-w.min()).max(0.0));
    }
    for zs in &socs {
        residual = residual.max(zs.rows(1, zs.len() - 1).norm() - zs[0]);
    }
    Some(Certificate { eq: y, ineq: w, soc: socs, residual })
}

/// Feasibility of a standard-form system. Accepted points are the
/// minimum-norm feasible point and satisfy every row to [`FEAS_TOL`].
pub fn solve_feasibility(sf: &StandardForm) -> Feasibility {
    let p: Vec<_> = (0..sf.n).map(|i| (i, i, 1.0)).collect();
    let raw = match run(&SparseForm::from_dense(sf), &p, &vec![0.0; sf.n]) {
        Ok(r) => r,
        Err(e) => return Feasibility::Numerical(e.to_string()),
    };
    match raw.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            let v = sf.violation(&raw.x);
            if v <= FEAS_TOL {
                Feasibility::Feasible(raw.x)
            } else {
                Feasibility::Numerical(format!("{:?} point violates constraints by {v:.3e}", raw.status))
            }
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => match certificate(sf, &raw.z) {
            Some(c) => Feasibility::Infeasible(c),
            None => Feasibility::Numerical(format!("{:?} without a usable certificate", raw.status)),
        },
        s => Feasibility::Numerical(format!("solver stopped with {s:?}")),
    }
}

/// Convex QP `min ½xᵀPx + qᵀx` over a standard-form system.
pub fn solve_qp(sf: &StandardForm, obj: &Objective) -> Result<QpSolution> {
    if obj.p.nrows() != sf.n || obj.p.ncols() != sf.n || obj.q.len() != sf.n {
        return Err(Error::InvalidInput("objective does not match the variable count".into()));
    }
    let raw = run_dense(sf, obj)?;
    match raw.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            let v = sf.violation(&raw.x);
            if v > FEAS_TOL {
                return Err(Error::Solver(format!("QP point violates constraints by {v:.3e}")));
            }
            let ne = sf.a_eq.nrows();
            Ok(QpSolution {
                objective: raw.obj,
                eq_dual: raw.z.rows(0, ne).into_owned(),
                ineq_dual: raw.z.rows(ne, sf.g.nrows()).into_owned(),
                x: raw.x,
            })
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            Err(Error::Solver("QP constraints are infeasible".into()))
        }
        s => Err(Error::Solver(format!("QP solver stopped with {s:?}"))),
    }
}

/// Convex QP `min ½xᵀPx + qᵀx` over a sparse system; `p` lists
/// upper-triangle entries. Meant for inner steps of iterative methods: the
/// solver tolerance is `1e-8`, and a stalled solve is accepted when its point
/// satisfies the constraints to [`FEAS_TOL`].
pub fn solve_qp_sparse(sf: &SparseForm, p: &[(usize, usize, f64)], q: &[f64], known_feasible: bool) -> Result<QpSolution> {
    if q.len() != sf.n || p.iter().any(|&(i, j, _)| i > j || j >= sf.n) {
        return Err(Error::InvalidInput("objective does not match the variable count".into()));
    }
    let raw = run_with(sf, p, q, 1e-8, known_feasible)?;
    match raw.status {
        SolverStatus::Solved
        | SolverStatus::AlmostSolved
        | SolverStatus::InsufficientProgress
        | SolverStatus::MaxIterations
        | SolverStatus::NumericalError => {
            let v = sf.violation(&raw.x);
            if v > FEAS_TOL || raw.x.iter().any(|x| !x.is_finite()) {
                return Err(Error::Solver(format!("QP stopped with {:?}, point violates constraints by {v:.3e}", raw.status)));
            }
            let ne = sf.b_eq.len();
            Ok(QpSolution {
                objective: raw.obj,
                eq_dual: raw.z.rows(0, ne).into_owned(),
                ineq_dual: raw.z.rows(ne, sf.h.len()).into_owned(),
                x: raw.x,
            })
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            Err(Error::Solver("QP constraints are infeasible".into()))
        }
        s => Err(Error::Solver(format!("QP solver stopped with {s:?}"))),
    }
}

/// Feasibility of a constraint system; bilinear rows are rejected.
pub fn feasible(sys: &ConstraintSystem) -> Result<Feasibility> {
    Ok(solve_feasibility(&sys.standard_form(false)?))
}
