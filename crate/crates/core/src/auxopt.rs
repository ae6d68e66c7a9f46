//! Auxiliary signals injected by inverters and the ADMM search for a small
//! signal that separates a list of scenario pairs.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::convexsolve::{solve_qp_sparse, SparseForm, FEAS_TOL};
use crate::faults::Scenario;
use crate::netmodel::alpha;
use crate::pretest::CouplingForm;
use crate::sep::{build_duals, DualSystem, SeparationProblem};
use crate::{c64, CMat, CVec, Error, Result, C64};

/// How one complex entry of `Δ` enters the phase currents of its inverter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InjectionKind {
    #[default]
    NegativeSequence,
    ZeroSequence,
    PositiveSequence,
    /// Three entries per inverter, added phase by phase.
    PerPhase,
}

impl InjectionKind {
    pub fn tag(self) -> &'static str {
        match self {
            InjectionKind::NegativeSequence => "negative",
            InjectionKind::ZeroSequence => "zero",
            InjectionKind::PositiveSequence => "positive",
            InjectionKind::PerPhase => "per-phase",
        }
    }

    /// Entries of `Δ` per inverter.
    pub fn width(self) -> usize {
        match self {
            InjectionKind::PerPhase => 3,
            _ => 1,
        }
    }

    fn pattern(self) -> [C64; 3] {
        let a = alpha();
        let one = c64(1.0, 0.0);
        match self {
            InjectionKind::NegativeSequence => [one, a, a * a],
            InjectionKind::PositiveSequence => [one, a * a, a],
            InjectionKind::ZeroSequence | InjectionKind::PerPhase => [one; 3],
        }
    }
}

impl fmt::Display for InjectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for InjectionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "negative" | "negative-sequence" => Ok(InjectionKind::NegativeSequence),
            "zero" | "zero-sequence" => Ok(InjectionKind::ZeroSequence),
            "positive" | "positive-sequence" => Ok(InjectionKind::PositiveSequence),
            "per-phase" | "perphase" => Ok(InjectionKind::PerPhase),
            _ => Err(Error::InvalidInput(format!("unknown injection kind '{s}'"))),
        }
    }
}

/// Signal `Δ` over the inverter buses. Inverters are the leading sources of
/// the source vector, so the injection touches its first rows only.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxSignal {
    pub delta: CVec,
    pub kind: InjectionKind,
    /// Optional per-inverter bound on the Euclidean norm of its phase currents.
    pub caps: Option<DVector<f64>>,
}

impl AuxSignal {
    pub fn new(delta: CVec, kind: InjectionKind) -> Result<Self> {
        if !delta.len().is_multiple_of(kind.width()) {
            return Err(Error::InvalidInput(format!("{} entries do not split into {kind} injections", delta.len())));
        }
        Ok(Self { delta, kind, caps: None })
    }

    pub fn zero(ibr_count: usize, kind: InjectionKind) -> Self {
        Self { delta: CVec::zeros(ibr_count * kind.width()), kind, caps: None }
    }

    /// The same negative-sequence phasor at every inverter.
    pub fn uniform(value: C64, ibr_count: usize) -> Self {
        Self { delta: CVec::from_element(ibr_count, value), kind: InjectionKind::NegativeSequence, caps: None }
    }

    pub fn ibr_count(&self) -> usize {
        self.delta.len() / self.kind.width()
    }

    /// `D` with `u°(Δ) = u° + D Δ` for a source vector of `source_count` sources.
    pub fn injection_map(&self, source_count: usize) -> Result<CMat> {
        let n_ibr = self.ibr_count();
        if n_ibr > source_count {
            return Err(Error::InvalidInput(format!(
                "signal covers {n_ibr} inverters but the network has {source_count} sources"
            )));
        }
        let mut d = CMat::zeros(3 * source_count, self.delta.len());
        match self.kind {
            InjectionKind::PerPhase => {
                for i in 0..3 * n_ibr {
                    d[(i, i)] = c64(1.0, 0.0);
                }
            }
            kind => {
                let pat = kind.pattern();
                for k in 0..n_ibr {
                    for p in 0..3 {
                        d[(3 * k + p, k)] = pat[p];
                    }
                }
            }
        }
        Ok(d)
    }

    /// Nominal source vector shifted by the injection.
    pub fn apply(&self, nominal: &CVec) -> Result<CVec> {
        if !nominal.len().is_multiple_of(3) {
            return Err(Error::InvalidInput("source vector length is not a multiple of three".into()));
        }
        Ok(nominal + self.injection_map(nominal.len() / 3)? * &self.delta)
    }

    /// `[Re Δ; Im Δ]` interleaved per entry.
    pub fn to_real(&self) -> DVector<f64> {
        DVector::from_fn(2 * self.delta.len(), |i, _| if i % 2 == 0 { self.delta[i / 2].re } else { self.delta[i / 2].im })
    }

    pub fn with_real(&self, d: &DVector<f64>) -> Result<Self> {
        if d.len() != 2 * self.delta.len() {
            return Err(Error::InvalidInput("real signal vector has the wrong length".into()));
        }
        let delta = CVec::from_fn(self.delta.len(), |i, _| c64(d[2 * i], d[2 * i + 1]));
        Ok(Self { delta, ..self.clone() })
    }

    pub fn norm(&self) -> f64 {
        self.delta.norm()
    }

    /// Inverters whose shifted phase currents exceed their cap.
    pub fn cap_violations(&self, nominal: &CVec, tol: f64) -> Result<Vec<usize>> {
        let Some(caps) = &self.caps else { return Ok(vec![]) };
        if caps.len() != self.ibr_count() {
            return Err(Error::InvalidInput("one current cap per inverter is required".into()));
        }
        let u = self.apply(nominal)?;
        Ok((0..caps.len()).filter(|&k| u.rows(3 * k, 3).norm() > caps[k] + tol).collect())
    }
}

/// `Re[Δ† Q Δ]` for a Hermitian positive-definite `Q`.
pub fn objective(delta: &AuxSignal, q: &CMat) -> Result<f64> {
    check_cost(q, delta.delta.len())?;
    Ok((delta.delta.adjoint() * q * &delta.delta)[(0, 0)].re)
}

fn check_cost(q: &CMat, n: usize) -> Result<()> {
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::InvalidInput(format!("cost matrix is {}×{}, signal has {n} entries", q.nrows(), q.ncols())));
    }
    let scale = q.iter().map(|v| v.norm()).fold(1.0, f64::max);
    if (q - q.adjoint()).iter().any(|v| v.norm() > 1e-12 * scale) {
        return Err(Error::InvalidInput("cost matrix is not Hermitian".into()));
    }
    if q.clone().cholesky().is_none() {
        return Err(Error::InvalidInput("cost matrix is not positive definite".into()));
    }
    Ok(())
}

/// Settings of the ADMM routine.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmmConfig {
    /// Hermitian positive-definite cost `Q`.
    pub q: CMat,
    /// Penalty `ρ`, fixed across iterations.
    pub rho: f64,
    /// Initial signal `Δ⁰`.
    pub delta0: CVec,
    pub max_iters: usize,
    /// Stop once the objective moved less than this over `objective_window` iterations...
    pub objective_tol: f64,
    pub objective_window: usize,
    /// ...and the residual norm is below this.
    pub residual_tol: f64,
}

impl AdmmConfig {
    /// `Q = I`, `ρ = 1`, `Δ⁰ = 0` for a signal with `n` entries.
    pub fn new(n: usize) -> Self {
        Self {
            q: CMat::identity(n, n),
            rho: 1.0,
            delta0: CVec::zeros(n),
            max_iters: 200,
            objective_tol: 1e-8,
            objective_window: 5,
            residual_tol: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_cost(&self.q, self.delta0.len())?;
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidInput(format!("penalty must be positive, got {}", self.rho)));
        }
        if self.max_iters == 0 || self.objective_window == 0 {
            return Err(Error::InvalidInput("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

/// One ADMM iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmmStep {
    /// `Re[Δ† Q Δ]` after the signal update.
    pub objective: f64,
    /// `‖R‖₂` over the aliases of every pair.
    pub residual: f64,
    /// `‖Π‖₂` after the dual update.
    pub dual_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdmmTrace {
    pub steps: Vec<AdmmStep>,
    pub converged: bool,
    /// Leading steps taken on the shared-noise duals (zero start only).
    pub warmup: usize,
    /// Every pair's dual re-solved from scratch at the returned signal.
    pub verified: bool,
    /// Pairs whose dual failed the post-hoc check.
    pub unverified: Vec<(Scenario, Scenario)>,
}

impl AdmmTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,objective,residual,dual_norm\n");
        for (i, st) in self.steps.iter().enumerate() {
            s.push_str(&format!("{},{:.12e},{:.12e},{:.12e}\n", i + 1, st.objective, st.residual, st.dual_norm));
        }
        s
    }
}

type Triplets = Vec<(usize, usize, f64)>;

/// Linear pieces of one pair's dual with the signal products split off.
///
/// Dual variables are `[y; w]`. On the primal columns touched by the signal
/// and in the leading row, the signal-dependent part of the contribution of
/// the multipliers `Υ1` is replaced by an alias `χ`; the residual is
/// `N(d) y_Υ1 − χ` with `N(d) = Σ_k d_k S_k`.
struct PairBlocks {
    n: usize,
    ne: usize,
    ni: usize,
    /// `A0ᵀ` as triplets, row = primal column, col = equality multiplier.
    at0: Triplets,
    gt: Triplets,
    b0: DVector<f64>,
    h: DVector<f64>,
    cols: Vec<usize>,
    ups1: Vec<usize>,
    /// Position in `ups1` of each equality multiplier, if any.
    ups1_pos: Vec<Option<usize>>,
    /// `S_k` for each signal coordinate.
    s: Vec<DMatrix<f64>>,
}

impl PairBlocks {
    fn new(dual: &DualSystem) -> Self {
        let p = &dual.primal;
        let (n, ne, ni) = (p.n, dual.n_eq(), dual.n_ineq());
        let mut at0 = Vec::new();
        for i in 0..ne {
            for j in 0..n {
                let v = p.a_eq[(i, j)];
                if v != 0.0 {
                    at0.push((j, i, v));
                }
            }
        }
        let mut gt = Vec::new();
        for i in 0..ni {
            for j in 0..n {
                let v = p.g[(i, j)];
                if v != 0.0 {
                    gt.push((j, i, v));
                }
            }
        }
        let cols = dual.bilinear_columns.clone();
        let ups1 = dual.upsilon1.clone();
        let mut ups1_pos = vec![None; ne];
        for (k, &i) in ups1.iter().enumerate() {
            ups1_pos[i] = Some(k);
        }
        let s: Vec<DMatrix<f64>> = std::iter::once((&p.a_eq, &p.b_eq))
            .chain(dual.a_slopes.iter().zip(&dual.b_slopes))
            .map(|(a, b)| {
                let mut m = DMatrix::zeros(cols.len() + 1, ups1.len());
                for (r, &c) in cols.iter().enumerate() {
                    for (k, &u) in ups1.iter().enumerate() {
                        m[(r, k)] = a[(u, c)];
                    }
                }
                for (k, &u) in ups1.iter().enumerate() {
                    m[(cols.len(), k)] = b[u];
                }
                m
            })
            .collect();
        let s = s[1..].to_vec();
        Self { n, ne, ni, at0, gt, b0: p.b_eq.clone(), h: p.h.clone(), cols, ups1, ups1_pos, s }
    }

    fn alias_len(&self) -> usize {
        self.cols.len() + 1
    }

    /// `Σ_k d_k S_k`.
    fn n_of(&self, d: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.alias_len(), self.ups1.len());
        for (k, s) in self.s.iter().enumerate() {
            if d[k] != 0.0 {
                m += s * d[k];
            }
        }
        m
    }

    /// Columns `S_k y1`.
    fn m_of(&self, y1: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.alias_len(), self.s.len());
        for (k, s) in self.s.iter().enumerate() {
            m.set_column(k, &(s * y1));
        }
        m
    }

    /// Linear rows of the dual with aliases in place of the products.
    /// Variable layout from `base`: `[y_free; w; χ]`. With `prev = None`,
    /// `y_free` is all of `y`. Otherwise `prev` is a step-1 point `[y; w; χ]`
    /// whose `Υ1` entries are held fixed and `y_free` excludes them; the
    /// right-hand sides are then taken from `prev` itself so the system stays
    /// consistent despite solver round-off in the overdetermined rows.
    fn push_rows(&self, sf: &mut SparseForm, base: usize, prev: Option<&DVector<f64>>) -> usize {
        let y_index: Vec<Option<usize>> = match prev {
            None => (0..self.ne).map(Some).collect(),
            Some(_) => {
                let mut next = 0;
                (0..self.ne)
                    .map(|i| {
                        if self.ups1_pos[i].is_some() {
                            None
                        } else {
                            next += 1;
                            Some(next - 1)
                        }
                    })
                    .collect()
            }
        };
        let ny = y_index.iter().flatten().count();
        let (w0, c0) = (base + ny, base + ny + self.ni);
        let row0 = sf.b_eq.len();
        let mut rhs = vec![0.0; self.n];
        // previous point with w pushed back into its cone
        let (py, pw, pc) = match prev {
            Some(x) => (
                x.rows(0, self.ne).into_owned(),
                x.rows(self.ne, self.ni).map(|v| v.max(0.0)),
                x.rows(self.ne + self.ni, self.alias_len()).into_owned(),
            ),
            None => (DVector::zeros(0), DVector::zeros(0), DVector::zeros(0)),
        };
        for &(r, i, v) in &self.at0 {
            if let Some(j) = y_index[i] {
                sf.a_eq.push((row0 + r, base + j, v));
                if prev.is_some() {
                    rhs[r] += v * py[i];
                }
            }
        }
        for &(r, i, v) in &self.gt {
            sf.a_eq.push((row0 + r, w0 + i, v));
            if prev.is_some() {
                rhs[r] += v * pw[i];
            }
        }
        for (k, &c) in self.cols.iter().enumerate() {
            sf.a_eq.push((row0 + c, c0 + k, 1.0));
            if prev.is_some() {
                rhs[c] += pc[k];
            }
        }
        sf.b_eq.extend(rhs);
        // b0ᵀy + hᵀw + χ_lead ≤ −1
        let lead = sf.h.len();
        let mut free_prev = 0.0;
        let mut fixed = 0.0;
        for i in 0..self.ne {
            if self.b0[i] == 0.0 {
                continue;
            }
            match y_index[i] {
                Some(j) => {
                    sf.g.push((lead, base + j, self.b0[i]));
                    if prev.is_some() {
                        free_prev += self.b0[i] * py[i];
                    }
                }
                None => fixed += self.b0[i] * py[i],
            }
        }
        for i in 0..self.ni {
            if self.h[i] != 0.0 {
                sf.g.push((lead, w0 + i, self.h[i]));
                if prev.is_some() {
                    free_prev += self.h[i] * pw[i];
                }
            }
        }
        sf.g.push((lead, c0 + self.cols.len(), 1.0));
        if prev.is_some() {
            free_prev += pc[self.cols.len()];
            sf.h.push(free_prev.max(-1.0 - fixed));
        } else {
            sf.h.push(-1.0);
        }
        for i in 0..self.ni {
            sf.g.push((sf.h.len(), w0 + i, -1.0));
            sf.h.push(0.0);
        }
        ny + self.ni + self.alias_len()
    }
}

/// `½xᵀPx + qᵀx` accumulated as upper-triangle triplets.
#[derive(Default)]
struct Quadratic {
    p: Triplets,
    q: Vec<f64>,
}

impl Quadratic {
    fn with_len(n: usize) -> Self {
        Self { p: Vec::new(), q: vec![0.0; n] }
    }

    /// Adds `ρ‖L x + c‖²` where `L` acts on the variables listed in `idx`.
    fn add_square(&mut self, rho: f64, l: &DMatrix<f64>, idx: &[usize], c: &DVector<f64>) {
        let ltl = l.transpose() * l;
        for a in 0..idx.len() {
            for b in 0..idx.len() {
                let (i, j) = (idx[a], idx[b]);
                if i <= j && ltl[(a, b)] != 0.0 {
                    self.p.push((i, j, 2.0 * rho * ltl[(a, b)]));
                }
            }
        }
        let lc = l.transpose() * c;
        for (a, &i) in idx.iter().enumerate() {
            self.q[i] += 2.0 * rho * lc[a];
        }
    }

    fn add_diag(&mut self, from: usize, to: usize, v: f64) {
        for i in from..to {
            self.p.push((i, i, v));
        }
    }
}

/// Realified `Re[Δ† Q Δ]` matrix for interleaved `(re, im)` coordinates.
fn real_cost(q: &CMat) -> DMatrix<f64> {
    let n = q.nrows();
    let mut r = DMatrix::zeros(2 * n, 2 * n);
    for a in 0..n {
        for b in 0..n {
            let v = q[(a, b)];
            r[(2 * a, 2 * b)] = v.re;
            r[(2 * a + 1, 2 * b + 1)] = v.re;
            r[(2 * a, 2 * b + 1)] = -v.im;
            r[(2 * a + 1, 2 * b)] = v.im;
        }
    }
    r
}

/// Scale of the proximal term keeping the subproblems strictly convex.
const PROX: f64 = 1e-6;

/// Design a small signal separating every pair: ADMM over the bilinear
/// Farkas dual systems, alternating between the dual variables with the
/// signal fixed and the signal with the multipliers of `Δ` fixed.
///
/// `Δ⁰ = 0` is a stationary point of this splitting for the
/// independent-noise duals: with no signal, the multipliers of `Δ` do not
/// affect the residual, step 1 sets them to zero and step 2 then sees no
/// gradient. From a zero start the routine therefore first iterates on the
/// shared-noise duals, whose multipliers of `Δ` are tied to the noise rows,
/// until their residual drops below `1e-3`, and continues from there on the
/// duals of `problem`.
///
/// The returned signal is the last iterate, or the verified iterate of
/// least cost if the last one does not verify. Verification re-solves every
/// pair's dual from scratch.
pub fn optimize_auxiliary(
    pairs: &[(Scenario, Scenario)],
    cfg: &AdmmConfig,
    problem: &SeparationProblem,
) -> Result<(AuxSignal, AdmmTrace)> {
    cfg.validate()?;
    if cfg.delta0.len() != problem.ibr_count * problem.kind.width() {
        return Err(Error::InvalidInput(format!(
            "initial signal has {} entries, the network needs {}",
            cfg.delta0.len(),
            problem.ibr_count * problem.kind.width()
        )));
    }
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no scenario pairs to separate".into()));
    }
    let template = AuxSignal { delta: cfg.delta0.clone(), kind: problem.kind, caps: problem.caps.clone() };
    let duals = build_duals(problem, pairs)?;
    let mut d = template.to_real();
    let mut trace = AdmmTrace::default();

    if d.iter().all(|v| *v == 0.0) {
        if verify(&duals, &d).is_empty() {
            // the models are already separated without a signal
            trace.steps.push(AdmmStep { objective: 0.0, residual: 0.0, dual_norm: 0.0 });
            trace.converged = true;
            trace.verified = true;
            return Ok((template, trace));
        }
        if problem.form != CouplingForm::Shared {
            let mut literal = problem.clone();
            literal.form = CouplingForm::Shared;
            let blocks: Vec<PairBlocks> = build_duals(&literal, pairs)?.iter().map(PairBlocks::new).collect();
            let out = run_stage(&blocks, None, cfg, &template, &problem.unc.nominal, d, 1e-3, &mut trace)?;
            d = out.0;
            trace.warmup = trace.steps.len();
        }
    }
    let blocks: Vec<PairBlocks> = duals.iter().map(PairBlocks::new).collect();
    let (last, best, converged) =
        run_stage(&blocks, Some(&duals), cfg, &template, &problem.unc.nominal, d, cfg.residual_tol, &mut trace)?;
    trace.converged = converged;
    d = last;
    let mut failed = verify(&duals, &d);
    if !failed.is_empty() {
        if let Some(b) = best {
            d = b;
            failed = verify(&duals, &d);
        }
    }
    trace.unverified = failed.iter().map(|&i| pairs[i]).collect();
    trace.verified = failed.is_empty();
    Ok((template.with_real(&d)?, trace))
}

/// One ADMM run from `d` with `Π = 0`. Returns the last iterate, the
/// cheapest verified iterate (when `duals` is given) and whether the
/// termination test passed with residual threshold `residual_tol`.
#[allow(clippy::too_many_arguments)]
fn run_stage(
    blocks: &[PairBlocks],
    duals: Option<&[DualSystem]>,
    cfg: &AdmmConfig,
    template: &AuxSignal,
    nominal: &CVec,
    mut d: DVector<f64>,
    residual_tol: f64,
    trace: &mut AdmmTrace,
) -> Result<(DVector<f64>, Option<DVector<f64>>, bool)> {
    let q_real = real_cost(&cfg.q);
    let nd = q_real.nrows();
    let rho = cfg.rho;
    let mut pi: Vec<DVector<f64>> = blocks.iter().map(|b| DVector::zeros(b.alias_len())).collect();
    let mut best: Option<(f64, DVector<f64>)> = None;
    let start = trace.steps.len();

    for _ in 0..cfg.max_iters {
        // step 1: dual variables of each pair with Δ fixed
        let mut prevs = Vec::with_capacity(blocks.len());
        for (b, pi_b) in blocks.iter().zip(&pi) {
            let mut sf = SparseForm::default();
            let len = b.push_rows(&mut sf, 0, None);
            sf.n = len;
            let mut quad = Quadratic::with_len(len);
            // L x = N(d) y_Υ1 − χ
            let c0 = b.ne + b.ni;
            let mut idx: Vec<usize> = b.ups1.clone();
            idx.extend(c0..c0 + b.alias_len());
            let mut l = DMatrix::zeros(b.alias_len(), idx.len());
            l.view_mut((0, 0), (b.alias_len(), b.ups1.len())).copy_from(&b.n_of(&d));
            for k in 0..b.alias_len() {
                l[(k, b.ups1.len() + k)] = -1.0;
            }
            quad.add_square(rho, &l, &idx, pi_b);
            quad.add_diag(0, len, PROX);
            prevs.push(solve_qp_sparse(&sf, &quad.p, &quad.q, true)?.x);
        }

        // step 2: Δ jointly with the remaining dual variables
        let mut sf = SparseForm::default();
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut base = nd;
        for (b, prev) in blocks.iter().zip(&prevs) {
            offsets.push(base);
            base += b.push_rows(&mut sf, base, Some(prev));
        }
        sf.n = base;
        add_caps(&mut sf, template, nominal)?;
        let mut quad = Quadratic::with_len(base);
        for a in 0..nd {
            for c in a..nd {
                let v = q_real[(a, c)] + q_real[(c, a)];
                if v != 0.0 {
                    quad.p.push((a, c, v));
                }
            }
        }
        let mut ms = Vec::with_capacity(blocks.len());
        for ((b, prev), (&off, pi_b)) in blocks.iter().zip(&prevs).zip(offsets.iter().zip(&pi)) {
            let y1 = DVector::from_iterator(b.ups1.len(), b.ups1.iter().map(|&i| prev[i]));
            let m = b.m_of(&y1);
            let c0 = off + (b.ne - b.ups1.len()) + b.ni;
            let mut idx: Vec<usize> = (0..nd).collect();
            idx.extend(c0..c0 + b.alias_len());
            let mut l = DMatrix::zeros(b.alias_len(), idx.len());
            l.view_mut((0, 0), (b.alias_len(), nd)).copy_from(&m);
            for k in 0..b.alias_len() {
                l[(k, nd + k)] = -1.0;
            }
            quad.add_square(rho, &l, &idx, pi_b);
            ms.push((m, c0));
        }
        quad.add_diag(nd, base, PROX);
        let sol = solve_qp_sparse(&sf, &quad.p, &quad.q, true)?;
        d = sol.x.rows(0, nd).into_owned();

        // dual update on R = N(d) y_Υ1 − χ
        let mut r2 = 0.0;
        for ((m, c0), (b, pi_b)) in ms.iter().zip(blocks.iter().zip(pi.iter_mut())) {
            let r = m * &d - sol.x.rows(*c0, b.alias_len());
            r2 += r.norm_squared();
            *pi_b += r;
        }
        let objective = d.dot(&(&q_real * &d));
        let residual = r2.sqrt();
        let dual_norm = pi.iter().map(|p| p.norm_squared()).sum::<f64>().sqrt();
        trace.steps.push(AdmmStep { objective, residual, dual_norm });

        if let Some(duals) = duals {
            if residual <= 1e-4 && best.as_ref().is_none_or(|(o, _)| objective < *o) && verify(duals, &d).is_empty() {
                best = Some((objective, d.clone()));
            }
        }
        let w = cfg.objective_window;
        let done = trace.steps.len() - start;
        let settled = done > w && (objective - trace.steps[trace.steps.len() - 1 - w].objective).abs() < cfg.objective_tol;
        if residual < residual_tol && (settled || duals.is_none()) {
            return Ok((d, best.map(|b| b.1), true));
        }
    }
    Ok((d, best.map(|b| b.1), false))
}

/// Indices of the pairs whose dual is not feasible at `d`.
fn verify(duals: &[DualSystem], d: &DVector<f64>) -> Vec<usize> {
    duals
        .iter()
        .enumerate()
        .filter(|(_, dual)| !matches!(dual.solve(d), Ok(Some(p)) if dual.residual(d, &p) <= FEAS_TOL))
        .map(|(i, _)| i)
        .collect()
}

/// `‖i_k(Δ)‖₂ ≤ cap_k` on the signal block (the leading variables).
fn add_caps(sf: &mut SparseForm, signal: &AuxSignal, nominal: &CVec) -> Result<()> {
    let Some(caps) = &signal.caps else { return Ok(()) };
    if caps.len() != signal.ibr_count() {
        return Err(Error::InvalidInput("one current cap per inverter is required".into()));
    }
    let map = signal.injection_map(nominal.len() / 3)?;
    for k in 0..caps.len() {
        let mut m = Vec::new();
        let mut c = vec![caps[k]];
        for p in 0..3 {
            let row = 3 * k + p;
            c.push(nominal[row].re);
            c.push(nominal[row].im);
            for j in 0..map.ncols() {
                let v = map[(row, j)];
                // (re, im) of v·(x + iy)
                for (r, coef_x, coef_y) in [(1 + 2 * p, v.re, -v.im), (2 + 2 * p, v.im, v.re)] {
                    if coef_x != 0.0 {
                        m.push((r, 2 * j, coef_x));
                    }
                    if coef_y != 0.0 {
                        m.push((r, 2 * j + 1, coef_y));
                    }
                }
            }
        }
        sf.socs.push((m, c));
    }
    Ok(())
}
