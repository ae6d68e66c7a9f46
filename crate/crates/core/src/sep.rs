//! Separation of scenario pairs: Farkas dual systems of the relaxed
//! intersections, three-way verdicts, and the uniform-injection grid scan.
//!
//! The dual is generated mechanically from the realified primal
//! `A(d) x = b(d)`, `G x ≤ h`, where `d` is the realified signal. Because the
//! signal only shifts the nominal sources, `A` and `b` are affine in `d`; the
//! slopes are recovered by building the primal at `d = 0` and at each unit
//! vector. The dual system is then
//!
//! ```text
//! A(d)ᵀ y + Gᵀ w = 0,   b(d)ᵀ y + hᵀ w ≤ −1,   w ≥ 0.
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::auxopt::{AuxSignal, InjectionKind};
use crate::config::ScenarioFile;
use crate::convexsolve::{feasible, real_to_cmat, solve_feasibility, ConstraintSystem, Feasibility, StandardForm, Var, FEAS_TOL};
use crate::faults::{LlgLoop, PretestCoeffs, Scenario};
use crate::geom::{Point, SvgPlot};
use crate::netmodel::{FaultNominal, ThreePhaseNetwork};
use crate::posttest::SourceUncertainty;
use crate::pretest::{build_intersection, res_pins, CouplingForm, IntersectionOptions, PretestModel, WVariant};
use crate::{c64, CMat, CVec, Error, Result, C64};

/// Everything needed to decide separation for any pair of a scenario list.
#[derive(Clone, Debug)]
pub struct SeparationProblem {
    pub unc: SourceUncertainty,
    pub m_lower: f64,
    pub form: CouplingForm,
    pub kind: InjectionKind,
    pub ibr_count: usize,
    /// Per-inverter current caps honoured by the signal design.
    pub caps: Option<DVector<f64>>,
    models: HashMap<Scenario, PretestModel>,
}

impl SeparationProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        net: &ThreePhaseNetwork,
        scenarios: &[Scenario],
        nominal: FaultNominal,
        llg: LlgLoop,
        unc: SourceUncertainty,
        m_lower: f64,
        kind: InjectionKind,
    ) -> Result<Self> {
        let mut models = HashMap::new();
        for &s in scenarios {
            models.insert(s, PretestModel::new(net, s, nominal, nominal.r_f, llg)?);
        }
        Ok(Self { unc, m_lower, form: CouplingForm::default(), kind, ibr_count: net.ibr_buses().len(), caps: None, models })
    }

    /// Problem for every scenario named in the file's pair list.
    pub fn from_file(file: &ScenarioFile) -> Result<(Self, ThreePhaseNetwork)> {
        let net = file.network()?;
        let mut scenarios: Vec<Scenario> = Vec::new();
        for (a, b) in file.pairs()? {
            for s in [a, b] {
                if !scenarios.contains(&s) {
                    scenarios.push(s);
                }
            }
        }
        let unc = file.uncertainty(&net)?;
        let mut p = Self::new(&net, &scenarios, file.nominal(), file.llg_loop()?, unc, file.relay.m_lower, file.injection_kind()?)?;
        p.caps = file.signal.caps.as_ref().map(|c| DVector::from_column_slice(c));
        Ok((p, net))
    }

    pub fn model(&self, s: Scenario) -> Result<&PretestModel> {
        self.models.get(&s).ok_or_else(|| Error::InvalidInput(format!("scenario {s} was not prepared")))
    }

    pub fn insert_model(&mut self, m: PretestModel) {
        self.models.insert(m.scenario, m);
    }

    pub fn zero_signal(&self) -> AuxSignal {
        AuxSignal::zero(self.ibr_count, self.kind)
    }

    /// Realified signal length.
    pub fn signal_dim(&self) -> usize {
        2 * self.ibr_count * self.kind.width()
    }

    pub fn signal(&self, d: &DVector<f64>) -> Result<AuxSignal> {
        self.zero_signal().with_real(d)
    }

    /// Relaxed intersection of a pair at signal `delta`.
    pub fn intersection(&self, s1: Scenario, s2: Scenario, variant: WVariant, delta: &AuxSignal) -> Result<ConstraintSystem> {
        let opts = IntersectionOptions { form: self.form, res_pin: None };
        build_intersection(self.model(s1)?, self.model(s2)?, variant, &opts, delta, &self.unc, self.m_lower)
    }

    /// Convex restrictions of a pair; the pair is not separated if any is feasible.
    pub fn restrictions(&self, s1: Scenario, s2: Scenario, delta: &AuxSignal) -> Result<Vec<ConstraintSystem>> {
        let (m1, m2) = (self.model(s1)?, self.model(s2)?);
        let pins: Vec<Option<f64>> = if s1.is_fault() && s2.is_fault() {
            vec![None]
        } else {
            res_pins(self.m_lower).into_iter().map(Some).collect()
        };
        pins.into_iter()
            .map(|res_pin| {
                let opts = IntersectionOptions { form: self.form, res_pin };
                build_intersection(m1, m2, WVariant::Res, &opts, delta, &self.unc, self.m_lower)
            })
            .collect()
    }
}

/// Farkas dual of a relaxed intersection, affine in the realified signal.
#[derive(Clone, Debug)]
pub struct DualSystem {
    pub pair: (Scenario, Scenario),
    /// Primal at `d = 0`.
    pub primal: StandardForm,
    /// `∂A/∂d_k`, one per signal coordinate.
    pub a_slopes: Vec<DMatrix<f64>>,
    /// `∂b/∂d_k`.
    pub b_slopes: Vec<DVector<f64>>,
    /// Equality multipliers whose coefficients depend on `d` (the `Υ1` block).
    pub upsilon1: Vec<usize>,
    /// Primal columns whose dual row has a `d`-dependent term.
    pub bilinear_columns: Vec<usize>,
}

/// A dual point `(y, w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DualPoint {
    pub y: DVector<f64>,
    pub w: DVector<f64>,
}

impl DualSystem {
    /// Builds the dual of `build(d)` for `d` of length `dim`.
    pub fn from_builder<F>(pair: (Scenario, Scenario), dim: usize, build: F) -> Result<Self>
    where
        F: Fn(&DVector<f64>) -> Result<ConstraintSystem>,
    {
        let sf = |d: &DVector<f64>| -> Result<StandardForm> {
            let sys = build(d)?;
            if !sys.socs.is_empty() {
                return Err(Error::Unsupported("dual systems are built for polyhedral relaxations only".into()));
            }
            sys.standard_form(false)
        };
        let primal = sf(&DVector::zeros(dim))?;
        let mut a_slopes = Vec::with_capacity(dim);
        let mut b_slopes = Vec::with_capacity(dim);
        for k in 0..dim {
            let mut e = DVector::zeros(dim);
            e[k] = 1.0;
            let p = sf(&e)?;
            if p.a_eq.shape() != primal.a_eq.shape() || p.g != primal.g || p.h != primal.h {
                return Err(Error::Solver("primal structure changed with the signal".into()));
            }
            a_slopes.push(&p.a_eq - &primal.a_eq);
            b_slopes.push(&p.b_eq - &primal.b_eq);
        }
        let n_eq = primal.a_eq.nrows();
        let upsilon1: Vec<usize> = (0..n_eq)
            .filter(|&i| a_slopes.iter().any(|a| a.row(i).iter().any(|v| *v != 0.0)) || b_slopes.iter().any(|b| b[i] != 0.0))
            .collect();
        let bilinear_columns: Vec<usize> =
            (0..primal.n).filter(|&j| a_slopes.iter().any(|a| a.column(j).iter().any(|v| *v != 0.0))).collect();
        Ok(Self { pair, primal, a_slopes, b_slopes, upsilon1, bilinear_columns })
    }

    /// Dual of the relaxed intersection of `pair` under `variant` (Rel1 or Rel3).
    pub fn build(problem: &SeparationProblem, pair: (Scenario, Scenario), variant: WVariant) -> Result<Self> {
        if !matches!(variant, WVariant::Rel1 | WVariant::Rel3) {
            return Err(Error::Unsupported(format!("no dual system for {variant}")));
        }
        Self::from_builder(pair, problem.signal_dim(), |d| problem.intersection(pair.0, pair.1, variant, &problem.signal(d)?))
    }

    pub fn signal_dim(&self) -> usize {
        self.a_slopes.len()
    }

    pub fn n_eq(&self) -> usize {
        self.primal.a_eq.nrows()
    }

    pub fn n_ineq(&self) -> usize {
        self.primal.g.nrows()
    }

    pub fn a_at(&self, d: &DVector<f64>) -> DMatrix<f64> {
        let mut a = self.primal.a_eq.clone();
        for (k, s) in self.a_slopes.iter().enumerate() {
            if d[k] != 0.0 {
                a += s * d[k];
            }
        }
        a
    }

    pub fn b_at(&self, d: &DVector<f64>) -> DVector<f64> {
        let mut b = self.primal.b_eq.clone();
        for (k, s) in self.b_slopes.iter().enumerate() {
            b += s * d[k];
        }
        b
    }

    /// The dual as a linear feasibility problem in `[y; w]` at fixed `d`.
    pub fn at(&self, d: &DVector<f64>) -> Result<StandardForm> {
        let (ne, ni, n) = (self.n_eq(), self.n_ineq(), self.primal.n);
        let a = self.a_at(d);
        let b = self.b_at(d);
        let mut eq = DMatrix::zeros(n, ne + ni);
        eq.view_mut((0, 0), (n, ne)).copy_from(&a.transpose());
        eq.view_mut((0, ne), (n, ni)).copy_from(&self.primal.g.transpose());
        let mut g = DMatrix::zeros(1 + ni, ne + ni);
        g.view_mut((0, 0), (1, ne)).copy_from(&b.transpose());
        g.view_mut((0, ne), (1, ni)).copy_from(&self.primal.h.transpose());
        let mut h = DVector::zeros(1 + ni);
        h[0] = -1.0;
        for i in 0..ni {
            g[(1 + i, ne + i)] = -1.0;
        }
        StandardForm::new(eq, DVector::zeros(n), g, h)
    }

    pub fn split(&self, z: &DVector<f64>) -> DualPoint {
        DualPoint { y: z.rows(0, self.n_eq()).into_owned(), w: z.rows(self.n_eq(), self.n_ineq()).into_owned() }
    }

    /// Largest violation of the dual constraints at `(d, y, w)`.
    pub fn residual(&self, d: &DVector<f64>, p: &DualPoint) -> f64 {
        let a = self.a_at(d);
        let b = self.b_at(d);
        let stat = a.transpose() * &p.y + self.primal.g.transpose() * &p.w;
        let lead = b.dot(&p.y) + self.primal.h.dot(&p.w) + 1.0;
        let neg = if p.w.is_empty() { 0.0 } else { (-p.w.min()).max(0.0) };
        stat.amax().max(lead.max(0.0)).max(neg)
    }

    /// Solves the dual at `d`; returns a point when it is feasible.
    pub fn solve(&self, d: &DVector<f64>) -> Result<Option<DualPoint>> {
        match solve_feasibility(&self.at(d)?) {
            Feasibility::Feasible(z) => Ok(Some(self.split(&z))),
            Feasibility::Infeasible(_) => Ok(None),
            Feasibility::Numerical(m) => Err(Error::Solver(m)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerdictTag {
    Separated,
    NotSeparated,
    Unknown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparationVerdict {
    pub pair: (Scenario, Scenario),
    pub tag: VerdictTag,
    /// Dual point for `Separated`, restricted primal point for `NotSeparated`.
    pub certificate: DVector<f64>,
    /// Constraint violation of the certificate.
    pub residual: f64,
    pub note: String,
}

/// Three-way verdict: a feasible restriction proves overlap, a feasible dual
/// proves separation, otherwise the relaxation gap leaves it open.
pub fn check_separation(problem: &SeparationProblem, s1: Scenario, s2: Scenario, delta: &AuxSignal) -> Result<SeparationVerdict> {
    let pair = (s1, s2);
    let mut notes = Vec::new();
    for sys in problem.restrictions(s1, s2, delta)? {
        match feasible(&sys)? {
            Feasibility::Feasible(x) => {
                let residual = sys.violation(x.as_slice());
                return Ok(SeparationVerdict { pair, tag: VerdictTag::NotSeparated, certificate: x, residual, note: String::new() });
            }
            Feasibility::Numerical(m) => notes.push(format!("restriction: {m}")),
            Feasibility::Infeasible(_) => {}
        }
    }
    let dual = DualSystem::build(problem, pair, WVariant::Rel3)?;
    let d = delta.to_real();
    match dual.solve(&d) {
        Ok(Some(p)) => {
            let residual = dual.residual(&d, &p);
            if residual <= FEAS_TOL {
                let mut z = p.y.as_slice().to_vec();
                z.extend(p.w.iter());
                return Ok(SeparationVerdict {
                    pair,
                    tag: VerdictTag::Separated,
                    certificate: DVector::from_vec(z),
                    residual,
                    note: String::new(),
                });
            }
            notes.push(format!("dual point misses tolerance by {residual:.3e}"));
        }
        Ok(None) => {}
        Err(e) => notes.push(format!("dual: {e}")),
    }
    Ok(SeparationVerdict { pair, tag: VerdictTag::Unknown, certificate: DVector::zeros(0), residual: f64::NAN, note: notes.join("; ") })
}

/// `d` for the same negative-sequence phasor at every inverter.
pub fn uniform_real(problem: &SeparationProblem, delta: C64) -> DVector<f64> {
    problem.signal(&DVector::zeros(problem.signal_dim())).map(|s| {
        let n = s.delta.len();
        AuxSignal { delta: CVec::from_element(n, delta), ..s }.to_real()
    })
    .unwrap_or_else(|_| DVector::zeros(0))
}

/// Per-gridpoint separation flags for a list of pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanResult {
    pub pairs: Vec<(Scenario, Scenario)>,
    pub points: Vec<C64>,
    /// `flags[i][j]`: pair `j` separated at `points[i]`.
    pub flags: Vec<Vec<bool>>,
    /// `‖Δ‖₂` of the signal at each point.
    pub norms: Vec<f64>,
}

impl ScanResult {
    /// The separating point of smallest signal norm over all pairs.
    pub fn min_separating(&self) -> Option<(C64, f64)> {
        self.points
            .iter()
            .zip(&self.flags)
            .zip(&self.norms)
            .filter(|((_, f), _)| f.iter().all(|&b| b))
            .map(|((p, _), n)| (*p, *n))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("re,im,norm");
        for (a, b) in &self.pairs {
            let _ = write!(s, ",{a}-{b}");
        }
        s.push('\n');
        for ((p, f), n) in self.points.iter().zip(&self.flags).zip(&self.norms) {
            let _ = write!(s, "{},{},{}", p.re, p.im, n);
            for b in f {
                s.push_str(if *b { ",1" } else { ",0" });
            }
            s.push('\n');
        }
        s
    }

    /// Scatter of the points, filled where every pair is separated.
    pub fn to_svg(&self) -> String {
        let mut plot = SvgPlot::new();
        for (p, f) in self.points.iter().zip(&self.flags) {
            let color = if f.iter().all(|&b| b) { "#1f77b4" } else { "#cccccc" };
            plot.marker(Point::new(p.re, p.im), color);
        }
        if let Some((p, _)) = self.min_separating() {
            plot.marker(Point::new(p.re, p.im), "#d62728");
        }
        plot.render(480.0)
    }
}

/// Duals for a list of pairs, built once and reused across signals.
pub fn build_duals(problem: &SeparationProblem, pairs: &[(Scenario, Scenario)]) -> Result<Vec<DualSystem>> {
    pairs.iter().map(|&p| DualSystem::build(problem, p, WVariant::Rel3)).collect()
}

fn separated(dual: &DualSystem, d: &DVector<f64>) -> bool {
    matches!(dual.solve(d), Ok(Some(p)) if dual.residual(d, &p) <= FEAS_TOL)
}

/// Separation flags at every gridpoint for `Δ = δ·1`.
pub fn scan_uniform_injection(problem: &SeparationProblem, pairs: &[(Scenario, Scenario)], grid: &[C64]) -> Result<ScanResult> {
    let duals = build_duals(problem, pairs)?;
    let mut flags = Vec::with_capacity(grid.len());
    let mut norms = Vec::with_capacity(grid.len());
    for &p in grid {
        let d = uniform_real(problem, p);
        flags.push(duals.iter().map(|dual| separated(dual, &d)).collect());
        norms.push(problem.signal(&d)?.norm());
    }
    Ok(ScanResult { pairs: pairs.to_vec(), points: grid.to_vec(), flags, norms })
}

/// Smallest-norm gridpoint separating every pair, visiting points in order of
/// increasing norm and stopping at the first hit.
pub fn min_norm_uniform_injection(
    problem: &SeparationProblem,
    pairs: &[(Scenario, Scenario)],
    grid: &[C64],
) -> Result<Option<(C64, f64)>> {
    let mut duals = build_duals(problem, pairs)?;
    let mut order: Vec<C64> = grid.to_vec();
    order.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.re.total_cmp(&b.re)).then(a.im.total_cmp(&b.im)));
    for p in order {
        let d = uniform_real(problem, p);
        // try the pair that failed last time first
        if let Some(fail) = duals.iter().position(|dual| !separated(dual, &d)) {
            duals[..=fail].rotate_right(1);
            continue;
        }
        return Ok(Some((p, problem.signal(&d)?.norm())));
    }
    Ok(None)
}

fn row(v: &CVec) -> CMat {
    CMat::from_fn(1, v.len(), |_, j| v[j].conj())
}

/// Farkas dual lists of the shared-noise third relaxation, written out
/// variable by variable. The mechanical dual of the same primal must agree
/// with it; tests use this as a cross-check.
pub fn transcribed_dual(problem: &SeparationProblem, s1: Scenario, s2: Scenario, delta: &AuxSignal) -> Result<ConstraintSystem> {
    let (s1, s2) = if s2 == Scenario::N { (s2, s1) } else { (s1, s2) };
    let (m1, m2) = (problem.model(s1)?, problem.model(s2)?);
    let unc = problem.unc.with_nominal(delta.apply(&problem.unc.nominal)?);
    let n = unc.nominal.len();
    let nd = unc.noise_dim();
    let sig_h = unc.sigma_map().adjoint();
    let p_t = real_to_cmat(&unc.h_rows()?.transpose());
    let rows = p_t.ncols();
    let u0 = &unc.nominal;
    let one_t = CMat::from_element(1, rows, c64(1.0, 0.0));
    let id = CMat::identity(n, n);
    let re = |v: f64| c64(v, 0.0);

    let mut sys = ConstraintSystem::new();
    let alpha = sys.add_complex("alpha", 3);
    // Re[u°†(Γ1 − Γ2)† α]
    let mut lead: Vec<(CMat, Var)> = vec![(row(&((&m1.gamma - &m2.gamma) * u0)), alpha)];
    let mut v_l: Vec<(CMat, Var)> = Vec::new();
    let mut faults = Vec::new();

    match &m1.coeffs {
        PretestCoeffs::Normal { omega_n } => {
            let eps = sys.add_complex("epsilon", 3);
            let zeta = sys.add_complex("zeta", n);
            let phi = sys.add_real("phi_N", rows);
            lead.push((row(u0), zeta));
            lead.push((-&one_t, phi));
            v_l.push((CMat::identity(3, 3), eps));
            sys.eq("u column", &[(&omega_n.adjoint(), eps), (&(-&id), zeta)], &CVec::zeros(n))?;
            let g = &sig_h * m1.gamma.adjoint();
            sys.eq_re("lambda_N column", &[(&sig_h, zeta), (&g, alpha), (&p_t, phi)], &CVec::zeros(nd))?;
            sys.le("phi_N nonneg", &[(&(-CMat::identity(rows, rows)), phi)], &CVec::zeros(rows))?;
            faults.push((m2, -1.0));
        }
        PretestCoeffs::Fault { .. } => {
            faults.push((m1, 1.0));
            faults.push((m2, -1.0));
        }
    }

    for (m, sign) in faults {
        let PretestCoeffs::Fault { psi, omega_z, omega_r } = &m.coeffs else {
            return Err(Error::InvalidInput("two normal-operation models cannot be intersected".into()));
        };
        let name = |s: &str| format!("{}.{s}", m.scenario.tag());
        let beta = sys.add_complex(&name("beta"), 1);
        let g_z = sys.add_complex(&name("gamma_z"), n);
        let g_r = sys.add_complex(&name("gamma_r"), n);
        let s_z = sys.add_complex(&name("sigma_z"), n);
        let s_r = sys.add_complex(&name("sigma_r"), n);
        let phi = sys.add_real(&name("phi"), rows);
        let t_z = sys.add_real(&name("tau_z"), rows);
        let t_r = sys.add_real(&name("tau_r"), rows);
        // μ_zl, μ_zu, μ_rl, μ_ru
        let mu = sys.add_real(&name("mu"), 4);
        v_l.push((psi.adjoint(), beta));
        let g = &sig_h * m.gamma.adjoint() * re(sign);
        sys.eq_re(&name("lambda column"), &[(&sig_h, g_z), (&sig_h, g_r), (&g, alpha), (&p_t, phi)], &CVec::zeros(nd))?;
        sys.eq(&name("u_z column"), &[(&omega_z.adjoint(), beta), (&(-&id), g_z), (&(-&id), s_z)], &CVec::zeros(n))?;
        sys.eq(&name("u_r column"), &[(&omega_r.adjoint(), beta), (&(-&id), g_r), (&(-&id), s_r)], &CVec::zeros(n))?;
        sys.eq_re(&name("lambda_mz column"), &[(&sig_h, s_z), (&p_t, t_z)], &CVec::zeros(nd))?;
        sys.eq_re(&name("lambda_mr column"), &[(&sig_h, s_r), (&p_t, t_r)], &CVec::zeros(nd))?;
        let mu_z = CMat::from_row_slice(1, 4, &[re(-1.0), re(1.0), re(0.0), re(0.0)]);
        let mu_r = CMat::from_row_slice(1, 4, &[re(0.0), re(0.0), re(-1.0), re(1.0)]);
        sys.eq_re(&name("m_z column"), &[(&row(u0), g_z), (&row(u0), s_z), (&(-&one_t), t_z), (&mu_z, mu)], &CVec::zeros(1))?;
        sys.eq_re(&name("m_r column"), &[(&row(u0), g_r), (&row(u0), s_r), (&(-&one_t), t_r), (&mu_r, mu)], &CVec::zeros(1))?;
        for (v, len) in [(phi, rows), (t_z, rows), (t_r, rows), (mu, 4)] {
            sys.le(&name("nonneg"), &[(&(-CMat::identity(len, len)), v)], &CVec::zeros(len))?;
        }
        lead.push((-&one_t, phi));
        lead.push((CMat::from_row_slice(1, 4, &[re(problem.m_lower), re(-1.0), re(0.0), re(-1.0)]), mu));
    }
    let terms: Vec<(&CMat, Var)> = v_l.iter().map(|(m, v)| (m, *v)).collect();
    sys.eq("v_L column", &terms, &CVec::zeros(3))?;
    let neg: Vec<(CMat, Var)> = lead.into_iter().map(|(m, v)| (-m, v)).collect();
    let terms: Vec<(&CMat, Var)> = neg.iter().map(|(m, v)| (m, *v)).collect();
    sys.le("leading", &terms, &CVec::from_element(1, c64(1.0, 0.0)))?;
    Ok(sys)
}
