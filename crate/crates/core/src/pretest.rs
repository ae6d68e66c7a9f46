//! Pre-test constraint systems: the set of line voltages each scenario can
//! produce before the relay observes anything, the bilinear source set `W`
//! with its convex approximations, and pairwise intersections.
//!
//! Duplicated quantities carry a scenario prefix, e.g. `ag.u_z` and `ab.u_z`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::auxopt::AuxSignal;
use crate::convexsolve::{real_to_cmat, ConstraintSystem, Var};
use crate::faults::{pretest_coeffs_for, primary_loop, LlgLoop, PretestCoeffs, Scenario};
use crate::netmodel::{compute_network_matrices, FaultNominal, ThreePhaseNetwork};
use crate::posttest::{NoiseShape, SourceUncertainty};
use crate::{c64, CMat, CVec, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WVariant {
    Exact,
    Rel1,
    Rel2,
    Rel3,
    Res,
    Soc,
}

impl WVariant {
    pub const ALL: [WVariant; 6] =
        [WVariant::Exact, WVariant::Rel1, WVariant::Rel2, WVariant::Rel3, WVariant::Res, WVariant::Soc];

    pub fn tag(self) -> &'static str {
        match self {
            WVariant::Exact => "exact",
            WVariant::Rel1 => "rel1",
            WVariant::Rel2 => "rel2",
            WVariant::Rel3 => "rel3",
            WVariant::Res => "res",
            WVariant::Soc => "soc",
        }
    }

    pub fn is_convex(self) -> bool {
        self != WVariant::Exact
    }
}

impl fmt::Display for WVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for WVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WVariant::ALL
            .into_iter()
            .find(|v| v.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown W variant '{s}'")))
    }
}

/// How the noise in the line-current coupling relates to the `W` blocks of
/// the first relaxation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CouplingForm {
    /// `u_z` and `u_r` get their own noise, and the coupling gets a third.
    /// This is a relaxation of the exact intersection.
    #[default]
    Independent,
    /// One noise vector per scenario shared by `u_z`, `u_r` and the coupling,
    /// written exactly as in the published constraint lists.
    Shared,
}

/// Handles of one `W` block inside a larger system.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WVars {
    pub u_z: Var,
    pub u_r: Var,
    pub m_z: Var,
    pub m_r: Var,
    /// Noise usable in a line-current coupling, when the variant has one.
    pub coupling_noise: Option<Var>,
}

fn ones(n: usize) -> CMat {
    CMat::from_element(n, 1, c64(1.0, 0.0))
}

fn scalar(v: f64) -> CMat {
    CMat::from_element(1, 1, c64(v, 0.0))
}

fn column(v: &CVec) -> CMat {
    CMat::from_column_slice(v.len(), 1, v.as_slice())
}

/// `λ ∈ s·Λ`, where `s` is one (None) or a real scalar variable.
fn add_lambda_bound(sys: &mut ConstraintSystem, label: &str, unc: &SourceUncertainty, lambda: Var, scale: Option<Var>) -> Result<()> {
    let d = unc.noise_dim();
    match unc.shape {
        NoiseShape::Polygon(_) => {
            let p = real_to_cmat(&unc.h_rows()?);
            let rows = p.nrows();
            match scale {
                None => sys.le(label, &[(&p, lambda)], &CVec::from_element(rows, c64(-1.0, 0.0))),
                Some(s) => sys.le(label, &[(&p, lambda), (&(-ones(rows)), s)], &CVec::zeros(rows)),
            }
        }
        NoiseShape::Ball => {
            let id = CMat::identity(d, d);
            match scale {
                None => sys.soc(label, (&[], &CVec::from_element(1, c64(1.0, 0.0))), (&[(&id, lambda)], &CVec::zeros(d))),
                Some(s) => sys.soc(label, (&[(&scalar(1.0), s)], &CVec::zeros(1)), (&[(&id, lambda)], &CVec::zeros(d))),
            }
        }
    }
}

/// `−u + m u° + Σ λ = 0`.
fn add_source_row(sys: &mut ConstraintSystem, label: &str, u: Var, m: Var, lambda: Var, u0: &CMat, sigma: &CMat) -> Result<()> {
    let n = sigma.nrows();
    sys.eq(label, &[(&(-CMat::identity(n, n)), u), (u0, m), (sigma, lambda)], &CVec::zeros(n))
}

/// Adds one `W` block with names prefixed by `prefix`. `unc.nominal` is the
/// (already shifted) nominal source vector `u°`.
pub fn add_w(
    sys: &mut ConstraintSystem,
    prefix: &str,
    variant: WVariant,
    unc: &SourceUncertainty,
    m_lower: f64,
    form: CouplingForm,
) -> Result<WVars> {
    unc.validate()?;
    if !(0.0..=1.0).contains(&m_lower) {
        return Err(Error::InvalidInput(format!("close-in threshold {m_lower} is outside [0, 1]")));
    }
    if matches!(variant, WVariant::Rel1 | WVariant::Rel3) && unc.shape == NoiseShape::Ball {
        return Err(Error::Unsupported(format!("{variant} is built for polygonal noise only")));
    }
    let n = 3 * unc.source_count();
    let d = unc.noise_dim();
    let sigma = unc.sigma_map();
    let u0 = column(&unc.nominal);
    let name = |s: &str| format!("{prefix}{s}");

    let u_z = sys.add_complex(&name("u_z"), n);
    let u_r = sys.add_complex(&name("u_r"), n);
    let m_z = sys.add_real(&name("m_z"), 1);
    let m_r = sys.add_real(&name("m_r"), 1);
    let one = scalar(1.0);
    let neg = scalar(-1.0);
    sys.le(&name("m_z lower"), &[(&neg, m_z)], &CVec::from_element(1, c64(m_lower, 0.0)))?;
    sys.le(&name("m_z upper"), &[(&one, m_z)], &CVec::from_element(1, c64(-1.0, 0.0)))?;
    sys.le(&name("m_r lower"), &[(&neg, m_r)], &CVec::zeros(1))?;
    sys.le(&name("m_r upper"), &[(&one, m_r)], &CVec::from_element(1, c64(-1.0, 0.0)))?;

    let mut coupling_noise = None;
    if matches!(variant, WVariant::Rel1 | WVariant::Rel3 | WVariant::Exact) {
        match form {
            CouplingForm::Independent => {
                let l_z = sys.add_real(&name("lambda_z"), d);
                let l_r = sys.add_real(&name("lambda_r"), d);
                add_source_row(sys, &name("u_z rel1"), u_z, m_z, l_z, &u0, &sigma)?;
                add_source_row(sys, &name("u_r rel1"), u_r, m_r, l_r, &u0, &sigma)?;
                add_lambda_bound(sys, &name("lambda_z in noise set"), unc, l_z, None)?;
                add_lambda_bound(sys, &name("lambda_r in noise set"), unc, l_r, None)?;
            }
            CouplingForm::Shared => {
                let l = sys.add_real(&name("lambda"), d);
                add_source_row(sys, &name("u_z rel1"), u_z, m_z, l, &u0, &sigma)?;
                add_source_row(sys, &name("u_r rel1"), u_r, m_r, l, &u0, &sigma)?;
                add_lambda_bound(sys, &name("lambda in noise set"), unc, l, None)?;
                coupling_noise = Some(l);
            }
        }
    }
    if matches!(variant, WVariant::Rel2 | WVariant::Rel3) {
        let l_z = sys.add_real(&name("lambda_mz"), d);
        let l_r = sys.add_real(&name("lambda_mr"), d);
        add_source_row(sys, &name("u_z rel2"), u_z, m_z, l_z, &u0, &sigma)?;
        add_source_row(sys, &name("u_r rel2"), u_r, m_r, l_r, &u0, &sigma)?;
        add_lambda_bound(sys, &name("lambda_mz in m_z noise set"), unc, l_z, Some(m_z))?;
        add_lambda_bound(sys, &name("lambda_mr in m_r noise set"), unc, l_r, Some(m_r))?;
    }
    match variant {
        WVariant::Exact => {
            let l = match coupling_noise {
                Some(l) => l,
                None => {
                    let l = sys.add_real(&name("lambda"), d);
                    add_lambda_bound(sys, &name("lambda in noise set"), unc, l, None)?;
                    l
                }
            };
            let id = CMat::identity(n, n);
            let neg_sigma = -&sigma;
            sys.bilinear_eq(&name("u_z exact"), (&[(&id, u_z), (&(-&u0), m_z)], &CVec::zeros(n)), m_z, (&[(&neg_sigma, l)], &CVec::zeros(n)))?;
            sys.bilinear_eq(&name("u_r exact"), (&[(&id, u_r), (&(-&u0), m_r)], &CVec::zeros(n)), m_r, (&[(&neg_sigma, l)], &CVec::zeros(n)))?;
            coupling_noise = Some(l);
        }
        WVariant::Res | WVariant::Soc => {
            let l = sys.add_real(&name("lambda_m"), d);
            add_source_row(sys, &name("u_z shared"), u_z, m_z, l, &u0, &sigma)?;
            add_source_row(sys, &name("u_r shared"), u_r, m_r, l, &u0, &sigma)?;
            if variant == WVariant::Res {
                sys.eq_re(&name("m_z = m_r"), &[(&one, m_z), (&neg, m_r)], &CVec::zeros(1))?;
                add_lambda_bound(sys, &name("lambda_m in m noise set"), unc, l, Some(m_z))?;
            } else {
                // ‖λ_m‖ ≤ √(m_z m_r) as ‖[2x; m_z − m_r]‖ ≤ m_z + m_r
                let half_sum = (&[(&one, m_z), (&one, m_r)][..], &CVec::zeros(1));
                match unc.shape {
                    NoiseShape::Polygon(_) => {
                        let s = sys.add_real(&name("s"), 1);
                        add_lambda_bound(sys, &name("lambda_m in s noise set"), unc, l, Some(s))?;
                        let two = CMat::from_column_slice(2, 1, &[c64(2.0, 0.0), c64(0.0, 0.0)]);
                        let md = CMat::from_column_slice(2, 1, &[c64(0.0, 0.0), c64(1.0, 0.0)]);
                        sys.soc(&name("hyperbolic bound"), half_sum, (&[(&two, s), (&md, m_z), (&(-&md), m_r)], &CVec::zeros(2)))?;
                    }
                    NoiseShape::Ball => {
                        let mut two = CMat::zeros(d + 1, d);
                        for i in 0..d {
                            two[(i, i)] = c64(2.0, 0.0);
                        }
                        let mut md = CMat::zeros(d + 1, 1);
                        md[(d, 0)] = c64(1.0, 0.0);
                        sys.soc(&name("hyperbolic bound"), half_sum, (&[(&two, l), (&md, m_z), (&(-&md), m_r)], &CVec::zeros(d + 1)))?;
                    }
                }
            }
            coupling_noise = Some(l);
        }
        _ => {}
    }
    Ok(WVars { u_z, u_r, m_z, m_r, coupling_noise })
}

/// The set `W` (or an approximation) around `unc.nominal`.
pub fn build_w(variant: WVariant, unc: &SourceUncertainty, m_lower: f64) -> Result<ConstraintSystem> {
    let mut sys = ConstraintSystem::new();
    add_w(&mut sys, "", variant, unc, m_lower, CouplingForm::default())?;
    Ok(sys)
}

/// Everything the pre-test builders need about one scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct PretestModel {
    pub scenario: Scenario,
    pub coeffs: PretestCoeffs,
    /// `i_L = Γ u` at the nominal fault.
    pub gamma: CMat,
}

impl PretestModel {
    pub fn new(net: &ThreePhaseNetwork, s: Scenario, nominal: FaultNominal, r_f: f64, llg: LlgLoop) -> Result<Self> {
        let mats = compute_network_matrices(net, s, nominal)?;
        let lp = primary_loop(s, net.k(), llg);
        let coeffs = pretest_coeffs_for(s, &lp, &mats, net.z(), net.k(), r_f)?;
        Ok(Self { scenario: s, coeffs, gamma: mats.gamma })
    }

    pub fn source_dim(&self) -> usize {
        self.coeffs.source_dim()
    }
}

fn check_model(s: Scenario, coeffs: &PretestCoeffs, unc: &SourceUncertainty) -> Result<()> {
    let ok = matches!((s.is_fault(), coeffs), (true, PretestCoeffs::Fault { .. }) | (false, PretestCoeffs::Normal { .. }));
    if !ok {
        return Err(Error::InvalidInput(format!("pre-test coefficients do not belong to scenario {s}")));
    }
    if coeffs.source_dim() != 3 * unc.source_count() {
        return Err(Error::InvalidInput(format!(
            "coefficients act on {} source entries, uncertainty has {}",
            coeffs.source_dim(),
            3 * unc.source_count()
        )));
    }
    Ok(())
}

/// Handles of a normal-operation block.
#[derive(Clone, Copy, Debug)]
struct NormalVars {
    u: Var,
    lambda: Var,
}

/// `Ω^N u − v_L = 0`, `−u + Σ λ^N + u° = 0`, `λ^N ∈ Λ`.
fn add_normal(sys: &mut ConstraintSystem, prefix: &str, v_l: Var, omega_n: &CMat, unc: &SourceUncertainty) -> Result<NormalVars> {
    let n = 3 * unc.source_count();
    let u = sys.add_complex(&format!("{prefix}u"), n);
    let lambda = sys.add_real(&format!("{prefix}lambda"), unc.noise_dim());
    sys.eq(&format!("{prefix}v_L"), &[(omega_n, u), (&(-CMat::identity(3, 3)), v_l)], &CVec::zeros(3))?;
    sys.eq(&format!("{prefix}u"), &[(&(-CMat::identity(n, n)), u), (&unc.sigma_map(), lambda)], &unc.nominal)?;
    add_lambda_bound(sys, &format!("{prefix}lambda in noise set"), unc, lambda, None)?;
    Ok(NormalVars { u, lambda })
}

/// `Ω_z u_z + Ω_r u_r − ψ v_L = 0`.
fn add_fault_row(sys: &mut ConstraintSystem, prefix: &str, v_l: Var, coeffs: &PretestCoeffs, w: &WVars) -> Result<()> {
    let PretestCoeffs::Fault { psi, omega_z, omega_r } = coeffs else {
        return Err(Error::InvalidInput("fault row needs fault coefficients".into()));
    };
    sys.eq(&format!("{prefix}loop voltage"), &[(omega_z, w.u_z), (omega_r, w.u_r), (&(-psi), v_l)], &CVec::zeros(1))
}

/// Pre-test system of one scenario with the nominal sources shifted by `delta`.
pub fn build_pretest(
    s: Scenario,
    variant: WVariant,
    coeffs: &PretestCoeffs,
    delta: &AuxSignal,
    unc: &SourceUncertainty,
    m_lower: f64,
) -> Result<ConstraintSystem> {
    check_model(s, coeffs, unc)?;
    let unc = unc.with_nominal(delta.apply(&unc.nominal)?);
    let mut sys = ConstraintSystem::new();
    let v_l = sys.add_complex("v_L", 3);
    match coeffs {
        PretestCoeffs::Normal { omega_n } => {
            add_normal(&mut sys, "", v_l, omega_n, &unc)?;
        }
        PretestCoeffs::Fault { .. } => {
            let w = add_w(&mut sys, "", variant, &unc, m_lower, CouplingForm::default())?;
            add_fault_row(&mut sys, "", v_l, coeffs, &w)?;
        }
    }
    Ok(sys)
}

/// Options for [`build_intersection`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IntersectionOptions {
    pub form: CouplingForm,
    /// For the restriction of a normal/fault pair: fix the common location and
    /// resistance multiplier to this value. Without a pin the product with the
    /// normal-operation sources stays bilinear.
    pub res_pin: Option<f64>,
}

/// Pins tried for the restriction of normal/fault pairs.
pub fn res_pins(m_lower: f64) -> [f64; 3] {
    [1.0, 0.5 * (1.0 + m_lower), m_lower]
}

fn prefix(s: Scenario) -> String {
    format!("{}.", s.tag())
}

/// Intersection of the pre-test sets of two scenarios under a common `v_L`
/// and `i_L`.
pub fn build_intersection(
    m1: &PretestModel,
    m2: &PretestModel,
    variant: WVariant,
    opts: &IntersectionOptions,
    delta: &AuxSignal,
    unc: &SourceUncertainty,
    m_lower: f64,
) -> Result<ConstraintSystem> {
    if m1.scenario == m2.scenario {
        return Err(Error::InvalidInput(format!("cannot intersect {} with itself", m1.scenario)));
    }
    if variant == WVariant::Rel2 {
        return Err(Error::Unsupported(
            "the second relaxation has no line-current noise to couple; use rel3 instead".into(),
        ));
    }
    check_model(m1.scenario, &m1.coeffs, unc)?;
    check_model(m2.scenario, &m2.coeffs, unc)?;
    // keep the normal scenario first
    let (m1, m2) = if m2.scenario == Scenario::N { (m2, m1) } else { (m1, m2) };
    let unc = unc.with_nominal(delta.apply(&unc.nominal)?);
    let sigma = unc.sigma_map();
    let u0 = &unc.nominal;
    let mut sys = ConstraintSystem::new();
    let v_l = sys.add_complex("v_L", 3);

    if variant == WVariant::Res {
        return res_intersection(sys, v_l, m1, m2, opts.res_pin, &unc, m_lower);
    }

    // line-current side of each scenario: (matrix, variable, constant) with i_L = M x + c
    let mut sides = Vec::new();
    for m in [m1, m2] {
        let p = prefix(m.scenario);
        match &m.coeffs {
            PretestCoeffs::Normal { omega_n } => {
                let nv = add_normal(&mut sys, &p, v_l, omega_n, &unc)?;
                sides.push((&m.gamma * &sigma, nv.lambda, &m.gamma * u0));
            }
            PretestCoeffs::Fault { .. } => {
                let w = add_w(&mut sys, &p, variant, &unc, m_lower, opts.form)?;
                add_fault_row(&mut sys, &p, v_l, &m.coeffs, &w)?;
                let noise = match w.coupling_noise {
                    Some(l) => l,
                    None => {
                        let l = sys.add_real(&format!("{p}lambda_eta"), unc.noise_dim());
                        add_lambda_bound(&mut sys, &format!("{p}lambda_eta in noise set"), &unc, l, None)?;
                        l
                    }
                };
                sides.push((&m.gamma * &sigma, noise, &m.gamma * u0));
            }
        }
    }
    let (a1, x1, c1) = &sides[0];
    let (a2, x2, c2) = &sides[1];
    sys.eq("line current", &[(a1, *x1), (&(-a2), *x2)], &(c1 - c2))?;
    Ok(sys)
}

fn res_intersection(
    mut sys: ConstraintSystem,
    v_l: Var,
    m1: &PretestModel,
    m2: &PretestModel,
    pin: Option<f64>,
    unc: &SourceUncertainty,
    m_lower: f64,
) -> Result<ConstraintSystem> {
    let one = scalar(1.0);
    let neg = scalar(-1.0);
    match (&m1.coeffs, &m2.coeffs) {
        (PretestCoeffs::Normal { omega_n }, PretestCoeffs::Fault { .. }) => {
            let nv = add_normal(&mut sys, &prefix(m1.scenario), v_l, omega_n, unc)?;
            let p = prefix(m2.scenario);
            let w = add_w(&mut sys, &p, WVariant::Res, unc, m_lower, CouplingForm::default())?;
            add_fault_row(&mut sys, &p, v_l, &m2.coeffs, &w)?;
            // m Γ_N u = Γ_f u_z
            match pin {
                Some(m) => {
                    sys.eq_re("pin m", &[(&one, w.m_z)], &CVec::from_element(1, c64(-m, 0.0)))?;
                    let g = &m1.gamma * c64(m, 0.0);
                    sys.eq("line current", &[(&g, nv.u), (&(-&m2.gamma), w.u_z)], &CVec::zeros(3))?;
                }
                None => {
                    sys.bilinear_eq(
                        "line current",
                        (&[(&(-&m2.gamma), w.u_z)], &CVec::zeros(3)),
                        w.m_z,
                        (&[(&m1.gamma, nv.u)], &CVec::zeros(3)),
                    )?;
                }
            }
        }
        (PretestCoeffs::Fault { .. }, PretestCoeffs::Fault { .. }) => {
            let mut ws = Vec::new();
            for m in [m1, m2] {
                let p = prefix(m.scenario);
                let w = add_w(&mut sys, &p, WVariant::Res, unc, m_lower, CouplingForm::default())?;
                add_fault_row(&mut sys, &p, v_l, &m.coeffs, &w)?;
                ws.push(w);
            }
            sys.eq_re("common m", &[(&one, ws[0].m_z), (&neg, ws[1].m_z)], &CVec::zeros(1))?;
            sys.eq("line current", &[(&m1.gamma, ws[0].u_z), (&(-&m2.gamma), ws[1].u_z)], &CVec::zeros(3))?;
        }
        _ => return Err(Error::InvalidInput("two normal-operation models cannot be intersected".into())),
    }
    Ok(sys)
}

/// One member of `W` together with the noise that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct WSample {
    pub u_z: CVec,
    pub u_r: CVec,
    pub m_z: f64,
    pub m_r: f64,
    pub lambda: DVector<f64>,
}

/// Random members of the exact `W` around `unc.nominal`.
pub fn sample_exact_w(unc: &SourceUncertainty, m_lower: f64, count: usize, seed: u64) -> Vec<WSample> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let m_z = rng.random_range(m_lower..=1.0);
            let m_r = rng.random_range(0.0..=1.0);
            w_sample(unc, m_z, m_r, unc.sample(&mut rng))
        })
        .collect()
}

/// Random members of the restriction: `m_z = m_r`.
pub fn sample_res_w(unc: &SourceUncertainty, m_lower: f64, count: usize, seed: u64) -> Vec<WSample> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let m = rng.random_range(m_lower..=1.0);
            w_sample(unc, m, m, unc.sample(&mut rng))
        })
        .collect()
}

pub fn w_sample(unc: &SourceUncertainty, m_z: f64, m_r: f64, lambda: DVector<f64>) -> WSample {
    let u = unc.sources(&lambda);
    WSample { u_z: &u * c64(m_z, 0.0), u_r: &u * c64(m_r, 0.0), m_z, m_r, lambda }
}

/// Writes the coordinates of `sample` into every block of a `W` built with
/// `prefix`. Scaled noise blocks get `m λ`; the hyperbolic bound variable gets
/// `√(m_z m_r)`.
pub fn substitute(sys: &ConstraintSystem, prefix: &str, sample: &WSample, x: &mut [f64]) {
    let get = |s: &str| sys.var(&format!("{prefix}{s}"));
    let real = |v: f64| DVector::from_element(1, v);
    if let Some(v) = get("u_z") {
        sys.set_complex(v, &sample.u_z, x);
    }
    if let Some(v) = get("u_r") {
        sys.set_complex(v, &sample.u_r, x);
    }
    if let Some(v) = get("m_z") {
        sys.set_real(v, &real(sample.m_z), x);
    }
    if let Some(v) = get("m_r") {
        sys.set_real(v, &real(sample.m_r), x);
    }
    for (name, scale) in [
        ("lambda", 1.0),
        ("lambda_z", sample.m_z),
        ("lambda_mz", sample.m_z),
        ("lambda_r", sample.m_r),
        ("lambda_mr", sample.m_r),
        ("lambda_m", sample.m_z),
    ] {
        if let Some(v) = get(name) {
            sys.set_real(v, &(&sample.lambda * scale), x);
        }
    }
    if let Some(v) = get("s") {
        sys.set_real(v, &real((sample.m_z * sample.m_r).sqrt()), x);
    }
}

/// Whether `sample` lies in the variant's `W` to within `tol`.
pub fn contains_sample(variant: WVariant, unc: &SourceUncertainty, m_lower: f64, sample: &WSample, tol: f64) -> Result<bool> {
    let sys = build_w(variant, unc, m_lower)?;
    let mut x = vec![0.0; sys.real_dim()];
    substitute(&sys, "", sample, &mut x);
    Ok(sys.violation(&x) <= tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auxopt::InjectionKind;
    use crate::convexsolve::{feasible, Feasibility};
    use crate::posttest::{simulate_fault, RelaySettings};
    use crate::synth::{random_network, two_bus};

    fn unc_for(net: &ThreePhaseNetwork, sigma: f64, sides: usize) -> SourceUncertainty {
        SourceUncertainty::uniform(net.nominal_sources(), sigma, NoiseShape::Polygon(sides)).unwrap()
    }

    fn model(net: &ThreePhaseNetwork, s: Scenario) -> PretestModel {
        PretestModel::new(net, s, FaultNominal::default(), 1.0, LlgLoop::default()).unwrap()
    }

    #[test]
    fn variant_tags_parse() {
        for v in WVariant::ALL {
            assert_eq!(v.tag().parse::<WVariant>().unwrap(), v);
        }
        assert!("rel4".parse::<WVariant>().is_err());
    }

    #[test]
    fn unit_threshold_pins_m_z() {
        let net = random_network(3, 4).unwrap();
        let unc = unc_for(&net, 0.1, 6);
        let mut sys = build_w(WVariant::Rel1, &unc, 1.0).unwrap();
        let m_z = sys.var("m_z").unwrap();
        sys.le("probe", &[(&scalar(1.0), m_z)], &CVec::from_element(1, c64(-0.99, 0.0))).unwrap();
        assert!(feasible(&sys).unwrap().is_infeasible());

        // and then u_z = u° + Σλ exactly
        let s = w_sample(&unc, 1.0, 0.3, unc.sample(&mut ChaCha8Rng::seed_from_u64(1)));
        assert!(contains_sample(WVariant::Rel1, &unc, 1.0, &s, 1e-12).unwrap());
    }

    #[test]
    fn exact_samples_lie_in_the_relaxations() {
        let net = random_network(5, 5).unwrap();
        let unc = unc_for(&net, 0.2, 8);
        let samples = sample_exact_w(&unc, 0.15, 200, 9);
        for v in [WVariant::Exact, WVariant::Rel1, WVariant::Rel2, WVariant::Rel3] {
            for s in &samples {
                assert!(contains_sample(v, &unc, 0.15, s, 1e-8).unwrap(), "{v}");
            }
        }
    }

    #[test]
    fn restriction_samples_lie_in_exact_soc_and_rel1() {
        let net = random_network(6, 5).unwrap();
        let unc = unc_for(&net, 0.2, 10);
        for s in sample_res_w(&unc, 0.15, 200, 4) {
            for v in [WVariant::Res, WVariant::Exact, WVariant::Soc, WVariant::Rel1] {
                assert!(contains_sample(v, &unc, 0.15, &s, 1e-8).unwrap(), "{v}");
            }
        }
    }

    #[test]
    fn samples_are_reproducible_and_zero_resistance_gives_zero() {
        let net = random_network(2, 3).unwrap();
        let unc = unc_for(&net, 0.1, 4);
        assert_eq!(sample_exact_w(&unc, 0.15, 20, 3), sample_exact_w(&unc, 0.15, 20, 3));
        let s = w_sample(&unc, 0.5, 0.0, unc.sample(&mut ChaCha8Rng::seed_from_u64(0)));
        assert!(s.u_r.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn ball_noise_rejected_for_first_relaxation() {
        let net = random_network(2, 3).unwrap();
        let unc = SourceUncertainty::uniform(net.nominal_sources(), 0.1, NoiseShape::Ball).unwrap();
        assert!(matches!(build_w(WVariant::Rel1, &unc, 0.15), Err(Error::Unsupported(_))));
        assert!(matches!(build_w(WVariant::Rel3, &unc, 0.15), Err(Error::Unsupported(_))));
        let s = sample_res_w(&unc, 0.15, 20, 1);
        for v in [WVariant::Rel2, WVariant::Res, WVariant::Soc] {
            for x in &s {
                assert!(contains_sample(v, &unc, 0.15, x, 1e-8).unwrap(), "{v}");
            }
        }
    }

    #[test]
    fn simulated_fault_satisfies_exact_system() {
        let net = random_network(11, 6).unwrap();
        let unc = unc_for(&net, 0.1, 6);
        let relay = RelaySettings::new(net.z(), net.k(), 1.0, 0.15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for s in Scenario::faults() {
            let m = model(&net, s);
            let mats = compute_network_matrices(&net, s, FaultNominal::default()).unwrap();
            let sys = build_pretest(s, WVariant::Exact, &m.coeffs, &AuxSignal::zero(1, InjectionKind::default()), &unc, 0.15).unwrap();
            for _ in 0..5 {
                let lambda = unc.sample(&mut rng);
                let (m_z, m_r) = (rand::Rng::random_range(&mut rng, 0.15..1.0), rand::Rng::random_range(&mut rng, 0.0..1.0));
                let meas = simulate_fault(s, &mats, &unc, &relay, m_z, m_r, &lambda).unwrap();
                let sample = w_sample(&unc, m_z, m_r, lambda);
                let mut x = vec![0.0; sys.real_dim()];
                substitute(&sys, "", &sample, &mut x);
                sys.set_complex(sys.var("v_L").unwrap(), &CVec::from_column_slice(meas.v_l.as_slice()), &mut x);
                assert!(sys.violation(&x) < 1e-9, "{s}: {}", sys.violation(&x));
            }
        }
    }

    #[test]
    fn zero_signal_reproduces_the_unperturbed_system() {
        let net = random_network(4, 5).unwrap();
        let unc = unc_for(&net, 0.1, 6);
        let m = model(&net, Scenario::Ab);
        let zero = AuxSignal::zero(net.ibr_buses().len(), InjectionKind::default());
        let a = build_pretest(Scenario::Ab, WVariant::Rel3, &m.coeffs, &zero, &unc, 0.15).unwrap();
        let mut direct = ConstraintSystem::new();
        let v_l = direct.add_complex("v_L", 3);
        let w = add_w(&mut direct, "", WVariant::Rel3, &unc, 0.15, CouplingForm::default()).unwrap();
        add_fault_row(&mut direct, "", v_l, &m.coeffs, &w).unwrap();
        assert_eq!(a.dump(), direct.dump());
    }

    #[test]
    fn noiseless_normal_operation_fixes_v_l() {
        let net = random_network(8, 5).unwrap();
        let unc = unc_for(&net, 0.0, 6);
        let m = model(&net, Scenario::N);
        let sys = build_pretest(Scenario::N, WVariant::Rel3, &m.coeffs, &AuxSignal::zero(1, InjectionKind::default()), &unc, 0.15).unwrap();
        let Feasibility::Feasible(x) = feasible(&sys).unwrap() else { panic!("normal operation must be feasible") };
        let v_l = sys.get_complex(sys.var("v_L").unwrap(), x.as_slice());
        let PretestCoeffs::Normal { omega_n } = &m.coeffs else { unreachable!() };
        let expect = omega_n * &unc.nominal;
        assert!((v_l - expect).norm() < 1e-7);
    }

    #[test]
    fn huge_noise_makes_intersections_feasible() {
        let net = random_network(12, 5).unwrap();
        let unc = unc_for(&net, 50.0, 8);
        let zero = AuxSignal::zero(net.ibr_buses().len(), InjectionKind::default());
        for (a, b) in [(Scenario::N, Scenario::Ag), (Scenario::Ag, Scenario::Bc)] {
            let sys = build_intersection(&model(&net, a), &model(&net, b), WVariant::Rel3, &IntersectionOptions::default(), &zero, &unc, 0.15)
                .unwrap();
            assert!(feasible(&sys).unwrap().is_feasible(), "{a}-{b}");
        }
    }

    #[test]
    fn noiseless_distinct_models_do_not_intersect() {
        let net = two_bus(c64(0.02, 0.2), c64(2.0, 0.0), c64(0.5, 0.2)).unwrap();
        let unc = unc_for(&net, 0.0, 6);
        let zero = AuxSignal::zero(1, InjectionKind::default());
        let (n, ag) = (model(&net, Scenario::N), model(&net, Scenario::Ag));
        assert!((&n.gamma * &unc.nominal - &ag.gamma * &unc.nominal).norm() > 1e-3);
        let sys = build_intersection(&n, &ag, WVariant::Rel3, &IntersectionOptions::default(), &zero, &unc, 0.15).unwrap();
        assert!(feasible(&sys).unwrap().is_infeasible());
    }

    #[test]
    fn second_relaxation_alone_cannot_be_intersected() {
        let net = random_network(1, 3).unwrap();
        let unc = unc_for(&net, 0.1, 6);
        let zero = AuxSignal::zero(1, InjectionKind::default());
        let r = build_intersection(&model(&net, Scenario::N), &model(&net, Scenario::Ag), WVariant::Rel2, &IntersectionOptions::default(), &zero, &unc, 0.15);
        assert!(matches!(r, Err(Error::Unsupported(_))));
        let r = build_intersection(&model(&net, Scenario::Ag), &model(&net, Scenario::Ag), WVariant::Rel3, &IntersectionOptions::default(), &zero, &unc, 0.15);
        assert!(r.is_err());
    }

    #[test]
    fn coupling_rows_vanish_for_equal_models_and_noise() {
        let net = random_network(7, 4).unwrap();
        let unc = unc_for(&net, 0.3, 6);
        let mut a = model(&net, Scenario::Ag);
        let mut b = model(&net, Scenario::Bg);
        b.gamma = a.gamma.clone();
        a.scenario = Scenario::Ag;
        let zero = AuxSignal::zero(net.ibr_buses().len(), InjectionKind::default());
        let sys = build_intersection(&a, &b, WVariant::Rel1, &IntersectionOptions::default(), &zero, &unc, 0.15).unwrap();
        let lambda = unc.sample(&mut ChaCha8Rng::seed_from_u64(5));
        let mut x = vec![0.0; sys.real_dim()];
        sys.set_real(sys.var("ag.lambda_eta").unwrap(), &lambda, &mut x);
        sys.set_real(sys.var("bg.lambda_eta").unwrap(), &lambda, &mut x);
        for r in sys.rows.iter().filter(|r| r.label == "line current") {
            assert!(sys.eval(&r.expr, &x).norm() < 1e-12);
        }
    }
}
