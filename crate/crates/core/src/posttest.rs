//! Post-test relay characteristics: the set of apparent impedances consistent
//! with a fault of a given type once `i_L` has been measured.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::faults::{
    checked_loop_current, posttest_coeffs_for, primary_loop, LlgLoop, LoopKind, LoopSpec, Scenario,
};
use crate::geom::{
    clip_halfplane, convex_hull, hull_with_origin, minkowski_polygons, pt, regular_polygon_noise, Point, Polygon,
    Zonogon, Zonotope, GEOM_TOL,
};
use crate::netmodel::{alpha, NetworkMatrices, PhaseVector};
use crate::{c64, CMat, CVec, Error, Result, C64};

/// Sides of the polygon that stands in for a Euclidean ball when a zonotope is needed.
pub const BALL_POLYGON_SIDES: usize = 64;

/// Shape of the per-source noise set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseShape {
    /// Each source's complex noise lies in a regular polygon with unit apothem.
    Polygon(usize),
    /// The stacked noise vector has Euclidean norm at most one.
    Ball,
}

/// Nominal sources `u°` plus scaled noise `Σ λ`, `λ ∈ Λ`.
///
/// `λ` is real with two entries `(re, im)` per source; source `k` receives
/// `σ_k λ_k [1, α, α²]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceUncertainty {
    pub nominal: CVec,
    pub sigma: DVector<f64>,
    pub shape: NoiseShape,
    /// Center of `Λ`. Must be zero; kept so malformed inputs can be reported.
    pub center: DVector<f64>,
}

impl SourceUncertainty {
    pub fn new(nominal: CVec, sigma: DVector<f64>, shape: NoiseShape) -> Result<Self> {
        let n = sigma.len();
        let unc = Self { nominal, sigma, shape, center: DVector::zeros(2 * n) };
        unc.validate()?;
        Ok(unc)
    }

    /// Same scale `sigma` on every source.
    pub fn uniform(nominal: CVec, sigma: f64, shape: NoiseShape) -> Result<Self> {
        let n = nominal.len() / 3;
        Self::new(nominal, DVector::from_element(n, sigma), shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nominal.len() != 3 * self.sigma.len() {
            return Err(Error::InvalidInput(format!(
                "{} nominal phase entries for {} noise scales",
                self.nominal.len(),
                self.sigma.len()
            )));
        }
        if self.sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidInput("noise scales must be finite and nonnegative".into()));
        }
        if self.nominal.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("nominal sources must be finite".into()));
        }
        if let NoiseShape::Polygon(n) = self.shape {
            regular_polygon_noise(n)?;
        }
        if self.center.len() != 2 * self.sigma.len() || self.center.amax() > 0.0 {
            return Err(Error::InvalidInput("noise set must be centered at the origin".into()));
        }
        Ok(())
    }

    pub fn source_count(&self) -> usize {
        self.sigma.len()
    }

    pub fn noise_dim(&self) -> usize {
        2 * self.sigma.len()
    }

    pub fn with_nominal(&self, nominal: CVec) -> Self {
        Self { nominal, ..self.clone() }
    }

    pub fn with_sigma(&self, sigma: f64) -> Self {
        Self { sigma: DVector::from_element(self.source_count(), sigma), ..self.clone() }
    }

    /// Complex map `Σ` from the real noise vector to the source vector.
    pub fn sigma_map(&self) -> CMat {
        let n = self.source_count();
        let a = alpha();
        let pattern = [c64(1.0, 0.0), a, a * a];
        let mut m = CMat::zeros(3 * n, 2 * n);
        for k in 0..n {
            for p in 0..3 {
                m[(3 * k + p, 2 * k)] = pattern[p] * self.sigma[k];
                m[(3 * k + p, 2 * k + 1)] = pattern[p] * c64(0.0, self.sigma[k]);
            }
        }
        m
    }

    fn sides(&self) -> usize {
        match self.shape {
            NoiseShape::Polygon(n) => n,
            NoiseShape::Ball => BALL_POLYGON_SIDES,
        }
    }

    /// `Λ` as a zonotope; a ball is replaced by the product of per-source polygons.
    pub fn lambda_zonotope(&self) -> Result<Zonotope> {
        let poly = regular_polygon_noise(self.sides())?;
        let n = self.source_count();
        let p = poly.zonogon.generators.len();
        let mut g = DMatrix::zeros(2 * n, n * p);
        for k in 0..n {
            for (l, gen) in poly.zonogon.generators.iter().enumerate() {
                g[(2 * k, k * p + l)] = gen.x;
                g[(2 * k + 1, k * p + l)] = gen.y;
            }
        }
        Zonotope::new(self.center.clone(), g)
    }

    /// Half-space rows `P λ ≤ 1` of a polygonal `Λ`.
    pub fn h_rows(&self) -> Result<DMatrix<f64>> {
        let NoiseShape::Polygon(sides) = self.shape else {
            return Err(Error::Unsupported("a Euclidean noise ball has no half-space rows".into()));
        };
        let poly = regular_polygon_noise(sides)?;
        let n = self.source_count();
        let mut p = DMatrix::zeros(n * sides, 2 * n);
        for k in 0..n {
            for (l, row) in poly.rows.iter().enumerate() {
                p[(k * sides + l, 2 * k)] = row.normal.x;
                p[(k * sides + l, 2 * k + 1)] = row.normal.y;
            }
        }
        Ok(p)
    }

    pub fn contains(&self, lambda: &DVector<f64>, tol: f64) -> bool {
        match self.shape {
            NoiseShape::Ball => lambda.norm() <= 1.0 + tol,
            NoiseShape::Polygon(_) => self.h_rows().map(|p| (p * lambda).max() <= 1.0 + tol).unwrap_or(false),
        }
    }

    /// A random point of `Λ`.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        match self.shape {
            NoiseShape::Polygon(_) => {
                let z = self.lambda_zonotope().expect("validated noise set");
                let beta = DVector::from_fn(z.order(), |_, _| rng.random_range(-1.0..=1.0));
                z.at(&beta)
            }
            NoiseShape::Ball => {
                let d = self.noise_dim();
                let dir = DVector::from_fn(d, |_, _| {
                    // Box-Muller
                    let (a, b): (f64, f64) = (rng.random_range(f64::EPSILON..1.0), rng.random());
                    (-2.0 * a.ln()).sqrt() * (2.0 * PI * b).cos()
                });
                let r: f64 = rng.random::<f64>().powf(1.0 / d as f64);
                dir.normalize() * r
            }
        }
    }

    /// `u° + Σ λ`.
    pub fn sources(&self, lambda: &DVector<f64>) -> CVec {
        &self.nominal + self.sigma_map() * crate::convexsolve::real_to_cvec(lambda)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CharacteristicKind {
    Exact,
    ZonogonRelaxed,
    Cut,
}

/// Relay settings shared by all characteristics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelaySettings {
    pub z: C64,
    pub k: C64,
    pub r_f: f64,
    /// Close-in threshold `m̲_z`.
    pub m_lower: f64,
    /// Upper reach; 1 covers the whole line.
    pub m_upper: f64,
    pub llg_loop: LlgLoop,
}

impl RelaySettings {
    pub fn new(z: C64, k: C64, r_f: f64, m_lower: f64) -> Self {
        Self { z, k, r_f, m_lower, m_upper: 1.0, llg_loop: LlgLoop::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Characteristic {
    pub scenario: Scenario,
    pub polygon: Polygon,
    /// Local current the characteristic was adapted to.
    pub i_l: PhaseVector,
    pub kind: CharacteristicKind,
    pub loop_spec: LoopSpec,
}

/// Fault-term zonogon `ξ + Ξ Θ (u° + Σ Λ)` with `ξ, Ξ` from the measured `i_L`.
pub fn fault_term_zonogon(
    s: Scenario,
    i_l: &PhaseVector,
    unc: &SourceUncertainty,
    mats: &NetworkMatrices,
    relay: &RelaySettings,
) -> Result<(Zonogon, LoopSpec)> {
    if !s.is_fault() {
        return Err(Error::Unsupported("normal operation has no impedance characteristic".into()));
    }
    if mats.scenario != s {
        return Err(Error::InvalidInput(format!("network matrices are for {}, not {s}", mats.scenario)));
    }
    let lp = primary_loop(s, relay.k, relay.llg_loop);
    let coeffs = posttest_coeffs_for(s, &lp, i_l, relay.r_f)?;
    let row = CMat::from_row_slice(1, 3, coeffs.xi_row.as_slice()) * &mats.theta;
    let lam = unc.lambda_zonotope()?;
    let sm = unc.sigma_map();
    let center_u = &unc.nominal + &sm * crate::convexsolve::real_to_cvec(&lam.center);
    let c_f = coeffs.xi + (&row * center_u)[0];
    let row_sigma = &row * &sm;
    let gens = lam.generators.column_iter().map(|g| {
        let mut acc = C64::default();
        for (j, v) in g.iter().enumerate() {
            acc += row_sigma[(0, j)] * *v;
        }
        acc
    });
    Ok((Zonogon::from_complex(c_f, gens), lp))
}

fn reach_segment(relay: &RelaySettings) -> Polygon {
    convex_hull(&[pt(relay.z * relay.m_lower), pt(relay.z * relay.m_upper)])
}

/// Exact characteristic `{m̲_z z, m̄ z} ⊕ hull(0 ∪ fault-term zonogon)`.
pub fn exact_characteristic(
    s: Scenario,
    i_l: &PhaseVector,
    unc: &SourceUncertainty,
    mats: &NetworkMatrices,
    relay: &RelaySettings,
) -> Result<Characteristic> {
    let (zf, lp) = fault_term_zonogon(s, i_l, unc, mats, relay)?;
    let fault = hull_with_origin(&zf.vertices());
    let polygon = minkowski_polygons(&reach_segment(relay), &fault);
    Ok(Characteristic { scenario: s, polygon, i_l: *i_l, kind: CharacteristicKind::Exact, loop_spec: lp })
}

/// Zonogon relaxation, a superset of the exact characteristic.
pub fn zonogon_characteristic(
    s: Scenario,
    i_l: &PhaseVector,
    unc: &SourceUncertainty,
    mats: &NetworkMatrices,
    relay: &RelaySettings,
) -> Result<Characteristic> {
    let (zf, lp) = fault_term_zonogon(s, i_l, unc, mats, relay)?;
    let c_f = zf.center;
    let z = pt(relay.z);
    let center = (z * (relay.m_lower + relay.m_upper) + c_f) / 2.0;
    let mut gens = vec![z * (relay.m_upper - relay.m_lower) / 2.0, c_f / 2.0];
    gens.extend(zf.generators);
    let polygon = Zonogon::new(center, gens).vertices();
    Ok(Characteristic { scenario: s, polygon, i_l: *i_l, kind: CharacteristicKind::ZonogonRelaxed, loop_spec: lp })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CutOutcome {
    pub characteristic: Characteristic,
    pub warnings: Vec<String>,
}

/// Keeps the part of `c` with `Im[z] Re[z_A] ≥ Re[z] Im[z_A]`. Warns when the
/// result is empty or when it removes a vertex of `exact`.
pub fn apply_cut(c: &Characteristic, z: C64, exact: Option<&Polygon>) -> CutOutcome {
    let normal = Point::new(z.im, -z.re);
    let polygon = clip_halfplane(&c.polygon, &normal, 0.0);
    let mut warnings = Vec::new();
    if polygon.is_empty() {
        warnings.push(format!("cut leaves the {} characteristic empty", c.scenario));
    }
    if let Some(ex) = exact {
        let scale = normal.norm().max(f64::MIN_POSITIVE);
        let removed = ex.vertices.iter().filter(|v| normal.dot(v) / scale < -GEOM_TOL).count();
        if removed > 0 {
            warnings.push(format!(
                "cut removes {removed} vertices of the exact {} characteristic; the noise set may be too large for it",
                c.scenario
            ));
        }
    }
    CutOutcome {
        characteristic: Characteristic { polygon, kind: CharacteristicKind::Cut, ..c.clone() },
        warnings,
    }
}

/// Tolerance for characteristic membership.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Apparent impedance `ψ v_L / i_A` of a fault loop.
pub fn apparent_impedance(s: Scenario, lp: &LoopSpec, v_l: &PhaseVector, i_l: &PhaseVector) -> Result<C64> {
    if lp.kind == LoopKind::Normal {
        return Err(Error::Unsupported("normal operation has no apparent impedance".into()));
    }
    let i_a = checked_loop_current(s, lp, i_l)?;
    Ok(lp.loop_voltage(v_l) / i_a)
}

/// Whether the measurement `(v_L, i_L)` falls in the characteristic.
pub fn is_consistent(s: Scenario, v_l: &PhaseVector, i_l: &PhaseVector, c: &Characteristic, k: C64) -> Result<bool> {
    if c.scenario != s {
        return Err(Error::InvalidInput(format!("characteristic is for {}, not {s}", c.scenario)));
    }
    let lp = if c.loop_spec.is_normal() { primary_loop(s, k, LlgLoop::default()) } else { c.loop_spec.clone() };
    let z_a = apparent_impedance(s, &lp, v_l, i_l)?;
    Ok(c.polygon.contains(&pt(z_a), MEMBERSHIP_TOL))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReachBound {
    pub m_upper: f64,
    /// The characteristic at `m̄ = m̲_z` already contains `z`.
    pub saturated: bool,
}

/// Smallest upper reach whose characteristic contains the line impedance, by
/// bisection to `tol`.
pub fn max_overreach_free_reach<F>(build: F, z: C64, m_lower: f64, tol: f64) -> Result<ReachBound>
where
    F: Fn(f64) -> Result<Polygon>,
{
    let target = pt(z);
    if build(m_lower)?.contains(&target, MEMBERSHIP_TOL) {
        return Ok(ReachBound { m_upper: 1.0, saturated: true });
    }
    let (mut lo, mut hi) = (m_lower, 1.0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if build(mid)?.contains(&target, MEMBERSHIP_TOL) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(ReachBound { m_upper: hi, saturated: false })
}

/// A synthesized relay measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub v_l: PhaseVector,
    pub i_l: PhaseVector,
    pub i_r: PhaseVector,
    pub z_a: Option<C64>,
}

/// Forward simulation of an on-line fault at `(m_z, m_r)` with source noise `λ`.
///
/// Currents come from the network matrices at the nominal fault; the loop
/// voltage is rebuilt from KVL on the fault loop at the actual location and
/// resistance.
pub fn simulate_fault(
    s: Scenario,
    mats: &NetworkMatrices,
    unc: &SourceUncertainty,
    relay: &RelaySettings,
    m_z: f64,
    m_r: f64,
    lambda: &DVector<f64>,
) -> Result<Measurement> {
    let u = unc.sources(lambda);
    let t = mats.terminal(&u);
    let line = crate::faults::line_matrix(relay.z, relay.k);
    let line3 = nalgebra::Matrix3::from_iterator(line.iter().copied());
    let lp = primary_loop(s, relay.k, relay.llg_loop);
    let r = m_r * relay.r_f * lp.resistance_factor;
    let i_f = t.i_l + t.i_r;
    let mut v_f = PhaseVector::zeros();
    match lp.kind {
        LoopKind::Normal => {
            let v_l = line3 * t.i_l + t.v_r;
            return Ok(Measurement { v_l, i_l: t.i_l, i_r: t.i_r, z_a: None });
        }
        LoopKind::Lg(p) => v_f[p] = i_f[p] * r,
        LoopKind::Ll(p, q) => {
            let d = (i_f[p] - i_f[q]) * (r / 4.0);
            v_f[p] = d;
            v_f[q] = -d;
        }
    }
    let v_l = line3 * t.i_l * c64(m_z, 0.0) + v_f;
    let z_a = apparent_impedance(s, &lp, &v_l, &t.i_l)?;
    Ok(Measurement { v_l, i_l: t.i_l, i_r: t.i_r, z_a: Some(z_a) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::polygons_match;
    use crate::netmodel::{
        balanced, compute_network_matrices, FaultNominal, LineSpec, SourceKind, SourceSpec, ThreePhaseNetwork,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> ThreePhaseNetwork {
        ThreePhaseNetwork::new(
            vec![
                SourceSpec { bus: 1, kind: SourceKind::Sg { v: balanced(c64(1.0, 0.0)) } },
                SourceSpec { bus: 2, kind: SourceKind::Junction },
                SourceSpec { bus: 3, kind: SourceKind::Ibr { i: balanced(C64::from_polar(0.8, 0.5)) } },
            ],
            vec![
                LineSpec { from: 1, to: 2, z1: c64(0.02, 0.2), z0: c64(0.06, 0.6) },
                LineSpec { from: 2, to: 3, z1: c64(0.01, 0.1), z0: c64(0.03, 0.3) },
            ],
            2,
            3,
        )
        .unwrap()
    }

    fn setup(s: Scenario, sigma: f64) -> (ThreePhaseNetwork, NetworkMatrices, SourceUncertainty, RelaySettings) {
        let n = net();
        let mats = compute_network_matrices(&n, s, FaultNominal::default()).unwrap();
        let unc = SourceUncertainty::uniform(n.nominal_sources(), sigma, NoiseShape::Polygon(8)).unwrap();
        let relay = RelaySettings::new(n.z(), n.k(), 1.0, 0.15);
        (n, mats, unc, relay)
    }

    #[test]
    fn no_noise_no_resistance_is_reach_segment() {
        let (_, mats, unc, mut relay) = setup(Scenario::Ag, 0.0);
        relay.r_f = 0.0;
        let i_l = mats.terminal(&unc.nominal).i_l;
        let c = exact_characteristic(Scenario::Ag, &i_l, &unc, &mats, &relay).unwrap();
        let seg = convex_hull(&[pt(relay.z * 0.15), pt(relay.z)]);
        assert!(polygons_match(&c.polygon, &seg, 1e-12));
    }

    #[test]
    fn no_noise_gives_parallelogram() {
        let (_, mats, unc, relay) = setup(Scenario::Ab, 0.0);
        let i_l = mats.terminal(&unc.nominal).i_l;
        let exact = exact_characteristic(Scenario::Ab, &i_l, &unc, &mats, &relay).unwrap();
        let relaxed = zonogon_characteristic(Scenario::Ab, &i_l, &unc, &mats, &relay).unwrap();
        let (zf, _) = fault_term_zonogon(Scenario::Ab, &i_l, &unc, &mats, &relay).unwrap();
        let c_f = zf.center;
        let z = pt(relay.z);
        let by_hand = convex_hull(&[z * 0.15, z, z * 0.15 + c_f, z + c_f]);
        assert!(polygons_match(&exact.polygon, &by_hand, 1e-12));
        assert!(polygons_match(&relaxed.polygon, &by_hand, 1e-12));
    }

    #[test]
    fn relaxation_contains_exact() {
        let (_, mats, unc, relay) = setup(Scenario::Ag, 0.1);
        let i_l = mats.terminal(&unc.nominal).i_l;
        let exact = exact_characteristic(Scenario::Ag, &i_l, &unc, &mats, &relay).unwrap();
        let relaxed = zonogon_characteristic(Scenario::Ag, &i_l, &unc, &mats, &relay).unwrap();
        assert!(exact.polygon.vertices.iter().all(|v| relaxed.polygon.contains(v, 1e-9)));
    }

    #[test]
    fn full_reach_lower_bound_is_point() {
        let (_, mats, unc, mut relay) = setup(Scenario::Ag, 0.0);
        relay.m_lower = 1.0;
        let i_l = mats.terminal(&unc.nominal).i_l;
        let relaxed = zonogon_characteristic(Scenario::Ag, &i_l, &unc, &mats, &relay).unwrap();
        let (zf, _) = fault_term_zonogon(Scenario::Ag, &i_l, &unc, &mats, &relay).unwrap();
        let seg = convex_hull(&[pt(relay.z), pt(relay.z) + zf.center]);
        assert!(polygons_match(&relaxed.polygon, &seg, 1e-12));
    }

    #[test]
    fn measurements_land_inside() {
        let (_, mats, unc, relay) = setup(Scenario::Ag, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let lambda = unc.sample(&mut rng);
            let (m_z, m_r) = (rng.random_range(0.15..=1.0), rng.random_range(0.0..=1.0));
            let meas = simulate_fault(Scenario::Ag, &mats, &unc, &relay, m_z, m_r, &lambda).unwrap();
            let c = exact_characteristic(Scenario::Ag, &meas.i_l, &unc, &mats, &relay).unwrap();
            assert!(is_consistent(Scenario::Ag, &meas.v_l, &meas.i_l, &c, relay.k).unwrap());
        }
    }

    #[test]
    fn bolted_midline_fault_is_consistent_and_far_point_is_not() {
        let (_, mats, unc, relay) = setup(Scenario::Ab, 0.0);
        let zero = DVector::zeros(unc.noise_dim());
        let meas = simulate_fault(Scenario::Ab, &mats, &unc, &relay, 0.5, 0.0, &zero).unwrap();
        assert!((meas.z_a.unwrap() - relay.z * 0.5).norm() < 1e-12);
        let c = exact_characteristic(Scenario::Ab, &meas.i_l, &unc, &mats, &relay).unwrap();
        assert!(is_consistent(Scenario::Ab, &meas.v_l, &meas.i_l, &c, relay.k).unwrap());
        let far = meas.v_l * c64(20.0, 0.0);
        assert!(!is_consistent(Scenario::Ab, &far, &meas.i_l, &c, relay.k).unwrap());
    }

    #[test]
    fn cut_behaviour() {
        let square = Polygon {
            vertices: vec![Point::new(-1.0, -1.0), Point::new(1.0, -1.0), Point::new(1.0, 1.0), Point::new(-1.0, 1.0)],
        };
        let c = Characteristic {
            scenario: Scenario::Ag,
            polygon: square.clone(),
            i_l: PhaseVector::zeros(),
            kind: CharacteristicKind::ZonogonRelaxed,
            loop_spec: LoopSpec::normal(),
        };
        let out = apply_cut(&c, c64(0.0, 1.0), Some(&square));
        assert!(out.characteristic.polygon.vertices.iter().all(|v| v.x >= -1e-12));
        assert_eq!(out.warnings.len(), 1);
        let right = Characteristic { polygon: clip_halfplane(&square, &Point::new(1.0, 0.0), 0.5), ..c.clone() };
        let kept = apply_cut(&right, c64(0.0, 1.0), None);
        assert!(polygons_match(&kept.characteristic.polygon, &right.polygon, 0.0));
        let left = Characteristic { polygon: clip_halfplane(&square, &Point::new(-1.0, 0.0), 0.5), ..c };
        let gone = apply_cut(&left, c64(0.0, 1.0), None);
        assert!(gone.characteristic.polygon.is_empty());
        assert!(!gone.warnings.is_empty());
    }

    #[test]
    fn reach_bound() {
        let (_, mats, unc, mut relay) = setup(Scenario::Ag, 0.0);
        relay.r_f = 0.0;
        let i_l = mats.terminal(&unc.nominal).i_l;
        let build = |m: f64| {
            let r = RelaySettings { m_upper: m, ..relay };
            exact_characteristic(Scenario::Ag, &i_l, &unc, &mats, &r).map(|c| c.polygon)
        };
        let b = max_overreach_free_reach(build, relay.z, relay.m_lower, 1e-6).unwrap();
        assert!((b.m_upper - 1.0).abs() <= 1e-6 && !b.saturated);
    }

    #[test]
    fn noise_map_pattern() {
        let unc = SourceUncertainty::uniform(CVec::zeros(6), 0.5, NoiseShape::Polygon(4)).unwrap();
        let lam = DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0]);
        let u = unc.sources(&lam);
        let a = alpha();
        assert!((u[0] - c64(0.0, 0.5)).norm() < 1e-15);
        assert!((u[1] - a * c64(0.0, 0.5)).norm() < 1e-15);
        assert!(u[3].norm() == 0.0);
        assert_eq!(unc.h_rows().unwrap().nrows(), 8);
        let mut bad = unc.clone();
        bad.center[0] = 0.1;
        assert!(bad.validate().is_err());
    }
}
