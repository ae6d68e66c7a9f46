//! Scenario files: one TOML document describing the network, noise, relay,
//! signal and run settings. Per-unit throughout; complex numbers are written
//! as `"re+imj"` strings.

use std::path::Path;
use std::str::FromStr;

use nalgebra::DVector;
use serde::Deserialize;

use crate::auxopt::{AdmmConfig, AuxSignal, InjectionKind};
use crate::faults::{pairs_among, unordered_pairs, LlgLoop, Scenario};
use crate::netmodel::{
    balanced, CurrentConvention, FaultNominal, LineSpec, PhaseVector, SourceKind, SourceSpec, ThreePhaseNetwork,
};
use crate::posttest::{NoiseShape, RelaySettings, SourceUncertainty};
use crate::pretest::WVariant;
use crate::{c64, CMat, CVec, Error, Result, C64};

/// Parses `"1"`, `"-0.5j"`, `"0.1+0.01j"`, `"1e-3-2E-2j"`.
pub fn parse_complex(text: &str) -> Result<C64> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || Error::InvalidInput(format!("'{text}' is not a complex number of the form re+imj"));
    if s.is_empty() {
        return Err(bad());
    }
    let Some(body) = s.strip_suffix(['j', 'i']) else {
        return s.parse::<f64>().map(|re| c64(re, 0.0)).map_err(|_| bad());
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len()).rev().find(|&i| matches!(bytes[i], b'+' | b'-') && !matches!(bytes[i - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(i) => (&body[..i], &body[i..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => "1",
        "-" => "-1",
        x => x,
    };
    let re: f64 = re.parse().map_err(|_| bad())?;
    let im: f64 = im.parse().map_err(|_| bad())?;
    if !(re.is_finite() && im.is_finite()) {
        return Err(bad());
    }
    Ok(c64(re, im))
}

/// Formats a complex number so that [`parse_complex`] reads it back exactly.
pub fn format_complex(z: C64) -> String {
    format!("{}{}{}j", z.re, if z.im.is_sign_negative() { "-" } else { "+" }, z.im.abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(try_from = "String")]
pub struct Cx(pub C64);

impl TryFrom<String> for Cx {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        parse_complex(&s).map(Cx)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub network: NetworkSection,
    #[serde(default)]
    pub uncertainty: UncertaintySection,
    #[serde(default)]
    pub relay: RelaySection,
    #[serde(default)]
    pub signal: SignalSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub relay: usize,
    pub remote: usize,
    #[serde(rename = "bus")]
    pub buses: Vec<BusEntry>,
    #[serde(rename = "line")]
    pub lines: Vec<LineEntry>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusEntry {
    pub id: usize,
    pub kind: String,
    /// Positive-sequence phasor of a generator voltage or inverter current.
    pub phasor: Option<Cx>,
    /// Explicit phase values; overrides `phasor`.
    pub phases: Option<[Cx; 3]>,
    pub admittance: Option<Cx>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineEntry {
    pub from: usize,
    pub to: usize,
    pub z1: Cx,
    /// Defaults to `(1 + k) z1` with the relay's `k`.
    pub z0: Option<Cx>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UncertaintySection {
    pub sigma: f64,
    /// Sides `n_φ` of the per-source noise polygon.
    pub sides: usize,
    /// `"polygon"` or `"ball"`.
    pub shape: String,
    /// Per-bus overrides of `sigma`.
    pub scales: Vec<BusScale>,
    /// Center of the noise set; anything nonzero is rejected.
    pub center: Option<Vec<f64>>,
}

impl Default for UncertaintySection {
    fn default() -> Self {
        Self { sigma: 0.1, sides: 20, shape: "polygon".into(), scales: vec![], center: None }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusScale {
    pub bus: usize,
    pub sigma: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelaySection {
    pub k: Cx,
    pub r_f: f64,
    pub m_lower: f64,
    pub m_hat_z: f64,
    pub m_hat_r: f64,
    /// `"ll"` or `"lg"`: loop used for double line-to-ground faults.
    pub llg_loop: String,
    /// `"branch"` or `"scalar"`.
    pub current_convention: String,
}

impl Default for RelaySection {
    fn default() -> Self {
        Self {
            k: Cx(c64(2.0, 0.0)),
            r_f: 1.0,
            m_lower: 0.15,
            m_hat_z: 0.5,
            m_hat_r: 0.5,
            llg_loop: "ll".into(),
            current_convention: "branch".into(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalSection {
    pub kind: String,
    /// Per-inverter current caps, in source order.
    pub caps: Option<Vec<f64>>,
}

impl Default for SignalSection {
    fn default() -> Self {
        Self { kind: "negative".into(), caps: None }
    }
}

/// A keyword or an explicit list.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum ListField {
    Keyword(String),
    List(Vec<String>),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub scenarios: ListField,
    pub pairs: ListField,
    pub variant: String,
    pub grid: String,
    pub seed: u64,
    pub admm: AdmmSection,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            scenarios: ListField::Keyword("faults".into()),
            pairs: ListField::Keyword("three".into()),
            variant: "rel3".into(),
            grid: "-3:3:41,-3:3:41".into(),
            seed: 0,
            admm: AdmmSection::default(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdmmSection {
    pub rho: f64,
    /// `Q = q_scale · I`.
    pub q_scale: f64,
    /// Initial signal, the same at every inverter.
    pub delta0: Cx,
    pub max_iters: usize,
    pub objective_tol: f64,
    pub objective_window: usize,
    pub residual_tol: f64,
}

impl Default for AdmmSection {
    fn default() -> Self {
        Self {
            rho: 1.0,
            q_scale: 1.0,
            delta0: Cx(C64::default()),
            max_iters: 200,
            objective_tol: 1e-8,
            objective_window: 5,
            residual_tol: 1e-6,
        }
    }
}

/// Rectangular lattice over the complex plane, written `re0:re1:n,im0:im1:n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub re: (f64, f64, usize),
    pub im: (f64, f64, usize),
}

impl GridSpec {
    pub fn points(&self) -> Vec<C64> {
        let axis = |(a, b, n): (f64, f64, usize)| -> Vec<f64> {
            match n {
                0 => vec![],
                1 => vec![a],
                _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
            }
        };
        let (re, im) = (axis(self.re), axis(self.im));
        im.iter().flat_map(|&y| re.iter().map(move |&x| c64(x, y))).collect()
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("grid '{s}' is not of the form re0:re1:n,im0:im1:n"));
        let axis = |part: &str| -> Result<(f64, f64, usize)> {
            let f: Vec<&str> = part.trim().split(':').collect();
            if f.len() != 3 {
                return Err(bad());
            }
            let a: f64 = f[0].parse().map_err(|_| bad())?;
            let b: f64 = f[1].parse().map_err(|_| bad())?;
            let n: usize = f[2].parse().map_err(|_| bad())?;
            if !(a.is_finite() && b.is_finite()) {
                return Err(bad());
            }
            Ok((a, b, n))
        };
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 2 {
            return Err(bad());
        }
        Ok(GridSpec { re: axis(parts[0])?, im: axis(parts[1])? })
    }
}

/// The three pairs among normal operation, `ag` and `ab`.
pub fn three_pairs() -> Vec<(Scenario, Scenario)> {
    vec![(Scenario::N, Scenario::Ag), (Scenario::N, Scenario::Ab), (Scenario::Ag, Scenario::Ab)]
}

/// All pairs among normal operation and the line-to-ground and line-to-line faults.
pub fn lg_ll_pairs() -> Vec<(Scenario, Scenario)> {
    use Scenario::*;
    pairs_among(&[N, Ag, Bg, Cg, Ab, Ac, Bc])
}

/// `three`, `lg-ll`, `all`, or a list such as `["N-ag", "ag-ab"]`.
pub fn parse_pairs(field: &ListField) -> Result<Vec<(Scenario, Scenario)>> {
    match field {
        ListField::Keyword(k) => match k.to_ascii_lowercase().as_str() {
            "three" => Ok(three_pairs()),
            "lg-ll" => Ok(lg_ll_pairs()),
            "all" => Ok(unordered_pairs()),
            _ => parse_pair_list(&k.split(',').map(str::to_string).collect::<Vec<_>>()),
        },
        ListField::List(items) => parse_pair_list(items),
    }
}

fn parse_pair_list(items: &[String]) -> Result<Vec<(Scenario, Scenario)>> {
    items
        .iter()
        .map(|p| {
            let (a, b) = p
                .split_once(['-', '/'])
                .ok_or_else(|| Error::InvalidInput(format!("pair '{p}' is not of the form a-b")))?;
            let (a, b): (Scenario, Scenario) = (a.trim().parse()?, b.trim().parse()?);
            if a == b {
                return Err(Error::InvalidInput(format!("pair '{p}' repeats a scenario")));
            }
            Ok((a, b))
        })
        .collect()
}

/// `faults`, `all`, or a list of tags.
pub fn parse_scenarios(field: &ListField) -> Result<Vec<Scenario>> {
    match field {
        ListField::Keyword(k) => match k.to_ascii_lowercase().as_str() {
            "faults" => Ok(Scenario::faults().collect()),
            "all" => Ok(Scenario::ALL.to_vec()),
            _ => k.split(',').map(|t| t.trim().parse()).collect(),
        },
        ListField::List(items) => items.iter().map(|t| t.trim().parse()).collect(),
    }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::InvalidInput(format!("scenario file: {e}")))?;
        file.validate()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::InvalidInput(m) => Error::InvalidInput(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    fn validate(&self) -> Result<()> {
        let r = &self.relay;
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("relay.{name} = {v} is outside [0, 1]")))
            }
        };
        unit("m_lower", r.m_lower)?;
        unit("m_hat_z", r.m_hat_z)?;
        unit("m_hat_r", r.m_hat_r)?;
        if !(r.r_f >= 0.0 && r.r_f.is_finite()) {
            return Err(Error::InvalidInput(format!("relay.r_f = {} must be nonnegative", r.r_f)));
        }
        self.llg_loop()?;
        self.convention()?;
        self.injection_kind()?;
        self.variant()?;
        self.grid()?;
        parse_pairs(&self.run.pairs)?;
        parse_scenarios(&self.run.scenarios)?;
        Ok(())
    }

    pub fn k(&self) -> C64 {
        self.relay.k.0
    }

    pub fn llg_loop(&self) -> Result<LlgLoop> {
        match self.relay.llg_loop.to_ascii_lowercase().as_str() {
            "ll" => Ok(LlgLoop::LineLine),
            "lg" => Ok(LlgLoop::LineGround),
            x => Err(Error::InvalidInput(format!("relay.llg_loop '{x}' must be ll or lg"))),
        }
    }

    pub fn convention(&self) -> Result<CurrentConvention> {
        match self.relay.current_convention.to_ascii_lowercase().as_str() {
            "branch" => Ok(CurrentConvention::Branch),
            "scalar" => Ok(CurrentConvention::Scalar),
            x => Err(Error::InvalidInput(format!("relay.current_convention '{x}' must be branch or scalar"))),
        }
    }

    pub fn injection_kind(&self) -> Result<InjectionKind> {
        self.signal.kind.parse()
    }

    pub fn variant(&self) -> Result<WVariant> {
        self.run.variant.parse()
    }

    pub fn grid(&self) -> Result<GridSpec> {
        self.run.grid.parse()
    }

    pub fn pairs(&self) -> Result<Vec<(Scenario, Scenario)>> {
        parse_pairs(&self.run.pairs)
    }

    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        parse_scenarios(&self.run.scenarios)
    }

    pub fn nominal(&self) -> FaultNominal {
        FaultNominal { m_z: self.relay.m_hat_z, m_r: self.relay.m_hat_r, r_f: self.relay.r_f }
    }

    pub fn network(&self) -> Result<ThreePhaseNetwork> {
        let buses = self
            .network
            .buses
            .iter()
            .map(|b| {
                let phases = || -> Result<PhaseVector> {
                    match (&b.phases, b.phasor) {
                        (Some(p), _) => Ok(PhaseVector::new(p[0].0, p[1].0, p[2].0)),
                        (None, Some(p)) => Ok(balanced(p.0)),
                        (None, None) => Err(Error::InvalidInput(format!("bus {} needs a phasor", b.id))),
                    }
                };
                let kind = match b.kind.to_ascii_lowercase().as_str() {
                    "sg" => SourceKind::Sg { v: phases()? },
                    "ibr" => SourceKind::Ibr { i: phases()? },
                    "load" => SourceKind::Load {
                        y: b.admittance.ok_or_else(|| Error::InvalidInput(format!("load bus {} needs an admittance", b.id)))?.0,
                    },
                    "junction" => SourceKind::Junction,
                    x => return Err(Error::InvalidInput(format!("bus {}: unknown kind '{x}'", b.id))),
                };
                Ok(SourceSpec { bus: b.id, kind })
            })
            .collect::<Result<Vec<_>>>()?;
        let k = self.k();
        let lines = self
            .network
            .lines
            .iter()
            .map(|l| LineSpec { from: l.from, to: l.to, z1: l.z1.0, z0: l.z0.map(|z| z.0).unwrap_or(l.z1.0 * (1.0 + k)) })
            .collect();
        ThreePhaseNetwork::new(buses, lines, self.network.relay, self.network.remote)
    }

    pub fn uncertainty(&self, net: &ThreePhaseNetwork) -> Result<SourceUncertainty> {
        let u = &self.uncertainty;
        let shape = match u.shape.to_ascii_lowercase().as_str() {
            "polygon" => NoiseShape::Polygon(u.sides),
            "ball" => NoiseShape::Ball,
            x => return Err(Error::InvalidInput(format!("uncertainty.shape '{x}' must be polygon or ball"))),
        };
        let order = net.source_order();
        let mut sigma = DVector::from_element(order.len(), u.sigma);
        for sc in &u.scales {
            let pos = order
                .iter()
                .position(|&bi| net.buses()[bi].bus == sc.bus)
                .ok_or_else(|| Error::InvalidInput(format!("uncertainty.scales: bus {} has no source", sc.bus)))?;
            sigma[pos] = sc.sigma;
        }
        let mut unc = SourceUncertainty { nominal: net.nominal_sources(), sigma, shape, center: DVector::zeros(2 * order.len()) };
        if let Some(c) = &u.center {
            if c.len() != unc.noise_dim() {
                return Err(Error::InvalidInput(format!(
                    "uncertainty.center has {} entries, expected {}",
                    c.len(),
                    unc.noise_dim()
                )));
            }
            unc.center = DVector::from_column_slice(c);
        }
        unc.validate()?;
        Ok(unc)
    }

    pub fn relay_settings(&self, net: &ThreePhaseNetwork) -> Result<RelaySettings> {
        let mut r = RelaySettings::new(net.z(), net.k(), self.relay.r_f, self.relay.m_lower);
        r.llg_loop = self.llg_loop()?;
        Ok(r)
    }

    /// Zero signal over the network's inverters, with caps if configured.
    pub fn zero_signal(&self, net: &ThreePhaseNetwork) -> Result<AuxSignal> {
        let mut s = AuxSignal::zero(net.ibr_buses().len(), self.injection_kind()?);
        if let Some(c) = &self.signal.caps {
            s.caps = Some(DVector::from_column_slice(c));
        }
        Ok(s)
    }

    pub fn admm_config(&self, net: &ThreePhaseNetwork) -> Result<AdmmConfig> {
        let a = &self.run.admm;
        let n = net.ibr_buses().len() * self.injection_kind()?.width();
        let mut cfg = AdmmConfig::new(n);
        cfg.q = CMat::identity(n, n) * c64(a.q_scale, 0.0);
        cfg.rho = a.rho;
        cfg.delta0 = CVec::from_element(n, a.delta0.0);
        cfg.max_iters = a.max_iters;
        cfg.objective_tol = a.objective_tol;
        cfg.objective_window = a.objective_window;
        cfg.residual_tol = a.residual_tol;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A relay measurement for consistency checks.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementFile {
    pub v_l: [Cx; 3],
    pub i_l: [Cx; 3],
}

impl MeasurementFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidInput(format!("measurement file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn v_l(&self) -> PhaseVector {
        PhaseVector::new(self.v_l[0].0, self.v_l[1].0, self.v_l[2].0)
    }

    pub fn i_l(&self) -> PhaseVector {
        PhaseVector::new(self.i_l[0].0, self.i_l[1].0, self.i_l[2].0)
    }
}
