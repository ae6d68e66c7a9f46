//! Fault scenarios, their measurement loops and the loop coefficients used by
//! the post-test and pre-test constructions.

use std::fmt;
use std::str::FromStr;

use crate::netmodel::{CurrentConvention, NetworkMatrices, PhaseVector};
use crate::{c64, CMat, Error, Result, C64};

/// Relay operating scenario: one of eleven fault types or normal operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    Ag,
    Bg,
    Cg,
    Ab,
    Ac,
    Bc,
    Abg,
    Acg,
    Bcg,
    Abc,
    Abcg,
    N,
}

/// Electrical connection of a scenario at the fault bus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaultShape {
    Normal,
    Ground(usize),
    LineLine(usize, usize),
    LineLineGround(usize, usize),
    Three,
    ThreeGround,
}

impl Scenario {
    pub const ALL: [Scenario; 12] = [
        Scenario::Ag,
        Scenario::Bg,
        Scenario::Cg,
        Scenario::Ab,
        Scenario::Ac,
        Scenario::Bc,
        Scenario::Abg,
        Scenario::Acg,
        Scenario::Bcg,
        Scenario::Abc,
        Scenario::Abcg,
        Scenario::N,
    ];

    /// The eleven fault scenarios.
    pub fn faults() -> impl Iterator<Item = Scenario> {
        Self::ALL.into_iter().filter(|s| *s != Scenario::N)
    }

    pub fn tag(self) -> &'static str {
        match self {
            Scenario::Ag => "ag",
            Scenario::Bg => "bg",
            Scenario::Cg => "cg",
            Scenario::Ab => "ab",
            Scenario::Ac => "ac",
            Scenario::Bc => "bc",
            Scenario::Abg => "abg",
            Scenario::Acg => "acg",
            Scenario::Bcg => "bcg",
            Scenario::Abc => "abc",
            Scenario::Abcg => "abcg",
            Scenario::N => "N",
        }
    }

    pub fn shape(self) -> FaultShape {
        use FaultShape::*;
        match self {
            Scenario::Ag => Ground(0),
            Scenario::Bg => Ground(1),
            Scenario::Cg => Ground(2),
            Scenario::Ab => LineLine(0, 1),
            Scenario::Ac => LineLine(0, 2),
            Scenario::Bc => LineLine(1, 2),
            Scenario::Abg => LineLineGround(0, 1),
            Scenario::Acg => LineLineGround(0, 2),
            Scenario::Bcg => LineLineGround(1, 2),
            Scenario::Abc => Three,
            Scenario::Abcg => ThreeGround,
            Scenario::N => Normal,
        }
    }

    pub fn is_fault(self) -> bool {
        self != Scenario::N
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        Self::ALL
            .into_iter()
            .find(|sc| sc.tag().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::InvalidInput(format!("unknown scenario tag {t:?}")))
    }
}

/// All ordered pairs of distinct scenarios (132).
pub fn ordered_pairs() -> Vec<(Scenario, Scenario)> {
    let mut out = Vec::with_capacity(132);
    for a in Scenario::ALL {
        for b in Scenario::ALL {
            if a != b {
                out.push((a, b));
            }
        }
    }
    out
}

/// All unordered pairs of distinct scenarios (66).
pub fn unordered_pairs() -> Vec<(Scenario, Scenario)> {
    pairs_among(&Scenario::ALL)
}

/// Unordered pairs among a list of scenarios, in list order.
pub fn pairs_among(list: &[Scenario]) -> Vec<(Scenario, Scenario)> {
    let mut out = Vec::new();
    for (i, &a) in list.iter().enumerate() {
        for &b in &list[i + 1..] {
            out.push((a, b));
        }
    }
    out
}

/// Which loop a double line-to-ground fault is measured through.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LlgLoop {
    /// Phase-to-phase loop between the two faulted phases; no resistance in the loop.
    #[default]
    LineLine,
    /// Ground loop of the leading faulted phase. Only approximate: the ground path
    /// carries the current of both faulted phases.
    LineGround,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoopKind {
    Normal,
    Lg(usize),
    Ll(usize, usize),
}

/// A relay measurement loop: `v_A = psi · v_L`, `i_A = current_map · i_L`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopSpec {
    pub kind: LoopKind,
    /// 1×3 for fault loops, identity for normal operation.
    pub psi: CMat,
    pub current_map: CMat,
    /// Multiplier on `r_F` for the resistance inside the loop.
    pub resistance_factor: f64,
}

fn unit_row(p: usize) -> CMat {
    let mut r = CMat::zeros(1, 3);
    r[(0, p)] = c64(1.0, 0.0);
    r
}

fn zero_seq_row() -> CMat {
    CMat::from_element(1, 3, c64(1.0 / 3.0, 0.0))
}

impl LoopSpec {
    pub fn lg(p: usize, k: C64) -> Self {
        Self {
            kind: LoopKind::Lg(p),
            psi: unit_row(p),
            current_map: unit_row(p) + zero_seq_row() * k,
            resistance_factor: 1.0,
        }
    }

    pub fn ll(p: usize, q: usize, resistance_factor: f64) -> Self {
        let d = unit_row(p) - unit_row(q);
        Self { kind: LoopKind::Ll(p, q), psi: d.clone(), current_map: d, resistance_factor }
    }

    pub fn normal() -> Self {
        Self {
            kind: LoopKind::Normal,
            psi: CMat::identity(3, 3),
            current_map: CMat::identity(3, 3),
            resistance_factor: 0.0,
        }
    }

    pub fn is_normal(&self) -> bool {
        self.kind == LoopKind::Normal
    }

    /// Row vector of a fault loop as a phase vector (`psi` transposed).
    pub fn psi_row(&self) -> PhaseVector {
        PhaseVector::new(self.psi[(0, 0)], self.psi[(0, 1)], self.psi[(0, 2)])
    }

    pub fn current_row(&self) -> PhaseVector {
        PhaseVector::new(self.current_map[(0, 0)], self.current_map[(0, 1)], self.current_map[(0, 2)])
    }

    /// Loop current `i_A`; fault loops only.
    pub fn loop_current(&self, i_l: &PhaseVector) -> C64 {
        self.current_row().dot(i_l)
    }

    pub fn loop_voltage(&self, v_l: &PhaseVector) -> C64 {
        self.psi_row().dot(v_l)
    }
}

/// Candidate loops of a scenario. The first entry is the default loop.
///
/// Double line-to-ground faults list the phase-to-phase loop then the ground
/// loop of the leading phase. Three-phase faults list ab, bc and ca; ab is the
/// representative.
pub fn loop_spec(s: Scenario, k: C64) -> Vec<LoopSpec> {
    match s.shape() {
        FaultShape::Normal => vec![LoopSpec::normal()],
        FaultShape::Ground(p) => vec![LoopSpec::lg(p, k)],
        FaultShape::LineLine(p, q) => vec![LoopSpec::ll(p, q, 1.0)],
        FaultShape::LineLineGround(p, q) => vec![LoopSpec::ll(p, q, 0.0), LoopSpec::lg(p, k)],
        FaultShape::Three | FaultShape::ThreeGround => {
            vec![LoopSpec::ll(0, 1, 1.0), LoopSpec::ll(1, 2, 1.0), LoopSpec::ll(2, 0, 1.0)]
        }
    }
}

/// The loop a relay uses for scenario `s`.
pub fn primary_loop(s: Scenario, k: C64, llg: LlgLoop) -> LoopSpec {
    let mut loops = loop_spec(s, k);
    if matches!(s.shape(), FaultShape::LineLineGround(..)) && llg == LlgLoop::LineGround {
        loops.swap_remove(1)
    } else {
        loops.swap_remove(0)
    }
}

/// Fault-term coefficients: `z_A = m_z z + m_r (xi + xi_row · i_R)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PosttestCoeffs {
    pub xi: C64,
    pub xi_row: PhaseVector,
}

pub const DEGENERATE_CURRENT: f64 = 1e-9;

/// Loop current with the degenerate-loop check applied.
pub fn checked_loop_current(s: Scenario, lp: &LoopSpec, i_l: &PhaseVector) -> Result<C64> {
    let i_a = lp.loop_current(i_l);
    if i_a.norm().is_nan() || i_a.norm() <= DEGENERATE_CURRENT {
        return Err(Error::DegenerateLoop { scenario: s, magnitude: i_a.norm() });
    }
    Ok(i_a)
}

/// Post-test coefficients for the default loop of `s`.
pub fn posttest_coeffs(s: Scenario, i_l: &PhaseVector, r_f: f64, k: C64) -> Result<PosttestCoeffs> {
    posttest_coeffs_for(s, &primary_loop(s, k, LlgLoop::default()), i_l, r_f)
}

pub fn posttest_coeffs_for(s: Scenario, lp: &LoopSpec, i_l: &PhaseVector, r_f: f64) -> Result<PosttestCoeffs> {
    let i_a = checked_loop_current(s, lp, i_l)?;
    let r = r_f * lp.resistance_factor;
    Ok(match lp.kind {
        LoopKind::Normal => return Err(Error::Unsupported("normal operation has no fault loop".into())),
        LoopKind::Lg(p) => {
            let e = PhaseVector::from_fn(|i, _| if i == p { c64(1.0, 0.0) } else { C64::default() });
            PosttestCoeffs { xi: i_l[p] * r / i_a, xi_row: e * (c64(r, 0.0) / i_a) }
        }
        LoopKind::Ll(..) => {
            // v_F^p - v_F^q = (r/2)(i_F^p - i_F^q) and i_F = i_L + i_R
            PosttestCoeffs { xi: c64(r / 2.0, 0.0), xi_row: lp.psi_row() * (c64(r / 2.0, 0.0) / i_a) }
        }
    })
}

/// Pre-test coefficients: `psi v_L = omega_z u_z + omega_r u_r` for faults,
/// `v_L = omega_n u` for normal operation.
#[derive(Clone, Debug, PartialEq)]
pub enum PretestCoeffs {
    Fault { psi: CMat, omega_z: CMat, omega_r: CMat },
    Normal { omega_n: CMat },
}

impl PretestCoeffs {
    pub fn source_dim(&self) -> usize {
        match self {
            PretestCoeffs::Fault { omega_z, .. } => omega_z.ncols(),
            PretestCoeffs::Normal { omega_n } => omega_n.ncols(),
        }
    }
}

/// Phase-domain line impedance `z (I + k·11ᵀ/3)`.
pub fn line_matrix(z: C64, k: C64) -> CMat {
    CMat::identity(3, 3) * z + CMat::from_element(3, 3, z * k / 3.0)
}

pub fn pretest_coeffs(s: Scenario, mats: &NetworkMatrices, z: C64, k: C64, r_f: f64) -> Result<PretestCoeffs> {
    pretest_coeffs_for(s, &primary_loop(s, k, LlgLoop::default()), mats, z, k, r_f)
}

pub fn pretest_coeffs_for(
    s: Scenario,
    lp: &LoopSpec,
    mats: &NetworkMatrices,
    z: C64,
    k: C64,
    r_f: f64,
) -> Result<PretestCoeffs> {
    if mats.scenario != s {
        return Err(Error::InvalidInput(format!(
            "network matrices are for {} but coefficients were requested for {s}",
            mats.scenario
        )));
    }
    let fault_current = &mats.gamma + &mats.theta;
    Ok(match lp.kind {
        LoopKind::Normal => {
            let omega_n = match mats.convention {
                CurrentConvention::Branch => line_matrix(z, k) * &mats.gamma + &mats.psi,
                CurrentConvention::Scalar => &mats.gamma * z + &mats.psi,
            };
            PretestCoeffs::Normal { omega_n }
        }
        LoopKind::Lg(p) => {
            let r = r_f * lp.resistance_factor;
            PretestCoeffs::Fault {
                psi: lp.psi.clone(),
                omega_z: &lp.current_map * &mats.gamma * z,
                omega_r: unit_row(p) * fault_current * c64(r, 0.0),
            }
        }
        LoopKind::Ll(..) => {
            let r = r_f * lp.resistance_factor;
            PretestCoeffs::Fault {
                psi: lp.psi.clone(),
                omega_z: &lp.psi * &mats.gamma * z,
                omega_r: &lp.psi * fault_current * c64(r / 2.0, 0.0),
            }
        }
    })
}
