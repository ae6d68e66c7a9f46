//! Three-phase network model with a virtual fault bus on the protected line.
//!
//! Sources are stacked as `u = [i°_C; v°_S]`: three phases per IBR in bus order,
//! then three phases per SG in bus order. Every scenario matrix maps `u` to a
//! three-phase terminal quantity.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::faults::{FaultShape, Scenario};
use crate::{c64, CMat, CVec, Error, Result, C64};

pub type PhaseVector = Vector3<C64>;
pub type PhaseMatrix = Matrix3<C64>;
pub type BusId = usize;

/// `e^{j2π/3}`.
pub fn alpha() -> C64 {
    C64::from_polar(1.0, 2.0 * PI / 3.0)
}

/// Sequence-to-phase matrix `A`.
pub fn seq_matrix() -> PhaseMatrix {
    let a = alpha();
    let a2 = a * a;
    let one = c64(1.0, 0.0);
    Matrix3::new(one, one, one, one, a2, a, one, a, a2)
}

/// Phase-to-sequence matrix `B = A⁻¹`.
pub fn inv_seq_matrix() -> PhaseMatrix {
    let a = alpha();
    let a2 = a * a;
    let one = c64(1.0, 0.0);
    Matrix3::new(one, one, one, one, a, a2, one, a2, a) / c64(3.0, 0.0)
}

/// Maps `(zero, positive, negative)` sequence components to phases.
pub fn seq_to_phase(s: &PhaseVector) -> PhaseVector {
    seq_matrix() * s
}

pub fn phase_to_seq(v: &PhaseVector) -> PhaseVector {
    inv_seq_matrix() * v
}

/// Balanced positive-sequence phasor triple with phase-a value `phasor`.
pub fn balanced(phasor: C64) -> PhaseVector {
    seq_to_phase(&Vector3::new(C64::default(), phasor, C64::default()))
}

/// Series impedance of a transposed line in phase coordinates.
pub fn line_impedance_abc(z1: C64, z0: C64) -> PhaseMatrix {
    let d = Matrix3::from_diagonal(&Vector3::new(z0, z1, z1));
    seq_matrix() * d * inv_seq_matrix()
}

fn invert3(m: &PhaseMatrix, what: &str) -> Result<PhaseMatrix> {
    m.try_inverse().ok_or_else(|| Error::Singular {
        scenario: None,
        context: format!("{what} is not invertible"),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum SourceKind {
    /// Synchronous generator, a fixed voltage source.
    Sg { v: PhaseVector },
    /// Inverter-based resource, a fixed current source.
    Ibr { i: PhaseVector },
    /// Shunt admittance to ground, identical in every phase.
    Load { y: C64 },
    Junction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SourceSpec {
    pub bus: BusId,
    pub kind: SourceKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineSpec {
    pub from: BusId,
    pub to: BusId,
    pub z1: C64,
    pub z0: C64,
}

impl LineSpec {
    pub fn z_abc(&self) -> PhaseMatrix {
        line_impedance_abc(self.z1, self.z0)
    }
}

#[derive(Clone, Debug)]
pub struct ThreePhaseNetwork {
    buses: Vec<SourceSpec>,
    lines: Vec<LineSpec>,
    protected: usize,
    k: C64,
    index: HashMap<BusId, usize>,
}

impl ThreePhaseNetwork {
    /// Validates the network and orients the protected line from `relay` to `remote`.
    pub fn new(
        buses: Vec<SourceSpec>,
        mut lines: Vec<LineSpec>,
        relay: BusId,
        remote: BusId,
    ) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, b) in buses.iter().enumerate() {
            if index.insert(b.bus, i).is_some() {
                return Err(Error::InvalidInput(format!("bus {} declared twice", b.bus)));
            }
        }
        for l in &lines {
            if l.from == l.to {
                return Err(Error::InvalidInput(format!("line {}-{} is a self loop", l.from, l.to)));
            }
            for end in [l.from, l.to] {
                if !index.contains_key(&end) {
                    return Err(Error::InvalidInput(format!("line references unknown bus {end}")));
                }
            }
            if l.z1.norm() == 0.0 || l.z0.norm() == 0.0 {
                return Err(Error::InvalidInput(format!("line {}-{} has zero impedance", l.from, l.to)));
            }
            if !(l.z1.is_finite() && l.z0.is_finite()) {
                return Err(Error::InvalidInput(format!("line {}-{} has non-finite impedance", l.from, l.to)));
            }
        }
        let matches: Vec<usize> = lines
            .iter()
            .enumerate()
            .filter(|(_, l)| (l.from == relay && l.to == remote) || (l.from == remote && l.to == relay))
            .map(|(i, _)| i)
            .collect();
        let protected = match matches.as_slice() {
            [i] => *i,
            [] => return Err(Error::InvalidInput(format!("no line between relay bus {relay} and bus {remote}"))),
            _ => return Err(Error::InvalidInput(format!("line {relay}-{remote} appears more than once"))),
        };
        if lines[protected].from != relay {
            let l = &mut lines[protected];
            std::mem::swap(&mut l.from, &mut l.to);
        }
        let k = lines[protected].z0 / lines[protected].z1 - 1.0;
        let net = Self { buses, lines, protected, k, index };
        net.check_connected()?;
        Ok(net)
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for l in &self.lines {
            let (a, b) = (self.index[&l.from], self.index[&l.to]);
            adj[a].push(b);
            adj[b].push(a);
        }
        let start = self.index[&self.relay_bus()];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(Error::Disconnected(self.buses[i].bus)),
            None => Ok(()),
        }
    }

    pub fn buses(&self) -> &[SourceSpec] {
        &self.buses
    }

    pub fn lines(&self) -> &[LineSpec] {
        &self.lines
    }

    pub fn protected_line(&self) -> &LineSpec {
        &self.lines[self.protected]
    }

    pub fn relay_bus(&self) -> BusId {
        self.lines[self.protected].from
    }

    pub fn remote_bus(&self) -> BusId {
        self.lines[self.protected].to
    }

    /// Positive-sequence impedance of the protected line.
    pub fn z(&self) -> C64 {
        self.protected_line().z1
    }

    /// Zero-sequence compensation factor `z0/z1 - 1` of the protected line.
    pub fn k(&self) -> C64 {
        self.k
    }

    pub fn bus_index(&self, bus: BusId) -> Option<usize> {
        self.index.get(&bus).copied()
    }

    /// Indices into [`Self::buses`] in source-vector order: IBRs, then SGs.
    pub fn source_order(&self) -> Vec<usize> {
        let ibr = self.buses.iter().enumerate().filter(|(_, b)| matches!(b.kind, SourceKind::Ibr { .. }));
        let sg = self.buses.iter().enumerate().filter(|(_, b)| matches!(b.kind, SourceKind::Sg { .. }));
        ibr.chain(sg).map(|(i, _)| i).collect()
    }

    pub fn ibr_buses(&self) -> Vec<BusId> {
        self.buses.iter().filter(|b| matches!(b.kind, SourceKind::Ibr { .. })).map(|b| b.bus).collect()
    }

    pub fn sg_buses(&self) -> Vec<BusId> {
        self.buses.iter().filter(|b| matches!(b.kind, SourceKind::Sg { .. })).map(|b| b.bus).collect()
    }

    pub fn source_count(&self) -> usize {
        self.source_order().len()
    }

    /// Nominal source vector `[i°_C; v°_S]`.
    pub fn nominal_sources(&self) -> CVec {
        let order = self.source_order();
        let mut u = CVec::zeros(3 * order.len());
        for (s, &bi) in order.iter().enumerate() {
            let p = match &self.buses[bi].kind {
                SourceKind::Ibr { i } => *i,
                SourceKind::Sg { v } => *v,
                _ => unreachable!(),
            };
            u.fixed_rows_mut::<3>(3 * s).copy_from(&p);
        }
        u
    }

    /// Buses whose nominal source has zero- or negative-sequence content.
    pub fn unbalanced_sources(&self, tol: f64) -> Vec<BusId> {
        self.buses
            .iter()
            .filter(|b| match &b.kind {
                SourceKind::Ibr { i: p } | SourceKind::Sg { v: p } => {
                    let s = phase_to_seq(p);
                    s[0].norm() > tol || s[2].norm() > tol
                }
                _ => false,
            })
            .map(|b| b.bus)
            .collect()
    }
}

/// Nominal fault location and resistance used to fix the network matrices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaultNominal {
    pub m_z: f64,
    pub m_r: f64,
    pub r_f: f64,
}

impl Default for FaultNominal {
    fn default() -> Self {
        Self { m_z: 0.5, m_r: 0.5, r_f: 1.0 }
    }
}

/// How terminal currents are recovered from the segment voltage drops.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CurrentConvention {
    /// Invert the 3×3 segment impedance. Loop KVL then holds exactly for every loop.
    #[default]
    Branch,
    /// Divide by the scalar positive-sequence segment impedance `m̂_z z`.
    Scalar,
}

/// Fault connection at the virtual bus: `i_F = -Y v_F` plus bolted ties `c·v_F = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct FaultModel {
    pub admittance: PhaseMatrix,
    pub ties: Vec<PhaseVector>,
}

fn unit(p: usize) -> PhaseVector {
    let mut e = PhaseVector::zeros();
    e[p] = c64(1.0, 0.0);
    e
}

fn outer(a: &PhaseVector) -> PhaseMatrix {
    a * a.transpose()
}

/// Admittance stamp of the fault resistance network at the fault bus.
///
/// Double line-to-ground faults tie the two phases together with no resistance;
/// the returned stamp is only their common path to ground. Use [`fault_model`] to
/// get the tie as well.
pub fn fault_stamp(scenario: Scenario, m_r: f64, r_f: f64) -> Result<PhaseMatrix> {
    if scenario == Scenario::N {
        return Ok(PhaseMatrix::zeros());
    }
    if !(m_r > 0.0 && m_r <= 1.0) {
        return Err(Error::InvalidInput(format!("nominal resistance fraction {m_r} outside (0, 1]")));
    }
    let r = m_r * r_f;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "fault resistance {r} gives a singular {scenario} stamp; use the bolted fault model"
        )));
    }
    let g = c64(1.0 / r, 0.0);
    Ok(match scenario.shape() {
        FaultShape::Normal => PhaseMatrix::zeros(),
        FaultShape::Ground(p) | FaultShape::LineLineGround(p, _) => outer(&unit(p)) * g,
        FaultShape::LineLine(p, q) => outer(&(unit(p) - unit(q))) * g,
        FaultShape::Three => {
            let ones = PhaseVector::repeat(c64(1.0, 0.0));
            (PhaseMatrix::identity() - outer(&ones) / c64(3.0, 0.0)) * (g * 2.0)
        }
        FaultShape::ThreeGround => PhaseMatrix::identity() * (g * 2.0),
    })
}

/// Full fault connection, including bolted ties. A zero resistance turns every
/// resistive path into a tie.
pub fn fault_model(scenario: Scenario, m_r: f64, r_f: f64) -> Result<FaultModel> {
    if m_r < 0.0 || r_f < 0.0 || !(m_r * r_f).is_finite() {
        return Err(Error::InvalidInput(format!("fault resistance {m_r}·{r_f} is invalid")));
    }
    let shape = scenario.shape();
    if scenario == Scenario::N {
        return Ok(FaultModel { admittance: PhaseMatrix::zeros(), ties: vec![] });
    }
    if m_r * r_f > 0.0 {
        let ties = match shape {
            FaultShape::LineLineGround(p, q) => vec![unit(p) - unit(q)],
            _ => vec![],
        };
        return Ok(FaultModel { admittance: fault_stamp(scenario, m_r, r_f)?, ties });
    }
    let ties = match shape {
        FaultShape::Normal => vec![],
        FaultShape::Ground(p) => vec![unit(p)],
        FaultShape::LineLine(p, q) => vec![unit(p) - unit(q)],
        FaultShape::LineLineGround(p, q) => vec![unit(p), unit(q)],
        FaultShape::Three => vec![unit(0) - unit(1), unit(1) - unit(2)],
        FaultShape::ThreeGround => vec![unit(0), unit(1), unit(2)],
    };
    Ok(FaultModel { admittance: PhaseMatrix::zeros(), ties })
}

fn add_block(y: &mut CMat, r: usize, c: usize, m: &PhaseMatrix) {
    let mut view = y.fixed_view_mut::<3, 3>(3 * r, 3 * c);
    view += m;
}

/// Bus admittance matrix over `[F, bus_1, ..., bus_n]`, with the protected line
/// split at the fault bus. Shunt loads are not included.
pub fn build_admittance(net: &ThreePhaseNetwork, m_z: f64) -> Result<CMat> {
    if !(m_z > 0.0 && m_z < 1.0) {
        return Err(Error::InvalidInput(format!("nominal location {m_z} outside (0, 1)")));
    }
    let n = net.buses.len() + 1;
    let mut y = CMat::zeros(3 * n, 3 * n);
    let node = |bus: BusId| net.index[&bus] + 1;
    let stamp = |y: &mut CMat, a: usize, b: usize, ys: &PhaseMatrix| {
        add_block(y, a, a, ys);
        add_block(y, b, b, ys);
        add_block(y, a, b, &(-ys));
        add_block(y, b, a, &(-ys));
    };
    for (i, l) in net.lines.iter().enumerate() {
        let z = l.z_abc();
        if i == net.protected {
            let y_lf = invert3(&(z * c64(m_z, 0.0)), "local line segment")?;
            let y_fr = invert3(&(z * c64(1.0 - m_z, 0.0)), "remote line segment")?;
            stamp(&mut y, node(l.from), 0, &y_lf);
            stamp(&mut y, 0, node(l.to), &y_fr);
        } else {
            let ys = invert3(&z, &format!("line {}-{}", l.from, l.to))?;
            stamp(&mut y, node(l.from), node(l.to), &ys);
        }
    }
    Ok(y)
}

/// The stamped linear system `lhs · x = rhs · u` for one scenario.
///
/// Unknowns are grouped per node `[F, bus_1, ..., bus_n]`, three entries each:
/// the node voltage, or the injected current for SG buses. Bolted-tie currents
/// follow at the end.
#[derive(Clone, Debug)]
pub struct StampedSystem {
    pub scenario: Scenario,
    pub lhs: CMat,
    pub rhs: CMat,
    is_sg: Vec<bool>,
    sg_source: Vec<Option<usize>>,
}

impl StampedSystem {
    pub fn node_count(&self) -> usize {
        self.is_sg.len()
    }
}

pub fn stamped_system(net: &ThreePhaseNetwork, scenario: Scenario, nominal: FaultNominal) -> Result<StampedSystem> {
    let y = build_admittance(net, nominal.m_z)?;
    let fault = fault_model(scenario, nominal.m_r, nominal.r_f)?;
    let n_nodes = net.buses.len() + 1;
    let order = net.source_order();
    let n_u = 3 * order.len();
    let n_ties = fault.ties.len();
    let dim = 3 * n_nodes + n_ties;

    let mut is_sg = vec![false; n_nodes];
    let mut sg_source = vec![None; n_nodes];
    let mut lhs = CMat::zeros(dim, dim);
    let mut rhs = CMat::zeros(dim, n_u);
    lhs.view_mut((0, 0), (3 * n_nodes, 3 * n_nodes)).copy_from(&y);
    add_block(&mut lhs, 0, 0, &fault.admittance);
    for (t, c) in fault.ties.iter().enumerate() {
        for p in 0..3 {
            // tie current enters the KCL rows of F; the tie row fixes c·v_F = 0
            lhs[(p, 3 * n_nodes + t)] = c[p];
            lhs[(3 * n_nodes + t, p)] = c[p];
        }
    }
    for (bi, b) in net.buses.iter().enumerate() {
        if let SourceKind::Load { y } = b.kind {
            add_block(&mut lhs, bi + 1, bi + 1, &(PhaseMatrix::identity() * y));
        }
    }
    for (s, &bi) in order.iter().enumerate() {
        let node = bi + 1;
        match net.buses[bi].kind {
            SourceKind::Ibr { .. } => {
                for p in 0..3 {
                    rhs[(3 * node + p, 3 * s + p)] = c64(1.0, 0.0);
                }
            }
            SourceKind::Sg { .. } => {
                is_sg[node] = true;
                sg_source[node] = Some(s);
                for p in 0..3 {
                    for r in 0..3 * n_nodes {
                        rhs[(r, 3 * s + p)] = -lhs[(r, 3 * node + p)];
                    }
                }
                for r in 0..dim {
                    for p in 0..3 {
                        lhs[(r, 3 * node + p)] = C64::default();
                    }
                }
                for p in 0..3 {
                    lhs[(3 * node + p, 3 * node + p)] = c64(-1.0, 0.0);
                }
            }
            _ => unreachable!(),
        }
    }
    Ok(StampedSystem { scenario, lhs, rhs, is_sg, sg_source })
}

/// Network matrices of one scenario, all mapping the source vector `u`.
#[derive(Clone, Debug)]
pub struct NetworkMatrices {
    pub scenario: Scenario,
    /// `i_L = Γ u`
    pub gamma: CMat,
    /// `i_R = Θ u`
    pub theta: CMat,
    /// `v_L = Φ u`
    pub phi: CMat,
    /// `v_R = Ψ u`
    pub psi: CMat,
    /// `v_F = ℵ_F u`
    pub aleph_f: CMat,
    pub convention: CurrentConvention,
    pub nominal: FaultNominal,
}

/// Terminal and fault-bus quantities for one source vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Terminal {
    pub v_l: PhaseVector,
    pub i_l: PhaseVector,
    pub v_r: PhaseVector,
    pub i_r: PhaseVector,
    pub v_f: PhaseVector,
}

fn apply3(m: &CMat, u: &CVec) -> PhaseVector {
    let r = m * u;
    PhaseVector::new(r[0], r[1], r[2])
}

impl NetworkMatrices {
    pub fn source_dim(&self) -> usize {
        self.gamma.ncols()
    }

    pub fn terminal(&self, u: &CVec) -> Terminal {
        Terminal {
            v_l: apply3(&self.phi, u),
            i_l: apply3(&self.gamma, u),
            v_r: apply3(&self.psi, u),
            i_r: apply3(&self.theta, u),
            v_f: apply3(&self.aleph_f, u),
        }
    }
}

/// Solves the stamped system and returns `ℵ_k` for every node as a `3 × n_u` map.
pub fn node_voltage_maps(net: &ThreePhaseNetwork, sys: &StampedSystem) -> Result<Vec<CMat>> {
    let lu = sys.lhs.clone().lu();
    let sol = lu.solve(&sys.rhs).ok_or_else(|| Error::Singular {
        scenario: Some(sys.scenario),
        context: "Y_LHS has no inverse".into(),
    })?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular {
            scenario: Some(sys.scenario),
            context: "Y_LHS solve produced non-finite values".into(),
        });
    }
    let n_u = sys.rhs.ncols();
    let _ = net;
    Ok((0..sys.node_count())
        .map(|node| match sys.sg_source[node] {
            Some(s) => {
                let mut e = CMat::zeros(3, n_u);
                for p in 0..3 {
                    e[(p, 3 * s + p)] = c64(1.0, 0.0);
                }
                e
            }
            None => sol.rows(3 * node, 3).into_owned(),
        })
        .collect())
}

pub fn compute_network_matrices(
    net: &ThreePhaseNetwork,
    scenario: Scenario,
    nominal: FaultNominal,
) -> Result<NetworkMatrices> {
    compute_network_matrices_with(net, scenario, nominal, CurrentConvention::default())
}

pub fn compute_network_matrices_with(
    net: &ThreePhaseNetwork,
    scenario: Scenario,
    nominal: FaultNominal,
    convention: CurrentConvention,
) -> Result<NetworkMatrices> {
    let sys = stamped_system(net, scenario, nominal)?;
    let maps = node_voltage_maps(net, &sys)?;
    let aleph_f = maps[0].clone();
    let phi = maps[net.index[&net.relay_bus()] + 1].clone();
    let psi = maps[net.index[&net.remote_bus()] + 1].clone();
    let line = net.protected_line();
    let (gamma, theta) = match convention {
        CurrentConvention::Scalar => {
            let zl = line.z1 * nominal.m_z;
            let zr = line.z1 * (1.0 - nominal.m_z);
            ((&phi - &aleph_f) / zl, (&psi - &aleph_f) / zr)
        }
        CurrentConvention::Branch => {
            let z = line.z_abc();
            let yl = to_dmat(&invert3(&(z * c64(nominal.m_z, 0.0)), "local line segment")?);
            let yr = to_dmat(&invert3(&(z * c64(1.0 - nominal.m_z, 0.0)), "remote line segment")?);
            (yl * (&phi - &aleph_f), yr * (&psi - &aleph_f))
        }
    };
    Ok(NetworkMatrices { scenario, gamma, theta, phi, psi, aleph_f, convention, nominal })
}

fn to_dmat(m: &PhaseMatrix) -> CMat {
    CMat::from_iterator(3, 3, m.iter().copied())
}

/// Largest entry-wise gap between the scalar and 3×3 current conventions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConventionGap {
    pub gamma: f64,
    pub theta: f64,
}

pub fn convention_gap(net: &ThreePhaseNetwork, scenario: Scenario, nominal: FaultNominal) -> Result<ConventionGap> {
    let b = compute_network_matrices_with(net, scenario, nominal, CurrentConvention::Branch)?;
    let s = compute_network_matrices_with(net, scenario, nominal, CurrentConvention::Scalar)?;
    let gap = |a: &CMat, b: &CMat| (a - b).iter().map(|v| v.norm()).fold(0.0, f64::max);
    Ok(ConventionGap { gamma: gap(&b.gamma, &s.gamma), theta: gap(&b.theta, &s.theta) })
}

/// Relative residual `‖lhs·x − rhs·u‖ / ‖u‖` of the stamped system for a source vector.
pub fn stamped_residual(net: &ThreePhaseNetwork, sys: &StampedSystem, u: &CVec) -> Result<f64> {
    let lu = sys.lhs.clone().lu();
    let b = &sys.rhs * u;
    let x = lu.solve(&b).ok_or_else(|| Error::Singular {
        scenario: Some(sys.scenario),
        context: "Y_LHS has no inverse".into(),
    })?;
    let _ = net;
    Ok((&sys.lhs * x - b).norm() / u.norm().max(f64::MIN_POSITIVE))
}
