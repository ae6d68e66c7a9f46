//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails.

use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relaychar::auxopt::{objective, optimize_auxiliary, AuxSignal, InjectionKind};
use relaychar::config::{lg_ll_pairs, three_pairs, ListField, ScenarioFile};
use relaychar::convexsolve::feasible;
use relaychar::faults::{loop_spec, primary_loop, FaultShape, LlgLoop, LoopKind, Scenario};
use relaychar::geom::{pt, Point, Zonogon};
use relaychar::netmodel::{
    compute_network_matrices, stamped_residual, stamped_system, FaultNominal, NetworkMatrices, PhaseVector, ThreePhaseNetwork,
};
use relaychar::posttest::{
    exact_characteristic, is_consistent, simulate_fault, zonogon_characteristic, NoiseShape, RelaySettings, SourceUncertainty,
};
use relaychar::pretest::{contains_sample, sample_exact_w, sample_res_w, CouplingForm, WVariant};
use relaychar::sep::{check_separation, min_norm_uniform_injection, transcribed_dual, DualSystem, SeparationProblem, VerdictTag};
use relaychar::synth::random_small_network;
use relaychar::{c64, standin, CVec, C64};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 9] = [
        ("1 zonogon vertices equal the brute-force hull", zonogon_oracle),
        ("2 sampled faults inside exact, exact inside relaxation", containment),
        ("3 stamped residuals and loop identities", network_identities),
        ("4 relaxation chain contains sampled noise blocks", inclusion_chain),
        ("5 Farkas soundness and transcription agreement", farkas),
        ("6 no underreach on forward-simulated faults", no_underreach),
        ("7 separation scan on the all-inverter stand-in", separation_scan),
        ("8 ADMM signals verify and match the grid optimum", admm),
        ("9 characteristic build times", timing),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = f();
        let secs = start.elapsed().as_secs_f64();
        match out {
            Ok(note) => println!("PASS {name} ({secs:.1} s): {note}"),
            Err(note) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1} s): {note}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

// ---------------------------------------------------------------- 1

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Counter-clockwise monotone-chain hull without collinear points.
fn monotone_hull(mut pts: Vec<Point>) -> Vec<Point> {
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| (*a - *b).norm() < 1e-12);
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let it: Box<dyn Iterator<Item = &Point>> = if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in it {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 1e-12 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

fn brute_zonogon(c: Point, gens: &[Point]) -> Vec<Point> {
    let pts = (0..1u32 << gens.len())
        .map(|mask| gens.iter().enumerate().fold(c, |acc, (i, g)| if mask >> i & 1 == 1 { acc + g } else { acc - g }))
        .collect();
    monotone_hull(pts)
}

fn zonogon_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut lattice = 0;
    for inst in 0..200 {
        let p = rng.random_range(1..=8);
        let on_lattice = inst % 2 == 1;
        let gens: Vec<Point> = (0..p)
            .map(|_| {
                if on_lattice {
                    Point::new(rng.random_range(-3..=3) as f64, rng.random_range(-3..=3) as f64)
                } else {
                    Point::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))
                }
            })
            .collect();
        lattice += usize::from(on_lattice);
        let c = Point::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let walk = Zonogon::new(c, gens.clone()).vertices().vertices;
        let brute = brute_zonogon(c, &gens);
        check(walk.len() == brute.len(), || format!("instance {inst}: {} vertices against {}", walk.len(), brute.len()))?;
        let n = walk.len();
        let aligned = (0..n).any(|s| (0..n).all(|i| (walk[i] - brute[(i + s) % n]).norm() <= 1e-9));
        check(aligned, || format!("instance {inst}: vertex lists differ after alignment"))?;
    }
    let t = start.elapsed();
    check(t < Duration::from_secs(5), || format!("took {t:?}"))?;
    Ok(format!("200 zonogons ({lattice} with parallel or zero generators) in {:.1} ms", t.as_secs_f64() * 1e3))
}

// ---------------------------------------------------------------- 2

fn random_uncertainty(net: &ThreePhaseNetwork, rng: &mut ChaCha8Rng) -> SourceUncertainty {
    let sigma = rng.random_range(0.02..0.5);
    let sides = 2 * rng.random_range(2..=6);
    SourceUncertainty::uniform(net.nominal_sources(), sigma, NoiseShape::Polygon(sides)).expect("valid noise set")
}

/// Fault term of the loop, computed from the fault-bus current `i_L + i_R`.
fn fault_term(s: Scenario, relay: &RelaySettings, i_l: &PhaseVector, i_r: &PhaseVector, m_r: f64) -> C64 {
    let lp = primary_loop(s, relay.k, relay.llg_loop);
    let i_f = i_l + i_r;
    let r = m_r * relay.r_f * lp.resistance_factor;
    let i0 = (i_l[0] + i_l[1] + i_l[2]) / 3.0;
    match lp.kind {
        LoopKind::Lg(p) => i_f[p] * r / (i_l[p] + relay.k * i0),
        LoopKind::Ll(p, q) => (i_f[p] - i_f[q]) * (r / 2.0) / (i_l[p] - i_l[q]),
        LoopKind::Normal => unreachable!(),
    }
}

fn containment() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = f64::NEG_INFINITY;
    let mut draws = 0;
    while draws < 100 {
        let net = random_small_network(rng.random()).map_err(e)?;
        let unc = random_uncertainty(&net, &mut rng);
        let relay = RelaySettings::new(net.z(), net.k(), rng.random_range(0.1..3.0), 0.15);
        let s = Scenario::faults().nth(rng.random_range(0..11)).unwrap();
        let mats = compute_network_matrices(&net, s, FaultNominal::default()).map_err(e)?;
        let i_l = mats.terminal(&unc.sources(&unc.sample(&mut rng))).i_l;
        let lp = primary_loop(s, relay.k, relay.llg_loop);
        if lp.loop_current(&i_l).norm() < 1e-6 {
            continue;
        }
        draws += 1;
        let exact = exact_characteristic(s, &i_l, &unc, &mats, &relay).map_err(e)?;
        let relaxed = zonogon_characteristic(s, &i_l, &unc, &mats, &relay).map_err(e)?;
        let scale = exact.polygon.vertices.iter().map(|v| v.norm()).fold(1.0, f64::max);
        for v in &exact.polygon.vertices {
            check(relaxed.polygon.contains(v, 1e-9 * scale), || format!("draw {draws} ({s}): exact vertex outside relaxation"))?;
        }
        for j in 0..10_000 {
            // the first samples sit on the extremes of the reach and resistance ranges
            let m_z = if j < 4 { [0.15, 1.0][j % 2] } else { rng.random_range(0.15..=1.0) };
            let m_r = if j < 4 { [0.0, 1.0][j / 2] } else { rng.random_range(0.0..=1.0) };
            let i_r = mats.terminal(&unc.sources(&unc.sample(&mut rng))).i_r;
            let z_a = relay.z * m_z + fault_term(s, &relay, &i_l, &i_r, m_r);
            let inside = exact.polygon.contains(&pt(z_a), 1e-9 * scale);
            if !inside {
                return Err(format!("draw {draws} ({s}): sample {z_a} outside the exact characteristic"));
            }
            worst = worst.max(z_a.norm() / scale);
        }
    }
    Ok(format!("100 draws x 10^4 samples inside; largest sample at {worst:.3} of the characteristic radius"))
}

// ---------------------------------------------------------------- 3

fn close(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() <= tol * a.norm().max(b.norm()).max(1.0)
}

/// Fault-bus conditions of each stamp, written out phase by phase.
fn fault_condition(s: Scenario, v_f: &PhaseVector, i_f: &PhaseVector, r: f64) -> bool {
    let tol = 1e-8;
    let zero = C64::default();
    match s.shape() {
        FaultShape::Normal => (0..3).all(|p| close(i_f[p], zero, tol)),
        FaultShape::Ground(p) => {
            close(v_f[p], i_f[p] * r, tol) && (0..3).filter(|&q| q != p).all(|q| close(i_f[q], zero, tol))
        }
        FaultShape::LineLine(p, q) => {
            let o = 3 - p - q;
            close(v_f[p] - v_f[q], i_f[p] * r, tol) && close(i_f[p] + i_f[q], zero, tol) && close(i_f[o], zero, tol)
        }
        FaultShape::LineLineGround(p, q) => {
            let o = 3 - p - q;
            close(v_f[p], v_f[q], tol) && close(v_f[p], (i_f[p] + i_f[q]) * r, tol) && close(i_f[o], zero, tol)
        }
        FaultShape::Three => {
            close(i_f[0] + i_f[1] + i_f[2], zero, tol)
                && (0..3).all(|p| close(v_f[p] - v_f[(p + 1) % 3], (i_f[p] - i_f[(p + 1) % 3]) * (r / 2.0), tol))
        }
        FaultShape::ThreeGround => (0..3).all(|p| close(v_f[p], i_f[p] * (r / 2.0), tol)),
    }
}

fn network_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for n in 0..50 {
        let net = random_small_network(rng.random()).map_err(e)?;
        let nominal = FaultNominal { m_z: rng.random_range(0.05..0.95), m_r: rng.random_range(0.1..1.0), r_f: rng.random_range(0.1..5.0) };
        let u = CVec::from_fn(3 * net.source_count(), |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let (z1, k) = (net.z(), net.k());
        for s in Scenario::ALL {
            let sys = stamped_system(&net, s, nominal).map_err(e)?;
            let res = stamped_residual(&net, &sys, &u).map_err(e)?;
            worst = worst.max(res);
            check(res < 1e-9, || format!("network {n} ({s}): stamped residual {res:.3e}"))?;
            let t = compute_network_matrices(&net, s, nominal).map_err(e)?.terminal(&u);
            let (dl, dr) = (t.v_l - t.v_f, t.v_r - t.v_f);
            let i0 = |i: &PhaseVector| (i[0] + i[1] + i[2]) / 3.0;
            for (drop, i, m) in [(&dl, &t.i_l, nominal.m_z), (&dr, &t.i_r, 1.0 - nominal.m_z)] {
                for lp in loop_spec(s, k).into_iter().chain([relaychar::faults::LoopSpec::lg(0, k)]) {
                    let ok = match lp.kind {
                        LoopKind::Lg(p) => close(drop[p], z1 * m * (i[p] + k * i0(i)), 1e-8),
                        LoopKind::Ll(p, q) => close(drop[p] - drop[q], z1 * m * (i[p] - i[q]), 1e-8),
                        LoopKind::Normal => (0..3).all(|p| close(drop[p], z1 * m * (i[p] + k * i0(i)), 1e-8)),
                    };
                    check(ok, || format!("network {n} ({s}): loop KVL fails on {:?}", lp.kind))?;
                }
            }
            let i_f = t.i_l + t.i_r;
            check(fault_condition(s, &t.v_f, &i_f, nominal.m_r * nominal.r_f), || format!("network {n} ({s}): fault-bus condition fails"))?;
        }
    }
    Ok(format!("50 networks x 12 scenarios; largest stamped residual {worst:.2e}"))
}

// ---------------------------------------------------------------- 4

fn inclusion_chain() -> Outcome {
    let file = standin::ieee14().map_err(e)?;
    let net = file.network().map_err(e)?;
    let unc = file.uncertainty(&net).map_err(e)?;
    let m = file.relay.m_lower;
    let mut checks = 0;
    for s in sample_exact_w(&unc, m, 1000, 4) {
        for v in [WVariant::Rel1, WVariant::Rel2, WVariant::Rel3] {
            check(contains_sample(v, &unc, m, &s, 1e-8).map_err(e)?, || format!("exact sample outside {v}"))?;
            checks += 1;
        }
    }
    for s in sample_res_w(&unc, m, 1000, 5) {
        for v in [WVariant::Soc, WVariant::Rel1] {
            check(contains_sample(v, &unc, m, &s, 1e-8).map_err(e)?, || format!("restricted sample outside {v}"))?;
            checks += 1;
        }
    }
    Ok(format!("{checks} memberships, zero violations"))
}

// ---------------------------------------------------------------- 5

fn random_problem(rng: &mut ChaCha8Rng, scenarios: &[Scenario]) -> Result<SeparationProblem, String> {
    let net = random_small_network(rng.random()).map_err(e)?;
    let sigma = 10f64.powf(rng.random_range(-2.0..0.5));
    let unc = SourceUncertainty::uniform(net.nominal_sources(), sigma, NoiseShape::Polygon(2 * rng.random_range(2..=5))).map_err(e)?;
    SeparationProblem::new(&net, scenarios, FaultNominal::default(), LlgLoop::default(), unc, 0.15, InjectionKind::NegativeSequence)
        .map_err(e)
}

fn random_signal(rng: &mut ChaCha8Rng, problem: &SeparationProblem) -> Result<AuxSignal, String> {
    let scale = rng.random_range(0.0..4.0);
    let d = DVector::from_fn(problem.signal_dim(), |_, _| rng.random_range(-scale..=scale));
    problem.signal(&d).map_err(e)
}

fn random_fault(rng: &mut ChaCha8Rng) -> Scenario {
    Scenario::faults().nth(rng.random_range(0..11)).unwrap()
}

fn farkas() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut separated, mut overlapping) = (0, 0);
    for inst in 0..100 {
        let a = if rng.random_bool(0.3) { Scenario::N } else { random_fault(&mut rng) };
        let b = loop {
            let b = random_fault(&mut rng);
            if b != a {
                break b;
            }
        };
        let problem = random_problem(&mut rng, &[a, b])?;
        let delta = random_signal(&mut rng, &problem)?;
        let primal = feasible(&problem.intersection(a, b, WVariant::Rel3, &delta).map_err(e)?).map_err(e)?;
        let dual = DualSystem::build(&problem, (a, b), WVariant::Rel3).map_err(e)?;
        let d = delta.to_real();
        let cert = dual.solve(&d).map_err(e)?.filter(|p| dual.residual(&d, p) <= 1e-7);
        check(!(primal.is_feasible() && cert.is_some()), || format!("instance {inst} ({a}-{b}): both feasible"))?;
        if cert.is_some() {
            separated += 1;
        } else {
            overlapping += 1;
        }
    }
    let mut agreement = Vec::new();
    for (kind, with_normal) in [("normal-fault", true), ("fault-fault", false)] {
        let (mut yes, mut no) = (0, 0);
        for inst in 0..20 {
            let b = random_fault(&mut rng);
            let a = if with_normal {
                Scenario::N
            } else {
                loop {
                    let a = random_fault(&mut rng);
                    if a != b {
                        break a;
                    }
                }
            };
            let mut problem = random_problem(&mut rng, &[a, b])?;
            problem.form = CouplingForm::Shared;
            let delta = random_signal(&mut rng, &problem)?;
            let listed = feasible(&transcribed_dual(&problem, a, b, &delta).map_err(e)?).map_err(e)?.is_feasible();
            let mech = DualSystem::build(&problem, (a, b), WVariant::Rel3).map_err(e)?.solve(&delta.to_real()).map_err(e)?.is_some();
            check(listed == mech, || format!("{kind} instance {inst} ({a}-{b}): transcription {listed}, mechanical {mech}"))?;
            if mech {
                yes += 1;
            } else {
                no += 1;
            }
        }
        agreement.push(format!("{kind} {yes} separated / {no} not"));
    }
    Ok(format!(
        "soundness on 100 instances ({separated} separated, {overlapping} not); transcription agrees: {}",
        agreement.join(", ")
    ))
}

// ---------------------------------------------------------------- 6

fn no_underreach() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut total = 0;
    for file in [standin::ieee14().map_err(e)?, standin::ieee14_all_ibr().map_err(e)?] {
        let net = file.network().map_err(e)?;
        let unc = file.uncertainty(&net).map_err(e)?;
        let relay = file.relay_settings(&net).map_err(e)?;
        let mats: Vec<(Scenario, NetworkMatrices)> = Scenario::faults()
            .map(|s| compute_network_matrices(&net, s, file.nominal()).map(|m| (s, m)))
            .collect::<Result<_, _>>()
            .map_err(e)?;
        for _ in 0..5000 {
            let (s, m) = &mats[rng.random_range(0..mats.len())];
            let lambda = unc.sample(&mut rng);
            let m_z = rng.random_range(relay.m_lower..=1.0);
            let m_r = rng.random_range(0.0..=1.0);
            let meas = simulate_fault(*s, m, &unc, &relay, m_z, m_r, &lambda).map_err(e)?;
            let c = exact_characteristic(*s, &meas.i_l, &unc, m, &relay).map_err(e)?;
            check(is_consistent(*s, &meas.v_l, &meas.i_l, &c, relay.k).map_err(e)?, || {
                format!("{s} at m_z = {m_z:.4}, m_r = {m_r:.4} tests inconsistent")
            })?;
            total += 1;
        }
    }
    Ok(format!("{total} simulated faults, zero failures"))
}

// ---------------------------------------------------------------- 7

struct ScanOutcome {
    problem: SeparationProblem,
    best_lg_ll: C64,
}

fn all_ibr(pairs: &str) -> Result<(ScenarioFile, SeparationProblem), String> {
    let mut file = standin::ieee14_all_ibr().map_err(e)?;
    file.run.pairs = ListField::Keyword(pairs.into());
    let (problem, _) = SeparationProblem::from_file(&file).map_err(e)?;
    Ok((file, problem))
}

fn grid_41() -> Vec<C64> {
    (0..41).flat_map(|i| (0..41).map(move |j| c64(-3.0 + 0.15 * j as f64, -3.0 + 0.15 * i as f64))).collect()
}

fn run_scan() -> Result<(ScanOutcome, String), String> {
    let start = Instant::now();
    let (_, problem) = all_ibr("lg-ll")?;
    let zero = problem.zero_signal();
    let v = check_separation(&problem, Scenario::N, Scenario::Ag, &zero).map_err(e)?;
    check(v.tag == VerdictTag::NotSeparated, || format!("(a) N-ag at zero signal is {:?}", v.tag))?;
    let grid = grid_41();
    let three = min_norm_uniform_injection(&problem, &three_pairs(), &grid).map_err(e)?;
    let Some((p3, n3)) = three else {
        return Err("(b) no gridpoint separates the three pairs".into());
    };
    let all = min_norm_uniform_injection(&problem, &lg_ll_pairs(), &grid).map_err(e)?;
    let Some((pa, na)) = all else {
        return Err(format!("(c) no gridpoint separates every LG-LL pair; three-pair minimum {n3:.3} at {p3:.2}"));
    };
    check(na > n3, || format!("(c) LG-LL minimum {na:.3} at {pa:.2} does not exceed three-pair minimum {n3:.3} at {p3:.2}"))?;
    let t = start.elapsed();
    check(t < Duration::from_secs(600), || format!("took {t:?}"))?;
    let note = format!("N-ag not separated at zero; three-pair minimum {n3:.3} at {p3:.2}; LG-LL minimum {na:.3} at {pa:.2}");
    Ok((ScanOutcome { problem, best_lg_ll: pa }, note))
}

static SCAN: OnceLock<Result<(ScanOutcome, String), String>> = OnceLock::new();

fn scan() -> Result<&'static (ScanOutcome, String), String> {
    SCAN.get_or_init(run_scan).as_ref().map_err(Clone::clone)
}

fn separation_scan() -> Outcome {
    scan().map(|(_, note)| note.clone())
}

// ---------------------------------------------------------------- 8

fn admm_line(problem: &SeparationProblem, file: &ScenarioFile, pairs: &[(Scenario, Scenario)], start: C64, bound: f64) -> Outcome {
    let net = file.network().map_err(e)?;
    let mut cfg = file.admm_config(&net).map_err(e)?;
    cfg.delta0 = CVec::from_element(cfg.delta0.len(), start);
    cfg.max_iters = 120;
    let (signal, trace) = optimize_auxiliary(pairs, &cfg, problem).map_err(e)?;
    let obj = objective(&signal, &cfg.q).map_err(e)?;
    let mut bad = Vec::new();
    for &(a, b) in pairs {
        let v = check_separation(problem, a, b, &signal).map_err(e)?;
        if v.tag != VerdictTag::Separated || v.residual > 1e-7 {
            bad.push(format!("{a}-{b}"));
        }
    }
    let note = format!(
        "from {start:.2}: objective {obj:.4} (grid {bound:.4}), {} iterations, reported verified {}, unverified pairs [{}]",
        trace.steps.len(),
        trace.verified,
        bad.join(" ")
    );
    if bad.is_empty() && obj <= bound + 1e-6 {
        Ok(note)
    } else {
        Err(note)
    }
}

fn admm() -> Outcome {
    let (scan, _) = scan()?;
    let (file, _) = all_ibr("lg-ll")?;
    let net = file.network().map_err(e)?;
    let q = file.admm_config(&net).map_err(e)?.q;
    let problem = &scan.problem;
    let grid_objective = |d: C64| objective(&AuxSignal::uniform(d, problem.ibr_count), &q).map_err(e);
    let bound = grid_objective(scan.best_lg_ll)?;

    if let Some((p3, _)) = min_norm_uniform_injection(problem, &three_pairs(), &grid_41()).map_err(e)? {
        match admm_line(problem, &file, &three_pairs(), c64(0.0, 0.0), grid_objective(p3)?) {
            Ok(n) | Err(n) => println!("note: three pairs {n}"),
        }
    }

    let pairs = lg_ll_pairs();
    let cold = admm_line(problem, &file, &pairs, c64(0.0, 0.0), bound);
    let warm = admm_line(problem, &file, &pairs, scan.best_lg_ll, bound);
    match (cold, warm) {
        (Ok(a), Ok(b)) => Ok(format!("{a}; {b}")),
        (a, b) => Err(format!("{}; {}", a.unwrap_or_else(|x| x), b.unwrap_or_else(|x| x))),
    }
}

// ---------------------------------------------------------------- 9

fn timing() -> Outcome {
    let file = standin::ieee14().map_err(e)?;
    let net = file.network().map_err(e)?;
    let unc = file.uncertainty(&net).map_err(e)?;
    let relay = file.relay_settings(&net).map_err(e)?;
    let build = |relaxed: bool| -> Result<Duration, String> {
        let start = Instant::now();
        for s in Scenario::faults() {
            let mats = compute_network_matrices(&net, s, file.nominal()).map_err(e)?;
            let i_l = mats.terminal(&unc.nominal).i_l;
            if relaxed {
                zonogon_characteristic(s, &i_l, &unc, &mats, &relay).map_err(e)?;
            } else {
                exact_characteristic(s, &i_l, &unc, &mats, &relay).map_err(e)?;
            }
        }
        Ok(start.elapsed())
    };
    let (exact, relaxed) = (build(false)?, build(true)?);
    let note = format!("exact {:.2} ms, relaxed {:.2} ms", exact.as_secs_f64() * 1e3, relaxed.as_secs_f64() * 1e3);
    if exact < Duration::from_secs(5) && relaxed < Duration::from_millis(50) {
        Ok(note)
    } else {
        Err(note)
    }
}
