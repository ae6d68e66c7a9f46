//! `relaychar verify`: invariant checks on one scenario file.

use std::path::Path;
use std::process::ExitCode;

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relaychar::convexsolve::feasible;
use relaychar::config::ScenarioFile;
use relaychar::faults::Scenario;
use relaychar::geom::pt;
use relaychar::netmodel::{compute_network_matrices_with, stamped_residual, stamped_system, ThreePhaseNetwork};
use relaychar::posttest::{exact_characteristic, is_consistent, simulate_fault, zonogon_characteristic, SourceUncertainty};
use relaychar::pretest::{contains_sample, sample_exact_w, sample_res_w, WVariant};
use relaychar::sep::{DualSystem, SeparationProblem};

type Check = std::result::Result<(), String>;

struct Report {
    failures: usize,
}

impl Report {
    fn record(&mut self, name: &str, outcome: Check) {
        match outcome {
            Ok(()) => println!("PASS {name}"),
            Err(m) => {
                self.failures += 1;
                println!("FAIL {name}: {m}");
            }
        }
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

pub fn run(path: &Path, seed: u64) -> Result<ExitCode> {
    let mut r = Report { failures: 0 };
    let file = match ScenarioFile::load(path) {
        Ok(f) => f,
        Err(e) => {
            r.record("scenario file schema", Err(err(e)));
            return Ok(ExitCode::from(1));
        }
    };
    r.record("scenario file schema", Ok(()));
    let net = match file.network() {
        Ok(n) => n,
        Err(e) => {
            r.record("network", Err(err(e)));
            return Ok(ExitCode::from(1));
        }
    };
    r.record("network", Ok(()));
    let unc = match file.uncertainty(&net) {
        Ok(u) => u,
        Err(e) => {
            r.record("noise set symmetric about the origin", Err(err(e)));
            return Ok(ExitCode::from(1));
        }
    };
    r.record("noise set symmetric about the origin", Ok(()));

    r.record("stamped network residual below 1e-9", stamped(&file, &net, &unc));
    r.record("exact characteristic inside its zonogon relaxation", nesting(&file, &net, &unc));
    r.record("simulated on-line faults test consistent", no_underreach(&file, &net, &unc, seed));
    r.record("relaxation chain contains sampled noise blocks", inclusion(&file, &unc, seed));
    r.record("dual and relaxed primal never both feasible", soundness(&file));
    r.record("seeded sampling is reproducible", reproducible(&file, &unc, seed));

    if r.failures == 0 {
        println!("all checks passed");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{} checks failed", r.failures);
        Ok(ExitCode::from(2))
    }
}

fn stamped(file: &ScenarioFile, net: &ThreePhaseNetwork, unc: &SourceUncertainty) -> Check {
    for s in Scenario::ALL {
        let sys = stamped_system(net, s, file.nominal()).map_err(err)?;
        let res = stamped_residual(net, &sys, &unc.nominal).map_err(err)?;
        if res > 1e-9 {
            return Err(format!("{s}: relative residual {res:.3e}"));
        }
    }
    Ok(())
}

fn nesting(file: &ScenarioFile, net: &ThreePhaseNetwork, unc: &SourceUncertainty) -> Check {
    let relay = file.relay_settings(net).map_err(err)?;
    let convention = file.convention().map_err(err)?;
    for s in Scenario::faults() {
        let mats = compute_network_matrices_with(net, s, file.nominal(), convention).map_err(err)?;
        let i_l = mats.terminal(&unc.nominal).i_l;
        let exact = exact_characteristic(s, &i_l, unc, &mats, &relay).map_err(err)?;
        let relaxed = zonogon_characteristic(s, &i_l, unc, &mats, &relay).map_err(err)?;
        if let Some(v) = exact.polygon.vertices.iter().find(|v| !relaxed.polygon.contains(v, 1e-9)) {
            return Err(format!("{s}: vertex ({}, {}) lies outside", v.x, v.y));
        }
    }
    Ok(())
}

fn no_underreach(file: &ScenarioFile, net: &ThreePhaseNetwork, unc: &SourceUncertainty, seed: u64) -> Check {
    let relay = file.relay_settings(net).map_err(err)?;
    let convention = file.convention().map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in Scenario::faults() {
        let mats = compute_network_matrices_with(net, s, file.nominal(), convention).map_err(err)?;
        for _ in 0..20 {
            let lambda = unc.sample(&mut rng);
            let m_z = rng.random_range(relay.m_lower..=1.0);
            let m_r = rng.random_range(0.0..=1.0);
            let meas = simulate_fault(s, &mats, unc, &relay, m_z, m_r, &lambda).map_err(err)?;
            let c = exact_characteristic(s, &meas.i_l, unc, &mats, &relay).map_err(err)?;
            if !is_consistent(s, &meas.v_l, &meas.i_l, &c, relay.k).map_err(err)? {
                let z = meas.z_a.map(pt).map(|p| format!("({}, {})", p.x, p.y)).unwrap_or_default();
                return Err(format!("{s} at m_z = {m_z:.3}, m_r = {m_r:.3}: apparent impedance {z} outside"));
            }
        }
    }
    Ok(())
}

fn inclusion(file: &ScenarioFile, unc: &SourceUncertainty, seed: u64) -> Check {
    let m = file.relay.m_lower;
    for s in sample_exact_w(unc, m, 50, seed) {
        for v in [WVariant::Rel1, WVariant::Rel2, WVariant::Rel3] {
            if !contains_sample(v, unc, m, &s, 1e-8).map_err(err)? {
                return Err(format!("exact sample outside {v}"));
            }
        }
    }
    for s in sample_res_w(unc, m, 50, seed) {
        for v in [WVariant::Soc, WVariant::Rel1] {
            if !contains_sample(v, unc, m, &s, 1e-8).map_err(err)? {
                return Err(format!("restricted sample outside {v}"));
            }
        }
    }
    Ok(())
}

fn soundness(file: &ScenarioFile) -> Check {
    let (problem, _) = SeparationProblem::from_file(file).map_err(err)?;
    let zero = problem.zero_signal();
    for (a, b) in file.pairs().map_err(err)? {
        let primal = feasible(&problem.intersection(a, b, WVariant::Rel3, &zero).map_err(err)?).map_err(err)?;
        let dual = DualSystem::build(&problem, (a, b), WVariant::Rel3).map_err(err)?;
        let certificate = dual.solve(&zero.to_real()).map_err(err)?;
        if primal.is_feasible() && certificate.is_some() {
            return Err(format!("{a}-{b}: both feasible"));
        }
    }
    Ok(())
}

fn reproducible(file: &ScenarioFile, unc: &SourceUncertainty, seed: u64) -> Check {
    let m = file.relay.m_lower;
    let (a, b) = (sample_exact_w(unc, m, 5, seed), sample_exact_w(unc, m, 5, seed));
    if a != b {
        return Err("two draws with the same seed differ".into());
    }
    let mut r1 = ChaCha8Rng::seed_from_u64(seed);
    let mut r2 = ChaCha8Rng::seed_from_u64(seed);
    if unc.sample(&mut r1) != unc.sample(&mut r2) {
        return Err("noise samples differ".into());
    }
    Ok(())
}
