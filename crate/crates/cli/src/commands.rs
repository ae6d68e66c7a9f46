use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use relaychar::auxopt::{objective, optimize_auxiliary};
use relaychar::config::{format_complex, parse_complex, parse_scenarios, GridSpec, ListField, MeasurementFile, ScenarioFile};
use relaychar::faults::Scenario;
use relaychar::geom::SvgPlot;
use relaychar::netmodel::compute_network_matrices_with;
use relaychar::posttest::{
    apparent_impedance, apply_cut, exact_characteristic, is_consistent, zonogon_characteristic, Characteristic, CharacteristicKind,
};
use relaychar::sep::{check_separation, scan_uniform_injection, SeparationProblem};
use relaychar::{CVec, Error};

const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn kind_tag(k: CharacteristicKind) -> &'static str {
    match k {
        CharacteristicKind::Exact => "exact",
        CharacteristicKind::ZonogonRelaxed => "relaxed",
        CharacteristicKind::Cut => "cut",
    }
}

/// The file with its pair list replaced, if one is given.
fn with_pairs(mut file: ScenarioFile, pairs: Option<&str>) -> Result<ScenarioFile> {
    if let Some(p) = pairs {
        file.run.pairs = ListField::Keyword(p.to_string());
        file.pairs()?;
    }
    Ok(file)
}

pub fn characteristic(
    path: &Path,
    scenarios: Option<&str>,
    relaxed: bool,
    cut: bool,
    measurement: Option<&Path>,
    out: &Path,
) -> Result<ExitCode> {
    let file = ScenarioFile::load(path)?;
    let net = file.network()?;
    let unc = file.uncertainty(&net)?;
    let relay = file.relay_settings(&net)?;
    let convention = file.convention()?;
    let list = match scenarios {
        Some(s) => parse_scenarios(&ListField::Keyword(s.to_string()))?,
        None => file.scenarios()?,
    };
    if list.contains(&Scenario::N) {
        return Err(Error::InvalidInput("normal operation has no impedance characteristic".into()).into());
    }
    let meas = measurement.map(MeasurementFile::load).transpose()?;

    let start = Instant::now();
    let mut built: Vec<Characteristic> = Vec::with_capacity(list.len());
    let mut warnings = Vec::new();
    for &s in &list {
        let mats = compute_network_matrices_with(&net, s, file.nominal(), convention)?;
        let i_l = match &meas {
            Some(m) => m.i_l(),
            None => mats.terminal(&unc.nominal).i_l,
        };
        let exact = if relaxed && !cut { None } else { Some(exact_characteristic(s, &i_l, &unc, &mats, &relay)?) };
        let c = if relaxed { zonogon_characteristic(s, &i_l, &unc, &mats, &relay)? } else { exact.clone().expect("built above") };
        let c = if cut {
            let o = apply_cut(&c, relay.z, exact.as_ref().map(|e| &e.polygon));
            warnings.extend(o.warnings);
            o.characteristic
        } else {
            c
        };
        built.push(c);
    }
    let elapsed = start.elapsed();

    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut plot = SvgPlot::new();
    let mut table = String::from("scenario,kind,vertices,area\n");
    for (i, c) in built.iter().enumerate() {
        write(out, &format!("{}.csv", c.scenario.tag()), &c.polygon.to_csv())?;
        plot.polygon(&c.polygon, PALETTE[i % PALETTE.len()]);
        let _ = writeln!(table, "{},{},{},{}", c.scenario, kind_tag(c.kind), c.polygon.len(), c.polygon.area());
    }
    write(out, "characteristics.svg", &plot.render(480.0))?;
    print!("{table}");
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let (label, reference) = if relaxed { ("relaxed", "1 ms") } else { ("exact", "0.9 s") };
    println!(
        "built {} {label} characteristics in {:.3} ms (reference {reference} for all eleven faults)",
        built.len(),
        elapsed.as_secs_f64() * 1e3
    );
    Ok(ExitCode::SUCCESS)
}

pub fn check(path: &Path, measurement: &Path) -> Result<ExitCode> {
    let file = ScenarioFile::load(path)?;
    let net = file.network()?;
    let unc = file.uncertainty(&net)?;
    let relay = file.relay_settings(&net)?;
    let convention = file.convention()?;
    let m = MeasurementFile::load(measurement)?;
    let (v_l, i_l) = (m.v_l(), m.i_l());
    let mut table = String::from("scenario,consistent,z_re,z_im\n");
    for s in Scenario::faults() {
        let mats = compute_network_matrices_with(&net, s, file.nominal(), convention)?;
        let row = exact_characteristic(s, &i_l, &unc, &mats, &relay).and_then(|c| {
            let z = apparent_impedance(s, &c.loop_spec, &v_l, &i_l)?;
            Ok((is_consistent(s, &v_l, &i_l, &c, relay.k)?, z))
        });
        match row {
            Ok((ok, z)) => {
                let _ = writeln!(table, "{s},{ok},{},{}", z.re, z.im);
            }
            Err(Error::DegenerateLoop { .. }) => {
                let _ = writeln!(table, "{s},degenerate,,");
            }
            Err(e) => return Err(e.into()),
        }
    }
    print!("{table}");
    Ok(ExitCode::SUCCESS)
}

pub fn scan(path: &Path, grid: Option<&str>, pairs: Option<&str>, out: &Path) -> Result<ExitCode> {
    let file = with_pairs(ScenarioFile::load(path)?, pairs)?;
    let grid: GridSpec = match grid {
        Some(g) => g.parse()?,
        None => file.grid()?,
    };
    let (problem, _) = SeparationProblem::from_file(&file)?;
    let pairs = file.pairs()?;
    let points = grid.points();
    let result = scan_uniform_injection(&problem, &pairs, &points)?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write(out, "scan.csv", &result.to_csv())?;
    write(out, "scan.svg", &result.to_svg())?;
    let all = result.flags.iter().filter(|f| f.iter().all(|&b| b)).count();
    println!("{} gridpoints, {} separate all {} pairs", points.len(), all, pairs.len());
    match result.min_separating() {
        Some((p, n)) => println!("smallest separating point {} with signal norm {n}", format_complex(p)),
        None => println!("no gridpoint separates every pair"),
    }
    Ok(ExitCode::SUCCESS)
}

pub fn optimize(path: &Path, pairs: Option<&str>, delta0: Option<&str>, max_iters: Option<usize>, out: &Path) -> Result<ExitCode> {
    let file = with_pairs(ScenarioFile::load(path)?, pairs)?;
    let (problem, net) = SeparationProblem::from_file(&file)?;
    let pairs = file.pairs()?;
    let mut cfg = file.admm_config(&net)?;
    if let Some(d) = delta0 {
        cfg.delta0 = CVec::from_element(cfg.delta0.len(), parse_complex(d)?);
    }
    if let Some(n) = max_iters {
        cfg.max_iters = n;
    }
    cfg.validate()?;
    let (signal, trace) = optimize_auxiliary(&pairs, &cfg, &problem)?;

    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut csv = String::from("inverter,bus,re,im\n");
    let buses = net.ibr_buses();
    let width = signal.kind.width();
    for (i, z) in signal.delta.iter().enumerate() {
        let _ = writeln!(csv, "{},{},{},{}", i, buses[i / width], z.re, z.im);
    }
    write(out, "signal.csv", &csv)?;
    write(out, "trace.csv", &trace.to_csv())?;

    println!("pair,verdict");
    for &(a, b) in &pairs {
        let v = check_separation(&problem, a, b, &signal)?;
        println!("{a}-{b},{:?}", v.tag);
    }
    println!("iterations {}", trace.steps.len());
    println!("objective {}", objective(&signal, &cfg.q)?);
    println!("signal norm {}", signal.norm());
    println!("converged {}", trace.converged);
    println!("verified {}", trace.verified);
    Ok(ExitCode::SUCCESS)
}
