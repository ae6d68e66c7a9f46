//! Seeded random networks for property tests and the acceptance suite.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::netmodel::{balanced, LineSpec, SourceKind, SourceSpec, ThreePhaseNetwork};
use crate::{c64, Result, C64};

/// A random connected network with `bus_count` buses (at least 2).
///
/// Bus 1 holds a generator and is the relay; bus 2 is the remote end of the
/// protected line. There is at least one inverter. Every line has
/// `z0 = (1 + k) z1` for one network-wide `k`.
pub fn random_network(seed: u64, bus_count: usize) -> Result<ThreePhaseNetwork> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = bus_count.max(2);
    let k = c64(rng.random_range(0.5..3.0), rng.random_range(-0.2..0.2));
    let impedance = |rng: &mut ChaCha8Rng| -> (C64, C64) {
        let z1 = c64(rng.random_range(0.01..0.1), rng.random_range(0.05..0.5));
        (z1, z1 * (1.0 + k))
    };
    let mut lines = Vec::new();
    for b in 2..=n {
        let to = if b == 2 { 1 } else { rng.random_range(1..b) };
        let (z1, z0) = impedance(&mut rng);
        lines.push(LineSpec { from: to, to: b, z1, z0 });
    }
    // a few meshing lines, never parallel to an existing one
    for _ in 0..n / 3 {
        let a = rng.random_range(1..=n);
        let b = rng.random_range(1..=n);
        let exists = lines.iter().any(|l| (l.from == a && l.to == b) || (l.from == b && l.to == a));
        if a != b && !exists {
            let (z1, z0) = impedance(&mut rng);
            lines.push(LineSpec { from: a, to: b, z1, z0 });
        }
    }
    let ibr_at = rng.random_range(2..=n);
    let buses = (1..=n)
        .map(|b| {
            let kind = if b == 1 {
                SourceKind::Sg { v: balanced(C64::from_polar(1.0, rng.random_range(0.0..0.3))) }
            } else if b == ibr_at {
                SourceKind::Ibr { i: balanced(C64::from_polar(rng.random_range(0.3..1.0), rng.random_range(0.0..2.0 * PI / 3.0))) }
            } else {
                match rng.random_range(0..4) {
                    0 => SourceKind::Sg { v: balanced(C64::from_polar(rng.random_range(0.95..1.05), rng.random_range(0.0..0.3))) },
                    1 => SourceKind::Ibr {
                        i: balanced(C64::from_polar(rng.random_range(0.3..1.0), rng.random_range(0.0..2.0 * PI / 3.0))),
                    },
                    2 => SourceKind::Load { y: c64(rng.random_range(0.05..0.5), rng.random_range(-0.1..0.1)) },
                    _ => SourceKind::Junction,
                }
            };
            SourceSpec { bus: b, kind }
        })
        .collect();
    ThreePhaseNetwork::new(buses, lines, 1, 2)
}

/// A network with `bus_count` buses drawn uniformly from `3..=10`.
pub fn random_small_network(seed: u64) -> Result<ThreePhaseNetwork> {
    let n = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed).random_range(3..=10);
    random_network(seed, n)
}

/// Generator at the relay, inverter at the remote end, one line between them.
pub fn two_bus(z1: C64, k: C64, ibr_current: C64) -> Result<ThreePhaseNetwork> {
    ThreePhaseNetwork::new(
        vec![
            SourceSpec { bus: 1, kind: SourceKind::Sg { v: balanced(c64(1.0, 0.0)) } },
            SourceSpec { bus: 2, kind: SourceKind::Ibr { i: balanced(ibr_current) } },
        ],
        vec![LineSpec { from: 1, to: 2, z1, z0: z1 * (1.0 + k) }],
        1,
        2,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn networks_are_valid_and_reproducible() {
        for seed in 0..40 {
            let a = random_small_network(seed).unwrap();
            let b = random_small_network(seed).unwrap();
            assert!((3..=10).contains(&a.buses().len()));
            assert_eq!(a.buses(), b.buses());
            assert_eq!(a.lines(), b.lines());
            assert!(!a.ibr_buses().is_empty());
        }
    }
}
