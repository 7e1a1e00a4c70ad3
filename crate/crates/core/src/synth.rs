//! Random grids, branches and voltage points for tests and benchmarks.
//! Grids are connected, lightly loaded and have a well-sized generator at
//! the reference bus, so the exact models are feasible.

use num_complex::Complex64;
use rand::Rng;

use crate::grid::{Branch, Bus, BusType, Generator, Grid};

/// Branch between buses `from` and `to` with random pi-model data.
pub fn random_branch<R: Rng>(rng: &mut R, from: u32, to: u32, circuit: u32) -> Branch {
    let mut br = Branch::new(from, to, circuit, rng.random_range(0.001..0.05), rng.random_range(0.01..0.3));
    br.charging = rng.random_range(0.0..0.1);
    br.tap = rng.random_range(0.9..1.1);
    br.shift = rng.random_range(-0.2..0.2);
    br
}

/// Grid on `n` buses (bus ids `1..=n`, reference bus 1): a random spanning
/// tree plus up to `n / 2` extra branches, some of them parallel.
pub fn random_grid<R: Rng>(rng: &mut R, n: usize) -> Grid {
    assert!(n >= 1);
    let mut buses = Vec::with_capacity(n);
    for id in 1..=n as u32 {
        let kind = if id == 1 { BusType::Reference } else { BusType::Load };
        let mut b = Bus::new(id, kind);
        b.v_min = 0.9;
        b.v_max = 1.1;
        if id != 1 {
            b.demand = Complex64::new(rng.random_range(0.0..0.3), rng.random_range(-0.05..0.1));
        }
        if rng.random_bool(0.2) {
            b.shunt = Complex64::new(rng.random_range(0.0..0.02), rng.random_range(-0.05..0.05));
        }
        buses.push(b);
    }
    let mut branches: Vec<Branch> = Vec::new();
    let mut circuits = std::collections::HashMap::new();
    let mut add = |rng: &mut R, a: u32, b: u32, branches: &mut Vec<Branch>| {
        let c = circuits.entry((a.min(b), a.max(b))).or_insert(0);
        *c += 1;
        let mut br = random_branch(rng, a, b, *c);
        br.tap = rng.random_range(0.97..1.03);
        br.shift = rng.random_range(-0.05..0.05);
        if rng.random_bool(0.5) {
            br.s_max = rng.random_range(2.0..4.0);
        }
        if rng.random_bool(0.5) {
            br.angle_min = -0.5;
            br.angle_max = 0.5;
        }
        branches.push(br);
    };
    for id in 2..=n as u32 {
        let parent = rng.random_range(1..id);
        add(rng, parent, id, &mut branches);
    }
    if n >= 2 {
        for _ in 0..n / 2 {
            let a = rng.random_range(1..=n as u32);
            let b = rng.random_range(1..=n as u32);
            if a != b {
                add(rng, a, b, &mut branches);
            }
        }
    }
    let total: f64 = buses.iter().map(|b| b.demand.re).sum();
    let mut generators = vec![Generator {
        bus: 1,
        index: 1,
        p_min: 0.0,
        p_max: 2.0 * total + 1.0,
        q_min: -2.0 * total - 1.0,
        q_max: 2.0 * total + 1.0,
        cost: vec![0.0, rng.random_range(10.0..50.0), rng.random_range(0.0..5.0)],
    }];
    if n >= 2 {
        let bus = rng.random_range(2..=n as u32);
        generators.push(Generator {
            bus,
            index: 1,
            p_min: 0.0,
            p_max: rng.random_range(0.1..0.5),
            q_min: -0.3,
            q_max: 0.3,
            cost: vec![0.0, rng.random_range(5.0..60.0), 0.0],
        });
    }
    Grid::new(buses, branches, generators, 100.0)
}

/// Cartesian voltages with magnitudes in `[0.9, 1.1]` and angles within
/// half a radian of zero.
pub fn random_voltages<R: Rng>(rng: &mut R, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::from_polar(rng.random_range(0.9..1.1), rng.random_range(-0.5..0.5)))
        .collect()
}
