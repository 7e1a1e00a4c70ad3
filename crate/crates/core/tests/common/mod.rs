// Helpers and independent oracles shared by the integration tests and the
// acceptance suite.
#![allow(dead_code)]

use std::path::PathBuf;

use acopf_core::case_io::read_case;
use acopf_core::grid::{Branch, Grid};
use acopf_core::ir::{FormKind, Formulation, Point};
use acopf_core::solvers::{solve_polar_local, SolveOptions};
use acopf_core::synth::random_grid;
use acopf_core::transforms::{generation_of, voltages_of, VoltagePoint};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn data_file(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn case5() -> Grid {
    read_case(&data_file("case5.dat")).expect("case5.dat parses")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub fn c_err(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1.0)
}

/// Admittances `(yff, yft, ytf, ytt)` of a pi-model branch written out in
/// real arithmetic.
pub fn admittance_oracle(br: &Branch) -> [Complex64; 4] {
    let d = br.r * br.r + br.x * br.x;
    let (gs, bs) = (br.r / d, -br.x / d);
    let (c, s) = (br.shift.cos(), br.shift.sin());
    let t = br.tap;
    let half = br.charging / 2.0;
    let ytt = Complex64::new(gs, bs + half);
    let yff = Complex64::new(gs / (t * t), (bs + half) / (t * t));
    // -y / (t e^{-i nu}) = -y e^{i nu} / t
    let yft = Complex64::new(-(gs * c - bs * s) / t, -(gs * s + bs * c) / t);
    // -y / (t e^{i nu}) = -y e^{-i nu} / t
    let ytf = Complex64::new(-(gs * c + bs * s) / t, -(bs * c - gs * s) / t);
    [yff, yft, ytf, ytt]
}

/// Net bus injections `V_b conj(I_b)` summed branch by branch, plus the
/// current entering each branch at its two ends.
pub struct FlowOracle {
    pub injection: Vec<Complex64>,
    /// Per branch: (current at from, current at to).
    pub currents: Vec<(Complex64, Complex64)>,
}

pub fn flow_oracle(grid: &Grid, v: &[Complex64]) -> FlowOracle {
    let n = grid.n_buses();
    let mut current = vec![Complex64::new(0.0, 0.0); n];
    for (b, bus) in grid.buses().iter().enumerate() {
        current[b] += bus.shunt * v[b];
    }
    let mut currents = Vec::new();
    for br in grid.branches() {
        if !br.in_service {
            currents.push((Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)));
            continue;
        }
        let f = grid.bus_position(br.from).unwrap();
        let t = grid.bus_position(br.to).unwrap();
        let [yff, yft, ytf, ytt] = admittance_oracle(br);
        let i_f = yff * v[f] + yft * v[t];
        let i_t = ytf * v[f] + ytt * v[t];
        current[f] += i_f;
        current[t] += i_t;
        currents.push((i_f, i_t));
    }
    let injection = v.iter().zip(&current).map(|(vb, ib)| vb * ib.conj()).collect();
    FlowOracle { injection, currents }
}

pub fn random_generation<R: Rng>(rng: &mut R, grid: &Grid) -> Vec<Complex64> {
    grid.generators()
        .iter()
        .map(|_| Complex64::new(rng.random_range(0.0..2.0), rng.random_range(-1.0..1.0)))
        .collect()
}

/// Synthetic 3-bus grids used wherever small feasible systems are needed.
pub fn small_grids() -> Vec<Grid> {
    [11u64, 12].iter().map(|&s| random_grid(&mut rng(s), 3)).collect()
}

/// A feasible solution of the polar model as voltages and generation.
pub struct LocalPoint {
    pub voltages: VoltagePoint,
    pub generation: Vec<Complex64>,
    pub objective: f64,
}

/// Up to `count` feasible points found by single-start local solves with
/// successive seeds.
pub fn local_points(grid: &Grid, count: usize) -> Vec<LocalPoint> {
    let mut out = Vec::new();
    for seed in 0..(4 * count as u64) {
        if out.len() == count {
            break;
        }
        let opts = SolveOptions { seed, multistart: 1, ..Default::default() };
        let r = solve_polar_local(grid, &opts).expect("local solve runs");
        if !r.status.is_feasible() {
            continue;
        }
        let v = voltages_of(grid, FormKind::Polar, &r.point).expect("polar point has voltages");
        let sg = generation_of(grid, &r.point).expect("polar point has generation");
        out.push(LocalPoint { voltages: VoltagePoint::Cartesian(v), generation: sg, objective: r.objective });
    }
    out
}

/// Point with every variable of `f` set to zero, overlaid with `p`.
pub fn complete(f: &Formulation, p: &Point) -> Point {
    let mut q = Point::new();
    for v in f.variables() {
        q.set(v.name.clone(), p.get(&v.name).unwrap_or(0.0));
    }
    q
}
