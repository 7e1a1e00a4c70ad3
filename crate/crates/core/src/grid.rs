//! Network data model: buses, branches, generators, arcs and admittances.
//!
//! Quantities are per unit on the grid's MVA base. Bus identifiers are the
//! external integers used by case files; `Grid` keeps a dense position for
//! every bus (its order in [`Grid::buses`]) which all numeric code uses.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

/// External bus identifier.
pub type BusId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("branch ({from},{to},{circuit}) has zero series impedance")]
    ZeroImpedance { from: BusId, to: BusId, circuit: u32 },
    #[error("invalid grid: {0}")]
    Invalid(ValidationReport),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BusType {
    Load,
    Generator,
    Reference,
}

impl BusType {
    /// Numeric code used by case files (1 load, 2 generator, 3 reference).
    pub fn code(self) -> u8 {
        match self {
            BusType::Load => 1,
            BusType::Generator => 2,
            BusType::Reference => 3,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            1 => Some(BusType::Load),
            2 => Some(BusType::Generator),
            3 => Some(BusType::Reference),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusType,
    /// Complex power demand.
    pub demand: Complex64,
    pub v_min: f64,
    pub v_max: f64,
    /// Shunt admittance to ground.
    pub shunt: Complex64,
    /// Voltage magnitude hint carried from the case file.
    pub vm_init: f64,
    /// Voltage angle hint (radians) carried from the case file.
    pub va_init: f64,
}

impl Bus {
    pub fn new(id: BusId, kind: BusType) -> Self {
        Bus {
            id,
            kind,
            demand: Complex64::new(0.0, 0.0),
            v_min: 0.0,
            v_max: f64::INFINITY,
            shunt: Complex64::new(0.0, 0.0),
            vm_init: 1.0,
            va_init: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: BusId,
    pub to: BusId,
    /// Parallel circuit index, starting at 1.
    pub circuit: u32,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    pub charging: f64,
    /// Off-nominal tap ratio magnitude.
    pub tap: f64,
    /// Phase shift angle in radians.
    pub shift: f64,
    /// Apparent power limit; `f64::INFINITY` when unbounded.
    pub s_max: f64,
    /// Current magnitude limit, if the case supplies one.
    pub i_max: Option<f64>,
    pub angle_min: f64,
    pub angle_max: f64,
    pub in_service: bool,
}

impl Branch {
    pub fn new(from: BusId, to: BusId, circuit: u32, r: f64, x: f64) -> Self {
        Branch {
            from,
            to,
            circuit,
            r,
            x,
            charging: 0.0,
            tap: 1.0,
            shift: 0.0,
            s_max: f64::INFINITY,
            i_max: None,
            angle_min: -std::f64::consts::PI,
            angle_max: std::f64::consts::PI,
            in_service: true,
        }
    }

    /// True when the branch carries a finite, positive apparent power limit.
    pub fn has_flow_limit(&self) -> bool {
        self.s_max.is_finite() && self.s_max > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: BusId,
    /// Position of the unit among the generators of its bus, starting at 1.
    pub index: u32,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Cost coefficients `c0, c1, ..` of the polynomial in real output.
    pub cost: Vec<f64>,
}

impl Generator {
    pub fn cost_at(&self, p: f64) -> f64 {
        self.cost.iter().rev().fold(0.0, |acc, c| acc * p + c)
    }
}

/// Admittances of the pi-model of one branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance {
    pub yff: Complex64,
    pub yft: Complex64,
    pub ytf: Complex64,
    pub ytt: Complex64,
}

/// Computes the pi-model admittances of a branch.
pub fn branch_admittance(branch: &Branch) -> Result<BranchAdmittance, GridError> {
    let z = Complex64::new(branch.r, branch.x);
    if z.norm_sqr() == 0.0 {
        return Err(GridError::ZeroImpedance {
            from: branch.from,
            to: branch.to,
            circuit: branch.circuit,
        });
    }
    let ys = z.inv();
    let half_charging = Complex64::new(0.0, branch.charging / 2.0);
    let tau = branch.tap;
    Ok(BranchAdmittance {
        yff: (ys + half_charging) / (tau * tau),
        yft: -(z * Complex64::from_polar(tau, -branch.shift)).inv(),
        ytf: -(z * Complex64::from_polar(tau, branch.shift)).inv(),
        ytt: ys + half_charging,
    })
}

/// Direction of an arc relative to its branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    /// From the branch's `from` bus to its `to` bus.
    Forward,
    /// From the branch's `to` bus back to its `from` bus.
    Reverse,
}

/// A directed use of an in-service branch. Power and current are measured
/// at `from`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub branch: usize,
    pub from: usize,
    pub to: usize,
    pub orientation: Orientation,
    /// Index into [`Grid::pairs`].
    pub pair: usize,
    /// Whether `(from, to)` matches the pair's stored orientation.
    pub aligned: bool,
    /// Admittance multiplying the voltage at `from`.
    pub y_self: Complex64,
    /// Admittance multiplying the voltage at `to`.
    pub y_other: Complex64,
}

/// An unordered pair of adjacent buses, stored in the orientation of the
/// first in-service branch joining them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BusPair {
    pub first: usize,
    pub second: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    generators: Vec<Generator>,
    base_mva: f64,
    positions: HashMap<BusId, usize>,
    arcs: Vec<Arc>,
    pairs: Vec<BusPair>,
    gens_at: Vec<Vec<usize>>,
}

impl Grid {
    /// Assembles a grid. Generators are reordered by bus position and unit
    /// index; nothing else is checked here (see [`validate_grid`]).
    pub fn new(
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        mut generators: Vec<Generator>,
        base_mva: f64,
    ) -> Self {
        let mut positions = HashMap::new();
        for (pos, bus) in buses.iter().enumerate() {
            positions.entry(bus.id).or_insert(pos);
        }
        generators.sort_by_key(|g| (positions.get(&g.bus).copied().unwrap_or(usize::MAX), g.index));
        let mut gens_at = vec![Vec::new(); buses.len()];
        for (k, g) in generators.iter().enumerate() {
            if let Some(&pos) = positions.get(&g.bus) {
                gens_at[pos].push(k);
            }
        }

        let mut pairs: Vec<BusPair> = Vec::new();
        let mut pair_of: HashMap<(usize, usize), usize> = HashMap::new();
        let mut forward = Vec::new();
        let mut reverse = Vec::new();
        for (k, br) in branches.iter().enumerate() {
            if !br.in_service {
                continue;
            }
            let (Some(&f), Some(&t)) = (positions.get(&br.from), positions.get(&br.to)) else {
                continue;
            };
            if f == t {
                continue;
            }
            let Ok(y) = branch_admittance(br) else {
                continue;
            };
            let key = (f.min(t), f.max(t));
            let pair = *pair_of.entry(key).or_insert_with(|| {
                pairs.push(BusPair { first: f, second: t });
                pairs.len() - 1
            });
            let aligned = pairs[pair].first == f;
            forward.push(Arc {
                branch: k,
                from: f,
                to: t,
                orientation: Orientation::Forward,
                pair,
                aligned,
                y_self: y.yff,
                y_other: y.yft,
            });
            reverse.push(Arc {
                branch: k,
                from: t,
                to: f,
                orientation: Orientation::Reverse,
                pair,
                aligned: !aligned,
                y_self: y.ytt,
                y_other: y.ytf,
            });
        }
        forward.extend(reverse);

        Grid {
            buses,
            branches,
            generators,
            base_mva,
            positions,
            arcs: forward,
            pairs,
            gens_at,
        }
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn bus_position(&self, id: BusId) -> Option<usize> {
        self.positions.get(&id).copied()
    }

    /// Dense position of the first reference bus.
    pub fn reference(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.kind == BusType::Reference)
    }

    /// Forward arcs of all in-service branches followed by their reverse arcs.
    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn pairs(&self) -> &[BusPair] {
        &self.pairs
    }

    /// Indices into [`Grid::generators`] of the units at a bus position.
    pub fn generators_at(&self, pos: usize) -> &[usize] {
        &self.gens_at[pos]
    }

    /// External `(b, a, h)` key of an arc.
    pub fn arc_key(&self, arc: &Arc) -> (BusId, BusId, u32) {
        (
            self.buses[arc.from].id,
            self.buses[arc.to].id,
            self.branches[arc.branch].circuit,
        )
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let report = validate_grid(self);
        if report.is_ok() {
            Ok(())
        } else {
            Err(GridError::Invalid(report))
        }
    }
}

/// Bus admittance matrix stored by nonzero entry.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    n: usize,
    entries: BTreeMap<(usize, usize), Complex64>,
}

impl AdmittanceMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries
            .get(&(row, col))
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// Stored entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize), Complex64)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (&(r, c), &v) in &self.entries {
            m[(r, c)] = v;
        }
        m
    }
}

/// Assembles the bus admittance matrix from the in-service branches and
/// bus shunts.
pub fn network_admittance(grid: &Grid) -> Result<AdmittanceMatrix, GridError> {
    for br in grid.branches.iter().filter(|b| b.in_service) {
        branch_admittance(br)?;
    }
    let mut entries: BTreeMap<(usize, usize), Complex64> = BTreeMap::new();
    for (pos, bus) in grid.buses.iter().enumerate() {
        if bus.shunt.norm_sqr() > 0.0 {
            *entries.entry((pos, pos)).or_default() += bus.shunt;
        }
    }
    for arc in &grid.arcs {
        *entries.entry((arc.from, arc.from)).or_default() += arc.y_self;
        *entries.entry((arc.from, arc.to)).or_default() += arc.y_other;
    }
    Ok(AdmittanceMatrix {
        n: grid.buses.len(),
        entries,
    })
}

/// One structural problem found by [`validate_grid`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoBuses,
    DuplicateBus(BusId),
    MissingReference,
    MultipleReferences(Vec<BusId>),
    InvertedVoltageBounds(BusId),
    DanglingEndpoint {
        branch: (BusId, BusId, u32),
        bus: BusId,
    },
    SelfLoop((BusId, BusId, u32)),
    DuplicateBranch((BusId, BusId, u32)),
    NonContiguousParallel { buses: (BusId, BusId) },
    NonPositiveTap((BusId, BusId, u32)),
    ZeroImpedance((BusId, BusId, u32)),
    InvertedAngleBounds((BusId, BusId, u32)),
    UnknownGeneratorBus(BusId),
    NonContiguousGenerators(BusId),
    InvertedGeneratorBounds((BusId, u32)),
    CostDegree((BusId, u32)),
    NonPositiveBase,
}

fn key_str(k: &(BusId, BusId, u32)) -> String {
    format!("({},{},{})", k.0, k.1, k.2)
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoBuses => write!(f, "grid has no buses"),
            Violation::DuplicateBus(id) => write!(f, "duplicate bus id {id}"),
            Violation::MissingReference => write!(f, "missing reference bus"),
            Violation::MultipleReferences(ids) => {
                write!(f, "multiple reference buses {ids:?}")
            }
            Violation::InvertedVoltageBounds(id) => {
                write!(f, "bus {id} has inverted voltage bounds")
            }
            Violation::DanglingEndpoint { branch, bus } => {
                write!(f, "dangling endpoint: branch {} refers to unknown bus {bus}", key_str(branch))
            }
            Violation::SelfLoop(k) => write!(f, "branch {} is a self loop", key_str(k)),
            Violation::DuplicateBranch(k) => write!(f, "duplicate branch key {}", key_str(k)),
            Violation::NonContiguousParallel { buses } => write!(
                f,
                "non-contiguous parallel indices between buses {} and {}",
                buses.0, buses.1
            ),
            Violation::NonPositiveTap(k) => write!(f, "branch {} has non-positive tap", key_str(k)),
            Violation::ZeroImpedance(k) => write!(f, "branch {} has zero impedance", key_str(k)),
            Violation::InvertedAngleBounds(k) => {
                write!(f, "branch {} has inverted angle bounds", key_str(k))
            }
            Violation::UnknownGeneratorBus(id) => {
                write!(f, "generator attached to unknown bus {id}")
            }
            Violation::NonContiguousGenerators(id) => {
                write!(f, "generator indices at bus {id} are not 1..k")
            }
            Violation::InvertedGeneratorBounds((b, g)) => {
                write!(f, "generator ({b},{g}) has inverted bounds")
            }
            Violation::CostDegree((b, g)) => {
                write!(f, "generator ({b},{g}) cost degree exceeds 2")
            }
            Violation::NonPositiveBase => write!(f, "base MVA must be positive"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

/// Checks the structural invariants of a grid without failing fast.
pub fn validate_grid(grid: &Grid) -> ValidationReport {
    let mut out = Vec::new();
    if grid.buses.is_empty() {
        out.push(Violation::NoBuses);
    }
    if !(grid.base_mva > 0.0) {
        out.push(Violation::NonPositiveBase);
    }
    let mut seen = BTreeSet::new();
    for bus in &grid.buses {
        if !seen.insert(bus.id) {
            out.push(Violation::DuplicateBus(bus.id));
        }
        if bus.v_min > bus.v_max || bus.v_min.is_nan() || bus.v_max.is_nan() {
            out.push(Violation::InvertedVoltageBounds(bus.id));
        }
    }
    let refs: Vec<BusId> = grid
        .buses
        .iter()
        .filter(|b| b.kind == BusType::Reference)
        .map(|b| b.id)
        .collect();
    match refs.len() {
        0 if !grid.buses.is_empty() => out.push(Violation::MissingReference),
        0 | 1 => {}
        _ => out.push(Violation::MultipleReferences(refs)),
    }

    let mut keys = BTreeSet::new();
    let mut circuits: BTreeMap<(BusId, BusId), Vec<u32>> = BTreeMap::new();
    for br in &grid.branches {
        let key = (br.from, br.to, br.circuit);
        for end in [br.from, br.to] {
            if !grid.positions.contains_key(&end) {
                out.push(Violation::DanglingEndpoint { branch: key, bus: end });
            }
        }
        if br.from == br.to {
            out.push(Violation::SelfLoop(key));
        }
        if !keys.insert(key) {
            out.push(Violation::DuplicateBranch(key));
        }
        circuits
            .entry((br.from.min(br.to), br.from.max(br.to)))
            .or_default()
            .push(br.circuit);
        if !(br.tap > 0.0) {
            out.push(Violation::NonPositiveTap(key));
        }
        if br.r == 0.0 && br.x == 0.0 {
            out.push(Violation::ZeroImpedance(key));
        }
        if br.angle_min > br.angle_max || br.angle_min.is_nan() || br.angle_max.is_nan() {
            out.push(Violation::InvertedAngleBounds(key));
        }
    }
    for (buses, mut hs) in circuits {
        hs.sort_unstable();
        if hs.iter().enumerate().any(|(i, &h)| h as usize != i + 1) {
            out.push(Violation::NonContiguousParallel { buses });
        }
    }

    let mut gens: BTreeMap<BusId, Vec<u32>> = BTreeMap::new();
    for g in &grid.generators {
        if !grid.positions.contains_key(&g.bus) {
            out.push(Violation::UnknownGeneratorBus(g.bus));
        }
        gens.entry(g.bus).or_default().push(g.index);
        if g.p_min > g.p_max || g.q_min > g.q_max {
            out.push(Violation::InvertedGeneratorBounds((g.bus, g.index)));
        }
        if g.cost.iter().skip(3).any(|&c| c != 0.0) {
            out.push(Violation::CostDegree((g.bus, g.index)));
        }
    }
    for (bus, mut idx) in gens {
        idx.sort_unstable();
        if idx.iter().enumerate().any(|(i, &k)| k as usize != i + 1) {
            out.push(Violation::NonContiguousGenerators(bus));
        }
    }
    ValidationReport { violations: out }
}
