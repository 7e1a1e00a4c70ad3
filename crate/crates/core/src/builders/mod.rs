//! Formulation builders. Each one turns a validated grid into a
//! [`Formulation`]; exact models live in `exact`, relaxations in `relax`.

mod exact;
mod matrices;
mod relax;

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::case_io::write_dat;
use crate::grid::{Arc, Grid, GridError, Orientation};
use crate::ir::{FormKind, Formulation, IrError, Poly, Sense, VarKind, VarName};

pub use exact::{build_matrix_form, build_polar, build_siv_cartesian, build_voltage_only};
pub use matrices::{constraint_matrices, real_embedding, ConstraintMatrices, SparseSym};
pub use relax::{build_jabr_socp, build_mixed, build_qc_lifted, build_sdp_complex, build_sdp_real, build_socp_xspace};

/// Phase-difference limits at or beyond this magnitude are not emitted.
pub const PHASE_OMIT_THRESHOLD: f64 = FRAC_PI_2 - 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BuildError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error("branch ({0},{1},{2}) has a flow limit but no current limit")]
    MissingCurrentBound(u32, u32, u32),
    #[error("unsupported builder mode: {0}")]
    UnsupportedMode(String),
}

/// How the voltage-only model bounds branch flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoltageMode {
    /// Current limits taken from the branch data.
    CurrentGiven,
    /// Current limits derived as flow limit over the minimum voltage.
    CurrentDerived,
    /// Quartic power limits; not expressible with quadratics.
    Power,
}

/// Which Hermitian-matrix SDP to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComplexSdpVariant {
    /// Voltage vector bordered onto the lifted matrix.
    VSdp,
    /// Lifted matrix with explicit arc powers.
    XSdp,
}

/// Builds any formulation with its default options.
pub fn build(kind: FormKind, grid: &Grid) -> Result<Formulation, BuildError> {
    match kind {
        FormKind::Siv => build_siv_cartesian(grid),
        FormKind::VoltageOnly => build_voltage_only(grid, default_voltage_mode(grid)),
        FormKind::Polar => build_polar(grid),
        FormKind::Jabr => build_jabr_socp(grid),
        FormKind::Mixed => build_mixed(grid),
        FormKind::Matrix => build_matrix_form(grid),
        FormKind::SdpReal => build_sdp_real(grid),
        FormKind::SdpV => build_sdp_complex(grid, ComplexSdpVariant::VSdp),
        FormKind::SdpX => build_sdp_complex(grid, ComplexSdpVariant::XSdp),
        FormKind::SocpX => build_socp_xspace(grid),
        FormKind::Qc => build_qc_lifted(grid),
    }
}

/// Uses the branch current limits when every flow-limited branch has one.
pub fn default_voltage_mode(grid: &Grid) -> VoltageMode {
    let all_given = grid
        .branches()
        .iter()
        .filter(|b| b.in_service && b.has_flow_limit())
        .all(|b| b.i_max.is_some());
    if all_given {
        VoltageMode::CurrentGiven
    } else {
        VoltageMode::CurrentDerived
    }
}

/// Hex SHA-256 of the grid's `.dat` rendering.
pub fn grid_hash(grid: &Grid) -> String {
    hex::encode(Sha256::digest(write_dat(grid).as_bytes()))
}

/// Variable names shared by builders and point transforms.
pub mod names {
    use super::*;

    pub fn v_re(bus: u32) -> VarName {
        VarName::re(VarKind::V, &[bus])
    }
    pub fn v_im(bus: u32) -> VarName {
        VarName::im(VarKind::V, &[bus])
    }
    pub fn v2(bus: u32) -> VarName {
        VarName::whole(VarKind::V2, &[bus])
    }
    pub fn i_re(key: [u32; 3]) -> VarName {
        VarName::re(VarKind::I, &key)
    }
    pub fn i_im(key: [u32; 3]) -> VarName {
        VarName::im(VarKind::I, &key)
    }
    pub fn s_re(key: [u32; 3]) -> VarName {
        VarName::re(VarKind::S, &key)
    }
    pub fn s_im(key: [u32; 3]) -> VarName {
        VarName::im(VarKind::S, &key)
    }
    pub fn sg_re(bus: u32, unit: u32) -> VarName {
        VarName::re(VarKind::Sg, &[bus, unit])
    }
    pub fn sg_im(bus: u32, unit: u32) -> VarName {
        VarName::im(VarKind::Sg, &[bus, unit])
    }
    pub fn vm(bus: u32) -> VarName {
        VarName::whole(VarKind::Vm, &[bus])
    }
    pub fn va(bus: u32) -> VarName {
        VarName::whole(VarKind::Va, &[bus])
    }
    pub fn cs(b: u32, a: u32) -> VarName {
        VarName::whole(VarKind::Cos, &[b, a])
    }
    pub fn sn(b: u32, a: u32) -> VarName {
        VarName::whole(VarKind::Sin, &[b, a])
    }
    pub fn c(b: u32, a: u32) -> VarName {
        VarName::whole(VarKind::C, &[b, a])
    }
    pub fn s(b: u32, a: u32) -> VarName {
        VarName::whole(VarKind::Sj, &[b, a])
    }
    /// Entry of the real lifted matrix, 1-based, `i <= j`.
    pub fn w(i: u32, j: u32) -> VarName {
        VarName::whole(VarKind::W, &[i, j])
    }
    pub fn x_re(b: u32, a: u32) -> VarName {
        VarName::re(VarKind::X, &[b, a])
    }
    pub fn x_im(b: u32, a: u32) -> VarName {
        VarName::im(VarKind::X, &[b, a])
    }
    pub fn shat_re(key: [u32; 3]) -> VarName {
        VarName::re(VarKind::Shat, &key)
    }
    pub fn shat_im(key: [u32; 3]) -> VarName {
        VarName::im(VarKind::Shat, &key)
    }
    pub fn ihat(key: [u32; 3]) -> VarName {
        VarName::whole(VarKind::Ihat, &key)
    }
    pub fn wihat(key: [u32; 3]) -> VarName {
        VarName::whole(VarKind::WIhat, &key)
    }
}

/// Real and imaginary arc power as linear combinations of the squared
/// voltage magnitude `m` at the measuring end and the products
/// `c + i s = V_from conj(V_to)`.
pub(crate) fn arc_power(arc: &Arc, m: &Poly, c: &Poly, s: &Poly) -> (Poly, Poly) {
    let (ys, yo) = (arc.y_self, arc.y_other);
    let mut re = m.clone() * ys.re;
    re.add_scaled(c, yo.re);
    re.add_scaled(s, yo.im);
    let mut im = m.clone() * -ys.im;
    im.add_scaled(s, yo.re);
    im.add_scaled(c, -yo.im);
    (re, im)
}

/// Squared arc current magnitude in the same lifted terms; `m_to` is the
/// squared magnitude at the far end.
pub(crate) fn arc_current_sq(arc: &Arc, m_from: &Poly, m_to: &Poly, c: &Poly, s: &Poly) -> Poly {
    let k: Complex64 = arc.y_self * arc.y_other.conj();
    let mut p = m_from.clone() * arc.y_self.norm_sqr();
    p.add_scaled(m_to, arc.y_other.norm_sqr());
    p.add_scaled(c, 2.0 * k.re);
    p.add_scaled(s, -2.0 * k.im);
    p
}

/// Tangents of the emitted phase-difference limits of a branch.
pub(crate) fn phase_tangents(lo: f64, hi: f64) -> (Option<f64>, Option<f64>) {
    let keep = |x: f64| x.abs() < PHASE_OMIT_THRESHOLD;
    (keep(lo).then(|| lo.tan()), keep(hi).then(|| hi.tan()))
}

/// Squared current limit of an arc from the branch data.
pub(crate) fn given_current_sq(grid: &Grid, arc: &Arc) -> Option<f64> {
    grid.branches()[arc.branch].i_max.map(|i| i * i)
}

/// Squared current limit derived from the flow limit and the minimum
/// voltage at the measuring end.
pub(crate) fn derived_current_sq(grid: &Grid, arc: &Arc) -> Option<f64> {
    let br = &grid.branches()[arc.branch];
    let vmin = grid.buses()[arc.from].v_min;
    (br.has_flow_limit() && vmin > 0.0).then(|| (br.s_max / vmin).powi(2))
}

/// Given limit when present, derived otherwise.
pub(crate) fn current_sq(grid: &Grid, arc: &Arc) -> Option<f64> {
    given_current_sq(grid, arc).or_else(|| derived_current_sq(grid, arc))
}

/// Builder state: the grid and the formulation under construction.
pub(crate) struct Ctx<'g> {
    pub grid: &'g Grid,
    pub f: Formulation,
}

impl<'g> Ctx<'g> {
    pub fn new(grid: &'g Grid, kind: FormKind) -> Result<Self, BuildError> {
        grid.validate()?;
        Ok(Ctx {
            grid,
            f: Formulation::new(kind, grid_hash(grid)),
        })
    }

    pub fn id(&self, pos: usize) -> u32 {
        self.grid.buses()[pos].id
    }

    pub fn key(&self, arc: &Arc) -> [u32; 3] {
        let (b, a, h) = self.grid.arc_key(arc);
        [b, a, h]
    }

    pub fn var(&mut self, name: VarName, lb: f64, ub: f64, tag: Option<&str>) -> Result<u32, BuildError> {
        Ok(self.f.add_var(name, lb, ub, tag)?)
    }

    pub fn free(&mut self, name: VarName) -> Result<u32, BuildError> {
        self.var(name, f64::NEG_INFINITY, f64::INFINITY, None)
    }

    pub fn con(&mut self, tag: &str, at: &[u32], p: Poly, sense: Sense, rhs: f64) -> Result<(), BuildError> {
        Ok(self.f.add_constraint(tag, at, p, sense, rhs)?)
    }

    /// Generator power variables with their box bounds; also sets the
    /// objective. Returns `(re, im)` per generator.
    pub fn generators(&mut self) -> Result<Vec<(u32, u32)>, BuildError> {
        let mut out = Vec::new();
        let mut obj = Poly::zero();
        for g in self.grid.generators() {
            let re = self.var(names::sg_re(g.bus, g.index), g.p_min, g.p_max, Some("genpowerboundR"))?;
            let im = self.var(names::sg_im(g.bus, g.index), g.q_min, g.q_max, Some("genpowerboundC"))?;
            for (k, &c) in g.cost.iter().enumerate() {
                obj.add_term(c, &vec![re; k]);
            }
            out.push((re, im));
        }
        self.f.set_objective(obj);
        Ok(out)
    }

    /// Cartesian voltage variables bounded by the magnitude limit.
    pub fn cartesian_voltages(&mut self) -> Result<Vec<(u32, u32)>, BuildError> {
        let mut out = Vec::new();
        for pos in 0..self.grid.n_buses() {
            let id = self.id(pos);
            let vmax = self.grid.buses()[pos].v_max;
            let re = self.var(names::v_re(id), -vmax, vmax, None)?;
            let im = self.var(names::v_im(id), -vmax, vmax, None)?;
            out.push((re, im));
        }
        Ok(out)
    }

    /// Power balance at every bus. `flows[k]` is the power of arc `k`,
    /// `m[b]` the squared voltage magnitude at bus position `b`.
    pub fn balance(&mut self, flows: &[(Poly, Poly)], m: &[Poly], sg: &[(u32, u32)]) -> Result<(), BuildError> {
        let n = self.grid.n_buses();
        let mut inj: Vec<(Poly, Poly)> = vec![(Poly::zero(), Poly::zero()); n];
        for (arc, (p, q)) in self.grid.arcs().iter().zip(flows) {
            inj[arc.from].0.add_scaled(p, 1.0);
            inj[arc.from].1.add_scaled(q, 1.0);
        }
        for (pos, (re, im)) in inj.iter_mut().enumerate() {
            let shunt = self.grid.buses()[pos].shunt;
            re.add_scaled(&m[pos], shunt.re);
            im.add_scaled(&m[pos], -shunt.im);
        }
        self.injection_balance(inj, sg)
    }

    /// Power balance given the network injection `(re, im)` per bus.
    pub fn injection_balance(&mut self, inj: Vec<(Poly, Poly)>, sg: &[(u32, u32)]) -> Result<(), BuildError> {
        for (pos, (mut re, mut im)) in inj.into_iter().enumerate() {
            for &g in self.grid.generators_at(pos) {
                re.add_term(-1.0, &[sg[g].0]);
                im.add_term(-1.0, &[sg[g].1]);
            }
            let bus = &self.grid.buses()[pos];
            let (id, d) = (bus.id, bus.demand);
            self.con("powerflowR", &[id], re, Sense::Eq, -d.re)?;
            self.con("powerflowC", &[id], im, Sense::Eq, -d.im)?;
        }
        Ok(())
    }

    /// `lo^2 <= m[b] <= hi^2` where the limits are informative.
    pub fn voltage_bounds(&mut self, m: &[Poly], tag: &str) -> Result<(), BuildError> {
        for (pos, mp) in m.iter().enumerate() {
            let bus = &self.grid.buses()[pos];
            let id = bus.id;
            if bus.v_min > 0.0 {
                self.con(tag, &[id], mp.clone(), Sense::Ge, bus.v_min * bus.v_min)?;
            }
            if bus.v_max.is_finite() {
                self.con(tag, &[id], mp.clone(), Sense::Le, bus.v_max * bus.v_max)?;
            }
        }
        Ok(())
    }

    /// Phase-difference limits on forward arcs in tangent form, plus one
    /// nonnegativity constraint on `c` per bus pair that has any limit.
    /// `prod(arc)` gives `(c, s)` for the arc's orientation.
    pub fn phase_limits(
        &mut self,
        prod: &dyn Fn(&Arc) -> (Poly, Poly),
        tag: &str,
        aux_tag: &str,
    ) -> Result<(), BuildError> {
        let mut pairs = BTreeSet::new();
        let arcs: Vec<Arc> = self.grid.arcs().to_vec();
        for arc in arcs.iter().filter(|a| a.orientation == Orientation::Forward) {
            let br = &self.grid.branches()[arc.branch];
            let (lo, hi) = phase_tangents(br.angle_min, br.angle_max);
            let (c, s) = prod(arc);
            let key = self.key(arc);
            if let Some(t) = lo {
                let mut p = s.clone();
                p.add_scaled(&c, -t);
                self.con(tag, &key, p, Sense::Ge, 0.0)?;
            }
            if let Some(t) = hi {
                let mut p = s.clone();
                p.add_scaled(&c, -t);
                self.con(tag, &key, p, Sense::Le, 0.0)?;
            }
            if lo.is_some() || hi.is_some() {
                pairs.insert(arc.pair);
            }
        }
        for pair in pairs {
            let arc = *arcs.iter().find(|a| a.pair == pair && a.aligned).expect("every pair has an aligned arc");
            let (c, _) = prod(&arc);
            let at = [self.id(arc.from), self.id(arc.to)];
            self.con(aux_tag, &at, c, Sense::Ge, 0.0)?;
        }
        Ok(())
    }

    /// `Im V_ref = 0`, and `Re V_ref >= 0` when `sign` is set.
    pub fn cartesian_reference(&mut self, v: &[(u32, u32)], sign: bool) -> Result<(), BuildError> {
        let r = self.reference();
        let id = self.id(r);
        self.con("reference", &[id], Poly::var(v[r].1), Sense::Eq, 0.0)?;
        if sign {
            self.con("reference", &[id], Poly::var(v[r].0), Sense::Ge, 0.0)?;
        }
        Ok(())
    }

    pub fn reference(&self) -> usize {
        self.grid.reference().expect("validated grid has a reference bus")
    }
}

/// Quadratic products `|V_b|^2`, `Re(V_b conj V_a)` and `Im(V_b conj V_a)`
/// in cartesian voltage variables.
pub(crate) struct CartesianProducts<'a> {
    pub v: &'a [(u32, u32)],
}

impl CartesianProducts<'_> {
    pub fn m(&self, b: usize) -> Poly {
        let (r, i) = self.v[b];
        Poly::term(1.0, &[r, r]) + Poly::term(1.0, &[i, i])
    }

    pub fn cs(&self, b: usize, a: usize) -> (Poly, Poly) {
        let (rb, ib) = self.v[b];
        let (ra, ia) = self.v[a];
        let c = Poly::term(1.0, &[rb, ra]) + Poly::term(1.0, &[ib, ia]);
        let s = Poly::term(1.0, &[ib, ra]) - Poly::term(1.0, &[rb, ia]);
        (c, s)
    }
}

/// Hermitian lifted-matrix variables keyed by bus positions `(b, a)` with
/// `b <= a`.
pub(crate) struct XVars {
    re: HashMap<(usize, usize), u32>,
    im: HashMap<(usize, usize), u32>,
}

impl XVars {
    /// Diagonal plus the listed off-diagonal entries.
    pub fn add(ctx: &mut Ctx, off_diagonal: &[(usize, usize)]) -> Result<XVars, BuildError> {
        let mut re = HashMap::new();
        let mut im = HashMap::new();
        for pos in 0..ctx.grid.n_buses() {
            let id = ctx.id(pos);
            let v = ctx.var(names::x_re(id, id), 0.0, f64::INFINITY, None)?;
            re.insert((pos, pos), v);
        }
        for &(b, a) in off_diagonal {
            let (b, a) = (b.min(a), b.max(a));
            let (ib, ia) = (ctx.id(b), ctx.id(a));
            re.insert((b, a), ctx.free(names::x_re(ib, ia))?);
            im.insert((b, a), ctx.free(names::x_im(ib, ia))?);
        }
        Ok(XVars { re, im })
    }

    pub fn m(&self, b: usize) -> Poly {
        Poly::var(self.re[&(b, b)])
    }

    /// `(Re X_ba, Im X_ba)` for any ordered pair with a stored entry.
    pub fn entry(&self, b: usize, a: usize) -> (Poly, Poly) {
        if b == a {
            return (self.m(b), Poly::zero());
        }
        let (lo, hi) = (b.min(a), b.max(a));
        let re = Poly::var(self.re[&(lo, hi)]);
        let im = Poly::term(if b < a { 1.0 } else { -1.0 }, &[self.im[&(lo, hi)]]);
        (re, im)
    }
}

/// Every bus pair `(b, a)` with `b < a`.
pub(crate) fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|b| (b + 1..n).map(move |a| (b, a))).collect()
}

/// Adjacent bus pairs as `(b, a)` with `b < a`.
pub fn adjacent_positions(grid: &Grid) -> Vec<(usize, usize)> {
    grid.pairs().iter().map(|p| (p.first.min(p.second), p.first.max(p.second))).collect()
}
