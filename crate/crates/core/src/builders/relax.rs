//! Convex relaxations and the mixed lifted model.

use super::exact::{lifted_common, lifted_w};
use super::{
    adjacent_positions, all_pairs, arc_current_sq, arc_power, current_sq, names, BuildError, CartesianProducts, Ctx,
    ComplexSdpVariant, XVars,
};
use crate::grid::{Arc, Grid, Orientation};
use crate::ir::{FormKind, Formulation, Poly, PsdBlock, Sense, SocConstraint};

/// Second-order cone `||members|| <= t` (or `<= t * w` when rotated).
fn cone(tag: &str, at: &[u32], members: Vec<Poly>, t: Poly, w: Option<Poly>) -> SocConstraint {
    SocConstraint {
        tag: tag.to_string(),
        at: at.to_vec(),
        members,
        t,
        w,
    }
}

/// Lifted products of the radial relaxation, one `(c, s)` per bus pair in
/// the pair's stored orientation.
struct JabrVars {
    diag: Vec<u32>,
    pair: Vec<(u32, u32)>,
}

impl JabrVars {
    fn m(&self, b: usize) -> Poly {
        Poly::var(self.diag[b])
    }

    fn cs(&self, arc: &Arc) -> (Poly, Poly) {
        let (c, s) = self.pair[arc.pair];
        (Poly::var(c), Poly::term(if arc.aligned { 1.0 } else { -1.0 }, &[s]))
    }
}

fn jabr_core(ctx: &mut Ctx) -> Result<JabrVars, BuildError> {
    let grid = ctx.grid;
    let mut diag = Vec::new();
    for (pos, bus) in grid.buses().iter().enumerate() {
        let id = ctx.id(pos);
        let lo = bus.v_min.max(0.0).powi(2);
        diag.push(ctx.var(names::c(id, id), lo, bus.v_max * bus.v_max, Some("voltageboundJ"))?);
    }
    let mut pair = Vec::new();
    for p in grid.pairs() {
        let (b, a) = (ctx.id(p.first), ctx.id(p.second));
        pair.push((ctx.free(names::c(b, a))?, ctx.free(names::s(b, a))?));
    }
    let sg = ctx.generators()?;
    let j = JabrVars { diag, pair };

    for (k, p) in grid.pairs().iter().enumerate() {
        let at = [ctx.id(p.first), ctx.id(p.second)];
        let (c, s) = j.pair[k];
        ctx.f.add_cone(cone(
            "relaxJ",
            &at,
            vec![Poly::var(c), Poly::var(s)],
            j.m(p.first),
            Some(j.m(p.second)),
        ))?;
    }
    ctx.phase_limits(&|arc| j.cs(arc), "phasediffboundJ1", "phasediffboundJ2")?;
    let flows: Vec<(Poly, Poly)> = grid
        .arcs()
        .iter()
        .map(|arc| {
            let (c, s) = j.cs(arc);
            arc_power(arc, &j.m(arc.from), &c, &s)
        })
        .collect();
    let m: Vec<Poly> = (0..grid.n_buses()).map(|b| j.m(b)).collect();
    ctx.balance(&flows, &m, &sg)?;
    for (arc, (p, q)) in grid.arcs().iter().zip(flows) {
        let br = &grid.branches()[arc.branch];
        if !br.has_flow_limit() {
            continue;
        }
        let tag = match arc.orientation {
            Orientation::Forward => "powerbound1J",
            Orientation::Reverse => "powerbound2J",
        };
        ctx.f.add_cone(cone(tag, &ctx.key(arc), vec![p, q], Poly::constant(br.s_max), None))?;
    }
    Ok(j)
}

/// Radial second-order cone relaxation over squared magnitudes and
/// products per adjacent pair.
pub fn build_jabr_socp(grid: &Grid) -> Result<Formulation, BuildError> {
    let mut ctx = Ctx::new(grid, FormKind::Jabr)?;
    jabr_core(&mut ctx)?;
    Ok(ctx.f)
}

/// The cone relaxation plus cartesian voltages tied to the lifted products,
/// which makes it exact.
pub fn build_mixed(grid: &Grid) -> Result<Formulation, BuildError> {
    let mut ctx = Ctx::new(grid, FormKind::Mixed)?;
    let j = jabr_core(&mut ctx)?;
    let v = ctx.cartesian_voltages()?;
    let cp = CartesianProducts { v: &v };
    for pos in 0..grid.n_buses() {
        let p = j.m(pos) - cp.m(pos);
        ctx.con("csVrel1", &[ctx.id(pos)], p, Sense::Eq, 0.0)?;
    }
    for (k, pair) in grid.pairs().iter().enumerate() {
        let at = [ctx.id(pair.first), ctx.id(pair.second)];
        let (c, s) = cp.cs(pair.first, pair.second);
        let (jc, js) = j.pair[k];
        ctx.con("csVrel2", &at, Poly::var(jc) - c, Sense::Eq, 0.0)?;
        ctx.con("csVrel3", &at, Poly::var(js) - s, Sense::Eq, 0.0)?;
    }
    ctx.cartesian_reference(&v, true)?;
    Ok(ctx.f)
}

/// Upper triangle of a symmetric block given by its entry function.
fn block_entries(dim: usize, entry: &dyn Fn(usize, usize) -> Poly) -> Vec<Poly> {
    let mut out = Vec::with_capacity(dim * (dim + 1) / 2);
    for i in 0..dim {
        for j in i..dim {
            out.push(entry(i, j));
        }
    }
    out
}

/// Real embedding `[[A, -B], [B, A]]` of a Hermitian matrix `A + iB` of
/// order `n` given by `h(i, j) = (A_ij, B_ij)`.
fn hermitian_block(n: usize, h: &dyn Fn(usize, usize) -> (Poly, Poly)) -> Vec<Poly> {
    block_entries(2 * n, &|i, j| match (i < n, j < n) {
        (true, true) => h(i, j).0,
        (false, false) => h(i - n, j - n).0,
        (true, false) => -h(i, j - n).1,
        (false, true) => h(i - n, j).1,
    })
}

/// Real semidefinite relaxation over the lifted matrix `W`.
pub fn build_sdp_real(grid: &Grid) -> Result<Formulation, BuildError> {
    let mut ctx = Ctx::new(grid, FormKind::SdpReal)?;
    let w = lifted_w(&mut ctx)?;
    let sg = ctx.generators()?;
    lifted_common(&mut ctx, &w, &sg)?;
    let n = grid.n_buses();
    let r = ctx.reference();
    ctx.con("referenceW", &[ctx.id(r)], Poly::var(w[n + r][n + r]), Sense::Eq, 0.0)?;

    let cm = super::constraint_matrices(grid)?;
    let wf = |i: usize, j: usize| w[i][j];
    for (k, arc) in grid.arcs().iter().enumerate() {
        let br = &grid.branches()[arc.branch];
        if !br.has_flow_limit() {
            continue;
        }
        let p = cm.phi[k].trace_poly(&wf);
        let q = cm.phi_hat[k].trace_poly(&wf);
        // [[-S^2, p, q], [p, -1, 0], [q, 0, -1]] <= 0
        let entries = vec![
            Poly::constant(-br.s_max * br.s_max),
            p,
            q,
            Poly::constant(-1.0),
            Poly::zero(),
            Poly::constant(-1.0),
        ];
        ctx.f.add_block(PsdBlock {
            tag: "powerboundsdpW".into(),
            at: ctx.key(arc).to_vec(),
            dim: 3,
            entries,
            negative: true,
        })?;
    }
    let d = 2 * n;
    ctx.f.add_block(PsdBlock {
        tag: "psdW".into(),
        at: vec![],
        dim: d,
        entries: block_entries(d, &|i, j| Poly::var(w[i][j])),
        negative: false,
    })?;
    Ok(ctx.f)
}

/// Shared pieces of the Hermitian lifted models: flows as linear forms in
/// `X`, voltage and phase limits.
fn x_flows(grid: &Grid, x: &XVars) -> Vec<(Poly, Poly)> {
    grid.arcs()
        .iter()
        .map(|arc| {
            let (c, s) = x.entry(arc.from, arc.to);
            arc_power(arc, &x.m(arc.from), &c, &s)
        })
        .collect()
}

fn x_limits(ctx: &mut Ctx, x: &XVars) -> Result<(), BuildError> {
    let m: Vec<Poly> = (0..ctx.grid.n_buses()).map(|b| x.m(b)).collect();
    ctx.voltage_bounds(&m, "voltageboundX")?;
    ctx.phase_limits(&|arc| x.entry(arc.from, arc.to), "phasediffboundX", "phasediffboundauxX")
}

/// Explicit arc powers defined from `X`, balance over them and the flow
/// limits as cones.
fn x_arc_powers(ctx: &mut Ctx, x: &XVars, sg: &[(u32, u32)]) -> Result<Vec<(u32, u32)>, BuildError> {
    let grid = ctx.grid;
    let mut pow = Vec::new();
    for arc in grid.arcs() {
        let key = ctx.key(arc);
        pow.push((ctx.free(names::s_re(key))?, ctx.free(names::s_im(key))?));
    }
    for ((arc, (p, q)), &(sr, si)) in grid.arcs().iter().zip(x_flows(grid, x)).zip(&pow) {
        let key = ctx.key(arc);
        ctx.con("SdefR", &key, Poly::var(sr) - p, Sense::Eq, 0.0)?;
        ctx.con("SdefC", &key, Poly::var(si) - q, Sense::Eq, 0.0)?;
    }
    let flows: Vec<(Poly, Poly)> = pow.iter().map(|&(r, i)| (Poly::var(r), Poly::var(i))).collect();
    let m: Vec<Poly> = (0..grid.n_buses()).map(|b| x.m(b)).collect();
    ctx.balance(&flows, &m, sg)?;
    for (arc, &(sr, si)) in grid.arcs().iter().zip(&pow) {
        let br = &grid.branches()[arc.branch];
        if br.has_flow_limit() {
            let members = vec![Poly::var(sr), Poly::var(si)];
            ctx.f.add_cone(cone("flowboundX", &ctx.key(arc), members, Poly::constant(br.s_max), None))?;
        }
    }
    Ok(pow)
}

/// Hermitian semidefinite relaxations.
pub fn build_sdp_complex(grid: &Grid, variant: ComplexSdpVariant) -> Result<Formulation, BuildError> {
    let n = grid.n_buses();
    match variant {
        ComplexSdpVariant::VSdp => {
            let mut ctx = Ctx::new(grid, FormKind::SdpV)?;
            let x = XVars::add(&mut ctx, &all_pairs(n))?;
            let v = ctx.cartesian_voltages()?;
            let sg = ctx.generators()?;
            let m: Vec<Poly> = (0..n).map(|b| x.m(b)).collect();
            ctx.balance(&x_flows(grid, &x), &m, &sg)?;
            x_limits(&mut ctx, &x)?;
            for arc in grid.arcs() {
                let Some(limit) = current_sq(grid, arc) else { continue };
                let (c, s) = x.entry(arc.from, arc.to);
                let p = arc_current_sq(arc, &x.m(arc.from), &x.m(arc.to), &c, &s);
                let tag = match arc.orientation {
                    Orientation::Forward => "currentboundX1",
                    Orientation::Reverse => "currentboundX2",
                };
                ctx.con(tag, &ctx.key(arc), p, Sense::Le, limit)?;
            }
            ctx.cartesian_reference(&v, true)?;
            // [[1, V^H], [V, X]]
            let h = |i: usize, j: usize| -> (Poly, Poly) {
                match (i, j) {
                    (0, 0) => (Poly::constant(1.0), Poly::zero()),
                    (0, k) => (Poly::var(v[k - 1].0), -Poly::var(v[k - 1].1)),
                    (k, 0) => (Poly::var(v[k - 1].0), Poly::var(v[k - 1].1)),
                    (b, a) => x.entry(b - 1, a - 1),
                }
            };
            ctx.f.add_block(PsdBlock {
                tag: "psdVX".into(),
                at: vec![],
                dim: 2 * (n + 1),
                entries: hermitian_block(n + 1, &h),
                negative: false,
            })?;
            Ok(ctx.f)
        }
        ComplexSdpVariant::XSdp => {
            let mut ctx = Ctx::new(grid, FormKind::SdpX)?;
            let x = XVars::add(&mut ctx, &all_pairs(n))?;
            let sg = ctx.generators()?;
            x_arc_powers(&mut ctx, &x, &sg)?;
            x_limits(&mut ctx, &x)?;
            ctx.f.add_block(PsdBlock {
                tag: "psdX".into(),
                at: vec![],
                dim: 2 * n,
                entries: hermitian_block(n, &|b, a| x.entry(b, a)),
                negative: false,
            })?;
            Ok(ctx.f)
        }
    }
}

/// Second-order cone relaxation in `X` restricted to adjacent pairs.
pub fn build_socp_xspace(grid: &Grid) -> Result<Formulation, BuildError> {
    let mut ctx = Ctx::new(grid, FormKind::SocpX)?;
    let x = XVars::add(&mut ctx, &adjacent_positions(grid))?;
    let sg = ctx.generators()?;
    let n = grid.n_buses();
    let m: Vec<Poly> = (0..n).map(|b| x.m(b)).collect();
    let flows = x_flows(grid, &x);
    ctx.balance(&flows, &m, &sg)?;

    let mut inj: Vec<(Poly, Poly)> = vec![(Poly::zero(), Poly::zero()); n];
    for (arc, (p, q)) in grid.arcs().iter().zip(&flows) {
        inj[arc.from].0.add_scaled(p, 1.0);
        inj[arc.from].1.add_scaled(q, 1.0);
    }
    for (pos, (re, im)) in inj.into_iter().enumerate() {
        let bus = &grid.buses()[pos];
        let mut re = re;
        let mut im = im;
        re.add_scaled(&m[pos], bus.shunt.re);
        im.add_scaled(&m[pos], -bus.shunt.im);
        let gens = grid.generators_at(pos).iter().map(|&g| &grid.generators()[g]);
        let (mut plo, mut phi, mut qlo, mut qhi) = (0.0, 0.0, 0.0, 0.0);
        for g in gens {
            plo += g.p_min;
            phi += g.p_max;
            qlo += g.q_min;
            qhi += g.q_max;
        }
        let id = bus.id;
        for (tag, p, lo, hi, d) in [
            ("injectionboundR", re, plo, phi, bus.demand.re),
            ("injectionboundC", im, qlo, qhi, bus.demand.im),
        ] {
            if lo > f64::NEG_INFINITY {
                ctx.con(tag, &[id], p.clone(), Sense::Ge, lo - d)?;
            }
            if hi < f64::INFINITY {
                ctx.con(tag, &[id], p, Sense::Le, hi - d)?;
            }
        }
    }
    ctx.voltage_bounds(&m, "voltageboundX")?;
    minor_cones(&mut ctx, &x, "socpX")?;
    Ok(ctx.f)
}

/// `|X_ba|^2 <= X_bb X_aa` per adjacent pair.
fn minor_cones(ctx: &mut Ctx, x: &XVars, tag: &str) -> Result<(), BuildError> {
    for (b, a) in adjacent_positions(ctx.grid) {
        let (re, im) = x.entry(b, a);
        let at = [ctx.id(b), ctx.id(a)];
        ctx.f.add_cone(cone(tag, &at, vec![re, im], x.m(b), Some(x.m(a))))?;
    }
    Ok(())
}

/// Quadratic-convex style relaxation: the `X` model with 2x2 minor cones
/// in place of the semidefinite block, plus lifted squared flows and
/// currents with McCormick and secant envelopes on flow-limited arcs.
pub fn build_qc_lifted(grid: &Grid) -> Result<Formulation, BuildError> {
    let mut ctx = Ctx::new(grid, FormKind::Qc)?;
    let x = XVars::add(&mut ctx, &adjacent_positions(grid))?;
    let sg = ctx.generators()?;
    let pow = x_arc_powers(&mut ctx, &x, &sg)?;
    x_limits(&mut ctx, &x)?;
    minor_cones(&mut ctx, &x, "minorX")?;

    for (arc, &(sr, si)) in grid.arcs().iter().zip(&pow) {
        let br = &grid.branches()[arc.branch];
        if !br.has_flow_limit() {
            continue;
        }
        let key = ctx.key(arc);
        let smax2 = br.s_max * br.s_max;
        let imax2 = current_sq(grid, arc).unwrap_or(f64::INFINITY);
        let hr = ctx.var(names::shat_re(key), 0.0, f64::INFINITY, None)?;
        let hi = ctx.var(names::shat_im(key), 0.0, f64::INFINITY, None)?;
        let ih = ctx.var(names::ihat(key), 0.0, imax2, Some("currentboundhat"))?;
        let wi = ctx.var(names::wihat(key), 0.0, f64::INFINITY, None)?;
        let hsum = Poly::var(hr) + Poly::var(hi);

        ctx.con("lift1", &key, hsum.clone() - Poly::var(wi), Sense::Eq, 0.0)?;
        let (c, s) = x.entry(arc.from, arc.to);
        let cur = arc_current_sq(arc, &x.m(arc.from), &x.m(arc.to), &c, &s);
        let tag = match arc.orientation {
            Orientation::Forward => "lift2",
            Orientation::Reverse => "lift3",
        };
        ctx.con(tag, &key, Poly::var(ih) - cur, Sense::Eq, 0.0)?;
        ctx.con("flowboundhat", &key, hsum, Sense::Le, smax2)?;

        // Envelopes of wi = m * ih over [lo, hi] x [0, imax2].
        let bus = &grid.buses()[arc.from];
        let (lo, up) = (bus.v_min.max(0.0).powi(2), bus.v_max * bus.v_max);
        let m = x.m(arc.from);
        let at = |k: u32| [key[0], key[1], key[2], k];
        let w = Poly::var(wi);
        let y = Poly::var(ih);
        ctx.con("mccormick", &at(0), w.clone() - y.clone() * lo, Sense::Ge, 0.0)?;
        if up.is_finite() && imax2.is_finite() {
            let p = w.clone() - y.clone() * up - m.clone() * imax2;
            ctx.con("mccormick", &at(1), p, Sense::Ge, -up * imax2)?;
        }
        if up.is_finite() {
            ctx.con("mccormick", &at(2), w.clone() - y.clone() * up, Sense::Le, 0.0)?;
        }
        if imax2.is_finite() {
            let p = w - y * lo - m * imax2;
            ctx.con("mccormick", &at(3), p, Sense::Le, -lo * imax2)?;
        }

        for (tag, sec, flow, hat) in [("sqenvR", "secantR", sr, hr), ("sqenvC", "secantC", si, hi)] {
            ctx.f.add_cone(cone(tag, &key, vec![Poly::var(flow)], Poly::var(hat), Some(Poly::constant(1.0))))?;
            ctx.con(sec, &key, Poly::var(hat), Sense::Le, smax2)?;
        }
    }
    Ok(ctx.f)
}
