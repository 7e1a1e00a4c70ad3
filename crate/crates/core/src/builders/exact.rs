//! Exact (nonconvex) formulations.

use std::f64::consts::PI;

use super::matrices::constraint_matrices;
use super::{
    arc_current_sq, arc_power, derived_current_sq, given_current_sq, names, phase_tangents, BuildError,
    CartesianProducts, Ctx, VoltageMode,
};
use crate::grid::{Grid, Orientation};
use crate::ir::{FormKind, Formulation, Poly, Sense, TrigBinding};

/// Cartesian voltages with explicit currents, flows and squared magnitudes.
pub fn build_siv_cartesian(grid: &Grid) -> Result<Formulation, BuildError> {
    let mut ctx = Ctx::new(grid, FormKind::Siv)?;
    let v = ctx.cartesian_voltages()?;
    let mut v2 = Vec::new();
    for pos in 0..grid.n_buses() {
        v2.push(ctx.free(names::v2(ctx.id(pos)))?);
    }
    let mut cur = Vec::new();
    let mut pow = Vec::new();
    for arc in grid.arcs() {
        let key = ctx.key(arc);
        cur.push((ctx.free(names::i_re(key))?, ctx.free(names::i_im(key))?));
        pow.push((ctx.free(names::s_re(key))?, ctx.free(names::s_im(key))?));
    }
    let sg = ctx.generators()?;

    for (k, arc) in grid.arcs().iter().enumerate() {
        let key = ctx.key(arc);
        let br = &grid.branches()[arc.branch];
        let (sr, si) = pow[k];
        if br.has_flow_limit() {
            let p = Poly::term(1.0, &[sr, sr]) + Poly::term(1.0, &[si, si]);
            ctx.con("powerboundR", &key, p, Sense::Le, br.s_max * br.s_max)?;
        }
    }

    let cp = CartesianProducts { v: &v };
    ctx.phase_limits(&|arc| cp.cs(arc.from, arc.to), "phasediffboundR", "phasediffboundauxR")?;

    let m: Vec<Poly> = v2.iter().map(|&i| Poly::var(i)).collect();
    for pos in 0..grid.n_buses() {
        let p = m[pos].clone() - cp.m(pos);
        ctx.con("V2def", &[ctx.id(pos)], p, Sense::Eq, 0.0)?;
    }
    ctx.voltage_bounds(&m, "voltageboundR")?;
    ctx.cartesian_reference(&v, true)?;

    let flows: Vec<(Poly, Poly)> = pow.iter().map(|&(r, i)| (Poly::var(r), Poly::var(i))).collect();
    ctx.balance(&flows, &m, &sg)?;

    for (k, arc) in grid.arcs().iter().enumerate() {
        let key = ctx.key(arc);
        let (vbr, vbi) = v[arc.from];
        let (ir, ii) = cur[k];
        let (sr, si) = pow[k];
        // S = V_b conj(I)
        let re = Poly::var(sr) - Poly::term(1.0, &[vbr, ir]) - Poly::term(1.0, &[vbi, ii]);
        let im = Poly::var(si) - Poly::term(1.0, &[vbi, ir]) + Poly::term(1.0, &[vbr, ii]);
        ctx.con("powercurrentR", &key, re, Sense::Eq, 0.0)?;
        ctx.con("powercurrentC", &key, im, Sense::Eq, 0.0)?;
    }
    for (k, arc) in grid.arcs().iter().enumerate() {
        let key = ctx.key(arc);
        let (ys, yo) = (arc.y_self, arc.y_other);
        let (vbr, vbi) = v[arc.from];
        let (var, vai) = v[arc.to];
        let (ir, ii) = cur[k];
        let mut re = Poly::var(ir);
        re.add_term(-ys.re, &[vbr]);
        re.add_term(ys.im, &[vbi]);
        re.add_term(-yo.re, &[var]);
        re.add_term(yo.im, &[vai]);
        let mut im = Poly::var(ii);
        im.add_term(-ys.re, &[vbi]);
        im.add_term(-ys.im, &[vbr]);
        im.add_term(-yo.re, &[vai]);
        im.add_term(-yo.im, &[var]);
        let (tr, tc) = match arc.orientation {
            Orientation::Forward => ("ohmlaw1R", "ohmlaw1C"),
            Orientation::Reverse => ("ohmlaw2R", "ohmlaw2C"),
        };
        ctx.con(tr, &key, re, Sense::Eq, 0.0)?;
        ctx.con(tc, &key, im, Sense::Eq, 0.0)?;
    }
    Ok(ctx.f)
}

/// Cartesian voltages and generation only; flows are quadratic in the
/// voltages and flow limits are expressed through current magnitudes.
pub fn build_voltage_only(grid: &Grid, mode: VoltageMode) -> Result<Formulation, BuildError> {
    if mode == VoltageMode::Power {
        return Err(BuildError::UnsupportedMode(
            "power-form flow limits are quartic in the voltages".into(),
        ));
    }
    let mut ctx = Ctx::new(grid, FormKind::VoltageOnly)?;
    if mode == VoltageMode::CurrentGiven {
        if let Some(br) = grid.branches().iter().find(|b| b.in_service && b.has_flow_limit() && b.i_max.is_none()) {
            return Err(BuildError::MissingCurrentBound(br.from, br.to, br.circuit));
        }
    }
    let v = ctx.cartesian_voltages()?;
    let sg = ctx.generators()?;
    let cp = CartesianProducts { v: &v };

    for arc in grid.arcs() {
        let limit = match mode {
            VoltageMode::CurrentGiven => given_current_sq(grid, arc),
            _ => derived_current_sq(grid, arc),
        };
        let Some(limit) = limit else { continue };
        let (c, s) = cp.cs(arc.from, arc.to);
        let p = arc_current_sq(arc, &cp.m(arc.from), &cp.m(arc.to), &c, &s);
        let tag = match (arc.orientation, mode) {
            (Orientation::Forward, VoltageMode::CurrentGiven) => "Vcurrentbound1",
            (Orientation::Reverse, VoltageMode::CurrentGiven) => "Vcurrentbound2",
            (Orientation::Forward, _) => "Vcurrentbound1rel",
            (Orientation::Reverse, _) => "Vcurrentbound2rel",
        };
        ctx.con(tag, &ctx.key(arc), p, Sense::Le, limit)?;
    }
    ctx.phase_limits(&|arc| cp.cs(arc.from, arc.to), "phasediffboundVR", "phasediffboundauxVR")?;
    let m: Vec<Poly> = (0..grid.n_buses()).map(|b| cp.m(b)).collect();
    ctx.voltage_bounds(&m, "voltageboundR")?;
    ctx.cartesian_reference(&v, true)?;
    let flows: Vec<(Poly, Poly)> = grid
        .arcs()
        .iter()
        .map(|arc| {
            let (c, s) = cp.cs(arc.from, arc.to);
            arc_power(arc, &cp.m(arc.from), &c, &s)
        })
        .collect();
    ctx.balance(&flows, &m, &sg)?;
    Ok(ctx.f)
}

/// Polar voltages. Trigonometric terms of angle differences are auxiliary
/// variables bound to the angles.
pub fn build_polar(grid: &Grid) -> Result<Formulation, BuildError> {
    let mut ctx = Ctx::new(grid, FormKind::Polar)?;
    let mut vm = Vec::new();
    let mut va = Vec::new();
    for (pos, bus) in grid.buses().iter().enumerate() {
        let id = ctx.id(pos);
        vm.push(ctx.var(names::vm(id), bus.v_min.max(0.0), bus.v_max, Some("voltageboundvR"))?);
        va.push(ctx.var(names::va(id), -PI, PI, Some("phaseboundv"))?);
    }
    let mut trig = Vec::new();
    for pair in grid.pairs() {
        let (b, a) = (ctx.id(pair.first), ctx.id(pair.second));
        let cos = ctx.var(names::cs(b, a), -1.0, 1.0, None)?;
        let sin = ctx.var(names::sn(b, a), -1.0, 1.0, None)?;
        ctx.f.add_trig_binding(TrigBinding {
            cos,
            sin,
            from_angle: va[pair.first],
            to_angle: va[pair.second],
        });
        let p = Poly::term(1.0, &[cos, cos]) + Poly::term(1.0, &[sin, sin]);
        ctx.con("trigid", &[b, a], p, Sense::Eq, 1.0)?;
        trig.push((cos, sin));
    }
    let sg = ctx.generators()?;

    let m: Vec<Poly> = vm.iter().map(|&v| Poly::term(1.0, &[v, v])).collect();
    let prod = |arc: &crate::grid::Arc| {
        let (cos, sin) = trig[arc.pair];
        let sign = if arc.aligned { 1.0 } else { -1.0 };
        let (vb, vaa) = (vm[arc.from], vm[arc.to]);
        (Poly::term(1.0, &[vb, vaa, cos]), Poly::term(sign, &[vb, vaa, sin]))
    };

    for arc in grid.arcs().iter().filter(|a| a.orientation == Orientation::Forward) {
        let br = &grid.branches()[arc.branch];
        let (lo, hi) = phase_tangents(br.angle_min, br.angle_max);
        let diff = Poly::var(va[arc.from]) - Poly::var(va[arc.to]);
        let key = ctx.key(arc);
        if lo.is_some() {
            ctx.con("phasediffboundvR", &key, diff.clone(), Sense::Ge, br.angle_min)?;
        }
        if hi.is_some() {
            ctx.con("phasediffboundvR", &key, diff, Sense::Le, br.angle_max)?;
        }
    }
    let r = ctx.reference();
    ctx.con("referencev", &[ctx.id(r)], Poly::var(va[r]), Sense::Eq, 0.0)?;

    let flows: Vec<(Poly, Poly)> = grid
        .arcs()
        .iter()
        .map(|arc| {
            let (c, s) = prod(arc);
            arc_power(arc, &m[arc.from], &c, &s)
        })
        .collect();
    ctx.balance(&flows, &m, &sg)?;

    for arc in grid.arcs() {
        let br = &grid.branches()[arc.branch];
        if !br.has_flow_limit() {
            continue;
        }
        let (c, s) = prod(arc);
        // |S|^2 = |V_b|^2 |I|^2
        let p = m[arc.from].mul(&arc_current_sq(arc, &m[arc.from], &m[arc.to], &c, &s));
        let tag = match arc.orientation {
            Orientation::Forward => "powerbound1vR",
            Orientation::Reverse => "powerbound2vR",
        };
        ctx.con(tag, &ctx.key(arc), p, Sense::Le, br.s_max * br.s_max)?;
    }
    Ok(ctx.f)
}

/// Cartesian voltages plus the real lifted matrix `W`, coupled by rank-one
/// equalities.
pub fn build_matrix_form(grid: &Grid) -> Result<Formulation, BuildError> {
    let mut ctx = Ctx::new(grid, FormKind::Matrix)?;
    let v = ctx.cartesian_voltages()?;
    let w = lifted_w(&mut ctx)?;
    let sg = ctx.generators()?;
    lifted_common(&mut ctx, &w, &sg)?;

    let cm = constraint_matrices(grid)?;
    let wf = |i: usize, j: usize| w[i][j];
    for (k, arc) in grid.arcs().iter().enumerate() {
        let br = &grid.branches()[arc.branch];
        if !br.has_flow_limit() {
            continue;
        }
        let p = cm.phi[k].trace_poly(&wf).square() + cm.phi_hat[k].trace_poly(&wf).square();
        ctx.con("powerboundW", &ctx.key(arc), p, Sense::Le, br.s_max * br.s_max)?;
    }
    ctx.cartesian_reference(&v, false)?;

    let n = grid.n_buses();
    let x: Vec<u32> = v.iter().map(|p| p.0).chain(v.iter().map(|p| p.1)).collect();
    for i in 0..2 * n {
        for j in i..2 * n {
            let p = Poly::var(w[i][j]) - Poly::term(1.0, &[x[i], x[j]]);
            ctx.con("rank1", &[i as u32 + 1, j as u32 + 1], p, Sense::Eq, 0.0)?;
        }
    }
    Ok(ctx.f)
}

/// Free variables for the upper triangle of the real lifted matrix;
/// `w[i][j]` is valid for any order.
pub(crate) fn lifted_w(ctx: &mut Ctx) -> Result<Vec<Vec<u32>>, BuildError> {
    let d = 2 * ctx.grid.n_buses();
    let mut w = vec![vec![0; d]; d];
    for i in 0..d {
        for j in i..d {
            let id = ctx.free(names::w(i as u32 + 1, j as u32 + 1))?;
            w[i][j] = id;
            w[j][i] = id;
        }
    }
    Ok(w)
}

/// Trace-form balance, voltage and phase limits on the real lifted matrix.
pub(crate) fn lifted_common(ctx: &mut Ctx, w: &[Vec<u32>], sg: &[(u32, u32)]) -> Result<(), BuildError> {
    let grid = ctx.grid;
    let cm = constraint_matrices(grid)?;
    let wf = |i: usize, j: usize| w[i][j];
    let inj: Vec<(Poly, Poly)> = cm
        .psi
        .iter()
        .zip(&cm.psi_hat)
        .map(|(p, q)| (p.trace_poly(&wf), q.trace_poly(&wf)))
        .collect();
    ctx.injection_balance(inj, sg)?;
    let m: Vec<Poly> = (0..grid.n_buses()).map(|b| cm.theta(b, b).0.trace_poly(&wf)).collect();
    ctx.voltage_bounds(&m, "voltageboundW")?;
    ctx.phase_limits(
        &|arc| {
            let (t, th) = cm.theta(arc.from, arc.to);
            (t.trace_poly(&wf), th.trace_poly(&wf))
        },
        "phasediffboundW",
        "phasediffboundauxW",
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Branch, Bus, BusType, Generator};

    fn two_bus() -> Grid {
        let mut b1 = Bus::new(1, BusType::Reference);
        b1.v_min = 0.9;
        b1.v_max = 1.1;
        let mut b2 = Bus::new(2, BusType::Load);
        b2.v_min = 0.9;
        b2.v_max = 1.1;
        let mut br = Branch::new(1, 2, 1, 0.01, 0.1);
        br.s_max = 2.0;
        let g = Generator {
            bus: 1,
            index: 1,
            p_min: 0.0,
            p_max: 5.0,
            q_min: -5.0,
            q_max: 5.0,
            cost: vec![0.0, 1.0],
        };
        Grid::new(vec![b1, b2], vec![br], vec![g], 100.0)
    }

    fn count(f: &Formulation, tag: &str) -> usize {
        f.constraints().iter().filter(|c| c.tag == tag).count()
    }

    #[test]
    fn voltage_only_is_quadratic() {
        let f = build_voltage_only(&two_bus(), VoltageMode::CurrentDerived).unwrap();
        assert!(f.constraints().iter().all(|c| c.poly.degree() <= 2));
        assert_eq!(count(&f, "Vcurrentbound1rel"), 1);
        assert_eq!(count(&f, "Vcurrentbound2rel"), 1);
    }

    #[test]
    fn given_mode_needs_current_limits() {
        let err = build_voltage_only(&two_bus(), VoltageMode::CurrentGiven).unwrap_err();
        assert_eq!(err, BuildError::MissingCurrentBound(1, 2, 1));
        assert!(matches!(
            build_voltage_only(&two_bus(), VoltageMode::Power),
            Err(BuildError::UnsupportedMode(_))
        ));
    }

    #[test]
    fn polar_flow_bounds_are_quartic() {
        let f = build_polar(&two_bus()).unwrap();
        let c = f.constraints().iter().find(|c| c.tag == "powerbound1vR").unwrap();
        assert_eq!(c.poly.degree(), 5);
        assert_eq!(count(&f, "trigid"), 1);
        assert_eq!(f.trig_bindings().len(), 1);
    }

    #[test]
    fn siv_counts() {
        let f = build_siv_cartesian(&two_bus()).unwrap();
        assert_eq!(count(&f, "ohmlaw1R"), 1);
        assert_eq!(count(&f, "ohmlaw2C"), 1);
        assert_eq!(count(&f, "powerboundR"), 2);
        assert_eq!(count(&f, "reference"), 2);
    }

    #[test]
    fn matrix_form_has_full_rank_one_coupling() {
        let f = build_matrix_form(&two_bus()).unwrap();
        assert_eq!(count(&f, "rank1"), 10);
        assert_eq!(count(&f, "reference"), 1);
    }
}
