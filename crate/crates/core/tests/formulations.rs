mod common;

use std::collections::BTreeMap;

use acopf_core::builders::{
    build, build_jabr_socp, build_matrix_form, build_mixed, build_polar, build_qc_lifted, build_sdp_complex,
    build_sdp_real, build_siv_cartesian, build_socp_xspace, build_voltage_only, names, ComplexSdpVariant, VoltageMode,
};
use acopf_core::grid::{Bus, BusType, Generator, Grid};
use acopf_core::ir::{evaluate, feasibility, FormKind, Formulation, Point, ResidualKind, ResidualReport, Sense};
use acopf_core::synth::random_voltages;
use acopf_core::transforms::{lift_point, VoltagePoint};
use num_complex::Complex64;

use common::{case5, complete, flow_oracle, local_points, random_generation, rel_err, rng, small_grids};

fn count(f: &Formulation, tag: &str) -> usize {
    f.constraints().iter().filter(|c| c.tag == tag).count()
        + f.cones().iter().filter(|c| c.tag == tag).count()
        + f.blocks().iter().filter(|b| b.tag == tag).count()
}

#[test]
fn case5_structure() {
    let g = case5();
    let siv = build_siv_cartesian(&g).unwrap();
    assert_eq!(count(&siv, "ohmlaw1R") + count(&siv, "ohmlaw2R"), 12);
    assert_eq!(count(&siv, "ohmlaw1C") + count(&siv, "ohmlaw2C"), 12);
    assert_eq!(count(&siv, "powerflowR"), 5);
    assert_eq!(count(&siv, "powerflowC"), 5);
    let mut bounded: Vec<&[u32]> =
        siv.constraints().iter().filter(|c| c.tag == "powerboundR").map(|c| c.at.as_slice()).collect();
    bounded.sort();
    assert_eq!(bounded, [[1, 2, 1], [2, 1, 1], [4, 5, 1], [5, 4, 1]]);

    let polar = build_polar(&g).unwrap();
    assert_eq!(count(&polar, "powerbound1vR") + count(&polar, "powerbound2vR"), 4);

    let sdp = build_sdp_real(&g).unwrap();
    let dims: Vec<usize> = sdp.blocks().iter().map(|b| b.dim).collect();
    assert_eq!(dims.iter().filter(|&&d| d == 10).count(), 1);
    assert_eq!(dims.iter().filter(|&&d| d == 3).count(), 4);
    assert_eq!(dims.len(), 5);

    let x = build_sdp_complex(&g, ComplexSdpVariant::XSdp).unwrap();
    assert_eq!(count(&x, "flowboundX"), 4);
    assert_eq!(count(&build_jabr_socp(&g).unwrap(), "relaxJ"), 6);
    assert_eq!(count(&build_socp_xspace(&g).unwrap(), "socpX"), 6);

    let matrix = build_matrix_form(&g).unwrap();
    assert!(matrix.var(&names::w(10, 10)).is_some());
    assert!(matrix.var(&names::w(11, 11)).is_none());
}

#[test]
fn derived_current_limit() {
    let f = build_voltage_only(&case5(), VoltageMode::CurrentDerived).unwrap();
    let c = f.constraints().iter().find(|c| c.tag == "Vcurrentbound1rel" && c.at == [1, 2, 1]).unwrap();
    assert!((c.rhs.sqrt() - 4.0 / 0.9).abs() < 1e-12);
    assert!(f.constraints().iter().all(|c| c.poly.degree() <= 2));
    assert!(f.objective().degree() <= 2);
}

/// Residual values keyed by tag, location and sense; bound residuals are
/// left out since variable sets differ between models.
fn residual_map(r: &ResidualReport) -> BTreeMap<(String, Vec<u32>, String), f64> {
    r.residuals
        .iter()
        .filter_map(|x| match x.kind {
            ResidualKind::Constraint(s) => Some(((x.tag.clone(), x.at.clone(), s.as_str().to_string()), x.value)),
            _ => None,
        })
        .collect()
}

#[test]
fn exact_models_agree_at_random_points() {
    let g = case5();
    let kinds = [FormKind::Siv, FormKind::VoltageOnly, FormKind::Polar, FormKind::Mixed, FormKind::Matrix];
    let models: Vec<Formulation> = kinds.iter().map(|&k| build(k, &g).unwrap()).collect();
    let mut r = rng(7);
    for _ in 0..50 {
        let v = VoltagePoint::Cartesian(random_voltages(&mut r, 5));
        let sg = random_generation(&mut r, &g);
        let reports: Vec<ResidualReport> = kinds
            .iter()
            .zip(&models)
            .map(|(&k, f)| evaluate(f, &lift_point(&g, k, &v, &sg)).unwrap())
            .collect();
        let maps: Vec<_> = reports.iter().map(residual_map).collect();
        for i in 1..kinds.len() {
            assert!(rel_err(reports[i].objective, reports[0].objective) <= 1e-9);
            for j in 0..i {
                let mut shared = 0;
                for (key, a) in &maps[i] {
                    if let Some(b) = maps[j].get(key) {
                        shared += 1;
                        assert!((a - b).abs() <= 1e-9, "{:?}/{:?} {key:?}: {a} vs {b}", kinds[i], kinds[j]);
                    }
                }
                assert!(shared >= 10, "{:?}/{:?} share {shared}", kinds[i], kinds[j]);
            }
        }
    }
}

#[test]
fn flat_point_residual_is_demand_plus_injection() {
    let g = case5();
    let f = build_voltage_only(&g, VoltageMode::CurrentDerived).unwrap();
    let v = vec![Complex64::new(1.0, 0.0); 5];
    let sg = vec![Complex64::new(0.0, 0.0); 5];
    let rep = evaluate(&f, &lift_point(&g, FormKind::VoltageOnly, &VoltagePoint::Cartesian(v.clone()), &sg)).unwrap();
    let want = g.buses()[1].demand + flow_oracle(&g, &v).injection[1];
    let get = |tag: &str| rep.residuals.iter().find(|r| r.tag == tag && r.at == [2]).unwrap().value;
    assert!((get("powerflowR") - want.re).abs() < 1e-12);
    assert!((get("powerflowC") - want.im).abs() < 1e-12);
}

fn idle_grid() -> Grid {
    let mut buses = vec![Bus::new(1, BusType::Reference), Bus::new(2, BusType::Load), Bus::new(3, BusType::Load)];
    for b in &mut buses {
        b.v_min = 0.9;
        b.v_max = 1.1;
    }
    let mut branches = vec![
        acopf_core::grid::Branch::new(1, 2, 1, 0.01, 0.1),
        acopf_core::grid::Branch::new(2, 3, 1, 0.02, 0.2),
    ];
    branches[0].s_max = 1.0;
    let gens = [(1, 3.0), (3, 5.0)]
        .iter()
        .map(|&(bus, c0)| Generator { bus, index: 1, p_min: 0.0, p_max: 2.0, q_min: -1.0, q_max: 1.0, cost: vec![c0, 7.0] })
        .collect();
    Grid::new(buses, branches, gens, 100.0)
}

#[test]
fn flat_point_on_idle_grid_is_feasible_everywhere() {
    let g = idle_grid();
    let v = VoltagePoint::Cartesian(vec![Complex64::new(1.0, 0.0); 3]);
    let sg = vec![Complex64::new(0.0, 0.0); 2];
    for kind in [
        FormKind::Siv,
        FormKind::VoltageOnly,
        FormKind::Polar,
        FormKind::Jabr,
        FormKind::Mixed,
        FormKind::Matrix,
        FormKind::SdpReal,
        FormKind::SdpV,
        FormKind::SdpX,
        FormKind::SocpX,
        FormKind::Qc,
    ] {
        let f = build(kind, &g).unwrap();
        let p = lift_point(&g, kind, &v, &sg);
        let (ok, viol) = feasibility(&f, &p, 1e-9).unwrap();
        assert!(ok, "{kind:?}: {viol}");
        assert!((evaluate(&f, &p).unwrap().objective - 8.0).abs() < 1e-12, "{kind:?}");
    }
}

#[test]
fn sdp_reference_and_xspace_examples() {
    let g = case5();
    let f = build_sdp_real(&g).unwrap();
    let mut p = Point::new();
    for i in 1..=10 {
        for j in i..=10 {
            p.set(names::w(i, j), if i == j { 1.0 } else { 0.0 });
        }
    }
    let rep = evaluate(&f, &complete(&f, &p)).unwrap();
    let reference = rep.residuals.iter().find(|r| r.tag == "referenceW").unwrap();
    assert_eq!(reference.value.abs(), 1.0);

    let f = build_socp_xspace(&g).unwrap();
    let mut p = Point::new();
    for b in 1..=5 {
        p.set(names::x_re(b, b), 1.0);
    }
    let x = f.values(&complete(&f, &p)).unwrap();
    for c in f.cones() {
        let lhs: f64 = c.members.iter().map(|m| m.eval(&x).powi(2)).sum();
        let rhs = c.t.eval(&x) * c.w.as_ref().map_or(1.0, |w| w.eval(&x));
        assert_eq!(rhs - lhs, 1.0);
    }
}

/// Every relaxation contains the lift of each located point.
#[test]
fn relaxations_contain_local_solutions() {
    let mut grids = vec![(case5(), 8)];
    grids.extend(small_grids().into_iter().map(|g| (g, 6)));
    let relaxed = [FormKind::Jabr, FormKind::Mixed, FormKind::Matrix, FormKind::SdpReal, FormKind::SdpX, FormKind::SocpX, FormKind::Qc];
    let mut checked = 0;
    for (g, want) in &grids {
        let exact = build(FormKind::VoltageOnly, g).unwrap();
        let models: Vec<Formulation> = relaxed.iter().map(|&k| build(k, g).unwrap()).collect();
        let points = local_points(g, *want);
        assert_eq!(points.len(), *want);
        for lp in points {
            let p = lift_point(g, FormKind::VoltageOnly, &lp.voltages, &lp.generation);
            let (ok, viol) = feasibility(&exact, &p, 1e-9).unwrap();
            assert!(ok, "voltage-only violation {viol}");
            let obj = evaluate(&exact, &p).unwrap().objective;
            assert!(rel_err(obj, lp.objective) <= 1e-9);
            for (&k, f) in relaxed.iter().zip(&models) {
                let q = lift_point(g, k, &lp.voltages, &lp.generation);
                let rep = evaluate(f, &q).unwrap();
                assert!(rep.max_violation <= 1e-8, "{k:?}: {}", rep.max_violation);
                assert!(rel_err(rep.objective, obj) <= 1e-9, "{k:?}");
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 20);
}

#[test]
fn mixed_without_couplings_is_jabr() {
    let g = case5();
    let jabr = build_jabr_socp(&g).unwrap();
    let mixed = build_mixed(&g).unwrap();
    let coupling = |t: &str| t.starts_with("csVrel") || t == "reference";
    let key = |f: &Formulation, c: &acopf_core::ir::PolyConstraint| {
        let names: Vec<String> = c
            .poly
            .terms()
            .map(|(m, k)| format!("{k}*{}", m.iter().map(|&i| f.variables()[i as usize].name.to_string()).collect::<Vec<_>>().join("*")))
            .collect();
        (c.tag.clone(), c.at.clone(), c.sense.as_str(), c.rhs.to_bits(), names)
    };
    let a: Vec<_> = jabr.constraints().iter().map(|c| key(&jabr, c)).collect();
    let b: Vec<_> = mixed.constraints().iter().filter(|c| !coupling(&c.tag)).map(|c| key(&mixed, c)).collect();
    assert_eq!(a, b);
    assert_eq!(jabr.cones().len(), mixed.cones().len());
    assert!(mixed.constraints().iter().filter(|c| coupling(&c.tag)).all(|c| c.sense == Sense::Eq || c.tag == "reference"));
}

#[test]
fn qc_corner_and_zero_points() {
    let g = case5();
    let f = build_qc_lifted(&g).unwrap();
    let mut p = Point::new();
    for b in g.buses() {
        p.set(names::x_re(b.id, b.id), b.v_min * b.v_min);
    }
    let rep = evaluate(&f, &complete(&f, &p)).unwrap();
    for r in &rep.residuals {
        if ["lift1", "flowboundhat", "mccormick", "secantR", "secantC", "sqenvR", "sqenvC"].contains(&r.tag.as_str()) {
            assert!(r.violation <= 1e-12, "{} {:?}", r.tag, r.at);
        }
    }
}
