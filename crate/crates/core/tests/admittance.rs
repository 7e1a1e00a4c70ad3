mod common;

use acopf_core::builders::constraint_matrices;
use acopf_core::grid::{branch_admittance, network_admittance, Branch, Bus, BusType, Grid, Orientation};
use acopf_core::ir::min_eigenvalue;
use acopf_core::synth::{random_branch, random_grid, random_voltages};
use acopf_core::transforms::{lift_to_psd, recover_injections, MatrixPoint, PsdTarget, VoltagePoint};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use common::{admittance_oracle, c_err, case5, flow_oracle, rng};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn check_branch(br: &Branch) {
    let y = branch_admittance(br).unwrap();
    let o = admittance_oracle(br);
    for (got, want) in [y.yff, y.yft, y.ytf, y.ytt].into_iter().zip(o) {
        assert!(c_err(got, want) <= 1e-12, "{br:?}: {got} vs {want}");
    }
}

#[test]
fn matches_oracle_on_case5_and_random_branches() {
    for br in case5().branches() {
        check_branch(br);
    }
    let mut r = rng(1);
    for k in 0..200 {
        check_branch(&random_branch(&mut r, 1, 2, 1 + k % 3));
    }
}

#[test]
fn case5_first_branch_values() {
    let y = branch_admittance(&case5().branches()[0]).unwrap();
    assert!((y.yff - c(3.5235, -35.2313)).norm() < 1e-4, "{}", y.yff);
    assert!((y.yft - c(-3.5235, 35.2349)).norm() < 1e-4, "{}", y.yft);
    assert_eq!(y.yft, y.ytf);
    assert_eq!(y.yff, y.ytt);
}

#[test]
fn hand_examples() {
    let y = branch_admittance(&Branch::new(1, 2, 1, 0.0, 1.0)).unwrap();
    assert_eq!((y.yff, y.yft, y.ytf, y.ytt), (c(0.0, -1.0), c(0.0, 1.0), c(0.0, 1.0), c(0.0, -1.0)));

    let mut br = Branch::new(1, 2, 1, 1.0, 0.0);
    br.tap = 2.0;
    let y = branch_admittance(&br).unwrap();
    assert!(c_err(y.yff, c(0.25, 0.0)) < 1e-15);
    assert!(c_err(y.yft, c(-0.5, 0.0)) < 1e-15);
    assert!(c_err(y.ytf, c(-0.5, 0.0)) < 1e-15);
    assert!(c_err(y.ytt, c(1.0, 0.0)) < 1e-15);
}

fn two_bus(br: Branch) -> Grid {
    let buses = vec![Bus::new(1, BusType::Reference), Bus::new(2, BusType::Load)];
    Grid::new(buses, vec![br], vec![], 100.0)
}

#[test]
fn plain_lines_carry_opposite_currents() {
    let mut r = rng(2);
    for _ in 0..100 {
        let mut br = random_branch(&mut r, 1, 2, 1);
        br.tap = 1.0;
        br.shift = 0.0;
        br.charging = 0.0;
        let g = two_bus(br);
        let v = random_voltages(&mut r, 2);
        let inj = recover_injections(&g, &VoltagePoint::Cartesian(v));
        let fwd = g.arcs().iter().position(|a| a.orientation == Orientation::Forward).unwrap();
        let rev = g.arcs().iter().position(|a| a.orientation == Orientation::Reverse).unwrap();
        let (i_ab, i_ba) = (inj.current[fwd], inj.current[rev]);
        let scale = i_ab.norm().max(1.0);
        assert!((i_ba.re + i_ab.re).abs() <= 1e-12 * scale);
        assert!((i_ba.im + i_ab.im).abs() <= 1e-12 * scale);
    }
}

#[test]
fn symmetric_without_transformer() {
    let mut r = rng(3);
    for _ in 0..50 {
        let mut br = random_branch(&mut r, 1, 2, 1);
        br.tap = 1.0;
        br.shift = 0.0;
        let y = branch_admittance(&br).unwrap();
        assert_eq!(y.yft, y.ytf);
    }
}

#[test]
fn network_matrix_examples() {
    let lone = Grid::new(vec![Bus::new(1, BusType::Reference)], vec![], vec![], 100.0);
    let y = network_admittance(&lone).unwrap();
    assert_eq!(y.dim(), 1);
    assert_eq!(y.get(0, 0), c(0.0, 0.0));

    let y = network_admittance(&two_bus(Branch::new(1, 2, 1, 0.0, 1.0))).unwrap().to_dense();
    assert_eq!(y, DMatrix::from_row_slice(2, 2, &[c(0.0, -1.0), c(0.0, 1.0), c(0.0, 1.0), c(0.0, -1.0)]));

    let g = case5();
    let y = network_admittance(&g).unwrap();
    let b45 = g.branches().iter().find(|b| (b.from, b.to) == (4, 5)).unwrap();
    assert_eq!(y.get(3, 4), branch_admittance(b45).unwrap().yft);
    assert_eq!(y.get(1, 4), c(0.0, 0.0));
}

#[test]
fn network_matrix_matches_branch_sums() {
    let mut r = rng(4);
    for n in 2..9 {
        let g = random_grid(&mut r, n);
        let y = network_admittance(&g).unwrap().to_dense();
        let mut want = DMatrix::from_fn(n, n, |i, j| if i == j { g.buses()[i].shunt } else { c(0.0, 0.0) });
        for br in g.branches() {
            let f = g.bus_position(br.from).unwrap();
            let t = g.bus_position(br.to).unwrap();
            let [yff, yft, ytf, ytt] = admittance_oracle(br);
            want[(f, f)] += yff;
            want[(f, t)] += yft;
            want[(t, f)] += ytf;
            want[(t, t)] += ytt;
        }
        for (a, b) in y.iter().zip(want.iter()) {
            assert!(c_err(*a, *b) <= 1e-12);
        }
    }
}

fn w_of(v: &[Complex64]) -> DMatrix<f64> {
    match lift_to_psd(&VoltagePoint::Cartesian(v.to_vec()), PsdTarget::WReal) {
        MatrixPoint::W(w) => w,
        MatrixPoint::X(_) => unreachable!(),
    }
}

#[test]
fn trace_identities_on_random_grids() {
    let mut r = rng(5);
    for k in 0..100 {
        let g = random_grid(&mut r, 2 + k % 6);
        let v = random_voltages(&mut r, g.n_buses());
        let w = w_of(&v);
        let cm = constraint_matrices(&g).unwrap();
        let o = flow_oracle(&g, &v);
        for b in 0..g.n_buses() {
            let s = o.injection[b];
            let scale = s.norm().max(1.0);
            assert!((cm.psi[b].trace_with(&w) - s.re).abs() <= 1e-12 * scale);
            assert!((cm.psi_hat[b].trace_with(&w) - s.im).abs() <= 1e-12 * scale);
        }
        for (k, arc) in g.arcs().iter().enumerate() {
            let (i_f, i_t) = o.currents[arc.branch];
            let i = if arc.orientation == Orientation::Forward { i_f } else { i_t };
            let s = v[arc.from] * i.conj();
            let scale = s.norm().max(1.0);
            assert!((cm.phi[k].trace_with(&w) - s.re).abs() <= 1e-12 * scale);
            assert!((cm.phi_hat[k].trace_with(&w) - s.im).abs() <= 1e-12 * scale);
        }
        for b in 0..g.n_buses() {
            for a in 0..g.n_buses() {
                let x = v[b] * v[a].conj();
                let (t, th) = cm.theta(b, a);
                assert!((t.trace_with(&w) - x.re).abs() <= 1e-12);
                assert!((th.trace_with(&w) - x.im).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn theta_entries() {
    let g = two_bus(Branch::new(1, 2, 1, 0.0, 1.0));
    let (t, _) = constraint_matrices(&g).unwrap().theta(0, 1);
    let half: Vec<_> = t.entries.iter().filter(|(_, v)| **v == 0.5).map(|(k, _)| *k).collect();
    assert_eq!(half, vec![(0, 1), (1, 0), (2, 3), (3, 2)]);
    assert_eq!(t.nnz(), 4);
}

#[test]
fn unit_shunt_gives_identity() {
    let mut bus = Bus::new(1, BusType::Reference);
    bus.shunt = c(1.0, 0.0);
    let g = Grid::new(vec![bus], vec![], vec![], 100.0);
    let cm = constraint_matrices(&g).unwrap();
    assert_eq!(cm.psi[0].to_dense(), DMatrix::identity(2, 2));
    let v = [c(0.8, -0.3)];
    assert!((cm.psi[0].trace_with(&w_of(&v)) - v[0].norm_sqr()).abs() < 1e-15);
}

#[test]
fn lifted_matrices_are_rank_one() {
    let mut r = rng(6);
    for k in 0..100 {
        let v = random_voltages(&mut r, 1 + k % 8);
        let w = w_of(&v);
        let norm = w.norm();
        assert!(min_eigenvalue(&w) >= -1e-10);
        let mut ev: Vec<f64> = SymmetricEigen::new(w.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        assert!(ev.get(1).map_or(0.0, |e| e.abs()) <= 1e-10 * norm, "{ev:?}");

        let MatrixPoint::X(x) = lift_to_psd(&VoltagePoint::Cartesian(v.clone()), PsdTarget::XHermitian) else {
            unreachable!()
        };
        let mut ev: Vec<f64> = SymmetricEigen::new(x.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        assert!(*ev.last().unwrap() >= -1e-10);
        assert!(ev.get(1).map_or(0.0, |e| e.abs()) <= 1e-10 * x.norm());
        for b in 0..v.len() {
            assert_eq!(x[(b, b)].im, 0.0);
        }
    }
}

#[test]
fn small_lift_examples() {
    let ones = lift_to_psd(&VoltagePoint::Cartesian(vec![c(1.0, 0.0); 2]), PsdTarget::XHermitian);
    assert_eq!(ones, MatrixPoint::X(DMatrix::from_element(2, 2, c(1.0, 0.0))));
    assert_eq!(w_of(&[c(0.0, 0.0); 3]), DMatrix::zeros(6, 6));
}
