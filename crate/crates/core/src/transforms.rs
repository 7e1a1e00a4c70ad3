//! Coordinate changes between voltage representations and liftings of a
//! voltage point into the variable space of every formulation.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::builders::{adjacent_positions, names};
use crate::grid::Grid;
use crate::ir::{FormKind, Point};

/// Bus voltages indexed by bus position.
#[derive(Debug, Clone, PartialEq)]
pub enum VoltagePoint {
    Cartesian(Vec<Complex64>),
    Polar { mag: Vec<f64>, angle: Vec<f64> },
}

impl VoltagePoint {
    pub fn len(&self) -> usize {
        match self {
            VoltagePoint::Cartesian(v) => v.len(),
            VoltagePoint::Polar { mag, .. } => mag.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_cartesian(&self) -> Vec<Complex64> {
        match polar_to_cartesian(self) {
            VoltagePoint::Cartesian(v) => v,
            VoltagePoint::Polar { .. } => unreachable!(),
        }
    }

    /// `(magnitudes, angles)`.
    pub fn to_polar(&self) -> (Vec<f64>, Vec<f64>) {
        match cartesian_to_polar(self) {
            VoltagePoint::Polar { mag, angle } => (mag, angle),
            VoltagePoint::Cartesian(_) => unreachable!(),
        }
    }
}

/// Magnitude and `atan2` angle; a zero voltage gets angle 0.
pub fn cartesian_to_polar(p: &VoltagePoint) -> VoltagePoint {
    match p {
        VoltagePoint::Cartesian(v) => VoltagePoint::Polar {
            mag: v.iter().map(|z| z.norm()).collect(),
            angle: v.iter().map(|z| if *z == Complex64::new(0.0, 0.0) { 0.0 } else { z.im.atan2(z.re) }).collect(),
        },
        polar => polar.clone(),
    }
}

pub fn polar_to_cartesian(p: &VoltagePoint) -> VoltagePoint {
    match p {
        VoltagePoint::Polar { mag, angle } => VoltagePoint::Cartesian(
            mag.iter().zip(angle).map(|(&m, &a)| Complex64::new(m * a.cos(), m * a.sin())).collect(),
        ),
        cart => cart.clone(),
    }
}

/// Lifted products of the radial relaxation; `c` and `s` follow
/// [`Grid::pairs`] in the pair's stored orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct JabrPoint {
    pub diag: Vec<f64>,
    pub c: Vec<f64>,
    pub s: Vec<f64>,
}

pub fn lift_to_jabr(p: &VoltagePoint, grid: &Grid) -> JabrPoint {
    let v = p.to_cartesian();
    let prod: Vec<Complex64> = grid.pairs().iter().map(|q| v[q.first] * v[q.second].conj()).collect();
    JabrPoint {
        diag: v.iter().map(|z| z.norm_sqr()).collect(),
        c: prod.iter().map(|z| z.re).collect(),
        s: prod.iter().map(|z| z.im).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsdTarget {
    /// `x x^T` with `x = [Re V; Im V]`.
    WReal,
    /// `V V^H`.
    XHermitian,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatrixPoint {
    W(DMatrix<f64>),
    X(DMatrix<Complex64>),
}

pub fn lift_to_psd(p: &VoltagePoint, target: PsdTarget) -> MatrixPoint {
    let v = p.to_cartesian();
    match target {
        PsdTarget::WReal => MatrixPoint::W(lift_w(&v)),
        PsdTarget::XHermitian => {
            let n = v.len();
            MatrixPoint::X(DMatrix::from_fn(n, n, |b, a| v[b] * v[a].conj()))
        }
    }
}

fn lift_w(v: &[Complex64]) -> DMatrix<f64> {
    let x: Vec<f64> = v.iter().map(|z| z.re).chain(v.iter().map(|z| z.im)).collect();
    let d = x.len();
    DMatrix::from_fn(d, d, |i, j| x[i] * x[j])
}

/// Arc currents and powers implied by a voltage point, and the generation
/// each bus must supply to balance them.
#[derive(Debug, Clone, PartialEq)]
pub struct Injections {
    /// Per arc, in [`Grid::arcs`] order.
    pub current: Vec<Complex64>,
    pub power: Vec<Complex64>,
    /// Per bus position.
    pub generation: Vec<Complex64>,
}

pub fn recover_injections(grid: &Grid, p: &VoltagePoint) -> Injections {
    let v = p.to_cartesian();
    let current: Vec<Complex64> = grid.arcs().iter().map(|a| a.y_self * v[a.from] + a.y_other * v[a.to]).collect();
    let power: Vec<Complex64> = grid.arcs().iter().zip(&current).map(|(a, i)| v[a.from] * i.conj()).collect();
    let mut generation: Vec<Complex64> = grid
        .buses()
        .iter()
        .zip(&v)
        .map(|(b, z)| b.demand + b.shunt.conj() * z.norm_sqr())
        .collect();
    for (a, s) in grid.arcs().iter().zip(&power) {
        generation[a.from] += s;
    }
    Injections { current, power, generation }
}

/// Values for every variable of formulation `kind` at voltages `v` and
/// generation `sg` (one entry per generator in [`Grid::generators`] order).
pub fn lift_point(grid: &Grid, kind: FormKind, v: &VoltagePoint, sg: &[Complex64]) -> Point {
    let cart = v.to_cartesian();
    let ids: Vec<u32> = grid.buses().iter().map(|b| b.id).collect();
    let key = |k: usize| {
        let (b, a, h) = grid.arc_key(&grid.arcs()[k]);
        [b, a, h]
    };
    let mut p = Point::new();
    for (g, s) in grid.generators().iter().zip(sg) {
        p.set(names::sg_re(g.bus, g.index), s.re);
        p.set(names::sg_im(g.bus, g.index), s.im);
    }
    let set_v = |p: &mut Point| {
        for (id, z) in ids.iter().zip(&cart) {
            p.set(names::v_re(*id), z.re);
            p.set(names::v_im(*id), z.im);
        }
    };
    let set_s = |p: &mut Point, inj: &Injections| {
        for (k, s) in inj.power.iter().enumerate() {
            p.set(names::s_re(key(k)), s.re);
            p.set(names::s_im(key(k)), s.im);
        }
    };
    let set_x = |p: &mut Point, full: bool| {
        let n = cart.len();
        for b in 0..n {
            p.set(names::x_re(ids[b], ids[b]), cart[b].norm_sqr());
        }
        let off: Vec<(usize, usize)> = if full {
            (0..n).flat_map(|b| (b + 1..n).map(move |a| (b, a))).collect()
        } else {
            adjacent_positions(grid)
        };
        for (b, a) in off {
            let z = cart[b] * cart[a].conj();
            p.set(names::x_re(ids[b], ids[a]), z.re);
            p.set(names::x_im(ids[b], ids[a]), z.im);
        }
    };
    let set_w = |p: &mut Point| {
        let w = lift_w(&cart);
        for i in 0..w.nrows() {
            for j in i..w.ncols() {
                p.set(names::w(i as u32 + 1, j as u32 + 1), w[(i, j)]);
            }
        }
    };
    let set_jabr = |p: &mut Point| {
        let j = lift_to_jabr(v, grid);
        for (id, d) in ids.iter().zip(&j.diag) {
            p.set(names::c(*id, *id), *d);
        }
        for (k, q) in grid.pairs().iter().enumerate() {
            p.set(names::c(ids[q.first], ids[q.second]), j.c[k]);
            p.set(names::s(ids[q.first], ids[q.second]), j.s[k]);
        }
    };

    match kind {
        FormKind::Siv => {
            set_v(&mut p);
            let inj = recover_injections(grid, v);
            for (id, z) in ids.iter().zip(&cart) {
                p.set(names::v2(*id), z.norm_sqr());
            }
            for (k, i) in inj.current.iter().enumerate() {
                p.set(names::i_re(key(k)), i.re);
                p.set(names::i_im(key(k)), i.im);
            }
            set_s(&mut p, &inj);
        }
        FormKind::VoltageOnly => set_v(&mut p),
        FormKind::Polar => {
            let (mag, angle) = v.to_polar();
            for (b, id) in ids.iter().enumerate() {
                p.set(names::vm(*id), mag[b]);
                p.set(names::va(*id), angle[b]);
            }
            for q in grid.pairs() {
                let d = angle[q.first] - angle[q.second];
                p.set(names::cs(ids[q.first], ids[q.second]), d.cos());
                p.set(names::sn(ids[q.first], ids[q.second]), d.sin());
            }
        }
        FormKind::Jabr => set_jabr(&mut p),
        FormKind::Mixed => {
            set_jabr(&mut p);
            set_v(&mut p);
        }
        FormKind::Matrix => {
            set_v(&mut p);
            set_w(&mut p);
        }
        FormKind::SdpReal => set_w(&mut p),
        FormKind::SdpV => {
            set_x(&mut p, true);
            set_v(&mut p);
        }
        FormKind::SdpX => {
            set_x(&mut p, true);
            set_s(&mut p, &recover_injections(grid, v));
        }
        FormKind::SocpX => set_x(&mut p, false),
        FormKind::Qc => {
            set_x(&mut p, false);
            let inj = recover_injections(grid, v);
            set_s(&mut p, &inj);
            for (k, arc) in grid.arcs().iter().enumerate() {
                if !grid.branches()[arc.branch].has_flow_limit() {
                    continue;
                }
                let s = inj.power[k];
                let i2 = inj.current[k].norm_sqr();
                p.set(names::shat_re(key(k)), s.re * s.re);
                p.set(names::shat_im(key(k)), s.im * s.im);
                p.set(names::ihat(key(k)), i2);
                p.set(names::wihat(key(k)), cart[arc.from].norm_sqr() * i2);
            }
        }
    }
    p
}

/// Cartesian voltages stored in a point of an exact formulation.
pub fn voltages_of(grid: &Grid, kind: FormKind, p: &Point) -> Option<Vec<Complex64>> {
    let ids = grid.buses().iter().map(|b| b.id);
    match kind {
        FormKind::Polar => {
            let mut mag = Vec::new();
            let mut angle = Vec::new();
            for id in ids {
                mag.push(p.get(&names::vm(id))?);
                angle.push(p.get(&names::va(id))?);
            }
            Some(VoltagePoint::Polar { mag, angle }.to_cartesian())
        }
        _ => ids
            .map(|id| Some(Complex64::new(p.get(&names::v_re(id))?, p.get(&names::v_im(id))?)))
            .collect(),
    }
}

/// Generator powers stored in a point, in [`Grid::generators`] order.
pub fn generation_of(grid: &Grid, p: &Point) -> Option<Vec<Complex64>> {
    grid.generators()
        .iter()
        .map(|g| {
            Some(Complex64::new(
                p.get(&names::sg_re(g.bus, g.index))?,
                p.get(&names::sg_im(g.bus, g.index))?,
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn cart(v: &[(f64, f64)]) -> VoltagePoint {
        VoltagePoint::Cartesian(v.iter().map(|&(r, i)| Complex64::new(r, i)).collect())
    }

    #[test]
    fn polar_conversions() {
        let (m, a) = cart(&[(1.0, 0.0), (0.0, 1.0), (-0.6, 0.8), (0.0, 0.0)]).to_polar();
        assert_eq!(m[..3], [1.0, 1.0, 1.0]);
        assert_eq!(a[0], 0.0);
        assert_eq!(a[1], FRAC_PI_2);
        assert!((a[2] - 2.214297435588181).abs() < 1e-15);
        assert_eq!((m[3], a[3]), (0.0, 0.0));

        let v = VoltagePoint::Polar { mag: vec![2.0, 1.05], angle: vec![PI, 0.1] }.to_cartesian();
        assert!((v[0] - Complex64::new(-2.0, 0.0)).norm() < 1e-15);
        assert!((v[1].re - 1.0448).abs() < 1e-4 && (v[1].im - 0.1048).abs() < 1e-4);
    }

    #[test]
    fn psd_lift_of_ones() {
        match lift_to_psd(&cart(&[(1.0, 0.0), (1.0, 0.0)]), PsdTarget::XHermitian) {
            MatrixPoint::X(x) => assert!(x.iter().all(|z| *z == Complex64::new(1.0, 0.0))),
            MatrixPoint::W(_) => panic!("wrong target"),
        }
        match lift_to_psd(&cart(&[(0.0, 0.0)]), PsdTarget::WReal) {
            MatrixPoint::W(w) => assert!(w.iter().all(|x| *x == 0.0)),
            MatrixPoint::X(_) => panic!("wrong target"),
        }
    }

    #[test]
    fn real_and_imaginary_parts_from_conjugates() {
        let x = Complex64::new(0.37, -1.9);
        assert_eq!(Complex64::new(2.0 * x.re, 0.0), x + x.conj());
        assert_eq!(Complex64::new(-2.0 * x.im, 0.0), Complex64::i() * (x - x.conj()));
    }
}
