//! Real symmetric constraint matrices acting on the lifted matrix
//! `W = x x^T`, `x = [Re V; Im V]`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::BuildError;
use crate::grid::{network_admittance, Grid};
use crate::ir::Poly;

/// Sparse real matrix stored by entry (both triangles).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseSym {
    pub dim: usize,
    pub entries: BTreeMap<(usize, usize), f64>,
}

impl SparseSym {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get(&(i, j)).copied().unwrap_or(0.0)
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (&(i, j), &v) in &self.entries {
            m[(i, j)] = v;
        }
        m
    }

    /// `trace(self * w)`.
    pub fn trace_with(&self, w: &DMatrix<f64>) -> f64 {
        self.entries.iter().map(|(&(i, j), v)| v * w[(j, i)]).sum()
    }

    /// `trace(self * W)` as a linear polynomial, where `w(i, j)` is the
    /// variable for the symmetric entry with `i <= j`.
    pub fn trace_poly(&self, w: &dyn Fn(usize, usize) -> u32) -> Poly {
        let mut p = Poly::zero();
        for (&(i, j), &v) in &self.entries {
            p.add_term(v, &[w(i.min(j), i.max(j))]);
        }
        p
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        let e = self.entries.entry((i, j)).or_insert(0.0);
        *e += v;
        if *e == 0.0 {
            self.entries.remove(&(i, j));
        }
    }
}

/// Real symmetric pair `(M, M_hat)` with `trace(M W) = Re(V^H A V)` and
/// `trace(M_hat W) = -Im(V^H A V)` for a complex `n x n` matrix `A` given
/// by its entries.
pub fn real_embedding(n: usize, a: &BTreeMap<(usize, usize), Complex64>) -> (SparseSym, SparseSym) {
    let mut m = SparseSym { dim: 2 * n, ..Default::default() };
    let mut mh = SparseSym { dim: 2 * n, ..Default::default() };
    for (&(i, j), &z) in a {
        let (re, im) = (0.5 * z.re, 0.5 * z.im);
        // Symmetrized real part on both diagonal blocks.
        for off in [0, n] {
            m.add(i + off, j + off, re);
            m.add(j + off, i + off, re);
            mh.add(i + off, j + off, -im);
            mh.add(j + off, i + off, -im);
        }
        // Off-diagonal blocks.
        m.add(j, n + i, im);
        m.add(i, n + j, -im);
        m.add(n + i, j, im);
        m.add(n + j, i, -im);
        mh.add(i, n + j, -re);
        mh.add(j, n + i, re);
        mh.add(n + j, i, -re);
        mh.add(n + i, j, re);
    }
    (m, mh)
}

/// Constraint matrices of the lifted formulations.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrices {
    pub n: usize,
    /// Bus injection, real part, per bus position.
    pub psi: Vec<SparseSym>,
    /// Bus injection, imaginary part.
    pub psi_hat: Vec<SparseSym>,
    /// Arc power, real part, per arc in [`Grid::arcs`] order.
    pub phi: Vec<SparseSym>,
    /// Arc power, imaginary part.
    pub phi_hat: Vec<SparseSym>,
}

impl ConstraintMatrices {
    /// Pair `(Theta, Theta_hat)` with traces `Re(V_b conj V_a)` and
    /// `Im(V_b conj V_a)`.
    pub fn theta(&self, b: usize, a: usize) -> (SparseSym, SparseSym) {
        let mut e = BTreeMap::new();
        e.insert((b, a), Complex64::new(1.0, 0.0));
        real_embedding(self.n, &e)
    }
}

/// Builds the bus-injection and arc-power matrices of a grid.
pub fn constraint_matrices(grid: &Grid) -> Result<ConstraintMatrices, BuildError> {
    grid.validate()?;
    let n = grid.n_buses();
    let y = network_admittance(grid)?;
    let mut rows: Vec<BTreeMap<(usize, usize), Complex64>> = vec![BTreeMap::new(); n];
    for ((r, c), v) in y.entries() {
        rows[r].insert((r, c), v);
    }
    let (psi, psi_hat) = rows.iter().map(|row| real_embedding(n, row)).unzip();
    let (phi, phi_hat) = grid
        .arcs()
        .iter()
        .map(|arc| {
            let mut e = BTreeMap::new();
            *e.entry((arc.from, arc.from)).or_insert(Complex64::new(0.0, 0.0)) += arc.y_self;
            *e.entry((arc.from, arc.to)).or_insert(Complex64::new(0.0, 0.0)) += arc.y_other;
            real_embedding(n, &e)
        })
        .unzip();
    Ok(ConstraintMatrices { n, psi, psi_hat, phi, phi_hat })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(m: &SparseSym, x: &[f64]) -> f64 {
        m.entries.iter().map(|(&(i, j), v)| v * x[i] * x[j]).sum()
    }

    #[test]
    fn embedding_reproduces_hermitian_form() {
        let n = 3;
        let mut a = BTreeMap::new();
        a.insert((0, 1), Complex64::new(0.3, -1.2));
        a.insert((1, 1), Complex64::new(-0.7, 2.0));
        a.insert((2, 0), Complex64::new(1.5, 0.4));
        let v = [Complex64::new(1.0, 0.2), Complex64::new(-0.3, 0.9), Complex64::new(0.5, -0.6)];
        let x: Vec<f64> = v.iter().map(|z| z.re).chain(v.iter().map(|z| z.im)).collect();
        let form: Complex64 = a.iter().map(|(&(i, j), z)| v[i].conj() * z * v[j]).sum();
        let (m, mh) = real_embedding(n, &a);
        assert!((quad(&m, &x) - form.re).abs() < 1e-14);
        assert!((quad(&mh, &x) + form.im).abs() < 1e-14);
        for (&(i, j), val) in &m.entries {
            assert_eq!(m.get(j, i), *val);
        }
    }

    #[test]
    fn theta_diagonal_has_two_entries() {
        let cm = ConstraintMatrices { n: 4, psi: vec![], psi_hat: vec![], phi: vec![], phi_hat: vec![] };
        let (t, th) = cm.theta(2, 2);
        assert_eq!(t.nnz(), 2);
        assert_eq!(t.get(2, 2), 1.0);
        assert_eq!(t.get(6, 6), 1.0);
        assert_eq!(th.nnz(), 0);
    }
}
