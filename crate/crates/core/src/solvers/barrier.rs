//! Primal log-barrier path following for problems with a convex quadratic
//! objective, linear equalities, linear inequalities and second-order
//! cones. Newton steps solve the full KKT system densely, starting from
//! points that need not satisfy the equalities.

use log::{debug, info};
use nalgebra::{DMatrix, DVector};

use super::{BoundKind, SolveError, SolveOptions, SolveResult, SolveStatus};
use crate::builders::{build_jabr_socp, names};
use crate::grid::Grid;
use crate::ir::{evaluate_dense, Formulation, Poly, Sense};

#[derive(Debug, Clone)]
struct Affine {
    terms: Vec<(usize, f64)>,
    c: f64,
}

impl Affine {
    fn from_poly(p: &Poly, what: &str) -> Result<Affine, SolveError> {
        if p.degree() > 1 {
            return Err(SolveError::UnsupportedFormulation(format!("{what} is not affine")));
        }
        let mut a = Affine { terms: Vec::new(), c: 0.0 };
        for (m, k) in p.terms() {
            match m {
                [] => a.c += k,
                [v] => a.terms.push((*v as usize, k)),
                _ => unreachable!(),
            }
        }
        Ok(a)
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.c + self.terms.iter().map(|&(i, k)| k * x[i]).sum::<f64>()
    }

    fn scaled(mut self, k: f64) -> Affine {
        self.c *= k;
        for t in &mut self.terms {
            t.1 *= k;
        }
        self
    }

    fn plus(mut self, other: &Affine, k: f64) -> Affine {
        self.c += k * other.c;
        self.terms.extend(other.terms.iter().map(|&(i, v)| (i, k * v)));
        self
    }

    fn dense(&self, n: usize) -> DVector<f64> {
        let mut g = DVector::zeros(n);
        for &(i, k) in &self.terms {
            g[i] += k;
        }
        g
    }
}

/// `g(x) > 0`; `shift` marks inequalities relaxed during phase one.
#[derive(Debug, Clone)]
struct Slack {
    g: Affine,
    shift: bool,
}

/// `tau(x) > ||z(x)||`.
#[derive(Debug, Clone)]
struct Cone {
    tau: Affine,
    z: Vec<Affine>,
}

#[derive(Debug, Clone)]
struct Problem {
    n: usize,
    q: DMatrix<f64>,
    c: DVector<f64>,
    c0: f64,
    a: DMatrix<f64>,
    b: DVector<f64>,
    slacks: Vec<Slack>,
    cones: Vec<Cone>,
    /// Phase-one shift variable index, if present.
    sigma: Option<usize>,
}

impl Problem {
    fn from_formulation(f: &Formulation) -> Result<Problem, SolveError> {
        if !f.blocks().is_empty() {
            return Err(SolveError::UnsupportedFormulation("semidefinite blocks".into()));
        }
        let n = f.variables().len();
        let mut rows: Vec<(Affine, f64)> = Vec::new();
        let mut slacks = Vec::new();
        for (i, v) in f.variables().iter().enumerate() {
            let x = Affine { terms: vec![(i, 1.0)], c: 0.0 };
            if v.lb == v.ub {
                rows.push((x, v.lb));
                continue;
            }
            if v.lb.is_finite() {
                slacks.push(Slack { g: Affine { terms: x.terms.clone(), c: -v.lb }, shift: false });
            }
            if v.ub.is_finite() {
                slacks.push(Slack { g: x.scaled(-1.0).plus(&Affine { terms: vec![], c: v.ub }, 1.0), shift: false });
            }
        }
        for con in f.constraints() {
            let p = Affine::from_poly(&con.poly, &con.tag)?;
            match con.sense {
                Sense::Eq => rows.push((p, con.rhs)),
                Sense::Le => slacks.push(Slack { g: p.scaled(-1.0).plus(&Affine { terms: vec![], c: con.rhs }, 1.0), shift: true }),
                Sense::Ge => slacks.push(Slack { g: p.plus(&Affine { terms: vec![], c: -con.rhs }, 1.0), shift: true }),
            }
        }
        let mut cones = Vec::new();
        for k in f.cones() {
            let t = Affine::from_poly(&k.t, &k.tag)?;
            let mut z: Vec<Affine> = Vec::new();
            let tau = match &k.w {
                Some(w) => {
                    let w = Affine::from_poly(w, &k.tag)?;
                    z.push(t.clone().scaled(0.5).plus(&w, -0.5));
                    t.scaled(0.5).plus(&w, 0.5)
                }
                None => t,
            };
            for m in &k.members {
                z.push(Affine::from_poly(m, &k.tag)?);
            }
            cones.push(Cone { tau, z });
        }
        let obj = f.objective();
        if obj.degree() > 2 {
            return Err(SolveError::UnsupportedFormulation("objective degree above two".into()));
        }
        let zero = vec![0.0; n];
        let mut g = vec![0.0; n];
        obj.add_gradient(&zero, 1.0, &mut g);
        let mut q = DMatrix::zeros(n, n);
        obj.add_hessian(&zero, 1.0, &mut q);

        let mut a = DMatrix::zeros(rows.len(), n);
        let mut b = DVector::zeros(rows.len());
        for (r, (p, rhs)) in rows.iter().enumerate() {
            for &(i, k) in &p.terms {
                a[(r, i)] += k;
            }
            b[r] = rhs - p.c;
        }
        Ok(Problem {
            n,
            q,
            c: DVector::from_vec(g),
            c0: obj.constant_term(),
            a,
            b,
            slacks,
            cones,
            sigma: None,
        })
    }

    fn degree(&self) -> f64 {
        (self.slacks.len() + 2 * self.cones.len()) as f64
    }

    fn objective(&self, x: &DVector<f64>) -> f64 {
        self.c0 + self.c.dot(x) + 0.5 * x.dot(&(&self.q * x))
    }

    fn slack_value(&self, s: &Slack, x: &[f64]) -> f64 {
        let v = s.g.eval(x);
        match (s.shift, self.sigma) {
            (true, Some(k)) => v + x[k],
            _ => v,
        }
    }

    fn tau_value(&self, c: &Cone, x: &[f64]) -> f64 {
        c.tau.eval(x) + self.sigma.map_or(0.0, |k| x[k])
    }

    /// Whether `x` lies strictly inside every inequality.
    fn interior(&self, x: &[f64]) -> bool {
        self.slacks.iter().all(|s| self.slack_value(s, x) > 0.0)
            && self.cones.iter().all(|c| {
                let t = self.tau_value(c, x);
                t > 0.0 && t * t - c.z.iter().map(|z| z.eval(x).powi(2)).sum::<f64>() > 0.0
            })
    }

    /// Barrier value, `+inf` outside the interior.
    fn barrier_value(&self, x: &[f64]) -> f64 {
        if !self.interior(x) {
            return f64::INFINITY;
        }
        let slacks: f64 = self.slacks.iter().map(|s| -self.slack_value(s, x).ln()).sum();
        let cones: f64 = self
            .cones
            .iter()
            .map(|c| {
                let t = self.tau_value(c, x);
                -(t * t - c.z.iter().map(|z| z.eval(x).powi(2)).sum::<f64>()).ln()
            })
            .sum();
        slacks + cones
    }

    /// Gradient and Hessian of the barrier.
    fn barrier_derivatives(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n;
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        let sigma = |d: &mut DVector<f64>, shift: bool| {
            if let (true, Some(k)) = (shift, self.sigma) {
                d[k] += 1.0;
            }
        };
        for s in &self.slacks {
            let v = self.slack_value(s, x);
            let mut d = s.g.dense(n);
            sigma(&mut d, s.shift);
            g -= &d / v;
            h.ger(1.0 / (v * v), &d, &d, 1.0);
        }
        for c in &self.cones {
            let t = self.tau_value(c, x);
            let mut dt = c.tau.dense(n);
            sigma(&mut dt, true);
            let zs: Vec<(f64, DVector<f64>)> = c.z.iter().map(|z| (z.eval(x), z.dense(n))).collect();
            let psi = t * t - zs.iter().map(|(v, _)| v * v).sum::<f64>();
            let mut dpsi = &dt * (2.0 * t);
            for (v, d) in &zs {
                dpsi -= d * (2.0 * v);
            }
            g -= &dpsi / psi;
            h.ger(1.0 / (psi * psi), &dpsi, &dpsi, 1.0);
            h.ger(-2.0 / psi, &dt, &dt, 1.0);
            for (_, d) in &zs {
                h.ger(2.0 / psi, d, d, 1.0);
            }
        }
        (g, h)
    }

    fn residual(&self, t: f64, x: &DVector<f64>, nu: &DVector<f64>) -> f64 {
        let (gb, _) = self.barrier_derivatives(x.as_slice());
        let dual = (&self.q * x + &self.c) * t + gb + self.a.transpose() * nu;
        let pri = &self.a * x - &self.b;
        (dual.norm_squared() + pri.norm_squared()).sqrt()
    }
}

enum Centering {
    Converged,
    EarlyExit,
    IterationLimit,
    Failed,
}

struct State {
    x: DVector<f64>,
    nu: DVector<f64>,
    iterations: usize,
}

/// Solves the regularized KKT system; `None` when every regularization
/// level fails.
fn kkt_solve(h: &DMatrix<f64>, a: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let n = h.nrows();
    let p = a.nrows();
    let scale = h.diagonal().amax().max(1.0);
    let mut lambda = 0.0;
    loop {
        let mut k = DMatrix::zeros(n + p, n + p);
        k.view_mut((0, 0), (n, n)).copy_from(h);
        for i in 0..n {
            k[(i, i)] += lambda * scale;
        }
        k.view_mut((n, 0), (p, n)).copy_from(a);
        k.view_mut((0, n), (n, p)).copy_from(&a.transpose());
        for i in 0..p {
            k[(n + i, n + i)] -= lambda * scale;
        }
        if let Some(sol) = k.lu().solve(rhs) {
            if sol.iter().all(|v| v.is_finite()) {
                return Some(sol);
            }
        }
        lambda = if lambda == 0.0 { 1e-10 } else { lambda * 10.0 };
        if lambda > 1e-2 {
            return None;
        }
    }
}

/// Newton centering at barrier weight `t`.
fn center(
    p: &Problem,
    t: f64,
    st: &mut State,
    max_iter: usize,
    exit: &dyn Fn(&Problem, &DVector<f64>) -> bool,
) -> Centering {
    let n = p.n;
    for _ in 0..50 {
        if st.iterations >= max_iter {
            return Centering::IterationLimit;
        }
        assert!(p.interior(st.x.as_slice()), "barrier iterate left the interior");
        let (gb, hb) = p.barrier_derivatives(st.x.as_slice());
        let g = (&p.q * &st.x + &p.c) * t + gb;
        let h = &p.q * t + hb;
        let pri = &p.a * &st.x - &p.b;
        let mut rhs = DVector::zeros(n + p.a.nrows());
        rhs.rows_mut(0, n).copy_from(&(-&g));
        rhs.rows_mut(n, p.a.nrows()).copy_from(&(-&pri));
        let Some(sol) = kkt_solve(&h, &p.a, &rhs) else {
            return Centering::Failed;
        };
        let dx = sol.rows(0, n).into_owned();
        let nu_plus = sol.rows(n, p.a.nrows()).into_owned();
        let decrement = dx.dot(&(&h * &dx));
        let pri_ok = pri.amax() <= 1e-11 * (1.0 + p.b.amax());
        if pri_ok && decrement <= 1e-12 {
            st.nu = nu_plus;
            return Centering::Converged;
        }
        let dnu = &nu_plus - &st.nu;
        let r0 = p.residual(t, &st.x, &st.nu);
        let mut s = 1.0;
        while !p.interior((&st.x + &dx * s).as_slice()) {
            s *= 0.5;
            if s < 1e-16 {
                return Centering::Failed;
            }
        }
        if pri_ok {
            // Feasible: Armijo on the centering objective.
            let phi = |x: &DVector<f64>| t * p.objective(x) + p.barrier_value(x.as_slice());
            let phi0 = phi(&st.x);
            let slope = g.dot(&dx);
            while phi(&(&st.x + &dx * s)) > phi0 + 0.01 * s * slope {
                s *= 0.5;
                if s < 1e-12 {
                    break;
                }
            }
        } else {
            while p.residual(t, &(&st.x + &dx * s), &(&st.nu + &dnu * s)) > (1.0 - 0.01 * s) * r0 {
                s *= 0.5;
                if s < 1e-12 {
                    break;
                }
            }
        }
        st.x += &dx * s;
        st.nu += &dnu * s;
        st.iterations += 1;
        if exit(p, &st.x) {
            return Centering::EarlyExit;
        }
        if s < 1e-12 {
            // No progress possible at this weight; treat as centered.
            return Centering::Converged;
        }
    }
    Centering::Converged
}

enum Outcome {
    Optimal,
    EarlyExit,
    IterationLimit,
    Failed,
}

/// Outer path-following loop. The objective is divided by `scale`.
fn path_follow(
    p: &Problem,
    st: &mut State,
    opts: &SolveOptions,
    scale: f64,
    exit: &dyn Fn(&Problem, &DVector<f64>) -> bool,
) -> Outcome {
    let mut t = 1.0 / scale;
    let nu_total = p.degree();
    loop {
        match center(p, t, st, opts.max_iter, exit) {
            Centering::Converged => {}
            Centering::EarlyExit => return Outcome::EarlyExit,
            Centering::IterationLimit => return Outcome::IterationLimit,
            Centering::Failed => return Outcome::Failed,
        }
        let gap = nu_total / t;
        debug!("barrier t={t:.3e} gap={gap:.3e} objective={:.10}", p.objective(&st.x));
        if gap <= opts.tol_opt * p.objective(&st.x).abs().max(scale) {
            return Outcome::Optimal;
        }
        t /= opts.barrier_reduction;
    }
}

/// Strictly interior start with respect to variable bounds: midpoints of
/// finite boxes, one unit inside half-bounded ones, zero for free
/// variables.
pub fn interior_start(f: &Formulation) -> Vec<f64> {
    f.variables()
        .iter()
        .map(|v| match (v.lb.is_finite(), v.ub.is_finite()) {
            (true, true) => 0.5 * (v.lb + v.ub),
            (true, false) => v.lb + 1.0,
            (false, true) => v.ub - 1.0,
            (false, false) => 0.0,
        })
        .collect()
}

/// Minimizes a formulation made of linear constraints, second-order cones
/// and a convex quadratic objective, starting from `start` (which must lie
/// strictly within the variable bounds).
pub fn solve_conic(f: &Formulation, start: &[f64], opts: &SolveOptions) -> Result<SolveResult, SolveError> {
    opts.validate()?;
    let p = Problem::from_formulation(f)?;
    let n = p.n;
    let x0 = DVector::from_column_slice(start);
    let scale = p.objective(&x0).abs().max(1.0);

    // Phase one: shift the inequalities by sigma and drive it negative.
    let mut p1 = p.clone();
    p1.n = n + 1;
    p1.sigma = Some(n);
    p1.q = DMatrix::zeros(n + 1, n + 1);
    p1.c = DVector::zeros(n + 1);
    p1.c[n] = 1.0;
    p1.c0 = 0.0;
    p1.a = p.a.clone().insert_column(n, 0.0);
    p1.slacks.push(Slack { g: Affine { terms: vec![(n, 1.0)], c: 1.0 }, shift: false });
    let worst = p
        .slacks
        .iter()
        .filter(|s| s.shift)
        .map(|s| -s.g.eval(start))
        .chain(p.cones.iter().map(|c| {
            c.z.iter().map(|z| z.eval(start).powi(2)).sum::<f64>().sqrt() - c.tau.eval(start)
        }))
        .fold(0.0, f64::max);
    let needs_phase_one = worst > 0.0 || !p.interior(start) || (&p.a * &x0 - &p.b).amax() > 1e-11 * (1.0 + p.b.amax());

    let mut iterations = 0;
    let mut x = x0.clone();
    if needs_phase_one {
        let mut st = State {
            x: x0.clone().insert_row(n, worst + 1.0),
            nu: DVector::zeros(p.a.nrows()),
            iterations: 0,
        };
        let done = |q: &Problem, x: &DVector<f64>| {
            x[n] < 0.0 && (&q.a * x - &q.b).amax() <= 1e-11 * (1.0 + q.b.amax())
        };
        let out = path_follow(&p1, &mut st, opts, 1.0, &done);
        iterations = st.iterations;
        x = st.x.rows(0, n).into_owned();
        let status = match out {
            Outcome::EarlyExit => None,
            Outcome::Optimal => Some(SolveStatus::InfeasibleDetected),
            Outcome::IterationLimit => Some(SolveStatus::IterationLimit),
            Outcome::Failed => Some(SolveStatus::NumericalFailure),
        };
        info!("phase one finished after {iterations} iterations, shift {:.3e}", st.x[n]);
        if let Some(status) = status {
            return Ok(finish(f, &p, x.as_slice(), status, iterations));
        }
    }

    let mut st = State { x, nu: DVector::zeros(p.a.nrows()), iterations };
    let out = path_follow(&p, &mut st, opts, scale, &|_, _| false);
    let status = match out {
        Outcome::Optimal | Outcome::EarlyExit => SolveStatus::Optimal,
        Outcome::IterationLimit => SolveStatus::IterationLimit,
        Outcome::Failed => SolveStatus::NumericalFailure,
    };
    let mut r = finish(f, &p, st.x.as_slice(), status, st.iterations);
    if r.status == SolveStatus::Optimal && r.max_violation > opts.tol_feas {
        r.status = SolveStatus::NumericalFailure;
    }
    info!("barrier finished: {} objective {:.10} after {} iterations", r.status.as_str(), r.objective, r.iterations);
    Ok(r)
}

fn finish(f: &Formulation, p: &Problem, x: &[f64], status: SolveStatus, iterations: usize) -> SolveResult {
    let report = evaluate_dense(f, x);
    SolveResult {
        status,
        objective: p.objective(&DVector::from_column_slice(x)),
        point: f.point_from(x),
        max_violation: report.max_violation,
        bound_kind: BoundKind::Lower,
        iterations,
    }
}

/// Lower bound from the radial cone relaxation.
pub fn solve_jabr_barrier(grid: &Grid, opts: &SolveOptions) -> Result<SolveResult, SolveError> {
    let f = build_jabr_socp(grid)?;
    let mut x = interior_start(&f);
    // Lifted products just inside their cones.
    for q in grid.pairs() {
        let (b, a) = (grid.buses()[q.first].id, grid.buses()[q.second].id);
        let diag = |id| x[f.var(&names::c(id, id)).expect("diagonal variable") as usize];
        let c = 0.99 * (diag(b) * diag(a)).sqrt();
        x[f.var(&names::c(b, a)).expect("pair variable") as usize] = c;
        x[f.var(&names::s(b, a)).expect("pair variable") as usize] = 0.0;
    }
    solve_conic(&f, &x, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Bus, BusType, Generator};
    use crate::ir::{VarKind, VarName};
    use num_complex::Complex64;

    fn forced_grid() -> Grid {
        let mut bus = Bus::new(1, BusType::Reference);
        bus.demand = Complex64::new(1.0, 0.0);
        bus.v_min = 0.9;
        bus.v_max = 1.1;
        let g = Generator {
            bus: 1,
            index: 1,
            p_min: 0.0,
            p_max: 2.0,
            q_min: -1.0,
            q_max: 1.0,
            cost: vec![0.0, 10.0],
        };
        Grid::new(vec![bus], vec![], vec![g], 100.0)
    }

    #[test]
    fn forced_generation() {
        let r = solve_jabr_barrier(&forced_grid(), &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 10.0).abs() < 1e-5, "{}", r.objective);
    }

    #[test]
    fn iteration_limit_keeps_bounds() {
        let opts = SolveOptions { max_iter: 1, ..Default::default() };
        let mut grid = forced_grid();
        // Off-center reactive limits so the start is not already optimal.
        grid = Grid::new(
            grid.buses().to_vec(),
            vec![],
            vec![Generator { q_max: 3.0, ..grid.generators()[0].clone() }],
            100.0,
        );
        let r = solve_jabr_barrier(&grid, &opts).unwrap();
        assert_eq!(r.status, SolveStatus::IterationLimit);
        let c = r.point.get(&VarName::whole(VarKind::C, &[1, 1])).unwrap();
        assert!((0.81..=1.21).contains(&c));
    }

    #[test]
    fn small_socp() {
        // min x + y  s.t.  x^2 + y^2 <= 1 (as a cone), x + y >= -10
        let mut f = Formulation::new(crate::ir::FormKind::Jabr, "");
        let x = f.add_var(VarName::whole(VarKind::C, &[1]), f64::NEG_INFINITY, f64::INFINITY, None).unwrap();
        let y = f.add_var(VarName::whole(VarKind::C, &[2]), f64::NEG_INFINITY, f64::INFINITY, None).unwrap();
        f.set_objective(Poly::var(x) + Poly::var(y));
        f.add_cone(crate::ir::SocConstraint {
            tag: "k".into(),
            at: vec![],
            members: vec![Poly::var(x), Poly::var(y)],
            t: Poly::constant(1.0),
            w: None,
        })
        .unwrap();
        let r = solve_conic(&f, &[0.0, 0.0], &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective + 2f64.sqrt()).abs() < 1e-5);
    }

    #[test]
    fn detects_infeasibility() {
        // x >= 2 and x <= 1
        let mut f = Formulation::new(crate::ir::FormKind::Jabr, "");
        let x = f.add_var(VarName::whole(VarKind::C, &[1]), f64::NEG_INFINITY, f64::INFINITY, None).unwrap();
        f.set_objective(Poly::var(x));
        f.add_constraint("lo", &[], Poly::var(x), Sense::Ge, 2.0).unwrap();
        f.add_constraint("hi", &[], Poly::var(x), Sense::Le, 1.0).unwrap();
        let r = solve_conic(&f, &[0.0], &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::InfeasibleDetected);
    }
}
