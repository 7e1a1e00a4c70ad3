//! Multistart local solver for the polar model: augmented Lagrangian on
//! the balance equations and flow/phase inequalities, with a projected
//! Newton method on the variable box. Trigonometric terms are evaluated
//! exactly and differentiated analytically.

use std::f64::consts::PI;

use log::{debug, info};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BoundKind, SolveError, SolveOptions, SolveResult, SolveStatus};
use crate::builders::{build_polar, phase_tangents};
use crate::grid::{Grid, Orientation};
use crate::ir::{evaluate, FormKind};
use crate::transforms::{lift_point, VoltagePoint};

/// `gamma v_b^2 + v_b v_a (alpha cos d + beta sin d)`, `d = theta_b - theta_a`.
#[derive(Debug, Clone, Copy)]
struct ArcTerm {
    b: usize,
    a: usize,
    gamma: f64,
    alpha: f64,
    beta: f64,
}

/// Smooth function of the polar variables: arc terms plus squared
/// magnitudes, linear terms and a constant.
#[derive(Debug, Clone, Default)]
struct Func {
    arcs: Vec<ArcTerm>,
    squares: Vec<(usize, f64)>,
    linear: Vec<(usize, f64)>,
    c: f64,
}

struct Layout {
    n: usize,
}

impl Layout {
    fn idx(&self, t: &ArcTerm) -> [usize; 4] {
        [t.b, t.a, self.n + t.b, self.n + t.a]
    }
}

impl Func {
    fn parts(t: &ArcTerm, x: &[f64], l: &Layout) -> (f64, f64, f64, f64) {
        let [vb, va, tb, ta] = l.idx(t).map(|i| x[i]);
        let d = tb - ta;
        let (sn, cs) = d.sin_cos();
        let c = t.alpha * cs + t.beta * sn;
        let dc = -t.alpha * sn + t.beta * cs;
        (vb, va, c, dc)
    }

    fn eval(&self, x: &[f64], l: &Layout) -> f64 {
        let mut v = self.c;
        for t in &self.arcs {
            let (vb, va, c, _) = Self::parts(t, x, l);
            v += t.gamma * vb * vb + vb * va * c;
        }
        for &(i, k) in &self.squares {
            v += k * x[i] * x[i];
        }
        for &(i, k) in &self.linear {
            v += k * x[i];
        }
        v
    }

    fn add_grad(&self, x: &[f64], l: &Layout, s: f64, g: &mut DVector<f64>) {
        for t in &self.arcs {
            let (vb, va, c, dc) = Self::parts(t, x, l);
            let idx = l.idx(t);
            let d = [2.0 * t.gamma * vb + va * c, vb * c, vb * va * dc, -vb * va * dc];
            for k in 0..4 {
                g[idx[k]] += s * d[k];
            }
        }
        for &(i, k) in &self.squares {
            g[i] += s * 2.0 * k * x[i];
        }
        for &(i, k) in &self.linear {
            g[i] += s * k;
        }
    }

    fn grad(&self, x: &[f64], l: &Layout, dim: usize) -> DVector<f64> {
        let mut g = DVector::zeros(dim);
        self.add_grad(x, l, 1.0, &mut g);
        g
    }

    fn add_hess(&self, x: &[f64], l: &Layout, s: f64, h: &mut DMatrix<f64>) {
        for t in &self.arcs {
            let (vb, va, c, dc) = Self::parts(t, x, l);
            let idx = l.idx(t);
            let p = vb * va * c;
            // Order: v_b, v_a, theta_b, theta_a.
            let m = [
                [2.0 * t.gamma, c, va * dc, -va * dc],
                [c, 0.0, vb * dc, -vb * dc],
                [va * dc, vb * dc, -p, p],
                [-va * dc, -vb * dc, p, -p],
            ];
            for i in 0..4 {
                for j in 0..4 {
                    h[(idx[i], idx[j])] += s * m[i][j];
                }
            }
        }
        for &(i, k) in &self.squares {
            h[(i, i)] += s * 2.0 * k;
        }
    }
}

struct Model {
    layout: Layout,
    dim: usize,
    lb: Vec<f64>,
    ub: Vec<f64>,
    balance: Vec<Func>,
    /// `(P, Q, limit^2)` per flow-limited arc.
    flows: Vec<(Func, Func, f64)>,
    /// `lo <= theta_b - theta_a <= hi`, each side optional.
    phases: Vec<(usize, usize, Option<f64>, Option<f64>)>,
    /// `(variable, cost coefficients)` per generator.
    costs: Vec<(usize, Vec<f64>)>,
    scale: f64,
    n_gen: usize,
}

impl Model {
    fn new(grid: &Grid) -> Model {
        let n = grid.n_buses();
        let ng = grid.generators().len();
        let dim = 2 * n + 2 * ng;
        let layout = Layout { n };
        let mut lb = vec![0.0; dim];
        let mut ub = vec![0.0; dim];
        let r = grid.reference().expect("validated grid has a reference bus");
        for (b, bus) in grid.buses().iter().enumerate() {
            lb[b] = bus.v_min.max(0.0);
            ub[b] = bus.v_max;
            (lb[n + b], ub[n + b]) = if b == r { (0.0, 0.0) } else { (-PI, PI) };
        }
        for (k, g) in grid.generators().iter().enumerate() {
            (lb[2 * n + k], ub[2 * n + k]) = (g.p_min, g.p_max);
            (lb[2 * n + ng + k], ub[2 * n + ng + k]) = (g.q_min, g.q_max);
        }

        let mut balance_p: Vec<Func> = vec![Func::default(); n];
        let mut balance_q: Vec<Func> = vec![Func::default(); n];
        let mut flows = Vec::new();
        let mut phases = Vec::new();
        for arc in grid.arcs() {
            let (ys, yo) = (arc.y_self, arc.y_other);
            let p = ArcTerm { b: arc.from, a: arc.to, gamma: ys.re, alpha: yo.re, beta: yo.im };
            let q = ArcTerm { b: arc.from, a: arc.to, gamma: -ys.im, alpha: -yo.im, beta: yo.re };
            balance_p[arc.from].arcs.push(p);
            balance_q[arc.from].arcs.push(q);
            let br = &grid.branches()[arc.branch];
            if br.has_flow_limit() {
                let single = |t| Func { arcs: vec![t], ..Default::default() };
                flows.push((single(p), single(q), br.s_max * br.s_max));
            }
            if arc.orientation == Orientation::Forward {
                let (lo, hi) = phase_tangents(br.angle_min, br.angle_max);
                if lo.is_some() || hi.is_some() {
                    phases.push((arc.from, arc.to, lo.map(|_| br.angle_min), hi.map(|_| br.angle_max)));
                }
            }
        }
        for (b, bus) in grid.buses().iter().enumerate() {
            balance_p[b].squares.push((b, bus.shunt.re));
            balance_q[b].squares.push((b, -bus.shunt.im));
            balance_p[b].c = bus.demand.re;
            balance_q[b].c = bus.demand.im;
            for &g in grid.generators_at(b) {
                balance_p[b].linear.push((2 * n + g, -1.0));
                balance_q[b].linear.push((2 * n + ng + g, -1.0));
            }
        }
        let coeffs: Vec<f64> = grid
            .generators()
            .iter()
            .flat_map(|g| g.cost.iter().skip(1).copied())
            .filter(|c| *c != 0.0)
            .map(f64::abs)
            .collect();
        let scale = if coeffs.is_empty() { 1.0 } else { coeffs.iter().sum::<f64>() / coeffs.len() as f64 };
        let mut balance = balance_p;
        balance.extend(balance_q);
        Model {
            layout,
            dim,
            lb,
            ub,
            balance,
            flows,
            phases,
            costs: grid.generators().iter().enumerate().map(|(k, g)| (2 * n + k, g.cost.clone())).collect(),
            scale,
            n_gen: ng,
        }
    }

    fn cost(&self, x: &[f64]) -> f64 {
        self.costs
            .iter()
            .map(|(i, c)| c.iter().rev().fold(0.0, |acc, k| acc * x[*i] + k))
            .sum()
    }

    fn phase_values(&self, x: &[f64]) -> Vec<(f64, DVector<f64>)> {
        let n = self.layout.n;
        let mut out = Vec::new();
        for &(b, a, lo, hi) in &self.phases {
            let d = x[n + b] - x[n + a];
            let mut grad = DVector::zeros(self.dim);
            grad[n + b] = 1.0;
            grad[n + a] = -1.0;
            if let Some(lo) = lo {
                out.push((lo - d, -&grad));
            }
            if let Some(hi) = hi {
                out.push((d - hi, grad));
            }
        }
        out
    }

    fn n_ineq(&self) -> usize {
        self.flows.len() + self.phases.iter().map(|p| p.2.is_some() as usize + p.3.is_some() as usize).sum::<usize>()
    }

    /// Equality residuals and inequality values `g <= 0`.
    fn constraint_values(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let l = &self.layout;
        let h = self.balance.iter().map(|f| f.eval(x, l)).collect();
        let mut g: Vec<f64> = self
            .flows
            .iter()
            .map(|(p, q, lim)| p.eval(x, l).powi(2) + q.eval(x, l).powi(2) - lim)
            .collect();
        g.extend(self.phase_values(x).into_iter().map(|(v, _)| v));
        (h, g)
    }

    fn violation(&self, x: &[f64]) -> f64 {
        let (h, g) = self.constraint_values(x);
        h.iter().map(|v| v.abs()).chain(g.iter().map(|v| v.max(0.0))).fold(0.0, f64::max)
    }

    /// Augmented Lagrangian value, gradient and Hessian.
    fn merit(&self, x: &[f64], lam: &[f64], mu: &[f64], rho: f64, order: usize) -> (f64, DVector<f64>, DMatrix<f64>) {
        let l = &self.layout;
        let dim = self.dim;
        let mut val = self.cost(x) / self.scale;
        let mut g = DVector::zeros(dim);
        let mut h = DMatrix::zeros(if order > 1 { dim } else { 0 }, if order > 1 { dim } else { 0 });
        for (i, c) in &self.costs {
            let p = x[*i];
            let mut d1 = 0.0;
            let mut d2 = 0.0;
            for (k, ck) in c.iter().enumerate().skip(1) {
                d1 += k as f64 * ck * p.powi(k as i32 - 1);
                if k >= 2 {
                    d2 += (k * (k - 1)) as f64 * ck * p.powi(k as i32 - 2);
                }
            }
            g[*i] += d1 / self.scale;
            if order > 1 {
                h[(*i, *i)] += d2 / self.scale;
            }
        }
        for (j, f) in self.balance.iter().enumerate() {
            let hv = f.eval(x, l);
            val += lam[j] * hv + 0.5 * rho * hv * hv;
            let w = lam[j] + rho * hv;
            if order == 0 {
                continue;
            }
            let dh = f.grad(x, l, dim);
            g.axpy(w, &dh, 1.0);
            if order > 1 {
                f.add_hess(x, l, w, &mut h);
                h.ger(rho, &dh, &dh, 1.0);
            }
        }
        let mut k = 0;
        for (p, q, lim) in &self.flows {
            let (pv, qv) = (p.eval(x, l), q.eval(x, l));
            let gv = pv * pv + qv * qv - lim;
            let s = (mu[k] + rho * gv).max(0.0);
            val += (s * s - mu[k] * mu[k]) / (2.0 * rho);
            k += 1;
            if order == 0 || s == 0.0 {
                continue;
            }
            let dp = p.grad(x, l, dim);
            let dq = q.grad(x, l, dim);
            let dg = &dp * (2.0 * pv) + &dq * (2.0 * qv);
            g.axpy(s, &dg, 1.0);
            if order > 1 {
                h.ger(rho, &dg, &dg, 1.0);
                h.ger(2.0 * s, &dp, &dp, 1.0);
                h.ger(2.0 * s, &dq, &dq, 1.0);
                p.add_hess(x, l, 2.0 * s * pv, &mut h);
                q.add_hess(x, l, 2.0 * s * qv, &mut h);
            }
        }
        for (gv, dg) in self.phase_values(x) {
            let s = (mu[k] + rho * gv).max(0.0);
            val += (s * s - mu[k] * mu[k]) / (2.0 * rho);
            k += 1;
            if order == 0 || s == 0.0 {
                continue;
            }
            g.axpy(s, &dg, 1.0);
            if order > 1 {
                h.ger(rho, &dg, &dg, 1.0);
            }
        }
        (val, g, h)
    }

    fn project(&self, x: &mut [f64]) {
        for i in 0..self.dim {
            x[i] = x[i].clamp(self.lb[i], self.ub[i]);
        }
    }
}

/// Newton direction on the free variables with the regularization
/// schedule, falling back to an eigenvalue-modified Hessian.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let scale = h.diagonal().iter().fold(1e-12_f64, |m, v| m.max(v.abs()));
    let mut lambda = 1e-10;
    while lambda <= 1e-2 {
        let mut m = h.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += lambda * scale;
        }
        if let Some(ch) = m.cholesky() {
            return -ch.solve(g);
        }
        lambda *= 10.0;
    }
    let eig = SymmetricEigen::new(h.clone());
    let floor = 1e-8 * scale;
    let mut d = DVector::zeros(g.len());
    for (k, &ev) in eig.eigenvalues.iter().enumerate() {
        let u = eig.eigenvectors.column(k);
        d -= u * (u.dot(g) / ev.abs().max(floor));
    }
    d
}

struct LocalRun {
    x: Vec<f64>,
    iterations: usize,
    converged: bool,
    hit_limit: bool,
}

const ROUNDS: usize = 8;

fn local_solve(model: &Model, mut x: Vec<f64>, max_iter: usize) -> LocalRun {
    let mut lam = vec![0.0; model.balance.len()];
    let mut mu = vec![0.0; model.n_ineq()];
    let mut rho = 10.0;
    let mut iterations = 0;
    let mut converged = false;
    model.project(&mut x);
    for round in 0..ROUNDS {
        let mut stationary = false;
        let mut stalls = 0;
        while iterations < max_iter {
            let (val, g, h) = model.merit(&x, &lam, &mu, rho, 2);
            // Projected gradient measure.
            let mut pg = 0.0_f64;
            for i in 0..model.dim {
                pg = pg.max(((x[i] - g[i]).clamp(model.lb[i], model.ub[i]) - x[i]).abs());
            }
            if pg <= 1e-10 {
                stationary = true;
                break;
            }
            let eps = pg.min(1e-6);
            let free: Vec<usize> = (0..model.dim)
                .filter(|&i| {
                    let fixed = model.lb[i] == model.ub[i];
                    let at_lo = x[i] <= model.lb[i] + eps && g[i] > 0.0;
                    let at_hi = x[i] >= model.ub[i] - eps && g[i] < 0.0;
                    !(fixed || at_lo || at_hi)
                })
                .collect();
            // Active variables move straight onto their bound.
            let mut d = DVector::zeros(model.dim);
            for i in 0..model.dim {
                d[i] = (x[i] - g[i]).clamp(model.lb[i], model.ub[i]) - x[i];
            }
            if !free.is_empty() {
                let hf = DMatrix::from_fn(free.len(), free.len(), |i, j| h[(free[i], free[j])]);
                let gf = DVector::from_fn(free.len(), |i, _| g[free[i]]);
                let df = newton_direction(&hf, &gf);
                for (k, &i) in free.iter().enumerate() {
                    d[i] = df[k];
                }
            }
            // Predicted decrease below rounding level of the merit: done.
            if -g.dot(&d) <= 1e-20 * val.abs().max(1.0) {
                stationary = true;
                break;
            }
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let mut y: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + step * b).collect();
                model.project(&mut y);
                let decrease: f64 = (0..model.dim).map(|i| g[i] * (y[i] - x[i])).sum();
                let (yv, _, _) = model.merit(&y, &lam, &mu, rho, 0);
                if decrease < 0.0 && yv <= val + 1e-4 * decrease {
                    x = y;
                    accepted = true;
                    stalls = if val - yv <= 1e-15 * val.abs().max(1.0) { stalls + 1 } else { 0 };
                    break;
                }
                step *= 0.5;
            }
            iterations += 1;
            // Progress below the rounding level of the merit.
            if stalls >= 3 {
                stationary = true;
                break;
            }
            if !accepted {
                // Newton direction failed; try a plain projected gradient step.
                let mut step = 1.0 / h.diagonal().amax().max(1.0);
                for _ in 0..60 {
                    let mut y: Vec<f64> = x.iter().zip(g.iter()).map(|(a, b)| a - step * b).collect();
                    model.project(&mut y);
                    let decrease: f64 = (0..model.dim).map(|i| g[i] * (y[i] - x[i])).sum();
                    let (yv, _, _) = model.merit(&y, &lam, &mu, rho, 0);
                    if decrease < 0.0 && yv <= val + 1e-4 * decrease {
                        x = y;
                        accepted = true;
                        break;
                    }
                    step *= 0.5;
                }
                if !accepted {
                    stationary = true;
                    break;
                }
            }
        }
        let (h, gi) = model.constraint_values(&x);
        for (l, v) in lam.iter_mut().zip(&h) {
            *l += rho * v;
        }
        for (m, v) in mu.iter_mut().zip(&gi) {
            *m = (*m + rho * v).max(0.0);
        }
        let viol = model.violation(&x);
        debug!("round {round}: rho={rho:.1e} violation={viol:.3e} cost={:.10}", model.cost(&x));
        if iterations >= max_iter {
            return LocalRun { x, iterations, converged: false, hit_limit: true };
        }
        if stationary && viol <= 1e-12 {
            converged = true;
            break;
        }
        rho *= 10.0;
    }
    LocalRun { x, iterations, converged, hit_limit: false }
}

/// Runs every start and returns one result per start, in start order.
pub fn polar_local_starts(grid: &Grid, opts: &SolveOptions) -> Result<Vec<SolveResult>, SolveError> {
    opts.validate()?;
    let f = build_polar(grid)?;
    let model = Model::new(grid);
    let n = grid.n_buses();
    let ng = model.n_gen;
    let r = grid.reference().expect("validated grid has a reference bus");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = Vec::new();
    for start in 0..opts.multistart.max(1) {
        let mut x = vec![0.0; model.dim];
        for b in 0..n {
            let (lo, hi) = match (model.lb[b], model.ub[b]) {
                (lo, hi) if hi.is_finite() => (lo, hi),
                (lo, _) if lo > 0.0 => (lo, lo + 0.2),
                _ => (0.9, 1.1),
            };
            x[b] = rng.random_range(lo..=hi);
        }
        for b in 0..n {
            x[n + b] = rng.random_range(-PI / 6.0..=PI / 6.0);
        }
        x[n + r] = 0.0;
        for i in 2 * n..model.dim {
            x[i] = match (model.lb[i].is_finite(), model.ub[i].is_finite()) {
                (true, true) => 0.5 * (model.lb[i] + model.ub[i]),
                (true, false) => model.lb[i],
                (false, true) => model.ub[i],
                (false, false) => 0.0,
            };
        }
        let run = local_solve(&model, x, opts.max_iter);
        let x = &run.x;
        let vp = VoltagePoint::Polar { mag: x[..n].to_vec(), angle: x[n..2 * n].to_vec() };
        let sg: Vec<Complex64> = (0..ng).map(|k| Complex64::new(x[2 * n + k], x[2 * n + ng + k])).collect();
        let point = lift_point(grid, FormKind::Polar, &vp, &sg);
        let report = evaluate(&f, &point).expect("lifted point covers the polar variables");
        let feasible = report.max_violation <= opts.tol_feas;
        let status = match (feasible, run.converged, run.hit_limit) {
            (true, true, _) => SolveStatus::Optimal,
            (true, false, _) => SolveStatus::Feasible,
            (false, _, true) => SolveStatus::IterationLimit,
            (false, _, false) => SolveStatus::NumericalFailure,
        };
        debug!(
            "start {start}: {} objective {:.10} violation {:.3e}",
            status.as_str(),
            report.objective,
            report.max_violation
        );
        out.push(SolveResult {
            status,
            objective: report.objective,
            point,
            max_violation: report.max_violation,
            bound_kind: BoundKind::Upper,
            iterations: run.iterations,
        });
    }
    Ok(out)
}

/// Upper bound from the best feasible local solution over all starts;
/// ties go to the earliest start.
pub fn solve_polar_local(grid: &Grid, opts: &SolveOptions) -> Result<SolveResult, SolveError> {
    let runs = polar_local_starts(grid, opts)?;
    let best_feasible = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.status.is_feasible())
        .min_by(|(i, a), (j, b)| a.objective.total_cmp(&b.objective).then(i.cmp(j)));
    let best = match best_feasible {
        Some((_, r)) => r.clone(),
        None => {
            let (_, r) = runs
                .iter()
                .enumerate()
                .min_by(|(i, a), (j, b)| a.max_violation.total_cmp(&b.max_violation).then(i.cmp(j)))
                .expect("at least one start");
            let mut r = r.clone();
            if r.status != SolveStatus::IterationLimit {
                r.status = SolveStatus::NumericalFailure;
            }
            r
        }
    };
    info!(
        "polar local: {} objective {:.10} violation {:.3e}",
        best.status.as_str(),
        best.objective,
        best.max_violation
    );
    Ok(best)
}
