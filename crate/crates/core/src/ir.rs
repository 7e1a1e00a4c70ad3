//! Intermediate representation shared by every formulation: named
//! variables with bounds, polynomial constraints, second-order cones and
//! semidefinite blocks, plus residual evaluation at a point.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

/// Highest total degree allowed in a monomial, not counting one
/// trigonometric auxiliary factor.
pub const MAX_DEGREE: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IrError {
    #[error("point has no value for variable {0}")]
    MissingVariable(String),
    #[error("variable {0} declared twice")]
    DuplicateVariable(String),
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("malformed variable name '{0}'")]
    BadName(String),
    #[error("constraint {0} exceeds the supported polynomial degree")]
    DegreeTooHigh(String),
    #[error("PSD block {tag} expects {expected} entries, got {got}")]
    BlockShape { tag: String, expected: usize, got: usize },
}

/// Which builder produced a formulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FormKind {
    Siv,
    VoltageOnly,
    Polar,
    Jabr,
    Mixed,
    Matrix,
    SdpReal,
    SdpV,
    SdpX,
    SocpX,
    Qc,
}

impl FormKind {
    pub const ALL: [FormKind; 11] = [
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
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FormKind::Siv => "siv",
            FormKind::VoltageOnly => "voltage_only",
            FormKind::Polar => "polar",
            FormKind::Jabr => "jabr",
            FormKind::Mixed => "mixed",
            FormKind::Matrix => "matrix",
            FormKind::SdpReal => "sdp_real",
            FormKind::SdpV => "sdp_v",
            FormKind::SdpX => "sdp_x",
            FormKind::SocpX => "socp_x",
            FormKind::Qc => "qc",
        }
    }

    /// True for the exact (nonconvex) formulations.
    pub fn is_exact(self) -> bool {
        matches!(
            self,
            FormKind::Siv | FormKind::VoltageOnly | FormKind::Polar | FormKind::Matrix
        )
    }
}

impl fmt::Display for FormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FormKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FormKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown formulation '{s}'"))
    }
}

/// Variable families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKind {
    /// Complex bus voltage.
    V,
    /// Squared voltage magnitude.
    V2,
    /// Arc current.
    I,
    /// Arc complex power.
    S,
    /// Generator complex power.
    Sg,
    /// Voltage magnitude.
    Vm,
    /// Voltage angle.
    Va,
    /// Cosine of a pair's angle difference.
    Cos,
    /// Sine of a pair's angle difference.
    Sin,
    /// Lifted product `Re(V_b conj V_a)`.
    C,
    /// Lifted product `Im(V_b conj V_a)`.
    Sj,
    /// Entry of the real lifted matrix.
    W,
    /// Entry of the Hermitian lifted matrix.
    X,
    /// Lifted squares of the arc power components.
    Shat,
    /// Lifted squared current magnitude.
    Ihat,
    /// Lifted product of squared voltage and squared current.
    WIhat,
}

impl VarKind {
    const NAMES: [(VarKind, &'static str); 16] = [
        (VarKind::V, "V"),
        (VarKind::V2, "V2"),
        (VarKind::I, "I"),
        (VarKind::S, "S"),
        (VarKind::Sg, "Sg"),
        (VarKind::Vm, "v"),
        (VarKind::Va, "theta"),
        (VarKind::Cos, "cs"),
        (VarKind::Sin, "sn"),
        (VarKind::C, "c"),
        (VarKind::Sj, "s"),
        (VarKind::W, "W"),
        (VarKind::X, "X"),
        (VarKind::Shat, "Shat"),
        (VarKind::Ihat, "Ihat"),
        (VarKind::WIhat, "WIhat"),
    ];

    pub fn as_str(self) -> &'static str {
        Self::NAMES.iter().find(|(k, _)| *k == self).unwrap().1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Part {
    Whole,
    Re,
    Im,
}

/// Structured variable label, printed as `kind[i,j,..]` with an optional
/// `.re`/`.im` suffix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarName {
    pub kind: VarKind,
    pub index: Vec<u32>,
    pub part: Part,
}

impl VarName {
    pub fn new(kind: VarKind, index: &[u32], part: Part) -> Self {
        VarName {
            kind,
            index: index.to_vec(),
            part,
        }
    }

    pub fn re(kind: VarKind, index: &[u32]) -> Self {
        Self::new(kind, index, Part::Re)
    }

    pub fn im(kind: VarKind, index: &[u32]) -> Self {
        Self::new(kind, index, Part::Im)
    }

    pub fn whole(kind: VarKind, index: &[u32]) -> Self {
        Self::new(kind, index, Part::Whole)
    }
}

impl fmt::Display for VarName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let idx: Vec<String> = self.index.iter().map(|i| i.to_string()).collect();
        write!(f, "{}[{}]", self.kind.as_str(), idx.join(","))?;
        match self.part {
            Part::Whole => Ok(()),
            Part::Re => f.write_str(".re"),
            Part::Im => f.write_str(".im"),
        }
    }
}

impl FromStr for VarName {
    type Err = IrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || IrError::BadName(s.to_string());
        let open = s.find('[').ok_or_else(bad)?;
        let close = s.rfind(']').ok_or_else(bad)?;
        if close < open {
            return Err(bad());
        }
        let kind = VarKind::NAMES
            .iter()
            .find(|(_, n)| *n == &s[..open])
            .ok_or_else(bad)?
            .0;
        let inner = &s[open + 1..close];
        let index = if inner.is_empty() {
            Vec::new()
        } else {
            inner
                .split(',')
                .map(|t| t.parse::<u32>().map_err(|_| bad()))
                .collect::<Result<Vec<_>, _>>()?
        };
        let part = match &s[close + 1..] {
            "" => Part::Whole,
            ".re" => Part::Re,
            ".im" => Part::Im,
            _ => return Err(bad()),
        };
        Ok(VarName { kind, index, part })
    }
}

/// Polynomial in formulation variables. Monomials are sorted lists of
/// variable indices (repeats encode powers); the empty monomial is the
/// constant term.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    terms: BTreeMap<Vec<u32>, f64>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Poly::zero();
        p.add_term(c, &[]);
        p
    }

    pub fn var(i: u32) -> Self {
        Poly::term(1.0, &[i])
    }

    pub fn term(coef: f64, vars: &[u32]) -> Self {
        let mut p = Poly::zero();
        p.add_term(coef, vars);
        p
    }

    /// Adds `coef * prod(vars)`, merging with an existing equal monomial.
    pub fn add_term(&mut self, coef: f64, vars: &[u32]) {
        if coef == 0.0 {
            return;
        }
        let mut mono = vars.to_vec();
        mono.sort_unstable();
        let v = self.terms.get(&mono).copied().unwrap_or(0.0) + coef;
        if v == 0.0 {
            self.terms.remove(&mono);
        } else {
            self.terms.insert(mono, v);
        }
    }

    pub fn add_scaled(&mut self, other: &Poly, k: f64) {
        for (m, c) in &other.terms {
            self.add_term(c * k, m);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.terms.iter().map(|(m, c)| (m.as_slice(), *c))
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn constant_term(&self) -> f64 {
        self.terms.get(&Vec::new()).copied().unwrap_or(0.0)
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(|m| m.len()).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| c * m.iter().map(|&i| x[i as usize]).product::<f64>())
            .sum()
    }

    /// Adds `scale * grad` into `g`.
    pub fn add_gradient(&self, x: &[f64], scale: f64, g: &mut [f64]) {
        for (m, c) in &self.terms {
            for p in 0..m.len() {
                let rest: f64 = m
                    .iter()
                    .enumerate()
                    .filter(|&(q, _)| q != p)
                    .map(|(_, &i)| x[i as usize])
                    .product();
                g[m[p] as usize] += scale * c * rest;
            }
        }
    }

    /// Adds `scale * hessian` into `h`.
    pub fn add_hessian(&self, x: &[f64], scale: f64, h: &mut DMatrix<f64>) {
        for (m, c) in &self.terms {
            for p in 0..m.len() {
                for q in 0..m.len() {
                    if p == q {
                        continue;
                    }
                    let rest: f64 = m
                        .iter()
                        .enumerate()
                        .filter(|&(r, _)| r != p && r != q)
                        .map(|(_, &i)| x[i as usize])
                        .product();
                    h[(m[p] as usize, m[q] as usize)] += scale * c * rest;
                }
            }
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let mut m = ma.clone();
                m.extend_from_slice(mb);
                out.add_term(ca * cb, &m);
            }
        }
        out
    }

    pub fn square(&self) -> Poly {
        self.mul(self)
    }

    /// Replaces every variable index through `map`.
    pub fn remap(&self, map: &dyn Fn(u32) -> u32) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let mm: Vec<u32> = m.iter().map(|&i| map(i)).collect();
            out.add_term(*c, &mm);
        }
        out
    }
}

impl Add for Poly {
    type Output = Poly;
    fn add(mut self, rhs: Poly) -> Poly {
        self.add_scaled(&rhs, 1.0);
        self
    }
}

impl Sub for Poly {
    type Output = Poly;
    fn sub(mut self, rhs: Poly) -> Poly {
        self.add_scaled(&rhs, -1.0);
        self
    }
}

impl Neg for Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self * -1.0
    }
}

impl Mul<f64> for Poly {
    type Output = Poly;
    fn mul(self, k: f64) -> Poly {
        let mut out = Poly::zero();
        out.add_scaled(&self, k);
        out
    }
}

impl Mul for Poly {
    type Output = Poly;
    fn mul(self, rhs: Poly) -> Poly {
        Poly::mul(&self, &rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

impl Sense {
    pub fn as_str(self) -> &'static str {
        match self {
            Sense::Eq => "==",
            Sense::Le => "<=",
            Sense::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: VarName,
    pub lb: f64,
    pub ub: f64,
    /// Constraint family the bounds stand for, if any.
    pub tag: Option<String>,
}

/// `poly (sense) rhs`, with any constant folded into `rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyConstraint {
    pub tag: String,
    /// External location key (bus id, arc key, ..).
    pub at: Vec<u32>,
    pub poly: Poly,
    pub sense: Sense,
    pub rhs: f64,
}

/// `sum(members^2) <= t * w` when `w` is present, else `sum(members^2) <= t^2`
/// with `t >= 0`. All expressions are affine.
#[derive(Debug, Clone, PartialEq)]
pub struct SocConstraint {
    pub tag: String,
    pub at: Vec<u32>,
    pub members: Vec<Poly>,
    pub t: Poly,
    pub w: Option<Poly>,
}

impl SocConstraint {
    pub fn is_rotated(&self) -> bool {
        self.w.is_some()
    }
}

/// Symmetric matrix of affine entries required to be PSD (or NSD when
/// `negative`). `entries` holds the upper triangle row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdBlock {
    pub tag: String,
    pub at: Vec<u32>,
    pub dim: usize,
    pub entries: Vec<Poly>,
    pub negative: bool,
}

impl PsdBlock {
    /// Index of entry `(i, j)` in `entries`.
    pub fn slot(dim: usize, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * dim - i * (i + 1) / 2 + j
    }

    pub fn entry(&self, i: usize, j: usize) -> &Poly {
        &self.entries[Self::slot(self.dim, i, j)]
    }

    pub fn matrix_at(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.entry(i, j).eval(x))
    }

    /// Smallest eigenvalue of the block (of its negation when NSD).
    pub fn min_eigenvalue(&self, x: &[f64]) -> f64 {
        let m = self.matrix_at(x);
        let m = if self.negative { -m } else { m };
        min_eigenvalue(&m)
    }
}

/// Ties `cos`/`sin` auxiliaries to the difference of two angle variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrigBinding {
    pub cos: u32,
    pub sin: u32,
    pub from_angle: u32,
    pub to_angle: u32,
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Formulation {
    pub kind: FormKind,
    /// Digest of the grid the model was built from.
    pub grid_hash: String,
    variables: Vec<Variable>,
    index: HashMap<VarName, u32>,
    objective: Poly,
    constraints: Vec<PolyConstraint>,
    cones: Vec<SocConstraint>,
    blocks: Vec<PsdBlock>,
    trig: Vec<TrigBinding>,
}

impl Formulation {
    pub fn new(kind: FormKind, grid_hash: impl Into<String>) -> Self {
        Formulation {
            kind,
            grid_hash: grid_hash.into(),
            variables: Vec::new(),
            index: HashMap::new(),
            objective: Poly::zero(),
            constraints: Vec::new(),
            cones: Vec::new(),
            blocks: Vec::new(),
            trig: Vec::new(),
        }
    }

    pub fn add_var(&mut self, name: VarName, lb: f64, ub: f64, tag: Option<&str>) -> Result<u32, IrError> {
        if self.index.contains_key(&name) {
            return Err(IrError::DuplicateVariable(name.to_string()));
        }
        let id = self.variables.len() as u32;
        self.index.insert(name.clone(), id);
        self.variables.push(Variable {
            name,
            lb,
            ub,
            tag: tag.map(str::to_string),
        });
        Ok(id)
    }

    pub fn var(&self, name: &VarName) -> Option<u32> {
        self.index.get(name).copied()
    }

    /// Like [`Formulation::var`] but reports the missing name.
    pub fn var_id(&self, name: &VarName) -> Result<u32, IrError> {
        self.var(name).ok_or_else(|| IrError::UnknownVariable(name.to_string()))
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variables_mut(&mut self) -> &mut [Variable] {
        &mut self.variables
    }

    pub fn objective(&self) -> &Poly {
        &self.objective
    }

    pub fn set_objective(&mut self, p: Poly) {
        self.objective = p;
    }

    pub fn constraints(&self) -> &[PolyConstraint] {
        &self.constraints
    }

    pub fn cones(&self) -> &[SocConstraint] {
        &self.cones
    }

    pub fn blocks(&self) -> &[PsdBlock] {
        &self.blocks
    }

    pub fn trig_bindings(&self) -> &[TrigBinding] {
        &self.trig
    }

    fn is_trig_aux(&self, v: u32) -> bool {
        self.trig.iter().any(|t| t.cos == v || t.sin == v)
    }

    fn check_degree(&self, p: &Poly, tag: &str) -> Result<(), IrError> {
        for (m, _) in p.terms() {
            let aux = m.iter().filter(|&&v| self.is_trig_aux(v)).count();
            let other = m.len() - aux;
            let ok = match aux {
                0 => other <= MAX_DEGREE,
                1 => other <= MAX_DEGREE,
                2 => other == 0,
                _ => false,
            };
            if !ok {
                return Err(IrError::DegreeTooHigh(tag.to_string()));
            }
        }
        Ok(())
    }

    pub fn add_constraint(
        &mut self,
        tag: &str,
        at: &[u32],
        mut poly: Poly,
        sense: Sense,
        rhs: f64,
    ) -> Result<(), IrError> {
        self.check_degree(&poly, tag)?;
        let c = poly.constant_term();
        poly.add_term(-c, &[]);
        self.constraints.push(PolyConstraint {
            tag: tag.to_string(),
            at: at.to_vec(),
            poly,
            sense,
            rhs: rhs - c,
        });
        Ok(())
    }

    pub fn add_cone(&mut self, cone: SocConstraint) -> Result<(), IrError> {
        let affine = cone.members.iter().chain([&cone.t]).chain(cone.w.as_ref()).all(|p| p.degree() <= 1);
        if !affine {
            return Err(IrError::DegreeTooHigh(cone.tag));
        }
        self.cones.push(cone);
        Ok(())
    }

    pub fn add_block(&mut self, block: PsdBlock) -> Result<(), IrError> {
        let expected = block.dim * (block.dim + 1) / 2;
        if block.entries.len() != expected {
            return Err(IrError::BlockShape {
                tag: block.tag,
                expected,
                got: block.entries.len(),
            });
        }
        if block.entries.iter().any(|p| p.degree() > 1) {
            return Err(IrError::DegreeTooHigh(block.tag));
        }
        self.blocks.push(block);
        Ok(())
    }

    pub fn add_trig_binding(&mut self, b: TrigBinding) {
        self.trig.push(b);
    }

    /// Dense value vector for a point, applying trigonometric bindings when
    /// the angles are supplied.
    pub fn values(&self, point: &Point) -> Result<Vec<f64>, IrError> {
        let mut x = vec![f64::NAN; self.variables.len()];
        for (i, v) in self.variables.iter().enumerate() {
            if let Some(val) = point.get(&v.name) {
                x[i] = val;
            }
        }
        for t in &self.trig {
            let (a, b) = (x[t.from_angle as usize], x[t.to_angle as usize]);
            if !a.is_nan() && !b.is_nan() {
                x[t.cos as usize] = (a - b).cos();
                x[t.sin as usize] = (a - b).sin();
            }
        }
        if let Some(i) = x.iter().position(|v| v.is_nan()) {
            return Err(IrError::MissingVariable(self.variables[i].name.to_string()));
        }
        Ok(x)
    }

    /// Point holding the given dense values.
    pub fn point_from(&self, x: &[f64]) -> Point {
        let mut p = Point::new();
        for (v, &val) in self.variables.iter().zip(x) {
            p.set(v.name.clone(), val);
        }
        p
    }
}

/// Assignment of values to named variables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Point {
    values: BTreeMap<VarName, f64>,
}

impl Point {
    pub fn new() -> Self {
        Point::default()
    }

    pub fn set(&mut self, name: VarName, v: f64) {
        self.values.insert(name, v);
    }

    pub fn get(&self, name: &VarName) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VarName, f64)> {
        self.values.iter().map(|(k, v)| (k, *v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualKind {
    Constraint(Sense),
    Cone,
    Psd,
    Bound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub tag: String,
    pub at: Vec<u32>,
    pub kind: ResidualKind,
    /// `lhs - rhs` for equalities, the violation for inequalities and cones,
    /// the smallest eigenvalue for PSD blocks.
    pub value: f64,
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub objective: f64,
    pub residuals: Vec<Residual>,
    pub max_violation: f64,
}

/// Evaluates objective and every residual at a point.
pub fn evaluate(f: &Formulation, point: &Point) -> Result<ResidualReport, IrError> {
    let x = f.values(point)?;
    Ok(evaluate_dense(f, &x))
}

pub fn evaluate_dense(f: &Formulation, x: &[f64]) -> ResidualReport {
    let mut residuals = Vec::new();
    for (v, &val) in f.variables.iter().zip(x) {
        if v.lb.is_finite() || v.ub.is_finite() {
            let viol = (v.lb - val).max(val - v.ub).max(0.0);
            let mut at = v.name.index.clone();
            at.push(v.name.part as u32);
            residuals.push(Residual {
                tag: v.tag.clone().unwrap_or_else(|| "bound".into()),
                at,
                kind: ResidualKind::Bound,
                value: viol,
                violation: viol,
            });
        }
    }
    for c in &f.constraints {
        let lhs = c.poly.eval(x) - c.rhs;
        let (value, violation) = match c.sense {
            Sense::Eq => (lhs, lhs.abs()),
            Sense::Le => (lhs.max(0.0), lhs.max(0.0)),
            Sense::Ge => ((-lhs).max(0.0), (-lhs).max(0.0)),
        };
        residuals.push(Residual {
            tag: c.tag.clone(),
            at: c.at.clone(),
            kind: ResidualKind::Constraint(c.sense),
            value,
            violation,
        });
    }
    for c in &f.cones {
        let lhs: f64 = c.members.iter().map(|m| m.eval(x).powi(2)).sum();
        let t = c.t.eval(x);
        let viol = match &c.w {
            Some(w) => {
                let w = w.eval(x);
                (lhs - t * w).max(-t).max(-w).max(0.0)
            }
            None => (lhs - t * t).max(-t).max(0.0),
        };
        residuals.push(Residual {
            tag: c.tag.clone(),
            at: c.at.clone(),
            kind: ResidualKind::Cone,
            value: viol,
            violation: viol,
        });
    }
    for b in &f.blocks {
        let eig = b.min_eigenvalue(x);
        residuals.push(Residual {
            tag: b.tag.clone(),
            at: b.at.clone(),
            kind: ResidualKind::Psd,
            value: eig,
            violation: (-eig).max(0.0),
        });
    }
    let max_violation = residuals.iter().map(|r| r.violation).fold(0.0, f64::max);
    ResidualReport {
        objective: f.objective.eval(x),
        residuals,
        max_violation,
    }
}

/// `(feasible, max_violation)`; PSD blocks pass when their smallest
/// eigenvalue is at least `-tol`.
pub fn feasibility(f: &Formulation, point: &Point, tol: f64) -> Result<(bool, f64), IrError> {
    let r = evaluate(f, point)?;
    Ok((r.max_violation <= tol, r.max_violation))
}
