use std::collections::BTreeMap;
use std::fmt::Write;

use super::ExportError;
use crate::ir::{Formulation, Poly, Sense, SocConstraint};

/// Affine matrix entries of one block, keyed by `(row, col)` with
/// `row <= col`, 0-based.
type BlockEntries = BTreeMap<(usize, usize), Poly>;

struct Block {
    size: usize,
    diagonal: bool,
    entries: BlockEntries,
}

fn affine(p: &Poly, what: &str) -> Result<(), ExportError> {
    if p.degree() > 1 {
        return Err(ExportError::UnsupportedConstraint(what.to_string()));
    }
    Ok(())
}

/// `[[t, a + ib], [a - ib, w]]` in real embedding.
fn cone_block(c: &SocConstraint) -> Result<Block, ExportError> {
    if c.members.len() > 2 {
        return Err(ExportError::UnsupportedConstraint(c.tag.clone()));
    }
    let t = c.t.clone();
    let w = c.w.clone().unwrap_or_else(|| t.clone());
    let a = c.members[0].clone();
    let b = c.members.get(1).cloned().unwrap_or_default();
    let mut e = BlockEntries::new();
    e.insert((0, 0), t.clone());
    e.insert((0, 1), a.clone());
    e.insert((0, 3), -b.clone());
    e.insert((1, 1), w.clone());
    e.insert((1, 2), b);
    e.insert((2, 2), t);
    e.insert((2, 3), a);
    e.insert((3, 3), w);
    Ok(Block { size: 4, diagonal: false, entries: e })
}

/// Sparse SDPA text. The model is `min c'x` subject to
/// `sum_i F_i x_i - F_0 >= 0` blockwise; scalar rows (bounds and linear
/// constraints, equalities as two rows) share one diagonal block placed
/// last, cones go through a 4x4 real embedding of a 2x2 Hermitian block.
pub fn export_sdpa(f: &Formulation) -> Result<String, ExportError> {
    affine(f.objective(), "objective")?;
    let mut blocks: Vec<Block> = Vec::new();
    for b in f.blocks() {
        let sign = if b.negative { -1.0 } else { 1.0 };
        let mut e = BlockEntries::new();
        for i in 0..b.dim {
            for j in i..b.dim {
                e.insert((i, j), b.entry(i, j).clone() * sign);
            }
        }
        blocks.push(Block { size: b.dim, diagonal: false, entries: e });
    }
    for c in f.cones() {
        blocks.push(cone_block(c)?);
    }

    let mut rows: Vec<Poly> = Vec::new();
    for (i, v) in f.variables().iter().enumerate() {
        let x = Poly::var(i as u32);
        if v.lb.is_finite() {
            rows.push(x.clone() - Poly::constant(v.lb));
        }
        if v.ub.is_finite() {
            rows.push(Poly::constant(v.ub) - x);
        }
    }
    for c in f.constraints() {
        affine(&c.poly, &c.tag)?;
        let ge = c.poly.clone() - Poly::constant(c.rhs);
        match c.sense {
            Sense::Ge => rows.push(ge),
            Sense::Le => rows.push(-ge),
            Sense::Eq => {
                rows.push(ge.clone());
                rows.push(-ge);
            }
        }
    }
    if !rows.is_empty() || blocks.is_empty() {
        let size = rows.len().max(1);
        let entries = rows.into_iter().enumerate().map(|(k, p)| ((k, k), p)).collect();
        blocks.push(Block { size, diagonal: true, entries });
    }

    // (matrix, block, row, col) -> value, 1-based as written.
    let mut coef: BTreeMap<(usize, usize, usize, usize), f64> = BTreeMap::new();
    for (k, b) in blocks.iter().enumerate() {
        for (&(i, j), p) in &b.entries {
            for (m, c) in p.terms() {
                let mat = if m.is_empty() { 0 } else { m[0] as usize + 1 };
                let v = if m.is_empty() { -c } else { c };
                *coef.entry((mat, k + 1, i + 1, j + 1)).or_insert(0.0) += v;
            }
        }
    }

    let n = f.variables().len();
    let mut out = String::new();
    writeln!(out, "* acopf {} model, grid {}", f.kind.as_str(), f.grid_hash).unwrap();
    writeln!(out, "* minimize c'x (no sign change); objective constant {:.16e}", f.objective().constant_term()).unwrap();
    for (i, v) in f.variables().iter().enumerate() {
        writeln!(out, "* x{} = {}", i + 1, v.name).unwrap();
    }
    writeln!(out, "{n}").unwrap();
    writeln!(out, "{}", blocks.len()).unwrap();
    let sizes: Vec<String> =
        blocks.iter().map(|b| if b.diagonal { format!("-{}", b.size) } else { b.size.to_string() }).collect();
    writeln!(out, "{}", sizes.join(" ")).unwrap();
    let mut c = vec![0.0; n];
    for (m, k) in f.objective().terms() {
        if let [i] = m {
            c[*i as usize] = k;
        }
    }
    let c: Vec<String> = c.iter().map(|v| format!("{v:.16e}")).collect();
    writeln!(out, "{}", c.join(" ")).unwrap();
    for ((mat, blk, i, j), v) in coef {
        if v != 0.0 {
            writeln!(out, "{mat} {blk} {i} {j} {v:.16e}").unwrap();
        }
    }
    Ok(out)
}
