//! MATPOWER case files (version 2 layout).

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use super::{check_grid, CaseError};
use crate::grid::{Branch, Bus, BusType, Generator, Grid};

struct Matrix {
    rows: Vec<Vec<f64>>,
    line: usize,
}

/// Pulls `mpc.<name> = ...;` assignments out of the file. Matrices are
/// parsed, scalars are kept as text, cell arrays and strings are skipped.
fn assignments(text: &str) -> Result<(BTreeMap<String, Matrix>, BTreeMap<String, (String, usize)>), CaseError> {
    let mut matrices = BTreeMap::new();
    let mut scalars = BTreeMap::new();
    // Strip comments line by line, keeping line numbers.
    let lines: Vec<&str> = text
        .lines()
        .map(|l| match l.find('%') {
            Some(i) => &l[..i],
            None => l,
        })
        .collect();

    let mut li = 0;
    while li < lines.len() {
        let line = lines[li].trim();
        let Some(rest) = line.strip_prefix("mpc.") else {
            li += 1;
            continue;
        };
        let name: String = rest.chars().take_while(|c| c.is_ascii_alphanumeric() || *c == '_').collect();
        let after = rest[name.len()..].trim_start();
        let Some(value) = after.strip_prefix('=') else {
            li += 1;
            continue;
        };
        let value = value.trim_start();
        let start_line = li + 1;
        if let Some(body) = value.strip_prefix('[') {
            // Gather the matrix body across lines up to the closing bracket.
            let mut buf = String::new();
            let mut cur = body.to_string();
            let mut cur_line = li;
            loop {
                if let Some(end) = cur.find(']') {
                    buf.push_str(&cur[..end]);
                    break;
                }
                buf.push_str(&cur);
                buf.push(';');
                cur_line += 1;
                if cur_line >= lines.len() {
                    return Err(CaseError::Syntax {
                        line: start_line,
                        column: 1,
                        message: format!("matrix mpc.{name} is not closed"),
                    });
                }
                cur = lines[cur_line].to_string();
            }
            li = cur_line + 1;
            if name == "bus" || name == "gen" || name == "branch" || name == "gencost" {
                let rows = parse_rows(&buf, &name, start_line)?;
                matrices.insert(name, Matrix { rows, line: start_line });
            }
        } else if value.starts_with('{') {
            let mut cur_line = li;
            while !lines[cur_line].contains('}') {
                cur_line += 1;
                if cur_line >= lines.len() {
                    return Err(CaseError::Syntax {
                        line: start_line,
                        column: 1,
                        message: format!("cell array mpc.{name} is not closed"),
                    });
                }
            }
            li = cur_line + 1;
        } else {
            let v = value.split(';').next().unwrap_or("").trim().to_string();
            scalars.insert(name, (v, start_line));
            li += 1;
        }
    }
    Ok((matrices, scalars))
}

fn parse_rows(body: &str, name: &str, line: usize) -> Result<Vec<Vec<f64>>, CaseError> {
    let mut rows = Vec::new();
    for raw in body.split(';') {
        let cells: Vec<&str> = raw
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .collect();
        if cells.is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(cells.len());
        for c in cells {
            let v = parse_literal(c).ok_or_else(|| CaseError::Syntax {
                line,
                column: 1,
                message: format!("non-numeric entry '{c}' in mpc.{name}"),
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    Ok(rows)
}

fn parse_literal(s: &str) -> Option<f64> {
    let numeric = s.chars().any(|c| c.is_ascii_digit())
        && s.chars().all(|c| c.is_ascii_digit() || matches!(c, '+' | '-' | '.' | 'e' | 'E'));
    s.parse::<f64>().ok().filter(|v| numeric && v.is_finite())
}

fn need<'a>(m: &'a BTreeMap<String, Matrix>, name: &str) -> Result<&'a Matrix, CaseError> {
    m.get(name)
        .ok_or_else(|| CaseError::semantic(None, format!("mpc.{name} is missing")))
}

fn check_width(m: &Matrix, name: &str, width: usize) -> Result<(), CaseError> {
    if let Some(r) = m.rows.iter().find(|r| r.len() < width) {
        return Err(CaseError::semantic(
            Some(m.line),
            format!("mpc.{name} row has {} columns, need at least {width}", r.len()),
        ));
    }
    Ok(())
}

fn integer(v: f64, what: &str) -> Result<u32, CaseError> {
    if v.fract() == 0.0 && (0.0..=u32::MAX as f64).contains(&v) {
        Ok(v as u32)
    } else {
        Err(CaseError::semantic(None, format!("{what} must be a non-negative integer, got {v}")))
    }
}

/// Angle limits beyond a quarter turn carry no information; MATPOWER also
/// uses 0/0 for "no limit".
fn angle_limits(lo_deg: Option<f64>, hi_deg: Option<f64>) -> (f64, f64) {
    match (lo_deg, hi_deg) {
        (Some(lo), Some(hi)) if !(lo == 0.0 && hi == 0.0) => (
            lo.to_radians().max(-FRAC_PI_2),
            hi.to_radians().min(FRAC_PI_2),
        ),
        _ => (-FRAC_PI_2, FRAC_PI_2),
    }
}

/// Parses a MATPOWER case, converting to per unit and radians.
pub fn parse_matpower(text: &str) -> Result<Grid, CaseError> {
    let (matrices, scalars) = assignments(text)?;
    let base = match scalars.get("baseMVA") {
        Some((v, line)) => parse_literal(v).ok_or_else(|| CaseError::Syntax {
            line: *line,
            column: 1,
            message: format!("baseMVA must be a numeric literal, found '{v}'"),
        })?,
        None => return Err(CaseError::semantic(None, "mpc.baseMVA is missing")),
    };
    if !(base > 0.0) {
        return Err(CaseError::semantic(None, "baseMVA must be positive"));
    }

    let bus_m = need(&matrices, "bus")?;
    check_width(bus_m, "bus", 13)?;
    let mut buses = Vec::new();
    for r in &bus_m.rows {
        let id = integer(r[0], "bus number")?;
        let kind = match r[1] {
            4.0 => return Err(CaseError::UnsupportedFeature(format!("isolated bus {id}"))),
            t => (t.fract() == 0.0)
                .then(|| BusType::from_code(t as i64))
                .flatten()
                .ok_or_else(|| CaseError::semantic(Some(bus_m.line), format!("bus {id} has type {t}")))?,
        };
        buses.push(Bus {
            id,
            kind,
            demand: Complex64::new(r[2] / base, r[3] / base),
            v_min: r[12],
            v_max: r[11],
            shunt: Complex64::new(r[4] / base, r[5] / base),
            vm_init: r[7],
            va_init: r[8].to_radians(),
        });
    }

    let gen_m = need(&matrices, "gen")?;
    check_width(gen_m, "gen", 10)?;
    let costs = match matrices.get("gencost") {
        None => None,
        Some(m) => {
            if m.rows.len() != gen_m.rows.len() {
                return Err(CaseError::UnsupportedFeature(
                    "gencost rows must match gen rows (reactive costs are not supported)".into(),
                ));
            }
            let mut out = Vec::new();
            for r in &m.rows {
                if r.len() < 4 {
                    return Err(CaseError::semantic(Some(m.line), "gencost row is too short"));
                }
                if r[0] == 1.0 {
                    return Err(CaseError::UnsupportedFeature("piecewise-linear generator cost".into()));
                }
                if r[0] != 2.0 {
                    return Err(CaseError::semantic(Some(m.line), format!("unknown cost model {}", r[0])));
                }
                let n = integer(r[3], "cost coefficient count")? as usize;
                if r.len() < 4 + n {
                    return Err(CaseError::semantic(Some(m.line), "gencost row has too few coefficients"));
                }
                // Stored highest power first.
                let cost: Vec<f64> = (0..n)
                    .map(|k| r[4 + n - 1 - k] * base.powi(k as i32))
                    .collect();
                out.push(cost);
            }
            Some(out)
        }
    };

    let mut generators = Vec::new();
    let mut count: BTreeMap<u32, u32> = BTreeMap::new();
    for (k, r) in gen_m.rows.iter().enumerate() {
        if r[7] <= 0.0 {
            continue;
        }
        let bus = integer(r[0], "generator bus")?;
        let idx = count.entry(bus).or_insert(0);
        *idx += 1;
        generators.push(Generator {
            bus,
            index: *idx,
            p_min: r[9] / base,
            p_max: r[8] / base,
            q_min: r[4] / base,
            q_max: r[3] / base,
            cost: costs.as_ref().map(|c| c[k].clone()).unwrap_or_else(|| vec![0.0, 1.0]),
        });
    }

    let br_m = need(&matrices, "branch")?;
    check_width(br_m, "branch", 11)?;
    let mut branches = Vec::new();
    let mut circuits: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    for r in &br_m.rows {
        let from = integer(r[0], "branch from bus")?;
        let to = integer(r[1], "branch to bus")?;
        let h = circuits.entry((from.min(to), from.max(to))).or_insert(0);
        *h += 1;
        let (angle_min, angle_max) = angle_limits(r.get(11).copied(), r.get(12).copied());
        branches.push(Branch {
            from,
            to,
            circuit: *h,
            r: r[2],
            x: r[3],
            charging: r[4],
            tap: if r[8] == 0.0 { 1.0 } else { r[8] },
            shift: r[9].to_radians(),
            s_max: if r[5] == 0.0 { f64::INFINITY } else { r[5] / base },
            i_max: None,
            angle_min,
            angle_max,
            in_service: r[10] > 0.0,
        });
    }
    check_grid(Grid::new(buses, branches, generators, base))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BUS: &str = "function mpc = two
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0 0 0 0 1 1 0 230 1 1.1 0.9;
  2 1 50 10 0 5 1 1 0 230 1 1.1 0.9;
];
mpc.gen = [
  1 0 0 30 -30 1 100 1 80 0;
];
mpc.branch = [
  1 2 0.01 0.1 0.02 0 0 0 0 0 1 -360 360;
];
mpc.gencost = [
  2 0 0 3 0.5 20 7;
];
mpc.bus_name = {
  'a';
  'b';
};
";

    #[test]
    fn converts_to_per_unit() {
        let g = parse_matpower(TWO_BUS).unwrap();
        assert_eq!(g.buses()[1].demand, Complex64::new(0.5, 0.1));
        assert_eq!(g.buses()[1].shunt, Complex64::new(0.0, 0.05));
        assert_eq!(g.generators()[0].p_max, 0.8);
        assert_eq!(g.generators()[0].cost, vec![7.0, 2000.0, 5000.0]);
        assert_eq!(g.branches()[0].s_max, f64::INFINITY);
        assert_eq!(g.branches()[0].angle_max, FRAC_PI_2);
    }

    #[test]
    fn piecewise_cost_is_unsupported() {
        let text = TWO_BUS.replace("2 0 0 3 0.5 20 7", "1 0 0 2 0 0 10 100");
        assert!(matches!(parse_matpower(&text), Err(CaseError::UnsupportedFeature(_))));
    }

    #[test]
    fn missing_gencost_defaults_to_unit_linear() {
        let text = TWO_BUS.replace("mpc.gencost = [\n  2 0 0 3 0.5 20 7;\n];", "");
        let g = parse_matpower(&text).unwrap();
        assert_eq!(g.generators()[0].cost, vec![0.0, 1.0]);
    }

    #[test]
    fn expressions_are_rejected() {
        let text = TWO_BUS.replace("0.01 0.1", "0.01 1/10");
        assert!(matches!(parse_matpower(&text), Err(CaseError::Syntax { .. })));
    }
}
