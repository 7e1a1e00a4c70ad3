use serde_json::{json, Map, Value};

use super::ExportError;
use crate::ir::{FormKind, Formulation, Point, Poly, PsdBlock, Sense, SocConstraint, TrigBinding, VarName};

pub const JSON_SCHEMA_VERSION: u64 = 1;

/// Infinite bounds become `null`.
fn bound(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

/// `[[coef, [var, ..]], ..]` in monomial order.
fn poly(p: &Poly) -> Value {
    Value::Array(p.terms().map(|(m, c)| json!([c, m])).collect())
}

fn sense(s: Sense) -> &'static str {
    match s {
        Sense::Eq => "eq",
        Sense::Le => "le",
        Sense::Ge => "ge",
    }
}

/// Canonical JSON text of a formulation: object keys sorted, terms in
/// monomial order, constraints grouped poly, soc, psd in build order.
pub fn export_json(f: &Formulation) -> String {
    let variables: Vec<Value> = f
        .variables()
        .iter()
        .map(|v| json!({"name": v.name.to_string(), "lb": bound(v.lb), "ub": bound(v.ub), "tag": v.tag}))
        .collect();
    let mut constraints: Vec<Value> = f
        .constraints()
        .iter()
        .map(|c| {
            json!({"kind": "poly", "tag": c.tag, "at": c.at, "sense": sense(c.sense), "rhs": c.rhs, "terms": poly(&c.poly)})
        })
        .collect();
    constraints.extend(f.cones().iter().map(|c| {
        json!({
            "kind": "soc",
            "tag": c.tag,
            "at": c.at,
            "members": c.members.iter().map(poly).collect::<Vec<_>>(),
            "t": poly(&c.t),
            "w": c.w.as_ref().map(poly),
        })
    }));
    constraints.extend(f.blocks().iter().map(|b| {
        json!({
            "kind": "psd",
            "tag": b.tag,
            "at": b.at,
            "dim": b.dim,
            "negative": b.negative,
            "entries": b.entries.iter().map(poly).collect::<Vec<_>>(),
        })
    }));
    let trig: Vec<Value> = f
        .trig_bindings()
        .iter()
        .map(|t| json!({"cos": t.cos, "sin": t.sin, "from_angle": t.from_angle, "to_angle": t.to_angle}))
        .collect();
    let doc = json!({
        "schema_version": JSON_SCHEMA_VERSION,
        "metadata": {"kind": f.kind.as_str(), "grid_hash": f.grid_hash},
        "variables": variables,
        "trig_bindings": trig,
        "objective": poly(f.objective()),
        "constraints": constraints,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("JSON values always serialize");
    s.push('\n');
    s
}

fn schema(msg: impl Into<String>) -> ExportError {
    ExportError::Schema(msg.into())
}

fn field<'a>(o: &'a Map<String, Value>, key: &str) -> Result<&'a Value, ExportError> {
    o.get(key).ok_or_else(|| schema(format!("missing field '{key}'")))
}

fn obj(v: &Value) -> Result<&Map<String, Value>, ExportError> {
    v.as_object().ok_or_else(|| schema("expected an object"))
}

fn arr(v: &Value) -> Result<&Vec<Value>, ExportError> {
    v.as_array().ok_or_else(|| schema("expected an array"))
}

fn num(v: &Value) -> Result<f64, ExportError> {
    v.as_f64().ok_or_else(|| schema("expected a number"))
}

fn text(v: &Value) -> Result<&str, ExportError> {
    v.as_str().ok_or_else(|| schema("expected a string"))
}

fn index(v: &Value, n: usize) -> Result<u32, ExportError> {
    match v.as_u64() {
        Some(i) if (i as usize) < n => Ok(i as u32),
        _ => Err(schema(format!("bad variable index {v}"))),
    }
}

fn indices(v: &Value) -> Result<Vec<u32>, ExportError> {
    arr(v)?
        .iter()
        .map(|x| x.as_u64().and_then(|i| u32::try_from(i).ok()).ok_or_else(|| schema("bad location key")))
        .collect()
}

fn read_poly(v: &Value, n: usize) -> Result<Poly, ExportError> {
    let mut p = Poly::zero();
    for term in arr(v)? {
        let t = arr(term)?;
        if t.len() != 2 {
            return Err(schema("term must be [coef, [vars]]"));
        }
        let vars = arr(&t[1])?.iter().map(|x| index(x, n)).collect::<Result<Vec<_>, _>>()?;
        p.add_term(num(&t[0])?, &vars);
    }
    Ok(p)
}

fn read_bound(v: &Value, infinite: f64) -> Result<f64, ExportError> {
    if v.is_null() {
        Ok(infinite)
    } else {
        num(v)
    }
}

/// Reads a document written by [`export_json`].
pub fn import_json(s: &str) -> Result<Formulation, ExportError> {
    let doc: Value = serde_json::from_str(s).map_err(|e| schema(e.to_string()))?;
    let doc = obj(&doc)?;
    let version = field(doc, "schema_version")?.as_u64();
    if version != Some(JSON_SCHEMA_VERSION) {
        return Err(schema(format!("unsupported schema version {version:?}")));
    }
    let meta = obj(field(doc, "metadata")?)?;
    let kind: FormKind = text(field(meta, "kind")?)?.parse().map_err(schema)?;
    let mut f = Formulation::new(kind, text(field(meta, "grid_hash")?)?);

    for v in arr(field(doc, "variables")?)? {
        let v = obj(v)?;
        let name: VarName = text(field(v, "name")?)?.parse()?;
        let tag = match field(v, "tag")? {
            Value::Null => None,
            t => Some(text(t)?),
        };
        f.add_var(
            name,
            read_bound(field(v, "lb")?, f64::NEG_INFINITY)?,
            read_bound(field(v, "ub")?, f64::INFINITY)?,
            tag,
        )?;
    }
    let n = f.variables().len();
    for t in arr(field(doc, "trig_bindings")?)? {
        let t = obj(t)?;
        f.add_trig_binding(TrigBinding {
            cos: index(field(t, "cos")?, n)?,
            sin: index(field(t, "sin")?, n)?,
            from_angle: index(field(t, "from_angle")?, n)?,
            to_angle: index(field(t, "to_angle")?, n)?,
        });
    }
    f.set_objective(read_poly(field(doc, "objective")?, n)?);

    for c in arr(field(doc, "constraints")?)? {
        let c = obj(c)?;
        let tag = text(field(c, "tag")?)?.to_string();
        let at = indices(field(c, "at")?)?;
        match text(field(c, "kind")?)? {
            "poly" => {
                let sense = match text(field(c, "sense")?)? {
                    "eq" => Sense::Eq,
                    "le" => Sense::Le,
                    "ge" => Sense::Ge,
                    other => return Err(schema(format!("unknown sense '{other}'"))),
                };
                let p = read_poly(field(c, "terms")?, n)?;
                f.add_constraint(&tag, &at, p, sense, num(field(c, "rhs")?)?)?;
            }
            "soc" => {
                let members = arr(field(c, "members")?)?.iter().map(|m| read_poly(m, n)).collect::<Result<_, _>>()?;
                let w = match field(c, "w")? {
                    Value::Null => None,
                    w => Some(read_poly(w, n)?),
                };
                f.add_cone(SocConstraint { tag, at, members, t: read_poly(field(c, "t")?, n)?, w })?;
            }
            "psd" => {
                let dim = field(c, "dim")?.as_u64().ok_or_else(|| schema("bad block dimension"))? as usize;
                let negative = field(c, "negative")?.as_bool().ok_or_else(|| schema("expected a boolean"))?;
                let entries = arr(field(c, "entries")?)?.iter().map(|m| read_poly(m, n)).collect::<Result<_, _>>()?;
                f.add_block(PsdBlock { tag, at, dim, entries, negative })?;
            }
            other => return Err(schema(format!("unknown constraint kind '{other}'"))),
        }
    }
    Ok(f)
}

/// Point as a flat JSON object from variable names to values.
pub fn export_point(p: &Point) -> String {
    let map: Map<String, Value> = p.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    let mut s = serde_json::to_string_pretty(&Value::Object(map)).expect("JSON values always serialize");
    s.push('\n');
    s
}

/// Reads a point file for `f`; names the formulation does not declare are
/// rejected.
pub fn import_point(s: &str, f: &Formulation) -> Result<Point, ExportError> {
    let doc: Value = serde_json::from_str(s).map_err(|e| schema(e.to_string()))?;
    let mut p = Point::new();
    for (k, v) in obj(&doc)? {
        let name: VarName = k.parse()?;
        if f.var(&name).is_none() {
            return Err(schema(format!("unknown variable {k}")));
        }
        p.set(name, num(v)?);
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::VarKind;

    #[test]
    fn empty_formulation() {
        let f = Formulation::new(FormKind::Jabr, "abc");
        let s = export_json(&f);
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["constraints"], json!([]));
        assert_eq!(v["variables"], json!([]));
        assert_eq!(import_json(&s).unwrap(), f);
    }

    #[test]
    fn infinite_bounds_and_cones_survive() {
        let mut f = Formulation::new(FormKind::SocpX, "h");
        let x = f.add_var(VarName::whole(VarKind::V2, &[1]), 0.5, f64::INFINITY, Some("b")).unwrap();
        let y = f.add_var(VarName::re(VarKind::V, &[1]), f64::NEG_INFINITY, f64::INFINITY, None).unwrap();
        f.set_objective(Poly::term(0.1, &[x]) + Poly::constant(3.0));
        f.add_constraint("q", &[1, 2], Poly::term(2.0, &[x, y]), Sense::Le, 1.0 / 3.0).unwrap();
        f.add_cone(SocConstraint { tag: "k".into(), at: vec![1], members: vec![Poly::var(y)], t: Poly::var(x), w: Some(Poly::constant(1.0)) })
            .unwrap();
        let s = export_json(&f);
        let g = import_json(&s).unwrap();
        assert_eq!(g, f);
        assert_eq!(export_json(&g), s);
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(import_json("{}").is_err());
        assert!(import_json("[1]").is_err());
        let doc = r#"{"schema_version":1,"metadata":{"kind":"jabr","grid_hash":""},"variables":[],
            "trig_bindings":[],"objective":[[1.0,[0]]],"constraints":[]}"#;
        assert!(matches!(import_json(doc), Err(ExportError::Schema(_))));
    }

    #[test]
    fn point_files() {
        let mut f = Formulation::new(FormKind::Siv, "");
        f.add_var(VarName::re(VarKind::V, &[3]), 0.0, 1.0, None).unwrap();
        let mut p = Point::new();
        p.set(VarName::re(VarKind::V, &[3]), 0.25);
        let s = export_point(&p);
        assert_eq!(import_point(&s, &f).unwrap(), p);
        assert!(import_point(r#"{"V[4].re": 1.0}"#, &f).is_err());
        assert!(import_point(r#"{"bogus": 1.0}"#, &f).is_err());
    }
}
