//! AMPL-style data files (`param` tables and `set` statements).

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use num_complex::Complex64;

use super::{check_grid, CaseError, INFINITY_SENTINEL};
use crate::grid::{Branch, Bus, BusId, BusType, Generator, Grid};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Assign,
    Colon,
    Semi,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut line = 1;
    let mut col = 1;
    let mut chars = text.chars().peekable();
    while let Some(ch) = chars.next() {
        let (l, c) = (line, col);
        col += 1;
        match ch {
            '\n' => {
                line += 1;
                col = 1;
            }
            '#' => {
                while let Some(&nx) = chars.peek() {
                    if nx == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            ':' => {
                if chars.peek() == Some(&'=') {
                    chars.next();
                    col += 1;
                    out.push(Token { tok: Tok::Assign, line: l, col: c });
                } else {
                    out.push(Token { tok: Tok::Colon, line: l, col: c });
                }
            }
            ';' => out.push(Token { tok: Tok::Semi, line: l, col: c }),
            c0 if c0.is_whitespace() || c0 == ',' => {}
            _ => {
                let mut word = String::from(ch);
                while let Some(&nx) = chars.peek() {
                    if nx.is_whitespace() || matches!(nx, ':' | ';' | ',' | '#') {
                        break;
                    }
                    word.push(nx);
                    chars.next();
                    col += 1;
                }
                out.push(Token { tok: Tok::Word(word), line: l, col: c });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Domain {
    Bus,
    Gen,
    Line,
    Cost,
    Scalar,
}

impl Domain {
    fn of(name: &str) -> Option<Domain> {
        Some(match name {
            "busType" | "SDR" | "SDC" | "VL" | "VU" | "Vm" | "Va" | "shR" | "shC" => Domain::Bus,
            "SLR" | "SLC" | "SUR" | "SUC" => Domain::Gen,
            "status" | "SU" | "IU" | "r" | "x" | "bb" | "tau" | "nu" | "pdLB" | "pdUB" => {
                Domain::Line
            }
            "C" => Domain::Cost,
            "maxParBranches" | "Kcard" => Domain::Scalar,
            _ => return None,
        })
    }

    fn arity(self) -> usize {
        match self {
            Domain::Bus => 1,
            Domain::Gen => 2,
            Domain::Line | Domain::Cost => 3,
            Domain::Scalar => 0,
        }
    }

    fn key_kind(self) -> &'static str {
        match self {
            Domain::Bus => "bus",
            Domain::Gen => "generator",
            Domain::Line => "branch",
            Domain::Cost => "cost",
            Domain::Scalar => "scalar",
        }
    }
}

/// One indexed parameter: index tuple to value, with the source line.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatTable {
    pub entries: BTreeMap<Vec<u32>, (f64, usize)>,
}

/// Raw contents of a `.dat` file before it is resolved into a grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatDocument {
    pub scalars: BTreeMap<String, f64>,
    pub params: BTreeMap<String, DatTable>,
    /// Bus identifiers in declaration order.
    pub buses: Vec<u32>,
    /// Branch keys `(from, to, circuit)` in declaration order.
    pub lines: Vec<[u32; 3]>,
    /// Generator indices declared for each bus.
    pub gen_sets: BTreeMap<u32, Vec<u32>>,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    last_line: usize,
    doc: DatDocument,
    bus_seen: HashSet<u32>,
    line_seen: HashSet<[u32; 3]>,
}

fn syntax(t: &Token, message: impl Into<String>) -> CaseError {
    CaseError::Syntax {
        line: t.line,
        column: t.col,
        message: message.into(),
    }
}

fn parse_index(t: &Token) -> Result<u32, CaseError> {
    match &t.tok {
        Tok::Word(w) => w
            .parse::<u32>()
            .map_err(|_| syntax(t, format!("expected a non-negative integer index, found '{w}'"))),
        _ => Err(syntax(t, "expected an integer index")),
    }
}

fn parse_number(t: &Token) -> Result<f64, CaseError> {
    let Tok::Word(w) = &t.tok else {
        return Err(syntax(t, "expected a number"));
    };
    let numeric = w.chars().any(|c| c.is_ascii_digit())
        && w.chars().all(|c| c.is_ascii_digit() || matches!(c, '+' | '-' | '.' | 'e' | 'E'));
    match w.parse::<f64>() {
        Ok(v) if numeric && v.is_finite() => Ok(v),
        _ => Err(syntax(t, format!("invalid number '{w}'"))),
    }
}

fn is_default_marker(t: &Token) -> bool {
    matches!(&t.tok, Tok::Word(w) if w == ".")
}

impl Parser {
    fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        if let Some(t) = &t {
            self.last_line = t.line;
            self.pos += 1;
        }
        t
    }

    fn eof(&self) -> CaseError {
        CaseError::Syntax {
            line: self.last_line,
            column: 0,
            message: "unexpected end of input".into(),
        }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Token, CaseError> {
        let t = self.next().ok_or_else(|| self.eof())?;
        if t.tok == want {
            Ok(t)
        } else {
            Err(syntax(&t, format!("expected {what}")))
        }
    }

    /// Collects every token up to the terminating `;`, returning it too.
    fn until_semi(&mut self) -> Result<(Vec<Token>, Token), CaseError> {
        let mut items = Vec::new();
        loop {
            let t = self.next().ok_or_else(|| self.eof())?;
            match t.tok {
                Tok::Semi => return Ok((items, t)),
                Tok::Word(_) => items.push(t),
                _ => return Err(syntax(&t, "unexpected punctuation inside data list")),
            }
        }
    }

    fn statements(&mut self) -> Result<(), CaseError> {
        while let Some(t) = self.next() {
            match &t.tok {
                Tok::Semi => {}
                Tok::Word(w) if w == "param" => self.param()?,
                Tok::Word(w) if w == "set" => self.set()?,
                Tok::Word(w) if w == "data" || w == "end" => {}
                _ => return Err(syntax(&t, "expected 'param' or 'set'")),
            }
        }
        Ok(())
    }

    fn add_bus(&mut self, id: u32, t: &Token) -> Result<(), CaseError> {
        if !self.bus_seen.insert(id) {
            return Err(CaseError::semantic(Some(t.line), format!("duplicate bus key {id}")));
        }
        self.doc.buses.push(id);
        Ok(())
    }

    fn add_line(&mut self, key: [u32; 3], t: &Token) -> Result<(), CaseError> {
        if !self.line_seen.insert(key) {
            return Err(CaseError::semantic(
                Some(t.line),
                format!("duplicate branch key ({},{},{})", key[0], key[1], key[2]),
            ));
        }
        self.doc.lines.push(key);
        Ok(())
    }

    fn store(&mut self, name: &str, key: Vec<u32>, value: f64, t: &Token) -> Result<(), CaseError> {
        let domain = Domain::of(name).expect("caller checked the parameter name");
        let table = self.doc.params.entry(name.to_string()).or_default();
        if table.entries.contains_key(&key) {
            let shown: Vec<String> = key.iter().map(|k| k.to_string()).collect();
            return Err(CaseError::semantic(
                Some(t.line),
                format!("duplicate {} key ({}) for {name}", domain.key_kind(), shown.join(",")),
            ));
        }
        table.entries.insert(key, (value, t.line));
        Ok(())
    }

    fn param(&mut self) -> Result<(), CaseError> {
        let head = self.next().ok_or_else(|| self.eof())?;
        match head.tok.clone() {
            Tok::Colon => self.table(),
            Tok::Word(name) => {
                let domain = Domain::of(&name)
                    .ok_or_else(|| CaseError::semantic(Some(head.line), format!("unknown parameter {name}")))?;
                self.expect(Tok::Assign, "':='")?;
                let (items, semi) = self.until_semi()?;
                if domain == Domain::Scalar {
                    if items.len() != 1 {
                        return Err(syntax(&semi, format!("parameter {name} takes one value")));
                    }
                    if self.doc.scalars.contains_key(&name) {
                        return Err(CaseError::semantic(Some(head.line), format!("{name} assigned twice")));
                    }
                    let v = parse_number(&items[0])?;
                    self.doc.scalars.insert(name, v);
                    return Ok(());
                }
                let width = domain.arity() + 1;
                if items.len() % width != 0 {
                    return Err(syntax(&semi, format!("entries of {name} do not form complete rows")));
                }
                for row in items.chunks(width) {
                    let key = row[..width - 1].iter().map(parse_index).collect::<Result<Vec<_>, _>>()?;
                    let cell = &row[width - 1];
                    if is_default_marker(cell) {
                        continue;
                    }
                    let v = parse_number(cell)?;
                    self.store(&name, key, v, cell)?;
                }
                Ok(())
            }
            _ => Err(syntax(&head, "expected parameter name or ':'")),
        }
    }

    fn table(&mut self) -> Result<(), CaseError> {
        let mut words = Vec::new();
        let mut set_name = None;
        loop {
            let t = self.next().ok_or_else(|| self.eof())?;
            match &t.tok {
                Tok::Word(_) => words.push(t),
                Tok::Colon if set_name.is_none() && words.len() == 1 => {
                    set_name = Some(words.pop().unwrap());
                }
                Tok::Assign => break,
                _ => return Err(syntax(&t, "malformed table header")),
            }
        }
        if words.is_empty() {
            let t = self.toks[self.pos - 1].clone();
            return Err(syntax(&t, "table header lists no columns"));
        }
        let mut columns = Vec::new();
        for w in &words {
            let Tok::Word(name) = &w.tok else { unreachable!() };
            let domain = Domain::of(name)
                .ok_or_else(|| CaseError::semantic(Some(w.line), format!("unknown parameter {name}")))?;
            if domain == Domain::Scalar {
                return Err(CaseError::semantic(Some(w.line), format!("{name} is not indexed")));
            }
            columns.push((name.clone(), domain));
        }
        let domain = columns[0].1;
        if columns.iter().any(|c| c.1 != domain) {
            return Err(CaseError::semantic(Some(words[0].line), "table mixes parameter domains"));
        }
        let set_domain = match &set_name {
            None => None,
            Some(t) => match &t.tok {
                Tok::Word(s) if s == "B" => Some(Domain::Bus),
                Tok::Word(s) if s == "L0" => Some(Domain::Line),
                Tok::Word(s) => return Err(CaseError::semantic(Some(t.line), format!("unknown set {s}"))),
                _ => unreachable!(),
            },
        };
        if set_domain.is_some_and(|d| d != domain) {
            return Err(CaseError::semantic(Some(words[0].line), "table columns do not match its set"));
        }

        let arity = domain.arity();
        let width = arity + columns.len();
        let (items, semi) = self.until_semi()?;
        if items.len() % width != 0 {
            return Err(syntax(&semi, "table rows have the wrong number of entries"));
        }
        for row in items.chunks(width) {
            let key = row[..arity].iter().map(parse_index).collect::<Result<Vec<_>, _>>()?;
            match set_domain {
                Some(Domain::Bus) => self.add_bus(key[0], &row[0])?,
                Some(Domain::Line) => self.add_line([key[0], key[1], key[2]], &row[0])?,
                _ => {}
            }
            for ((name, _), cell) in columns.iter().zip(&row[arity..]) {
                if is_default_marker(cell) {
                    continue;
                }
                let v = parse_number(cell)?;
                self.store(name, key.clone(), v, cell)?;
            }
        }
        Ok(())
    }

    fn set(&mut self) -> Result<(), CaseError> {
        let head = self.next().ok_or_else(|| self.eof())?;
        let Tok::Word(name) = head.tok.clone() else {
            return Err(syntax(&head, "expected set name"));
        };
        self.expect(Tok::Assign, "':='")?;
        let (items, semi) = self.until_semi()?;
        if name == "B" {
            for t in &items {
                let id = parse_index(t)?;
                self.add_bus(id, t)?;
            }
        } else if name == "L0" {
            if items.len() % 3 != 0 {
                return Err(syntax(&semi, "L0 members must be triples"));
            }
            for row in items.chunks(3) {
                let key = [parse_index(&row[0])?, parse_index(&row[1])?, parse_index(&row[2])?];
                self.add_line(key, &row[0])?;
            }
        } else if let Some(inner) = name.strip_prefix("G[").and_then(|s| s.strip_suffix(']')) {
            let bus = inner
                .trim()
                .parse::<u32>()
                .map_err(|_| syntax(&head, format!("bad generator set index in {name}")))?;
            if self.doc.gen_sets.contains_key(&bus) {
                return Err(CaseError::semantic(Some(head.line), format!("set {name} declared twice")));
            }
            let mut members = Vec::new();
            for t in &items {
                let g = parse_index(t)?;
                if members.contains(&g) {
                    return Err(CaseError::semantic(Some(t.line), format!("duplicate generator key ({bus},{g})")));
                }
                members.push(g);
            }
            self.doc.gen_sets.insert(bus, members);
        } else {
            return Err(CaseError::semantic(Some(head.line), format!("unknown set {name}")));
        }
        Ok(())
    }
}

/// Tokenizes and parses a `.dat` file into raw tables.
pub fn parse_dat_document(text: &str) -> Result<DatDocument, CaseError> {
    let mut p = Parser {
        toks: tokenize(text),
        pos: 0,
        last_line: 1,
        doc: DatDocument::default(),
        bus_seen: HashSet::new(),
        line_seen: HashSet::new(),
    };
    p.statements()?;
    Ok(p.doc)
}

/// Parses a `.dat` case into a validated grid.
pub fn parse_dat(text: &str) -> Result<Grid, CaseError> {
    resolve(&parse_dat_document(text)?)
}

fn bound(v: f64) -> f64 {
    if v >= INFINITY_SENTINEL {
        f64::INFINITY
    } else if v <= -INFINITY_SENTINEL {
        f64::NEG_INFINITY
    } else {
        v
    }
}

fn small_integer(doc: &DatDocument, name: &str, default: u32, max: u32) -> Result<u32, CaseError> {
    match doc.scalars.get(name) {
        None => Ok(default),
        Some(&v) if v.fract() == 0.0 && (0.0..=max as f64).contains(&v) => Ok(v as u32),
        Some(v) => Err(CaseError::semantic(None, format!("{name} = {v} is out of range"))),
    }
}

fn resolve(doc: &DatDocument) -> Result<Grid, CaseError> {
    if doc.buses.is_empty() {
        return Err(CaseError::semantic(None, "bus set B is empty"));
    }
    let bus_ids: HashSet<u32> = doc.buses.iter().copied().collect();
    let line_ids: HashSet<[u32; 3]> = doc.lines.iter().copied().collect();
    let kcard = small_integer(doc, "Kcard", 2, 16)?;
    let max_par = small_integer(doc, "maxParBranches", u32::MAX, u32::MAX)?;

    for (name, table) in &doc.params {
        let domain = Domain::of(name).expect("only known names are stored");
        for (key, &(_, line)) in &table.entries {
            let ok = match domain {
                Domain::Bus => bus_ids.contains(&key[0]),
                Domain::Line => line_ids.contains(&[key[0], key[1], key[2]]),
                Domain::Gen | Domain::Cost => doc
                    .gen_sets
                    .get(&key[0])
                    .is_some_and(|g| g.contains(&key[1])),
                Domain::Scalar => true,
            };
            if !ok {
                let shown: Vec<String> = key.iter().map(|k| k.to_string()).collect();
                return Err(CaseError::semantic(
                    Some(line),
                    format!("{name} refers to undeclared {} ({})", domain.key_kind(), shown.join(",")),
                ));
            }
            if domain == Domain::Cost && key[2] > kcard {
                return Err(CaseError::semantic(Some(line), format!("cost power {} exceeds Kcard", key[2])));
            }
        }
    }
    for bus in doc.gen_sets.keys() {
        if !bus_ids.contains(bus) {
            return Err(CaseError::semantic(None, format!("generator set G[{bus}] names an undeclared bus")));
        }
    }

    let get = |name: &str, key: &[u32], default: f64| -> f64 {
        doc.params
            .get(name)
            .and_then(|t| t.entries.get(key))
            .map(|e| e.0)
            .unwrap_or(default)
    };

    let mut buses = Vec::with_capacity(doc.buses.len());
    for &id in &doc.buses {
        let k = [id];
        let code = get("busType", &k, 1.0);
        let kind = (code.fract() == 0.0)
            .then(|| BusType::from_code(code as i64))
            .flatten()
            .ok_or_else(|| CaseError::semantic(None, format!("bus {id} has invalid busType {code}")))?;
        buses.push(Bus {
            id: id as BusId,
            kind,
            demand: Complex64::new(get("SDR", &k, 0.0), get("SDC", &k, 0.0)),
            v_min: bound(get("VL", &k, 0.0)),
            v_max: bound(get("VU", &k, f64::INFINITY)),
            shunt: Complex64::new(get("shR", &k, 0.0), get("shC", &k, 0.0)),
            vm_init: get("Vm", &k, 1.0),
            va_init: get("Va", &k, 0.0),
        });
    }

    let mut branches = Vec::with_capacity(doc.lines.len());
    for &[f, t, h] in &doc.lines {
        if h > max_par {
            return Err(CaseError::semantic(
                None,
                format!("branch ({f},{t},{h}) exceeds maxParBranches"),
            ));
        }
        let k = [f, t, h];
        let status = get("status", &k, 1.0);
        if status != 0.0 && status != 1.0 {
            return Err(CaseError::semantic(None, format!("branch ({f},{t},{h}) has status {status}")));
        }
        let i_max = doc
            .params
            .get("IU")
            .and_then(|tb| tb.entries.get(&k[..]))
            .map(|e| bound(e.0))
            .filter(|v| v.is_finite());
        branches.push(Branch {
            from: f,
            to: t,
            circuit: h,
            r: get("r", &k, 0.0),
            x: get("x", &k, 0.0),
            charging: get("bb", &k, 0.0),
            tap: get("tau", &k, 1.0),
            shift: get("nu", &k, 0.0),
            s_max: bound(get("SU", &k, f64::INFINITY)),
            i_max,
            angle_min: bound(get("pdLB", &k, -std::f64::consts::PI)),
            angle_max: bound(get("pdUB", &k, std::f64::consts::PI)),
            in_service: status == 1.0,
        });
    }

    let mut generators = Vec::new();
    for (&bus, members) in &doc.gen_sets {
        for &g in members {
            let k = [bus, g];
            let cost = (0..=kcard)
                .map(|p| get("C", &[bus, g, p], if p == 1 { 1.0 } else { 0.0 }))
                .collect();
            generators.push(Generator {
                bus,
                index: g,
                p_min: bound(get("SLR", &k, f64::NEG_INFINITY)),
                p_max: bound(get("SUR", &k, f64::INFINITY)),
                q_min: bound(get("SLC", &k, f64::NEG_INFINITY)),
                q_max: bound(get("SUC", &k, f64::INFINITY)),
                cost,
            });
        }
    }
    check_grid(Grid::new(buses, branches, generators, 100.0))
}

/// Formats a number so that it parses back to the identical value.
fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "1e30".into()
    } else if v == f64::NEG_INFINITY {
        "-1e30".into()
    } else {
        format!("{v:?}")
    }
}

/// Writes a grid as a `.dat` file that [`parse_dat`] reads back unchanged.
pub fn write_dat(grid: &Grid) -> String {
    let mut s = String::new();
    let max_par = grid.branches().iter().map(|b| b.circuit).max().unwrap_or(1).max(1);
    let _ = writeln!(s, "param maxParBranches := {max_par} ;\n");

    let _ = writeln!(s, "param : B : busType SDR SDC VL VU Vm Va shR shC :=");
    for b in grid.buses() {
        let _ = writeln!(
            s,
            "  {} {} {} {} {} {} {} {} {} {}",
            b.id,
            b.kind.code(),
            num(b.demand.re),
            num(b.demand.im),
            num(b.v_min),
            num(b.v_max),
            num(b.vm_init),
            num(b.va_init),
            num(b.shunt.re),
            num(b.shunt.im)
        );
    }
    let _ = writeln!(s, ";\n");

    let mut by_bus: BTreeMap<usize, Vec<&Generator>> = BTreeMap::new();
    for g in grid.generators() {
        let pos = grid.bus_position(g.bus).unwrap_or(usize::MAX);
        by_bus.entry(pos).or_default().push(g);
    }
    for gens in by_bus.values() {
        let idx: Vec<String> = gens.iter().map(|g| g.index.to_string()).collect();
        let _ = writeln!(s, "set G[{}] := {} ;", gens[0].bus, idx.join(" "));
    }
    if !grid.generators().is_empty() {
        let _ = writeln!(s, "\nparam : SLR SLC SUR SUC :=");
        for g in grid.generators() {
            let _ = writeln!(
                s,
                "  {} {} {} {} {} {}",
                g.bus,
                g.index,
                num(g.p_min),
                num(g.q_min),
                num(g.p_max),
                num(g.q_max)
            );
        }
        let _ = writeln!(s, ";\n");
    }

    let with_current = grid.branches().iter().any(|b| b.i_max.is_some());
    let _ = writeln!(
        s,
        "param : L0 : status SU r x bb tau nu pdLB pdUB{} :=",
        if with_current { " IU" } else { "" }
    );
    for b in grid.branches() {
        let _ = write!(
            s,
            "  {} {} {} {} {} {} {} {} {} {} {} {}",
            b.from,
            b.to,
            b.circuit,
            u8::from(b.in_service),
            num(b.s_max),
            num(b.r),
            num(b.x),
            num(b.charging),
            num(b.tap),
            num(b.shift),
            num(b.angle_min),
            num(b.angle_max)
        );
        if with_current {
            let _ = write!(s, " {}", b.i_max.map(num).unwrap_or_else(|| ".".into()));
        }
        s.push('\n');
    }
    let _ = writeln!(s, ";\n");

    let kcard = grid.generators().iter().map(|g| g.cost.len().saturating_sub(1)).max().unwrap_or(2);
    let _ = writeln!(s, "param Kcard := {kcard} ;\n");
    if !grid.generators().is_empty() {
        let _ = writeln!(s, "param C :=");
        for g in grid.generators() {
            for p in 0..=kcard {
                let c = g.cost.get(p).copied().unwrap_or(0.0);
                let _ = writeln!(s, "  {} {} {} {}", g.bus, g.index, p, num(c));
            }
        }
        let _ = writeln!(s, ";");
    }
    s
}
