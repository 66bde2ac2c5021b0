//! CPLEX LP text format: writer and a reader for the subset the writer emits.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use super::{Constraint, IndexRegistry, LinearModel, Sense, VarKind, Variable};
use crate::error::{Error, Result};

const WRAP: usize = 250;

fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

struct Wrapper<'a> {
    out: &'a mut String,
    line_len: usize,
}

impl Wrapper<'_> {
    fn push(&mut self, token: &str) {
        if self.line_len + token.len() + 1 > WRAP {
            self.out.push_str("\n   ");
            self.line_len = 3;
        }
        self.out.push(' ');
        self.out.push_str(token);
        self.line_len += token.len() + 1;
    }

    fn terms(&mut self, model: &LinearModel, terms: &[(usize, f64)]) {
        for &(col, coef) in terms {
            let sign = if coef < 0.0 { "-" } else { "+" };
            self.push(&format!("{sign} {} {}", fmt_num(coef.abs()), model.variables[col].name));
        }
    }
}

/// Renders `model` as LP text.
pub fn export_lp(model: &LinearModel) -> String {
    let mut out = String::from("\\ pod dispatch model\nMinimize\n");
    out.push_str(" obj:");
    let mut w = Wrapper { line_len: 5, out: &mut out };
    if model.objective.is_empty() && model.objective_constant == 0.0 {
        match model.variables.first() {
            Some(v) => w.push(&format!("0 {}", v.name)),
            None => w.push("0"),
        }
    } else {
        w.terms(model, &model.objective);
        if model.objective_constant != 0.0 {
            let c = model.objective_constant;
            w.push(&format!("{} {}", if c < 0.0 { "-" } else { "+" }, fmt_num(c.abs())));
        }
    }
    out.push_str("\nSubject To\n");
    for row in &model.constraints {
        let _ = write!(out, " {}:", row.name);
        let mut w = Wrapper { line_len: row.name.len() + 2, out: &mut out };
        w.terms(model, &row.terms);
        w.push(&format!("{} {}", row.sense.symbol(), fmt_num(row.rhs)));
        out.push('\n');
    }
    out.push_str("Bounds\n");
    for v in model.variables.iter().filter(|v| v.kind != VarKind::Binary) {
        let line = if v.lower == v.upper {
            format!(" {} = {}", v.name, fmt_num(v.lower))
        } else if v.lower == f64::NEG_INFINITY && v.upper == f64::INFINITY {
            format!(" {} free", v.name)
        } else if v.upper == f64::INFINITY {
            format!(" {} >= {}", v.name, fmt_num(v.lower))
        } else {
            format!(" {} <= {} <= {}", fmt_num(v.lower), v.name, fmt_num(v.upper))
        };
        out.push_str(&line);
        out.push('\n');
    }
    for (header, kind) in [("Generals", VarKind::Integer), ("Binaries", VarKind::Binary)] {
        let names: Vec<&str> = model.variables.iter().filter(|v| v.kind == kind).map(|v| v.name.as_str()).collect();
        if names.is_empty() {
            continue;
        }
        out.push_str(header);
        out.push('\n');
        let mut w = Wrapper { line_len: 0, out: &mut out };
        for n in names {
            w.push(n);
        }
        out.push('\n');
    }
    out.push_str("End\n");
    out
}

pub fn write_lp(model: &LinearModel, path: &Path) -> Result<()> {
    std::fs::write(path, export_lp(model)).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Objective,
    Rows,
    Bounds,
    Generals,
    Binaries,
    End,
}

fn section_of(line: &str) -> Option<Section> {
    let lower = line.trim().to_ascii_lowercase();
    Some(match lower.as_str() {
        "minimize" | "minimum" | "min" => Section::Objective,
        "subject to" | "such that" | "st" | "s.t." => Section::Rows,
        "bounds" | "bound" => Section::Bounds,
        "generals" | "general" | "gen" => Section::Generals,
        "binaries" | "binary" | "bin" => Section::Binaries,
        "end" => Section::End,
        _ => return None,
    })
}

fn parse_value(tok: &str) -> Option<f64> {
    match tok.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "+infinity" => Some(f64::INFINITY),
        "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
        _ => tok
            .parse::<f64>()
            .ok()
            .filter(|_| tok.starts_with(|c: char| c.is_ascii_digit() || c == '.' || c == '-' || c == '+')),
    }
}

fn parse_sense(tok: &str) -> Option<Sense> {
    match tok {
        "<=" | "=<" | "<" => Some(Sense::Le),
        ">=" | "=>" | ">" => Some(Sense::Ge),
        "=" => Some(Sense::Eq),
        _ => None,
    }
}

struct Builder {
    model: LinearModel,
    index: HashMap<String, usize>,
}

impl Builder {
    fn col(&mut self, name: &str) -> usize {
        if let Some(&c) = self.index.get(name) {
            return c;
        }
        let c = self.model.variables.len();
        self.model.variables.push(Variable {
            name: name.to_string(),
            kind: VarKind::Continuous,
            lower: 0.0,
            upper: f64::INFINITY,
        });
        self.index.insert(name.to_string(), c);
        c
    }
}

/// Linear expression tokens into `(terms, constant)`.
fn parse_terms(b: &mut Builder, tokens: &[String], line: usize) -> Result<(Vec<(usize, f64)>, f64)> {
    let err = |m: String| Error::LpParse { line, message: m };
    let mut terms = Vec::new();
    let mut constant = 0.0;
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    for tok in tokens {
        match tok.as_str() {
            "+" => {
                if coef.is_some() {
                    constant += sign * coef.take().unwrap();
                }
                sign = 1.0;
            }
            "-" => {
                if coef.is_some() {
                    constant += sign * coef.take().unwrap();
                }
                sign = -1.0;
            }
            t => {
                if let Some(v) = parse_value(t) {
                    if coef.is_some() {
                        return Err(err(format!("two numbers in a row near '{t}'")));
                    }
                    coef = Some(v);
                } else if t.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_') {
                    let c = b.col(t);
                    terms.push((c, sign * coef.take().unwrap_or(1.0)));
                    sign = 1.0;
                } else {
                    return Err(err(format!("unexpected token '{t}'")));
                }
            }
        }
    }
    if let Some(v) = coef {
        constant += sign * v;
    }
    Ok((terms, constant))
}

fn tokenize(text: &str) -> Vec<String> {
    let mut spaced = String::with_capacity(text.len() + 16);
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '<' | '>' | '=' => {
                spaced.push(' ');
                spaced.push(c);
                if i + 1 < chars.len() && matches!(chars[i + 1], '=' | '<' | '>') {
                    spaced.push(chars[i + 1]);
                    i += 1;
                }
                spaced.push(' ');
            }
            '+' | '-' => {
                let prev = if i > 0 { chars[i - 1] } else { ' ' };
                // keep exponent signs attached
                if (prev == 'e' || prev == 'E') && i >= 2 && (chars[i - 2].is_ascii_digit() || chars[i - 2] == '.') {
                    spaced.push(c);
                } else {
                    spaced.push(' ');
                    spaced.push(c);
                    spaced.push(' ');
                }
            }
            _ => spaced.push(c),
        }
        i += 1;
    }
    spaced.split_whitespace().map(str::to_string).collect()
}

/// Parses LP text written by [`export_lp`] (and simple hand-written models in
/// the same subset). The registry of the result is empty.
pub fn parse_lp(text: &str) -> Result<LinearModel> {
    let mut b = Builder {
        model: LinearModel { registry: IndexRegistry::default(), ..Default::default() },
        index: HashMap::new(),
    };
    let mut section = Section::None;
    let mut pending: Vec<String> = Vec::new();
    let mut pending_line = 0;
    let mut bounds: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    let mut objective_tokens: Vec<String> = Vec::new();
    let mut objective_line = 0;

    let flush_row = |b: &mut Builder, tokens: &mut Vec<String>, line: usize| -> Result<()> {
        if tokens.is_empty() {
            return Ok(());
        }
        let err = |m: &str| Error::LpParse { line, message: m.to_string() };
        let (name, body) = match tokens[0].strip_suffix(':') {
            Some(n) => (n.to_string(), &tokens[1..]),
            None => (format!("r{}", b.model.constraints.len()), &tokens[..]),
        };
        let pos = body.iter().position(|t| parse_sense(t).is_some()).ok_or_else(|| err("row without sense"))?;
        let sense = parse_sense(&body[pos]).unwrap();
        let (terms, constant) = parse_terms(b, &body[..pos], line)?;
        let (rhs_terms, rhs_const) = parse_terms(b, &body[pos + 1..], line)?;
        if !rhs_terms.is_empty() {
            return Err(err("variables on the right-hand side"));
        }
        b.model.constraints.push(Constraint { name, terms, sense, rhs: rhs_const - constant });
        tokens.clear();
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('\\').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        if let Some(next) = section_of(line) {
            if section == Section::Rows {
                flush_row(&mut b, &mut pending, pending_line)?;
            }
            if next == Section::Rows && section != Section::Objective {
                return Err(Error::LpParse { line: line_no, message: "constraints before objective".into() });
            }
            section = next;
            continue;
        }
        let tokens = tokenize(line);
        match section {
            Section::None => {
                return Err(Error::LpParse { line: line_no, message: "content before objective section".into() })
            }
            Section::End => return Err(Error::LpParse { line: line_no, message: "content after End".into() }),
            Section::Objective => {
                if objective_tokens.is_empty() {
                    objective_line = line_no;
                }
                objective_tokens.extend(tokens);
            }
            Section::Rows => {
                // a new named row starts when the first token ends in ':'
                if tokens[0].ends_with(':') && !pending.is_empty() {
                    flush_row(&mut b, &mut pending, pending_line)?;
                }
                if pending.is_empty() {
                    pending_line = line_no;
                }
                pending.extend(tokens);
            }
            Section::Bounds => {
                let err = |m: &str| Error::LpParse { line: line_no, message: m.to_string() };
                let t: Vec<&str> = tokens.iter().map(String::as_str).collect();
                match t.as_slice() {
                    [name, free] if free.eq_ignore_ascii_case("free") => {
                        let c = b.col(name);
                        bounds.insert(c, (f64::NEG_INFINITY, f64::INFINITY));
                    }
                    [lo, s1, name, s2, hi] => {
                        let (lo, hi) = (parse_value(lo), parse_value(hi));
                        if parse_sense(s1) != Some(Sense::Le) || parse_sense(s2) != Some(Sense::Le) {
                            return Err(err("double bound must use <="));
                        }
                        let c = b.col(name);
                        bounds.insert(c, (lo.ok_or_else(|| err("bad lower"))?, hi.ok_or_else(|| err("bad upper"))?));
                    }
                    [name, s, v] if parse_value(v).is_some() => {
                        let v = parse_value(v).unwrap();
                        let c = b.col(name);
                        let cur = bounds.get(&c).copied().unwrap_or((0.0, f64::INFINITY));
                        let new = match parse_sense(s).ok_or_else(|| err("bad sense"))? {
                            Sense::Le => (cur.0, v),
                            Sense::Ge => (v, cur.1),
                            Sense::Eq => (v, v),
                        };
                        bounds.insert(c, new);
                    }
                    [v, s, name] if parse_value(v).is_some() => {
                        let v = parse_value(v).unwrap();
                        let c = b.col(name);
                        let cur = bounds.get(&c).copied().unwrap_or((0.0, f64::INFINITY));
                        let new = match parse_sense(s).ok_or_else(|| err("bad sense"))? {
                            Sense::Le => (v, cur.1),
                            Sense::Ge => (cur.0, v),
                            Sense::Eq => (v, v),
                        };
                        bounds.insert(c, new);
                    }
                    _ => return Err(err("unrecognized bound")),
                }
            }
            Section::Generals | Section::Binaries => {
                for name in tokens {
                    let c = b.col(&name);
                    let v = &mut b.model.variables[c];
                    if section == Section::Binaries {
                        v.kind = VarKind::Binary;
                        v.lower = 0.0;
                        v.upper = 1.0;
                    } else {
                        v.kind = VarKind::Integer;
                    }
                }
            }
        }
    }
    if section != Section::End {
        return Err(Error::LpParse { line: text.lines().count(), message: "missing End".into() });
    }

    // objective parsed after rows so that column order follows the rows
    let mut obj = objective_tokens;
    if let Some(first) = obj.first() {
        if first.ends_with(':') {
            obj.remove(0);
        }
    }
    let (terms, constant) = parse_terms(&mut b, &obj, objective_line)?;
    let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
    for (c, a) in terms {
        *merged.entry(c).or_insert(0.0) += a;
    }
    b.model.objective = merged.into_iter().collect();
    b.model.objective_constant = constant;
    for (c, (lo, hi)) in bounds {
        let v = &mut b.model.variables[c];
        if v.kind != VarKind::Binary {
            v.lower = lo;
            v.upper = hi;
        }
    }
    Ok(b.model)
}
