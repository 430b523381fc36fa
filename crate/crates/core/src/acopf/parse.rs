//! MATPOWER case files: `mpc.<field> = value;` statements where the value is
//! a number, a quoted string, a numeric matrix `[ ... ]` or a cell array
//! `{ ... }` (skipped). `%` starts a comment, `...` continues a line.

use std::collections::HashMap;
use std::f64::consts::PI;

use super::{Branch, Bus, BusType, CaseError, GenCost, Generator, NetworkData};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Str(String),
    Eq,
    Semi,
    Comma,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Newline,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn perr(line: usize, col: usize, message: impl Into<String>) -> CaseError {
    CaseError::Parse { line, col, message: message.into() }
}

fn tokenize(text: &str) -> Result<Vec<Token>, CaseError> {
    let mut out = Vec::new();
    for (li, raw) in text.lines().enumerate() {
        let line = li + 1;
        let chars: Vec<char> = raw.chars().collect();
        let mut i = 0;
        let mut continued = false;
        while i < chars.len() {
            let c = chars[i];
            let col = i + 1;
            let push = |out: &mut Vec<Token>, tok| out.push(Token { tok, line, col });
            match c {
                '%' | '#' => break,
                ' ' | '\t' | '\r' => i += 1,
                '=' => {
                    push(&mut out, Tok::Eq);
                    i += 1;
                }
                ';' => {
                    push(&mut out, Tok::Semi);
                    i += 1;
                }
                ',' => {
                    push(&mut out, Tok::Comma);
                    i += 1;
                }
                '[' => {
                    push(&mut out, Tok::LBracket);
                    i += 1;
                }
                ']' => {
                    push(&mut out, Tok::RBracket);
                    i += 1;
                }
                '{' => {
                    push(&mut out, Tok::LBrace);
                    i += 1;
                }
                '}' => {
                    push(&mut out, Tok::RBrace);
                    i += 1;
                }
                '\'' | '"' => {
                    let end = chars[i + 1..]
                        .iter()
                        .position(|&d| d == c)
                        .ok_or_else(|| perr(line, col, "unterminated string"))?;
                    let s: String = chars[i + 1..i + 1 + end].iter().collect();
                    push(&mut out, Tok::Str(s));
                    i += end + 2;
                }
                '.' if chars[i..].starts_with(&['.', '.', '.']) => {
                    continued = true;
                    break;
                }
                c if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' => {
                    let start = i;
                    i += 1;
                    while i < chars.len() {
                        let d = chars[i];
                        let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                        if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                            i += 1;
                        } else {
                            break;
                        }
                    }
                    let s: String = chars[start..i].iter().collect();
                    // signed special values such as -Inf
                    if (s == "-" || s == "+") && i < chars.len() && chars[i].is_ascii_alphabetic() {
                        let w_start = i;
                        while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                            i += 1;
                        }
                        let w: String = chars[w_start..i].iter().collect();
                        let v = special(&w).ok_or_else(|| perr(line, col, format!("invalid number '{s}{w}'")))?;
                        push(&mut out, Tok::Num(if s == "-" { -v } else { v }));
                        continue;
                    }
                    let v: f64 = s.parse().map_err(|_| perr(line, col, format!("invalid number '{s}'")))?;
                    push(&mut out, Tok::Num(v));
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let start = i;
                    while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                        i += 1;
                    }
                    let w: String = chars[start..i].iter().collect();
                    match special(&w) {
                        Some(v) => push(&mut out, Tok::Num(v)),
                        None => push(&mut out, Tok::Ident(w)),
                    }
                }
                other => return Err(perr(line, col, format!("unexpected character '{other}'"))),
            }
        }
        if !continued {
            out.push(Token { tok: Tok::Newline, line, col: chars.len() + 1 });
        }
    }
    Ok(out)
}

fn special(w: &str) -> Option<f64> {
    match w {
        "Inf" | "inf" => Some(f64::INFINITY),
        "NaN" | "nan" => Some(f64::NAN),
        _ => None,
    }
}

#[derive(Clone, Debug)]
enum Value {
    Scalar(f64),
    Text(String),
    Matrix { rows: Vec<Vec<f64>>, row_lines: Vec<usize> },
    Cell,
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn skip_newlines(&mut self) {
        while matches!(self.peek(), Some(Token { tok: Tok::Newline, .. })) {
            self.pos += 1;
        }
    }

    fn eof_error(&self) -> CaseError {
        let (line, col) = self.toks.last().map_or((1, 1), |t| (t.line, t.col));
        perr(line, col, "unexpected end of file")
    }

    fn statements(&mut self) -> Result<HashMap<String, Value>, CaseError> {
        let mut fields = HashMap::new();
        loop {
            self.skip_newlines();
            let Some(t) = self.next() else { break };
            match t.tok {
                Tok::Ident(ref w) if w == "function" => {
                    // `function mpc = name`
                    let mut last = None;
                    while let Some(t) = self.next() {
                        match t.tok {
                            Tok::Newline => break,
                            Tok::Ident(w) => last = Some(w),
                            _ => {}
                        }
                    }
                    if let Some(w) = last {
                        fields.entry("name".to_string()).or_insert(Value::Text(w));
                    }
                }
                Tok::Ident(ref w) if w == "end" || w == "return" => {}
                Tok::Ident(name) => {
                    let eq = self.next().ok_or_else(|| self.eof_error())?;
                    if eq.tok != Tok::Eq {
                        return Err(perr(eq.line, eq.col, format!("expected '=' after '{name}'")));
                    }
                    let value = self.value()?;
                    if let Some(field) = name.strip_prefix("mpc.") {
                        fields.insert(field.to_string(), value);
                    }
                    if matches!(self.peek(), Some(Token { tok: Tok::Semi, .. })) {
                        self.pos += 1;
                    }
                }
                Tok::Semi => {}
                other => return Err(perr(t.line, t.col, format!("unexpected token {other:?}"))),
            }
        }
        Ok(fields)
    }

    fn value(&mut self) -> Result<Value, CaseError> {
        let t = self.next().ok_or_else(|| self.eof_error())?;
        match t.tok {
            Tok::Num(v) => Ok(Value::Scalar(v)),
            Tok::Str(s) => Ok(Value::Text(s)),
            Tok::LBracket => self.matrix(t.line),
            Tok::LBrace => {
                let mut depth = 1;
                while depth > 0 {
                    let t = self.next().ok_or_else(|| self.eof_error())?;
                    match t.tok {
                        Tok::LBrace => depth += 1,
                        Tok::RBrace => depth -= 1,
                        _ => {}
                    }
                }
                Ok(Value::Cell)
            }
            other => Err(perr(t.line, t.col, format!("expected a value, found {other:?}"))),
        }
    }

    fn matrix(&mut self, line: usize) -> Result<Value, CaseError> {
        let mut rows = Vec::new();
        let mut row_lines = Vec::new();
        let mut row: Vec<f64> = Vec::new();
        let mut row_line = line;
        loop {
            let t = self.next().ok_or_else(|| self.eof_error())?;
            match t.tok {
                Tok::Num(v) => {
                    if row.is_empty() {
                        row_line = t.line;
                    }
                    row.push(v);
                }
                Tok::Comma => {}
                Tok::Semi | Tok::Newline => {
                    if !row.is_empty() {
                        rows.push(std::mem::take(&mut row));
                        row_lines.push(row_line);
                    }
                }
                Tok::RBracket => {
                    if !row.is_empty() {
                        rows.push(row);
                        row_lines.push(row_line);
                    }
                    return Ok(Value::Matrix { rows, row_lines });
                }
                other => return Err(perr(t.line, t.col, format!("unexpected {other:?} inside matrix"))),
            }
        }
    }
}

fn table<'a>(
    fields: &'a HashMap<String, Value>,
    name: &'static str,
    min_cols: usize,
) -> Result<(&'a [Vec<f64>], &'a [usize]), CaseError> {
    match fields.get(name) {
        Some(Value::Matrix { rows, row_lines, .. }) => {
            for (r, l) in rows.iter().zip(row_lines) {
                if r.len() < min_cols {
                    return Err(perr(*l, 1, format!("{name} row has {} columns, need {min_cols}", r.len())));
                }
            }
            Ok((rows, row_lines))
        }
        Some(_) => Err(CaseError::MissingTable(name)),
        None => Err(CaseError::MissingTable(name)),
    }
}

/// Parses a MATPOWER case into per-unit network data. Powers are divided by
/// `baseMVA`, angles converted to radians, out-of-service generators and
/// branches dropped together with their cost rows.
pub fn parse_matpower(text: &str) -> Result<NetworkData, CaseError> {
    let toks = tokenize(text)?;
    let fields = Parser { toks, pos: 0 }.statements()?;
    let base_mva = match fields.get("baseMVA") {
        Some(Value::Scalar(v)) if *v > 0.0 => *v,
        Some(_) => return Err(CaseError::Invalid("baseMVA must be a positive number".into())),
        None => return Err(CaseError::MissingTable("baseMVA")),
    };
    let name = match fields.get("name") {
        Some(Value::Text(s)) => s.clone(),
        _ => String::new(),
    };
    let deg = PI / 180.0;

    let (bus_rows, bus_lines) = table(&fields, "bus", 13)?;
    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut index_of = HashMap::new();
    let mut dropped_buses = std::collections::HashSet::new();
    for (r, &line) in bus_rows.iter().zip(bus_lines) {
        let id = r[0] as usize;
        if r[0] < 0.0 || r[0].fract() != 0.0 {
            return Err(perr(line, 1, format!("invalid bus id {}", r[0])));
        }
        let kind = match r[1] as i64 {
            1 => BusType::Pq,
            2 => BusType::Pv,
            3 => BusType::Ref,
            4 => {
                dropped_buses.insert(id);
                continue;
            }
            t => return Err(perr(line, 2, format!("unknown bus type {t}"))),
        };
        if index_of.insert(id, buses.len()).is_some() {
            return Err(perr(line, 1, format!("duplicate bus id {id}")));
        }
        buses.push(Bus {
            id,
            kind,
            pd: r[2] / base_mva,
            qd: r[3] / base_mva,
            gs: r[4] / base_mva,
            bs: r[5] / base_mva,
            vm: r[7],
            va: r[8] * deg,
            vmax: r[11],
            vmin: r[12],
        });
    }
    let refs: Vec<usize> = buses.iter().filter(|b| b.kind == BusType::Ref).map(|b| b.id).collect();
    if refs.len() > 1 {
        return Err(CaseError::MultipleRefBuses(refs));
    }
    if refs.is_empty() {
        return Err(CaseError::NoRefBus);
    }

    let resolve = |id: f64, line: usize, col: usize| -> Result<Option<usize>, CaseError> {
        let id = id as usize;
        if dropped_buses.contains(&id) {
            return Ok(None);
        }
        index_of.get(&id).copied().map(Some).ok_or_else(|| perr(line, col, format!("unknown bus {id}")))
    };

    let (gen_rows, gen_lines) = table(&fields, "gen", 10)?;
    let (cost_rows, cost_lines) = table(&fields, "gencost", 4)?;
    if cost_rows.len() < gen_rows.len() {
        return Err(CaseError::Invalid(format!(
            "gencost has {} rows for {} generators",
            cost_rows.len(),
            gen_rows.len()
        )));
    }
    let mut generators = Vec::new();
    let mut costs = Vec::new();
    for (k, (r, &line)) in gen_rows.iter().zip(gen_lines).enumerate() {
        let cost = parse_cost(&cost_rows[k], cost_lines[k], base_mva)?;
        let status = r[7] > 0.0;
        let Some(bus) = resolve(r[0], line, 1)? else { continue };
        if !status {
            continue;
        }
        generators.push(Generator {
            bus,
            pg: r[1] / base_mva,
            qg: r[2] / base_mva,
            qmax: r[3] / base_mva,
            qmin: r[4] / base_mva,
            pmax: r[8] / base_mva,
            pmin: r[9] / base_mva,
            status,
        });
        costs.push(cost);
    }

    let (br_rows, br_lines) = table(&fields, "branch", 11)?;
    let mut branches = Vec::new();
    for (r, &line) in br_rows.iter().zip(br_lines) {
        let status = r[10] > 0.0;
        if !status {
            continue;
        }
        let (Some(from), Some(to)) = (resolve(r[0], line, 1)?, resolve(r[1], line, 2)?) else { continue };
        let (res, react) = (r[2], r[3]);
        if res * res + react * react <= 0.0 {
            return Err(perr(line, 3, "branch with zero impedance"));
        }
        let (mut angmin, mut angmax) = if r.len() >= 13 { (r[11], r[12]) } else { (0.0, 0.0) };
        if angmin == 0.0 && angmax == 0.0 {
            angmin = f64::NEG_INFINITY;
            angmax = f64::INFINITY;
        }
        let angmin = if angmin <= -360.0 { f64::NEG_INFINITY } else { angmin * deg };
        let angmax = if angmax >= 360.0 { f64::INFINITY } else { angmax * deg };
        if !(angmin <= angmax) {
            return Err(perr(line, 12, "angmin exceeds angmax"));
        }
        branches.push(Branch {
            from,
            to,
            r: res,
            x: react,
            b: r[4],
            rate_a: r[5] / base_mva,
            tap: if r[8] == 0.0 { 1.0 } else { r[8] },
            shift: r[9] * deg,
            angmin,
            angmax,
            status,
        });
    }

    Ok(NetworkData { name, base_mva, buses, generators, costs, branches })
}

fn parse_cost(r: &[f64], line: usize, base_mva: f64) -> Result<GenCost, CaseError> {
    match r[0] as i64 {
        1 => return Err(CaseError::UnsupportedCost { line, reason: "piecewise linear cost".into() }),
        2 => {}
        t => return Err(CaseError::UnsupportedCost { line, reason: format!("cost model {t}") }),
    }
    let ncost = r[3] as usize;
    if r.len() < 4 + ncost {
        return Err(perr(line, 4, format!("expected {ncost} cost coefficients")));
    }
    if ncost > 3 {
        return Err(CaseError::UnsupportedCost { line, reason: format!("polynomial of degree {}", ncost - 1) });
    }
    // highest degree first
    let coeffs = &r[4..4 + ncost];
    let mut c = [0.0; 3];
    for (k, &v) in coeffs.iter().enumerate() {
        let degree = ncost - 1 - k;
        c[degree] = v;
    }
    Ok(GenCost { c0: c[0], c1: c[1] * base_mva, c2: c[2] * base_mva * base_mva })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_and_values() {
        let toks = tokenize("mpc.x = [1 -2.5e-1, Inf; -Inf 3]; % tail\nmpc.s = 'a%b';").unwrap();
        let fields = Parser { toks, pos: 0 }.statements().unwrap();
        match &fields["x"] {
            Value::Matrix { rows, .. } => {
                assert_eq!(rows[0], vec![1.0, -0.25, f64::INFINITY]);
                assert_eq!(rows[1], vec![f64::NEG_INFINITY, 3.0]);
            }
            v => panic!("{v:?}"),
        }
        match &fields["s"] {
            Value::Text(s) => assert_eq!(s, "a%b"),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn error_positions() {
        let err = tokenize("mpc.baseMVA = 100;\nmpc.bus = [1 2 $];").unwrap_err();
        assert_eq!(err, CaseError::Parse { line: 2, col: 16, message: "unexpected character '$'".into() });
    }

    #[test]
    fn cost_conversion() {
        let c = parse_cost(&[2.0, 0.0, 0.0, 3.0, 0.1, 20.0, 5.0], 1, 100.0).unwrap();
        assert_eq!(c, GenCost { c2: 1000.0, c1: 2000.0, c0: 5.0 });
        let c = parse_cost(&[2.0, 0.0, 0.0, 2.0, 20.0, 5.0], 1, 100.0).unwrap();
        assert_eq!(c, GenCost { c2: 0.0, c1: 2000.0, c0: 5.0 });
        assert!(matches!(
            parse_cost(&[2.0, 0.0, 0.0, 4.0, 1.0, 0.1, 20.0, 5.0], 7, 100.0),
            Err(CaseError::UnsupportedCost { line: 7, .. })
        ));
    }
}
