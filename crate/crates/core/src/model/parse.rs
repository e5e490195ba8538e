//! Line-oriented model format.
//!
//! ```text
//! # comment
//! species: A B
//! init: A=200 B=100
//! t: 4.0
//! A -> 2A @ 2
//! A + B -> 2*B @ 0.01
//! B -> 0 @ 2
//! 0 -> A @ expr(50/(1+2*B))
//! ```

use super::expr::parse_expr;
use super::{ParseError, Reaction, ReactionNetwork};

struct Line<'a> {
    number: usize,
    text: &'a str,
}

/// Parses the model text format into a network.
pub fn parse_model(text: &str) -> Result<ReactionNetwork, ParseError> {
    let lines: Vec<Line<'_>> = text
        .lines()
        .enumerate()
        .map(|(i, raw)| Line {
            number: i + 1,
            text: raw.split('#').next().unwrap_or(""),
        })
        .filter(|l| !l.text.trim().is_empty())
        .collect();

    let mut species: Option<Vec<String>> = None;
    for line in &lines {
        if let Some(rest) = keyword(line.text, "species") {
            if species.is_some() {
                return Err(ParseError::new(line.number, 1, "duplicate species declaration"));
            }
            let mut names: Vec<String> = Vec::new();
            for (col, tok) in tokens(line.text, rest) {
                if !is_identifier(tok) {
                    return Err(ParseError::new(
                        line.number,
                        col,
                        format!("invalid species name '{tok}'"),
                    ));
                }
                if names.iter().any(|n| n == tok) {
                    return Err(ParseError::new(
                        line.number,
                        col,
                        format!("species '{tok}' declared twice"),
                    ));
                }
                names.push(tok.to_string());
            }
            if names.is_empty() {
                return Err(ParseError::new(line.number, 1, "empty species declaration"));
            }
            species = Some(names);
        }
    }
    let species = species.ok_or_else(|| ParseError::new(1, 1, "missing 'species:' declaration"))?;
    let d = species.len();

    let mut init = vec![0i64; d];
    let mut horizon: Option<f64> = None;
    let mut reactions = Vec::new();
    let mut last_line = 1;

    for line in &lines {
        last_line = line.number;
        if keyword(line.text, "species").is_some() {
            continue;
        }
        if let Some(rest) = keyword(line.text, "init") {
            for (col, tok) in tokens(line.text, rest) {
                let (name, value) = tok.split_once('=').ok_or_else(|| {
                    ParseError::new(line.number, col, format!("expected Name=count, got '{tok}'"))
                })?;
                let idx = species.iter().position(|s| s == name).ok_or_else(|| {
                    ParseError::new(line.number, col, format!("unknown species '{name}'"))
                })?;
                let v: i64 = value.parse().map_err(|_| {
                    ParseError::new(
                        line.number,
                        col + name.len() + 1,
                        format!("invalid count '{value}'"),
                    )
                })?;
                if v < 0 {
                    return Err(ParseError::new(
                        line.number,
                        col + name.len() + 1,
                        "initial counts must be non-negative",
                    ));
                }
                init[idx] = v;
            }
            continue;
        }
        if let Some(rest) = keyword(line.text, "t") {
            let col = offset_in(line.text, rest) + 1;
            let v: f64 = rest.trim().parse().map_err(|_| {
                ParseError::new(line.number, col, format!("invalid time horizon '{}'", rest.trim()))
            })?;
            if !(v.is_finite() && v > 0.0) {
                return Err(ParseError::new(line.number, col, "time horizon must be positive"));
            }
            horizon = Some(v);
            continue;
        }
        reactions.push(parse_reaction(line, &species)?);
    }

    let horizon = horizon.ok_or_else(|| ParseError::new(last_line, 1, "missing 't:' time horizon"))?;
    if reactions.is_empty() {
        return Err(ParseError::new(last_line, 1, "model has no reactions"));
    }
    ReactionNetwork::new(species, reactions, init, horizon)
        .map_err(|e| ParseError::new(last_line, 1, e.to_string()))
}

fn keyword<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    let trimmed = text.trim_start();
    let rest = trimmed.strip_prefix(key)?;
    let rest_trim = rest.trim_start();
    rest_trim.strip_prefix(':')
}

fn offset_in(outer: &str, inner: &str) -> usize {
    inner.as_ptr() as usize - outer.as_ptr() as usize
}

/// Whitespace-separated tokens with their 1-based columns in `line`.
fn tokens<'a>(line: &'a str, rest: &'a str) -> Vec<(usize, &'a str)> {
    let base = offset_in(line, rest);
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in rest.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((base + s + 1, &rest[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((base + s + 1, &rest[s..]));
    }
    out
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_alphanumeric() || c == '_')
}

fn parse_reaction(line: &Line<'_>, species: &[String]) -> Result<Reaction, ParseError> {
    let text = line.text;
    let arrow = text.find("->").ok_or_else(|| {
        ParseError::new(line.number, 1, "expected a reaction '<reactants> -> <products> @ <rate>'")
    })?;
    let at_rel = text[arrow..].find('@').ok_or_else(|| {
        ParseError::new(line.number, text.len() + 1, "missing '@ <rate>' in reaction")
    })?;
    let at = arrow + at_rel;

    let reactants = parse_side(&text[..arrow], 0, line.number, species)?;
    let products = parse_side(&text[arrow + 2..at], arrow + 2, line.number, species)?;

    let rate_src = &text[at + 1..];
    let rate_trim = rate_src.trim();
    let rate_col = at + 1 + (rate_src.len() - rate_src.trim_start().len());
    if let Some(inner) = rate_trim.strip_prefix("expr") {
        let inner_trim = inner.trim_start();
        let open = rate_col + 4 + (inner.len() - inner_trim.len());
        if !inner_trim.starts_with('(') || !inner_trim.ends_with(')') {
            return Err(ParseError::new(line.number, open + 1, "expected expr(<expression>)"));
        }
        let body = &inner_trim[1..inner_trim.len() - 1];
        let expr = parse_expr(body, species, line.number, open + 1)?;
        Ok(Reaction::with_expression(reactants, products, expr))
    } else {
        let kappa: f64 = rate_trim.parse().map_err(|_| {
            ParseError::new(
                line.number,
                rate_col + 1,
                format!("invalid rate constant '{rate_trim}'"),
            )
        })?;
        if kappa < 0.0 {
            return Err(ParseError::new(line.number, rate_col + 1, "negative rate constant"));
        }
        if !kappa.is_finite() {
            return Err(ParseError::new(line.number, rate_col + 1, "rate constant must be finite"));
        }
        Ok(Reaction::mass_action(reactants, products, kappa))
    }
}

/// Parses `k*Name + ...` (also `kName`, `k Name`), or `0` for the empty complex.
fn parse_side(
    src: &str,
    offset: usize,
    line: usize,
    species: &[String],
) -> Result<Vec<u32>, ParseError> {
    let mut counts = vec![0u32; species.len()];
    if src.trim() == "0" {
        return Ok(counts);
    }
    let mut pos = 0;
    for term in src.split('+') {
        let col = offset + pos + (term.len() - term.trim_start().len()) + 1;
        pos += term.len() + 1;
        let t = term.trim();
        if t.is_empty() {
            return Err(ParseError::new(line, col, "empty term in reaction"));
        }
        let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
        let coeff: u32 = if digits == 0 {
            1
        } else {
            t[..digits]
                .parse()
                .map_err(|_| ParseError::new(line, col, "stoichiometric coefficient too large"))?
        };
        let mut name = t[digits..].trim_start();
        if let Some(stripped) = name.strip_prefix('*') {
            name = stripped.trim_start();
        }
        if name.is_empty() {
            return Err(ParseError::new(line, col, format!("term '{t}' has no species")));
        }
        let idx = species
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| ParseError::new(line, col, format!("unknown species '{name}'")))?;
        counts[idx] += coeff;
    }
    Ok(counts)
}
