//! Scalar rate expressions over species counts.
//!
//! Grammar (standard precedence, left associative):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | atom
//! atom   := number | identifier | '(' expr ')'
//! ```

use std::fmt;

use super::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

/// Arithmetic expression; `Species(i)` refers to the i-th declared species.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Species(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    /// Evaluates in double precision. Division by zero yields an infinite or
    /// NaN value which the simulator rejects.
    pub fn eval(&self, x: &[i64]) -> f64 {
        match self {
            Expr::Number(v) => *v,
            Expr::Species(i) => x[*i] as f64,
            Expr::Neg(e) => -e.eval(x),
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.eval(x), b.eval(x));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
        }
    }

    /// Species indices referenced anywhere in the expression.
    pub fn species_used(&self, out: &mut Vec<usize>) {
        match self {
            Expr::Number(_) => {}
            Expr::Species(i) => {
                if !out.contains(i) {
                    out.push(*i);
                }
            }
            Expr::Neg(e) => e.species_used(out),
            Expr::Binary(_, a, b) => {
                a.species_used(out);
                b.species_used(out);
            }
        }
    }

    /// Renders with the minimal parentheses needed to reparse to the same tree.
    pub fn display<'a>(&'a self, species: &'a [String]) -> ExprDisplay<'a> {
        ExprDisplay {
            expr: self,
            species,
        }
    }
}

pub struct ExprDisplay<'a> {
    expr: &'a Expr,
    species: &'a [String],
}

impl ExprDisplay<'_> {
    fn write(&self, e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match e {
            Expr::Number(v) => write!(f, "{v}"),
            Expr::Species(i) => f.write_str(&self.species[*i]),
            Expr::Neg(inner) => {
                f.write_str("-")?;
                if matches!(**inner, Expr::Binary(..)) {
                    f.write_str("(")?;
                    self.write(inner, f)?;
                    f.write_str(")")
                } else {
                    self.write(inner, f)
                }
            }
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                let left_paren = matches!(**a, Expr::Binary(o, ..) if o.precedence() < p);
                // Right operand needs parentheses at equal precedence as well,
                // because every operator is left associative.
                let right_paren = matches!(**b, Expr::Binary(o, ..) if o.precedence() <= p);
                self.write_operand(a, left_paren, f)?;
                write!(f, "{}", op.symbol())?;
                self.write_operand(b, right_paren, f)
            }
        }
    }

    fn write_operand(&self, e: &Expr, paren: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if paren {
            f.write_str("(")?;
            self.write(e, f)?;
            f.write_str(")")
        } else {
            self.write(e, f)
        }
    }
}

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(self.expr, f)
    }
}

/// Parses `src` as an expression. `line` and `col_offset` locate `src` in the
/// enclosing model file for error messages (columns are 1-based).
pub fn parse_expr(
    src: &str,
    species: &[String],
    line: usize,
    col_offset: usize,
) -> Result<Expr, ParseError> {
    let mut p = ExprParser {
        chars: src.char_indices().collect(),
        pos: 0,
        species,
        line,
        col_offset,
        len: src.len(),
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.chars.len() {
        return Err(p.error("unexpected trailing input in expression"));
    }
    Ok(e)
}

struct ExprParser<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    species: &'a [String],
    line: usize,
    col_offset: usize,
    len: usize,
}

impl ExprParser<'_> {
    fn column(&self) -> usize {
        let byte = self.chars.get(self.pos).map_or(self.len, |c| c.0);
        self.col_offset + byte + 1
    }

    fn error(&self, msg: impl Into<String>) -> ParseError {
        ParseError::new(self.line, self.column(), msg)
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|c| c.1)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            self.skip_ws();
            let op = match self.peek() {
                Some('+') => BinOp::Add,
                Some('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            self.skip_ws();
            let op = match self.peek() {
                Some('*') => BinOp::Mul,
                Some('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        if self.peek() == Some('-') {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.skip_ws();
                if self.peek() != Some(')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_alphabetic() || c == '_' => {
                let start_col = self.column();
                let start = self.pos;
                while matches!(self.peek(), Some(c) if c.is_alphanumeric() || c == '_') {
                    self.pos += 1;
                }
                let name: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
                match self.species.iter().position(|s| *s == name) {
                    Some(i) => Ok(Expr::Species(i)),
                    None => Err(ParseError::new(
                        self.line,
                        start_col,
                        format!("unknown species '{name}' in expression"),
                    )),
                }
            }
            Some(c) => Err(self.error(format!("unexpected character '{c}' in expression"))),
            None => Err(self.error("unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let start_col = self.column();
        while matches!(self.peek(), Some(c) if c.is_ascii_digit() || c == '.') {
            self.pos += 1;
        }
        // optional exponent
        if matches!(self.peek(), Some('e' | 'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some('+' | '-')) {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
        text.parse::<f64>()
            .map(Expr::Number)
            .map_err(|_| ParseError::new(self.line, start_col, format!("invalid number '{text}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn toggle_rate() {
        let sp = names(&["A", "B"]);
        let e = parse_expr("50/(1+2*B)", &sp, 1, 0).unwrap();
        assert_eq!(e.eval(&[0, 0]), 50.0);
        assert_eq!(e.eval(&[7, 2]), 10.0);
    }

    #[test]
    fn precedence_and_unary_minus() {
        let sp = names(&["X"]);
        let e = parse_expr("1 - 2 - 3 * -X / 2", &sp, 1, 0).unwrap();
        assert_eq!(e.eval(&[4]), 1.0 - 2.0 - 3.0 * -4.0 / 2.0);
    }

    #[test]
    fn display_reparses_to_same_tree() {
        let sp = names(&["A", "B"]);
        for src in ["50/(1+2*B)", "A-(B-1)", "-(A+B)*2", "A/(B/2)", "1e-3*A*(A-1)", "--A"] {
            let e = parse_expr(src, &sp, 1, 0).unwrap();
            let shown = e.display(&sp).to_string();
            let again = parse_expr(&shown, &sp, 1, 0).unwrap();
            assert_eq!(e, again, "{src} -> {shown}");
        }
    }

    #[test]
    fn unknown_species_reports_column() {
        let sp = names(&["A"]);
        let err = parse_expr("1 + Q", &sp, 3, 10).unwrap_err();
        assert_eq!((err.line, err.column), (3, 15));
        assert!(err.message.contains("unknown species"));
    }

    #[test]
    fn unbalanced_parenthesis() {
        let sp = names(&["A"]);
        assert!(parse_expr("(A + 1", &sp, 1, 0).is_err());
        assert!(parse_expr("A )", &sp, 1, 0).is_err());
    }
}
