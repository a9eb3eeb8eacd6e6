//! Constructed-feature expressions: evaluation, text round-trip and the
//! original / engineered / complex taxonomy.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

/// Denominators at or below this magnitude trigger the protected-division fallback.
pub const DIVISION_GUARD: f64 = 1e-9;
/// Value returned by protected division for a (near-)zero denominator.
pub const DIVISION_FALLBACK: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("feature {feature} references column x{column} but the matrix has {width} columns")]
    ColumnOutOfRange {
        feature: usize,
        column: usize,
        width: usize,
    },
    #[error("a feature program needs at least one feature")]
    EmptyProgram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> char {
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

    fn from_char(c: char) -> Option<Self> {
        match c {
            '+' => Some(BinOp::Add),
            '-' | '−' => Some(BinOp::Sub),
            '*' | '×' => Some(BinOp::Mul),
            '/' | '÷' => Some(BinOp::Div),
            _ => None,
        }
    }

    /// Applies the operator with protected division. Results are saturated to
    /// the finite range so that chained operations never yield NaN or infinity.
    pub fn apply(self, a: f64, b: f64) -> f64 {
        let v = match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => {
                if b.abs() > DIVISION_GUARD {
                    a / b
                } else {
                    DIVISION_FALLBACK
                }
            }
        };
        if v.is_nan() {
            DIVISION_FALLBACK
        } else {
            v.clamp(-f64::MAX, f64::MAX)
        }
    }
}

/// A constructed feature: a binary algebraic tree over input columns.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expr {
    Var(usize),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
        /// Number of operator nodes in this subtree, including this one.
        operators: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureClass {
    Original,
    Engineered,
    Complex,
}

impl Expr {
    pub fn var(column: usize) -> Self {
        Expr::Var(column)
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        let operators = 1 + lhs.operator_count() + rhs.operator_count();
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
            operators,
        }
    }

    pub fn operator_count(&self) -> usize {
        match self {
            Expr::Var(_) => 0,
            Expr::Binary { operators, .. } => *operators,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Var(_) => 1,
            Expr::Binary { lhs, rhs, .. } => 1 + lhs.depth().max(rhs.depth()),
        }
    }

    pub fn max_column(&self) -> usize {
        match self {
            Expr::Var(c) => *c,
            Expr::Binary { lhs, rhs, .. } => lhs.max_column().max(rhs.max_column()),
        }
    }

    pub fn classify(&self) -> FeatureClass {
        match self.operator_count() {
            0 => FeatureClass::Original,
            1 => FeatureClass::Engineered,
            _ => FeatureClass::Complex,
        }
    }

    /// Evaluates the expression on one row. Column indices must be in range.
    pub fn eval_row(&self, row: &[f64]) -> f64 {
        match self {
            Expr::Var(c) => row[*c].clamp(-f64::MAX, f64::MAX),
            Expr::Binary { op, lhs, rhs, .. } => op.apply(lhs.eval_row(row), rhs.eval_row(row)),
        }
    }

    /// Infix rendering with the minimum parentheses needed for
    /// `parse_expr(render(e)) == e` under left associativity.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.write_infix(&mut out);
        out
    }

    fn write_infix(&self, out: &mut String) {
        match self {
            Expr::Var(c) => {
                out.push('x');
                out.push_str(&c.to_string());
            }
            Expr::Binary { op, lhs, rhs, .. } => {
                let p = op.precedence();
                let lhs_paren = matches!(**lhs, Expr::Binary { op: l, .. } if l.precedence() < p);
                let rhs_paren = matches!(**rhs, Expr::Binary { op: r, .. } if r.precedence() <= p);
                write_operand(lhs, lhs_paren, out);
                out.push(' ');
                out.push(op.symbol());
                out.push(' ');
                write_operand(rhs, rhs_paren, out);
            }
        }
    }
}

fn write_operand(e: &Expr, paren: bool, out: &mut String) {
    if paren {
        out.push('(');
        e.write_infix(out);
        out.push(')');
    } else {
        e.write_infix(out);
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Parses infix text with `x{i}` variables, `+ - * /` (Unicode `− × ÷` also
/// accepted) and parentheses. `*`/`/` bind tighter than `+`/`-`; all operators
/// are left associative.
pub fn parse_expr(text: &str) -> Result<Expr, ExprError> {
    let mut p = ExprParser { src: text, pos: 0 };
    let e = p.parse_sum()?;
    p.skip_ws();
    if p.pos < text.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct ExprParser<'a> {
    src: &'a str,
    pos: usize,
}

impl ExprParser<'_> {
    fn error(&self, message: &str) -> ExprError {
        ExprError::Syntax {
            position: self.pos,
            message: message.to_string(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) {
        if let Some(c) = self.peek() {
            self.pos += c.len_utf8();
        }
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn parse_sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.parse_product()?;
        loop {
            self.skip_ws();
            match self.peek().and_then(BinOp::from_char) {
                Some(op @ (BinOp::Add | BinOp::Sub)) => {
                    self.bump();
                    let rhs = self.parse_product()?;
                    lhs = Expr::binary(op, lhs, rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.parse_atom()?;
        loop {
            self.skip_ws();
            match self.peek().and_then(BinOp::from_char) {
                Some(op @ (BinOp::Mul | BinOp::Div)) => {
                    self.bump();
                    let rhs = self.parse_atom()?;
                    lhs = Expr::binary(op, lhs, rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_atom(&mut self) -> Result<Expr, ExprError> {
        self.skip_ws();
        match self.peek() {
            Some('(') => {
                self.bump();
                let e = self.parse_sum()?;
                self.skip_ws();
                if self.peek() != Some(')') {
                    return Err(self.error("expected ')'"));
                }
                self.bump();
                Ok(e)
            }
            Some('x') => {
                self.bump();
                let start = self.pos;
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.bump();
                }
                if start == self.pos {
                    return Err(self.error("expected column index after 'x'"));
                }
                self.src[start..self.pos]
                    .parse()
                    .map(Expr::Var)
                    .map_err(|_| self.error("column index out of range"))
            }
            Some(_) => Err(self.error("expected variable or '('")),
            None => Err(self.error("unexpected end of input")),
        }
    }
}

/// Provenance-stamped list of constructed features (the phenotype of an individual).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureProgram {
    pub features: Vec<Expr>,
    /// Opaque identifier of the genotype this program was mapped from.
    pub source_genotype_hash: u64,
}

impl FeatureProgram {
    pub fn new(features: Vec<Expr>) -> Self {
        Self {
            features,
            source_genotype_hash: 0,
        }
    }

    /// Selects every column of a `d`-wide matrix unchanged.
    pub fn identity(d: usize) -> Self {
        Self::new((0..d).map(Expr::Var).collect())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Parses one feature per non-empty line.
    pub fn parse(text: &str) -> Result<Self, ExprError> {
        let features = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(parse_expr)
            .collect::<Result<Vec<_>, _>>()?;
        if features.is_empty() {
            return Err(ExprError::EmptyProgram);
        }
        Ok(Self::new(features))
    }

    /// One rendered feature per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for f in &self.features {
            out.push_str(&f.render());
            out.push('\n');
        }
        out
    }

    /// Applies every feature to every row; column `j` of the output is feature `j`.
    pub fn evaluate(&self, x: &Matrix) -> Result<Matrix, ExprError> {
        for (i, f) in self.features.iter().enumerate() {
            let c = f.max_column();
            if c >= x.cols() {
                return Err(ExprError::ColumnOutOfRange {
                    feature: i,
                    column: c,
                    width: x.cols(),
                });
            }
        }
        let k = self.features.len();
        let mut out = Matrix::zeros(x.rows(), k);
        for i in 0..x.rows() {
            let row = x.row(i);
            let dst = out.row_mut(i);
            for (j, f) in self.features.iter().enumerate() {
                dst[j] = f.eval_row(row);
            }
        }
        Ok(out)
    }

    pub fn complexity_report(&self) -> Result<ComplexityReport, ExprError> {
        ComplexityReport::from_classes(self.features.iter().map(Expr::classify))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub n_total: usize,
    pub n_selected: usize,
    pub n_engineered: usize,
    pub n_complex: usize,
    pub r_o: f64,
    pub r_e: f64,
    pub r_c: f64,
}

impl ComplexityReport {
    pub fn from_classes(classes: impl IntoIterator<Item = FeatureClass>) -> Result<Self, ExprError> {
        let (mut o, mut e, mut c) = (0usize, 0usize, 0usize);
        for class in classes {
            match class {
                FeatureClass::Original => o += 1,
                FeatureClass::Engineered => e += 1,
                FeatureClass::Complex => c += 1,
            }
        }
        let total = o + e + c;
        if total == 0 {
            return Err(ExprError::EmptyProgram);
        }
        let n = total as f64;
        Ok(Self {
            n_total: total,
            n_selected: o,
            n_engineered: e,
            n_complex: c,
            r_o: o as f64 / n,
            r_e: e as f64 / n,
            r_c: c as f64 / n,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: usize) -> Expr {
        Expr::Var(i)
    }

    #[test]
    fn operator_count_is_cached_and_exact() {
        let e = parse_expr("x29 - x22*x22 + (x8*x42/(x35*x9 + x53))").unwrap();
        assert_eq!(e.operator_count(), 7);
        assert_eq!(x(3).operator_count(), 0);
    }

    #[test]
    fn classify_examples() {
        assert_eq!(parse_expr("x29").unwrap().classify(), FeatureClass::Original);
        assert_eq!(parse_expr("x1 + x2").unwrap().classify(), FeatureClass::Engineered);
        assert_eq!(
            parse_expr("x29 − x22×x22 + (x8×x42 ÷ (x35×x9 + x53))").unwrap().classify(),
            FeatureClass::Complex
        );
        assert_eq!(parse_expr("x1 + x2 - x3").unwrap().classify(), FeatureClass::Complex);
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse_expr("x1+x2*x3").unwrap();
        assert_eq!(e, Expr::binary(BinOp::Add, x(1), Expr::binary(BinOp::Mul, x(2), x(3))));
        let e = parse_expr("x1 - x2 - x3").unwrap();
        assert_eq!(e, Expr::binary(BinOp::Sub, Expr::binary(BinOp::Sub, x(1), x(2)), x(3)));
        let e = parse_expr("x1 / (x2 / x3)").unwrap();
        assert_eq!(e.render(), "x1 / (x2 / x3)");
    }

    #[test]
    fn render_minimal_parentheses() {
        assert_eq!(x(3).render(), "x3");
        let e = Expr::binary(BinOp::Mul, Expr::binary(BinOp::Add, x(0), x(1)), x(2));
        assert_eq!(e.render(), "(x0 + x1) * x2");
        let e = Expr::binary(BinOp::Sub, x(0), Expr::binary(BinOp::Add, x(1), x(2)));
        assert_eq!(e.render(), "x0 - (x1 + x2)");
        let e = Expr::binary(BinOp::Add, Expr::binary(BinOp::Add, x(0), x(1)), x(2));
        assert_eq!(e.render(), "x0 + x1 + x2");
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse_expr("x1 + ") {
            Err(ExprError::Syntax { position, .. }) => assert_eq!(position, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_expr("(x1"), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse_expr("x"), Err(ExprError::Syntax { position: 1, .. })));
        assert!(matches!(parse_expr("x1 x2"), Err(ExprError::Syntax { position: 3, .. })));
        assert!(matches!(parse_expr("y1"), Err(ExprError::Syntax { position: 0, .. })));
    }

    #[test]
    fn evaluate_examples() {
        let p = FeatureProgram::new(vec![x(0)]);
        let m = Matrix::from_rows(&[[3.0], [5.0]]);
        assert_eq!(p.evaluate(&m).unwrap(), m);

        let p = FeatureProgram::parse("x0 + x1").unwrap();
        let out = p.evaluate(&Matrix::from_rows(&[[2.0, 3.0]])).unwrap();
        assert_eq!(out.row(0), &[5.0]);

        let p = FeatureProgram::parse("x0 / x1").unwrap();
        let out = p.evaluate(&Matrix::from_rows(&[[1.0, 0.0]])).unwrap();
        assert_eq!(out.row(0), &[1.0]);
    }

    #[test]
    fn protected_division_threshold() {
        assert_eq!(BinOp::Div.apply(4.0, 1e-9), DIVISION_FALLBACK);
        assert_eq!(BinOp::Div.apply(4.0, -1e-9), DIVISION_FALLBACK);
        assert!((BinOp::Div.apply(4.0, 2e-9) - 2e9).abs() < 1e-3);
    }

    #[test]
    fn column_out_of_range() {
        let p = FeatureProgram::parse("x0\nx1 * x4").unwrap();
        let err = p.evaluate(&Matrix::from_rows(&[[1.0, 2.0]])).unwrap_err();
        assert_eq!(
            err,
            ExprError::ColumnOutOfRange {
                feature: 1,
                column: 4,
                width: 2
            }
        );
    }

    #[test]
    fn complexity_examples() {
        let mut feats = vec![];
        feats.extend((0..45).map(x));
        feats.extend((0..6).map(|i| Expr::binary(BinOp::Add, x(i), x(i + 1))));
        feats.extend(
            (0..6).map(|i| Expr::binary(BinOp::Mul, Expr::binary(BinOp::Add, x(i), x(1)), x(2))),
        );
        let r = FeatureProgram::new(feats).complexity_report().unwrap();
        assert_eq!((r.n_total, r.n_selected, r.n_engineered, r.n_complex), (57, 45, 6, 6));
        assert_eq!(r.r_o, 45.0 / 57.0);
        assert_eq!(r.r_e, 6.0 / 57.0);
        assert_eq!(r.r_c, 6.0 / 57.0);

        let r = FeatureProgram::identity(7).complexity_report().unwrap();
        assert_eq!((r.r_o, r.r_e, r.r_c), (1.0, 0.0, 0.0));
        assert_eq!(
            FeatureProgram::new(vec![]).complexity_report(),
            Err(ExprError::EmptyProgram)
        );
    }

    #[test]
    fn program_text_round_trip() {
        let p = FeatureProgram::parse("x0\n x1 * (x2 - x3)\n\nx4 / x5 / x6\n").unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(FeatureProgram::parse(&p.render()).unwrap(), p);
    }
}
