use std::fmt;

use super::{BinaryOp, Expression, UnaryOp};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownIdentifier(String),
    BadVariableIndex(String),
    Empty,
}

/// Parse failure with the character offset where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub position: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::Syntax(msg) => write!(f, "syntax error at {}: {msg}", self.position),
            ParseErrorKind::UnknownIdentifier(id) => {
                write!(f, "unknown identifier `{id}` at {}", self.position)
            }
            ParseErrorKind::BadVariableIndex(id) => write!(
                f,
                "variable `{id}` at {} must be numbered from x1",
                self.position
            ),
            ParseErrorKind::Empty => f.write_str("empty expression"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        match c {
            c if c.is_whitespace() => {
                i += 1;
                continue;
            }
            '0'..='9' | '.' => {
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let lit: String = chars[start..i].iter().collect();
                let v = lit.parse::<f64>().map_err(|_| ParseError {
                    position: start,
                    kind: ParseErrorKind::Syntax(format!("malformed number `{lit}`")),
                })?;
                out.push((start, Token::Number(v)));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push((start, Token::Ident(chars[start..i].iter().collect())));
                continue;
            }
            '+' | '*' | '/' | '^' => out.push((start, Token::Op(c))),
            '-' | '\u{2212}' => out.push((start, Token::Op('-'))),
            '(' => out.push((start, Token::LParen)),
            ')' => out.push((start, Token::RParen)),
            other => {
                return Err(ParseError {
                    position: start,
                    kind: ParseErrorKind::Syntax(format!("unexpected character `{other}`")),
                })
            }
        }
        i += 1;
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn peek_at(&self, offset: usize) -> Option<&Token> {
        self.tokens.get(self.pos + offset).map(|(_, t)| t)
    }

    fn position(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn syntax(&self, msg: impl Into<String>) -> ParseError {
        ParseError {
            position: self.position(),
            kind: ParseErrorKind::Syntax(msg.into()),
        }
    }

    fn expr(&mut self) -> Result<Expression, ParseError> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinaryOp::Add } else { BinaryOp::Sub };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expression::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expression, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinaryOp::Mul } else { BinaryOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expression::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expression, ParseError> {
        if let Some(Token::Op('-')) = self.peek() {
            // A minus directly on a literal is a negative constant, unless the
            // literal is the base of a power (`-3^2` is `-(3^2)`).
            if let Some(Token::Number(v)) = self.peek_at(1) {
                let v = *v;
                if !matches!(self.peek_at(2), Some(Token::Op('^'))) {
                    self.pos += 2;
                    return Ok(Expression::Const(-v));
                }
            }
            self.pos += 1;
            let child = self.unary()?;
            return Ok(Expression::unary(UnaryOp::Neg, child));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expression, ParseError> {
        let base = self.primary()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expression::pow(base, exponent));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expression, ParseError> {
        let at = self.position();
        let Some(tok) = self.peek().cloned() else {
            return Err(self.syntax("unexpected end of input"));
        };
        self.pos += 1;
        match tok {
            Token::Number(v) => Ok(Expression::Const(v)),
            Token::LParen => {
                let inner = self.expr()?;
                match self.peek() {
                    Some(Token::RParen) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => Err(self.syntax("expected `)`")),
                }
            }
            Token::Ident(name) => {
                if let Some(op) = UnaryOp::from_name(&name) {
                    // `cos(x4)` or the juxtaposed form `cos x4`
                    let arg = if let Some(Token::LParen) = self.peek() {
                        self.primary()?
                    } else {
                        self.power()?
                    };
                    return Ok(Expression::unary(op, arg));
                }
                if name == "pi" {
                    return Ok(Expression::Const(std::f64::consts::PI));
                }
                if let Some(digits) = name.strip_prefix('x') {
                    if !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit()) {
                        return match digits.parse::<usize>() {
                            Ok(k) if k >= 1 => Ok(Expression::Var(k - 1)),
                            _ => Err(ParseError {
                                position: at,
                                kind: ParseErrorKind::BadVariableIndex(name),
                            }),
                        };
                    }
                }
                Err(ParseError {
                    position: at,
                    kind: ParseErrorKind::UnknownIdentifier(name),
                })
            }
            Token::Op(c) => Err(ParseError {
                position: at,
                kind: ParseErrorKind::Syntax(format!("unexpected operator `{c}`")),
            }),
            Token::RParen => Err(ParseError {
                position: at,
                kind: ParseErrorKind::Syntax("unexpected `)`".into()),
            }),
        }
    }
}

/// Parses infix text: `+ - * / ^`, parentheses, `sin cos exp ln sqrt`,
/// variables `x1..xn`, decimal literals and `pi`.
///
/// Precedence from tightest: `^` (right-assoc), unary minus, `* /`, `+ -`.
pub fn parse(text: &str) -> Result<Expression, ParseError> {
    let tokens = tokenize(text)?;
    if tokens.is_empty() {
        return Err(ParseError {
            position: 0,
            kind: ParseErrorKind::Empty,
        });
    }
    let mut p = Parser {
        tokens,
        pos: 0,
        end: text.chars().count(),
    };
    let e = p.expr()?;
    if p.pos != p.tokens.len() {
        return Err(p.syntax("trailing input"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expression as E;

    #[test]
    fn single_variable() {
        assert_eq!(parse("x1").unwrap(), E::Var(0));
    }

    #[test]
    fn case1_top_level_chain() {
        let e = parse("1.2 + 10*sin(2*x1 - x3) - 3*x2^2").unwrap();
        // ((1.2 + 10*sin(..)) - 3*x2^2)
        let E::Binary(BinaryOp::Sub, lhs, rhs) = &e else {
            panic!("top node should be a subtraction: {e:?}")
        };
        assert!(matches!(**lhs, E::Binary(BinaryOp::Add, ..)));
        assert_eq!(rhs.to_string(), "3 * x2^2");
        let mut summands = 0;
        fn count(e: &E, n: &mut usize) {
            match e {
                E::Binary(BinaryOp::Add | BinaryOp::Sub, l, r) => {
                    count(l, n);
                    count(r, n);
                }
                _ => *n += 1,
            }
        }
        count(&e, &mut summands);
        assert_eq!(summands, 3);
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(parse("-x1^2").unwrap().to_string(), "-x1^2");
        assert!(matches!(parse("-x1^2").unwrap(), E::Unary(UnaryOp::Neg, _)));
        assert_eq!(parse("2^3^2").unwrap(), parse("2^(3^2)").unwrap());
        assert_eq!(parse("8/4/2").unwrap(), parse("(8/4)/2").unwrap());
        assert_eq!(parse("1 - 2 - 3").unwrap(), parse("(1 - 2) - 3").unwrap());
        assert_eq!(parse("-3").unwrap(), E::Const(-3.0));
        assert!(matches!(parse("-3^2").unwrap(), E::Unary(UnaryOp::Neg, _)));
        assert_eq!(parse("x1^-2").unwrap().to_string(), "x1^-2");
    }

    #[test]
    fn juxtaposed_function_and_unicode_minus() {
        let a = parse("2 * x1 * sin(x2 + x3) \u{2212} cos x4").unwrap();
        let b = parse("2 * x1 * sin(x2 + x3) - cos(x4)").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn errors() {
        let e = parse("x0 + 1").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::BadVariableIndex(_)));
        assert_eq!(e.position, 0);
        let e = parse("1 + foo(x1)").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::UnknownIdentifier(ref s) if s == "foo"));
        assert_eq!(e.position, 4);
        let e = parse("(x1 + 2").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::Syntax(_)));
        assert_eq!(e.position, 7);
        assert!(matches!(parse("  ").unwrap_err().kind, ParseErrorKind::Empty));
        assert!(parse("x1 $ 2").is_err());
        assert!(parse("x1 x2").is_err());
        assert!(parse("x").is_err());
    }

    #[test]
    fn scientific_literals() {
        assert_eq!(parse("1.5e-3").unwrap(), E::Const(1.5e-3));
        assert_eq!(parse(".5").unwrap(), E::Const(0.5));
    }
}
