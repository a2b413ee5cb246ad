//! Text expression parser shared by scenario files and CLI flags.
//!
//! Grammar (see `docs/expression-grammar.ebnf`): standard precedence with `^`
//! binding tightest, unary minus allowed, whitespace-insensitive. Product
//! chart coordinates like `x_(2)` lex as single identifiers.

use num::{BigInt, One, Zero};

use super::poly::{MultiPoly, VarSet};
use super::ratfunc::RatFn;
use super::time::TimeExpr;
use super::{ExprError, ExprResult, Rational};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(Rational),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

fn lex(text: &str) -> ExprResult<Vec<(Tok, usize)>> {
    let bytes: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let pos = i;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
            }
            '+' => {
                toks.push((Tok::Plus, pos));
                i += 1;
            }
            '-' => {
                toks.push((Tok::Minus, pos));
                i += 1;
            }
            '*' => {
                toks.push((Tok::Star, pos));
                i += 1;
            }
            '/' => {
                toks.push((Tok::Slash, pos));
                i += 1;
            }
            '^' => {
                toks.push((Tok::Caret, pos));
                i += 1;
            }
            '(' => {
                toks.push((Tok::LParen, pos));
                i += 1;
            }
            ')' => {
                toks.push((Tok::RParen, pos));
                i += 1;
            }
            ',' => {
                toks.push((Tok::Comma, pos));
                i += 1;
            }
            '0'..='9' => {
                let mut j = i;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                let int_part: String = bytes[i..j].iter().collect();
                let mut value = Rational::from(int_part.parse::<BigInt>().unwrap());
                if j < bytes.len() && bytes[j] == '.' {
                    let mut k = j + 1;
                    while k < bytes.len() && bytes[k].is_ascii_digit() {
                        k += 1;
                    }
                    if k == j + 1 {
                        return Err(ExprError::Syntax {
                            pos: j,
                            msg: "expected digits after decimal point".into(),
                        });
                    }
                    let frac: String = bytes[j + 1..k].iter().collect();
                    let numer = frac.parse::<BigInt>().unwrap();
                    let denom = BigInt::from(10u32).pow((k - j - 1) as u32);
                    value += Rational::new(numer, denom);
                    j = k;
                }
                toks.push((Tok::Num(value), pos));
                i = j;
            }
            c if c.is_ascii_alphabetic() => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == '_') {
                    j += 1;
                }
                let mut name: String = bytes[i..j].iter().collect();
                // Product-chart coordinates carry a "_(k)" suffix.
                if name.ends_with('_') && j < bytes.len() && bytes[j] == '(' {
                    let mut k = j + 1;
                    while k < bytes.len() && bytes[k].is_ascii_digit() {
                        k += 1;
                    }
                    if k > j + 1 && k < bytes.len() && bytes[k] == ')' {
                        let digits: String = bytes[j + 1..k].iter().collect();
                        name.push('(');
                        name.push_str(&digits);
                        name.push(')');
                        j = k + 1;
                    }
                }
                toks.push((Tok::Ident(name), pos));
                i = j;
            }
            other => {
                return Err(ExprError::Syntax {
                    pos,
                    msg: format!("unexpected character `{other}`"),
                });
            }
        }
    }
    Ok(toks)
}

struct Parser<'a> {
    toks: &'a [(Tok, usize)],
    idx: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.idx).map(|(_, p)| *p).unwrap_or(self.end)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.idx).map(|(t, _)| t.clone());
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    fn expect(&mut self, t: Tok) -> ExprResult<()> {
        let pos = self.pos();
        match self.next() {
            Some(ref got) if *got == t => Ok(()),
            got => Err(ExprError::Syntax {
                pos,
                msg: format!("expected {t:?}, found {got:?}"),
            }),
        }
    }
}

// ---- rational-function expressions --------------------------------------

struct RfCtx<'a> {
    vars: &'a VarSet,
}

impl RfCtx<'_> {
    fn lookup(&self, name: &str, pos: usize) -> ExprResult<usize> {
        self.vars
            .iter()
            .position(|v| v == name)
            .ok_or(ExprError::UnknownVariable {
                name: name.to_string(),
                pos,
            })
    }
}

fn rf_expr(p: &mut Parser, ctx: &RfCtx) -> ExprResult<RatFn> {
    let mut acc = rf_term(p, ctx)?;
    loop {
        match p.peek() {
            Some(Tok::Plus) => {
                p.next();
                acc = acc.add(&rf_term(p, ctx)?);
            }
            Some(Tok::Minus) => {
                p.next();
                acc = acc.sub(&rf_term(p, ctx)?);
            }
            _ => return Ok(acc),
        }
    }
}

fn rf_term(p: &mut Parser, ctx: &RfCtx) -> ExprResult<RatFn> {
    let mut acc = rf_factor(p, ctx)?;
    loop {
        match p.peek() {
            Some(Tok::Star) => {
                p.next();
                acc = acc.mul(&rf_factor(p, ctx)?);
            }
            Some(Tok::Slash) => {
                p.next();
                let rhs = rf_factor(p, ctx)?;
                acc = acc.div(&rhs)?;
            }
            _ => return Ok(acc),
        }
    }
}

fn rf_factor(p: &mut Parser, ctx: &RfCtx) -> ExprResult<RatFn> {
    if let Some(Tok::Minus) = p.peek() {
        p.next();
        return Ok(rf_factor(p, ctx)?.neg());
    }
    rf_power(p, ctx)
}

fn rf_power(p: &mut Parser, ctx: &RfCtx) -> ExprResult<RatFn> {
    let base = rf_atom(p, ctx)?;
    if let Some(Tok::Caret) = p.peek() {
        p.next();
        let e = parse_exponent(p)?;
        return base.pow(e);
    }
    Ok(base)
}

fn parse_exponent(p: &mut Parser) -> ExprResult<i32> {
    let pos = p.pos();
    let (neg, tok) = match p.next() {
        Some(Tok::Minus) => (true, p.next()),
        t => (false, t),
    };
    match tok {
        Some(Tok::Num(q)) if q.is_integer() => {
            use num::ToPrimitive;
            let v = q.to_integer().to_i32().ok_or(ExprError::Syntax {
                pos,
                msg: "exponent out of range".into(),
            })?;
            Ok(if neg { -v } else { v })
        }
        Some(Tok::LParen) => {
            let inner = parse_exponent(p)?;
            p.expect(Tok::RParen)?;
            Ok(if neg { -inner } else { inner })
        }
        _ => Err(ExprError::Syntax {
            pos,
            msg: "expected integer exponent".into(),
        }),
    }
}

fn rf_atom(p: &mut Parser, ctx: &RfCtx) -> ExprResult<RatFn> {
    let pos = p.pos();
    match p.next() {
        Some(Tok::Num(q)) => Ok(RatFn::constant(ctx.vars, q)),
        Some(Tok::Ident(name)) => {
            let idx = ctx.lookup(&name, pos)?;
            Ok(RatFn::var(ctx.vars, idx))
        }
        Some(Tok::LParen) => {
            let inner = rf_expr(p, ctx)?;
            p.expect(Tok::RParen)?;
            Ok(inner)
        }
        other => Err(ExprError::Syntax {
            pos,
            msg: format!("expected number, variable, or `(`, found {other:?}"),
        }),
    }
}

/// Parse a rational-function expression over the declared variables.
pub fn parse_rf(text: &str, vars: &VarSet) -> ExprResult<RatFn> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks: &toks,
        idx: 0,
        end: text.len(),
    };
    let ctx = RfCtx { vars };
    let out = rf_expr(&mut p, &ctx)?;
    if p.idx != toks.len() {
        return Err(ExprError::Syntax {
            pos: p.pos(),
            msg: "trailing input".into(),
        });
    }
    Ok(out)
}

/// Parse an expression required to be polynomial.
pub fn parse_poly(text: &str, vars: &VarSet) -> ExprResult<MultiPoly> {
    let rf = parse_rf(text, vars)?;
    if !rf.is_polynomial() {
        return Err(ExprError::Syntax {
            pos: 0,
            msg: "expected a polynomial expression".into(),
        });
    }
    Ok(rf.num().clone())
}

// ---- time expressions ----------------------------------------------------

fn t_expr(p: &mut Parser) -> ExprResult<TimeExpr> {
    let mut acc = t_term(p)?;
    loop {
        match p.peek() {
            Some(Tok::Plus) => {
                p.next();
                acc = TimeExpr::Add(Box::new(acc), Box::new(t_term(p)?));
            }
            Some(Tok::Minus) => {
                p.next();
                acc = TimeExpr::Sub(Box::new(acc), Box::new(t_term(p)?));
            }
            _ => return Ok(acc),
        }
    }
}

fn t_term(p: &mut Parser) -> ExprResult<TimeExpr> {
    let mut acc = t_factor(p)?;
    loop {
        match p.peek() {
            Some(Tok::Star) => {
                p.next();
                acc = TimeExpr::Mul(Box::new(acc), Box::new(t_factor(p)?));
            }
            Some(Tok::Slash) => {
                p.next();
                let rhs = t_factor(p)?;
                // Fold rational literals so printing round-trips structurally.
                acc = match (acc, rhs) {
                    (TimeExpr::Const(a), TimeExpr::Const(b)) if !num::Zero::is_zero(&b) => {
                        TimeExpr::Const(a / b)
                    }
                    (a, b) => TimeExpr::Div(Box::new(a), Box::new(b)),
                };
            }
            _ => return Ok(acc),
        }
    }
}

fn t_factor(p: &mut Parser) -> ExprResult<TimeExpr> {
    if let Some(Tok::Minus) = p.peek() {
        p.next();
        return Ok(match t_factor(p)? {
            TimeExpr::Const(c) => TimeExpr::Const(-c),
            e => TimeExpr::Neg(Box::new(e)),
        });
    }
    t_power(p)
}

fn t_power(p: &mut Parser) -> ExprResult<TimeExpr> {
    let base = t_atom(p)?;
    if let Some(Tok::Caret) = p.peek() {
        p.next();
        let e = parse_exponent(p)?;
        return Ok(TimeExpr::Pow(Box::new(base), e));
    }
    Ok(base)
}

fn t_atom(p: &mut Parser) -> ExprResult<TimeExpr> {
    let pos = p.pos();
    match p.next() {
        Some(Tok::Num(q)) => Ok(TimeExpr::Const(q)),
        Some(Tok::Ident(name)) => {
            if let Some(Tok::LParen) = p.peek() {
                let func: fn(Box<TimeExpr>) -> TimeExpr = match name.as_str() {
                    "sin" => TimeExpr::Sin,
                    "cos" => TimeExpr::Cos,
                    "exp" => TimeExpr::Exp,
                    _ => {
                        return Err(ExprError::Syntax {
                            pos,
                            msg: format!("unknown function `{name}`"),
                        })
                    }
                };
                p.next();
                let arg = t_expr(p)?;
                p.expect(Tok::RParen)?;
                Ok(func(Box::new(arg)))
            } else if name == "t" {
                Ok(TimeExpr::T)
            } else {
                Ok(TimeExpr::Sym(name))
            }
        }
        Some(Tok::LParen) => {
            let inner = t_expr(p)?;
            p.expect(Tok::RParen)?;
            Ok(inner)
        }
        other => Err(ExprError::Syntax {
            pos,
            msg: format!("expected number, `t`, symbol, or `(`, found {other:?}"),
        }),
    }
}

/// Parse a time-dependent coefficient expression.
pub fn parse_time(text: &str) -> ExprResult<TimeExpr> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks: &toks,
        idx: 0,
        end: text.len(),
    };
    let out = t_expr(&mut p)?;
    if p.idx != toks.len() {
        return Err(ExprError::Syntax {
            pos: p.pos(),
            msg: "trailing input".into(),
        });
    }
    Ok(out)
}

#[allow(dead_code)]
fn is_one(q: &Rational) -> bool {
    q.is_one()
}

#[allow(dead_code)]
fn is_zero(q: &Rational) -> bool {
    q.is_zero()
}

#[cfg(test)]
mod tests {
    use super::super::poly::varset;
    use super::super::q;
    use super::*;

    #[test]
    fn parses_paper_coefficients() {
        let vs = varset(&["x", "y", "z"]);
        let f = parse_rf("4*x^2", &vs).unwrap();
        let x = MultiPoly::var(&vs, 0);
        assert_eq!(f, RatFn::from_poly(x.pow(2).scale(&q(4))));

        // Algebraic identity normalizes away.
        let g = parse_rf("(x^2-y^2)/(x-y)", &vs).unwrap();
        let y = MultiPoly::var(&vs, 1);
        assert_eq!(g, RatFn::from_poly(x.add(&y)));

        // §-style contact Hamiltonian.
        let h = parse_rf("-4*x^2/y^2", &vs).unwrap();
        assert_eq!(h.num(), &x.pow(2).scale(&q(-4)));
        assert_eq!(h.den(), &y.pow(2));
    }

    #[test]
    fn rejects_bad_input() {
        let vs = varset(&["x", "y"]);
        assert!(matches!(
            parse_rf("x + w", &vs),
            Err(ExprError::UnknownVariable { ref name, .. }) if name == "w"
        ));
        assert!(matches!(
            parse_rf("x +", &vs),
            Err(ExprError::Syntax { .. })
        ));
        assert!(matches!(
            parse_rf("x/(y - y)", &vs),
            Err(ExprError::ZeroDenominator)
        ));
    }

    #[test]
    fn product_coordinate_names() {
        let vs = varset(&["x_(1)", "y_(1)", "x_(2)"]);
        let f = parse_rf("x_(1)*y_(1) - x_(2)", &vs).unwrap();
        assert!(f.is_polynomial());
        assert_eq!(f.to_string(), "x_(1)*y_(1) - x_(2)");
    }

    #[test]
    fn print_parse_roundtrip() {
        let vs = varset(&["x", "y", "z"]);
        for text in [
            "4*x^2",
            "-4*x^2/y^2",
            "(x^2-y^2)/(x-y)",
            "x*y*z - 1/2*y + 7",
            "1/(y^2*z)",
            "(2*x - y)/(3*z^4 - x*y)",
        ] {
            let f = parse_rf(text, &vs).unwrap();
            let reparsed = parse_rf(&f.to_string(), &vs).unwrap();
            assert_eq!(f, reparsed, "round-trip failed for {text}");
        }
    }

    #[test]
    fn negative_exponent() {
        let vs = varset(&["y"]);
        let f = parse_rf("y^-2", &vs).unwrap();
        let g = parse_rf("1/y^2", &vs).unwrap();
        assert_eq!(f, g);
    }
}
