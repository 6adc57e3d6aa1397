use super::{Expr, ExprError, Symbol};

#[derive(Debug, PartialEq)]
enum Tok<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn tokenize(text: &str) -> Vec<(Tok<'_>, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        let delim = ch == '(' || ch == ')' || ch.is_whitespace();
        if delim {
            if let Some(s) = start.take() {
                out.push((Tok::Atom(&text[s..i]), s));
            }
            match ch {
                '(' => out.push((Tok::Open, i)),
                ')' => out.push((Tok::Close, i)),
                _ => {}
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((Tok::Atom(&text[s..]), s));
    }
    out
}

struct Parser<'a> {
    toks: Vec<(Tok<'a>, usize)>,
    at: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn pos(&self) -> usize {
        self.toks.get(self.at).map(|t| t.1).unwrap_or(self.end)
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let pos = self.pos();
        match self.toks.get(self.at) {
            None => Err(ExprError::Unbalanced { pos }),
            Some((Tok::Close, _)) => Err(ExprError::Unbalanced { pos }),
            Some((Tok::Atom(a), _)) => {
                let a = *a;
                self.at += 1;
                let symbol = Symbol::from_token(a).ok_or_else(|| ExprError::UnknownToken {
                    token: a.to_string(),
                    pos,
                })?;
                if !symbol.is_leaf() {
                    return Err(ExprError::Arity {
                        symbol: symbol.token(),
                        expected: symbol.arity(),
                        got: 0,
                        pos,
                    });
                }
                Ok(Expr::leaf(symbol))
            }
            Some((Tok::Open, _)) => {
                self.at += 1;
                let head_pos = self.pos();
                let head = match self.toks.get(self.at) {
                    Some((Tok::Atom(a), _)) => *a,
                    Some((Tok::Open, p)) => {
                        return Err(ExprError::Unexpected {
                            found: "(".into(),
                            pos: *p,
                        })
                    }
                    _ => return Err(ExprError::Unbalanced { pos: head_pos }),
                };
                self.at += 1;
                let symbol = Symbol::from_token(head).ok_or_else(|| ExprError::UnknownToken {
                    token: head.to_string(),
                    pos: head_pos,
                })?;
                let mut args = Vec::new();
                loop {
                    match self.toks.get(self.at) {
                        Some((Tok::Close, _)) => {
                            self.at += 1;
                            break;
                        }
                        None => return Err(ExprError::Unbalanced { pos: self.end }),
                        _ => args.push(self.expr()?),
                    }
                }
                build(symbol, args, head_pos)
            }
        }
    }
}

fn build(symbol: Symbol, mut args: Vec<Expr>, pos: usize) -> Result<Expr, ExprError> {
    let arity_err = |got| ExprError::Arity {
        symbol: symbol.token(),
        expected: symbol.arity(),
        got,
        pos,
    };
    let variadic = matches!(symbol, Symbol::Add | Symbol::Mul);
    if symbol.is_leaf() || (variadic && args.len() < 2) || (!variadic && args.len() != symbol.arity()) {
        return Err(arity_err(args.len()));
    }
    if variadic && args.len() > 2 {
        // (+ a b c) -> (+ a (+ b c))
        let mut acc = args.pop().expect("len > 2");
        while let Some(prev) = args.pop() {
            acc = Expr::binary(symbol, prev, acc);
        }
        return Ok(acc);
    }
    Expr::new(symbol, args).map_err(|_| arity_err(0))
}

/// Parses one prefix s-expression, e.g. `(= (+ x 0) x)`.
///
/// Operators accept their printed token or its word form (`+`/`add`,
/// `*`/`mul`, `=`/`eq`, `pow`/`^`). `+` and `*` take two or more operands and
/// are right-folded into binary nodes.
pub fn parse(text: &str) -> Result<Expr, ExprError> {
    let toks = tokenize(text);
    if toks.is_empty() {
        return Err(ExprError::Empty);
    }
    let mut p = Parser {
        toks,
        at: 0,
        end: text.len(),
    };
    let e = p.expr()?;
    if let Some((tok, pos)) = p.toks.get(p.at) {
        return Err(match tok {
            Tok::Close => ExprError::Unbalanced { pos: *pos },
            Tok::Open => ExprError::Unexpected {
                found: "(".into(),
                pos: *pos,
            },
            Tok::Atom(a) => ExprError::Unexpected {
                found: a.to_string(),
                pos: *pos,
            },
        });
    }
    Ok(e)
}

/// Parses a full equation: an `=` root with no other `=` below it.
pub fn parse_equation(text: &str) -> Result<Expr, ExprError> {
    let e = parse(text)?;
    if e.is_equation() {
        Ok(e)
    } else {
        Err(ExprError::NotEquation(text.trim().to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_sum() {
        let e = parse("(+ x y)").unwrap();
        assert_eq!(e.size(), 3);
        assert_eq!(e.symbol(), Symbol::Add);
    }

    #[test]
    fn nary_is_right_folded() {
        let e = parse("(* x y z)").unwrap();
        assert_eq!(e.to_string(), "(* x (* y z))");
        let e = parse("(+ 1 2 3 4)").unwrap();
        assert_eq!(e.to_string(), "(+ 1 (+ 2 (+ 3 4)))");
    }

    #[test]
    fn word_aliases() {
        assert_eq!(parse("(add x (mul y 2))").unwrap(), parse("(+ x (* y 2))").unwrap());
        assert_eq!(parse("(eq (^ x 2) 1)").unwrap(), parse("(= (pow x 2) 1)").unwrap());
    }

    #[test]
    fn arity_error_for_binary_sin() {
        assert!(matches!(
            parse("(sin x y)"),
            Err(ExprError::Arity {
                symbol: "sin",
                expected: 1,
                got: 2,
                pos: 1
            })
        ));
        assert!(matches!(parse("(+ x)"), Err(ExprError::Arity { .. })));
        assert!(matches!(parse("(pow x y z)"), Err(ExprError::Arity { .. })));
        assert!(matches!(parse("(x)"), Err(ExprError::Arity { .. })));
        assert!(matches!(parse("sin"), Err(ExprError::Arity { .. })));
    }

    #[test]
    fn unknown_token_is_positional() {
        assert_eq!(
            parse("(+ x foo)"),
            Err(ExprError::UnknownToken {
                token: "foo".into(),
                pos: 5
            })
        );
        assert!(matches!(parse("(+ x 7)"), Err(ExprError::UnknownToken { .. })));
    }

    #[test]
    fn unbalanced_parens() {
        assert!(matches!(parse("(+ x y"), Err(ExprError::Unbalanced { pos: 6 })));
        assert!(matches!(parse("(+ x y))"), Err(ExprError::Unbalanced { pos: 7 })));
        assert!(matches!(parse(")"), Err(ExprError::Unbalanced { .. })));
        assert_eq!(parse("   "), Err(ExprError::Empty));
    }

    #[test]
    fn equation_shape_is_enforced() {
        assert!(parse_equation("(+ x y)").is_err());
        assert!(parse_equation("(= x (= y y))").is_err());
        assert!(parse_equation("(= x x)").is_ok());
    }

    #[test]
    fn printing_is_canonical() {
        let e = parse("(eq (add x 0) x)").unwrap();
        assert_eq!(e.to_string(), "(= (+ x 0) x)");
    }
}
