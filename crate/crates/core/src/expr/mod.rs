//! Equation trees over a small trigonometric/algebraic vocabulary.
//!
//! Subtraction and division are not part of the vocabulary: `a - b` is
//! written `(+ a (* -1 b))` and `a / b` is `(* a (pow b -1))`. Every operator
//! is at most binary; n-ary `+`/`*` in source text are right-folded.

mod completion;
mod generate;
mod grammar;
mod io;
mod oracle;
mod parse;

pub use completion::{completion_candidates, completion_candidates_at_depth, CompletionInstance};
pub use generate::{
    generate_dataset, mutate, split_by_depth, DepthStats, GenConfig, GeneratedData, MutationKind,
    DEPTH_CORRECT_FRACTION, DEPTH_COUNTS,
};
pub use grammar::{count_trees, decode_tree, sample_tree, Grammar};
pub use io::{default_axioms, read_axioms, read_dataset, write_dataset, DEFAULT_AXIOMS};
pub use oracle::{
    eval_branches, label_identity, numeric_eval, Assignment, EvalFailure, OracleVerdict, DEFAULT_TOL, DEFAULT_TRIALS,
    MIN_VALID_POINTS,
};
pub use parse::{parse, parse_equation};

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("unknown token `{token}` at byte {pos}")]
    UnknownToken { token: String, pos: usize },
    #[error("`{symbol}` expects {expected} argument(s), got {got} (at byte {pos})")]
    Arity {
        symbol: &'static str,
        expected: usize,
        got: usize,
        pos: usize,
    },
    #[error("unbalanced parentheses at byte {pos}")]
    Unbalanced { pos: usize },
    #[error("unexpected `{found}` at byte {pos}")]
    Unexpected { found: String, pos: usize },
    #[error("empty input")]
    Empty,
    #[error("not an equation: {0}")]
    NotEquation(String),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
}

/// Every token of the vocabulary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Eq,
    Add,
    Mul,
    Pow,
    Sqrt,
    Sin,
    Cos,
    Tan,
    Sec,
    Csc,
    X,
    Y,
    Z,
    W,
    NegOne,
    Zero,
    One,
    Two,
    Three,
    Four,
    Pi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymbolKind {
    Operator,
    Variable,
    Number,
    Constant,
}

impl Symbol {
    pub const ALL: [Symbol; 21] = [
        Symbol::Eq,
        Symbol::Add,
        Symbol::Mul,
        Symbol::Pow,
        Symbol::Sqrt,
        Symbol::Sin,
        Symbol::Cos,
        Symbol::Tan,
        Symbol::Sec,
        Symbol::Csc,
        Symbol::X,
        Symbol::Y,
        Symbol::Z,
        Symbol::W,
        Symbol::NegOne,
        Symbol::Zero,
        Symbol::One,
        Symbol::Two,
        Symbol::Three,
        Symbol::Four,
        Symbol::Pi,
    ];
    pub const UNARY: [Symbol; 6] = [
        Symbol::Sqrt,
        Symbol::Sin,
        Symbol::Cos,
        Symbol::Tan,
        Symbol::Sec,
        Symbol::Csc,
    ];
    /// Binary operators allowed below the equality.
    pub const BINARY: [Symbol; 3] = [Symbol::Add, Symbol::Mul, Symbol::Pow];
    pub const LEAVES: [Symbol; 11] = [
        Symbol::X,
        Symbol::Y,
        Symbol::Z,
        Symbol::W,
        Symbol::NegOne,
        Symbol::Zero,
        Symbol::One,
        Symbol::Two,
        Symbol::Three,
        Symbol::Four,
        Symbol::Pi,
    ];
    pub const VARIABLES: [Symbol; 4] = [Symbol::X, Symbol::Y, Symbol::Z, Symbol::W];
    pub const NUMBERS: [Symbol; 6] = [
        Symbol::NegOne,
        Symbol::Zero,
        Symbol::One,
        Symbol::Two,
        Symbol::Three,
        Symbol::Four,
    ];

    pub fn kind(self) -> SymbolKind {
        use Symbol::*;
        match self {
            Eq | Add | Mul | Pow | Sqrt | Sin | Cos | Tan | Sec | Csc => SymbolKind::Operator,
            X | Y | Z | W => SymbolKind::Variable,
            NegOne | Zero | One | Two | Three | Four => SymbolKind::Number,
            Pi => SymbolKind::Constant,
        }
    }

    pub fn arity(self) -> usize {
        use Symbol::*;
        match self {
            Eq | Add | Mul | Pow => 2,
            Sqrt | Sin | Cos | Tan | Sec | Csc => 1,
            _ => 0,
        }
    }

    pub fn is_leaf(self) -> bool {
        self.arity() == 0
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, Symbol::Add | Symbol::Mul | Symbol::Eq)
    }

    /// Position in [`Symbol::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    /// Canonical printed token.
    pub fn token(self) -> &'static str {
        use Symbol::*;
        match self {
            Eq => "=",
            Add => "+",
            Mul => "*",
            Pow => "pow",
            Sqrt => "sqrt",
            Sin => "sin",
            Cos => "cos",
            Tan => "tan",
            Sec => "sec",
            Csc => "csc",
            X => "x",
            Y => "y",
            Z => "z",
            W => "w",
            NegOne => "-1",
            Zero => "0",
            One => "1",
            Two => "2",
            Three => "3",
            Four => "4",
            Pi => "pi",
        }
    }

    /// Identifier-safe name, used for parameter names.
    pub fn name(self) -> &'static str {
        use Symbol::*;
        match self {
            Eq => "eq",
            Add => "add",
            Mul => "mul",
            NegOne => "neg1",
            Zero => "n0",
            One => "n1",
            Two => "n2",
            Three => "n3",
            Four => "n4",
            other => other.token(),
        }
    }

    pub fn from_token(token: &str) -> Option<Symbol> {
        use Symbol::*;
        Some(match token {
            "=" | "eq" => Eq,
            "+" | "add" => Add,
            "*" | "mul" => Mul,
            "^" | "pow" => Pow,
            "sqrt" => Sqrt,
            "sin" => Sin,
            "cos" => Cos,
            "tan" => Tan,
            "sec" => Sec,
            "csc" => Csc,
            "x" => X,
            "y" => Y,
            "z" => Z,
            "w" => W,
            "-1" => NegOne,
            "0" => Zero,
            "1" => One,
            "2" => Two,
            "3" => Three,
            "4" => Four,
            "pi" | "π" => Pi,
            _ => return None,
        })
    }

    /// Numeric value of a number or constant leaf.
    pub fn value(self) -> Option<f64> {
        use Symbol::*;
        Some(match self {
            NegOne => -1.0,
            Zero => 0.0,
            One => 1.0,
            Two => 2.0,
            Three => 3.0,
            Four => 4.0,
            Pi => std::f64::consts::PI,
            _ => return None,
        })
    }

    pub fn variable_index(self) -> Option<usize> {
        Symbol::VARIABLES.iter().position(|&v| v == self)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// A parse tree node. Arity always matches [`Symbol::arity`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Expr {
    symbol: Symbol,
    children: Vec<Expr>,
}

/// Child-index path from the root to a node.
pub type NodePath = Vec<usize>;

impl Expr {
    pub fn new(symbol: Symbol, children: Vec<Expr>) -> Result<Expr, ExprError> {
        if children.len() != symbol.arity() {
            return Err(ExprError::Arity {
                symbol: symbol.token(),
                expected: symbol.arity(),
                got: children.len(),
                pos: 0,
            });
        }
        Ok(Expr { symbol, children })
    }

    pub fn leaf(symbol: Symbol) -> Expr {
        assert!(symbol.is_leaf(), "{symbol} is not a leaf");
        Expr {
            symbol,
            children: Vec::new(),
        }
    }

    pub fn unary(symbol: Symbol, child: Expr) -> Expr {
        assert_eq!(symbol.arity(), 1, "{symbol} is not unary");
        Expr {
            symbol,
            children: vec![child],
        }
    }

    pub fn binary(symbol: Symbol, left: Expr, right: Expr) -> Expr {
        assert_eq!(symbol.arity(), 2, "{symbol} is not binary");
        Expr {
            symbol,
            children: vec![left, right],
        }
    }

    pub fn equation(left: Expr, right: Expr) -> Expr {
        Expr::binary(Symbol::Eq, left, right)
    }

    pub fn symbol(&self) -> Symbol {
        self.symbol
    }

    pub fn children(&self) -> &[Expr] {
        &self.children
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn is_equation(&self) -> bool {
        self.symbol == Symbol::Eq && self.children.iter().all(|c| !c.contains(Symbol::Eq))
    }

    pub fn contains(&self, symbol: Symbol) -> bool {
        self.symbol == symbol || self.children.iter().any(|c| c.contains(symbol))
    }

    /// Left and right sides of an equation.
    pub fn sides(&self) -> Option<(&Expr, &Expr)> {
        match (self.symbol, self.children.as_slice()) {
            (Symbol::Eq, [l, r]) => Some((l, r)),
            _ => None,
        }
    }

    pub fn size(&self) -> usize {
        1 + self.children.iter().map(Expr::size).sum::<usize>()
    }

    /// Number of nodes on the longest root-to-leaf path, both ends included.
    pub fn height(&self) -> usize {
        1 + self.children.iter().map(Expr::height).max().unwrap_or(0)
    }

    /// Problem depth: for an equation, the height of its deeper side (the
    /// equality itself is not counted); for any other tree, its height.
    pub fn depth(&self) -> usize {
        match self.sides() {
            Some((l, r)) => l.height().max(r.height()),
            None => self.height(),
        }
    }

    /// All node paths in pre-order, root first.
    pub fn paths(&self) -> Vec<NodePath> {
        let mut out = Vec::new();
        let mut stack = vec![(self, Vec::new())];
        while let Some((node, path)) = stack.pop() {
            for (i, c) in node.children.iter().enumerate().rev() {
                let mut p = path.clone();
                p.push(i);
                stack.push((c, p));
            }
            out.push(path);
        }
        out
    }

    pub fn get(&self, path: &[usize]) -> Option<&Expr> {
        let mut node = self;
        for &i in path {
            node = node.children.get(i)?;
        }
        Some(node)
    }

    pub fn get_mut(&mut self, path: &[usize]) -> Option<&mut Expr> {
        let mut node = self;
        for &i in path {
            node = node.children.get_mut(i)?;
        }
        Some(node)
    }

    /// Copy of `self` with the subtree at `path` replaced.
    pub fn replace(&self, path: &[usize], with: Expr) -> Option<Expr> {
        let mut out = self.clone();
        *out.get_mut(path)? = with;
        Some(out)
    }

    /// Replaces every leaf equal to `var` with `with`.
    pub fn substitute(&self, var: Symbol, with: &Expr) -> Expr {
        if self.symbol == var && self.is_leaf() {
            return with.clone();
        }
        Expr {
            symbol: self.symbol,
            children: self.children.iter().map(|c| c.substitute(var, with)).collect(),
        }
    }

    /// Distinct symbols in the tree, in first-seen pre-order.
    pub fn symbols(&self) -> Vec<Symbol> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if !out.contains(&e.symbol) {
                out.push(e.symbol);
            }
        });
        out
    }

    pub fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        for c in &self.children {
            c.visit(f);
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.children.is_empty() {
            return f.write_str(self.symbol.token());
        }
        write!(f, "({}", self.symbol.token())?;
        for c in &self.children {
            write!(f, " {c}")?;
        }
        f.write_str(")")
    }
}

/// Ground-truth class of an equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Label {
    Correct,
    Incorrect,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Correct => "Correct",
            Label::Incorrect => "Incorrect",
        }
    }

    pub fn target(self) -> f64 {
        match self {
            Label::Correct => 1.0,
            Label::Incorrect => 0.0,
        }
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Correct" => Ok(Label::Correct),
            "Incorrect" => Ok(Label::Incorrect),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledEquation {
    pub expr: Expr,
    pub label: Label,
    pub depth: usize,
}

impl LabeledEquation {
    pub fn new(expr: Expr, label: Label) -> Self {
        let depth = expr.depth();
        LabeledEquation { expr, label, depth }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub items: Vec<LabeledEquation>,
}

impl Dataset {
    pub fn new(split: Split, items: Vec<LabeledEquation>) -> Self {
        Dataset { split, items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn correct_fraction(&self) -> f64 {
        if self.items.is_empty() {
            return 0.0;
        }
        self.items.iter().filter(|i| i.label == Label::Correct).count() as f64 / self.items.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The seven example rows used throughout the tests, with their depths.
    pub(crate) const SHOWCASE: [(&str, Label, usize); 7] = [
        ("(= (+ (* (sqrt 1) 1 y) x) (+ (* 1 y) x))", Label::Correct, 4),
        ("(= (sec (+ x pi)) (* -1 (sec (sec x))))", Label::Incorrect, 4),
        (
            "(= (* y (+ (* (pow 1 1) (+ 3 (* -1 (pow 4 (* 0 1))))) (pow x 1))) (* y (pow 2 0) (+ 2 x)))",
            Label::Correct,
            8,
        ),
        (
            "(= (* (sqrt (+ 1 (* -1 (pow (cos (+ y x)) (sqrt (csc 2)))))) (pow (cos (+ y x)) -1)) (tan (+ (pow y 1) x)))",
            Label::Incorrect,
            8,
        ),
        (
            "(= (+ (pow 2 -1) (+ (* (* -1 (pow 2 -1)) (* -1 (sqrt (+ 1 (* -1 (pow (sin (* (sqrt 4) (+ pi (* x -1)))) 2)))))) (pow (cos x) (sqrt 4)))) 1)",
            Label::Correct,
            13,
        ),
        (
            "(= (pow (+ (cos (+ (pow y 1) x)) z) w) (pow (+ (* (cos x) (cos (+ 0 y))) (+ (* (* -1 (sqrt (+ 1 (* -1 (pow (cos (+ y (* 2 pi))) 2))))) (sin x)) z)) w))",
            Label::Correct,
            13,
        ),
        (
            "(= (sin (+ (* (pow (sqrt 4) -1) pi) (* -1 (* (sec (+ (pow (pow (csc x) 2) -1) (pow (sin (+ (+ (+ 1 (* -1 1)) x) (* (pow 2 -1) pi))) 2))) x)))) (cos (+ 0 x)))",
            Label::Incorrect,
            13,
        ),
    ];

    #[test]
    fn showcase_depths() {
        for (text, _, depth) in SHOWCASE {
            let e = parse_equation(text).unwrap();
            assert_eq!(e.depth(), depth, "{text}");
        }
    }

    #[test]
    fn paths_and_replace() {
        let e = parse("(+ x (sin y))").unwrap();
        assert_eq!(e.paths(), vec![vec![], vec![0], vec![1], vec![1, 0]]);
        let r = e.replace(&[1, 0], Expr::leaf(Symbol::Pi)).unwrap();
        assert_eq!(r.to_string(), "(+ x (sin pi))");
        assert!(e.replace(&[3], Expr::leaf(Symbol::Pi)).is_none());
    }

    #[test]
    fn substitute_hits_every_occurrence() {
        let e = parse("(= (* x x) (pow x 2))").unwrap();
        let s = e.substitute(Symbol::X, &parse("(sin y)").unwrap());
        assert_eq!(s.to_string(), "(= (* (sin y) (sin y)) (pow (sin y) 2))");
    }

    #[test]
    fn symbol_tables_are_consistent() {
        for (i, s) in Symbol::ALL.iter().enumerate() {
            assert_eq!(s.index(), i);
            assert_eq!(Symbol::from_token(s.token()), Some(*s));
        }
        assert_eq!(
            Symbol::LEAVES.len() + Symbol::UNARY.len() + Symbol::BINARY.len() + 1,
            Symbol::ALL.len()
        );
    }
}
