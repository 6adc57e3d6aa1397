use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Expr, Symbol};

/// Sample points requested per identity check.
pub const DEFAULT_TRIALS: usize = 16;
/// Relative agreement tolerance.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Fewer valid points than this and the verdict is undecided.
pub const MIN_VALID_POINTS: usize = 8;

/// Variables are sampled uniformly from this interval.
const SAMPLE_RANGE: f64 = 2.0;
/// Reciprocal-style operations fail when their denominator is this small.
const POLE_GUARD: f64 = 1e-6;
/// Results beyond this magnitude are treated as evaluation failures.
const MAGNITUDE_CAP: f64 = 1e12;
/// Per-node cap on the number of sqrt branch values tracked.
const MAX_BRANCHES: usize = 64;
/// Fixed seed for the sample points, so verdicts are a pure function of the
/// equation.
const ORACLE_SEED: u64 = 0x005e_ed0f_1de7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalFailure {
    /// sqrt of a negative number, fractional power of a negative base.
    Domain,
    /// Division by (near) zero: sec/csc/tan poles, negative powers of zero.
    Pole,
    Overflow,
    UnboundVariable,
    /// An `=` node was evaluated as a value.
    Equality,
}

/// Values for `x, y, z, w`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Assignment(pub [f64; 4]);

impl Assignment {
    pub fn get(&self, var: Symbol) -> Option<f64> {
        var.variable_index().map(|i| self.0[i])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OracleVerdict {
    Correct,
    Incorrect,
    Undecided,
}

fn finish(v: f64) -> Result<f64, EvalFailure> {
    if !v.is_finite() || v.abs() > MAGNITUDE_CAP {
        Err(EvalFailure::Overflow)
    } else {
        Ok(v)
    }
}

fn pow(base: f64, exp: f64) -> Result<f64, EvalFailure> {
    if base < 0.0 && exp.fract() != 0.0 {
        return Err(EvalFailure::Domain);
    }
    if base.abs() < POLE_GUARD && exp < 0.0 {
        return Err(EvalFailure::Pole);
    }
    finish(base.powf(exp))
}

fn reciprocal(v: f64) -> Result<f64, EvalFailure> {
    if v.abs() < POLE_GUARD {
        Err(EvalFailure::Pole)
    } else {
        finish(1.0 / v)
    }
}

/// Principal square root; tiny negatives from rounding are read as zero.
fn sqrt_magnitude(v: f64) -> Result<f64, EvalFailure> {
    if v < -1e-12 {
        Err(EvalFailure::Domain)
    } else {
        Ok(v.max(0.0).sqrt())
    }
}

fn apply_unary(op: Symbol, a: f64) -> Result<f64, EvalFailure> {
    match op {
        Symbol::Sqrt => sqrt_magnitude(a),
        Symbol::Sin => finish(a.sin()),
        Symbol::Cos => finish(a.cos()),
        Symbol::Tan => {
            let c = a.cos();
            if c.abs() < POLE_GUARD {
                Err(EvalFailure::Pole)
            } else {
                finish(a.sin() / c)
            }
        }
        Symbol::Sec => reciprocal(a.cos()),
        Symbol::Csc => reciprocal(a.sin()),
        _ => unreachable!("{op} is not unary"),
    }
}

fn apply_binary(op: Symbol, a: f64, b: f64) -> Result<f64, EvalFailure> {
    match op {
        Symbol::Add => finish(a + b),
        Symbol::Mul => finish(a * b),
        Symbol::Pow => pow(a, b),
        Symbol::Eq => Err(EvalFailure::Equality),
        _ => unreachable!("{op} is not binary"),
    }
}

/// Evaluates one side of an equation with the principal square root.
pub fn numeric_eval(e: &Expr, at: &Assignment) -> Result<f64, EvalFailure> {
    let sym = e.symbol();
    match e.children() {
        [] => match sym.kind() {
            super::SymbolKind::Variable => at.get(sym).ok_or(EvalFailure::UnboundVariable),
            _ => Ok(sym.value().expect("leaf value")),
        },
        [a] => apply_unary(sym, numeric_eval(a, at)?),
        [a, b] => apply_binary(sym, numeric_eval(a, at)?, numeric_eval(b, at)?),
        _ => unreachable!("arity > 2"),
    }
}

fn push_unique(out: &mut Vec<f64>, v: f64) {
    if out.len() >= MAX_BRANCHES {
        return;
    }
    if !out.iter().any(|&u| (u - v).abs() <= 1e-12 * (1.0 + u.abs())) {
        out.push(v);
    }
}

/// Evaluates one side treating every `sqrt` as two-valued (`±√v`).
///
/// Returns every reachable value (deduplicated, capped per node). Branch
/// combinations that hit a domain error are dropped; the evaluation fails
/// only when no combination survives.
pub fn eval_branches(e: &Expr, at: &Assignment) -> Result<Vec<f64>, EvalFailure> {
    let sym = e.symbol();
    match e.children() {
        [] => numeric_eval(e, at).map(|v| vec![v]),
        [a] => {
            let inner = eval_branches(a, at)?;
            let mut out = Vec::new();
            let mut last_err = EvalFailure::Domain;
            for v in inner {
                match apply_unary(sym, v) {
                    Ok(r) if sym == Symbol::Sqrt => {
                        push_unique(&mut out, r);
                        push_unique(&mut out, -r);
                    }
                    Ok(r) => push_unique(&mut out, r),
                    Err(err) => last_err = err,
                }
            }
            if out.is_empty() {
                Err(last_err)
            } else {
                Ok(out)
            }
        }
        [a, b] => {
            let (left, right) = (eval_branches(a, at)?, eval_branches(b, at)?);
            let mut out = Vec::new();
            let mut last_err = EvalFailure::Domain;
            for &l in &left {
                for &r in &right {
                    match apply_binary(sym, l, r) {
                        Ok(v) => push_unique(&mut out, v),
                        Err(err) => last_err = err,
                    }
                }
            }
            if out.is_empty() {
                Err(last_err)
            } else {
                Ok(out)
            }
        }
        _ => unreachable!("arity > 2"),
    }
}

/// Smallest scaled gap between any pair of branch values.
fn closest_gap(left: &[f64], right: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for &l in left {
        for &r in right {
            let gap = (l - r).abs() / (1.0 + l.abs().max(r.abs()));
            best = best.min(gap);
        }
    }
    best
}

/// Decides whether `eq` is an identity by sampling.
///
/// Points are drawn uniformly from `[-2, 2]^4` with a fixed seed; points
/// where either side fails to evaluate are rejected and redrawn (up to
/// `8 * trials` draws). Each side is evaluated with two-valued square roots;
/// a point agrees when some pair of branch values is within
/// `tol * (1 + max(|L|, |R|))`. Correct iff every valid point agrees,
/// Incorrect iff some point misses by more than `10 * tol`, otherwise (or
/// with fewer than [`MIN_VALID_POINTS`] valid points) Undecided.
pub fn label_identity(eq: &Expr, trials: usize, tol: f64) -> OracleVerdict {
    let Some((lhs, rhs)) = eq.sides() else {
        return OracleVerdict::Undecided;
    };
    let trials = trials.max(MIN_VALID_POINTS);
    let mut rng = ChaCha8Rng::seed_from_u64(ORACLE_SEED);
    let mut valid = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..trials * 8 {
        if valid == trials {
            break;
        }
        let at = Assignment(std::array::from_fn(|_| rng.gen_range(-SAMPLE_RANGE..=SAMPLE_RANGE)));
        let (Ok(l), Ok(r)) = (eval_branches(lhs, &at), eval_branches(rhs, &at)) else {
            continue;
        };
        valid += 1;
        worst = worst.max(closest_gap(&l, &r));
    }
    if valid < MIN_VALID_POINTS {
        OracleVerdict::Undecided
    } else if worst <= tol {
        OracleVerdict::Correct
    } else if worst > 10.0 * tol {
        OracleVerdict::Incorrect
    } else {
        OracleVerdict::Undecided
    }
}
