use rand::seq::SliceRandom;
use rand::Rng;

use super::{Expr, Symbol};

/// Production weights for random expression sampling.
#[derive(Clone, Copy, Debug)]
pub struct Grammar {
    pub leaf: f64,
    pub unary: f64,
    pub binary: f64,
    /// Probability that a sampled leaf is a variable (vs a number or pi).
    pub variable_leaf: f64,
}

impl Default for Grammar {
    fn default() -> Self {
        Grammar {
            leaf: 0.3,
            unary: 0.3,
            binary: 0.4,
            variable_leaf: 0.45,
        }
    }
}

impl Grammar {
    pub fn sample_leaf<R: Rng + ?Sized>(&self, rng: &mut R) -> Expr {
        if rng.gen::<f64>() < self.variable_leaf {
            Expr::leaf(*Symbol::VARIABLES.choose(rng).expect("nonempty"))
        } else {
            let consts = [&Symbol::NUMBERS[..], &[Symbol::Pi]].concat();
            Expr::leaf(*consts.choose(rng).expect("nonempty"))
        }
    }
}

/// Samples a tree of height at most `max_height` (at least 1).
pub fn sample_tree<R: Rng + ?Sized>(grammar: &Grammar, max_height: usize, rng: &mut R) -> Expr {
    if max_height <= 1 {
        return grammar.sample_leaf(rng);
    }
    let total = grammar.leaf + grammar.unary + grammar.binary;
    let roll = rng.gen::<f64>() * total;
    if roll < grammar.leaf {
        grammar.sample_leaf(rng)
    } else if roll < grammar.leaf + grammar.unary {
        let op = *Symbol::UNARY.choose(rng).expect("nonempty");
        Expr::unary(op, sample_tree(grammar, max_height - 1, rng))
    } else {
        let op = *Symbol::BINARY.choose(rng).expect("nonempty");
        let l = sample_tree(grammar, max_height - 1, rng);
        let r = sample_tree(grammar, max_height - 1, rng);
        Expr::binary(op, l, r)
    }
}

/// Number of distinct trees of height at most `max_height` over the
/// expression vocabulary (no `=`). `None` on overflow.
pub fn count_trees(max_height: usize) -> Option<u128> {
    let leaves = Symbol::LEAVES.len() as u128;
    let unary = Symbol::UNARY.len() as u128;
    let binary = Symbol::BINARY.len() as u128;
    let mut c: u128 = 0;
    for h in 1..=max_height {
        c = if h == 1 {
            leaves
        } else {
            let sq = c.checked_mul(c)?;
            leaves
                .checked_add(unary.checked_mul(c)?)?
                .checked_add(binary.checked_mul(sq)?)?
        };
    }
    Some(c)
}

/// The `index`-th tree (in a fixed enumeration order) among all trees of
/// height at most `max_height`: leaves first, then unary, then binary nodes,
/// each group ordered lexicographically by operator then children.
pub fn decode_tree(index: u128, max_height: usize) -> Option<Expr> {
    let total = count_trees(max_height)?;
    if index >= total || max_height == 0 {
        return None;
    }
    let leaves = Symbol::LEAVES.len() as u128;
    if index < leaves {
        return Some(Expr::leaf(Symbol::LEAVES[index as usize]));
    }
    let sub = count_trees(max_height - 1)?;
    let mut i = index - leaves;
    let unary_block = Symbol::UNARY.len() as u128 * sub;
    if i < unary_block {
        let op = Symbol::UNARY[(i / sub) as usize];
        return Some(Expr::unary(op, decode_tree(i % sub, max_height - 1)?));
    }
    i -= unary_block;
    let sq = sub * sub;
    let op = Symbol::BINARY[(i / sq) as usize];
    let rem = i % sq;
    Some(Expr::binary(
        op,
        decode_tree(rem / sub, max_height - 1)?,
        decode_tree(rem % sub, max_height - 1)?,
    ))
}
