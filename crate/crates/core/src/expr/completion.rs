use std::collections::HashSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::grammar::{count_trees, decode_tree};
use super::oracle::{label_identity, OracleVerdict, DEFAULT_TOL, DEFAULT_TRIALS};
use super::{Expr, NodePath};

/// One blank-filling problem built from a Correct equation.
#[derive(Clone, Debug)]
pub struct CompletionInstance {
    pub equation: Expr,
    /// Location of the blanked subtree.
    pub blank: NodePath,
    /// Node depth of the blank (root children are at depth 1).
    pub blank_depth: usize,
    pub candidates: Vec<Expr>,
    /// Indices into `candidates` that complete the equation correctly.
    pub gold: Vec<usize>,
    /// Index of the subtree that was removed.
    pub original: usize,
}

impl CompletionInstance {
    /// The equation with candidate `i` in the blank.
    pub fn filled(&self, i: usize) -> Expr {
        self.equation
            .replace(&self.blank, self.candidates[i].clone())
            .expect("blank path valid")
    }

    /// The equation with its blank printed as `_`.
    pub fn blanked(&self) -> impl fmt::Display + '_ {
        Blanked(self)
    }
}

struct Blanked<'a>(&'a CompletionInstance);

impl fmt::Display for Blanked<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(e: &Expr, path: &mut Vec<usize>, blank: &[usize], f: &mut fmt::Formatter<'_>) -> fmt::Result {
            if path.as_slice() == blank {
                return f.write_str("_");
            }
            if e.is_leaf() {
                return f.write_str(e.symbol().token());
            }
            write!(f, "({}", e.symbol().token())?;
            for (i, c) in e.children().iter().enumerate() {
                f.write_str(" ")?;
                path.push(i);
                go(c, path, blank, f)?;
                path.pop();
            }
            f.write_str(")")
        }
        go(&self.0.equation, &mut Vec::new(), &self.0.blank, f)
    }
}

fn build(
    eq: &Expr,
    blank: NodePath,
    max_height: usize,
    cap: usize,
    rng: &mut ChaCha8Rng,
) -> Option<CompletionInstance> {
    let original = eq.get(&blank)?.clone();
    let max_height = max_height.clamp(1, 5);
    let total = count_trees(max_height)?;
    let cap = cap.max(1);
    // Distinct enumeration indices, subsampled when the grammar is larger
    // than the cap; the original is added separately.
    let mut picked: Vec<u128> = if total <= (cap as u128) * 4 && total <= 1 << 20 {
        let mut all: Vec<u128> = (0..total).collect();
        all.shuffle(rng);
        all
    } else {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        while out.len() < cap * 2 && (seen.len() as u128) < total {
            let i = rng.gen_range(0..total);
            if seen.insert(i) {
                out.push(i);
            }
        }
        out
    };
    let mut candidates = vec![original.clone()];
    for i in picked.drain(..) {
        if candidates.len() >= cap {
            break;
        }
        let e = decode_tree(i, max_height)?;
        if e != original {
            candidates.push(e);
        }
    }
    candidates.shuffle(rng);
    let original_idx = candidates.iter().position(|c| *c == original).expect("original kept");
    let mut inst = CompletionInstance {
        equation: eq.clone(),
        blank_depth: blank.len(),
        blank,
        candidates,
        gold: Vec::new(),
        original: original_idx,
    };
    inst.gold = (0..inst.candidates.len())
        .filter(|&i| {
            i == original_idx || label_identity(&inst.filled(i), DEFAULT_TRIALS, DEFAULT_TOL) == OracleVerdict::Correct
        })
        .collect();
    Some(inst)
}

/// Blanks a uniformly random non-root node of a Correct equation and builds
/// its candidate set: up to `cap` grammar trees of height `1..=max_height`
/// (randomly subsampled when there are more), always including the removed
/// subtree. Gold candidates are those whose substitution the oracle labels
/// Correct; the original is gold by construction.
pub fn completion_candidates(
    eq: &Expr,
    rng: &mut ChaCha8Rng,
    max_height: usize,
    cap: usize,
) -> Option<CompletionInstance> {
    let paths: Vec<NodePath> = eq.paths().into_iter().filter(|p| !p.is_empty()).collect();
    let blank = paths.choose(rng)?.clone();
    build(eq, blank, max_height, cap, rng)
}

/// Like [`completion_candidates`], but the blank is drawn uniformly among
/// nodes at node depth `depth` (root children are depth 1). `None` if the
/// equation has no node at that depth.
pub fn completion_candidates_at_depth(
    eq: &Expr,
    depth: usize,
    rng: &mut ChaCha8Rng,
    max_height: usize,
    cap: usize,
) -> Option<CompletionInstance> {
    let paths: Vec<NodePath> = eq
        .paths()
        .into_iter()
        .filter(|p| p.len() == depth && depth > 0)
        .collect();
    let blank = paths.choose(rng)?.clone();
    build(eq, blank, max_height, cap, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, parse_equation, Symbol};
    use rand::SeedableRng;

    #[test]
    fn blanking_the_one_keeps_original_gold() {
        let eq = parse_equation("(= (+ (* (sqrt 1) 1 y) x) (+ (* 1 y) x))").unwrap();
        // the `1` in (1 x y) on the right: path [1, 0, 0]
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = build(&eq, vec![1, 0, 0], 2, 50, &mut rng).unwrap();
        assert_eq!(inst.candidates[inst.original], Expr::leaf(Symbol::One));
        assert!(inst.gold.contains(&inst.original));
        assert!(inst.candidates.len() <= 50);
        assert_eq!(inst.filled(inst.original), eq);
        assert_eq!(
            inst.blanked().to_string(),
            "(= (+ (* (sqrt 1) (* 1 y)) x) (+ (* _ y) x))"
        );
    }

    #[test]
    fn cap_and_gold_invariants() {
        let eq = parse_equation("(= (sin (+ x pi)) (* -1 (sin x)))").unwrap();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inst = completion_candidates(&eq, &mut rng, 2, 50).unwrap();
            assert!(inst.candidates.len() <= 50);
            assert!(!inst.gold.is_empty());
            assert!(inst.gold.contains(&inst.original));
            let unique: HashSet<_> = inst.candidates.iter().collect();
            assert_eq!(unique.len(), inst.candidates.len());
        }
    }

    #[test]
    fn large_grammar_is_subsampled() {
        let eq = parse_equation("(= (+ x 0) x)").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inst = completion_candidates_at_depth(&eq, 1, &mut rng, 4, 30).unwrap();
        assert_eq!(inst.candidates.len(), 30);
        assert_eq!(inst.blank_depth, 1);
        assert!(inst
            .candidates
            .iter()
            .all(|c| c.height() <= 4 || *c == parse("(+ x 0)").unwrap() || *c == parse("x").unwrap()));
    }

    #[test]
    fn same_seed_same_blank() {
        let eq = parse_equation("(= (cos (* -1 x)) (cos x))").unwrap();
        let a = completion_candidates(&eq, &mut ChaCha8Rng::seed_from_u64(8), 2, 20).unwrap();
        let b = completion_candidates(&eq, &mut ChaCha8Rng::seed_from_u64(8), 2, 20).unwrap();
        assert_eq!(a.blank, b.blank);
        assert_eq!(a.candidates, b.candidates);
    }

    #[test]
    fn missing_depth_gives_none() {
        let eq = parse_equation("(= x x)").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(completion_candidates_at_depth(&eq, 2, &mut rng, 2, 10).is_none());
    }
}
