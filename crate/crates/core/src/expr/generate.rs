use std::collections::HashSet;
use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::seeds::{stream, Stream};

use super::grammar::{sample_tree, Grammar};
use super::oracle::{label_identity, OracleVerdict};
use super::{Dataset, Expr, ExprError, Label, LabeledEquation, NodePath, Split, Symbol};

/// Per-depth equation counts (depths 1..=13) of the reference corpus; used as
/// the default shape of the depth histogram.
pub const DEPTH_COUNTS: [usize; 13] = [21, 355, 2542, 7508, 9442, 7957, 6146, 3634, 1999, 1124, 677, 300, 189];

/// Per-depth fraction of Correct equations (depths 1..=13) of the reference
/// corpus; used as the default per-depth class balance.
pub const DEPTH_CORRECT_FRACTION: [f64; 13] = [
    0.52, 0.57, 0.62, 0.61, 0.58, 0.56, 0.54, 0.52, 0.52, 0.49, 0.50, 0.50, 0.50,
];

/// Hard ceiling on equation depth.
pub const MAX_DEPTH: usize = 13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MutationKind {
    /// Replace a random subtree by a freshly sampled one.
    ReplaceSubtree,
    /// Swap the operands of a random `+`, `*` or `=` node.
    SwapSiblings,
    /// Change a random number leaf to a different number.
    PerturbNumber,
    /// Wrap a random subtree in `*1`, `+0`, `pow 1` or `sqrt(t^2)`.
    WrapIdentity,
    /// Replace every occurrence of one variable by a sampled subtree.
    SubstituteVariable,
    /// Rewrite a subtree that matches one side of an axiom into the other side.
    RewriteAxiom,
}

impl MutationKind {
    /// Kinds that map identities to identities (up to sqrt branches).
    pub const PRESERVING: [MutationKind; 4] = [
        MutationKind::SwapSiblings,
        MutationKind::WrapIdentity,
        MutationKind::SubstituteVariable,
        MutationKind::RewriteAxiom,
    ];
}

#[derive(Clone, Debug)]
pub struct GenConfig {
    pub depths: RangeInclusive<usize>,
    /// Relative weight of each depth 1..=13 in the target histogram.
    pub depth_weights: [f64; 13],
    /// Target Correct fraction for each depth 1..=13.
    pub correct_fraction: [f64; 13],
    /// Every depth in range gets at least this many equations.
    pub min_per_depth: usize,
    /// Attempt budget is `iteration_factor * n_target`.
    pub iteration_factor: usize,
    /// Height bound for trees sampled by [`MutationKind::ReplaceSubtree`].
    pub replacement_height: usize,
    /// Height bound for trees sampled by [`MutationKind::SubstituteVariable`].
    pub substitution_height: usize,
    /// Equations with more nodes than this are discarded.
    pub max_nodes: usize,
    /// Upper bound on stored identities per depth bucket.
    pub pool_per_depth: usize,
    pub grammar: Grammar,
    pub trials: usize,
    pub tol: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            depths: 1..=MAX_DEPTH,
            depth_weights: DEPTH_COUNTS.map(|c| c as f64),
            correct_fraction: DEPTH_CORRECT_FRACTION,
            min_per_depth: 10,
            iteration_factor: 300,
            replacement_height: 3,
            substitution_height: 2,
            max_nodes: 96,
            pool_per_depth: 4000,
            grammar: Grammar::default(),
            trials: super::DEFAULT_TRIALS,
            tol: super::DEFAULT_TOL,
        }
    }
}

impl GenConfig {
    pub fn with_depths(mut self, depths: RangeInclusive<usize>) -> Self {
        self.depths = depths;
        self
    }

    /// `(correct, incorrect)` quota per depth in range.
    pub fn quotas(&self, n_target: usize) -> Vec<(usize, usize, usize)> {
        let lo = (*self.depths.start()).max(1);
        let hi = (*self.depths.end()).min(MAX_DEPTH);
        let total: f64 = (lo..=hi).map(|d| self.depth_weights[d - 1]).sum();
        (lo..=hi)
            .map(|d| {
                let share = if total > 0.0 {
                    self.depth_weights[d - 1] / total
                } else {
                    0.0
                };
                let q = ((n_target as f64 * share).round() as usize).max(self.min_per_depth);
                let correct = (q as f64 * self.correct_fraction[d - 1]).round() as usize;
                (d, correct, q - correct)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct DepthStats {
    pub depth: usize,
    pub count: usize,
    pub correct: usize,
}

impl DepthStats {
    /// Fraction of Correct equations at this depth.
    pub fn cc(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.correct as f64 / self.count as f64
        }
    }
}

#[derive(Clone, Debug)]
pub struct GeneratedData {
    pub items: Vec<LabeledEquation>,
    pub stats: Vec<DepthStats>,
    /// False when the attempt budget ran out before every quota filled.
    pub complete: bool,
    pub attempts: usize,
}

impl GeneratedData {
    pub fn correct_fraction(&self) -> f64 {
        let c = self.stats.iter().map(|s| s.correct).sum::<usize>();
        let n = self.stats.iter().map(|s| s.count).sum::<usize>();
        if n == 0 {
            0.0
        } else {
            c as f64 / n as f64
        }
    }
}

pub(crate) fn stats_for(items: &[LabeledEquation]) -> Vec<DepthStats> {
    let max = items.iter().map(|i| i.depth).max().unwrap_or(0);
    (1..=max)
        .filter_map(|d| {
            let at: Vec<_> = items.iter().filter(|i| i.depth == d).collect();
            (!at.is_empty()).then(|| DepthStats {
                depth: d,
                count: at.len(),
                correct: at.iter().filter(|i| i.label == Label::Correct).count(),
            })
        })
        .collect()
}

struct Rule {
    from: Expr,
    to: Expr,
}

fn rules_from(axioms: &[Expr]) -> Vec<Rule> {
    let mut out = Vec::new();
    for a in axioms {
        if let Some((l, r)) = a.sides() {
            out.push(Rule {
                from: l.clone(),
                to: r.clone(),
            });
            out.push(Rule {
                from: r.clone(),
                to: l.clone(),
            });
        }
    }
    out
}

type Bindings = [Option<Expr>; 4];

fn pattern_match(pattern: &Expr, e: &Expr, binds: &mut Bindings) -> bool {
    if let Some(v) = pattern.symbol().variable_index() {
        return match &binds[v] {
            Some(bound) => bound == e,
            None => {
                binds[v] = Some(e.clone());
                true
            }
        };
    }
    pattern.symbol() == e.symbol()
        && pattern
            .children()
            .iter()
            .zip(e.children())
            .all(|(p, c)| pattern_match(p, c, binds))
}

fn instantiate<R: Rng + ?Sized>(pattern: &Expr, binds: &mut Bindings, cfg: &GenConfig, rng: &mut R) -> Expr {
    if let Some(v) = pattern.symbol().variable_index() {
        if binds[v].is_none() {
            binds[v] = Some(sample_tree(&cfg.grammar, cfg.substitution_height, rng));
        }
        return binds[v].clone().expect("bound");
    }
    let children = pattern
        .children()
        .iter()
        .map(|c| instantiate(c, binds, cfg, rng))
        .collect();
    Expr::new(pattern.symbol(), children).expect("pattern arity")
}

/// Random non-root node path.
fn random_inner_path<R: Rng + ?Sized>(e: &Expr, rng: &mut R) -> Option<NodePath> {
    let paths: Vec<NodePath> = e.paths().into_iter().filter(|p| !p.is_empty()).collect();
    paths.choose(rng).cloned()
}

/// Applies one mutation of the given kind. `None` when the kind does not
/// apply to `source` (e.g. no number leaf to perturb).
pub fn mutate<R: Rng + ?Sized>(
    source: &Expr,
    kind: MutationKind,
    axioms: &[Expr],
    cfg: &GenConfig,
    rng: &mut R,
) -> Option<Expr> {
    match kind {
        MutationKind::ReplaceSubtree => {
            let path = random_inner_path(source, rng)?;
            let h = rng.gen_range(1..=cfg.replacement_height.max(1));
            let fresh = sample_tree(&cfg.grammar, h, rng);
            source.replace(&path, fresh)
        }
        MutationKind::SwapSiblings => {
            let paths: Vec<NodePath> = source
                .paths()
                .into_iter()
                .filter(|p| source.get(p).is_some_and(|n| n.symbol().is_commutative()))
                .collect();
            let path = paths.choose(rng)?;
            let node = source.get(path)?;
            let [a, b] = node.children() else { return None };
            if a == b {
                return None;
            }
            source.replace(path, Expr::binary(node.symbol(), b.clone(), a.clone()))
        }
        MutationKind::PerturbNumber => {
            let paths: Vec<NodePath> = source
                .paths()
                .into_iter()
                .filter(|p| source.get(p).is_some_and(|n| Symbol::NUMBERS.contains(&n.symbol())))
                .collect();
            let path = paths.choose(rng)?;
            let old = source.get(path)?.symbol();
            let choices: Vec<Symbol> = Symbol::NUMBERS.iter().copied().filter(|&s| s != old).collect();
            source.replace(path, Expr::leaf(*choices.choose(rng)?))
        }
        MutationKind::WrapIdentity => {
            let path = random_inner_path(source, rng)?;
            let t = source.get(&path)?.clone();
            let leaf = Expr::leaf;
            let wrapped = match rng.gen_range(0..6) {
                0 => Expr::binary(Symbol::Mul, t, leaf(Symbol::One)),
                1 => Expr::binary(Symbol::Mul, leaf(Symbol::One), t),
                2 => Expr::binary(Symbol::Add, t, leaf(Symbol::Zero)),
                3 => Expr::binary(Symbol::Add, leaf(Symbol::Zero), t),
                4 => Expr::binary(Symbol::Pow, t, leaf(Symbol::One)),
                _ => Expr::unary(Symbol::Sqrt, Expr::binary(Symbol::Pow, t, leaf(Symbol::Two))),
            };
            source.replace(&path, wrapped)
        }
        MutationKind::SubstituteVariable => {
            let vars: Vec<Symbol> = source
                .symbols()
                .into_iter()
                .filter(|s| s.variable_index().is_some())
                .collect();
            let var = *vars.choose(rng)?;
            let h = rng.gen_range(1..=cfg.substitution_height.max(1));
            let with = sample_tree(&cfg.grammar, h, rng);
            Some(source.substitute(var, &with))
        }
        MutationKind::RewriteAxiom => {
            let rules = rules_from(axioms);
            let mut paths: Vec<NodePath> = source.paths().into_iter().filter(|p| !p.is_empty()).collect();
            paths.shuffle(rng);
            for path in paths.iter().take(8) {
                let node = source.get(path)?;
                let applicable: Vec<(usize, Bindings)> = rules
                    .iter()
                    .enumerate()
                    .filter_map(|(i, r)| {
                        let mut b: Bindings = Default::default();
                        pattern_match(&r.from, node, &mut b).then_some((i, b))
                    })
                    .collect();
                if let Some((i, binds)) = applicable.choose(rng) {
                    let mut binds = binds.clone();
                    let out = instantiate(&rules[*i].to, &mut binds, cfg, rng);
                    return source.replace(path, out);
                }
            }
            None
        }
    }
}

fn verdict_label(v: OracleVerdict) -> Option<Label> {
    match v {
        OracleVerdict::Correct => Some(Label::Correct),
        OracleVerdict::Incorrect => Some(Label::Incorrect),
        OracleVerdict::Undecided => None,
    }
}

struct Pool {
    buckets: Vec<Vec<Expr>>,
    keys: HashSet<String>,
    cap: usize,
}

impl Pool {
    fn new(cap: usize) -> Self {
        Pool {
            buckets: vec![Vec::new(); MAX_DEPTH + 1],
            keys: HashSet::new(),
            cap,
        }
    }

    fn insert<R: Rng + ?Sized>(&mut self, e: Expr, key: String, rng: &mut R) {
        let d = e.depth();
        if d > MAX_DEPTH || self.keys.contains(&key) {
            return;
        }
        let bucket = &mut self.buckets[d];
        if bucket.len() < self.cap {
            bucket.push(e);
        } else {
            let i = rng.gen_range(0..bucket.len());
            bucket[i] = e;
        }
        self.keys.insert(key);
    }

    /// A stored identity whose depth is close to `target`.
    fn pick<R: Rng + ?Sized>(&self, target: usize, rng: &mut R) -> Option<&Expr> {
        let near: Vec<usize> = (target.saturating_sub(3)..=(target + 1).min(MAX_DEPTH))
            .filter(|&d| !self.buckets[d].is_empty())
            .collect();
        let depth = match near.choose(rng) {
            Some(&d) => d,
            None => (1..=MAX_DEPTH)
                .filter(|&d| !self.buckets[d].is_empty())
                .min_by_key(|&d| (d as isize - target as isize).abs())?,
        };
        self.buckets[depth].choose(rng)
    }
}

/// Grows a depth-stratified set of labeled equations from seed identities.
///
/// Repeatedly picks an unfilled `(depth, label)` slot, takes a known identity
/// of nearby depth, applies one local mutation, and labels the result with
/// the sampling oracle. Mutations that preserve identities are chosen when
/// the slot wants a Correct equation, destructive ones otherwise; the oracle
/// alone decides the label. Correct results join the identity pool so depth
/// grows over time. Quotas per depth follow `cfg.depth_weights` and
/// `cfg.correct_fraction`. Undecided equations and duplicates are dropped.
pub fn generate_dataset(
    axioms: &[Expr],
    n_target: usize,
    seed: u64,
    cfg: &GenConfig,
) -> Result<GeneratedData, ExprError> {
    let rng = &mut stream(seed, Stream::Data);
    for a in axioms {
        if label_identity(a, cfg.trials, cfg.tol) != OracleVerdict::Correct {
            return Err(ExprError::NotEquation(format!("axiom is not an identity: {a}")));
        }
    }
    let mut pool = Pool::new(cfg.pool_per_depth);
    for a in axioms {
        pool.insert(a.clone(), a.to_string(), rng);
    }
    let quotas = cfg.quotas(n_target);
    // remaining[(depth, label)]
    let mut remaining: Vec<(usize, Label, usize)> = quotas
        .iter()
        .flat_map(|&(d, c, i)| [(d, Label::Correct, c), (d, Label::Incorrect, i)])
        .filter(|s| s.2 > 0)
        .collect();
    let mut emitted: HashSet<String> = HashSet::new();
    let mut items = Vec::new();
    let budget = cfg.iteration_factor.saturating_mul(n_target.max(1));
    let mut attempts = 0;

    while attempts < budget && !remaining.is_empty() {
        attempts += 1;
        let &(depth, want, _) = remaining.choose(rng).expect("nonempty");
        let Some(source) = pool.pick(depth, rng).cloned() else {
            break;
        };
        let kind = match want {
            Label::Correct => *MutationKind::PRESERVING.choose(rng).expect("nonempty"),
            Label::Incorrect => {
                if rng.gen_bool(0.7) {
                    MutationKind::ReplaceSubtree
                } else {
                    MutationKind::PerturbNumber
                }
            }
        };
        let Some(m) = mutate(&source, kind, axioms, cfg, rng) else {
            continue;
        };
        if !m.is_equation() || m.depth() > MAX_DEPTH || m.size() > cfg.max_nodes {
            continue;
        }
        let key = m.to_string();
        if emitted.contains(&key) {
            continue;
        }
        let Some(label) = verdict_label(label_identity(&m, cfg.trials, cfg.tol)) else {
            continue;
        };
        if label == Label::Correct {
            pool.insert(m.clone(), key.clone(), rng);
        }
        let d = m.depth();
        if let Some(pos) = remaining.iter().position(|s| s.0 == d && s.1 == label) {
            remaining[pos].2 -= 1;
            if remaining[pos].2 == 0 {
                remaining.remove(pos);
            }
            emitted.insert(key);
            items.push(LabeledEquation {
                expr: m,
                label,
                depth: d,
            });
        }
    }
    let complete = remaining.is_empty();
    if !complete {
        log::warn!(
            "dataset generation stopped after {attempts} attempts with {} of {} equations",
            items.len(),
            quotas.iter().map(|q| q.1 + q.2).sum::<usize>()
        );
    }
    let stats = stats_for(&items);
    Ok(GeneratedData {
        items,
        stats,
        complete,
        attempts,
    })
}

/// Splits equations by depth: `train_depths` are divided into train and
/// validation (stratified per depth and label, `valid_fraction` to
/// validation); `test_depths` go to test; anything else is dropped.
pub fn split_by_depth(
    items: &[LabeledEquation],
    train_depths: RangeInclusive<usize>,
    test_depths: RangeInclusive<usize>,
    valid_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> (Dataset, Dataset, Dataset) {
    let mut train = Vec::new();
    let mut valid = Vec::new();
    let mut test = Vec::new();
    let max = items.iter().map(|i| i.depth).max().unwrap_or(0);
    for d in 1..=max {
        for label in [Label::Correct, Label::Incorrect] {
            let mut group: Vec<LabeledEquation> = items
                .iter()
                .filter(|i| i.depth == d && i.label == label)
                .cloned()
                .collect();
            if train_depths.contains(&d) {
                group.shuffle(rng);
                let k = (group.len() as f64 * valid_fraction).round() as usize;
                valid.extend(group.drain(..k));
                train.extend(group);
            } else if test_depths.contains(&d) {
                test.extend(group);
            }
        }
    }
    train.shuffle(rng);
    valid.shuffle(rng);
    test.shuffle(rng);
    (
        Dataset::new(Split::Train, train),
        Dataset::new(Split::Valid, valid),
        Dataset::new(Split::Test, test),
    )
}
