//! Equation verifier: runs the configured cell bottom-up over both sides of
//! an equation, with parameters shared by symbol, and scores the pair of
//! side embeddings at the root.

mod checkpoint;

use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::autodiff::{AutodiffError, Graph, Var, PROB_CLAMP};
use crate::cells::{node_step, CellConfig, CellError, CellKind, Layout, NodeState, ParamBank, ParamGrads, Session};
use crate::expr::{Expr, Label, Symbol};
use crate::seeds::{self, Stream};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("not an equation: {0}")]
    NotEquation(String),
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("checkpoint line {line}: {message}")]
    Checkpoint { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn config_err(key: &str, message: impl fmt::Display) -> ModelError {
    ModelError::Config {
        key: key.to_string(),
        message: message.to_string(),
    }
}

/// Architecture and regularization of a verifier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub cell: CellKind,
    pub use_stack: bool,
    pub hidden: usize,
    pub stack_size: usize,
    /// Dropout rate on every node's `z` during training.
    pub dropout: f64,
    pub first_order_ablation: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            cell: CellKind::MTreeLstm,
            use_stack: false,
            hidden: 25,
            stack_size: crate::stack::DEFAULT_STACK_SIZE,
            dropout: 0.0,
            first_order_ablation: false,
        }
    }
}

impl ModelConfig {
    /// Config keys, in the order [`ModelConfig::pairs`] lists them.
    pub const KEYS: [&'static str; 6] = ["cell", "stack", "hidden", "stack_size", "dropout", "first_order"];

    pub fn new(cell: CellKind, hidden: usize) -> Self {
        ModelConfig {
            cell,
            hidden,
            ..Default::default()
        }
    }

    /// Whether nodes carry stacks (always true for the stack cell).
    pub fn stacked(&self) -> bool {
        self.use_stack || self.cell == CellKind::StackRnn
    }

    pub fn cell_config(&self) -> CellConfig {
        CellConfig {
            kind: self.cell,
            hidden: self.hidden,
            first_order: self.first_order_ablation,
            stack_size: self.stacked().then_some(self.stack_size),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden == 0 {
            return Err(config_err("hidden", "must be at least 1"));
        }
        if self.stack_size == 0 {
            return Err(config_err("stack_size", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(config_err("dropout", "must be in [0, 1)"));
        }
        Ok(())
    }

    /// Sets one key from its text form. Returns `Ok(false)` for keys this
    /// config does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, ModelError> {
        let parse_bool = |v: &str| match v {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(config_err(key, format!("expected true or false, got `{v}`"))),
        };
        let parse_usize = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| config_err(key, format!("expected an integer, got `{v}`")))
        };
        match key {
            "cell" => self.cell = value.parse().map_err(|e: String| config_err(key, e))?,
            "stack" => self.use_stack = parse_bool(value)?,
            "hidden" => self.hidden = parse_usize(value)?,
            "stack_size" => self.stack_size = parse_usize(value)?,
            "dropout" => {
                self.dropout = value
                    .parse()
                    .map_err(|_| config_err(key, format!("expected a number, got `{value}`")))?
            }
            "first_order" => self.first_order_ablation = parse_bool(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Every key with its text value.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("cell", self.cell.to_string()),
            ("stack", self.use_stack.to_string()),
            ("hidden", self.hidden.to_string()),
            ("stack_size", self.stack_size.to_string()),
            ("dropout", self.dropout.to_string()),
            ("first_order", self.first_order_ablation.to_string()),
        ]
    }

    /// The first key whose value differs from `other`'s.
    pub fn first_difference(&self, other: &ModelConfig) -> Option<&'static str> {
        self.pairs()
            .into_iter()
            .zip(other.pairs())
            .find(|(a, b)| a.1 != b.1)
            .map(|(a, _)| a.0)
    }

    /// Short label such as `mtree_lstm+stack` or `mi_tree_lstm/1st`.
    pub fn label(&self) -> String {
        let mut s = self.cell.to_string();
        if self.use_stack && self.cell != CellKind::StackRnn {
            s.push_str("+stack");
        }
        if self.first_order_ablation {
            s.push_str("/1st");
        }
        s
    }
}

/// Root score of one equation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerificationOutput {
    /// `z_left · z_right`
    pub score: f64,
    /// `σ(scale·score + bias)`
    pub prob: f64,
}

/// Correct iff `prob ≥ 0.5`.
pub fn predict(out: &VerificationOutput) -> Label {
    if out.prob >= 0.5 {
        Label::Correct
    } else {
        Label::Incorrect
    }
}

/// Binary cross-entropy with `prob` clamped to `[1e-12, 1 - 1e-12]`.
pub fn loss(out: &VerificationOutput, label: Label) -> f64 {
    let p = out.prob.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    match label {
        Label::Correct => -p.ln(),
        Label::Incorrect => -(1.0 - p).ln(),
    }
}

/// A verifier and its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    bank: ParamBank,
    layout: Layout,
}

/// A recorded forward pass.
pub struct Pass<'a> {
    session: Session<'a>,
    pub score: Var,
    pub logit: Var,
    pub left: NodeState,
    pub right: NodeState,
}

impl<'a> Pass<'a> {
    pub fn graph(&self) -> &Graph {
        self.session.graph
    }

    pub fn output(&self) -> VerificationOutput {
        let g = &self.session.graph;
        let logit = g.value(self.logit).item();
        VerificationOutput {
            score: g.value(self.score).item(),
            prob: 1.0 / (1.0 + (-logit).exp()),
        }
    }

    /// Records the loss for `label` and returns `(loss, parameter gradients)`.
    pub fn backward(self, label: Label) -> Result<(f64, ParamGrads), ModelError> {
        let l = self.session.graph.bce_with_logit(self.logit, label.target())?;
        let grads = self.session.graph.backward(l)?;
        Ok((self.session.graph.value(l).item(), self.session.grads(&grads)))
    }

    pub fn session(&mut self) -> &mut Session<'a> {
        &mut self.session
    }
}

impl Model {
    /// Fresh parameters for every symbol, drawn from the seed's init stream.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Model, ModelError> {
        config.validate()?;
        let mut rng = seeds::stream(seed, Stream::Init);
        let (bank, layout) = Layout::init(config.cell_config(), &Symbol::ALL, &mut rng)?;
        Ok(Model { config, bank, layout })
    }

    /// Wraps existing parameters, checking that they fit `config`.
    pub fn from_bank(config: ModelConfig, bank: ParamBank) -> Result<Model, ModelError> {
        config.validate()?;
        let layout = Layout::resolve(config.cell_config(), &Symbol::ALL, &bank)?;
        Ok(Model { config, bank, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn bank(&self) -> &ParamBank {
        &self.bank
    }

    pub fn bank_mut(&mut self) -> &mut ParamBank {
        &mut self.bank
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Records the verifier on `graph`. Dropout is active iff `dropout` is
    /// given.
    pub fn forward<'a, R: Rng>(
        &'a self,
        graph: &'a mut Graph,
        eq: &Expr,
        mut dropout: Option<&mut R>,
    ) -> Result<Pass<'a>, ModelError> {
        let mut session = Session::new(graph, &self.bank, &self.layout);
        let (left, right, score, logit) = record(&mut session, eq, self.config.dropout, &mut dropout)?;
        Ok(Pass {
            session,
            score,
            logit,
            left,
            right,
        })
    }

    /// Evaluation-mode score.
    pub fn output(&self, eq: &Expr) -> Result<VerificationOutput, ModelError> {
        let mut g = Graph::new();
        Ok(self.forward::<rand_chacha::ChaCha8Rng>(&mut g, eq, None)?.output())
    }

    /// Loss and parameter gradients for one labeled equation.
    pub fn example_grads<R: Rng>(
        &self,
        eq: &Expr,
        label: Label,
        dropout: Option<&mut R>,
    ) -> Result<(f64, ParamGrads), ModelError> {
        let mut g = Graph::new();
        self.forward(&mut g, eq, dropout)?.backward(label)
    }
}

/// Encodes both sides and the head; returns `(left, right, score, logit)`.
fn record<R: Rng>(
    s: &mut Session,
    eq: &Expr,
    rate: f64,
    dropout: &mut Option<&mut R>,
) -> Result<(NodeState, NodeState, Var, Var), ModelError> {
    let (lhs, rhs) = eq.sides().ok_or_else(|| ModelError::NotEquation(eq.to_string()))?;
    let left = encode(s, lhs, rate, dropout)?;
    let right = encode(s, rhs, rate, dropout)?;
    let (scale, bias) = s.layout().head().ok_or(CellError::UnknownSymbol(Symbol::Eq))?;
    let (scale, bias) = (s.var(scale), s.var(bias));
    let g = &mut *s.graph;
    let score = g.dot(left.z, right.z)?;
    let logit = g.hadamard(score, scale)?;
    let logit = g.add(logit, bias)?;
    Ok((left, right, score, logit))
}

fn encode<R: Rng>(s: &mut Session, e: &Expr, rate: f64, dropout: &mut Option<&mut R>) -> Result<NodeState, ModelError> {
    let mut children = Vec::with_capacity(e.children().len());
    for c in e.children() {
        children.push(encode(s, c, rate, dropout)?);
    }
    let mut out = node_step(s, e.symbol(), &children)?;
    if let Some(rng) = dropout.as_deref_mut() {
        out.z = s.graph.dropout(out.z, rate, rng)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
