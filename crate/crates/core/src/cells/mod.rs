//! Node-level transition functions. Each maps a node's symbol and its
//! children's states to the node's own state, reading weights from a
//! per-symbol parameter bank.

mod params;
mod steps;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tensor, Var};
use crate::expr::Symbol;

pub use params::{ParamBank, ParamGrads, ParamId, Session};
pub use steps::{
    embed_leaf, mi_tree_lstm_step, mtree_lstm_step, node_step, second_order_step, stack_rnn_step, tree_lstm_step,
    tree_rnn_step,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CellError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("`{symbol}` takes {expected} children, got {got}")]
    Arity {
        symbol: Symbol,
        expected: usize,
        got: usize,
    },
    #[error("no parameters for symbol `{0}`")]
    UnknownSymbol(Symbol),
    #[error("`{0}` is not a leaf symbol")]
    NotALeaf(Symbol),
    #[error("parameters for `{symbol}` belong to a different cell than {cell}")]
    WrongCell { symbol: Symbol, cell: CellKind },
    #[error("child state carries no stack")]
    MissingStack,
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("parameter `{name}` has shape {found:?}, expected {expected:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("invalid cell configuration: {0}")]
    Config(String),
}

/// The transition function family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellKind {
    TreeRnn,
    TreeLstm,
    SecondOrder,
    MTreeLstm,
    MiTreeLstm,
    /// `tanh((W x) ⊙ (R ẑ))` over the summed, stack-enriched children.
    StackRnn,
}

impl CellKind {
    pub const ALL: [CellKind; 6] = [
        CellKind::TreeRnn,
        CellKind::TreeLstm,
        CellKind::SecondOrder,
        CellKind::MTreeLstm,
        CellKind::MiTreeLstm,
        CellKind::StackRnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CellKind::TreeRnn => "tree_rnn",
            CellKind::TreeLstm => "tree_lstm",
            CellKind::SecondOrder => "second_order",
            CellKind::MTreeLstm => "mtree_lstm",
            CellKind::MiTreeLstm => "mi_tree_lstm",
            CellKind::StackRnn => "stack_rnn",
        }
    }

    /// Whether the cell keeps a memory vector `c`.
    pub fn has_memory(self) -> bool {
        matches!(self, CellKind::TreeLstm | CellKind::MTreeLstm | CellKind::MiTreeLstm)
    }

    /// Whether the first-order ablation changes anything for this cell.
    pub fn has_higher_order(self) -> bool {
        matches!(
            self,
            CellKind::SecondOrder | CellKind::MTreeLstm | CellKind::MiTreeLstm | CellKind::StackRnn
        )
    }

    /// Whether internal nodes read their own symbol embedding.
    fn uses_op_embedding(self) -> bool {
        self != CellKind::TreeRnn
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CellKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CellKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = CellKind::ALL.iter().map(|k| k.name()).collect();
            format!("unknown cell `{s}` (expected one of {})", names.join(", "))
        })
    }
}

/// Shape-determining options of a cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellConfig {
    pub kind: CellKind,
    pub hidden: usize,
    /// Replace every multiplicative or tensor interaction by its additive or
    /// matrix-vector counterpart.
    pub first_order: bool,
    /// Number of stack slots, or `None` for no stack.
    pub stack_size: Option<usize>,
}

impl CellConfig {
    pub fn new(kind: CellKind, hidden: usize) -> Self {
        CellConfig {
            kind,
            hidden,
            first_order: false,
            stack_size: if kind == CellKind::StackRnn {
                Some(crate::stack::DEFAULT_STACK_SIZE)
            } else {
                None
            },
        }
    }

    pub fn validate(&self) -> Result<(), CellError> {
        if self.hidden == 0 {
            return Err(CellError::Config("hidden size must be at least 1".into()));
        }
        if self.stack_size == Some(0) {
            return Err(CellError::Config("stack size must be at least 1".into()));
        }
        if self.kind == CellKind::StackRnn && self.stack_size.is_none() {
            return Err(CellError::Config("stack_rnn needs a stack".into()));
        }
        Ok(())
    }
}

/// Output of a cell at one node.
#[derive(Clone, Copy, Debug)]
pub struct NodeState {
    pub z: Var,
    /// Memory vector; zero for cells without one.
    pub c: Var,
    pub stack: Option<Var>,
}

/// Input, forget, output and candidate gates of the LSTM-style cells.
#[derive(Clone, Debug)]
pub struct GateIds {
    pub w: ParamId,
    /// One matrix per child slot.
    pub u: Vec<ParamId>,
    pub b: ParamId,
}

#[derive(Clone, Debug)]
pub enum CellIds {
    TreeRnn {
        w: ParamId,
        b: ParamId,
    },
    SecondOrder {
        w: ParamId,
        b: ParamId,
    },
    /// First-order twin of [`CellIds::SecondOrder`].
    SecondOrderSplit {
        uh: ParamId,
        ux: ParamId,
        b: ParamId,
    },
    /// Gates in the order `i, o, u, f_0, .., f_{k-1}`; `m` holds
    /// `(W_m, R_z, R_m)` for the multiplicative-state cell.
    Gated {
        gates: Vec<GateIds>,
        m: Option<[ParamId; 3]>,
    },
    StackRnn {
        w: ParamId,
        r: ParamId,
    },
}

#[derive(Clone, Debug)]
pub struct OpIds {
    pub cell: CellIds,
    /// `(A, b)` of the stack action layer.
    pub actions: Option<(ParamId, ParamId)>,
}

/// Parameters shared by every stack-augmented node.
#[derive(Clone, Copy, Debug)]
pub struct StackIds {
    /// Maps a node's `z` to the candidate top row.
    pub d: ParamId,
    /// Reads a child's top row into the parent's input.
    pub p: ParamId,
}

/// Where each symbol's parameters live in a [`ParamBank`].
#[derive(Clone, Debug)]
pub struct Layout {
    config: CellConfig,
    embeddings: Vec<Option<ParamId>>,
    ops: Vec<Option<OpIds>>,
    stack: Option<StackIds>,
    head: Option<(ParamId, ParamId)>,
}

#[derive(Clone, Copy, Debug)]
enum Init {
    Zeros,
    Const(f64),
    Uniform(f64),
}

const GATE_NAMES: [&str; 3] = ["i", "o", "u"];

impl Layout {
    /// Draws fresh parameters for `symbols`. Matrices are uniform in
    /// `±1/√n`, the third-order tensor in `±1/√(n·2n)`, embeddings in `±1`
    /// and biases start at zero. Including [`Symbol::Eq`] adds the
    /// verification head (`eq.scale` = 1, `eq.bias` = 0).
    pub fn init<R: Rng + ?Sized>(
        config: CellConfig,
        symbols: &[Symbol],
        rng: &mut R,
    ) -> Result<(ParamBank, Layout), CellError> {
        config.validate()?;
        let mut bank = ParamBank::new();
        let layout = Layout::plan(config, symbols, &mut |name, shape, init| {
            let len: usize = shape.iter().product();
            let data = match init {
                Init::Zeros => vec![0.0; len],
                Init::Const(v) => vec![v; len],
                Init::Uniform(r) => (0..len).map(|_| rng.gen_range(-r..=r)).collect(),
            };
            bank.insert(name, Tensor::new(shape, data)?)
        })?;
        Ok((bank, layout))
    }

    /// Locates the parameters for `symbols` in an existing bank, checking
    /// every shape.
    pub fn resolve(config: CellConfig, symbols: &[Symbol], bank: &ParamBank) -> Result<Layout, CellError> {
        config.validate()?;
        Layout::plan(config, symbols, &mut |name, shape, _| {
            let id = bank.id(&name).ok_or_else(|| CellError::MissingParam(name.clone()))?;
            let found = bank.get(id).shape();
            if found != shape.as_slice() {
                return Err(CellError::ParamShape {
                    name,
                    expected: shape,
                    found: found.to_vec(),
                });
            }
            Ok(id)
        })
    }

    fn plan(
        config: CellConfig,
        symbols: &[Symbol],
        alloc: &mut dyn FnMut(String, Vec<usize>, Init) -> Result<ParamId, CellError>,
    ) -> Result<Layout, CellError> {
        let n = config.hidden;
        let mat = Init::Uniform(1.0 / (n as f64).sqrt());
        let mut layout = Layout {
            config,
            embeddings: vec![None; Symbol::ALL.len()],
            ops: vec![None; Symbol::ALL.len()],
            stack: None,
            head: None,
        };
        for &sym in symbols {
            let name = sym.name();
            if sym == Symbol::Eq {
                let scale = alloc("eq.scale".into(), vec![1], Init::Const(1.0))?;
                let bias = alloc("eq.bias".into(), vec![1], Init::Zeros)?;
                layout.head = Some((scale, bias));
                continue;
            }
            if sym.is_leaf() || config.kind.uses_op_embedding() {
                layout.embeddings[sym.index()] = Some(alloc(format!("{name}.emb"), vec![n], Init::Uniform(1.0))?);
            }
            if sym.is_leaf() {
                continue;
            }
            let arity = sym.arity();
            let mut p = |field: &str, shape: Vec<usize>, init: Init| alloc(format!("{name}.{field}"), shape, init);
            let cell = match config.kind {
                CellKind::TreeRnn => CellIds::TreeRnn {
                    w: p("W", vec![n, 2 * n], mat)?,
                    b: p("b", vec![n], Init::Zeros)?,
                },
                CellKind::SecondOrder if config.first_order => CellIds::SecondOrderSplit {
                    uh: p("Uh", vec![n, n], mat)?,
                    ux: p("Ux", vec![n, 2 * n], mat)?,
                    b: p("b", vec![n], Init::Zeros)?,
                },
                CellKind::SecondOrder => CellIds::SecondOrder {
                    w: p("W", vec![n, n, 2 * n], Init::Uniform(1.0 / ((2 * n * n) as f64).sqrt()))?,
                    b: p("b", vec![n], Init::Zeros)?,
                },
                CellKind::TreeLstm | CellKind::MTreeLstm | CellKind::MiTreeLstm => {
                    let forget: Vec<String> = (0..arity).map(|k| format!("f{k}")).collect();
                    let mut gates = Vec::new();
                    for g in GATE_NAMES.iter().copied().chain(forget.iter().map(String::as_str)) {
                        gates.push(GateIds {
                            w: p(&format!("{g}.W"), vec![n, n], mat)?,
                            u: (0..arity)
                                .map(|l| p(&format!("{g}.U{l}"), vec![n, n], mat))
                                .collect::<Result<_, _>>()?,
                            b: p(&format!("{g}.b"), vec![n], Init::Zeros)?,
                        });
                    }
                    let m = if config.kind == CellKind::MTreeLstm {
                        Some([
                            p("m.W", vec![n, n], mat)?,
                            p("m.Rz", vec![n, n], mat)?,
                            p("m.Rm", vec![n, n], mat)?,
                        ])
                    } else {
                        None
                    };
                    CellIds::Gated { gates, m }
                }
                CellKind::StackRnn => CellIds::StackRnn {
                    w: p("W", vec![n, n], mat)?,
                    r: p("R", vec![n, n], mat)?,
                },
            };
            let actions = match config.stack_size {
                Some(_) => Some((p("stack.A", vec![3, n], mat)?, p("stack.b", vec![3], Init::Zeros)?)),
                None => None,
            };
            layout.ops[sym.index()] = Some(OpIds { cell, actions });
        }
        if config.stack_size.is_some() {
            layout.stack = Some(StackIds {
                d: alloc("stack.D".into(), vec![n, n], mat)?,
                p: alloc("stack.P".into(), vec![n, n], mat)?,
            });
        }
        Ok(layout)
    }

    pub fn config(&self) -> CellConfig {
        self.config
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    pub fn embedding(&self, symbol: Symbol) -> Option<ParamId> {
        self.embeddings[symbol.index()]
    }

    pub fn op(&self, symbol: Symbol) -> Option<&OpIds> {
        self.ops[symbol.index()].as_ref()
    }

    pub fn stack(&self) -> Option<StackIds> {
        self.stack
    }

    /// `(scale, bias)` of the verification head.
    pub fn head(&self) -> Option<(ParamId, ParamId)> {
        self.head
    }
}
