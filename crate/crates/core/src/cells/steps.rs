use crate::autodiff::Var;
use crate::expr::Symbol;
use crate::stack;

use super::{CellError, CellIds, CellKind, GateIds, NodeState, OpIds, Session};

fn check_arity(symbol: Symbol, children: &[NodeState]) -> Result<(), CellError> {
    let expected = symbol.arity();
    if expected == 0 || children.len() != expected {
        return Err(CellError::Arity {
            symbol,
            expected,
            got: children.len(),
        });
    }
    Ok(())
}

fn op_ids<'a>(s: &Session<'a>, symbol: Symbol) -> Result<&'a OpIds, CellError> {
    s.layout().op(symbol).ok_or(CellError::UnknownSymbol(symbol))
}

fn embedding(s: &mut Session, symbol: Symbol) -> Result<Var, CellError> {
    let id = s.layout().embedding(symbol).ok_or(CellError::UnknownSymbol(symbol))?;
    Ok(s.var(id))
}

fn zero_memory(s: &mut Session) -> Var {
    let n = s.layout().hidden();
    s.graph.zeros(&[n])
}

fn state(z: Var, c: Var) -> NodeState {
    NodeState { z, c, stack: None }
}

fn wrong_cell(symbol: Symbol, s: &Session) -> CellError {
    CellError::WrongCell {
        symbol,
        cell: s.layout().config().kind,
    }
}

/// Children's `z` concatenated into a `2n` vector, zero-padding the second
/// slot for unary nodes.
fn padded_children(s: &mut Session, children: &[NodeState]) -> Result<Var, CellError> {
    let n = s.layout().hidden();
    let mut parts: Vec<Var> = children.iter().map(|c| c.z).collect();
    if parts.len() == 1 {
        parts.push(s.graph.zeros(&[n]));
    }
    Ok(s.graph.concat(&parts)?)
}

/// `z = tanh(e)` for a leaf symbol; zero memory and, when the layout has a
/// stack, an empty stack.
pub fn embed_leaf(s: &mut Session, symbol: Symbol) -> Result<NodeState, CellError> {
    if !symbol.is_leaf() {
        return Err(CellError::NotALeaf(symbol));
    }
    let e = embedding(s, symbol)?;
    let z = s.graph.tanh(e)?;
    let c = zero_memory(s);
    let stack = s
        .layout()
        .config()
        .stack_size
        .map(|p| s.graph.zeros(&[p, s.layout().hidden()]));
    Ok(NodeState { z, c, stack })
}

/// `z = tanh(W · [z_1; z_2] + b)`.
pub fn tree_rnn_step(s: &mut Session, symbol: Symbol, children: &[NodeState]) -> Result<NodeState, CellError> {
    check_arity(symbol, children)?;
    let CellIds::TreeRnn { w, b } = op_ids(s, symbol)?.cell else {
        return Err(wrong_cell(symbol, s));
    };
    let x = padded_children(s, children)?;
    let (w, b) = (s.var(w), s.var(b));
    let pre = s.graph.matvec(w, x)?;
    let pre = s.graph.add(pre, b)?;
    let z = s.graph.tanh(pre)?;
    Ok(state(z, zero_memory(s)))
}

/// `z = tanh(W ×₁ e ×₂ [z_1; z_2] + b)`: the symbol embedding selects a
/// transition matrix applied to the concatenated children. The first-order
/// twin is `tanh(U_h e + U_x [z_1; z_2] + b)`.
pub fn second_order_step(s: &mut Session, symbol: Symbol, children: &[NodeState]) -> Result<NodeState, CellError> {
    check_arity(symbol, children)?;
    let x = padded_children(s, children)?;
    let h = embedding(s, symbol)?;
    let pre = match op_ids(s, symbol)?.cell {
        CellIds::SecondOrder { w, b } => {
            let (w, b) = (s.var(w), s.var(b));
            let t = s.graph.bilinear_contract(w, h, x)?;
            s.graph.add(t, b)?
        }
        CellIds::SecondOrderSplit { uh, ux, b } => {
            let (uh, ux, b) = (s.var(uh), s.var(ux), s.var(b));
            let a = s.graph.matvec(uh, h)?;
            let c = s.graph.matvec(ux, x)?;
            s.graph.sum(&[a, c, b])?
        }
        _ => return Err(wrong_cell(symbol, s)),
    };
    let z = s.graph.tanh(pre)?;
    Ok(state(z, zero_memory(s)))
}

#[derive(Clone, Copy, PartialEq)]
enum Combine {
    /// `W x + Σ U_l v_l + b`
    Additive,
    /// `(W x) ⊙ (Σ U_l v_l) + b`
    Hadamard,
}

fn gate_pre(s: &mut Session, gate: &GateIds, x: Var, inputs: &[Var], combine: Combine) -> Result<Var, CellError> {
    let (w, b) = (s.var(gate.w), s.var(gate.b));
    let wx = s.graph.matvec(w, x)?;
    let mut terms = Vec::with_capacity(inputs.len() + 2);
    for (&u, &v) in gate.u.iter().zip(inputs) {
        let u = s.var(u);
        terms.push(s.graph.matvec(u, v)?);
    }
    Ok(match combine {
        Combine::Additive => {
            terms.push(wx);
            terms.push(b);
            s.graph.sum(&terms)?
        }
        Combine::Hadamard => {
            let children = if terms.len() == 1 {
                terms[0]
            } else {
                s.graph.sum(&terms)?
            };
            let prod = s.graph.hadamard(wx, children)?;
            s.graph.add(prod, b)?
        }
    })
}

/// Shared LSTM body: gates from `x` and the per-child `inputs`, then
/// `c = i⊙u + Σ f_l⊙c_l` and `z = o⊙tanh(c)`.
fn gated(
    s: &mut Session,
    gates: &[GateIds],
    x: Var,
    inputs: &[Var],
    children: &[NodeState],
    combine: Combine,
) -> Result<NodeState, CellError> {
    let mut pre = Vec::with_capacity(gates.len());
    for gate in gates {
        pre.push(gate_pre(s, gate, x, inputs, combine)?);
    }
    let i = s.graph.sigmoid(pre[0])?;
    let o = s.graph.sigmoid(pre[1])?;
    let u = s.graph.tanh(pre[2])?;
    let mut terms = vec![s.graph.hadamard(i, u)?];
    for (l, child) in children.iter().enumerate() {
        let f = s.graph.sigmoid(pre[3 + l])?;
        terms.push(s.graph.hadamard(f, child.c)?);
    }
    let c = s.graph.sum(&terms)?;
    let tc = s.graph.tanh(c)?;
    let z = s.graph.hadamard(o, tc)?;
    Ok(state(z, c))
}

fn gate_ids<'a>(
    s: &Session<'a>,
    symbol: Symbol,
) -> Result<(&'a [GateIds], Option<[crate::cells::ParamId; 3]>), CellError> {
    match &op_ids(s, symbol)?.cell {
        CellIds::Gated { gates, m } => Ok((gates, *m)),
        _ => Err(wrong_cell(symbol, s)),
    }
}

/// N-ary Tree-LSTM with `x = e_sym`; all gate inputs are summed.
pub fn tree_lstm_step(s: &mut Session, symbol: Symbol, children: &[NodeState]) -> Result<NodeState, CellError> {
    check_arity(symbol, children)?;
    let (gates, _) = gate_ids(s, symbol)?;
    let x = embedding(s, symbol)?;
    let inputs: Vec<Var> = children.iter().map(|c| c.z).collect();
    gated(s, gates, x, &inputs, children, Combine::Additive)
}

/// Tree-LSTM whose child inputs pass through a multiplicative state:
/// `ẑ_l = W_m x + R_z z_l`, `m_l = (W_m x) ⊙ (R_m ẑ_l)`; the gates read
/// `m_l` in place of `z_l`. The first-order twin uses `m_l = W_m x + R_m ẑ_l`.
pub fn mtree_lstm_step(s: &mut Session, symbol: Symbol, children: &[NodeState]) -> Result<NodeState, CellError> {
    check_arity(symbol, children)?;
    let (gates, m) = gate_ids(s, symbol)?;
    let [wm, rz, rm] = m.ok_or_else(|| wrong_cell(symbol, s))?;
    let first_order = s.layout().config().first_order;
    let x = embedding(s, symbol)?;
    let (wm, rz, rm) = (s.var(wm), s.var(rz), s.var(rm));
    let wx = s.graph.matvec(wm, x)?;
    let mut inputs = Vec::with_capacity(children.len());
    for child in children {
        let rzz = s.graph.matvec(rz, child.z)?;
        let zhat = s.graph.add(wx, rzz)?;
        let rmz = s.graph.matvec(rm, zhat)?;
        inputs.push(if first_order {
            s.graph.add(wx, rmz)?
        } else {
            s.graph.hadamard(wx, rmz)?
        });
    }
    gated(s, gates, x, &inputs, children, Combine::Additive)
}

/// Tree-LSTM whose gate pre-activations multiply the input projection with
/// the summed child projections: `(W x) ⊙ (Σ U_l z_l) + b`. The first-order
/// twin is the additive Tree-LSTM.
pub fn mi_tree_lstm_step(s: &mut Session, symbol: Symbol, children: &[NodeState]) -> Result<NodeState, CellError> {
    check_arity(symbol, children)?;
    let (gates, _) = gate_ids(s, symbol)?;
    let x = embedding(s, symbol)?;
    let inputs: Vec<Var> = children.iter().map(|c| c.z).collect();
    let combine = if s.layout().config().first_order {
        Combine::Additive
    } else {
        Combine::Hadamard
    };
    gated(s, gates, x, &inputs, children, combine)
}

/// `z = tanh((W x) ⊙ (R ẑ))` with `ẑ = Σ z_l + enrichment`. The first-order
/// twin is `tanh(W x + R ẑ)`.
pub fn stack_rnn_step(
    s: &mut Session,
    symbol: Symbol,
    children: &[NodeState],
    enrichment: Option<Var>,
) -> Result<NodeState, CellError> {
    check_arity(symbol, children)?;
    let CellIds::StackRnn { w, r } = op_ids(s, symbol)?.cell else {
        return Err(wrong_cell(symbol, s));
    };
    let x = embedding(s, symbol)?;
    let mut parts: Vec<Var> = children.iter().map(|c| c.z).collect();
    parts.extend(enrichment);
    let zhat = s.graph.sum(&parts)?;
    let (w, r) = (s.var(w), s.var(r));
    let wx = s.graph.matvec(w, x)?;
    let rz = s.graph.matvec(r, zhat)?;
    let pre = if s.layout().config().first_order {
        s.graph.add(wx, rz)?
    } else {
        s.graph.hadamard(wx, rz)?
    };
    let z = s.graph.tanh(pre)?;
    Ok(state(z, zero_memory(s)))
}

fn dispatch(s: &mut Session, symbol: Symbol, children: &[NodeState]) -> Result<NodeState, CellError> {
    match s.layout().config().kind {
        CellKind::TreeRnn => tree_rnn_step(s, symbol, children),
        CellKind::TreeLstm => tree_lstm_step(s, symbol, children),
        CellKind::SecondOrder => second_order_step(s, symbol, children),
        CellKind::MTreeLstm => mtree_lstm_step(s, symbol, children),
        CellKind::MiTreeLstm => mi_tree_lstm_step(s, symbol, children),
        CellKind::StackRnn => stack_rnn_step(s, symbol, children, None),
    }
}

/// One node of the configured network: a leaf embedding, or the cell step
/// with stack reads and updates when the layout has a stack.
///
/// With a stack, every child's `z` is enriched by `Σ_l P·S_l[0]` before the
/// cell runs (the stack cell adds it once to the summed children instead).
/// The node's actions `softmax(A z + b)` then update each child stack,
/// pushing `σ(D z)`, and the parent keeps their mean.
pub fn node_step(s: &mut Session, symbol: Symbol, children: &[NodeState]) -> Result<NodeState, CellError> {
    if symbol.is_leaf() {
        return embed_leaf(s, symbol);
    }
    check_arity(symbol, children)?;
    let Some(ids) = s.layout().stack() else {
        return dispatch(s, symbol, children);
    };
    let stacks: Vec<Var> = children
        .iter()
        .map(|c| c.stack.ok_or(CellError::MissingStack))
        .collect::<Result<_, _>>()?;
    let p = s.var(ids.p);
    let enrichment = stack::stack_read_state(s.graph, &stacks, p)?;
    let mut out = if s.layout().config().kind == CellKind::StackRnn {
        stack_rnn_step(s, symbol, children, Some(enrichment))?
    } else {
        let mut enriched = children.to_vec();
        for child in &mut enriched {
            child.z = s.graph.add(child.z, enrichment)?;
        }
        dispatch(s, symbol, &enriched)?
    };
    let (a, b) = op_ids(s, symbol)?.actions.ok_or_else(|| wrong_cell(symbol, s))?;
    let (a, b, d) = (s.var(a), s.var(b), s.var(ids.d));
    let actions = stack::compute_actions(s.graph, out.z, a, b)?;
    let mut updated = Vec::with_capacity(stacks.len());
    for &st in &stacks {
        updated.push(stack::stack_update(s.graph, st, actions, out.z, d)?);
    }
    out.stack = Some(stack::merge_child_stacks(s.graph, &updated)?);
    Ok(out)
}
