use std::collections::HashMap;

use crate::autodiff::{Gradients, Graph, Tensor, Var};

use super::{CellError, Layout};

/// Index of a tensor in a [`ParamBank`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors, in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamBank {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, ParamId>,
}

impl ParamBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<ParamId, CellError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(CellError::DuplicateParam(name));
        }
        let id = ParamId(self.tensors.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }
}

/// Gradient slots aligned with a [`ParamBank`]; untouched parameters stay
/// `None`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamGrads {
    slots: Vec<Option<Vec<f64>>>,
}

impl ParamGrads {
    pub fn new(len: usize) -> Self {
        ParamGrads { slots: vec![None; len] }
    }

    pub fn add(&mut self, id: ParamId, grad: &[f64]) {
        match &mut self.slots[id.0] {
            Some(buf) => buf.iter_mut().zip(grad).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(grad.to_vec()),
        }
    }

    /// Adds `other` slot by slot, in id order.
    pub fn merge(&mut self, other: &ParamGrads) {
        for (i, g) in other.slots.iter().enumerate() {
            if let Some(g) = g {
                self.add(ParamId(i), g);
            }
        }
    }

    /// Multiplies every present gradient by `k`.
    pub fn scale(&mut self, k: f64) {
        for g in self.slots.iter_mut().flatten() {
            g.iter_mut().for_each(|v| *v *= k);
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.slots.get(id.0).and_then(|g| g.as_deref())
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_deref().map(|g| (ParamId(i), g)))
    }
}

/// One example's view of the parameters: a graph plus the leaf each
/// parameter was bound to. Every occurrence of a symbol reuses the same
/// leaf, so its gradient collects contributions from all of them.
pub struct Session<'a> {
    pub graph: &'a mut Graph,
    bank: &'a ParamBank,
    layout: &'a Layout,
    bound: Vec<Option<Var>>,
}

impl<'a> Session<'a> {
    pub fn new(graph: &'a mut Graph, bank: &'a ParamBank, layout: &'a Layout) -> Self {
        Session {
            graph,
            bank,
            layout,
            bound: vec![None; bank.len()],
        }
    }

    /// Binds every parameter to an existing leaf, in bank order.
    pub fn with_leaves(graph: &'a mut Graph, bank: &'a ParamBank, layout: &'a Layout, leaves: &[Var]) -> Self {
        let mut s = Session::new(graph, bank, layout);
        for (slot, &v) in s.bound.iter_mut().zip(leaves) {
            *slot = Some(v);
        }
        s
    }

    pub fn layout(&self) -> &'a Layout {
        self.layout
    }

    pub fn bank(&self) -> &'a ParamBank {
        self.bank
    }

    /// The leaf for `id`, recording it on first use.
    pub fn var(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.graph.param(self.bank.get(id).clone());
        self.bound[id.0] = Some(v);
        v
    }

    /// Leaf ids bound so far, by parameter.
    pub fn bound(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.bound
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (ParamId(i), v)))
    }

    /// Reads parameter gradients out of a backward pass.
    pub fn grads(&self, grads: &Gradients) -> ParamGrads {
        let mut out = ParamGrads::new(self.bank.len());
        for (id, var) in self.bound() {
            if let Some(g) = grads.get(var) {
                out.add(id, g);
            }
        }
        out
    }
}
