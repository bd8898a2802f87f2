//! Tape-based reverse-mode autodiff over [`Tensor`] values.
//!
//! Nodes are appended in evaluation order, so the node vector is already a
//! topological order and `backward` is a single reverse sweep.

use std::collections::HashMap;

use crate::error::{NumError, Result};
use crate::ops::{Kernel, OpKind, LAYER_NORM_EPS};
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

struct Node {
    kind: Option<OpKind>,
    parents: Vec<usize>,
    value: Tensor,
    cache: Vec<f64>,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients of a scalar root with respect to every leaf that requires grad.
#[derive(Debug, Default)]
pub struct Gradients {
    map: HashMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.map.get(&v)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.map.remove(&v)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push_leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            kind: None,
            parents: Vec::new(),
            value: t,
            cache: Vec::new(),
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_leaf(t, false)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push_leaf(t, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Evaluates `kind` on `inputs` and records the result.
    pub fn apply(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var> {
        if self.consumed {
            return Err(NumError::GraphConsumed);
        }
        let (value, cache) = {
            let vals: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            kind.forward(&vals)?
        };
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            kind: Some(kind),
            parents: inputs.iter().map(|v| v.0).collect(),
            value,
            cache,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Reverse sweep from a scalar `root`.
    ///
    /// Leaves that require grad but do not influence `root` get exact zeros.
    /// The graph cannot be differentiated twice.
    pub fn backward(&mut self, root: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(NumError::GraphConsumed);
        }
        let root_val = &self.nodes[root.0].value;
        if !root_val.is_scalar() {
            return Err(NumError::NonScalarRoot(root_val.shape().to_vec()));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(root_val.shape(), 1.0));
        let mut out = Gradients::default();

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let Some(kind) = &node.kind else {
                out.map.insert(Var(i), g);
                continue;
            };
            let inputs: Vec<&Tensor> = node.parents.iter().map(|&p| &self.nodes[p].value).collect();
            let input_grads = kind.backward(&inputs, &node.value, &node.cache, &g);
            for (&p, gp) in node.parents.iter().zip(input_grads) {
                if !self.nodes[p].requires_grad {
                    continue;
                }
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&gp),
                    slot @ None => *slot = Some(gp),
                }
            }
            // free intermediate caches as soon as they are used
            self.nodes[i].cache = Vec::new();
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.kind.is_none() && node.requires_grad && !out.map.contains_key(&Var(i)) {
                out.map.insert(Var(i), Tensor::zeros(node.value.shape()));
            }
        }
        Ok(out)
    }

    // Convenience wrappers used by model code.

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(
            OpKind::MatMul {
                trans_a: false,
                trans_b: false,
            },
            &[a, b],
        )
    }

    /// `a @ b^T`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(
            OpKind::MatMul {
                trans_a: false,
                trans_b: true,
            },
            &[a, b],
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.apply(OpKind::Scale(s), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        self.apply(OpKind::Concat { axis: 1 }, parts)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        self.apply(OpKind::Concat { axis: 0 }, parts)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        self.apply(OpKind::Slice { axis: 1, start, end }, &[a])
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        self.apply(OpKind::Slice { axis: 0, start, end }, &[a])
    }

    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Result<Var> {
        self.apply(OpKind::GatherRows(idx), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::MeanAll, &[a])
    }

    pub fn mean_groups(&mut self, a: Var, group: usize) -> Result<Var> {
        self.apply(OpKind::MeanGroups { group }, &[a])
    }

    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::SumCols, &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Transpose, &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Gelu, &[a])
    }

    pub fn layer_norm(&mut self, a: Var) -> Result<Var> {
        self.apply(
            OpKind::LayerNorm {
                eps: LAYER_NORM_EPS,
            },
            &[a],
        )
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Softmax, &[a])
    }

    pub fn attention(&mut self, q: Var, k: Var, v: Var, groups: usize, heads: usize) -> Result<Var> {
        self.apply(OpKind::Attention { groups, heads }, &[q, k, v])
    }

    pub fn l1_distance(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::L1Distance, &[a, b])
    }

    pub fn log_sum_exp(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::LogSumExp, &[a])
    }

    pub fn l2_normalize(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::L2Normalize { eps: 1e-12 }, &[a])
    }
}
