//! Reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every primitive evaluated during one forward pass.
//! Nodes are appended in evaluation order, so the tape is topologically
//! sorted by construction. [`Tape::backward`] borrows the tape immutably;
//! it may be called any number of times and always yields the same result.
//!
//! ReLU uses the subgradient 0 at the kink.

use crate::error::EngineError;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Matmul(Var, Var),
    Transpose(Var),
    AddBias(Var, Var),
    Relu(Var),
    Tanh(Var),
    SoftmaxXent { logits: Var, probs: Tensor, labels: Vec<usize> },
    Mse { pred: Var, target: Tensor },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Ordered record of one forward evaluation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar output with respect to every leaf on the tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<(Var, Tensor)>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads
            .binary_search_by_key(&var, |(v, _)| *v)
            .ok()
            .map(|i| &self.grads[i].1)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        let i = self.grads.binary_search_by_key(&var, |(v, _)| *v).ok()?;
        Some(std::mem::replace(&mut self.grads[i].1, Tensor::scalar(0.0)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &Tensor)> {
        self.grads.iter().map(|(v, t)| (*v, t))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> Result<&Node, EngineError> {
        self.nodes.get(v.0).ok_or(EngineError::UnknownVar(v.0))
    }

    pub fn value(&self, v: Var) -> Result<&Tensor, EngineError> {
        Ok(&self.node(v)?.value)
    }

    /// Records a tracked input; `backward` returns a gradient for it.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Records an untracked input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        let out = self.value(a)?.add(self.value(b)?)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        let out = self.value(a)?.sub(self.value(b)?)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        let out = self.value(a)?.mul(self.value(b)?)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, EngineError> {
        let out = self.value(a)?.scale(c);
        Ok(self.push(out, Op::Scale(a, c)))
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var, EngineError> {
        let out = Tensor::scalar(self.value(a)?.sum());
        Ok(self.push(out, Op::Sum(a)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        let out = self.value(a)?.matmul(self.value(b)?)?;
        Ok(self.push(out, Op::Matmul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, EngineError> {
        let out = self.value(a)?.transpose()?;
        Ok(self.push(out, Op::Transpose(a)))
    }

    /// Adds a rank-1 bias of length `n` to every row of a `(rows, n)` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, EngineError> {
        let xv = self.value(x)?;
        let bv = self.value(bias)?;
        if xv.rank() != 2 || bv.rank() != 1 || xv.shape()[1] != bv.shape()[0] {
            return Err(EngineError::ShapeMismatch {
                op: "add_bias",
                lhs: xv.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let n = bv.len();
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(n) {
            for (o, &b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddBias(x, bias)))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, EngineError> {
        let out = self.value(a)?.map(|v| if v > 0.0 { v } else { 0.0 });
        Ok(self.push(out, Op::Relu(a)))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, EngineError> {
        let out = self.value(a)?.map(f64::tanh);
        Ok(self.push(out, Op::Tanh(a)))
    }

    /// Mean softmax cross-entropy of `(rows, classes)` logits against class indices.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
    ) -> Result<Var, EngineError> {
        let z = self.value(logits)?;
        if z.rank() != 2 {
            return Err(EngineError::RankMismatch {
                op: "softmax_cross_entropy",
                expected: 2,
                shape: z.shape().to_vec(),
            });
        }
        let (rows, k) = (z.shape()[0], z.shape()[1]);
        if labels.len() != rows {
            return Err(EngineError::LabelCount {
                op: "softmax_cross_entropy",
                rows,
                found: labels.len(),
            });
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(EngineError::InvalidLabel {
                row,
                label,
                num_classes: k,
            });
        }
        let mut probs = vec![0.0; rows * k];
        let mut total = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let zi = z.row(i);
            let max = zi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for (p, &v) in probs[i * k..(i + 1) * k].iter_mut().zip(zi) {
                *p = (v - max).exp();
                denom += *p;
            }
            for p in &mut probs[i * k..(i + 1) * k] {
                *p /= denom;
            }
            total += denom.ln() + max - zi[y];
        }
        let loss = Tensor::scalar(total / rows as f64);
        let probs = Tensor::new(vec![rows, k], probs)?;
        Ok(self.push(
            loss,
            Op::SoftmaxXent {
                logits,
                probs,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Mean squared error over all elements.
    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var, EngineError> {
        let p = self.value(pred)?;
        p.expect_same_shape(target, "mse")?;
        let n = p.len().max(1) as f64;
        let total: f64 = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(self.push(
            Tensor::scalar(total / n),
            Op::Mse {
                pred,
                target: target.clone(),
            },
        ))
    }

    /// Reverse sweep from a scalar `output`, scaling the adjoint seed by `seed`.
    ///
    /// Returns one gradient per leaf on the tape, including leaves the output
    /// does not depend on (their gradient is zero).
    pub fn backward(&self, output: Var, seed: f64) -> Result<Gradients, EngineError> {
        let out = self.node(output)?;
        if out.value.len() != 1 {
            return Err(EngineError::NonScalarOutput {
                shape: out.value.shape().to_vec(),
            });
        }
        let mut adj: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[output.0] = Some(Tensor::full(out.value.shape(), seed));

        for idx in (0..=output.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    adj[idx] = Some(g);
                }
                Op::Constant => {}
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, &g);
                    accumulate(&mut adj, *b, &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *a, &g);
                    accumulate(&mut adj, *b, &g.scale(-1.0));
                }
                Op::Mul(a, b) => {
                    let ga = g.mul(&self.nodes[b.0].value)?;
                    let gb = g.mul(&self.nodes[a.0].value)?;
                    accumulate(&mut adj, *a, &ga);
                    accumulate(&mut adj, *b, &gb);
                }
                Op::Scale(a, c) => accumulate(&mut adj, *a, &g.scale(*c)),
                Op::Sum(a) => {
                    let s = g.data()[0];
                    let shape = self.nodes[a.0].value.shape();
                    accumulate(&mut adj, *a, &Tensor::full(shape, s));
                }
                Op::Matmul(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    accumulate(&mut adj, *a, &g.matmul(&bv.transpose()?)?);
                    accumulate(&mut adj, *b, &av.transpose()?.matmul(&g)?);
                }
                Op::Transpose(a) => accumulate(&mut adj, *a, &g.transpose()?),
                Op::AddBias(x, b) => {
                    let n = self.nodes[b.0].value.len();
                    let mut gb = vec![0.0; n];
                    for row in g.data().chunks(n) {
                        for (s, &v) in gb.iter_mut().zip(row) {
                            *s += v;
                        }
                    }
                    accumulate(&mut adj, *x, &g);
                    accumulate(&mut adj, *b, &Tensor::vector(gb));
                }
                Op::Relu(a) => {
                    let x = &self.nodes[a.0].value;
                    let ga = g.zip_map(x, "relu'", |gv, xv| if xv > 0.0 { gv } else { 0.0 })?;
                    accumulate(&mut adj, *a, &ga);
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let ga = g.zip_map(y, "tanh'", |gv, yv| gv * (1.0 - yv * yv))?;
                    accumulate(&mut adj, *a, &ga);
                }
                Op::SoftmaxXent {
                    logits,
                    probs,
                    labels,
                } => {
                    let rows = labels.len();
                    let k = probs.cols();
                    let s = g.data()[0] / rows as f64;
                    let mut gz = probs.scale(s);
                    for (i, &y) in labels.iter().enumerate() {
                        gz.data_mut()[i * k + y] -= s;
                    }
                    accumulate(&mut adj, *logits, &gz);
                }
                Op::Mse { pred, target } => {
                    let p = &self.nodes[pred.0].value;
                    let s = 2.0 * g.data()[0] / p.len().max(1) as f64;
                    let gp = p.zip_map(target, "mse'", |a, b| s * (a - b))?;
                    accumulate(&mut adj, *pred, &gp);
                }
            }
        }

        let grads = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.op, Op::Leaf))
            .map(|(i, n)| {
                let g = adj[i]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros_like(&n.value));
                (Var(i), g)
            })
            .collect();
        Ok(Gradients { grads })
    }
}

fn accumulate(adj: &mut [Option<Tensor>], v: Var, g: &Tensor) {
    match &mut adj[v.0] {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g.clone()),
    }
}
