use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::tensor::Tensor;
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    RepeatRows(Var),
    StackRows(Vec<Var>),
    GatherRows { x: Var, indices: Vec<usize> },
    Sum(Var),
    Mean(Var),
    Square(Var),
    Neg(Var),
    Scale(Var, f64),
    CrossEntropy { logits: Var, target: Tensor },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records primitive operations in topological order for reverse-mode
/// differentiation.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every recorded value that
/// requires one.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

/// Clamp applied to probabilities before taking logs.
const MIN_PROB: f64 = 1e-12;

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes, leaves included.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, name: &str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::non_finite(format!("output of {name}")));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A leaf that receives gradients.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that never receives gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Stop-gradient: a constant copy of `v`.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        self.push(out, Op::MatMul(a, b), rg, "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Add(a, b), rg, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Sub(a, b), rg, "sub")
    }

    /// Elementwise product of equally shaped operands.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).mul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Mul(a, b), rg, "mul")
    }

    /// Broadcast-add of a bias vector to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let out = self.value(x).add_row(self.value(bias))?;
        let rg = self.rg(&[x, bias]);
        self.push(out, Op::AddBias(x, bias), rg, "add_bias")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).relu();
        let rg = self.rg(&[x]);
        self.push(out, Op::Relu(x), rg, "relu")
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).tanh();
        let rg = self.rg(&[x]);
        self.push(out, Op::Tanh(x), rg, "tanh")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).sigmoid();
        let rg = self.rg(&[x]);
        self.push(out, Op::Sigmoid(x), rg, "sigmoid")
    }

    /// Softmax over the last axis, applied to each row independently.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).softmax();
        let rg = self.rg(&[x]);
        self.push(out, Op::Softmax(x), rg, "softmax")
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_cols(&values)?;
        let rg = self.rg(parts);
        self.push(out, Op::Concat(parts.into()), rg, "concat")
    }

    /// Columns `start..start + len`.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let out = self.value(x).slice_cols(start, len)?;
        let rg = self.rg(&[x]);
        self.push(out, Op::Slice { x, start }, rg, "slice")
    }

    /// Tiles a single-row value to `rows` rows.
    pub fn repeat_rows(&mut self, x: Var, rows: usize) -> Result<Var> {
        let out = self.value(x).repeat_rows(rows)?;
        let rg = self.rg(&[x]);
        self.push(out, Op::RepeatRows(x), rg, "repeat_rows")
    }

    /// Row-wise (vertical) concatenation of matrices with equal widths.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = parts.first().map_or(0, |&p| self.value(p).cols());
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return Err(Error::shape("stack_rows", self.value(parts[0]).shape(), t.shape()));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let out = Tensor::matrix(rows, cols, data)?;
        let rg = self.rg(parts);
        self.push(out, Op::StackRows(parts.into()), rg, "stack_rows")
    }

    /// Selects rows of `x` by index; indices may repeat.
    pub fn gather_rows(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = t.dims();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= r {
                return Err(Error::shape("gather_rows", t.shape(), &[i]));
            }
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::matrix(indices.len(), c, data)?;
        let rg = self.rg(&[x]);
        self.push(
            out,
            Op::GatherRows {
                x,
                indices: indices.into(),
            },
            rg,
            "gather_rows",
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(&[x]);
        self.push(out, Op::Sum(x), rg, "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.is_empty() {
            return Err(Error::invalid("mean of an empty tensor"));
        }
        let out = Tensor::scalar(t.sum() / t.len() as f64);
        let rg = self.rg(&[x]);
        self.push(out, Op::Mean(x), rg, "mean")
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| v * v);
        let rg = self.rg(&[x]);
        self.push(out, Op::Square(x), rg, "square")
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(|v| -v);
        let rg = self.rg(&[x]);
        self.push(out, Op::Neg(x), rg, "neg")
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Result<Var> {
        let out = self.value(x).scale(k);
        let rg = self.rg(&[x]);
        self.push(out, Op::Scale(x, k), rg, "scale")
    }

    /// Per-row cross-entropy between the categorical distribution
    /// `softmax(logits)` and a one-hot `target`, as an `r x 1` column.
    ///
    /// Computed through log-sum-exp; log-probabilities are floored at
    /// `ln(1e-12)`, where the gradient is zero.
    pub fn cross_entropy(&mut self, logits: Var, target: &Tensor) -> Result<Var> {
        let l = self.value(logits);
        if l.dims() != target.dims() {
            return Err(Error::shape("cross_entropy", l.shape(), target.shape()));
        }
        let (r, _) = l.dims();
        let mut out = Vec::with_capacity(r);
        for i in 0..r {
            let hot = one_hot_index(target.row(i))?;
            let row = l.row(i);
            let lp = log_softmax_at(row, hot).max(libm::log(MIN_PROB));
            out.push(-lp);
        }
        let out = Tensor::matrix(r, 1, out)?;
        let rg = self.rg(&[logits]);
        self.push(
            out,
            Op::CrossEntropy {
                logits,
                target: target.clone(),
            },
            rg,
            "cross_entropy",
        )
    }

    /// Reverse pass from a one-element `root`. Nodes are visited in exact
    /// reverse recording order and contributions are summed over all paths.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Ok(Gradients::default());
        }
        let root_value = &self.nodes[root.0].value;
        if !root_value.is_scalar() {
            return Err(Error::shape("backward", root_value.shape(), &[]));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(root_value.map(|_| 1.0));
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if !g.is_finite() {
                    return Err(Error::non_finite(format!("gradient of node {i}")));
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let val = |v: Var| &self.nodes[v.0].value;
        let mut send = |v: Var, d: Tensor| -> Result<()> {
            if !self.nodes[v.0].requires_grad {
                return Ok(());
            }
            let target_shape = self.nodes[v.0].value.shape();
            let d = if d.shape() == target_shape {
                d
            } else {
                Tensor::new(target_shape, d.into_data())?
            };
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&d),
                slot @ None => {
                    *slot = Some(d);
                    Ok(())
                }
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.nodes[a.0].requires_grad {
                    send(*a, g.matmul_t(val(*b))?)?;
                }
                if self.nodes[b.0].requires_grad {
                    send(*b, val(*a).t_matmul(g)?)?;
                }
            }
            Op::Add(a, b) => {
                send(*a, g.clone())?;
                send(*b, g.clone())?;
            }
            Op::Sub(a, b) => {
                send(*a, g.clone())?;
                send(*b, g.scale(-1.0))?;
            }
            Op::Mul(a, b) => {
                if self.nodes[a.0].requires_grad {
                    send(*a, g.mul(val(*b))?)?;
                }
                if self.nodes[b.0].requires_grad {
                    send(*b, g.mul(val(*a))?)?;
                }
            }
            Op::AddBias(x, b) => {
                send(*x, g.clone())?;
                if self.nodes[b.0].requires_grad {
                    send(*b, column_sums(g))?;
                }
            }
            Op::Relu(x) => {
                let d = g.zip_map(val(*x), "relu'", |g, x| if x > 0.0 { g } else { 0.0 })?;
                send(*x, d)?;
            }
            Op::Tanh(x) => {
                send(*x, g.zip_map(&node.value, "tanh'", |g, y| g * (1.0 - y * y))?)?;
            }
            Op::Sigmoid(x) => {
                send(*x, g.zip_map(&node.value, "sigmoid'", |g, y| g * y * (1.0 - y))?)?;
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let (r, c) = y.dims();
                let mut d = Vec::with_capacity(r * c);
                for i in 0..r {
                    let (yr, gr) = (y.row(i), g.row(i));
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    d.extend(yr.iter().zip(gr).map(|(y, g)| y * (g - dot)));
                }
                send(*x, Tensor::matrix(r, c, d)?)?;
            }
            Op::Concat(parts) => {
                let mut start = 0;
                for p in parts {
                    let w = val(*p).cols();
                    if self.nodes[p.0].requires_grad {
                        send(*p, g.slice_cols(start, w)?)?;
                    }
                    start += w;
                }
            }
            Op::Slice { x, start } => {
                let (r, c) = val(*x).dims();
                let w = g.cols();
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    d[i * c + start..i * c + start + w].copy_from_slice(g.row(i));
                }
                send(*x, Tensor::matrix(r, c, d)?)?;
            }
            Op::RepeatRows(x) => send(*x, column_sums(g))?,
            Op::StackRows(parts) => {
                let mut row = 0;
                let c = g.cols();
                for p in parts {
                    let r = val(*p).rows();
                    if self.nodes[p.0].requires_grad {
                        let d = g.data()[row * c..(row + r) * c].into();
                        send(*p, Tensor::matrix(r, c, d)?)?;
                    }
                    row += r;
                }
            }
            Op::GatherRows { x, indices } => {
                let (r, c) = val(*x).dims();
                let mut d = vec![0.0; r * c];
                for (k, &i) in indices.iter().enumerate() {
                    for (o, v) in d[i * c..(i + 1) * c].iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
                send(*x, Tensor::matrix(r, c, d)?)?;
            }
            Op::Sum(x) => {
                let gv = g.item()?;
                send(*x, val(*x).map(|_| gv))?;
            }
            Op::Mean(x) => {
                let t = val(*x);
                let gv = g.item()? / t.len() as f64;
                send(*x, t.map(|_| gv))?;
            }
            Op::Square(x) => send(*x, g.zip_map(val(*x), "square'", |g, x| 2.0 * x * g)?)?,
            Op::Neg(x) => send(*x, g.scale(-1.0))?,
            Op::Scale(x, k) => send(*x, g.scale(*k))?,
            Op::CrossEntropy { logits, target } => {
                let l = val(*logits);
                let (r, c) = l.dims();
                let mut d = Vec::with_capacity(r * c);
                let floor = libm::log(MIN_PROB);
                for i in 0..r {
                    let row = l.row(i);
                    let hot = one_hot_index(target.row(i))?;
                    let gi = g.data()[i];
                    if log_softmax_at(row, hot) < floor {
                        d.extend(core::iter::repeat_n(0.0, c));
                        continue;
                    }
                    let p = Tensor::vector(row.into()).softmax();
                    d.extend(
                        p.data()
                            .iter()
                            .zip(target.row(i))
                            .map(|(p, t)| gi * (p - t)),
                    );
                }
                send(*logits, Tensor::matrix(r, c, d)?)?;
            }
        }
        Ok(())
    }
}

fn column_sums(g: &Tensor) -> Tensor {
    let (r, c) = g.dims();
    let mut out = vec![0.0; c];
    for i in 0..r {
        for (o, v) in out.iter_mut().zip(g.row(i)) {
            *o += v;
        }
    }
    Tensor::vector(out)
}

fn log_softmax_at(row: &[f64], idx: usize) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + libm::log(row.iter().map(|v| libm::exp(v - m)).sum::<f64>());
    row[idx] - lse
}

fn one_hot_index(row: &[f64]) -> Result<usize> {
    let mut hot = None;
    for (j, &v) in row.iter().enumerate() {
        if v == 1.0 && hot.is_none() {
            hot = Some(j);
        } else if v != 0.0 {
            return Err(Error::invalid("cross-entropy target is not one-hot"));
        }
    }
    hot.ok_or_else(|| Error::invalid("cross-entropy target is not one-hot"))
}
