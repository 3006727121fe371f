//! Reverse-mode differentiation over dense vectors and matrices.
//!
//! A [`Tape`] records every operation as a node holding its forward value
//! and the indices of its operands. Nodes are appended in evaluation order,
//! so a single reverse sweep in [`Tape::backward`] propagates adjoints.
//!
//! ```
//! use mtlf_core::autodiff::Tape;
//!
//! let mut tape = Tape::new();
//! let w = tape.constant(vec![5.0]);
//! let d = tape.shift(w, -3.0);
//! let loss = tape.mul(d, d).unwrap();
//! assert_eq!(tape.value(loss), &[4.0]);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(w)[0], 4.0);
//! ```

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("log of non-positive value {value} at node {node} (element {element})")]
    Domain {
        node: usize,
        element: usize,
        value: f64,
    },
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{0}")]
    Usage(String),
}

type Result<T> = std::result::Result<T, AutodiffError>;

/// Handle to a node on a particular tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(&self) -> usize {
        self.index
    }
}

/// A learnable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub tag: String,
    pub rows: usize,
    pub cols: usize,
    pub value: Vec<f64>,
    #[serde(skip)]
    pub grad: Vec<f64>,
}

impl Param {
    pub fn new(tag: impl Into<String>, rows: usize, cols: usize, value: Vec<f64>) -> Self {
        assert_eq!(
            rows * cols,
            value.len(),
            "param value does not match its shape"
        );
        Self {
            tag: tag.into(),
            rows,
            cols,
            grad: vec![0.0; value.len()],
            value,
        }
    }

    pub fn vector(tag: impl Into<String>, value: Vec<f64>) -> Self {
        let n = value.len();
        Self::new(tag, n, 1, value)
    }

    pub fn zeros(tag: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self::new(tag, rows, cols, vec![0.0; rows * cols])
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.clear();
        self.grad.resize(self.value.len(), 0.0);
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, f64),
    Shift(usize),
    MatVec(usize, usize),
    Sigmoid(usize),
    Tanh(usize),
    Log(usize),
    Exp(usize),
    /// Forward clamps from below; backward passes the adjoint through as if
    /// the clamp were the identity.
    ClampMin(usize),
    Concat(Vec<usize>),
    Slice(usize, usize),
    Sum(usize),
    AddN(Vec<usize>),
    /// Mean pinball loss of `pred` against `target`.
    Pinball {
        target: usize,
        pred: usize,
        tau: f64,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    rows: usize,
    cols: usize,
    op: Op,
}

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Records a computation with `build` and returns the tape together with
/// the scalar it produced.
pub fn forward<F>(build: F) -> Result<(Tape, Var)>
where
    F: FnOnce(&mut Tape) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = build(&mut tape)?;
    Ok((tape, out))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `(x - x_hat) * tau` when `x >= x_hat`, `(x_hat - x) * (1 - tau)` otherwise.
pub fn pinball(x: f64, x_hat: f64, tau: f64) -> f64 {
    if x >= x_hat {
        (x - x_hat) * tau
    } else {
        (x_hat - x) * (1.0 - tau)
    }
}

/// Derivative of [`pinball`] with respect to `x_hat`; zero at the kink.
fn pinball_grad(x: f64, x_hat: f64, tau: f64) -> f64 {
    if x > x_hat {
        -tau
    } else if x < x_hat {
        1.0 - tau
    } else {
        0.0
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, rows: usize, cols: usize, op: Op) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            value,
            rows,
            cols,
            op,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn node(&self, v: Var) -> &Node {
        assert_eq!(v.tape, self.id, "variable belongs to another tape");
        &self.nodes[v.index]
    }

    /// `(rows, cols)` of a node.
    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.node(v).value[0]
    }

    /// A column vector with no gradient of interest.
    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        let n = value.len();
        self.push(value, n, 1, Op::Input)
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.constant(vec![0.0; n])
    }

    /// Registers a parameter as a leaf.
    pub fn param(&mut self, p: &Param) -> Var {
        self.push(p.value.clone(), p.rows, p.cols, Op::Input)
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (na, nb) = (self.node(a), self.node(b));
        let (la, lb) = (na.value.len(), nb.value.len());
        let (value, rows, cols) = if la == lb {
            let v = na
                .value
                .iter()
                .zip(&nb.value)
                .map(|(x, y)| f(*x, *y))
                .collect();
            (v, na.rows, na.cols)
        } else if lb == 1 {
            let y = nb.value[0];
            (
                na.value.iter().map(|x| f(*x, y)).collect(),
                na.rows,
                na.cols,
            )
        } else if la == 1 {
            let x = na.value[0];
            (
                nb.value.iter().map(|y| f(x, *y)).collect(),
                nb.rows,
                nb.cols,
            )
        } else {
            return Err(AutodiffError::Shape {
                op: name,
                left: (na.rows, na.cols),
                right: (nb.rows, nb.cols),
            });
        };
        Ok(self.push(value, rows, cols, op))
    }

    /// Elementwise sum; a length-1 operand broadcasts.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a.index, b.index))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a.index, b.index))
    }

    /// Hadamard product; a length-1 operand broadcasts.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a.index, b.index))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "div", |x, y| x / y, Op::Div(a.index, b.index))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let n = self.node(a);
        let (rows, cols) = (n.rows, n.cols);
        let value = n.value.iter().map(|x| x * k).collect();
        self.push(value, rows, cols, Op::Scale(a.index, k))
    }

    /// `a + k` elementwise.
    pub fn shift(&mut self, a: Var, k: f64) -> Var {
        let n = self.node(a);
        let (rows, cols) = (n.rows, n.cols);
        let value = n.value.iter().map(|x| x + k).collect();
        self.push(value, rows, cols, Op::Shift(a.index))
    }

    /// Matrix (rows x cols, row-major) times column vector (cols).
    pub fn matvec(&mut self, m: Var, v: Var) -> Result<Var> {
        let (nm, nv) = (self.node(m), self.node(v));
        if nm.cols != nv.value.len() {
            return Err(AutodiffError::Shape {
                op: "matvec",
                left: (nm.rows, nm.cols),
                right: (nv.rows, nv.cols),
            });
        }
        let value = nm
            .value
            .chunks_exact(nm.cols)
            .map(|row| row.iter().zip(&nv.value).map(|(a, b)| a * b).sum())
            .collect();
        let rows = nm.rows;
        Ok(self.push(value, rows, 1, Op::MatVec(m.index, v.index)))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let n = self.node(a);
        let (rows, cols) = (n.rows, n.cols);
        let value = n.value.iter().map(|x| f(*x)).collect();
        self.push(value, rows, cols, op)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a.index))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a.index))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a.index))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some((element, &value)) = self
            .node(a)
            .value
            .iter()
            .enumerate()
            .find(|(_, v)| v.is_nan() || **v <= 0.0)
        {
            return Err(AutodiffError::Domain {
                node: a.index,
                element,
                value,
            });
        }
        Ok(self.unary(a, f64::ln, Op::Log(a.index)))
    }

    /// `max(a, floor)` forward, identity backward.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        self.unary(a, |x| x.max(floor), Op::ClampMin(a.index))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut value = Vec::new();
        for p in parts {
            value.extend_from_slice(self.value(*p));
        }
        let n = value.len();
        self.push(
            value,
            n,
            1,
            Op::Concat(parts.iter().map(|p| p.index).collect()),
        )
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let total = self.node(a).value.len();
        if start + len > total {
            return Err(AutodiffError::Shape {
                op: "slice",
                left: (total, 1),
                right: (start, len),
            });
        }
        let value = self.node(a).value[start..start + len].to_vec();
        Ok(self.push(value, len, 1, Op::Slice(a.index, start)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(vec![s], 1, 1, Op::Sum(a.index))
    }

    /// Sum of equally shaped operands.
    pub fn add_n(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| AutodiffError::Usage("add_n of nothing".into()))?;
        let (rows, cols) = self.shape(first);
        let mut value = vec![0.0; rows * cols];
        for p in parts {
            let n = self.node(*p);
            if (n.rows, n.cols) != (rows, cols) {
                return Err(AutodiffError::Shape {
                    op: "add_n",
                    left: (rows, cols),
                    right: (n.rows, n.cols),
                });
            }
            value
                .iter_mut()
                .zip(&n.value)
                .for_each(|(acc, v)| *acc += v);
        }
        Ok(self.push(
            value,
            rows,
            cols,
            Op::AddN(parts.iter().map(|p| p.index).collect()),
        ))
    }

    /// Mean pinball loss over the elements of `pred` against `target`.
    pub fn pinball(&mut self, target: Var, pred: Var, tau: f64) -> Result<Var> {
        let (nt, np) = (self.node(target), self.node(pred));
        if nt.value.len() != np.value.len() || nt.value.is_empty() {
            return Err(AutodiffError::Shape {
                op: "pinball",
                left: (nt.rows, nt.cols),
                right: (np.rows, np.cols),
            });
        }
        let loss = nt
            .value
            .iter()
            .zip(&np.value)
            .map(|(x, xh)| pinball(*x, *xh, tau))
            .sum::<f64>()
            / nt.value.len() as f64;
        Ok(self.push(
            vec![loss],
            1,
            1,
            Op::Pinball {
                target: target.index,
                pred: pred.index,
                tau,
            },
        ))
    }

    /// Propagates the adjoint of a scalar `loss` back to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if loss.tape != self.id || loss.index >= self.nodes.len() {
            return Err(AutodiffError::Usage(
                "backward called with a node that was not recorded on this tape".into(),
            ));
        }
        if self.nodes[loss.index].value.len() != 1 {
            return Err(AutodiffError::Usage(format!(
                "backward needs a scalar loss, node {} has {} elements",
                loss.index,
                self.nodes[loss.index].value.len()
            )));
        }
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); loss.index + 1];
        grads[loss.index] = vec![1.0];

        for idx in (0..=loss.index).rev() {
            if grads[idx].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut grads[idx]);
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Add(a, b) => {
                    self.acc_broadcast(&mut grads, *a, &g, |_, _| 1.0);
                    self.acc_broadcast(&mut grads, *b, &g, |_, _| 1.0);
                }
                Op::Sub(a, b) => {
                    self.acc_broadcast(&mut grads, *a, &g, |_, _| 1.0);
                    self.acc_broadcast(&mut grads, *b, &g, |_, _| -1.0);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    self.acc_broadcast(&mut grads, *a, &g, |_, j| pick(vb, j));
                    self.acc_broadcast(&mut grads, *b, &g, |_, j| pick(va, j));
                }
                Op::Div(a, b) => {
                    let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    self.acc_broadcast(&mut grads, *a, &g, |_, j| 1.0 / pick(vb, j));
                    self.acc_broadcast(&mut grads, *b, &g, |_, j| {
                        let y = pick(vb, j);
                        -pick(va, j) / (y * y)
                    });
                }
                Op::Scale(a, k) => {
                    let k = *k;
                    accumulate(&mut grads, *a, g.iter().map(|x| x * k));
                }
                Op::Shift(a) | Op::ClampMin(a) => accumulate(&mut grads, *a, g.iter().copied()),
                Op::MatVec(m, v) => {
                    let (nm, nv) = (&self.nodes[*m], &self.nodes[*v]);
                    let cols = nm.cols;
                    let gm = ensure(&mut grads, *m, nm.value.len());
                    for (i, gi) in g.iter().enumerate() {
                        if *gi != 0.0 {
                            for (dst, x) in gm[i * cols..(i + 1) * cols].iter_mut().zip(&nv.value) {
                                *dst += gi * x;
                            }
                        }
                    }
                    let gv = ensure(&mut grads, *v, cols);
                    for (i, gi) in g.iter().enumerate() {
                        if *gi != 0.0 {
                            for (dst, w) in gv.iter_mut().zip(&nm.value[i * cols..(i + 1) * cols]) {
                                *dst += gi * w;
                            }
                        }
                    }
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    accumulate(
                        &mut grads,
                        *a,
                        g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)),
                    );
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    accumulate(
                        &mut grads,
                        *a,
                        g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)),
                    );
                }
                Op::Exp(a) => {
                    let y = &node.value;
                    accumulate(&mut grads, *a, g.iter().zip(y).map(|(g, y)| g * y));
                }
                Op::Log(a) => {
                    let x = &self.nodes[*a].value;
                    accumulate(&mut grads, *a, g.iter().zip(x).map(|(g, x)| g / x));
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.nodes[*p].value.len();
                        accumulate(&mut grads, *p, g[offset..offset + n].iter().copied());
                        offset += n;
                    }
                }
                Op::Slice(a, start) => {
                    let n = self.nodes[*a].value.len();
                    let dst = ensure(&mut grads, *a, n);
                    for (d, x) in dst[*start..*start + g.len()].iter_mut().zip(&g) {
                        *d += x;
                    }
                }
                Op::Sum(a) => {
                    let n = self.nodes[*a].value.len();
                    accumulate(&mut grads, *a, std::iter::repeat_n(g[0], n));
                }
                Op::AddN(parts) => {
                    for p in parts {
                        accumulate(&mut grads, *p, g.iter().copied());
                    }
                }
                Op::Pinball { target, pred, tau } => {
                    let (t, p) = (&self.nodes[*target].value, &self.nodes[*pred].value);
                    let scale = g[0] / t.len() as f64;
                    let dpred: Vec<f64> = t
                        .iter()
                        .zip(p)
                        .map(|(x, xh)| scale * pinball_grad(*x, *xh, *tau))
                        .collect();
                    accumulate(&mut grads, *target, dpred.iter().map(|d| -d));
                    accumulate(&mut grads, *pred, dpred.into_iter());
                }
            }
            grads[idx] = g;
        }
        Ok(Gradients {
            tape: self.id,
            lens: self.nodes[..=loss.index]
                .iter()
                .map(|n| n.value.len())
                .collect(),
            grads,
        })
    }

    /// Adds `g * d(out)/d(operand)` into the operand's adjoint, summing over
    /// broadcast positions when the operand is a scalar.
    fn acc_broadcast(
        &self,
        grads: &mut [Vec<f64>],
        operand: usize,
        g: &[f64],
        local: impl Fn(usize, usize) -> f64,
    ) {
        let n = self.nodes[operand].value.len();
        let dst = ensure(grads, operand, n);
        if n == g.len() {
            for (j, (d, gj)) in dst.iter_mut().zip(g).enumerate() {
                *d += gj * local(j, j);
            }
        } else {
            dst[0] += g
                .iter()
                .enumerate()
                .map(|(j, gj)| gj * local(0, j))
                .sum::<f64>();
        }
    }
}

fn pick(values: &[f64], j: usize) -> f64 {
    if values.len() == 1 {
        values[0]
    } else {
        values[j]
    }
}

fn ensure(grads: &mut [Vec<f64>], idx: usize, n: usize) -> &mut Vec<f64> {
    if grads[idx].is_empty() {
        grads[idx] = vec![0.0; n];
    }
    &mut grads[idx]
}

fn accumulate(grads: &mut [Vec<f64>], idx: usize, values: impl Iterator<Item = f64>) {
    let dst = &mut grads[idx];
    if dst.is_empty() {
        dst.extend(values);
    } else {
        dst.iter_mut().zip(values).for_each(|(d, v)| *d += v);
    }
}

/// Adjoints of every node with respect to one scalar loss.
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    lens: Vec<usize>,
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`. Nodes the loss does not
    /// depend on get zeros.
    pub fn get(&self, v: Var) -> std::borrow::Cow<'_, [f64]> {
        assert_eq!(v.tape, self.tape, "variable belongs to another tape");
        match self.grads.get(v.index) {
            Some(g) if !g.is_empty() => std::borrow::Cow::Borrowed(g),
            _ => {
                let n = self.lens.get(v.index).copied().unwrap_or(0);
                std::borrow::Cow::Owned(vec![0.0; n])
            }
        }
    }

    /// Adds the gradient at `v` into `param.grad`.
    pub fn accumulate_into(&self, v: Var, param: &mut Param) {
        if param.grad.len() != param.value.len() {
            param.zero_grad();
        }
        if let Some(g) = self.grads.get(v.index).filter(|g| !g.is_empty()) {
            param.grad.iter_mut().zip(g).for_each(|(d, x)| *d += x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn square_value_and_gradient() {
        let w = Param::vector("w", vec![5.0]);
        let mut tape = Tape::new();
        let wv = tape.param(&w);
        let d = tape.shift(wv, -3.0);
        let loss = tape.mul(d, d).unwrap();
        assert_eq!(tape.scalar(loss), 4.0);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(wv).as_ref(), &[4.0]);
        let mut w = w;
        grads.accumulate_into(wv, &mut w);
        assert_eq!(w.grad, vec![4.0]);
    }

    #[test]
    fn sigmoid_of_zero() {
        let (tape, out) = forward(|t| {
            let z = t.zeros(1);
            Ok(t.sigmoid(z))
        })
        .unwrap();
        assert_eq!(tape.scalar(out), 0.5);
    }

    #[test]
    fn pinball_first_branch_gradient() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![1.0]);
        let w = tape.constant(vec![0.0]);
        let loss = tape.pinball(x, w, 0.4).unwrap();
        assert_abs_diff_eq!(tape.scalar(loss), 0.4, epsilon = 1e-15);
        let g = tape.backward(loss).unwrap();
        assert_abs_diff_eq!(g.get(w)[0], -0.4, epsilon = 1e-15);
    }

    #[test]
    fn pinball_kink_has_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![2.0]);
        let w = tape.constant(vec![2.0]);
        let loss = tape.pinball(x, w, 0.4).unwrap();
        assert_eq!(tape.backward(loss).unwrap().get(w)[0], 0.0);
    }

    #[test]
    fn composed_value_matches_direct_evaluation() {
        let a = [0.3, -1.2, 2.0];
        let m = [0.5, -0.1, 0.2, 1.0, 0.0, -0.7];
        let mut tape = Tape::new();
        let av = tape.constant(a.to_vec());
        let mv = tape.param(&Param::new("m", 2, 3, m.to_vec()));
        let h = tape.matvec(mv, av).unwrap();
        let s = tape.sigmoid(h);
        let t = tape.tanh(h);
        let p = tape.mul(s, t).unwrap();
        let e = tape.exp(p);
        let l = tape.log(e).unwrap();
        let out = tape.sum(l);

        let direct: f64 = (0..2)
            .map(|i| {
                let h: f64 = (0..3).map(|j| m[i * 3 + j] * a[j]).sum();
                (sigmoid(h) * h.tanh()).exp().ln()
            })
            .sum();
        assert_abs_diff_eq!(tape.scalar(out), direct, epsilon = 1e-14);
    }

    #[test]
    fn log_domain_error_names_node() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![1.0, 0.0]);
        assert_eq!(
            tape.log(x),
            Err(AutodiffError::Domain {
                node: x.index(),
                element: 1,
                value: 0.0
            })
        );
    }

    #[test]
    fn backward_needs_recorded_scalar() {
        let mut other = Tape::new();
        let foreign = other.constant(vec![1.0]);
        let tape = Tape::new();
        assert!(matches!(
            tape.backward(foreign),
            Err(AutodiffError::Usage(_))
        ));

        let v = other.constant(vec![1.0, 2.0]);
        assert!(matches!(other.backward(v), Err(AutodiffError::Usage(_))));
    }

    #[test]
    fn unreachable_leaf_gets_zero() {
        let mut tape = Tape::new();
        let a = tape.constant(vec![1.0, 2.0]);
        let b = tape.constant(vec![3.0]);
        let loss = tape.sum(a);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(b).as_ref(), &[0.0]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut tape = Tape::new();
        let a = tape.constant(vec![1.0, 2.0]);
        let b = tape.constant(vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            tape.add(a, b),
            Err(AutodiffError::Shape { op: "add", .. })
        ));
        let m = tape.param(&Param::zeros("m", 2, 2));
        assert!(tape.matvec(m, b).is_err());
    }

    #[test]
    fn clamp_is_transparent_to_gradient() {
        let mut tape = Tape::new();
        let a = tape.constant(vec![0.01, 0.5]);
        let c = tape.clamp_min(a, 0.05);
        assert_eq!(tape.value(c), &[0.05, 0.5]);
        let loss = tape.sum(c);
        assert_eq!(tape.backward(loss).unwrap().get(a).as_ref(), &[1.0, 1.0]);
    }
}
