//! A minimal reverse-mode tape covering the ops the fusion heads need.
//!
//! Nodes are appended in evaluation order, so the node index is already a
//! topological order and backward is one reverse sweep.

use std::collections::HashMap;

use super::kernels::{self, Activation, ConvDims};
use super::tensor::{ParamId, ParamStore, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Bce,
    Focal { gamma: f64, alpha: f64 },
}

impl LossKind {
    pub fn term(self, p: f64, y: f64) -> f64 {
        match self {
            LossKind::Bce => kernels::bce_term(p, y),
            LossKind::Focal { gamma, alpha } => kernels::focal_term(p, y, gamma, alpha),
        }
    }

    fn term_grad(self, p: f64, y: f64) -> f64 {
        match self {
            LossKind::Bce => kernels::bce_term_grad(p, y),
            LossKind::Focal { gamma, alpha } => kernels::focal_term_grad(p, y, gamma, alpha),
        }
    }
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Conv2d {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        dims: ConvDims,
    },
    Linear {
        x: NodeId,
        w: NodeId,
        b: NodeId,
        rows: usize,
        d_in: usize,
        d_out: usize,
    },
    Act {
        x: NodeId,
        act: Activation,
    },
    RowDot {
        x: NodeId,
        q: Vec<f64>,
        dim: usize,
    },
    Loss {
        pred: NodeId,
        target: Vec<f64>,
        weight: Vec<f64>,
        kind: LossKind,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Mul {
        a: NodeId,
        b: NodeId,
    },
    Scale {
        x: NodeId,
        c: f64,
    },
    Sum {
        x: NodeId,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, NodeId>,
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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Constant leaf; gradients stop here.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Input)
    }

    /// Trainable leaf. Repeated calls for the same id share one node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        if let Some(&node) = self.param_nodes.get(&id) {
            return node;
        }
        let node = self.push(store.value(id).clone(), Op::Param(id));
        self.param_nodes.insert(id, node);
        node
    }

    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (c_in, h, wd) = self.value(x).chw()?;
        let ws = self.value(w).shape().to_vec();
        let (c_out, k) = match ws[..] {
            [co, ci, k, k2] if ci == c_in && k == k2 && k % 2 == 1 => (co, k),
            _ => {
                return Err(Error::Shape {
                    op: "conv2d weight",
                    expected: vec![0, c_in, 0, 0],
                    actual: ws,
                })
            }
        };
        self.value(b).expect_shape("conv2d bias", &[c_out])?;
        let dims = ConvDims {
            c_in,
            c_out,
            h,
            w: wd,
            k,
        };
        let mut out = Tensor::zeros(&[c_out, h, wd]);
        kernels::conv2d(
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
            dims,
            out.data_mut(),
        );
        Ok(self.push(out, Op::Conv2d { x, w, b, dims }))
    }

    /// Batched affine map. `x` is `[N, D_in]` (a rank-1 input counts as N=1).
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let xs = self.value(x).shape().to_vec();
        let (rows, d_in) = match xs[..] {
            [d] => (1, d),
            [n, d] => (n, d),
            _ => {
                return Err(Error::Shape {
                    op: "linear input",
                    expected: vec![0, 0],
                    actual: xs,
                })
            }
        };
        let ws = self.value(w).shape().to_vec();
        let d_out = match ws[..] {
            [o, i] if i == d_in => o,
            _ => {
                return Err(Error::Shape {
                    op: "linear weight",
                    expected: vec![0, d_in],
                    actual: ws,
                })
            }
        };
        self.value(b).expect_shape("linear bias", &[d_out])?;
        let shape = if xs.len() == 1 { vec![d_out] } else { vec![rows, d_out] };
        let mut out = Tensor::zeros(&shape);
        kernels::linear(
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
            rows,
            d_in,
            d_out,
            out.data_mut(),
        );
        Ok(self.push(
            out,
            Op::Linear {
                x,
                w,
                b,
                rows,
                d_in,
                d_out,
            },
        ))
    }

    pub fn activation(&mut self, x: NodeId, act: Activation) -> NodeId {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
        self.push(out, Op::Act { x, act })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.activation(x, Activation::Sigmoid)
    }

    /// Row-wise inner product of `x: [N, D]` with constant rows `q: [N, D]`.
    pub fn row_dot(&mut self, x: NodeId, q: &Tensor) -> Result<NodeId> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 2 || q.shape() != xs.as_slice() {
            return Err(Error::Shape {
                op: "row_dot",
                expected: xs,
                actual: q.shape().to_vec(),
            });
        }
        let (rows, dim) = (xs[0], xs[1]);
        let xv = self.value(x).data();
        let out: Vec<f64> = (0..rows)
            .map(|r| {
                let a = &xv[r * dim..(r + 1) * dim];
                let b = &q.data()[r * dim..(r + 1) * dim];
                a.iter().zip(b).map(|(u, v)| u * v).sum()
            })
            .collect();
        Ok(self.push(
            Tensor::vector(out),
            Op::RowDot {
                x,
                q: q.data().to_vec(),
                dim,
            },
        ))
    }

    /// `sum_e weight[e] * term(pred[e], target[e])`. `pred` holds
    /// probabilities; target and weight are constants of the same length.
    pub fn weighted_loss(&mut self, pred: NodeId, target: &[f64], weight: &[f64], kind: LossKind) -> Result<NodeId> {
        let n = self.value(pred).numel();
        if target.len() != n || weight.len() != n {
            return Err(Error::Shape {
                op: "weighted_loss",
                expected: vec![n],
                actual: vec![target.len(), weight.len()],
            });
        }
        let p = self.value(pred).data();
        let total: f64 = (0..n).map(|e| weight[e] * kind.term(p[e], target[e])).sum();
        Ok(self.push(
            Tensor::scalar(total),
            Op::Loss {
                pred,
                target: target.to_vec(),
                weight: weight.to_vec(),
                kind,
            },
        ))
    }

    /// Mean-reduced loss over all elements of `pred`.
    pub fn mean_loss(&mut self, pred: NodeId, target: &Tensor, kind: LossKind) -> Result<NodeId> {
        let n = self.value(pred).numel();
        if target.numel() != n {
            return Err(Error::Shape {
                op: "mean_loss",
                expected: self.value(pred).shape().to_vec(),
                actual: target.shape().to_vec(),
            });
        }
        let w = vec![1.0 / n as f64; n];
        self.weighted_loss(pred, target.data(), &w, kind)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.value(b).expect_shape("add", self.value(a).shape())?;
        let mut out = self.value(a).clone();
        for (o, v) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o += v;
        }
        Ok(self.push(out, Op::Add { a, b }))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.value(b).expect_shape("mul", self.value(a).shape())?;
        let mut out = self.value(a).clone();
        for (o, v) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o *= v;
        }
        Ok(self.push(out, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= c);
        self.push(out, Op::Scale { x, c })
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum { x })
    }

    /// Reverse sweep from a scalar node. Param gradients are added into
    /// `store`, so repeated calls without [`ParamStore::zero_grad`]
    /// accumulate.
    pub fn backward(&self, loss: NodeId, store: &mut ParamStore) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Backward("an empty graph (no forward pass recorded)".into()));
        }
        if loss.0 >= self.nodes.len() {
            return Err(Error::Backward(format!("unknown node {}", loss.0)));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Backward(format!(
                "a non-scalar node of shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(pid) => {
                    let pg = store.get_mut(*pid).grad.data_mut();
                    for (a, b) in pg.iter_mut().zip(&g) {
                        *a += b;
                    }
                }
                Op::Conv2d { x, w, b, dims } => {
                    let mut gx = self.grad_buf(*x);
                    let mut gw = self.grad_buf(*w);
                    let mut gb = self.grad_buf(*b);
                    kernels::conv2d_backward(
                        self.value(*x).data(),
                        self.value(*w).data(),
                        &g,
                        *dims,
                        gx.as_deref_mut(),
                        gw.as_deref_mut(),
                        gb.as_deref_mut(),
                    );
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *w, gw);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Linear {
                    x,
                    w,
                    b,
                    rows,
                    d_in,
                    d_out,
                } => {
                    let mut gx = self.grad_buf(*x);
                    let mut gw = self.grad_buf(*w);
                    let mut gb = self.grad_buf(*b);
                    kernels::linear_backward(
                        self.value(*x).data(),
                        self.value(*w).data(),
                        &g,
                        *rows,
                        *d_in,
                        *d_out,
                        gx.as_deref_mut(),
                        gw.as_deref_mut(),
                        gb.as_deref_mut(),
                    );
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *w, gw);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Act { x, act } => {
                    let y = node.value.data();
                    let gx = g
                        .iter()
                        .zip(y)
                        .map(|(gi, yi)| gi * act.derivative_from_output(*yi))
                        .collect();
                    accumulate(&mut grads, *x, Some(gx));
                }
                Op::RowDot { x, q, dim } => {
                    let gx = q.iter().enumerate().map(|(i, qv)| g[i / dim] * qv).collect();
                    accumulate(&mut grads, *x, Some(gx));
                }
                Op::Loss {
                    pred,
                    target,
                    weight,
                    kind,
                } => {
                    let p = self.value(*pred).data();
                    let gp = (0..p.len())
                        .map(|e| g[0] * weight[e] * kind.term_grad(p[e], target[e]))
                        .collect();
                    accumulate(&mut grads, *pred, Some(gp));
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads, *a, Some(g.clone()));
                    accumulate(&mut grads, *b, Some(g));
                }
                Op::Mul { a, b } => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    let ga = g.iter().zip(bv).map(|(gi, v)| gi * v).collect();
                    let gb = g.iter().zip(av).map(|(gi, v)| gi * v).collect();
                    accumulate(&mut grads, *a, Some(ga));
                    accumulate(&mut grads, *b, Some(gb));
                }
                Op::Scale { x, c } => {
                    accumulate(&mut grads, *x, Some(g.iter().map(|v| v * c).collect()));
                }
                Op::Sum { x } => {
                    let n = self.value(*x).numel();
                    accumulate(&mut grads, *x, Some(vec![g[0]; n]));
                }
            }
        }
        Ok(())
    }

    /// Zeroed gradient buffer for nodes that can carry gradient.
    fn grad_buf(&self, id: NodeId) -> Option<Vec<f64>> {
        match self.nodes[id.0].op {
            Op::Input => None,
            _ => Some(vec![0.0; self.value(id).numel()]),
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], id: NodeId, g: Option<Vec<f64>>) {
    let Some(g) = g else { return };
    match &mut grads[id.0] {
        Some(existing) => existing.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::vector(vec![0.3, -1.0, 2.0]));
        let mut g = Graph::new();
        let xn = g.param(&store, x);
        let s = g.sum(xn);
        g.backward(s, &mut store).unwrap();
        assert_eq!(store.grad(x).data(), &[1.0, 1.0, 1.0]);
        // No reset: a second sweep accumulates.
        g.backward(s, &mut store).unwrap();
        assert_eq!(store.grad(x).data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn sigmoid_of_dot_at_zero_weight() {
        // d/dw sigmoid(w.x) at w=0 is sigmoid'(0) x = 0.25 x.
        let xv = vec![0.5, -2.0, 3.0];
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::new(vec![1, 3], vec![0.0; 3]).unwrap());
        let b = store.add("b", Tensor::vector(vec![0.0]));
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(xv.clone()));
        let (wn, bn) = (g.param(&store, w), g.param(&store, b));
        let z = g.linear(x, wn, bn).unwrap();
        let s = g.sigmoid(z);
        let loss = g.sum(s);
        g.backward(loss, &mut store).unwrap();
        for (gw, xi) in store.grad(w).data().iter().zip(&xv) {
            assert!((gw - 0.25 * xi).abs() < 1e-15);
        }
    }

    #[test]
    fn backward_before_forward_is_rejected() {
        let mut store = ParamStore::new();
        let g = Graph::new();
        let mut other = Graph::new();
        let n = other.input(Tensor::scalar(1.0));
        assert!(matches!(g.backward(n, &mut store), Err(Error::Backward(_))));
        let v = other.input(Tensor::vector(vec![1.0, 2.0]));
        assert!(other.backward(v, &mut store).is_err());
    }

    #[test]
    fn inputs_receive_no_gradient() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::vector(vec![2.0]));
        let mut g = Graph::new();
        let x = g.input(Tensor::vector(vec![3.0]));
        let wn = g.param(&store, w);
        let xs = g.scale(x, 4.0);
        let a = g.add(xs, wn).unwrap();
        let s = g.sum(a);
        assert_eq!(g.value(s).item(), 14.0);
        g.backward(s, &mut store).unwrap();
        assert_eq!(store.grad(w).data(), &[1.0]);
    }
}
