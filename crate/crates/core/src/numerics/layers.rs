use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::graph::{Graph, NodeId};
use super::kernels::{self, Activation, ConvDims};
use super::tensor::{ParamId, ParamStore, Tensor};
use crate::{Error, Result};

fn init_normal(rng: &mut impl Rng, n: usize, std: f64) -> Vec<f64> {
    let dist = Normal::new(0.0, std).expect("finite std");
    (0..n).map(|_| dist.sample(rng)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Layer2D {
    Conv {
        weight: ParamId,
        bias: ParamId,
        kernel: usize,
        in_ch: usize,
        out_ch: usize,
    },
    Act(Activation),
}

/// Stack of same-padded, stride-1 convolutions and activations.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Module2D {
    layers: Vec<Layer2D>,
}

impl Module2D {
    pub fn new() -> Self {
        Self::default()
    }

    /// Conv layer with He-normal weights and zero bias. `kernel` must be odd.
    pub fn push_conv(
        &mut self,
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        rng: &mut impl Rng,
    ) -> &mut Self {
        assert!(kernel % 2 == 1, "conv kernel must be odd");
        let fan_in = (in_ch * kernel * kernel) as f64;
        let n = out_ch * in_ch * kernel * kernel;
        let w = Tensor::new(
            vec![out_ch, in_ch, kernel, kernel],
            init_normal(rng, n, (2.0 / fan_in).sqrt()),
        )
        .expect("conv weight shape");
        let weight = store.add(format!("{name}.weight"), w);
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_ch]));
        self.layers.push(Layer2D::Conv {
            weight,
            bias,
            kernel,
            in_ch,
            out_ch,
        });
        self
    }

    pub fn push_activation(&mut self, act: Activation) -> &mut Self {
        self.layers.push(Layer2D::Act(act));
        self
    }

    /// Three 3x3 convolutions `C -> C -> C -> 1` with ReLU in between. The
    /// output is a logit map; callers apply the sigmoid.
    pub fn sampler_head(store: &mut ParamStore, channels: usize, rng: &mut impl Rng) -> Self {
        let mut m = Self::new();
        m.push_conv(store, "sampler.conv0", channels, channels, 3, rng)
            .push_activation(Activation::Relu)
            .push_conv(store, "sampler.conv1", channels, channels, 3, rng)
            .push_activation(Activation::Relu)
            .push_conv(store, "sampler.conv2", channels, 1, 3, rng);
        m
    }

    pub fn layers(&self) -> &[Layer2D] {
        &self.layers
    }

    pub fn in_channels(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| match l {
            Layer2D::Conv { in_ch, .. } => Some(*in_ch),
            Layer2D::Act(_) => None,
        })
    }

    pub fn out_channels(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(|l| match l {
            Layer2D::Conv { out_ch, .. } => Some(*out_ch),
            Layer2D::Act(_) => None,
        })
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers
            .iter()
            .flat_map(|l| match l {
                Layer2D::Conv { weight, bias, .. } => vec![*weight, *bias],
                Layer2D::Act(_) => vec![],
            })
            .collect()
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let mut cur = x;
        for layer in &self.layers {
            cur = match layer {
                Layer2D::Conv { weight, bias, .. } => {
                    let w = g.param(store, *weight);
                    let b = g.param(store, *bias);
                    g.conv2d(cur, w, b)?
                }
                Layer2D::Act(act) => g.activation(cur, *act),
            };
        }
        Ok(cur)
    }
}

/// Tape-free forward pass of a [`Module2D`] over a `[C_in, H, W]` map.
pub fn conv2d_forward(x: &Tensor, m: &Module2D, store: &ParamStore) -> Result<Tensor> {
    let (mut c, h, w) = x.chw()?;
    if !x.is_finite() {
        return Err(Error::NonFinite("conv2d_forward"));
    }
    let mut cur = x.clone();
    for layer in &m.layers {
        match layer {
            Layer2D::Conv {
                weight,
                bias,
                kernel,
                in_ch,
                out_ch,
            } => {
                if *in_ch != c {
                    return Err(Error::Shape {
                        op: "conv2d_forward",
                        expected: vec![*in_ch, h, w],
                        actual: vec![c, h, w],
                    });
                }
                let mut out = Tensor::zeros(&[*out_ch, h, w]);
                kernels::conv2d(
                    cur.data(),
                    store.value(*weight).data(),
                    store.value(*bias).data(),
                    ConvDims {
                        c_in: c,
                        c_out: *out_ch,
                        h,
                        w,
                        k: *kernel,
                    },
                    out.data_mut(),
                );
                cur = out;
                c = *out_ch;
            }
            Layer2D::Act(act) => cur.data_mut().iter_mut().for_each(|v| *v = act.apply(*v)),
        }
    }
    Ok(cur)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        let w = Tensor::new(
            vec![d_out, d_in],
            init_normal(rng, d_out * d_in, (1.0 / d_in as f64).sqrt()),
        )
        .expect("dense weight shape");
        Self {
            weight: store.add(format!("{name}.weight"), w),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[d_out])),
            d_in,
            d_out,
        }
    }

    /// Applies the layer to rows of `x` (`rows * d_in` values).
    pub fn apply(&self, store: &ParamStore, x: &[f64], rows: usize) -> Vec<f64> {
        let mut out = vec![0.0; rows * self.d_out];
        kernels::linear(
            x,
            store.value(self.weight).data(),
            store.value(self.bias).data(),
            rows,
            self.d_in,
            self.d_out,
            &mut out,
        );
        out
    }
}

/// Fully connected stack; `hidden` is applied between layers, never after
/// the last one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
    hidden: Activation,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, dims: &[usize], hidden: Activation, rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least input and output widths");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, d)| Dense::new(store, &format!("{name}.fc{i}"), d[0], d[1], rng))
            .collect();
        Self { layers, hidden }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].d_in
    }

    pub fn d_out(&self) -> usize {
        self.layers[self.layers.len() - 1].d_out
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| [l.weight, l.bias]).collect()
    }

    /// `x` is `[N, d_in]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let mut cur = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let w = g.param(store, layer.weight);
            let b = g.param(store, layer.bias);
            cur = g.linear(cur, w, b)?;
            if i + 1 < self.layers.len() {
                cur = g.activation(cur, self.hidden);
            }
        }
        Ok(cur)
    }
}

/// Tape-free MLP forward. `x` is `[D_in]` or `[N, D_in]`.
pub fn mlp_forward(x: &Tensor, mlp: &Mlp, store: &ParamStore) -> Result<Tensor> {
    if !x.is_finite() {
        return Err(Error::NonFinite("mlp_forward"));
    }
    let (rows, d_in, batched) = match x.shape() {
        [d] => (1, *d, false),
        [n, d] => (*n, *d, true),
        s => {
            return Err(Error::Shape {
                op: "mlp_forward",
                expected: vec![mlp.d_in()],
                actual: s.to_vec(),
            })
        }
    };
    if d_in != mlp.d_in() {
        return Err(Error::Shape {
            op: "mlp_forward",
            expected: vec![mlp.d_in()],
            actual: x.shape().to_vec(),
        });
    }
    let mut cur = x.data().to_vec();
    for (i, layer) in mlp.layers.iter().enumerate() {
        cur = layer.apply(store, &cur, rows);
        if i + 1 < mlp.layers.len() {
            cur.iter_mut().for_each(|v| *v = mlp.hidden.apply(*v));
        }
    }
    let shape = if batched {
        vec![rows, mlp.d_out()]
    } else {
        vec![mlp.d_out()]
    };
    Tensor::new(shape, cur)
}
