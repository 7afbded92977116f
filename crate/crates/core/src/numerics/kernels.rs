//! Raw forward and backward kernels on flat slices.
//!
//! Layouts: feature maps are `[C, H, W]`, conv weights `[C_out, C_in, K, K]`,
//! linear inputs `[N, D_in]` with weights `[D_out, D_in]`.

use serde::{Deserialize, Serialize};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the forward output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
}

/// Same-padded, stride-1 cross-correlation.
pub(crate) fn conv2d(x: &[f64], weight: &[f64], bias: &[f64], d: ConvDims, out: &mut [f64]) {
    let ConvDims { c_in, c_out, h, w, k } = d;
    let pad = (k / 2) as isize;
    for co in 0..c_out {
        let plane = &mut out[co * h * w..(co + 1) * h * w];
        plane.iter_mut().for_each(|v| *v = bias[co]);
        for ci in 0..c_in {
            let xin = &x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = weight[((co * c_in + ci) * k + ky) * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let dy = ky as isize - pad;
                    let dx = kx as isize - pad;
                    let (y0, y1) = valid_range(h, dy);
                    let (x0, x1) = valid_range(w, dx);
                    for yy in y0..y1 {
                        let sy = (yy as isize + dy) as usize;
                        let orow = &mut plane[yy * w..yy * w + w];
                        let irow = &xin[sy * w..sy * w + w];
                        for xx in x0..x1 {
                            orow[xx] += wv * irow[(xx as isize + dx) as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates input, weight and bias gradients of [`conv2d`].
pub(crate) fn conv2d_backward(
    x: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    d: ConvDims,
    grad_x: Option<&mut [f64]>,
    grad_w: Option<&mut [f64]>,
    grad_b: Option<&mut [f64]>,
) {
    let ConvDims { c_in, c_out, h, w, k } = d;
    let pad = (k / 2) as isize;
    if let Some(gb) = grad_b {
        for co in 0..c_out {
            gb[co] += grad_out[co * h * w..(co + 1) * h * w].iter().sum::<f64>();
        }
    }
    let mut gx = grad_x;
    let mut gw = grad_w;
    for co in 0..c_out {
        let gplane = &grad_out[co * h * w..(co + 1) * h * w];
        for ci in 0..c_in {
            let xin = &x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let widx = ((co * c_in + ci) * k + ky) * k + kx;
                    let dy = ky as isize - pad;
                    let dx = kx as isize - pad;
                    let (y0, y1) = valid_range(h, dy);
                    let (x0, x1) = valid_range(w, dx);
                    let mut acc = 0.0;
                    let wv = weight[widx];
                    for yy in y0..y1 {
                        let sy = (yy as isize + dy) as usize;
                        for xx in x0..x1 {
                            let sx = (xx as isize + dx) as usize;
                            let g = gplane[yy * w + xx];
                            acc += g * xin[sy * w + sx];
                            if let Some(gx) = gx.as_deref_mut() {
                                gx[ci * h * w + sy * w + sx] += g * wv;
                            }
                        }
                    }
                    if let Some(gw) = gw.as_deref_mut() {
                        gw[widx] += acc;
                    }
                }
            }
        }
    }
}

/// Output positions `o` in `0..n` for which `o + offset` is in bounds.
fn valid_range(n: usize, offset: isize) -> (usize, usize) {
    let lo = (-offset).max(0) as usize;
    let hi = (n as isize - offset).clamp(0, n as isize) as usize;
    (lo.min(hi), hi)
}

/// `out[r, o] = b[o] + sum_i w[o, i] * x[r, i]`.
pub(crate) fn linear(x: &[f64], weight: &[f64], bias: &[f64], rows: usize, d_in: usize, d_out: usize, out: &mut [f64]) {
    for r in 0..rows {
        let xr = &x[r * d_in..(r + 1) * d_in];
        for o in 0..d_out {
            let wr = &weight[o * d_in..(o + 1) * d_in];
            let mut acc = bias[o];
            for i in 0..d_in {
                acc += wr[i] * xr[i];
            }
            out[r * d_out + o] = acc;
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward(
    x: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    rows: usize,
    d_in: usize,
    d_out: usize,
    mut grad_x: Option<&mut [f64]>,
    mut grad_w: Option<&mut [f64]>,
    mut grad_b: Option<&mut [f64]>,
) {
    for r in 0..rows {
        let xr = &x[r * d_in..(r + 1) * d_in];
        for o in 0..d_out {
            let g = grad_out[r * d_out + o];
            if g == 0.0 {
                continue;
            }
            if let Some(gb) = grad_b.as_deref_mut() {
                gb[o] += g;
            }
            if let Some(gw) = grad_w.as_deref_mut() {
                for i in 0..d_in {
                    gw[o * d_in + i] += g * xr[i];
                }
            }
            if let Some(gx) = grad_x.as_deref_mut() {
                for i in 0..d_in {
                    gx[r * d_in + i] += g * weight[o * d_in + i];
                }
            }
        }
    }
}

/// Probability clamp applied before every log in the loss kernels.
pub const PROB_EPS: f64 = 1e-7;

/// Per-element binary cross-entropy on a clamped probability.
pub fn bce_term(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// d/dp of [`bce_term`]; zero where the clamp is active.
pub fn bce_term_grad(p: f64, y: f64) -> f64 {
    if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
        return 0.0;
    }
    -y / p + (1.0 - y) / (1.0 - p)
}

/// Soft-label focal term:
/// `-(alpha y (1-p)^g ln p + (1-alpha)(1-y) p^g ln(1-p))`.
pub fn focal_term(p: f64, y: f64, gamma: f64, alpha: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    let q = 1.0 - p;
    -(alpha * y * q.powf(gamma) * p.ln() + (1.0 - alpha) * (1.0 - y) * p.powf(gamma) * q.ln())
}

pub fn focal_term_grad(p: f64, y: f64, gamma: f64, alpha: f64) -> f64 {
    if !(PROB_EPS..=1.0 - PROB_EPS).contains(&p) {
        return 0.0;
    }
    let q = 1.0 - p;
    // (1-p)^(g-1) and p^(g-1) only appear multiplied by g.
    let pos = if gamma == 0.0 {
        1.0 / p
    } else {
        -gamma * q.powf(gamma - 1.0) * p.ln() + q.powf(gamma) / p
    };
    let neg = if gamma == 0.0 {
        -1.0 / q
    } else {
        gamma * p.powf(gamma - 1.0) * q.ln() - p.powf(gamma) / q
    };
    -(alpha * y * pos + (1.0 - alpha) * (1.0 - y) * neg)
}
