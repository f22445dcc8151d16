use std::fmt;
use std::sync::Arc;

use crate::conv::{self, ConvGeom};
use crate::error::{arg_err, shape_err, Error, Result};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A fixed linear map `y = A x` over flattened tensors, differentiated
/// through `Aᵀ`.
pub trait LinearOperator: Send + Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn apply_transpose(&self, y: &[f64]) -> Vec<f64>;
}

enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeom,
    },
    WeightNorm {
        v: Var,
        g: Var,
        norms: Vec<f64>,
    },
    PixelUnshuffle {
        input: Var,
        r: usize,
    },
    PixelShuffle {
        input: Var,
        r: usize,
    },
    Upsample {
        input: Var,
        scale: usize,
    },
    Sigmoid(Var),
    Tanh(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine {
        input: Var,
        scale: f64,
    },
    ScaleShift {
        input: Var,
        scale: Arc<[f64]>,
    },
    Linear {
        input: Var,
        op: Arc<dyn LinearOperator>,
    },
    Sum(Var),
    SmoothL1 {
        pred: Var,
        target: Var,
        beta: f64,
    },
}

impl fmt::Debug for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::WeightNorm { .. } => "weight_norm",
            Op::PixelUnshuffle { .. } => "pixel_unshuffle",
            Op::PixelShuffle { .. } => "pixel_shuffle",
            Op::Upsample { .. } => "upsample_nearest",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "hadamard",
            Op::Affine { .. } => "affine",
            Op::ScaleShift { .. } => "scale_shift",
            Op::Linear { .. } => "linear",
            Op::Sum(_) => "sum",
            Op::SmoothL1 { .. } => "smooth_l1",
        };
        f.write_str(name)
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Computation record for one forward pass.
///
/// Values are stored in recording order; a `Var` indexes into it. Nodes
/// that do not depend on any tracked leaf are never visited by
/// [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by `Var`.
#[derive(Debug, Default)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, if it was reachable.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }

    pub fn is_empty(&self) -> bool {
        self.grads.iter().all(Option::is_none)
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

    /// Drops every node recorded at or after position `len`. Vars pointing
    /// there become invalid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn is_tracked(&self, var: Var) -> bool {
        self.nodes[var.0].tracked
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].tracked)
    }

    /// Untracked input; receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf; [`Tape::backward`] reports its gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Cross-correlation of an NCHW input with `[out, in, kh, kw]` filters;
    /// `bias` has one entry per output channel.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        const OP: &str = "conv2d";
        let (n, c, h, w) = self.value(input).nchw(OP)?;
        let (o, wc, kh, kw) = self.value(weight).nchw(OP)?;
        if wc != c {
            return Err(shape_err(OP, format!("input has {c} channels, weight expects {wc}")));
        }
        if let Some(b) = bias {
            if self.shape(b) != [o] {
                return Err(shape_err(OP, format!("bias shape {:?}, expected [{o}]", self.shape(b))));
            }
        }
        let (oh, ow) = match (
            conv::conv2d_output_size(h, kh, stride, padding),
            conv::conv2d_output_size(w, kw, stride, padding),
        ) {
            (Some(oh), Some(ow)) => (oh, ow),
            _ => {
                return Err(shape_err(
                    OP,
                    format!("{kh}x{kw} kernel with stride {stride}, padding {padding} does not fit {h}x{w}"),
                ))
            }
        };
        let geom = ConvGeom { n, c, h, w, o, kh, kw, stride, pad: padding, oh, ow };
        let out = conv::conv2d_forward(
            &geom,
            self.value(input).data(),
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
        );
        let mut parents = vec![input, weight];
        parents.extend(bias);
        let tracked = self.tracked(&parents);
        Ok(self.push(Tensor::new(vec![n, o, oh, ow], out)?, Op::Conv2d { input, weight, bias, geom }, tracked))
    }

    /// `w_f = g_f · v_f / ‖v_f‖` for each filter `f` along the first axis.
    pub fn weight_norm(&mut self, v: Var, g: Var) -> Result<Var> {
        let shape = self.shape(v).to_vec();
        let filters = *shape.first().ok_or_else(|| shape_err("weight_norm", "direction tensor has rank 0"))?;
        if self.shape(g) != [filters] {
            return Err(shape_err("weight_norm", format!("gain shape {:?}, expected [{filters}]", self.shape(g))));
        }
        let per = self.value(v).len() / filters.max(1);
        let vd = self.value(v).data();
        let gd = self.value(g).data();
        let mut norms = Vec::with_capacity(filters);
        let mut out = Vec::with_capacity(vd.len());
        for (f, chunk) in vd.chunks_exact(per.max(1)).enumerate().take(filters) {
            let norm = chunk.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::DegenerateFilter(f));
            }
            out.extend(chunk.iter().map(|x| gd[f] * x / norm));
            norms.push(norm);
        }
        let tracked = self.tracked(&[v, g]);
        Ok(self.push(Tensor::new(shape, out)?, Op::WeightNorm { v, g, norms }, tracked))
    }

    pub fn pixel_unshuffle(&mut self, input: Var, r: usize) -> Result<Var> {
        let dims @ (n, c, h, w) = self.value(input).nchw("pixel_unshuffle")?;
        if r == 0 || h % r != 0 || w % r != 0 {
            return Err(shape_err("pixel_unshuffle", format!("{h}x{w} not divisible by {r}")));
        }
        let out = conv::pixel_unshuffle_values(self.value(input).data(), dims, r);
        let tracked = self.tracked(&[input]);
        Ok(self.push(Tensor::new(vec![n, c * r * r, h / r, w / r], out)?, Op::PixelUnshuffle { input, r }, tracked))
    }

    pub fn pixel_shuffle(&mut self, input: Var, r: usize) -> Result<Var> {
        let dims @ (n, c, h, w) = self.value(input).nchw("pixel_shuffle")?;
        if r == 0 || c % (r * r) != 0 {
            return Err(shape_err("pixel_shuffle", format!("{c} channels not divisible by {}", r * r)));
        }
        let out = conv::pixel_shuffle_values(self.value(input).data(), dims, r);
        let tracked = self.tracked(&[input]);
        Ok(self.push(Tensor::new(vec![n, c / (r * r), h * r, w * r], out)?, Op::PixelShuffle { input, r }, tracked))
    }

    /// Nearest-neighbour upsampling by an integer factor.
    pub fn upsample_nearest(&mut self, input: Var, scale: usize) -> Result<Var> {
        let dims @ (n, c, h, w) = self.value(input).nchw("upsample_nearest")?;
        if scale == 0 {
            return Err(arg_err("upsample_nearest", "scale must be at least 1"));
        }
        let out = conv::upsample_values(self.value(input).data(), dims, scale);
        let tracked = self.tracked(&[input]);
        Ok(self.push(Tensor::new(vec![n, c, h * scale, w * scale], out)?, Op::Upsample { input, scale }, tracked))
    }

    fn unary(&mut self, input: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(input);
        let out = Tensor::new(value.shape().to_vec(), value.data().iter().map(|&x| f(x)).collect()).unwrap();
        let tracked = self.tracked(&[input]);
        self.push(out, op, tracked)
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        self.unary(input, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(input))
    }

    pub fn tanh(&mut self, input: Var) -> Var {
        self.unary(input, f64::tanh, Op::Tanh(input))
    }

    /// `scale·x + shift` with scalar coefficients.
    pub fn affine(&mut self, input: Var, scale: f64, shift: f64) -> Var {
        self.unary(input, |x| scale * x + shift, Op::Affine { input, scale })
    }

    /// `scale ⊙ x + shift` with constant per-element coefficients.
    pub fn scale_shift(&mut self, input: Var, scale: Arc<[f64]>, shift: Option<&[f64]>) -> Result<Var> {
        let len = self.value(input).len();
        if scale.len() != len || shift.is_some_and(|s| s.len() != len) {
            return Err(shape_err("scale_shift", format!("coefficients must have {len} elements")));
        }
        let x = self.value(input);
        let data = x
            .data()
            .iter()
            .zip(scale.iter())
            .enumerate()
            .map(|(i, (xi, si))| si * xi + shift.map_or(0.0, |s| s[i]))
            .collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        let tracked = self.tracked(&[input]);
        Ok(self.push(out, Op::ScaleShift { input, scale }, tracked))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(name, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(out, op, tracked))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |p, q| p + q, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |p, q| p - q, Op::Sub(a, b))
    }

    /// Hadamard (elementwise) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "hadamard", |p, q| p * q, Op::Mul(a, b))
    }

    /// Applies `op` to the flattened input. The result keeps the input shape
    /// when `op` is square, otherwise it is rank 1.
    pub fn linear(&mut self, input: Var, op: Arc<dyn LinearOperator>) -> Result<Var> {
        let x = self.value(input);
        if op.cols() != x.len() {
            return Err(shape_err("linear", format!("operator takes {} values, input has {}", op.cols(), x.len())));
        }
        let y = op.apply(x.data());
        let shape = if op.rows() == x.len() { x.shape().to_vec() } else { vec![op.rows()] };
        let out = Tensor::new(shape, y)?;
        let tracked = self.tracked(&[input]);
        Ok(self.push(out, Op::Linear { input, op }, tracked))
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&mut self, input: Var) -> Var {
        let s = self.value(input).data().iter().sum();
        let tracked = self.tracked(&[input]);
        self.push(Tensor::scalar(s), Op::Sum(input), tracked)
    }

    /// Mean smooth-L1 loss: per element `0.5·d²/β` if `|d| < β`, else
    /// `|d| − 0.5·β`, with `d = pred − target`.
    pub fn smooth_l1(&mut self, pred: Var, target: Var, beta: f64) -> Result<Var> {
        if !(beta > 0.0) {
            return Err(arg_err("smooth_l1", format!("beta must be positive, got {beta}")));
        }
        if self.shape(pred) != self.shape(target) {
            return Err(shape_err("smooth_l1", format!("{:?} vs {:?}", self.shape(pred), self.shape(target))));
        }
        let (p, t) = (self.value(pred).data(), self.value(target).data());
        let total: f64 = p
            .iter()
            .zip(t)
            .map(|(a, b)| {
                let d = a - b;
                if d.abs() < beta {
                    0.5 * d * d / beta
                } else {
                    d.abs() - 0.5 * beta
                }
            })
            .sum();
        let mean = total / p.len().max(1) as f64;
        let tracked = self.tracked(&[pred, target]);
        Ok(self.push(Tensor::scalar(mean), Op::SmoothL1 { pred, target, beta }, tracked))
    }

    /// Reverse pass from a one-element `loss`.
    ///
    /// If `loss` does not depend on any tracked leaf the result is empty and
    /// a warning is logged.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if root.value.len() != 1 {
            return Err(Error::NonScalarRoot(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        if !root.tracked {
            log::warn!("backward called on a loss that depends on no tracked parameter");
            return Ok(Gradients::default());
        }
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(grad) = grads[idx].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(grad);
                continue;
            }
            self.propagate(node, &grad, &mut grads);
        }

        Ok(Gradients {
            grads: grads
                .into_iter()
                .enumerate()
                .map(|(i, g)| {
                    g.filter(|_| matches!(self.nodes[i].op, Op::Leaf))
                        .map(|g| Tensor::new(self.nodes[i].value.shape().to_vec(), g).unwrap())
                })
                .collect(),
        })
    }

    fn propagate(&self, node: &Node, grad: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut accumulate = |var: Var, contrib: Vec<f64>| {
            if !self.nodes[var.0].tracked {
                return;
            }
            match &mut grads[var.0] {
                Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, c)| *a += c),
                slot @ None => *slot = Some(contrib),
            }
        };
        let val = |v: Var| self.nodes[v.0].value.data();

        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { input, weight, bias, geom } => {
                let (di, dw, db) = conv::conv2d_backward(
                    geom,
                    val(*input),
                    val(*weight),
                    grad,
                    self.is_tracked(*input),
                    self.is_tracked(*weight),
                    bias.is_some_and(|b| self.is_tracked(b)),
                );
                if let Some(di) = di {
                    accumulate(*input, di);
                }
                if let Some(dw) = dw {
                    accumulate(*weight, dw);
                }
                if let (Some(b), Some(db)) = (bias, db) {
                    accumulate(*b, db);
                }
            }
            Op::WeightNorm { v, g, norms } => {
                let (vd, gd) = (val(*v), val(*g));
                let per = vd.len() / norms.len();
                let mut dv = vec![0.0; vd.len()];
                let mut dg = vec![0.0; norms.len()];
                for (f, &norm) in norms.iter().enumerate() {
                    let span = f * per..(f + 1) * per;
                    let proj: f64 = grad[span.clone()].iter().zip(&vd[span.clone()]).map(|(a, b)| a * b).sum::<f64>() / norm;
                    dg[f] = proj;
                    let s = gd[f] / norm;
                    for i in span {
                        dv[i] = s * (grad[i] - proj * vd[i] / norm);
                    }
                }
                accumulate(*v, dv);
                accumulate(*g, dg);
            }
            Op::PixelUnshuffle { input, r } => {
                let (n, c, h, w) = self.nodes[input.0].value.nchw("pixel_unshuffle").unwrap();
                accumulate(*input, conv::pixel_shuffle_values(grad, (n, c * r * r, h / r, w / r), *r));
            }
            Op::PixelShuffle { input, r } => {
                let (n, c, h, w) = self.nodes[input.0].value.nchw("pixel_shuffle").unwrap();
                accumulate(*input, conv::pixel_unshuffle_values(grad, (n, c / (r * r), h * r, w * r), *r));
            }
            Op::Upsample { input, scale } => {
                let dims = self.nodes[input.0].value.nchw("upsample_nearest").unwrap();
                accumulate(*input, conv::upsample_backward(grad, dims, *scale));
            }
            Op::Sigmoid(input) => {
                let y = node.value.data();
                accumulate(*input, grad.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect());
            }
            Op::Tanh(input) => {
                let y = node.value.data();
                accumulate(*input, grad.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect());
            }
            Op::Add(a, b) => {
                accumulate(*a, grad.to_vec());
                accumulate(*b, grad.to_vec());
            }
            Op::Sub(a, b) => {
                accumulate(*a, grad.to_vec());
                accumulate(*b, grad.iter().map(|g| -g).collect());
            }
            Op::Mul(a, b) => {
                let (x, y) = (val(*a), val(*b));
                accumulate(*a, grad.iter().zip(y).map(|(g, y)| g * y).collect());
                accumulate(*b, grad.iter().zip(x).map(|(g, x)| g * x).collect());
            }
            Op::Affine { input, scale } => {
                accumulate(*input, grad.iter().map(|g| g * scale).collect());
            }
            Op::ScaleShift { input, scale } => {
                accumulate(*input, grad.iter().zip(scale.iter()).map(|(g, s)| g * s).collect());
            }
            Op::Linear { input, op } => {
                accumulate(*input, op.apply_transpose(grad));
            }
            Op::Sum(input) => {
                accumulate(*input, vec![grad[0]; self.nodes[input.0].value.len()]);
            }
            Op::SmoothL1 { pred, target, beta } => {
                let (p, t) = (val(*pred), val(*target));
                let scale = grad[0] / p.len().max(1) as f64;
                let dp: Vec<f64> = p
                    .iter()
                    .zip(t)
                    .map(|(a, b)| {
                        let d = a - b;
                        scale * if d.abs() < *beta { d / beta } else { d.signum() }
                    })
                    .collect();
                accumulate(*target, dp.iter().map(|g| -g).collect());
                accumulate(*pred, dp);
            }
        }
    }
}
