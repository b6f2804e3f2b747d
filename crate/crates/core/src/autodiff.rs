//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every primitive applied during a forward pass as a node
//! whose inputs were recorded earlier, so the node list is already in
//! topological order. [`Tape::backward`] walks it once in reverse.

use std::fmt;

use crate::error::{Error, Result};
use crate::fourier::real_spectrum;
use crate::kernels;
use crate::scalar::Real;
use crate::tensor::{Shape, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Batch normalisation epsilon.
pub const BN_EPS: f64 = 1e-5;

type CustomBackward<T> = Box<dyn Fn(&[&Tensor<T>], &Tensor<T>) -> Vec<Tensor<T>>>;

enum Op<T> {
    Leaf,
    Constant,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    },
    MaxPool2 {
        input: Var,
        argmax: Vec<u32>,
    },
    Resize {
        input: Var,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Scale(Var, T),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    FourierReal(Var),
    WeightedBce {
        logits: Var,
        target: Tensor<T>,
        weights: Tensor<T>,
        total_weight: T,
    },
    Custom {
        inputs: Vec<Var>,
        backward: CustomBackward<T>,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::Conv2d { .. } => "conv2d",
            Op::MaxPool2 { .. } => "maxpool2",
            Op::Resize { .. } => "bilinear_resize",
            Op::BatchNorm { .. } => "batchnorm",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::Scale(..) => "scale",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Reshape(_) => "reshape",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::FourierReal(_) => "fourier_real",
            Op::WeightedBce { .. } => "bce_logits",
            Op::Custom { .. } => "custom",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records tensor operations for gradient computation.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T> fmt::Debug for Tape<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("nodes", &self.nodes.len()).finish()
    }
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar with respect to the leaves of a tape.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros shaped like its value when the loss does not
    /// depend on it.
    pub fn wrt(&self, tape: &Tape<T>, v: Var) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Per-element `-[t log s(z) + (1-t) log(1-s(z))]` in the stable form
/// `max(z,0) - z t + log(1 + e^{-|z|})`.
pub fn bce_with_logits<T: Real>(z: T, t: T) -> T {
    z.max(T::zero()) - z * t + (-z.abs()).exp().ln_1p()
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = match op {
            Op::Leaf => true,
            Op::Constant => false,
            _ => inputs.iter().any(|i| self.nodes[i.0].needs_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A value gradients are reported for.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, &[])
    }

    /// A value treated as constant by backward.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Constant, &[])
    }

    /// The first recorded value holding NaN or infinity, with the op that made it.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.nodes
            .iter()
            .enumerate()
            .find(|(_, n)| !n.value.is_finite())
            .map(|(i, n)| (i, n.op.name()))
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let out = kernels::conv2d(
            self.value(input),
            self.value(kernel),
            self.value(bias),
            stride,
            padding,
        )?;
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
                padding,
            },
            &[input, kernel, bias],
        ))
    }

    pub fn maxpool2(&mut self, input: Var) -> Result<Var> {
        let (out, argmax) = kernels::maxpool2(self.value(input))?;
        Ok(self.push(out, Op::MaxPool2 { input, argmax }, &[input]))
    }

    pub fn bilinear_resize(&mut self, input: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let out = kernels::bilinear_resize(self.value(input), out_h, out_w)?;
        Ok(self.push(out, Op::Resize { input }, &[input]))
    }

    fn check_affine(&self, input: Var, gamma: Var, beta: Var) -> Result<()> {
        let c = self.value(input).c();
        for p in [gamma, beta] {
            if self.value(p).numel() != c {
                return Err(Error::ShapeMismatch {
                    op: "batchnorm",
                    left: self.shape(input).to_vec(),
                    right: self.shape(p).to_vec(),
                });
            }
        }
        Ok(())
    }

    fn batchnorm_with(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        mean: &[T],
        var: &[T],
        batch_stats: bool,
    ) -> Var {
        let x = self.value(input);
        let [n, c, _, _] = x.shape();
        let eps = T::c(BN_EPS);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = x.clone();
        let mut out = x.clone();
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        for s in 0..n {
            for ch in 0..c {
                let xh = xhat.plane_mut(s, ch);
                for v in xh.iter_mut() {
                    *v = (*v - mean[ch]) * inv_std[ch];
                }
                for (o, &h) in out.plane_mut(s, ch).iter_mut().zip(xhat.plane(s, ch)) {
                    *o = g[ch] * h + b[ch];
                }
            }
        }
        self.push(
            out,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
            &[input, gamma, beta],
        )
    }

    /// Training-mode batch norm. Returns the output together with the batch
    /// mean and the unbiased batch variance for running-statistics updates.
    pub fn batchnorm_train(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
    ) -> Result<(Var, Vec<T>, Vec<T>)> {
        self.check_affine(input, gamma, beta)?;
        let (mean, var) = kernels::channel_moments(self.value(input));
        let [n, _, h, w] = self.shape(input);
        let count = n * h * w;
        let unbiased = if count > 1 {
            let f = T::from_usize_lossy(count) / T::from_usize_lossy(count - 1);
            var.iter().map(|&v| v * f).collect()
        } else {
            var.clone()
        };
        let out = self.batchnorm_with(input, gamma, beta, &mean, &var, true);
        Ok((out, mean, unbiased))
    }

    /// Inference-mode batch norm using stored statistics.
    pub fn batchnorm_eval(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[T],
        running_var: &[T],
    ) -> Result<Var> {
        self.check_affine(input, gamma, beta)?;
        let c = self.value(input).c();
        if running_mean.len() != c || running_var.len() != c {
            return Err(Error::ShapeMismatch {
                op: "batchnorm running stats",
                left: self.shape(input).to_vec(),
                right: vec![running_mean.len(), running_var.len()],
            });
        }
        Ok(self.batchnorm_with(input, gamma, beta, running_mean, running_var, false))
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        op_name: &'static str,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::ShapeMismatch {
                op: op_name,
                left: x.shape().to_vec(),
                right: y.shape().to_vec(),
            });
        }
        let out = x.zip_map(y, f)?;
        Ok(self.push(out, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(T::zero()));
        self.push(out, Op::Relu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a), &[a])
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let out = self.value(a).map(|x| x * k);
        self.push(out, Op::Scale(a, k), &[a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = kernels::transpose(self.value(a));
        self.push(out, Op::Transpose(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: Shape) -> Result<Var> {
        let out = self.value(a).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(a), &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).mean());
        self.push(out, Op::Mean(a), &[a])
    }

    /// Channel-wise normalised real spectrum, see [`real_spectrum`].
    pub fn fourier_real(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let [n, c, h, w] = x.shape();
        let mut out = Tensor::zeros(x.shape());
        for s in 0..n {
            for ch in 0..c {
                let spectrum = real_spectrum(x.plane(s, ch), h, w);
                out.plane_mut(s, ch).copy_from_slice(&spectrum);
            }
        }
        self.push(out, Op::FourierReal(a), &[a])
    }

    /// Weighted mean of per-element binary cross-entropy on logits:
    /// `sum(w * bce(z, t)) / sum(w)`. Targets and weights are constants.
    pub fn weighted_bce(
        &mut self,
        logits: Var,
        target: &Tensor<T>,
        weights: &Tensor<T>,
    ) -> Result<Var> {
        let z = self.value(logits);
        z.expect_same_shape("bce_logits target", target)?;
        z.expect_same_shape("bce_logits weights", weights)?;
        let total_weight = weights.sum();
        let mut acc = T::zero();
        for ((&zi, &ti), &wi) in z.data().iter().zip(target.data()).zip(weights.data()) {
            if wi != T::zero() {
                acc += wi * bce_with_logits(zi, ti);
            }
        }
        let loss = if total_weight > T::zero() {
            acc / total_weight
        } else {
            T::zero()
        };
        Ok(self.push(
            Tensor::scalar(loss),
            Op::WeightedBce {
                logits,
                target: target.clone(),
                weights: weights.clone(),
                total_weight,
            },
            &[logits],
        ))
    }

    /// Records a user-defined op. `backward(inputs, grad_out)` must return one
    /// gradient per input, shaped like that input.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        value: Tensor<T>,
        backward: impl Fn(&[&Tensor<T>], &Tensor<T>) -> Vec<Tensor<T>> + 'static,
    ) -> Var {
        self.push(
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                backward: Box::new(backward),
            },
            inputs,
        )
    }

    /// Back-propagates from a scalar `loss`, returning gradients for every leaf
    /// the loss depends on.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let shape = self.shape(loss);
        if shape != [1, 1, 1, 1] {
            return Err(Error::NonScalarLoss(shape.to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(&node.op, &node.value, g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, op: &Op<T>, out: &Tensor<T>, g: Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        match op {
            Op::Leaf | Op::Constant => {}
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
                padding,
            } => {
                let (gi, gk, gb) = kernels::conv2d_backward(
                    self.value(*input),
                    self.value(*kernel),
                    &g,
                    *stride,
                    *padding,
                );
                let gb = gb
                    .reshape(self.shape(*bias))
                    .expect("bias numel checked in forward");
                self.accumulate(grads, *input, gi);
                self.accumulate(grads, *kernel, gk);
                self.accumulate(grads, *bias, gb);
            }
            Op::MaxPool2 { input, argmax } => {
                let gi = kernels::maxpool2_backward(self.shape(*input), argmax, &g);
                self.accumulate(grads, *input, gi);
            }
            Op::Resize { input } => {
                let gi = kernels::bilinear_resize_backward(self.shape(*input), &g);
                self.accumulate(grads, *input, gi);
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let [n, c, h, w] = xhat.shape();
                let m = T::from_usize_lossy(n * h * w);
                let gam = self.value(*gamma).data();
                let mut gg = vec![T::zero(); c];
                let mut gbeta = vec![T::zero(); c];
                for s in 0..n {
                    for ch in 0..c {
                        for (&gv, &xh) in g.plane(s, ch).iter().zip(xhat.plane(s, ch)) {
                            gg[ch] += gv * xh;
                            gbeta[ch] += gv;
                        }
                    }
                }
                let mut gi = Tensor::zeros(xhat.shape());
                for s in 0..n {
                    for ch in 0..c {
                        let k = gam[ch] * inv_std[ch];
                        let dst = gi.plane_mut(s, ch);
                        let src = g.plane(s, ch);
                        let xh = xhat.plane(s, ch);
                        for j in 0..dst.len() {
                            dst[j] = if *batch_stats {
                                k * (src[j] - gbeta[ch] / m - xh[j] * gg[ch] / m)
                            } else {
                                k * src[j]
                            };
                        }
                    }
                }
                let gshape = self.shape(*gamma);
                let bshape = self.shape(*beta);
                self.accumulate(grads, *input, gi);
                self.accumulate(
                    grads,
                    *gamma,
                    Tensor::new(gshape, gg).expect("gamma numel equals channels"),
                );
                self.accumulate(
                    grads,
                    *beta,
                    Tensor::new(bshape, gbeta).expect("beta numel equals channels"),
                );
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g);
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *b, g.map(|v| -v));
                self.accumulate(grads, *a, g);
            }
            Op::Mul(a, b) => {
                let ga = g.zip_map(self.value(*b), |x, y| x * y).expect("same shape");
                let gb = g.zip_map(self.value(*a), |x, y| x * y).expect("same shape");
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Relu(a) => {
                let gi = g
                    .zip_map(self.value(*a), |gv, x| if x > T::zero() { gv } else { T::zero() })
                    .expect("same shape");
                self.accumulate(grads, *a, gi);
            }
            Op::Sigmoid(a) => {
                let gi = g
                    .zip_map(out, |gv, s| gv * s * (T::one() - s))
                    .expect("same shape");
                self.accumulate(grads, *a, gi);
            }
            Op::Scale(a, k) => {
                let k = *k;
                self.accumulate(grads, *a, g.map(|v| v * k));
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = kernels::matmul(&g, &kernels::transpose(bv)).expect("shapes from forward");
                let gb = kernels::matmul(&kernels::transpose(av), &g).expect("shapes from forward");
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Transpose(a) => self.accumulate(grads, *a, kernels::transpose(&g)),
            Op::Reshape(a) => {
                let gi = g.reshape(self.shape(*a)).expect("same element count");
                self.accumulate(grads, *a, gi);
            }
            Op::Sum(a) => {
                let gv = g.data()[0];
                self.accumulate(grads, *a, Tensor::full(self.shape(*a), gv));
            }
            Op::Mean(a) => {
                let gv = g.data()[0] / T::from_usize_lossy(self.value(*a).numel().max(1));
                self.accumulate(grads, *a, Tensor::full(self.shape(*a), gv));
            }
            Op::FourierReal(a) => {
                let [n, c, h, w] = g.shape();
                let mut gi = Tensor::zeros(g.shape());
                for s in 0..n {
                    for ch in 0..c {
                        let spectrum = real_spectrum(g.plane(s, ch), h, w);
                        gi.plane_mut(s, ch).copy_from_slice(&spectrum);
                    }
                }
                self.accumulate(grads, *a, gi);
            }
            Op::WeightedBce {
                logits,
                target,
                weights,
                total_weight,
            } => {
                if *total_weight <= T::zero() {
                    return;
                }
                let k = g.data()[0] / *total_weight;
                let z = self.value(*logits);
                let mut gi = Tensor::zeros(z.shape());
                for (((d, &zi), &ti), &wi) in gi
                    .data_mut()
                    .iter_mut()
                    .zip(z.data())
                    .zip(target.data())
                    .zip(weights.data())
                {
                    *d = k * wi * (sigmoid(zi) - ti);
                }
                self.accumulate(grads, *logits, gi);
            }
            Op::Custom { inputs, backward } => {
                let values: Vec<&Tensor<T>> = inputs.iter().map(|v| self.value(*v)).collect();
                for (v, gi) in inputs.iter().zip(backward(&values, &g)) {
                    self.accumulate(grads, *v, gi);
                }
            }
        }
    }
}
