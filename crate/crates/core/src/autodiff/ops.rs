//! Forward operations. Each one computes its output eagerly and records a
//! backward rule on the tape when any input requires a gradient.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

use super::tape::{mixture_component_logs, Op, Var};

/// Geometry of a stride-1, unpadded convolution.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_channels: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn rows(&self) -> usize {
        self.batch * self.out_h * self.out_w
    }

    pub fn patch(&self) -> usize {
        self.in_channels * self.k_h * self.k_w
    }
}

/// Unfolds `x` into a `(batch·out_h·out_w) × (in_channels·k_h·k_w)` patch matrix.
pub(crate) fn im2col<T: Real>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let patch = g.patch();
    let mut cols = vec![T::zero(); g.rows() * patch];
    for b in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let row = (b * g.out_h + oy) * g.out_w + ox;
                let dst = &mut cols[row * patch..(row + 1) * patch];
                for c in 0..g.in_channels {
                    for ky in 0..g.k_h {
                        let src = ((b * g.in_channels + c) * g.in_h + oy + ky) * g.in_w + ox;
                        let at = (c * g.k_h + ky) * g.k_w;
                        dst[at..at + g.k_w].copy_from_slice(&x[src..src + g.k_w]);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
pub(crate) fn col2im<T: Real>(cols: &[T], g: &ConvGeom) -> Vec<T> {
    let patch = g.patch();
    let mut x = vec![T::zero(); g.batch * g.in_channels * g.in_h * g.in_w];
    for b in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let row = (b * g.out_h + oy) * g.out_w + ox;
                let src = &cols[row * patch..(row + 1) * patch];
                for c in 0..g.in_channels {
                    for ky in 0..g.k_h {
                        let dst = ((b * g.in_channels + c) * g.in_h + oy + ky) * g.in_w + ox;
                        let at = (c * g.k_h + ky) * g.k_w;
                        for kx in 0..g.k_w {
                            x[dst + kx] += src[at + kx];
                        }
                    }
                }
            }
        }
    }
    x
}

impl<'t, T: Real> Var<'t, T> {
    pub fn value(&self) -> Rc<Tensor<T>> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad(self.id)
    }

    fn unary(self, name: &'static str, op: Op<T>, f: impl Fn(T) -> T) -> Var<'t, T> {
        let out = self.value().map(f);
        self.tape.push(out, op, name)
    }

    fn same_shape(self, other: Var<'t, T>, name: &'static str) -> Result<(Rc<Tensor<T>>, Rc<Tensor<T>>)> {
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(Error::shape(name, a.shape(), b.shape()));
        }
        Ok((a, b))
    }

    fn binary(
        self,
        other: Var<'t, T>,
        name: &'static str,
        op: Op<T>,
        f: impl Fn(T, T) -> T,
    ) -> Result<Var<'t, T>> {
        let (a, b) = self.same_shape(other, name)?;
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::from_parts(a.shape().to_vec(), data);
        Ok(self.tape.push(out, op, name))
    }

    /// `(m × k) · (k × n)`.
    pub fn matmul(self, rhs: Var<'t, T>) -> Result<Var<'t, T>> {
        let (a, b) = (self.value(), rhs.value());
        if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(Error::shape("matmul", a.shape(), b.shape()));
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut c = vec![T::zero(); m * n];
        T::gemm(m, k, n, T::one(), a.data(), k as isize, 1, b.data(), n as isize, 1, T::zero(), &mut c, n as isize, 1);
        let out = Tensor::from_parts(vec![m, n], c);
        Ok(self.tape.push(out, Op::MatMul { a: self.id, b: rhs.id, m, k, n }, "matmul"))
    }

    /// `x · W + b` for `x: (rows × in)`, `W: (in × out)`, `b: (out)`.
    pub fn affine(self, w: Var<'t, T>, b: Var<'t, T>) -> Result<Var<'t, T>> {
        let (xv, wv, bv) = (self.value(), w.value(), b.value());
        if xv.shape().len() != 2 || wv.shape().len() != 2 || xv.shape()[1] != wv.shape()[0] {
            return Err(Error::shape("affine", xv.shape(), wv.shape()));
        }
        let (rows, inputs, outputs) = (xv.shape()[0], wv.shape()[0], wv.shape()[1]);
        if bv.shape() != [outputs] {
            return Err(Error::shape("affine", wv.shape(), bv.shape()));
        }
        let mut c = Vec::with_capacity(rows * outputs);
        for _ in 0..rows {
            c.extend_from_slice(bv.data());
        }
        T::gemm(rows, inputs, outputs, T::one(), xv.data(), inputs as isize, 1, wv.data(), outputs as isize, 1, T::one(), &mut c, outputs as isize, 1);
        let out = Tensor::from_parts(vec![rows, outputs], c);
        let op = Op::Affine { x: self.id, w: w.id, b: b.id, rows, inputs, outputs };
        Ok(self.tape.push(out, op, "affine"))
    }

    /// Stride-1, unpadded 2-D convolution of `x: (B, C, H, W)` with
    /// `kernel: (O, C, KH, KW)`, giving `(B, O, H−KH+1, W−KW+1)`.
    pub fn conv2d(self, kernel: Var<'t, T>) -> Result<Var<'t, T>> {
        let (xv, kv) = (self.value(), kernel.value());
        let (xs, ks) = (xv.shape(), kv.shape());
        if xs.len() != 4 || ks.len() != 4 || xs[1] != ks[1] || ks[2] > xs[2] || ks[3] > xs[3] {
            return Err(Error::shape("conv2d", xs, ks));
        }
        let geom = ConvGeom {
            batch: xs[0],
            in_channels: xs[1],
            in_h: xs[2],
            in_w: xs[3],
            out_channels: ks[0],
            k_h: ks[2],
            k_w: ks[3],
            out_h: xs[2] - ks[2] + 1,
            out_w: xs[3] - ks[3] + 1,
        };
        let cols = im2col(xv.data(), &geom);
        let (rows, patch, o) = (geom.rows(), geom.patch(), geom.out_channels);
        let mut outmat = vec![T::zero(); rows * o];
        // (rows × patch) · kernelᵀ (patch × o)
        T::gemm(rows, patch, o, T::one(), &cols, patch as isize, 1, kv.data(), 1, patch as isize, T::zero(), &mut outmat, o as isize, 1);
        let spatial = geom.out_h * geom.out_w;
        let mut out = vec![T::zero(); rows * o];
        for b in 0..geom.batch {
            for s in 0..spatial {
                let src = &outmat[(b * spatial + s) * o..(b * spatial + s + 1) * o];
                for (oc, v) in src.iter().enumerate() {
                    out[(b * o + oc) * spatial + s] = *v;
                }
            }
        }
        let out = Tensor::from_parts(vec![geom.batch, o, geom.out_h, geom.out_w], out);
        let keep_cols = kernel.requires_grad();
        let op = Op::Conv2d {
            x: self.id,
            kernel: kernel.id,
            cols: if keep_cols { cols } else { Vec::new() },
            geom,
        };
        Ok(self.tape.push(out, op, "conv2d"))
    }

    /// Adds `b[c]` to every element of channel `c` of `x: (B, C, ...)`.
    pub fn add_channel_bias(self, b: Var<'t, T>) -> Result<Var<'t, T>> {
        let (xv, bv) = (self.value(), b.value());
        if xv.shape().len() < 2 || bv.shape() != [xv.shape()[1]] {
            return Err(Error::shape("add_channel_bias", xv.shape(), bv.shape()));
        }
        let channels = xv.shape()[1];
        let spatial: usize = xv.shape()[2..].iter().product();
        let bd = bv.data();
        let mut data = xv.data().to_vec();
        for (i, chunk) in data.chunks_exact_mut(spatial).enumerate() {
            let bias = bd[i % channels];
            chunk.iter_mut().for_each(|v| *v += bias);
        }
        let out = Tensor::from_parts(xv.shape().to_vec(), data);
        let op = Op::AddChannelBias { x: self.id, b: b.id, channels, spatial };
        Ok(self.tape.push(out, op, "add_channel_bias"))
    }

    /// 2×2 max pooling with stride 2 over `(B, C, H, W)`; odd trailing rows
    /// and columns are dropped.
    pub fn maxpool2d(self) -> Result<Var<'t, T>> {
        let xv = self.value();
        let s = xv.shape();
        if s.len() != 4 || s[2] < 2 || s[3] < 2 {
            return Err(Error::shape("maxpool2d", s, &[2, 2]));
        }
        let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
        let (oh, ow) = (h / 2, w / 2);
        let xd = xv.data();
        let mut out = Vec::with_capacity(planes * oh * ow);
        let mut argmax = Vec::with_capacity(planes * oh * ow);
        for p in 0..planes {
            let base = p * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if xd[i] > xd[best] || (xd[i].is_nan() && !xd[best].is_nan()) {
                            best = i;
                        }
                    }
                    out.push(xd[best]);
                    argmax.push(best);
                }
            }
        }
        let out = Tensor::from_parts(vec![s[0], s[1], oh, ow], out);
        Ok(self.tape.push(out, Op::MaxPool2 { x: self.id, argmax }, "maxpool2d"))
    }

    pub fn relu(self) -> Var<'t, T> {
        self.unary("relu", Op::Relu(self.id), |v| if v > T::zero() || v.is_nan() { v } else { T::zero() })
    }

    pub fn exp(self) -> Var<'t, T> {
        self.unary("exp", Op::Exp(self.id), T::exp)
    }

    pub fn log(self) -> Var<'t, T> {
        self.unary("log", Op::Log(self.id), T::ln)
    }

    /// `ln(1 + eˣ)`, evaluated without overflow.
    pub fn softplus(self) -> Var<'t, T> {
        self.unary("softplus", Op::Softplus(self.id), softplus)
    }

    pub fn square(self) -> Var<'t, T> {
        self.unary("square", Op::Square(self.id), |v| v * v)
    }

    pub fn scale(self, c: T) -> Var<'t, T> {
        self.unary("scale", Op::Scale(self.id, c), |v| v * c)
    }

    pub fn neg(self) -> Var<'t, T> {
        self.scale(-T::one())
    }

    pub fn add_scalar(self, c: T) -> Var<'t, T> {
        self.unary("add_scalar", Op::AddScalar(self.id), |v| v + c)
    }

    /// Elementwise sign with `sign(0) = 0`. Not differentiable: the result
    /// is always a constant.
    pub fn sign(self) -> Var<'t, T> {
        let out = self.value().map(sign);
        self.tape.constant(out)
    }

    pub fn sum(self) -> Var<'t, T> {
        let total = self.value().data().iter().copied().sum();
        self.tape.push(Tensor::scalar(total), Op::Sum(self.id), "sum")
    }

    pub fn mean(self) -> Var<'t, T> {
        let v = self.value();
        let total: T = v.data().iter().copied().sum();
        let out = Tensor::scalar(total / T::lit(v.len() as f64));
        self.tape.push(out, Op::Mean(self.id), "mean")
    }

    /// Euclidean norm of each row of a `(rows × width)` tensor.
    pub fn l2_norm_rows(self) -> Result<Var<'t, T>> {
        let v = self.value();
        if v.shape().len() != 2 {
            return Err(Error::shape("l2_norm_rows", v.shape(), &[0, 0]));
        }
        let width = v.shape()[1];
        let norms: Vec<T> = v
            .data()
            .chunks_exact(width)
            .map(|r| r.iter().map(|&x| x * x).sum::<T>().sqrt())
            .collect();
        let out = Tensor::from_parts(vec![v.shape()[0]], norms);
        Ok(self.tape.push(out, Op::L2NormRows(self.id), "l2_norm_rows"))
    }

    pub fn add(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, "add", Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn sub(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, "sub", Op::Sub(self.id, other.id), |a, b| a - b)
    }

    pub fn mul(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, "mul", Op::Mul(self.id, other.id), |a, b| a * b)
    }

    pub fn div(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, "div", Op::Div(self.id, other.id), |a, b| a / b)
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t, T>> {
        let v = self.value();
        if shape.iter().product::<usize>() != v.len() {
            return Err(Error::shape("reshape", v.shape(), shape));
        }
        let out = Tensor::from_parts(shape.to_vec(), v.data().to_vec());
        Ok(self.tape.push(out, Op::Reshape(self.id), "reshape"))
    }

    /// Collapses all trailing axes: `(B, ...) -> (B, rest)`.
    pub fn flatten(self) -> Result<Var<'t, T>> {
        let v = self.value();
        let b = v.shape()[0];
        self.reshape(&[b, v.len() / b])
    }

    /// Summed cross-entropy of softmax(`self`) against `targets`, for
    /// logits of shape `(rows × classes)`. Uses the log-sum-exp form.
    pub fn softmax_cross_entropy(self, targets: &[usize]) -> Result<Var<'t, T>> {
        let v = self.value();
        let s = v.shape();
        if s.len() != 2 || s[0] != targets.len() {
            return Err(Error::shape("softmax_cross_entropy", s, &[targets.len()]));
        }
        let classes = s[1];
        if let Some(&bad) = targets.iter().find(|&&t| t >= classes) {
            return Err(Error::LabelOutOfRange { label: bad, classes });
        }
        let mut probs = Vec::with_capacity(v.len());
        let mut total = T::zero();
        for (row, &t) in v.data().chunks_exact(classes).zip(targets) {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let z: T = row.iter().map(|&x| (x - m).exp()).sum();
            let lse = m + z.ln();
            total += lse - row[t];
            probs.extend(row.iter().map(|&x| (x - lse).exp()));
        }
        let op = Op::SoftmaxCrossEntropy {
            logits: self.id,
            targets: targets.to_vec(),
            probs,
        };
        Ok(self.tape.push(Tensor::scalar(total), op, "softmax_cross_entropy"))
    }

    /// `Σᵢ ln[π·N(xᵢ | 0, var1) + (1 − π)·N(xᵢ | 0, var2)]`, combined in log space.
    pub fn mixture_log_density(self, pi: T, var1: T, var2: T) -> Var<'t, T> {
        let v = self.value();
        let total = v
            .data()
            .iter()
            .map(|&w| {
                let (l1, l2) = mixture_component_logs(w, pi, var1, var2);
                log_add_exp(l1, l2)
            })
            .sum();
        let op = Op::MixtureLogDensity { x: self.id, pi, var1, var2 };
        self.tape.push(Tensor::scalar(total), op, "mixture_log_density")
    }
}

pub(crate) fn softplus<T: Real>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sign<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

pub(crate) fn log_add_exp<T: Real>(a: T, b: T) -> T {
    let m = a.max(b);
    if m == T::neg_infinity() {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}
