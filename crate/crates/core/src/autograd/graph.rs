//! Tape-recording graph. Every op appends a node holding its value; the
//! backward pass replays the nodes in reverse insertion order.

use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, ConvGeom};
use crate::error::{invalid, shape_err, Error, Result};
use crate::real::Real;
use crate::tensor::{split_axis, Tensor};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

#[derive(Clone, Debug)]
pub(crate) enum Op<T> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    AddScalar(usize),
    MatMul(usize, usize),
    Transpose(usize),
    Reshape(usize),
    Concat {
        parts: Vec<usize>,
        axis: usize,
    },
    Slice {
        src: usize,
        axis: usize,
        start: usize,
    },
    Relu(usize),
    Sigmoid(usize),
    Tanh(usize),
    Gelu(usize),
    Recip(usize),
    Softmax {
        src: usize,
        axis: usize,
    },
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    AddBias {
        x: usize,
        bias: usize,
    },
    ScaleRows {
        x: usize,
        s: usize,
    },
    Conv2d {
        x: usize,
        w: usize,
        b: Option<usize>,
        geom: ConvGeom,
    },
    Resize {
        src: usize,
    },
    GlobalAvgPool(usize),
    L2Normalize {
        src: usize,
        axis: usize,
        norms: Vec<T>,
    },
    Sum(usize),
    Mean(usize),
    BceLogits {
        logits: usize,
        target: usize,
    },
    IouLoss {
        logits: usize,
        target: usize,
    },
    Patchify {
        src: usize,
        patch: usize,
    },
}

pub(crate) struct Node<T> {
    pub value: Tensor<T>,
    pub op: Op<T>,
    pub requires_grad: bool,
}

/// A single-writer record of executed differentiable operations.
pub struct Graph<T> {
    pub(crate) nodes: Vec<Node<T>>,
    pub(crate) grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` loss w.r.t. `v`; `None` unless `v`
    /// participates in differentiation.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    fn checked(
        &mut self,
        value: Tensor<T>,
        op: Op<T>,
        parents: &[usize],
        name: &'static str,
    ) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(name));
        }
        let rg = self.rg(parents);
        Ok(self.push(value, op, rg))
    }

    /// Differentiable leaf.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn leaf(&mut self, t: Tensor<T>, requires_grad: bool) -> Var {
        self.push(t, Op::Leaf, requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return shape_err(op, self.shape(a), self.shape(b));
        }
        Ok(())
    }

    fn zip(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let va = self.value(a);
        let vb = self.value(b);
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor::new(va.shape(), data)?;
        self.checked(t, op, &[a.0, b.0], name)
    }

    fn unary(&mut self, name: &'static str, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Result<Var> {
        let t = self.value(a).map(f);
        self.checked(t, op, &[a.0], name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var> {
        self.unary("scale", a, |x| x * c, Op::Scale(a.0, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Result<Var> {
        self.unary("add_scalar", a, |x| x + c, Op::AddScalar(a.0))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, |x| x.max(T::zero()), Op::Relu(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, kernels::sigmoid, Op::Sigmoid(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, |x| x.tanh(), Op::Tanh(a.0))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        self.unary("gelu", a, gelu_fwd, Op::Gelu(a.0))
    }

    pub fn recip(&mut self, a: Var) -> Result<Var> {
        self.unary("recip", a, |x| T::one() / x, Op::Recip(a.0))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return shape_err("matmul", sa, sb);
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let t = Tensor::new(&[m, n], data)?;
        self.checked(t, Op::MatMul(a.0, b.0), &[a.0, b.0], "matmul")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return invalid("transpose", "expects a 2-D tensor");
        }
        let data = kernels::transpose(self.value(a).data(), s[0], s[1]);
        let t = Tensor::new(&[s[1], s[0]], data)?;
        let rg = self.rg(&[a.0]);
        Ok(self.push(t, Op::Transpose(a.0), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(&[a.0]);
        Ok(self.push(t, Op::Reshape(a.0), rg))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = match parts.first() {
            Some(&p) => self.shape(p).to_vec(),
            None => return invalid("concat", "no inputs"),
        };
        if axis >= first.len() {
            return invalid("concat", "axis out of range");
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return shape_err("concat", &first, s);
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&first, axis);
        let mut shape = first.clone();
        shape[axis] = total;
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let v = self.value(p);
                let ext = v.shape()[axis];
                data.extend_from_slice(&v.data()[o * ext * inner..(o + 1) * ext * inner]);
            }
        }
        let t = Tensor::new(&shape, data)?;
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let rg = self.rg(&ids);
        Ok(self.push(t, Op::Concat { parts: ids, axis }, rg))
    }

    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() || start + len > s[axis] || len == 0 {
            return invalid("slice", "range out of bounds");
        }
        let (outer, ext, inner) = split_axis(&s, axis);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * ext * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        let t = Tensor::new(&shape, data)?;
        let rg = self.rg(&[a.0]);
        Ok(self.push(
            t,
            Op::Slice {
                src: a.0,
                axis,
                start,
            },
            rg,
        ))
    }

    /// Max-subtracted softmax along `axis`.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() {
            return invalid("softmax", "axis out of range");
        }
        let (outer, ext, inner) = split_axis(&s, axis);
        let x = self.value(a).data();
        let mut out = vec![T::zero(); x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * ext * inner + j * inner + i;
                let mut m = T::neg_infinity();
                for j in 0..ext {
                    m = m.max(x[at(j)]);
                }
                let mut z = T::zero();
                for j in 0..ext {
                    let e = (x[at(j)] - m).exp();
                    out[at(j)] = e;
                    z += e;
                }
                for j in 0..ext {
                    out[at(j)] /= z;
                }
            }
        }
        let t = Tensor::new(&s, out)?;
        self.checked(t, Op::Softmax { src: a.0, axis }, &[a.0], "softmax")
    }

    /// Layer normalization over the last axis with affine `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let c = *s.last().unwrap_or(&0);
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return shape_err("layer_norm", &s, self.shape(gamma));
        }
        let rows = self.value(x).numel() / c;
        let xv = self.value(x).data();
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let eps = T::of(1e-6);
        let cn = T::of_usize(c);
        let mut out = vec![T::zero(); xv.len()];
        let mut xhat = vec![T::zero(); xv.len()];
        let mut rstd = vec![T::zero(); rows];
        for r in 0..rows {
            let row = &xv[r * c..(r + 1) * c];
            let mean = row.iter().copied().sum::<T>() / cn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / cn;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..c {
                let h = (row[j] - mean) * rs;
                xhat[r * c + j] = h;
                out[r * c + j] = h * gv[j] + bv[j];
            }
        }
        let t = Tensor::new(&s, out)?;
        self.checked(
            t,
            Op::LayerNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                xhat,
                rstd,
            },
            &[x.0, gamma.0, beta.0],
            "layer_norm",
        )
    }

    /// `x[..., M] + bias[M]`, the bias repeated over every leading index.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let m = *s.last().unwrap_or(&0);
        if self.shape(bias) != [m] {
            return shape_err("add_bias", &s, self.shape(bias));
        }
        let b = self.value(bias).data().to_vec();
        let data = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + b[i % m])
            .collect();
        let t = Tensor::new(&s, data)?;
        self.checked(
            t,
            Op::AddBias {
                x: x.0,
                bias: bias.0,
            },
            &[x.0, bias.0],
            "add_bias",
        )
    }

    /// Row `i` of `x[N,M]` multiplied by `s[i]`, with `s` shaped `[N,1]`.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 2 || self.shape(s) != [sx[0], 1] {
            return shape_err("scale_rows", &sx, self.shape(s));
        }
        let m = sx[1];
        let sv = self.value(s).data().to_vec();
        let data = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v * sv[i / m])
            .collect();
        let t = Tensor::new(&sx, data)?;
        self.checked(
            t,
            Op::ScaleRows { x: x.0, s: s.0 },
            &[x.0, s.0],
            "scale_rows",
        )
    }

    /// Cross-correlation of `x[B,C,H,W]` with `w[O,C,k,k]`, optional bias `[O]`.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        if sx.len() != 4 || sw.len() != 4 || sw[1] != sx[1] || sw[2] != sw[3] {
            return shape_err("conv2d", &sx, &sw);
        }
        let (bsz, c, h, wd) = (sx[0], sx[1], sx[2], sx[3]);
        let (o, k) = (sw[0], sw[2]);
        if k % 2 == 0 {
            return invalid("conv2d", "kernel size must be odd");
        }
        if stride == 0 || h + 2 * pad < k || wd + 2 * pad < k {
            return invalid("conv2d", "input smaller than kernel");
        }
        if !(h + 2 * pad - k).is_multiple_of(stride) || !(wd + 2 * pad - k).is_multiple_of(stride) {
            return invalid("conv2d", "non-integral output extent");
        }
        if let Some(b) = b {
            if self.shape(b) != [o] {
                return shape_err("conv2d bias", &[o], self.shape(b));
            }
        }
        let geom = ConvGeom {
            channels: c,
            h,
            w: wd,
            k,
            stride,
            pad,
            oh: (h + 2 * pad - k) / stride + 1,
            ow: (wd + 2 * pad - k) / stride + 1,
        };
        let plane = geom.oh * geom.ow;
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut out = vec![T::zero(); bsz * o * plane];
        for bi in 0..bsz {
            let cols = kernels::im2col(&xv[bi * c * h * wd..(bi + 1) * c * h * wd], &geom);
            let dst = &mut out[bi * o * plane..(bi + 1) * o * plane];
            if let Some(b) = b {
                let bv = self.value(b).data();
                for (oc, chunk) in dst.chunks_mut(plane).enumerate() {
                    chunk.fill(bv[oc]);
                }
            }
            kernels::matmul_acc(wv, &cols, dst, o, geom.col_rows(), plane);
        }
        let t = Tensor::new(&[bsz, o, geom.oh, geom.ow], out)?;
        let mut parents = vec![x.0, w.0];
        parents.extend(b.map(|v| v.0));
        self.checked(
            t,
            Op::Conv2d {
                x: x.0,
                w: w.0,
                b: b.map(|v| v.0),
                geom,
            },
            &parents,
            "conv2d",
        )
    }

    /// Bilinear resize of `x[B,C,H,W]` to `[B,C,oh,ow]` (align-corners=false).
    pub fn resize_bilinear(&mut self, x: Var, oh: usize, ow: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 || oh == 0 || ow == 0 {
            return invalid("resize_bilinear", "expects [B,C,H,W] and nonzero output");
        }
        if (s[2], s[3]) == (oh, ow) {
            let t = self.value(x).clone();
            let rg = self.rg(&[x.0]);
            return Ok(self.push(t, Op::Reshape(x.0), rg));
        }
        let data = kernels::resize_planes(self.value(x).data(), s[0] * s[1], s[2], s[3], oh, ow);
        let t = Tensor::new(&[s[0], s[1], oh, ow], data)?;
        let rg = self.rg(&[x.0]);
        Ok(self.push(t, Op::Resize { src: x.0 }, rg))
    }

    pub fn bilinear_upsample(&mut self, x: Var, factor: usize) -> Result<Var> {
        if factor == 0 {
            return invalid("bilinear_upsample", "factor must be >= 1");
        }
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return invalid("bilinear_upsample", "expects [B,C,H,W]");
        }
        self.resize_bilinear(x, s[2] * factor, s[3] * factor)
    }

    /// `[B,C,H,W] -> [B,C]` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return invalid("global_avg_pool", "expects [B,C,H,W]");
        }
        let plane = s[2] * s[3];
        let inv = T::one() / T::of_usize(plane);
        let data = self
            .value(x)
            .data()
            .chunks(plane)
            .map(|c| c.iter().copied().sum::<T>() * inv)
            .collect();
        let t = Tensor::new(&[s[0], s[1]], data)?;
        let rg = self.rg(&[x.0]);
        Ok(self.push(t, Op::GlobalAvgPool(x.0), rg))
    }

    /// Unit-norm slices along `axis`; zero slices stay zero.
    pub fn l2_normalize(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() {
            return invalid("l2_normalize", "axis out of range");
        }
        let (outer, ext, inner) = split_axis(&s, axis);
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); xv.len()];
        let mut norms = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * ext * inner + j * inner + i;
                let n = (0..ext).map(|j| xv[at(j)] * xv[at(j)]).sum::<T>().sqrt();
                norms[o * inner + i] = n;
                if n > T::zero() {
                    for j in 0..ext {
                        out[at(j)] = xv[at(j)] / n;
                    }
                }
            }
        }
        let t = Tensor::new(&s, out)?;
        self.checked(
            t,
            Op::L2Normalize {
                src: x.0,
                axis,
                norms,
            },
            &[x.0],
            "l2_normalize",
        )
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let t = Tensor::scalar(self.value(a).sum());
        self.checked(t, Op::Sum(a.0), &[a.0], "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let t = Tensor::scalar(v.sum() / T::of_usize(v.numel()));
        self.checked(t, Op::Mean(a.0), &[a.0], "mean")
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `target`,
    /// evaluated as `max(x,0) - x·g + ln(1 + e^{-|x|})`.
    pub fn bce_with_logits(&mut self, logits: Var, target: Var) -> Result<Var> {
        self.same_shape("bce_with_logits", logits, target)?;
        let x = self.value(logits).data();
        let g = self.value(target).data();
        let n = T::of_usize(x.len());
        let total: T = x
            .iter()
            .zip(g)
            .map(|(&x, &g)| x.max(T::zero()) - x * g + (-x.abs()).exp().ln_1p())
            .sum();
        let t = Tensor::scalar(total / n);
        self.checked(
            t,
            Op::BceLogits {
                logits: logits.0,
                target: target.0,
            },
            &[logits.0, target.0],
            "bce",
        )
    }

    /// Soft IoU loss `1 - (I + 1) / (U + 1)` on `sigmoid(logits)`.
    pub fn iou_loss(&mut self, logits: Var, target: Var) -> Result<Var> {
        self.same_shape("iou_loss", logits, target)?;
        let (inter, union) = iou_terms(self.value(logits).data(), self.value(target).data());
        let t = Tensor::scalar(T::one() - (inter + T::one()) / (union + T::one()));
        self.checked(
            t,
            Op::IouLoss {
                logits: logits.0,
                target: target.0,
            },
            &[logits.0, target.0],
            "iou",
        )
    }

    /// `[B,C,H,W] -> [B·(H/p)·(W/p), C·p·p]`; rows follow raster patch order,
    /// columns follow `(c, dy, dx)`.
    pub fn patchify(&mut self, x: Var, patch: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 || patch == 0 || !s[2].is_multiple_of(patch) || !s[3].is_multiple_of(patch)
        {
            return invalid("patchify", "extents must be divisible by the patch size");
        }
        let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (gh, gw) = (h / patch, w / patch);
        let cols = c * patch * patch;
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); b * gh * gw * cols];
        for (bi, py, px, ci, dy, dx) in patch_iter(b, c, gh, gw, patch) {
            let row = (bi * gh + py) * gw + px;
            let col = (ci * patch + dy) * patch + dx;
            out[row * cols + col] = xv[((bi * c + ci) * h + py * patch + dy) * w + px * patch + dx];
        }
        let t = Tensor::new(&[b * gh * gw, cols], out)?;
        let rg = self.rg(&[x.0]);
        Ok(self.push(t, Op::Patchify { src: x.0, patch }, rg))
    }
}

pub(crate) fn patch_iter(
    b: usize,
    c: usize,
    gh: usize,
    gw: usize,
    p: usize,
) -> impl Iterator<Item = (usize, usize, usize, usize, usize, usize)> {
    (0..b).flat_map(move |bi| {
        (0..gh).flat_map(move |py| {
            (0..gw).flat_map(move |px| {
                (0..c).flat_map(move |ci| {
                    (0..p).flat_map(move |dy| (0..p).map(move |dx| (bi, py, px, ci, dy, dx)))
                })
            })
        })
    })
}

pub(crate) fn gelu_fwd<T: Real>(x: T) -> T {
    let k = T::of(0.797_884_560_802_865_4);
    let u = k * (x + T::of(0.044715) * x * x * x);
    T::of(0.5) * x * (T::one() + u.tanh())
}

pub(crate) fn gelu_grad<T: Real>(x: T) -> T {
    let k = T::of(0.797_884_560_802_865_4);
    let u = k * (x + T::of(0.044715) * x * x * x);
    let t = u.tanh();
    let du = k * (T::one() + T::of(3.0 * 0.044715) * x * x);
    T::of(0.5) * (T::one() + t) + T::of(0.5) * x * (T::one() - t * t) * du
}

pub(crate) fn iou_terms<T: Real>(x: &[T], g: &[T]) -> (T, T) {
    let mut inter = T::zero();
    let mut sp = T::zero();
    let mut sg = T::zero();
    for (&x, &g) in x.iter().zip(g) {
        let s = kernels::sigmoid(x);
        inter += s * g;
        sp += s;
        sg += g;
    }
    (inter, sp + sg - inter)
}
