use alloc::vec;
use alloc::vec::Vec;

use super::graph::{gelu_grad, iou_terms, patch_iter, Graph, Op, Var};
use super::kernels;
use crate::error::{invalid, Result};
use crate::real::Real;
use crate::tensor::{split_axis, Tensor};

fn acc<T: Real>(grads: &mut [Option<Vec<T>>], idx: usize, contrib: Vec<T>) {
    match &mut grads[idx] {
        Some(g) => {
            for (a, b) in g.iter_mut().zip(contrib) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(contrib),
    }
}

impl<T: Real> Graph<T> {
    /// Reverse-mode sweep from a scalar `loss`. Afterwards [`Graph::grad`]
    /// returns a gradient for exactly the nodes that require one.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return invalid("backward", "loss must be a scalar");
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = vec![None; n];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for i in (0..=loss.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| {
                if !node.requires_grad {
                    return None;
                }
                let shape = node.value.shape();
                let data = g.unwrap_or_else(|| vec![T::zero(); node.value.numel()]);
                Some(Tensor::new(shape, data).expect("grad shape"))
            })
            .collect();
        Ok(())
    }

    fn needs(&self, idx: usize) -> bool {
        self.nodes[idx].requires_grad
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        let val = |j: usize| self.nodes[j].value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for &p in [a, b].iter() {
                    if self.needs(*p) {
                        acc(grads, *p, g.to_vec());
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    acc(grads, *a, g.to_vec());
                }
                if self.needs(*b) {
                    acc(grads, *b, g.iter().map(|&v| -v).collect());
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    acc(
                        grads,
                        *a,
                        g.iter().zip(val(*b)).map(|(&g, &y)| g * y).collect(),
                    );
                }
                if self.needs(*b) {
                    acc(
                        grads,
                        *b,
                        g.iter().zip(val(*a)).map(|(&g, &x)| g * x).collect(),
                    );
                }
            }
            Op::Scale(a, c) => {
                if self.needs(*a) {
                    acc(grads, *a, g.iter().map(|&v| v * *c).collect());
                }
            }
            Op::AddScalar(a) | Op::Reshape(a) => {
                if self.needs(*a) {
                    acc(grads, *a, g.to_vec());
                }
            }
            Op::MatMul(a, b) => {
                let sa = self.nodes[*a].value.shape();
                let sb = self.nodes[*b].value.shape();
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.needs(*a) {
                    let bt = kernels::transpose(val(*b), k, n);
                    acc(grads, *a, kernels::matmul(g, &bt, m, n, k));
                }
                if self.needs(*b) {
                    let at = kernels::transpose(val(*a), m, k);
                    acc(grads, *b, kernels::matmul(&at, g, k, m, n));
                }
            }
            Op::Transpose(a) => {
                if self.needs(*a) {
                    let s = node.value.shape();
                    acc(grads, *a, kernels::transpose(g, s[0], s[1]));
                }
            }
            Op::Concat { parts, axis } => {
                let s = node.value.shape();
                let (outer, total, inner) = split_axis(s, *axis);
                let mut offset = 0;
                for &p in parts {
                    let ext = self.nodes[p].value.shape()[*axis];
                    if self.needs(p) {
                        let mut d = Vec::with_capacity(outer * ext * inner);
                        for o in 0..outer {
                            let base = o * total * inner + offset * inner;
                            d.extend_from_slice(&g[base..base + ext * inner]);
                        }
                        acc(grads, p, d);
                    }
                    offset += ext;
                }
            }
            Op::Slice { src, axis, start } => {
                if self.needs(*src) {
                    let s = self.nodes[*src].value.shape();
                    let (outer, ext, inner) = split_axis(s, *axis);
                    let len = node.value.shape()[*axis];
                    let mut d = vec![T::zero(); outer * ext * inner];
                    for o in 0..outer {
                        let base = o * ext * inner + start * inner;
                        d[base..base + len * inner]
                            .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                    }
                    acc(grads, *src, d);
                }
            }
            Op::Relu(a) => {
                if self.needs(*a) {
                    let x = val(*a);
                    acc(
                        grads,
                        *a,
                        g.iter()
                            .zip(x)
                            .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
                            .collect(),
                    );
                }
            }
            Op::Sigmoid(a) => {
                if self.needs(*a) {
                    acc(
                        grads,
                        *a,
                        g.iter()
                            .zip(out)
                            .map(|(&g, &y)| g * y * (T::one() - y))
                            .collect(),
                    );
                }
            }
            Op::Tanh(a) => {
                if self.needs(*a) {
                    acc(
                        grads,
                        *a,
                        g.iter()
                            .zip(out)
                            .map(|(&g, &y)| g * (T::one() - y * y))
                            .collect(),
                    );
                }
            }
            Op::Gelu(a) => {
                if self.needs(*a) {
                    acc(
                        grads,
                        *a,
                        g.iter()
                            .zip(val(*a))
                            .map(|(&g, &x)| g * gelu_grad(x))
                            .collect(),
                    );
                }
            }
            Op::Recip(a) => {
                if self.needs(*a) {
                    acc(
                        grads,
                        *a,
                        g.iter().zip(out).map(|(&g, &y)| -g * y * y).collect(),
                    );
                }
            }
            Op::Softmax { src, axis } => {
                if self.needs(*src) {
                    let (outer, ext, inner) = split_axis(node.value.shape(), *axis);
                    let mut d = vec![T::zero(); g.len()];
                    for o in 0..outer {
                        for ii in 0..inner {
                            let at = |j: usize| o * ext * inner + j * inner + ii;
                            let dot: T = (0..ext).map(|j| g[at(j)] * out[at(j)]).sum();
                            for j in 0..ext {
                                d[at(j)] = out[at(j)] * (g[at(j)] - dot);
                            }
                        }
                    }
                    acc(grads, *src, d);
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let c = self.nodes[*gamma].value.numel();
                let rows = g.len() / c;
                if self.needs(*gamma) {
                    let mut d = vec![T::zero(); c];
                    for r in 0..rows {
                        for j in 0..c {
                            d[j] += g[r * c + j] * xhat[r * c + j];
                        }
                    }
                    acc(grads, *gamma, d);
                }
                if self.needs(*beta) {
                    let mut d = vec![T::zero(); c];
                    for r in 0..rows {
                        for j in 0..c {
                            d[j] += g[r * c + j];
                        }
                    }
                    acc(grads, *beta, d);
                }
                if self.needs(*x) {
                    let gv = val(*gamma);
                    let cn = T::of_usize(c);
                    let mut d = vec![T::zero(); g.len()];
                    for r in 0..rows {
                        let dh: Vec<T> = (0..c).map(|j| g[r * c + j] * gv[j]).collect();
                        let m1 = dh.iter().copied().sum::<T>() / cn;
                        let m2 = (0..c).map(|j| dh[j] * xhat[r * c + j]).sum::<T>() / cn;
                        for j in 0..c {
                            d[r * c + j] = rstd[r] * (dh[j] - m1 - xhat[r * c + j] * m2);
                        }
                    }
                    acc(grads, *x, d);
                }
            }
            Op::AddBias { x, bias } => {
                if self.needs(*x) {
                    acc(grads, *x, g.to_vec());
                }
                if self.needs(*bias) {
                    let m = self.nodes[*bias].value.numel();
                    let mut d = vec![T::zero(); m];
                    for (i, &v) in g.iter().enumerate() {
                        d[i % m] += v;
                    }
                    acc(grads, *bias, d);
                }
            }
            Op::ScaleRows { x, s } => {
                let m = node.value.shape()[1];
                if self.needs(*x) {
                    let sv = val(*s);
                    acc(
                        grads,
                        *x,
                        g.iter().enumerate().map(|(i, &v)| v * sv[i / m]).collect(),
                    );
                }
                if self.needs(*s) {
                    let xv = val(*x);
                    let mut d = vec![T::zero(); node.value.shape()[0]];
                    for (i, (&gv, &xv)) in g.iter().zip(xv).enumerate() {
                        d[i / m] += gv * xv;
                    }
                    acc(grads, *s, d);
                }
            }
            Op::Conv2d { x, w, b, geom } => {
                let bsz = node.value.shape()[0];
                let o = node.value.shape()[1];
                let plane = geom.oh * geom.ow;
                let img = geom.channels * geom.h * geom.w;
                let rows = geom.col_rows();
                let xv = val(*x);
                let wv = val(*w);
                if let Some(b) = b {
                    if self.needs(*b) {
                        let mut d = vec![T::zero(); o];
                        for bi in 0..bsz {
                            for oc in 0..o {
                                let base = (bi * o + oc) * plane;
                                d[oc] += g[base..base + plane].iter().copied().sum::<T>();
                            }
                        }
                        acc(grads, *b, d);
                    }
                }
                let need_w = self.needs(*w);
                let need_x = self.needs(*x);
                let wt = if need_x {
                    kernels::transpose(wv, o, rows)
                } else {
                    Vec::new()
                };
                let mut dw = vec![T::zero(); if need_w { o * rows } else { 0 }];
                let mut dx = vec![T::zero(); if need_x { bsz * img } else { 0 }];
                for bi in 0..bsz {
                    let gb = &g[bi * o * plane..(bi + 1) * o * plane];
                    if need_w {
                        let cols = kernels::im2col(&xv[bi * img..(bi + 1) * img], geom);
                        let ct = kernels::transpose(&cols, rows, plane);
                        kernels::matmul_acc(gb, &ct, &mut dw, o, plane, rows);
                    }
                    if need_x {
                        let dcols = kernels::matmul(&wt, gb, rows, o, plane);
                        kernels::col2im_acc(&dcols, geom, &mut dx[bi * img..(bi + 1) * img]);
                    }
                }
                if need_w {
                    acc(grads, *w, dw);
                }
                if need_x {
                    acc(grads, *x, dx);
                }
            }
            Op::Resize { src } => {
                if self.needs(*src) {
                    let s = self.nodes[*src].value.shape();
                    let o = node.value.shape();
                    acc(
                        grads,
                        *src,
                        kernels::resize_planes_backward(g, s[0] * s[1], s[2], s[3], o[2], o[3]),
                    );
                }
            }
            Op::GlobalAvgPool(a) => {
                if self.needs(*a) {
                    let s = self.nodes[*a].value.shape();
                    let plane = s[2] * s[3];
                    let inv = T::one() / T::of_usize(plane);
                    let mut d = Vec::with_capacity(plane * g.len());
                    for &v in g {
                        d.extend(core::iter::repeat_n(v * inv, plane));
                    }
                    acc(grads, *a, d);
                }
            }
            Op::L2Normalize { src, axis, norms } => {
                if self.needs(*src) {
                    let (outer, ext, inner) = split_axis(node.value.shape(), *axis);
                    let mut d = vec![T::zero(); g.len()];
                    for o in 0..outer {
                        for ii in 0..inner {
                            let nrm = norms[o * inner + ii];
                            if nrm == T::zero() {
                                continue;
                            }
                            let at = |j: usize| o * ext * inner + j * inner + ii;
                            let dot: T = (0..ext).map(|j| g[at(j)] * out[at(j)]).sum();
                            for j in 0..ext {
                                d[at(j)] = (g[at(j)] - out[at(j)] * dot) / nrm;
                            }
                        }
                    }
                    acc(grads, *src, d);
                }
            }
            Op::Sum(a) => {
                if self.needs(*a) {
                    acc(grads, *a, vec![g[0]; self.nodes[*a].value.numel()]);
                }
            }
            Op::Mean(a) => {
                if self.needs(*a) {
                    let n = self.nodes[*a].value.numel();
                    acc(grads, *a, vec![g[0] / T::of_usize(n); n]);
                }
            }
            Op::BceLogits { logits, target } => {
                let x = val(*logits);
                let t = val(*target);
                let n = T::of_usize(x.len());
                if self.needs(*logits) {
                    acc(
                        grads,
                        *logits,
                        x.iter()
                            .zip(t)
                            .map(|(&x, &t)| g[0] * (kernels::sigmoid(x) - t) / n)
                            .collect(),
                    );
                }
                if self.needs(*target) {
                    acc(grads, *target, x.iter().map(|&x| -g[0] * x / n).collect());
                }
            }
            Op::IouLoss { logits, target } => {
                let x = val(*logits);
                let t = val(*target);
                let (inter, union) = iou_terms(x, t);
                let a = inter + T::one();
                let u = union + T::one();
                let u2 = u * u;
                if self.needs(*logits) {
                    acc(
                        grads,
                        *logits,
                        x.iter()
                            .zip(t)
                            .map(|(&x, &t)| {
                                let s = kernels::sigmoid(x);
                                let ds = -(t * u - a * (T::one() - t)) / u2;
                                g[0] * ds * s * (T::one() - s)
                            })
                            .collect(),
                    );
                }
                if self.needs(*target) {
                    acc(
                        grads,
                        *target,
                        x.iter()
                            .map(|&x| {
                                let s = kernels::sigmoid(x);
                                -g[0] * (s * u - a * (T::one() - s)) / u2
                            })
                            .collect(),
                    );
                }
            }
            Op::Patchify { src, patch } => {
                if self.needs(*src) {
                    let s = self.nodes[*src].value.shape();
                    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
                    let p = *patch;
                    let (gh, gw) = (h / p, w / p);
                    let cols = c * p * p;
                    let mut d = vec![T::zero(); b * c * h * w];
                    for (bi, py, px, ci, dy, dx) in patch_iter(b, c, gh, gw, p) {
                        let row = (bi * gh + py) * gw + px;
                        let col = (ci * p + dy) * p + dx;
                        d[((bi * c + ci) * h + py * p + dy) * w + px * p + dx] =
                            g[row * cols + col];
                    }
                    acc(grads, *src, d);
                }
            }
        }
    }
}
