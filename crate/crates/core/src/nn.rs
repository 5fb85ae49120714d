//! Named parameter storage and the small set of layers the model is
//! assembled from.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Which part of the network a parameter belongs to; training stages
/// select trainable parameters by group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Group {
    Backbone,
    Adapter,
    Tap,
    Decoder,
    Ipr,
    Enhancer,
}

impl Group {
    pub const ALL: [Group; 6] = [
        Group::Backbone,
        Group::Adapter,
        Group::Tap,
        Group::Decoder,
        Group::Ipr,
        Group::Enhancer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Group::Backbone => "backbone",
            Group::Adapter => "adapter",
            Group::Tap => "tap",
            Group::Decoder => "decoder",
            Group::Ipr => "ipr",
            Group::Enhancer => "enhancer",
        }
    }

    /// Group implied by the first path segment of a parameter name.
    pub fn from_param_name(name: &str) -> Option<Group> {
        let head = name.split('.').next()?;
        Group::ALL.into_iter().find(|g| g.name() == head)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub group: Group,
    pub value: Tensor<T>,
}

/// Parameters in registration order. Names are unique and prefixed by
/// their group, e.g. `adapter.3.down.w`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, group: Group, name: &str, value: Tensor<T>) -> Result<ParamId> {
        let full = format!("{}.{}", group.name(), name);
        if self.params.iter().any(|p| p.name == full) {
            return Err(Error::Config(format!("duplicate parameter {full}")));
        }
        self.params.push(Param {
            name: full,
            group,
            value,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn group_of(&self, id: ParamId) -> Group {
        self.params[id.0].group
    }

    pub fn count(&self, filter: impl Fn(Group) -> bool) -> usize {
        self.params
            .iter()
            .filter(|p| filter(p.group))
            .map(|p| p.value.numel())
            .sum()
    }

    /// Replace every value with the same-named tensor from `other`.
    /// Shapes and names must match exactly.
    pub fn load_from(&mut self, other: &[(String, Tensor<T>)]) -> Result<()> {
        if other.len() != self.params.len() {
            return Err(Error::Config(format!(
                "parameter count mismatch: expected {}, found {}",
                self.params.len(),
                other.len()
            )));
        }
        for p in &mut self.params {
            let (_, t) = other
                .iter()
                .find(|(n, _)| *n == p.name)
                .ok_or_else(|| Error::Config(format!("missing parameter {}", p.name)))?;
            if t.shape() != p.value.shape() {
                return Err(Error::Config(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    p.name,
                    t.shape(),
                    p.value.shape()
                )));
            }
            p.value = t.clone();
        }
        Ok(())
    }

    /// Record every parameter on `g`; those whose group passes
    /// `trainable` become differentiable leaves, the rest constants.
    pub fn bind(&self, g: &mut Graph<T>, trainable: impl Fn(Group) -> bool) -> Bound {
        Bound {
            vars: self
                .params
                .iter()
                .map(|p| g.leaf(p.value.clone(), trainable(p.group)))
                .collect(),
        }
    }

    /// FNV-1a hash over the bits of every value in a group.
    pub fn checksum(&self, group: Group) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in self.params.iter().filter(|p| p.group == group) {
            for v in p.value.data() {
                h ^= v.f64().to_bits();
                h = h.wrapping_mul(0x1000_0000_01b3);
            }
        }
        h
    }
}

/// Graph handles for a bound [`ParamStore`], indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Handles in [`ParamStore`] order, for driving a module from
    /// externally created graph leaves.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl core::ops::Index<ParamId> for Bound {
    type Output = Var;
    fn index(&self, id: ParamId) -> &Var {
        &self.vars[id.0]
    }
}

/// Builder that prefixes names and draws initial values from one RNG.
pub struct Scope<'a, T> {
    pub store: &'a mut ParamStore<T>,
    pub rng: &'a mut Rng,
    pub group: Group,
    pub prefix: String,
}

impl<'a, T: Real> Scope<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, rng: &'a mut Rng, group: Group, prefix: &str) -> Self {
        Self {
            store,
            rng,
            group,
            prefix: String::from(prefix),
        }
    }

    pub fn sub(&mut self, name: &str) -> Scope<'_, T> {
        let prefix = if self.prefix.is_empty() {
            String::from(name)
        } else {
            format!("{}.{}", self.prefix, name)
        };
        Scope {
            store: self.store,
            rng: self.rng,
            group: self.group,
            prefix,
        }
    }

    fn full(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            String::from(name)
        } else {
            format!("{}.{}", self.prefix, name)
        }
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<ParamId> {
        let t = self.rng.normal_tensor(shape, std);
        let n = self.full(name);
        self.store.add(self.group, &n, t)
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        let n = self.full(name);
        self.store.add(self.group, &n, Tensor::zeros(shape))
    }

    pub fn ones(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        let n = self.full(name);
        self.store.add(self.group, &n, Tensor::ones(shape))
    }
}

/// `y = x·W + b` on `[N, in]` rows.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<T: Real>(
        s: &mut Scope<'_, T>,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
    ) -> Result<Self> {
        let std = 1.0 / libm::sqrt(fan_in as f64);
        Self::with_std(s, fan_in, fan_out, bias, std)
    }

    pub fn with_std<T: Real>(
        s: &mut Scope<'_, T>,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        std: f64,
    ) -> Result<Self> {
        let w = if std == 0.0 {
            s.zeros("w", &[fan_in, fan_out])?
        } else {
            s.normal("w", &[fan_in, fan_out], std)?
        };
        let b = if bias {
            Some(s.zeros("b", &[fan_out])?)
        } else {
            None
        };
        Ok(Self {
            w,
            b,
            fan_in,
            fan_out,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let y = g.matmul(x, p[self.w])?;
        match self.b {
            Some(b) => g.add_bias(y, p[b]),
            None => Ok(y),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new<T: Real>(s: &mut Scope<'_, T>, dim: usize) -> Result<Self> {
        Ok(Self {
            gamma: s.ones("gamma", &[dim])?,
            beta: s.zeros("beta", &[dim])?,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        g.layer_norm(x, p[self.gamma], p[self.beta])
    }
}

/// Stride-1, padding-preserving square convolution.
#[derive(Clone, Debug)]
pub struct Conv {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub k: usize,
}

impl Conv {
    pub fn new<T: Real>(
        s: &mut Scope<'_, T>,
        cin: usize,
        cout: usize,
        k: usize,
        bias: bool,
    ) -> Result<Self> {
        let std = libm::sqrt(2.0 / (cin * k * k) as f64);
        Self::with_std(s, cin, cout, k, bias, std)
    }

    pub fn with_std<T: Real>(
        s: &mut Scope<'_, T>,
        cin: usize,
        cout: usize,
        k: usize,
        bias: bool,
        std: f64,
    ) -> Result<Self> {
        let w = if std == 0.0 {
            s.zeros("w", &[cout, cin, k, k])?
        } else {
            s.normal("w", &[cout, cin, k, k], std)?
        };
        let b = if bias {
            Some(s.zeros("b", &[cout])?)
        } else {
            None
        };
        Ok(Self { w, b, k })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        g.conv2d(x, p[self.w], self.b.map(|b| p[b]), 1, self.k / 2)
    }
}

/// Multi-head attention with separate query and key/value inputs.
#[derive(Clone, Debug)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
    pub dim: usize,
}

/// Per-head attention weights from the last forward, for inspection.
pub struct AttentionOut {
    pub out: Var,
    pub weights: Vec<Var>,
}

impl Attention {
    pub fn new<T: Real>(s: &mut Scope<'_, T>, dim: usize, heads: usize) -> Result<Self> {
        Self::with_out_std(s, dim, heads, 1.0 / libm::sqrt(dim as f64))
    }

    pub fn with_out_std<T: Real>(
        s: &mut Scope<'_, T>,
        dim: usize,
        heads: usize,
        out_std: f64,
    ) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::Config(format!(
                "dim {dim} not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            q: Linear::new(&mut s.sub("q"), dim, dim, false)?,
            k: Linear::new(&mut s.sub("k"), dim, dim, false)?,
            v: Linear::new(&mut s.sub("v"), dim, dim, false)?,
            o: Linear::with_std(&mut s.sub("o"), dim, dim, true, out_std)?,
            heads,
            dim,
        })
    }

    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        xq: Var,
        xkv: Var,
    ) -> Result<AttentionOut> {
        let q = self.q.forward(g, p, xq)?;
        let k = self.k.forward(g, p, xkv)?;
        let v = self.v.forward(g, p, xkv)?;
        let hd = self.dim / self.heads;
        let scale = T::one() / T::of_usize(hd).sqrt();
        let (out, weights) = multi_head(g, q, k, v, self.heads, scale)?;
        Ok(AttentionOut {
            out: self.o.forward(g, p, out)?,
            weights,
        })
    }
}

/// Split projected `q[Nq,D]`, `k[Nk,D]`, `v[Nk,D]` into `heads` column
/// blocks, attend per head with `softmax(q kᵀ · scale) v`, concatenate.
pub fn multi_head<T: Real>(
    g: &mut Graph<T>,
    q: Var,
    k: Var,
    v: Var,
    heads: usize,
    scale: T,
) -> Result<(Var, Vec<Var>)> {
    let d = g.shape(q)[1];
    let hd = d / heads;
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (
                g.slice(q, 1, h * hd, hd)?,
                g.slice(k, 1, h * hd, hd)?,
                g.slice(v, 1, h * hd, hd)?,
            )
        };
        let kt = g.transpose(kh)?;
        let s = g.matmul(qh, kt)?;
        let s = g.scale(s, scale)?;
        let a = g.softmax(s, 1)?;
        weights.push(a);
        outs.push(g.matmul(a, vh)?);
    }
    let out = if heads == 1 {
        outs[0]
    } else {
        g.concat(&outs, 1)?
    };
    Ok((out, weights))
}

/// `[T, C]` tokens in raster order to a `[1, C, h, w]` grid.
pub fn tokens_to_grid<T: Real>(g: &mut Graph<T>, x: Var, h: usize, w: usize) -> Result<Var> {
    let c = g.shape(x)[1];
    let t = g.transpose(x)?;
    g.reshape(t, &[1, c, h, w])
}

/// `[1, C, h, w]` grid to `[h·w, C]` tokens.
pub fn grid_to_tokens<T: Real>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    let s = g.shape(x).to_vec();
    if s[0] != 1 {
        return crate::error::invalid("grid_to_tokens", "expects a single image");
    }
    let r = g.reshape(x, &[s[1], s[2] * s[3]])?;
    g.transpose(r)
}
