//! Inference pattern reconstruction: the recalled prototype attends over
//! the deepest visual features, tokens are grouped into latent graph
//! nodes, and self plus cross attention rebuild a guidance map.

use alloc::format;
use alloc::vec::Vec;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{
    grid_to_tokens, multi_head, tokens_to_grid, Attention, Bound, Group, Linear, ParamStore, Scope,
};
use crate::real::Real;
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct IprConfig {
    pub latent_dim: usize,
    pub heads: usize,
    pub proto_tokens: usize,
    pub graph_nodes: usize,
}

impl Default for IprConfig {
    fn default() -> Self {
        Self {
            latent_dim: 64,
            heads: 4,
            proto_tokens: 4,
            graph_nodes: 8,
        }
    }
}

impl IprConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.latent_dim == 0 || !self.latent_dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "latent_dim {} not divisible by heads {}",
                self.latent_dim, self.heads
            )));
        }
        if self.proto_tokens == 0 || self.graph_nodes == 0 {
            return Err(Error::Config(format!(
                "proto_tokens and graph_nodes must be ≥ 1: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Intermediate handles of one reconstruction, for one image.
#[derive(Clone, Debug)]
pub struct IprState {
    /// `[m, C^l]` keys and values from the prototype.
    pub tk: Var,
    pub tv: Var,
    /// `[H·W, C^l]` projected visual queries.
    pub fq: Var,
    /// `[H·W, C^l]` memory cross-attention output.
    pub tl: Var,
    /// `[H·W, C^l]` refined tokens.
    pub tl_fused: Var,
    /// `[H·W, G]` soft node assignment.
    pub assign: Var,
    /// `[G, C^l]` graph-node tokens after node attention.
    pub tq: Var,
    /// `[1, C^l, H, W]` guidance.
    pub fr: Var,
    pub cross_weights: Vec<Var>,
    pub recon_weights: [Var; 2],
}

#[derive(Clone, Debug)]
pub struct Ipr {
    pub cfg: IprConfig,
    pub channels: usize,
    pub proto: Linear,
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub assign: Linear,
    pub node_attn: Attention,
    pub rq: Linear,
    pub rk: Linear,
    pub rv: Linear,
}

impl Ipr {
    pub fn new<T: Real>(
        cfg: IprConfig,
        channels: usize,
        store: &mut ParamStore<T>,
        rng: &mut Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let cl = cfg.latent_dim;
        let mut s = Scope::new(store, rng, Group::Ipr, "");
        Ok(Self {
            proto: Linear::new(&mut s.sub("proto"), channels, cfg.proto_tokens * cl, true)?,
            wq: Linear::new(&mut s.sub("wq"), channels, cl, false)?,
            wk: Linear::new(&mut s.sub("wk"), cl, cl, false)?,
            wv: Linear::new(&mut s.sub("wv"), cl, cl, false)?,
            wo: Linear::new(&mut s.sub("wo"), cl, cl, true)?,
            assign: Linear::new(&mut s.sub("assign"), cl, cfg.graph_nodes, true)?,
            node_attn: Attention::new(&mut s.sub("nodes"), cl, cfg.heads)?,
            rq: Linear::new(&mut s.sub("rq"), cl, cl, false)?,
            rk: Linear::new(&mut s.sub("rk"), cl, cl, false)?,
            rv: Linear::new(&mut s.sub("rv"), cl, cl, false)?,
            cfg,
            channels,
        })
    }

    /// `[1, C]` prototype to `[m, C^l]` tokens.
    pub fn prototype_tokens<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        proto: Var,
    ) -> Result<Var> {
        let s = g.shape(proto);
        if s != [1, self.channels] {
            return Err(Error::ShapeMismatch {
                op: "prototype_tokens",
                lhs: s.to_vec(),
                rhs: alloc::vec![1, self.channels],
            });
        }
        let t = self.proto.forward(g, p, proto)?;
        g.reshape(t, &[self.cfg.proto_tokens, self.cfg.latent_dim])
    }

    /// Multi-head attention of `[H·W, C]` visual tokens over prototype
    /// tokens, scaled by `√C^l`. Returns `(F^q, T^k, T^v, T^l, weights)`.
    pub fn memory_cross_attention<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        f3_tokens: Var,
        tokens: Var,
    ) -> Result<(Var, Var, Var, Var, Vec<Var>)> {
        let s = g.shape(f3_tokens);
        if s.len() != 2 || s[1] != self.channels {
            return Err(Error::ShapeMismatch {
                op: "memory_cross_attention",
                lhs: s.to_vec(),
                rhs: alloc::vec![self.channels],
            });
        }
        let fq = self.wq.forward(g, p, f3_tokens)?;
        let tk = self.wk.forward(g, p, tokens)?;
        let tv = self.wv.forward(g, p, tokens)?;
        let scale = T::one() / T::of_usize(self.cfg.latent_dim).sqrt();
        let (heads, weights) = multi_head(g, fq, tk, tv, self.cfg.heads, scale)?;
        let tl = self.wo.forward(g, p, heads)?;
        Ok((fq, tk, tv, tl, weights))
    }

    /// Soft-assign tokens to `G` nodes, average them by assignment mass,
    /// then one residual self-attention round among the nodes.
    pub fn graph_interact<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        tl: Var,
    ) -> Result<(Var, Var)> {
        let logits = self.assign.forward(g, p, tl)?;
        let a = g.softmax(logits, 1)?;
        let at = g.transpose(a)?;
        let nodes = g.matmul(at, tl)?;
        let n = g.shape(a)[0];
        let ones = g.constant(crate::Tensor::ones(&[n, 1]));
        let mass = g.matmul(at, ones)?;
        let inv = g.recip(mass)?;
        let nodes = g.scale_rows(nodes, inv)?;
        let attn = self.node_attn.forward(g, p, nodes, nodes)?;
        let tq = g.add(nodes, attn.out)?;
        Ok((a, tq))
    }

    /// Self attention over `tl` plus cross attention from `tl` onto the
    /// graph nodes `tq`, sharing one set of projections. `[H·W, C^l]`.
    pub fn reconstruct<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        tl: Var,
        tq: Var,
    ) -> Result<(Var, [Var; 2])> {
        let scale = T::one() / T::of_usize(self.cfg.latent_dim).sqrt();
        let q = self.rq.forward(g, p, tl)?;
        let kl = self.rk.forward(g, p, tl)?;
        let vl = self.rv.forward(g, p, tl)?;
        let kq = self.rk.forward(g, p, tq)?;
        let vq = self.rv.forward(g, p, tq)?;
        let (own, w_self) = multi_head(g, q, kl, vl, 1, scale)?;
        let (cross, w_cross) = multi_head(g, q, kq, vq, 1, scale)?;
        let out = g.add(own, cross)?;
        Ok((out, [w_self[0], w_cross[0]]))
    }

    /// `f3: [1, C, H, W]`, `proto: [1, C]` → guidance `[1, C^l, H, W]`.
    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        f3: Var,
        proto: Var,
    ) -> Result<IprState> {
        let s = g.shape(f3).to_vec();
        if s.len() != 4 || s[0] != 1 {
            return crate::error::invalid(
                "ipr",
                format!("expects a single [1,C,H,W] map, got {s:?}"),
            );
        }
        let toks = grid_to_tokens(g, f3)?;
        let pt = self.prototype_tokens(g, p, proto)?;
        let (fq, tk, tv, tl, cross_weights) = self.memory_cross_attention(g, p, toks, pt)?;
        let tl_fused = g.add(fq, tl)?;
        let (assign, tq) = self.graph_interact(g, p, tl_fused)?;
        let (rec, recon_weights) = self.reconstruct(g, p, tl_fused, tq)?;
        let fr = tokens_to_grid(g, rec, s[2], s[3])?;
        Ok(IprState {
            tk,
            tv,
            fq,
            tl,
            tl_fused,
            assign,
            tq,
            fr,
            cross_weights,
            recon_weights,
        })
    }
}
