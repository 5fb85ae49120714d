//! Toy patch-embedding transformer encoder with dense multi-scale
//! adapters and a three-level feature pyramid.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autograd::{Graph, Var};
use crate::error::{invalid, Error, Result};
use crate::nn::{
    grid_to_tokens, tokens_to_grid, Attention, Bound, Conv, Group, LayerNorm, Linear, ParamStore,
    Scope,
};
use crate::real::Real;
use crate::rng::Rng;

/// Output strides of the three pyramid levels.
pub const STRIDES: [usize; 3] = [4, 8, 16];

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub dma_layers: Vec<usize>,
    pub dma_down_dim: usize,
    pub tap_layers: [usize; 3],
    /// Side of the learned positional-embedding grid; resampled to the
    /// actual token grid when they differ.
    pub pos_grid: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            patch_size: 8,
            embed_dim: 64,
            depth: 12,
            heads: 4,
            mlp_ratio: 4,
            dma_layers: vec![1, 3, 5, 7, 9, 11],
            dma_down_dim: 16,
            tap_layers: [3, 7, 11],
            pos_grid: 8,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::Config(m));
        if self.patch_size == 0 || self.embed_dim == 0 || self.depth == 0 || self.dma_down_dim == 0
        {
            return bad(format!("encoder sizes must be positive: {self:?}"));
        }
        if self.heads == 0 || !self.embed_dim.is_multiple_of(self.heads) {
            return bad(format!(
                "embed_dim {} not divisible by heads {}",
                self.embed_dim, self.heads
            ));
        }
        if self.mlp_ratio == 0 || self.pos_grid == 0 {
            return bad(format!("mlp_ratio and pos_grid must be positive: {self:?}"));
        }
        check_layers(&self.dma_layers, self.depth)?;
        let t = self.tap_layers;
        if !(t[0] < t[1] && t[1] < t[2]) {
            return bad(format!("tap_layers {t:?} must be strictly increasing"));
        }
        if t[2] >= self.depth {
            return bad(format!(
                "tap layer {} out of range for depth {}",
                t[2], self.depth
            ));
        }
        Ok(())
    }
}

fn check_layers(layers: &[usize], depth: usize) -> Result<()> {
    for (i, &l) in layers.iter().enumerate() {
        if l >= depth {
            return Err(Error::Config(format!(
                "adapter layer {l} out of range for depth {depth}"
            )));
        }
        if layers[..i].contains(&l) {
            return Err(Error::Config(format!("duplicate adapter layer {l}")));
        }
    }
    Ok(())
}

/// Graph handles of one encoder forward pass.
#[derive(Clone, Copy, Debug)]
pub struct FeaturePyramid {
    pub f1: Var,
    pub f2: Var,
    pub f3: Var,
    /// `[B, C]` unit-norm pooled `f3`.
    pub fq: Var,
}

impl FeaturePyramid {
    pub fn levels(&self) -> [Var; 3] {
        [self.f1, self.f2, self.f3]
    }
}

/// Dense multi-scale adapter: channel reduction, a chain of pointwise
/// convs, two densely connected 3×3 stages, a 5×5 aggregation and a
/// zero-initialized channel restoration.
#[derive(Clone, Debug)]
pub struct Dma {
    pub down: Conv,
    pub point: [Conv; 3],
    pub mix1: Conv,
    pub conv3a: Conv,
    pub mix2: Conv,
    pub conv3b: Conv,
    pub mix3: Conv,
    pub conv5: Conv,
    pub up: Conv,
    pub channels: usize,
}

impl Dma {
    pub fn new<T: Real>(s: &mut Scope<'_, T>, channels: usize, down: usize) -> Result<Self> {
        let d = down;
        Ok(Self {
            down: Conv::new(&mut s.sub("down"), channels, d, 1, true)?,
            point: [
                Conv::new(&mut s.sub("point1"), d, d, 1, true)?,
                Conv::new(&mut s.sub("point2"), d, d, 1, true)?,
                Conv::new(&mut s.sub("point3"), d, d, 1, true)?,
            ],
            mix1: Conv::new(&mut s.sub("mix1"), 2 * d, d, 1, true)?,
            conv3a: Conv::new(&mut s.sub("conv3a"), d, d, 3, true)?,
            mix2: Conv::new(&mut s.sub("mix2"), 3 * d, d, 1, true)?,
            conv3b: Conv::new(&mut s.sub("conv3b"), d, d, 3, true)?,
            mix3: Conv::new(&mut s.sub("mix3"), 4 * d, d, 1, true)?,
            conv5: Conv::new(&mut s.sub("conv5"), d, d, 5, true)?,
            up: Conv::with_std(&mut s.sub("up"), d, channels, 1, true, 0.0)?,
            channels,
        })
    }

    /// `[B, C, h, w] → [B, C, h, w]`.
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let s = g.shape(x);
        if s.len() != 4 || s[1] != self.channels {
            return Err(Error::ShapeMismatch {
                op: "dma_forward",
                lhs: s.to_vec(),
                rhs: vec![self.channels],
            });
        }
        let xd = self.down.forward(g, p, x)?;
        let xd = g.relu(xd)?;
        let f11 = self.point[0].forward(g, p, xd)?;
        let f12 = self.point[1].forward(g, p, f11)?;
        let f13 = self.point[2].forward(g, p, f12)?;
        let c = g.concat(&[xd, f11], 1)?;
        let c = self.mix1.forward(g, p, c)?;
        let f21 = self.conv3a.forward(g, p, c)?;
        let c = g.concat(&[f21, f12, f13], 1)?;
        let c = self.mix2.forward(g, p, c)?;
        let f22 = self.conv3b.forward(g, p, c)?;
        let c = g.concat(&[f21, f22, f12, f13], 1)?;
        let c = self.mix3.forward(g, p, c)?;
        let f31 = self.conv5.forward(g, p, c)?;
        self.up.forward(g, p, f31)
    }
}

#[derive(Clone, Debug)]
pub struct Block {
    pub ln1: LayerNorm,
    pub attn: Attention,
    pub ln2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
    pub adapter: Option<Dma>,
}

/// Parameter counts after inserting adapters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AdapterReport {
    pub installed: usize,
    pub adapter_params: usize,
    pub trainable_params: usize,
    pub total_params: usize,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub cfg: EncoderConfig,
    pub embed: Linear,
    pub pos: crate::nn::ParamId,
    pub blocks: Vec<Block>,
    pub taps: [Conv; 3],
}

impl Encoder {
    /// Seeded backbone and taps, then adapters at `cfg.dma_layers`.
    pub fn new<T: Real>(
        cfg: EncoderConfig,
        store: &mut ParamStore<T>,
        rng: &mut Rng,
    ) -> Result<Self> {
        let layers = cfg.dma_layers.clone();
        let mut enc = Self::bare(cfg, store, rng)?;
        enc.insert_adapters(store, rng, &layers)?;
        Ok(enc)
    }

    /// Backbone and taps only; `cfg.dma_layers` is cleared.
    pub fn bare<T: Real>(
        mut cfg: EncoderConfig,
        store: &mut ParamStore<T>,
        rng: &mut Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        cfg.dma_layers.clear();
        let c = cfg.embed_dim;
        let p = cfg.patch_size;
        let mut s = Scope::new(store, rng, Group::Backbone, "");
        let embed = Linear::new(&mut s.sub("embed"), 3 * p * p, c, true)?;
        let pos = s.normal("pos", &[1, c, cfg.pos_grid, cfg.pos_grid], 0.02)?;
        let mut blocks = Vec::with_capacity(cfg.depth);
        for l in 0..cfg.depth {
            let mut b = s.sub(&format!("block{l}"));
            blocks.push(Block {
                ln1: LayerNorm::new(&mut b.sub("ln1"), c)?,
                attn: Attention::new(&mut b.sub("attn"), c, cfg.heads)?,
                ln2: LayerNorm::new(&mut b.sub("ln2"), c)?,
                fc1: Linear::new(&mut b.sub("fc1"), c, cfg.mlp_ratio * c, true)?,
                fc2: Linear::new(&mut b.sub("fc2"), cfg.mlp_ratio * c, c, true)?,
                adapter: None,
            });
        }
        drop(s);
        let mut t = Scope::new(store, rng, Group::Tap, "");
        let std = 1.0 / libm::sqrt(c as f64);
        let taps = [
            Conv::with_std(&mut t.sub("tap1"), c, c, 1, true, std)?,
            Conv::with_std(&mut t.sub("tap2"), c, c, 1, true, std)?,
            Conv::with_std(&mut t.sub("tap3"), c, c, 1, true, std)?,
        ];
        Ok(Self {
            cfg,
            embed,
            pos,
            blocks,
            taps,
        })
    }

    /// Add a parallel adapter branch to each listed layer.
    pub fn insert_adapters<T: Real>(
        &mut self,
        store: &mut ParamStore<T>,
        rng: &mut Rng,
        layers: &[usize],
    ) -> Result<AdapterReport> {
        check_layers(layers, self.cfg.depth)?;
        if let Some(&l) = layers.iter().find(|&&l| self.blocks[l].adapter.is_some()) {
            return Err(Error::Config(format!("layer {l} already has an adapter")));
        }
        for &l in layers {
            let mut s = Scope::new(store, rng, Group::Adapter, &format!("{l}"));
            self.blocks[l].adapter =
                Some(Dma::new(&mut s, self.cfg.embed_dim, self.cfg.dma_down_dim)?);
            self.cfg.dma_layers.push(l);
        }
        self.cfg.dma_layers.sort_unstable();
        Ok(self.report(store))
    }

    pub fn report<T: Real>(&self, store: &ParamStore<T>) -> AdapterReport {
        let adapter_params = store.count(|g| g == Group::Adapter);
        AdapterReport {
            installed: self.blocks.iter().filter(|b| b.adapter.is_some()).count(),
            adapter_params,
            trainable_params: store
                .count(|g| matches!(g, Group::Adapter | Group::Tap | Group::Decoder)),
            total_params: store.count(|_| true),
        }
    }

    /// Check input extents and return the token grid `(gh, gw)`.
    pub fn grid_for(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if !h.is_multiple_of(16) || !w.is_multiple_of(16) || h < 32 || w < 32 {
            return invalid(
                "encode",
                format!("input {h}×{w} must be ≥ 32 and divisible by 16"),
            );
        }
        let p = self.cfg.patch_size;
        if !h.is_multiple_of(p) || !w.is_multiple_of(p) {
            return invalid(
                "encode",
                format!("input {h}×{w} not divisible by patch size {p}"),
            );
        }
        Ok((h / p, w / p))
    }

    /// `image: [B, 3, H, W]`. Gradients reach whichever parameter groups
    /// were bound as trainable.
    pub fn encode<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        image: Var,
    ) -> Result<FeaturePyramid> {
        let s = g.shape(image).to_vec();
        if s.len() != 4 || s[1] != 3 {
            return invalid("encode", format!("expected [B,3,H,W], got {s:?}"));
        }
        let (b, h, w) = (s[0], s[2], s[3]);
        let (gh, gw) = self.grid_for(h, w)?;
        let t = gh * gw;

        let patches = g.patchify(image, self.cfg.patch_size)?;
        let mut x = self.embed.forward(g, p, patches)?;
        let pos = g.resize_bilinear(p[self.pos], gh, gw)?;
        let pos = grid_to_tokens(g, pos)?;
        let pos = if b == 1 {
            pos
        } else {
            g.concat(&vec![pos; b], 0)?
        };
        x = g.add(x, pos)?;

        let mut taps = Vec::with_capacity(3);
        for (l, blk) in self.blocks.iter().enumerate() {
            let hn = blk.ln1.forward(g, p, x)?;
            let mut att = Vec::with_capacity(b);
            for i in 0..b {
                let hi = if b == 1 {
                    hn
                } else {
                    g.slice(hn, 0, i * t, t)?
                };
                att.push(blk.attn.forward(g, p, hi, hi)?.out);
            }
            let a = if b == 1 { att[0] } else { g.concat(&att, 0)? };
            x = g.add(x, a)?;

            let hn = blk.ln2.forward(g, p, x)?;
            let m = blk.fc1.forward(g, p, hn)?;
            let m = g.gelu(m)?;
            let m = blk.fc2.forward(g, p, m)?;
            x = g.add(x, m)?;
            if let Some(dma) = &blk.adapter {
                let grid = self.to_grids(g, hn, b, gh, gw)?;
                let out = dma.forward(g, p, grid)?;
                let out = self.to_tokens(g, out, b)?;
                x = g.add(x, out)?;
            }
            if self.cfg.tap_layers.contains(&l) {
                taps.push(x);
            }
        }

        let mut levels = [x; 3];
        for (i, &tok) in taps.iter().enumerate() {
            let grid = self.to_grids(g, tok, b, gh, gw)?;
            let grid = g.resize_bilinear(grid, h / STRIDES[i], w / STRIDES[i])?;
            levels[i] = self.taps[i].forward(g, p, grid)?;
        }
        let pooled = g.global_avg_pool(levels[2])?;
        let fq = g.l2_normalize(pooled, 1)?;
        Ok(FeaturePyramid {
            f1: levels[0],
            f2: levels[1],
            f3: levels[2],
            fq,
        })
    }

    fn to_grids<T: Real>(
        &self,
        g: &mut Graph<T>,
        x: Var,
        b: usize,
        gh: usize,
        gw: usize,
    ) -> Result<Var> {
        let t = gh * gw;
        let mut grids = Vec::with_capacity(b);
        for i in 0..b {
            let xi = if b == 1 { x } else { g.slice(x, 0, i * t, t)? };
            grids.push(tokens_to_grid(g, xi, gh, gw)?);
        }
        if b == 1 {
            Ok(grids[0])
        } else {
            g.concat(&grids, 0)
        }
    }

    fn to_tokens<T: Real>(&self, g: &mut Graph<T>, x: Var, b: usize) -> Result<Var> {
        let mut toks = Vec::with_capacity(b);
        for i in 0..b {
            let xi = if b == 1 { x } else { g.slice(x, 0, i, 1)? };
            toks.push(grid_to_tokens(g, xi)?);
        }
        if b == 1 {
            Ok(toks[0])
        } else {
            g.concat(&toks, 0)
        }
    }
}
