//! Progressive ConvLSTM fusion decoder producing logits at strides
//! 16, 8 and 4.

use alloc::format;
use alloc::vec::Vec;

use crate::autograd::{Graph, Var};
use crate::encoder::FeaturePyramid;
use crate::error::{invalid, Error, Result};
use crate::nn::{Bound, Conv, Group, ParamStore, Scope};
use crate::real::Real;
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderConfig {
    pub dim: usize,
    /// Gate convolution kernel size (odd).
    pub kernel: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self { dim: 32, kernel: 3 }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.kernel.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "decoder dim must be positive and kernel odd: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Learn,
    Recall,
}

/// Single-step ConvLSTM whose hidden and cell states are initialized
/// from an explicit `init` tensor.
#[derive(Clone, Debug)]
pub struct ConvLstmCell {
    pub init_h: Conv,
    pub init_c: Conv,
    pub gates: Conv,
    pub dim: usize,
}

impl ConvLstmCell {
    pub fn new<T: Real>(s: &mut Scope<'_, T>, dim: usize, kernel: usize) -> Result<Self> {
        Ok(Self {
            init_h: Conv::new(&mut s.sub("init_h"), dim, dim, 1, true)?,
            init_c: Conv::new(&mut s.sub("init_c"), dim, dim, 1, true)?,
            gates: Conv::with_std(
                &mut s.sub("gates"),
                2 * dim,
                4 * dim,
                kernel,
                true,
                libm::sqrt(1.0 / (2 * dim * kernel * kernel) as f64),
            )?,
            dim,
        })
    }

    /// `x, init: [B, dim, h, w]`; returns the new hidden state.
    pub fn step<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var, init: Var) -> Result<Var> {
        let (sx, si) = (g.shape(x), g.shape(init));
        if sx.len() != 4 || sx != si || sx[1] != self.dim {
            return Err(Error::ShapeMismatch {
                op: "convlstm_step",
                lhs: sx.to_vec(),
                rhs: si.to_vec(),
            });
        }
        let h0 = self.init_h.forward(g, p, init)?;
        let c0 = self.init_c.forward(g, p, init)?;
        let xh = g.concat(&[x, h0], 1)?;
        let z = self.gates.forward(g, p, xh)?;
        let d = self.dim;
        let i = g.slice(z, 1, 0, d)?;
        let f = g.slice(z, 1, d, d)?;
        let o = g.slice(z, 1, 2 * d, d)?;
        let c = g.slice(z, 1, 3 * d, d)?;
        let i = g.sigmoid(i)?;
        let f = g.sigmoid(f)?;
        let o = g.sigmoid(o)?;
        let c = g.tanh(c)?;
        let keep = g.mul(f, c0)?;
        let write = g.mul(i, c)?;
        let cell = g.add(keep, write)?;
        let ct = g.tanh(cell)?;
        g.mul(o, ct)
    }
}

/// Logits `[B, 1, h_i, w_i]`, coarsest first.
#[derive(Clone, Copy, Debug)]
pub struct DecoderOutput {
    pub p3: Var,
    pub p2: Var,
    pub p1: Var,
}

impl DecoderOutput {
    pub fn levels(&self) -> [Var; 3] {
        [self.p1, self.p2, self.p3]
    }

    /// All three maps resized to `h × w`, finest first.
    pub fn upsampled<T: Real>(&self, g: &mut Graph<T>, h: usize, w: usize) -> Result<[Var; 3]> {
        Ok([
            g.resize_bilinear(self.p1, h, w)?,
            g.resize_bilinear(self.p2, h, w)?,
            g.resize_bilinear(self.p3, h, w)?,
        ])
    }
}

#[derive(Clone, Debug)]
pub struct Decoder {
    pub cfg: DecoderConfig,
    pub channels: usize,
    /// Per-level `C → D` input aligners, finest first.
    pub align: [Conv; 3],
    /// Per-level state-initializer aligners: `C → D` at level 3,
    /// `D + C → D` at levels 2 and 1.
    pub init_align: [Conv; 3],
    pub cell: ConvLstmCell,
    pub heads: [Conv; 3],
}

impl Decoder {
    pub fn new<T: Real>(
        cfg: DecoderConfig,
        channels: usize,
        store: &mut ParamStore<T>,
        rng: &mut Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let c = channels;
        let mut s = Scope::new(store, rng, Group::Decoder, "");
        let align = [
            Conv::new(&mut s.sub("align1"), c, d, 1, true)?,
            Conv::new(&mut s.sub("align2"), c, d, 1, true)?,
            Conv::new(&mut s.sub("align3"), c, d, 1, true)?,
        ];
        let init_align = [
            Conv::new(&mut s.sub("init1"), d + c, d, 1, true)?,
            Conv::new(&mut s.sub("init2"), d + c, d, 1, true)?,
            Conv::new(&mut s.sub("init3"), c, d, 1, true)?,
        ];
        let cell = ConvLstmCell::new(&mut s.sub("cell"), d, cfg.kernel)?;
        let hs = libm::sqrt(1.0 / d as f64);
        let heads = [
            Conv::with_std(&mut s.sub("head1"), d, 1, 1, true, hs)?,
            Conv::with_std(&mut s.sub("head2"), d, 1, 1, true, hs)?,
            Conv::with_std(&mut s.sub("head3"), d, 1, 1, true, hs)?,
        ];
        Ok(Self {
            cfg,
            channels,
            align,
            init_align,
            cell,
            heads,
        })
    }

    /// In the learn stage the `F3` level guides levels 2 and 1; in the
    /// recall stage `guidance` (shaped like `F3`) does.
    pub fn decode<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        pyr: &FeaturePyramid,
        guidance: Option<Var>,
        stage: Stage,
    ) -> Result<DecoderOutput> {
        let z = match (stage, guidance) {
            (Stage::Learn, _) => pyr.f3,
            (Stage::Recall, Some(z)) => z,
            (Stage::Recall, None) => return invalid("decode", "recall stage requires guidance"),
        };
        let (s3, sz) = (g.shape(pyr.f3).to_vec(), g.shape(z).to_vec());
        if s3 != sz {
            return Err(Error::ShapeMismatch {
                op: "decode",
                lhs: s3,
                rhs: sz,
            });
        }
        let levels = pyr.levels();
        for f in levels {
            if g.shape(f)[1] != self.channels {
                return Err(Error::ShapeMismatch {
                    op: "decode",
                    lhs: g.shape(f).to_vec(),
                    rhs: alloc::vec![self.channels],
                });
            }
        }

        let a3 = self.align[2].forward(g, p, pyr.f3)?;
        let init = self.init_align[2].forward(g, p, pyr.f3)?;
        let h = self.cell.step(g, p, a3, init)?;
        let mut fused = g.add(h, a3)?;
        let mut maps: Vec<Var> = alloc::vec![self.heads[2].forward(g, p, fused)?];

        for i in (0..2).rev() {
            let (hh, ww) = {
                let s = g.shape(levels[i]);
                (s[2], s[3])
            };
            let up = g.resize_bilinear(fused, hh, ww)?;
            let upz = g.resize_bilinear(z, hh, ww)?;
            let cat = g.concat(&[up, upz], 1)?;
            let init = self.init_align[i].forward(g, p, cat)?;
            let a = self.align[i].forward(g, p, levels[i])?;
            let h = self.cell.step(g, p, a, init)?;
            fused = g.add(h, up)?;
            maps.push(self.heads[i].forward(g, p, fused)?);
        }
        Ok(DecoderOutput {
            p3: maps[0],
            p2: maps[1],
            p1: maps[2],
        })
    }
}
