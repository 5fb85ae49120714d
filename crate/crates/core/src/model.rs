//! The assembled network: encoder, reconstruction block and decoder
//! sharing one parameter store.

use alloc::format;
use alloc::vec::Vec;

use crate::autograd::Graph;
use crate::decoder::{Decoder, DecoderConfig, Stage};
use crate::encoder::{Encoder, EncoderConfig, FeaturePyramid};
use crate::error::{Error, Result};
use crate::ipr::{Ipr, IprConfig};
use crate::memory::MemoryBank;
use crate::nn::{Group, ParamStore};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub ipr: IprConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        self.ipr.validate()?;
        if self.ipr.latent_dim != self.encoder.embed_dim {
            return Err(Error::Config(format!(
                "ipr latent_dim {} must equal encoder embed_dim {} so guidance can replace F3",
                self.ipr.latent_dim, self.encoder.embed_dim
            )));
        }
        Ok(())
    }

    /// A small configuration that trains in minutes on one core.
    pub fn desk() -> Self {
        Self {
            encoder: EncoderConfig {
                patch_size: 8,
                embed_dim: 32,
                depth: 6,
                heads: 4,
                mlp_ratio: 2,
                dma_layers: alloc::vec![1, 3, 5],
                dma_down_dim: 8,
                tap_layers: [1, 3, 5],
                pos_grid: 8,
            },
            decoder: DecoderConfig { dim: 16, kernel: 3 },
            ipr: IprConfig {
                latent_dim: 32,
                heads: 4,
                proto_tokens: 4,
                graph_nodes: 4,
            },
        }
    }
}

/// One training example: `[3, H, W]` image and `[1, H, W]` binary mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Tensor<f32>,
    pub mask: Tensor<f32>,
}

/// Encoder outputs for one image, detached from any graph.
#[derive(Clone, Debug, PartialEq)]
pub struct CachedPyramid {
    pub f1: Tensor<f32>,
    pub f2: Tensor<f32>,
    pub f3: Tensor<f32>,
    /// `[C]` unit-norm query embedding.
    pub fq: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    /// `[H, W]` foreground probability.
    pub prob: Tensor<f32>,
    pub k: usize,
    pub similarity: f64,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: ModelConfig,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub ipr: Ipr,
    pub params: ParamStore<f32>,
}

impl Model {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamStore::new();
        let mut rng = Rng::new(seed);
        let encoder = Encoder::new(cfg.encoder.clone(), &mut params, &mut rng)?;
        let c = cfg.encoder.embed_dim;
        let decoder = Decoder::new(cfg.decoder.clone(), c, &mut params, &mut rng)?;
        let ipr = Ipr::new(cfg.ipr.clone(), c, &mut params, &mut rng)?;
        Ok(Self {
            cfg,
            encoder,
            decoder,
            ipr,
            params,
        })
    }

    pub fn channels(&self) -> usize {
        self.cfg.encoder.embed_dim
    }

    /// Hash of every encoder-side parameter (backbone, adapters, taps).
    pub fn encoder_checksum(&self) -> [u64; 3] {
        [
            self.params.checksum(Group::Backbone),
            self.params.checksum(Group::Adapter),
            self.params.checksum(Group::Tap),
        ]
    }

    /// Frozen forward of one `[3, H, W]` image.
    pub fn pyramid(&self, image: &Tensor<f32>) -> Result<CachedPyramid> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, |_| false);
        let x = g.constant(image.clone().reshape(&batch_shape(image.shape()))?);
        let pyr = self.encoder.encode(&mut g, &p, x)?;
        Ok(CachedPyramid {
            f1: g.value(pyr.f1).clone(),
            f2: g.value(pyr.f2).clone(),
            f3: g.value(pyr.f3).clone(),
            fq: g.value(pyr.fq).data().to_vec(),
        })
    }

    /// Learn-stage prediction without memory, `[H, W]` probabilities.
    pub fn predict_learn(&self, image: &Tensor<f32>) -> Result<Tensor<f32>> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, |_| false);
        let s = batch_shape(image.shape());
        let x = g.constant(image.clone().reshape(&s)?);
        let pyr = self.encoder.encode(&mut g, &p, x)?;
        let out = self.decoder.decode(&mut g, &p, &pyr, None, Stage::Learn)?;
        let up = g.resize_bilinear(out.p1, s[2], s[3])?;
        let prob = g.sigmoid(up)?;
        g.value(prob).clone().reshape(&[s[2], s[3]])
    }

    /// Encode, retrieve the nearest stored prototype, reconstruct the
    /// guidance and decode in the recall stage.
    pub fn infer(&self, bank: &MemoryBank, image: &Tensor<f32>) -> Result<Inference> {
        if bank.dim() != self.channels() {
            return Err(Error::Memory(format!(
                "bank dimension {} does not match model channels {}",
                bank.dim(),
                self.channels()
            )));
        }
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, |_| false);
        let s = batch_shape(image.shape());
        let x = g.constant(image.clone().reshape(&s)?);
        let pyr = self.encoder.encode(&mut g, &p, x)?;
        let (k, similarity) = bank.retrieve(g.value(pyr.fq).data())?;
        let proto = bank.clustering.prototypes.row(k).to_vec();
        let proto = g.constant(Tensor::new(&[1, self.channels()], proto)?);
        let state = self.ipr.forward(&mut g, &p, pyr.f3, proto)?;
        let out = self
            .decoder
            .decode(&mut g, &p, &pyr, Some(state.fr), Stage::Recall)?;
        let up = g.resize_bilinear(out.p1, s[2], s[3])?;
        let prob = g.sigmoid(up)?;
        Ok(Inference {
            prob: g.value(prob).clone().reshape(&[s[2], s[3]])?,
            k,
            similarity,
        })
    }
}

fn batch_shape(s: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(s.len() + 1);
    out.push(1);
    out.extend_from_slice(s);
    out
}

/// Re-expose a cached pyramid as graph constants.
pub(crate) fn pyramid_constants(
    g: &mut Graph<f32>,
    items: &[&CachedPyramid],
) -> Result<FeaturePyramid> {
    let cat = |f: &dyn Fn(&CachedPyramid) -> &Tensor<f32>| -> Result<Tensor<f32>> {
        let first = f(items[0]).shape().to_vec();
        let mut data = Vec::with_capacity(first.iter().product::<usize>() * items.len());
        for it in items {
            data.extend_from_slice(f(it).data());
        }
        let mut shape = first;
        shape[0] = items.len();
        Tensor::new(&shape, data)
    };
    let f1 = cat(&|c| &c.f1)?;
    let f2 = cat(&|c| &c.f2)?;
    let f3 = cat(&|c| &c.f3)?;
    let c = items[0].fq.len();
    let fq: Vec<f32> = items.iter().flat_map(|it| it.fq.iter().copied()).collect();
    Ok(FeaturePyramid {
        f1: g.constant(f1),
        f2: g.constant(f2),
        f3: g.constant(f3),
        fq: g.constant(Tensor::new(&[items.len(), c], fq)?),
    })
}
