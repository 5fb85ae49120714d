//! Learn-stage and recall-stage training loops.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autograd::{Graph, Var};
use crate::decoder::Stage;
use crate::error::{invalid, Error, Result};
use crate::loss::{total_loss, LossReport};
use crate::memory::{consistency_loss, ClusteringConfig, MemoryBank};
use crate::model::{pyramid_constants, CachedPyramid, Model, Sample};
use crate::nn::Group;
use crate::optim::{cosine_lr, AdamW, AdamWConfig};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub optim: AdamWConfig,
    /// Memory refresh period in epochs.
    pub memory_update_period: usize,
    /// Extra memory rows sampled per step for the consistency term.
    pub lc_sample: usize,
    pub seed: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 12,
            optim: AdamWConfig::default(),
            memory_update_period: 1,
            lc_sample: 256,
            seed: 0,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.memory_update_period == 0 {
            return Err(Error::Config(format!(
                "epochs, batch_size and memory_update_period must be ≥ 1: {self:?}"
            )));
        }
        self.optim.validate()
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub stage: Stage,
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub report: LossReport,
}

/// Called once per event by the training loops.
pub enum Event<'a> {
    Step(&'a StepRecord),
    MemoryUpdated { epoch: usize, k: usize },
}

fn check_data(data: &[Sample]) -> Result<(usize, usize)> {
    let first = data
        .first()
        .ok_or_else(|| Error::Config("training set is empty".into()))?;
    let s = first.image.shape();
    if s.len() != 3 || s[0] != 3 {
        return invalid("train", format!("images must be [3,H,W], got {s:?}"));
    }
    for (i, d) in data.iter().enumerate() {
        if d.image.shape() != s || d.mask.shape() != [1, s[1], s[2]] {
            return invalid("train", format!("sample {i} has inconsistent shape"));
        }
    }
    Ok((s[1], s[2]))
}

fn stack(parts: &[&Tensor<f32>]) -> Result<Tensor<f32>> {
    let mut shape = vec![parts.len()];
    shape.extend_from_slice(parts[0].shape());
    let mut data = Vec::with_capacity(parts[0].numel() * parts.len());
    for p in parts {
        data.extend_from_slice(p.data());
    }
    Tensor::new(&shape, data)
}

fn epoch_order(rng: &mut Rng, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    order
}

/// Train adapters, taps and decoder on the summed segmentation loss with
/// the backbone frozen.
pub fn train_stage1(
    model: &mut Model,
    data: &[Sample],
    sched: &Schedule,
    mut on: impl FnMut(Event),
) -> Result<()> {
    sched.validate()?;
    let (h, w) = check_data(data)?;
    model.encoder.grid_for(h, w)?;
    let trainable = |g: Group| matches!(g, Group::Adapter | Group::Tap | Group::Decoder);
    let mut opt = AdamW::new(sched.optim.clone(), &model.params);
    let mut rng = Rng::new(sched.seed);
    let total = sched.epochs * sched.steps_per_epoch(data.len());
    let mut step = 0;
    for epoch in 0..sched.epochs {
        let order = epoch_order(&mut rng, data.len());
        for chunk in order.chunks(sched.batch_size) {
            let mut g = Graph::new();
            let p = model.params.bind(&mut g, trainable);
            let imgs: Vec<&Tensor<f32>> = chunk.iter().map(|&i| &data[i].image).collect();
            let masks: Vec<&Tensor<f32>> = chunk.iter().map(|&i| &data[i].mask).collect();
            let x = g.constant(stack(&imgs)?);
            let y = g.constant(stack(&masks)?);
            let pyr = model.encoder.encode(&mut g, &p, x)?;
            let out = model.decoder.decode(&mut g, &p, &pyr, None, Stage::Learn)?;
            let ups = out.upsampled(&mut g, h, w)?;
            let (loss, report) = total_loss(&mut g, ups, y, None)?;
            g.backward(loss)?;
            let lr = cosine_lr(sched.optim.lr, step, total);
            opt.step(&mut model.params, &p, &g, lr);
            on(Event::Step(&StepRecord {
                stage: Stage::Learn,
                epoch,
                step,
                lr,
                report,
            }));
            step += 1;
        }
    }
    Ok(())
}

/// Query embeddings of every sample, in order, as `[N, C]`.
pub fn build_embeddings(model: &Model, images: &[&Tensor<f32>]) -> Result<Tensor<f32>> {
    if images.is_empty() {
        return invalid("build_embeddings", "no samples");
    }
    let mut data = Vec::with_capacity(images.len() * model.channels());
    for img in images {
        data.extend(model.pyramid(img)?.fq);
    }
    Tensor::new(&[images.len(), model.channels()], data)
}

pub fn build_memory(
    model: &Model,
    data: &[Sample],
    cfg: &ClusteringConfig,
    seed: u64,
) -> Result<MemoryBank> {
    let imgs: Vec<&Tensor<f32>> = data.iter().map(|s| &s.image).collect();
    let m = build_embeddings(model, &imgs)?;
    MemoryBank::build(m, cfg.clone(), seed)
}

/// Rows of `[N, C]` memory used by the consistency term this step: the
/// batch's own rows plus up to `extra` sampled ones. All rows when that
/// covers the memory.
fn lc_rows(rng: &mut Rng, n: usize, batch: &[usize], extra: usize) -> Vec<usize> {
    if batch.len() + extra >= n {
        return (0..n).collect();
    }
    let mut rows = batch.to_vec();
    let mut pool: Vec<usize> = (0..n).filter(|i| !batch.contains(i)).collect();
    for i in 0..extra {
        let j = i + rng.below(pool.len() - i);
        pool.swap(i, j);
        rows.push(pool[i]);
    }
    rows.sort_unstable();
    rows
}

/// `[rows, N]` matrix whose row `r` averages the memory rows `sets[r]`.
fn averaging(sets: &[Vec<usize>], n: usize) -> Result<Tensor<f32>> {
    let mut data = vec![0.0f32; sets.len() * n];
    for (r, set) in sets.iter().enumerate() {
        let wgt = 1.0 / set.len().max(1) as f32;
        for &i in set {
            data[r * n + i] = wgt;
        }
    }
    Tensor::new(&[sets.len(), n], data)
}

/// One recall-stage forward on a batch of cached pyramids. With
/// `on_graph_memory`, prototypes are rebuilt from the current enhancer so
/// it receives gradients; otherwise stored prototypes are used.
fn recall_forward(
    model: &Model,
    bank: &MemoryBank,
    g: &mut Graph<f32>,
    p: &crate::nn::Bound,
    items: &[&CachedPyramid],
    m_e_unit: Option<Var>,
) -> Result<crate::decoder::DecoderOutput> {
    let pyr = pyramid_constants(g, items)?;
    let n = bank.n();
    let c = model.channels();
    let mut guides = Vec::with_capacity(items.len());
    for (b, it) in items.iter().enumerate() {
        let (k, _) = bank.retrieve(&it.fq)?;
        let proto = match m_e_unit {
            Some(me) => {
                let members: Vec<usize> = (0..n)
                    .filter(|&i| bank.clustering.labels[i] as usize == k)
                    .collect();
                let avg = g.constant(averaging(&[members], n)?);
                let mean = g.matmul(avg, me)?;
                g.l2_normalize(mean, 1)?
            }
            None => g.constant(Tensor::new(
                &[1, c],
                bank.clustering.prototypes.row(k).to_vec(),
            )?),
        };
        let f3 = if items.len() == 1 {
            pyr.f3
        } else {
            g.slice(pyr.f3, 0, b, 1)?
        };
        guides.push(model.ipr.forward(g, p, f3, proto)?.fr);
    }
    let fr = if guides.len() == 1 {
        guides[0]
    } else {
        g.concat(&guides, 0)?
    };
    model.decoder.decode(g, p, &pyr, Some(fr), Stage::Recall)
}

/// Train enhancer, reconstruction block and decoder with the full
/// objective; the encoder stays frozen and its outputs are cached.
pub fn train_stage2(
    model: &mut Model,
    bank: &mut MemoryBank,
    data: &[Sample],
    sched: &Schedule,
    mut on: impl FnMut(Event),
) -> Result<()> {
    sched.validate()?;
    let (h, w) = check_data(data)?;
    if bank.dim() != model.channels() {
        return Err(Error::Memory(format!(
            "bank dimension {} does not match model channels {}",
            bank.dim(),
            model.channels()
        )));
    }
    if bank.n() != data.len() {
        return Err(Error::Memory(format!(
            "bank holds {} items for {} samples",
            bank.n(),
            data.len()
        )));
    }
    let cache: Vec<CachedPyramid> = data
        .iter()
        .map(|s| model.pyramid(&s.image))
        .collect::<Result<_>>()?;
    let trainable = |g: Group| matches!(g, Group::Ipr | Group::Decoder);
    let mut opt = AdamW::new(sched.optim.clone(), &model.params);
    let mut opt_mem = AdamW::new(sched.optim.clone(), &bank.enhancer_params);
    let mut rng = Rng::new(sched.seed);
    let n = bank.n();
    let total = sched.epochs * sched.steps_per_epoch(n);
    let mut step = 0;
    for epoch in 0..sched.epochs {
        let order = epoch_order(&mut rng, n);
        for chunk in order.chunks(sched.batch_size) {
            let mut g = Graph::new();
            let p = model.params.bind(&mut g, trainable);
            let pm = bank.enhancer_params.bind(&mut g, |_| true);
            let m = g.constant(bank.m.clone());
            let m_e = bank.enhancer.forward(&mut g, &pm, m)?;
            let m_e_unit = g.l2_normalize(m_e, 1)?;

            let items: Vec<&CachedPyramid> = chunk.iter().map(|&i| &cache[i]).collect();
            let out = recall_forward(model, bank, &mut g, &p, &items, Some(m_e_unit))?;
            let ups = out.upsampled(&mut g, h, w)?;

            let rows = lc_rows(&mut rng, n, chunk, sched.lc_sample);
            let sel = g.constant(averaging(
                &rows.iter().map(|&r| vec![r]).collect::<Vec<_>>(),
                n,
            )?);
            let me_rows = g.matmul(sel, m_e)?;
            let assigned = bank.clustering.assigned();
            let mc: Vec<f32> = rows
                .iter()
                .flat_map(|&r| assigned.row(r).iter().copied())
                .collect();
            let mc = g.constant(Tensor::new(&[rows.len(), model.channels()], mc)?);
            let l_c = consistency_loss(&mut g, me_rows, mc)?;

            let masks: Vec<&Tensor<f32>> = chunk.iter().map(|&i| &data[i].mask).collect();
            let y = g.constant(stack(&masks)?);
            let (loss, report) = total_loss(&mut g, ups, y, Some(l_c))?;
            g.backward(loss)?;
            let lr = cosine_lr(sched.optim.lr, step, total);
            opt.step(&mut model.params, &p, &g, lr);
            opt_mem.step(&mut bank.enhancer_params, &pm, &g, lr);
            on(Event::Step(&StepRecord {
                stage: Stage::Recall,
                epoch,
                step,
                lr,
                report,
            }));
            step += 1;
        }
        if (epoch + 1) % sched.memory_update_period == 0 || epoch + 1 == sched.epochs {
            bank.update()?;
            on(Event::MemoryUpdated { epoch, k: bank.k() });
        }
    }
    Ok(())
}

/// Mean segmentation loss over `data` with no parameter updates: learn
/// stage when `bank` is `None`, recall stage with stored prototypes
/// otherwise.
pub fn evaluate_loss(
    model: &Model,
    bank: Option<&MemoryBank>,
    data: &[Sample],
) -> Result<LossReport> {
    let (h, w) = check_data(data)?;
    let mut acc = LossReport::default();
    for s in data {
        let mut g = Graph::new();
        let p = model.params.bind(&mut g, |_| false);
        let out = match bank {
            None => {
                let x = g.constant(stack(&[&s.image])?);
                let pyr = model.encoder.encode(&mut g, &p, x)?;
                model.decoder.decode(&mut g, &p, &pyr, None, Stage::Learn)?
            }
            Some(bank) => {
                let cached = model.pyramid(&s.image)?;
                recall_forward(model, bank, &mut g, &p, &[&cached], None)?
            }
        };
        let ups = out.upsampled(&mut g, h, w)?;
        let y = g.constant(stack(&[&s.mask])?);
        let (_, r) = total_loss(&mut g, ups, y, None)?;
        for i in 0..3 {
            acc.l_bce[i] += r.l_bce[i];
            acc.l_iou[i] += r.l_iou[i];
            acc.l_seg[i] += r.l_seg[i];
        }
        acc.total += r.total;
    }
    let k = data.len() as f64;
    for i in 0..3 {
        acc.l_bce[i] /= k;
        acc.l_iou[i] /= k;
        acc.l_seg[i] /= k;
    }
    acc.total /= k;
    Ok(acc)
}
