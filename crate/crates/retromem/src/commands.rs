//! The pipeline commands behind the CLI.

use std::path::Path;

use retromem_core::loss::LossReport;
use retromem_core::memory::MemoryBank;
use retromem_core::model::{Inference, Model, Sample};
use retromem_core::nn::Group;
use retromem_core::train::{self, Event};
use retromem_core::Tensor;
use serde_json::json;

use crate::config::TrainConfig;
use crate::data::{self, load_samples, resize};
use crate::error::{Error, Result};
use crate::eval::{evaluate_split, prediction_path, Evaluation};
use crate::format::{load_bank, load_into, save_bank, save_checkpoint};
use crate::manifest::Manifest;
use crate::netpbm::{read_netpbm, write_netpbm};
use crate::runlog::{loss_json, RunLog};
use crate::threads::par_map;

fn open_log(cfg: &TrainConfig, command: &str) -> Result<RunLog> {
    let mut log = RunLog::create(&cfg.paths.logs.join(format!("{command}.jsonl")))?;
    log.record("start", json!({ "command": command, "seed": cfg.seed }))?;
    Ok(log)
}

fn param_counts(model: &Model) -> serde_json::Value {
    let p = &model.params;
    json!({
        "total": p.count(|_| true),
        "backbone": p.count(|g| g == Group::Backbone),
        "adapter": p.count(|g| g == Group::Adapter),
        "tap": p.count(|g| g == Group::Tap),
        "decoder": p.count(|g| g == Group::Decoder),
        "ipr": p.count(|g| g == Group::Ipr),
    })
}

fn train_samples(cfg: &TrainConfig) -> Result<Vec<Sample>> {
    let manifest = Manifest::read(&cfg.manifest)?;
    let rows = manifest.train_rows();
    if rows.is_empty() {
        return Err(Error::Usage(format!(
            "{} has no train rows",
            cfg.manifest.display()
        )));
    }
    load_samples(&cfg.manifest, &rows, cfg.input_size)
}

fn stage1_model(cfg: &TrainConfig) -> Result<Model> {
    let mut model = Model::new(cfg.model.clone(), cfg.seed)?;
    load_into(&mut model.params, &cfg.paths.stage1_checkpoint)?;
    Ok(model)
}

/// Collects training events into the run log, keeping the first IO error
/// and a per-epoch mean of the step losses.
struct Recorder<'a> {
    log: &'a mut RunLog,
    error: Option<Error>,
    epoch: Option<usize>,
    acc: Vec<LossReport>,
    last: Option<LossReport>,
}

impl<'a> Recorder<'a> {
    fn new(log: &'a mut RunLog) -> Self {
        Self {
            log,
            error: None,
            epoch: None,
            acc: Vec::new(),
            last: None,
        }
    }

    fn keep(&mut self, r: Result<()>) {
        if let Err(e) = r {
            self.error.get_or_insert(e);
        }
    }

    fn flush_epoch(&mut self) {
        let Some(epoch) = self.epoch else { return };
        let n = self.acc.len().max(1) as f64;
        let mean_total = self.acc.iter().map(|r| r.total).sum::<f64>() / n;
        let mean_seg = self.acc.iter().map(LossReport::seg_total).sum::<f64>() / n;
        let r = self.log.record("epoch", json!({ "epoch": epoch, "steps": self.acc.len(), "mean_total": mean_total, "mean_seg": mean_seg }));
        self.keep(r);
        self.acc.clear();
    }

    fn on(&mut self, ev: Event) {
        match ev {
            Event::Step(s) => {
                if self.epoch != Some(s.epoch) {
                    self.flush_epoch();
                    self.epoch = Some(s.epoch);
                }
                self.acc.push(s.report);
                self.last = Some(s.report);
                let r = self.log.step(s);
                self.keep(r);
            }
            Event::MemoryUpdated { epoch, k } => {
                let r = self.log.record("memory", json!({ "epoch": epoch, "k": k }));
                self.keep(r);
            }
        }
    }

    fn finish(mut self) -> Result<Option<LossReport>> {
        self.flush_epoch();
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.last),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub last: Option<LossReport>,
    pub samples: usize,
}

pub fn gen_data(cfg: &TrainConfig) -> Result<Manifest> {
    let mut log = open_log(cfg, "gen-data")?;
    let m = data::gen_data(cfg)?;
    let counts: serde_json::Map<String, serde_json::Value> = crate::manifest::SplitTag::ALL
        .iter()
        .map(|&t| (t.name().to_string(), json!(m.count(t))))
        .collect();
    log.record("end", json!({ "manifest": cfg.manifest, "splits": counts }))?;
    Ok(m)
}

pub fn train_stage1(cfg: &TrainConfig) -> Result<TrainOutcome> {
    let samples = train_samples(cfg)?;
    let mut model = Model::new(cfg.model.clone(), cfg.seed)?;
    let mut log = open_log(cfg, "train-stage1")?;
    log.record("params", param_counts(&model))?;
    let mut rec = Recorder::new(&mut log);
    train::train_stage1(&mut model, &samples, &cfg.schedule, |ev| rec.on(ev))?;
    let last = rec.finish()?;
    save_checkpoint(&model.params, &cfg.paths.stage1_checkpoint)?;
    log.record(
        "end",
        json!({ "checkpoint": cfg.paths.stage1_checkpoint, "last": last.as_ref().map(loss_json) }),
    )?;
    Ok(TrainOutcome {
        model,
        last,
        samples: samples.len(),
    })
}

pub fn build_memory(cfg: &TrainConfig) -> Result<MemoryBank> {
    let model = stage1_model(cfg)?;
    let samples = train_samples(cfg)?;
    let mut log = open_log(cfg, "build-memory")?;
    let bank = train::build_memory(&model, &samples, &cfg.clustering, cfg.seed)?;
    save_bank(&bank, &cfg.paths.bank)?;
    log.record(
        "end",
        json!({
            "bank": cfg.paths.bank,
            "backend": bank.backend().name(),
            "n": bank.n(),
            "k": bank.k(),
            "fallback": bank.clustering.fallback,
        }),
    )?;
    Ok(bank)
}

#[derive(Clone, Debug)]
pub struct RecallOutcome {
    pub model: Model,
    pub bank: MemoryBank,
    pub last: Option<LossReport>,
}

pub fn train_stage2(cfg: &TrainConfig) -> Result<RecallOutcome> {
    let mut model = stage1_model(cfg)?;
    let mut bank = load_bank(&cfg.paths.bank, &cfg.clustering)?;
    let samples = train_samples(cfg)?;
    let mut log = open_log(cfg, "train-stage2")?;
    log.record("params", param_counts(&model))?;
    let before = model.encoder_checksum();
    let mut rec = Recorder::new(&mut log);
    train::train_stage2(&mut model, &mut bank, &samples, &cfg.schedule, |ev| {
        rec.on(ev)
    })?;
    let last = rec.finish()?;
    if model.encoder_checksum() != before {
        return Err(Error::Usage(
            "encoder weights changed during recall training".into(),
        ));
    }
    save_checkpoint(&model.params, &cfg.paths.stage2_checkpoint)?;
    save_bank(&bank, &cfg.paths.stage2_bank)?;
    log.record(
        "end",
        json!({
            "checkpoint": cfg.paths.stage2_checkpoint,
            "bank": cfg.paths.stage2_bank,
            "k": bank.k(),
            "last": last.as_ref().map(loss_json),
        }),
    )?;
    Ok(RecallOutcome { model, bank, last })
}

/// Recall-stage model and memory as written by `train-stage2`.
pub fn load_recall(cfg: &TrainConfig) -> Result<(Model, MemoryBank)> {
    let mut model = Model::new(cfg.model.clone(), cfg.seed)?;
    load_into(&mut model.params, &cfg.paths.stage2_checkpoint)?;
    let bank = load_bank(&cfg.paths.stage2_bank, &cfg.clustering)?;
    Ok((model, bank))
}

/// Predict one image at the configured input size and return the map at
/// the image's own resolution.
pub fn predict(
    model: &Model,
    bank: &MemoryBank,
    image: &Tensor<f32>,
    size: usize,
) -> Result<Inference> {
    let s = image.shape().to_vec();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::Usage(format!(
            "expected an RGB image, got shape {s:?}"
        )));
    }
    let mut inf = model.infer(bank, &resize(image, size, size)?)?;
    let prob = inf.prob.clone().reshape(&[1, size, size])?;
    inf.prob = resize(&prob, s[1], s[2])?.reshape(&[s[1], s[2]])?;
    Ok(inf)
}

pub fn infer(cfg: &TrainConfig, image_path: &Path, out_path: &Path) -> Result<Inference> {
    let (model, bank) = load_recall(cfg)?;
    let image = read_netpbm(image_path)?;
    let inf = predict(&model, &bank, &image, cfg.input_size)?;
    write_netpbm(&inf.prob, out_path)?;
    Ok(inf)
}

/// Write `<id>.pgm` predictions for every test row into `dir`.
pub fn infer_manifest(cfg: &TrainConfig, dir: &Path) -> Result<Vec<(String, Inference)>> {
    let (model, bank) = load_recall(cfg)?;
    let manifest = Manifest::read(&cfg.manifest)?;
    let rows = manifest.evaluation_rows();
    let mut log = open_log(cfg, "infer")?;
    let out = par_map(&rows, |r| {
        let image = read_netpbm(&crate::manifest::resolve(&cfg.manifest, &r.image))?;
        let inf = predict(&model, &bank, &image, cfg.input_size)?;
        write_netpbm(&inf.prob, &prediction_path(dir, &r.id))?;
        Ok((r.id.clone(), inf))
    })?;
    for (id, inf) in &out {
        log.record(
            "prediction",
            json!({ "id": id, "k": inf.k, "similarity": inf.similarity }),
        )?;
    }
    Ok(out)
}

pub fn eval(cfg: &TrainConfig, pred_dir: &Path) -> Result<Evaluation> {
    let manifest = Manifest::read(&cfg.manifest)?;
    let ev = evaluate_split(pred_dir, &manifest, &cfg.manifest)?;
    ev.write_report(&cfg.paths.report)?;
    Ok(ev)
}
