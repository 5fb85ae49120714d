//! Sectioned `key = value` configuration and the resolved run settings.
//! See `docs/config.md` for the grammar and the key reference.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use retromem_core::decoder::Stage;
use retromem_core::memory::{Backend, ClusteringConfig};
use retromem_core::model::ModelConfig;
use retromem_core::optim::AdamWConfig;
use retromem_core::synth::{PatternTag, SynthConfig};
use retromem_core::train::Schedule;

use crate::error::{Error, Result};
use crate::fsutil;

/// Raw settings keyed `section.key`, in file order of precedence.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Settings {
    pub values: BTreeMap<String, String>,
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

impl Settings {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let fail = |line: usize, reason: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let mut values = BTreeMap::new();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .map(str::trim)
                    .filter(|n| is_ident(n))
                    .ok_or_else(|| fail(line_no, format!("malformed section header {line:?}")))?;
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| fail(line_no, format!("expected `key = value`, found {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !is_ident(key) {
                return Err(fail(line_no, format!("invalid key {key:?}")));
            }
            if value.is_empty() {
                return Err(fail(line_no, format!("key {key} has no value")));
            }
            let section = section
                .as_deref()
                .ok_or_else(|| fail(line_no, format!("key {key} appears before any section")))?;
            let full = format!("{section}.{key}");
            if values.insert(full.clone(), value.to_string()).is_some() {
                return Err(fail(line_no, format!("duplicate key {full}")));
            }
        }
        Ok(Self { values })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fsutil::read(path)?;
        let text = String::from_utf8_lossy(&bytes);
        Self::parse(&text, path)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    /// Apply a `section.key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("override {pair:?} is not section.key=value")))?;
        let (k, v) = (k.trim(), v.trim());
        match k.split_once('.') {
            Some((s, key)) if is_ident(s) && is_ident(key) && !v.is_empty() => {
                self.set(k, v);
                Ok(())
            }
            _ => Err(Error::Usage(format!(
                "override {pair:?} is not section.key=value"
            ))),
        }
    }
}

trait Value: Sized {
    fn parse_value(s: &str) -> Result<Self, String>;
}

macro_rules! from_str_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse_value(s: &str) -> Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
        }
    )*};
}
from_str_value!(usize, u64, u32, f64);

impl Value for PathBuf {
    fn parse_value(s: &str) -> Result<Self, String> {
        Ok(PathBuf::from(s))
    }
}

impl Value for Backend {
    fn parse_value(s: &str) -> Result<Self, String> {
        Backend::parse(s).map_err(|e| e.to_string())
    }
}

impl Value for PatternTag {
    fn parse_value(s: &str) -> Result<Self, String> {
        PatternTag::parse(s).map_err(|e| e.to_string())
    }
}

fn list<T: Value>(s: &str) -> Result<Vec<T>, String> {
    if s == "none" {
        return Ok(Vec::new());
    }
    s.split(',').map(|p| T::parse_value(p.trim())).collect()
}

impl<T: Value> Value for Vec<T> {
    fn parse_value(s: &str) -> Result<Self, String> {
        list(s)
    }
}

impl Value for [usize; 3] {
    fn parse_value(s: &str) -> Result<Self, String> {
        let v: Vec<usize> = list(s)?;
        v.try_into()
            .map_err(|v: Vec<usize>| format!("expected 3 values, found {}", v.len()))
    }
}

impl<T: Value + Copy> Value for (T, T) {
    fn parse_value(s: &str) -> Result<Self, String> {
        match list::<T>(s)?.as_slice() {
            [a, b] => Ok((*a, *b)),
            v => Err(format!("expected `min, max`, found {} values", v.len())),
        }
    }
}

struct Reader<'a> {
    settings: &'a Settings,
    used: BTreeSet<&'a str>,
    errors: Vec<String>,
}

impl<'a> Reader<'a> {
    fn get<T: Value>(&mut self, key: &str, slot: &mut T) {
        if let Some((k, v)) = self.settings.values.get_key_value(key) {
            self.used.insert(k.as_str());
            match T::parse_value(v) {
                Ok(x) => *slot = x,
                Err(e) => self.errors.push(format!("{key} = {v}: {e}")),
            }
        }
    }

    fn opt<T: Value>(&mut self, key: &str) -> Option<T> {
        let mut slot = None;
        if let Some((k, v)) = self.settings.values.get_key_value(key) {
            self.used.insert(k.as_str());
            match T::parse_value(v) {
                Ok(x) => slot = Some(x),
                Err(e) => self.errors.push(format!("{key} = {v}: {e}")),
            }
        }
        slot
    }

    fn schedule(&mut self, section: &str, s: &mut Schedule) {
        self.get(&format!("{section}.epochs"), &mut s.epochs);
        self.get(&format!("{section}.batch_size"), &mut s.batch_size);
        self.get(&format!("{section}.learning_rate"), &mut s.optim.lr);
        self.get(&format!("{section}.beta1"), &mut s.optim.beta1);
        self.get(&format!("{section}.beta2"), &mut s.optim.beta2);
        self.get(&format!("{section}.eps"), &mut s.optim.eps);
        self.get(
            &format!("{section}.weight_decay"),
            &mut s.optim.weight_decay,
        );
        self.get(
            &format!("{section}.memory_update_period"),
            &mut s.memory_update_period,
        );
        self.get(&format!("{section}.lc_sample"), &mut s.lc_sample);
    }
}

/// Dataset generation settings.
#[derive(Clone, Debug, PartialEq)]
pub struct DataGen {
    pub train_count: usize,
    pub test_count: usize,
    /// Patterns withheld from the training rows.
    pub exclude_train: Vec<PatternTag>,
    pub synth: SynthConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Paths {
    pub stage1_checkpoint: PathBuf,
    pub bank: PathBuf,
    pub stage2_checkpoint: PathBuf,
    /// Bank after recall-stage training.
    pub stage2_bank: PathBuf,
    pub predictions: PathBuf,
    pub report: PathBuf,
    pub logs: PathBuf,
}

/// Fully resolved settings for one command.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub stage: Stage,
    pub seed: u64,
    pub out: PathBuf,
    pub manifest: PathBuf,
    pub input_size: usize,
    pub schedule: Schedule,
    pub model: ModelConfig,
    pub clustering: ClusteringConfig,
    pub data: DataGen,
    pub paths: Paths,
}

impl TrainConfig {
    /// Resolve `settings` for `stage`. Keys in `[train]` apply to both
    /// stages and `[learn]` / `[recall]` override them per stage. Every
    /// problem is reported at once.
    pub fn resolve(settings: &Settings, stage: Stage) -> Result<Self> {
        let mut r = Reader {
            settings,
            used: BTreeSet::new(),
            errors: Vec::new(),
        };
        let mut seed = 0u64;
        r.get("run.seed", &mut seed);
        let out: PathBuf = r.opt("run.out").unwrap_or_else(|| PathBuf::from("run"));
        let mut input_size = 64usize;
        r.get("data.input_size", &mut input_size);
        let manifest = r
            .opt("data.manifest")
            .unwrap_or_else(|| out.join("data").join(crate::manifest::MANIFEST_FILE));

        let mut base = Schedule {
            seed,
            optim: AdamWConfig::default(),
            ..Schedule::default()
        };
        r.schedule("train", &mut base);
        let (mut learn, mut recall) = (base.clone(), base);
        r.schedule("learn", &mut learn);
        r.schedule("recall", &mut recall);
        let schedule = match stage {
            Stage::Learn => learn,
            Stage::Recall => recall,
        };

        let mut model = ModelConfig::desk();
        let e = &mut model.encoder;
        r.get("encoder.patch_size", &mut e.patch_size);
        r.get("encoder.embed_dim", &mut e.embed_dim);
        r.get("encoder.depth", &mut e.depth);
        r.get("encoder.heads", &mut e.heads);
        r.get("encoder.mlp_ratio", &mut e.mlp_ratio);
        r.get("encoder.dma_layers", &mut e.dma_layers);
        r.get("encoder.dma_down_dim", &mut e.dma_down_dim);
        r.get("encoder.tap_layers", &mut e.tap_layers);
        r.get("encoder.pos_grid", &mut e.pos_grid);
        r.get("decoder.dim", &mut model.decoder.dim);
        r.get("decoder.kernel", &mut model.decoder.kernel);
        let p = &mut model.ipr;
        r.get("ipr.latent_dim", &mut p.latent_dim);
        r.get("ipr.heads", &mut p.heads);
        r.get("ipr.proto_tokens", &mut p.proto_tokens);
        r.get("ipr.graph_nodes", &mut p.graph_nodes);

        let mut clustering = ClusteringConfig {
            seed,
            ..ClusteringConfig::default()
        };
        r.get("clustering.backend", &mut clustering.backend);
        r.get(
            "clustering.min_cluster_size",
            &mut clustering.min_cluster_size,
        );
        r.get("clustering.min_samples", &mut clustering.min_samples);
        r.get("clustering.eps", &mut clustering.eps);
        r.get("clustering.k", &mut clustering.k);
        r.get("clustering.seed", &mut clustering.seed);

        let mut data = DataGen {
            train_count: 8,
            test_count: 8,
            exclude_train: Vec::new(),
            synth: SynthConfig {
                seed,
                canvas: input_size,
                ..SynthConfig::default()
            },
        };
        r.get("synth.train_count", &mut data.train_count);
        r.get("synth.test_count", &mut data.test_count);
        r.get("synth.exclude_train", &mut data.exclude_train);
        let s = &mut data.synth;
        r.get("synth.blend_alpha", &mut s.blend_alpha);
        r.get("synth.object_scale", &mut s.object_scale);
        r.get("synth.object_count", &mut s.object_count);
        r.get("synth.brightness", &mut s.brightness);
        r.get("synth.texture", &mut s.texture);
        r.get("synth.occlusion_prob", &mut s.occlusion_prob);
        r.get("synth.edge_softness", &mut s.edge_softness);

        let path = |r: &mut Reader, key: &str, default: &str| {
            r.opt(key).unwrap_or_else(|| out.join(default))
        };
        let paths = Paths {
            stage1_checkpoint: path(&mut r, "paths.stage1_checkpoint", "stage1.rmck"),
            bank: path(&mut r, "paths.bank", "memory.rmem"),
            stage2_checkpoint: path(&mut r, "paths.stage2_checkpoint", "stage2.rmck"),
            stage2_bank: path(&mut r, "paths.stage2_bank", "memory-recall.rmem"),
            predictions: path(&mut r, "paths.predictions", "predictions"),
            report: path(&mut r, "paths.report", "report.txt"),
            logs: path(&mut r, "paths.logs", "logs"),
        };

        for k in settings.values.keys() {
            if !r.used.contains(k.as_str()) {
                r.errors.push(format!("unknown key {k}"));
            }
        }
        let mut errors = r.errors;
        let size_ok = input_size >= 16 && input_size.is_multiple_of(16);
        if !size_ok {
            errors.push(format!(
                "data.input_size = {input_size} must be a positive multiple of 16"
            ));
        } else if !input_size.is_multiple_of(model.encoder.patch_size.max(1)) {
            errors.push(format!(
                "data.input_size = {input_size} is not divisible by encoder.patch_size = {}",
                model.encoder.patch_size
            ));
        }
        let mut checks = vec![schedule.validate(), model.validate(), clustering.validate()];
        if size_ok {
            checks.push(data.synth.validate());
        }
        errors.extend(
            checks
                .into_iter()
                .filter_map(|c| c.err())
                .map(|e| e.to_string()),
        );
        if data.train_count == 0 {
            errors.push("synth.train_count must be ≥ 1".into());
        }
        if !errors.is_empty() {
            return Err(Error::Config(errors));
        }
        Ok(Self {
            stage,
            seed,
            out,
            manifest,
            input_size,
            schedule,
            model,
            clustering,
            data,
            paths,
        })
    }
}
