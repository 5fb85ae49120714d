//! Newline-delimited JSON run records, flushed line by line.

use std::fs::File;
use std::io::{LineWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use retromem_core::decoder::Stage;
use retromem_core::loss::LossReport;
use retromem_core::train::StepRecord;
use serde_json::{json, Map, Value};

use crate::error::{io, Result};

pub struct RunLog {
    out: LineWriter<File>,
    path: PathBuf,
    seq: u64,
    start: Instant,
}

pub fn stage_name(s: Stage) -> &'static str {
    match s {
        Stage::Learn => "learn",
        Stage::Recall => "recall",
    }
}

pub fn loss_json(r: &LossReport) -> Value {
    json!({
        "l_bce": r.l_bce,
        "l_iou": r.l_iou,
        "l_seg": r.l_seg,
        "l_c": r.l_c,
        "total": r.total,
    })
}

impl RunLog {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io(dir))?;
        }
        let file = File::create(path).map_err(io(path))?;
        Ok(Self {
            out: LineWriter::new(file),
            path: path.to_path_buf(),
            seq: 0,
            start: Instant::now(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Append one record; `seq` increases by one per record.
    pub fn record(&mut self, kind: &str, fields: Value) -> Result<()> {
        let mut obj = Map::new();
        obj.insert("seq".into(), json!(self.seq));
        obj.insert("kind".into(), json!(kind));
        obj.insert(
            "elapsed_s".into(),
            json!(self.start.elapsed().as_secs_f64()),
        );
        if let Value::Object(extra) = fields {
            obj.extend(extra);
        }
        self.seq += 1;
        let line = Value::Object(obj).to_string();
        writeln!(self.out, "{line}").map_err(io(&self.path))
    }

    pub fn step(&mut self, r: &StepRecord) -> Result<()> {
        self.record(
            "step",
            json!({
                "stage": stage_name(r.stage),
                "epoch": r.epoch,
                "step": r.step,
                "lr": r.lr,
                "loss": loss_json(&r.report),
            }),
        )
    }
}
