//! Per-split evaluation of stored predictions against manifest masks.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use retromem_core::metrics::{evaluate, MetricReport};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::manifest::{resolve, Manifest, SplitTag};
use crate::netpbm::Netpbm;
use crate::threads::par_map;

#[derive(Clone, Debug, PartialEq)]
pub struct RowScore {
    pub id: String,
    pub split: SplitTag,
    pub metrics: MetricReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitSummary {
    /// `None` for the overall row.
    pub split: Option<SplitTag>,
    pub count: usize,
    pub metrics: MetricReport,
}

impl SplitSummary {
    pub fn label(&self) -> &'static str {
        self.split.map_or("overall", SplitTag::name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub rows: Vec<RowScore>,
    /// Non-empty test splits in `seen, unseen, rare` order.
    pub splits: Vec<SplitSummary>,
    pub overall: SplitSummary,
    pub omitted: Vec<SplitTag>,
}

pub fn prediction_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.pgm"))
}

/// Dequantized single-channel map as `(values, h, w)`.
fn gray(img: &Netpbm, path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    if img.channels != 1 {
        return Err(Error::Usage(format!(
            "{}: expected a single-channel PGM",
            path.display()
        )));
    }
    Ok((
        img.pixels.iter().map(|&v| v as f64 / 255.0).collect(),
        img.height,
        img.width,
    ))
}

pub fn score_files(pred: &Path, mask: &Path) -> Result<MetricReport> {
    let (p, h, w) = gray(&Netpbm::read(pred)?, pred)?;
    let (g, gh, gw) = gray(&Netpbm::read(mask)?, mask)?;
    if (h, w) != (gh, gw) {
        return Err(Error::Usage(format!(
            "{} is {w}×{h} but its mask {} is {gw}×{gh}",
            pred.display(),
            mask.display()
        )));
    }
    Ok(evaluate(&p, &g, h, w))
}

/// Score every test row of the manifest at `manifest_path` against
/// `pred_dir/<id>.pgm`.
pub fn evaluate_split(
    pred_dir: &Path,
    manifest: &Manifest,
    manifest_path: &Path,
) -> Result<Evaluation> {
    let rows = manifest.evaluation_rows();
    if rows.is_empty() {
        return Err(Error::Usage(
            "manifest has no seen, unseen or rare rows to evaluate".into(),
        ));
    }
    let missing: Vec<String> = rows
        .iter()
        .filter(|r| !prediction_path(pred_dir, &r.id).is_file())
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingPredictions(missing));
    }
    let scores = par_map(&rows, |r| {
        let metrics = score_files(
            &prediction_path(pred_dir, &r.id),
            &resolve(manifest_path, &r.mask),
        )?;
        Ok(RowScore {
            id: r.id.clone(),
            split: r.split,
            metrics,
        })
    })?;
    let summarize = |split: Option<SplitTag>| {
        let chosen: Vec<MetricReport> = scores
            .iter()
            .filter(|s| split.is_none_or(|t| s.split == t))
            .map(|s| s.metrics)
            .collect();
        SplitSummary {
            split,
            count: chosen.len(),
            metrics: MetricReport::mean(&chosen),
        }
    };
    let mut splits = Vec::new();
    let mut omitted = Vec::new();
    for t in SplitTag::TEST {
        let s = summarize(Some(t));
        if s.count == 0 {
            omitted.push(t);
        } else {
            splits.push(s);
        }
    }
    Ok(Evaluation {
        overall: summarize(None),
        rows: scores,
        splits,
        omitted,
    })
}

impl Evaluation {
    pub fn summaries(&self) -> impl Iterator<Item = &SplitSummary> {
        self.splits.iter().chain(std::iter::once(&self.overall))
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<8} {:>5} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
            "split", "n", "S_alpha", "E_m", "F_w", "F_adp", "MAE"
        );
        for s in self.summaries() {
            let m = &s.metrics;
            let _ = writeln!(
                out,
                "{:<8} {:>5} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                s.label(),
                s.count,
                m.s_alpha,
                m.e_m,
                m.f_w,
                m.f_adp,
                m.mae
            );
        }
        for t in &self.omitted {
            let _ = writeln!(out, "note: split {t} has no rows and is omitted");
        }
        out
    }

    /// `split metric value` lines followed by a `[summary]` block.
    pub fn report(&self) -> String {
        let mut out = String::from("# split metric value\n");
        for s in self.summaries() {
            for (name, v) in MetricReport::NAMES.iter().zip(s.metrics.values()) {
                let _ = writeln!(out, "{} {name} {v:?}", s.label());
            }
        }
        out.push_str("[summary]\n");
        let _ = writeln!(out, "rows = {}", self.overall.count);
        for s in &self.splits {
            let _ = writeln!(out, "{} = {}", s.label(), s.count);
        }
        let omitted: Vec<&str> = self.omitted.iter().map(|t| t.name()).collect();
        let _ = writeln!(
            out,
            "omitted = {}",
            if omitted.is_empty() {
                "none".into()
            } else {
                omitted.join(",")
            }
        );
        out
    }

    pub fn write_report(&self, path: &Path) -> Result<()> {
        fsutil::atomic_write(path, self.report().as_bytes())
    }
}

/// Parse the `split metric value` records of a report file.
pub fn parse_report(text: &str) -> Vec<(String, String, f64)> {
    text.lines()
        .take_while(|l| !l.starts_with('['))
        .filter(|l| !l.starts_with('#'))
        .filter_map(|l| {
            let mut it = l.split_whitespace();
            let (s, m, v) = (it.next()?, it.next()?, it.next()?.parse().ok()?);
            Some((s.to_string(), m.to_string(), v))
        })
        .collect()
}
