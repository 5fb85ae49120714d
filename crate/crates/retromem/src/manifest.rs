//! Dataset manifests: one scene per line with pattern and split tags.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use retromem_core::synth::PatternTag;

use crate::error::{Error, Result};
use crate::fsutil;

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const RARE_THRESHOLD: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SplitTag {
    Seen,
    Unseen,
    Rare,
    Train,
}

impl SplitTag {
    pub const ALL: [SplitTag; 4] = [
        SplitTag::Seen,
        SplitTag::Unseen,
        SplitTag::Rare,
        SplitTag::Train,
    ];
    /// Splits reported by evaluation.
    pub const TEST: [SplitTag; 3] = [SplitTag::Seen, SplitTag::Unseen, SplitTag::Rare];

    pub fn name(self) -> &'static str {
        match self {
            SplitTag::Seen => "seen",
            SplitTag::Unseen => "unseen",
            SplitTag::Rare => "rare",
            SplitTag::Train => "train",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == s)
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SceneRecord {
    pub id: String,
    /// Relative paths resolve against the manifest's directory.
    pub image: PathBuf,
    pub mask: PathBuf,
    pub pattern: PatternTag,
    pub split: SplitTag,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub records: Vec<SceneRecord>,
}

fn field_ok(s: &str) -> bool {
    !s.is_empty() && !s.contains(['\t', '\n', '\r']) && !s.starts_with('#')
}

impl Manifest {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let fail = |line: usize, reason: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 {
                return Err(fail(
                    line_no,
                    format!("expected 5 tab-separated fields, found {}", cols.len()),
                ));
            }
            let pattern = PatternTag::parse(cols[3]).map_err(|e| fail(line_no, e.to_string()))?;
            let split = SplitTag::parse(cols[4])
                .ok_or_else(|| fail(line_no, format!("unknown split tag {:?}", cols[4])))?;
            records.push(SceneRecord {
                id: cols[0].to_string(),
                image: PathBuf::from(cols[1]),
                mask: PathBuf::from(cols[2]),
                pattern,
                split,
            });
        }
        let m = Self { records };
        m.validate().map_err(|reason| fail(0, reason))?;
        Ok(m)
    }

    /// Ids are unique and every field survives a round trip.
    pub fn validate(&self) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        for r in &self.records {
            if !field_ok(&r.id) || r.id.contains('/') || r.id.trim() != r.id {
                return Err(format!("invalid id {:?}", r.id));
            }
            for p in [&r.image, &r.mask] {
                if !p.to_str().is_some_and(field_ok) {
                    return Err(format!("row {}: invalid path {}", r.id, p.display()));
                }
            }
            if !seen.insert(r.id.as_str()) {
                return Err(format!("duplicate id {}", r.id));
            }
        }
        Ok(())
    }

    pub fn serialize(&self) -> String {
        let mut out = String::from("# id\timage\tmask\tpattern\tsplit\n");
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.id,
                r.image.display(),
                r.mask.display(),
                r.pattern.name(),
                r.split
            ));
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fsutil::read(path)?;
        let text = String::from_utf8(bytes).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            offset: e.utf8_error().valid_up_to(),
            reason: "manifest is not UTF-8".into(),
        })?;
        Self::parse(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.validate().map_err(Error::Usage)?;
        fsutil::atomic_write(path, self.serialize().as_bytes())
    }

    pub fn with_split(&self, split: SplitTag) -> impl Iterator<Item = &SceneRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Rows scored by evaluation: everything not used for training.
    pub fn evaluation_rows(&self) -> Vec<&SceneRecord> {
        self.records
            .iter()
            .filter(|r| r.split != SplitTag::Train)
            .collect()
    }

    pub fn train_rows(&self) -> Vec<&SceneRecord> {
        self.with_split(SplitTag::Train).collect()
    }

    pub fn count(&self, split: SplitTag) -> usize {
        self.with_split(split).count()
    }
}

/// Resolve a manifest path against the manifest's directory.
pub fn resolve(manifest_path: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest_path.parent().unwrap_or(Path::new("")).join(p)
    }
}

/// Pattern counts over a training set.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PatternHistogram {
    pub counts: BTreeMap<PatternTag, usize>,
}

impl PatternHistogram {
    pub fn from_tags(tags: impl IntoIterator<Item = PatternTag>) -> Self {
        let mut counts = BTreeMap::new();
        for t in tags {
            *counts.entry(t).or_insert(0) += 1;
        }
        Self { counts }
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn count(&self, t: PatternTag) -> usize {
        self.counts.get(&t).copied().unwrap_or(0)
    }

    pub fn frequency(&self, t: PatternTag) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.count(t) as f64 / n as f64,
        }
    }

    pub fn split_for(&self, t: PatternTag, threshold: f64) -> SplitTag {
        if self.count(t) == 0 {
            SplitTag::Unseen
        } else if self.frequency(t) < threshold {
            SplitTag::Rare
        } else {
            SplitTag::Seen
        }
    }
}

/// Retag every non-training row from its pattern's training frequency.
pub fn tag_splits(manifest: &mut Manifest, histogram: &PatternHistogram, threshold: f64) {
    for r in &mut manifest.records {
        if r.split != SplitTag::Train {
            r.split = histogram.split_for(r.pattern, threshold);
        }
    }
}

/// Assemble a checked manifest, tagging test rows against `histogram`.
pub fn build_manifest(records: Vec<SceneRecord>, histogram: &PatternHistogram) -> Result<Manifest> {
    let mut m = Manifest { records };
    m.validate().map_err(Error::Usage)?;
    tag_splits(&mut m, histogram, RARE_THRESHOLD);
    Ok(m)
}
