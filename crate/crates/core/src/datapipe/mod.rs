//! Dataset files, preprocessing of sparse observation records, and splits.
//!
//! A dataset file is UTF-8 JSON Lines. The first line is a [`Header`]; every
//! following line is one [`Record`]:
//!
//! ```text
//! {"format_version":1,"schema":{...},"T":30,"d":3,"task":"regression","metadata":{...}}
//! {"id":"train-0","x":[[0.0,12.5,0.0],...],"y":[3.1,...]}
//! {"id":"train-1","x":[[...],...],"y":[...],"mask":[[0,1,0],...]}
//! ```
//!
//! Regression targets cover the last `len(y)` steps of the sequence;
//! classification records carry a single 0/1 label. Numbers are written with
//! shortest round-trip formatting, so `save(load(file))` reproduces the file
//! byte for byte.

mod raw;
mod split;

pub use raw::{
    encode, encoded_columns, impute_carry_forward, load_raw, prepare, save_raw, EncodeStats,
    FeatureStats, ImputedGrid, Observation, RawDataset, RawHeader, RawRecord, RawValue,
};
pub use split::{split, subsample, SplitSpec, Splits};

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Task;

/// Dataset file format understood by this build.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Categorical,
}

/// One raw input variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    /// Vocabulary of a categorical feature, in one-hot order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    /// Value used before the first observation. Continuous features without a
    /// default fall back to the training mean; categorical ones to all zeros.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<RawValue>,
}

impl FeatureSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Continuous,
            categories: Vec::new(),
            default: None,
        }
    }

    pub fn categorical(name: impl Into<String>, categories: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical,
            categories: categories.iter().map(|c| c.to_string()).collect(),
            default: None,
        }
    }

    pub fn with_default(mut self, v: RawValue) -> Self {
        self.default = Some(v);
        self
    }

    /// Number of encoded value columns (mask excluded).
    pub fn width(&self) -> usize {
        match self.kind {
            FeatureKind::Continuous => 1,
            FeatureKind::Categorical => self.categories.len(),
        }
    }
}

/// Raw features plus the names of the `d` encoded columns of `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureSpec>,
    pub columns: Vec<String>,
}

impl Schema {
    /// Schema whose columns are the continuous features themselves.
    pub fn plain(names: impl IntoIterator<Item = String>) -> Self {
        let features: Vec<FeatureSpec> = names.into_iter().map(FeatureSpec::continuous).collect();
        let columns = features.iter().map(|f| f.name.clone()).collect();
        Self { features, columns }
    }
}

/// Standardization statistics for one continuous feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: f64,
    pub scale: f64,
}

/// Provenance attached to a dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule_id: Option<usize>,
    /// `train`, `val` or `test`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    /// Lag window of the synthetic generator; targets start at step `lag + 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lag: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<BTreeMap<String, usize>>,
    /// Decision threshold of a labelized regression task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Fraction of positive labels in this split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_balance: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub normalization: BTreeMap<String, Normalization>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

/// First line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub schema: Schema,
    #[serde(rename = "T")]
    pub t_len: usize,
    pub d: usize,
    pub task: Task,
    pub metadata: Metadata,
}

impl Header {
    pub fn new(schema: Schema, t_len: usize, task: Task, metadata: Metadata) -> Self {
        let d = schema.columns.len();
        Self {
            format_version: FORMAT_VERSION,
            schema,
            t_len,
            d,
            task,
            metadata,
        }
    }
}

/// Per-example target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    /// Regression targets for the last `len` steps.
    Sequence(Vec<f64>),
    Label(u8),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    /// `T x d` inputs.
    pub x: Vec<Vec<f64>>,
    pub y: Target,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<Vec<Vec<u8>>>,
}

impl Record {
    pub fn label(&self) -> Option<u8> {
        match self.y {
            Target::Label(l) => Some(l),
            Target::Sequence(_) => None,
        }
    }

    pub fn targets(&self) -> Option<&[f64]> {
        match &self.y {
            Target::Sequence(v) => Some(v),
            Target::Label(_) => None,
        }
    }
}

/// A header plus its records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: Header,
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn new(header: Header, records: Vec<Record>) -> Result<Self> {
        let ds = Self { header, records };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn t_len(&self) -> usize {
        self.header.t_len
    }

    pub fn d(&self) -> usize {
        self.header.d
    }

    pub fn task(&self) -> Task {
        self.header.task
    }

    /// Labels of a classification dataset.
    pub fn labels(&self) -> Result<Vec<u8>> {
        self.records
            .iter()
            .map(|r| {
                r.label()
                    .ok_or_else(|| Error::invalid(format!("record {} has no class label", r.id)))
            })
            .collect()
    }

    /// Length shared by all regression target vectors (0 for an empty set).
    pub fn target_len(&self) -> usize {
        self.records
            .first()
            .and_then(|r| r.targets())
            .map_or(0, |y| y.len())
    }

    /// Records at `indices`, same header.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            header: self.header.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    /// Checks every record against the header.
    pub fn validate(&self) -> Result<()> {
        let h = &self.header;
        if h.format_version != FORMAT_VERSION {
            return Err(Error::format(format!(
                "unsupported format version {}",
                h.format_version
            )));
        }
        if h.t_len == 0 || h.d == 0 {
            return Err(Error::format("T and d must be positive"));
        }
        if h.schema.columns.len() != h.d {
            return Err(Error::format(format!(
                "schema lists {} columns but d = {}",
                h.schema.columns.len(),
                h.d
            )));
        }
        let mut seen = HashSet::new();
        let mut target_len = None;
        for r in &self.records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::format(format!("duplicate id {}", r.id)));
            }
            check_grid(&r.id, "x", &r.x, h.t_len, h.d)?;
            if r.x.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::format(format!("record {}: non-finite input", r.id)));
            }
            if let Some(m) = &r.mask {
                check_grid(&r.id, "mask", m, h.t_len, h.d)?;
                if m.iter().flatten().any(|&v| v > 1) {
                    return Err(Error::format(format!(
                        "record {}: mask entries must be 0 or 1",
                        r.id
                    )));
                }
            }
            match (&r.y, h.task) {
                (Target::Sequence(y), Task::Regression) => {
                    if y.is_empty() || y.len() > h.t_len {
                        return Err(Error::format(format!(
                            "record {}: {} targets for T = {}",
                            r.id,
                            y.len(),
                            h.t_len
                        )));
                    }
                    if *target_len.get_or_insert(y.len()) != y.len() {
                        return Err(Error::format(format!(
                            "record {}: target length differs from earlier records",
                            r.id
                        )));
                    }
                    if y.iter().any(|v| !v.is_finite()) {
                        return Err(Error::format(format!("record {}: non-finite target", r.id)));
                    }
                }
                (Target::Label(l), Task::Classification) if *l <= 1 => {}
                (Target::Label(l), Task::Classification) => {
                    return Err(Error::format(format!(
                        "record {}: label {l} is not 0 or 1",
                        r.id
                    )));
                }
                _ => {
                    return Err(Error::format(format!(
                        "record {}: target does not match task {}",
                        r.id, h.task
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn to_writer<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.to_writer(&mut buf).expect("writing to memory");
        buf
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header: Header = loop {
            match lines.next() {
                None => return Err(Error::format("missing header line")),
                Some((_, line)) => {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let value: serde_json::Value = serde_json::from_str(&line)
                        .map_err(|e| Error::format(format!("line 1: {e}")))?;
                    if let Some(v) = value.get("format_version").and_then(|v| v.as_u64()) {
                        if v != FORMAT_VERSION as u64 {
                            return Err(Error::format(format!("unsupported format version {v}")));
                        }
                    }
                    break serde_json::from_str(&line)
                        .map_err(|e| Error::format(format!("line 1: bad header: {e}")))?;
                }
            }
        };
        let mut records = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line)
                .map_err(|e| Error::format(format!("line {}: {e}", i + 1)))?;
            records.push(rec);
        }
        Dataset::new(header, records)
    }
}

fn check_grid<T>(id: &str, what: &str, grid: &[Vec<T>], t_len: usize, d: usize) -> Result<()> {
    if grid.len() != t_len {
        return Err(Error::format(format!(
            "record {id}: {what} has {} rows, expected T = {t_len}",
            grid.len()
        )));
    }
    if let Some(row) = grid.iter().find(|r| r.len() != d) {
        return Err(Error::format(format!(
            "record {id}: {what} row has {} columns, expected d = {d}",
            row.len()
        )));
    }
    Ok(())
}

/// Reads a dataset file.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = File::open(path.as_ref())?;
    Dataset::from_reader(BufReader::new(file))
}

/// Writes a dataset file, replacing any existing one.
pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    if let Some(parent) = path.as_ref().parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    ds.to_writer(BufWriter::new(File::create(path.as_ref())?))
}
