//! Sparse observation records and their conversion to dense hourly grids.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::split::split_indices;
use super::{
    Dataset, FeatureKind, FeatureSpec, Header, Metadata, Normalization, Record, Schema, SplitSpec,
    Splits, Target,
};
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::Task;

/// Scale floor used when standardizing.
const SCALE_FLOOR: f64 = 1e-8;

/// Observed value: a number for continuous features, a category name for
/// categorical ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawValue {
    Number(f64),
    Category(String),
}

/// `(step, feature name, value)`, step 1-indexed. Serialized as a 3-element array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub usize, pub String, pub RawValue);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub observations: Vec<Observation>,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawHeader {
    pub format_version: u32,
    pub kind: String,
    pub features: Vec<FeatureSpec>,
    #[serde(rename = "T")]
    pub t_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub header: RawHeader,
    pub records: Vec<RawRecord>,
}

/// Carry-forward result for one record: `values[t][f]` is `None` only before
/// the first observation of a feature without a declared default.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputedGrid {
    pub values: Vec<Vec<Option<RawValue>>>,
    /// 1 where feature `f` was not observed at step `t`.
    pub mask: Vec<Vec<u8>>,
}

/// Fills a `T x features` grid with the latest observation at or before each
/// step. Several observations of one feature at one step: the last listed wins.
pub fn impute_carry_forward(
    record: &RawRecord,
    features: &[FeatureSpec],
    t_len: usize,
) -> Result<ImputedGrid> {
    let index: HashMap<&str, usize> = features
        .iter()
        .enumerate()
        .map(|(i, f)| (f.name.as_str(), i))
        .collect();
    let mut observed: Vec<Vec<Option<&RawValue>>> = vec![vec![None; features.len()]; t_len];
    for Observation(step, name, value) in &record.observations {
        let f = *index.get(name.as_str()).ok_or_else(|| {
            Error::format(format!("record {}: unknown feature {name}", record.id))
        })?;
        if *step < 1 || *step > t_len {
            return Err(Error::format(format!(
                "record {}: step {step} outside 1..={t_len}",
                record.id
            )));
        }
        match (features[f].kind, value) {
            (FeatureKind::Continuous, RawValue::Number(v)) if v.is_finite() => {}
            (FeatureKind::Categorical, RawValue::Category(_)) => {}
            _ => {
                return Err(Error::format(format!(
                    "record {}: bad value {value:?} for feature {name}",
                    record.id
                )))
            }
        }
        observed[step - 1][f] = Some(value);
    }
    let mut values = vec![vec![None; features.len()]; t_len];
    let mut mask = vec![vec![1u8; features.len()]; t_len];
    for (f, spec) in features.iter().enumerate() {
        let mut last: Option<RawValue> = spec.default.clone();
        for t in 0..t_len {
            if let Some(v) = observed[t][f] {
                last = Some(v.clone());
                mask[t][f] = 0;
            }
            values[t][f] = last.clone();
        }
    }
    Ok(ImputedGrid { values, mask })
}

/// Training-split statistics of one continuous feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub scale: f64,
}

/// Statistics for every continuous feature, keyed by name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EncodeStats {
    pub features: BTreeMap<String, FeatureStats>,
}

impl EncodeStats {
    /// Mean and population standard deviation of the *observed* cells of
    /// each continuous feature (carried and defaulted cells excluded).
    pub fn from_grids(grids: &[ImputedGrid], features: &[FeatureSpec]) -> Self {
        let mut out = BTreeMap::new();
        for (f, spec) in features.iter().enumerate() {
            if spec.kind != FeatureKind::Continuous {
                continue;
            }
            let vals: Vec<f64> = grids
                .iter()
                .flat_map(|g| {
                    g.values
                        .iter()
                        .zip(&g.mask)
                        .filter(|(_, m)| m[f] == 0)
                        .map(move |(v, _)| &v[f])
                })
                .filter_map(|v| match v {
                    Some(RawValue::Number(x)) => Some(*x),
                    _ => None,
                })
                .collect();
            let stats = if vals.is_empty() {
                warn!(
                    "feature {} is never observed in the training split; using mean 0, scale 1",
                    spec.name
                );
                FeatureStats {
                    mean: 0.0,
                    scale: 1.0,
                }
            } else {
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                FeatureStats {
                    mean,
                    scale: var.sqrt().max(SCALE_FLOOR),
                }
            };
            out.insert(spec.name.clone(), stats);
        }
        Self { features: out }
    }
}

/// Encoded column names: values (continuous as-is, categorical as
/// `name=category`) followed by one `name:mask` channel per raw feature.
pub fn encoded_columns(features: &[FeatureSpec]) -> Vec<String> {
    let mut cols = Vec::new();
    for f in features {
        match f.kind {
            FeatureKind::Continuous => cols.push(f.name.clone()),
            FeatureKind::Categorical => {
                cols.extend(f.categories.iter().map(|c| format!("{}={c}", f.name)))
            }
        }
    }
    cols.extend(features.iter().map(|f| format!("{}:mask", f.name)));
    cols
}

/// Encodes a grid into `T x d'` rows: standardized continuous values, one-hot
/// categories, then mask channels. A continuous cell with no value (before
/// the first observation, no default) takes the training mean, i.e. encodes
/// to 0. An unknown category encodes to all zeros.
pub fn encode(
    grid: &ImputedGrid,
    features: &[FeatureSpec],
    stats: &EncodeStats,
) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::with_capacity(grid.values.len());
    for (vals, mask) in grid.values.iter().zip(&grid.mask) {
        let mut row = Vec::new();
        for (f, spec) in features.iter().enumerate() {
            match spec.kind {
                FeatureKind::Continuous => {
                    let st = stats.features.get(&spec.name).ok_or_else(|| {
                        Error::invalid(format!(
                            "no statistics for continuous feature {}",
                            spec.name
                        ))
                    })?;
                    let v = match &vals[f] {
                        Some(RawValue::Number(x)) => *x,
                        None => st.mean,
                        Some(other) => {
                            return Err(Error::format(format!(
                                "feature {}: expected a number, got {other:?}",
                                spec.name
                            )))
                        }
                    };
                    row.push((v - st.mean) / st.scale.max(SCALE_FLOOR));
                }
                FeatureKind::Categorical => {
                    let mut hot = vec![0.0; spec.categories.len()];
                    match &vals[f] {
                        Some(RawValue::Category(c)) => {
                            match spec.categories.iter().position(|k| k == c) {
                                Some(j) => hot[j] = 1.0,
                                None => warn!(
                                    "feature {}: unknown category {c:?} encoded as all zeros",
                                    spec.name
                                ),
                            }
                        }
                        None => {}
                        Some(other) => {
                            return Err(Error::format(format!(
                                "feature {}: expected a category, got {other:?}",
                                spec.name
                            )))
                        }
                    }
                    row.extend(hot);
                }
            }
        }
        row.extend(mask.iter().map(|&m| m as f64));
        rows.push(row);
    }
    Ok(rows)
}

/// Splits raw records, derives statistics from the training split and
/// encodes every split into a classification dataset.
pub fn prepare(raw: &RawDataset, spec: &SplitSpec, rng: &mut Rng) -> Result<Splits> {
    let features = &raw.header.features;
    let t_len = raw.header.t_len;
    let grids: Vec<ImputedGrid> = raw
        .records
        .iter()
        .map(|r| impute_carry_forward(r, features, t_len))
        .collect::<Result<_>>()?;
    let ids: Vec<&str> = raw.records.iter().map(|r| r.id.as_str()).collect();
    let split_seed = rng.seed();
    let parts = split_indices(&ids, spec, rng)?;
    let train_grids: Vec<ImputedGrid> = parts[0].iter().map(|&i| grids[i].clone()).collect();
    let stats = EncodeStats::from_grids(&train_grids, features);
    let schema = Schema {
        features: features.clone(),
        columns: encoded_columns(features),
    };
    let sizes: BTreeMap<String, usize> = ["train", "val", "test"]
        .iter()
        .zip(&parts)
        .map(|(n, p)| (n.to_string(), p.len()))
        .collect();
    let make = |name: &str, idx: &[usize]| -> Result<Dataset> {
        let records = idx
            .iter()
            .map(|&i| {
                let r = &raw.records[i];
                Ok(Record {
                    id: r.id.clone(),
                    x: encode(&grids[i], features, &stats)?,
                    y: Target::Label(r.label),
                    mask: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let positives = records.iter().filter(|r| r.label() == Some(1)).count();
        let mut meta = Metadata {
            split: Some(name.to_string()),
            sizes: Some(sizes.clone()),
            label_balance: (!records.is_empty()).then(|| positives as f64 / records.len() as f64),
            normalization: stats
                .features
                .iter()
                .map(|(k, s)| {
                    (
                        k.clone(),
                        Normalization {
                            mean: s.mean,
                            scale: s.scale,
                        },
                    )
                })
                .collect(),
            ..Default::default()
        };
        meta.extra.insert("split_seed".into(), split_seed.into());
        Dataset::new(
            Header::new(schema.clone(), t_len, Task::Classification, meta),
            records,
        )
    };
    Ok(Splits {
        train: make("train", &parts[0])?,
        val: make("val", &parts[1])?,
        test: make("test", &parts[2])?,
    })
}

impl RawDataset {
    pub fn validate(&self) -> Result<()> {
        if self.header.kind != "raw" {
            return Err(Error::format(format!(
                "expected a raw dataset, header kind is {:?}",
                self.header.kind
            )));
        }
        if self.header.format_version != super::FORMAT_VERSION {
            return Err(Error::format(format!(
                "unsupported format version {}",
                self.header.format_version
            )));
        }
        for f in &self.header.features {
            if let Some(d) = &f.default {
                let ok = matches!(
                    (f.kind, d),
                    (FeatureKind::Continuous, RawValue::Number(_))
                        | (FeatureKind::Categorical, RawValue::Category(_))
                );
                if !ok {
                    return Err(Error::format(format!(
                        "feature {}: default {d:?} does not match its kind",
                        f.name
                    )));
                }
            }
        }
        for r in &self.records {
            if r.label > 1 {
                return Err(Error::format(format!(
                    "record {}: label {} is not 0 or 1",
                    r.id, r.label
                )));
            }
        }
        Ok(())
    }
}

pub fn load_raw(path: impl AsRef<Path>) -> Result<RawDataset> {
    let reader = BufReader::new(File::open(path.as_ref())?);
    let mut header: Option<RawHeader> = None;
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |e: serde_json::Error| Error::format(format!("line {}: {e}", i + 1));
        if header.is_none() {
            header = Some(serde_json::from_str(&line).map_err(err)?);
        } else {
            records.push(serde_json::from_str(&line).map_err(err)?);
        }
    }
    let header = header.ok_or_else(|| Error::format("missing header line"))?;
    let ds = RawDataset { header, records };
    ds.validate()?;
    Ok(ds)
}

pub fn save_raw(ds: &RawDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    serde_json::to_writer(&mut w, &ds.header)?;
    w.write_all(b"\n")?;
    for r in &ds.records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
