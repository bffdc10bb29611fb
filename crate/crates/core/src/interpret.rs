//! Input-gradient saliency and grouped, windowed permutation importance.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datapipe::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{aggregate_score, auroc, check_compatible};
use crate::models::{Batch, Model};
use crate::numerics::{softmax_slice, Rng};
use crate::Task;

pub const DEFAULT_WINDOW: usize = 12;
pub const DEFAULT_CORRELATION: f64 = 0.95;

const CHUNK: usize = 256;

/// Input gradients of the aggregated target-class score, summed over examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    /// `values[t][i]`.
    pub values: Vec<Vec<f64>>,
    pub features: Vec<String>,
    pub n_examples: usize,
    pub target_class: u8,
}

impl SaliencyMap {
    pub fn t_len(&self) -> usize {
        self.values.len()
    }

    pub fn d(&self) -> usize {
        self.features.len()
    }

    /// One row per step, one column per feature.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for f in &self.features {
            let _ = write!(s, ",{f}");
        }
        s.push('\n');
        for (t, row) in self.values.iter().enumerate() {
            let _ = write!(s, "{}", t + 1);
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

fn column_names(data: &Dataset) -> Vec<String> {
    let cols = &data.header.schema.columns;
    if cols.len() == data.d() {
        cols.clone()
    } else {
        (1..=data.d()).map(|i| format!("x{i}")).collect()
    }
}

fn require_classifier(model: &Model, data: &Dataset) -> Result<()> {
    if model.spec().task != Task::Classification {
        return Err(Error::invalid(
            "interpretation is defined for classification models only",
        ));
    }
    check_compatible(model, data)?;
    if data.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    Ok(())
}

/// Sums, over examples, the gradient of `max_t P(target_class | x, t)` with
/// respect to every input cell. The max is differentiated at its earliest
/// argmax step.
pub fn gradient_saliency(model: &Model, data: &Dataset, target_class: u8) -> Result<SaliencyMap> {
    require_classifier(model, data)?;
    if target_class > 1 {
        return Err(Error::invalid("target class must be 0 or 1"));
    }
    let (t_len, d) = (model.spec().t_len, model.spec().input_dim);
    let c = target_class as usize;
    let mut values = vec![vec![0.0; d]; t_len];
    let mut scratch = vec![0.0; model.parameter_count()];
    for chunk in data.records.chunks(CHUNK) {
        let xs: Vec<&[Vec<f64>]> = chunk.iter().map(|r| r.x.as_slice()).collect();
        let n = xs.len();
        let batch = Batch::from_sequences(model, &xs);
        let fp = model.forward_batch(&batch);
        let mut d_out = vec![0.0; fp.out.len()];
        let mut p = [0.0; 2];
        for b in 0..n {
            let mut best = (0, f64::NEG_INFINITY, [0.0; 2]);
            for t in 0..t_len {
                let idx = (t * n + b) * 2;
                softmax_slice(&fp.out[idx..idx + 2], &mut p);
                if p[c] > best.1 {
                    best = (t, p[c], p);
                }
            }
            let (t, pc, probs) = best;
            let idx = (t * n + b) * 2;
            for j in 0..2 {
                d_out[idx + j] = pc * (if j == c { 1.0 } else { 0.0 } - probs[j]);
            }
        }
        let mut d_x = vec![0.0; t_len * n * d];
        model.backward_batch(&batch, &fp, &d_out, &mut scratch, Some(&mut d_x));
        for (t, row) in values.iter_mut().enumerate() {
            for b in 0..n {
                let src = &d_x[(t * n + b) * d..(t * n + b + 1) * d];
                row.iter_mut().zip(src).for_each(|(a, v)| *a += v);
            }
        }
    }
    Ok(SaliencyMap {
        values,
        features: column_names(data),
        n_examples: data.len(),
        target_class,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Positive total gradient: raises the target-class score.
    Risk,
    Protective,
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Rising,
    Falling,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRank {
    pub feature: usize,
    pub name: String,
    pub importance: f64,
    pub direction: Direction,
    /// Sign of (mean over the late half − mean over the early half).
    pub trend: Trend,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Risk => "risk",
            Direction::Protective => "protective",
            Direction::Neutral => "neutral",
        }
    }
}

impl Trend {
    pub fn as_str(self) -> &'static str {
        match self {
            Trend::Rising => "rising",
            Trend::Falling => "falling",
            Trend::Flat => "flat",
        }
    }
}

impl FeatureRank {
    /// "risk/amplifying", "protective/diminishing", ...; the effect amplifies
    /// when the trend moves in the direction of the effect.
    pub fn coding(&self) -> String {
        let change = match (self.direction, self.trend) {
            (_, Trend::Flat) | (Direction::Neutral, _) => "steady",
            (Direction::Risk, Trend::Rising) | (Direction::Protective, Trend::Falling) => {
                "amplifying"
            }
            _ => "diminishing",
        };
        format!("{}/{change}", self.direction.as_str())
    }
}

fn sign_of<T>(v: f64, pos: T, neg: T, zero: T) -> T {
    if v > 0.0 {
        pos
    } else if v < 0.0 {
        neg
    } else {
        zero
    }
}

/// Features ordered by `|Σ_t map[t][i]|`, descending; ties keep feature order.
pub fn rank_features(map: &SaliencyMap) -> Vec<FeatureRank> {
    let t_len = map.t_len();
    let half = t_len / 2;
    let col_mean = |i: usize, rows: std::ops::Range<usize>| {
        let n = rows.len() as f64;
        rows.map(|t| map.values[t][i]).sum::<f64>() / n
    };
    let mut ranks: Vec<FeatureRank> = (0..map.d())
        .map(|i| {
            let total: f64 = map.values.iter().map(|row| row[i]).sum();
            let trend = if half == 0 {
                Trend::Flat
            } else {
                let diff = col_mean(i, t_len - half..t_len) - col_mean(i, 0..half);
                sign_of(diff, Trend::Rising, Trend::Falling, Trend::Flat)
            };
            FeatureRank {
                feature: i,
                name: map.features[i].clone(),
                importance: total.abs(),
                direction: sign_of(
                    total,
                    Direction::Risk,
                    Direction::Protective,
                    Direction::Neutral,
                ),
                trend,
            }
        })
        .collect();
    ranks.sort_by(|a, b| {
        b.importance
            .total_cmp(&a.importance)
            .then(a.feature.cmp(&b.feature))
    });
    ranks
}

pub fn ranking_csv(ranks: &[FeatureRank]) -> String {
    let mut s = String::from("rank,feature,importance,direction,trend,coding\n");
    for (r, f) in ranks.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r + 1,
            f.name,
            f.importance,
            f.direction.as_str(),
            f.trend.as_str(),
            f.coding()
        );
    }
    s
}

/// Pearson correlation; 0 when either side has zero variance.
fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut j = i;
    while parent[j] != r {
        let next = parent[j];
        parent[j] = r;
        j = next;
    }
    r
}

/// Partitions the features so that any pair with `|r| >= threshold` over all
/// (example, step) cells ends up in the same group. Groups are ordered by
/// their smallest member.
pub fn correlation_groups(data: &Dataset, threshold: f64) -> Result<Vec<Vec<usize>>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid("correlation threshold must lie in (0, 1]"));
    }
    let d = data.d();
    let columns: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            data.records
                .iter()
                .flat_map(|r| r.x.iter().map(move |row| row[i]))
                .collect()
        })
        .collect();
    let mut parent: Vec<usize> = (0..d).collect();
    if !data.is_empty() {
        for i in 0..d {
            for j in i + 1..d {
                if pearson(&columns[i], &columns[j]).abs() >= threshold {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; d];
    for i in 0..d {
        let root = find(&mut parent, i);
        if slot[root] == usize::MAX {
            slot[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[root]].push(i);
    }
    Ok(groups)
}

/// Half-open step ranges of length `window` tiling `[0, t_len)`; the last may be short.
pub fn windows(t_len: usize, window: usize) -> Result<Vec<(usize, usize)>> {
    if window == 0 {
        return Err(Error::invalid("window must be positive"));
    }
    Ok((0..t_len)
        .step_by(window)
        .map(|s| (s, (s + window).min(t_len)))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationOptions {
    pub window: usize,
    /// Independent permutation draws averaged per cell.
    pub repeats: usize,
    /// Use the identity permutation in every cell.
    pub identity: bool,
}

impl Default for PermutationOptions {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            repeats: 1,
            identity: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub window: usize,
    pub repeats: usize,
    pub seed: u64,
    pub baseline_auroc: f64,
    /// Half-open, 0-based step ranges.
    pub windows: Vec<(usize, usize)>,
    pub groups: Vec<Vec<usize>>,
    pub group_names: Vec<String>,
    /// `delta[g][w]` = baseline AUROC − permuted AUROC.
    pub delta: Vec<Vec<f64>>,
}

impl ImportanceTable {
    /// One row per group, one column per window (1-based inclusive step labels).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("group");
        for (a, b) in &self.windows {
            let _ = write!(s, ",t{}-{}", a + 1, b);
        }
        s.push('\n');
        for (name, row) in self.group_names.iter().zip(&self.delta) {
            s.push_str(name);
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }

    /// Sum of ΔAUROC over windows, per group.
    pub fn totals(&self) -> Vec<f64> {
        self.delta.iter().map(|r| r.iter().sum()).collect()
    }
}

fn check_partition(groups: &[Vec<usize>], d: usize) -> Result<()> {
    let mut seen = vec![false; d];
    for &i in groups.iter().flatten() {
        if i >= d || std::mem::replace(&mut seen[i], true) {
            return Err(Error::invalid("feature groups must partition the columns"));
        }
    }
    if seen.iter().any(|s| !s) || groups.iter().any(|g| g.is_empty()) {
        return Err(Error::invalid("feature groups must partition the columns"));
    }
    Ok(())
}

fn sequence_scores(model: &Model, xs: &[&[Vec<f64>]]) -> Result<Vec<f64>> {
    model
        .scores(xs)?
        .iter()
        .map(|s| aggregate_score(s))
        .collect()
}

/// ΔAUROC table with one permutation draw per cell.
pub fn permutation_importance(
    model: &Model,
    data: &Dataset,
    window: usize,
    groups: &[Vec<usize>],
    rng: &Rng,
) -> Result<ImportanceTable> {
    let opts = PermutationOptions {
        window,
        ..Default::default()
    };
    permutation_importance_with(model, data, &opts, groups, rng)
}

/// For every (group, window) cell, permutes the group's values inside the
/// window across examples as whole blocks (one permutation shared by the
/// group's features and the window's steps) and records the AUROC drop.
pub fn permutation_importance_with(
    model: &Model,
    data: &Dataset,
    opts: &PermutationOptions,
    groups: &[Vec<usize>],
    rng: &Rng,
) -> Result<ImportanceTable> {
    require_classifier(model, data)?;
    check_partition(groups, data.d())?;
    if opts.repeats == 0 {
        return Err(Error::invalid("repeats must be positive"));
    }
    let labels = data.labels()?;
    let xs: Vec<&[Vec<f64>]> = data.records.iter().map(|r| r.x.as_slice()).collect();
    let baseline = auroc(&sequence_scores(model, &xs)?, &labels)?;
    let wins = windows(data.t_len(), opts.window)?;
    let cells: Vec<(usize, usize)> = (0..groups.len())
        .flat_map(|g| (0..wins.len()).map(move |w| (g, w)))
        .collect();
    let n = data.len();
    let deltas: Vec<f64> = cells
        .par_iter()
        .map(|&(g, w)| -> Result<f64> {
            let (start, end) = wins[w];
            let cell_rng = rng.child(&format!("cell/{g}/{w}"));
            let mut total = 0.0;
            for r in 0..opts.repeats {
                let perm = if opts.identity {
                    (0..n).collect()
                } else {
                    cell_rng.child_indexed("draw", r as u64).permutation(n)
                };
                let permuted: Vec<Vec<Vec<f64>>> = (0..n)
                    .map(|b| {
                        let mut x = xs[b].to_vec();
                        for t in start..end {
                            for &i in &groups[g] {
                                x[t][i] = xs[perm[b]][t][i];
                            }
                        }
                        x
                    })
                    .collect();
                let refs: Vec<&[Vec<f64>]> = permuted.iter().map(|x| x.as_slice()).collect();
                total += baseline - auroc(&sequence_scores(model, &refs)?, &labels)?;
            }
            Ok(total / opts.repeats as f64)
        })
        .collect::<Result<_>>()?;
    let names = column_names(data);
    Ok(ImportanceTable {
        window: opts.window,
        repeats: opts.repeats,
        seed: rng.seed(),
        baseline_auroc: baseline,
        windows: wins.clone(),
        groups: groups.to_vec(),
        group_names: groups
            .iter()
            .map(|g| {
                g.iter()
                    .map(|&i| names[i].as_str())
                    .collect::<Vec<_>>()
                    .join("+")
            })
            .collect(),
        delta: deltas.chunks(wins.len()).map(|c| c.to_vec()).collect(),
    })
}
