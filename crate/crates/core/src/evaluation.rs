//! Sequence-level scoring, ROC/PR analysis and bootstrap intervals.
//!
//! A sequence is scored by its maximum per-step risk, so thresholding the
//! score is the same as asking whether any step exceeds the threshold.

use std::fmt::Write as _;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::datapipe::Dataset;
use crate::error::{Error, Result};
use crate::models::Model;
use crate::numerics::Rng;
use crate::Task;

/// Maximum over steps.
pub fn aggregate_score(per_step: &[f64]) -> Result<f64> {
    if per_step.is_empty() {
        return Err(Error::invalid("cannot aggregate an empty score sequence"));
    }
    Ok(per_step.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// One point of a ROC (`x` = FPR, `y` = TPR) or PR (`x` = recall,
/// `y` = precision) curve. The ROC origin has no threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: Option<f64>,
    pub x: f64,
    pub y: f64,
}

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::numeric("non-finite score"));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    Ok((pos, labels.len() - pos))
}

/// Cumulative (threshold, true positives, false positives) at every distinct
/// score, highest threshold first.
fn sweep(scores: &[f64], labels: &[u8]) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((s, tp, fp));
    }
    out
}

/// Mann-Whitney AUROC: fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("AUROC needs both classes".into()));
    }
    // Sum over tie groups of (negatives strictly below + half the tied negatives) per positive.
    let mut wins = 0.0;
    let (mut prev_tp, mut prev_fp) = (0usize, 0usize);
    for (_, tp, fp) in sweep(scores, labels) {
        let (dp, dn) = (tp - prev_tp, fp - prev_fp);
        // negatives scored strictly lower than this group: neg - fp
        wins += dp as f64 * ((neg - fp) as f64 + 0.5 * dn as f64);
        prev_tp = tp;
        prev_fp = fp;
    }
    Ok(wins / (pos as f64 * neg as f64))
}

/// ROC points from the origin through every distinct threshold.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<CurvePoint>> {
    let (pos, neg) = check_inputs(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(
            "ROC curve needs both classes".into(),
        ));
    }
    let mut pts = vec![CurvePoint {
        threshold: None,
        x: 0.0,
        y: 0.0,
    }];
    pts.extend(
        sweep(scores, labels)
            .into_iter()
            .map(|(s, tp, fp)| CurvePoint {
                threshold: Some(s),
                x: fp as f64 / neg as f64,
                y: tp as f64 / pos as f64,
            }),
    );
    Ok(pts)
}

/// PR points at every distinct threshold, highest first.
pub fn pr_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<CurvePoint>> {
    let (pos, _) = check_inputs(scores, labels)?;
    if pos == 0 {
        return Err(Error::UndefinedMetric(
            "precision-recall needs at least one positive".into(),
        ));
    }
    Ok(sweep(scores, labels)
        .into_iter()
        .map(|(s, tp, fp)| CurvePoint {
            threshold: Some(s),
            x: tp as f64 / pos as f64,
            y: tp as f64 / (tp + fp) as f64,
        })
        .collect())
}

/// Average precision `sum_i (R_i - R_{i-1}) P_i` over distinct thresholds,
/// step interpolation.
pub fn aupr(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for p in pr_curve(scores, labels)? {
        ap += (p.x - prev_recall) * p.y;
        prev_recall = p.x;
    }
    Ok(ap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Auroc,
    Aupr,
}

impl Metric {
    pub fn compute(self, scores: &[f64], labels: &[u8]) -> Result<f64> {
        match self {
            Metric::Auroc => auroc(scores, labels),
            Metric::Aupr => aupr(scores, labels),
        }
    }
}

/// An aggregated sequence score with its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredExample {
    pub id: String,
    pub score: f64,
    pub label: u8,
}

/// Percentile bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
    /// Resamples that produced a value.
    pub used: usize,
    /// Resamples dropped because they held a single class.
    pub skipped: usize,
}

/// Linear-interpolation percentile of sorted values, `q` in `[0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn check_bootstrap(b: usize, level: f64) -> Result<()> {
    if b == 0 {
        return Err(Error::invalid("bootstrap needs B >= 1"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "confidence level {level} outside (0, 1)"
        )));
    }
    Ok(())
}

/// Generic percentile bootstrap over example indices. Resample `i` draws from
/// its own child stream of `rng`, so the result does not depend on evaluation order.
fn bootstrap<F>(n: usize, b: usize, level: f64, rng: &Rng, mut stat: F) -> Result<Interval>
where
    F: FnMut(&[usize]) -> Option<f64>,
{
    check_bootstrap(b, level)?;
    if n == 0 {
        return Err(Error::invalid("bootstrap of an empty set"));
    }
    let mut values = Vec::with_capacity(b);
    let mut idx = vec![0; n];
    for i in 0..b {
        let mut r = rng.child_indexed("resample", i as u64);
        idx.iter_mut().for_each(|j| *j = r.below(n));
        if let Some(v) = stat(&idx) {
            values.push(v);
        }
    }
    let skipped = b - values.len();
    if skipped > 0 {
        debug!("bootstrap skipped {skipped} of {b} degenerate resamples");
    }
    if values.is_empty() {
        return Err(Error::UndefinedMetric(
            "every bootstrap resample was degenerate".into(),
        ));
    }
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(Interval {
        low: percentile(&values, tail),
        high: percentile(&values, 1.0 - tail),
        used: values.len(),
        skipped,
    })
}

/// Percentile interval of `metric` over `b` resamples of `examples`;
/// single-class resamples are skipped.
pub fn bootstrap_ci(
    examples: &[ScoredExample],
    metric: Metric,
    b: usize,
    level: f64,
    rng: &Rng,
) -> Result<Interval> {
    let mut s = Vec::with_capacity(examples.len());
    let mut l = Vec::with_capacity(examples.len());
    bootstrap(examples.len(), b, level, rng, |idx| {
        s.clear();
        l.clear();
        for &i in idx {
            s.push(examples[i].score);
            l.push(examples[i].label);
        }
        let pos = l.iter().filter(|&&v| v == 1).count();
        if pos == 0 || pos == l.len() {
            return None;
        }
        metric.compute(&s, &l).ok()
    })
}

/// Classification test report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auroc: f64,
    pub aupr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auroc_ci: Option<Interval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aupr_ci: Option<Interval>,
    pub bootstrap: usize,
    pub level: f64,
    pub n_test: usize,
    pub n_positive: usize,
    pub seed: u64,
    pub roc: Vec<CurvePoint>,
    pub pr: Vec<CurvePoint>,
}

/// Regression test report: mean squared error over target steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub mse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mse_ci: Option<Interval>,
    pub bootstrap: usize,
    pub level: f64,
    pub n_test: usize,
    pub seed: u64,
}

pub(crate) fn check_compatible(model: &Model, data: &Dataset) -> Result<()> {
    let s = model.spec();
    if s.t_len != data.t_len() || s.input_dim != data.d() || s.task != data.task() {
        return Err(Error::invalid(format!(
            "model expects T={}, d={}, {} data; dataset has T={}, d={}, {}",
            s.t_len,
            s.input_dim,
            s.task,
            data.t_len(),
            data.d(),
            data.task()
        )));
    }
    Ok(())
}

/// Max-over-time scores of every record.
pub fn score_examples(model: &Model, data: &Dataset) -> Result<Vec<ScoredExample>> {
    check_compatible(model, data)?;
    let xs: Vec<&[Vec<f64>]> = data.records.iter().map(|r| r.x.as_slice()).collect();
    let scores = model.scores(&xs)?;
    data.records
        .iter()
        .zip(scores)
        .map(|(r, s)| {
            let label = r
                .label()
                .ok_or_else(|| Error::invalid(format!("record {} has no label", r.id)))?;
            Ok(ScoredExample {
                id: r.id.clone(),
                score: aggregate_score(&s)?,
                label,
            })
        })
        .collect()
}

/// AUROC/AUPR with curves and, for `b > 0`, 95% bootstrap intervals.
pub fn evaluate(model: &Model, test: &Dataset, b: usize, seed: u64) -> Result<EvalReport> {
    evaluate_at_level(model, test, b, 0.95, seed)
}

pub fn evaluate_at_level(
    model: &Model,
    test: &Dataset,
    b: usize,
    level: f64,
    seed: u64,
) -> Result<EvalReport> {
    if model.spec().task != Task::Classification {
        return Err(Error::invalid("evaluate needs a classification model"));
    }
    let ex = score_examples(model, test)?;
    report_from_scores(&ex, b, level, seed)
}

/// Report for already aggregated scores.
pub fn report_from_scores(
    ex: &[ScoredExample],
    b: usize,
    level: f64,
    seed: u64,
) -> Result<EvalReport> {
    let scores: Vec<f64> = ex.iter().map(|e| e.score).collect();
    let labels: Vec<u8> = ex.iter().map(|e| e.label).collect();
    let rng = Rng::new(seed);
    let ci = |m: Metric| -> Result<Option<Interval>> {
        if b == 0 {
            Ok(None)
        } else {
            bootstrap_ci(ex, m, b, level, &rng.child(&format!("{m:?}"))).map(Some)
        }
    };
    Ok(EvalReport {
        auroc: auroc(&scores, &labels)?,
        aupr: aupr(&scores, &labels)?,
        auroc_ci: ci(Metric::Auroc)?,
        aupr_ci: ci(Metric::Aupr)?,
        bootstrap: b,
        level,
        n_test: ex.len(),
        n_positive: labels.iter().filter(|&&l| l == 1).count(),
        seed,
        roc: roc_curve(&scores, &labels)?,
        pr: pr_curve(&scores, &labels)?,
    })
}

/// Mean squared error of each record over its target steps.
pub fn per_example_mse(model: &Model, data: &Dataset) -> Result<Vec<f64>> {
    check_compatible(model, data)?;
    let xs: Vec<&[Vec<f64>]> = data.records.iter().map(|r| r.x.as_slice()).collect();
    let preds = model.scores(&xs)?;
    data.records
        .iter()
        .zip(preds)
        .map(|(r, p)| {
            let y = r
                .targets()
                .ok_or_else(|| Error::invalid(format!("record {} has no targets", r.id)))?;
            let off = p.len() - y.len();
            Ok(y.iter()
                .zip(&p[off..])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / y.len() as f64)
        })
        .collect()
}

/// Test MSE and, for `b > 0`, a 95% bootstrap interval over examples.
pub fn evaluate_regression(
    model: &Model,
    test: &Dataset,
    b: usize,
    seed: u64,
) -> Result<RegressionReport> {
    if model.spec().task != Task::Regression {
        return Err(Error::invalid(
            "evaluate_regression needs a regression model",
        ));
    }
    let per = per_example_mse(model, test)?;
    if per.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    let mean = |idx: &[usize]| idx.iter().map(|&i| per[i]).sum::<f64>() / idx.len() as f64;
    let all: Vec<usize> = (0..per.len()).collect();
    let mse_ci = if b == 0 {
        None
    } else {
        Some(bootstrap(
            per.len(),
            b,
            0.95,
            &Rng::new(seed).child("Mse"),
            |i| Some(mean(i)),
        )?)
    };
    Ok(RegressionReport {
        mse: mean(&all),
        mse_ci,
        bootstrap: b,
        level: 0.95,
        n_test: per.len(),
        seed,
    })
}

/// `threshold,x,y` lines with a header naming the axes.
pub fn curve_csv(points: &[CurvePoint], x_name: &str, y_name: &str) -> String {
    let mut s = format!("threshold,{x_name},{y_name}\n");
    for p in points {
        let th = p.threshold.map(|t| t.to_string()).unwrap_or_default();
        writeln!(s, "{th},{},{}", p.x, p.y).expect("write to string");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, prop_assume, proptest};

    fn brute_auroc(s: &[f64], l: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if l[i] == 1 && l[j] == 0 {
                    den += 1.0;
                    if s[i] > s[j] {
                        num += 1.0;
                    } else if s[i] == s[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    fn brute_ap(s: &[f64], l: &[u8]) -> f64 {
        let mut th: Vec<f64> = s.to_vec();
        th.sort_by(|a, b| b.total_cmp(a));
        th.dedup();
        let pos = l.iter().filter(|&&v| v == 1).count() as f64;
        let mut ap = 0.0;
        let mut prev = 0.0;
        for t in th {
            let tp = s
                .iter()
                .zip(l)
                .filter(|(v, y)| **v >= t && **y == 1)
                .count() as f64;
            let k = s.iter().filter(|v| **v >= t).count() as f64;
            ap += (tp / pos - prev) * (tp / k);
            prev = tp / pos;
        }
        ap
    }

    fn random_instance(rng: &mut Rng) -> (Vec<f64>, Vec<u8>) {
        loop {
            let n = 2 + rng.below(49);
            // coarse grid so ties are common
            let s: Vec<f64> = (0..n).map(|_| rng.below(12) as f64 / 11.0).collect();
            let l: Vec<u8> = (0..n).map(|_| rng.bernoulli(0.4) as u8).collect();
            let pos = l.iter().filter(|&&v| v == 1).count();
            if pos > 0 && pos < n {
                return (s, l);
            }
        }
    }

    #[test]
    fn metrics_match_brute_force() {
        let mut rng = Rng::new(2024);
        for _ in 0..1000 {
            let (s, l) = random_instance(&mut rng);
            assert!((auroc(&s, &l).unwrap() - brute_auroc(&s, &l)).abs() <= 1e-12);
            assert!((aupr(&s, &l).unwrap() - brute_ap(&s, &l)).abs() <= 1e-12);
        }
    }

    #[test]
    fn worked_values() {
        assert_eq!(auroc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        let ap = aupr(&[0.8, 0.4, 0.35, 0.1], &[1, 0, 1, 0]).unwrap();
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() <= 1e-15);
        assert!((ap - 0.833333).abs() < 1e-6);
    }

    #[test]
    fn auroc_edge_cases() {
        let s = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(auroc(&s, &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auroc(&s, &[1, 1, 0, 0]).unwrap(), 0.0);
        assert_eq!(auroc(&[0.5; 4], &[0, 1, 0, 1]).unwrap(), 0.5);
        assert!(matches!(
            auroc(&s, &[1, 1, 1, 1]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn aupr_edge_cases() {
        assert_eq!(aupr(&[0.3, 0.9, 0.1], &[1, 1, 1]).unwrap(), 1.0);
        let n = 7;
        let s: Vec<f64> = (0..n).map(|i| (n - i) as f64).collect();
        let mut l = vec![0u8; n];
        l[n - 1] = 1;
        assert!((aupr(&s, &l).unwrap() - 1.0 / n as f64).abs() <= 1e-15);
        assert!(aupr(&s, &[0; 7]).is_err());
    }

    proptest! {
        #[test]
        fn auroc_complement_and_rank_invariance(vals in proptest::collection::vec(-1e3f64..1e3, 4..40), seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let l: Vec<u8> = (0..vals.len()).map(|i| (i % 2) as u8 ^ rng.bernoulli(0.3) as u8).collect();
            let pos = l.iter().filter(|&&v| v == 1).count();
            prop_assume!(pos > 0 && pos < l.len());
            let mut distinct = vals.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            prop_assume!(distinct.len() == vals.len());
            let a = auroc(&vals, &l).unwrap();
            let flipped: Vec<u8> = l.iter().map(|v| 1 - v).collect();
            prop_assert!((a + auroc(&vals, &flipped).unwrap() - 1.0).abs() <= 1e-12);
            let mono: Vec<f64> = vals.iter().map(|v| (v / 100.0).exp() * 3.0 + 1.0).collect();
            prop_assert!((auroc(&mono, &l).unwrap() - a).abs() <= 1e-12);
        }

        #[test]
        fn aggregate_ignores_step_order(mut v in proptest::collection::vec(-5.0f64..5.0, 1..30), seed in any::<u64>()) {
            let a = aggregate_score(&v).unwrap();
            Rng::new(seed).shuffle(&mut v);
            prop_assert_eq!(aggregate_score(&v).unwrap(), a);
        }
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_score(&[0.1, 0.7, 0.3]).unwrap(), 0.7);
        assert_eq!(aggregate_score(&[0.5; 48]).unwrap(), 0.5);
        assert_eq!(aggregate_score(&[0.2]).unwrap(), 0.2);
        assert!(aggregate_score(&[]).is_err());
    }

    fn examples(scores: &[f64], labels: &[u8]) -> Vec<ScoredExample> {
        scores
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (&s, &l))| ScoredExample {
                id: i.to_string(),
                score: s,
                label: l,
            })
            .collect()
    }

    #[test]
    fn bootstrap_separated_and_deterministic() {
        let ex = examples(&[0.1, 0.2, 0.3, 0.8, 0.9, 0.95], &[0, 0, 0, 1, 1, 1]);
        let ci = bootstrap_ci(&ex, Metric::Auroc, 1000, 0.95, &Rng::new(1)).unwrap();
        assert_eq!((ci.low, ci.high), (1.0, 1.0));
        assert!(ci.skipped > 0 && ci.used + ci.skipped == 1000);
        let again = bootstrap_ci(&ex, Metric::Auroc, 1000, 0.95, &Rng::new(1)).unwrap();
        assert_eq!(ci, again);
        assert!(bootstrap_ci(&ex, Metric::Auroc, 0, 0.95, &Rng::new(1)).is_err());
        assert!(bootstrap_ci(
            &examples(&[0.1, 0.2], &[1, 1]),
            Metric::Auroc,
            10,
            0.95,
            &Rng::new(1)
        )
        .is_err());
    }

    #[test]
    fn bootstrap_narrows_with_more_data() {
        let make = |n: usize, seed: u64| {
            let mut rng = Rng::new(seed);
            let s: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
            let l: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
            examples(&s, &l)
        };
        let width = |ex: &[ScoredExample]| {
            let ci = bootstrap_ci(ex, Metric::Auroc, 1000, 0.95, &Rng::new(7)).unwrap();
            ci.high - ci.low
        };
        assert!(width(&make(2000, 3)) < width(&make(200, 3)));
    }

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 0.5), 3.0);
        assert_eq!(percentile(&v, 0.125), 1.5);
    }

    #[test]
    fn curves_are_monotone() {
        let mut rng = Rng::new(5);
        let (s, l) = random_instance(&mut rng);
        let roc = roc_curve(&s, &l).unwrap();
        assert!(roc.windows(2).all(|w| w[0].x <= w[1].x && w[0].y <= w[1].y));
        assert_eq!((roc.last().unwrap().x, roc.last().unwrap().y), (1.0, 1.0));
        let pr = pr_curve(&s, &l).unwrap();
        assert!(pr.windows(2).all(|w| w[0].x <= w[1].x));
        let csv = curve_csv(&roc, "fpr", "tpr");
        assert!(csv.starts_with("threshold,fpr,tpr\n,0,0\n"));
    }

    #[test]
    fn report_round_trip() {
        let ex = examples(&[0.1, 0.4, 0.35, 0.8, 0.2, 0.7], &[0, 0, 1, 1, 0, 1]);
        let rep = report_from_scores(&ex, 200, 0.95, 3).unwrap();
        let back: EvalReport = serde_json::from_str(&serde_json::to_string(&rep).unwrap()).unwrap();
        assert_eq!(back, rep);
        let bare = report_from_scores(&ex, 0, 0.95, 3).unwrap();
        assert!(bare.auroc_ci.is_none() && bare.aupr_ci.is_none());
    }
}
