//! Losses, the smoothness-regularized objective, the early-stopping training
//! loop and random hyperparameter search.

mod fit;
mod search;

pub use fit::{
    train, train_with_observer, EpochStats, SelectionMetric, StepEvent, StopReason, TrainConfig,
    TrainHistory,
};
pub use search::{
    random_search, sample_trials, LeaderboardEntry, SearchResult, SearchSpace, TrialConfig,
    TrialOutcome,
};

use crate::datapipe::Record;
use crate::error::{Error, Result};
use crate::models::{Batch, Model};
use crate::numerics::{softmax_backward, softmax_slice, Tensor};
use crate::Task;

/// Floor inside the log of the cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;

/// Mean squared error over the steps where `mask` is true.
pub fn mse_loss(pred: &[f64], target: &[f64], mask: &[bool]) -> Result<f64> {
    if pred.len() != target.len() || pred.len() != mask.len() {
        return Err(Error::shape("prediction, target and mask lengths differ"));
    }
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(Error::invalid("mask selects no steps"));
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((p, t), _)| (p - t) * (p - t))
        .sum();
    Ok(sum / n as f64)
}

/// Cross-entropy of the sequence label replicated at every step, averaged
/// over steps: `mean_t -ln max(p_t(label), 1e-12)`.
pub fn xent_target_replication(probs: &[[f64; 2]], label: u8) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::invalid("no steps"));
    }
    if label > 1 {
        return Err(Error::invalid(format!("label {label} is not 0 or 1")));
    }
    if probs.iter().any(|p| (p[0] + p[1] - 1.0).abs() > 1e-9) {
        return Err(Error::invalid("step probabilities must sum to one"));
    }
    Ok(probs
        .iter()
        .map(|p| -p[label as usize].max(PROB_FLOOR).ln())
        .sum::<f64>()
        / probs.len() as f64)
}

fn row_norm(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Sum over adjacent rows of their cosine similarity.
pub fn smoothness_penalty(lambda: &Tensor) -> Result<f64> {
    Ok(smoothness_penalty_grad(lambda)?.0)
}

/// Mean adjacent cosine similarity, `penalty / (T - 1)`.
pub fn mean_adjacent_similarity(lambda: &Tensor) -> Result<f64> {
    Ok(smoothness_penalty(lambda)? / (lambda.rows() - 1) as f64)
}

/// Penalty and its gradient w.r.t. every entry of `lambda`.
pub fn smoothness_penalty_grad(lambda: &Tensor) -> Result<(f64, Vec<f64>)> {
    if lambda.shape().len() != 2 || lambda.rows() < 2 {
        return Err(Error::shape("smoothness needs a T x K matrix with T >= 2"));
    }
    let (t_len, k) = (lambda.rows(), lambda.cols());
    let mut total = 0.0;
    let mut grad = vec![0.0; t_len * k];
    for t in 0..t_len - 1 {
        let (a, b) = (lambda.row(t), lambda.row(t + 1));
        let (na, nb) = (row_norm(a), row_norm(b));
        if na == 0.0 || nb == 0.0 {
            return Err(Error::invalid(format!(
                "zero-norm mixing row at step {}",
                if na == 0.0 { t + 1 } else { t + 2 }
            )));
        }
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let s = dot / (na * nb);
        total += s;
        for j in 0..k {
            grad[t * k + j] += b[j] / (na * nb) - s * a[j] / (na * na);
            grad[(t + 1) * k + j] += a[j] / (na * nb) - s * b[j] / (nb * nb);
        }
    }
    Ok((total, grad))
}

/// Value of the training objective on one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    /// MSE or replicated cross-entropy.
    pub data_loss: f64,
    /// Sum of adjacent cosine similarities (0 for models without mixing).
    pub smoothness: f64,
    /// `data_loss - alpha * smoothness`.
    pub total: f64,
}

/// Checks that `records` fit `model`.
pub(crate) fn check_records(model: &Model, records: &[&Record]) -> Result<()> {
    let spec = model.spec();
    for r in records {
        model
            .check_input(&r.x)
            .map_err(|e| Error::invalid(format!("record {}: {e}", r.id)))?;
        match (spec.task, r.targets(), r.label()) {
            (Task::Regression, Some(y), _) if !y.is_empty() && y.len() <= spec.t_len => {}
            (Task::Classification, _, Some(_)) => {}
            _ => {
                return Err(Error::invalid(format!(
                    "record {} does not carry {} targets for T = {}",
                    r.id, spec.task, spec.t_len
                )))
            }
        }
    }
    Ok(())
}

/// Objective `L - alpha * sum_t s_t` on a batch together with its gradient
/// w.r.t. the flat parameter vector. `L` averages over examples and over
/// target steps (regression) or all steps (classification).
pub fn objective_and_gradient(
    model: &Model,
    records: &[&Record],
    alpha: f64,
) -> Result<(Objective, Vec<f64>)> {
    evaluate_objective(model, records, alpha, true)
        .map(|(o, g)| (o, g.expect("gradient requested")))
}

/// Objective value only.
pub fn objective(model: &Model, records: &[&Record], alpha: f64) -> Result<Objective> {
    evaluate_objective(model, records, alpha, false).map(|(o, _)| o)
}

fn evaluate_objective(
    model: &Model,
    records: &[&Record],
    alpha: f64,
    with_grad: bool,
) -> Result<(Objective, Option<Vec<f64>>)> {
    if records.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    check_records(model, records)?;
    let spec = model.spec();
    let (t_len, n) = (spec.t_len, records.len());
    let out_w = spec.task.output_dim();
    let xs: Vec<&[Vec<f64>]> = records.iter().map(|r| r.x.as_slice()).collect();
    let batch = Batch::from_sequences(model, &xs);
    let fp = model.forward_batch(&batch);
    let mut d_out = vec![0.0; fp.out.len()];
    let mut data_loss = 0.0;
    match spec.task {
        Task::Regression => {
            let count: usize = records
                .iter()
                .map(|r| r.targets().map_or(0, |y| y.len()))
                .sum();
            let scale = 1.0 / count as f64;
            for (b, r) in records.iter().enumerate() {
                let y = r.targets().expect("checked");
                let off = t_len - y.len();
                for (j, &target) in y.iter().enumerate() {
                    let idx = (off + j) * n + b;
                    let e = fp.out[idx] - target;
                    data_loss += e * e * scale;
                    d_out[idx] = 2.0 * e * scale;
                }
            }
        }
        Task::Classification => {
            let scale = 1.0 / (n * t_len) as f64;
            let mut p = [0.0; 2];
            for (b, r) in records.iter().enumerate() {
                let label = r.label().expect("checked") as usize;
                for t in 0..t_len {
                    let idx = (t * n + b) * out_w;
                    softmax_slice(&fp.out[idx..idx + 2], &mut p);
                    data_loss -= p[label].max(PROB_FLOOR).ln() * scale;
                    if p[label] > PROB_FLOOR {
                        for c in 0..2 {
                            d_out[idx + c] = (p[c] - if c == label { 1.0 } else { 0.0 }) * scale;
                        }
                    }
                }
            }
        }
    }
    let mut smoothness = 0.0;
    let mut grad = with_grad.then(|| vec![0.0; model.parameter_count()]);
    if let (Some(lambda), Some(range)) = (model.mixing_coefficients(), model.logits_range()) {
        if spec.t_len >= 2 {
            let (s, ds) = smoothness_penalty_grad(&lambda)?;
            smoothness = s;
            if let (Some(g), true) = (grad.as_mut(), alpha != 0.0) {
                let k = lambda.cols();
                for t in 0..t_len {
                    let dl: Vec<f64> = ds[t * k..(t + 1) * k].iter().map(|v| -alpha * v).collect();
                    let dz = softmax_backward(lambda.row(t), &dl);
                    g[range.start + t * k..range.start + (t + 1) * k]
                        .iter_mut()
                        .zip(&dz)
                        .for_each(|(a, b)| *a += b);
                }
            }
        }
    }
    if let Some(g) = grad.as_mut() {
        model.backward_batch(&batch, &fp, &d_out, g, None);
    }
    let total = if alpha == 0.0 {
        data_loss
    } else {
        data_loss - alpha * smoothness
    };
    Ok((
        Objective {
            data_loss,
            smoothness,
            total,
        },
        grad,
    ))
}

#[cfg(test)]
mod tests;
