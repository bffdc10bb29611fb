use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{check_records, objective_and_gradient};
use crate::datapipe::{Dataset, Record};
use crate::error::{Error, Result};
use crate::evaluation::{aggregate_score, auroc, per_example_mse};
use crate::models::{Model, ModelKind, ModelSpec};
use crate::numerics::{AdamConfig, AdamState, Rng};
use crate::Task;

/// Validation metric used for early stopping and model selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    /// Lower is better.
    ValMse,
    /// Max-over-time AUROC; higher is better.
    ValAuroc,
}

impl SelectionMetric {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Regression => SelectionMetric::ValMse,
            Task::Classification => SelectionMetric::ValAuroc,
        }
    }

    /// Strict improvement of `new` over `old`.
    pub fn improves(self, new: f64, old: f64) -> bool {
        match self {
            SelectionMetric::ValMse => new < old,
            SelectionMetric::ValAuroc => new > old,
        }
    }

    /// Value of the metric on `data`.
    pub fn measure(self, model: &Model, data: &Dataset) -> Result<f64> {
        match self {
            SelectionMetric::ValMse => {
                let per = per_example_mse(model, data)?;
                Ok(per.iter().sum::<f64>() / per.len() as f64)
            }
            SelectionMetric::ValAuroc => {
                let xs: Vec<&[Vec<f64>]> = data.records.iter().map(|r| r.x.as_slice()).collect();
                let scores: Vec<f64> = model
                    .scores(&xs)?
                    .iter()
                    .map(|s| aggregate_score(s))
                    .collect::<Result<_>>()?;
                auroc(&scores, &data.labels()?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many consecutive epochs without strict improvement.
    pub patience: usize,
    /// Defaults to validation MSE for regression, validation AUROC for classification.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<SelectionMetric>,
    /// Strength of the mixing-smoothness reward.
    pub alpha: f64,
    /// Seed of the batch-shuffling stream.
    pub seed: u64,
    /// Rescale gradients whose L2 norm exceeds this value. Off by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 100,
            max_epochs: 100,
            patience: 5,
            metric: None,
            alpha: 0.0,
            seed: 0,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::invalid(
                "batch_size, max_epochs and patience must be positive",
            ));
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::invalid(format!(
                "learning rate {} must be finite and nonnegative",
                self.lr
            )));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::invalid(format!(
                "alpha {} must be finite and nonnegative",
                self.alpha
            )));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::invalid("clip_norm must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean data loss over the epoch's batches, weighted by batch size.
    pub train_loss: f64,
    pub val_metric: f64,
    /// Wall time of the epoch; not serialized so that histories are reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub lr: f64,
    pub patience: usize,
    pub batch_size: usize,
    pub metric: SelectionMetric,
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub stop: StopReason,
    pub optimizer_steps: u64,
}

/// What an observer sees after every optimizer step.
pub struct StepEvent<'a> {
    pub epoch: usize,
    /// 1-indexed batch within the epoch.
    pub batch: usize,
    pub step: u64,
    pub loss: f64,
    pub model: &'a Model,
}

/// Mini-batch Adam with early stopping; returns the validation-best parameters.
pub fn train(
    spec: ModelSpec,
    train_set: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    train_with_observer(spec, train_set, val, cfg, &mut |_| Ok(()))
}

fn check_data(spec: &ModelSpec, ds: &Dataset, name: &str) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::invalid(format!("{name} set is empty")));
    }
    if ds.t_len() != spec.t_len || ds.d() != spec.input_dim || ds.task() != spec.task {
        return Err(Error::invalid(format!(
            "{name} set (T={}, d={}, {}) does not fit the model (T={}, d={}, {})",
            ds.t_len(),
            ds.d(),
            ds.task(),
            spec.t_len,
            spec.input_dim,
            spec.task
        )));
    }
    Ok(())
}

fn check_simplex(model: &Model, epoch: usize, batch: usize) -> Result<()> {
    if let Some(lam) = model.mixing_coefficients() {
        for t in 0..lam.rows() {
            let row = lam.row(t);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 || row.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::numeric(format!(
                    "mixing coefficients left the simplex at step {} (epoch {epoch}, batch {batch})",
                    t + 1
                )));
            }
        }
    }
    Ok(())
}

/// [`train`] with a callback after every optimizer step; an error from the
/// callback aborts training.
pub fn train_with_observer(
    spec: ModelSpec,
    train_set: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&StepEvent) -> Result<()>,
) -> Result<(Model, TrainHistory)> {
    cfg.validate()?;
    spec.validate()?;
    check_data(&spec, train_set, "training")?;
    check_data(&spec, val, "validation")?;
    let metric = cfg
        .metric
        .unwrap_or_else(|| SelectionMetric::for_task(spec.task));
    let mut model = Model::init(spec)?;
    let all: Vec<&Record> = train_set.records.iter().collect();
    check_records(&model, &all)?;

    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        model.parameter_count(),
    );
    let mut shuffle = Rng::new(cfg.seed).child("shuffle");
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    let mut since_best = 0;
    let mut stop = StopReason::MaxEpochs;

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        shuffle.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch_no = bi + 1;
            let recs: Vec<&Record> = chunk.iter().map(|&i| &train_set.records[i]).collect();
            let (obj, mut grad) = objective_and_gradient(&model, &recs, cfg.alpha)?;
            if !obj.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::numeric(format!(
                    "non-finite loss at epoch {epoch}, batch {batch_no}"
                )));
            }
            if let Some(max) = cfg.clip_norm {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > max {
                    grad.iter_mut().for_each(|g| *g *= max / norm);
                }
            }
            adam.step(model.params_mut(), &grad)?;
            if model.params().iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric(format!(
                    "non-finite parameters after epoch {epoch}, batch {batch_no}"
                )));
            }
            if spec.kind == ModelKind::MixLstm {
                check_simplex(&model, epoch, batch_no)?;
            }
            loss_sum += obj.data_loss * chunk.len() as f64;
            observer(&StepEvent {
                epoch,
                batch: batch_no,
                step: adam.steps(),
                loss: obj.total,
                model: &model,
            })?;
        }
        let val_metric = metric.measure(&model, val).map_err(|e| match e {
            Error::Numeric(m) => Error::numeric(format!("epoch {epoch} validation: {m}")),
            other => other,
        })?;
        if !val_metric.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite validation metric at epoch {epoch}"
            )));
        }
        epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_metric,
            seconds: started.elapsed().as_secs_f64(),
        });
        log::debug!(
            "epoch {epoch}: train {:.6} val {val_metric:.6}",
            loss_sum / train_set.len() as f64
        );
        match &best {
            Some((_, b, _)) if !metric.improves(val_metric, *b) => since_best += 1,
            _ => {
                best = Some((epoch, val_metric, model.params().to_vec()));
                since_best = 0;
            }
        }
        if since_best >= cfg.patience {
            stop = StopReason::Patience;
            break;
        }
    }

    let (best_epoch, best_metric, params) = best.expect("at least one epoch");
    model.params_mut().copy_from_slice(&params);
    model.training.epochs_run = epochs.len();
    model.training.best_epoch = Some(best_epoch);
    model.training.best_metric = Some(best_metric);
    model.training.metric = Some(
        serde_json::to_value(metric)?
            .as_str()
            .unwrap_or_default()
            .to_string(),
    );
    model.lineage.train_seed = Some(cfg.seed);
    let history = TrainHistory {
        lr: cfg.lr,
        patience: cfg.patience,
        batch_size: cfg.batch_size,
        metric,
        epochs,
        best_epoch,
        best_metric,
        stop,
        optimizer_steps: adam.steps(),
    };
    Ok((model, history))
}
