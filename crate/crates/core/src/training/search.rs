use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{train, SelectionMetric, TrainConfig, TrainHistory};
use crate::datapipe::Dataset;
use crate::error::{Error, Result};
use crate::models::{Model, ModelSpec};
use crate::numerics::Rng;

/// Candidate values per hyperparameter; an empty list keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    #[serde(default)]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub lr: Vec<f64>,
    #[serde(default)]
    pub batch_size: Vec<usize>,
    #[serde(default)]
    pub alpha: Vec<f64>,
}

impl SearchSpace {
    /// Hidden sizes searched for the synthetic tasks.
    pub fn synthetic_hidden() -> Self {
        Self {
            hidden: vec![100, 150, 300, 500, 700, 900, 1100],
            ..Default::default()
        }
    }
}

/// Settings of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub trial: usize,
    pub hidden: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub alpha: f64,
    /// Initialization and shuffling seed of the trial.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum TrialOutcome {
    Trained {
        metric: f64,
        best_epoch: usize,
        epochs_run: usize,
    },
    Failed {
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    /// 1-based rank among successful trials.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    pub config: TrialConfig,
    pub outcome: TrialOutcome,
}

pub struct SearchResult {
    pub metric: SelectionMetric,
    /// Champion model and its history; `None` when every trial failed.
    pub best: Option<(Model, TrainHistory)>,
    /// Successful trials best first (ties by trial index), then failures.
    pub leaderboard: Vec<LeaderboardEntry>,
}

fn pick<T: Clone>(options: &[T], base: T, rng: &mut Rng) -> T {
    if options.is_empty() {
        base
    } else {
        options[rng.below(options.len())].clone()
    }
}

/// Trial settings; trial `i` draws from the child stream `trial#i` of `rng`.
pub fn sample_trials(
    space: &SearchSpace,
    trials: usize,
    base_hidden: usize,
    base: &TrainConfig,
    rng: &Rng,
) -> Vec<TrialConfig> {
    (0..trials)
        .map(|i| {
            let mut r = rng.child_indexed("trial", i as u64);
            TrialConfig {
                trial: i,
                hidden: pick(&space.hidden, base_hidden, &mut r),
                lr: pick(&space.lr, base.lr, &mut r),
                batch_size: pick(&space.batch_size, base.batch_size, &mut r),
                alpha: pick(&space.alpha, base.alpha, &mut r),
                seed: r.child_seed("seed"),
            }
        })
        .collect()
}

struct Partial {
    entries: Vec<LeaderboardEntry>,
    best: Option<(usize, f64, Model, TrainHistory)>,
}

/// Trains `trials` sampled configurations (in parallel on the current rayon
/// pool) and ranks them by validation metric. A failing trial is recorded
/// and does not stop the sweep.
pub fn random_search(
    template: ModelSpec,
    space: &SearchSpace,
    trials: usize,
    base: &TrainConfig,
    train_set: &Dataset,
    val: &Dataset,
    rng: &Rng,
) -> Result<SearchResult> {
    if trials == 0 {
        return Err(Error::invalid("random search needs at least one trial"));
    }
    let metric = base
        .metric
        .unwrap_or_else(|| SelectionMetric::for_task(template.task));
    let configs = sample_trials(space, trials, template.hidden, base, rng);
    let better =
        |a: &(usize, f64), b: &(usize, f64)| metric.improves(a.1, b.1) || (a.1 == b.1 && a.0 < b.0);
    let result = configs
        .into_par_iter()
        .map(|tc| {
            let spec = ModelSpec {
                hidden: tc.hidden,
                seed: tc.seed,
                ..template
            };
            let cfg = TrainConfig {
                lr: tc.lr,
                batch_size: tc.batch_size,
                alpha: tc.alpha,
                seed: tc.seed,
                metric: Some(metric),
                ..*base
            };
            match train(spec, train_set, val, &cfg) {
                Ok((model, hist)) => {
                    let outcome = TrialOutcome::Trained {
                        metric: hist.best_metric,
                        best_epoch: hist.best_epoch,
                        epochs_run: hist.epochs.len(),
                    };
                    let best = Some((tc.trial, hist.best_metric, model, hist));
                    Partial {
                        entries: vec![LeaderboardEntry {
                            rank: None,
                            config: tc,
                            outcome,
                        }],
                        best,
                    }
                }
                Err(e) => {
                    log::warn!("trial {} failed: {e}", tc.trial);
                    let outcome = TrialOutcome::Failed {
                        error: e.to_string(),
                    };
                    Partial {
                        entries: vec![LeaderboardEntry {
                            rank: None,
                            config: tc,
                            outcome,
                        }],
                        best: None,
                    }
                }
            }
        })
        .reduce(
            || Partial {
                entries: Vec::new(),
                best: None,
            },
            |mut a, b| {
                a.entries.extend(b.entries);
                a.best = match (a.best, b.best) {
                    (Some(x), Some(y)) => Some(if better(&(y.0, y.1), &(x.0, x.1)) {
                        y
                    } else {
                        x
                    }),
                    (x, None) => x,
                    (None, y) => y,
                };
                a
            },
        );
    let mut ok: Vec<LeaderboardEntry> = Vec::new();
    let mut failed = Vec::new();
    for e in result.entries {
        match e.outcome {
            TrialOutcome::Trained { .. } => ok.push(e),
            TrialOutcome::Failed { .. } => failed.push(e),
        }
    }
    let key = |e: &LeaderboardEntry| match e.outcome {
        TrialOutcome::Trained { metric, .. } => (e.config.trial, metric),
        TrialOutcome::Failed { .. } => unreachable!(),
    };
    ok.sort_by(|a, b| {
        let (ka, kb) = (key(a), key(b));
        if better(&ka, &kb) {
            std::cmp::Ordering::Less
        } else if better(&kb, &ka) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    for (i, e) in ok.iter_mut().enumerate() {
        e.rank = Some(i + 1);
    }
    failed.sort_by_key(|e| e.config.trial);
    ok.extend(failed);
    Ok(SearchResult {
        metric,
        best: result.best.map(|(_, _, m, h)| (m, h)),
        leaderboard: ok,
    })
}
