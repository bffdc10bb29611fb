//! Named experiment suites on the synthetic benchmark.
//!
//! Each suite expands into independent runs (one model trained on one task),
//! executes them in parallel and summarizes the per-run test metrics into
//! plot-ready tables.
//!
//! - `fig1a`: LSTM, shiftLSTM-T and mixLSTM-2 across the shift strength δ
//! - `fig1b`: LSTM across training-set sizes at a fixed δ
//! - `fig2`: shiftLSTM-K across K on a classification task
//! - `fig3`: mixLSTM-2 against LSTM on subsampled training sets
//! - `fig4`: mixLSTM-2 under increasing smoothness strength α, with the
//!   learned mixing-coefficient trajectories

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datapipe::{subsample, Splits};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, evaluate_regression, Interval};
use crate::models::{ModelKind, ModelSpec};
use crate::numerics::Rng;
use crate::synthgen::{generate_task, labelize, standardize_features, task_seed, SynthConfig};
use crate::training::{mean_adjacent_similarity, train, TrainConfig};
use crate::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Fig1a,
    Fig1b,
    Fig2,
    Fig3,
    Fig4,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Fig1a,
        Suite::Fig1b,
        Suite::Fig2,
        Suite::Fig3,
        Suite::Fig4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Fig1a => "fig1a",
            Suite::Fig1b => "fig1b",
            Suite::Fig2 => "fig2",
            Suite::Fig3 => "fig3",
            Suite::Fig4 => "fig4",
        }
    }

    pub fn task(self) -> Task {
        match self {
            Suite::Fig1a | Suite::Fig1b => Task::Regression,
            _ => Task::Classification,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Suite::ALL.iter().map(|x| x.name()).collect();
                Error::invalid(format!(
                    "unknown suite '{s}'; available: {}",
                    names.join(", ")
                ))
            })
    }
}

/// Model families compared by the suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Arm {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

impl Arm {
    pub fn lstm() -> Self {
        Self {
            kind: ModelKind::Lstm,
            k: None,
        }
    }

    pub fn shift(k: usize) -> Self {
        Self {
            kind: ModelKind::ShiftLstm,
            k: Some(k),
        }
    }

    pub fn mix(k: usize) -> Self {
        Self {
            kind: ModelKind::MixLstm,
            k: Some(k),
        }
    }

    pub fn label(&self) -> String {
        match self.k {
            Some(k) => format!("{}-{k}", self.kind),
            None => self.kind.to_string(),
        }
    }
}

/// Everything needed to rerun a suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub suite: Suite,
    pub seed: u64,
    /// Repetitions per cell; repetition `r` uses weight schedule `r`.
    pub seeds: usize,
    pub synth: SynthConfig,
    pub deltas: Vec<f64>,
    /// Training-set sizes (fig1b, fig3).
    pub train_sizes: Vec<usize>,
    /// Values of K (fig2).
    pub ks: Vec<usize>,
    /// Smoothness strengths (fig4).
    pub alphas: Vec<f64>,
    pub hidden: usize,
    /// Stacked layers of the plain LSTM arm.
    pub lstm_layers: usize,
    /// Z-score inputs with training-split statistics.
    pub standardize: bool,
    pub train: TrainConfig,
    /// Bootstrap resamples for test-metric intervals (0 disables).
    pub bootstrap: usize,
}

impl SuiteConfig {
    /// Defaults for `suite`: Adam at lr 1e-3, batch 100, at most 30 epochs,
    /// patience 5, raw inputs, hidden size 32 and a two-layer plain LSTM.
    pub fn for_suite(suite: Suite) -> Self {
        let base = Self {
            suite,
            seed: 0,
            seeds: 3,
            synth: SynthConfig::default(),
            deltas: vec![0.3],
            train_sizes: Vec::new(),
            ks: Vec::new(),
            alphas: Vec::new(),
            hidden: 32,
            lstm_layers: 2,
            standardize: false,
            train: TrainConfig {
                max_epochs: 30,
                ..TrainConfig::default()
            },
            bootstrap: 0,
        };
        match suite {
            Suite::Fig1a => Self {
                deltas: vec![0.0, 0.1, 0.2, 0.3, 0.4],
                ..base
            },
            Suite::Fig1b => Self {
                train_sizes: vec![1000, 5000, 20000],
                ..base
            },
            Suite::Fig2 => Self {
                ks: vec![1, 2, 3, 5, 10, 15, 30],
                ..base
            },
            Suite::Fig3 => Self {
                train_sizes: vec![250, 500, 1000, 2000],
                ..base
            },
            Suite::Fig4 => Self {
                seeds: 1,
                alphas: vec![0.0, 0.1, 10.0],
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::invalid("seeds must be positive"));
        }
        if self.hidden == 0 || self.lstm_layers == 0 {
            return Err(Error::invalid("hidden and lstm_layers must be positive"));
        }
        if self.deltas.is_empty() || self.deltas.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::invalid(
                "deltas must be a nonempty list of nonnegative values",
            ));
        }
        self.train.validate()?;
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "suite {} needs a nonempty {what}",
                    self.suite
                )))
            }
        };
        match self.suite {
            Suite::Fig1b | Suite::Fig3 => need(!self.train_sizes.is_empty(), "train_sizes")?,
            Suite::Fig2 => need(!self.ks.is_empty(), "ks")?,
            Suite::Fig4 => need(!self.alphas.is_empty(), "alphas")?,
            Suite::Fig1a => {}
        }
        if self.train_sizes.contains(&0) {
            return Err(Error::invalid("train sizes must be positive"));
        }
        if let Some(&k) = self.ks.iter().find(|&&k| k == 0 || k > self.synth.t_len) {
            return Err(Error::invalid(format!("K={k} must lie in 1..=T")));
        }
        Ok(())
    }

    /// The runs of this suite, in a fixed order.
    pub fn plan(&self) -> Vec<RunPlan> {
        let t_len = self.synth.t_len;
        let mut runs = Vec::new();
        let mut push = |arm: Arm, delta: f64, n_train: usize, alpha: f64, repeat: usize| {
            runs.push(RunPlan {
                arm,
                delta,
                n_train,
                alpha,
                repeat,
            });
        };
        for repeat in 0..self.seeds {
            for &delta in &self.deltas {
                match self.suite {
                    Suite::Fig1a => {
                        for arm in [Arm::lstm(), Arm::shift(t_len), Arm::mix(2)] {
                            push(arm, delta, self.synth.n_train, 0.0, repeat);
                        }
                    }
                    Suite::Fig1b => {
                        for &n in &self.train_sizes {
                            push(Arm::lstm(), delta, n, 0.0, repeat);
                        }
                    }
                    Suite::Fig2 => {
                        for &k in &self.ks {
                            push(Arm::shift(k), delta, self.synth.n_train, 0.0, repeat);
                        }
                    }
                    Suite::Fig3 => {
                        for &n in &self.train_sizes {
                            for arm in [Arm::lstm(), Arm::mix(2)] {
                                push(arm, delta, n, 0.0, repeat);
                            }
                        }
                    }
                    Suite::Fig4 => {
                        for &alpha in &self.alphas {
                            push(Arm::mix(2), delta, self.synth.n_train, alpha, repeat);
                        }
                    }
                }
            }
        }
        runs
    }
}

/// One model trained on one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub arm: Arm,
    pub delta: f64,
    pub n_train: usize,
    pub alpha: f64,
    pub repeat: usize,
}

impl RunPlan {
    pub fn id(&self) -> String {
        format!(
            "{}_delta{}_n{}_alpha{}_r{}",
            self.arm.label(),
            self.delta,
            self.n_train,
            self.alpha,
            self.repeat
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub id: String,
    pub model: String,
    #[serde(flatten)]
    pub plan: RunPlan,
    pub task_seed: u64,
    pub init_seed: u64,
    pub train_seed: u64,
    pub parameters: usize,
    /// `test_mse` or `test_auroc`.
    pub metric: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<Interval>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val: f64,
    /// Final mixing coefficients, `T x K` (mixLSTM only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_similarity: Option<f64>,
}

/// Median and range of one summary cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub delta: f64,
    pub n_train: usize,
    pub alpha: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median_similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub metric: String,
    pub runs: Vec<RunResult>,
    pub summary: Vec<SummaryRow>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Builds the task of one run: synthetic splits for `(delta, repeat)`,
/// labelled for classification suites, subsampled where the suite varies the
/// training size, optionally standardized.
fn build_task(cfg: &SuiteConfig, plan: &RunPlan, root: &Rng) -> Result<(Splits, u64)> {
    let seed = task_seed(&root.child("tasks"), plan.delta, plan.repeat);
    let subsampled = cfg.suite == Suite::Fig3;
    let n_train = if subsampled {
        cfg.train_sizes
            .iter()
            .copied()
            .max()
            .unwrap_or(plan.n_train)
    } else {
        plan.n_train
    };
    let synth = SynthConfig {
        n_train,
        ..cfg.synth
    };
    let mut splits = generate_task(&synth, plan.delta, plan.repeat, seed)?.splits;
    if cfg.suite.task() == Task::Classification {
        splits = labelize(&splits)?;
    }
    if subsampled && plan.n_train < splits.train.len() {
        let mut rng = root.child(&format!("subsample/{}/{}", plan.repeat, plan.n_train));
        splits.train = subsample(&splits.train, plan.n_train, &mut rng)?;
    }
    if cfg.standardize {
        splits = standardize_features(&splits)?;
    }
    Ok((splits, seed))
}

fn execute(cfg: &SuiteConfig, plan: &RunPlan, root: &Rng) -> Result<(RunResult, f64)> {
    let started = std::time::Instant::now();
    let id = plan.id();
    let (splits, task_seed) = build_task(cfg, plan, root)?;
    let run_rng = root.child(&format!("run/{id}"));
    let (init_seed, train_seed) = (run_rng.child_seed("init"), run_rng.child_seed("shuffle"));
    let task = cfg.suite.task();
    let mut spec = ModelSpec::new(
        plan.arm.kind,
        cfg.synth.d,
        cfg.hidden,
        cfg.synth.t_len,
        task,
    )
    .with_seed(init_seed);
    if let Some(k) = plan.arm.k {
        spec = spec.with_k(k);
    }
    if plan.arm.kind == ModelKind::Lstm {
        spec = spec.with_layers(cfg.lstm_layers);
    }
    let tc = TrainConfig {
        alpha: plan.alpha,
        seed: train_seed,
        ..cfg.train
    };
    let (model, hist) = train(spec, &splits.train, &splits.val, &tc)?;
    let eval_seed = run_rng.child_seed("bootstrap");
    let (metric, value, ci) = match task {
        Task::Regression => {
            let r = evaluate_regression(&model, &splits.test, cfg.bootstrap, eval_seed)?;
            ("test_mse", r.mse, r.mse_ci)
        }
        Task::Classification => {
            let r = evaluate(&model, &splits.test, cfg.bootstrap, eval_seed)?;
            ("test_auroc", r.auroc, r.auroc_ci)
        }
    };
    let lambda = model.mixing_coefficients();
    let mean_similarity = match &lambda {
        Some(l) if l.rows() >= 2 => Some(mean_adjacent_similarity(l)?),
        _ => None,
    };
    let seconds = started.elapsed().as_secs_f64();
    info!(
        "{} {id}: {metric} {value:.5} after {} epochs ({seconds:.1}s)",
        cfg.suite,
        hist.epochs.len()
    );
    Ok((
        RunResult {
            id,
            model: plan.arm.label(),
            plan: plan.clone(),
            task_seed,
            init_seed,
            train_seed,
            parameters: model.parameter_count(),
            metric: metric.into(),
            value,
            ci,
            best_epoch: hist.best_epoch,
            epochs_run: hist.epochs.len(),
            best_val: hist.best_metric,
            lambda: lambda.map(|l| (0..l.rows()).map(|t| l.row(t).to_vec()).collect()),
            mean_similarity,
        },
        seconds,
    ))
}

/// Runs every planned run in parallel; returns the report and per-run wall
/// times (kept apart so that reports are reproducible byte for byte).
pub fn run_suite(cfg: &SuiteConfig) -> Result<(SuiteReport, Vec<(String, f64)>)> {
    cfg.validate()?;
    let root = Rng::new(cfg.seed);
    let plans = cfg.plan();
    let done: Vec<(RunResult, f64)> = plans
        .par_iter()
        .map(|p| execute(cfg, p, &root))
        .collect::<Result<_>>()?;
    let timings = done.iter().map(|(r, s)| (r.id.clone(), *s)).collect();
    let runs: Vec<RunResult> = done.into_iter().map(|(r, _)| r).collect();
    let summary = summarize(&runs);
    let metric = match cfg.suite.task() {
        Task::Regression => "test_mse",
        Task::Classification => "test_auroc",
    };
    Ok((
        SuiteReport {
            config: cfg.clone(),
            metric: metric.into(),
            runs,
            summary,
        },
        timings,
    ))
}

/// Groups runs that differ only in their repetition.
pub fn summarize(runs: &[RunResult]) -> Vec<SummaryRow> {
    let mut cells: BTreeMap<(String, u64, usize, u64), Vec<&RunResult>> = BTreeMap::new();
    let mut order = Vec::new();
    for r in runs {
        let key = (
            r.model.clone(),
            r.plan.delta.to_bits(),
            r.plan.n_train,
            r.plan.alpha.to_bits(),
        );
        if !cells.contains_key(&key) {
            order.push(key.clone());
        }
        cells.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let group = &cells[&key];
            let values: Vec<f64> = group.iter().map(|r| r.value).collect();
            let sims: Vec<f64> = group.iter().filter_map(|r| r.mean_similarity).collect();
            SummaryRow {
                model: key.0.clone(),
                delta: group[0].plan.delta,
                n_train: group[0].plan.n_train,
                alpha: group[0].plan.alpha,
                median: median(&values),
                min: values.iter().copied().fold(f64::INFINITY, f64::min),
                max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                values,
                median_similarity: (!sims.is_empty()).then(|| median(&sims)),
            }
        })
        .collect()
}

impl SuiteReport {
    pub fn row(
        &self,
        model: &str,
        delta: f64,
        n_train: Option<usize>,
        alpha: Option<f64>,
    ) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| {
            r.model == model
                && r.delta == delta
                && n_train.is_none_or(|n| r.n_train == n)
                && alpha.is_none_or(|a| r.alpha == a)
        })
    }

    /// Name of the x axis of the plot-ready table.
    fn axis(&self) -> &'static str {
        match self.config.suite {
            Suite::Fig1a => "delta",
            Suite::Fig1b | Suite::Fig3 => "n_train",
            Suite::Fig2 => "T_over_K",
            Suite::Fig4 => "alpha",
        }
    }

    fn x_of(&self, row: &SummaryRow) -> String {
        match self.config.suite {
            Suite::Fig1a => row.delta.to_string(),
            Suite::Fig1b | Suite::Fig3 => row.n_train.to_string(),
            Suite::Fig2 => {
                let k: usize = row
                    .model
                    .rsplit('-')
                    .next()
                    .and_then(|k| k.parse().ok())
                    .unwrap_or(1);
                (self.config.synth.t_len as f64 / k as f64).to_string()
            }
            Suite::Fig4 => row.alpha.to_string(),
        }
    }

    /// `x,series,median,min,max` lines.
    pub fn plot_csv(&self) -> String {
        let mut s = format!("{},series,median_{},min,max\n", self.axis(), self.metric);
        for row in &self.summary {
            let series = if self.config.suite == Suite::Fig2 {
                "shift_lstm".to_string()
            } else {
                row.model.clone()
            };
            let _ = writeln!(
                s,
                "{},{series},{},{},{}",
                self.x_of(row),
                row.median,
                row.min,
                row.max
            );
        }
        s
    }

    /// One line per run.
    pub fn runs_csv(&self) -> String {
        let mut s = String::from(
            "id,model,delta,n_train,alpha,repeat,value,best_epoch,epochs_run,mean_similarity\n",
        );
        for r in &self.runs {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.id,
                r.model,
                r.plan.delta,
                r.plan.n_train,
                r.plan.alpha,
                r.plan.repeat,
                r.value,
                r.best_epoch,
                r.epochs_run,
                r.mean_similarity.map(|v| v.to_string()).unwrap_or_default()
            );
        }
        s
    }

    /// `t,lambda1..lambdaK` tables for every run that learned mixing coefficients.
    pub fn lambda_tables(&self) -> Vec<(String, String)> {
        self.runs
            .iter()
            .filter_map(|r| {
                let lam = r.lambda.as_ref()?;
                let k = lam.first().map_or(0, |row| row.len());
                let mut s = String::from("t");
                for j in 1..=k {
                    let _ = write!(s, ",lambda{j}");
                }
                s.push('\n');
                for (t, row) in lam.iter().enumerate() {
                    let _ = write!(s, "{}", t + 1);
                    for v in row {
                        let _ = write!(s, ",{v}");
                    }
                    s.push('\n');
                }
                Some((format!("lambda_{}.csv", r.id), s))
            })
            .collect()
    }

    /// All output files as `(relative path, contents)`.
    pub fn files(&self) -> Result<Vec<(String, String)>> {
        let mut files = vec![
            (
                "report.json".to_string(),
                serde_json::to_string_pretty(self)? + "\n",
            ),
            (
                "summary.json".to_string(),
                serde_json::to_string_pretty(&self.summary)? + "\n",
            ),
            ("plot.csv".to_string(), self.plot_csv()),
            ("runs.csv".to_string(), self.runs_csv()),
        ];
        files.extend(
            self.lambda_tables()
                .into_iter()
                .map(|(n, c)| (format!("lambda/{n}"), c)),
        );
        Ok(files)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(suite: Suite) -> SuiteConfig {
        let mut cfg = SuiteConfig::for_suite(suite);
        cfg.seeds = 1;
        cfg.synth = SynthConfig {
            t_len: 8,
            d: 3,
            l: 3,
            n_train: 40,
            n_val: 40,
            n_test: 40,
        };
        cfg.hidden = 4;
        cfg.train.max_epochs = 2;
        if suite == Suite::Fig2 {
            cfg.ks = vec![1, 2, 8];
        }
        if suite == Suite::Fig3 || suite == Suite::Fig1b {
            cfg.train_sizes = vec![20, 40];
        }
        cfg
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        let err = "fig9".parse::<Suite>().unwrap_err().to_string();
        assert!(err.contains("fig1a") && err.contains("fig4"), "{err}");
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn plans_cover_the_grid() {
        assert_eq!(SuiteConfig::for_suite(Suite::Fig1a).plan().len(), 3 * 5 * 3);
        assert_eq!(SuiteConfig::for_suite(Suite::Fig1b).plan().len(), 3 * 3);
        assert_eq!(SuiteConfig::for_suite(Suite::Fig2).plan().len(), 3 * 7);
        assert_eq!(SuiteConfig::for_suite(Suite::Fig4).plan().len(), 3);
        let fig1a = SuiteConfig::for_suite(Suite::Fig1a).plan();
        assert!(fig1a.iter().any(|p| p.arm == Arm::shift(30)));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = tiny(Suite::Fig2);
        cfg.ks = vec![9];
        assert!(cfg.validate().is_err());
        let mut cfg = tiny(Suite::Fig4);
        cfg.alphas.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn every_suite_runs_and_is_reproducible() {
        for suite in Suite::ALL {
            let cfg = tiny(suite);
            let (a, _) = run_suite(&cfg).unwrap();
            let (b, _) = run_suite(&cfg).unwrap();
            assert_eq!(a.files().unwrap(), b.files().unwrap(), "{suite}");
            assert_eq!(a.runs.len(), cfg.plan().len());
            assert!(a.runs.iter().all(|r| r.value.is_finite()));
            let plot = a.plot_csv();
            assert_eq!(plot.lines().count(), a.summary.len() + 1, "{plot}");
        }
    }

    #[test]
    fn fig4_reports_lambda_trajectories() {
        let (rep, _) = run_suite(&tiny(Suite::Fig4)).unwrap();
        let tables = rep.lambda_tables();
        assert_eq!(tables.len(), 3);
        assert!(tables[0].1.starts_with("t,lambda1,lambda2\n1,"));
        assert_eq!(tables[0].1.lines().count(), 9);
        assert!(rep.summary.iter().all(|r| r.median_similarity.is_some()));
    }

    #[test]
    fn fig3_subsamples_one_pool() {
        let cfg = tiny(Suite::Fig3);
        let root = Rng::new(cfg.seed);
        let small = RunPlan {
            arm: Arm::lstm(),
            delta: 0.3,
            n_train: 20,
            alpha: 0.0,
            repeat: 0,
        };
        let full = RunPlan {
            n_train: 40,
            ..small.clone()
        };
        let (a, _) = build_task(&cfg, &small, &root).unwrap();
        let (b, _) = build_task(&cfg, &full, &root).unwrap();
        assert_eq!(a.train.len(), 20);
        assert_eq!(b.train.len(), 40);
        assert_eq!(a.test, b.test);
    }
}
