use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use relshare::datapipe::{
    load_dataset, load_raw, prepare as prepare_splits, save_dataset, Dataset, SplitSpec, Splits,
};
use relshare::evaluation::{curve_csv, evaluate, evaluate_regression};
use relshare::experiments::{run_suite, Suite, SuiteConfig};
use relshare::interpret::{
    correlation_groups, gradient_saliency, permutation_importance_with, rank_features, ranking_csv,
    FeatureRank, PermutationOptions, SaliencyMap, DEFAULT_CORRELATION, DEFAULT_WINDOW,
};
use relshare::models::{load_model, save_model, ModelKind, ModelSpec};
use relshare::numerics::Rng;
use relshare::synthgen::{generate_benchmark, labelize, standardize_features, SynthConfig};
use relshare::training::{random_search, train as fit, SearchSpace, TrainConfig};
use relshare::{Error, Result, Task};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::{
    EvalArgs, ExplainArgs, ExplainMode, PrepareArgs, ReproduceArgs, SynthArgs, TrainArgs,
};
use crate::output::{load_config, out_dir, parse_list, Writer, CONFIG_VERSION};

const ALL_DELTAS: [f64; 5] = [0.0, 0.1, 0.2, 0.3, 0.4];

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Defaults overlaid with the config file, if any.
fn resolve<T: Serialize + DeserializeOwned>(defaults: T, file: Option<&Path>) -> Result<T> {
    let Some(path) = file else {
        return Ok(defaults);
    };
    let mut base = serde_json::to_value(&defaults)?;
    merge(&mut base, at(path, load_config::<Value>(path))?);
    serde_json::from_value(base)
        .map_err(|e| Error::InvalidArgument(format!("config {}: {e}", path.display())))
}

fn check_version(v: u32) -> Result<()> {
    if v != CONFIG_VERSION {
        return Err(Error::InvalidArgument(format!(
            "unsupported config format_version {v}"
        )));
    }
    Ok(())
}

fn required(p: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    p.clone()
        .ok_or_else(|| Error::InvalidArgument(format!("{flag} is required")))
}

/// A file, or `<dir>/<default>` when given a directory.
fn data_file(p: &Path, default: &str) -> PathBuf {
    if p.is_dir() {
        p.join(default)
    } else {
        p.to_path_buf()
    }
}

/// Names the file in I/O errors.
fn at<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        other => other,
    })
}

fn timing(w: &mut Writer, started: Instant) -> Result<()> {
    w.json(
        "timing.json",
        &serde_json::json!({ "wall_seconds": started.elapsed().as_secs_f64() }),
    )?;
    Ok(())
}

fn write_splits(w: &mut Writer, dir: &str, splits: &Splits) -> Result<()> {
    for (name, ds) in splits.iter() {
        let rel = if dir.is_empty() {
            format!("{name}.jsonl")
        } else {
            format!("{dir}/{name}.jsonl")
        };
        let path = w.root().join(&rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        save_dataset(ds, &path)?;
        w.record(path);
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthCmd {
    format_version: u32,
    seed: u64,
    deltas: Vec<f64>,
    schedules: usize,
    synth: SynthConfig,
    classify: bool,
    standardize: bool,
}

impl Default for SynthCmd {
    fn default() -> Self {
        Self {
            format_version: CONFIG_VERSION,
            seed: 0,
            deltas: ALL_DELTAS.to_vec(),
            schedules: 5,
            synth: SynthConfig::default(),
            classify: false,
            standardize: false,
        }
    }
}

fn parse_deltas(s: &str) -> Result<Vec<f64>> {
    if s.trim() == "all" {
        Ok(ALL_DELTAS.to_vec())
    } else {
        parse_list(s, "delta")
    }
}

pub fn synth(a: SynthArgs) -> Result<Vec<PathBuf>> {
    let started = Instant::now();
    let mut cfg = resolve(SynthCmd::default(), a.common.config.as_deref())?;
    check_version(cfg.format_version)?;
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    if let Some(d) = &a.delta {
        cfg.deltas = parse_deltas(d)?;
    }
    macro_rules! set {
        ($($flag:ident => $field:expr),*) => {$( if let Some(v) = a.$flag { $field = v; } )*};
    }
    set!(schedules => cfg.schedules, t_len => cfg.synth.t_len, d => cfg.synth.d, l => cfg.synth.l,
         n_train => cfg.synth.n_train, n_val => cfg.synth.n_val, n_test => cfg.synth.n_test);
    cfg.classify |= a.classify;
    cfg.standardize |= a.standardize;
    if cfg.deltas.is_empty() {
        return Err(Error::InvalidArgument("need at least one delta".into()));
    }
    let tasks = generate_benchmark(&cfg.synth, &cfg.deltas, cfg.schedules, &Rng::new(cfg.seed))?;
    let mut w = Writer::new(out_dir(a.common.out, "synth"))?;
    w.json("config.json", &cfg)?;
    let mut index = Vec::new();
    for task in &tasks {
        let mut splits = task.splits.clone();
        if cfg.classify {
            splits = labelize(&splits)?;
        }
        if cfg.standardize {
            splits = standardize_features(&splits)?;
        }
        let name = task.name();
        write_splits(&mut w, &name, &splits)?;
        w.json(&format!("{name}/schedule.json"), &task.schedule)?;
        index.push(serde_json::json!({
            "name": name, "delta": task.delta, "schedule_id": task.schedule_id, "seed": task.seed,
        }));
        info!("wrote task {name}");
    }
    w.json("index.json", &index)?;
    w.checksums()?;
    timing(&mut w, started)?;
    Ok(w.finish())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrepareCmd {
    format_version: u32,
    seed: u64,
    raw: Option<PathBuf>,
    /// Train, validation and test fractions.
    split: [f64; 3],
}

impl Default for PrepareCmd {
    fn default() -> Self {
        Self {
            format_version: CONFIG_VERSION,
            seed: 0,
            raw: None,
            split: [0.7, 0.15, 0.15],
        }
    }
}

pub fn prepare(a: PrepareArgs) -> Result<Vec<PathBuf>> {
    let started = Instant::now();
    let mut cfg = resolve(PrepareCmd::default(), a.common.config.as_deref())?;
    check_version(cfg.format_version)?;
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    if a.raw.is_some() {
        cfg.raw = a.raw;
    }
    if let Some(s) = &a.split {
        let v: Vec<f64> = parse_list(s, "split")?;
        cfg.split = v
            .try_into()
            .map_err(|_| Error::InvalidArgument("--split takes three fractions".into()))?;
    }
    let raw_path = required(&cfg.raw, "--raw")?;
    let raw = at(&raw_path, load_raw(&raw_path))?;
    let [train, val, test] = cfg.split;
    let spec = SplitSpec::Fractions { train, val, test };
    let splits = prepare_splits(&raw, &spec, &mut Rng::new(cfg.seed).child("split"))?;
    let mut w = Writer::new(out_dir(a.common.out, "prepare"))?;
    w.json("config.json", &cfg)?;
    write_splits(&mut w, "", &splits)?;
    w.checksums()?;
    timing(&mut w, started)?;
    Ok(w.finish())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainCmd {
    format_version: u32,
    seed: u64,
    data: Option<PathBuf>,
    model: String,
    #[serde(rename = "K")]
    k: Option<usize>,
    hidden: usize,
    layers: usize,
    layer_norm: bool,
    alpha: f64,
    lr: f64,
    batch_size: usize,
    max_epochs: usize,
    patience: usize,
    clip_norm: Option<f64>,
    /// Random search over these values when present.
    sweep: Option<SearchSpace>,
    trials: usize,
}

impl Default for TrainCmd {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            format_version: CONFIG_VERSION,
            seed: 0,
            data: None,
            model: "lstm".into(),
            k: None,
            hidden: 32,
            layers: 1,
            layer_norm: false,
            alpha: t.alpha,
            lr: t.lr,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            clip_norm: None,
            sweep: None,
            trials: 20,
        }
    }
}

/// `hidden=100,150;lr=0.001,0.01`
fn parse_sweep(s: &str) -> Result<SearchSpace> {
    let mut space = SearchSpace::default();
    for part in s.split(';').filter(|p| !p.trim().is_empty()) {
        let (key, values) = part.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!("sweep entry {part:?} is not key=values"))
        })?;
        match key.trim() {
            "hidden" => space.hidden = parse_list(values, "hidden")?,
            "lr" => space.lr = parse_list(values, "lr")?,
            "batch" | "batch_size" => space.batch_size = parse_list(values, "batch")?,
            "alpha" => space.alpha = parse_list(values, "alpha")?,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown sweep key {other:?} (expected hidden, lr, batch or alpha)"
                )))
            }
        }
    }
    Ok(space)
}

pub fn train(a: TrainArgs) -> Result<Vec<PathBuf>> {
    let started = Instant::now();
    let mut cfg = resolve(TrainCmd::default(), a.common.config.as_deref())?;
    check_version(cfg.format_version)?;
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    if a.data.is_some() {
        cfg.data = a.data;
    }
    if let Some(m) = a.model {
        cfg.model = m;
    }
    if a.k.is_some() {
        cfg.k = a.k;
    }
    if a.clip_norm.is_some() {
        cfg.clip_norm = a.clip_norm;
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$( if let Some(v) = a.$flag { cfg.$field = v; } )*};
    }
    set!(hidden => hidden, layers => layers, alpha => alpha, lr => lr, batch => batch_size,
         epochs => max_epochs, patience => patience, trials => trials);
    cfg.layer_norm |= a.layer_norm;
    if let Some(s) = &a.sweep {
        cfg.sweep = Some(parse_sweep(s)?);
    }

    let data = required(&cfg.data, "--data")?;
    let kind: ModelKind = cfg.model.parse()?;
    let (train_path, val_path) = (data.join("train.jsonl"), data.join("val.jsonl"));
    let train_set = at(&train_path, load_dataset(&train_path))?;
    let val = at(&val_path, load_dataset(&val_path))?;
    let mut spec = ModelSpec::new(
        kind,
        train_set.d(),
        cfg.hidden,
        train_set.t_len(),
        train_set.task(),
    )
    .with_layers(cfg.layers)
    .with_layer_norm(cfg.layer_norm);
    if let Some(k) = cfg.k {
        spec = spec.with_k(k);
    }
    spec.validate()?;
    let root = Rng::new(cfg.seed);
    let base = TrainConfig {
        lr: cfg.lr,
        batch_size: cfg.batch_size,
        max_epochs: cfg.max_epochs,
        patience: cfg.patience,
        metric: None,
        alpha: cfg.alpha,
        seed: root.child_seed("shuffle"),
        clip_norm: cfg.clip_norm,
    };
    base.validate()?;

    let mut w = Writer::new(out_dir(a.common.out, "train"))?;
    w.json("config.json", &cfg)?;
    let (mut model, history) = match &cfg.sweep {
        Some(space) => {
            let result = random_search(
                spec,
                space,
                cfg.trials,
                &base,
                &train_set,
                &val,
                &root.child("search"),
            )?;
            w.json("leaderboard.json", &result.leaderboard)?;
            result.best.ok_or_else(|| {
                Error::Numeric("every search trial failed; see leaderboard.json".into())
            })?
        }
        None => fit(
            spec.with_seed(root.child_seed("init")),
            &train_set,
            &val,
            &base,
        )?,
    };
    model.lineage.data = Some(data.display().to_string());
    let model_path = w.root().join("model.json");
    save_model(&model, &model_path)?;
    w.record(model_path);
    w.json("history.json", &history)?;
    info!(
        "{}: best validation {:?} {:.5} at epoch {}",
        kind, history.metric, history.best_metric, history.best_epoch
    );
    timing(&mut w, started)?;
    Ok(w.finish())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalCmd {
    format_version: u32,
    seed: u64,
    model: Option<PathBuf>,
    data: Option<PathBuf>,
    bootstrap: usize,
}

impl Default for EvalCmd {
    fn default() -> Self {
        Self {
            format_version: CONFIG_VERSION,
            seed: 0,
            model: None,
            data: None,
            bootstrap: 1000,
        }
    }
}

pub fn eval(a: EvalArgs) -> Result<Vec<PathBuf>> {
    let started = Instant::now();
    let mut cfg = resolve(EvalCmd::default(), a.common.config.as_deref())?;
    check_version(cfg.format_version)?;
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    if a.model.is_some() {
        cfg.model = a.model;
    }
    if a.data.is_some() {
        cfg.data = a.data;
    }
    if let Some(b) = a.bootstrap {
        cfg.bootstrap = b;
    }
    let model_path = required(&cfg.model, "--model")?;
    let model = at(&model_path, load_model(&model_path))?;
    let test_path = data_file(&required(&cfg.data, "--data")?, "test.jsonl");
    let test = at(&test_path, load_dataset(&test_path))?;
    let mut w = Writer::new(out_dir(a.common.out, "eval"))?;
    w.json("config.json", &cfg)?;
    match model.spec().task {
        Task::Classification => {
            let r = evaluate(&model, &test, cfg.bootstrap, cfg.seed)?;
            info!("auroc {:.4} aupr {:.4}", r.auroc, r.aupr);
            w.json("report.json", &r)?;
            w.text("roc.csv", &curve_csv(&r.roc, "fpr", "tpr"))?;
            w.text("pr.csv", &curve_csv(&r.pr, "recall", "precision"))?;
        }
        Task::Regression => {
            let r = evaluate_regression(&model, &test, cfg.bootstrap, cfg.seed)?;
            info!("mse {:.5}", r.mse);
            w.json("report.json", &r)?;
        }
    }
    timing(&mut w, started)?;
    Ok(w.finish())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExplainCmd {
    format_version: u32,
    seed: u64,
    model: Option<PathBuf>,
    data: Option<PathBuf>,
    mode: ExplainMode,
    window: usize,
    corr: f64,
    target_class: u8,
    repeats: usize,
}

impl Default for ExplainCmd {
    fn default() -> Self {
        Self {
            format_version: CONFIG_VERSION,
            seed: 0,
            model: None,
            data: None,
            mode: ExplainMode::Gradient,
            window: DEFAULT_WINDOW,
            corr: DEFAULT_CORRELATION,
            target_class: 1,
            repeats: 1,
        }
    }
}

#[derive(Serialize)]
struct SaliencyOutput<'a> {
    map: &'a SaliencyMap,
    ranking: &'a [FeatureRank],
}

pub fn explain(a: ExplainArgs) -> Result<Vec<PathBuf>> {
    let started = Instant::now();
    let mut cfg = resolve(ExplainCmd::default(), a.common.config.as_deref())?;
    check_version(cfg.format_version)?;
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    if a.model.is_some() {
        cfg.model = a.model;
    }
    if a.data.is_some() {
        cfg.data = a.data;
    }
    macro_rules! set {
        ($($flag:ident),*) => {$( if let Some(v) = a.$flag { cfg.$flag = v; } )*};
    }
    set!(mode, window, corr, target_class, repeats);
    if !(0.0..=1.0).contains(&cfg.corr) {
        return Err(Error::InvalidArgument(format!(
            "--corr {} must lie in [0, 1]",
            cfg.corr
        )));
    }
    let model_path = required(&cfg.model, "--model")?;
    let model = at(&model_path, load_model(&model_path))?;
    let data_path = data_file(&required(&cfg.data, "--data")?, "test.jsonl");
    let data: Dataset = at(&data_path, load_dataset(&data_path))?;
    let mut w = Writer::new(out_dir(a.common.out, "explain"))?;
    w.json("config.json", &cfg)?;
    match cfg.mode {
        ExplainMode::Gradient => {
            let map = gradient_saliency(&model, &data, cfg.target_class)?;
            let ranking = rank_features(&map);
            w.text("saliency.csv", &map.to_csv())?;
            w.text("ranking.csv", &ranking_csv(&ranking))?;
            w.json(
                "saliency.json",
                &SaliencyOutput {
                    map: &map,
                    ranking: &ranking,
                },
            )?;
        }
        ExplainMode::Permutation => {
            let groups = correlation_groups(&data, cfg.corr)?;
            let opts = PermutationOptions {
                window: cfg.window,
                repeats: cfg.repeats,
                identity: false,
            };
            let table =
                permutation_importance_with(&model, &data, &opts, &groups, &Rng::new(cfg.seed))?;
            info!(
                "baseline auroc {:.4}, {} groups",
                table.baseline_auroc,
                table.groups.len()
            );
            w.text("importance.csv", &table.to_csv())?;
            w.json("importance.json", &table)?;
        }
    }
    timing(&mut w, started)?;
    Ok(w.finish())
}

fn suite_of(a: &ReproduceArgs) -> Result<Suite> {
    if let Some(s) = &a.suite {
        return s.parse();
    }
    if let Some(path) = &a.common.config {
        if let Some(s) = at(path, load_config::<Value>(path))?
            .get("suite")
            .and_then(Value::as_str)
        {
            return s.parse();
        }
    }
    Err(Error::InvalidArgument("--suite is required".into()))
}

pub fn reproduce(a: ReproduceArgs) -> Result<Vec<PathBuf>> {
    let started = Instant::now();
    let suite = suite_of(&a)?;
    let mut cfg = resolve(SuiteConfig::for_suite(suite), a.common.config.as_deref())?;
    cfg.suite = suite;
    if let Some(s) = a.common.seed {
        cfg.seed = s;
    }
    macro_rules! set {
        ($($flag:ident => $field:expr),*) => {$( if let Some(v) = a.$flag { $field = v; } )*};
    }
    set!(seeds => cfg.seeds, hidden => cfg.hidden, epochs => cfg.train.max_epochs, batch => cfg.train.batch_size,
         lr => cfg.train.lr, patience => cfg.train.patience, bootstrap => cfg.bootstrap);
    if let Some(d) = &a.deltas {
        cfg.deltas = parse_deltas(d)?;
    }
    if let Some(n) = &a.train_sizes {
        cfg.train_sizes = parse_list(n, "train size")?;
    }
    cfg.validate()?;
    let mut w = Writer::new(out_dir(a.common.out, &format!("reproduce/{suite}")))?;
    w.json("config.json", &cfg)?;
    info!("{suite}: {} runs", cfg.plan().len());
    let (report, timings) = run_suite(&cfg)?;
    for (rel, contents) in report.files()? {
        w.text(&rel, &contents)?;
    }
    w.checksums()?;
    w.json(
        "timing.json",
        &serde_json::json!({
            "wall_seconds": started.elapsed().as_secs_f64(),
            "runs": timings.into_iter().collect::<std::collections::BTreeMap<_, _>>(),
        }),
    )?;
    Ok(w.finish())
}
