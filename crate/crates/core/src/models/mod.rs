//! Full sequence predictors.
//!
//! Every model maps a `T x d` input to one prediction per step:
//!
//! | kind         | per-step computation                                        |
//! |--------------|-------------------------------------------------------------|
//! | `nn`         | one-hidden-layer ReLU network applied to each step alone    |
//! | `nn_t`       | same, input extended with `t / T`                           |
//! | `lstm`       | one shared LSTM cell (optionally two stacked layers)        |
//! | `lstm_t`     | LSTM with `t / T` appended to the input                     |
//! | `lstm_te`    | LSTM with a sinusoidal temporal encoding appended           |
//! | `shift_lstm` | K cells, cell `k` used on the k-th block of `ceil(T / K)`   |
//! | `mix_lstm`   | per-step convex mixture of K cells, mixture weights learned |
//!
//! All trainable scalars of a model live in one flat buffer; [`Model::layout`]
//! names its pieces.

mod batch;
mod file;

pub(crate) use batch::Batch;
pub use file::{load_model, save_model, Lineage, ModelFile, TrainingMeta, MODEL_FORMAT_VERSION};

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cells::{shift_schedule, temporal_encoding, CellParams, CellShape, Prediction};
use crate::error::{Error, Result};
use crate::numerics::{softmax_slice, uniform_init, Rng, Tensor};
use crate::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Nn,
    NnT,
    Lstm,
    LstmT,
    LstmTe,
    ShiftLstm,
    MixLstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Nn,
        ModelKind::NnT,
        ModelKind::Lstm,
        ModelKind::LstmT,
        ModelKind::LstmTe,
        ModelKind::ShiftLstm,
        ModelKind::MixLstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Nn => "nn",
            ModelKind::NnT => "nn_t",
            ModelKind::Lstm => "lstm",
            ModelKind::LstmT => "lstm_t",
            ModelKind::LstmTe => "lstm_te",
            ModelKind::ShiftLstm => "shift_lstm",
            ModelKind::MixLstm => "mix_lstm",
        }
    }

    pub fn is_recurrent(self) -> bool {
        !matches!(self, ModelKind::Nn | ModelKind::NnT)
    }

    pub fn needs_k(self) -> bool {
        matches!(self, ModelKind::ShiftLstm | ModelKind::MixLstm)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    /// Accepts the canonical names plus `shift` and `mix`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shift" => Ok(ModelKind::ShiftLstm),
            "mix" => Ok(ModelKind::MixLstm),
            _ => ModelKind::ALL
                .into_iter()
                .find(|k| k.name() == s)
                .ok_or_else(|| Error::invalid(format!("unknown model kind {s:?}"))),
        }
    }
}

fn default_layers() -> usize {
    1
}

fn default_te_dim() -> usize {
    24
}

/// Architecture of a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Raw input width `d`.
    pub input_dim: usize,
    pub hidden: usize,
    /// Number of cells for `shift_lstm` / `mix_lstm`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(rename = "T")]
    pub t_len: usize,
    #[serde(default = "default_layers")]
    pub num_layers: usize,
    #[serde(default = "default_te_dim")]
    pub te_dim: usize,
    /// Layer-normalized gates with orthogonal recurrent initialization.
    #[serde(default)]
    pub use_layer_norm: bool,
    pub task: Task,
    /// Initialization seed.
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, input_dim: usize, hidden: usize, t_len: usize, task: Task) -> Self {
        Self {
            kind,
            input_dim,
            hidden,
            k: None,
            t_len,
            num_layers: 1,
            te_dim: default_te_dim(),
            use_layer_norm: false,
            task,
            seed: 0,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_layers(mut self, n: usize) -> Self {
        self.num_layers = n;
        self
    }

    pub fn with_layer_norm(mut self, on: bool) -> Self {
        self.use_layer_norm = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 || self.t_len == 0 {
            return Err(Error::invalid("input_dim, hidden and T must be positive"));
        }
        match (self.kind.needs_k(), self.k) {
            (true, None) => return Err(Error::invalid(format!("{} needs K", self.kind))),
            (false, Some(_)) => return Err(Error::invalid(format!("{} takes no K", self.kind))),
            (true, Some(k)) if k < 1 || k > self.t_len => {
                return Err(Error::invalid(format!(
                    "K = {k} must satisfy 1 <= K <= T = {}",
                    self.t_len
                )))
            }
            _ => {}
        }
        if self.kind == ModelKind::LstmTe && (self.te_dim == 0 || !self.te_dim.is_multiple_of(2)) {
            return Err(Error::invalid(format!(
                "te_dim must be even and positive, got {}",
                self.te_dim
            )));
        }
        match self.num_layers {
            1 => {}
            2 if self.kind == ModelKind::Lstm => {}
            n => {
                return Err(Error::invalid(format!(
                    "{n} layers not supported for {}",
                    self.kind
                )))
            }
        }
        Ok(())
    }

    /// Width of the per-step input after time features are appended.
    pub fn step_input_dim(&self) -> usize {
        self.input_dim
            + match self.kind {
                ModelKind::NnT | ModelKind::LstmT => 1,
                ModelKind::LstmTe => self.te_dim,
                _ => 0,
            }
    }

    fn cell_shape(&self, layer: usize) -> CellShape {
        let input = if layer == 0 {
            self.step_input_dim()
        } else {
            self.hidden
        };
        let out = if layer + 1 == self.num_layers {
            self.task.output_dim()
        } else {
            0
        };
        CellShape::new(input, self.hidden, out, self.use_layer_norm)
    }

    fn cell_count(&self) -> usize {
        match self.kind {
            ModelKind::ShiftLstm | ModelKind::MixLstm => self.k.unwrap_or(1),
            _ => self.num_layers,
        }
    }
}

/// One named block of the flat parameter buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
    pub range: Range<usize>,
}

/// Where every parameter tensor sits in the flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub segments: Vec<Segment>,
    pub len: usize,
    /// Buffer range of each cell (recurrent models).
    cells: Vec<(CellShape, Range<usize>)>,
    /// Range of the `T x K` mixing logits (`mix_lstm`).
    logits: Option<Range<usize>>,
}

impl Layout {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut segments = Vec::new();
        let mut off = 0;
        let mut push = |name: String, shape: Vec<usize>, segments: &mut Vec<Segment>| {
            let n: usize = shape.iter().product();
            segments.push(Segment {
                name,
                shape,
                range: off..off + n,
            });
            off += n;
            off - n..off
        };
        let mut cells = Vec::new();
        let mut logits = None;
        if spec.kind.is_recurrent() {
            let per_layer = matches!(
                spec.kind,
                ModelKind::Lstm | ModelKind::LstmT | ModelKind::LstmTe
            );
            for c in 0..spec.cell_count() {
                let shape = spec.cell_shape(if per_layer { c } else { 0 });
                let prefix = if per_layer {
                    format!("layer{c}")
                } else {
                    format!("cell{c}")
                };
                let start = segments.last().map_or(0, |s: &Segment| s.range.end);
                for (name, dims) in shape.tensor_shapes() {
                    push(format!("{prefix}.{name}"), dims, &mut segments);
                }
                cells.push((shape, start..start + shape.len()));
            }
            if spec.kind == ModelKind::MixLstm {
                logits = Some(push(
                    "logits".into(),
                    vec![spec.t_len, spec.cell_count()],
                    &mut segments,
                ));
            }
        } else {
            let (i, h, o) = (spec.step_input_dim(), spec.hidden, spec.task.output_dim());
            push("ff.w1".into(), vec![h, i], &mut segments);
            push("ff.b1".into(), vec![h], &mut segments);
            push("ff.w2".into(), vec![o, h], &mut segments);
            push("ff.b2".into(), vec![o], &mut segments);
        }
        let len = segments.last().map_or(0, |s| s.range.end);
        Ok(Self {
            segments,
            len,
            cells,
            logits,
        })
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }
}

/// Exact number of trainable scalars.
pub fn parameter_count(spec: &ModelSpec) -> Result<usize> {
    Ok(Layout::new(spec)?.len)
}

/// Architecture, parameters and training provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    layout: Layout,
    params: Vec<f64>,
    pub lineage: Lineage,
    pub training: TrainingMeta,
}

impl Model {
    /// Fresh model initialized from `spec.seed`.
    ///
    /// LSTM cells follow [`CellParams::init`] (orthogonal gates when layer
    /// norm is on); feed-forward layers draw `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`;
    /// mixing logits draw `U(-0.1, 0.1)`.
    pub fn init(spec: ModelSpec) -> Result<Self> {
        let layout = Layout::new(&spec)?;
        let mut rng = Rng::new(spec.seed).child("init");
        let mut params = vec![0.0; layout.len];
        if spec.kind.is_recurrent() {
            for (shape, range) in &layout.cells {
                let cell = CellParams::init(*shape, spec.use_layer_norm, &mut rng);
                params[range.clone()].copy_from_slice(cell.as_slice());
            }
            if let Some(r) = &layout.logits {
                params[r.clone()]
                    .iter_mut()
                    .for_each(|v| *v = rng.uniform_range(-0.1, 0.1));
            }
        } else {
            for (w, b) in [("ff.w1", "ff.b1"), ("ff.w2", "ff.b2")] {
                let ws = layout.segment(w).expect("layout").clone();
                let bs = layout.segment(b).expect("layout").clone();
                let fan_in = ws.shape[1];
                let bound = 1.0 / (fan_in as f64).sqrt();
                let wt = uniform_init(ws.shape[0], fan_in, bound, &mut rng);
                params[ws.range].copy_from_slice(wt.values());
                params[bs.range]
                    .iter_mut()
                    .for_each(|v| *v = rng.uniform_range(-bound, bound));
            }
        }
        Ok(Self {
            spec,
            layout,
            params,
            lineage: Lineage::from_seed(spec.seed),
            training: TrainingMeta::default(),
        })
    }

    /// Model with explicit parameters.
    pub fn from_params(spec: ModelSpec, params: Vec<f64>) -> Result<Self> {
        let layout = Layout::new(&spec)?;
        if params.len() != layout.len {
            return Err(Error::shape(format!(
                "{} needs {} parameters, got {}",
                spec.kind,
                layout.len,
                params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite parameter"));
        }
        Ok(Self {
            spec,
            layout,
            params,
            lineage: Lineage::from_seed(spec.seed),
            training: TrainingMeta::default(),
        })
    }

    /// Same model with a different parameter vector (no finiteness check).
    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        if params.len() != self.layout.len {
            return Err(Error::shape(
                "parameter vector length differs from the layout",
            ));
        }
        let mut m = self.clone();
        m.params.copy_from_slice(params);
        Ok(m)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.layout.len
    }

    /// Views of the LSTM cells (empty for feed-forward models).
    pub fn cells(&self) -> Vec<CellParams<&[f64]>> {
        self.layout
            .cells
            .iter()
            .map(|(shape, r)| {
                CellParams::from_buffer(*shape, &self.params[r.clone()]).expect("layout")
            })
            .collect()
    }

    /// Buffer range of the mixing logits, for `mix_lstm`.
    pub fn logits_range(&self) -> Option<Range<usize>> {
        self.layout.logits.clone()
    }

    /// `T x K` mixing coefficients of a `mix_lstm`.
    pub fn mixing_coefficients(&self) -> Option<Tensor> {
        let r = self.layout.logits.clone()?;
        let k = self.spec.cell_count();
        let z = &self.params[r];
        let mut lam = vec![0.0; z.len()];
        for (zr, lr) in z.chunks(k).zip(lam.chunks_mut(k)) {
            softmax_slice(zr, lr);
        }
        Some(Tensor::matrix(self.spec.t_len, k, lam).expect("shape"))
    }

    /// Cell index used at each step (shared and shifted models).
    pub(crate) fn assignment(&self) -> Vec<usize> {
        match (self.spec.kind, self.spec.k) {
            (ModelKind::ShiftLstm, Some(k)) => {
                shift_schedule(self.spec.t_len, k)
                    .expect("validated")
                    .assignment
            }
            _ => vec![0; self.spec.t_len],
        }
    }

    /// Named parameter tensors in buffer order.
    pub fn tensors(&self) -> Vec<(String, Tensor)> {
        self.layout
            .segments
            .iter()
            .map(|s| {
                (
                    s.name.clone(),
                    Tensor::new(s.shape.clone(), self.params[s.range.clone()].to_vec())
                        .expect("layout"),
                )
            })
            .collect()
    }

    /// Appended time features for 1-indexed step `t`.
    pub(crate) fn time_features(&self, t: usize) -> Vec<f64> {
        match self.spec.kind {
            ModelKind::NnT | ModelKind::LstmT => vec![t as f64 / self.spec.t_len as f64],
            ModelKind::LstmTe => temporal_encoding(t, self.spec.te_dim),
            _ => Vec::new(),
        }
    }

    /// The per-step input actually fed to the network: `x_t` followed by any
    /// time features.
    pub fn step_inputs(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check_input(x)?;
        Ok(x.iter()
            .enumerate()
            .map(|(t, row)| {
                let mut r = row.clone();
                r.extend(self.time_features(t + 1));
                r
            })
            .collect())
    }

    pub(crate) fn check_input(&self, x: &[Vec<f64>]) -> Result<()> {
        if x.len() != self.spec.t_len {
            return Err(Error::shape(format!(
                "expected {} steps, got {}",
                self.spec.t_len,
                x.len()
            )));
        }
        if let Some(r) = x.iter().find(|r| r.len() != self.spec.input_dim) {
            return Err(Error::shape(format!(
                "expected {} features per step, got {}",
                self.spec.input_dim,
                r.len()
            )));
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite input"));
        }
        Ok(())
    }

    /// Raw head outputs `[T][out]` for many sequences (logits for
    /// classification), computed in batches.
    pub fn head_outputs(&self, xs: &[&[Vec<f64>]]) -> Result<Vec<Vec<Vec<f64>>>> {
        let out_w = self.spec.task.output_dim();
        let mut all = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(256) {
            for x in chunk {
                self.check_input(x)?;
            }
            let batch = Batch::from_sequences(self, chunk);
            let fp = self.forward_batch(&batch);
            if fp.out.iter().any(|v| !v.is_finite()) {
                return Err(Error::numeric("non-finite model output"));
            }
            let n = chunk.len();
            for b in 0..n {
                all.push(
                    (0..self.spec.t_len)
                        .map(|t| fp.out[(t * n + b) * out_w..(t * n + b + 1) * out_w].to_vec())
                        .collect(),
                );
            }
        }
        Ok(all)
    }

    /// Per-step predictions for one sequence.
    pub fn forward(&self, x: &[Vec<f64>]) -> Result<Vec<Prediction>> {
        let out = self.head_outputs(&[x])?.pop().expect("one sequence");
        Ok(out
            .into_iter()
            .map(|o| head_prediction(&o, self.spec.task))
            .collect())
    }

    /// Per-step scores: the regression value, or `P(class 1)`.
    pub fn scores(&self, xs: &[&[Vec<f64>]]) -> Result<Vec<Vec<f64>>> {
        let task = self.spec.task;
        Ok(self
            .head_outputs(xs)?
            .into_iter()
            .map(|seq| {
                seq.iter()
                    .map(|o| match head_prediction(o, task) {
                        Prediction::Value(v) => v,
                        Prediction::Probabilities(p) => p[1],
                    })
                    .collect()
            })
            .collect())
    }
}

pub(crate) fn head_prediction(out: &[f64], task: Task) -> Prediction {
    match task {
        Task::Regression => Prediction::Value(out[0]),
        Task::Classification => {
            let mut p = [0.0; 2];
            softmax_slice(out, &mut p);
            Prediction::Probabilities(p)
        }
    }
}
