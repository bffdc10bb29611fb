//! LSTM cell math, the shiftLSTM time-block schedule, mixLSTM parameter
//! mixing and sinusoidal temporal encodings.
//!
//! A cell stores all of its parameters in one flat buffer:
//!
//! ```text
//! w        4h x (h + in)   gate weights, gate order [input, candidate, forget, output],
//!                          columns ordered as the concatenation [h_prev, x]
//! b        4h
//! ln_gain  4h              only with layer normalization
//! ln_bias  4h              only with layer normalization
//! w_y      out x h         output head (absent when out = 0)
//! b_y      out
//! ```
//!
//! Keeping the cell flat makes mixing a weighted sum of buffers and lets the
//! optimizer treat every model as a single vector.

mod encoding;
pub(crate) mod engine;
mod mix;
mod schedule;

pub use encoding::temporal_encoding;
pub use mix::{mix_cells, MixBank};
pub use schedule::{shift_schedule, ShiftSchedule};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    orthogonal_init, sigmoid, softmax_slice, standardize_in_place, Rng, Tensor, LN_EPS,
};
use crate::Task;

/// Dimensions of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellShape {
    pub input: usize,
    pub hidden: usize,
    /// Output head width; 0 for a cell that feeds another layer.
    pub out: usize,
    pub layer_norm: bool,
}

/// Offsets of each parameter block inside a flat cell buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellOffsets {
    pub w: usize,
    pub b: usize,
    pub ln_gain: usize,
    pub ln_bias: usize,
    pub w_y: usize,
    pub b_y: usize,
    pub end: usize,
}

impl CellShape {
    pub fn new(input: usize, hidden: usize, out: usize, layer_norm: bool) -> Self {
        Self {
            input,
            hidden,
            out,
            layer_norm,
        }
    }

    /// Width of the concatenated `[h_prev, x]` vector.
    pub fn concat(&self) -> usize {
        self.hidden + self.input
    }

    pub fn offsets(&self) -> CellOffsets {
        let h = self.hidden;
        let w = 0;
        let b = w + 4 * h * self.concat();
        let ln_gain = b + 4 * h;
        let ln = if self.layer_norm { 4 * h } else { 0 };
        let ln_bias = ln_gain + ln;
        let w_y = ln_bias + ln;
        let b_y = w_y + self.out * h;
        CellOffsets {
            w,
            b,
            ln_gain,
            ln_bias,
            w_y,
            b_y,
            end: b_y + self.out,
        }
    }

    /// Number of trainable scalars in the cell.
    pub fn len(&self) -> usize {
        self.offsets().end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Named tensor shapes in buffer order.
    pub fn tensor_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let h = self.hidden;
        let mut v = vec![("w", vec![4 * h, self.concat()]), ("b", vec![4 * h])];
        if self.layer_norm {
            v.push(("ln_gain", vec![4 * h]));
            v.push(("ln_bias", vec![4 * h]));
        }
        if self.out > 0 {
            v.push(("w_y", vec![self.out, h]));
            v.push(("b_y", vec![self.out]));
        }
        v
    }
}

/// Parameters of one LSTM cell (and optionally its output head).
///
/// `S` is the storage: an owned `Vec<f64>` or a borrowed slice of a larger
/// model buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct CellParams<S = Vec<f64>> {
    shape: CellShape,
    data: S,
}

/// Borrowed cell parameters.
pub type CellView<'a> = CellParams<&'a [f64]>;

impl<S: AsRef<[f64]>> CellParams<S> {
    pub fn from_buffer(shape: CellShape, data: S) -> Result<Self> {
        if data.as_ref().len() != shape.len() {
            return Err(Error::shape(format!(
                "cell of shape {shape:?} needs {} parameters, got {}",
                shape.len(),
                data.as_ref().len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> CellShape {
        self.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data.as_ref()
    }

    pub fn view(&self) -> CellView<'_> {
        CellParams {
            shape: self.shape,
            data: self.data.as_ref(),
        }
    }

    pub fn to_owned(&self) -> CellParams {
        CellParams {
            shape: self.shape,
            data: self.data.as_ref().to_vec(),
        }
    }

    fn block(&self, from: usize, to: usize) -> &[f64] {
        &self.data.as_ref()[from..to]
    }

    pub fn w(&self) -> &[f64] {
        let o = self.shape.offsets();
        self.block(o.w, o.b)
    }

    pub fn b(&self) -> &[f64] {
        let o = self.shape.offsets();
        self.block(o.b, o.ln_gain)
    }

    pub fn ln_gain(&self) -> &[f64] {
        let o = self.shape.offsets();
        self.block(o.ln_gain, o.ln_bias)
    }

    pub fn ln_bias(&self) -> &[f64] {
        let o = self.shape.offsets();
        self.block(o.ln_bias, o.w_y)
    }

    pub fn w_y(&self) -> &[f64] {
        let o = self.shape.offsets();
        self.block(o.w_y, o.b_y)
    }

    pub fn b_y(&self) -> &[f64] {
        let o = self.shape.offsets();
        self.block(o.b_y, o.end)
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|v| v.is_finite())
    }

    /// Splits the buffer into named tensors, names prefixed with `prefix.`.
    pub fn to_tensors(&self, prefix: &str) -> Vec<(String, Tensor)> {
        let mut off = 0;
        self.shape
            .tensor_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let t = Tensor::new(shape, self.as_slice()[off..off + n].to_vec()).expect("layout");
                off += n;
                (format!("{prefix}.{name}"), t)
            })
            .collect()
    }
}

impl CellParams {
    pub fn zeros(shape: CellShape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    /// Randomly initialized cell.
    ///
    /// With `orthogonal` each gate's `h x (h + in)` block is orthogonal and
    /// biases start at zero; otherwise every weight and bias is drawn from
    /// `U(-1/sqrt(h), 1/sqrt(h))`. Layer-norm gains start at one, shifts at zero.
    pub fn init(shape: CellShape, orthogonal: bool, rng: &mut Rng) -> Self {
        let mut cell = Self::zeros(shape);
        let h = shape.hidden;
        let bound = 1.0 / (h as f64).sqrt();
        let o = shape.offsets();
        if orthogonal {
            for g in 0..4 {
                let q = orthogonal_init(h, shape.concat(), rng);
                let start = o.w + g * h * shape.concat();
                cell.data[start..start + q.len()].copy_from_slice(q.values());
            }
        } else {
            for v in &mut cell.data[o.w..o.ln_gain] {
                *v = rng.uniform_range(-bound, bound);
            }
        }
        cell.data[o.ln_gain..o.ln_bias]
            .iter_mut()
            .for_each(|g| *g = 1.0);
        for v in &mut cell.data[o.w_y..o.b_y] {
            *v = rng.uniform_range(-bound, bound);
        }
        if !orthogonal {
            for v in &mut cell.data[o.b_y..o.end] {
                *v = rng.uniform_range(-bound, bound);
            }
        }
        cell
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn block_mut(&mut self, from: usize, to: usize) -> &mut [f64] {
        &mut self.data[from..to]
    }

    pub fn w_mut(&mut self) -> &mut [f64] {
        let o = self.shape.offsets();
        self.block_mut(o.w, o.b)
    }

    pub fn b_mut(&mut self) -> &mut [f64] {
        let o = self.shape.offsets();
        self.block_mut(o.b, o.ln_gain)
    }

    pub fn ln_gain_mut(&mut self) -> &mut [f64] {
        let o = self.shape.offsets();
        self.block_mut(o.ln_gain, o.ln_bias)
    }

    pub fn ln_bias_mut(&mut self) -> &mut [f64] {
        let o = self.shape.offsets();
        self.block_mut(o.ln_bias, o.w_y)
    }

    pub fn w_y_mut(&mut self) -> &mut [f64] {
        let o = self.shape.offsets();
        self.block_mut(o.w_y, o.b_y)
    }

    pub fn b_y_mut(&mut self) -> &mut [f64] {
        let o = self.shape.offsets();
        self.block_mut(o.b_y, o.end)
    }
}

/// One LSTM transition for a single example.
///
/// ```text
/// i = sigmoid(W_i [h_prev, x] + b_i)     C~ = tanh(W_c [h_prev, x] + b_c)
/// f = sigmoid(W_f [h_prev, x] + b_f)     C  = i * C~ + f * C_prev
/// o = sigmoid(W_o [h_prev, x] + b_o)     h  = o * tanh(C)
/// ```
///
/// With `use_layer_norm` each gate pre-activation is layer-normalized (with
/// the cell's gain and shift) before its nonlinearity.
pub fn lstm_step<S: AsRef<[f64]>>(
    params: &CellParams<S>,
    h_prev: &[f64],
    c_prev: &[f64],
    x: &[f64],
    use_layer_norm: bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let shape = params.shape();
    let h = shape.hidden;
    if h_prev.len() != h || c_prev.len() != h || x.len() != shape.input {
        return Err(Error::shape(format!(
            "lstm_step expects h/C of length {h} and x of length {}, got {}/{}/{}",
            shape.input,
            h_prev.len(),
            c_prev.len(),
            x.len()
        )));
    }
    if use_layer_norm != shape.layer_norm {
        return Err(Error::shape(
            "layer-norm flag does not match the cell parameters",
        ));
    }
    let z: Vec<f64> = h_prev.iter().chain(x).copied().collect();
    let w = params.w();
    let b = params.b();
    let mut pre: Vec<f64> = (0..4 * h)
        .map(|r| {
            w[r * z.len()..(r + 1) * z.len()]
                .iter()
                .zip(&z)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                + b[r]
        })
        .collect();
    if use_layer_norm {
        let (gain, shift) = (params.ln_gain(), params.ln_bias());
        for g in 0..4 {
            let block = &mut pre[g * h..(g + 1) * h];
            standardize_in_place(block, LN_EPS);
            for j in 0..h {
                block[j] = gain[g * h + j] * block[j] + shift[g * h + j];
            }
        }
    }
    let mut h_new = vec![0.0; h];
    let mut c_new = vec![0.0; h];
    for j in 0..h {
        let i = sigmoid(pre[j]);
        let cand = pre[h + j].tanh();
        let f = sigmoid(pre[2 * h + j]);
        let o = sigmoid(pre[3 * h + j]);
        c_new[j] = i * cand + f * c_prev[j];
        h_new[j] = o * c_new[j].tanh();
    }
    Ok((h_new, c_new))
}

/// Output of the per-step prediction head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prediction {
    Value(f64),
    /// `[P(class 0), P(class 1)]`.
    Probabilities([f64; 2]),
}

/// `y = W_y h + b_y`; classification applies a softmax over the two logits.
pub fn output_head<S: AsRef<[f64]>>(
    params: &CellParams<S>,
    h: &[f64],
    task: Task,
) -> Result<Prediction> {
    let shape = params.shape();
    if h.len() != shape.hidden {
        return Err(Error::shape(format!(
            "head expects hidden state of length {}",
            shape.hidden
        )));
    }
    if shape.out != task.output_dim() {
        return Err(Error::shape(format!(
            "head width {} does not fit a {task} task",
            shape.out
        )));
    }
    let logits: Vec<f64> = (0..shape.out)
        .map(|r| {
            params.w_y()[r * h.len()..(r + 1) * h.len()]
                .iter()
                .zip(h)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                + params.b_y()[r]
        })
        .collect();
    Ok(match task {
        Task::Regression => Prediction::Value(logits[0]),
        Task::Classification => {
            let mut p = [0.0; 2];
            softmax_slice(&logits, &mut p);
            Prediction::Probabilities(p)
        }
    })
}
