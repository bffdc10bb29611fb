//! Batched forward and backward passes over time-major buffers.

use super::{Model, ModelKind};
use crate::cells::engine::{layer_backward, layer_forward, LayerTrace};
use crate::cells::CellParams;
use crate::numerics::linalg::gemm;
use crate::numerics::softmax_backward;

/// Step inputs (time features included) of `n` sequences, laid out `[t][b][in]`.
pub(crate) struct Batch {
    pub n: usize,
    pub width: usize,
    pub x: Vec<f64>,
}

impl Batch {
    /// Packs sequences that already passed [`Model::check_input`].
    pub fn from_sequences(model: &Model, xs: &[&[Vec<f64>]]) -> Self {
        let spec = model.spec();
        let (t_len, n, d) = (spec.t_len, xs.len(), spec.input_dim);
        let width = spec.step_input_dim();
        let mut x = vec![0.0; t_len * n * width];
        for t in 0..t_len {
            let extra = model.time_features(t + 1);
            for (b, seq) in xs.iter().enumerate() {
                let row = &mut x[(t * n + b) * width..(t * n + b + 1) * width];
                row[..d].copy_from_slice(&seq[t]);
                row[d..].copy_from_slice(&extra);
            }
        }
        Self { n, width, x }
    }
}

enum Cache {
    Feedforward {
        hidden: Vec<f64>,
    },
    Recurrent {
        traces: Vec<LayerTrace>,
    },
    Mixed {
        trace: LayerTrace,
        lambda: Vec<f64>,
        mixed: Vec<f64>,
    },
}

/// Head outputs `[t][b][out]` plus what the backward pass needs.
pub(crate) struct ForwardPass {
    pub out: Vec<f64>,
    cache: Cache,
}

fn relu_rows(buf: &mut [f64]) {
    buf.iter_mut().for_each(|v| *v = v.max(0.0));
}

impl Model {
    pub(crate) fn forward_batch(&self, batch: &Batch) -> ForwardPass {
        let spec = self.spec();
        let (t_len, n) = (spec.t_len, batch.n);
        let p = self.params();
        match spec.kind {
            ModelKind::Nn | ModelKind::NnT => {
                let (h, o, w) = (spec.hidden, spec.task.output_dim(), batch.width);
                let rows = t_len * n;
                let seg = |name: &str| self.layout().segment(name).expect("layout").range.clone();
                let (w1, b1, w2, b2) = (seg("ff.w1"), seg("ff.b1"), seg("ff.w2"), seg("ff.b2"));
                let mut hidden = vec![0.0; rows * h];
                for r in 0..rows {
                    hidden[r * h..(r + 1) * h].copy_from_slice(&p[b1.clone()]);
                }
                gemm(rows, w, h, &batch.x, false, &p[w1], true, &mut hidden, 1.0);
                relu_rows(&mut hidden);
                let mut out = vec![0.0; rows * o];
                for r in 0..rows {
                    out[r * o..(r + 1) * o].copy_from_slice(&p[b2.clone()]);
                }
                gemm(rows, h, o, &hidden, false, &p[w2], true, &mut out, 1.0);
                ForwardPass {
                    out,
                    cache: Cache::Feedforward { hidden },
                }
            }
            ModelKind::MixLstm => {
                let cells = self.cells();
                let k = cells.len();
                let cell_len = cells[0].shape().len();
                let lambda = self.mixing_coefficients().expect("mix model").into_values();
                let bank = &p[self.layout().cells[0].1.start..self.layout().cells[k - 1].1.end];
                let mut mixed = vec![0.0; t_len * cell_len];
                gemm(
                    t_len, k, cell_len, &lambda, false, bank, false, &mut mixed, 0.0,
                );
                let shape = cells[0].shape();
                let per_step: Vec<CellParams<&[f64]>> = mixed
                    .chunks(cell_len)
                    .map(|c| CellParams::from_buffer(shape, c).expect("layout"))
                    .collect();
                let assignment: Vec<usize> = (0..t_len).collect();
                let trace = layer_forward(&per_step, &assignment, &batch.x, n);
                ForwardPass {
                    out: trace.out.clone(),
                    cache: Cache::Mixed {
                        trace,
                        lambda,
                        mixed,
                    },
                }
            }
            _ => {
                let cells = self.cells();
                let assignment = self.assignment();
                let mut traces = Vec::new();
                if spec.kind == ModelKind::ShiftLstm {
                    traces.push(layer_forward(&cells, &assignment, &batch.x, n));
                } else {
                    let mut input: &[f64] = &batch.x;
                    for cell in &cells {
                        let tr = layer_forward(std::slice::from_ref(cell), &assignment, input, n);
                        traces.push(tr);
                        input = &traces.last().expect("pushed").h;
                    }
                }
                let out = traces.last().expect("at least one layer").out.clone();
                ForwardPass {
                    out,
                    cache: Cache::Recurrent { traces },
                }
            }
        }
    }

    /// Adds the gradient of `sum(d_out * out)` w.r.t. the parameters into
    /// `grad`; writes the gradient w.r.t. the raw inputs `[t][b][d]` into
    /// `d_x` when given.
    pub(crate) fn backward_batch(
        &self,
        batch: &Batch,
        fp: &ForwardPass,
        d_out: &[f64],
        grad: &mut [f64],
        d_x: Option<&mut [f64]>,
    ) {
        let spec = self.spec();
        let (t_len, n, width) = (spec.t_len, batch.n, batch.width);
        let p = self.params();
        let mut d_step = d_x.as_ref().map(|_| vec![0.0; t_len * n * width]);
        match &fp.cache {
            Cache::Feedforward { hidden } => {
                let (h, o) = (spec.hidden, spec.task.output_dim());
                let rows = t_len * n;
                let seg = |name: &str| self.layout().segment(name).expect("layout").range.clone();
                let (w1, b1, w2, b2) = (seg("ff.w1"), seg("ff.b1"), seg("ff.w2"), seg("ff.b2"));
                gemm(
                    o,
                    rows,
                    h,
                    d_out,
                    true,
                    hidden,
                    false,
                    &mut grad[w2.clone()],
                    1.0,
                );
                for r in 0..rows {
                    grad[b2.clone()]
                        .iter_mut()
                        .zip(&d_out[r * o..(r + 1) * o])
                        .for_each(|(g, d)| *g += d);
                }
                let mut dh = vec![0.0; rows * h];
                gemm(rows, o, h, d_out, false, &p[w2], false, &mut dh, 0.0);
                dh.iter_mut().zip(hidden).for_each(|(d, &a)| {
                    if a <= 0.0 {
                        *d = 0.0
                    }
                });
                gemm(
                    h,
                    rows,
                    width,
                    &dh,
                    true,
                    &batch.x,
                    false,
                    &mut grad[w1.clone()],
                    1.0,
                );
                for r in 0..rows {
                    grad[b1.clone()]
                        .iter_mut()
                        .zip(&dh[r * h..(r + 1) * h])
                        .for_each(|(g, d)| *g += d);
                }
                if let Some(ds) = d_step.as_mut() {
                    gemm(rows, h, width, &dh, false, &p[w1], false, ds, 0.0);
                }
            }
            Cache::Recurrent { traces } => {
                let cells = self.cells();
                let ranges: Vec<_> = self.layout().cells.iter().map(|(_, r)| r.clone()).collect();
                let assignment = self.assignment();
                let mut cell_grads: Vec<Vec<f64>> =
                    ranges.iter().map(|r| vec![0.0; r.len()]).collect();
                if spec.kind == ModelKind::ShiftLstm {
                    layer_backward(
                        &cells,
                        &assignment,
                        &traces[0],
                        Some(d_out),
                        None,
                        &mut cell_grads,
                        d_step.as_deref_mut(),
                    );
                } else {
                    let mut d_h: Option<Vec<f64>> = None;
                    for l in (0..cells.len()).rev() {
                        let top = l + 1 == cells.len();
                        let mut d_in = if l == 0 {
                            None
                        } else {
                            Some(vec![0.0; traces[l - 1].h.len()])
                        };
                        let target: Option<&mut [f64]> = if l == 0 {
                            d_step.as_deref_mut()
                        } else {
                            d_in.as_deref_mut()
                        };
                        layer_backward(
                            std::slice::from_ref(&cells[l]),
                            &assignment,
                            &traces[l],
                            if top { Some(d_out) } else { None },
                            d_h.as_deref(),
                            std::slice::from_mut(&mut cell_grads[l]),
                            target,
                        );
                        d_h = d_in;
                    }
                }
                for (r, g) in ranges.iter().zip(&cell_grads) {
                    grad[r.clone()].iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
            }
            Cache::Mixed {
                trace,
                lambda,
                mixed,
            } => {
                let cells = self.cells();
                let k = cells.len();
                let shape = cells[0].shape();
                let cell_len = shape.len();
                let per_step: Vec<CellParams<&[f64]>> = mixed
                    .chunks(cell_len)
                    .map(|c| CellParams::from_buffer(shape, c).expect("layout"))
                    .collect();
                let assignment: Vec<usize> = (0..t_len).collect();
                let mut step_grads = vec![vec![0.0; cell_len]; t_len];
                layer_backward(
                    &per_step,
                    &assignment,
                    trace,
                    Some(d_out),
                    None,
                    &mut step_grads,
                    d_step.as_deref_mut(),
                );
                let g: Vec<f64> = step_grads.concat();
                let bank_range = self.layout().cells[0].1.start..self.layout().cells[k - 1].1.end;
                // d bank = Lambda^T G ; d Lambda = G bank^T
                gemm(
                    k,
                    t_len,
                    cell_len,
                    lambda,
                    true,
                    &g,
                    false,
                    &mut grad[bank_range.clone()],
                    1.0,
                );
                let mut d_lambda = vec![0.0; t_len * k];
                gemm(
                    t_len,
                    cell_len,
                    k,
                    &g,
                    false,
                    &p[bank_range],
                    true,
                    &mut d_lambda,
                    0.0,
                );
                let lr = self.logits_range().expect("mix model");
                for t in 0..t_len {
                    let dz = softmax_backward(
                        &lambda[t * k..(t + 1) * k],
                        &d_lambda[t * k..(t + 1) * k],
                    );
                    grad[lr.start + t * k..lr.start + (t + 1) * k]
                        .iter_mut()
                        .zip(&dz)
                        .for_each(|(a, b)| *a += b);
                }
            }
        }
        if let (Some(dx), Some(ds)) = (d_x, d_step) {
            let d = spec.input_dim;
            for r in 0..t_len * n {
                dx[r * d..(r + 1) * d].copy_from_slice(&ds[r * width..r * width + d]);
            }
        }
    }
}
