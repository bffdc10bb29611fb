//! Batched LSTM layer forward/backward through time.
//!
//! All buffers are time-major: `[t][b][width]`. Every step may use a
//! different cell (`assignment[t]` indexes `cells`); parameter gradients are
//! accumulated per cell.

use super::{CellParams, CellShape};
use crate::numerics::linalg::gemm;
use crate::numerics::{layer_norm_backward, sigmoid, standardize_in_place, LN_EPS};

/// Everything the backward pass needs from a forward pass.
pub(crate) struct LayerTrace {
    pub t_len: usize,
    pub batch: usize,
    pub shape: CellShape,
    /// `[h_prev, x]` per step, `[t][b][h + in]`.
    z: Vec<f64>,
    /// Normalized gate pre-activations (layer norm only), `[t][b][4h]`.
    xhat: Vec<f64>,
    /// Inverse deviation per gate block (layer norm only), `[t][b][4]`.
    inv_std: Vec<f64>,
    /// Activated gates `[i, c~, f, o]`, `[t][b][4h]`.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    /// Hidden states, `[t][b][h]`.
    pub h: Vec<f64>,
    /// Head outputs, `[t][b][out]`.
    pub out: Vec<f64>,
}

fn check_cells<S: AsRef<[f64]>>(cells: &[CellParams<S>], assignment: &[usize]) -> CellShape {
    let shape = cells[0].shape();
    assert!(
        cells.iter().all(|c| c.shape() == shape),
        "cells must share a shape"
    );
    assert!(
        assignment.iter().all(|&a| a < cells.len()),
        "assignment out of range"
    );
    shape
}

pub(crate) fn layer_forward<S: AsRef<[f64]>>(
    cells: &[CellParams<S>],
    assignment: &[usize],
    input: &[f64],
    batch: usize,
) -> LayerTrace {
    let shape = check_cells(cells, assignment);
    let t_len = assignment.len();
    let (h, inp, out_w) = (shape.hidden, shape.input, shape.out);
    let zw = shape.concat();
    assert_eq!(input.len(), t_len * batch * inp, "input buffer size");

    let ln = shape.layer_norm;
    let mut tr = LayerTrace {
        t_len,
        batch,
        shape,
        z: vec![0.0; t_len * batch * zw],
        xhat: if ln {
            vec![0.0; t_len * batch * 4 * h]
        } else {
            Vec::new()
        },
        inv_std: if ln {
            vec![0.0; t_len * batch * 4]
        } else {
            Vec::new()
        },
        gates: vec![0.0; t_len * batch * 4 * h],
        c: vec![0.0; t_len * batch * h],
        tanh_c: vec![0.0; t_len * batch * h],
        h: vec![0.0; t_len * batch * h],
        out: vec![0.0; t_len * batch * out_w],
    };

    for t in 0..t_len {
        let cell = &cells[assignment[t]];
        let z = &mut tr.z[t * batch * zw..(t + 1) * batch * zw];
        for b in 0..batch {
            let row = &mut z[b * zw..(b + 1) * zw];
            if t > 0 {
                row[..h].copy_from_slice(
                    &tr.h[((t - 1) * batch + b) * h..((t - 1) * batch + b + 1) * h],
                );
            }
            row[h..].copy_from_slice(&input[(t * batch + b) * inp..(t * batch + b + 1) * inp]);
        }
        let pre = &mut tr.gates[t * batch * 4 * h..(t + 1) * batch * 4 * h];
        for b in 0..batch {
            pre[b * 4 * h..(b + 1) * 4 * h].copy_from_slice(cell.b());
        }
        gemm(batch, zw, 4 * h, z, false, cell.w(), true, pre, 1.0);
        if ln {
            let (gain, shift) = (cell.ln_gain(), cell.ln_bias());
            for b in 0..batch {
                for g in 0..4 {
                    let lo = b * 4 * h + g * h;
                    let block = &mut pre[lo..lo + h];
                    let inv = standardize_in_place(block, LN_EPS);
                    tr.inv_std[(t * batch + b) * 4 + g] = inv;
                    let xh = &mut tr.xhat[t * batch * 4 * h + lo..t * batch * 4 * h + lo + h];
                    xh.copy_from_slice(block);
                    for j in 0..h {
                        block[j] = gain[g * h + j] * block[j] + shift[g * h + j];
                    }
                }
            }
        }
        for b in 0..batch {
            let gb = &mut pre[b * 4 * h..(b + 1) * 4 * h];
            let idx = (t * batch + b) * h;
            for j in 0..h {
                let i = sigmoid(gb[j]);
                let cand = gb[h + j].tanh();
                let f = sigmoid(gb[2 * h + j]);
                let o = sigmoid(gb[3 * h + j]);
                gb[j] = i;
                gb[h + j] = cand;
                gb[2 * h + j] = f;
                gb[3 * h + j] = o;
                let c_prev = if t > 0 {
                    tr.c[idx - batch * h + j]
                } else {
                    0.0
                };
                let c = i * cand + f * c_prev;
                let tc = c.tanh();
                tr.c[idx + j] = c;
                tr.tanh_c[idx + j] = tc;
                tr.h[idx + j] = o * tc;
            }
        }
        if out_w > 0 {
            let ob = &mut tr.out[t * batch * out_w..(t + 1) * batch * out_w];
            for b in 0..batch {
                ob[b * out_w..(b + 1) * out_w].copy_from_slice(cell.b_y());
            }
            let hs = &tr.h[t * batch * h..(t + 1) * batch * h];
            gemm(batch, h, out_w, hs, false, cell.w_y(), true, ob, 1.0);
        }
    }
    tr
}

fn add_col_sums(src: &[f64], rows: usize, cols: usize, dst: &mut [f64]) {
    for r in 0..rows {
        dst.iter_mut()
            .zip(&src[r * cols..(r + 1) * cols])
            .for_each(|(d, s)| *d += s);
    }
}

/// Backpropagates through a traced layer.
///
/// `d_out` is the gradient w.r.t. the head outputs, `d_h` an external
/// gradient w.r.t. the hidden states (from a layer above). Parameter
/// gradients are added into `cell_grads[cell index]`; the input gradient,
/// `[t][b][in]`, is written to `d_input` when given.
pub(crate) fn layer_backward<S: AsRef<[f64]>>(
    cells: &[CellParams<S>],
    assignment: &[usize],
    tr: &LayerTrace,
    d_out: Option<&[f64]>,
    d_h: Option<&[f64]>,
    cell_grads: &mut [Vec<f64>],
    mut d_input: Option<&mut [f64]>,
) {
    let shape = tr.shape;
    let (t_len, batch) = (tr.t_len, tr.batch);
    let (h, out_w) = (shape.hidden, shape.out);
    let zw = shape.concat();
    let off = shape.offsets();

    let mut dh = vec![0.0; batch * h];
    let mut dh_next = vec![0.0; batch * h];
    let mut dc_next = vec![0.0; batch * h];
    let mut da = vec![0.0; batch * 4 * h];
    let mut dz = vec![0.0; batch * zw];

    for t in (0..t_len).rev() {
        let ci = assignment[t];
        let cell = &cells[ci];
        let grad = &mut cell_grads[ci];

        dh.copy_from_slice(&dh_next);
        if let Some(ext) = d_h {
            dh.iter_mut()
                .zip(&ext[t * batch * h..(t + 1) * batch * h])
                .for_each(|(a, b)| *a += b);
        }
        let hs = &tr.h[t * batch * h..(t + 1) * batch * h];
        if let (Some(dout), true) = (d_out, out_w > 0) {
            let dy = &dout[t * batch * out_w..(t + 1) * batch * out_w];
            gemm(batch, out_w, h, dy, false, cell.w_y(), false, &mut dh, 1.0);
            gemm(
                out_w,
                batch,
                h,
                dy,
                true,
                hs,
                false,
                &mut grad[off.w_y..off.b_y],
                1.0,
            );
            add_col_sums(dy, batch, out_w, &mut grad[off.b_y..off.end]);
        }

        let gates = &tr.gates[t * batch * 4 * h..(t + 1) * batch * 4 * h];
        for b in 0..batch {
            let g = &gates[b * 4 * h..(b + 1) * 4 * h];
            let idx = (t * batch + b) * h;
            let dab = &mut da[b * 4 * h..(b + 1) * 4 * h];
            for j in 0..h {
                let (i, cand, f, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                let tc = tr.tanh_c[idx + j];
                let dhj = dh[b * h + j];
                let dc = dhj * o * (1.0 - tc * tc) + dc_next[b * h + j];
                let c_prev = if t > 0 {
                    tr.c[idx - batch * h + j]
                } else {
                    0.0
                };
                dab[j] = dc * cand * i * (1.0 - i);
                dab[h + j] = dc * i * (1.0 - cand * cand);
                dab[2 * h + j] = dc * c_prev * f * (1.0 - f);
                dab[3 * h + j] = dhj * tc * o * (1.0 - o);
                dc_next[b * h + j] = dc * f;
            }
        }

        if shape.layer_norm {
            let gain = cell.ln_gain();
            let (head, tail) = grad.split_at_mut(off.ln_bias);
            let dgain = &mut head[off.ln_gain..];
            let dshift = &mut tail[..4 * h];
            for b in 0..batch {
                for g in 0..4 {
                    let lo = b * 4 * h + g * h;
                    let xh = &tr.xhat[t * batch * 4 * h + lo..t * batch * 4 * h + lo + h];
                    let inv = tr.inv_std[(t * batch + b) * 4 + g];
                    let dv = layer_norm_backward(
                        xh,
                        inv,
                        &gain[g * h..(g + 1) * h],
                        &da[lo..lo + h],
                        &mut dgain[g * h..(g + 1) * h],
                        &mut dshift[g * h..(g + 1) * h],
                    );
                    da[lo..lo + h].copy_from_slice(&dv);
                }
            }
        }

        add_col_sums(&da, batch, 4 * h, &mut grad[off.b..off.ln_gain]);
        let z = &tr.z[t * batch * zw..(t + 1) * batch * zw];
        gemm(
            4 * h,
            batch,
            zw,
            &da,
            true,
            z,
            false,
            &mut grad[off.w..off.b],
            1.0,
        );
        gemm(batch, 4 * h, zw, &da, false, cell.w(), false, &mut dz, 0.0);

        for b in 0..batch {
            dh_next[b * h..(b + 1) * h].copy_from_slice(&dz[b * zw..b * zw + h]);
            if let Some(di) = d_input.as_deref_mut() {
                let inp = shape.input;
                di[(t * batch + b) * inp..(t * batch + b + 1) * inp]
                    .copy_from_slice(&dz[b * zw + h..(b + 1) * zw]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::lstm_step;
    use crate::numerics::{grad_check, GradCheckOptions, Rng};

    fn random_input(t_len: usize, batch: usize, inp: usize, rng: &mut Rng) -> Vec<f64> {
        (0..t_len * batch * inp)
            .map(|_| rng.uniform_range(-1.0, 1.0))
            .collect()
    }

    #[test]
    fn batched_forward_matches_single_step_reference() {
        for &ln in &[false, true] {
            let mut rng = Rng::new(21);
            let shape = CellShape::new(3, 4, 2, ln);
            let cells: Vec<CellParams> = (0..2)
                .map(|_| CellParams::init(shape, ln, &mut rng))
                .collect();
            let assignment = vec![0, 0, 1, 1, 0];
            let batch = 3;
            let input = random_input(5, batch, 3, &mut rng);
            let tr = layer_forward(&cells, &assignment, &input, batch);
            for b in 0..batch {
                let (mut h, mut c) = (vec![0.0; 4], vec![0.0; 4]);
                for (t, &a) in assignment.iter().enumerate() {
                    let x = &input[(t * batch + b) * 3..(t * batch + b + 1) * 3];
                    (h, c) = lstm_step(&cells[a], &h, &c, x, ln).unwrap();
                    let got = &tr.h[(t * batch + b) * 4..(t * batch + b + 1) * 4];
                    for (g, w) in got.iter().zip(&h) {
                        assert!((g - w).abs() <= 1e-12);
                    }
                }
            }
        }
    }

    /// Scalar loss `sum(out * r1) + sum(h * r2)` so both gradient entry points are exercised.
    #[test]
    fn backward_passes_grad_check() {
        for &ln in &[false, true] {
            let mut rng = Rng::new(3);
            let shape = CellShape::new(2, 3, 2, ln);
            let k = 2;
            let assignment = vec![0, 1, 1, 0];
            let (t_len, batch) = (assignment.len(), 2);
            let mut params: Vec<f64> = (0..k)
                .flat_map(|_| CellParams::init(shape, false, &mut rng).into_vec())
                .collect();
            params.iter_mut().for_each(|v| *v += 0.05 * rng.normal());
            let input = random_input(t_len, batch, 2, &mut rng);
            let r1: Vec<f64> = (0..t_len * batch * 2).map(|_| rng.normal()).collect();
            let r2: Vec<f64> = (0..t_len * batch * 3).map(|_| rng.normal()).collect();
            let n = shape.len();
            let split = |p: &[f64]| -> Vec<CellParams> {
                (0..k)
                    .map(|i| {
                        CellParams::from_buffer(shape, p[i * n..(i + 1) * n].to_vec()).unwrap()
                    })
                    .collect()
            };
            let loss_of = |p: &[f64], x: &[f64]| {
                let tr = layer_forward(&split(p), &assignment, x, batch);
                let a: f64 = tr.out.iter().zip(&r1).map(|(a, b)| a * b).sum();
                let b: f64 = tr.h.iter().zip(&r2).map(|(a, b)| a * b).sum();
                a + b
            };
            let cells = split(&params);
            let tr = layer_forward(&cells, &assignment, &input, batch);
            let mut grads = vec![vec![0.0; n]; k];
            let mut d_in = vec![0.0; input.len()];
            layer_backward(
                &cells,
                &assignment,
                &tr,
                Some(&r1),
                Some(&r2),
                &mut grads,
                Some(&mut d_in),
            );
            let flat: Vec<f64> = grads.concat();
            let opts = GradCheckOptions::default();
            let rep = grad_check(|p| Ok(loss_of(p, &input)), &params, &flat, &opts).unwrap();
            assert!(rep.max_rel_error <= 1e-4, "params ln={ln}: {rep:?}");
            let rep = grad_check(|x| Ok(loss_of(&params, x)), &input, &d_in, &opts).unwrap();
            assert!(rep.max_rel_error <= 1e-4, "inputs ln={ln}: {rep:?}");
        }
    }
}
