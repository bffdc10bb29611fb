use super::Tensor;
use crate::error::{Error, Result};

/// Default layer-normalization epsilon.
pub const LN_EPS: f64 = 1e-5;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted softmax of `logits` written into `out`.
pub fn softmax_slice(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    if !logits.is_finite() {
        return Err(Error::numeric("softmax of non-finite logits"));
    }
    let mut out = vec![0.0; logits.len()];
    softmax_slice(logits.values(), &mut out);
    Tensor::new(logits.shape().to_vec(), out)
}

/// Vector-Jacobian product of softmax: given probabilities `p` and upstream
/// `dp`, returns `dz = p * (dp - <p, dp>)`.
pub fn softmax_backward(p: &[f64], dp: &[f64]) -> Vec<f64> {
    let inner: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
    p.iter().zip(dp).map(|(pi, di)| pi * (di - inner)).collect()
}

/// Normalizes `v` in place to zero mean / unit population variance and
/// returns `1 / sqrt(var + eps)`. Gain and bias are applied by the caller.
pub(crate) fn standardize_in_place(v: &mut [f64], eps: f64) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + eps).sqrt();
    v.iter_mut().for_each(|x| *x = (*x - mean) * inv);
    inv
}

/// `gain * (v - mean) / sqrt(var + eps) + bias` for slices; returns the
/// normalized vector before gain/bias together with the inverse deviation.
pub fn layer_norm_slice(
    v: &[f64],
    gain: &[f64],
    bias: &[f64],
    eps: f64,
    out: &mut [f64],
) -> (Vec<f64>, f64) {
    let mut xhat = v.to_vec();
    let inv = standardize_in_place(&mut xhat, eps);
    for i in 0..v.len() {
        out[i] = gain[i] * xhat[i] + bias[i];
    }
    (xhat, inv)
}

pub fn layer_norm(v: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
    if v.len() != gain.len() || v.len() != bias.len() || v.is_empty() {
        return Err(Error::shape("layer_norm needs equal, nonempty lengths"));
    }
    if eps <= 0.0 {
        return Err(Error::invalid("layer_norm eps must be positive"));
    }
    let mut out = vec![0.0; v.len()];
    layer_norm_slice(v.values(), gain.values(), bias.values(), eps, &mut out);
    Tensor::new(v.shape().to_vec(), out)
}

/// Backward pass of layer normalization for one vector.
///
/// Given the normalized input `xhat`, the inverse deviation, the gain and the
/// upstream gradient `dout`, returns `dv` and accumulates into `dgain`/`dbias`.
pub fn layer_norm_backward(
    xhat: &[f64],
    inv_std: f64,
    gain: &[f64],
    dout: &[f64],
    dgain: &mut [f64],
    dbias: &mut [f64],
) -> Vec<f64> {
    let n = xhat.len() as f64;
    let mut dxhat = vec![0.0; xhat.len()];
    for i in 0..xhat.len() {
        dgain[i] += dout[i] * xhat[i];
        dbias[i] += dout[i];
        dxhat[i] = dout[i] * gain[i];
    }
    let mean_d = dxhat.iter().sum::<f64>() / n;
    let mean_dx = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / n;
    dxhat
        .iter()
        .zip(xhat)
        .map(|(d, x)| inv_std * (d - mean_d - x * mean_dx))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, GradCheckOptions, Rng};
    use proptest::prelude::*;

    #[test]
    fn layer_norm_worked_values() {
        let t = |v: Vec<f64>| Tensor::vector(v);
        let out = layer_norm(&t(vec![3.0; 3]), &t(vec![1.0; 3]), &t(vec![0.0; 3]), LN_EPS).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));

        let out = layer_norm(
            &t(vec![1.0, -1.0]),
            &t(vec![1.0; 2]),
            &t(vec![0.0; 2]),
            1e-5,
        )
        .unwrap();
        let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((out.values()[0] - expect).abs() < 1e-12);
        assert!((out.values()[0] - 0.999995).abs() < 1e-6);
        assert!((out.values()[1] + 0.999995).abs() < 1e-6);

        let out = layer_norm(
            &t(vec![2.0, 4.0]),
            &t(vec![1.0; 2]),
            &t(vec![5.0; 2]),
            1e-15,
        )
        .unwrap();
        assert!((out.values()[0] - 4.0).abs() < 1e-9);
        assert!((out.values()[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn layer_norm_errors() {
        let t = |v: Vec<f64>| Tensor::vector(v);
        assert!(layer_norm(&t(vec![1.0, 2.0]), &t(vec![1.0]), &t(vec![0.0, 0.0]), 1e-5).is_err());
        assert!(layer_norm(&t(vec![1.0]), &t(vec![1.0]), &t(vec![0.0]), 0.0).is_err());
    }

    #[test]
    fn softmax_worked_values() {
        let p = softmax(&Tensor::vector(vec![0.0, 0.0, 0.0])).unwrap();
        assert!(p.values().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let p = softmax(&Tensor::vector(vec![1.0, 2.0])).unwrap();
        assert!((p.values()[0] - 0.2689414).abs() < 1e-6);
        assert!((p.values()[1] - 0.7310586).abs() < 1e-6);
        let base = softmax(&Tensor::vector(vec![0.0, 1.0])).unwrap();
        for c in [3.0, -7.5, 1024.0] {
            let shifted = softmax(&Tensor::vector(vec![c, c + 1.0])).unwrap();
            assert_eq!(shifted.values(), base.values());
        }
        assert!(softmax(&Tensor::vector(vec![f64::NAN, 1.0])).is_err());
    }

    proptest! {
        #[test]
        fn softmax_is_a_probability_vector(v in prop::collection::vec(-50.0f64..50.0, 1..12)) {
            let p = softmax(&Tensor::vector(v)).unwrap();
            prop_assert!(p.values().iter().all(|&x| x > 0.0));
            prop_assert!((p.values().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn softmax_and_layer_norm_backward_pass_grad_check() {
        let mut rng = Rng::new(11);
        let n = 6;
        let z: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        // f(z) = <w, softmax(z)>
        let f = |z: &[f64]| {
            let mut p = vec![0.0; z.len()];
            softmax_slice(z, &mut p);
            Ok(p.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>())
        };
        let mut p = vec![0.0; n];
        softmax_slice(&z, &mut p);
        let analytic = softmax_backward(&p, &w);
        let rep = grad_check(f, &z, &analytic, &GradCheckOptions::default()).unwrap();
        assert!(rep.max_rel_error <= 1e-4, "{rep:?}");

        // g(v, gain, bias) = <w, layer_norm(v)> over the concatenated parameters.
        let mut params: Vec<f64> = (0..3 * n).map(|_| rng.normal()).collect();
        params[n..2 * n].iter_mut().for_each(|g| *g += 1.0);
        let g = |p: &[f64]| {
            let mut out = vec![0.0; n];
            layer_norm_slice(&p[..n], &p[n..2 * n], &p[2 * n..], LN_EPS, &mut out);
            Ok(out.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>())
        };
        let mut out = vec![0.0; n];
        let (xhat, inv) = layer_norm_slice(
            &params[..n],
            &params[n..2 * n],
            &params[2 * n..],
            LN_EPS,
            &mut out,
        );
        let mut dgain = vec![0.0; n];
        let mut dbias = vec![0.0; n];
        let dv = layer_norm_backward(&xhat, inv, &params[n..2 * n], &w, &mut dgain, &mut dbias);
        let analytic: Vec<f64> = dv.into_iter().chain(dgain).chain(dbias).collect();
        let rep = grad_check(g, &params, &analytic, &GradCheckOptions::default()).unwrap();
        assert!(rep.max_rel_error <= 1e-4, "{rep:?}");
    }
}
