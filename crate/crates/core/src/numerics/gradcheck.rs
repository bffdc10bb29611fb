use super::Rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub h: f64,
    /// Check at most this many coordinates (sampled without replacement); all when `None`.
    pub max_coords: Option<usize>,
    pub seed: u64,
    /// Relative disagreement between one-sided differences above which a
    /// coordinate is reported as a kink instead of being scored.
    pub kink_tol: f64,
    /// Coordinates whose floating-point round-off bound on the central
    /// difference exceeds `resolution * (|a| + |n|)` are reported as
    /// noise-limited instead of being scored.
    pub resolution: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            max_coords: None,
            seed: 0,
            kink_tol: 0.1,
            resolution: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinate achieving `max_rel_error`.
    pub worst_index: Option<usize>,
    pub checked: usize,
    /// Coordinates where the loss is not differentiable at the probe point.
    pub kinks: Vec<usize>,
    /// Coordinates too small for the difference quotient to resolve.
    pub noise_limited: Vec<usize>,
    /// Largest `|a - n|` among noise-limited coordinates.
    pub noise_limited_max_abs: f64,
}

/// Compares `analytic` against central differences of `loss` around `params`.
///
/// Relative error per coordinate is `|a - n| / max(1e-8, |a| + |n|)`.
pub fn grad_check<F>(
    mut loss: F,
    params: &[f64],
    analytic: &[f64],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if analytic.len() != params.len() {
        return Err(Error::shape(
            "analytic gradient length differs from parameters",
        ));
    }
    if opts.h <= 0.0 {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut coords: Vec<usize> = (0..params.len()).collect();
    if let Some(k) = opts.max_coords {
        if k < coords.len() {
            Rng::new(opts.seed).shuffle(&mut coords);
            coords.truncate(k);
            coords.sort_unstable();
        }
    }
    let mut probe = |p: &[f64]| -> Result<f64> {
        let v = loss(p)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::numeric("loss is non-finite at a probe point"))
        }
    };
    let f0 = probe(params)?;
    let mut work = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: None,
        checked: 0,
        kinks: Vec::new(),
        noise_limited: Vec::new(),
        noise_limited_max_abs: 0.0,
    };
    for &i in &coords {
        let orig = work[i];
        work[i] = orig + opts.h;
        let fp = probe(&work)?;
        work[i] = orig - opts.h;
        let fm = probe(&work)?;
        work[i] = orig;
        let forward = (fp - f0) / opts.h;
        let backward = (f0 - fm) / opts.h;
        let spread = (forward - backward).abs();
        if spread > opts.kink_tol * (forward.abs() + backward.abs()).max(1e-3) {
            report.kinks.push(i);
            continue;
        }
        let numeric = (fp - fm) / (2.0 * opts.h);
        let a = analytic[i];
        let roundoff = 4.0 * f64::EPSILON * fp.abs().max(fm.abs()) / (2.0 * opts.h);
        if roundoff > opts.resolution * (a.abs() + numeric.abs()) {
            report.noise_limited.push(i);
            report.noise_limited_max_abs = report.noise_limited_max_abs.max((a - numeric).abs());
            continue;
        }
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        report.checked += 1;
        if report.worst_index.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = Some(i);
        }
    }
    Ok(report)
}
