use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Result of comparing analytic gradients with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub probes: usize,
    /// `(tensor, index, analytic, numeric)` at the worst probe.
    pub worst: Option<(usize, usize, f64, f64)>,
}

/// `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Compare the gradients returned by `loss_fn` against central differences
/// at up to `n_probes` random coordinates of each parameter tensor.
///
/// `loss_fn` maps parameters to `(loss, gradients)` and must be deterministic.
/// The report is returned as-is; callers decide what error is acceptable.
pub fn finite_diff_check<F>(mut loss_fn: F, params: &[Tensor], h: f64, n_probes: usize, seed: u64) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor]) -> Result<(f64, Vec<Tensor>)>,
{
    let (_, analytic) = loss_fn(params)?;
    if analytic.len() != params.len() {
        return Err(Error::InvalidArgument(format!(
            "loss_fn returned {} gradients for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        probes: 0,
        worst: None,
    };
    for (ti, param) in params.iter().enumerate() {
        let count = n_probes.min(param.numel());
        let mut picks = sample(&mut rng, param.numel(), count).into_vec();
        picks.sort_unstable();
        for idx in picks {
            let x0 = param.data()[idx];
            work[ti].data_mut()[idx] = x0 + h;
            let (plus, _) = loss_fn(&work)?;
            work[ti].data_mut()[idx] = x0 - h;
            let (minus, _) = loss_fn(&work)?;
            work[ti].data_mut()[idx] = x0;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[ti].data()[idx];
            let err = relative_error(a, numeric);
            report.probes += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((ti, idx, a, numeric));
            }
        }
    }
    Ok(report)
}
