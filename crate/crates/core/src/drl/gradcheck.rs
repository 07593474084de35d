use super::network::QNetwork;
use crate::error::Result;

/// `|a - n| / max(|a| + |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(floor)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub parameters_checked: usize,
}

/// Compares the backpropagated gradient of the batch loss against central
/// differences with step `h`, one parameter at a time.
pub fn check_gradient(
    net: &QNetwork,
    samples: &[(&[f64], usize, f64)],
    h: f64,
) -> Result<GradCheckReport> {
    let (_, analytic) = net.loss_and_gradient(samples)?;
    let analytic = analytic.params();
    let base = net.params();
    let mut probe = net.clone();
    let mut params = base.clone();
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        params[i] = base[i] + h;
        probe.set_params(&params)?;
        let (plus, _) = probe.loss_and_gradient(samples)?;
        params[i] = base[i] - h;
        probe.set_params(&params)?;
        let (minus, _) = probe.loss_and_gradient(samples)?;
        params[i] = base[i];
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(relative_error(analytic[i], numeric, 1e-6));
    }
    Ok(GradCheckReport {
        max_relative_error: worst,
        parameters_checked: base.len(),
    })
}
