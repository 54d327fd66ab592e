use super::{Mlp, MlpGrads};
use crate::rng::RngStream;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Compares the analytic gradient returned by `loss_and_grad` with central
/// finite differences on `probes` randomly chosen coordinates. Returns the
/// largest relative error, `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn gradient_check<F>(loss_and_grad: F, params: &Mlp, probes: usize, rng: &mut RngStream) -> f64
where
    F: Fn(&Mlp) -> (f64, MlpGrads),
{
    let (_, analytic) = loss_and_grad(params);
    let count = params.param_count();
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let i = rng.below(count);
        let original = params.param(i);
        probe.set_param(i, original + FD_STEP);
        let (up, _) = loss_and_grad(&probe);
        probe.set_param(i, original - FD_STEP);
        let (down, _) = loss_and_grad(&probe);
        probe.set_param(i, original);
        let numeric = (up - down) / (2.0 * FD_STEP);
        let a = analytic.get(i);
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}
