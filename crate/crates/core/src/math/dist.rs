use ndarray::{Array2, ArrayView2, Axis};

use super::{check_dim, MathError};

/// Lower clamp for predicted log-variances.
pub const LOG_VAR_MIN: f64 = -6.0;
/// Upper clamp for predicted log-variances.
pub const LOG_VAR_MAX: f64 = 2.0;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Numerically stable softmax; returns probabilities and log-probabilities.
pub fn softmax_with_log(logits: &[f64]) -> Result<(Vec<f64>, Vec<f64>), MathError> {
    if logits.is_empty() {
        return Err(MathError::InvalidDistribution("empty logits".into()));
    }
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(MathError::NonFinite("softmax logits"));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = logits.iter().map(|&l| l - max).collect();
    let log_norm = shifted.iter().map(|s| s.exp()).sum::<f64>().ln();
    let log_probs: Vec<f64> = shifted.iter().map(|s| s - log_norm).collect();
    let probs = log_probs.iter().map(|l| l.exp()).collect();
    Ok((probs, log_probs))
}

/// Row-wise softmax over a batch of logits.
pub fn softmax_rows(logits: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>), MathError> {
    let mut log_probs = logits.to_owned();
    for mut row in log_probs.axis_iter_mut(Axis(0)) {
        if !row.iter().all(|v| v.is_finite()) {
            return Err(MathError::NonFinite("softmax logits"));
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|l| l - max);
        let log_norm = row.iter().map(|s| s.exp()).sum::<f64>().ln();
        row.mapv_inplace(|s| s - log_norm);
    }
    let probs = log_probs.mapv(f64::exp);
    Ok((probs, log_probs))
}

/// Shannon entropy in nats, with `0 log 0 = 0`.
pub fn categorical_entropy(probs: &[f64]) -> Result<f64, MathError> {
    if probs.is_empty() {
        return Err(MathError::InvalidDistribution("empty".into()));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(MathError::InvalidDistribution("negative or non-finite mass".into()));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(MathError::InvalidDistribution(format!("mass sums to {total}")));
    }
    let h: f64 = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    Ok(h.clamp(0.0, (probs.len() as f64).ln()))
}

/// Gaussian with diagonal covariance, parameterized by log-variance.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    log_var: Vec<f64>,
}

impl DiagGaussian {
    /// Builds the Gaussian, clamping every log-variance into
    /// `[LOG_VAR_MIN, LOG_VAR_MAX]`.
    pub fn new(mean: Vec<f64>, log_var: Vec<f64>) -> Result<Self, MathError> {
        check_dim("gaussian log-variance", mean.len(), log_var.len())?;
        if !mean.iter().chain(&log_var).all(|v| v.is_finite()) {
            return Err(MathError::NonFinite("gaussian parameters"));
        }
        let log_var = log_var.into_iter().map(clamp_log_var).collect();
        Ok(Self { mean, log_var })
    }

    /// Isotropic Gaussian with the given standard deviation.
    pub fn isotropic(mean: Vec<f64>, std: f64) -> Result<Self, MathError> {
        let lv = 2.0 * std.ln();
        let n = mean.len();
        Self::new(mean, vec![lv; n])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_var(&self) -> &[f64] {
        &self.log_var
    }
}

#[inline]
pub(crate) fn clamp_log_var(lv: f64) -> f64 {
    lv.clamp(LOG_VAR_MIN, LOG_VAR_MAX)
}

/// Per-dimension closed-form `KL(N(mp, e^lp) || N(mq, e^lq))`.
#[inline]
pub(crate) fn gaussian_kl_1d(mp: f64, lp: f64, mq: f64, lq: f64) -> f64 {
    let r = lp - lq;
    let d = mp - mq;
    let variance_part = 0.5 * (r.exp_m1() - r);
    let mean_part = 0.5 * d * d * (-lq).exp();
    variance_part.max(0.0) + mean_part
}

/// `KL(p || q)` summed over dimensions.
pub fn diag_gaussian_kl(p: &DiagGaussian, q: &DiagGaussian) -> Result<f64, MathError> {
    check_dim("gaussian kl", p.dim(), q.dim())?;
    Ok((0..p.dim())
        .map(|i| gaussian_kl_1d(p.mean[i], p.log_var[i], q.mean[i], q.log_var[i]))
        .sum())
}

/// Log-density of `x` under `g`.
pub fn diag_gaussian_logpdf(x: &[f64], g: &DiagGaussian) -> Result<f64, MathError> {
    check_dim("gaussian logpdf", g.dim(), x.len())?;
    Ok(-0.5
        * x.iter()
            .zip(&g.mean)
            .zip(&g.log_var)
            .map(|((&xi, &m), &lv)| LN_2PI + lv + (xi - m) * (xi - m) * (-lv).exp())
            .sum::<f64>())
}
