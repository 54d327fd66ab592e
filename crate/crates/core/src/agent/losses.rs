//! Loss functions with their exact gradients. Each returns the scalar loss
//! together with parameter gradients, so every one of them can be checked
//! against finite differences.

use ndarray::{s, Array2, ArrayView2, Axis};

use crate::math::{softmax_rows, ForwardCache, MathError, Mlp, MlpGrads, LOG_VAR_MAX, LOG_VAR_MIN};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Splits a transition-head output into means and clamped log-variances.
pub fn split_gaussian_head(out: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
    let d = out.ncols() / 2;
    let mean = out.slice(s![.., ..d]).to_owned();
    let log_var = out.slice(s![.., d..]).mapv(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX));
    (mean, log_var)
}

#[derive(Debug, Clone)]
pub struct TransitionLoss {
    /// Mean over the batch of the Gaussian negative log-likelihood.
    pub loss: f64,
    /// Mean squared error of the predicted mean, per state component.
    pub mse: f64,
    pub grads: MlpGrads,
    pub mean: Array2<f64>,
    pub log_var: Array2<f64>,
}

/// Negative log-likelihood of `next_states` under the transition head's
/// diagonal Gaussian. Gradients do not flow through clamped log-variances.
pub fn transition_nll(
    net: &Mlp,
    inputs: ArrayView2<f64>,
    next_states: ArrayView2<f64>,
) -> Result<TransitionLoss, MathError> {
    let (out, cache) = net.forward_batch(inputs)?;
    transition_nll_from(net, &out, &cache, next_states)
}

pub(crate) fn transition_nll_from(
    net: &Mlp,
    out: &Array2<f64>,
    cache: &ForwardCache,
    next_states: ArrayView2<f64>,
) -> Result<TransitionLoss, MathError> {
    let n = out.nrows();
    let d = next_states.ncols();
    if out.ncols() != 2 * d || next_states.nrows() != n {
        return Err(MathError::DimensionMismatch {
            context: "transition head",
            expected: 2 * d,
            actual: out.ncols(),
        });
    }
    let inv_n = 1.0 / n as f64;
    let mut grad = Array2::zeros(out.raw_dim());
    let mut loss = 0.0;
    let mut sq = 0.0;
    for i in 0..n {
        for j in 0..d {
            let mu = out[[i, j]];
            let raw = out[[i, d + j]];
            let lv = raw.clamp(LOG_VAR_MIN, LOG_VAR_MAX);
            let err = next_states[[i, j]] - mu;
            let prec = (-lv).exp();
            loss += 0.5 * (LN_2PI + lv + err * err * prec);
            sq += err * err;
            grad[[i, j]] = -err * prec * inv_n;
            if (LOG_VAR_MIN..=LOG_VAR_MAX).contains(&raw) {
                grad[[i, d + j]] = 0.5 * (1.0 - err * err * prec) * inv_n;
            }
        }
    }
    let (grads, _) = net.backward(cache, grad.view(), false)?;
    let (mean, log_var) = split_gaussian_head(out.view());
    Ok(TransitionLoss {
        loss: loss * inv_n,
        mse: sq / (n * d) as f64,
        grads,
        mean,
        log_var,
    })
}

/// Mean squared error between the network output at the taken action and
/// a constant target: `mean_i (out[i, a_i] - y_i)^2`.
pub fn value_regression(
    net: &Mlp,
    states: ArrayView2<f64>,
    actions: &[usize],
    targets: &[f64],
) -> Result<(f64, MlpGrads), MathError> {
    let (out, cache) = net.forward_batch(states)?;
    value_regression_from(net, &out, &cache, actions, targets)
}

pub(crate) fn value_regression_from(
    net: &Mlp,
    out: &Array2<f64>,
    cache: &ForwardCache,
    actions: &[usize],
    targets: &[f64],
) -> Result<(f64, MlpGrads), MathError> {
    let n = out.nrows();
    if actions.len() != n || targets.len() != n {
        return Err(MathError::DimensionMismatch {
            context: "value regression batch",
            expected: n,
            actual: actions.len().min(targets.len()),
        });
    }
    let mut grad = Array2::zeros(out.raw_dim());
    let mut loss = 0.0;
    for i in 0..n {
        let diff = out[[i, actions[i]]] - targets[i];
        loss += diff * diff;
        grad[[i, actions[i]]] = 2.0 * diff / n as f64;
    }
    let (grads, _) = net.backward(cache, grad.view(), false)?;
    Ok((loss / n as f64, grads))
}

#[derive(Debug, Clone)]
pub struct PolicyLoss {
    pub loss: f64,
    pub grads: MlpGrads,
    pub probs: Array2<f64>,
}

/// Divergence of the policy `q = softmax(logits)` from a fixed action prior
/// `log p`. With the entropy term: `mean_i sum_a q (log q - log p)`;
/// without it: `mean_i -sum_a q log p`.
pub fn policy_divergence(
    net: &Mlp,
    states: ArrayView2<f64>,
    log_prior: ArrayView2<f64>,
    with_entropy: bool,
) -> Result<PolicyLoss, MathError> {
    let (logits, cache) = net.forward_batch(states)?;
    if log_prior.dim() != logits.dim() {
        return Err(MathError::DimensionMismatch {
            context: "policy prior",
            expected: logits.ncols(),
            actual: log_prior.ncols(),
        });
    }
    let (q, log_q) = softmax_rows(logits.view())?;
    let n = q.nrows();
    let mut grad = Array2::zeros(q.raw_dim());
    let mut loss = 0.0;
    for i in 0..n {
        // per-action coefficient c_a; d/dlogit_k sum_a q_a c_a = q_k (c_k - E_q c)
        let c: Vec<f64> = (0..q.ncols())
            .map(|a| {
                if with_entropy {
                    log_q[[i, a]] - log_prior[[i, a]]
                } else {
                    -log_prior[[i, a]]
                }
            })
            .collect();
        let expected: f64 = c.iter().enumerate().map(|(a, ca)| q[[i, a]] * ca).sum();
        loss += expected;
        for (a, ca) in c.iter().enumerate() {
            grad[[i, a]] = q[[i, a]] * (ca - expected) / n as f64;
        }
    }
    let (grads, _) = net.backward(&cache, grad.view(), false)?;
    Ok(PolicyLoss {
        loss: loss / n as f64,
        grads,
        probs: q,
    })
}

/// Advantage-weighted log-likelihood: `mean_i -A_i log pi(a_i | s_i)`.
pub fn actor_objective(
    net: &Mlp,
    states: ArrayView2<f64>,
    actions: &[usize],
    advantages: &[f64],
) -> Result<PolicyLoss, MathError> {
    let (logits, cache) = net.forward_batch(states)?;
    let (probs, log_probs) = softmax_rows(logits.view())?;
    let n = probs.nrows();
    if actions.len() != n || advantages.len() != n {
        return Err(MathError::DimensionMismatch {
            context: "actor batch",
            expected: n,
            actual: actions.len().min(advantages.len()),
        });
    }
    let mut grad = Array2::zeros(probs.raw_dim());
    let mut loss = 0.0;
    for i in 0..n {
        let adv = advantages[i];
        loss -= adv * log_probs[[i, actions[i]]];
        for a in 0..probs.ncols() {
            let indicator = if a == actions[i] { 1.0 } else { 0.0 };
            grad[[i, a]] = -adv * (indicator - probs[[i, a]]) / n as f64;
        }
    }
    let (grads, _) = net.backward(&cache, grad.view(), false)?;
    Ok(PolicyLoss {
        loss: loss / n as f64,
        grads,
        probs,
    })
}

/// Row-wise `sum_a probs[i, a] * values[i, a]`.
pub fn expected_rows(probs: ArrayView2<f64>, values: ArrayView2<f64>) -> Vec<f64> {
    (&probs * &values).sum_axis(Axis(1)).to_vec()
}

/// Row-wise maximum.
pub fn max_rows(values: ArrayView2<f64>) -> Vec<f64> {
    values
        .axis_iter(Axis(0))
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}
