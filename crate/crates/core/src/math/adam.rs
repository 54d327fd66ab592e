use super::{MathError, Mlp, MlpGrads};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments for one network plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: MlpGrads,
    pub second: MlpGrads,
    pub step: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(params: &Mlp, config: AdamConfig) -> Self {
        Self {
            first: MlpGrads::zeros_like(params),
            second: MlpGrads::zeros_like(params),
            step: 0,
            config,
        }
    }

    pub fn matches(&self, params: &Mlp) -> bool {
        self.first.matches(params) && self.second.matches(params)
    }
}

/// One bias-corrected Adam update. Non-finite gradients are rejected before
/// anything is modified.
pub fn adam_step(params: &mut Mlp, grads: &MlpGrads, state: &mut AdamState, lr: f64) -> Result<(), MathError> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(MathError::InvalidHyperparameter(format!("learning rate {lr}")));
    }
    if !grads.matches(params) || !state.matches(params) {
        return Err(MathError::InvalidLayout("gradient or moment shape differs from parameters".into()));
    }
    if !grads.is_finite() {
        return Err(MathError::NonFinite("adam gradients"));
    }
    let AdamConfig { beta1, beta2, eps } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);

    let (inv_c1, inv_c2) = (1.0 / c1, 1.0 / c2);
    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = flush(beta1 * *m + (1.0 - beta1) * g);
            *v = flush(beta2 * *v + (1.0 - beta2) * g * g);
            *p -= lr * (*m * inv_c1) / ((*v * inv_c2).sqrt() + eps);
        }
    };
    for (((layer, g), m), v) in params
        .layers_mut()
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.first.layers)
        .zip(&mut state.second.layers)
    {
        update(
            contiguous_mut(layer.weights.as_slice_mut()),
            contiguous(g.weights.as_slice()),
            contiguous_mut(m.weights.as_slice_mut()),
            contiguous_mut(v.weights.as_slice_mut()),
        );
        update(
            contiguous_mut(layer.bias.as_slice_mut()),
            contiguous(g.bias.as_slice()),
            contiguous_mut(m.bias.as_slice_mut()),
            contiguous_mut(v.bias.as_slice_mut()),
        );
    }
    Ok(())
}

/// Moments decay geometrically once their gradients vanish; subnormal
/// values carry no information and make every later update very slow.
#[inline]
fn flush(x: f64) -> f64 {
    if x.abs() < f64::MIN_POSITIVE {
        0.0
    } else {
        x
    }
}

fn contiguous(s: Option<&[f64]>) -> &[f64] {
    s.expect("parameter arrays are standard layout")
}

fn contiguous_mut(s: Option<&mut [f64]>) -> &mut [f64] {
    s.expect("parameter arrays are standard layout")
}
