#![allow(dead_code)]

use deep_aif::math::Mlp;
use deep_aif::replay::{Batch, Transition};
use deep_aif::rng::RngStream;

pub fn transition(state: Vec<f64>, action: usize, reward: f64, next_state: Vec<f64>, terminal: bool) -> Transition {
    Transition {
        state,
        action,
        reward,
        next_state,
        terminal,
        truncated: false,
    }
}

pub fn batch(items: &[Transition]) -> Batch {
    let refs: Vec<&Transition> = items.iter().collect();
    Batch::from_transitions(&refs)
}

/// A random batch over `dim`-dimensional states.
pub fn random_batch(n: usize, dim: usize, actions: usize, terminal_rate: f64, rng: &mut RngStream) -> Batch {
    let items: Vec<Transition> = (0..n)
        .map(|_| {
            let s = (0..dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            let s2 = (0..dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            transition(s, rng.below(actions), rng.uniform_range(-1.0, 1.0), s2, rng.uniform() < terminal_rate)
        })
        .collect();
    batch(&items)
}

/// Sets the output layer to zero weights and the given bias, so the network
/// outputs `bias` for every input.
pub fn constant_output(net: &mut Mlp, bias: &[f64]) {
    let last = net.layers_mut().last_mut().expect("non-empty");
    last.weights.fill(0.0);
    last.bias.assign(&ndarray::ArrayView1::from(bias));
}
