use rand::Rng;

use super::network::Network;
use super::train::Sample;
use crate::error::Result;
use crate::rng;

/// |a − n| / max(|a| + |n|, 1e−8)
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn loss(net: &Network, sample: &Sample<'_>) -> Result<f64> {
    let p = net.predict(sample.sequence, sample.one_hot)?;
    Ok(0.5 * (p - sample.target).powi(2))
}

fn nudge(net: &mut Network, index: usize, delta: f64) {
    let mut offset = 0;
    net.visit_params_mut(|s| {
        if index >= offset && index < offset + s.len() {
            s[index - offset] += delta;
        }
        offset += s.len();
    });
}

/// Compares backpropagated gradients with central differences (step 1e−4)
/// on `samples` randomly chosen parameters (all of them if fewer exist).
/// Dropout is not applied. Returns the largest relative error.
pub fn gradcheck(net: &Network, sample: &Sample<'_>, samples: usize, seed: u64) -> Result<f64> {
    let cache = net.forward_train(sample.sequence, sample.one_hot, None)?;
    let mut grads = net.zero_gradients();
    net.backward(&cache, sample.target, &mut grads)?;
    let analytic = grads.flat();
    let n = analytic.len();
    let indices: Vec<usize> = if n <= samples {
        (0..n).collect()
    } else {
        let mut r = rng::seeded(seed);
        (0..samples).map(|_| r.random_range(0..n)).collect()
    };
    let h = 1e-4;
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for idx in indices {
        nudge(&mut probe, idx, h);
        let up = loss(&probe, sample)?;
        nudge(&mut probe, idx, -2.0 * h);
        let down = loss(&probe, sample)?;
        nudge(&mut probe, idx, h);
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(analytic[idx], numeric));
    }
    Ok(worst)
}
