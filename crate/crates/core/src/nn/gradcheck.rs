use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Scalar;

/// Flat, indexable view over a model's trainable parameters, in a fixed
/// order shared with its gradient layout.
pub trait Parameterized<T> {
    fn param_count(&self) -> usize;
    fn param(&self, i: usize) -> T;
    fn set_param(&mut self, i: usize, value: T);
}

/// Central-difference gradient verification.
///
/// Perturbs each checked parameter by `+-epsilon`, recomputes the loss, and
/// compares against the supplied analytic gradient. When the model has more
/// than `max_samples` parameters, a seeded random subsample of that size is
/// checked instead. Returns the maximum relative error
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<T, M>(
    model: &mut M,
    analytic: &[T],
    mut loss: impl FnMut(&M) -> T,
    epsilon: T,
    max_samples: usize,
    seed: u64,
) -> f64
where
    T: Scalar,
    M: Parameterized<T>,
{
    let n = model.param_count();
    assert_eq!(analytic.len(), n, "analytic gradient length");
    let mut indices: Vec<usize> = (0..n).collect();
    if n > max_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
        indices.truncate(max_samples);
    }
    let mut worst = 0.0f64;
    for &i in &indices {
        let orig = model.param(i);
        model.set_param(i, orig + epsilon);
        let up = loss(model).to_f64();
        model.set_param(i, orig - epsilon);
        let down = loss(model).to_f64();
        model.set_param(i, orig);
        let numeric = (up - down) / (2.0 * epsilon.to_f64());
        let ana = analytic[i].to_f64();
        let rel = (ana - numeric).abs() / ana.abs().max(numeric.abs()).max(1e-8);
        if rel > worst {
            worst = rel;
        }
    }
    worst
}
