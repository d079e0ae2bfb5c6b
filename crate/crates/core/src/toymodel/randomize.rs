use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ToyModel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of output-first parameter groups replaced at `fraction`.
pub fn randomized_group_count(fraction: f64, groups: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!(
            "randomization fraction {fraction} outside [0, 1]"
        )));
    }
    Ok(((fraction * groups as f64).ceil() as usize).min(groups))
}

/// Replaces the first `ceil(fraction · groups)` parameter groups, counted
/// from the output layer, with Gaussian draws whose standard deviation
/// matches the group's empirical spread. Group `g` draws from its own
/// ChaCha stream so the result depends only on `(seed, g)`.
pub fn randomize_layers<T: Scalar>(
    model: &ToyModel<T>,
    fraction: f64,
    seed: u64,
) -> Result<ToyModel<T>> {
    let groups = model.parameter_groups().len();
    let count = randomized_group_count(fraction, groups)?;
    Ok(model.map_groups(|g, values| {
        if g >= count {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n;
        let var = values
            .iter()
            .map(|v| (v.to_f64_lossy() - mean).powi(2))
            .sum::<f64>()
            / n;
        let dist = Normal::new(0.0, var.sqrt()).expect("finite spread");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(g as u64);
        Some(
            (0..values.len())
                .map(|_| T::lit(dist.sample(&mut rng)))
                .collect(),
        )
    }))
}
