//! Pixel-wise class competition over a stack of attribution maps.
//!
//! For every pixel the stack's class scores are pushed through a softmax,
//! the resulting distributions are averaged over several inverse
//! temperatures, and the target map is reweighted by its own share. Pixels
//! where the target holds no more than a uniform share are zeroed.
//!
//! Sums over classes always run in ascending class-id order, so the output
//! is bit-identical for any ordering of the input stack.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{AttributionMap, AttributionStack};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LensConfig {
    /// Multipliers applied to attributions before the softmax.
    pub inverse_temperatures: Vec<f64>,
    pub mask_enabled: bool,
    /// Tie tolerance of the chance-level mask: a pixel survives only when its
    /// target weight exceeds `1/C'` by more than this amount.
    pub stability_epsilon: f64,
}

impl Default for LensConfig {
    fn default() -> Self {
        Self {
            inverse_temperatures: vec![1.0, 5.0, 100.0],
            mask_enabled: true,
            stability_epsilon: 1e-12,
        }
    }
}

impl LensConfig {
    pub fn with_scales(scales: &[f64]) -> Self {
        Self {
            inverse_temperatures: scales.to_vec(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inverse_temperatures.is_empty() {
            return Err(Error::Config("inverse temperature list is empty".into()));
        }
        if let Some(s) = self
            .inverse_temperatures
            .iter()
            .find(|s| !(s.is_finite() && **s > 0.0))
        {
            return Err(Error::Config(format!(
                "inverse temperature must be positive, got {s}"
            )));
        }
        if !(self.stability_epsilon >= 0.0 && self.stability_epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "stability epsilon must be non-negative, got {}",
                self.stability_epsilon
            )));
        }
        Ok(())
    }
}

/// Per-pixel distribution over the classes of a stack.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistributionStack<T> {
    class_ids: Vec<usize>,
    weights: Vec<Array2<T>>,
}

impl<T: Scalar> ClassDistributionStack<T> {
    pub fn class_ids(&self) -> &[usize] {
        &self.class_ids
    }

    pub fn weights(&self) -> &[Array2<T>] {
        &self.weights
    }

    pub fn weight_for(&self, class: usize) -> Option<&Array2<T>> {
        self.class_ids
            .iter()
            .position(|&c| c == class)
            .map(|k| &self.weights[k])
    }

    /// Largest deviation of a per-pixel sum from one.
    pub fn max_normalization_error(&self) -> T {
        let (h, w) = self.weights[0].dim();
        let mut worst = T::zero();
        for i in 0..h {
            for j in 0..w {
                let s: T = self.weights.iter().map(|wc| wc[[i, j]]).sum();
                worst = worst.max((s - T::one()).abs());
            }
        }
        worst
    }
}

/// Indices of the stack sorted by class id.
fn canonical_order(class_ids: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..class_ids.len()).collect();
    order.sort_by_key(|&k| class_ids[k]);
    order
}

/// Softmax over classes at each pixel of `s·A`, shifted by the per-pixel max.
pub fn pixel_softmax<T: Scalar>(
    stack: &AttributionStack<T>,
    inverse_temperature: f64,
) -> Result<ClassDistributionStack<T>> {
    if stack.len() < 2 {
        return Err(Error::InvalidStack(format!(
            "need at least 2 classes, got {}",
            stack.len()
        )));
    }
    if !(inverse_temperature.is_finite() && inverse_temperature > 0.0) {
        return Err(Error::Config(format!(
            "inverse temperature must be positive, got {inverse_temperature}"
        )));
    }
    let s = T::lit(inverse_temperature);
    let order = canonical_order(stack.class_ids());
    let maps: Vec<_> = stack.maps().iter().map(|m| m.values()).collect();
    let (h, w) = stack.dim();
    let mut weights = vec![Array2::zeros((h, w)); stack.len()];
    let mut exps = vec![T::zero(); stack.len()];
    for i in 0..h {
        for j in 0..w {
            let peak = maps
                .iter()
                .map(|m| s * m[[i, j]])
                .fold(T::neg_infinity(), T::max);
            let mut denom = T::zero();
            for &k in &order {
                exps[k] = (s * maps[k][[i, j]] - peak).exp();
                denom += exps[k];
            }
            for (wk, &e) in weights.iter_mut().zip(&exps) {
                wk[[i, j]] = e / denom;
            }
        }
    }
    Ok(ClassDistributionStack {
        class_ids: stack.class_ids().to_vec(),
        weights,
    })
}

/// Arithmetic mean of [`pixel_softmax`] over the configured inverse temperatures.
pub fn averaged_distribution<T: Scalar>(
    stack: &AttributionStack<T>,
    config: &LensConfig,
) -> Result<ClassDistributionStack<T>> {
    config.validate()?;
    let mut scales = config.inverse_temperatures.iter();
    let first = *scales.next().expect("validated non-empty");
    let mut acc = pixel_softmax(stack, first)?;
    if config.inverse_temperatures.len() == 1 {
        return Ok(acc);
    }
    for &s in scales {
        let d = pixel_softmax(stack, s)?;
        for (a, b) in acc.weights.iter_mut().zip(&d.weights) {
            *a += b;
        }
    }
    let n = T::from_count(config.inverse_temperatures.len());
    for a in &mut acc.weights {
        a.mapv_inplace(|v| v / n);
    }
    Ok(acc)
}

/// Refined target map plus the fraction of pixels that survived the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement<T> {
    pub map: AttributionMap<T>,
    pub kept_fraction: f64,
}

/// `A_target ⊙ W_target ⊙ [W_target > 1/C']` with `W` the averaged distribution.
pub fn refine<T: Scalar>(
    stack: &AttributionStack<T>,
    target: usize,
    config: &LensConfig,
) -> Result<AttributionMap<T>> {
    refine_detailed(stack, target, config).map(|r| r.map)
}

pub fn refine_detailed<T: Scalar>(
    stack: &AttributionStack<T>,
    target: usize,
    config: &LensConfig,
) -> Result<Refinement<T>> {
    let k = target_position(stack, target)?;
    let dist = averaged_distribution(stack, config)?;
    let base = stack.maps()[k].values();
    let weight = &dist.weights[k];
    let chance = T::one() / T::from_count(stack.len());
    let eps = T::lit(config.stability_epsilon);

    let mut kept = 0usize;
    let out = Array2::from_shape_fn(base.dim(), |(i, j)| {
        let wt = weight[[i, j]];
        if config.mask_enabled && wt - chance <= eps {
            T::zero()
        } else {
            kept += 1;
            base[[i, j]] * wt
        }
    });
    Ok(Refinement {
        map: AttributionMap::from_finite(out),
        kept_fraction: kept as f64 / base.len() as f64,
    })
}

fn target_position<T: Scalar>(stack: &AttributionStack<T>, target: usize) -> Result<usize> {
    stack.position(target).ok_or_else(|| Error::UnknownClass {
        class: target,
        available: stack.class_ids().to_vec(),
    })
}

fn check_aligned<T: Scalar>(
    stack: &AttributionStack<T>,
    dist: &ClassDistributionStack<T>,
) -> Result<()> {
    if stack.class_ids() != dist.class_ids() {
        return Err(Error::InvalidInput(format!(
            "distribution classes {:?} do not match stack classes {:?}",
            dist.class_ids(),
            stack.class_ids()
        )));
    }
    if dist.weights.iter().any(|w| w.dim() != stack.dim()) {
        return Err(Error::InvalidInput(
            "distribution dims do not match stack".into(),
        ));
    }
    Ok(())
}

/// Target attribution discounted by the share held by the other classes:
/// `A_target ⊙ (1 − Σ_{c≠target} W_c)`.
pub fn discount_form<T: Scalar>(
    stack: &AttributionStack<T>,
    target: usize,
    distribution: &ClassDistributionStack<T>,
) -> Result<AttributionMap<T>> {
    check_aligned(stack, distribution)?;
    let k = target_position(stack, target)?;
    let base = stack.maps()[k].values();
    let out = Array2::from_shape_fn(base.dim(), |(i, j)| {
        let others: T = (0..stack.len())
            .filter(|&c| c != k)
            .map(|c| distribution.weights[c][[i, j]])
            .sum();
        base[[i, j]] * (T::one() - others)
    });
    AttributionMap::new(out)
}

/// `A_target − Σ_c W_c ⊙ A_c`, which cancels itself wherever one class dominates.
pub fn naive_contrastive<T: Scalar>(
    stack: &AttributionStack<T>,
    target: usize,
    distribution: &ClassDistributionStack<T>,
) -> Result<AttributionMap<T>> {
    check_aligned(stack, distribution)?;
    let k = target_position(stack, target)?;
    let maps: Vec<_> = stack.maps().iter().map(|m| m.values()).collect();
    let out = Array2::from_shape_fn(maps[k].dim(), |(i, j)| {
        let mix: T = (0..stack.len())
            .map(|c| distribution.weights[c][[i, j]] * maps[c][[i, j]])
            .sum();
        maps[k][[i, j]] - mix
    });
    AttributionMap::new(out)
}
