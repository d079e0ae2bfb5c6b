use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{gaussian_blur, positive_part, AttributionMap, BlurConfig, RegionMask};
use crate::scalar::Scalar;

/// How the blurred map is turned into a predicted pixel set for IoU,
/// precision, recall and F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Binarization {
    /// The `|R|` highest strictly positive pixels (ties in row-major order).
    #[default]
    TopRegionSize,
    /// Pixels strictly above `fraction_of_max` times the map maximum.
    Threshold { fraction_of_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizationOptions {
    /// `None` disables the blur.
    pub blur: Option<BlurConfig>,
    pub binarization: Binarization,
}

impl Default for LocalizationOptions {
    fn default() -> Self {
        Self {
            blur: Some(BlurConfig::default()),
            binarization: Binarization::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub ra: f64,
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub type MetricFn = fn(&LocalizationReport) -> f64;

impl LocalizationReport {
    /// Metric names and accessors in column order.
    pub const METRICS: [(&'static str, MetricFn); 5] = [
        ("ra", |r| r.ra),
        ("iou", |r| r.iou),
        ("precision", |r| r.precision),
        ("recall", |r| r.recall),
        ("f1", |r| r.f1),
    ];
}

/// Positive part, optional blur, then region attribution on the continuous
/// map and set metrics on its binarization.
pub fn localization_eval<T: Scalar>(
    map: &AttributionMap<T>,
    region: &RegionMask,
    options: &LocalizationOptions,
) -> Result<LocalizationReport> {
    if map.dim() != region.dim() {
        return Err(Error::InvalidInput(format!(
            "map dims {:?} do not match region dims {:?}",
            map.dim(),
            region.dim()
        )));
    }
    let region_size = region.count();
    if region_size == 0 {
        return Err(Error::Metric("region mask is empty".into()));
    }
    let mut processed = positive_part(map);
    if let Some(blur) = options.blur {
        processed = gaussian_blur(&processed, blur.kernel_size, blur.sigma)?;
    }
    let values = processed.values();
    let cells = region.cells();

    let total: T = values.iter().copied().sum();
    if total <= T::zero() {
        return Ok(LocalizationReport::default());
    }
    let inside: T = values
        .iter()
        .zip(cells.iter())
        .filter(|(_, &r)| r)
        .map(|(&v, _)| v)
        .sum();
    let ra = (inside / total).to_f64_lossy();

    let flat: Vec<T> = values.iter().copied().collect();
    let predicted: Vec<usize> = match options.binarization {
        Binarization::TopRegionSize => {
            let mut order: Vec<usize> = (0..flat.len()).filter(|&i| flat[i] > T::zero()).collect();
            order.sort_by(|&a, &b| {
                flat[b]
                    .partial_cmp(&flat[a])
                    .expect("finite")
                    .then(a.cmp(&b))
            });
            order.truncate(region_size);
            order
        }
        Binarization::Threshold { fraction_of_max } => {
            let peak = flat.iter().copied().fold(T::zero(), T::max);
            let cut = peak * T::lit(fraction_of_max);
            (0..flat.len()).filter(|&i| flat[i] > cut).collect()
        }
    };
    let region_flat: Vec<bool> = cells.iter().copied().collect();
    let hits = predicted.iter().filter(|&&i| region_flat[i]).count();
    let union = predicted.len() + region_size - hits;
    let precision = if predicted.is_empty() {
        0.0
    } else {
        hits as f64 / predicted.len() as f64
    };
    let recall = hits as f64 / region_size as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(LocalizationReport {
        ra,
        iou: hits as f64 / union as f64,
        precision,
        recall,
        f1,
    })
}
