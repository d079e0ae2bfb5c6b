use ndarray::{Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{blur_image, AttributionMap, BlurConfig, ImageSample};
use crate::scalar::Scalar;
use crate::toymodel::{check_class, check_input, softmax, Classifier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMode {
    Insertion,
    Deletion,
}

impl CurveMode {
    pub fn name(self) -> &'static str {
        match self {
            CurveMode::Insertion => "insertion",
            CurveMode::Deletion => "deletion",
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, CurveMode::Insertion)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DeleteBaseline {
    /// Each channel filled with that channel's mean over the image.
    #[default]
    ChannelMean,
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveConfig {
    pub steps: usize,
    pub reveal_blur: BlurConfig,
    pub delete_baseline: DeleteBaseline,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            steps: 64,
            reveal_blur: BlurConfig {
                kernel_size: 11,
                sigma: 5.0,
            },
            delete_baseline: DeleteBaseline::ChannelMean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveResult {
    pub fractions: Vec<f64>,
    pub scores: Vec<f64>,
    pub auc: f64,
}

pub fn trapezoid_auc(fractions: &[f64], scores: &[f64]) -> f64 {
    fractions
        .windows(2)
        .zip(scores.windows(2))
        .map(|(f, s)| (f[1] - f[0]) * (s[0] + s[1]) / 2.0)
        .sum()
}

/// Flat row-major pixel indices by descending map value; equal values keep
/// row-major order.
pub fn pixel_ranking<T: Scalar>(map: &AttributionMap<T>) -> Vec<usize> {
    let flat: Vec<T> = map.values().iter().copied().collect();
    let mut order: Vec<usize> = (0..flat.len()).collect();
    order.sort_by(|&a, &b| {
        flat[b]
            .partial_cmp(&flat[a])
            .expect("finite")
            .then(a.cmp(&b))
    });
    order
}

/// Starts from `start`, copies ranked pixels (all channels) from `source`,
/// and records the target probability at `steps + 1` evenly spaced ticks.
/// Tick `k` has the first `⌊k·N/steps⌋` pixels copied.
fn perturbation_curve<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    mut current: Array3<T>,
    source: &Array3<T>,
    order: &[usize],
    target: usize,
    steps: usize,
) -> CurveResult {
    let width = current.dim().1;
    let n = order.len();
    let mut fractions = Vec::with_capacity(steps + 1);
    let mut scores = Vec::with_capacity(steps + 1);
    let mut done = 0;
    for k in 0..=steps {
        let upto = k * n / steps;
        for &p in &order[done..upto] {
            let (i, j) = (p / width, p % width);
            current
                .index_axis_mut(Axis(0), i)
                .index_axis_mut(Axis(0), j)
                .assign(&source.index_axis(Axis(0), i).index_axis(Axis(0), j));
        }
        done = upto;
        fractions.push(k as f64 / steps as f64);
        scores.push(softmax(&model.logits_unchecked(current.view()))[target].to_f64_lossy());
    }
    let auc = trapezoid_auc(&fractions, &scores);
    CurveResult {
        fractions,
        scores,
        auc,
    }
}

fn check_curve_inputs<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    image: &ImageSample<T>,
    map: &AttributionMap<T>,
    target: usize,
    steps: usize,
) -> Result<()> {
    check_input(model, image.pixels())?;
    check_class(model, target)?;
    if map.dim() != (image.height(), image.width()) {
        return Err(Error::InvalidInput(format!(
            "map dims {:?} do not match image dims {:?}",
            map.dim(),
            image.dim()
        )));
    }
    if steps == 0 {
        return Err(Error::Config("curve needs steps >= 1".into()));
    }
    Ok(())
}

/// Reveals top-ranked pixels of `image` on top of a blurred copy of it.
pub fn insertion_curve<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    image: &ImageSample<T>,
    map: &AttributionMap<T>,
    target: usize,
    steps: usize,
    reveal_blur: BlurConfig,
) -> Result<CurveResult> {
    check_curve_inputs(model, image, map, target, steps)?;
    let start = blur_image(image, reveal_blur)?.into_pixels();
    let source = image.pixels().to_owned();
    Ok(perturbation_curve(
        model,
        start,
        &source,
        &pixel_ranking(map),
        target,
        steps,
    ))
}

/// Overwrites top-ranked pixels of `image` with the deletion baseline.
pub fn deletion_curve<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    image: &ImageSample<T>,
    map: &AttributionMap<T>,
    target: usize,
    steps: usize,
    baseline: DeleteBaseline,
) -> Result<CurveResult> {
    check_curve_inputs(model, image, map, target, steps)?;
    let pixels = image.pixels();
    let fill = match baseline {
        DeleteBaseline::ChannelMean => {
            let means = pixels
                .mean_axis(Axis(0))
                .and_then(|m| m.mean_axis(Axis(0)))
                .expect("non-empty image");
            Array3::from_shape_fn(pixels.dim(), |(_, _, k)| means[k])
        }
        DeleteBaseline::Constant(v) => Array3::from_elem(pixels.dim(), T::lit(v)),
    };
    Ok(perturbation_curve(
        model,
        pixels.to_owned(),
        &fill,
        &pixel_ranking(map),
        target,
        steps,
    ))
}
