//! Base attribution methods producing one map per (input, class).

use ndarray::{Array2, Array3, ArrayView3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{channel_aggregate, AttributionMap, AttributionStack, ImageSample};
use crate::scalar::Scalar;
use crate::toymodel::{check_class, check_input, Classifier};

/// Reference input for path and perturbation methods.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    #[default]
    Zero,
    Constant(f64),
    #[serde(skip)]
    Image(ImageSample<f64>),
}

impl Baseline {
    fn materialize<T: Scalar>(&self, dim: (usize, usize, usize)) -> Result<Array3<T>> {
        match self {
            Baseline::Zero => Ok(Array3::zeros(dim)),
            Baseline::Constant(v) => Ok(Array3::from_elem(dim, T::lit(*v))),
            Baseline::Image(img) if img.dim() == dim => Ok(img.pixels().mapv(T::lit)),
            Baseline::Image(img) => Err(Error::InvalidInput(format!(
                "baseline dims {:?} do not match input dims {:?}",
                img.dim(),
                dim
            ))),
        }
    }
}

fn default_steps() -> usize {
    32
}
fn default_patch() -> usize {
    15
}
fn default_stride() -> usize {
    8
}
fn default_grid() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttributionMethodSpec {
    Gradient,
    InputXGradient,
    /// Midpoint-rule path integral from the baseline to the input.
    IntegratedGradients {
        #[serde(default = "default_steps")]
        steps: usize,
        #[serde(default)]
        baseline: Baseline,
    },
    /// Square patches over all channels; overlapping scores are averaged.
    Occlusion {
        #[serde(default = "default_patch")]
        patch: usize,
        #[serde(default = "default_stride")]
        stride: usize,
        #[serde(default)]
        baseline_value: f64,
    },
    /// Regular grid cells ablated one at a time.
    FeatureAblation {
        #[serde(default = "default_grid")]
        grid_rows: usize,
        #[serde(default = "default_grid")]
        grid_cols: usize,
        #[serde(default)]
        baseline_value: f64,
    },
}

impl AttributionMethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AttributionMethodSpec::Gradient => "gradient",
            AttributionMethodSpec::InputXGradient => "input_x_gradient",
            AttributionMethodSpec::IntegratedGradients { .. } => "integrated_gradients",
            AttributionMethodSpec::Occlusion { .. } => "occlusion",
            AttributionMethodSpec::FeatureAblation { .. } => "feature_ablation",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AttributionMethodSpec::IntegratedGradients { steps: 0, .. } => Err(Error::Config(
                "integrated gradients needs steps >= 1".into(),
            )),
            AttributionMethodSpec::Occlusion {
                patch,
                stride,
                baseline_value,
            } => {
                if patch == 0 || stride == 0 {
                    return Err(Error::Config(
                        "occlusion patch and stride must be >= 1".into(),
                    ));
                }
                finite_baseline(baseline_value)
            }
            AttributionMethodSpec::FeatureAblation {
                grid_rows,
                grid_cols,
                baseline_value,
            } => {
                if grid_rows == 0 || grid_cols == 0 {
                    return Err(Error::Config("ablation grid dims must be >= 1".into()));
                }
                finite_baseline(baseline_value)
            }
            _ => Ok(()),
        }
    }
}

fn finite_baseline(v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "baseline value must be finite, got {v}"
        )))
    }
}

pub fn attribute<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    input: &ImageSample<T>,
    class: usize,
    spec: &AttributionMethodSpec,
) -> Result<AttributionMap<T>> {
    spec.validate()?;
    let x = input.pixels();
    check_input(model, x)?;
    check_class(model, class)?;
    match spec {
        AttributionMethodSpec::Gradient => {
            channel_aggregate(model.logit_gradient_unchecked(x, class).view())
        }
        AttributionMethodSpec::InputXGradient => {
            channel_aggregate((model.logit_gradient_unchecked(x, class) * x).view())
        }
        AttributionMethodSpec::IntegratedGradients { steps, baseline } => {
            let base = baseline.materialize(x.dim())?;
            channel_aggregate(integrated_gradients_raw(model, x, class, base.view(), *steps).view())
        }
        AttributionMethodSpec::Occlusion {
            patch,
            stride,
            baseline_value,
        } => occlusion(model, x, class, *patch, *stride, T::lit(*baseline_value)),
        AttributionMethodSpec::FeatureAblation {
            grid_rows,
            grid_cols,
            baseline_value,
        } => feature_ablation(
            model,
            x,
            class,
            *grid_rows,
            *grid_cols,
            T::lit(*baseline_value),
        ),
    }
}

/// `(x − x₀) ⊙ mean_k ∇f_c(x₀ + α_k (x − x₀))` with `α_k = (k + ½) / steps`.
fn integrated_gradients_raw<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    x: ArrayView3<'_, T>,
    class: usize,
    baseline: ArrayView3<'_, T>,
    steps: usize,
) -> Array3<T> {
    let delta = &x - &baseline;
    let n = T::from_count(steps);
    let mut acc = Array3::zeros(x.dim());
    for k in 0..steps {
        let alpha = (T::from_count(k) + T::lit(0.5)) / n;
        let point = &baseline + &(&delta * alpha);
        acc += &model.logit_gradient_unchecked(point.view(), class);
    }
    acc.mapv_inplace(|g| g / n);
    delta * acc
}

/// Sum of the raw integrated-gradients tensor and the logit change it
/// should account for, `f_c(x) − f_c(x₀)`.
pub fn integrated_gradients_completeness<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    input: &ImageSample<T>,
    class: usize,
    baseline: &Baseline,
    steps: usize,
) -> Result<(T, T)> {
    let x = input.pixels();
    check_input(model, x)?;
    check_class(model, class)?;
    if steps == 0 {
        return Err(Error::Config(
            "integrated gradients needs steps >= 1".into(),
        ));
    }
    let base = baseline.materialize(x.dim())?;
    let raw = integrated_gradients_raw(model, x, class, base.view(), steps);
    let delta = model.logits_unchecked(x)[class] - model.logits_unchecked(base.view())[class];
    Ok((raw.sum(), delta))
}

/// Window starts along one axis. A final window flush with the far edge is
/// appended when the stride would leave the tail uncovered.
fn window_starts(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    if patch >= len {
        return vec![0];
    }
    let last = len - patch;
    let mut starts: Vec<usize> = (0..=last).step_by(stride).collect();
    if *starts.last().expect("at least one start") != last {
        starts.push(last);
    }
    starts
}

fn occlusion<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    x: ArrayView3<'_, T>,
    class: usize,
    patch: usize,
    stride: usize,
    fill: T,
) -> Result<AttributionMap<T>> {
    let (h, w, _) = x.dim();
    let placements: Vec<(usize, usize)> = window_starts(h, patch, stride)
        .into_iter()
        .flat_map(|i| {
            window_starts(w, patch, stride)
                .into_iter()
                .map(move |j| (i, j))
        })
        .collect();
    let reference = model.logits_unchecked(x)[class];
    let drops: Vec<T> = placements
        .par_iter()
        .map(|&(i, j)| {
            let mut occluded = x.to_owned();
            occluded
                .slice_mut(ndarray::s![
                    i..(i + patch).min(h),
                    j..(j + patch).min(w),
                    ..
                ])
                .fill(fill);
            reference - model.logits_unchecked(occluded.view())[class]
        })
        .collect();

    let mut total = Array2::<T>::zeros((h, w));
    let mut coverage = Array2::<usize>::zeros((h, w));
    for (&(i, j), &d) in placements.iter().zip(&drops) {
        let rows = i..(i + patch).min(h);
        let cols = j..(j + patch).min(w);
        total
            .slice_mut(ndarray::s![rows.clone(), cols.clone()])
            .mapv_inplace(|v| v + d);
        coverage
            .slice_mut(ndarray::s![rows, cols])
            .mapv_inplace(|c| c + 1);
    }
    let out = Array2::from_shape_fn((h, w), |(i, j)| match coverage[[i, j]] {
        0 => T::zero(),
        n => total[[i, j]] / T::from_count(n),
    });
    AttributionMap::new(out)
}

/// Cell boundaries `⌊k·len/cells⌋` for `k = 0..=cells`.
fn cell_edges(len: usize, cells: usize) -> Vec<usize> {
    (0..=cells).map(|k| k * len / cells).collect()
}

fn feature_ablation<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    x: ArrayView3<'_, T>,
    class: usize,
    rows: usize,
    cols: usize,
    fill: T,
) -> Result<AttributionMap<T>> {
    let (h, w, _) = x.dim();
    let (re, ce) = (cell_edges(h, rows), cell_edges(w, cols));
    let cells: Vec<(usize, usize)> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .collect();
    let reference = model.logits_unchecked(x)[class];
    let drops: Vec<T> = cells
        .par_iter()
        .map(|&(r, c)| {
            if re[r] == re[r + 1] || ce[c] == ce[c + 1] {
                return T::zero();
            }
            let mut ablated = x.to_owned();
            ablated
                .slice_mut(ndarray::s![re[r]..re[r + 1], ce[c]..ce[c + 1], ..])
                .fill(fill);
            reference - model.logits_unchecked(ablated.view())[class]
        })
        .collect();
    let mut out = Array2::zeros((h, w));
    for (&(r, c), &d) in cells.iter().zip(&drops) {
        out.slice_mut(ndarray::s![re[r]..re[r + 1], ce[c]..ce[c + 1]])
            .fill(d);
    }
    AttributionMap::new(out)
}

/// One map per class, in the given order. Classes are evaluated in parallel.
pub fn attribute_stack<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    input: &ImageSample<T>,
    class_ids: &[usize],
    spec: &AttributionMethodSpec,
) -> Result<AttributionStack<T>> {
    if class_ids.len() < 2 {
        return Err(Error::InvalidStack(format!(
            "a stack needs at least 2 classes, got {}",
            class_ids.len()
        )));
    }
    crate::maps::check_distinct(class_ids).map_err(Error::InvalidStack)?;
    let maps = class_ids
        .par_iter()
        .map(|&c| attribute(model, input, c, spec))
        .collect::<Result<Vec<_>>>()?;
    AttributionStack::new(class_ids.to_vec(), maps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toymodel::{LinearSoftmaxModel, MlpModel};
    use ndarray::{Array1, Array4};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear(
        rng: &mut ChaCha8Rng,
        dim: (usize, usize, usize),
        classes: usize,
    ) -> LinearSoftmaxModel<f64> {
        let w = Array4::from_shape_fn((classes, dim.0, dim.1, dim.2), |_| {
            rng.random_range(-1.0..1.0)
        });
        let b = Array1::from_shape_fn(classes, |_| rng.random_range(-0.5..0.5));
        LinearSoftmaxModel::new(w, b).unwrap()
    }

    fn image(rng: &mut ChaCha8Rng, dim: (usize, usize, usize)) -> ImageSample<f64> {
        ImageSample::new(Array3::from_shape_fn(dim, |_| rng.random_range(0.0..1.0))).unwrap()
    }

    #[test]
    fn ig_equals_ixg_on_linear_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = linear(&mut rng, (6, 6, 3), 4);
        let x = image(&mut rng, (6, 6, 3));
        let ixg = attribute(&m, &x, 2, &AttributionMethodSpec::InputXGradient).unwrap();
        for steps in [1, 7, 32] {
            let ig = attribute(
                &m,
                &x,
                2,
                &AttributionMethodSpec::IntegratedGradients {
                    steps,
                    baseline: Baseline::Zero,
                },
            )
            .unwrap();
            for (a, b) in ig.values().iter().zip(ixg.values().iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_input_gives_zero_ixg() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = MlpModel::<f64>::random((5, 5, 1), 8, 3, &mut rng).unwrap();
        let map = attribute(
            &m,
            &ImageSample::zeros(5, 5, 1),
            0,
            &AttributionMethodSpec::InputXGradient,
        )
        .unwrap();
        assert!(map.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn feature_ablation_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = linear(&mut rng, (8, 8, 2), 3);
        let x = image(&mut rng, (8, 8, 2));
        let spec = AttributionMethodSpec::FeatureAblation {
            grid_rows: 3,
            grid_cols: 2,
            baseline_value: 0.0,
        };
        let map = attribute(&m, &x, 1, &spec).unwrap();
        let w = m.weights_tensor();
        let (re, ce) = ([0, 2, 5, 8], [0, 4, 8]);
        for r in 0..3 {
            for c in 0..2 {
                let mut want = 0.0;
                for i in re[r]..re[r + 1] {
                    for j in ce[c]..ce[c + 1] {
                        for k in 0..2 {
                            want += w[[1, i, j, k]] * x.pixels()[[i, j, k]];
                        }
                    }
                }
                for i in re[r]..re[r + 1] {
                    for j in ce[c]..ce[c + 1] {
                        assert!((map.values()[[i, j]] - want).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn occlusion_coverage_and_order_independence() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = MlpModel::<f64>::random((13, 11, 1), 8, 3, &mut rng).unwrap();
        let x = image(&mut rng, (13, 11, 1));
        let (patch, stride) = (5, 3);
        let map = attribute(
            &m,
            &x,
            0,
            &AttributionMethodSpec::Occlusion {
                patch,
                stride,
                baseline_value: 0.0,
            },
        )
        .unwrap();

        // Reverse-order oracle with explicit coverage counting.
        let ys = window_starts(13, patch, stride);
        let xs = window_starts(11, patch, stride);
        let reference = m.logits_unchecked(x.pixels())[0];
        let mut total = Array2::<f64>::zeros((13, 11));
        let mut count = Array2::<f64>::zeros((13, 11));
        for &i in ys.iter().rev() {
            for &j in xs.iter().rev() {
                let mut occ = x.pixels().to_owned();
                occ.slice_mut(ndarray::s![i..i + patch, j..j + patch, ..])
                    .fill(0.0);
                let d = reference - m.logits_unchecked(occ.view())[0];
                for a in i..i + patch {
                    for b in j..j + patch {
                        total[[a, b]] += d;
                        count[[a, b]] += 1.0;
                    }
                }
            }
        }
        assert!(count.iter().all(|&c| c >= 1.0));
        for ((v, t), c) in map.values().iter().zip(total.iter()).zip(count.iter()) {
            assert!((v - t / c).abs() < 1e-12);
        }
    }

    #[test]
    fn window_starts_cover_axis() {
        assert_eq!(window_starts(32, 15, 8), vec![0, 8, 16, 17]);
        assert_eq!(window_starts(31, 15, 8), vec![0, 8, 16]);
        assert_eq!(window_starts(10, 15, 8), vec![0]);
        for len in 1..40 {
            for patch in 1..10 {
                for stride in 1..=patch {
                    let starts = window_starts(len, patch, stride);
                    for p in 0..len {
                        assert!(starts.iter().any(|&s| s <= p && p < s + patch));
                    }
                }
            }
        }
    }

    #[test]
    fn completeness_exact_on_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = linear(&mut rng, (4, 4, 2), 3);
        let x = image(&mut rng, (4, 4, 2));
        for steps in [1, 3, 50] {
            let (sum, delta) =
                integrated_gradients_completeness(&m, &x, 1, &Baseline::Zero, steps).unwrap();
            assert!((sum - delta).abs() < 1e-12);
        }
        let base = Baseline::Image(x.clone());
        let (sum, delta) = integrated_gradients_completeness(&m, &x, 1, &base, 8).unwrap();
        assert_eq!((sum, delta), (0.0, 0.0));
    }

    #[test]
    fn completeness_converges_on_mlp() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = MlpModel::<f64>::random((6, 6, 1), 16, 3, &mut rng).unwrap();
        let x = image(&mut rng, (6, 6, 1));
        let (sum128, delta) =
            integrated_gradients_completeness(&m, &x, 0, &Baseline::Zero, 128).unwrap();
        let (sum4096, _) =
            integrated_gradients_completeness(&m, &x, 0, &Baseline::Zero, 4096).unwrap();
        assert!(((sum4096 - delta) / delta).abs() < ((sum128 - delta) / delta).abs() + 1e-12);
        assert!(((sum128 - sum4096) / sum4096).abs() < 0.01);
    }

    #[test]
    fn stack_rows_match_single_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = MlpModel::<f64>::random((6, 6, 1), 16, 5, &mut rng).unwrap();
        let x = image(&mut rng, (6, 6, 1));
        let specs = [
            AttributionMethodSpec::Gradient,
            AttributionMethodSpec::InputXGradient,
            AttributionMethodSpec::IntegratedGradients {
                steps: 8,
                baseline: Baseline::Zero,
            },
            AttributionMethodSpec::Occlusion {
                patch: 3,
                stride: 2,
                baseline_value: 0.0,
            },
            AttributionMethodSpec::FeatureAblation {
                grid_rows: 2,
                grid_cols: 3,
                baseline_value: 0.5,
            },
        ];
        for spec in &specs {
            let st = attribute_stack(&m, &x, &[4, 0, 2, 1], spec).unwrap();
            for (&c, map) in st.class_ids().iter().zip(st.maps()) {
                assert_eq!(map, &attribute(&m, &x, c, spec).unwrap());
            }
        }
    }

    #[test]
    fn stack_preconditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = linear(&mut rng, (3, 3, 1), 3);
        let x = image(&mut rng, (3, 3, 1));
        let spec = AttributionMethodSpec::Gradient;
        assert!(matches!(
            attribute_stack(&m, &x, &[1], &spec),
            Err(Error::InvalidStack(_))
        ));
        assert!(matches!(
            attribute_stack(&m, &x, &[1, 1], &spec),
            Err(Error::InvalidStack(_))
        ));
        assert!(matches!(
            attribute(&m, &image(&mut rng, (3, 4, 1)), 0, &spec),
            Err(Error::InvalidInput(_))
        ));
        let bad = AttributionMethodSpec::IntegratedGradients {
            steps: 0,
            baseline: Baseline::Zero,
        };
        assert!(matches!(attribute(&m, &x, 0, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn method_spec_json() {
        let s: AttributionMethodSpec = serde_json::from_str(r#"{"kind":"occlusion"}"#).unwrap();
        assert_eq!(
            s,
            AttributionMethodSpec::Occlusion {
                patch: 15,
                stride: 8,
                baseline_value: 0.0
            }
        );
        let s: AttributionMethodSpec = serde_json::from_str(
            r#"{"kind":"integrated_gradients","steps":64,"baseline":{"constant":0.5}}"#,
        )
        .unwrap();
        assert_eq!(
            s,
            AttributionMethodSpec::IntegratedGradients {
                steps: 64,
                baseline: Baseline::Constant(0.5)
            }
        );
        let s: AttributionMethodSpec =
            serde_json::from_str(r#"{"kind":"integrated_gradients","baseline":"zero"}"#).unwrap();
        assert_eq!(
            s,
            AttributionMethodSpec::IntegratedGradients {
                steps: 32,
                baseline: Baseline::Zero
            }
        );
    }
}
