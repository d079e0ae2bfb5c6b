//! Analytic differentiable classifiers with exact input gradients, the
//! synthetic quadrant dataset, and cascading parameter randomization.

mod models;
mod quadrant;
mod randomize;

pub use models::{LinearSoftmaxModel, MlpModel, ToyModel};
pub use quadrant::{
    make_quadrant_model, QuadrantDataset, QuadrantMode, QuadrantSample, QuadrantSpec, TemplateBank,
};
pub use randomize::{randomize_layers, randomized_group_count};

use ndarray::{Array1, Array3, ArrayView3};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A classifier `f: H×W×d → R^C` with exact gradients of each logit.
///
/// The `*_unchecked` methods assume the input already has the model's shape;
/// use the free functions in this module for validated calls.
pub trait Classifier<T: Scalar>: Sync {
    fn input_dim(&self) -> (usize, usize, usize);

    fn num_classes(&self) -> usize;

    fn logits_unchecked(&self, x: ArrayView3<'_, T>) -> Array1<T>;

    fn logit_gradient_unchecked(&self, x: ArrayView3<'_, T>, class: usize) -> Array3<T>;

    /// Gradients of every logit, in class order.
    fn all_logit_gradients_unchecked(&self, x: ArrayView3<'_, T>) -> Vec<Array3<T>> {
        (0..self.num_classes())
            .map(|c| self.logit_gradient_unchecked(x, c))
            .collect()
    }
}

pub(crate) fn check_input<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    x: ArrayView3<'_, T>,
) -> Result<()> {
    if x.dim() != model.input_dim() {
        return Err(Error::InvalidInput(format!(
            "input dims {:?} do not match model dims {:?}",
            x.dim(),
            model.input_dim()
        )));
    }
    Ok(())
}

pub(crate) fn check_class<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    class: usize,
) -> Result<()> {
    if class >= model.num_classes() {
        return Err(Error::InvalidInput(format!(
            "class {class} out of range for {} classes",
            model.num_classes()
        )));
    }
    Ok(())
}

pub fn forward_logits<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    x: ArrayView3<'_, T>,
) -> Result<Array1<T>> {
    check_input(model, x)?;
    Ok(model.logits_unchecked(x))
}

/// Max-shifted softmax of a logit vector.
pub fn softmax<T: Scalar>(logits: &Array1<T>) -> Array1<T> {
    let peak = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps = logits.mapv(|z| (z - peak).exp());
    let total: T = exps.iter().copied().sum();
    exps / total
}

pub fn predict_probs<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    x: ArrayView3<'_, T>,
) -> Result<Array1<T>> {
    forward_logits(model, x).map(|z| softmax(&z))
}

pub fn logit_input_gradient<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    x: ArrayView3<'_, T>,
    class: usize,
) -> Result<Array3<T>> {
    check_input(model, x)?;
    check_class(model, class)?;
    Ok(model.logit_gradient_unchecked(x, class))
}

/// Gradient of the softmax probability of `class`:
/// `p_c (∇z_c − Σ_k p_k ∇z_k)`.
pub fn softmax_prob_gradient<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    x: ArrayView3<'_, T>,
    class: usize,
) -> Result<Array3<T>> {
    check_input(model, x)?;
    check_class(model, class)?;
    let probs = softmax(&model.logits_unchecked(x));
    let grads = model.all_logit_gradients_unchecked(x);
    let mut mix = Array3::zeros(x.dim());
    for (g, &p) in grads.iter().zip(probs.iter()) {
        mix.scaled_add(p, g);
    }
    Ok((&grads[class] - &mix) * probs[class])
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use ndarray::{array, Array, Array2, Array4};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_input(rng: &mut ChaCha8Rng, dim: (usize, usize, usize)) -> Array3<f64> {
        Array::from_shape_fn(dim, |_| rng.random_range(0.0..1.0))
    }

    /// Central differences of a scalar function over every input coordinate.
    fn central_diff(f: impl Fn(&Array3<f64>) -> f64, x: &Array3<f64>, h: f64) -> Array3<f64> {
        let mut out = Array3::zeros(x.dim());
        let mut probe = x.clone();
        for (idx, o) in out.indexed_iter_mut() {
            let orig = probe[idx];
            probe[idx] = orig + h;
            let up = f(&probe);
            probe[idx] = orig - h;
            let down = f(&probe);
            probe[idx] = orig;
            *o = (up - down) / (2.0 * h);
        }
        out
    }

    fn rel_err(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
        let diff = (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        diff / scale.max(1e-300)
    }

    /// Scalar-loop MLP forward pass.
    fn naive_mlp(m: &MlpModel<f64>, x: &Array3<f64>) -> Vec<f64> {
        let flat: Vec<f64> = x.iter().copied().collect();
        let (hw, hb, ow, ob) = (
            m.hidden_weights(),
            m.hidden_biases(),
            m.output_weights(),
            m.output_biases(),
        );
        let mut act = vec![0.0; hb.len()];
        for j in 0..hb.len() {
            let mut s = hb[j];
            for (i, v) in flat.iter().enumerate() {
                s += hw[[j, i]] * v;
            }
            act[j] = s.max(0.0);
        }
        (0..ob.len())
            .map(|c| {
                ob[c]
                    + act
                        .iter()
                        .enumerate()
                        .map(|(j, a)| ow[[c, j]] * a)
                        .sum::<f64>()
            })
            .collect()
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_logits() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = Array4::from_shape_fn((3, 2, 2, 1), |_| rng.random_range(-1.0..1.0));
        let m = LinearSoftmaxModel::new(w, Array1::zeros(3)).unwrap();
        let z = forward_logits(&m, Array3::zeros((2, 2, 1)).view()).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_pixel_reads_weight() {
        let w = Array4::from_shape_fn((2, 2, 2, 1), |(c, i, j, _)| (c * 10 + i * 2 + j) as f64);
        let m = LinearSoftmaxModel::new(w, array![0.5, -0.5]).unwrap();
        let mut x = Array3::zeros((2, 2, 1));
        x[[1, 0, 0]] = 1.0;
        let z = forward_logits(&m, x.view()).unwrap();
        assert_eq!(z, array![2.5, 11.5]);
    }

    #[test]
    fn mlp_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = MlpModel::<f64>::random((6, 5, 2), 16, 4, &mut rng).unwrap();
        let x = random_input(&mut rng, (6, 5, 2));
        let z = forward_logits(&m, x.view()).unwrap();
        for (a, b) in z.iter().zip(naive_mlp(&m, &x)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dim_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = MlpModel::<f64>::random((4, 4, 1), 8, 3, &mut rng).unwrap();
        assert!(forward_logits(&m, Array3::zeros((4, 4, 2)).view()).is_err());
        assert!(logit_input_gradient(&m, Array3::zeros((4, 4, 1)).view(), 3).is_err());
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&array![0.7f64, 0.7, 0.7, 0.7]);
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-16));
        let p = softmax(&array![3f64.ln(), 0.0]);
        assert!((p[0] - 0.75).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15);
        // 20-digit reference values computed offline.
        let z = array![
            -3.379845f64,
            1.182598,
            2.285185,
            -0.785371,
            0.052393,
            4.005812
        ];
        let want = [
            0.00048961136206605646883,
            0.046913226882910349751,
            0.1413001934526184901,
            0.0065556721944239349606,
            0.015151426088523264444,
            0.78958987001945790428,
        ];
        let p = softmax(&z);
        for (a, b) in p.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((p.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_gradient_is_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = Array4::from_shape_fn((3, 4, 4, 2), |_| rng.random_range(-1.0..1.0));
        let m = LinearSoftmaxModel::new(w.clone(), Array1::zeros(3)).unwrap();
        for _ in 0..3 {
            let x = random_input(&mut rng, (4, 4, 2));
            let g = logit_input_gradient(&m, x.view(), 1).unwrap();
            assert_eq!(g, w.index_axis(ndarray::Axis(0), 1));
        }
    }

    #[test]
    fn dead_rectifiers_give_zero_gradient() {
        let m = MlpModel::new(
            (2, 2, 1),
            Array2::from_elem((3, 4), 1.0),
            Array1::from_elem(3, -10.0),
            Array2::from_elem((2, 3), 1.0),
            Array1::zeros(2),
        )
        .unwrap();
        let g = logit_input_gradient(&m, Array3::from_elem((2, 2, 1), 0.5).view(), 0).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let m = MlpModel::<f64>::random((5, 5, 2), 12, 4, &mut rng).unwrap();
            let x = random_input(&mut rng, (5, 5, 2));
            if m.min_abs_preactivation(x.view()) < 1e-5 {
                continue;
            }
            let c = rng.random_range(0..4);
            let g = logit_input_gradient(&m, x.view(), c).unwrap();
            let fd = central_diff(|p| m.logits_unchecked(p.view())[c], &x, 1e-5);
            assert!(rel_err(&g, &fd) < 1e-4);
        }
    }

    #[test]
    fn identical_classes_cancel_in_prob_gradient() {
        let w = Array4::from_elem((2, 3, 3, 1), 0.3);
        let m = LinearSoftmaxModel::new(w, Array1::zeros(2)).unwrap();
        let g = softmax_prob_gradient(&m, Array3::from_elem((3, 3, 1), 0.5).view(), 0).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prob_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let m = MlpModel::<f64>::random((6, 6, 1), 16, 5, &mut rng).unwrap();
            let x = random_input(&mut rng, (6, 6, 1));
            if m.min_abs_preactivation(x.view()) < 1e-5 {
                continue;
            }
            let c = rng.random_range(0..5);
            let g = softmax_prob_gradient(&m, x.view(), c).unwrap();
            let fd = central_diff(|p| predict_probs(&m, p.view()).unwrap()[c], &x, 1e-5);
            assert!(rel_err(&g, &fd) < 1e-4);
        }
    }

    #[test]
    fn confident_scaling_shrinks_prob_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let base = MlpModel::<f64>::random((4, 4, 1), 8, 4, &mut rng).unwrap();
        let x = random_input(&mut rng, (4, 4, 1));
        let m = ToyModel::Mlp(base).with_top_margin(x.view(), 2.0).unwrap();
        let c = crate::class_select::select_classes(
            m.logits_unchecked(x.view()).as_slice().unwrap(),
            &crate::class_select::SelectionStrategy::BestVsWorst,
        )
        .unwrap()[0];
        let norms: Vec<f64> = [1.0, 10.0, 100.0]
            .iter()
            .map(|&l| {
                let g = softmax_prob_gradient(&m.scale_logits(l), x.view(), c).unwrap();
                g.iter().fold(0.0f64, |a, v| a.max(v.abs()))
            })
            .collect();
        assert!(norms[0] > norms[1] && norms[1] > norms[2], "{norms:?}");
    }
}
