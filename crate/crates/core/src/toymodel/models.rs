use ndarray::{Array1, Array2, Array3, Array4, ArrayView1, ArrayView2, ArrayView3, ArrayViewD};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::Classifier;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn flatten<T: Scalar>(x: ArrayView3<'_, T>) -> Array1<T> {
    Array1::from_iter(x.iter().copied())
}

fn check_finite<'a, T: Scalar>(name: &str, values: impl IntoIterator<Item = &'a T>) -> Result<()> {
    if values.into_iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "{name} contains non-finite parameters"
        )));
    }
    Ok(())
}

fn normal_array<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    shape: (usize, usize),
    std: f64,
) -> Array2<T> {
    let dist = Normal::new(0.0, std).expect("valid std");
    Array2::from_shape_simple_fn(shape, || T::lit(dist.sample(rng)))
}

/// Affine classifier `z = W·vec(x) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSoftmaxModel<T> {
    dim: (usize, usize, usize),
    weights: Array2<T>,
    biases: Array1<T>,
}

impl<T: Scalar> LinearSoftmaxModel<T> {
    /// `weights` has shape `C×H×W×d`.
    pub fn new(weights: Array4<T>, biases: Array1<T>) -> Result<Self> {
        let (c, h, w, d) = weights.dim();
        if c < 2 {
            return Err(Error::InvalidInput(format!(
                "model needs at least 2 classes, got {c}"
            )));
        }
        if h == 0 || w == 0 || d == 0 {
            return Err(Error::InvalidInput(
                "model input dims must be positive".into(),
            ));
        }
        if biases.len() != c {
            return Err(Error::InvalidInput(format!(
                "{} biases for {c} classes",
                biases.len()
            )));
        }
        check_finite("weights", weights.iter())?;
        check_finite("biases", biases.iter())?;
        let weights = weights
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((c, h * w * d))
            .expect("standard layout reshape");
        Ok(Self {
            dim: (h, w, d),
            weights,
            biases,
        })
    }

    pub fn weights(&self) -> ArrayView2<'_, T> {
        self.weights.view()
    }

    /// Weights as a `C×H×W×d` tensor.
    pub fn weights_tensor(&self) -> Array4<T> {
        let (h, w, d) = self.dim;
        self.weights
            .clone()
            .into_shape_with_order((self.weights.nrows(), h, w, d))
            .expect("shape bookkeeping")
    }

    pub fn biases(&self) -> ArrayView1<'_, T> {
        self.biases.view()
    }
}

impl<T: Scalar> Classifier<T> for LinearSoftmaxModel<T> {
    fn input_dim(&self) -> (usize, usize, usize) {
        self.dim
    }

    fn num_classes(&self) -> usize {
        self.biases.len()
    }

    fn logits_unchecked(&self, x: ArrayView3<'_, T>) -> Array1<T> {
        self.weights.dot(&flatten(x)) + &self.biases
    }

    fn logit_gradient_unchecked(&self, _x: ArrayView3<'_, T>, class: usize) -> Array3<T> {
        self.weights
            .row(class)
            .to_owned()
            .into_shape_with_order(self.dim)
            .expect("shape bookkeeping")
    }
}

/// One-hidden-layer rectifier network `z = W2·relu(W1·vec(x) + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel<T> {
    dim: (usize, usize, usize),
    hidden_weights: Array2<T>,
    hidden_biases: Array1<T>,
    output_weights: Array2<T>,
    output_biases: Array1<T>,
}

impl<T: Scalar> MlpModel<T> {
    pub fn new(
        dim: (usize, usize, usize),
        hidden_weights: Array2<T>,
        hidden_biases: Array1<T>,
        output_weights: Array2<T>,
        output_biases: Array1<T>,
    ) -> Result<Self> {
        let n = dim.0 * dim.1 * dim.2;
        let (hidden, inputs) = hidden_weights.dim();
        let (classes, hidden_out) = output_weights.dim();
        if n == 0 || hidden == 0 {
            return Err(Error::InvalidInput("mlp dims must be positive".into()));
        }
        if classes < 2 {
            return Err(Error::InvalidInput(format!(
                "model needs at least 2 classes, got {classes}"
            )));
        }
        if inputs != n
            || hidden_biases.len() != hidden
            || hidden_out != hidden
            || output_biases.len() != classes
        {
            return Err(Error::InvalidInput(format!(
                "inconsistent mlp shapes: input {n}, hidden weights {:?}, hidden biases {}, output weights {:?}, output biases {}",
                hidden_weights.dim(),
                hidden_biases.len(),
                output_weights.dim(),
                output_biases.len()
            )));
        }
        check_finite("hidden weights", hidden_weights.iter())?;
        check_finite("hidden biases", hidden_biases.iter())?;
        check_finite("output weights", output_weights.iter())?;
        check_finite("output biases", output_biases.iter())?;
        Ok(Self {
            dim,
            hidden_weights,
            hidden_biases,
            output_weights,
            output_biases,
        })
    }

    /// He-style Gaussian initialisation with small Gaussian biases.
    pub fn random<R: Rng + ?Sized>(
        dim: (usize, usize, usize),
        hidden: usize,
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let n = dim.0 * dim.1 * dim.2;
        if n == 0 || hidden == 0 {
            return Err(Error::InvalidInput("mlp dims must be positive".into()));
        }
        let hw = normal_array(rng, (hidden, n), (2.0 / n as f64).sqrt());
        let hb = normal_array(rng, (hidden, 1), 0.1)
            .into_shape_with_order(hidden)
            .unwrap();
        let ow = normal_array(rng, (classes, hidden), (2.0 / hidden as f64).sqrt());
        let ob = normal_array(rng, (classes, 1), 0.1)
            .into_shape_with_order(classes)
            .unwrap();
        Self::new(dim, hw, hb, ow, ob)
    }

    pub fn hidden_weights(&self) -> ArrayView2<'_, T> {
        self.hidden_weights.view()
    }

    pub fn hidden_biases(&self) -> ArrayView1<'_, T> {
        self.hidden_biases.view()
    }

    pub fn output_weights(&self) -> ArrayView2<'_, T> {
        self.output_weights.view()
    }

    pub fn output_biases(&self) -> ArrayView1<'_, T> {
        self.output_biases.view()
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden_biases.len()
    }

    fn preactivation(&self, x: ArrayView3<'_, T>) -> Array1<T> {
        self.hidden_weights.dot(&flatten(x)) + &self.hidden_biases
    }

    /// Distance of the nearest hidden unit from its rectifier kink.
    pub fn min_abs_preactivation(&self, x: ArrayView3<'_, T>) -> T {
        self.preactivation(x)
            .iter()
            .fold(T::infinity(), |m, v| m.min(v.abs()))
    }
}

impl<T: Scalar> Classifier<T> for MlpModel<T> {
    fn input_dim(&self) -> (usize, usize, usize) {
        self.dim
    }

    fn num_classes(&self) -> usize {
        self.output_biases.len()
    }

    fn logits_unchecked(&self, x: ArrayView3<'_, T>) -> Array1<T> {
        let act = self.preactivation(x).mapv(|v| v.max(T::zero()));
        self.output_weights.dot(&act) + &self.output_biases
    }

    fn logit_gradient_unchecked(&self, x: ArrayView3<'_, T>, class: usize) -> Array3<T> {
        let pre = self.preactivation(x);
        // Subgradient 0 at the kink.
        let upstream = Array1::from_shape_fn(pre.len(), |j| {
            if pre[j] > T::zero() {
                self.output_weights[[class, j]]
            } else {
                T::zero()
            }
        });
        self.hidden_weights
            .t()
            .dot(&upstream)
            .into_shape_with_order(self.dim)
            .expect("shape bookkeeping")
    }

    fn all_logit_gradients_unchecked(&self, x: ArrayView3<'_, T>) -> Vec<Array3<T>> {
        let pre = self.preactivation(x);
        let gate = pre.mapv(|v| if v > T::zero() { T::one() } else { T::zero() });
        let upstream = &self.output_weights * &gate;
        let grads = upstream.dot(&self.hidden_weights);
        grads
            .rows()
            .into_iter()
            .map(|r| {
                r.to_owned()
                    .into_shape_with_order(self.dim)
                    .expect("shape bookkeeping")
            })
            .collect()
    }
}

/// Either toy architecture.
#[derive(Debug, Clone, PartialEq)]
pub enum ToyModel<T> {
    Linear(LinearSoftmaxModel<T>),
    Mlp(MlpModel<T>),
}

impl<T: Scalar> From<LinearSoftmaxModel<T>> for ToyModel<T> {
    fn from(m: LinearSoftmaxModel<T>) -> Self {
        ToyModel::Linear(m)
    }
}

impl<T: Scalar> From<MlpModel<T>> for ToyModel<T> {
    fn from(m: MlpModel<T>) -> Self {
        ToyModel::Mlp(m)
    }
}

impl<T: Scalar> ToyModel<T> {
    pub fn architecture(&self) -> &'static str {
        match self {
            ToyModel::Linear(_) => "linear",
            ToyModel::Mlp(_) => "mlp",
        }
    }

    /// Parameter groups ordered from the output towards the input.
    pub fn parameter_groups(&self) -> Vec<(&'static str, ArrayViewD<'_, T>)> {
        match self {
            ToyModel::Linear(m) => vec![
                ("weights", m.weights.view().into_dyn()),
                ("biases", m.biases.view().into_dyn()),
            ],
            ToyModel::Mlp(m) => vec![
                ("output_weights", m.output_weights.view().into_dyn()),
                ("output_biases", m.output_biases.view().into_dyn()),
                ("hidden_weights", m.hidden_weights.view().into_dyn()),
                ("hidden_biases", m.hidden_biases.view().into_dyn()),
            ],
        }
    }

    /// Applies `f(group_index, values)` to each parameter group in
    /// [`parameter_groups`](Self::parameter_groups) order.
    pub(crate) fn map_groups(
        &self,
        mut f: impl FnMut(usize, ArrayViewD<'_, T>) -> Option<Vec<T>>,
    ) -> Self {
        fn apply<T: Scalar, D: ndarray::Dimension>(
            arr: &ndarray::Array<T, D>,
            new: Option<Vec<T>>,
        ) -> ndarray::Array<T, D> {
            match new {
                Some(v) => ndarray::Array::from_shape_vec(arr.raw_dim(), v).expect("group length"),
                None => arr.clone(),
            }
        }
        match self {
            ToyModel::Linear(m) => {
                let w = apply(&m.weights, f(0, m.weights.view().into_dyn()));
                let b = apply(&m.biases, f(1, m.biases.view().into_dyn()));
                ToyModel::Linear(LinearSoftmaxModel {
                    dim: m.dim,
                    weights: w,
                    biases: b,
                })
            }
            ToyModel::Mlp(m) => {
                let ow = apply(&m.output_weights, f(0, m.output_weights.view().into_dyn()));
                let ob = apply(&m.output_biases, f(1, m.output_biases.view().into_dyn()));
                let hw = apply(&m.hidden_weights, f(2, m.hidden_weights.view().into_dyn()));
                let hb = apply(&m.hidden_biases, f(3, m.hidden_biases.view().into_dyn()));
                ToyModel::Mlp(MlpModel {
                    dim: m.dim,
                    hidden_weights: hw,
                    hidden_biases: hb,
                    output_weights: ow,
                    output_biases: ob,
                })
            }
        }
    }

    /// Same model with every logit multiplied by `factor` (output layer scaled).
    pub fn scale_logits(&self, factor: f64) -> Self {
        let f = T::lit(factor);
        // Groups 0 and 1 are the output weights and biases for both architectures.
        self.map_groups(|g, v| (g < 2).then(|| v.iter().map(|&p| p * f).collect()))
    }

    /// Rescales the logits at `x` so the top class leads the runner-up by `margin`.
    pub fn with_top_margin(&self, x: ArrayView3<'_, T>, margin: f64) -> Result<Self> {
        super::check_input(self, x)?;
        let mut z: Vec<f64> = self
            .logits_unchecked(x)
            .iter()
            .map(|v| v.to_f64_lossy())
            .collect();
        z.sort_by(|a, b| b.partial_cmp(a).expect("finite logits"));
        let gap = z[0] - z[1];
        if gap.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::Numeric("top logit is not unique".into()));
        }
        Ok(self.scale_logits(margin / gap))
    }
}

impl<T: Scalar> Classifier<T> for ToyModel<T> {
    fn input_dim(&self) -> (usize, usize, usize) {
        match self {
            ToyModel::Linear(m) => m.input_dim(),
            ToyModel::Mlp(m) => m.input_dim(),
        }
    }

    fn num_classes(&self) -> usize {
        match self {
            ToyModel::Linear(m) => m.num_classes(),
            ToyModel::Mlp(m) => m.num_classes(),
        }
    }

    fn logits_unchecked(&self, x: ArrayView3<'_, T>) -> Array1<T> {
        match self {
            ToyModel::Linear(m) => m.logits_unchecked(x),
            ToyModel::Mlp(m) => m.logits_unchecked(x),
        }
    }

    fn logit_gradient_unchecked(&self, x: ArrayView3<'_, T>, class: usize) -> Array3<T> {
        match self {
            ToyModel::Linear(m) => m.logit_gradient_unchecked(x, class),
            ToyModel::Mlp(m) => m.logit_gradient_unchecked(x, class),
        }
    }

    fn all_logit_gradients_unchecked(&self, x: ArrayView3<'_, T>) -> Vec<Array3<T>> {
        match self {
            ToyModel::Linear(m) => m.all_logit_gradients_unchecked(x),
            ToyModel::Mlp(m) => m.all_logit_gradients_unchecked(x),
        }
    }
}
