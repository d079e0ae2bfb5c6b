//! Synthetic 2×2 grid images with known per-quadrant classes.
//!
//! Every class owns a quadrant-sized template. A sample places four distinct
//! class templates into the four quadrants. In disjoint mode the templates
//! have pairwise disjoint pixel supports and noise touches only template
//! pixels, so a matched linear model attributes each class to its own
//! quadrant exactly. In overlapping mode all templates share a common
//! background texture on top of their class-specific pixels, so logit
//! attributions leak into foreign quadrants.

use ndarray::{Array1, Array3, Array4};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::LinearSoftmaxModel;
use crate::error::{Error, Result};
use crate::maps::{quadrant_bounds, ImageSample, RegionMask};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadrantMode {
    Disjoint,
    Overlapping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadrantSpec {
    pub size: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub classes: usize,
    pub noise_sigma: f64,
    pub mode: QuadrantMode,
}

impl Default for QuadrantSpec {
    fn default() -> Self {
        Self {
            size: 100,
            height: 32,
            width: 32,
            channels: 1,
            classes: 10,
            noise_sigma: 0.05,
            mode: QuadrantMode::Overlapping,
        }
    }
}

impl QuadrantSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height < 2
            || self.width < 2
            || !self.height.is_multiple_of(2)
            || !self.width.is_multiple_of(2)
        {
            return Err(Error::Config(format!(
                "grid images need even dims >= 2, got {}x{}",
                self.height, self.width
            )));
        }
        if self.channels == 0 {
            return Err(Error::Config("channels must be positive".into()));
        }
        if self.classes < 4 {
            return Err(Error::Config(format!(
                "need at least 4 classes for a 2x2 grid, got {}",
                self.classes
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    fn interior(&self) -> Vec<(usize, usize)> {
        let (qh, qw) = (self.height / 2, self.width / 2);
        let (mh, mw) = (qh * 3 / 16, qw * 3 / 16);
        (mh..qh - mh)
            .flat_map(|i| (mw..qw - mw).map(move |j| (i, j)))
            .collect()
    }
}

/// Per-class `H/2×W/2×d` patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateBank<T> {
    templates: Vec<Array3<T>>,
}

impl<T: Scalar> TemplateBank<T> {
    pub fn new(templates: Vec<Array3<T>>) -> Result<Self> {
        let Some(first) = templates.first() else {
            return Err(Error::InvalidInput("template bank is empty".into()));
        };
        let dim = first.dim();
        if templates.iter().any(|t| t.dim() != dim) {
            return Err(Error::InvalidInput("templates differ in shape".into()));
        }
        if templates
            .iter()
            .flat_map(|t| t.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput(
                "template contains non-finite value".into(),
            ));
        }
        Ok(Self { templates })
    }

    pub fn generate(spec: &QuadrantSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut positions = spec.interior();
        if positions.len() < spec.classes {
            return Err(Error::Config(format!(
                "{} interior template positions cannot host {} classes",
                positions.len(),
                spec.classes
            )));
        }
        positions.shuffle(&mut rng);
        let dim = (spec.height / 2, spec.width / 2, spec.channels);
        let background = match spec.mode {
            QuadrantMode::Disjoint => Array3::zeros(dim),
            QuadrantMode::Overlapping => {
                Array3::from_shape_simple_fn(dim, || rng.random_range(0.0..0.4))
            }
        };
        let templates = (0..spec.classes)
            .map(|c| {
                let mut t: Array3<f64> = background.clone();
                if spec.mode == QuadrantMode::Overlapping {
                    t.mapv_inplace(|v| v + rng.random_range(0.0..0.1));
                }
                for &(i, j) in positions.iter().skip(c).step_by(spec.classes) {
                    for k in 0..spec.channels {
                        t[[i, j, k]] += rng.random_range(0.5..1.0);
                    }
                }
                t.mapv(|v| T::lit(v.min(1.0)))
            })
            .collect();
        Self::new(templates)
    }

    pub fn templates(&self) -> &[Array3<T>] {
        &self.templates
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Quadrant dims `(H/2, W/2, d)`.
    pub fn dim(&self) -> (usize, usize, usize) {
        self.templates[0].dim()
    }
}

/// Linear classifier whose class-`c` weights are the class-`c` template
/// tiled over all four quadrants. In disjoint mode each class keeps only
/// the pixels where no other template is nonzero, so weight supports are
/// pairwise disjoint. Biases are zero.
pub fn make_quadrant_model<T: Scalar>(
    templates: &TemplateBank<T>,
    mode: QuadrantMode,
) -> Result<LinearSoftmaxModel<T>> {
    if templates.len() < 2 {
        return Err(Error::InvalidInput(
            "quadrant model needs at least 2 class templates".into(),
        ));
    }
    let (qh, qw, d) = templates.dim();
    let tpl = templates.templates();
    let weight = |c: usize, i: usize, j: usize, k: usize| {
        let v = tpl[c][[i, j, k]];
        match mode {
            QuadrantMode::Overlapping => v,
            QuadrantMode::Disjoint => {
                let shared = tpl
                    .iter()
                    .enumerate()
                    .any(|(o, t)| o != c && t[[i, j, k]] != T::zero());
                if shared {
                    T::zero()
                } else {
                    v
                }
            }
        }
    };
    let w = Array4::from_shape_fn((templates.len(), 2 * qh, 2 * qw, d), |(c, i, j, k)| {
        weight(c, i % qh, j % qw, k)
    });
    LinearSoftmaxModel::new(w, Array1::zeros(templates.len()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadrantSample<T> {
    pub image: ImageSample<T>,
    /// Class shown in quadrants 0..4 (top-left, top-right, bottom-left, bottom-right).
    pub classes: [usize; 4],
    pub masks: [RegionMask; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadrantDataset<T> {
    pub spec: QuadrantSpec,
    pub seed: u64,
    pub templates: TemplateBank<T>,
    pub samples: Vec<QuadrantSample<T>>,
}

impl<T: Scalar> QuadrantDataset<T> {
    /// Templates come from stream 0 of the seeded generator; sample `i`
    /// draws from stream `i + 1`.
    pub fn generate(spec: &QuadrantSpec, seed: u64) -> Result<Self> {
        let templates = TemplateBank::generate(spec, seed)?;
        let samples = (0..spec.size)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64 + 1);
                make_sample(spec, &templates, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec: spec.clone(),
            seed,
            templates,
            samples,
        })
    }

    pub fn model(&self) -> Result<LinearSoftmaxModel<T>> {
        make_quadrant_model(&self.templates, self.spec.mode)
    }
}

fn make_sample<T: Scalar>(
    spec: &QuadrantSpec,
    bank: &TemplateBank<T>,
    rng: &mut ChaCha8Rng,
) -> Result<QuadrantSample<T>> {
    let picked = index::sample(rng, spec.classes, 4).into_vec();
    let classes = [picked[0], picked[1], picked[2], picked[3]];
    let noise = (spec.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, spec.noise_sigma).expect("validated sigma"));
    let mut pixels = Array3::<f64>::zeros((spec.height, spec.width, spec.channels));
    for (q, &c) in classes.iter().enumerate() {
        let (rows, cols) = quadrant_bounds(spec.height, spec.width, q);
        let tpl = &bank.templates()[c];
        for (a, i) in rows.enumerate() {
            for (b, j) in cols.clone().enumerate() {
                for k in 0..spec.channels {
                    let base = tpl[[a, b, k]].to_f64_lossy();
                    let noisy = match &noise {
                        Some(n) if spec.mode == QuadrantMode::Overlapping || base != 0.0 => {
                            base + n.sample(rng)
                        }
                        _ => base,
                    };
                    pixels[[i, j, k]] = noisy.clamp(0.0, 1.0);
                }
            }
        }
    }
    let masks = [0, 1, 2, 3]
        .map(|q| RegionMask::quadrant(spec.height, spec.width, q).expect("valid quadrant"));
    Ok(QuadrantSample {
        image: ImageSample::new(pixels.mapv(T::lit))?,
        classes,
        masks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toymodel::{forward_logits, Classifier};

    fn spec(mode: QuadrantMode) -> QuadrantSpec {
        QuadrantSpec {
            size: 12,
            mode,
            ..QuadrantSpec::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = QuadrantDataset::<f64>::generate(&spec(QuadrantMode::Overlapping), 4).unwrap();
        let b = QuadrantDataset::<f64>::generate(&spec(QuadrantMode::Overlapping), 4).unwrap();
        assert_eq!(a, b);
        let c = QuadrantDataset::<f64>::generate(&spec(QuadrantMode::Overlapping), 5).unwrap();
        assert_ne!(a.samples[0].image, c.samples[0].image);
    }

    #[test]
    fn masks_partition_each_image() {
        let ds = QuadrantDataset::<f64>::generate(&spec(QuadrantMode::Disjoint), 1).unwrap();
        for s in &ds.samples {
            for i in 0..32 {
                for j in 0..32 {
                    assert_eq!(s.masks.iter().filter(|m| m.contains(i, j)).count(), 1);
                }
            }
            let mut cls = s.classes.to_vec();
            cls.sort_unstable();
            cls.dedup();
            assert_eq!(cls.len(), 4);
        }
    }

    #[test]
    fn disjoint_templates_and_weights() {
        let ds = QuadrantDataset::<f64>::generate(&spec(QuadrantMode::Disjoint), 2).unwrap();
        let t = ds.templates.templates();
        for i in 0..16 {
            for j in 0..16 {
                assert!(t.iter().filter(|tpl| tpl[[i, j, 0]] != 0.0).count() <= 1);
            }
        }
        let m = ds.model().unwrap();
        let w = m.weights_tensor();
        for i in 0..32 {
            for j in 0..32 {
                assert!((0..10).filter(|&c| w[[c, i, j, 0]] != 0.0).count() <= 1);
            }
        }
        // Disjoint samples are zero off the template supports.
        let s = &ds.samples[0];
        for q in 0..4 {
            let (rows, cols) = quadrant_bounds(32, 32, q);
            for (a, i) in rows.enumerate() {
                for (b, j) in cols.clone().enumerate() {
                    if t[s.classes[q]][[a, b, 0]] == 0.0 {
                        assert_eq!(s.image.pixels()[[i, j, 0]], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_templates_give_uniform_logits() {
        let bank = TemplateBank::new(vec![Array3::<f64>::zeros((4, 4, 1)); 5]).unwrap();
        let m = make_quadrant_model(&bank, QuadrantMode::Overlapping).unwrap();
        let z = forward_logits(&m, Array3::from_elem((8, 8, 1), 0.7).view()).unwrap();
        assert!(z.iter().all(|&v| v == z[0]));
        assert_eq!(m.num_classes(), 5);
    }

    #[test]
    fn spec_validation() {
        assert!(QuadrantSpec {
            height: 7,
            ..QuadrantSpec::default()
        }
        .validate()
        .is_err());
        assert!(QuadrantSpec {
            classes: 3,
            ..QuadrantSpec::default()
        }
        .validate()
        .is_err());
        // 8x8 images have 16 interior positions per quadrant.
        let tiny = QuadrantSpec {
            height: 8,
            width: 8,
            classes: 20,
            ..QuadrantSpec::default()
        };
        assert!(TemplateBank::<f64>::generate(&tiny, 0).is_err());
    }

    #[test]
    fn template_shape_mismatch_rejected() {
        assert!(TemplateBank::new(vec![
            Array3::<f64>::zeros((4, 4, 1)),
            Array3::zeros((4, 3, 1))
        ])
        .is_err());
    }
}
