use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::similarity::{similarity, SimilarityMode, SimilarityReport};
use crate::attributors::{attribute_stack, AttributionMethodSpec};
use crate::class_select::{select_classes, SelectionStrategy};
use crate::error::{Error, Result};
use crate::lens::{refine, LensConfig};
use crate::maps::{AttributionMap, ImageSample};
use crate::scalar::Scalar;
use crate::toymodel::{
    check_input, randomize_layers, randomized_group_count, Classifier, ToyModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Vanilla,
    Lens,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Lens => "lens",
        }
    }
}

fn default_fractions() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}

fn default_methods() -> Vec<AttributionMethodSpec> {
    vec![
        AttributionMethodSpec::Gradient,
        AttributionMethodSpec::InputXGradient,
        AttributionMethodSpec::IntegratedGradients {
            steps: 32,
            baseline: Default::default(),
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizationConfig {
    pub fractions: Vec<f64>,
    pub methods: Vec<AttributionMethodSpec>,
    pub strategy: SelectionStrategy,
    pub similarity_mode: SimilarityMode,
    pub seed: u64,
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        Self {
            fractions: default_fractions(),
            methods: default_methods(),
            strategy: SelectionStrategy::TopK {
                k: 2,
                include_lowest: false,
            },
            similarity_mode: SimilarityMode::Absolute,
            seed: 0,
        }
    }
}

impl RandomizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fractions.is_empty() || self.methods.is_empty() {
            return Err(Error::Config(
                "randomization needs at least one fraction and one method".into(),
            ));
        }
        for &f in &self.fractions {
            randomized_group_count(f, 1)?;
        }
        for m in &self.methods {
            m.validate()?;
        }
        self.strategy.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizationRow {
    pub image: usize,
    pub fraction: f64,
    pub groups_randomized: usize,
    pub method: String,
    pub variant: Variant,
    pub target: usize,
    pub similarity: SimilarityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizationSummaryRow {
    pub fraction: f64,
    pub groups_randomized: usize,
    pub method: String,
    pub variant: Variant,
    pub pearson: f64,
    pub spearman: f64,
    pub cosine: f64,
    pub degenerate: usize,
    pub images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizationReport {
    pub similarity_mode: SimilarityMode,
    pub groups_total: usize,
    /// Ordered by image, then fraction, method and variant in config order.
    pub rows: Vec<RandomizationRow>,
    /// Ordered by fraction, method and variant in config order.
    pub summary: Vec<RandomizationSummaryRow>,
}

fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// The strategy's class set, with `target` swapped in for the lowest-ranked
/// pick when the strategy left it out.
fn lens_classes<T: Scalar>(
    logits: &[T],
    strategy: &SelectionStrategy,
    target: usize,
) -> Result<Vec<usize>> {
    let mut set = select_classes(logits, strategy)?;
    if !set.contains(&target) {
        *set.last_mut().expect("at least two classes") = target;
    }
    Ok(set)
}

fn image_maps<T: Scalar>(
    model: &ToyModel<T>,
    image: &ImageSample<T>,
    target: usize,
    method: &AttributionMethodSpec,
    strategy: &SelectionStrategy,
    lens: &LensConfig,
) -> Result<(AttributionMap<T>, AttributionMap<T>)> {
    let logits = model.logits_unchecked(image.pixels()).to_vec();
    let classes = lens_classes(&logits, strategy, target)?;
    let stack = attribute_stack(model, image, &classes, method)?;
    let refined = refine(&stack, target, lens)?;
    let vanilla = stack.map_for(target).expect("target in class set").clone();
    Ok((vanilla, refined))
}

/// Cascading randomization sanity check. Every fraction randomizes the same
/// model with the same seed, so larger fractions extend smaller ones. The
/// target class of each image is the original model's prediction.
pub fn randomization_experiment<T: Scalar>(
    model: &ToyModel<T>,
    images: &[ImageSample<T>],
    config: &RandomizationConfig,
    lens: &LensConfig,
) -> Result<RandomizationReport> {
    config.validate()?;
    lens.validate()?;
    for image in images {
        check_input(model, image.pixels())?;
    }
    let groups_total = model.parameter_groups().len();
    let randomized = config
        .fractions
        .iter()
        .map(|&f| {
            Ok((
                randomized_group_count(f, groups_total)?,
                randomize_layers(model, f, config.seed)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let per_image = images
        .par_iter()
        .enumerate()
        .map(|(idx, image)| {
            let target = argmax(
                model
                    .logits_unchecked(image.pixels())
                    .as_slice()
                    .expect("contiguous logits"),
            );
            let originals = config
                .methods
                .iter()
                .map(|m| image_maps(model, image, target, m, &config.strategy, lens))
                .collect::<Result<Vec<_>>>()?;
            let mut rows = Vec::new();
            for (fi, (groups, rmodel)) in randomized.iter().enumerate() {
                for (method, (v0, l0)) in config.methods.iter().zip(&originals) {
                    let (v1, l1) =
                        image_maps(rmodel, image, target, method, &config.strategy, lens)?;
                    for (variant, a, b) in [(Variant::Vanilla, v0, &v1), (Variant::Lens, l0, &l1)] {
                        rows.push(RandomizationRow {
                            image: idx,
                            fraction: config.fractions[fi],
                            groups_randomized: *groups,
                            method: method.name().to_string(),
                            variant,
                            target,
                            similarity: similarity(a, b, config.similarity_mode)?,
                        });
                    }
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<RandomizationRow> = per_image.into_iter().flatten().collect();

    let cells = config.fractions.len() * config.methods.len() * 2;
    let mut summary = Vec::with_capacity(cells);
    for cell in 0..cells {
        // Each image contributes exactly `cells` rows in cell order.
        let picked: Vec<&RandomizationRow> = rows.iter().skip(cell).step_by(cells).collect();
        let per_fraction = config.methods.len() * 2;
        let (fi, rest) = (cell / per_fraction, cell % per_fraction);
        let method = config.methods[rest / 2].name().to_string();
        let variant = if rest % 2 == 0 {
            Variant::Vanilla
        } else {
            Variant::Lens
        };
        let n = picked.len();
        let mean = |f: fn(&SimilarityReport) -> f64| {
            if n == 0 {
                0.0
            } else {
                picked.iter().map(|r| f(&r.similarity)).sum::<f64>() / n as f64
            }
        };
        summary.push(RandomizationSummaryRow {
            fraction: config.fractions[fi],
            groups_randomized: randomized[fi].0,
            method,
            variant,
            pearson: mean(|s| s.pearson),
            spearman: mean(|s| s.spearman),
            cosine: mean(|s| s.cosine),
            degenerate: picked.iter().filter(|r| r.similarity.degenerate).count(),
            images: n,
        });
    }
    Ok(RandomizationReport {
        similarity_mode: config.similarity_mode,
        groups_total,
        rows,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toymodel::MlpModel;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize) -> (ToyModel<f64>, Vec<ImageSample<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = MlpModel::random((8, 8, 1), 16, 5, &mut rng).unwrap().into();
        let images = (0..n)
            .map(|_| {
                ImageSample::new(Array3::from_shape_fn((8, 8, 1), |_| {
                    rng.random_range(0.0..1.0)
                }))
                .unwrap()
            })
            .collect();
        (model, images)
    }

    #[test]
    fn fraction_zero_is_self_similarity() {
        let (model, images) = setup(4);
        let cfg = RandomizationConfig {
            fractions: vec![0.0],
            ..Default::default()
        };
        let report =
            randomization_experiment(&model, &images, &cfg, &LensConfig::default()).unwrap();
        assert_eq!(report.rows.len(), 4 * 3 * 2);
        for r in &report.rows {
            for v in [
                r.similarity.pearson,
                r.similarity.spearman,
                r.similarity.cosine,
            ] {
                assert!((v - 1.0).abs() < 1e-9, "{r:?}");
            }
        }
    }

    #[test]
    fn summary_averages_rows() {
        let (model, images) = setup(3);
        let cfg = RandomizationConfig {
            seed: 4,
            ..Default::default()
        };
        let report =
            randomization_experiment(&model, &images, &cfg, &LensConfig::default()).unwrap();
        assert_eq!(report.summary.len(), 5 * 3 * 2);
        for s in &report.summary {
            let rows: Vec<_> = report
                .rows
                .iter()
                .filter(|r| {
                    r.fraction == s.fraction && r.method == s.method && r.variant == s.variant
                })
                .collect();
            assert_eq!(rows.len(), 3);
            let mean = rows.iter().map(|r| r.similarity.spearman).sum::<f64>() / 3.0;
            assert!((mean - s.spearman).abs() < 1e-12);
        }
        assert_eq!(report.summary.last().unwrap().groups_randomized, 4);
    }

    #[test]
    fn deterministic_given_seed() {
        let (model, images) = setup(3);
        let cfg = RandomizationConfig {
            seed: 9,
            ..Default::default()
        };
        let a = randomization_experiment(&model, &images, &cfg, &LensConfig::default()).unwrap();
        let b = randomization_experiment(&model, &images, &cfg, &LensConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn target_is_forced_into_class_set() {
        let logits = [0.1, 3.0, 2.0, -1.0];
        let strategy = SelectionStrategy::TopK {
            k: 2,
            include_lowest: false,
        };
        assert_eq!(lens_classes(&logits, &strategy, 1).unwrap(), vec![1, 2]);
        assert_eq!(lens_classes(&logits, &strategy, 3).unwrap(), vec![1, 3]);
    }

    #[test]
    fn rejects_bad_fractions() {
        let (model, images) = setup(1);
        let cfg = RandomizationConfig {
            fractions: vec![1.5],
            ..Default::default()
        };
        assert!(randomization_experiment(&model, &images, &cfg, &LensConfig::default()).is_err());
    }
}
