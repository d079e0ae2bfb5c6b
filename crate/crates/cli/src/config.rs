use std::path::{Path, PathBuf};

use alens_core::eval::{CurveConfig, LocalizationOptions, SimilarityMode};
use alens_core::toymodel::{QuadrantDataset, QuadrantSpec};
use alens_core::{
    AttributionMethodSpec, Error, LensConfig, MlpModel, Result, SelectionStrategy, ToyModel64,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Which classifier a run uses when no dataset directory is given.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// The linear model matched to the dataset's class templates.
    #[default]
    Quadrant,
    /// A randomly initialised one-hidden-layer network.
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: usize,
    },
}

fn default_hidden() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub localization: LocalizationOptions,
    pub curve: CurveConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SanityConfig {
    /// Number of dataset images, taken from the front.
    pub images: usize,
    pub fractions: Vec<f64>,
    pub methods: Vec<AttributionMethodSpec>,
    pub strategy: SelectionStrategy,
    pub similarity_mode: SimilarityMode,
}

impl Default for SanityConfig {
    fn default() -> Self {
        let base = alens_core::eval::RandomizationConfig::default();
        Self {
            images: 64,
            fractions: base.fractions,
            methods: base.methods,
            strategy: base.strategy,
            similarity_mode: base.similarity_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelSpec,
    pub dataset: QuadrantSpec,
    pub method: AttributionMethodSpec,
    pub lens: LensConfig,
    /// Class set for `attribute` when no explicit classes are given.
    pub strategy: SelectionStrategy,
    pub metrics: MetricsConfig,
    pub sanity: SanityConfig,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            model: ModelSpec::default(),
            dataset: QuadrantSpec::default(),
            method: AttributionMethodSpec::InputXGradient,
            lens: LensConfig::default(),
            strategy: SelectionStrategy::TopK {
                k: 2,
                include_lowest: false,
            },
            metrics: MetricsConfig::default(),
            sanity: SanityConfig::default(),
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if let ModelSpec::Mlp { hidden: 0 } = self.model {
            return Err(Error::Config("mlp hidden width must be positive".into()));
        }
        self.dataset.validate()?;
        self.method.validate()?;
        self.lens.validate()?;
        self.strategy.validate()?;
        if let Some(blur) = self.metrics.localization.blur {
            blur.validate()?;
        }
        self.metrics.curve.reveal_blur.validate()?;
        if self.metrics.curve.steps == 0 {
            return Err(Error::Config("curve steps must be >= 1".into()));
        }
        self.randomization().validate()
    }

    pub fn randomization(&self) -> alens_core::eval::RandomizationConfig {
        alens_core::eval::RandomizationConfig {
            fractions: self.sanity.fractions.clone(),
            methods: self.sanity.methods.clone(),
            strategy: self.sanity.strategy.clone(),
            similarity_mode: self.sanity.similarity_mode,
            seed: self.seed,
        }
    }

    pub fn generate_dataset(&self) -> Result<QuadrantDataset<f64>> {
        QuadrantDataset::generate(&self.dataset, self.seed)
    }

    /// The configured model for images shaped like `dataset`. Random
    /// networks draw from a stream the dataset generator never uses.
    pub fn build_model(&self, dataset: &QuadrantDataset<f64>) -> Result<ToyModel64> {
        match self.model {
            ModelSpec::Quadrant => Ok(dataset.model()?.into()),
            ModelSpec::Mlp { hidden } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(u64::MAX);
                let spec = &self.dataset;
                Ok(MlpModel::random(
                    (spec.height, spec.width, spec.channels),
                    hidden,
                    spec.classes,
                    &mut rng,
                )?
                .into())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_json() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"seed": 1, "sede": 2}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"lens": {"mask": false}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"dataset": {"size": 3}}"#).is_ok());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"model": {"kind": "mlp"}, "method": {"kind": "integrated_gradients", "steps": 8}}"#,
        )
        .unwrap();
        assert_eq!(cfg.model, ModelSpec::Mlp { hidden: 64 });
        assert_eq!(cfg.lens, LensConfig::default());
    }
}
