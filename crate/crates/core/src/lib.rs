//! Class-competitive refinement of saliency maps.
//!
//! Given attribution maps for a set of competing classes, [`lens::refine`]
//! reweights the target map by the target's pixel-wise softmax share across
//! the set and drops pixels where the target does no better than chance.
//! The crate also ships analytic toy classifiers with exact gradients,
//! gradient and perturbation attributors, a synthetic grid-pointing dataset,
//! and the localization, insertion/deletion and randomization protocols used
//! to evaluate refined maps.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below name the common `f64` instantiations.

pub mod attributors;
pub mod class_select;
pub mod error;
pub mod eval;
pub mod io;
pub mod lens;
pub mod maps;
pub mod report;
pub mod scalar;
pub mod toymodel;

pub use attributors::{attribute, attribute_stack, AttributionMethodSpec, Baseline};
pub use class_select::{select_classes, SelectionStrategy};
pub use error::{Error, ErrorKind, Result};
pub use lens::{
    averaged_distribution, pixel_softmax, refine, refine_detailed, ClassDistributionStack,
    LensConfig, Refinement,
};
pub use maps::{AttributionMap, AttributionStack, BlurConfig, ImageSample, RegionMask};
pub use scalar::Scalar;
pub use toymodel::{Classifier, LinearSoftmaxModel, MlpModel, ToyModel};

pub type AttributionMap64 = AttributionMap<f64>;
pub type AttributionMap32 = AttributionMap<f32>;
pub type AttributionStack64 = AttributionStack<f64>;
pub type AttributionStack32 = AttributionStack<f32>;
pub type ImageSample64 = ImageSample<f64>;
pub type ImageSample32 = ImageSample<f32>;
pub type ClassDistributionStack64 = ClassDistributionStack<f64>;
pub type ToyModel64 = ToyModel<f64>;
pub type ToyModel32 = ToyModel<f32>;
pub type QuadrantDataset64 = toymodel::QuadrantDataset<f64>;
