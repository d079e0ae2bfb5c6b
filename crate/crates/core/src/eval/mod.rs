//! Evaluation protocols: grid-pointing localization, insertion/deletion
//! curves, and similarity under cascading parameter randomization.

mod curves;
mod grid;
mod localization;
mod randomization;
mod similarity;

pub use curves::{
    deletion_curve, insertion_curve, pixel_ranking, trapezoid_auc, CurveConfig, CurveMode,
    CurveResult, DeleteBaseline,
};
pub use grid::{run_curves, run_localization, CurveRow, LocalizationRow};
pub use localization::{
    localization_eval, Binarization, LocalizationOptions, LocalizationReport, MetricFn,
};
pub use randomization::{
    randomization_experiment, RandomizationConfig, RandomizationReport, RandomizationRow,
    RandomizationSummaryRow, Variant,
};
pub use similarity::{average_ranks, similarity, SimilarityMode, SimilarityReport};
