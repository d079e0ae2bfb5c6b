use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::curves::{deletion_curve, insertion_curve, CurveConfig, CurveMode};
use super::localization::{localization_eval, LocalizationOptions, LocalizationReport};
use crate::attributors::{attribute_stack, AttributionMethodSpec};
use crate::error::Result;
use crate::lens::{refine, LensConfig};
use crate::maps::AttributionMap;
use crate::scalar::Scalar;
use crate::toymodel::{Classifier, QuadrantSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationRow {
    pub sample: usize,
    pub quadrant: usize,
    pub class: usize,
    pub vanilla: LocalizationReport,
    pub lens: LocalizationReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub sample: usize,
    pub quadrant: usize,
    pub class: usize,
    pub vanilla_auc: f64,
    pub lens_auc: f64,
}

/// Vanilla and refined maps for every quadrant class of a sample, with the
/// sample's four classes as the lens class set.
fn quadrant_maps<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    sample: &QuadrantSample<T>,
    method: &AttributionMethodSpec,
    lens: &LensConfig,
) -> Result<Vec<(AttributionMap<T>, AttributionMap<T>)>> {
    let stack = attribute_stack(model, &sample.image, &sample.classes, method)?;
    sample
        .classes
        .iter()
        .map(|&c| {
            Ok((
                stack.map_for(c).expect("class in stack").clone(),
                refine(&stack, c, lens)?,
            ))
        })
        .collect()
}

/// Grid-pointing localization: one row per (sample, quadrant), ordered by
/// sample then quadrant.
pub fn run_localization<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    samples: &[QuadrantSample<T>],
    method: &AttributionMethodSpec,
    lens: &LensConfig,
    options: &LocalizationOptions,
) -> Result<Vec<LocalizationRow>> {
    lens.validate()?;
    let per_sample = samples
        .par_iter()
        .enumerate()
        .map(|(s, sample)| {
            quadrant_maps(model, sample, method, lens)?
                .iter()
                .enumerate()
                .map(|(q, (vanilla, refined))| {
                    Ok(LocalizationRow {
                        sample: s,
                        quadrant: q,
                        class: sample.classes[q],
                        vanilla: localization_eval(vanilla, &sample.masks[q], options)?,
                        lens: localization_eval(refined, &sample.masks[q], options)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_sample.into_iter().flatten().collect())
}

/// Insertion or deletion AUC for each quadrant class, ordered by sample then
/// quadrant.
pub fn run_curves<T: Scalar, M: Classifier<T> + ?Sized>(
    model: &M,
    samples: &[QuadrantSample<T>],
    method: &AttributionMethodSpec,
    lens: &LensConfig,
    config: &CurveConfig,
    mode: CurveMode,
) -> Result<Vec<CurveRow>> {
    lens.validate()?;
    let auc = |sample: &QuadrantSample<T>, map: &AttributionMap<T>, class: usize| -> Result<f64> {
        let curve = match mode {
            CurveMode::Insertion => insertion_curve(
                model,
                &sample.image,
                map,
                class,
                config.steps,
                config.reveal_blur,
            )?,
            CurveMode::Deletion => deletion_curve(
                model,
                &sample.image,
                map,
                class,
                config.steps,
                config.delete_baseline,
            )?,
        };
        Ok(curve.auc)
    };
    let per_sample = samples
        .par_iter()
        .enumerate()
        .map(|(s, sample)| {
            quadrant_maps(model, sample, method, lens)?
                .iter()
                .enumerate()
                .map(|(q, (vanilla, refined))| {
                    let class = sample.classes[q];
                    Ok(CurveRow {
                        sample: s,
                        quadrant: q,
                        class,
                        vanilla_auc: auc(sample, vanilla, class)?,
                        lens_auc: auc(sample, refined, class)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_sample.into_iter().flatten().collect())
}
