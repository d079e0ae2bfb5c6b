//! Dataset directories written by `gen-data`.

use std::path::Path;

use alens_core::io::{
    image_file, load_model, mask_file, read_image, read_json, read_mask, save_model, write_image,
    write_json, write_mask,
};
use alens_core::toymodel::{QuadrantSample, QuadrantSpec};
use alens_core::{Error, Result, ToyModel64};
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "dataset.json";
const MODEL: &str = "model.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    pub image: String,
    pub classes: [usize; 4],
    pub masks: [String; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub seed: u64,
    pub spec: QuadrantSpec,
    pub model: String,
    pub samples: Vec<SampleEntry>,
}

pub fn write_dataset(
    dir: &Path,
    seed: u64,
    spec: &QuadrantSpec,
    model: &ToyModel64,
    samples: &[QuadrantSample<f64>],
) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    save_model(dir.join(MODEL), model, Some(seed))?;
    let mut entries = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let image = image_file(i);
        write_image(dir.join(&image), &s.image)?;
        let masks: [String; 4] = std::array::from_fn(|q| mask_file(i, q));
        for (q, m) in s.masks.iter().enumerate() {
            write_mask(dir.join(&masks[q]), m)?;
        }
        entries.push(SampleEntry {
            image,
            classes: s.classes,
            masks,
        });
    }
    let manifest = DatasetManifest {
        seed,
        spec: spec.clone(),
        model: MODEL.into(),
        samples: entries,
    };
    write_json(dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn read_dataset(dir: &Path) -> Result<(DatasetManifest, ToyModel64, Vec<QuadrantSample<f64>>)> {
    let manifest: DatasetManifest = read_json(dir.join(MANIFEST))?;
    let model = load_model(dir.join(&manifest.model))?;
    let samples = manifest
        .samples
        .iter()
        .map(|e| {
            let masks = [0, 1, 2, 3].map(|q| read_mask(dir.join(&e.masks[q])));
            let [a, b, c, d] = masks;
            Ok(QuadrantSample {
                image: read_image(dir.join(&e.image))?,
                classes: e.classes,
                masks: [a?, b?, c?, d?],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, model, samples))
}
