//! On-disk formats: NPY arrays, attribution stacks with a JSON sidecar,
//! toy-model manifests, and PGM heatmaps.

pub mod npy;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Array4, ArrayD, Ix1, Ix2, Ix3, Ix4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{AttributionMap, AttributionStack, ImageSample, RegionMask};
use crate::scalar::Scalar;
use crate::toymodel::{Classifier, LinearSoftmaxModel, MlpModel, ToyModel};

pub fn write_bytes(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bytes(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_json<S: Serialize>(path: impl AsRef<Path>, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<S: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<S> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

pub fn read_npy(path: impl AsRef<Path>) -> Result<npy::NpyArray> {
    npy::decode(&read_bytes(path)?)
}

fn real_array<T: Scalar, D: ndarray::Dimension>(path: &Path) -> Result<ndarray::Array<T, D>> {
    let a: ArrayD<T> = read_npy(path)?.to_real()?;
    let shape = a.shape().to_vec();
    a.into_dimensionality::<D>().map_err(|_| {
        Error::InvalidInput(format!(
            "{}: expected a {}-d array, found shape {shape:?}",
            path.display(),
            D::NDIM.unwrap_or(0)
        ))
    })
}

pub fn write_array<T: Scalar, D: ndarray::Dimension>(
    path: impl AsRef<Path>,
    a: &ndarray::Array<T, D>,
) -> Result<()> {
    write_bytes(path, &npy::encode_f64(a.shape(), a.iter().copied()))
}

pub fn write_map<T: Scalar>(path: impl AsRef<Path>, map: &AttributionMap<T>) -> Result<()> {
    let v = map.values();
    write_bytes(path, &npy::encode_f64(v.shape(), v.iter().copied()))
}

pub fn read_map<T: Scalar>(path: impl AsRef<Path>) -> Result<AttributionMap<T>> {
    AttributionMap::new(real_array::<T, Ix2>(path.as_ref())?)
}

pub fn write_image<T: Scalar>(path: impl AsRef<Path>, image: &ImageSample<T>) -> Result<()> {
    let p = image.pixels();
    write_bytes(path, &npy::encode_f64(p.shape(), p.iter().copied()))
}

pub fn read_image<T: Scalar>(path: impl AsRef<Path>) -> Result<ImageSample<T>> {
    ImageSample::new(real_array::<T, Ix3>(path.as_ref())?)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &RegionMask) -> Result<()> {
    let c = mask.cells();
    write_bytes(path, &npy::encode_bool(c.shape(), c.iter().copied()))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<RegionMask> {
    let path = path.as_ref();
    let cells = read_npy(path)?
        .to_bool()?
        .into_dimensionality::<Ix2>()
        .map_err(|_| Error::InvalidInput(format!("{}: expected a 2-d mask", path.display())))?;
    RegionMask::new(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StackSidecar {
    class_ids: Vec<usize>,
}

/// `x.npy` pairs with `x.json`.
pub fn sidecar_path(path: impl AsRef<Path>) -> PathBuf {
    path.as_ref().with_extension("json")
}

/// Writes the `C'×H×W` array and its class-id sidecar.
pub fn write_stack<T: Scalar>(path: impl AsRef<Path>, stack: &AttributionStack<T>) -> Result<()> {
    let path = path.as_ref();
    write_array(path, &stack.to_array())?;
    write_json(
        sidecar_path(path),
        &StackSidecar {
            class_ids: stack.class_ids().to_vec(),
        },
    )
}

pub fn read_stack<T: Scalar>(path: impl AsRef<Path>) -> Result<AttributionStack<T>> {
    let path = path.as_ref();
    let values = real_array::<T, Ix3>(path)?;
    let sidecar: StackSidecar = read_json(sidecar_path(path))?;
    AttributionStack::from_array(sidecar.class_ids, values)
}

/// Describes a saved toy model; array paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub architecture: String,
    pub input_dim: [usize; 3],
    pub classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub arrays: BTreeMap<String, String>,
}

/// Writes `manifest_path` and one NPY file per parameter group beside it.
pub fn save_model<T: Scalar>(
    manifest_path: impl AsRef<Path>,
    model: &ToyModel<T>,
    seed: Option<u64>,
) -> Result<ModelManifest> {
    let manifest_path = manifest_path.as_ref();
    let dir = manifest_path.parent().unwrap_or(Path::new(""));
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("model");
    let mut arrays = BTreeMap::new();
    let mut save = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let file = format!("{stem}_{name}.npy");
        write_bytes(dir.join(&file), &bytes)?;
        arrays.insert(name.to_string(), file);
        Ok(())
    };
    match model {
        ToyModel::Linear(m) => {
            let w = m.weights_tensor();
            save("weights", npy::encode_f64(w.shape(), w.iter().copied()))?;
            save(
                "biases",
                npy::encode_f64(&[m.biases().len()], m.biases().iter().copied()),
            )?;
        }
        ToyModel::Mlp(_) => {
            for (name, values) in model.parameter_groups() {
                save(
                    name,
                    npy::encode_f64(values.shape(), values.iter().copied()),
                )?;
            }
        }
    }
    let (h, w, d) = model.input_dim();
    let manifest = ModelManifest {
        architecture: model.architecture().to_string(),
        input_dim: [h, w, d],
        classes: model.num_classes(),
        seed,
        arrays,
    };
    write_json(manifest_path, &manifest)?;
    Ok(manifest)
}

pub fn load_model<T: Scalar>(manifest_path: impl AsRef<Path>) -> Result<ToyModel<T>> {
    let manifest_path = manifest_path.as_ref();
    let manifest: ModelManifest = read_json(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new(""));
    let file = |name: &str| -> Result<PathBuf> {
        manifest
            .arrays
            .get(name)
            .map(|f| dir.join(f))
            .ok_or_else(|| Error::InvalidInput(format!("model manifest lacks array '{name}'")))
    };
    let [h, w, d] = manifest.input_dim;
    let model: ToyModel<T> = match manifest.architecture.as_str() {
        "linear" => {
            let weights: Array4<T> = real_array::<T, Ix4>(&file("weights")?)?;
            let biases: Array1<T> = real_array::<T, Ix1>(&file("biases")?)?;
            LinearSoftmaxModel::new(weights, biases)?.into()
        }
        "mlp" => {
            let hw: Array2<T> = real_array::<T, Ix2>(&file("hidden_weights")?)?;
            let hb: Array1<T> = real_array::<T, Ix1>(&file("hidden_biases")?)?;
            let ow: Array2<T> = real_array::<T, Ix2>(&file("output_weights")?)?;
            let ob: Array1<T> = real_array::<T, Ix1>(&file("output_biases")?)?;
            MlpModel::new((h, w, d), hw, hb, ow, ob)?.into()
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown model architecture '{other}'"
            )))
        }
    };
    if model.input_dim() != (h, w, d) || model.num_classes() != manifest.classes {
        return Err(Error::InvalidInput(
            "model arrays disagree with manifest dims".into(),
        ));
    }
    Ok(model)
}

/// Min-max normalized 8-bit binary graymap, row-major from the top-left.
/// A constant map is mid-gray.
pub fn encode_pgm<T: Scalar>(map: &AttributionMap<T>) -> Vec<u8> {
    let (h, w) = map.dim();
    let v = map.values();
    let lo = v.iter().copied().fold(T::infinity(), T::min);
    let hi = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    if hi > lo {
        let span = (hi - lo).to_f64_lossy();
        out.extend(
            v.iter()
                .map(|&x| ((x - lo).to_f64_lossy() / span * 255.0).round() as u8),
        );
    } else {
        out.extend(std::iter::repeat_n(128u8, h * w));
    }
    out
}

pub fn write_pgm<T: Scalar>(path: impl AsRef<Path>, map: &AttributionMap<T>) -> Result<()> {
    write_bytes(path, &encode_pgm(map))
}

/// Dataset file names, zero-padded by sample index.
pub fn image_file(index: usize) -> String {
    format!("image_{index:05}.npy")
}

pub fn mask_file(index: usize, quadrant: usize) -> String {
    format!("mask_{index:05}_q{quadrant}.npy")
}
