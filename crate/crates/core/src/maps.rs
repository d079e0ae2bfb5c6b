//! Images, attribution maps, stacks of maps, region masks, and the map-level
//! preprocessing applied before localization metrics.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// An `H×W×d` image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample<T> {
    pixels: Array3<T>,
}

impl<T: Scalar> ImageSample<T> {
    pub fn new(pixels: Array3<T>) -> Result<Self> {
        let (h, w, d) = pixels.dim();
        if h == 0 || w == 0 || d == 0 {
            return Err(Error::InvalidInput(format!(
                "image dims must be positive, got {h}x{w}x{d}"
            )));
        }
        for &p in pixels.iter() {
            if !p.is_finite() {
                return Err(Error::InvalidInput(
                    "image contains non-finite pixel".into(),
                ));
            }
            if p < T::zero() || p > T::one() {
                return Err(Error::InvalidInput(format!(
                    "pixel value {p} outside [0, 1]"
                )));
            }
        }
        Ok(Self { pixels })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            pixels: Array3::zeros((height, width, channels)),
        }
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn channels(&self) -> usize {
        self.pixels.dim().2
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.pixels.dim()
    }

    pub fn pixels(&self) -> ArrayView3<'_, T> {
        self.pixels.view()
    }

    pub fn into_pixels(self) -> Array3<T> {
        self.pixels
    }
}

/// One real-valued `H×W` saliency grid for an (input, class) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionMap<T> {
    values: Array2<T>,
}

impl<T: Scalar> AttributionMap<T> {
    pub fn new(values: Array2<T>) -> Result<Self> {
        let (h, w) = values.dim();
        if h == 0 || w == 0 {
            return Err(Error::InvalidInput(format!(
                "map dims must be positive, got {h}x{w}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "attribution map contains non-finite value".into(),
            ));
        }
        Ok(Self { values })
    }

    /// Wraps values already known to be finite.
    pub(crate) fn from_finite(values: Array2<T>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self { values }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            values: Array2::zeros((height, width)),
        }
    }

    pub fn height(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn values(&self) -> ArrayView2<'_, T> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<T> {
        self.values
    }

    pub fn map_values(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(self.values.mapv(f))
    }
}

/// `C'` attribution maps over the same input, one per class id.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionStack<T> {
    class_ids: Vec<usize>,
    maps: Vec<AttributionMap<T>>,
}

impl<T: Scalar> AttributionStack<T> {
    pub fn new(class_ids: Vec<usize>, maps: Vec<AttributionMap<T>>) -> Result<Self> {
        if class_ids.len() != maps.len() {
            return Err(Error::InvalidStack(format!(
                "{} class ids but {} maps",
                class_ids.len(),
                maps.len()
            )));
        }
        if class_ids.len() < 2 {
            return Err(Error::InvalidStack(format!(
                "a stack needs at least 2 classes, got {}",
                class_ids.len()
            )));
        }
        check_distinct(&class_ids).map_err(Error::InvalidStack)?;
        let dim = maps[0].dim();
        if let Some(bad) = maps.iter().find(|m| m.dim() != dim) {
            return Err(Error::InvalidStack(format!(
                "map dims differ: {:?} vs {:?}",
                dim,
                bad.dim()
            )));
        }
        Ok(Self { class_ids, maps })
    }

    /// Builds a stack from a `C'×H×W` array.
    pub fn from_array(class_ids: Vec<usize>, values: Array3<T>) -> Result<Self> {
        let maps = values
            .axis_iter(Axis(0))
            .map(|m| AttributionMap::new(m.to_owned()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(class_ids, maps)
    }

    pub fn to_array(&self) -> Array3<T> {
        let (h, w) = self.dim();
        let mut out = Array3::zeros((self.len(), h, w));
        for (mut slot, map) in out.axis_iter_mut(Axis(0)).zip(&self.maps) {
            slot.assign(&map.values);
        }
        out
    }

    pub fn class_ids(&self) -> &[usize] {
        &self.class_ids
    }

    pub fn maps(&self) -> &[AttributionMap<T>] {
        &self.maps
    }

    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.maps[0].dim()
    }

    pub fn position(&self, class: usize) -> Option<usize> {
        self.class_ids.iter().position(|&c| c == class)
    }

    pub fn map_for(&self, class: usize) -> Option<&AttributionMap<T>> {
        self.position(class).map(|k| &self.maps[k])
    }

    /// Reorders classes; `order[k]` is the old index placed at position `k`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.len() {
            return Err(Error::InvalidInput("permutation length mismatch".into()));
        }
        let class_ids = order.iter().map(|&k| self.class_ids[k]).collect();
        let maps = order.iter().map(|&k| self.maps[k].clone()).collect();
        Self::new(class_ids, maps)
    }
}

pub(crate) fn check_distinct(ids: &[usize]) -> std::result::Result<(), String> {
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    match sorted.windows(2).find(|w| w[0] == w[1]) {
        Some(w) => Err(format!("duplicate class id {}", w[0])),
        None => Ok(()),
    }
}

/// Boolean `H×W` ground-truth region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    cells: Array2<bool>,
}

impl RegionMask {
    pub fn new(cells: Array2<bool>) -> Result<Self> {
        let (h, w) = cells.dim();
        if h == 0 || w == 0 {
            return Err(Error::InvalidInput(format!(
                "mask dims must be positive, got {h}x{w}"
            )));
        }
        Ok(Self { cells })
    }

    /// Mask of quadrant `q` (0 top-left, 1 top-right, 2 bottom-left,
    /// 3 bottom-right) of an `H×W` grid split at `H/2`, `W/2`.
    pub fn quadrant(height: usize, width: usize, q: usize) -> Result<Self> {
        if q > 3 {
            return Err(Error::InvalidInput(format!(
                "quadrant index {q} out of range"
            )));
        }
        let (rows, cols) = quadrant_bounds(height, width, q);
        let cells = Array2::from_shape_fn((height, width), |(i, j)| {
            rows.contains(&i) && cols.contains(&j)
        });
        Self::new(cells)
    }

    pub fn dim(&self) -> (usize, usize) {
        self.cells.dim()
    }

    pub fn cells(&self) -> ArrayView2<'_, bool> {
        self.cells.view()
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.cells[[i, j]]
    }
}

/// Row and column ranges of quadrant `q`.
pub fn quadrant_bounds(
    height: usize,
    width: usize,
    q: usize,
) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let (hh, hw) = (height / 2, width / 2);
    let rows = if q < 2 { 0..hh } else { hh..height };
    let cols = if q.is_multiple_of(2) {
        0..hw
    } else {
        hw..width
    };
    (rows, cols)
}

/// Sums a raw `H×W×d` attribution tensor over its channel axis.
pub fn channel_aggregate<T: Scalar>(raw: ArrayView3<'_, T>) -> Result<AttributionMap<T>> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "raw attribution contains non-finite value".into(),
        ));
    }
    AttributionMap::new(raw.sum_axis(Axis(2)))
}

pub fn positive_part<T: Scalar>(map: &AttributionMap<T>) -> AttributionMap<T> {
    AttributionMap::from_finite(map.values.mapv(|v| v.max(T::zero())))
}

/// Gaussian blur parameters. The kernel is an odd-sized window of a
/// normalized Gaussian, applied separably.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlurConfig {
    pub kernel_size: usize,
    pub sigma: f64,
}

impl Default for BlurConfig {
    fn default() -> Self {
        Self {
            kernel_size: 11,
            sigma: 2.0,
        }
    }
}

impl BlurConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "blur kernel size must be odd, got {}",
                self.kernel_size
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!(
                "blur sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Normalized 1-D Gaussian weights, centre at index `kernel_size / 2`.
pub fn gaussian_kernel<T: Scalar>(kernel_size: usize, sigma: f64) -> Result<Vec<T>> {
    BlurConfig { kernel_size, sigma }.validate()?;
    let r = (kernel_size / 2) as f64;
    let raw: Vec<f64> = (0..kernel_size)
        .map(|k| {
            let x = k as f64 - r;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| T::lit(w / total)).collect())
}

/// Separable Gaussian blur, rows then columns, with edge replication.
pub fn gaussian_blur<T: Scalar>(
    map: &AttributionMap<T>,
    kernel_size: usize,
    sigma: f64,
) -> Result<AttributionMap<T>> {
    let kernel = gaussian_kernel::<T>(kernel_size, sigma)?;
    Ok(AttributionMap::from_finite(blur_plane(
        map.values.view(),
        &kernel,
    )))
}

pub(crate) fn blur_plane<T: Scalar>(src: ArrayView2<'_, T>, kernel: &[T]) -> Array2<T> {
    let (h, w) = src.dim();
    let r = (kernel.len() / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let mut rows = Array2::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            let mut acc = T::zero();
            for (k, &wk) in kernel.iter().enumerate() {
                acc += wk * src[[i, clamp(j as isize + k as isize - r, w)]];
            }
            rows[[i, j]] = acc;
        }
    }
    let mut out = Array2::zeros((h, w));
    for i in 0..h {
        for j in 0..w {
            let mut acc = T::zero();
            for (k, &wk) in kernel.iter().enumerate() {
                acc += wk * rows[[clamp(i as isize + k as isize - r, h), j]];
            }
            out[[i, j]] = acc;
        }
    }
    out
}

/// Blurs every channel of an image independently.
pub fn blur_image<T: Scalar>(image: &ImageSample<T>, blur: BlurConfig) -> Result<ImageSample<T>> {
    let kernel = gaussian_kernel::<T>(blur.kernel_size, blur.sigma)?;
    let mut out = Array3::zeros(image.dim());
    for c in 0..image.channels() {
        let plane = blur_plane(image.pixels.index_axis(Axis(2), c), &kernel);
        out.index_axis_mut(Axis(2), c).assign(&plane);
    }
    // Convex combinations of [0,1] values stay in [0,1] up to rounding.
    out.mapv_inplace(|v| v.max(T::zero()).min(T::one()));
    ImageSample::new(out)
}
