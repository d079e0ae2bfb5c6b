use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::AttributionMap;
use crate::scalar::Scalar;

/// Whether maps are compared as signed values or magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMode {
    #[default]
    Absolute,
    Signed,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub pearson: f64,
    pub spearman: f64,
    pub cosine: f64,
    /// Set when some measure was undefined (constant or zero map) and
    /// reported as 0.
    pub degenerate: bool,
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite"));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn cosine(x: &[f64], y: &[f64]) -> Option<f64> {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx: f64 = x.iter().map(|a| a * a).sum();
    let ny: f64 = y.iter().map(|b| b * b).sum();
    if nx == 0.0 || ny == 0.0 {
        return None;
    }
    Some((dot / (nx.sqrt() * ny.sqrt())).clamp(-1.0, 1.0))
}

pub fn similarity<T: Scalar>(
    a: &AttributionMap<T>,
    b: &AttributionMap<T>,
    mode: SimilarityMode,
) -> Result<SimilarityReport> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidInput(format!(
            "map dims differ: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let prep = |m: &AttributionMap<T>| -> Vec<f64> {
        m.values()
            .iter()
            .map(|v| match mode {
                SimilarityMode::Absolute => v.abs().to_f64_lossy(),
                SimilarityMode::Signed => v.to_f64_lossy(),
            })
            .collect()
    };
    let (x, y) = (prep(a), prep(b));
    let p = pearson(&x, &y);
    let s = pearson(&average_ranks(&x), &average_ranks(&y));
    let c = cosine(&x, &y);
    Ok(SimilarityReport {
        pearson: p.unwrap_or(0.0),
        spearman: s.unwrap_or(0.0),
        cosine: c.unwrap_or(0.0),
        degenerate: p.is_none() || s.is_none() || c.is_none(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn map(v: Array2<f64>) -> AttributionMap<f64> {
        AttributionMap::new(v).unwrap()
    }

    fn random_map(rng: &mut ChaCha8Rng) -> AttributionMap<f64> {
        // Coarse values force ties in the ranking.
        map(Array2::from_shape_fn((6, 7), |_| {
            (rng.random_range(-1.0..1.0f64) * 4.0).round() / 4.0
        }))
    }

    /// Tie-averaged ranks by counting, independent of sorting.
    fn counting_ranks(x: &[f64]) -> Vec<f64> {
        x.iter()
            .map(|v| {
                let less = x.iter().filter(|u| *u < v).count() as f64;
                let equal = x.iter().filter(|u| *u == v).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect()
    }

    fn textbook_pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|b| b * b).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    #[test]
    fn self_similarity_is_one() {
        let a = map(array![[0.1, -0.5], [2.0, 0.3]]);
        let r = similarity(&a, &a, SimilarityMode::Absolute).unwrap();
        for v in [r.pearson, r.spearman, r.cosine] {
            assert!((v - 1.0).abs() < 1e-9);
        }
        assert!(!r.degenerate);
    }

    #[test]
    fn positive_scaling_is_invisible() {
        let a = map(array![[0.1, 0.5], [2.0, 0.3]]);
        let b = map(a.values().to_owned() * 2.0);
        let r = similarity(&a, &b, SimilarityMode::Signed).unwrap();
        for v in [r.pearson, r.spearman, r.cosine] {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_map_is_degenerate() {
        let a = map(array![[1.0, 1.0], [1.0, 1.0]]);
        let b = map(array![[0.0, 1.0], [2.0, 3.0]]);
        let r = similarity(&a, &b, SimilarityMode::Absolute).unwrap();
        assert!(r.degenerate);
        assert_eq!((r.pearson, r.spearman), (0.0, 0.0));
        assert!(r.cosine > 0.0);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
    }

    #[test]
    fn matches_brute_force_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let (a, b) = (random_map(&mut rng), random_map(&mut rng));
            let r = similarity(&a, &b, SimilarityMode::Absolute).unwrap();
            let x: Vec<f64> = a.values().iter().map(|v| v.abs()).collect();
            let y: Vec<f64> = b.values().iter().map(|v| v.abs()).collect();
            assert!((r.pearson - textbook_pearson(&x, &y)).abs() < 1e-9);
            assert!(
                (r.spearman - textbook_pearson(&counting_ranks(&x), &counting_ranks(&y))).abs()
                    < 1e-9
            );
            let cos = x.iter().zip(&y).map(|(p, q)| p * q).sum::<f64>()
                / (x.iter().map(|p| p * p).sum::<f64>().sqrt()
                    * y.iter().map(|q| q * q).sum::<f64>().sqrt());
            assert!((r.cosine - cos).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn symmetric(seed in any::<u64>(), signed in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b) = (random_map(&mut rng), random_map(&mut rng));
            let mode = if signed { SimilarityMode::Signed } else { SimilarityMode::Absolute };
            prop_assert_eq!(similarity(&a, &b, mode).unwrap(), similarity(&b, &a, mode).unwrap());
        }
    }
}
