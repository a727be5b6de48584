//! Geographic side of the analysis: haversine geodesics, Pearson and
//! distance correlation between linguistic and geographic distances, and a
//! permutation test that reshuffles the language-to-location assignment.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::distance::DistanceMatrix;
use crate::error::{Error, Result};
use crate::ingest::LanguageRecord;
use crate::seed;

const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Great-circle distance between two coordinate pairs via the haversine
/// formula on a spherical Earth.
pub fn geodesic_km(a: &LanguageRecord, b: &LanguageRecord) -> f64 {
    let (lat1, lon1) = (a.latitude.to_radians(), a.longitude.to_radians());
    let (lat2, lon2) = (b.latitude.to_radians(), b.longitude.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Pearson correlation coefficient; NaN when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Bias-uncorrected sample distance correlation between two vectors.
/// The doubly-centered pairwise matrices are never materialized: row sums
/// are precomputed and the O(n^2) accumulation keeps O(n) memory.
pub fn distance_correlation(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    let nf = n as f64;
    let row_sums = |v: &[f64]| -> (Vec<f64>, f64) {
        let sums: Vec<f64> = v
            .par_iter()
            .map(|&vi| v.iter().map(|&vj| (vi - vj).abs()).sum())
            .collect();
        let grand = sums.iter().sum::<f64>();
        (sums, grand)
    };
    let (ax, gx) = row_sums(x);
    let (ay, gy) = row_sums(y);
    // A_jk = |x_j - x_k| - ax_j/n - ax_k/n + gx/n^2, likewise for B.
    let (sxy, sxx, syy) = (0..n)
        .into_par_iter()
        .map(|j| {
            let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
            for k in 0..n {
                let a = (x[j] - x[k]).abs() - ax[j] / nf - ax[k] / nf + gx / (nf * nf);
                let b = (y[j] - y[k]).abs() - ay[j] / nf - ay[k] / nf + gy / (nf * nf);
                sxy += a * b;
                sxx += a * a;
                syy += b * b;
            }
            (sxy, sxx, syy)
        })
        .reduce(|| (0.0, 0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    if sxx <= 0.0 || syy <= 0.0 {
        return f64::NAN;
    }
    (sxy / (sxx * syy).sqrt()).max(0.0).sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct GeoCorrelation {
    /// (label_a, label_b, linguistic distance, geodesic distance in km).
    pub pairs: Vec<(String, String, f64, f64)>,
    /// Pearson r of linguistic distance against log10 geodesic km.
    pub pearson_r: f64,
    pub distance_correlation: f64,
    pub p_value: f64,
    pub permutations: usize,
}

fn coords_for<'a>(
    matrix_labels: &[String],
    registry: &'a [LanguageRecord],
    exclude: &[String],
) -> Result<Vec<(usize, &'a LanguageRecord)>> {
    let by_id: HashMap<&str, &LanguageRecord> = registry
        .iter()
        .map(|rec| (rec.language_id.as_str(), rec))
        .collect();
    let mut kept = Vec::new();
    for (i, label) in matrix_labels.iter().enumerate() {
        if exclude.iter().any(|e| e == label) {
            continue;
        }
        let rec = by_id
            .get(label.as_str())
            .ok_or_else(|| Error::MissingCoordinates(label.clone()))?;
        kept.push((i, *rec));
    }
    Ok(kept)
}

fn pair_vectors(
    matrix: &DistanceMatrix,
    kept: &[(usize, &LanguageRecord)],
    geo_of: impl Fn(usize, usize) -> f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = kept.len();
    let mut ling = Vec::with_capacity(n * (n - 1) / 2);
    let mut geo = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            ling.push(matrix.get(kept[a].0, kept[b].0));
            geo.push(geo_of(a, b));
        }
    }
    (ling, geo)
}

/// Correlate linguistic and geographic distances across all language pairs.
/// The permutation test shuffles which language sits at which location and
/// recomputes the distance correlation; p = (#{permuted >= observed}+1) /
/// (permutations+1). Set `log_geo` to run the distance correlation on log10
/// kilometers instead of raw kilometers.
pub fn correlate(
    matrix: &DistanceMatrix,
    registry: &[LanguageRecord],
    exclude: &[String],
    permutations: usize,
    log_geo: bool,
    seed_value: u64,
) -> Result<GeoCorrelation> {
    assert!(permutations >= 100, "need at least 100 permutations");
    let kept = coords_for(&matrix.labels, registry, exclude)?;
    let n = kept.len();
    if n < 3 {
        return Err(Error::InsufficientData(
            "need at least three located languages".into(),
        ));
    }
    // Geodesic distances between the n retained locations.
    let geo_table: Vec<Vec<f64>> = kept
        .iter()
        .map(|&(_, a)| kept.iter().map(|&(_, b)| geodesic_km(a, b)).collect())
        .collect();
    let (ling, geo_km) = pair_vectors(matrix, &kept, |a, b| geo_table[a][b]);
    let pairs: Vec<(String, String, f64, f64)> = {
        let mut out = Vec::with_capacity(ling.len());
        let mut idx = 0;
        for a in 0..n {
            for b in a + 1..n {
                out.push((
                    matrix.labels[kept[a].0].clone(),
                    matrix.labels[kept[b].0].clone(),
                    ling[idx],
                    geo_km[idx],
                ));
                idx += 1;
            }
        }
        out
    };
    let log_pairs: (Vec<f64>, Vec<f64>) = ling
        .iter()
        .zip(&geo_km)
        .filter(|&(_, &g)| g > 0.0)
        .map(|(&l, &g)| (l, g.log10()))
        .unzip();
    let pearson_r = pearson(&log_pairs.0, &log_pairs.1);
    let transform = |g: f64| if log_geo { g.max(1e-9).log10() } else { g };
    let geo_vec: Vec<f64> = geo_km.iter().map(|&g| transform(g)).collect();
    let observed = distance_correlation(&ling, &geo_vec);

    let exceed: usize = (0..permutations as u64)
        .into_par_iter()
        .map(|rep| {
            use rand::seq::SliceRandom;
            let mut rng = seed::derive_rng(seed_value, "geo_permutation", rep);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let (_, permuted_geo) = pair_vectors(matrix, &kept, |a, b| geo_table[perm[a]][perm[b]]);
            let permuted: Vec<f64> = permuted_geo.iter().map(|&g| transform(g)).collect();
            usize::from(distance_correlation(&ling, &permuted) >= observed)
        })
        .sum();
    Ok(GeoCorrelation {
        pairs,
        pearson_r,
        distance_correlation: observed,
        p_value: (exceed + 1) as f64 / (permutations + 1) as f64,
        permutations,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PerLanguageCorrelation {
    pub language_id: String,
    /// (other label, linguistic distance, geodesic distance in km).
    pub pairs: Vec<(String, f64, f64)>,
    /// Pearson r of linguistic distance against log10 geodesic km; NaN when
    /// either side has zero variance.
    pub pearson_r: f64,
}

/// One language against all others: the scatter behind per-language maps.
pub fn per_language_correlation(
    matrix: &DistanceMatrix,
    registry: &[LanguageRecord],
    language_id: &str,
    exclude: &[String],
) -> Result<PerLanguageCorrelation> {
    let kept = coords_for(&matrix.labels, registry, exclude)?;
    let (own_idx, own_rec) = kept
        .iter()
        .find(|(i, _)| matrix.labels[*i] == language_id)
        .copied()
        .ok_or_else(|| Error::UnknownLanguage(language_id.to_string()))?;
    let mut pairs = Vec::new();
    for &(i, rec) in &kept {
        if i == own_idx {
            continue;
        }
        pairs.push((
            matrix.labels[i].clone(),
            matrix.get(own_idx, i),
            geodesic_km(own_rec, rec),
        ));
    }
    let filtered: (Vec<f64>, Vec<f64>) = pairs
        .iter()
        .filter(|&&(_, _, g)| g > 0.0)
        .map(|&(_, l, g)| (l, g.log10()))
        .unzip();
    Ok(PerLanguageCorrelation {
        language_id: language_id.to_string(),
        pairs,
        pearson_r: pearson(&filtered.0, &filtered.1),
    })
}

/// Scatter CSV: `lang_a,lang_b,d_ling,d_geo_km`.
pub fn write_scatter_csv(correlation: &GeoCorrelation, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "lang_a,lang_b,d_ling,d_geo_km")?;
    for (a, b, dl, dg) in &correlation.pairs {
        writeln!(w, "{a},{b},{dl},{dg}")?;
    }
    Ok(())
}
