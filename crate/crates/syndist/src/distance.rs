//! Jensen-Shannon and Hellinger distances between block distributions, and
//! labeled symmetric distance matrices with CSV/JSON round-trip IO.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Corpus;
use crate::ngram::{count_blocks, estimate_distribution, sample_corpus, BlockDistribution};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    JensenShannon,
    Hellinger,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::JensenShannon => f.write_str("jensen_shannon"),
            Metric::Hellinger => f.write_str("hellinger"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jensen_shannon" | "js" => Ok(Metric::JensenShannon),
            "hellinger" => Ok(Metric::Hellinger),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

fn check_same_r(p: &BlockDistribution, q: &BlockDistribution) -> Result<()> {
    if p.r != q.r {
        return Err(Error::MismatchedBlockSize(p.r, q.r));
    }
    Ok(())
}

/// Jensen-Shannon distance with base-2 logs: in [0, 1], zero summands for
/// zero numerators, evaluated over the union of supports.
pub fn js_distance(p: &BlockDistribution, q: &BlockDistribution) -> Result<f64> {
    check_same_r(p, q)?;
    let mut acc = 0.0;
    for &block in &support_union(p, q) {
        let (pv, qv) = (p.prob(block), q.prob(block));
        if pv > 0.0 {
            acc += pv * (2.0 * pv / (pv + qv)).log2();
        }
        if qv > 0.0 {
            acc += qv * (2.0 * qv / (pv + qv)).log2();
        }
    }
    Ok((0.5 * acc).max(0.0).sqrt().min(1.0))
}

/// Hellinger distance: sqrt(1/2 sum (sqrt p - sqrt q)^2), in [0, 1].
pub fn hellinger_distance(p: &BlockDistribution, q: &BlockDistribution) -> Result<f64> {
    check_same_r(p, q)?;
    let mut acc = 0.0;
    for &block in &support_union(p, q) {
        let d = p.prob(block).sqrt() - q.prob(block).sqrt();
        acc += d * d;
    }
    Ok((0.5 * acc).max(0.0).sqrt().min(1.0))
}

/// Union of supports in block order: accumulating in a fixed order keeps
/// the float sums — and therefore all written outputs — run-independent.
fn support_union(p: &BlockDistribution, q: &BlockDistribution) -> Vec<u64> {
    let mut blocks: Vec<u64> = p.probs.keys().chain(q.probs.keys()).copied().collect();
    blocks.sort_unstable();
    blocks.dedup();
    blocks
}

pub fn distance(p: &BlockDistribution, q: &BlockDistribution, metric: Metric) -> Result<f64> {
    match metric {
        Metric::JensenShannon => js_distance(p, q),
        Metric::Hellinger => hellinger_distance(p, q),
    }
}

/// A labeled symmetric matrix of pairwise distances in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub metric: Metric,
    pub r: usize,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Matrix restricted to (and reordered by) the given labels.
    pub fn subset(&self, labels: &[String]) -> Result<DistanceMatrix> {
        let idx: Vec<usize> = labels
            .iter()
            .map(|l| {
                self.index_of(l)
                    .ok_or_else(|| Error::UnknownLanguage(l.clone()))
            })
            .collect::<Result<_>>()?;
        let values = idx
            .iter()
            .map(|&i| idx.iter().map(|&j| self.values[i][j]).collect())
            .collect();
        Ok(DistanceMatrix {
            labels: labels.to_vec(),
            values,
            metric: self.metric,
            r: self.r,
        })
    }
}

/// All pairwise distances between labeled distributions, computed once per
/// unordered pair.
pub fn build_distance_matrix(
    dists: &[(String, BlockDistribution)],
    metric: Metric,
) -> Result<DistanceMatrix> {
    assert!(dists.len() >= 2, "need at least two distributions");
    let r = dists[0].1.r;
    let mut seen = std::collections::HashSet::new();
    for (label, d) in dists {
        if !seen.insert(label.clone()) {
            return Err(Error::DuplicateLabel(label.clone()));
        }
        check_same_r(&dists[0].1, d)?;
    }
    let n = dists.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let computed: Vec<((usize, usize), f64)> = pairs
        .par_iter()
        .map(|&(i, j)| Ok(((i, j), distance(&dists[i].1, &dists[j].1, metric)?)))
        .collect::<Result<_>>()?;
    let mut values = vec![vec![0.0; n]; n];
    for ((i, j), d) in computed {
        values[i][j] = d;
        values[j][i] = d;
    }
    Ok(DistanceMatrix {
        labels: dists.iter().map(|(l, _)| l.clone()).collect(),
        values,
        metric,
        r,
    })
}

/// Distance matrix between whole-sentence samples drawn from each language
/// of a group, labels `language_id#k`.
pub fn sample_distance_matrix(
    group_corpora: &[Corpus],
    target_tokens: usize,
    max_samples: usize,
    r: usize,
    metric: Metric,
    seed_value: u64,
) -> Result<DistanceMatrix> {
    assert!(group_corpora.len() >= 2, "need at least two languages");
    let mut labeled = Vec::new();
    for (li, corpus) in group_corpora.iter().enumerate() {
        let sample_seed = seed::derive_rng(seed_value, "group_samples", li as u64);
        // Use the first word of the derived stream as the per-language seed.
        let per_lang_seed = {
            use rand::RngCore;
            let mut rng = sample_seed;
            rng.next_u64()
        };
        for sample in sample_corpus(corpus, target_tokens, max_samples, per_lang_seed)? {
            let dist = estimate_distribution(&count_blocks(&sample, r))?;
            labeled.push((sample.language_id.clone(), dist));
        }
    }
    build_distance_matrix(&labeled, metric)
}

/// Write the matrix as CSV with a label header row and label-leading rows.
/// Distances are printed with the shortest round-trip representation, so
/// reading the file back is bit-exact.
pub fn write_matrix_csv(matrix: &DistanceMatrix, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "label,{}", matrix.labels.join(","))?;
    for (label, row) in matrix.labels.iter().zip(&matrix.values) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{label},{}", cells.join(","))?;
    }
    Ok(())
}

pub fn read_matrix_csv(path: &Path, metric: Metric, r: usize) -> Result<DistanceMatrix> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("empty matrix file".into()))??;
    let labels: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
    let mut values = Vec::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .skip(1)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad distance value `{v}`")))
            })
            .collect::<Result<_>>()?;
        values.push(row);
    }
    if values.len() != labels.len() {
        return Err(Error::Config("matrix is not square".into()));
    }
    Ok(DistanceMatrix {
        labels,
        values,
        metric,
        r,
    })
}

pub fn write_matrix_json(matrix: &DistanceMatrix, path: &Path) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(file, matrix)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::TagSequence;
    use rand::{Rng, SeedableRng};
    use std::collections::HashMap;

    fn dist(r: usize, pairs: &[(u64, f64)]) -> BlockDistribution {
        BlockDistribution {
            r,
            probs: pairs.iter().copied().collect(),
        }
    }

    pub(crate) fn random_sparse(rng: &mut impl Rng, r: usize, support: usize) -> BlockDistribution {
        let space = 15u64.pow(r as u32);
        let mut probs: HashMap<u64, f64> = HashMap::new();
        while probs.len() < support {
            probs.insert(rng.gen_range(0..space), 0.0);
        }
        let mut total = 0.0;
        for v in probs.values_mut() {
            *v = rng.gen::<f64>() + 1e-3;
            total += *v;
        }
        for v in probs.values_mut() {
            *v /= total;
        }
        BlockDistribution { r, probs }
    }

    #[test]
    fn identical_distributions_have_zero_distance() {
        let p = dist(3, &[(0, 0.5), (100, 0.5)]);
        assert_eq!(js_distance(&p, &p).unwrap(), 0.0);
        assert_eq!(hellinger_distance(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_supports_are_maximally_distant() {
        let p = dist(3, &[(0, 0.5), (1, 0.5)]);
        let q = dist(3, &[(2, 0.25), (3, 0.75)]);
        assert!((js_distance(&p, &q).unwrap() - 1.0).abs() < 1e-12);
        assert!((hellinger_distance(&p, &q).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hellinger_direct_value() {
        let p = dist(1, &[(0, 0.5), (1, 0.5)]);
        let q = dist(1, &[(0, 1.0)]);
        let expected = (0.5 * ((0.5f64.sqrt() - 1.0).powi(2) + 0.5)).sqrt();
        assert!((hellinger_distance(&p, &q).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.5412).abs() < 1e-4);
    }

    #[test]
    fn mismatched_block_sizes_error() {
        let p = dist(3, &[(0, 1.0)]);
        let q = dist(2, &[(0, 1.0)]);
        assert!(matches!(
            js_distance(&p, &q),
            Err(Error::MismatchedBlockSize(3, 2))
        ));
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(4);
        let p = random_sparse(&mut rng, 2, 30);
        let q = random_sparse(&mut rng, 2, 30);
        // Relabel blocks consistently by an affine map on indices.
        let relabel = |d: &BlockDistribution| BlockDistribution {
            r: d.r,
            probs: d.probs.iter().map(|(&k, &v)| (224 - k % 225, v)).collect(),
        };
        let d1 = js_distance(&p, &q).unwrap();
        let d2 = js_distance(&relabel(&p), &relabel(&q)).unwrap();
        assert!((d1 - d2).abs() < 1e-12);
        let h1 = hellinger_distance(&p, &q).unwrap();
        let h2 = hellinger_distance(&relabel(&p), &relabel(&q)).unwrap();
        assert!((h1 - h2).abs() < 1e-12);
    }

    #[test]
    fn matrix_builds_symmetric_zero_diagonal() {
        let zero = dist(3, &[(5, 1.0)]);
        let labeled = vec![
            ("a".to_string(), zero.clone()),
            ("b".to_string(), zero.clone()),
            ("c".to_string(), zero),
        ];
        let matrix = build_distance_matrix(&labeled, Metric::JensenShannon).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(matrix.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn matrix_rejects_duplicate_labels() {
        let d = dist(3, &[(0, 1.0)]);
        let labeled = vec![("a".to_string(), d.clone()), ("a".to_string(), d)];
        assert!(matches!(
            build_distance_matrix(&labeled, Metric::JensenShannon),
            Err(Error::DuplicateLabel(_))
        ));
    }

    #[test]
    fn matrix_matches_independent_formula_on_random_inputs() {
        // Independent oracle: direct dense evaluation over the union space.
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(8);
        let dists: Vec<(String, BlockDistribution)> = (0..4)
            .map(|i| (format!("d{i}"), random_sparse(&mut rng, 2, 40)))
            .collect();
        let matrix = build_distance_matrix(&dists, Metric::JensenShannon).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let mut acc = 0.0;
                for block in 0..225u64 {
                    let p = dists[i].1.prob(block);
                    let q = dists[j].1.prob(block);
                    if p > 0.0 {
                        acc += p * (2.0 * p / (p + q)).log2();
                    }
                    if q > 0.0 {
                        acc += q * (2.0 * q / (p + q)).log2();
                    }
                }
                let expected = (0.5 * acc).max(0.0).sqrt();
                assert!((matrix.get(i, j) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sample_matrix_separates_disjoint_languages() {
        let mk = |id: &str, tags: &[u8]| {
            Corpus::new(
                id,
                (0..200)
                    .map(|i| {
                        TagSequence::new((0..20).map(|j| tags[(i + j) % tags.len()]).collect())
                            .unwrap()
                    })
                    .collect(),
            )
        };
        let corpora = vec![mk("a", &[0, 1, 2, 3]), mk("b", &[10, 11, 12, 13])];
        let matrix =
            sample_distance_matrix(&corpora, 1000, 3, 3, Metric::JensenShannon, 5).unwrap();
        for (i, li) in matrix.labels.iter().enumerate() {
            for (j, lj) in matrix.labels.iter().enumerate() {
                if li.split('#').next() != lj.split('#').next() {
                    assert!((matrix.get(i, j) - 1.0).abs() < 1e-9);
                } else if i != j {
                    assert!(matrix.get(i, j) < 0.2);
                }
            }
        }
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(13);
        let dists: Vec<(String, BlockDistribution)> = (0..5)
            .map(|i| (format!("lang{i}"), random_sparse(&mut rng, 3, 25)))
            .collect();
        let matrix = build_distance_matrix(&dists, Metric::Hellinger).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("matrix.csv");
        write_matrix_csv(&matrix, &path).unwrap();
        let back = read_matrix_csv(&path, Metric::Hellinger, 3).unwrap();
        assert_eq!(back, matrix);
    }

    proptest::proptest! {
        #[test]
        fn distances_in_unit_interval(seed in 0u64..500) {
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let p = random_sparse(&mut rng, 2, 10);
            let q = random_sparse(&mut rng, 2, 10);
            let d = js_distance(&p, &q).unwrap();
            let h = hellinger_distance(&p, &q).unwrap();
            proptest::prop_assert!((0.0..=1.0).contains(&d));
            proptest::prop_assert!((0.0..=1.0).contains(&h));
            proptest::prop_assert!((d - js_distance(&q, &p).unwrap()).abs() < 1e-12);
            proptest::prop_assert!((h - hellinger_distance(&q, &p).unwrap()).abs() < 1e-12);
        }
    }
}
