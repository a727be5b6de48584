//! Partitioning Around Medoids (BUILD + SWAP) and the mean-silhouette sweep
//! used to pick the number of clusters.

use serde::Serialize;

use crate::distance::DistanceMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct ClusterAssignment {
    pub k: usize,
    pub medoids: Vec<usize>,
    /// Cluster id per label index; cluster ids are medoid positions 0..k.
    pub assignment: Vec<usize>,
    pub total_cost: f64,
    pub silhouette: f64,
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k < 2 || k >= n {
        return Err(Error::KOutOfRange { k, n });
    }
    Ok(())
}

fn assign(matrix: &DistanceMatrix, medoids: &[usize]) -> (Vec<usize>, f64) {
    let n = matrix.len();
    let mut assignment = vec![0; n];
    let mut cost = 0.0;
    for i in 0..n {
        let mut best = (f64::INFINITY, 0);
        for (c, &m) in medoids.iter().enumerate() {
            let d = matrix.get(i, m);
            if d < best.0 {
                best = (d, c);
            }
        }
        assignment[i] = best.1;
        cost += best.0;
    }
    (assignment, cost)
}

/// PAM: greedy BUILD initialization, then best-improvement SWAP until no
/// single medoid/non-medoid exchange lowers the total distance-to-medoid.
/// A few seeded random restarts guard against SWAP's local optima; ties
/// broken by lowest candidate index.
pub fn pam(matrix: &DistanceMatrix, k: usize, seed_value: u64) -> Result<ClusterAssignment> {
    let n = matrix.len();
    check_k(k, n)?;

    // BUILD: first medoid minimizes total distance; each next minimizes the
    // resulting cost given those already chosen.
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    let mut nearest = vec![f64::INFINITY; n];
    while medoids.len() < k {
        let mut best: Option<(f64, usize)> = None;
        for cand in 0..n {
            if medoids.contains(&cand) {
                continue;
            }
            let cost: f64 = (0..n).map(|i| nearest[i].min(matrix.get(i, cand))).sum();
            if best.map_or(true, |(bc, _)| cost < bc) {
                best = Some((cost, cand));
            }
        }
        let (_, chosen) = best.unwrap();
        medoids.push(chosen);
        for i in 0..n {
            nearest[i] = nearest[i].min(matrix.get(i, chosen));
        }
    }

    let mut best_run: Option<(f64, Vec<usize>)> = None;
    const RESTARTS: u64 = 5;
    for restart in 0..=RESTARTS {
        let mut medoids = if restart == 0 {
            medoids.clone()
        } else {
            use rand::seq::SliceRandom;
            let mut rng =
                crate::seed::derive_rng(seed_value, "pam_restart", (k as u64) << 32 | restart);
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut rng);
            all.truncate(k);
            all
        };
        let cost = swap_to_local_optimum(matrix, &mut medoids, k);
        if best_run.as_ref().map_or(true, |(bc, _)| cost < bc - 1e-15) {
            best_run = Some((cost, medoids));
        }
    }
    let (_, mut medoids) = best_run.unwrap();
    medoids.sort_unstable();
    let (assignment, total_cost) = assign(matrix, &medoids);
    let silhouette = silhouette_score(matrix, &assignment, k);
    Ok(ClusterAssignment {
        k,
        medoids,
        assignment,
        total_cost,
        silhouette,
    })
}

/// SWAP phase: repeat the single best-improving exchange until none helps;
/// returns the final cost.
fn swap_to_local_optimum(matrix: &DistanceMatrix, medoids: &mut Vec<usize>, k: usize) -> f64 {
    let n = matrix.len();
    let (_, mut cost) = assign(matrix, medoids);
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for mi in 0..k {
            for cand in 0..n {
                if medoids.contains(&cand) {
                    continue;
                }
                let saved = medoids[mi];
                medoids[mi] = cand;
                let (_, c) = assign(matrix, medoids);
                medoids[mi] = saved;
                if c < cost - 1e-15 && best.map_or(true, |(bc, _, _)| c < bc) {
                    best = Some((c, mi, cand));
                }
            }
        }
        match best {
            Some((c, mi, cand)) => {
                medoids[mi] = cand;
                cost = c;
            }
            None => break,
        }
    }
    cost
}

/// Mean silhouette s(i) = (b - a) / max(a, b); points in singleton clusters
/// contribute 0.
pub fn silhouette_score(matrix: &DistanceMatrix, assignment: &[usize], k: usize) -> f64 {
    let n = assignment.len();
    let mut sizes = vec![0usize; k];
    for &c in assignment {
        sizes[c] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = assignment[i];
        if sizes[own] <= 1 {
            continue; // s(i) = 0
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[assignment[j]] += matrix.get(i, j);
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

#[derive(Debug, Clone, Serialize)]
pub struct SilhouetteSweep {
    pub best_k: usize,
    /// (k, mean silhouette) for each k in the sweep range.
    pub scores: Vec<(usize, f64)>,
}

/// Run PAM for each k in `[k_min, k_max]` and pick the k with the highest
/// mean silhouette (lowest k on ties).
pub fn silhouette_sweep(
    matrix: &DistanceMatrix,
    k_min: usize,
    k_max: usize,
    seed_value: u64,
) -> Result<SilhouetteSweep> {
    let n = matrix.len();
    if k_min < 2 || k_min > k_max || k_max >= n {
        return Err(Error::KOutOfRange { k: k_max, n });
    }
    use rayon::prelude::*;
    let scores: Vec<(usize, f64)> = (k_min..=k_max)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&k| Ok((k, pam(matrix, k, seed_value)?.silhouette)))
        .collect::<Result<_>>()?;
    let best_k = scores
        .iter()
        .fold((0usize, f64::NEG_INFINITY), |acc, &(k, s)| {
            if s > acc.1 {
                (k, s)
            } else {
                acc
            }
        })
        .0;
    Ok(SilhouetteSweep { best_k, scores })
}
