//! Finite summaries of a meta-model posterior.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{MetaError, MetaParams, MetaPosterior};
use crate::rng::task_rng;

/// Number of k-means++ restarts; the lowest-inertia run wins.
pub const KMEANS_RESTARTS: usize = 50;

const MAX_LLOYD_ITERATIONS: usize = 300;

/// Weighted parameter vectors standing in for the full posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub centers: Vec<MetaParams>,
    pub weights: Vec<f64>,
}

impl Embedding {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

/// `C = 1`: the coordinate-wise posterior mean (mean `α`; mean `μ` and
/// mean Cholesky factor, so `Σ = L̄ L̄ᵀ`).
pub fn mean_embedding(post: &MetaPosterior) -> Result<Embedding, MetaError> {
    let center = MetaParams::natural_mean(post.family, post.draws.iter().map(|d| (d, 1.0)))?;
    Ok(Embedding {
        centers: vec![center],
        weights: vec![1.0],
    })
}

/// k-means clustering of the draws in unconstrained coordinates.
///
/// Each center is the natural-parameter mean of its members, so `C = 1`
/// coincides with [`mean_embedding`]. `C = D` returns every draw with
/// weight `1/D`.
pub fn cluster_embedding(post: &MetaPosterior, clusters: usize, seed: u64) -> Result<Embedding, MetaError> {
    let d = post.draws.len();
    if clusters == 0 || clusters > d {
        return Err(MetaError::TooManyClusters { clusters, draws: d });
    }
    if clusters == d {
        return Ok(Embedding {
            centers: post.draws.clone(),
            weights: vec![1.0 / d as f64; d],
        });
    }
    let points: Vec<Vec<f64>> = post.draws.iter().map(MetaParams::cluster_coordinates).collect();
    let assignment = kmeans(&points, clusters, seed);
    let mut centers = Vec::with_capacity(clusters);
    let mut weights = Vec::with_capacity(clusters);
    for c in 0..clusters {
        let members: Vec<&MetaParams> = post
            .draws
            .iter()
            .zip(&assignment)
            .filter(|(_, &a)| a == c)
            .map(|(m, _)| m)
            .collect();
        if members.is_empty() {
            continue;
        }
        weights.push(members.len() as f64 / d as f64);
        centers.push(MetaParams::natural_mean(post.family, members.into_iter().map(|m| (m, 1.0)))?);
    }
    Ok(Embedding { centers, weights })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Returns cluster labels of the best of [`KMEANS_RESTARTS`] runs.
pub(crate) fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let runs: Vec<(f64, Vec<usize>)> = (0..KMEANS_RESTARTS)
        .into_par_iter()
        .map(|r| {
            let mut rng = task_rng(seed, "kmeans", r as u64);
            lloyd(points, k, &mut rng)
        })
        .collect();
    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.0 < runs[best].0 {
            best = i;
        }
    }
    runs.into_iter().nth(best).expect("at least one restart").1
}

fn lloyd<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> (f64, Vec<usize>) {
    let dim = points[0].len();
    let mut centers = plus_plus(points, k, rng);
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        for (p, l) in points.iter().zip(labels.iter_mut()) {
            let nearest = nearest(p, &centers).0;
            if nearest != *l {
                *l = nearest;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // reseed an empty cluster at the point farthest from its center
                let far = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, squared_distance(p, &centers[labels[i]])))
                    .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a })
                    .0;
                centers[c] = points[far].clone();
                labels[far] = c;
            } else {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| squared_distance(p, &centers[l]))
        .sum();
    (inertia, labels)
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = squared_distance(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn plus_plus<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| squared_distance(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, d) in dist.iter().enumerate() {
                if u < *d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[next].clone());
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, &centers[centers.len() - 1]));
        }
    }
    centers
}
