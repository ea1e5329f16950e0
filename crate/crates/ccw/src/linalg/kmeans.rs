//! Lloyd k-means with greedy farthest-point seeding, restarts, and
//! deterministic tie breaking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::squared_distance;
use crate::{Error, Result, Scalar};

pub struct KmeansResult<S> {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<S>>,
    pub wcss: S,
}

const MAX_LLOYD_ITER: usize = 100;

/// Cluster `points` into `k` groups. Runs `restarts` independent seedings and
/// keeps the lowest within-cluster sum of squares; ties go to the earliest
/// restart. Every returned cluster is non-empty.
pub fn kmeans<S: Scalar>(
    points: &[Vec<S>],
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<KmeansResult<S>> {
    if k == 0 || k > points.len() {
        return Err(Error::Argument(format!(
            "k={k} with {} points",
            points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KmeansResult<S>> = None;
    for _restart in 0..restarts.max(1) {
        let first = rng.gen_range(0..points.len());
        let run = lloyd(points, k, first);
        let better = match &best {
            None => true,
            Some(b) => run.wcss < b.wcss,
        };
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn lloyd<S: Scalar>(points: &[Vec<S>], k: usize, first_center: usize) -> KmeansResult<S> {
    let mut centroids = farthest_point_seeds(points, k, first_center);
    let mut assignment = vec![usize::MAX; points.len()];
    for _iter in 0..MAX_LLOYD_ITER {
        let mut changed = false;
        for (p, a) in points.iter().zip(assignment.iter_mut()) {
            let next = nearest(p, &centroids);
            if next != *a {
                *a = next;
                changed = true;
            }
        }
        repair_empty_clusters(points, &mut assignment, &centroids, k);
        centroids = compute_centroids(points, &assignment, k);
        if !changed {
            break;
        }
    }
    let wcss = points
        .iter()
        .zip(&assignment)
        .map(|(p, &a)| squared_distance(p, &centroids[a]))
        .sum();
    KmeansResult {
        assignment,
        centroids,
        wcss,
    }
}

/// Greedy farthest-point seeding: after the first center, each next center is
/// the point with maximal distance to its nearest chosen center (ties broken
/// by lowest index).
fn farthest_point_seeds<S: Scalar>(points: &[Vec<S>], k: usize, first: usize) -> Vec<Vec<S>> {
    let mut centers = vec![points[first].clone()];
    let mut min_dist: Vec<S> = points
        .iter()
        .map(|p| squared_distance(p, &centers[0]))
        .collect();
    while centers.len() < k {
        let mut best_idx = 0;
        let mut best_dist = S::neg_infinity();
        for (i, &d) in min_dist.iter().enumerate() {
            if d > best_dist {
                best_dist = d;
                best_idx = i;
            }
        }
        centers.push(points[best_idx].clone());
        for (d, p) in min_dist.iter_mut().zip(points) {
            let nd = squared_distance(p, centers.last().unwrap());
            if nd < *d {
                *d = nd;
            }
        }
    }
    centers
}

fn nearest<S: Scalar>(p: &[S], centroids: &[Vec<S>]) -> usize {
    let mut best = 0;
    let mut best_d = S::infinity();
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(p, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

fn compute_centroids<S: Scalar>(points: &[Vec<S>], assignment: &[usize], k: usize) -> Vec<Vec<S>> {
    let dim = points.first().map_or(0, Vec::len);
    let mut sums = vec![vec![S::zero(); dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignment) {
        counts[a] += 1;
        super::axpy(S::one(), p, &mut sums[a]);
    }
    for (sum, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            let inv = S::one() / S::from_usize(n);
            sum.iter_mut().for_each(|x| *x *= inv);
        }
    }
    sums
}

/// Re-seed each empty cluster at the point farthest from its currently
/// assigned centroid, so the run always produces k non-empty clusters.
fn repair_empty_clusters<S: Scalar>(
    points: &[Vec<S>],
    assignment: &mut [usize],
    centroids: &[Vec<S>],
    k: usize,
) {
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignment.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&n| n == 0) else {
            return;
        };
        let mut worst_idx = 0;
        let mut worst_d = S::neg_infinity();
        for (i, (p, &a)) in points.iter().zip(assignment.iter()).enumerate() {
            if counts[a] <= 1 {
                continue; // keep donor clusters non-empty
            }
            let d = squared_distance(p, &centroids[a]);
            if d > worst_d {
                worst_d = d;
                worst_idx = i;
            }
        }
        assignment[worst_idx] = empty;
    }
}
