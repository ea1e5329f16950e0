//! Clustering quality via the variance ratio, and plateau-based selection of
//! the cluster count.

use std::fmt::Write as _;

use crate::corpus::InteractionDataset;
use crate::spectral::{spectral_cocluster, CoClustering};
use crate::{Error, Result, Scalar};

/// Mean/std variance ratio per k over a fixed seed list.
#[derive(Debug, Clone)]
pub struct VarianceRatioCurve<S> {
    pub ks: Vec<usize>,
    pub mean_vr: Vec<S>,
    pub std_vr: Vec<S>,
    /// Per-seed VR values, one inner vec per k (same order as `ks`).
    pub per_seed: Vec<Vec<S>>,
    pub seeds: Vec<u64>,
}

pub fn centroid<S: Scalar>(points: &[Vec<S>]) -> Result<Vec<S>> {
    if points.is_empty() {
        return Err(Error::Argument("centroid of an empty set".into()));
    }
    let dim = points[0].len();
    let mut c = vec![S::zero(); dim];
    for p in points {
        crate::linalg::axpy(S::one(), p, &mut c);
    }
    let inv = S::one() / S::from_usize(points.len());
    c.iter_mut().for_each(|x| *x *= inv);
    Ok(c)
}

/// Mean squared distance to the centroid.
pub fn variance<S: Scalar>(points: &[Vec<S>]) -> Result<S> {
    let c = centroid(points)?;
    let total: S = points
        .iter()
        .map(|p| crate::linalg::squared_distance(p, &c))
        .sum();
    Ok(total / S::from_usize(points.len()))
}

/// Within- and between-cluster variance (W_C, B_C) of a labeled point set,
/// with cluster weights p_i = |X_i| / |X|.
pub fn within_between<S: Scalar>(points: &[Vec<S>], labels: &[usize]) -> Result<(S, S)> {
    if points.is_empty() || points.len() != labels.len() {
        return Err(Error::Argument(
            "points and labels must be non-empty and equal-length".into(),
        ));
    }
    let k = labels.iter().copied().max().unwrap() + 1;
    let n = points.len();
    let global = centroid(points)?;
    let mut w = S::zero();
    let mut b = S::zero();
    for cluster in 0..k {
        let members: Vec<Vec<S>> = points
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == cluster)
            .map(|(p, _)| p.clone())
            .collect();
        if members.is_empty() {
            continue;
        }
        let p_i = S::from_usize(members.len()) / S::from_usize(n);
        let c_i = centroid(&members)?;
        w += p_i * variance(&members)?;
        b += p_i * crate::linalg::squared_distance(&c_i, &global);
    }
    Ok((w, b))
}

/// Variance ratio B_C / W_C. A single cluster yields 0; a clustering of point
/// masses (W_C = 0) yields the +infinity sentinel with a warning.
pub fn variance_ratio<S: Scalar>(points: &[Vec<S>], labels: &[usize]) -> Result<S> {
    let (w, b) = within_between(points, labels)?;
    ratio_with_sentinel(b, w)
}

fn ratio_with_sentinel<S: Scalar>(b: S, w: S) -> Result<S> {
    if w == S::zero() {
        if b == S::zero() {
            return Ok(S::zero()); // single cluster (or identical points)
        }
        log::warn!("within-cluster variance is zero; variance ratio reported as +inf");
        return Ok(S::infinity());
    }
    Ok(b / w)
}

/// Which side of the bipartite graph supplies the feature rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeSide {
    Users,
    Items,
}

/// Variance ratio of user (or item) nodes whose feature vectors are their
/// binary incidence rows. Rows stay sparse: per-cluster second moments use the
/// identity sigma^2 = mean ||x||^2 - ||centroid||^2.
pub fn variance_ratio_incidence<S: Scalar>(
    ds: &InteractionDataset,
    cc: &CoClustering,
    side: NodeSide,
) -> Result<S> {
    let (n, dim, labels): (usize, usize, &[usize]) = match side {
        NodeSide::Users => (ds.num_users(), ds.num_items(), &cc.user_assignment),
        NodeSide::Items => (ds.num_items(), ds.num_users(), &cc.item_assignment),
    };
    if n == 0 {
        return Err(Error::Argument("empty node set".into()));
    }
    // Item rows need the transpose; build it once when asked for items.
    let owned_item_rows: Vec<Vec<usize>>;
    let rows: Vec<&[usize]> = match side {
        NodeSide::Users => (0..n).map(|u| ds.train_items(u)).collect(),
        NodeSide::Items => {
            let mut r: Vec<Vec<usize>> = vec![Vec::new(); n];
            for &(u, i) in ds.train_edges() {
                r[i].push(u);
            }
            owned_item_rows = r;
            owned_item_rows.iter().map(|v| v.as_slice()).collect()
        }
    };

    let k = cc.k;
    let mut counts = vec![0usize; k];
    let mut sq_sums = vec![S::zero(); k]; // sum of ||x||^2 per cluster
    let mut centroid_acc = vec![vec![S::zero(); dim]; k];
    for node in 0..n {
        let c = labels[node];
        let items = rows[node];
        counts[c] += 1;
        sq_sums[c] += S::from_usize(items.len());
        for &j in items {
            centroid_acc[c][j] += S::one();
        }
    }
    let n_s = S::from_usize(n);
    let mut global = vec![S::zero(); dim];
    for acc in &centroid_acc {
        crate::linalg::axpy(S::one(), acc, &mut global);
    }
    global.iter_mut().for_each(|x| *x /= n_s);

    let mut w = S::zero();
    let mut b = S::zero();
    for c in 0..k {
        if counts[c] == 0 {
            continue;
        }
        let n_c = S::from_usize(counts[c]);
        let p = n_c / n_s;
        let mut cent_norm_sq = S::zero();
        let mut dist_sq = S::zero();
        for (j, &acc) in centroid_acc[c].iter().enumerate() {
            let cj = acc / n_c;
            cent_norm_sq += cj * cj;
            let d = cj - global[j];
            dist_sq += d * d;
        }
        let var = (sq_sums[c] / n_c - cent_norm_sq).max(S::zero());
        w += p * var;
        b += p * dist_sq;
    }
    ratio_with_sentinel(b, w)
}

/// Sweep k over an inclusive range, co-clustering once per (k, seed) and
/// averaging the user-side variance ratio over the seed list.
pub fn vr_curve<S: Scalar>(
    ds: &InteractionDataset,
    k_min: usize,
    k_max: usize,
    seeds: &[u64],
) -> Result<VarianceRatioCurve<S>> {
    let cap = ds.num_users().min(ds.num_items());
    if k_min < 2 || k_max < k_min || k_max > cap {
        return Err(Error::Argument(format!(
            "k range [{k_min},{k_max}] must lie within [2,{cap}]"
        )));
    }
    if seeds.is_empty() {
        return Err(Error::Argument("seed list is empty".into()));
    }
    let a = ds.incidence_matrix();
    let mut ks = Vec::new();
    let mut mean_vr = Vec::new();
    let mut std_vr = Vec::new();
    let mut per_seed_all = Vec::new();
    for k in k_min..=k_max {
        let mut values = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let cc = spectral_cocluster(&a, k, seed)?;
            values.push(variance_ratio_incidence::<S>(ds, &cc, NodeSide::Users)?);
        }
        let n = S::from_usize(values.len());
        let mean: S = values.iter().copied().sum::<S>() / n;
        let var: S = values
            .iter()
            .map(|&v| (v - mean) * (v - mean))
            .sum::<S>()
            / n;
        ks.push(k);
        mean_vr.push(mean);
        std_vr.push(var.sqrt());
        per_seed_all.push(values);
    }
    Ok(VarianceRatioCurve {
        ks,
        mean_vr,
        std_vr,
        per_seed: per_seed_all,
        seeds: seeds.to_vec(),
    })
}

/// Plateau rule: the smallest k whose relative VR gain to k+1 falls below
/// `epsilon`. Returns `(k, plateau_found)`; without a plateau the largest k
/// in range is returned with a warning.
pub fn select_k<S: Scalar>(curve: &VarianceRatioCurve<S>, epsilon: f64) -> Result<(usize, bool)> {
    if curve.ks.len() < 3 {
        return Err(Error::Argument(
            "select_k needs a curve over at least 3 consecutive k values".into(),
        ));
    }
    let eps = S::from_f64(epsilon);
    for i in 0..curve.ks.len() - 1 {
        let cur = curve.mean_vr[i];
        let next = curve.mean_vr[i + 1];
        let gain = if cur > S::zero() {
            (next - cur) / cur
        } else if next > S::zero() {
            S::infinity()
        } else {
            S::zero()
        };
        if gain < eps {
            return Ok((curve.ks[i], true));
        }
    }
    let last = *curve.ks.last().unwrap();
    log::warn!("no variance-ratio plateau found; falling back to largest k = {last}");
    Ok((last, false))
}

/// CSV export: `k,mean_vr,std_vr`.
pub fn curve_to_csv<S: Scalar>(curve: &VarianceRatioCurve<S>) -> String {
    let mut out = String::from("k,mean_vr,std_vr\n");
    for i in 0..curve.ks.len() {
        writeln!(
            out,
            "{},{},{}",
            curve.ks[i], curve.mean_vr[i], curve.std_vr[i]
        )
        .unwrap();
    }
    out
}

/// Adjusted Rand index between two labelings of the same node set.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n == 0 {
        return 1.0;
    }
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0usize; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let choose2 = |m: usize| (m * m.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table.iter().flatten().map(|&m| choose2(m)).sum();
    let sum_a: f64 = table.iter().map(|row| choose2(row.iter().sum())).sum();
    let sum_b: f64 = (0..kb)
        .map(|j| choose2(table.iter().map(|row| row[j]).sum()))
        .sum();
    let total = choose2(n);
    let expected = sum_a * sum_b / total;
    let max_index = (sum_a + sum_b) / 2.0;
    if (max_index - expected).abs() < 1e-300 {
        return 1.0;
    }
    (sum_ij - expected) / (max_index - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn variance_of_two_points() {
        let v = variance(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert_relative_eq!(v, 1.0);
    }

    #[test]
    fn variance_degenerate_cases() {
        assert_eq!(variance(&[vec![3.0, -1.0]]).unwrap(), 0.0);
        assert_eq!(variance(&vec![vec![2.0f64]; 5]).unwrap(), 0.0);
        assert!(variance::<f64>(&[]).is_err());
    }

    #[test]
    fn hand_computed_variance_ratio() {
        // points split by x coordinate: W = 0.25, B = 25.0, VR = 100.0
        let points = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![10.0, 0.0],
            vec![10.0, 1.0],
        ];
        let labels = [0, 0, 1, 1];
        let (w, b) = within_between(&points, &labels).unwrap();
        assert_relative_eq!(w, 0.25);
        assert_relative_eq!(b, 25.0);
        assert_relative_eq!(variance_ratio(&points, &labels).unwrap(), 100.0);
    }

    #[test]
    fn single_cluster_gives_zero() {
        let points = vec![vec![1.0], vec![2.0], vec![5.0]];
        assert_eq!(variance_ratio(&points, &[0, 0, 0]).unwrap(), 0.0);
    }

    #[test]
    fn point_mass_clusters_give_infinity_sentinel() {
        let points: Vec<Vec<f64>> = vec![vec![0.0], vec![0.0], vec![1.0], vec![1.0]];
        let vr = variance_ratio(&points, &[0, 0, 1, 1]).unwrap();
        assert!(vr.is_infinite() && vr > 0.0);
    }

    #[test]
    fn random_labels_on_isotropic_gaussian_give_near_zero_vr() {
        // Monte-Carlo oracle: over 100 label shuffles the VR of random 2-way
        // labels on isotropic data stays below 0.05.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let points: Vec<Vec<f64>> = (0..1000)
            .map(|_| {
                (0..3)
                    .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect()
            })
            .collect();
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let labels: Vec<usize> = (0..1000).map(|_| rng.gen_range(0..2)).collect();
            worst = worst.max(variance_ratio(&points, &labels).unwrap());
        }
        assert!(worst < 0.05, "worst VR over shuffles was {worst}");
    }

    #[test]
    fn sparse_incidence_vr_matches_dense_path() {
        let ds = InteractionDataset::from_edges(
            4,
            5,
            vec![(0, 0), (0, 1), (1, 0), (1, 2), (2, 3), (2, 4), (3, 3)],
            vec![],
        )
        .unwrap();
        let cc = CoClustering {
            k: 2,
            seed: 0,
            user_assignment: vec![0, 0, 1, 1],
            item_assignment: vec![0, 0, 0, 1, 1],
            subgraphs: None,
        };
        let dense: Vec<Vec<f64>> = (0..4)
            .map(|u| {
                (0..5)
                    .map(|i| if ds.train_items(u).contains(&i) { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let expected = variance_ratio(&dense, &cc.user_assignment).unwrap();
        let sparse: f64 = variance_ratio_incidence(&ds, &cc, NodeSide::Users).unwrap();
        assert_relative_eq!(sparse, expected, max_relative = 1e-12);
        // item-side diagnostic runs and is finite
        let item_vr: f64 = variance_ratio_incidence(&ds, &cc, NodeSide::Items).unwrap();
        assert!(item_vr.is_finite());
    }

    #[test]
    fn select_k_on_spec_curve() {
        let curve = VarianceRatioCurve {
            ks: vec![2, 3, 4, 5],
            mean_vr: vec![1.0, 2.0, 2.02, 2.03],
            std_vr: vec![0.0; 4],
            per_seed: vec![vec![]; 4],
            seeds: vec![0],
        };
        let (k, plateau) = select_k(&curve, 0.02).unwrap();
        assert_eq!(k, 3);
        assert!(plateau);
    }

    #[test]
    fn select_k_without_plateau_returns_largest_with_flag() {
        let curve = VarianceRatioCurve {
            ks: vec![2, 3, 4],
            mean_vr: vec![1.0, 2.0, 3.0],
            std_vr: vec![0.0; 3],
            per_seed: vec![vec![]; 3],
            seeds: vec![0],
        };
        let (k, plateau) = select_k(&curve, 0.0).unwrap();
        assert_eq!(k, 4);
        assert!(!plateau);
    }

    #[test]
    fn planted_blocks_rise_then_flatten() {
        let synth = crate::synth::generate_planted(&crate::synth::SynthConfig {
            blocks: 3,
            users_per_block: 120,
            items_per_block: 150,
            within_density: 0.6,
            noise_fraction: 0.02,
            test_fraction: 0.0,
            seed: 1,
        })
        .unwrap();
        let curve: VarianceRatioCurve<f64> =
            vr_curve(&synth.dataset, 2, 6, &[0, 1, 2]).unwrap();
        // sharp rise up to k = 3, then per-step gains an order smaller
        let gain_to_kstar = curve.mean_vr[1] / curve.mean_vr[0] - 1.0;
        assert!(gain_to_kstar > 0.5, "weak rise: {:?}", curve.mean_vr);
        for i in 2..curve.ks.len() {
            let gain = curve.mean_vr[i] / curve.mean_vr[i - 1] - 1.0;
            assert!(
                gain < 0.1,
                "curve not flat after k*: {:?}",
                curve.mean_vr
            );
        }
        let (k, plateau) = select_k(&curve, 0.02).unwrap();
        assert_eq!(k, 3);
        assert!(plateau);
    }

    #[test]
    fn single_seed_close_to_multi_seed_mean_on_planted_data() {
        let synth = crate::synth::generate_planted(&crate::synth::SynthConfig {
            blocks: 3,
            users_per_block: 40,
            items_per_block: 40,
            within_density: 0.3,
            noise_fraction: 0.02,
            test_fraction: 0.0,
            seed: 2,
        })
        .unwrap();
        let multi: VarianceRatioCurve<f64> =
            vr_curve(&synth.dataset, 3, 3, &(0..10).collect::<Vec<u64>>()).unwrap();
        let single: VarianceRatioCurve<f64> = vr_curve(&synth.dataset, 3, 3, &[0]).unwrap();
        let rel = (single.mean_vr[0] - multi.mean_vr[0]).abs() / multi.mean_vr[0];
        assert!(rel < 0.05, "relative deviation {rel}");
    }

    #[test]
    fn ari_basics() {
        assert_relative_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        let ari = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]);
        assert!(ari < 0.1);
    }

    proptest! {
        #[test]
        fn total_variance_identity(
            raw in proptest::collection::vec(
                proptest::collection::vec(-50.0f64..50.0, 3),
                4..40,
            ),
            labels_seed in 0u64..1000,
        ) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(labels_seed);
            let labels: Vec<usize> = raw.iter().map(|_| rng.gen_range(0..3)).collect();
            let (w, b) = within_between(&raw, &labels).unwrap();
            let total = variance(&raw).unwrap();
            prop_assert!((w + b - total).abs() <= 1e-9 * total.abs().max(1.0));
        }

        #[test]
        fn vr_invariant_under_translation_scaling_and_relabeling(
            raw in proptest::collection::vec(
                proptest::collection::vec(-10.0f64..10.0, 2),
                6..30,
            ),
            shift in -100.0f64..100.0,
            scale in 0.1f64..10.0,
            labels_seed in 0u64..1000,
        ) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(labels_seed);
            let labels: Vec<usize> = raw.iter().map(|_| rng.gen_range(0..2)).collect();
            let vr0 = variance_ratio(&raw, &labels).unwrap();
            prop_assume!(vr0.is_finite());
            let transformed: Vec<Vec<f64>> = raw
                .iter()
                .map(|p| p.iter().map(|&x| scale * x + shift).collect())
                .collect();
            let vr1 = variance_ratio(&transformed, &labels).unwrap();
            prop_assert!((vr0 - vr1).abs() <= 1e-6 * vr0.abs().max(1.0));
            // permute cluster labels
            let swapped: Vec<usize> = labels.iter().map(|&l| 1 - l).collect();
            let vr2 = variance_ratio(&raw, &swapped).unwrap();
            prop_assert!((vr0 - vr2).abs() <= 1e-9 * vr0.abs().max(1.0));
        }
    }
}
