//! Planted-block synthetic datasets with known ground-truth co-clusters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::InteractionDataset;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub blocks: usize,
    pub users_per_block: usize,
    pub items_per_block: usize,
    /// Probability of each in-block (user, item) pair being an edge.
    pub within_density: f64,
    /// Fraction of edges rewired to a uniformly random out-of-block item.
    pub noise_fraction: f64,
    /// Per-user fraction of interactions held out as the test split.
    pub test_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub dataset: InteractionDataset,
    /// Planted block per user index.
    pub user_labels: Vec<usize>,
    /// Planted block per item index.
    pub item_labels: Vec<usize>,
}

/// Generate a planted-block bipartite dataset. Every user keeps at least one
/// train interaction; the planted labels are the recovery oracle for tests.
pub fn generate_planted(cfg: &SynthConfig) -> Result<SynthDataset> {
    if cfg.blocks < 1 || cfg.users_per_block < 1 || cfg.items_per_block < 1 {
        return Err(Error::Argument("block counts and sizes must be positive".into()));
    }
    if !(0.0..=1.0).contains(&cfg.within_density)
        || !(0.0..=1.0).contains(&cfg.noise_fraction)
        || !(0.0..=0.9).contains(&cfg.test_fraction)
    {
        return Err(Error::Argument(
            "density, noise, and test fractions must be valid probabilities".into(),
        ));
    }
    let num_users = cfg.blocks * cfg.users_per_block;
    let num_items = cfg.blocks * cfg.items_per_block;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let user_labels: Vec<usize> = (0..num_users).map(|u| u / cfg.users_per_block).collect();
    let item_labels: Vec<usize> = (0..num_items).map(|i| i / cfg.items_per_block).collect();

    let mut train_edges = Vec::new();
    let mut test_edges = Vec::new();
    for u in 0..num_users {
        let block = user_labels[u];
        let mut items: Vec<usize> = Vec::new();
        for local in 0..cfg.items_per_block {
            if rng.gen_bool(cfg.within_density) {
                items.push(block * cfg.items_per_block + local);
            }
        }
        if items.is_empty() {
            // keep the user trainable
            items.push(block * cfg.items_per_block + rng.gen_range(0..cfg.items_per_block));
        }
        // rewire a fraction of edges across blocks
        if cfg.blocks > 1 {
            for item in items.iter_mut() {
                if rng.gen_bool(cfg.noise_fraction) {
                    loop {
                        let candidate = rng.gen_range(0..num_items);
                        if item_labels[candidate] != block {
                            *item = candidate;
                            break;
                        }
                    }
                }
            }
        }
        items.sort_unstable();
        items.dedup();

        // per-user holdout split; a single-item user stays train-only
        let n_test = ((items.len() as f64) * cfg.test_fraction).floor() as usize;
        let n_test = n_test.min(items.len().saturating_sub(1));
        // deterministic shuffle of the item order before splitting
        for i in (1..items.len()).rev() {
            let j = rng.gen_range(0..=i);
            items.swap(i, j);
        }
        for (idx, &item) in items.iter().enumerate() {
            if idx < n_test {
                test_edges.push((u, item));
            } else {
                train_edges.push((u, item));
            }
        }
    }

    let dataset = InteractionDataset::from_edges(num_users, num_items, train_edges, test_edges)?;
    Ok(SynthDataset {
        dataset,
        user_labels,
        item_labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clusterqual::adjusted_rand_index;
    use crate::spectral::{block_density_stat, spectral_cocluster};

    #[test]
    fn every_user_has_train_history() {
        let synth = generate_planted(&SynthConfig {
            blocks: 3,
            users_per_block: 30,
            items_per_block: 25,
            within_density: 0.2,
            noise_fraction: 0.1,
            test_fraction: 0.2,
            seed: 0,
        })
        .unwrap();
        let ds = &synth.dataset;
        assert_eq!(ds.num_users(), 90);
        assert_eq!(ds.num_items(), 75);
        for u in 0..ds.num_users() {
            assert!(!ds.train_items(u).is_empty());
        }
        assert!(!ds.test_edges().is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig {
            blocks: 2,
            users_per_block: 10,
            items_per_block: 10,
            within_density: 0.3,
            noise_fraction: 0.05,
            test_fraction: 0.2,
            seed: 42,
        };
        let a = generate_planted(&cfg).unwrap();
        let b = generate_planted(&cfg).unwrap();
        assert_eq!(a.dataset.train_edges(), b.dataset.train_edges());
        assert_eq!(a.dataset.test_edges(), b.dataset.test_edges());
    }

    #[test]
    fn planted_noise_controls_block_density() {
        // ~10% cross-block noise => block density stat near 0.9 under the
        // planted labels
        let synth = generate_planted(&SynthConfig {
            blocks: 3,
            users_per_block: 60,
            items_per_block: 60,
            within_density: 0.3,
            noise_fraction: 0.10,
            test_fraction: 0.0,
            seed: 7,
        })
        .unwrap();
        let a = synth.dataset.incidence_matrix();
        let cc = crate::spectral::CoClustering {
            k: 3,
            seed: 0,
            user_assignment: synth.user_labels.clone(),
            item_assignment: synth.item_labels.clone(),
            subgraphs: None,
        };
        let stat = block_density_stat(&a, &cc);
        assert!((stat - 0.9).abs() < 0.03, "block density stat {stat}");
    }

    #[test]
    fn spectral_recovers_planted_partition() {
        let synth = generate_planted(&SynthConfig {
            blocks: 3,
            users_per_block: 50,
            items_per_block: 50,
            within_density: 0.25,
            noise_fraction: 0.05,
            test_fraction: 0.0,
            seed: 3,
        })
        .unwrap();
        let a = synth.dataset.incidence_matrix();
        let cc = spectral_cocluster(&a, 3, 0).unwrap();
        let truth: Vec<usize> = synth
            .user_labels
            .iter()
            .chain(synth.item_labels.iter())
            .copied()
            .collect();
        let found: Vec<usize> = cc
            .user_assignment
            .iter()
            .chain(cc.item_assignment.iter())
            .copied()
            .collect();
        let ari = adjusted_rand_index(&truth, &found);
        assert!(ari >= 0.99, "ARI {ari}");
    }
}
