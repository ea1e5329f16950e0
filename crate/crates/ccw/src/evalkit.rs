//! Top-K ranking metrics and model evaluation.

use serde::Serialize;

use crate::corpus::InteractionDataset;
use crate::wrapper::{CcwModel, DEFAULT_CELL_BUDGET};
use crate::{Result, Scalar};

/// Fraction of a user's test items appearing in the top-K ranking.
pub fn recall_at_k(ranked: &[usize], test_items: &[usize], k: usize) -> f64 {
    if test_items.is_empty() {
        return 0.0;
    }
    let hits = ranked
        .iter()
        .take(k)
        .filter(|i| test_items.binary_search(i).is_ok())
        .count();
    hits as f64 / test_items.len() as f64
}

/// Binary-relevance NDCG: DCG sums 1/log2(p+2) over hit positions p
/// (0-based); the ideal DCG places min(K, |test|) hits at the top.
pub fn ndcg_at_k(ranked: &[usize], test_items: &[usize], k: usize) -> f64 {
    if test_items.is_empty() {
        return 0.0;
    }
    let mut dcg = 0.0;
    for (p, i) in ranked.iter().take(k).enumerate() {
        if test_items.binary_search(i).is_ok() {
            dcg += 1.0 / ((p + 2) as f64).log2();
        }
    }
    let ideal_hits = test_items.len().min(k);
    let idcg: f64 = (0..ideal_hits).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
    dcg / idcg
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport<S> {
    pub recall: S,
    pub ndcg: S,
    pub k: usize,
    pub users_evaluated: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

/// Rank all items per test user (train items masked out, score ties broken
/// by ascending item index) and average Recall@K and NDCG@K. Users without
/// test items are excluded.
pub fn evaluate<S: Scalar>(
    model: &CcwModel<S>,
    ds: &InteractionDataset,
    k: usize,
) -> Result<EvalReport<S>> {
    let test_users: Vec<usize> =
        (0..ds.num_users()).filter(|&u| !ds.test_items(u).is_empty()).collect();
    let batch_users = (DEFAULT_CELL_BUDGET / ds.num_items().max(1)).max(1);
    let mut recall_sum = 0.0;
    let mut ndcg_sum = 0.0;
    for chunk in test_users.chunks(batch_users) {
        let scores = model.rating_matrix(chunk, ds, DEFAULT_CELL_BUDGET)?;
        for (row, &u) in chunk.iter().enumerate() {
            let ranked = top_k_indices(scores.row(row), k);
            let test = ds.test_items(u);
            recall_sum += recall_at_k(&ranked, test, k);
            ndcg_sum += ndcg_at_k(&ranked, test, k);
        }
    }
    let n = test_users.len().max(1) as f64;
    Ok(EvalReport {
        recall: S::from_f64(recall_sum / n),
        ndcg: S::from_f64(ndcg_sum / n),
        k,
        users_evaluated: test_users.len(),
        metadata: None,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkRow {
    pub mode: String,
    pub seed: u64,
    pub recall: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkTable {
    pub variant: String,
    pub k: usize,
    pub top_k: usize,
    pub rows: Vec<BenchmarkRow>,
}

impl BenchmarkTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,seed,recall@K,ndcg@K\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.mode, r.seed, r.recall, r.ndcg));
        }
        for (mode, recall, ndcg) in self.mode_means() {
            out.push_str(&format!("{mode},mean,{recall},{ndcg}\n"));
        }
        out
    }

    /// (mode, mean recall, mean ndcg) in first-appearance order.
    pub fn mode_means(&self) -> Vec<(String, f64, f64)> {
        let mut order: Vec<String> = Vec::new();
        for r in &self.rows {
            if !order.contains(&r.mode) {
                order.push(r.mode.clone());
            }
        }
        order
            .into_iter()
            .map(|mode| {
                let rows: Vec<&BenchmarkRow> =
                    self.rows.iter().filter(|r| r.mode == mode).collect();
                let n = rows.len() as f64;
                let recall = rows.iter().map(|r| r.recall).sum::<f64>() / n;
                let ndcg = rows.iter().map(|r| r.ndcg).sum::<f64>() / n;
                (mode, recall, ndcg)
            })
            .collect()
    }

    /// Bar-chart groups: one group per metric, one bar per mode mean.
    pub fn chart_groups(&self) -> Vec<(String, Vec<(String, f64)>)> {
        let means = self.mode_means();
        vec![
            (
                format!("Recall@{}", self.top_k),
                means.iter().map(|(m, r, _)| (m.clone(), *r)).collect(),
            ),
            (
                format!("NDCG@{}", self.top_k),
                means.iter().map(|(m, _, n)| (m.clone(), *n)).collect(),
            ),
        ]
    }
}

/// Train and evaluate each mode under a shared clustering, once per seed.
/// Each seed fans out to per-model init seeds and a training stream, so the
/// whole table is deterministic.
pub fn benchmark<S: Scalar>(
    ds: &InteractionDataset,
    cc: &crate::spectral::CoClustering,
    variant: crate::embedcf::Variant,
    d: usize,
    modes: &[crate::wrapper::Mode],
    seeds: &[u64],
    cfg: &crate::train::TrainConfig<S>,
    top_k: usize,
) -> Result<BenchmarkTable> {
    let mut rows = Vec::new();
    for &seed in seeds {
        for &mode in modes {
            let (model, warnings) =
                crate::wrapper::assemble_ccw(ds, cc.clone(), variant, d, mode, seed)?;
            for w in warnings {
                log::warn!("{w}");
            }
            let mut cfg = cfg.clone();
            cfg.seed = crate::report::derive_seed(seed, "train");
            let out = crate::train::train_ccw(model, ds, &cfg)?;
            let report = evaluate(&out.model, ds, top_k)?;
            rows.push(BenchmarkRow {
                mode: mode.to_string(),
                seed,
                recall: report.recall.as_f64(),
                ndcg: report.ndcg.as_f64(),
            });
        }
    }
    Ok(BenchmarkTable {
        variant: variant.to_string(),
        k: cc.k,
        top_k,
        rows,
    })
}

/// Indices of the k largest scores, ties broken by lower index.
pub fn top_k_indices<S: Scalar>(scores: &[S], k: usize) -> Vec<usize> {
    let k = k.min(scores.len());
    // Partial selection: keep a sorted top-k buffer; fine for small k.
    let mut top: Vec<usize> = Vec::with_capacity(k + 1);
    let better = |a: usize, b: usize| {
        scores[a] > scores[b] || (scores[a] == scores[b] && a < b)
    };
    for i in 0..scores.len() {
        if top.len() == k && !better(i, *top.last().unwrap()) {
            continue;
        }
        let pos = top.partition_point(|&j| better(j, i));
        top.insert(pos, i);
        top.truncate(k);
    }
    top
}
