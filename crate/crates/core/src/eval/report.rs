//! Aggregated evaluation reports: per-seed Recall@K / NDCG@K with paired
//! t-tests against a named baseline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::QueryRecord;
use crate::error::{Error, Result};
use crate::eval::embedder::QueryEmbedder;
use crate::eval::index::{search_topk, GeoPartitionedIndex, SearchMode};
use crate::eval::metrics::{ndcg_at_k, recall_at_k};
use crate::eval::stats::paired_t_test;

pub const EVAL_KS: [usize; 3] = [5, 10, 20];

/// Mean metrics for one repetition (one seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    /// Keyed by K.
    pub recall: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
}

impl SeedMetrics {
    pub fn metric(&self, name: &str) -> Option<f64> {
        let (kind, k) = name.split_once('@')?;
        let k: usize = k.parse().ok()?;
        match kind {
            "R" => self.recall.get(&k).copied(),
            "N" => self.ndcg.get(&k).copied(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBlock {
    pub mean: f64,
    pub per_seed: Vec<f64>,
    /// Paired t statistic vs the baseline; the +infinity sentinel of the
    /// zero-variance branch is stored as f64::MAX to stay JSON-representable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_vs_baseline: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub significant: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<String>,
    /// Keyed by metric name: R@5, N@5, R@10, N@10, R@20, N@20.
    pub metrics: BTreeMap<String, MetricBlock>,
}

impl EvalReport {
    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.metrics.get(metric).map(|b| b.mean)
    }

    /// Metric names in table column order: R@5, N@5, R@10, N@10, R@20, N@20.
    pub fn metric_names() -> Vec<String> {
        let mut names = Vec::new();
        for k in EVAL_KS {
            names.push(format!("R@{k}"));
            names.push(format!("N@{k}"));
        }
        names
    }
}

/// Mean Recall@K and NDCG@K over the query set, searched within each query's
/// partition.
pub fn evaluate_queries(
    index: &GeoPartitionedIndex,
    embedder: &dyn QueryEmbedder,
    queries: &[QueryRecord],
    mode: SearchMode,
    n_probe: usize,
) -> Result<SeedMetrics> {
    if queries.is_empty() {
        return Err(Error::Eval("no queries to evaluate".into()));
    }
    let max_k = *EVAL_KS.iter().max().unwrap();
    let mut recall_sum: BTreeMap<usize, f64> = EVAL_KS.iter().map(|k| (*k, 0.0)).collect();
    let mut ndcg_sum: BTreeMap<usize, f64> = EVAL_KS.iter().map(|k| (*k, 0.0)).collect();
    for q in queries {
        let qv = embedder.embed_query(&q.text_tokens)?;
        let ranked = search_topk(index, &qv, q.geo_hash, max_k, mode, n_probe)?;
        let ids: Vec<u32> = ranked.iter().map(|(id, _)| *id).collect();
        for k in EVAL_KS {
            *recall_sum.get_mut(&k).unwrap() += recall_at_k(&ids, q.positive_item_id, k);
            *ndcg_sum.get_mut(&k).unwrap() += ndcg_at_k(&ids, q.positive_item_id, k);
        }
    }
    let n = queries.len() as f64;
    Ok(SeedMetrics {
        recall: recall_sum.into_iter().map(|(k, v)| (k, v / n)).collect(),
        ndcg: ndcg_sum.into_iter().map(|(k, v)| (k, v / n)).collect(),
    })
}

/// Aggregates per-seed metrics into a report, attaching paired t-tests when a
/// baseline report with the same seed count is supplied.
pub fn build_report(
    variant: &str,
    seeds: &[u64],
    per_seed: &[SeedMetrics],
    baseline: Option<&EvalReport>,
) -> Result<EvalReport> {
    if seeds.len() != per_seed.len() || per_seed.is_empty() {
        return Err(Error::Eval("per-seed metrics must align with seeds".into()));
    }
    let mut metrics = BTreeMap::new();
    for name in EvalReport::metric_names() {
        let values: Vec<f64> = per_seed
            .iter()
            .map(|m| {
                m.metric(&name)
                    .ok_or_else(|| Error::Eval(format!("metric {name} missing from seed metrics")))
            })
            .collect::<Result<_>>()?;
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let (t, significant) = match baseline.and_then(|b| b.metrics.get(&name)) {
            Some(base) if base.per_seed.len() == values.len() => {
                let test = paired_t_test(&values, &base.per_seed)?;
                let t = if test.t.is_infinite() { f64::MAX * test.t.signum() } else { test.t };
                (Some(t), Some(test.significant))
            }
            _ => (None, None),
        };
        metrics.insert(
            name,
            MetricBlock { mean, per_seed: values, t_vs_baseline: t, significant },
        );
    }
    Ok(EvalReport {
        variant: variant.to_string(),
        seeds: seeds.to_vec(),
        baseline: baseline.map(|b| b.variant.clone()),
        metrics,
    })
}

/// Runs one repetition per seed via `run` and aggregates.
pub fn evaluate<F>(
    variant: &str,
    seeds: &[u64],
    baseline: Option<&EvalReport>,
    mut run: F,
) -> Result<EvalReport>
where
    F: FnMut(u64) -> Result<SeedMetrics>,
{
    if seeds.is_empty() {
        return Err(Error::Eval("evaluate needs at least one seed".into()));
    }
    let per_seed: Vec<SeedMetrics> = seeds.iter().map(|s| run(*s)).collect::<Result<_>>()?;
    build_report(variant, seeds, &per_seed, baseline)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ItemRecord;
    use crate::eval::embedder::ItemEmbedder;
    use crate::eval::index::build_index;

    struct IdentityEmbedder;

    impl ItemEmbedder for IdentityEmbedder {
        fn embed_item(&self, item: &ItemRecord) -> Result<Vec<f64>> {
            Ok(item.image_features.clone())
        }
    }

    struct OneHotQuery(Vec<f64>);

    impl QueryEmbedder for OneHotQuery {
        fn embed_query(&self, _tokens: &[u32]) -> Result<Vec<f64>> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn perfect_ranking_gives_ones() {
        let items = vec![
            ItemRecord {
                item_id: 0,
                geo_hash: 0,
                text_tokens: vec![0],
                image_features: vec![1.0, 0.0],
                concept_id: 0,
                sids: None,
            },
            ItemRecord {
                item_id: 1,
                geo_hash: 0,
                text_tokens: vec![0],
                image_features: vec![0.0, 1.0],
                concept_id: 0,
                sids: None,
            },
        ];
        let index = build_index(&items, &IdentityEmbedder, None, "h", 0).unwrap();
        let queries = vec![QueryRecord {
            query_id: 0,
            text_tokens: vec![0],
            geo_hash: 0,
            positive_item_id: 0,
            hard_negative_item_ids: vec![],
            image_critical: false,
        }];
        let m = evaluate_queries(&index, &OneHotQuery(vec![1.0, 0.0]), &queries, SearchMode::Exact, 0)
            .unwrap();
        assert_eq!(m.recall[&5], 1.0);
        assert_eq!(m.ndcg[&5], 1.0);
    }

    #[test]
    fn report_aggregation_and_significance() {
        let mk = |r: f64| SeedMetrics {
            recall: EVAL_KS.iter().map(|k| (*k, r)).collect(),
            ndcg: EVAL_KS.iter().map(|k| (*k, r / 2.0)).collect(),
        };
        let seeds = [0u64, 1, 2, 3, 4];
        let base_metrics: Vec<SeedMetrics> =
            [0.5, 0.52, 0.48, 0.5, 0.51].iter().map(|r| mk(*r)).collect();
        let base = build_report("base", &seeds, &base_metrics, None).unwrap();
        assert!((base.mean("R@10").unwrap() - 0.502).abs() < 1e-12);
        assert!(base.metrics["R@10"].t_vs_baseline.is_none());

        let better: Vec<SeedMetrics> =
            [0.6, 0.63, 0.59, 0.61, 0.62].iter().map(|r| mk(*r)).collect();
        let report = build_report("better", &seeds, &better, Some(&base)).unwrap();
        let block = &report.metrics["R@10"];
        assert_eq!(report.baseline.as_deref(), Some("base"));
        assert!(block.significant.unwrap());
        assert!(block.t_vs_baseline.unwrap() > 2.776);
    }
}
