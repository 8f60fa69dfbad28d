//! Geo-partitioned top-K search: exact full scan per partition, plus an
//! IVF-style approximate mode that probes only the nearest coarse clusters.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::ItemRecord;
use crate::error::{Error, Result};
use crate::eval::embedder::ItemEmbedder;
use crate::rng::stream;
use crate::rqvae::kmeans_init;

pub const INDEX_VERSION: u32 = 1;
pub const DEFAULT_COARSE_CLUSTERS: usize = 16;
pub const DEFAULT_N_PROBE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Exact,
    Approx,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoarseClusters {
    pub centroids: Vec<Vec<f64>>,
    /// Per centroid: local vector offsets in the partition.
    pub posting_lists: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexPartition {
    pub geo_hash: u32,
    pub item_ids: Vec<u32>,
    /// Unit-normalized embeddings, one per item id.
    pub vectors: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coarse: Option<CoarseClusters>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeoPartitionedIndex {
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub dim: usize,
    pub partitions: BTreeMap<u32, IndexPartition>,
}

impl GeoPartitionedIndex {
    pub fn item_count(&self) -> usize {
        self.partitions.values().map(|p| p.item_ids.len()).sum()
    }

    pub fn partition_size(&self, geo_hash: u32) -> usize {
        self.partitions.get(&geo_hash).map_or(0, |p| p.item_ids.len())
    }
}

fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(Error::Eval("zero-norm embedding cannot be indexed".into()));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

/// Embeds and L2-normalizes every item, grouped by partition. With
/// `coarse_clusters = Some(c)`, per-partition k-means centroids are attached
/// for approximate probing.
pub fn build_index(
    items: &[ItemRecord],
    embedder: &dyn ItemEmbedder,
    coarse_clusters: Option<usize>,
    config_hash: &str,
    seed: u64,
) -> Result<GeoPartitionedIndex> {
    let mut partitions: BTreeMap<u32, IndexPartition> = BTreeMap::new();
    let mut seen = std::collections::HashSet::new();
    let mut dim = 0;
    for item in items {
        if !seen.insert(item.item_id) {
            return Err(Error::Eval(format!("duplicate item_id {}", item.item_id)));
        }
        let v = normalize(embedder.embed_item(item)?)?;
        dim = v.len();
        let p = partitions.entry(item.geo_hash).or_insert_with(|| IndexPartition {
            geo_hash: item.geo_hash,
            item_ids: Vec::new(),
            vectors: Vec::new(),
            coarse: None,
        });
        p.item_ids.push(item.item_id);
        p.vectors.push(v);
    }
    if let Some(k) = coarse_clusters {
        for p in partitions.values_mut() {
            let k = k.min(p.vectors.len());
            let mut rng = stream(seed, &format!("ivf-{}", p.geo_hash));
            let centroids = kmeans_init(&p.vectors, k, 10, &mut rng)?;
            let mut posting_lists = vec![Vec::new(); k];
            for (i, v) in p.vectors.iter().enumerate() {
                let c = nearest_centroid(&centroids, v);
                posting_lists[c].push(i);
            }
            p.coarse = Some(CoarseClusters { centroids, posting_lists });
        }
    }
    Ok(GeoPartitionedIndex { version: INDEX_VERSION, config_hash: config_hash.into(), seed, dim, partitions })
}

fn nearest_centroid(centroids: &[Vec<f64>], v: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d: f64 = v.iter().zip(centroid).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Ranked `(item_id, cosine score)` within the query's partition, descending
/// score with ties by ascending item id. An unknown partition yields an empty
/// result. Approximate mode scans only the `n_probe` nearest coarse clusters.
pub fn search_topk(
    index: &GeoPartitionedIndex,
    query_vec: &[f64],
    geo_hash: u32,
    k: usize,
    mode: SearchMode,
    n_probe: usize,
) -> Result<Vec<(u32, f64)>> {
    if k == 0 {
        return Err(Error::Eval("top-K needs K >= 1".into()));
    }
    if query_vec.len() != index.dim {
        return Err(Error::Eval(format!(
            "query dim {} does not match index dim {}",
            query_vec.len(),
            index.dim
        )));
    }
    let partition = match index.partitions.get(&geo_hash) {
        Some(p) => p,
        None => return Ok(Vec::new()),
    };
    let qnorm = query_vec.iter().map(|x| x * x).sum::<f64>().sqrt();
    let q: Vec<f64> = if qnorm < 1e-12 {
        vec![0.0; query_vec.len()]
    } else {
        query_vec.iter().map(|x| x / qnorm).collect()
    };

    let candidate_idx: Vec<usize> = match mode {
        SearchMode::Exact => (0..partition.vectors.len()).collect(),
        SearchMode::Approx => {
            let coarse = partition.coarse.as_ref().ok_or_else(|| {
                Error::Eval("approximate search needs an index built with coarse clusters".into())
            })?;
            let mut ranked: Vec<(f64, usize)> = coarse
                .centroids
                .iter()
                .enumerate()
                .map(|(c, centroid)| {
                    let d: f64 = q.iter().zip(centroid).map(|(a, b)| (a - b) * (a - b)).sum();
                    (d, c)
                })
                .collect();
            ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            ranked
                .iter()
                .take(n_probe.max(1))
                .flat_map(|(_, c)| coarse.posting_lists[*c].iter().copied())
                .collect()
        }
    };

    let mut scored: Vec<(u32, f64)> = candidate_idx
        .into_iter()
        .map(|i| {
            let score: f64 = q.iter().zip(&partition.vectors[i]).map(|(a, b)| a * b).sum();
            (partition.item_ids[i], score)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}
