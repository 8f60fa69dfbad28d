//! Synthetic multimodal corpus with known ground truth.
//!
//! Concepts carry a unit latent vector, a token lexicon, and an image
//! projection. "Confusable groups" are sets of concepts sharing one lexicon
//! while keeping distinct latent vectors: their items read identically on the
//! text side but differ on the image side, which is what makes image features
//! measurable for retrieval.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;
use crate::rqvae::SidTriple;

pub const LEXICON_TOKENS_PER_CONCEPT: usize = 12;
pub const ITEM_TEXT_TOKEN_COUNT: usize = 5;
pub const QUERY_TEXT_TOKEN_COUNT: usize = 4;
pub const DEFAULT_HARD_NEGATIVES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    /// C: number of concepts.
    pub concepts: usize,
    /// G: number of geo partitions.
    pub partitions: usize,
    pub n_items: usize,
    pub n_queries: usize,
    pub d_latent: usize,
    pub d_img: usize,
    /// Fraction of concepts placed in confusable groups, and of queries that
    /// target grouped items.
    pub rho_image_critical: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            concepts: 50,
            partitions: 8,
            n_items: 2000,
            n_queries: 5000,
            d_latent: 16,
            d_img: 24,
            rho_image_critical: 0.5,
            noise_sigma: 0.05,
            seed: 0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("corpus.concepts", self.concepts),
            ("corpus.partitions", self.partitions),
            ("corpus.n_items", self.n_items),
            ("corpus.n_queries", self.n_queries),
            ("corpus.d_latent", self.d_latent),
            ("corpus.d_img", self.d_img),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.rho_image_critical) {
            return Err(Error::config("corpus.rho_image_critical", "must lie in [0, 1]"));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::config("corpus.noise_sigma", "must be non-negative"));
        }
        if self.n_items < self.concepts {
            return Err(Error::Corpus("too few items".into()));
        }
        if self.d_img < self.d_latent {
            return Err(Error::Corpus("rank-deficient projection".into()));
        }
        Ok(())
    }

    /// Base token vocabulary: a fixed block per concept, so the id space does
    /// not depend on grouping.
    pub fn vocab_base_size(&self) -> usize {
        self.concepts * LEXICON_TOKENS_PER_CONCEPT
    }
}

#[derive(Debug, Clone)]
pub struct ConceptSpace {
    /// C x d_latent, unit-norm rows.
    pub concepts: Vec<Vec<f64>>,
    /// Per concept: its token lexicon (grouped concepts share the leader's).
    pub token_lexicon: Vec<Vec<u32>>,
    /// d_latent x d_img, full row rank.
    pub image_projection: Vec<Vec<f64>>,
    /// Concept ids per confusable group.
    pub confusable_groups: Vec<Vec<u32>>,
    /// Group index per concept, if any.
    pub group_of: Vec<Option<u32>>,
}

impl ConceptSpace {
    pub fn lexicon(&self, concept: u32) -> &[u32] {
        &self.token_lexicon[concept as usize]
    }

    pub fn group_of(&self, concept: u32) -> Option<u32> {
        self.group_of[concept as usize]
    }

    pub fn same_lexicon(&self, a: u32, b: u32) -> bool {
        self.token_lexicon[a as usize] == self.token_lexicon[b as usize]
    }

    /// Projects a concept vector into image-feature space.
    pub fn project_concept(&self, concept: u32) -> Vec<f64> {
        let c = &self.concepts[concept as usize];
        let d_img = self.image_projection[0].len();
        let mut v = vec![0.0; d_img];
        for (ci, row) in c.iter().zip(&self.image_projection) {
            for (acc, p) in v.iter_mut().zip(row) {
                *acc += ci * p;
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: u32,
    pub geo_hash: u32,
    pub text_tokens: Vec<u32>,
    pub image_features: Vec<f64>,
    pub concept_id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sids: Option<SidTriple>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: u32,
    pub text_tokens: Vec<u32>,
    pub geo_hash: u32,
    pub positive_item_id: u32,
    pub hard_negative_item_ids: Vec<u32>,
    pub image_critical: bool,
}

fn sample_normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn sample_distinct(pool: &[u32], n: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.shuffle(rng);
    idx.truncate(n.min(pool.len()));
    idx.into_iter().map(|i| pool[i]).collect()
}

/// Generates the concept space and item pool.
///
/// Items cycle partitions (`geo = i % G`) and concepts in blocks of one
/// partition round (`concept = (i / G) % C`), so every confusable group has
/// members in every partition once `n_items >= C * G`.
pub fn generate_corpus(config: &CorpusConfig) -> Result<(ConceptSpace, Vec<ItemRecord>)> {
    config.validate()?;
    let c = config.concepts;
    let g = config.partitions;
    let mut rng = stream(config.seed, "concepts");

    let mut concepts = Vec::with_capacity(c);
    for _ in 0..c {
        let mut row: Vec<f64> = (0..config.d_latent).map(|_| sample_normal(&mut rng)).collect();
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-9 {
            return Err(Error::Corpus("degenerate concept vector".into()));
        }
        row.iter_mut().for_each(|x| *x /= norm);
        concepts.push(row);
    }

    // Confusable groups: the first round(C * rho) concepts, paired up, with a
    // final group of three when the count is odd.
    let mut n_grouped = (c as f64 * config.rho_image_critical).round() as usize;
    if n_grouped == 1 {
        n_grouped = 2;
    }
    n_grouped = n_grouped.min(c);
    let mut confusable_groups: Vec<Vec<u32>> = Vec::new();
    let mut group_of = vec![None; c];
    let mut cursor = 0;
    while cursor < n_grouped {
        let remaining = n_grouped - cursor;
        let size = if remaining == 3 { 3 } else { 2 };
        let members: Vec<u32> = (cursor..cursor + size).map(|x| x as u32).collect();
        for m in &members {
            group_of[*m as usize] = Some(confusable_groups.len() as u32);
        }
        confusable_groups.push(members);
        cursor += size;
    }

    // Fixed token block per concept; grouped concepts reuse the leader's.
    let mut token_lexicon = Vec::with_capacity(c);
    for concept in 0..c {
        let source = match group_of[concept] {
            Some(gid) => confusable_groups[gid as usize][0] as usize,
            None => concept,
        };
        let start = (source * LEXICON_TOKENS_PER_CONCEPT) as u32;
        token_lexicon.push((start..start + LEXICON_TOKENS_PER_CONCEPT as u32).collect());
    }

    let scale = 1.0 / (config.d_latent as f64).sqrt();
    let image_projection: Vec<Vec<f64>> = (0..config.d_latent)
        .map(|_| (0..config.d_img).map(|_| sample_normal(&mut rng) * scale).collect())
        .collect();
    let sigma_min = smallest_singular_value(&image_projection);
    if sigma_min <= 1e-6 {
        return Err(Error::Corpus(format!(
            "rank-deficient projection (sigma_min = {sigma_min:.3e})"
        )));
    }

    let space = ConceptSpace { concepts, token_lexicon, image_projection, confusable_groups, group_of };

    let mut items = Vec::with_capacity(config.n_items);
    let mut item_rng = stream(config.seed, "items");
    for i in 0..config.n_items {
        let geo_hash = (i % g) as u32;
        let concept_id = ((i / g) % c) as u32;
        let text_tokens =
            sample_distinct(space.lexicon(concept_id), ITEM_TEXT_TOKEN_COUNT, &mut item_rng);
        let mut image_features = space.project_concept(concept_id);
        for v in &mut image_features {
            *v += config.noise_sigma * sample_normal(&mut item_rng);
        }
        items.push(ItemRecord {
            item_id: i as u32,
            geo_hash,
            text_tokens,
            image_features,
            concept_id,
            sids: None,
        });
    }
    Ok((space, items))
}

/// Generates the click log: one positive item per query, tokens drawn from
/// the positive's lexicon, hard negatives pre-mined.
pub fn generate_query_log(
    space: &ConceptSpace,
    items: &[ItemRecord],
    n_queries: usize,
    rho_image_critical: f64,
    seed: u64,
) -> Result<Vec<QueryRecord>> {
    if items.is_empty() {
        return Err(Error::Corpus("empty corpus".into()));
    }
    if !(0.0..=1.0).contains(&rho_image_critical) {
        return Err(Error::config("rho_image_critical", "must lie in [0, 1]"));
    }
    let n_critical = (n_queries as f64 * rho_image_critical).round() as usize;

    // Critical positives must have a same-partition peer with the identical
    // lexicon source from another concept of the group.
    let grouped: Vec<usize> = items
        .iter()
        .enumerate()
        .filter(|(_, it)| space.group_of(it.concept_id).is_some())
        .filter(|(_, it)| {
            items.iter().any(|other| {
                other.item_id != it.item_id
                    && other.geo_hash == it.geo_hash
                    && space.group_of(other.concept_id) == space.group_of(it.concept_id)
            })
        })
        .map(|(i, _)| i)
        .collect();
    let ungrouped: Vec<usize> = items
        .iter()
        .enumerate()
        .filter(|(_, it)| space.group_of(it.concept_id).is_none())
        .map(|(i, _)| i)
        .collect();

    if n_critical > 0 && grouped.is_empty() {
        return Err(Error::Corpus("corpus has no confusable groups".into()));
    }
    if n_critical < n_queries && ungrouped.is_empty() {
        return Err(Error::Corpus("corpus has no ungrouped items for non-critical queries".into()));
    }

    let mut rng = stream(seed, "queries");
    let mut queries = Vec::with_capacity(n_queries);
    for q in 0..n_queries {
        let image_critical = q < n_critical;
        let pool = if image_critical { &grouped } else { &ungrouped };
        let positive = &items[pool[rng.gen_range(0..pool.len())]];
        let text_tokens =
            sample_distinct(space.lexicon(positive.concept_id), QUERY_TEXT_TOKEN_COUNT, &mut rng);
        let mut record = QueryRecord {
            query_id: q as u32,
            text_tokens,
            geo_hash: positive.geo_hash,
            positive_item_id: positive.item_id,
            hard_negative_item_ids: Vec::new(),
            image_critical,
        };
        record.hard_negative_item_ids =
            mine_hard_negatives(space, items, &record, DEFAULT_HARD_NEGATIVES);
        queries.push(record);
    }
    Ok(queries)
}

/// Up to `m` same-partition negatives: confusable-group peers and same-concept
/// items first, then items of the nearest concepts.
pub fn mine_hard_negatives(
    space: &ConceptSpace,
    items: &[ItemRecord],
    query: &QueryRecord,
    m: usize,
) -> Vec<u32> {
    if m == 0 {
        return Vec::new();
    }
    let positive = items
        .iter()
        .find(|it| it.item_id == query.positive_item_id)
        .expect("query positive must exist in the item pool");
    let pos_group = space.group_of(positive.concept_id);
    let pos_vec = &space.concepts[positive.concept_id as usize];

    let mut candidates: Vec<(u8, f64, u32)> = items
        .iter()
        .filter(|it| it.geo_hash == query.geo_hash && it.item_id != positive.item_id)
        .map(|it| {
            let in_group = pos_group.is_some() && space.group_of(it.concept_id) == pos_group;
            let same_concept = it.concept_id == positive.concept_id;
            let priority = if in_group || same_concept { 0 } else { 1 };
            let cvec = &space.concepts[it.concept_id as usize];
            let cos: f64 = pos_vec.iter().zip(cvec).map(|(a, b)| a * b).sum();
            (priority, -cos, it.item_id)
        })
        .collect();
    candidates.sort_by(|a, b| {
        a.0.cmp(&b.0).then(a.1.partial_cmp(&b.1).unwrap()).then(a.2.cmp(&b.2))
    });
    candidates.into_iter().take(m).map(|(_, _, id)| id).collect()
}

/// Disjoint covering split of the query log.
pub fn split_eval(
    queries: &[QueryRecord],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<QueryRecord>, Vec<QueryRecord>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config("train_fraction", "must lie strictly between 0 and 1"));
    }
    if queries.len() < 2 {
        return Err(Error::Corpus("need at least two queries to split".into()));
    }
    let mut idx: Vec<usize> = (0..queries.len()).collect();
    idx.shuffle(&mut stream(seed, "split"));
    let n_train =
        ((queries.len() as f64 * train_fraction).round() as usize).clamp(1, queries.len() - 1);
    let train = idx[..n_train].iter().map(|i| queries[*i].clone()).collect();
    let eval = idx[n_train..].iter().map(|i| queries[*i].clone()).collect();
    Ok((train, eval))
}

/// Smallest singular value of a (rows x cols) matrix with rows <= cols, via
/// Jacobi eigenvalue iteration on the Gram matrix.
fn smallest_singular_value(p: &[Vec<f64>]) -> f64 {
    let n = p.len();
    let mut gram = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let dot: f64 = p[i].iter().zip(&p[j]).map(|(a, b)| a * b).sum();
            gram[i][j] = dot;
            gram[j][i] = dot;
        }
    }
    for _ in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += gram[i][j] * gram[i][j];
            }
        }
        if off < 1e-24 {
            break;
        }
        for pi in 0..n {
            for qi in pi + 1..n {
                let apq = gram[pi][qi];
                if apq.abs() < 1e-30 {
                    continue;
                }
                let theta = (gram[qi][qi] - gram[pi][pi]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = gram[k][pi];
                    let akq = gram[k][qi];
                    gram[k][pi] = c * akp - s * akq;
                    gram[k][qi] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = gram[pi][k];
                    let aqk = gram[qi][k];
                    gram[pi][k] = c * apk - s * aqk;
                    gram[qi][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let min_eig = (0..n).map(|i| gram[i][i]).fold(f64::INFINITY, f64::min);
    min_eig.max(0.0).sqrt()
}

pub fn save_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let f = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(f);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
