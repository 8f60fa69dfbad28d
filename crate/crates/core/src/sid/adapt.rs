//! Downstream adaptation: doc2docid warm-up for the sequence model, then a
//! combined phase of causal prediction and retrieval fine-tuning where item
//! embeddings consume SID tokens instead of the raw image path.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ItemRecord, QueryRecord};
use crate::error::{Error, Result};
use crate::nn::{EncodeInput, EncoderSet, NodeRef, ParamId, ParamStore, Tape, Tower};
use crate::objectives::build_info_nce;
use crate::rng::{stream, stream_n};
use crate::rqvae::SidTriple;
use crate::sid::causal::{
    loss_causal, loss_causal_sids, loss_doc2docid, CausalModelConfig, CausalSequenceModel,
};
use crate::sid::vocab::{SidSubset, Vocabulary};

/// Which adaptation losses run, mirroring the ablation rows: doc2docid only,
/// doc2docid plus one causal variant, or the full combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdaptationVariant {
    Doc2docid,
    WithCausal,
    WithCausalSids,
    Full,
}

impl AdaptationVariant {
    pub fn name(&self) -> &'static str {
        match self {
            AdaptationVariant::Doc2docid => "doc2docid",
            AdaptationVariant::WithCausal => "with-causal",
            AdaptationVariant::WithCausalSids => "with-causal-sids",
            AdaptationVariant::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "doc2docid" => Ok(AdaptationVariant::Doc2docid),
            "with-causal" => Ok(AdaptationVariant::WithCausal),
            "with-causal-sids" => Ok(AdaptationVariant::WithCausalSids),
            "full" => Ok(AdaptationVariant::Full),
            other => Err(Error::config("adaptation", format!("unknown variant `{other}`"))),
        }
    }

    /// (lambda_causal, lambda_causal_sids, lambda_retrieval); phase 2 is
    /// skipped entirely for the doc2docid-only variant.
    pub fn lambdas(&self) -> (f64, f64, f64) {
        match self {
            AdaptationVariant::Doc2docid => (0.0, 0.0, 0.0),
            AdaptationVariant::WithCausal => (1.0, 0.0, 1.0),
            AdaptationVariant::WithCausalSids => (0.0, 1.0, 1.0),
            AdaptationVariant::Full => (1.0, 1.0, 1.0),
        }
    }
}

impl std::fmt::Display for AdaptationVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptationConfig {
    pub phase1_steps: usize,
    pub phase2_steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub tau: f64,
    pub clip_norm: f64,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            phase1_steps: 300,
            phase2_steps: 500,
            batch_size: 16,
            learning_rate: 0.05,
            tau: crate::objectives::DEFAULT_TAU,
            clip_norm: 5.0,
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::config("adapt.batch_size", "must be at least 2"));
        }
        if self.tau <= 0.0 {
            return Err(Error::config("adapt.tau", "must be positive"));
        }
        if self.learning_rate < 0.0 {
            return Err(Error::config("adapt.learning_rate", "must be non-negative"));
        }
        Ok(())
    }
}

/// Encoders and sequence model after adaptation. The two share one store and
/// one token table, mirroring a single language model serving both the
/// sequence tasks and the item tower.
pub struct AdaptedModel {
    pub enc: EncoderSet,
    pub model: CausalSequenceModel,
    pub store: ParamStore,
    pub vocab: Vocabulary,
    pub sid_subset: SidSubset,
}

fn item_with_sids<'a>(
    items: &'a [ItemRecord],
    by_id: &BTreeMap<u32, usize>,
    sid_table: &'a BTreeMap<u32, SidTriple>,
    item_id: u32,
) -> Result<(&'a ItemRecord, &'a SidTriple)> {
    let idx = by_id
        .get(&item_id)
        .ok_or_else(|| Error::Train(format!("item {item_id} not in the pool")))?;
    let item = &items[*idx];
    let sids = item
        .sids
        .as_ref()
        .or_else(|| sid_table.get(&item_id))
        .ok_or_else(|| Error::Train(format!("item {item_id} is missing SIDs")))?;
    Ok((item, sids))
}

/// Item-tower embedding over text plus selected SID tokens (tape).
fn sid_item_node(
    tape: &mut Tape,
    store: &ParamStore,
    enc: &EncoderSet,
    vocab: &Vocabulary,
    subset: SidSubset,
    item: &ItemRecord,
    sids: &SidTriple,
) -> Result<NodeRef> {
    let mut tokens = item.text_tokens.clone();
    tokens.extend(vocab.sid_tokens(sids, subset)?);
    let e = enc.encode(tape, store, EncodeInput::ItemText(&tokens))?;
    enc.project(tape, store, Tower::Item, e)
}

/// Retrieval fine-tuning loss: InfoNCE over random negatives plus, when hard
/// negatives are present, a second InfoNCE over them.
#[allow(clippy::too_many_arguments)]
pub fn build_finetune_retrieval_loss(
    tape: &mut Tape,
    store: &ParamStore,
    enc: &EncoderSet,
    vocab: &Vocabulary,
    subset: SidSubset,
    query_tokens: &[u32],
    positive: (&ItemRecord, &SidTriple),
    random_negs: &[(&ItemRecord, &SidTriple)],
    hard_negs: &[(&ItemRecord, &SidTriple)],
    tau: f64,
) -> Result<NodeRef> {
    if random_negs.is_empty() && hard_negs.is_empty() {
        return Err(Error::Train("retrieval fine-tuning needs at least one negative".into()));
    }
    let hq = enc.encode(tape, store, EncodeInput::Query(query_tokens))?;
    let anchor = enc.project(tape, store, Tower::Query, hq)?;
    let pos = sid_item_node(tape, store, enc, vocab, subset, positive.0, positive.1)?;
    let mut terms = Vec::new();
    if !random_negs.is_empty() {
        let negs: Vec<NodeRef> = random_negs
            .iter()
            .map(|(item, sids)| sid_item_node(tape, store, enc, vocab, subset, item, sids))
            .collect::<Result<_>>()?;
        terms.push(build_info_nce(tape, anchor, pos, &negs, tau)?);
    }
    if !hard_negs.is_empty() {
        let negs: Vec<NodeRef> = hard_negs
            .iter()
            .map(|(item, sids)| sid_item_node(tape, store, enc, vocab, subset, item, sids))
            .collect::<Result<_>>()?;
        terms.push(build_info_nce(tape, anchor, pos, &negs, tau)?);
    }
    Ok(if terms.len() == 1 { terms[0] } else { tape.sum_list(terms) })
}

/// Parameter groups touched by retrieval fine-tuning: the SID path runs
/// through the token table and text encoder only.
fn retrieval_params(enc: &EncoderSet) -> Vec<ParamId> {
    let mut ids = vec![enc.token_table];
    ids.extend(enc.query_encoder.params());
    ids.extend(enc.text_encoder.params());
    ids.extend(enc.proj_query.params());
    ids.extend(enc.proj_item.params());
    ids
}

/// Expands the vocabulary, runs doc2docid warm-up, then the combined causal +
/// retrieval phase selected by `variant`. The sequence model shares the item
/// tower's token table, so SID understanding learned on the sequence tasks
/// transfers into the retrieval embeddings.
#[allow(clippy::too_many_arguments)]
pub fn run_adaptation(
    enc: &EncoderSet,
    enc_store: &ParamStore,
    base_vocab: &Vocabulary,
    entries: usize,
    layers: usize,
    sid_table: &BTreeMap<u32, SidTriple>,
    items: &[ItemRecord],
    train_queries: &[QueryRecord],
    variant: AdaptationVariant,
    subset: SidSubset,
    config: &AdaptationConfig,
    seed: u64,
) -> Result<AdaptedModel> {
    config.validate()?;
    if train_queries.is_empty() {
        return Err(Error::Train("adaptation needs training queries".into()));
    }
    let vocab = base_vocab.expand_vocab(entries, layers)?;
    let mut expand_rng = stream(seed, "vocab-expand");
    let (enc, mut store) = enc.expanded_vocab(enc_store, vocab.total_size(), &mut expand_rng);

    let mut model_config = CausalModelConfig::desk_scale(vocab.total_size());
    model_config.d_model = enc.config.d_tok;
    let model = CausalSequenceModel::init_with_table(
        model_config,
        enc.token_table,
        &mut store,
        &mut stream(seed, "causal-init"),
    );
    let model_params = model.all_params();

    let by_id: BTreeMap<u32, usize> =
        items.iter().enumerate().map(|(i, it)| (it.item_id, i)).collect();

    // Phase 1: doc2docid only; moves the sequence model and, through the
    // shared table, the SID token rows.
    for step in 0..config.phase1_steps {
        let mut rng = stream_n(seed, "doc2docid-batch", step as u64);
        let mut tape = Tape::new();
        let mut losses = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            let item = &items[rng.gen_range(0..items.len())];
            let (item, sids) = item_with_sids(items, &by_id, sid_table, item.item_id)?;
            losses.push(loss_doc2docid(
                &model,
                &mut tape,
                &store,
                &vocab,
                &item.text_tokens,
                sids,
            )?);
        }
        let mean = tape.mean_list(losses);
        if !tape.scalar(mean).is_finite() {
            return Err(Error::Train(format!("doc2docid loss diverged at step {step}")));
        }
        store.zero_grad();
        let grads = tape.backward(mean);
        tape.accumulate_grads(&grads, &mut store);
        store.sgd_step(&model_params, config.learning_rate, config.clip_norm);
    }

    // Phase 2: one combined loss per step,
    // lambda1 L_causal + lambda2 L_causal_SIDs + lambda3 L_retrieval.
    let (lambda_causal, lambda_causal_sids, lambda_retrieval) = variant.lambdas();
    if variant != AdaptationVariant::Doc2docid {
        let mut group: Vec<ParamId> = model_params.clone();
        for id in retrieval_params(&enc) {
            if !group.contains(&id) {
                group.push(id);
            }
        }
        for step in 0..config.phase2_steps {
            let mut rng = stream_n(seed, "adapt-batch", step as u64);
            let batch: Vec<&QueryRecord> = (0..config.batch_size)
                .map(|_| &train_queries[rng.gen_range(0..train_queries.len())])
                .collect();
            let mut tape = Tape::new();
            let mut losses = Vec::new();
            for (i, q) in batch.iter().enumerate() {
                let (item, sids) = item_with_sids(items, &by_id, sid_table, q.positive_item_id)?;
                if lambda_causal > 0.0 {
                    let l = loss_causal(
                        &model,
                        &mut tape,
                        &store,
                        &vocab,
                        &item.text_tokens,
                        &q.text_tokens,
                    )?;
                    losses.push(tape.scale(l, lambda_causal));
                }
                if lambda_causal_sids > 0.0 {
                    let l = loss_causal_sids(
                        &model,
                        &mut tape,
                        &store,
                        &vocab,
                        &item.text_tokens,
                        sids,
                        &q.text_tokens,
                    )?;
                    losses.push(tape.scale(l, lambda_causal_sids));
                }
                if lambda_retrieval > 0.0 {
                    let random_negs: Vec<(&ItemRecord, &SidTriple)> = batch
                        .iter()
                        .enumerate()
                        .filter(|(j, other)| {
                            *j != i && other.positive_item_id != q.positive_item_id
                        })
                        .map(|(_, other)| {
                            item_with_sids(items, &by_id, sid_table, other.positive_item_id)
                        })
                        .collect::<Result<_>>()?;
                    let hard_negs: Vec<(&ItemRecord, &SidTriple)> = q
                        .hard_negative_item_ids
                        .iter()
                        .map(|id| item_with_sids(items, &by_id, sid_table, *id))
                        .collect::<Result<_>>()?;
                    if random_negs.is_empty() && hard_negs.is_empty() {
                        continue;
                    }
                    let l = build_finetune_retrieval_loss(
                        &mut tape,
                        &store,
                        &enc,
                        &vocab,
                        subset,
                        &q.text_tokens,
                        (item, sids),
                        &random_negs,
                        &hard_negs,
                        config.tau,
                    )?;
                    losses.push(tape.scale(l, lambda_retrieval));
                }
            }
            if losses.is_empty() {
                continue;
            }
            let mean = tape.mean_list(losses);
            if !tape.scalar(mean).is_finite() {
                return Err(Error::Train(format!("adaptation loss diverged at step {step}")));
            }
            store.zero_grad();
            let grads = tape.backward(mean);
            tape.accumulate_grads(&grads, &mut store);
            store.sgd_step(&group, config.learning_rate, config.clip_norm);
        }
    }

    Ok(AdaptedModel { enc, model, store, vocab, sid_subset: subset })
}
