//! A small causal sequence model: token + position embeddings, one two-head
//! self-attention block with residual, and a vocabulary logit head. Carries
//! the doc2docid and causal-prediction losses.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{NodeRef, ParamId, ParamStore, Tape};
use crate::rqvae::SidTriple;
use crate::sid::vocab::Vocabulary;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub max_len: usize,
}

impl CausalModelConfig {
    pub fn desk_scale(vocab_size: usize) -> Self {
        Self { vocab_size, d_model: 32, n_heads: 2, max_len: 64 }
    }
}

#[derive(Debug, Clone)]
pub struct CausalSequenceModel {
    pub config: CausalModelConfig,
    pub token_table: ParamId,
    pub pos_table: ParamId,
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub w_logits: ParamId,
    pub b_logits: ParamId,
}

impl CausalSequenceModel {
    pub fn init(config: CausalModelConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        assert!(store.is_empty(), "CausalSequenceModel::init expects a fresh store");
        let d = config.d_model;
        let v = config.vocab_size;
        let token_table = store.uniform_init("token_table", v, d, d, rng);
        Self::init_with_table(config, token_table, store, rng)
    }

    /// Initialization over an existing token table (shared with the towers),
    /// which must be `vocab_size x d_model`.
    pub fn init_with_table(
        config: CausalModelConfig,
        token_table: ParamId,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert_eq!(config.d_model % config.n_heads, 0, "heads must divide d_model");
        let table = store.get(token_table);
        assert_eq!(
            (table.rows, table.cols),
            (config.vocab_size, config.d_model),
            "token table shape mismatch"
        );
        let d = config.d_model;
        let v = config.vocab_size;
        let pos_table = store.uniform_init("causal.pos_table", config.max_len, d, d, rng);
        let wq = store.uniform_init("causal.wq", d, d, d, rng);
        let wk = store.uniform_init("causal.wk", d, d, d, rng);
        let wv = store.uniform_init("causal.wv", d, d, d, rng);
        let wo = store.uniform_init("causal.wo", d, d, d, rng);
        let w_logits = store.uniform_init("causal.w_logits", v, d, d, rng);
        let b_logits = store.uniform_init("causal.b_logits", 1, v, d, rng);
        Self { config, token_table, pos_table, wq, wk, wv, wo, w_logits, b_logits }
    }

    pub fn all_params(&self) -> Vec<ParamId> {
        vec![
            self.token_table,
            self.pos_table,
            self.wq,
            self.wk,
            self.wv,
            self.wo,
            self.w_logits,
            self.b_logits,
        ]
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::Train("empty token sequence".into()));
        }
        if tokens.len() > self.config.max_len {
            return Err(Error::Train(format!(
                "sequence length {} exceeds max_len {}",
                tokens.len(),
                self.config.max_len
            )));
        }
        if let Some(bad) = tokens.iter().find(|t| **t as usize >= self.config.vocab_size) {
            return Err(Error::Train(format!("token id {bad} out of vocabulary")));
        }
        Ok(())
    }

    /// Next-token logits, one row per position (shape T x V).
    pub fn forward_logits(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        tokens: &[u32],
    ) -> Result<NodeRef> {
        self.check_tokens(tokens)?;
        let t = tokens.len();
        let ids: Vec<usize> = tokens.iter().map(|x| *x as usize).collect();
        let tok_table = tape.param(store, self.token_table);
        let pos_table = tape.param(store, self.pos_table);
        let tok = tape.gather_rows(tok_table, ids);
        let pos = tape.gather_rows(pos_table, (0..t).collect());
        let x = tape.add(tok, pos);

        let d = self.config.d_model;
        let dh = d / self.config.n_heads;
        let wq = tape.param(store, self.wq);
        let wk = tape.param(store, self.wk);
        let wv = tape.param(store, self.wv);
        let wo = tape.param(store, self.wo);
        let wq_t = tape.transpose(wq);
        let wk_t = tape.transpose(wk);
        let wv_t = tape.transpose(wv);
        let wo_t = tape.transpose(wo);
        let q = tape.matmul(x, wq_t);
        let k = tape.matmul(x, wk_t);
        let v = tape.matmul(x, wv_t);

        let mut heads = Vec::with_capacity(self.config.n_heads);
        for h in 0..self.config.n_heads {
            let qh = tape.slice_cols(q, h * dh, dh);
            let kh = tape.slice_cols(k, h * dh, dh);
            let vh = tape.slice_cols(v, h * dh, dh);
            let kh_t = tape.transpose(kh);
            let scores = tape.matmul(qh, kh_t);
            let scaled = tape.scale(scores, 1.0 / (dh as f64).sqrt());
            let attn = tape.causal_softmax_rows(scaled);
            heads.push(tape.matmul(attn, vh));
        }
        let mixed = tape.concat_cols(heads);
        let out = tape.matmul(mixed, wo_t);
        let hidden = tape.add(x, out);

        let wl = tape.param(store, self.w_logits);
        let bl = tape.param(store, self.b_logits);
        let wl_t = tape.transpose(wl);
        let raw = tape.matmul(hidden, wl_t);
        Ok(tape.add_row_broadcast(raw, bl))
    }

    /// Mean next-token cross-entropy at the supervised positions:
    /// `targets[t] = Some(id)` means position t predicts `id`.
    pub fn cross_entropy(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        tokens: &[u32],
        targets: Vec<Option<u32>>,
    ) -> Result<NodeRef> {
        if targets.len() != tokens.len() {
            return Err(Error::Train("targets must align with the token sequence".into()));
        }
        if targets.iter().all(|t| t.is_none()) {
            return Err(Error::Train("no supervised positions".into()));
        }
        let logits = self.forward_logits(tape, store, tokens)?;
        Ok(tape.cross_entropy_rows(logits, targets.into_iter().map(|t| t.map(|x| x as usize)).collect()))
    }
}

/// Item-side token sequence: text, SEP, then the nine SID tokens in
/// (text, image, item) order; a query can be appended behind another SEP.
#[derive(Debug, Clone)]
pub struct ItemSequence {
    pub tokens: Vec<u32>,
    /// Offsets of the SID block within `tokens`.
    pub sid_start: usize,
    pub sid_len: usize,
}

impl ItemSequence {
    pub fn build(vocab: &Vocabulary, text_tokens: &[u32], sids: &SidTriple) -> Result<Self> {
        let mut tokens = text_tokens.to_vec();
        tokens.push(vocab.sep());
        let sid_start = tokens.len();
        let sid_tokens = vocab.sid_tokens(sids, crate::sid::vocab::SidSubset::All)?;
        let sid_len = sid_tokens.len();
        tokens.extend(sid_tokens);
        Ok(Self { tokens, sid_start, sid_len })
    }

    pub fn with_query(&self, vocab: &Vocabulary, query_tokens: &[u32]) -> Vec<u32> {
        let mut tokens = self.tokens.clone();
        tokens.push(vocab.sep());
        tokens.extend_from_slice(query_tokens);
        tokens
    }
}

/// Teacher-forced SID prediction: mean cross-entropy over the nine SID
/// positions, conditioned causally on the item text and earlier SID tokens.
pub fn loss_doc2docid(
    model: &CausalSequenceModel,
    tape: &mut Tape,
    store: &ParamStore,
    vocab: &Vocabulary,
    text_tokens: &[u32],
    sids: &SidTriple,
) -> Result<NodeRef> {
    let seq = ItemSequence::build(vocab, text_tokens, sids)?;
    let mut targets = vec![None; seq.tokens.len()];
    for offset in 0..seq.sid_len {
        let sid_pos = seq.sid_start + offset;
        targets[sid_pos - 1] = Some(seq.tokens[sid_pos]);
    }
    model.cross_entropy(tape, store, &seq.tokens, targets)
}

fn causal_targets(seq_len: usize, query_start: usize, seq: &[u32]) -> Vec<Option<u32>> {
    let mut targets = vec![None; seq_len];
    for t in query_start..seq_len - 1 {
        targets[t] = Some(seq[t + 1]);
    }
    targets
}

/// Next-query-token prediction from item text alone.
pub fn loss_causal(
    model: &CausalSequenceModel,
    tape: &mut Tape,
    store: &ParamStore,
    vocab: &Vocabulary,
    item_text: &[u32],
    query_tokens: &[u32],
) -> Result<NodeRef> {
    if query_tokens.len() < 2 {
        return Err(Error::Train("causal loss needs a query of length >= 2".into()));
    }
    let mut seq = item_text.to_vec();
    seq.push(vocab.sep());
    let query_start = seq.len();
    seq.extend_from_slice(query_tokens);
    let targets = causal_targets(seq.len(), query_start, &seq);
    model.cross_entropy(tape, store, &seq, targets)
}

/// Next-query-token prediction from item text plus the SID block.
pub fn loss_causal_sids(
    model: &CausalSequenceModel,
    tape: &mut Tape,
    store: &ParamStore,
    vocab: &Vocabulary,
    item_text: &[u32],
    sids: &SidTriple,
    query_tokens: &[u32],
) -> Result<NodeRef> {
    if query_tokens.len() < 2 {
        return Err(Error::Train("causal loss needs a query of length >= 2".into()));
    }
    let item_seq = ItemSequence::build(vocab, item_text, sids)?;
    let seq = item_seq.with_query(vocab, query_tokens);
    let query_start = item_seq.tokens.len() + 1;
    let targets = causal_targets(seq.len(), query_start, &seq);
    model.cross_entropy(tape, store, &seq, targets)
}
