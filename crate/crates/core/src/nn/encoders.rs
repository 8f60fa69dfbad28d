//! The dual-tower encoder set: shared token table, per-tower feed-forward
//! stacks, and independent projection heads.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::feedforward::FeedForwardStack;
use crate::nn::param::{ParamId, ParamStore};
use crate::nn::tape::{NodeRef, Tape};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Dimensions of the encoder set. Desk-scale defaults: d_tok 32, d_model 64,
/// d_proj 16, with one hidden layer in each encoder and a three-layer
/// projection pyramid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub d_tok: usize,
    pub d_model: usize,
    pub d_proj: usize,
    pub d_img: usize,
    pub encoder_hidden: Vec<usize>,
    pub image_hidden: Vec<usize>,
    pub proj_hidden: Vec<usize>,
}

impl EncoderConfig {
    pub fn desk_scale(vocab_size: usize, d_img: usize) -> Self {
        Self {
            vocab_size,
            d_tok: 32,
            d_model: 64,
            d_proj: 16,
            d_img,
            encoder_hidden: vec![48],
            image_hidden: vec![48],
            proj_hidden: vec![48, 32],
        }
    }

    fn encoder_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.d_tok];
        dims.extend_from_slice(&self.encoder_hidden);
        dims.push(self.d_model);
        dims
    }

    fn image_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.d_img];
        dims.extend_from_slice(&self.image_hidden);
        dims.push(self.d_model);
        dims
    }

    fn proj_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.d_model];
        dims.extend_from_slice(&self.proj_hidden);
        dims.push(self.d_proj);
        dims
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tower {
    Query,
    Item,
}

/// One input view for [`EncoderSet::encode`].
#[derive(Debug, Clone, Copy)]
pub enum EncodeInput<'a> {
    Query(&'a [u32]),
    ItemText(&'a [u32]),
    ItemImage(&'a [f64]),
}

#[derive(Debug, Clone)]
pub struct EncoderSet {
    pub config: EncoderConfig,
    pub token_table: ParamId,
    pub query_encoder: FeedForwardStack,
    pub text_encoder: FeedForwardStack,
    pub image_encoder: FeedForwardStack,
    pub proj_query: FeedForwardStack,
    pub proj_item: FeedForwardStack,
}

impl EncoderSet {
    /// Fresh, seeded initialization into an empty store.
    pub fn init(config: EncoderConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        assert!(store.is_empty(), "EncoderSet::init expects a fresh store");
        let token_table =
            store.uniform_init("token_table", config.vocab_size, config.d_tok, config.d_tok, rng);
        let query_encoder =
            FeedForwardStack::init("query_encoder", &config.encoder_dims(), store, rng);
        let text_encoder =
            FeedForwardStack::init("text_encoder", &config.encoder_dims(), store, rng);
        let image_encoder =
            FeedForwardStack::init("image_encoder", &config.image_dims(), store, rng);
        let proj_query = FeedForwardStack::init("proj_query", &config.proj_dims(), store, rng);
        let proj_item = FeedForwardStack::init("proj_item", &config.proj_dims(), store, rng);
        Self { config, token_table, query_encoder, text_encoder, image_encoder, proj_query, proj_item }
    }

    pub fn all_params(&self) -> Vec<ParamId> {
        let mut ids = vec![self.token_table];
        for stack in [
            &self.query_encoder,
            &self.text_encoder,
            &self.image_encoder,
            &self.proj_query,
            &self.proj_item,
        ] {
            ids.extend(stack.params());
        }
        ids
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::Train("empty token list".into()));
        }
        if let Some(bad) = tokens.iter().find(|t| **t as usize >= self.config.vocab_size) {
            return Err(Error::Train(format!(
                "token id {bad} out of range (vocab size {})",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// Mean of the selected token rows (tape).
    pub fn embed_tokens_pooled(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        tokens: &[u32],
    ) -> Result<NodeRef> {
        self.check_tokens(tokens)?;
        let table = tape.param(store, self.token_table);
        Ok(tape.rows_mean(table, tokens.iter().map(|t| *t as usize).collect()))
    }

    /// Mean of the selected token rows (tape-free).
    pub fn embed_tokens_pooled_plain(&self, store: &ParamStore, tokens: &[u32]) -> Result<Vec<f64>> {
        self.check_tokens(tokens)?;
        let t = store.get(self.token_table);
        let d = t.cols;
        let mut v = vec![0.0; d];
        for tok in tokens {
            let row = &t.values[*tok as usize * d..(*tok as usize + 1) * d];
            for (acc, x) in v.iter_mut().zip(row) {
                *acc += x;
            }
        }
        let inv = 1.0 / tokens.len() as f64;
        v.iter_mut().for_each(|x| *x *= inv);
        Ok(v)
    }

    /// Encodes one input view to a `d_model` vector on the tape.
    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        input: EncodeInput<'_>,
    ) -> Result<NodeRef> {
        match input {
            EncodeInput::Query(tokens) => {
                let pooled = self.embed_tokens_pooled(tape, store, tokens)?;
                self.query_encoder.forward(tape, store, pooled)
            }
            EncodeInput::ItemText(tokens) => {
                let pooled = self.embed_tokens_pooled(tape, store, tokens)?;
                self.text_encoder.forward(tape, store, pooled)
            }
            EncodeInput::ItemImage(features) => {
                if features.len() != self.config.d_img {
                    return Err(Error::Shape {
                        tensor: "image features".into(),
                        expected: format!("(1, {})", self.config.d_img),
                        actual: format!("(1, {})", features.len()),
                    });
                }
                let x = tape.vector(features.to_vec());
                self.image_encoder.forward(tape, store, x)
            }
        }
    }

    /// Tape-free counterpart of [`EncoderSet::encode`].
    pub fn encode_plain(&self, store: &ParamStore, input: EncodeInput<'_>) -> Result<Vec<f64>> {
        match input {
            EncodeInput::Query(tokens) => {
                let pooled = self.embed_tokens_pooled_plain(store, tokens)?;
                self.query_encoder.apply(store, &pooled)
            }
            EncodeInput::ItemText(tokens) => {
                let pooled = self.embed_tokens_pooled_plain(store, tokens)?;
                self.text_encoder.apply(store, &pooled)
            }
            EncodeInput::ItemImage(features) => {
                if features.len() != self.config.d_img {
                    return Err(Error::Shape {
                        tensor: "image features".into(),
                        expected: format!("(1, {})", self.config.d_img),
                        actual: format!("(1, {})", features.len()),
                    });
                }
                self.image_encoder.apply(store, features)
            }
        }
    }

    /// Fused item embedding: elementwise sum of text and image encodings.
    pub fn encode_item_fused(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        text_tokens: &[u32],
        image_features: &[f64],
    ) -> Result<NodeRef> {
        let h_text = self.encode(tape, store, EncodeInput::ItemText(text_tokens))?;
        let h_image = self.encode(tape, store, EncodeInput::ItemImage(image_features))?;
        Ok(tape.add(h_text, h_image))
    }

    pub fn encode_item_fused_plain(
        &self,
        store: &ParamStore,
        text_tokens: &[u32],
        image_features: &[f64],
    ) -> Result<Vec<f64>> {
        let h_text = self.encode_plain(store, EncodeInput::ItemText(text_tokens))?;
        let h_image = self.encode_plain(store, EncodeInput::ItemImage(image_features))?;
        Ok(h_text.iter().zip(&h_image).map(|(a, b)| a + b).collect())
    }

    /// Applies the tower's projection head to a `d_model` vector.
    pub fn project(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        tower: Tower,
        e: NodeRef,
    ) -> Result<NodeRef> {
        let stack = match tower {
            Tower::Query => &self.proj_query,
            Tower::Item => &self.proj_item,
        };
        stack.forward(tape, store, e)
    }

    pub fn project_plain(&self, store: &ParamStore, tower: Tower, e: &[f64]) -> Result<Vec<f64>> {
        let stack = match tower {
            Tower::Query => &self.proj_query,
            Tower::Item => &self.proj_item,
        };
        stack.apply(store, e)
    }

    /// Copies this encoder set into a fresh store with a larger token table.
    ///
    /// Rows `0..vocab_size` keep their values; new rows start at the mean of
    /// the existing rows plus small seeded noise. Every other tensor is
    /// copied verbatim.
    pub fn expanded_vocab(
        &self,
        store: &ParamStore,
        new_vocab: usize,
        rng: &mut ChaCha8Rng,
    ) -> (EncoderSet, ParamStore) {
        assert!(new_vocab >= self.config.vocab_size);
        let mut config = self.config.clone();
        config.vocab_size = new_vocab;
        let mut new_store = ParamStore::new();
        // The init RNG is immediately overwritten below; reuse `rng` for layout.
        let new_set = EncoderSet::init(config, &mut new_store, rng);

        let old_table = store.get(self.token_table);
        let d = old_table.cols;
        let mut mean = vec![0.0; d];
        for r in 0..old_table.rows {
            for (acc, x) in mean.iter_mut().zip(&old_table.values[r * d..(r + 1) * d]) {
                *acc += x;
            }
        }
        mean.iter_mut().for_each(|x| *x /= old_table.rows as f64);

        for (old_id, new_id) in self.all_params().into_iter().zip(new_set.all_params()) {
            let old = store.get(old_id).clone();
            let new = new_store.get_mut(new_id);
            if new_id == new_set.token_table {
                new.values[..old.values.len()].copy_from_slice(&old.values);
                for r in old_table.rows..new_vocab {
                    for (i, m) in mean.iter().enumerate() {
                        new.values[r * d + i] = m + rng.gen_range(-0.01..0.01);
                    }
                }
            } else {
                assert_eq!((old.rows, old.cols), (new.rows, new.cols), "layout drift in {}", old.name);
                new.values.copy_from_slice(&old.values);
            }
        }
        (new_set, new_store)
    }
}

/// Serialized model state: every tensor of a store, by name.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub tensors: Vec<CheckpointTensor>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CheckpointTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, config_hash: &str, seed: u64) -> Self {
        let tensors = store
            .ids()
            .map(|id| {
                let t = store.get(id);
                CheckpointTensor {
                    name: t.name.clone(),
                    rows: t.rows,
                    cols: t.cols,
                    values: t.values.clone(),
                }
            })
            .collect();
        Checkpoint { version: CHECKPOINT_VERSION, config_hash: config_hash.to_string(), seed, tensors }
    }

    /// Writes tensor values into an already-laid-out store, validating names
    /// and shapes.
    pub fn load_into(&self, store: &mut ParamStore) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Artifact(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        if self.tensors.len() != store.len() {
            return Err(Error::Artifact(format!(
                "checkpoint has {} tensors, model expects {}",
                self.tensors.len(),
                store.len()
            )));
        }
        for (id, src) in store.ids().collect::<Vec<_>>().into_iter().zip(&self.tensors) {
            let dst = store.get_mut(id);
            if dst.name != src.name {
                return Err(Error::Artifact(format!(
                    "checkpoint tensor `{}` does not match model tensor `{}`",
                    src.name, dst.name
                )));
            }
            if (dst.rows, dst.cols) != (src.rows, src.cols) {
                return Err(Error::Shape {
                    tensor: src.name.clone(),
                    expected: format!("({}, {})", dst.rows, dst.cols),
                    actual: format!("({}, {})", src.rows, src.cols),
                });
            }
            dst.values.copy_from_slice(&src.values);
        }
        Ok(())
    }
}
