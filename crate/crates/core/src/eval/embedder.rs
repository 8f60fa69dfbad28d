//! Frozen embedders that turn queries and items into the projected vectors
//! the index stores and searches.

use std::collections::BTreeMap;

use crate::corpus::ItemRecord;
use crate::error::{Error, Result};
use crate::nn::{EncodeInput, EncoderSet, ParamStore, Tower};
use crate::rqvae::SidTriple;
use crate::sid::vocab::{SidSubset, Vocabulary};

pub trait QueryEmbedder {
    fn embed_query(&self, tokens: &[u32]) -> Result<Vec<f64>>;
}

pub trait ItemEmbedder {
    fn embed_item(&self, item: &ItemRecord) -> Result<Vec<f64>>;
}

/// Dual-tower embedder over raw modality features: the item side fuses text
/// and image encodings before projection.
pub struct FusedEmbedder<'a> {
    pub enc: &'a EncoderSet,
    pub store: &'a ParamStore,
}

impl QueryEmbedder for FusedEmbedder<'_> {
    fn embed_query(&self, tokens: &[u32]) -> Result<Vec<f64>> {
        let e = self.enc.encode_plain(self.store, EncodeInput::Query(tokens))?;
        self.enc.project_plain(self.store, Tower::Query, &e)
    }
}

impl ItemEmbedder for FusedEmbedder<'_> {
    fn embed_item(&self, item: &ItemRecord) -> Result<Vec<f64>> {
        let fused = self.enc.encode_item_fused_plain(
            self.store,
            &item.text_tokens,
            &item.image_features,
        )?;
        self.enc.project_plain(self.store, Tower::Item, &fused)
    }
}

/// Item embedder for SID deployment: text tokens and the selected SID tokens
/// are pooled through the text encoder; the image tower is not used.
pub struct SidEmbedder<'a> {
    pub enc: &'a EncoderSet,
    pub store: &'a ParamStore,
    pub vocab: &'a Vocabulary,
    pub sid_table: &'a BTreeMap<u32, SidTriple>,
    pub subset: SidSubset,
}

impl SidEmbedder<'_> {
    pub fn item_tokens(&self, item: &ItemRecord) -> Result<Vec<u32>> {
        let sids = match item.sids.as_ref() {
            Some(s) => s,
            None => self
                .sid_table
                .get(&item.item_id)
                .ok_or_else(|| Error::Eval(format!("item {} has no SIDs", item.item_id)))?,
        };
        let mut tokens = item.text_tokens.clone();
        tokens.extend(self.vocab.sid_tokens(sids, self.subset)?);
        Ok(tokens)
    }
}

impl QueryEmbedder for SidEmbedder<'_> {
    fn embed_query(&self, tokens: &[u32]) -> Result<Vec<f64>> {
        let e = self.enc.encode_plain(self.store, EncodeInput::Query(tokens))?;
        self.enc.project_plain(self.store, Tower::Query, &e)
    }
}

impl ItemEmbedder for SidEmbedder<'_> {
    fn embed_item(&self, item: &ItemRecord) -> Result<Vec<f64>> {
        let tokens = self.item_tokens(item)?;
        let e = self.enc.encode_plain(self.store, EncodeInput::ItemText(&tokens))?;
        self.enc.project_plain(self.store, Tower::Item, &e)
    }
}
