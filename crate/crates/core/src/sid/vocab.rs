//! Token id space shared by the item tower and the causal sequence model:
//! base word tokens, specials, and one token per (modality, layer, index).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rqvae::{Modality, SidTriple};

/// Which SID modalities are appended as item-side information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SidSubset {
    ItemOnly,
    ImageText,
    ItemText,
    ItemImage,
    All,
}

impl SidSubset {
    pub fn name(&self) -> &'static str {
        match self {
            SidSubset::ItemOnly => "item-only",
            SidSubset::ImageText => "image-text",
            SidSubset::ItemText => "item-text",
            SidSubset::ItemImage => "item-image",
            SidSubset::All => "all",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "item-only" => Ok(SidSubset::ItemOnly),
            "image-text" => Ok(SidSubset::ImageText),
            "item-text" => Ok(SidSubset::ItemText),
            "item-image" => Ok(SidSubset::ItemImage),
            "all" => Ok(SidSubset::All),
            other => Err(Error::config("sid_subset", format!("unknown subset `{other}`"))),
        }
    }

    /// Selected modalities in canonical order (text, image, item).
    pub fn modalities(&self) -> Vec<Modality> {
        let selected: &[Modality] = match self {
            SidSubset::ItemOnly => &[Modality::Item],
            SidSubset::ImageText => &[Modality::Text, Modality::Image],
            SidSubset::ItemText => &[Modality::Text, Modality::Item],
            SidSubset::ItemImage => &[Modality::Image, Modality::Item],
            SidSubset::All => &[Modality::Text, Modality::Image, Modality::Item],
        };
        selected.to_vec()
    }
}

impl std::fmt::Display for SidSubset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Base,
    Pad,
    Sep,
    Eos,
    Sid { modality: Modality, layer: usize, index: usize },
}

/// Id layout: `[0, base_size)` word tokens, then PAD/SEP/EOS, then SID tokens
/// modality-major, layer-minor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub base_size: usize,
    /// Codebook entries per layer (K); zero for an unexpanded vocabulary.
    pub entries: usize,
    /// Quantization layers per modality (L).
    pub layers: usize,
}

impl Vocabulary {
    pub fn base(base_size: usize) -> Self {
        Self { base_size, entries: 0, layers: 0 }
    }

    /// Appends 3 * L * K SID ids; existing ids are untouched.
    pub fn expand_vocab(&self, entries: usize, layers: usize) -> Result<Vocabulary> {
        if entries == 0 || layers == 0 {
            return Err(Error::config("vocab", "K and L must be positive"));
        }
        Ok(Vocabulary { base_size: self.base_size, entries, layers })
    }

    pub fn pad(&self) -> u32 {
        self.base_size as u32
    }

    pub fn sep(&self) -> u32 {
        self.base_size as u32 + 1
    }

    pub fn eos(&self) -> u32 {
        self.base_size as u32 + 2
    }

    pub fn total_size(&self) -> usize {
        self.base_size + 3 + 3 * self.layers * self.entries
    }

    pub fn sid_token_count(&self) -> usize {
        3 * self.layers * self.entries
    }

    fn modality_index(m: Modality) -> usize {
        match m {
            Modality::Text => 0,
            Modality::Image => 1,
            Modality::Item => 2,
        }
    }

    pub fn sid_token(&self, modality: Modality, layer: usize, index: usize) -> Result<u32> {
        if layer >= self.layers || index >= self.entries {
            return Err(Error::Train(format!(
                "sid token (modality {modality}, layer {layer}, index {index}) out of range"
            )));
        }
        let block = self.layers * self.entries;
        Ok((self.base_size
            + 3
            + Self::modality_index(modality) * block
            + layer * self.entries
            + index) as u32)
    }

    pub fn kind(&self, id: u32) -> Option<TokenKind> {
        let id = id as usize;
        if id < self.base_size {
            return Some(TokenKind::Base);
        }
        if id == self.base_size {
            return Some(TokenKind::Pad);
        }
        if id == self.base_size + 1 {
            return Some(TokenKind::Sep);
        }
        if id == self.base_size + 2 {
            return Some(TokenKind::Eos);
        }
        let offset = id - self.base_size - 3;
        if offset >= self.sid_token_count() {
            return None;
        }
        let block = self.layers * self.entries;
        let modality = [Modality::Text, Modality::Image, Modality::Item][offset / block];
        let within = offset % block;
        Some(TokenKind::Sid {
            modality,
            layer: within / self.entries,
            index: within % self.entries,
        })
    }

    /// SID tokens for an item, in canonical (text, image, item) order,
    /// restricted to the subset's modalities.
    pub fn sid_tokens(&self, sids: &SidTriple, subset: SidSubset) -> Result<Vec<u32>> {
        let mut out = Vec::new();
        for modality in subset.modalities() {
            let tuple = sids.tuple(modality);
            if tuple.indices.len() != self.layers {
                return Err(Error::Train(format!(
                    "sid tuple for {modality} has {} layers, vocabulary expects {}",
                    tuple.indices.len(),
                    self.layers
                )));
            }
            for (layer, index) in tuple.indices.iter().enumerate() {
                out.push(self.sid_token(modality, layer, *index)?);
            }
        }
        Ok(out)
    }

    /// Human-readable id table for the vocabulary file.
    pub fn table(&self) -> Vec<VocabEntry> {
        (0..self.total_size() as u32)
            .map(|id| {
                let (kind, payload) = match self.kind(id).unwrap() {
                    TokenKind::Base => ("base".to_string(), format!("{id}")),
                    TokenKind::Pad => ("special".to_string(), "PAD".to_string()),
                    TokenKind::Sep => ("special".to_string(), "SEP".to_string()),
                    TokenKind::Eos => ("special".to_string(), "EOS".to_string()),
                    TokenKind::Sid { modality, layer, index } => {
                        ("sid".to_string(), format!("{modality}:{layer}:{index}"))
                    }
                };
                VocabEntry { id, kind, payload }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VocabEntry {
    pub id: u32,
    pub kind: String,
    pub payload: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expansion_adds_288_tokens_for_default_shape() {
        let base = Vocabulary::base(600);
        let v = base.expand_vocab(32, 3).unwrap();
        assert_eq!(v.sid_token_count(), 288);
        assert_eq!(v.total_size(), 600 + 3 + 288);
    }

    #[test]
    fn sid_token_roundtrips_through_its_decomposition() {
        let v = Vocabulary::base(600).expand_vocab(32, 3).unwrap();
        let id = v.sid_token(Modality::Image, 2, 5).unwrap();
        assert_eq!(
            v.kind(id),
            Some(TokenKind::Sid { modality: Modality::Image, layer: 2, index: 5 })
        );
        // uniqueness across the whole sid range
        let mut seen = std::collections::HashSet::new();
        for m in Modality::ALL {
            for l in 0..3 {
                for i in 0..32 {
                    assert!(seen.insert(v.sid_token(m, l, i).unwrap()));
                }
            }
        }
        assert_eq!(seen.len(), 288);
    }

    #[test]
    fn id_spaces_are_disjoint() {
        let v = Vocabulary::base(10).expand_vocab(4, 3).unwrap();
        assert_eq!(v.kind(9), Some(TokenKind::Base));
        assert_eq!(v.kind(10), Some(TokenKind::Pad));
        assert_eq!(v.kind(11), Some(TokenKind::Sep));
        assert_eq!(v.kind(12), Some(TokenKind::Eos));
        assert_eq!(v.sid_token(Modality::Text, 0, 0).unwrap(), 13);
        assert_eq!(v.kind(v.total_size() as u32), None);
    }

    #[test]
    fn subset_selection_keeps_canonical_order() {
        use crate::rqvae::SidTuple;
        let v = Vocabulary::base(10).expand_vocab(4, 2).unwrap();
        let sids = SidTriple::new(
            SidTuple { modality: Modality::Text, indices: vec![1, 2] },
            SidTuple { modality: Modality::Image, indices: vec![3, 0] },
            SidTuple { modality: Modality::Item, indices: vec![0, 1] },
        )
        .unwrap();
        let all = v.sid_tokens(&sids, SidSubset::All).unwrap();
        assert_eq!(all.len(), 6);
        let item_only = v.sid_tokens(&sids, SidSubset::ItemOnly).unwrap();
        assert_eq!(item_only.len(), 2);
        // text block comes before image block in the full sequence
        let text0 = v.sid_token(Modality::Text, 0, 1).unwrap();
        assert_eq!(all[0], text0);
    }
}
