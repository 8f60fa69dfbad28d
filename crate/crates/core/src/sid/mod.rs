//! Semantic-ID utilization: vocabulary expansion, the causal sequence model
//! with its doc2docid and causal-prediction losses, and retrieval fine-tuning
//! with hard negatives.

pub mod adapt;
pub mod causal;
pub mod vocab;

pub use adapt::{run_adaptation, AdaptationConfig, AdaptationVariant, AdaptedModel};
pub use causal::{CausalSequenceModel, ItemSequence};
pub use vocab::{SidSubset, TokenKind, VocabEntry, Vocabulary};
