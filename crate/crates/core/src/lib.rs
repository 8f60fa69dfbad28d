//! Experiment pipeline for multimodal retrieval at desk scale: synthetic
//! corpus generation, dual-tower contrastive pretraining with staged
//! schedules, residual-quantized semantic IDs, sequence-model adaptation
//! tasks, and geo-partitioned retrieval evaluation.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod nn;
pub mod objectives;
pub mod pipeline;

pub mod rng;
pub mod rqvae;
pub mod sid;
pub mod trainer;

pub use error::{Error, Result};
