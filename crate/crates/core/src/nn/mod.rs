//! Minimal differentiable building blocks: parameter storage, a reverse-mode
//! tape, feed-forward stacks, the dual-tower encoder set, and gradient
//! verification.

pub mod encoders;
pub mod feedforward;
pub mod gradcheck;
pub mod param;
pub mod tape;

pub use encoders::{Checkpoint, CheckpointTensor, EncodeInput, EncoderConfig, EncoderSet, Tower};
pub use feedforward::FeedForwardStack;
pub use gradcheck::{grad_check, GradCheckReport, DEFAULT_EPSILON, DEFAULT_TOLERANCE};
pub use param::{ParamId, ParamStore, ParameterTensor};
pub use tape::{Gradients, NodeRef, Tape};
