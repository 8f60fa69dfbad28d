//! Similarity and the contrastive objectives, in two forms: plain evaluation
//! on vectors (used by tests and frozen scoring) and tape construction (used
//! by training).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tape::log_sum_exp;
use crate::nn::{EncodeInput, EncoderSet, NodeRef, ParamStore, Tape, Tower};

/// Default contrastive temperature.
pub const DEFAULT_TAU: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Image2Text,
    Query2Text,
    Query2Image,
    Query2Item,
    Joint,
}

impl TaskKind {
    pub const SINGLE_TASKS: [TaskKind; 4] =
        [TaskKind::Image2Text, TaskKind::Query2Text, TaskKind::Query2Image, TaskKind::Query2Item];

    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Image2Text => "image2text",
            TaskKind::Query2Text => "query2text",
            TaskKind::Query2Image => "query2image",
            TaskKind::Query2Item => "query2item",
            TaskKind::Joint => "joint",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "image2text" => Ok(TaskKind::Image2Text),
            "query2text" => Ok(TaskKind::Query2Text),
            "query2image" => Ok(TaskKind::Query2Image),
            "query2item" => Ok(TaskKind::Query2Item),
            "joint" => Ok(TaskKind::Joint),
            other => Err(Error::config("task", format!("unknown task kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One anchor with its positive and negatives.
#[derive(Debug, Clone)]
pub struct ContrastiveBatch {
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
    pub tau: f64,
}

impl ContrastiveBatch {
    fn validate(&self) -> Result<()> {
        if self.tau <= 0.0 {
            return Err(Error::Train("temperature must be positive".into()));
        }
        if self.negatives.is_empty() {
            return Err(Error::Train("contrastive batch needs at least one negative".into()));
        }
        let d = self.anchor.len();
        if self.positive.len() != d || self.negatives.iter().any(|n| n.len() != d) {
            return Err(Error::Train("contrastive batch dims differ".into()));
        }
        Ok(())
    }
}

/// Cosine similarity; either norm below 1e-12 yields 0 by convention.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < 1e-12 || nb < 1e-12 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// InfoNCE on raw similarity scores.
pub fn info_nce_scores(s_pos: f64, s_negs: &[f64], tau: f64) -> Result<f64> {
    if tau <= 0.0 {
        return Err(Error::Train("temperature must be positive".into()));
    }
    let mut logits = Vec::with_capacity(s_negs.len() + 1);
    logits.push(s_pos / tau);
    logits.extend(s_negs.iter().map(|s| s / tau));
    Ok(log_sum_exp(&logits) - s_pos / tau)
}

/// InfoNCE over cosine similarities of a [`ContrastiveBatch`].
pub fn info_nce(batch: &ContrastiveBatch) -> Result<f64> {
    batch.validate()?;
    let s_pos = cosine_similarity(&batch.anchor, &batch.positive);
    let s_negs: Vec<f64> =
        batch.negatives.iter().map(|n| cosine_similarity(&batch.anchor, n)).collect();
    info_nce_scores(s_pos, &s_negs, batch.tau)
}

/// Tape counterpart of [`info_nce`] over node-valued vectors.
pub fn build_info_nce(
    tape: &mut Tape,
    anchor: NodeRef,
    positive: NodeRef,
    negatives: &[NodeRef],
    tau: f64,
) -> Result<NodeRef> {
    if tau <= 0.0 {
        return Err(Error::Train("temperature must be positive".into()));
    }
    if negatives.is_empty() {
        return Err(Error::Train("contrastive batch needs at least one negative".into()));
    }
    let s_pos = tape.cosine_sim(anchor, positive);
    let s_pos_t = tape.scale(s_pos, 1.0 / tau);
    let mut logits = vec![s_pos_t];
    for n in negatives {
        let s = tape.cosine_sim(anchor, *n);
        logits.push(tape.scale(s, 1.0 / tau));
    }
    let lse = tape.log_sum_exp(logits);
    Ok(tape.sub(lse, s_pos_t))
}

/// One minibatch example: a query and its clicked item's views.
#[derive(Debug, Clone, Copy)]
pub struct BatchExample<'a> {
    pub query_tokens: &'a [u32],
    pub item_text: &'a [u32],
    pub item_image: &'a [f64],
}

/// Builds the minibatch-mean loss for a task; negatives are the other items
/// in the batch. `Joint` is the exact sum of the four single-task losses.
pub fn build_task_loss(
    tape: &mut Tape,
    store: &ParamStore,
    enc: &EncoderSet,
    kind: TaskKind,
    batch: &[BatchExample<'_>],
    tau: f64,
) -> Result<NodeRef> {
    let parts = build_task_parts(tape, store, enc, kind, batch, tau)?;
    let nodes: Vec<NodeRef> = parts.into_iter().map(|(_, n)| n).collect();
    Ok(if nodes.len() == 1 { nodes[0] } else { tape.sum_list(nodes) })
}

/// Like [`build_task_loss`] but returns each contributing single-task loss
/// node, so a joint stage can log its decomposition without recomputation.
pub fn build_task_parts(
    tape: &mut Tape,
    store: &ParamStore,
    enc: &EncoderSet,
    kind: TaskKind,
    batch: &[BatchExample<'_>],
    tau: f64,
) -> Result<Vec<(TaskKind, NodeRef)>> {
    if batch.len() < 2 {
        return Err(Error::Train("task loss needs a batch of at least two examples".into()));
    }
    let needs = |k: TaskKind| kind == k || kind == TaskKind::Joint;

    let need_query = needs(TaskKind::Query2Text)
        || needs(TaskKind::Query2Image)
        || needs(TaskKind::Query2Item);
    let need_text =
        needs(TaskKind::Image2Text) || needs(TaskKind::Query2Text) || needs(TaskKind::Query2Item);
    let need_image =
        needs(TaskKind::Image2Text) || needs(TaskKind::Query2Image) || needs(TaskKind::Query2Item);

    let mut h_query = Vec::new();
    let mut h_text = Vec::new();
    let mut h_image = Vec::new();
    for ex in batch {
        if need_query {
            h_query.push(enc.encode(tape, store, EncodeInput::Query(ex.query_tokens))?);
        }
        if need_text {
            h_text.push(enc.encode(tape, store, EncodeInput::ItemText(ex.item_text))?);
        }
        if need_image {
            h_image.push(enc.encode(tape, store, EncodeInput::ItemImage(ex.item_image))?);
        }
    }

    let mut proj_q = Vec::new();
    let mut proj_i = Vec::new();
    if needs(TaskKind::Query2Item) {
        for i in 0..batch.len() {
            proj_q.push(enc.project(tape, store, Tower::Query, h_query[i])?);
            let fused = tape.add(h_text[i], h_image[i]);
            proj_i.push(enc.project(tape, store, Tower::Item, fused)?);
        }
    }

    let contrastive_mean = |tape: &mut Tape, anchors: &[NodeRef], pos: &[NodeRef]| -> Result<NodeRef> {
        let mut losses = Vec::with_capacity(anchors.len());
        for i in 0..anchors.len() {
            let negatives: Vec<NodeRef> =
                (0..pos.len()).filter(|j| *j != i).map(|j| pos[j]).collect();
            losses.push(build_info_nce(tape, anchors[i], pos[i], &negatives, tau)?);
        }
        Ok(tape.mean_list(losses))
    };

    let mut parts = Vec::new();
    if needs(TaskKind::Image2Text) {
        parts.push((TaskKind::Image2Text, contrastive_mean(tape, &h_image, &h_text)?));
    }
    if needs(TaskKind::Query2Text) {
        parts.push((TaskKind::Query2Text, contrastive_mean(tape, &h_query, &h_text)?));
    }
    if needs(TaskKind::Query2Image) {
        parts.push((TaskKind::Query2Image, contrastive_mean(tape, &h_query, &h_image)?));
    }
    if needs(TaskKind::Query2Item) {
        parts.push((TaskKind::Query2Item, contrastive_mean(tape, &proj_q, &proj_i)?));
    }
    Ok(parts)
}

/// Per-task loss values of a joint batch, evaluated structurally identically
/// to [`build_task_loss`] so that the joint decomposition can be logged.
pub fn task_loss_values(
    store: &ParamStore,
    enc: &EncoderSet,
    batch: &[BatchExample<'_>],
    tau: f64,
) -> Result<Vec<(TaskKind, f64)>> {
    let mut out = Vec::new();
    for kind in TaskKind::SINGLE_TASKS {
        let mut tape = Tape::new();
        let loss = build_task_loss(&mut tape, store, enc, kind, batch, tau)?;
        out.push((kind, tape.scalar(loss)));
    }
    Ok(out)
}
