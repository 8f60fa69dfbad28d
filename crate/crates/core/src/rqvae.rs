//! Residual-quantized autoencoder: K-means-initialized multi-layer codebooks
//! over an encoder bottleneck, trained with reconstruction, codebook, and
//! commitment terms. Quantization indices become semantic IDs.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{FeedForwardStack, NodeRef, ParamId, ParamStore, Tape};
use crate::rng::stream;

pub const DEFAULT_LAYERS: usize = 3;
pub const DEFAULT_ENTRIES: usize = 32;
pub const DEFAULT_BETA: f64 = 0.25;
pub const DEFAULT_GAMMA: f64 = 0.25;
/// A codeword unused for this many consecutive steps is reseeded.
const DEAD_CODEWORD_AGE: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Image,
    Item,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Text, Modality::Image, Modality::Item];

    pub fn name(&self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Image => "image",
            Modality::Item => "item",
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-modality layer indices, one per codebook layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidTuple {
    pub modality: Modality,
    pub indices: Vec<usize>,
}

/// The full per-item identifier: one tuple per modality.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidTriple {
    pub text: SidTuple,
    pub image: SidTuple,
    pub item: SidTuple,
}

impl SidTriple {
    pub fn new(text: SidTuple, image: SidTuple, item: SidTuple) -> Result<Self> {
        if text.modality != Modality::Text
            || image.modality != Modality::Image
            || item.modality != Modality::Item
        {
            return Err(Error::Train("SidTriple modality tags are wrong".into()));
        }
        Ok(Self { text, image, item })
    }

    pub fn tuple(&self, modality: Modality) -> &SidTuple {
        match modality {
            Modality::Text => &self.text,
            Modality::Image => &self.image,
            Modality::Item => &self.item,
        }
    }
}

/// Network and codebook dimensions for one modality.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodebookDims {
    pub d_in: usize,
    pub hidden: Vec<usize>,
    pub d_code: usize,
    pub layers: usize,
    pub entries: usize,
}

impl CodebookDims {
    /// Desk-scale pyramids: wide modalities bottleneck at 32, the fused item
    /// embedding at 8.
    pub fn desk_scale(modality: Modality, d_in: usize, layers: usize, entries: usize) -> Self {
        match modality {
            Modality::Text | Modality::Image => {
                Self { d_in, hidden: vec![48], d_code: 32, layers, entries }
            }
            Modality::Item => Self { d_in, hidden: vec![12], d_code: 8, layers, entries },
        }
    }

    fn encoder_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.d_in];
        dims.extend_from_slice(&self.hidden);
        dims.push(self.d_code);
        dims
    }

    fn decoder_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.d_code];
        dims.extend(self.hidden.iter().rev());
        dims.push(self.d_in);
        dims
    }
}

#[derive(Debug, Clone)]
pub struct Codebook {
    pub modality: Modality,
    pub dims: CodebookDims,
    /// One K x d_code tensor per quantization layer.
    pub layers: Vec<ParamId>,
    pub encoder: FeedForwardStack,
    pub decoder: FeedForwardStack,
    pub beta: f64,
    pub gamma: f64,
}

impl Codebook {
    pub fn init(
        modality: Modality,
        dims: CodebookDims,
        beta: f64,
        gamma: f64,
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(store.is_empty(), "Codebook::init expects a fresh store");
        let encoder = FeedForwardStack::init("encoder", &dims.encoder_dims(), store, rng);
        let decoder = FeedForwardStack::init("decoder", &dims.decoder_dims(), store, rng);
        let layers = (0..dims.layers)
            .map(|l| store.zeros(&format!("layer{l}"), dims.entries, dims.d_code))
            .collect();
        Self { modality, dims, layers, encoder, decoder, beta, gamma }
    }

    pub fn all_params(&self) -> Vec<ParamId> {
        let mut ids = self.encoder.params();
        ids.extend(self.decoder.params());
        ids.extend(self.layers.iter().copied());
        ids
    }

    pub fn layer_codewords(&self, store: &ParamStore, layer: usize) -> Vec<Vec<f64>> {
        let t = store.get(self.layers[layer]);
        (0..t.rows).map(|r| t.values[r * t.cols..(r + 1) * t.cols].to_vec()).collect()
    }
}

/// Nearest codeword by Euclidean distance, ties broken by lowest index.
/// Returns (index, codeword, residual).
pub fn quantize_layer(codewords: &[Vec<f64>], r: &[f64]) -> (usize, Vec<f64>, Vec<f64>) {
    let idx = nearest_codeword_flat(
        &codewords.iter().flatten().copied().collect::<Vec<f64>>(),
        codewords.len(),
        r.len(),
        r,
    );
    let codeword = codewords[idx].clone();
    let residual = r.iter().zip(&codeword).map(|(a, b)| a - b).collect();
    (idx, codeword, residual)
}

fn nearest_codeword_flat(flat: &[f64], k: usize, d: usize, r: &[f64]) -> usize {
    debug_assert_eq!(r.len(), d);
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for c in 0..k {
        let row = &flat[c * d..(c + 1) * d];
        let mut dist = 0.0;
        for i in 0..d {
            let diff = r[i] - row[i];
            dist += diff * diff;
        }
        if dist < best_d {
            best_d = dist;
            best = c;
        }
    }
    best
}

/// Encoder output, per-layer indices, and the residual chain
/// `r[0] = z, r[l + 1] = r[l] - e[l]` (final entry is the leftover residual).
#[derive(Debug, Clone)]
pub struct QuantizationTrace {
    pub z: Vec<f64>,
    pub indices: Vec<usize>,
    pub residuals: Vec<Vec<f64>>,
}

pub fn quantize_trace(codebook: &Codebook, store: &ParamStore, h: &[f64]) -> Result<QuantizationTrace> {
    let z = codebook.encoder.apply(store, h)?;
    let d = codebook.dims.d_code;
    let k = codebook.dims.entries;
    let mut indices = Vec::with_capacity(codebook.dims.layers);
    let mut residuals = vec![z.clone()];
    let mut r = z.clone();
    for layer in &codebook.layers {
        let flat = &store.get(*layer).values;
        let idx = nearest_codeword_flat(flat, k, d, &r);
        let codeword = &flat[idx * d..(idx + 1) * d];
        r = r.iter().zip(codeword).map(|(a, b)| a - b).collect();
        indices.push(idx);
        residuals.push(r.clone());
    }
    Ok(QuantizationTrace { z, indices, residuals })
}

/// Encodes an embedding to its per-layer indices.
pub fn encode_sids(codebook: &Codebook, store: &ParamStore, h: &[f64]) -> Result<(SidTuple, Vec<f64>)> {
    let trace = quantize_trace(codebook, store, h)?;
    Ok((
        SidTuple { modality: codebook.modality, indices: trace.indices },
        trace.residuals.last().cloned().unwrap_or_default(),
    ))
}

/// Decodes a tuple back to input space: decoder of the codeword sum.
pub fn decode(codebook: &Codebook, store: &ParamStore, sid: &SidTuple) -> Result<Vec<f64>> {
    if sid.indices.len() != codebook.dims.layers {
        return Err(Error::Train(format!(
            "sid has {} layers, codebook has {}",
            sid.indices.len(),
            codebook.dims.layers
        )));
    }
    let d = codebook.dims.d_code;
    let mut sum = vec![0.0; d];
    for (layer, idx) in codebook.layers.iter().zip(&sid.indices) {
        let t = store.get(*layer);
        if *idx >= t.rows {
            return Err(Error::Train(format!("sid index {idx} out of range (K = {})", t.rows)));
        }
        for (acc, x) in sum.iter_mut().zip(&t.values[idx * d..(idx + 1) * d]) {
            *acc += x;
        }
    }
    codebook.decoder.apply(store, &sum)
}

/// Scalar parts of the loss for reporting.
#[derive(Debug, Clone, Copy)]
pub struct RqVaeLossParts {
    pub total: f64,
    pub recon: f64,
    pub codebook_term: f64,
    pub commitment_term: f64,
}

/// Builds the three-term loss on the tape.
///
/// Gradient routing: the reconstruction path crosses the quantizer via
/// straight-through (`z + detach(q - z)`), the codebook term moves only
/// codewords, and the commitment term moves only the encoder.
pub fn build_rqvae_loss(
    tape: &mut Tape,
    store: &ParamStore,
    codebook: &Codebook,
    h: &[f64],
) -> Result<(NodeRef, RqVaeLossParts)> {
    let h_node = tape.vector(h.to_vec());
    let x = tape.vector(h.to_vec());
    let z = codebook.encoder.forward(tape, store, x)?;
    let d = codebook.dims.d_code;
    let k = codebook.dims.entries;

    let mut r = z;
    let mut codeword_nodes = Vec::with_capacity(codebook.dims.layers);
    let mut cb_terms = Vec::new();
    let mut cm_terms = Vec::new();
    for layer in &codebook.layers {
        let idx = nearest_codeword_flat(&store.get(*layer).values, k, d, tape.value(r));
        let table = tape.param(store, *layer);
        let e = tape.gather_rows(table, vec![idx]);
        // codebook term: pulls the codeword toward the frozen residual
        let r_frozen = tape.detach(r);
        let cb_diff = tape.sub(r_frozen, e);
        cb_terms.push(tape.sum_sq(cb_diff));
        // commitment term: pulls the encoder toward the frozen codeword
        let e_frozen = tape.detach(e);
        let cm_diff = tape.sub(r, e_frozen);
        cm_terms.push(tape.sum_sq(cm_diff));
        codeword_nodes.push(e);
        r = tape.sub(r, e);
    }

    let q_sum = tape.sum_list(codeword_nodes);
    let gap = tape.sub(q_sum, z);
    let gap_frozen = tape.detach(gap);
    let z_tilde = tape.add(z, gap_frozen);
    let h_hat = codebook.decoder.forward(tape, store, z_tilde)?;
    let recon_diff = tape.sub(h_node, h_hat);
    let recon = tape.sum_sq(recon_diff);

    let cb = tape.sum_list(cb_terms);
    let cm = tape.sum_list(cm_terms);
    let cm_scaled = tape.scale(cm, codebook.gamma);
    let inner = tape.add(cb, cm_scaled);
    let inner_scaled = tape.scale(inner, codebook.beta);
    let total = tape.add(recon, inner_scaled);

    let parts = RqVaeLossParts {
        total: tape.scalar(total),
        recon: tape.scalar(recon),
        codebook_term: tape.scalar(cb),
        commitment_term: tape.scalar(cm),
    };
    Ok((total, parts))
}

/// Loss parts without building gradients.
pub fn rqvae_loss(codebook: &Codebook, store: &ParamStore, h: &[f64]) -> Result<RqVaeLossParts> {
    let mut tape = Tape::new();
    let (_, parts) = build_rqvae_loss(&mut tape, store, codebook, h)?;
    Ok(parts)
}

/// Mean squared reconstruction error over a set of embeddings.
pub fn mean_reconstruction_error(
    codebook: &Codebook,
    store: &ParamStore,
    embeddings: &[Vec<f64>],
) -> Result<f64> {
    let mut total = 0.0;
    for h in embeddings {
        let (sid, _) = encode_sids(codebook, store, h)?;
        let h_hat = decode(codebook, store, &sid)?;
        total += h.iter().zip(&h_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / embeddings.len() as f64)
}

/// Lloyd's algorithm with deterministic seeding; empty clusters are reseeded
/// to the point farthest from its assigned centroid.
pub fn kmeans_init(
    vectors: &[Vec<f64>],
    k: usize,
    iters: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    if vectors.len() < k {
        return Err(Error::Train(format!(
            "k-means needs at least {k} points, got {}",
            vectors.len()
        )));
    }
    let n = vectors.len();
    let d = vectors[0].len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut centroids: Vec<Vec<f64>> = order[..k].iter().map(|i| vectors[*i].clone()).collect();

    let mut assign = vec![0usize; n];
    for _ in 0..iters {
        for (i, v) in vectors.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let dist: f64 =
                    v.iter().zip(centroid).map(|(a, b)| (a - b) * (a - b)).sum();
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            assign[i] = best;
        }
        let mut counts = vec![0usize; k];
        for a in &assign {
            counts[*a] += 1;
        }
        // Reseed each empty cluster with the globally farthest point (from
        // its own centroid), never draining a singleton cluster.
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut far_i = None;
            let mut far_d = -1.0;
            for (i, v) in vectors.iter().enumerate() {
                if counts[assign[i]] <= 1 {
                    continue;
                }
                let dist: f64 = v
                    .iter()
                    .zip(&centroids[assign[i]])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if dist > far_d {
                    far_d = dist;
                    far_i = Some(i);
                }
            }
            if let Some(i) = far_i {
                counts[assign[i]] -= 1;
                assign[i] = c;
                counts[c] = 1;
            }
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            if counts[c] == 0 {
                continue;
            }
            centroid.iter_mut().for_each(|x| *x = 0.0);
            for (i, v) in vectors.iter().enumerate() {
                if assign[i] == c {
                    for (acc, x) in centroid.iter_mut().zip(v) {
                        *acc += x;
                    }
                }
            }
            let inv = 1.0 / counts[c] as f64;
            centroid.iter_mut().for_each(|x| *x *= inv);
        }
    }
    debug_assert!(centroids.iter().all(|c| c.len() == d));
    Ok(centroids)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RqVaeTrainConfig {
    pub layers: usize,
    pub entries: usize,
    pub beta: f64,
    pub gamma: f64,
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub kmeans_iters: usize,
    pub clip_norm: f64,
}

impl Default for RqVaeTrainConfig {
    fn default() -> Self {
        Self {
            layers: DEFAULT_LAYERS,
            entries: DEFAULT_ENTRIES,
            beta: DEFAULT_BETA,
            gamma: DEFAULT_GAMMA,
            steps: 2000,
            learning_rate: 0.02,
            batch_size: 32,
            kmeans_iters: 20,
            clip_norm: 5.0,
        }
    }
}

impl RqVaeTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::config("rqvae.layers", "must be positive"));
        }
        if self.entries == 0 {
            return Err(Error::config("rqvae.entries", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("rqvae.batch_size", "must be positive"));
        }
        if self.learning_rate < 0.0 {
            return Err(Error::config("rqvae.learning_rate", "must be non-negative"));
        }
        Ok(())
    }
}

/// K-means initialization on layer-wise residuals of the untrained encoder.
pub fn kmeans_init_codebook(
    codebook: &Codebook,
    store: &mut ParamStore,
    embeddings: &[Vec<f64>],
    iters: usize,
    seed: u64,
) -> Result<()> {
    let mut residuals: Vec<Vec<f64>> = embeddings
        .iter()
        .map(|h| codebook.encoder.apply(store, h))
        .collect::<Result<_>>()?;
    for (l, layer) in codebook.layers.iter().enumerate() {
        let mut rng = stream(seed, &format!("kmeans-{}-{l}", codebook.modality));
        let centroids = kmeans_init(&residuals, codebook.dims.entries, iters, &mut rng)?;
        let flat: Vec<f64> = centroids.iter().flatten().copied().collect();
        store.get_mut(*layer).values.copy_from_slice(&flat);
        for r in &mut residuals {
            let (_, _, next) = quantize_layer(&centroids, r);
            *r = next;
        }
    }
    Ok(())
}

/// K-means init followed by SGD on the three-term loss. Returns the trained
/// codebook (in `store`) and the per-step mean total loss.
pub fn train_rqvae(
    modality: Modality,
    dims: CodebookDims,
    config: &RqVaeTrainConfig,
    embeddings: &[Vec<f64>],
    seed: u64,
) -> Result<(Codebook, ParamStore, Vec<f64>)> {
    config.validate()?;
    if embeddings.is_empty() {
        return Err(Error::Train("no embeddings to quantize".into()));
    }
    let mut store = ParamStore::new();
    let mut init_rng = stream(seed, &format!("rqvae-init-{modality}"));
    let codebook = Codebook::init(modality, dims, config.beta, config.gamma, &mut store, &mut init_rng);
    kmeans_init_codebook(&codebook, &mut store, embeddings, config.kmeans_iters, seed)?;

    let params = codebook.all_params();
    let mut curve = Vec::with_capacity(config.steps);
    let mut ages = vec![vec![0usize; codebook.dims.entries]; codebook.dims.layers];
    let mut batch_rng = stream(seed, &format!("rqvae-batch-{modality}"));

    for step in 0..config.steps {
        let mut used = vec![vec![false; codebook.dims.entries]; codebook.dims.layers];
        let mut tape = Tape::new();
        let mut losses = Vec::with_capacity(config.batch_size);
        let mut batch_residuals: Vec<Vec<Vec<f64>>> = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            let h = &embeddings[batch_rng.gen_range(0..embeddings.len())];
            let trace = quantize_trace(&codebook, &store, h)?;
            for (l, idx) in trace.indices.iter().enumerate() {
                used[l][*idx] = true;
            }
            batch_residuals.push(trace.residuals);
            let (loss, _) = build_rqvae_loss(&mut tape, &store, &codebook, h)?;
            losses.push(loss);
        }
        let mean = tape.mean_list(losses);
        let loss_value = tape.scalar(mean);
        if !loss_value.is_finite() {
            return Err(Error::Train(format!("rq-vae loss diverged at step {step}")));
        }
        curve.push(loss_value);

        store.zero_grad();
        let grads = tape.backward(mean);
        tape.accumulate_grads(&grads, &mut store);
        store.sgd_step(&params, config.learning_rate, config.clip_norm);

        // Dead-codeword reseeding is a training-dynamics mechanism; a zero
        // learning rate means no training, so leave the init untouched.
        if config.learning_rate > 0.0 {
            for l in 0..codebook.dims.layers {
                for e in 0..codebook.dims.entries {
                    if used[l][e] {
                        ages[l][e] = 0;
                    } else {
                        ages[l][e] += 1;
                        if ages[l][e] >= DEAD_CODEWORD_AGE {
                            let pick = batch_rng.gen_range(0..batch_residuals.len());
                            let r = batch_residuals[pick][l].clone();
                            let d = codebook.dims.d_code;
                            let t = store.get_mut(codebook.layers[l]);
                            t.values[e * d..(e + 1) * d].copy_from_slice(&r);
                            ages[l][e] = 0;
                        }
                    }
                }
            }
        }
    }
    Ok((codebook, store, curve))
}

/// Per-layer codeword usage entropy (nats) over a set of embeddings.
pub fn usage_entropy(
    codebook: &Codebook,
    store: &ParamStore,
    embeddings: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let mut counts = vec![vec![0usize; codebook.dims.entries]; codebook.dims.layers];
    for h in embeddings {
        let (sid, _) = encode_sids(codebook, store, h)?;
        for (l, idx) in sid.indices.iter().enumerate() {
            counts[l][*idx] += 1;
        }
    }
    let n = embeddings.len() as f64;
    Ok(counts
        .iter()
        .map(|layer| {
            layer
                .iter()
                .filter(|c| **c > 0)
                .map(|c| {
                    let p = *c as f64 / n;
                    -p * p.ln()
                })
                .sum()
        })
        .collect())
}
