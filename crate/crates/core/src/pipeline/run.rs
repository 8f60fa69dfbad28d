//! Stage orchestration: generate, pretrain, quantize, adapt, index, evaluate,
//! ablate. Stages persist their artifacts and are skipped when a cached
//! artifact matches the config-slice hash.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    generate_corpus, generate_query_log, load_jsonl, save_jsonl, split_eval, CorpusConfig,
    ItemRecord, QueryRecord,
};
use crate::error::{Error, Result};
use crate::eval::embedder::ItemEmbedder;
use crate::eval::{
    build_index, build_report, evaluate_queries, EvalReport, FusedEmbedder, GeoPartitionedIndex,
    SearchMode, SeedMetrics, SidEmbedder,
};
use crate::nn::{Checkpoint, CheckpointTensor, EncoderSet, ParamStore};
use crate::pipeline::artifacts::{config_hash, is_fresh, Artifact, ArtifactStore};
use crate::pipeline::config::{canonical_json, EvalMode, EvalTarget, ExperimentConfig};
use crate::pipeline::report_io::write_report_files;
use crate::rng::{stream, stream_n};
use crate::rqvae::{
    encode_sids, train_rqvae, Codebook, CodebookDims, Modality, SidTriple, SidTuple,
};
use crate::sid::adapt::{run_adaptation, AdaptationVariant};
use crate::sid::causal::{CausalModelConfig, CausalSequenceModel};
use crate::sid::vocab::Vocabulary;
use crate::trainer::{
    ablate_random_image, diagnose_correlation, make_schedule, run_training, ScheduleName,
    TrainLog,
};

pub struct Pipeline {
    pub config: ExperimentConfig,
    pub artifacts: ArtifactStore,
}

#[derive(Serialize)]
struct PretrainSlice<'a> {
    corpus: &'a CorpusConfig,
    pretrain: &'a crate::trainer::PretrainConfig,
    schedule: ScheduleName,
    train_fraction: f64,
    seed: u64,
}

#[derive(Serialize)]
struct QuantizeSlice<'a> {
    pretrain: PretrainSlice<'a>,
    rqvae: &'a crate::rqvae::RqVaeTrainConfig,
}

#[derive(Serialize)]
struct AdaptSlice<'a> {
    quantize: QuantizeSlice<'a>,
    adapt: &'a crate::sid::adapt::AdaptationConfig,
    adaptation: AdaptationVariant,
    sid_subset: crate::sid::vocab::SidSubset,
}

#[derive(Serialize)]
struct IndexSlice<'a> {
    upstream: String,
    label: &'a str,
    coarse_clusters: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct CodebookPayload {
    modality: Modality,
    dims: CodebookDims,
    beta: f64,
    gamma: f64,
    tensors: Vec<CheckpointTensor>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SidRecord {
    item_id: u32,
    sids: SidTriple,
}

/// A loaded or freshly adapted model for the SID evaluation path.
pub struct AdaptedArtifacts {
    pub enc: EncoderSet,
    pub model: CausalSequenceModel,
    pub store: ParamStore,
    pub vocab: Vocabulary,
}

impl Pipeline {
    pub fn new(config: ExperimentConfig, out_dir: impl Into<std::path::PathBuf>) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, artifacts: ArtifactStore::new(out_dir)? })
    }

    fn corpus_hash(&self) -> Result<String> {
        config_hash(&self.config.corpus)
    }

    fn pretrain_slice(&self, seed: u64) -> PretrainSlice<'_> {
        PretrainSlice {
            corpus: &self.config.corpus,
            pretrain: &self.config.pretrain,
            schedule: self.config.schedule,
            train_fraction: self.config.train_fraction,
            seed,
        }
    }

    fn quantize_slice(&self, seed: u64) -> QuantizeSlice<'_> {
        QuantizeSlice { pretrain: self.pretrain_slice(seed), rqvae: &self.config.rqvae }
    }

    fn adapt_slice(&self, seed: u64) -> AdaptSlice<'_> {
        AdaptSlice {
            quantize: self.quantize_slice(seed),
            adapt: &self.config.adapt,
            adaptation: self.config.adaptation,
            sid_subset: self.config.sid_subset,
        }
    }

    /// Stage: gen-data. Emits items and queries as JSONL plus the manifest.
    pub fn ensure_corpus(&self) -> Result<(Vec<ItemRecord>, Vec<QueryRecord>)> {
        let hash = self.corpus_hash()?;
        let manifest = self.artifacts.manifest();
        if is_fresh::<CorpusConfig>(&manifest, &hash)
            && self.artifacts.corpus_items().exists()
            && self.artifacts.corpus_queries().exists()
        {
            let items = load_jsonl(&self.artifacts.corpus_items())?;
            let queries = load_jsonl(&self.artifacts.corpus_queries())?;
            return Ok((items, queries));
        }
        let (space, items) = generate_corpus(&self.config.corpus)?;
        let queries = generate_query_log(
            &space,
            &items,
            self.config.corpus.n_queries,
            self.config.corpus.rho_image_critical,
            self.config.corpus.seed,
        )?;
        save_jsonl(&self.artifacts.corpus_items(), &items)?;
        save_jsonl(&self.artifacts.corpus_queries(), &queries)?;
        Artifact::new(&hash, self.config.corpus.seed, self.config.corpus.clone())
            .save(&manifest)?;
        Ok((items, queries))
    }

    /// Train/eval split; fixed by the corpus seed so every run seed sees the
    /// same eval set.
    pub fn splits(
        &self,
        queries: &[QueryRecord],
    ) -> Result<(Vec<QueryRecord>, Vec<QueryRecord>)> {
        split_eval(queries, self.config.train_fraction, self.config.corpus.seed)
    }

    /// Stage: pretrain. Returns encoders loaded from cache or freshly trained.
    pub fn ensure_pretrain(&self, seed: u64) -> Result<(EncoderSet, ParamStore)> {
        let hash = config_hash(&self.pretrain_slice(seed))?;
        let label = format!("pretrain_{}", self.config.schedule.name());
        let path = self.artifacts.checkpoint(&label, seed);
        let enc_config = self.config.encoder_config();
        if let Some(ckpt) = try_load_checkpoint(&path, &hash)? {
            let mut store = ParamStore::new();
            let enc = EncoderSet::init(enc_config, &mut store, &mut stream(seed, "init"));
            ckpt.load_into(&mut store).map_err(|e| {
                Error::Artifact(format!("checkpoint {} failed validation: {e}", path.display()))
            })?;
            return Ok((enc, store));
        }
        let (items, queries) = self.ensure_corpus()?;
        let (train, _) = self.splits(&queries)?;
        let schedule = make_schedule(self.config.schedule, &self.config.pretrain);
        let (enc, store, log) =
            run_training(&schedule, enc_config, &items, &train, &self.config.pretrain, seed)?;
        save_checkpoint(&path, &store, &hash, seed)?;
        self.write_train_log(&log, &schedule.name, seed)?;
        Ok((enc, store))
    }

    fn write_train_log(&self, log: &TrainLog, label: &str, seed: u64) -> Result<()> {
        let mut buf = Vec::new();
        log.write_csv(&mut buf)?;
        std::fs::write(self.artifacts.train_log(label, seed), buf)?;
        if self.config.schedule == ScheduleName::Joint {
            let report = diagnose_correlation(log)?;
            std::fs::write(
                self.artifacts.correlation(label, seed),
                canonical_json(&report)?,
            )?;
        }
        Ok(())
    }

    fn codebook_dims(&self, modality: Modality) -> CodebookDims {
        let enc_config = self.config.encoder_config();
        let d_in = match modality {
            Modality::Text | Modality::Image => enc_config.d_model,
            Modality::Item => enc_config.d_proj,
        };
        CodebookDims::desk_scale(modality, d_in, self.config.rqvae.layers, self.config.rqvae.entries)
    }

    /// Modal embeddings of every item under a frozen encoder set.
    pub fn modality_embeddings(
        &self,
        enc: &EncoderSet,
        store: &ParamStore,
        items: &[ItemRecord],
        modality: Modality,
    ) -> Result<Vec<Vec<f64>>> {
        use crate::nn::{EncodeInput, Tower};
        items
            .iter()
            .map(|item| match modality {
                Modality::Text => enc.encode_plain(store, EncodeInput::ItemText(&item.text_tokens)),
                Modality::Image => {
                    enc.encode_plain(store, EncodeInput::ItemImage(&item.image_features))
                }
                Modality::Item => {
                    let fused = enc.encode_item_fused_plain(
                        store,
                        &item.text_tokens,
                        &item.image_features,
                    )?;
                    enc.project_plain(store, Tower::Item, &fused)
                }
            })
            .collect()
    }

    /// Stage: quantize. Trains the three codebooks on frozen embeddings and
    /// writes the per-item SID table.
    pub fn ensure_quantize(&self, seed: u64) -> Result<BTreeMap<u32, SidTriple>> {
        let hash = config_hash(&self.quantize_slice(seed))?;
        let table_path = self.artifacts.sid_table(seed);
        if is_fresh::<Vec<SidRecord>>(&table_path, &hash) {
            let artifact = Artifact::<Vec<SidRecord>>::load(&table_path, &hash)?;
            return Ok(artifact.payload.into_iter().map(|r| (r.item_id, r.sids)).collect());
        }
        let (items, _) = self.ensure_corpus()?;
        let (enc, store) = self.ensure_pretrain(seed)?;

        let mut tuples: BTreeMap<u32, Vec<SidTuple>> = BTreeMap::new();
        for modality in Modality::ALL {
            let embeddings = self.modality_embeddings(&enc, &store, &items, modality)?;
            let dims = self.codebook_dims(modality);
            let (codebook, cb_store, _curve) =
                train_rqvae(modality, dims, &self.config.rqvae, &embeddings, seed)?;
            for (item, h) in items.iter().zip(&embeddings) {
                let (sid, _) = encode_sids(&codebook, &cb_store, h)?;
                tuples.entry(item.item_id).or_default().push(sid);
            }
            save_codebook(
                &self.artifacts.codebook(modality.name(), seed),
                &codebook,
                &cb_store,
                &hash,
                seed,
            )?;
        }
        let mut table = BTreeMap::new();
        let mut records = Vec::new();
        for (item_id, mut sids) in tuples {
            let item = sids.pop().unwrap();
            let image = sids.pop().unwrap();
            let text = sids.pop().unwrap();
            let triple = SidTriple::new(text, image, item)?;
            records.push(SidRecord { item_id, sids: triple.clone() });
            table.insert(item_id, triple);
        }
        Artifact::new(&hash, seed, records).save(&table_path)?;
        Ok(table)
    }

    /// Loads a persisted codebook back into a usable model.
    pub fn load_codebook(&self, modality: Modality, seed: u64) -> Result<(Codebook, ParamStore)> {
        let hash = config_hash(&self.quantize_slice(seed))?;
        let artifact = Artifact::<CodebookPayload>::load(
            &self.artifacts.codebook(modality.name(), seed),
            &hash,
        )?;
        let p = artifact.payload;
        let mut store = ParamStore::new();
        let codebook = Codebook::init(
            p.modality,
            p.dims,
            p.beta,
            p.gamma,
            &mut store,
            &mut stream(seed, "codebook-layout"),
        );
        Checkpoint {
            version: crate::nn::encoders::CHECKPOINT_VERSION,
            config_hash: artifact.config_hash,
            seed: artifact.seed,
            tensors: p.tensors,
        }
        .load_into(&mut store)?;
        Ok((codebook, store))
    }

    /// Stage: adapt. Expands the vocabulary and runs the adaptation phases.
    pub fn ensure_adapt(&self, seed: u64) -> Result<AdaptedArtifacts> {
        let hash = config_hash(&self.adapt_slice(seed))?;
        let label = format!("adapted_{}_{}", self.config.sid_subset, self.config.adaptation);
        let path = self.artifacts.checkpoint(&label, seed);

        let base_vocab = Vocabulary::base(self.config.corpus.vocab_base_size());
        let vocab = base_vocab.expand_vocab(self.config.rqvae.entries, self.config.rqvae.layers)?;
        let mut enc_config = self.config.encoder_config();
        enc_config.vocab_size = vocab.total_size();

        if let Some(ckpt) = try_load_checkpoint(&path, &hash)? {
            let mut store = ParamStore::new();
            let mut rng = stream(seed, "layout");
            let enc = EncoderSet::init(enc_config, &mut store, &mut rng);
            let mut model_config = CausalModelConfig::desk_scale(vocab.total_size());
            model_config.d_model = enc.config.d_tok;
            let model = CausalSequenceModel::init_with_table(
                model_config,
                enc.token_table,
                &mut store,
                &mut rng,
            );
            ckpt.load_into(&mut store).map_err(|e| {
                Error::Artifact(format!("checkpoint {} failed validation: {e}", path.display()))
            })?;
            return Ok(AdaptedArtifacts { enc, model, store, vocab });
        }

        let (items, queries) = self.ensure_corpus()?;
        let (train, _) = self.splits(&queries)?;
        let sid_table = self.ensure_quantize(seed)?;
        let (enc, store) = self.ensure_pretrain(seed)?;
        let adapted = run_adaptation(
            &enc,
            &store,
            &base_vocab,
            self.config.rqvae.entries,
            self.config.rqvae.layers,
            &sid_table,
            &items,
            &train,
            self.config.adaptation,
            self.config.sid_subset,
            &self.config.adapt,
            seed,
        )?;
        save_checkpoint(&path, &adapted.store, &hash, seed)?;
        std::fs::write(self.artifacts.vocab_table(), canonical_json(&adapted.vocab.table())?)?;
        Ok(AdaptedArtifacts {
            enc: adapted.enc,
            model: adapted.model,
            store: adapted.store,
            vocab: adapted.vocab,
        })
    }

    /// Stage: index. Builds (or reloads) the partitioned index for a labeled
    /// embedder.
    pub fn ensure_index(
        &self,
        label: &str,
        seed: u64,
        upstream_hash: &str,
        items: &[ItemRecord],
        embedder: &dyn ItemEmbedder,
    ) -> Result<GeoPartitionedIndex> {
        let hash = config_hash(&IndexSlice {
            upstream: upstream_hash.to_string(),
            label,
            coarse_clusters: self.config.coarse_clusters,
        })?;
        let path = self.artifacts.index(label, seed);
        if let Some(index) = try_load_index(&path, &hash)? {
            return Ok(index);
        }
        let index = build_index(items, embedder, Some(self.config.coarse_clusters), &hash, seed)?;
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, canonical_json(&index)?)?;
        Ok(index)
    }

    fn search_probes(&self) -> usize {
        match self.config.search_mode {
            SearchMode::Exact => 0,
            SearchMode::Approx => self.config.n_probe,
        }
    }

    /// Stage: index, without evaluation. Builds (or reloads) the index for
    /// the configured eval target.
    pub fn build_index_stage(&self, seed: u64) -> Result<GeoPartitionedIndex> {
        let (items, _) = self.ensure_corpus()?;
        match self.config.eval_target {
            EvalTarget::Pretrained => {
                let hash = config_hash(&self.pretrain_slice(seed))?;
                let (enc, store) = self.ensure_pretrain(seed)?;
                let embedder = FusedEmbedder { enc: &enc, store: &store };
                let label = format!("pretrained_{}", self.config.schedule.name());
                self.ensure_index(&label, seed, &hash, &items, &embedder)
            }
            EvalTarget::Adapted => {
                let hash = config_hash(&self.adapt_slice(seed))?;
                let sid_table = self.ensure_quantize(seed)?;
                let adapted = self.ensure_adapt(seed)?;
                let embedder = SidEmbedder {
                    enc: &adapted.enc,
                    store: &adapted.store,
                    vocab: &adapted.vocab,
                    sid_table: &sid_table,
                    subset: self.config.sid_subset,
                };
                let label =
                    format!("adapted_{}_{}", self.config.sid_subset, self.config.adaptation);
                self.ensure_index(&label, seed, &hash, &items, &embedder)
            }
        }
    }

    /// One repetition: train (or load) everything for `seed` and measure the
    /// eval split.
    pub fn eval_seed(
        &self,
        seed: u64,
        items: &[ItemRecord],
        eval_queries: &[QueryRecord],
    ) -> Result<SeedMetrics> {
        match self.config.eval_target {
            EvalTarget::Pretrained => {
                let hash = config_hash(&self.pretrain_slice(seed))?;
                let (enc, store) = self.ensure_pretrain(seed)?;
                let embedder = FusedEmbedder { enc: &enc, store: &store };
                let label = format!("pretrained_{}", self.config.schedule.name());
                let index = self.ensure_index(&label, seed, &hash, items, &embedder)?;
                evaluate_queries(
                    &index,
                    &embedder,
                    eval_queries,
                    self.config.search_mode,
                    self.search_probes(),
                )
            }
            EvalTarget::Adapted => {
                let hash = config_hash(&self.adapt_slice(seed))?;
                let sid_table = self.ensure_quantize(seed)?;
                let adapted = self.ensure_adapt(seed)?;
                let embedder = SidEmbedder {
                    enc: &adapted.enc,
                    store: &adapted.store,
                    vocab: &adapted.vocab,
                    sid_table: &sid_table,
                    subset: self.config.sid_subset,
                };
                let label = format!(
                    "adapted_{}_{}",
                    self.config.sid_subset, self.config.adaptation
                );
                let index = self.ensure_index(&label, seed, &hash, items, &embedder)?;
                evaluate_queries(
                    &index,
                    &embedder,
                    eval_queries,
                    self.config.search_mode,
                    self.search_probes(),
                )
            }
        }
    }

    /// Stage: eval. Repetitions per config (retrain or bootstrap-resample),
    /// aggregated into a persisted report.
    pub fn run_eval(&self) -> Result<EvalReport> {
        let variant = self.config.variant_label();
        let hash = config_hash(&self.config)?;
        let report_path = self.artifacts.report(&variant);
        if is_fresh::<EvalReport>(&report_path, &hash) {
            let artifact = Artifact::<EvalReport>::load(&report_path, &hash)?;
            self.refresh_combined()?;
            return Ok(artifact.payload);
        }
        let (items, queries) = self.ensure_corpus()?;
        let (_, eval_queries) = self.splits(&queries)?;
        let per_seed: Vec<SeedMetrics> = match self.config.eval_mode {
            EvalMode::Retrain => self
                .config
                .seeds
                .iter()
                .map(|seed| self.eval_seed(*seed, &items, &eval_queries))
                .collect::<Result<_>>()?,
            EvalMode::Resample => {
                let base_seed = self.config.seeds[0];
                let mut out = Vec::new();
                for rep in &self.config.seeds {
                    let resampled = bootstrap_queries(&eval_queries, *rep);
                    out.push(self.eval_seed(base_seed, &items, &resampled)?);
                }
                out
            }
        };
        let report = build_report(&variant, &self.config.seeds, &per_seed, None)?;
        Artifact::new(&hash, self.config.seeds[0], report.clone()).save(&report_path)?;
        write_report_files(&self.artifacts.report_csv(&variant), &[report.clone()])?;
        self.refresh_combined()?;
        Ok(report)
    }

    /// Fig. 1(b)-style ablation: paired trained vs random-image reports plus
    /// per-seed R@10 gaps.
    pub fn run_ablation(&self) -> Result<AblationOutcome> {
        let (items, queries) = self.ensure_corpus()?;
        let (_, eval_queries) = self.splits(&queries)?;
        let mut trained = Vec::new();
        let mut ablated = Vec::new();
        for seed in &self.config.seeds {
            let hash = config_hash(&self.pretrain_slice(*seed))?;
            let (enc, store) = self.ensure_pretrain(*seed)?;
            let embedder = FusedEmbedder { enc: &enc, store: &store };
            let label = format!("pretrained_{}", self.config.schedule.name());
            let index = self.ensure_index(&label, *seed, &hash, &items, &embedder)?;
            trained.push(evaluate_queries(
                &index,
                &embedder,
                &eval_queries,
                self.config.search_mode,
                self.search_probes(),
            )?);

            let random = ablate_random_image(&enc, &store, &items, *seed)?;
            let rand_label = format!("random-image_{}", self.config.schedule.name());
            let rand_index = self.ensure_index(&rand_label, *seed, &hash, &items, &random)?;
            ablated.push(evaluate_queries(
                &rand_index,
                &random,
                &eval_queries,
                self.config.search_mode,
                self.search_probes(),
            )?);
        }
        let schedule = self.config.schedule.name();
        let trained_report = build_report(schedule, &self.config.seeds, &trained, None)?;
        let ablated_report = build_report(
            &format!("Random({schedule})"),
            &self.config.seeds,
            &ablated,
            Some(&trained_report),
        )?;
        let gaps: Vec<SeedGap> = self
            .config
            .seeds
            .iter()
            .zip(trained.iter().zip(&ablated))
            .map(|(seed, (t, a))| SeedGap {
                seed: *seed,
                trained_r10: t.recall[&10],
                ablated_r10: a.recall[&10],
                gap: (t.recall[&10] - a.recall[&10]).abs(),
            })
            .collect();
        let outcome = AblationOutcome {
            schedule: schedule.to_string(),
            trained: trained_report,
            ablated: ablated_report,
            gaps,
        };
        let hash = config_hash(&self.config)?;
        Artifact::new(&hash, self.config.seeds[0], outcome.clone())
            .save(&self.artifacts.root.join("reports/ablation.json"))?;
        write_report_files(
            &self.artifacts.report_csv(&format!("ablation_{schedule}")),
            &[outcome.trained.clone(), outcome.ablated.clone()],
        )?;
        Ok(outcome)
    }

    /// Regenerates the combined table from every persisted report, in
    /// filename order.
    pub fn refresh_combined(&self) -> Result<()> {
        let dir = self.artifacts.root.join("reports");
        let mut paths: Vec<_> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .map(|n| n.starts_with("report_") && n.ends_with(".json"))
                    .unwrap_or(false)
            })
            .collect();
        paths.sort();
        let mut reports = Vec::new();
        for p in paths {
            let text = std::fs::read_to_string(&p)?;
            if let Ok(artifact) = serde_json::from_str::<Artifact<EvalReport>>(&text) {
                reports.push(artifact.payload);
            }
        }
        if reports.is_empty() {
            return Ok(());
        }
        write_report_files(&self.artifacts.combined_csv(), &reports)?;
        std::fs::write(self.artifacts.combined_json(), canonical_json(&reports)?)?;
        Ok(())
    }

    /// Stage: all. Runs every stage for the configured variant, including the
    /// ablation pair when enabled.
    pub fn run_all(&self) -> Result<Vec<EvalReport>> {
        self.ensure_corpus()?;
        for seed in &self.config.seeds {
            self.ensure_pretrain(*seed)?;
            if self.config.eval_target == EvalTarget::Adapted {
                self.ensure_quantize(*seed)?;
                self.ensure_adapt(*seed)?;
            }
        }
        let mut reports = vec![self.run_eval()?];
        if self.config.random_image_ablation {
            let outcome = self.run_ablation()?;
            reports.push(outcome.trained);
            reports.push(outcome.ablated);
        }
        Ok(reports)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedGap {
    pub seed: u64,
    pub trained_r10: f64,
    pub ablated_r10: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationOutcome {
    pub schedule: String,
    pub trained: EvalReport,
    pub ablated: EvalReport,
    pub gaps: Vec<SeedGap>,
}

/// Bootstrap resample (with replacement) of the eval set.
fn bootstrap_queries(queries: &[QueryRecord], rep_seed: u64) -> Vec<QueryRecord> {
    use rand::Rng;
    let mut rng = stream_n(rep_seed, "bootstrap", 0);
    (0..queries.len()).map(|_| queries[rng.gen_range(0..queries.len())].clone()).collect()
}

pub fn save_checkpoint(
    path: &std::path::Path,
    store: &ParamStore,
    hash: &str,
    seed: u64,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let ckpt = Checkpoint::from_store(store, hash, seed);
    std::fs::write(path, canonical_json(&ckpt)?)?;
    Ok(())
}

/// Loads a checkpoint if present and produced by the expected config.
/// `Ok(None)` means absent or stale (regenerate); errors mean the file is
/// corrupt or from an unsupported version (verification failure).
pub fn try_load_checkpoint(path: &std::path::Path, expected_hash: &str) -> Result<Option<Checkpoint>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Artifact(format!("cannot read {}: {e}", path.display())))?;
    let ckpt: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| Error::Artifact(format!("corrupt checkpoint {}: {e}", path.display())))?;
    if ckpt.version != crate::nn::encoders::CHECKPOINT_VERSION {
        return Err(Error::Artifact(format!(
            "checkpoint {} has unsupported version {}",
            path.display(),
            ckpt.version
        )));
    }
    if ckpt.config_hash != expected_hash {
        return Ok(None);
    }
    Ok(Some(ckpt))
}

fn save_codebook(
    path: &std::path::Path,
    codebook: &Codebook,
    store: &ParamStore,
    hash: &str,
    seed: u64,
) -> Result<()> {
    let ckpt = Checkpoint::from_store(store, hash, seed);
    let payload = CodebookPayload {
        modality: codebook.modality,
        dims: codebook.dims.clone(),
        beta: codebook.beta,
        gamma: codebook.gamma,
        tensors: ckpt.tensors,
    };
    Artifact::new(hash, seed, payload).save(path)
}

fn try_load_index(
    path: &std::path::Path,
    expected_hash: &str,
) -> Result<Option<GeoPartitionedIndex>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Artifact(format!("cannot read {}: {e}", path.display())))?;
    let index: GeoPartitionedIndex = serde_json::from_str(&text)
        .map_err(|e| Error::Artifact(format!("corrupt index {}: {e}", path.display())))?;
    if index.config_hash != expected_hash {
        return Ok(None);
    }
    Ok(Some(index))
}

/// Convenience entry point: run the whole pipeline for a config.
pub fn run_pipeline(
    config: ExperimentConfig,
    out_dir: impl Into<std::path::PathBuf>,
) -> Result<Vec<EvalReport>> {
    Pipeline::new(config, out_dir)?.run_all()
}
