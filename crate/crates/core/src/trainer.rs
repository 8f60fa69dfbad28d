//! Staged and joint training schedules over the contrastive objectives, loss
//! trajectory logging, and the training diagnostics (loss correlation and the
//! random-image ablation).

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{ItemRecord, QueryRecord};
use crate::error::{Error, Result};
use crate::eval::embedder::{ItemEmbedder, QueryEmbedder};
use crate::eval::stats::pearson;
use crate::nn::{EncodeInput, EncoderConfig, EncoderSet, ParamId, ParamStore, Tower};
use crate::objectives::{build_task_parts, BatchExample, TaskKind};
use crate::rng::{stream, stream_n};

/// Fixed per-stage hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub steps_per_stage: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub tau: f64,
    pub clip_norm: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps_per_stage: 1500,
            learning_rate: 0.05,
            batch_size: 8,
            tau: crate::objectives::DEFAULT_TAU,
            clip_norm: 5.0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_stage == 0 {
            return Err(Error::config("pretrain.steps_per_stage", "must be positive"));
        }
        if self.batch_size < 2 {
            return Err(Error::config("pretrain.batch_size", "must be at least 2"));
        }
        if self.tau <= 0.0 {
            return Err(Error::config("pretrain.tau", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleName {
    Joint,
    Order1,
    Order2,
    Order3,
    Order4,
    Order5,
    Order6,
}

impl ScheduleName {
    pub const ALL_ORDERS: [ScheduleName; 6] = [
        ScheduleName::Order1,
        ScheduleName::Order2,
        ScheduleName::Order3,
        ScheduleName::Order4,
        ScheduleName::Order5,
        ScheduleName::Order6,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScheduleName::Joint => "Joint",
            ScheduleName::Order1 => "Order1",
            ScheduleName::Order2 => "Order2",
            ScheduleName::Order3 => "Order3",
            ScheduleName::Order4 => "Order4",
            ScheduleName::Order5 => "Order5",
            ScheduleName::Order6 => "Order6",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "Joint" => Ok(ScheduleName::Joint),
            "Order1" => Ok(ScheduleName::Order1),
            "Order2" => Ok(ScheduleName::Order2),
            "Order3" => Ok(ScheduleName::Order3),
            "Order4" => Ok(ScheduleName::Order4),
            "Order5" => Ok(ScheduleName::Order5),
            "Order6" => Ok(ScheduleName::Order6),
            other => Err(Error::config("schedule", format!("unknown schedule `{other}`"))),
        }
    }

    fn stage_tasks(&self) -> Vec<TaskKind> {
        use TaskKind::*;
        match self {
            ScheduleName::Joint => vec![Joint],
            ScheduleName::Order1 => vec![Query2Image, Image2Text, Query2Text, Query2Item],
            ScheduleName::Order2 => vec![Query2Image, Query2Text, Image2Text, Query2Item],
            ScheduleName::Order3 => vec![Query2Text, Query2Image, Image2Text, Query2Item],
            ScheduleName::Order4 => vec![Image2Text, Query2Image, Query2Text, Query2Item],
            ScheduleName::Order5 => vec![Image2Text, Query2Text, Query2Image, Query2Item],
            ScheduleName::Order6 => vec![Query2Text, Image2Text, Query2Image, Query2Item],
        }
    }
}

impl std::fmt::Display for ScheduleName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Parameter families that a stage may train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamGroup {
    TokenTable,
    QueryEncoder,
    TextEncoder,
    ImageEncoder,
    ProjQuery,
    ProjItem,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 6] = [
        ParamGroup::TokenTable,
        ParamGroup::QueryEncoder,
        ParamGroup::TextEncoder,
        ParamGroup::ImageEncoder,
        ParamGroup::ProjQuery,
        ParamGroup::ProjItem,
    ];

    pub fn params(&self, enc: &EncoderSet) -> Vec<ParamId> {
        match self {
            ParamGroup::TokenTable => vec![enc.token_table],
            ParamGroup::QueryEncoder => enc.query_encoder.params(),
            ParamGroup::TextEncoder => enc.text_encoder.params(),
            ParamGroup::ImageEncoder => enc.image_encoder.params(),
            ParamGroup::ProjQuery => enc.proj_query.params(),
            ParamGroup::ProjItem => enc.proj_item.params(),
        }
    }
}

/// Groups each task is allowed to move: the arguments of its loss.
pub fn trainable_groups(task: TaskKind) -> Vec<ParamGroup> {
    use ParamGroup::*;
    match task {
        TaskKind::Query2Text => vec![TokenTable, QueryEncoder, TextEncoder],
        TaskKind::Image2Text => vec![ImageEncoder, TextEncoder],
        TaskKind::Query2Image => vec![QueryEncoder, ImageEncoder],
        TaskKind::Query2Item | TaskKind::Joint => ParamGroup::ALL.to_vec(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub task: TaskKind,
    pub steps: usize,
    pub learning_rate: f64,
    pub trainable: Vec<ParamGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    pub name: String,
    pub stages: Vec<Stage>,
}

impl StageSchedule {
    pub fn total_steps(&self) -> usize {
        self.stages.iter().map(|s| s.steps).sum()
    }
}

/// Joint becomes one stage with the whole budget; staged orders split the
/// same budget into four equal stages.
pub fn make_schedule(name: ScheduleName, config: &PretrainConfig) -> StageSchedule {
    let tasks = name.stage_tasks();
    let steps = if tasks.len() == 1 { 4 * config.steps_per_stage } else { config.steps_per_stage };
    let stages = tasks
        .into_iter()
        .map(|task| Stage {
            task,
            steps,
            learning_rate: config.learning_rate,
            trainable: trainable_groups(task),
        })
        .collect();
    StageSchedule { name: name.name().to_string(), stages }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub stage: usize,
    pub step: usize,
    pub task: TaskKind,
    pub loss: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub schedule: String,
    pub seed: u64,
    pub records: Vec<TrainRecord>,
}

impl TrainLog {
    pub fn new(schedule: &str, seed: u64) -> Self {
        Self { schedule: schedule.to_string(), seed, records: Vec::new() }
    }

    /// CSV with the pinned columns; wall time stays in memory only so the
    /// file is byte-deterministic.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "schedule,seed,stage,step,task,loss")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                self.schedule, self.seed, r.stage, r.step, r.task, r.loss
            )?;
        }
        Ok(())
    }

    pub fn task_series(&self, task: TaskKind) -> Vec<(usize, usize, f64)> {
        self.records
            .iter()
            .filter(|r| r.task == task)
            .map(|r| (r.stage, r.step, r.loss))
            .collect()
    }
}

/// Per-step minibatch of (query, positive item) pairs; in-batch items double
/// as negatives for one another.
fn sample_batch<'a>(
    items: &'a [ItemRecord],
    by_id: &BTreeMap<u32, usize>,
    queries: &'a [QueryRecord],
    batch_size: usize,
    seed: u64,
    stage_idx: usize,
    step: usize,
) -> Vec<BatchExample<'a>> {
    let mut rng = stream_n(seed, &format!("batch-{stage_idx}"), step as u64);
    (0..batch_size)
        .map(|_| {
            let q = &queries[rng.gen_range(0..queries.len())];
            let item = &items[by_id[&q.positive_item_id]];
            BatchExample {
                query_tokens: &q.text_tokens,
                item_text: &item.text_tokens,
                item_image: &item.image_features,
            }
        })
        .collect()
}

/// Runs one stage: `steps` SGD updates on the stage's trainable groups.
#[allow(clippy::too_many_arguments)]
pub fn run_stage(
    enc: &EncoderSet,
    store: &mut ParamStore,
    stage: &Stage,
    stage_idx: usize,
    items: &[ItemRecord],
    by_id: &BTreeMap<u32, usize>,
    queries: &[QueryRecord],
    config: &PretrainConfig,
    seed: u64,
    log: &mut TrainLog,
) -> Result<()> {
    if queries.is_empty() {
        return Err(Error::Train("no training queries".into()));
    }
    let trainable: Vec<ParamId> = stage.trainable.iter().flat_map(|g| g.params(enc)).collect();
    for step in 0..stage.steps {
        let started = Instant::now();
        let batch = sample_batch(items, by_id, queries, config.batch_size, seed, stage_idx, step);
        let mut tape = crate::nn::Tape::new();
        let parts = build_task_parts(&mut tape, store, enc, stage.task, &batch, config.tau)?;
        let part_nodes: Vec<_> = parts.iter().map(|(_, n)| *n).collect();
        let loss = if part_nodes.len() == 1 { part_nodes[0] } else { tape.sum_list(part_nodes) };
        let loss_value = tape.scalar(loss);
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        if !loss_value.is_finite() {
            log.records.push(TrainRecord {
                stage: stage_idx,
                step,
                task: stage.task,
                loss: loss_value,
                wall_ms,
            });
            return Err(Error::Train(format!("non-finite loss at stage {stage_idx} step {step}")));
        }
        if stage.task == TaskKind::Joint {
            for (kind, node) in &parts {
                log.records.push(TrainRecord {
                    stage: stage_idx,
                    step,
                    task: *kind,
                    loss: tape.scalar(*node),
                    wall_ms,
                });
            }
        }
        log.records.push(TrainRecord {
            stage: stage_idx,
            step,
            task: stage.task,
            loss: loss_value,
            wall_ms,
        });
        store.zero_grad();
        let grads = tape.backward(loss);
        tape.accumulate_grads(&grads, store);
        store.sgd_step(&trainable, stage.learning_rate, config.clip_norm);
    }
    Ok(())
}

/// Executes all stages on a freshly initialized encoder set.
pub fn run_training(
    schedule: &StageSchedule,
    enc_config: EncoderConfig,
    items: &[ItemRecord],
    train_queries: &[QueryRecord],
    config: &PretrainConfig,
    seed: u64,
) -> Result<(EncoderSet, ParamStore, TrainLog)> {
    config.validate()?;
    let mut store = ParamStore::new();
    let enc = EncoderSet::init(enc_config, &mut store, &mut stream(seed, "init"));
    let by_id: BTreeMap<u32, usize> =
        items.iter().enumerate().map(|(i, it)| (it.item_id, i)).collect();
    let mut log = TrainLog::new(&schedule.name, seed);
    for (stage_idx, stage) in schedule.stages.iter().enumerate() {
        run_stage(
            &enc, &mut store, stage, stage_idx, items, &by_id, train_queries, config, seed,
            &mut log,
        )?;
    }
    Ok((enc, store, log))
}

/// Pairwise Pearson correlations between per-task loss trajectories.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub tasks: Vec<TaskKind>,
    pub matrix: Vec<Vec<f64>>,
    pub degenerate: Vec<Vec<bool>>,
}

impl CorrelationReport {
    pub fn of(&self, a: TaskKind, b: TaskKind) -> Option<f64> {
        let ia = self.tasks.iter().position(|t| *t == a)?;
        let ib = self.tasks.iter().position(|t| *t == b)?;
        Some(self.matrix[ia][ib])
    }
}

/// Correlates task losses over their common (stage, step) grid.
pub fn diagnose_correlation(log: &TrainLog) -> Result<CorrelationReport> {
    let mut tasks = Vec::new();
    let mut series: Vec<BTreeMap<(usize, usize), f64>> = Vec::new();
    for kind in TaskKind::SINGLE_TASKS {
        let s = log.task_series(kind);
        if !s.is_empty() {
            tasks.push(kind);
            series.push(s.into_iter().map(|(st, sp, l)| ((st, sp), l)).collect());
        }
    }
    if tasks.len() < 2 {
        return Err(Error::Train("correlation needs at least two task series".into()));
    }
    let mut common: Vec<(usize, usize)> = series[0].keys().copied().collect();
    for s in &series {
        common.retain(|k| s.contains_key(k));
    }
    if common.len() < 3 {
        return Err(Error::Train("correlation needs at least three common steps".into()));
    }
    common.sort_unstable();
    let n = tasks.len();
    let mut matrix = vec![vec![0.0; n]; n];
    let mut degenerate = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            let xi: Vec<f64> = common.iter().map(|k| series[i][k]).collect();
            let xj: Vec<f64> = common.iter().map(|k| series[j][k]).collect();
            let (r, deg) = pearson(&xi, &xj);
            matrix[i][j] = r;
            degenerate[i][j] = deg;
        }
    }
    Ok(CorrelationReport { tasks, matrix, degenerate })
}

/// Item embedder whose image-path encoding is replaced by a fixed per-item
/// random vector, norm-matched to the mean trained image-encoding norm.
pub struct AblatedImageEmbedder<'a> {
    pub enc: &'a EncoderSet,
    pub store: &'a ParamStore,
    seed: u64,
    norm_target: f64,
}

/// Builds the random-image view of a trained encoder set.
pub fn ablate_random_image<'a>(
    enc: &'a EncoderSet,
    store: &'a ParamStore,
    items: &[ItemRecord],
    seed: u64,
) -> Result<AblatedImageEmbedder<'a>> {
    let mut total = 0.0;
    for item in items {
        let h = enc.encode_plain(store, EncodeInput::ItemImage(&item.image_features))?;
        total += h.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    let norm_target = if items.is_empty() { 1.0 } else { total / items.len() as f64 };
    Ok(AblatedImageEmbedder { enc, store, seed, norm_target })
}

impl AblatedImageEmbedder<'_> {
    /// The per-item random replacement for the image encoding.
    pub fn random_image_encoding(&self, item_id: u32) -> Vec<f64> {
        let d = self.enc.config.d_model;
        let mut rng = stream_n(self.seed, "ablate-image", item_id as u64);
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.iter_mut().for_each(|x| *x *= self.norm_target / norm);
        v
    }
}

impl ItemEmbedder for AblatedImageEmbedder<'_> {
    fn embed_item(&self, item: &ItemRecord) -> Result<Vec<f64>> {
        let h_text = self.enc.encode_plain(self.store, EncodeInput::ItemText(&item.text_tokens))?;
        let h_image = self.random_image_encoding(item.item_id);
        let fused: Vec<f64> = h_text.iter().zip(&h_image).map(|(a, b)| a + b).collect();
        self.enc.project_plain(self.store, Tower::Item, &fused)
    }
}

impl QueryEmbedder for AblatedImageEmbedder<'_> {
    fn embed_query(&self, tokens: &[u32]) -> Result<Vec<f64>> {
        let e = self.enc.encode_plain(self.store, EncodeInput::Query(tokens))?;
        self.enc.project_plain(self.store, Tower::Query, &e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, generate_query_log, CorpusConfig};
    use crate::objectives::cosine_similarity;

    fn tiny_corpus() -> (Vec<ItemRecord>, Vec<QueryRecord>, CorpusConfig) {
        let config = CorpusConfig {
            concepts: 6,
            partitions: 2,
            n_items: 48,
            n_queries: 60,
            d_latent: 4,
            d_img: 6,
            rho_image_critical: 0.5,
            noise_sigma: 0.05,
            seed: 5,
        };
        let (space, items) = generate_corpus(&config).unwrap();
        let queries = generate_query_log(&space, &items, 60, 0.5, 5).unwrap();
        (items, queries, config)
    }

    fn tiny_enc_config(config: &CorpusConfig) -> EncoderConfig {
        EncoderConfig {
            vocab_size: config.vocab_base_size(),
            d_tok: 8,
            d_model: 10,
            d_proj: 4,
            d_img: config.d_img,
            encoder_hidden: vec![8],
            image_hidden: vec![8],
            proj_hidden: vec![6],
        }
    }

    #[test]
    fn schedules_have_the_documented_shapes() {
        let config = PretrainConfig::default();
        let joint = make_schedule(ScheduleName::Joint, &config);
        assert_eq!(joint.stages.len(), 1);
        assert_eq!(joint.total_steps(), 6000);

        let order6 = make_schedule(ScheduleName::Order6, &config);
        let tasks: Vec<TaskKind> = order6.stages.iter().map(|s| s.task).collect();
        assert_eq!(
            tasks,
            vec![
                TaskKind::Query2Text,
                TaskKind::Image2Text,
                TaskKind::Query2Image,
                TaskKind::Query2Item
            ]
        );
        assert_eq!(order6.stages.last().unwrap().task, TaskKind::Query2Item);

        // budget parity across every schedule
        for name in ScheduleName::ALL_ORDERS {
            assert_eq!(make_schedule(name, &config).total_steps(), joint.total_steps());
        }
    }

    #[test]
    fn zero_learning_rate_stage_leaves_parameters_unchanged() {
        let (items, queries, corpus_config) = tiny_corpus();
        let config = PretrainConfig {
            steps_per_stage: 3,
            learning_rate: 0.0,
            batch_size: 4,
            ..PretrainConfig::default()
        };
        let schedule = make_schedule(ScheduleName::Order6, &config);
        let enc_config = tiny_enc_config(&corpus_config);
        let (_, store, _) =
            run_training(&schedule, enc_config.clone(), &items, &queries, &config, 2).unwrap();
        let mut fresh = ParamStore::new();
        EncoderSet::init(enc_config, &mut fresh, &mut stream(2, "init"));
        for (a, b) in store.ids().zip(fresh.ids()) {
            let (ta, tb) = (store.get(a), fresh.get(b));
            for (x, y) in ta.values.iter().zip(&tb.values) {
                assert_eq!(x.to_bits(), y.to_bits(), "tensor {} moved", ta.name);
            }
        }
    }

    #[test]
    fn stage_isolation_freezes_untrained_groups() {
        let (items, queries, corpus_config) = tiny_corpus();
        let config =
            PretrainConfig { steps_per_stage: 5, batch_size: 4, ..PretrainConfig::default() };
        // query2text trains token table, query and text encoders only
        let stage = Stage {
            task: TaskKind::Query2Text,
            steps: 5,
            learning_rate: config.learning_rate,
            trainable: trainable_groups(TaskKind::Query2Text),
        };
        let mut store = ParamStore::new();
        let enc =
            EncoderSet::init(tiny_enc_config(&corpus_config), &mut store, &mut stream(1, "init"));
        let image_before: Vec<Vec<f64>> = enc
            .image_encoder
            .params()
            .iter()
            .map(|p| store.get(*p).values.clone())
            .collect();
        let token_before = store.get(enc.token_table).values.clone();
        let by_id: BTreeMap<u32, usize> =
            items.iter().enumerate().map(|(i, it)| (it.item_id, i)).collect();
        let mut log = TrainLog::new("test", 1);
        run_stage(&enc, &mut store, &stage, 0, &items, &by_id, &queries, &config, 1, &mut log)
            .unwrap();
        for (p, before) in enc.image_encoder.params().iter().zip(&image_before) {
            assert_eq!(&store.get(*p).values, before, "image encoder moved");
        }
        assert_ne!(store.get(enc.token_table).values, token_before, "token table frozen");
    }

    #[test]
    fn training_is_deterministic_and_descends() {
        let (items, queries, corpus_config) = tiny_corpus();
        let config =
            PretrainConfig { steps_per_stage: 40, batch_size: 4, ..PretrainConfig::default() };
        let schedule = make_schedule(ScheduleName::Joint, &config);
        let enc_config = tiny_enc_config(&corpus_config);
        let (_, s1, log1) =
            run_training(&schedule, enc_config.clone(), &items, &queries, &config, 3).unwrap();
        let (_, s2, log2) =
            run_training(&schedule, enc_config, &items, &queries, &config, 3).unwrap();
        for (a, b) in s1.ids().zip(s2.ids()) {
            assert_eq!(s1.get(a).values, s2.get(b).values);
        }
        let strip = |log: &TrainLog| -> Vec<(usize, usize, TaskKind, u64)> {
            log.records.iter().map(|r| (r.stage, r.step, r.task, r.loss.to_bits())).collect()
        };
        assert_eq!(strip(&log1), strip(&log2));

        // descent: mean loss of the last quarter below the first quarter
        let joint: Vec<f64> =
            log1.records.iter().filter(|r| r.task == TaskKind::Joint).map(|r| r.loss).collect();
        let q = joint.len() / 4;
        let head: f64 = joint[..q].iter().sum::<f64>() / q as f64;
        let tail: f64 = joint[joint.len() - q..].iter().sum::<f64>() / q as f64;
        assert!(tail < head, "no descent: head {head}, tail {tail}");

        // joint decomposition is logged at every step
        for kind in TaskKind::SINGLE_TASKS {
            assert_eq!(log1.task_series(kind).len(), 160);
        }
    }

    #[test]
    fn logged_loss_is_recomputable_from_a_checkpoint() {
        let (items, queries, corpus_config) = tiny_corpus();
        let config =
            PretrainConfig { steps_per_stage: 6, batch_size: 4, ..PretrainConfig::default() };
        let schedule = make_schedule(ScheduleName::Joint, &config);
        let enc_config = tiny_enc_config(&corpus_config);
        let (_, _, log) =
            run_training(&schedule, enc_config.clone(), &items, &queries, &config, 9).unwrap();

        // replay: fresh init, step to k, recompute the loss at step k
        let k = 3usize;
        let mut store = ParamStore::new();
        let enc2 = EncoderSet::init(enc_config, &mut store, &mut stream(9, "init"));
        let by_id: BTreeMap<u32, usize> =
            items.iter().enumerate().map(|(i, it)| (it.item_id, i)).collect();
        let stage = &schedule.stages[0];
        let trainable: Vec<ParamId> =
            stage.trainable.iter().flat_map(|g| g.params(&enc2)).collect();
        let step_loss = |store: &ParamStore, step: usize| {
            let batch = sample_batch(&items, &by_id, &queries, config.batch_size, 9, 0, step);
            let mut tape = crate::nn::Tape::new();
            let parts =
                build_task_parts(&mut tape, store, &enc2, stage.task, &batch, config.tau).unwrap();
            let nodes: Vec<_> = parts.iter().map(|(_, n)| *n).collect();
            let loss = tape.sum_list(nodes);
            (tape, loss)
        };
        for step in 0..k {
            let (tape, loss) = step_loss(&store, step);
            store.zero_grad();
            let grads = tape.backward(loss);
            tape.accumulate_grads(&grads, &mut store);
            store.sgd_step(&trainable, stage.learning_rate, config.clip_norm);
        }
        let (tape, loss) = step_loss(&store, k);
        let logged = log
            .records
            .iter()
            .find(|r| r.stage == 0 && r.step == k && r.task == TaskKind::Joint)
            .unwrap();
        assert_eq!(tape.scalar(loss).to_bits(), logged.loss.to_bits());
    }

    #[test]
    fn correlation_report_hand_cases() {
        let mut log = TrainLog::new("Joint", 0);
        for step in 0..4 {
            let x = step as f64;
            for (task, loss) in [
                (TaskKind::Query2Text, 1.0 - 0.1 * x),
                (TaskKind::Query2Item, 2.0 - 0.2 * x),
                (TaskKind::Image2Text, 1.0),
            ] {
                log.records.push(TrainRecord { stage: 0, step, task, loss, wall_ms: 0.0 });
            }
        }
        let report = diagnose_correlation(&log).unwrap();
        let r = report.of(TaskKind::Query2Text, TaskKind::Query2Item).unwrap();
        assert!((r - 1.0).abs() < 1e-9);
        // negated series correlate at -1
        let mut neg_log = TrainLog::new("Joint", 0);
        for step in 0..4 {
            let x = step as f64;
            neg_log.records.push(TrainRecord {
                stage: 0,
                step,
                task: TaskKind::Query2Text,
                loss: x,
                wall_ms: 0.0,
            });
            neg_log.records.push(TrainRecord {
                stage: 0,
                step,
                task: TaskKind::Query2Item,
                loss: -x,
                wall_ms: 0.0,
            });
        }
        let neg = diagnose_correlation(&neg_log).unwrap();
        let rn = neg.of(TaskKind::Query2Text, TaskKind::Query2Item).unwrap();
        assert!((rn + 1.0).abs() < 1e-9);
        // constant series flagged degenerate with r = 0
        let rc = report.of(TaskKind::Query2Text, TaskKind::Image2Text).unwrap();
        assert_eq!(rc, 0.0);
        let ia = report.tasks.iter().position(|t| *t == TaskKind::Image2Text).unwrap();
        assert!(report.degenerate[ia].iter().any(|d| *d));
        // too few tasks is an error
        let empty = TrainLog::new("Order6", 0);
        assert!(diagnose_correlation(&empty).is_err());
    }

    #[test]
    fn ablation_isolates_the_image_path() {
        let (items, queries, corpus_config) = tiny_corpus();
        let config =
            PretrainConfig { steps_per_stage: 10, batch_size: 4, ..PretrainConfig::default() };
        let schedule = make_schedule(ScheduleName::Order6, &config);
        let (enc, store, _) =
            run_training(&schedule, tiny_enc_config(&corpus_config), &items, &queries, &config, 7)
                .unwrap();
        let ablated = ablate_random_image(&enc, &store, &items, 13).unwrap();
        // same seed, same vectors; different seed, different vectors
        let again = ablate_random_image(&enc, &store, &items, 13).unwrap();
        assert_eq!(ablated.random_image_encoding(4), again.random_image_encoding(4));
        let other = ablate_random_image(&enc, &store, &items, 14).unwrap();
        assert_ne!(ablated.random_image_encoding(4), other.random_image_encoding(4));

        // text encodings identical through the ablated view's query path
        let q = enc.encode_plain(&store, EncodeInput::Query(&[1, 2])).unwrap();
        let q_proj = enc.project_plain(&store, Tower::Query, &q).unwrap();
        assert_eq!(ablated.embed_query(&[1, 2]).unwrap(), q_proj);

        // random vectors are near-orthogonal to trained encodings on average
        let mut mean_cos = 0.0;
        for item in &items {
            let trained =
                enc.encode_plain(&store, EncodeInput::ItemImage(&item.image_features)).unwrap();
            let random = ablated.random_image_encoding(item.item_id);
            mean_cos += cosine_similarity(&trained, &random);
        }
        mean_cos /= items.len() as f64;
        assert!(mean_cos.abs() < 0.1, "mean cosine {mean_cos}");
    }
}
