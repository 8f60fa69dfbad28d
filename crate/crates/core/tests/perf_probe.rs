//! Manual timing probes for budget tuning: `cargo test -p mmrp-core --test
//! perf_probe -- --ignored --nocapture`.

use std::time::Instant;

use mmrp_core::corpus::{generate_corpus, generate_query_log, split_eval, CorpusConfig};
use mmrp_core::eval::{evaluate_queries, FusedEmbedder, SearchMode};
use mmrp_core::pipeline::run::Pipeline;
use mmrp_core::pipeline::{EvalTarget, ExperimentConfig};
use mmrp_core::rqvae::{train_rqvae, CodebookDims, Modality, RqVaeTrainConfig};
use mmrp_core::trainer::{make_schedule, run_training, PretrainConfig, ScheduleName};

#[test]
#[ignore]
fn probe_pretrain_speed() {
    let corpus_config = CorpusConfig::default();
    let (space, items) = generate_corpus(&corpus_config).unwrap();
    let queries = generate_query_log(&space, &items, 5000, 0.5, 0).unwrap();
    let (train, eval) = split_eval(&queries, 0.8, 0).unwrap();

    let config = PretrainConfig { steps_per_stage: 50, ..PretrainConfig::default() };
    let schedule = make_schedule(ScheduleName::Joint, &config);
    let start = Instant::now();
    let (enc, store, _) = run_training(
        &schedule,
        mmrp_core::nn::EncoderConfig::desk_scale(corpus_config.vocab_base_size(), corpus_config.d_img),
        &items,
        &train,
        &config,
        0,
    )
    .unwrap();
    let joint_200 = start.elapsed();
    println!("joint 200 steps (batch 8): {joint_200:?} -> per step {:?}", joint_200 / 200);

    let start = Instant::now();
    let embedder = FusedEmbedder { enc: &enc, store: &store };
    let index = mmrp_core::eval::build_index(&items, &embedder, Some(16), "h", 0).unwrap();
    let built = start.elapsed();
    let start = Instant::now();
    let metrics = evaluate_queries(&index, &embedder, &eval, SearchMode::Exact, 0).unwrap();
    println!(
        "index build {built:?}, eval {} queries {:?}, R@10 {}",
        eval.len(),
        start.elapsed(),
        metrics.recall[&10]
    );

    let start = Instant::now();
    let text_emb: Vec<Vec<f64>> = items
        .iter()
        .map(|it| {
            enc.encode_plain(&store, mmrp_core::nn::EncodeInput::ItemText(&it.text_tokens)).unwrap()
        })
        .collect();
    let rq = RqVaeTrainConfig { steps: 200, ..RqVaeTrainConfig::default() };
    let dims = CodebookDims::desk_scale(Modality::Text, 64, 3, 32);
    train_rqvae(Modality::Text, dims, &rq, &text_emb, 0).unwrap();
    println!("rqvae 200 steps (batch 32): {:?}", start.elapsed());
}

#[test]
#[ignore]
fn probe_adapt_speed() {
    let mut config = ExperimentConfig {
        eval_target: EvalTarget::Adapted,
        seeds: vec![0],
        ..ExperimentConfig::default()
    };
    config.pretrain.steps_per_stage = 25;
    config.rqvae.steps = 100;
    config.adapt.phase1_steps = 25;
    config.adapt.phase2_steps = 25;
    let dir = tempfile::tempdir().unwrap();
    let pipeline = Pipeline::new(config, dir.path()).unwrap();
    let start = Instant::now();
    pipeline.run_all().unwrap();
    println!("mini adapted pipeline (25/100/25+25): {:?}", start.elapsed());
}
