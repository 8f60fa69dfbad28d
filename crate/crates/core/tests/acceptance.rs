//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//!
//! Heavy work (default corpus, both schedule ablations, the full default
//! pipeline, and the adaptation variants) is built once inside a single
//! fixture, in dependency order, with per-component wall times so every
//! criterion is charged for exactly the work it needs.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use mmrp_core::corpus::{CorpusConfig, ItemRecord, QueryRecord};
use mmrp_core::eval::{ndcg_at_k, paired_t_test, recall_at_k, search_topk, EvalReport, SearchMode};
use mmrp_core::nn::gradcheck::check_tape;
use mmrp_core::nn::{EncoderConfig, EncoderSet, ParamStore, Tape};
use mmrp_core::objectives::{build_info_nce, build_task_loss, BatchExample, TaskKind};
use mmrp_core::pipeline::run::{AblationOutcome, Pipeline};
use mmrp_core::pipeline::{EvalTarget, ExperimentConfig};
use mmrp_core::rng::stream;
use mmrp_core::rqvae::{
    build_rqvae_loss, encode_sids, kmeans_init_codebook, mean_reconstruction_error, train_rqvae,
    Codebook, CodebookDims, Modality, RqVaeTrainConfig, SidTriple, SidTuple,
};
use mmrp_core::sid::adapt::{build_finetune_retrieval_loss, AdaptationVariant};
use mmrp_core::sid::causal::{
    loss_causal, loss_causal_sids, loss_doc2docid, CausalModelConfig, CausalSequenceModel,
};
use mmrp_core::sid::vocab::{SidSubset, Vocabulary};
use mmrp_core::trainer::ScheduleName;
use rand::Rng;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn verdict(n: u32, name: &str, pass: bool, detail: &str, elapsed: Duration) -> bool {
    println!(
        "acceptance: criterion {n} ({name}) {} in {:.1}s — {detail}",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    pass
}

struct Heavy {
    shared_dir: PathBuf,
    items: Vec<ItemRecord>,
    eval_queries: Vec<QueryRecord>,
    joint: AblationOutcome,
    order6: AblationOutcome,
    default_report: EvalReport,
    item_only_report: EvalReport,
    d2d_report: EvalReport,
    t_joint: Duration,
    t_order6: Duration,
    t_default: Duration,
    t_extras: Duration,
}

fn pretrained_config(schedule: ScheduleName) -> ExperimentConfig {
    ExperimentConfig {
        schedule,
        eval_target: EvalTarget::Pretrained,
        seeds: SEEDS.to_vec(),
        ..ExperimentConfig::default()
    }
}

fn heavy() -> &'static Heavy {
    static HEAVY: OnceLock<Heavy> = OnceLock::new();
    HEAVY.get_or_init(|| {
        let shared_dir = tempfile::tempdir().unwrap().keep();
        let default_dir = tempfile::tempdir().unwrap().keep();

        let order6_pipeline =
            Pipeline::new(pretrained_config(ScheduleName::Order6), &shared_dir).unwrap();
        let (items, queries) = order6_pipeline.ensure_corpus().unwrap();
        let (_, eval_queries) = order6_pipeline.splits(&queries).unwrap();

        let started = Instant::now();
        let order6 = order6_pipeline.run_ablation().unwrap();
        let t_order6 = started.elapsed();

        let started = Instant::now();
        let joint = Pipeline::new(pretrained_config(ScheduleName::Joint), &shared_dir)
            .unwrap()
            .run_ablation()
            .unwrap();
        let t_joint = started.elapsed();

        // complete default pipeline from scratch in its own directory
        let default_config =
            ExperimentConfig { seeds: SEEDS.to_vec(), ..ExperimentConfig::default() };
        let default_pipeline = Pipeline::new(default_config, &default_dir).unwrap();
        let started = Instant::now();
        let default_report = default_pipeline.run_all().unwrap().remove(0);
        let t_default = started.elapsed();

        // the other ablation variants reuse the default directory's cached
        // corpus, pretrains, and codebooks
        let started = Instant::now();
        let item_only_report = Pipeline::new(
            ExperimentConfig {
                seeds: SEEDS.to_vec(),
                sid_subset: SidSubset::ItemOnly,
                ..ExperimentConfig::default()
            },
            &default_dir,
        )
        .unwrap()
        .run_eval()
        .unwrap();
        let d2d_report = Pipeline::new(
            ExperimentConfig {
                seeds: SEEDS.to_vec(),
                adaptation: AdaptationVariant::Doc2docid,
                ..ExperimentConfig::default()
            },
            &default_dir,
        )
        .unwrap()
        .run_eval()
        .unwrap();
        let t_extras = started.elapsed();

        Heavy {
            shared_dir,
            items,
            eval_queries,
            joint,
            order6,
            default_report,
            item_only_report,
            d2d_report,
            t_joint,
            t_order6,
            t_default,
            t_extras,
        }
    })
}

fn tiny_enc() -> (EncoderSet, ParamStore) {
    let mut store = ParamStore::new();
    let config = EncoderConfig {
        vocab_size: 14,
        d_tok: 4,
        d_model: 6,
        d_proj: 3,
        d_img: 5,
        encoder_hidden: vec![5],
        image_hidden: vec![5],
        proj_hidden: vec![4],
    };
    let enc = EncoderSet::init(config, &mut store, &mut stream(31, "acc-enc"));
    (enc, store)
}

#[test]
fn criterion_01_gradient_correctness() {
    let started = Instant::now();
    let mut rng = stream(7, "acceptance-grad");
    let mut results: Vec<(String, f64, f64)> = Vec::new();
    let mut check = |name: &str, tape: &Tape, loss, sample| {
        let report = check_tape(tape, loss, 1e-3, Some(sample), &mut rng);
        results.push((name.to_string(), report.frac_within_tol, report.max_rel_error));
    };

    // raw InfoNCE over parameter-backed vectors
    {
        let mut store = ParamStore::new();
        let mut init = stream(3, "vecs");
        let anchor = store.uniform_init("anchor", 1, 6, 6, &mut init);
        let pos = store.uniform_init("pos", 1, 6, 6, &mut init);
        let neg1 = store.uniform_init("neg1", 1, 6, 6, &mut init);
        let neg2 = store.uniform_init("neg2", 1, 6, 6, &mut init);
        let mut tape = Tape::new();
        let a = tape.param(&store, anchor);
        let p = tape.param(&store, pos);
        let n1 = tape.param(&store, neg1);
        let n2 = tape.param(&store, neg2);
        let loss = build_info_nce(&mut tape, a, p, &[n1, n2], 0.05).unwrap();
        check("info_nce", &tape, loss, 200);
    }

    // the four contrastive tasks plus the joint sum
    {
        let (enc, store) = tiny_enc();
        let mut data_rng = stream(5, "batch");
        let images: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..5).map(|_| data_rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let tokens: Vec<Vec<u32>> = (0..3).map(|i| vec![i as u32, (i + 3) as u32]).collect();
        let batch: Vec<BatchExample> = (0..3)
            .map(|i| BatchExample {
                query_tokens: &tokens[i],
                item_text: &tokens[i],
                item_image: &images[i],
            })
            .collect();
        for kind in [
            TaskKind::Image2Text,
            TaskKind::Query2Text,
            TaskKind::Query2Image,
            TaskKind::Query2Item,
            TaskKind::Joint,
        ] {
            let mut tape = Tape::new();
            let loss = build_task_loss(&mut tape, &store, &enc, kind, &batch, 0.05).unwrap();
            check(kind.name(), &tape, loss, 120);
        }
    }

    // rq-vae three-term loss
    {
        let mut store = ParamStore::new();
        let dims = CodebookDims { d_in: 6, hidden: vec![5], d_code: 4, layers: 3, entries: 6 };
        let cb =
            Codebook::init(Modality::Text, dims, 0.25, 0.25, &mut store, &mut stream(9, "cb"));
        let mut crng = stream(11, "cw");
        for layer in &cb.layers {
            let t = store.get_mut(*layer);
            t.values.iter_mut().for_each(|v| *v = crng.gen_range(-1.0..1.0));
        }
        let h: Vec<f64> = (0..6).map(|_| crng.gen_range(-1.0..1.0)).collect();
        let mut tape = Tape::new();
        let (loss, _) = build_rqvae_loss(&mut tape, &store, &cb, &h).unwrap();
        check("rqvae", &tape, loss, 200);
    }

    // sequence-model losses and retrieval fine-tuning
    {
        let vocab = Vocabulary::base(10).expand_vocab(4, 3).unwrap();
        let mut store = ParamStore::new();
        let model = CausalSequenceModel::init(
            CausalModelConfig {
                vocab_size: vocab.total_size(),
                d_model: 8,
                n_heads: 2,
                max_len: 32,
            },
            &mut store,
            &mut stream(13, "causal"),
        );
        let sids = SidTriple::new(
            SidTuple { modality: Modality::Text, indices: vec![0, 1, 2] },
            SidTuple { modality: Modality::Image, indices: vec![3, 2, 1] },
            SidTuple { modality: Modality::Item, indices: vec![1, 0, 3] },
        )
        .unwrap();
        let mut tape = Tape::new();
        let loss = loss_doc2docid(&model, &mut tape, &store, &vocab, &[1, 2, 3], &sids).unwrap();
        check("doc2docid", &tape, loss, 60);
        let mut tape = Tape::new();
        let loss = loss_causal(&model, &mut tape, &store, &vocab, &[1, 2], &[3, 4, 5]).unwrap();
        check("causal", &tape, loss, 60);
        let mut tape = Tape::new();
        let loss =
            loss_causal_sids(&model, &mut tape, &store, &vocab, &[1, 2], &sids, &[3, 4, 5])
                .unwrap();
        check("causal_sids", &tape, loss, 60);

        let (enc, enc_store) = tiny_enc();
        let evocab = Vocabulary::base(14).expand_vocab(4, 3).unwrap();
        let (enc, enc_store) =
            enc.expanded_vocab(&enc_store, evocab.total_size(), &mut stream(15, "x"));
        let mk_item = |id: u32, geo: u32| ItemRecord {
            item_id: id,
            geo_hash: geo,
            text_tokens: vec![id % 10, (id + 1) % 10],
            image_features: vec![0.1; 5],
            concept_id: 0,
            sids: None,
        };
        let items = [mk_item(0, 0), mk_item(1, 0), mk_item(2, 0)];
        let mut tape = Tape::new();
        let loss = build_finetune_retrieval_loss(
            &mut tape,
            &enc_store,
            &enc,
            &evocab,
            SidSubset::All,
            &[0, 1],
            (&items[0], &sids),
            &[(&items[1], &sids)],
            &[(&items[2], &sids)],
            0.05,
        )
        .unwrap();
        check("finetune_retrieval", &tape, loss, 120);
    }

    let elapsed = started.elapsed();
    let pass =
        results.iter().all(|(_, frac, _)| *frac >= 0.95) && elapsed < Duration::from_secs(30);
    let detail = results
        .iter()
        .map(|(n, f, m)| format!("{n}: {:.1}% (max {:.1e})", f * 100.0, m))
        .collect::<Vec<_>>()
        .join(", ");
    assert!(verdict(1, "gradient correctness", pass, &detail, elapsed));
}

#[test]
fn criterion_02_quantizer_oracle_equivalence() {
    let started = Instant::now();
    let mut store = ParamStore::new();
    let dims = CodebookDims { d_in: 64, hidden: vec![48], d_code: 32, layers: 3, entries: 32 };
    let cb = Codebook::init(Modality::Text, dims, 0.25, 0.25, &mut store, &mut stream(2, "cb"));
    let mut rng = stream(4, "cw");
    for layer in &cb.layers {
        let t = store.get_mut(*layer);
        t.values.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    }
    let mut mismatches = 0usize;
    for _ in 0..1000 {
        let h: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (sid, _) = encode_sids(&cb, &store, &h).unwrap();
        // independent brute force: nested loops over the codeword lists
        let z = cb.encoder.apply(&store, &h).unwrap();
        let mut r = z;
        for (l, got) in sid.indices.iter().enumerate() {
            let codewords = cb.layer_codewords(&store, l);
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (i, c) in codewords.iter().enumerate() {
                let d: f64 = r.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            if best != *got {
                mismatches += 1;
            }
            r = r.iter().zip(&codewords[best]).map(|(a, b)| a - b).collect();
        }
    }
    let elapsed = started.elapsed();
    let pass = mismatches == 0 && elapsed < Duration::from_secs(5);
    assert!(verdict(
        2,
        "quantizer oracle equivalence",
        pass,
        &format!("{mismatches} index mismatches over 1000 vectors"),
        elapsed
    ));
}

#[test]
fn criterion_03_rqvae_training_efficacy() {
    let h = heavy();
    let started = Instant::now();
    let pipeline =
        Pipeline::new(pretrained_config(ScheduleName::Order6), &h.shared_dir).unwrap();
    let (enc, store) = pipeline.ensure_pretrain(0).unwrap();
    let embeddings =
        pipeline.modality_embeddings(&enc, &store, &h.items, Modality::Text).unwrap();
    let dims = CodebookDims::desk_scale(Modality::Text, enc.config.d_model, 3, 32);
    let config = RqVaeTrainConfig::default();
    assert_eq!(config.steps, 2000);

    let mut halved = 0;
    let mut details = Vec::new();
    for seed in SEEDS {
        let mut init_store = ParamStore::new();
        let cb0 = Codebook::init(
            Modality::Text,
            dims.clone(),
            config.beta,
            config.gamma,
            &mut init_store,
            &mut stream(seed, "rqvae-init-text"),
        );
        kmeans_init_codebook(&cb0, &mut init_store, &embeddings, config.kmeans_iters, seed)
            .unwrap();
        let err_init = mean_reconstruction_error(&cb0, &init_store, &embeddings).unwrap();
        let (cb, cb_store, _) =
            train_rqvae(Modality::Text, dims.clone(), &config, &embeddings, seed).unwrap();
        let err_trained = mean_reconstruction_error(&cb, &cb_store, &embeddings).unwrap();
        if err_trained <= 0.5 * err_init {
            halved += 1;
        }
        details.push(format!("seed {seed}: {err_trained:.4}/{err_init:.4}"));
    }
    let elapsed = started.elapsed();
    let pass = halved >= 4 && elapsed < Duration::from_secs(120);
    assert!(verdict(
        3,
        "rq-vae training efficacy",
        pass,
        &format!("halved in {halved}/5 seeds ({})", details.join(", ")),
        elapsed
    ));
}

#[test]
fn criterion_04_metric_oracles_and_exact_search() {
    let h = heavy();
    let started = Instant::now();
    // hand fixtures
    let fixtures_ok = ndcg_at_k(&[7, 1, 2], 7, 5) == 1.0
        && ndcg_at_k(&[1, 2, 7, 3], 7, 5) == 0.5
        && recall_at_k(&[7, 1], 7, 5) == 1.0
        && recall_at_k(&[1, 2, 3, 4, 5, 7], 7, 5) == 0.0;

    // exact search vs a naive full-scan oracle, id for id, over 1000 queries
    let pipeline =
        Pipeline::new(pretrained_config(ScheduleName::Order6), &h.shared_dir).unwrap();
    let (enc, store) = pipeline.ensure_pretrain(0).unwrap();
    let embedder = mmrp_core::eval::FusedEmbedder { enc: &enc, store: &store };
    let index = mmrp_core::eval::build_index(&h.items, &embedder, None, "acc", 0).unwrap();

    use mmrp_core::eval::{ItemEmbedder, QueryEmbedder};
    let by_id: std::collections::HashMap<u32, u32> =
        h.items.iter().map(|it| (it.item_id, it.geo_hash)).collect();
    // oracle side: embed every item once, then rank by cosine per query
    let item_vecs: Vec<(u32, u32, Vec<f64>)> = h
        .items
        .iter()
        .map(|it| (it.item_id, it.geo_hash, embedder.embed_item(it).unwrap()))
        .collect();
    let mut mismatches = 0usize;
    let mut geo_violations = 0usize;
    for q in h.eval_queries.iter().take(1000) {
        let qv = embedder.embed_query(&q.text_tokens).unwrap();
        let ranked = search_topk(&index, &qv, q.geo_hash, 10, SearchMode::Exact, 0).unwrap();
        let mut scored: Vec<(f64, u32)> = item_vecs
            .iter()
            .filter(|(_, geo, _)| *geo == q.geo_hash)
            .map(|(id, _, iv)| (mmrp_core::objectives::cosine_similarity(&qv, iv), *id))
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let oracle_ids: Vec<u32> = scored.iter().take(10).map(|(_, id)| *id).collect();
        let got_ids: Vec<u32> = ranked.iter().map(|(id, _)| *id).collect();
        if oracle_ids != got_ids {
            mismatches += 1;
        }
        geo_violations += got_ids.iter().filter(|id| by_id[id] != q.geo_hash).count();
    }
    let elapsed = started.elapsed();
    let pass = fixtures_ok
        && mismatches == 0
        && geo_violations == 0
        && elapsed < Duration::from_secs(10);
    assert!(verdict(
        4,
        "metric oracles and exact search",
        pass,
        &format!(
            "fixtures {fixtures_ok}, {mismatches} oracle mismatches, {geo_violations} geo violations"
        ),
        elapsed
    ));
}

fn chance_rate_at_10(items: &[ItemRecord], eval_queries: &[QueryRecord]) -> f64 {
    let mut sizes = std::collections::HashMap::new();
    for it in items {
        *sizes.entry(it.geo_hash).or_insert(0usize) += 1;
    }
    eval_queries
        .iter()
        .map(|q| (10.0 / sizes[&q.geo_hash] as f64).min(1.0))
        .sum::<f64>()
        / eval_queries.len() as f64
}

#[test]
fn criterion_05_retrieval_learning_beats_chance() {
    let h = heavy();
    let mean_r10 = h.order6.trained.mean("R@10").unwrap();
    let chance = chance_rate_at_10(&h.items, &h.eval_queries);
    let elapsed = h.t_order6;
    let pass = mean_r10 >= 5.0 * chance && elapsed < Duration::from_secs(300);
    assert!(verdict(
        5,
        "retrieval learning",
        pass,
        &format!("Order6 mean R@10 {mean_r10:.4} vs 5x chance {:.4}", 5.0 * chance),
        elapsed
    ));
}

#[test]
fn criterion_06_random_image_ablation_phenomenon() {
    let h = heavy();
    let mut seeds_ok = 0;
    let mut parity_ok = 0;
    let mut direction_ok = 0;
    let mut details = Vec::new();
    for (j, o) in h.joint.gaps.iter().zip(&h.order6.gaps) {
        let parity = j.gap <= 0.03;
        let direction = o.gap > j.gap;
        if parity {
            parity_ok += 1;
        }
        if direction {
            direction_ok += 1;
        }
        if parity && direction {
            seeds_ok += 1;
        }
        details.push(format!("seed {}: joint {:.3} order6 {:.3}", j.seed, j.gap, o.gap));
    }
    let elapsed = h.t_joint + h.t_order6;
    let pass = seeds_ok >= 4 && elapsed < Duration::from_secs(480);
    assert!(verdict(
        6,
        "random-image ablation phenomenon",
        pass,
        &format!(
            "joint-parity(<=0.03) {parity_ok}/5, order6-gap-larger {direction_ok}/5, both {seeds_ok}/5 [{}]",
            details.join("; ")
        ),
        elapsed
    ));
}

#[test]
fn criterion_07_schedule_ordering() {
    let h = heavy();
    let joint_mean = h.joint.trained.mean("R@10").unwrap();
    let order6_mean = h.order6.trained.mean("R@10").unwrap();
    let t = paired_t_test(
        &h.order6.trained.metrics["R@10"].per_seed,
        &h.joint.trained.metrics["R@10"].per_seed,
    )
    .unwrap();
    let elapsed = h.t_joint + h.t_order6;
    let pass = order6_mean >= joint_mean && elapsed < Duration::from_secs(900);
    assert!(verdict(
        7,
        "schedule ordering",
        pass,
        &format!(
            "Order6 mean R@10 {order6_mean:.4} vs Joint {joint_mean:.4} (paired t = {:.3}, significant = {})",
            t.t, t.significant
        ),
        elapsed
    ));
}

#[test]
fn criterion_08_sid_and_adaptation_orderings() {
    let h = heavy();
    let all_mean = h.default_report.mean("R@10").unwrap();
    let item_only_mean = h.item_only_report.mean("R@10").unwrap();
    let d2d_mean = h.d2d_report.mean("R@10").unwrap();
    let elapsed = h.t_default + h.t_extras;
    let pass =
        all_mean >= item_only_mean && all_mean >= d2d_mean && elapsed < Duration::from_secs(1200);
    assert!(verdict(
        8,
        "SID and adaptation-loss orderings",
        pass,
        &format!(
            "all-SIDs {all_mean:.4} >= item-only {item_only_mean:.4}; full {all_mean:.4} >= doc2docid-only {d2d_mean:.4}"
        ),
        elapsed
    ));
}

#[test]
fn criterion_09_paired_t_test_statistics() {
    let started = Instant::now();
    // hand-computed example: d = [1..5]
    let a = [2.0, 4.0, 6.0, 8.0, 10.0];
    let b = [1.0, 2.0, 3.0, 4.0, 5.0];
    let r = paired_t_test(&a, &b).unwrap();
    let hand_ok = (r.t - 4.242640687119285).abs() < 1e-6 && r.significant && r.df == 4;

    // df = 9 uses the embedded 2.262 critical value: build difference series
    // with t just below and just above it
    let base: Vec<f64> = (0..10).map(|i| (i as f64) * 0.01).collect();
    let make = |t_target: f64| -> (Vec<f64>, Vec<f64>) {
        let pattern: Vec<f64> =
            (0..10).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let n = pattern.len() as f64;
        let sd = (pattern.iter().map(|p| p * p).sum::<f64>() / (n - 1.0)).sqrt();
        let mean = t_target * sd / n.sqrt();
        let shifted: Vec<f64> =
            base.iter().zip(&pattern).map(|(x, p)| x + mean + p).collect();
        (shifted, base.clone())
    };
    let (a_low, b_low) = make(2.0);
    let low = paired_t_test(&a_low, &b_low).unwrap();
    let (a_high, b_high) = make(2.5);
    let high = paired_t_test(&a_high, &b_high).unwrap();
    let df9_ok = !low.significant && high.significant && low.df == 9;

    let elapsed = started.elapsed();
    let pass = hand_ok && df9_ok;
    assert!(verdict(
        9,
        "paired t-test statistics",
        pass,
        &format!(
            "t = {:.9} (hand 4.242640687), df9 flags: t={:.3} -> {}, t={:.3} -> {}",
            r.t, low.t, low.significant, high.t, high.significant
        ),
        elapsed
    ));
}

#[test]
fn criterion_10_determinism_and_resumability() {
    let h = heavy();
    let started = Instant::now();

    // byte-identical reports for two fresh runs of one compact config
    let small = || {
        let mut config = ExperimentConfig {
            corpus: CorpusConfig {
                concepts: 10,
                partitions: 4,
                n_items: 200,
                n_queries: 300,
                seed: 5,
                ..CorpusConfig::default()
            },
            seeds: vec![0, 1],
            ..ExperimentConfig::default()
        };
        config.pretrain.steps_per_stage = 30;
        config.rqvae.steps = 80;
        config.adapt.phase1_steps = 10;
        config.adapt.phase2_steps = 10;
        config
    };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let pipe_a = Pipeline::new(small(), dir_a.path()).unwrap();
    let pipe_b = Pipeline::new(small(), dir_b.path()).unwrap();
    pipe_a.run_all().unwrap();
    pipe_b.run_all().unwrap();
    let csv_a = std::fs::read(pipe_a.artifacts.combined_csv()).unwrap();
    let csv_b = std::fs::read(pipe_b.artifacts.combined_csv()).unwrap();
    let identical = csv_a == csv_b;

    // resumability: delete reports only; cached artifacts regenerate the
    // identical bytes
    std::fs::remove_dir_all(pipe_a.artifacts.root.join("reports")).unwrap();
    pipe_a.run_all().unwrap();
    let csv_resumed = std::fs::read(pipe_a.artifacts.combined_csv()).unwrap();
    let resumable = csv_resumed == csv_a;

    // the whole default pipeline finished within ten minutes on one core
    let within_budget = h.t_default < Duration::from_secs(600);

    let elapsed = started.elapsed() + h.t_default;
    let pass = identical && resumable && within_budget;
    assert!(verdict(
        10,
        "determinism and resumability",
        pass,
        &format!(
            "byte-identical {identical}, resumable {resumable}, default pipeline {:.1}s",
            h.t_default.as_secs_f64()
        ),
        elapsed
    ));
}
