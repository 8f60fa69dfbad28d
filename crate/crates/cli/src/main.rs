//! Experiment driver: generate -> pretrain -> quantize -> adapt -> index ->
//! evaluate -> ablate, with per-stage subcommands and cached artifacts.
//!
//! Exit codes: 0 success, 1 config error, 2 stage failure, 3 artifact
//! verification failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mmrp_core::eval::SearchMode;
use mmrp_core::pipeline::run::Pipeline;
use mmrp_core::pipeline::{load_config_with, render_csv, render_json, ExperimentConfig};
use mmrp_core::sid::adapt::AdaptationVariant;
use mmrp_core::sid::vocab::SidSubset;
use mmrp_core::trainer::ScheduleName;
use mmrp_core::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Exact,
    Approx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StageName {
    GenData,
    Pretrain,
    Quantize,
    Adapt,
    Index,
    Eval,
}

#[derive(Parser, Debug)]
#[command(name = "mmrp", version, about = "Multimodal retrieval experiment pipeline")]
struct Cli {
    /// Experiment config (JSON). Omitting it runs the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for artifacts and reports.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,

    /// Replace the config's seed list with a single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Variant override: a schedule (Joint, Order1..Order6), a SID subset
    /// (item-only, image-text, item-text, item-image, all), or an adaptation
    /// (doc2docid, with-causal, with-causal-sids, full).
    #[arg(long, global = true)]
    variant: Option<String>,

    /// Search mode override.
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,

    /// Report format printed to stdout by eval/all.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic corpus and query log.
    GenData,
    /// Train encoders for every configured seed.
    Pretrain,
    /// Train the three codebooks and emit the SID table, per seed.
    Quantize,
    /// Expand the vocabulary and run the adaptation phases, per seed.
    Adapt,
    /// Build the geo-partitioned index, per seed.
    Index,
    /// Aggregate repetitions into a report and emit CSV/JSON.
    Eval,
    /// Paired trained-vs-random-image reports for the configured schedule.
    Ablate,
    /// Run every stage for the configured variant.
    All {
        /// Stop after this stage.
        #[arg(long, value_enum)]
        stage: Option<StageName>,
    },
}

fn apply_overrides(config: &mut ExperimentConfig, cli: &Cli) -> Result<(), Error> {
    if let Some(seed) = cli.seed {
        config.seeds = vec![seed];
    }
    if let Some(mode) = cli.mode {
        config.search_mode = match mode {
            Mode::Exact => SearchMode::Exact,
            Mode::Approx => SearchMode::Approx,
        };
    }
    if let Some(variant) = &cli.variant {
        if let Ok(schedule) = ScheduleName::parse(variant) {
            config.schedule = schedule;
        } else if let Ok(subset) = SidSubset::parse(variant) {
            config.sid_subset = subset;
        } else if let Ok(adaptation) = AdaptationVariant::parse(variant) {
            config.adaptation = adaptation;
        } else {
            return Err(Error::config(
                "variant",
                format!("`{variant}` is not a schedule, SID subset, or adaptation variant"),
            ));
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    let mut config = match &cli.config {
        Some(path) => load_config_with(path, false)?,
        None => ExperimentConfig::default(),
    };
    apply_overrides(&mut config, cli)?;
    config.validate()?;
    let pipeline = Pipeline::new(config.clone(), &cli.out)?;

    match &cli.command {
        Command::GenData => {
            let (items, queries) = pipeline.ensure_corpus()?;
            println!("corpus: {} items, {} queries -> {}", items.len(), queries.len(),
                pipeline.artifacts.root.join("corpus").display());
        }
        Command::Pretrain => {
            for seed in &config.seeds {
                pipeline.ensure_pretrain(*seed)?;
                println!("pretrained {} seed {seed}", config.schedule.name());
            }
        }
        Command::Quantize => {
            for seed in &config.seeds {
                let table = pipeline.ensure_quantize(*seed)?;
                println!("quantized seed {seed}: {} items with SIDs", table.len());
            }
        }
        Command::Adapt => {
            for seed in &config.seeds {
                pipeline.ensure_adapt(*seed)?;
                println!(
                    "adapted seed {seed}: {}+{}",
                    config.sid_subset, config.adaptation
                );
            }
        }
        Command::Index => {
            for seed in &config.seeds {
                let index = pipeline.build_index_stage(*seed)?;
                println!(
                    "indexed seed {seed}: {} items in {} partitions",
                    index.item_count(),
                    index.partitions.len()
                );
            }
        }
        Command::Eval => {
            let report = pipeline.run_eval()?;
            print_reports(cli.format, std::slice::from_ref(&report))?;
        }
        Command::Ablate => {
            let outcome = pipeline.run_ablation()?;
            print_reports(cli.format, &[outcome.trained.clone(), outcome.ablated.clone()])?;
            for gap in &outcome.gaps {
                println!(
                    "seed {}: R@10 trained {:.4} random-image {:.4} gap {:.4}",
                    gap.seed, gap.trained_r10, gap.ablated_r10, gap.gap
                );
            }
        }
        Command::All { stage } => {
            let stop = stage.unwrap_or(StageName::Eval);
            pipeline.ensure_corpus()?;
            if stop == StageName::GenData {
                return Ok(());
            }
            for seed in &config.seeds {
                pipeline.ensure_pretrain(*seed)?;
            }
            if stop == StageName::Pretrain {
                return Ok(());
            }
            if config.eval_target == mmrp_core::pipeline::EvalTarget::Adapted {
                for seed in &config.seeds {
                    pipeline.ensure_quantize(*seed)?;
                }
                if stop == StageName::Quantize {
                    return Ok(());
                }
                for seed in &config.seeds {
                    pipeline.ensure_adapt(*seed)?;
                }
                if stop == StageName::Adapt {
                    return Ok(());
                }
            } else if stop == StageName::Quantize || stop == StageName::Adapt {
                return Ok(());
            }
            for seed in &config.seeds {
                pipeline.build_index_stage(*seed)?;
            }
            if stop == StageName::Index {
                return Ok(());
            }
            let mut reports = vec![pipeline.run_eval()?];
            if config.random_image_ablation {
                let outcome = pipeline.run_ablation()?;
                reports.push(outcome.trained);
                reports.push(outcome.ablated);
            }
            print_reports(cli.format, &reports)?;
        }
    }
    Ok(())
}

fn print_reports(format: Format, reports: &[mmrp_core::eval::EvalReport]) -> Result<(), Error> {
    match format {
        Format::Csv => print!("{}", render_csv(reports)?),
        Format::Json => print!("{}", render_json(reports)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
        Err(e) => {
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } => ExitCode::from(1),
                Error::Artifact(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
