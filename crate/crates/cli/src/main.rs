use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use moralframe_cli::{config::BackendKind, serve, stages, CliError, StudyConfig};
use moralframe_core::aggregate::AlphaOn;
use moralframe_core::analysis::ReasonTaxonomy;
use moralframe_service::ServeConfig;

#[derive(Parser)]
#[command(name = "moralframe", version, about = "Morality-frame labeling and human verification pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct StudyArgs {
    /// Study config (TOML); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args, Default)]
struct InputArgs {
    /// Study export (JSONL) with the recorded judgments.
    #[arg(long = "study")]
    study: Option<PathBuf>,
    #[arg(long)]
    adjudications: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Label a corpus with the few-shot prompt.
    Label {
        #[command(flatten)]
        study: StudyArgs,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Pilot corpus, labeled into `<output-dir>/pilot/`.
        #[arg(long)]
        pilot: Option<PathBuf>,
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        backend: Option<BackendKind>,
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        concurrency: Option<usize>,
        #[arg(long)]
        max_resamples: Option<u32>,
    },
    /// Run the annotation service.
    Serve {
        /// Service config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Study config whose study is created on first start.
        #[arg(long)]
        study_config: Option<PathBuf>,
        #[arg(long)]
        bind: Option<SocketAddr>,
    },
    /// Resolve gold labels and score the LLM frames.
    Aggregate {
        #[command(flatten)]
        study: StudyArgs,
        #[command(flatten)]
        inputs: InputArgs,
        /// Label the report as the no-explanation condition.
        #[arg(long)]
        ablation: bool,
        #[arg(long)]
        alpha_on: Option<AlphaOn>,
    },
    /// Correlations, entity-role tallies and the survey table.
    Analyze {
        #[command(flatten)]
        study: StudyArgs,
        #[command(flatten)]
        inputs: InputArgs,
        /// Reason taxonomy (TOML).
        #[arg(long)]
        reasons: Option<PathBuf>,
        /// Tuples kept per (foundation, reason) and (foundation, stance).
        #[arg(short = 'k')]
        k: Option<usize>,
    },
    /// Label (when a corpus is configured), aggregate and analyze, then
    /// write a manifest of artifact hashes.
    RunAll {
        #[command(flatten)]
        study: StudyArgs,
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long)]
        reasons: Option<PathBuf>,
        #[arg(long)]
        ablation: bool,
        #[arg(long)]
        alpha_on: Option<AlphaOn>,
        #[arg(short = 'k')]
        k: Option<usize>,
        /// Skip the labeling stage even when a corpus is configured.
        #[arg(long)]
        no_label: bool,
    },
    /// Record the manual gold frame (JSON file) for an item the vote left open.
    Adjudicate {
        item: String,
        frame_file: PathBuf,
        #[command(flatten)]
        study: StudyArgs,
        #[command(flatten)]
        inputs: InputArgs,
    },
}

fn load(study: &StudyArgs) -> Result<StudyConfig, CliError> {
    let mut cfg = StudyConfig::load_or_default(study.config.as_deref())?;
    if let Some(dir) = &study.output_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn apply_inputs(cfg: &mut StudyConfig, inputs: InputArgs) {
    if inputs.study.is_some() {
        cfg.judgments = inputs.study;
    }
    if inputs.adjudications.is_some() {
        cfg.adjudications = inputs.adjudications;
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn taxonomy(path: &Path) -> Result<ReasonTaxonomy, CliError> {
    ReasonTaxonomy::load(path).map_err(|e| CliError::Config(format!("reasons: {e}")))
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Label {
            study,
            corpus,
            pilot,
            template,
            model,
            temperature,
            backend,
            fixtures,
            cache,
            concurrency,
            max_resamples,
        } => {
            let mut cfg = load(&study)?;
            set(&mut cfg.corpus, corpus.map(Some));
            set(&mut cfg.pilot_corpus, pilot.map(Some));
            set(&mut cfg.template, template.map(Some));
            set(&mut cfg.model.name, model.map(Some));
            set(&mut cfg.model.temperature, temperature);
            set(&mut cfg.model.backend, backend);
            set(&mut cfg.model.fixtures, fixtures.map(Some));
            set(&mut cfg.model.cache, cache.map(Some));
            set(&mut cfg.model.concurrency, concurrency);
            set(&mut cfg.model.max_resamples, max_resamples);
            for summary in stages::label(&cfg)? {
                println!("{summary}");
            }
        }
        Command::Serve {
            config,
            study_config,
            bind,
        } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", config.display())))?;
            let base = config.parent().unwrap_or(Path::new("."));
            let mut cfg = ServeConfig::from_toml_str(&text, base)
                .map_err(|e| CliError::Config(format!("{}: {e}", config.display())))?;
            set(&mut cfg.bind, bind);
            let study = study_config.map(|p| StudyConfig::load(&p)).transpose()?;
            serve::run(&cfg, study.as_ref())?;
        }
        Command::Aggregate {
            study,
            inputs,
            ablation,
            alpha_on,
        } => {
            let mut cfg = load(&study)?;
            apply_inputs(&mut cfg, inputs);
            set(&mut cfg.alpha_on, alpha_on);
            let export = StudyConfig::require("study export (--study)", &cfg.judgments)?;
            let loaded = stages::load_inputs(export, cfg.adjudications.as_deref())?;
            let (_, report, artifacts) = stages::aggregate(&loaded, cfg.alpha_on, ablation || cfg.ablation)?;
            stages::write_artifacts(&cfg.output_dir, &artifacts)?;
            print!("{}", report.render_table());
        }
        Command::Analyze {
            study,
            inputs,
            reasons,
            k,
        } => {
            let mut cfg = load(&study)?;
            apply_inputs(&mut cfg, inputs);
            set(&mut cfg.reasons, reasons.map(Some));
            set(&mut cfg.top_k, k);
            let export = StudyConfig::require("study export (--study)", &cfg.judgments)?;
            let taxonomy = taxonomy(StudyConfig::require("reasons (--reasons)", &cfg.reasons)?)?;
            let loaded = stages::load_inputs(export, cfg.adjudications.as_deref())?;
            let resolved = stages::gold_labels(&loaded)?;
            let artifacts = stages::analyze(&loaded, &resolved, &taxonomy, cfg.top_k)?;
            stages::write_artifacts(&cfg.output_dir, &artifacts)?;
            for a in &artifacts {
                println!("{}", cfg.output_dir.join(a.name).display());
            }
        }
        Command::RunAll {
            study,
            inputs,
            reasons,
            ablation,
            alpha_on,
            k,
            no_label,
        } => {
            let mut cfg = load(&study)?;
            apply_inputs(&mut cfg, inputs);
            set(&mut cfg.reasons, reasons.map(Some));
            set(&mut cfg.alpha_on, alpha_on);
            set(&mut cfg.top_k, k);
            cfg.ablation |= ablation;
            if no_label {
                cfg.corpus = None;
                cfg.pilot_corpus = None;
            }
            let summary = stages::run_all(&cfg)?;
            for s in &summary.labels {
                println!("{s}");
            }
            print!("{}", summary.report.render_table());
            println!("manifest: {}", summary.manifest_path.display());
        }
        Command::Adjudicate {
            item,
            frame_file,
            study,
            inputs,
        } => {
            let mut cfg = load(&study)?;
            apply_inputs(&mut cfg, inputs);
            let export = StudyConfig::require("study export (--study)", &cfg.judgments)?;
            let decisions = StudyConfig::require("adjudications (--adjudications)", &cfg.adjudications)?;
            let remaining = stages::adjudicate(export, decisions, &item, &frame_file)?;
            println!("recorded {item}; {} item(s) still need adjudication", remaining.len());
            for id in remaining {
                println!("  {id}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::PendingAdjudication(ids) = &e {
                for id in ids {
                    eprintln!("  {id}");
                }
            }
            ExitCode::from(e.exit_code())
        }
    }
}
