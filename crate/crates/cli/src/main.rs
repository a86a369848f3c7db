use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use codeaudit_core::corpus::SynthConfig;
use codeaudit_core::ner::ModelConfig;
use codeaudit_core::pipeline::{self, PipelineConfig};
use codeaudit_core::taxonomy::DEFAULT_TOP_K;
use codeaudit_service::AppState;

/// Audit clinical code assignments against discharge-summary diagnoses.
#[derive(Debug, Parser)]
#[command(name = "codeaudit", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Output directory for all artifacts
    #[arg(long, global = true, env = "AUDIT_OUT", default_value = "out")]
    out: PathBuf,
    /// Note table (ROW_ID,HADM_ID,CATEGORY,TEXT) [default: <out>/notes.csv]
    #[arg(long, global = true, env = "AUDIT_NOTES")]
    notes: Option<PathBuf>,
    /// Assigned codes (HADM_ID,SEQ_NUM,ICD9_CODE) [default: <out>/assignments.csv]
    #[arg(long, global = true, env = "AUDIT_ASSIGNMENTS")]
    assignments: Option<PathBuf>,
    /// Concept dictionary [default: <out>/dictionary.finetuned.csv if present, else <out>/dictionary.csv]
    #[arg(long, global = true, env = "AUDIT_DICTIONARY")]
    dictionary: Option<PathBuf>,
    /// Context model [default: <out>/model.finetuned.json if present, else <out>/model.json]
    #[arg(long, global = true, env = "AUDIT_MODEL")]
    model: Option<PathBuf>,
    /// Size of the audited code scope (most frequent assigned codes)
    #[arg(long, global = true, env = "AUDIT_TOP_K", default_value_t = DEFAULT_TOP_K)]
    top_k: usize,
    #[arg(long, global = true, env = "AUDIT_SEED", default_value_t = 42)]
    seed: u64,
    /// Worker threads (0 = all cores); never changes the output
    #[arg(long, global = true, env = "AUDIT_THREADS", default_value_t = 0)]
    threads: usize,
    /// Heading rules file, one heading per line
    #[arg(long, global = true, env = "AUDIT_RULES")]
    rules: Option<PathBuf>,
    /// Minimum cosine similarity to accept a disambiguation
    #[arg(long, global = true, env = "AUDIT_THRESHOLD_SIM", default_value_t = 0.3)]
    threshold_sim: f32,
    /// Codes whose share of correct marks is below this are excluded
    #[arg(long, global = true, env = "AUDIT_THRESHOLD_EXCLUDE", default_value_t = 0.5)]
    threshold_exclude: f64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus, dictionary and ground truth
    Synth(SynthArgs),
    /// Extract discharge-diagnosis sections
    ExtractDd,
    /// Unsupervised training of the context model
    Train(TrainArgs),
    /// Recognise and link diagnoses in every section
    Annotate,
    /// Split codes into P_A, P_NA and A_NP
    Partition,
    /// Write the audit report
    Report,
    /// Run the validation service
    Serve(ServeArgs),
    /// Fine-tune from finalized validation sessions
    FineTune,
    /// Write the silver-standard table
    EmitSilver,
    /// Run extract-dd, train, annotate, partition and report
    Audit(TrainArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, env = "AUDIT_ADMISSIONS", default_value_t = 500)]
    admissions: usize,
    #[arg(long, env = "AUDIT_UNDERCODE_RATE", default_value_t = 0.0)]
    undercode_rate: f64,
    #[arg(long, env = "AUDIT_SYNONYM_NOISE", default_value_t = 0.0)]
    synonym_noise: f64,
    #[arg(long, default_value_t = 1)]
    min_codes: usize,
    #[arg(long, default_value_t = 8)]
    max_codes: usize,
    #[arg(long, default_value_t = 0.0)]
    missing_section_rate: f64,
    /// Maximum assigned codes per admission that the section omits
    #[arg(long, default_value_t = 0)]
    max_unlisted: usize,
    /// Use only the first N codes of the built-in vocabulary
    #[arg(long)]
    vocabulary_size: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 300)]
    dimension: usize,
    #[arg(long, default_value_t = 9)]
    window: usize,
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f32,
}

impl TrainArgs {
    fn model_config(&self) -> ModelConfig {
        ModelConfig {
            dimension: self.dimension,
            window: self.window,
            learning_rate: self.learning_rate,
            ..ModelConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "AUDIT_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "AUDIT_HOST", default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Directory of static UI assets served under /ui
    #[arg(long, env = "AUDIT_UI")]
    ui: Option<PathBuf>,
}

fn config(g: &Global) -> PipelineConfig {
    PipelineConfig {
        out: g.out.clone(),
        notes: g.notes.clone(),
        assignments: g.assignments.clone(),
        dictionary: g.dictionary.clone(),
        model: g.model.clone(),
        rules: g.rules.clone(),
        top_k: g.top_k,
        seed: g.seed,
        threads: g.threads,
        threshold_sim: g.threshold_sim,
        threshold_exclude: g.threshold_exclude,
    }
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serialisable"));
}

fn run(cli: Cli) -> codeaudit_core::Result<()> {
    let cfg = config(&cli.global);
    match cli.command {
        Command::Synth(a) => {
            let mut vocabulary = codeaudit_core::corpus::default_vocabulary();
            if let Some(n) = a.vocabulary_size {
                vocabulary.truncate(n);
            }
            let synth = SynthConfig {
                n_admissions: a.admissions,
                code_vocabulary: vocabulary,
                undercode_rate: a.undercode_rate,
                synonym_noise_rate: a.synonym_noise,
                seed: cfg.seed,
                min_codes: a.min_codes,
                max_codes: a.max_codes,
                missing_section_rate: a.missing_section_rate,
                max_unlisted: a.max_unlisted,
            };
            print_json(&pipeline::run_synth(&cfg, &synth)?);
        }
        Command::ExtractDd => print_json(&pipeline::run_extract_dd(&cfg)?),
        Command::Train(a) => print_json(&pipeline::run_train(&cfg, a.model_config())?),
        Command::Annotate => print_json(&pipeline::run_annotate(&cfg)?),
        Command::Partition => print_json(&pipeline::run_partition(&cfg)?),
        Command::Report => print_json(&pipeline::run_report(&cfg)?.totals),
        Command::FineTune => print_json(&pipeline::run_fine_tune(&cfg)?),
        Command::EmitSilver => print_json(&pipeline::run_emit_silver(&cfg)?),
        Command::Audit(a) => print_json(&pipeline::run_audit(&cfg, a.model_config())?.totals),
        Command::Serve(a) => {
            let inputs = pipeline::load_review_inputs(&cfg)?;
            let state = AppState::new(inputs, Some(cfg.sessions_dir()))?;
            let addr = SocketAddr::new(a.host, a.port);
            let runtime = tokio::runtime::Runtime::new().map_err(|e| codeaudit_core::Error::Config(e.to_string()))?;
            eprintln!("listening on http://{addr}/api/v1");
            runtime
                .block_on(codeaudit_service::serve(state, addr, a.ui))
                .map_err(|e| codeaudit_core::Error::Config(format!("server: {e}")))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
