use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use stbam_core::backend::{save_transcript, BackendError};
use stbam_core::batch;
use stbam_core::corpus::{Corpus, CorpusError};
use stbam_core::eval::{emit_table, evaluate, load_gold, parse_table, EvalError};
use stbam_core::pipeline::{Cause, DocumentResult};
use stbam_core::{
    process_document, BackendDescriptor, BackendKind, MissingPolicy, Mode, ModelFile,
    PipelineConfig, PromptCatalog,
};

const USAGE: u8 = 2;
const IO: u8 = 3;
const BACKEND: u8 = 4;
const VALIDATION: u8 = 5;
const HALTED: u8 = 6;

#[derive(Parser)]
#[command(
    name = "stbam",
    version,
    about = "Turn free text into a topic network of subjects, objects and actions"
)]
struct Cli {
    /// Prompt catalog to use instead of the built-in one.
    #[arg(long, global = true)]
    prompts: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Model one document.
    Extract(ExtractArgs),
    /// Replay every document of a fixture corpus into a directory of model files.
    Replay(ReplayArgs),
    /// Score a directory of model files against gold annotations.
    Eval(EvalArgs),
    /// Render a model file as prose, a results summary or JSON.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Live,
    Replay,
    Scripted,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Strict,
    Lenient,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Strict => Mode::Strict,
            ModeArg::Lenient => Mode::Lenient,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MissingArg {
    Error,
    Fallback,
}

#[derive(clap::Args)]
struct ExtractArgs {
    #[arg(long)]
    topic: String,
    /// Input text file, or `-` for stdin.
    #[arg(long, default_value = "-")]
    input: String,
    #[arg(long, value_enum, default_value = "live")]
    backend: BackendArg,
    #[arg(long, env = "STBAM_ENDPOINT")]
    endpoint: Option<String>,
    #[arg(long, env = "STBAM_MODEL")]
    model_name: Option<String>,
    #[arg(long, env = "STBAM_API_KEY", hide_env_values = true)]
    api_key: Option<String>,
    /// Request timeout in seconds for the live backend.
    #[arg(long, default_value_t = 60)]
    timeout: u64,
    #[arg(long, value_enum, default_value = "lenient")]
    mode: ModeArg,
    #[arg(long)]
    replay_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "error")]
    missing_policy: MissingArg,
    /// Id stored in the model file.
    #[arg(long)]
    id: Option<String>,
    /// Model file to write; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the chat transcript as JSON lines.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(clap::Args)]
struct ReplayArgs {
    /// Directory holding manifest.json.
    #[arg(long, default_value = "fixtures/corpus")]
    corpus: PathBuf,
    /// Output directory for `<key>.json` model files.
    #[arg(long)]
    out: PathBuf,
    /// Override the manifest mode of every entry.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Replay only these keys or ids.
    #[arg(long = "only")]
    only: Vec<String>,
    /// Also write `<key>.jsonl` transcripts here.
    #[arg(long)]
    transcript: Option<PathBuf>,
    #[arg(long)]
    parallel: bool,
}

#[derive(clap::Args)]
struct EvalArgs {
    /// Directory of model files.
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    /// Published table to compare against.
    #[arg(long)]
    published: Option<PathBuf>,
    /// Metrics table; stdout when absent.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Aggregate and divergence report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    parallel: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Prose,
    Summary,
    Json,
}

#[derive(clap::Args)]
struct ReportArgs {
    model: PathBuf,
    #[arg(long, value_enum, default_value = "prose")]
    format: Format,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

trait Code<T> {
    fn code(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Code<T> for Result<T, E> {
    fn code(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code,
            error: e.into(),
        })
    }
}

fn fail<T>(code: u8, error: anyhow::Error) -> Result<T, Failure> {
    Err(Failure { code, error })
}

fn backend_code(e: &BackendError) -> u8 {
    match e {
        BackendError::Config(_) | BackendError::InvalidRequest(_) => USAGE,
        BackendError::Replay(stbam_core::backend::ReplayError::Io { .. }) => IO,
        BackendError::Replay(_) => VALIDATION,
        _ => BACKEND,
    }
}

fn corpus_code(e: &CorpusError) -> u8 {
    match e {
        CorpusError::Io { .. } => IO,
        CorpusError::Replay {
            source: stbam_core::backend::ReplayError::Io { .. },
            ..
        } => IO,
        _ => VALIDATION,
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text)
            .with_context(|| format!("writing {}", p.display()))
            .code(IO),
        None => io::stdout().write_all(text.as_bytes()).code(IO),
    }
}

fn catalog(path: Option<&Path>) -> Result<PromptCatalog, Failure> {
    match path {
        Some(p) => PromptCatalog::from_path(p)
            .with_context(|| format!("prompt catalog {}", p.display()))
            .code(VALIDATION),
        None => Ok(PromptCatalog::builtin()),
    }
}

/// Exit status for a finished document: backend trouble outranks a halt.
fn outcome_code(result: &DocumentResult) -> u8 {
    let backend = result
        .errors
        .iter()
        .any(|e| matches!(e.cause, Cause::BackendFailure | Cause::ReplayMiss));
    if backend {
        BACKEND
    } else if result.halted_early {
        HALTED
    } else {
        0
    }
}

fn extract(args: ExtractArgs, catalog: &PromptCatalog) -> Result<u8, Failure> {
    let text = if args.input == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s).code(IO)?;
        s
    } else {
        fs::read_to_string(&args.input)
            .with_context(|| format!("reading {}", args.input))
            .code(IO)?
    };
    let mut desc = match args.backend {
        BackendArg::Live => BackendDescriptor::live(
            args.endpoint.unwrap_or_default(),
            args.model_name.unwrap_or_default(),
        ),
        BackendArg::Replay => {
            let Some(path) = args.replay_file else {
                return fail(USAGE, anyhow!("--backend replay needs --replay-file"));
            };
            let policy = match args.missing_policy {
                MissingArg::Error => MissingPolicy::Error,
                MissingArg::Fallback => MissingPolicy::FallbackRule,
            };
            BackendDescriptor::replay(path, policy)
        }
        BackendArg::Scripted => BackendDescriptor::scripted(),
    };
    if desc.kind == BackendKind::Live {
        desc.api_key = args.api_key;
        desc.timeout = Duration::from_secs(args.timeout);
    }
    let backend = desc.connect(catalog).map_err(|e| Failure {
        code: backend_code(&e),
        error: e.into(),
    })?;
    let config = PipelineConfig {
        mode: args.mode.into(),
        ..PipelineConfig::default()
    };
    let result = process_document(&text, &args.topic, backend.as_ref(), catalog, &config)
        .code(VALIDATION)?;
    if let Some(p) = &args.transcript {
        save_transcript(&result.transcript, p)
            .with_context(|| format!("writing {}", p.display()))
            .code(IO)?;
    }
    write_out(args.out.as_deref(), &result.model_file(args.id).to_json())?;
    for e in &result.errors {
        eprintln!("error: {e}");
    }
    if args.out.is_some() {
        print!("{}", result.network.to_prose());
    }
    let code = outcome_code(&result);
    if code == HALTED {
        eprintln!("halted early in strict mode");
    }
    Ok(code)
}

fn replay(args: ReplayArgs, catalog: &PromptCatalog) -> Result<u8, Failure> {
    let corpus = Corpus::load(&args.corpus).map_err(|e| Failure {
        code: corpus_code(&e),
        error: e.into(),
    })?;
    let entries: Vec<_> = corpus
        .entries
        .iter()
        .filter(|e| args.only.is_empty() || args.only.iter().any(|k| *k == e.key || *k == e.id))
        .collect();
    if entries.is_empty() {
        return fail(USAGE, anyhow!("no corpus entries selected"));
    }
    for dir in std::iter::once(&args.out).chain(&args.transcript) {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .code(IO)?;
    }
    let results = batch::map(&entries, args.parallel, |e| {
        let mode = args.mode.map_or(e.mode, Mode::from);
        corpus.replay_with(e, catalog, mode)
    });
    let mut halted = 0;
    for (e, result) in entries.iter().zip(results) {
        let result = result.map_err(|err| Failure {
            code: corpus_code(&err),
            error: err.into(),
        })?;
        let path = args.out.join(format!("{}.json", e.key));
        write_out(
            Some(&path),
            &result.model_file(Some(e.id.clone())).to_json(),
        )?;
        if let Some(dir) = &args.transcript {
            let path = dir.join(format!("{}.jsonl", e.key));
            save_transcript(&result.transcript, &path)
                .with_context(|| format!("writing {}", path.display()))
                .code(IO)?;
        }
        if outcome_code(&result) == BACKEND {
            return fail(
                BACKEND,
                anyhow!("{}: replay did not cover every request", e.id),
            );
        }
        halted += result.halted_early as usize;
        let status = if result.halted_early { "halted" } else { "ok" };
        eprintln!("{}: {status}, {} error(s)", e.id, result.errors.len());
    }
    eprintln!(
        "wrote {} model file(s) to {} ({halted} halted)",
        entries.len(),
        args.out.display()
    );
    Ok(0)
}

fn eval(args: EvalArgs) -> Result<u8, Failure> {
    let gold = load_gold(&args.gold).code(IO)?;
    let mut paths: Vec<PathBuf> = fs::read_dir(&args.models)
        .with_context(|| format!("reading {}", args.models.display()))
        .code(IO)?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return fail(
            VALIDATION,
            anyhow!("no model files in {}", args.models.display()),
        );
    }
    let loaded = batch::map(&paths, args.parallel, |p| -> Result<ModelFile, Failure> {
        let text = fs::read_to_string(p)
            .with_context(|| format!("reading {}", p.display()))
            .code(IO)?;
        let mut model = ModelFile::from_json(&text)
            .with_context(|| format!("{}", p.display()))
            .code(VALIDATION)?;
        if model.id.is_none() {
            model.id = p.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(model)
    });
    let mut models = loaded.into_iter().collect::<Result<Vec<_>, _>>()?;
    let rank = |m: &ModelFile| {
        gold.iter()
            .position(|g| Some(&g.test_id) == m.id.as_ref())
            .unwrap_or(usize::MAX)
    };
    models.sort_by_key(|m| rank(m));
    let published = match &args.published {
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))
                .code(IO)?;
            Some(parse_table(&text).code(VALIDATION)?)
        }
        None => None,
    };
    let report = evaluate(&models, &gold, published.as_deref()).map_err(|e| Failure {
        code: match e {
            EvalError::Io { .. } => IO,
            _ => VALIDATION,
        },
        error: e.into(),
    })?;
    write_out(args.csv.as_deref(), &emit_table(&report.rows))?;
    if let Some(p) = &args.report {
        let json = serde_json::to_string_pretty(&report).code(VALIDATION)? + "\n";
        write_out(Some(p), &json)?;
    }
    let r = &report.replayed;
    eprintln!(
        "full success {}/{} ({:.3}), partial success {}/{} ({:.3})",
        r.full_successes,
        r.n_tests,
        r.full_success_rate,
        r.partial_successes,
        r.n_tests,
        r.partial_success_rate
    );
    if let Some(p) = &report.published {
        eprintln!(
            "published: full success {}/{} ({:.3}), partial success {}/{} ({:.3})",
            p.full_successes,
            p.n_tests,
            p.full_success_rate,
            p.partial_successes,
            p.n_tests,
            p.partial_success_rate
        );
    }
    for note in &report.divergences {
        eprintln!("divergence: {}", note.summary());
    }
    Ok(0)
}

fn report(args: ReportArgs) -> Result<u8, Failure> {
    let text = fs::read_to_string(&args.model)
        .with_context(|| format!("reading {}", args.model.display()))
        .code(IO)?;
    let model = ModelFile::from_json(&text)
        .with_context(|| format!("{}", args.model.display()))
        .code(VALIDATION)?;
    let net = model.network().code(VALIDATION)?;
    let out = match args.format {
        Format::Prose => net.to_prose(),
        Format::Summary => net.results_summary(),
        Format::Json => model.to_json(),
    };
    write_out(None, &out)?;
    Ok(0)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let catalog = catalog(cli.prompts.as_deref())?;
    match cli.command {
        Command::Extract(a) => extract(a, &catalog),
        Command::Replay(a) => replay(a, &catalog),
        Command::Eval(a) => eval(a),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
