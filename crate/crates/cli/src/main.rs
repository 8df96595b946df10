//! `todcsp`: delexicalize annotated dialogues, extract and solve their
//! constraint models, re-lexicalize them and score the result.
//!
//! Exit codes: 0 success, 1 usage, 2 invalid or unreadable data, 3 solution
//! cap too small for exact bucketing (with `--require-exact`), 4 LLM transport
//! failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use todcsp::constraints::{build_constraint_set, coverage_stats, CoverageRow};
use todcsp::corpus::{self, KbSource};
use todcsp::domain::sample_dialogue_kb;
use todcsp::eval::{evaluate_corpus, run_ablation, DialogueResult, EvalItem, EvalSettings};
use todcsp::llm::{LlmClient, LlmConfig, DEFAULT_TEMPERATURE};
use todcsp::multiwoz::{convert, ConvertOptions};
use todcsp::relex::{parse_llm_response, relex_most_frequent, relex_random};
use todcsp::report::{render_report, Format, Report, RunMetadata};
use todcsp::solver::DEFAULT_CAP;
use todcsp::{
    delexicalize, AblationConfig, Assignment, CspModel, CueLexicon, DelexDialogue, Dialogue, Error, KnowledgeBase,
    ModelFile, Ontology, Solver,
};

/// Metadata file written next to keyed outputs; loaders skip `_`-prefixed files.
const RUN_FILE: &str = "_run.json";

#[derive(Parser)]
#[command(name = "todcsp", version, about = "Dialogue consistency checking as constraint satisfaction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replace annotated spans with numbered placeholders
    Delex {
        /// Annotated dialogues: a JSON file (object or array) or a directory
        #[arg(long)]
        dialogues: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build one constraint model per dialogue
    Extract {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Families to leave out: C1,C3 or dialogic or domain
        #[arg(long)]
        ablate: Option<AblationConfig>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count (and optionally list) the solutions of extracted models
    Solve {
        /// Model files from `extract`
        #[arg(long)]
        models: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: u64,
        /// Write every solution found, one JSON object per line
        #[arg(long)]
        emit_solutions: Option<PathBuf>,
        #[arg(long)]
        require_exact: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sample a small kb per dialogue from a global kb
    SampleKb {
        #[arg(long)]
        delex: PathBuf,
        #[arg(long)]
        global_kb: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fill the placeholders of delexicalized dialogues
    Relex(RelexArgs),
    /// Judge and score assignments, writing a report
    Eval(EvalArgs),
    /// Per-family constraint coverage
    Stats {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        ablate: Option<AblationConfig>,
        #[arg(long, default_value = "markdown")]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Re-render a JSON report
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Convert MultiWOZ restaurant dialogues and database
    ConvertMultiwoz {
        /// MultiWOZ data.json
        #[arg(long)]
        data: PathBuf,
        /// restaurant_db.json
        #[arg(long)]
        db: PathBuf,
        /// Keep dialogues whose goal spans other domains too
        #[arg(long)]
        all_domains: bool,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct CorpusArgs {
    /// Delexicalized dialogues from `delex`
    #[arg(long)]
    delex: PathBuf,
    /// One kb file shared by all dialogues, or per-dialogue kbs
    #[arg(long)]
    kb: PathBuf,
    #[arg(long)]
    ontology: PathBuf,
    /// Cue word lists replacing the bundled ones
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Strategy {
    Random,
    MostFrequent,
    Llm,
    File,
}

impl Strategy {
    fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::MostFrequent => "most-frequent",
            Strategy::Llm => "llm",
            Strategy::File => "file",
        }
    }
}

#[derive(Args)]
struct RelexArgs {
    #[arg(long)]
    delex: PathBuf,
    #[arg(long)]
    kb: PathBuf,
    #[arg(long, value_enum)]
    strategy: Strategy,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random strategy: draw each value from its own slot only
    #[arg(long)]
    type_restricted: bool,
    /// File strategy: directory of `<dialogue_id>.txt` responses
    #[arg(long)]
    responses: Option<PathBuf>,
    #[arg(long, default_value = "gpt-3.5-turbo")]
    model_name: String,
    #[arg(long, default_value_t = DEFAULT_TEMPERATURE)]
    temperature: f64,
    /// Request timeout in seconds
    #[arg(long, default_value_t = 60)]
    timeout: u64,
    #[arg(long, default_value_t = 2)]
    retries: u32,
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    /// Where raw LLM responses are kept
    #[arg(long)]
    audit_dir: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Assignments keyed by dialogue id (directory or single JSON object)
    #[arg(long)]
    assignments: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: u64,
    #[arg(long)]
    require_exact: bool,
    #[arg(long)]
    ablate: Option<AblationConfig>,
    /// Add the ablation table
    #[arg(long)]
    ablation: bool,
    #[arg(long, default_value = "json")]
    format: Format,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Recorded in the report metadata
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Recorded in the report metadata
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    concurrency: Option<usize>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Usage(_) => 1,
            Error::CapTooSmall { .. } => 3,
            Error::Transport(_) => 4,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Delex { dialogues, out } => cmd_delex(&dialogues, &out),
        Command::Extract { corpus, ablate, out } => cmd_extract(&corpus, &ablate.unwrap_or_default(), &out),
        Command::Solve { models, cap, emit_solutions, require_exact, output } => {
            cmd_solve(&models, cap, emit_solutions.as_deref(), require_exact, output.as_deref())
        }
        Command::SampleKb { delex, global_kb, seed, out } => cmd_sample_kb(&delex, &global_kb, seed, &out),
        Command::Relex(args) => cmd_relex(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Stats { corpus, ablate, format, output } => {
            cmd_stats(&corpus, &ablate.unwrap_or_default(), format, output.as_deref())
        }
        Command::Report { input, format, output } => {
            let report: Report = corpus::read_json(&input)?;
            emit(output.as_deref(), &render_report(&report, format)?)
        }
        Command::ConvertMultiwoz { data, db, all_domains, limit, out } => {
            cmd_convert(&data, &db, ConvertOptions { restaurant_only: !all_domains, limit }, &out)
        }
    }
}

fn emit(output: Option<&Path>, text: &str) -> CliResult {
    match output {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|source| Error::Io { path: parent.to_path_buf(), source })?;
            }
            fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn write_run_file(dir: &Path, metadata: &RunMetadata) -> CliResult {
    corpus::write_json(&dir.join(RUN_FILE), metadata)?;
    Ok(())
}

fn load_delex(path: &Path) -> CliResult<Vec<DelexDialogue>> {
    let mut all: Vec<DelexDialogue> = corpus::load_many(path)?;
    all.sort_by(|a, b| a.dialogue_id.cmp(&b.dialogue_id));
    Ok(all)
}

fn load_lexicon(path: Option<&Path>) -> CliResult<CueLexicon> {
    Ok(match path {
        Some(p) => corpus::read_json(p)?,
        None => CueLexicon::default(),
    })
}

struct Corpus {
    dialogues: Vec<DelexDialogue>,
    kbs: KbSource,
    ontology: Ontology,
    lexicon: CueLexicon,
}

impl Corpus {
    fn load(args: &CorpusArgs) -> CliResult<Self> {
        // all inputs are read before any work starts
        let kbs = KbSource::load(&args.kb)?;
        let ontology = corpus::read_json(&args.ontology)?;
        let lexicon = load_lexicon(args.lexicon.as_deref())?;
        let dialogues = load_delex(&args.delex)?;
        for d in &dialogues {
            kbs.get(&d.dialogue_id).map_err(|e| with_path(e, &args.kb))?;
        }
        Ok(Corpus { dialogues, kbs, ontology, lexicon })
    }

    fn kb(&self, id: &str) -> &KnowledgeBase {
        self.kbs.get(id).expect("checked on load")
    }
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Validation(msg) => Error::Validation(format!("{}: {msg}", path.display())),
        other => other,
    }
}

fn cmd_delex(input: &Path, out: &Path) -> CliResult {
    let dialogues: Vec<Dialogue> = corpus::load_many(input)?;
    let delex = dialogues.iter().map(delexicalize).collect::<todcsp::Result<Vec<_>>>()?;
    corpus::write_keyed(out, delex.iter().map(|d| (d.dialogue_id.as_str(), d)))?;
    write_run_file(out, &RunMetadata::new(0, 0, None, &json!({"command": "delex"})))?;
    log::info!("{} dialogues delexicalized", delex.len());
    Ok(())
}

fn cmd_extract(args: &CorpusArgs, ablation: &AblationConfig, out: &Path) -> CliResult {
    let corpus = Corpus::load(args)?;
    let mut files = BTreeMap::new();
    for d in &corpus.dialogues {
        let (model, warnings) =
            CspModel::from_dialogue(d, &corpus.ontology, corpus.kb(&d.dialogue_id), &corpus.lexicon, ablation)?;
        for w in &warnings {
            log::warn!("{}: {w}", d.dialogue_id);
        }
        files.insert(d.dialogue_id.clone(), model.to_file(warnings));
    }
    corpus::write_keyed(out, files.iter().map(|(k, v)| (k.as_str(), v)))?;
    let config = json!({"command": "extract", "ablation": ablation, "lexicon": corpus.lexicon});
    write_run_file(out, &RunMetadata::new(0, 0, None, &config))
}

fn cap_error(ids: &[String], cap: u64) -> Failure {
    Failure {
        code: 3,
        message: format!(
            "cap {cap} reached below 101 solutions for {}; raise --cap to bucket exactly",
            ids.join(", ")
        ),
    }
}

fn cmd_solve(
    models: &Path,
    cap: u64,
    emit_solutions: Option<&Path>,
    require_exact: bool,
    output: Option<&Path>,
) -> CliResult {
    let files: BTreeMap<String, ModelFile> = corpus::load_keyed(models)?;
    let mut summaries = BTreeMap::new();
    let mut lines = String::new();
    for (id, file) in files {
        let model = CspModel::from_file(file, None).map_err(|e| with_path(e, models))?;
        let solver = Solver::new(&model);
        let summary = if emit_solutions.is_some() {
            let result = solver.enumerate(cap);
            for s in &result.solutions {
                let _ = writeln!(lines, "{}", json!({"dialogue_id": id, "solution": s}));
            }
            result.summary
        } else {
            solver.count(cap)
        };
        summaries.insert(id, summary);
    }
    let undecided: Vec<String> = summaries.iter().filter(|(_, s)| s.bucket.is_none()).map(|(k, _)| k.clone()).collect();
    if require_exact && !undecided.is_empty() {
        return Err(cap_error(&undecided, cap));
    }
    if let Some(path) = emit_solutions {
        emit(Some(path), &lines)?;
    }
    let metadata = RunMetadata::new(0, cap, None, &json!({"command": "solve", "cap": cap}));
    let doc = json!({"metadata": metadata, "results": summaries});
    emit(output, &(serde_json::to_string_pretty(&doc).expect("summary serializes") + "\n"))
}

fn cmd_sample_kb(delex: &Path, global: &Path, seed: u64, out: &Path) -> CliResult {
    let global_kb: KnowledgeBase = corpus::read_json(global)?;
    let dialogues = load_delex(delex)?;
    let mut kbs = BTreeMap::new();
    for d in &dialogues {
        kbs.insert(d.dialogue_id.clone(), sample_dialogue_kb(&global_kb, d, seed)?);
    }
    corpus::write_keyed(out, kbs.iter().map(|(k, v)| (k.as_str(), v)))?;
    write_run_file(out, &RunMetadata::new(seed, 0, None, &json!({"command": "sample-kb", "seed": seed})))
}

fn cmd_relex(args: &RelexArgs) -> CliResult {
    let kbs = KbSource::load(&args.kb)?;
    let dialogues = load_delex(&args.delex)?;
    let items = dialogues
        .iter()
        .map(|d| Ok((d.clone(), kbs.get(&d.dialogue_id).map_err(|e| with_path(e, &args.kb))?.clone())))
        .collect::<todcsp::Result<Vec<(DelexDialogue, KnowledgeBase)>>>()?;

    let assignments: BTreeMap<String, Assignment> = match args.strategy {
        Strategy::Random => items
            .iter()
            .map(|(d, kb)| (d.dialogue_id.clone(), relex_random(d, kb, args.seed, args.type_restricted)))
            .collect(),
        Strategy::MostFrequent => items
            .iter()
            .map(|(d, kb)| (d.dialogue_id.clone(), relex_most_frequent(d, kb)))
            .collect(),
        Strategy::File => {
            let dir = args
                .responses
                .as_ref()
                .ok_or_else(|| Error::Usage("--strategy file needs --responses".into()))?;
            let mut out = BTreeMap::new();
            for (d, _) in &items {
                let path = dir.join(format!("{}.txt", d.dialogue_id));
                let text = fs::read_to_string(&path).map_err(|source| Error::Io { path, source })?;
                let (a, warnings) = parse_llm_response(&text, d);
                for w in warnings {
                    log::warn!("{w}");
                }
                out.insert(d.dialogue_id.clone(), a);
            }
            out
        }
        Strategy::Llm => {
            let mut config = LlmConfig::from_env(&args.model_name)?;
            config.temperature = args.temperature;
            config.timeout = Duration::from_secs(args.timeout);
            config.retries = args.retries;
            config.audit_dir = args.audit_dir.clone();
            let client = LlmClient::new(config)?;
            client
                .relexicalize_all(&items, args.concurrency)?
                .into_iter()
                .map(|(k, o)| (k, o.assignment))
                .collect()
        }
    };
    corpus::write_keyed(&args.out, assignments.iter().map(|(k, v)| (k.as_str(), v)))?;
    let config = json!({
        "command": "relex",
        "strategy": args.strategy.name(),
        "seed": args.seed,
        "type_restricted": args.type_restricted,
        "model": matches!(args.strategy, Strategy::Llm).then_some(&args.model_name),
        "temperature": matches!(args.strategy, Strategy::Llm).then_some(args.temperature),
    });
    let meta = RunMetadata::new(args.seed, 0, Some(args.strategy.name().to_string()), &config);
    write_run_file(&args.out, &meta)
}

fn coverage(corpus: &Corpus, ablation: &AblationConfig) -> CliResult<Vec<CoverageRow>> {
    let sets = corpus
        .dialogues
        .iter()
        .map(|d| {
            build_constraint_set(d, &corpus.ontology, corpus.kb(&d.dialogue_id), &corpus.lexicon, ablation)
                .map(|x| x.set)
        })
        .collect::<todcsp::Result<Vec<_>>>()?;
    Ok(coverage_stats(&sets))
}

fn cmd_eval(args: &EvalArgs) -> CliResult {
    if let Some(n) = args.concurrency {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Usage(e.to_string()))?;
    }
    let corpus = Corpus::load(&args.corpus)?;
    let mut assignments: BTreeMap<String, Assignment> = corpus::load_keyed(&args.assignments)?;
    let ablation = args.ablate.clone().unwrap_or_default();
    let items = corpus
        .dialogues
        .iter()
        .map(|d| {
            let assignment = assignments.remove(&d.dialogue_id).ok_or_else(|| {
                Error::Validation(format!("{}: no assignment for dialogue {:?}", args.assignments.display(), d.dialogue_id))
            })?;
            Ok(EvalItem { delex: d.clone(), kb: corpus.kb(&d.dialogue_id).clone(), assignment })
        })
        .collect::<todcsp::Result<Vec<_>>>()?;
    let settings = EvalSettings { ontology: &corpus.ontology, lexicon: &corpus.lexicon, cap: args.cap };
    let results: Vec<DialogueResult> = evaluate_corpus(&items, &settings, &ablation)?;
    let undecided: Vec<String> = results.iter().filter(|r| r.bucket.is_none()).map(|r| r.dialogue_id.clone()).collect();
    if !undecided.is_empty() {
        if args.require_exact {
            return Err(cap_error(&undecided, args.cap));
        }
        log::warn!("{} dialogues reached the cap below 101 solutions and have no group", undecided.len());
    }
    let ablation_rows = if args.ablation {
        run_ablation(&items, &settings, &AblationConfig::standard_table())?
    } else {
        Vec::new()
    };
    let config = json!({
        "command": "eval",
        "cap": args.cap,
        "ablation": ablation,
        "ablation_table": args.ablation,
        "lexicon": corpus.lexicon,
        "seed": args.seed,
        "strategy": args.strategy,
    });
    let metadata = RunMetadata::new(args.seed, args.cap, args.strategy.clone(), &config);
    let report = Report::new(metadata, results, coverage(&corpus, &ablation)?, ablation_rows)?;
    emit(args.output.as_deref(), &render_report(&report, args.format)?)
}

fn cmd_stats(args: &CorpusArgs, ablation: &AblationConfig, format: Format, output: Option<&Path>) -> CliResult {
    let corpus = Corpus::load(args)?;
    let rows = coverage(&corpus, ablation)?;
    let config = json!({"command": "stats", "ablation": ablation, "lexicon": corpus.lexicon});
    let metadata = RunMetadata::new(0, 0, None, &config);
    let variables: usize = corpus.dialogues.iter().map(|d| d.variables.len()).sum();
    let text = match format {
        Format::Json => {
            let doc = json!({"metadata": metadata, "dialogues": corpus.dialogues.len(), "variables": variables, "coverage": rows});
            serde_json::to_string_pretty(&doc).expect("stats serialize") + "\n"
        }
        Format::Csv => {
            let mut s = String::from("constraint,variables,coverage\n");
            for r in &rows {
                let _ = writeln!(s, "{},{},{}", r.family, r.variables, r.proportion);
            }
            s
        }
        Format::Markdown => {
            let mut s = format!(
                "# Constraint coverage\n\n- version: {}\n- config hash: {}\n- dialogues: {}\n- variables: {variables}\n\n",
                metadata.tool_version,
                metadata.config_hash,
                corpus.dialogues.len()
            );
            s.push_str("| Constraint | #Variables | %Coverage |\n|---|---|---|\n");
            for r in &rows {
                let _ = writeln!(s, "| {} | {} | {:.2} |", r.family, r.variables, r.proportion);
            }
            s
        }
    };
    emit(output, &text)
}

fn cmd_convert(data: &Path, db: &Path, options: ConvertOptions, out: &Path) -> CliResult {
    let data_json: serde_json::Value = corpus::read_json(data)?;
    let db_json: serde_json::Value = corpus::read_json(db)?;
    let converted = convert(&data_json, &db_json, &options).map_err(|e| with_path(e, data))?;
    for w in &converted.warnings {
        log::warn!("{w}");
    }
    let dir = out.join("dialogues");
    corpus::write_keyed(&dir, converted.dialogues.iter().map(|d| (d.dialogue_id.as_str(), d)))?;
    corpus::write_json(&out.join("global_kb.json"), &converted.global_kb)?;
    corpus::write_json(&out.join("ontology.json"), &converted.ontology)?;
    let config = json!({"command": "convert-multiwoz", "restaurant_only": options.restaurant_only, "limit": options.limit});
    write_run_file(out, &RunMetadata::new(0, 0, None, &config))?;
    let mut stderr = std::io::stderr();
    let _ = writeln!(
        stderr,
        "{} dialogues, {} kb instances, {} warnings",
        converted.dialogues.len(),
        converted.global_kb.len(),
        converted.warnings.len()
    );
    Ok(())
}
