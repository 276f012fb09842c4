//! `mia`: evaluate membership-inference signals and search for new ones.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use thiserror::Error;

use mia_cli::{candidate_binary, sibling_binary};
use mia_core::datamodel::{
    load_dataset, split_dataset, write_logit_dir, write_text_samples, DataError, Dataset,
};
use mia_core::evaluation::{evaluate_signal, roc_curve, write_roc_csv, EvalError, REPORTED_FPRS};
use mia_core::search::db::ExperimentDb;
use mia_core::search::diversity::{pairwise_design_similarity, pairwise_similarity, summarize};
use mia_core::search::engine::LoopOptions;
use mia_core::search::offline::{design_for, write_wrapper};
use mia_core::search::plugin::{ProcessGenerator, ProcessJudge, ProcessPlugin};
use mia_core::search::{
    main_loop, Design, ExploitMode, ProcessExecutor, SearchConfig, SearchError, SeedCandidate,
};
use mia_core::signals::{Signal, SignalError, SIGNAL_NAMES};

#[derive(Parser)]
#[command(name = "mia", version, about = "Membership-inference signal evaluation and search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score a dataset with one signal and report AUC and TPR at low FPR.
    Eval(EvalArgs),
    /// Write the ROC curve of one signal as CSV.
    Roc(RocArgs),
    /// Seeded 50/50 split of a dataset.
    Split(SplitArgs),
    /// Run the explore/exploit search with generator and judge plugins.
    Search(Box<SearchArgs>),
    /// Pairwise similarity of design descriptions.
    Diversity(DiversityArgs),
}

#[derive(clap::Args)]
struct SignalArgs {
    /// Text JSONL file or directory of logit containers.
    #[arg(long)]
    data: PathBuf,
    /// Registered signal name.
    #[arg(long)]
    signal: String,
    /// Signal parameter as key=value; repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
    /// Negate scores; the unflipped AUC is reported as raw_auc.
    #[arg(long)]
    flip: bool,
    /// Worker threads for per-sample scoring.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(clap::Args)]
struct EvalArgs {
    #[command(flatten)]
    signal: SignalArgs,
    /// Metrics report JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the ROC curve here.
    #[arg(long)]
    roc: Option<PathBuf>,
}

#[derive(clap::Args)]
struct RocArgs {
    #[command(flatten)]
    signal: SignalArgs,
    /// ROC CSV (`fpr,tpr`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: PathBuf,
}

#[derive(clap::Args)]
struct SearchArgs {
    /// JSON file with SearchConfig fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// Receives db.jsonl, runs.jsonl, best.json and candidates/.
    #[arg(long)]
    out_dir: PathBuf,
    /// Generator plugin executable [default: bundled offline generator].
    #[arg(long)]
    generator: Option<PathBuf>,
    /// Judge plugin executable [default: bundled offline judge].
    #[arg(long)]
    judge: Option<PathBuf>,
    /// Seed candidate executable.
    #[arg(long, conflicts_with = "seed_signal", requires = "seed_idea")]
    seed_code: Option<PathBuf>,
    #[arg(long, requires = "seed_code")]
    seed_idea: Option<String>,
    #[arg(long, requires = "seed_code", default_value = "")]
    seed_justification: String,
    /// Seed from a registered signal spec, e.g. "max_coverage order=4".
    #[arg(long)]
    seed_signal: Option<String>,

    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    timeout_seconds: Option<u64>,
    #[arg(long)]
    explore_period: Option<usize>,
    #[arg(long)]
    top_k_exploit: Option<usize>,
    #[arg(long)]
    explorer_seed_count: Option<usize>,
    #[arg(long)]
    explorer_refine_budget: Option<usize>,
    #[arg(long)]
    max_fix_rounds: Option<usize>,
    #[arg(long)]
    retrieval_k: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    rng_seed: Option<u64>,
    /// cluster or flat.
    #[arg(long)]
    exploit_mode: Option<ExploitMode>,
    #[arg(long)]
    max_attempts: Option<usize>,
}

#[derive(clap::Args)]
struct DiversityArgs {
    /// Experiment journal; descriptions come from each record's analysis.
    #[arg(long, conflicts_with = "descriptions", required_unless_present = "descriptions")]
    journal: Option<PathBuf>,
    /// JSONL of {"id", "description"}.
    #[arg(long)]
    descriptions: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    embed_dim: usize,
    /// Pairwise similarities as CSV (`i,j,similarity`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Plugin(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Plugin(_) => 2,
            CliError::Search(e) if e.is_runtime() => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn parse_signal(args: &SignalArgs) -> Result<Signal, CliError> {
    let mut params = BTreeMap::new();
    for p in &args.params {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--param expects KEY=VALUE, got `{p}`")))?;
        params.insert(k.to_string(), v.to_string());
    }
    let mut signal = Signal::from_parts(&args.signal, &params)?;
    signal.flip ^= args.flip;
    Ok(signal)
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let signal = parse_signal(&args.signal)?;
    let data = load_dataset(&args.signal.data)?;
    let (report, scores) = evaluate_signal(&data, &signal, args.signal.jobs.max(1))?;
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    if let Some(path) = &args.roc {
        write_roc_csv(path, &roc_curve(&scores)?)?;
    }
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "signal: {signal}");
    let _ = writeln!(out, "auc: {:.6}", report.auc);
    if let Some(raw) = report.raw_auc {
        let _ = writeln!(out, "raw_auc: {raw:.6}");
    }
    for target in REPORTED_FPRS {
        let tpr = report.tpr_at(target).unwrap_or(f64::NAN);
        let _ = writeln!(out, "tpr@{target}: {tpr:.6}");
    }
    Ok(())
}

fn cmd_roc(args: RocArgs) -> Result<(), CliError> {
    let signal = parse_signal(&args.signal)?;
    let data = load_dataset(&args.signal.data)?;
    let (_, scores) = evaluate_signal(&data, &signal, args.signal.jobs.max(1))?;
    let points = roc_curve(&scores)?;
    write_roc_csv(&args.out, &points)?;
    println!("{} points written to {}", points.len(), args.out.display());
    Ok(())
}

fn cmd_split(args: SplitArgs) -> Result<(), CliError> {
    let data = load_dataset(&args.data)?;
    let (train, test) = split_dataset(&data, args.seed)?;
    for (part, path) in [(&train, &args.train_out), (&test, &args.test_out)] {
        match part {
            Dataset::Text(s) => write_text_samples(path, s)?,
            Dataset::Logit(s) => write_logit_dir(path, s)?,
        }
    }
    println!("train: {} samples, test: {} samples", train.len(), test.len());
    Ok(())
}

fn search_config(args: &SearchArgs) -> Result<SearchConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => SearchConfig::default(),
    };
    macro_rules! apply {
        ($($field:ident),*) => {
            $(if let Some(v) = args.$field { config.$field = v; })*
        };
    }
    apply!(
        budget,
        timeout_seconds,
        explore_period,
        top_k_exploit,
        explorer_seed_count,
        explorer_refine_budget,
        max_fix_rounds,
        retrieval_k,
        embed_dim,
        rng_seed,
        exploit_mode
    );
    if args.max_attempts.is_some() {
        config.max_attempts = args.max_attempts;
    }
    config.validate()?;
    Ok(config)
}

fn cmd_search(args: SearchArgs) -> Result<(), CliError> {
    let config = search_config(&args)?;
    let timeout = Duration::from_secs(config.timeout_seconds);
    let plugin = |path: Option<&PathBuf>, default: &str| {
        let path = path.cloned().unwrap_or_else(|| sibling_binary(default));
        ProcessPlugin::new(&path, Vec::new(), timeout).map_err(|e| CliError::Plugin(e.0))
    };
    let mut generator = ProcessGenerator(plugin(args.generator.as_ref(), "mia-offline-generator")?);
    let mut judge = ProcessJudge(plugin(args.judge.as_ref(), "mia-offline-judge")?);
    let seed_signal = args.seed_signal.as_deref().map(str::parse::<Signal>).transpose()?;
    let data = load_dataset(&args.data)?;

    fs::create_dir_all(&args.out_dir).map_err(io_err(&args.out_dir))?;
    let out_dir = args.out_dir.canonicalize().map_err(io_err(&args.out_dir))?;
    let workdir = out_dir.join("candidates");
    fs::create_dir_all(&workdir).map_err(io_err(&workdir))?;

    let seed = match (&args.seed_code, seed_signal) {
        (Some(code), _) => {
            let code = code.canonicalize().map_err(io_err(code))?;
            Some(SeedCandidate {
                design: Design::new(
                    args.seed_idea.as_deref().unwrap_or_default(),
                    &args.seed_justification,
                    &code.display().to_string(),
                ),
                code_ref: code.display().to_string(),
            })
        }
        (None, Some(signal)) => {
            let path = write_wrapper(&candidate_binary(), &workdir, "seed", &signal.to_string())
                .map_err(|e| CliError::Usage(e.0))?;
            Some(SeedCandidate {
                design: design_for(&signal).into(),
                code_ref: path.display().to_string(),
            })
        }
        (None, None) => None,
    };

    let mut db = ExperimentDb::with_journal(&out_dir.join("db.jsonl"), config.embed_dim)?;
    let mut executor = ProcessExecutor {
        base_dir: Some(out_dir.clone()),
    };
    let options = LoopOptions {
        workdir: workdir.clone(),
        code_root: Some(out_dir.clone()),
        run_journal: Some(out_dir.join("runs.jsonl")),
    };
    let outcome = main_loop(
        &config,
        &mut db,
        &data,
        &mut generator,
        &mut judge,
        &mut executor,
        seed.as_ref(),
        &options,
    )?;
    let best = db.best().ok_or(SearchError::NoScoredRecords)?;
    write_json(&out_dir.join("best.json"), best)?;
    println!(
        "{} records from {} attempts ({} executions); best #{} auc {:.6}: {}",
        db.len(),
        outcome.attempts,
        outcome.executions,
        best.id,
        best.auc().unwrap_or(f64::NAN),
        best.design.idea
    );
    Ok(())
}

#[derive(serde::Deserialize)]
struct DescriptionLine {
    id: serde_json::Value,
    description: String,
}

fn cmd_diversity(args: DiversityArgs) -> Result<(), CliError> {
    let (ids, sims) = if let Some(path) = &args.journal {
        let db = ExperimentDb::load(path, args.embed_dim)?;
        let ids: Vec<String> = db.records().iter().map(|r| r.id.to_string()).collect();
        (ids, pairwise_design_similarity(db.records(), args.embed_dim)?)
    } else {
        let path = args.descriptions.as_ref().expect("clap enforces the group");
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut ids = Vec::new();
        let mut descriptions = Vec::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let d: DescriptionLine = serde_json::from_str(line)
                .map_err(|e| CliError::Usage(format!("{} line {}: {e}", path.display(), n + 1)))?;
            ids.push(match d.id {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            });
            descriptions.push(d.description);
        }
        if args.embed_dim < mia_core::search::embed::MIN_DIM {
            return Err(CliError::Usage(format!(
                "--embed-dim must be at least {}",
                mia_core::search::embed::MIN_DIM
            )));
        }
        (ids, pairwise_similarity(&descriptions, args.embed_dim)?)
    };
    if let Some(out) = &args.out {
        let mut csv = String::from("i,j,similarity\n");
        let mut k = 0;
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                csv.push_str(&format!("{},{},{}\n", ids[i], ids[j], sims[k]));
                k += 1;
            }
        }
        fs::write(out, csv).map_err(io_err(out))?;
    }
    let summary = summarize(ids.len(), &sims);
    println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    Ok(())
}

fn signal_list() -> String {
    format!("Signals:\n  {}", SIGNAL_NAMES.join("\n  "))
}

fn main() -> ExitCode {
    let mut command = Cli::command().after_help(signal_list());
    command = command.mut_subcommand("eval", |c| c.after_help(signal_list()));
    command = command.mut_subcommand("roc", |c| c.after_help(signal_list()));
    let cli = match command
        .try_get_matches()
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Eval(a) => cmd_eval(a),
        Command::Roc(a) => cmd_roc(a),
        Command::Split(a) => cmd_split(a),
        Command::Search(a) => cmd_search(*a),
        Command::Diversity(a) => cmd_diversity(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mia: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
