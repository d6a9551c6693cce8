//! `lexdecomp` command-line driver.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
//! Failures are reported as one line on stderr:
//! `lexdecomp: error[<kind>]: <message>`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lexdecomp::data::{load_checkpoint, load_dataset, save_checkpoint, split_dev, PairDataset, Task};
use lexdecomp::embeddings::{load_embeddings, tokenize, EmbeddingStore, OovPolicy};
use lexdecomp::eval::{evaluate, metrics_for, ranked_set, score_dataset};
use lexdecomp::experiment::{run_ablation, AblationSpec, Axis, MetricKind};
use lexdecomp::metrics::write_trec_files;
use lexdecomp::model::{parse_kv, train, train_with_dev, Model, ModelConfig};
use lexdecomp::numerics::norm;

#[derive(Parser, Debug)]
#[command(name = "lexdecomp", version, about = "Sentence similarity by lexical decomposition and composition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write the best checkpoint plus a training log.
    Train(TrainArgs),
    /// Score a labelled dataset and print MAP/MRR or Acc/F1.
    Eval(EvalArgs),
    /// Print one score per sentence pair.
    Predict(PredictArgs),
    /// Dump the intermediates of a single sentence pair as CSV files.
    Inspect(InspectArgs),
    /// Run an ablation sweep over matching, decomposition or filter types.
    Ablate(AblateArgs),
}

/// Model configuration: an optional `key = value` file, overridden by flags.
#[derive(Args, Debug, Default)]
struct ModelFlags {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// max | global | local
    #[arg(long = "match")]
    match_kind: Option<String>,
    /// Window radius for local matching.
    #[arg(long)]
    window: Option<usize>,
    /// rigid | linear | orthogonal
    #[arg(long)]
    decomp: Option<String>,
    /// Filter groups, e.g. "1:500,2:500,3:500".
    #[arg(long)]
    filters: Option<String>,
    /// Multiplies every filter count (desk-scale runs).
    #[arg(long)]
    scale: Option<f64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value = "ranking")]
    task: String,
    /// Output directory for the log (and the checkpoint unless --checkpoint is given).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Hold out POS:NEG instances of the training set as dev data when --dev is absent.
    #[arg(long, num_args = 0..=1, default_missing_value = "100:100")]
    dev_split: Option<String>,
    /// Count queries without a positive candidate as 0 instead of skipping them.
    #[arg(long)]
    keep_unanswerable: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value = "ranking")]
    task: String,
    /// Write trec_eval qrels and results files into this directory.
    #[arg(long)]
    trec: Option<PathBuf>,
    #[arg(long)]
    keep_unanswerable: bool,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    /// Dataset to score; the label column is ignored.
    #[arg(long, conflicts_with_all = ["s", "t"])]
    test: Option<PathBuf>,
    #[arg(long, default_value = "ranking")]
    task: String,
    #[arg(long, requires = "t")]
    s: Option<String>,
    #[arg(long, requires = "s")]
    t: Option<String>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[command(flatten)]
    model: ModelFlags,
    /// Trained model; without it a freshly initialised model is built from the config.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    s: String,
    #[arg(long)]
    t: String,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    model: ModelFlags,
    /// matching | decomposition | filters | all
    #[arg(long, default_value = "all")]
    axis: String,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, default_value = "ranking")]
    task: String,
    /// map | mrr | acc | f1 (default: MAP for ranking, Acc for classification).
    #[arg(long)]
    metric: Option<String>,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// Filters per window type in the filters sweep (default 500, multiplied by --scale).
    #[arg(long)]
    per_type: Option<usize>,
    #[arg(long, default_value = "ablation")]
    out: PathBuf,
    #[arg(long)]
    keep_unanswerable: bool,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(lexdecomp::Error),
}

impl From<lexdecomp::Error> for CliError {
    fn from(e: lexdecomp::Error) -> Self {
        match e {
            lexdecomp::Error::Config(msg) => CliError::Usage(msg),
            other => CliError::Runtime(other),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        use lexdecomp::Error as E;
        match self {
            CliError::Usage(_) => "usage",
            CliError::Runtime(e) => match e {
                E::DimensionMismatch { .. } | E::ShapeMismatch { .. } => "shape",
                E::NonFinite(_) => "non_finite",
                E::Empty(_) => "empty",
                E::Config(_) => "usage",
                E::Parse { .. } => "parse",
                E::Checkpoint(_) | E::TruncatedCheckpoint(_) => "checkpoint",
                E::NoEvaluableQueries => "no_evaluable_queries",
                E::InsufficientInstances { .. } => "insufficient_instances",
                E::StaleCache(_) => "internal",
                E::Io { .. } => "io",
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(msg) => msg.clone(),
            CliError::Runtime(e) => e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LEXDECOMP_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            let first = first.trim_start_matches("error: ");
            eprintln!("lexdecomp: error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Ablate(a) => cmd_ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.message().replace(['\n', '\r'], " ");
            eprintln!("lexdecomp: error[{}]: {msg}", e.kind());
            ExitCode::from(e.exit_code())
        }
    }
}

/// Required inputs are checked before any work starts.
fn require_file(what: &str, path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} file not found: {}", path.display())))
    }
}

fn parse_task(s: &str) -> CliResult<Task> {
    Ok(s.parse()?)
}

fn build_config(flags: &ModelFlags) -> CliResult<ModelConfig> {
    let mut cfg = ModelConfig::default();
    if let Some(path) = &flags.config {
        require_file("config", path)?;
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply(&parse_kv(&text)?)?;
    }
    let mut overrides = BTreeMap::new();
    let mut put = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            overrides.insert(k.to_string(), v);
        }
    };
    put("seed", flags.seed.map(|v| v.to_string()));
    put("epochs", flags.epochs.map(|v| v.to_string()));
    put("match", flags.match_kind.clone());
    put("window", flags.window.map(|v| v.to_string()));
    put("decomp", flags.decomp.clone());
    put("filters", flags.filters.clone());
    cfg.apply(&overrides)?;
    if let Some(scale) = flags.scale {
        cfg = cfg.scaled(scale)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Loads the embeddings and aligns the config with their dimension.
fn load_store(path: &Path, cfg: &mut ModelConfig) -> CliResult<EmbeddingStore> {
    let mut store = load_embeddings(path, cfg.oov_policy)?;
    store.set_lowercase(cfg.lowercase);
    if cfg.embedding_dim != store.dim() {
        log::info!("embedding_dim set to {} from {}", store.dim(), path.display());
        cfg.embedding_dim = store.dim();
    }
    Ok(store)
}

fn store_for_model(path: &Path, model: &Model) -> CliResult<EmbeddingStore> {
    let mut store = load_embeddings(path, model.config.oov_policy)?;
    store.set_lowercase(model.config.lowercase);
    model.check_store(&store)?;
    Ok(store)
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| lexdecomp::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| {
        CliError::Runtime(lexdecomp::Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let task = parse_task(&a.task)?;
    let mut cfg = build_config(&a.model)?;
    require_file("embeddings", &a.embeddings)?;
    require_file("train", &a.train)?;
    if let Some(dev) = &a.dev {
        require_file("dev", dev)?;
    }
    if a.dev.is_some() && a.dev_split.is_some() {
        return Err(CliError::Usage("--dev and --dev-split are mutually exclusive".into()));
    }
    let split = a.dev_split.as_deref().map(parse_split).transpose()?;

    let store = load_store(&a.embeddings, &mut cfg)?;
    let mut train_set = load_dataset(&a.train, task)?;
    let dev_set = match (&a.dev, split) {
        (Some(path), _) => Some(load_dataset(path, task)?),
        (None, Some((pos, neg))) => {
            let (rest, dev) = split_dev(&train_set, pos, neg, cfg.seed)?;
            train_set = rest;
            Some(dev)
        }
        (None, None) => None,
    };
    log::info!(
        "train: {} records ({} positive); dev: {}",
        train_set.len(),
        train_set.positives(),
        dev_set.as_ref().map_or(0, |d| d.len())
    );

    let drop = !a.keep_unanswerable;
    let mut model = Model::new(cfg)?;
    let data = train_set.instances();
    let report = match &dev_set {
        Some(dev) => train_with_dev(&mut model, &store, &data, |m| {
            let scores = score_dataset(m, &store, dev)?;
            Ok(metrics_for(dev, &scores, drop)?.primary())
        })?,
        None => train(&mut model, &store, &data)?,
    };
    model.embedding_fingerprint = Some(store.fingerprint().to_string());

    let checkpoint = a.checkpoint.clone().unwrap_or_else(|| a.out.join("model.ckpt"));
    if let Some(dir) = checkpoint.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| lexdecomp::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    save_checkpoint(&model, &checkpoint)?;

    let mut log_text = String::new();
    for (k, v) in model.config.to_kv() {
        let _ = writeln!(log_text, "# {k} = {v}");
    }
    for e in &report.epochs {
        let _ = writeln!(log_text, "{}", e.to_record());
    }
    if let Some(best) = report.best_epoch {
        let _ = writeln!(log_text, "best_epoch={best}");
    }
    write_file(&a.out.join("train_log.txt"), &log_text)?;

    match &dev_set {
        Some(dev) if !dev.is_empty() => {
            let ev = evaluate(&model, &store, dev, drop)?;
            println!("dev {}", ev.metrics.summary());
        }
        _ => match report.epochs.last() {
            Some(last) => println!("train loss {:.4}", last.mean_loss),
            None => println!("no training epochs run"),
        },
    }
    println!("checkpoint {}", checkpoint.display());
    Ok(())
}

fn parse_split(s: &str) -> CliResult<(usize, usize)> {
    let bad = || CliError::Usage(format!("--dev-split expects POS:NEG, got `{s}`"));
    let (p, n) = s.split_once(':').ok_or_else(bad)?;
    Ok((p.trim().parse().map_err(|_| bad())?, n.trim().parse().map_err(|_| bad())?))
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let task = parse_task(&a.task)?;
    require_file("checkpoint", &a.checkpoint)?;
    require_file("embeddings", &a.embeddings)?;
    require_file("test", &a.test)?;
    let model = load_checkpoint(&a.checkpoint)?;
    let store = store_for_model(&a.embeddings, &model)?;
    let test = load_dataset(&a.test, task)?;
    let ev = evaluate(&model, &store, &test, !a.keep_unanswerable)?;
    println!("{}", ev.metrics.summary());
    if let Some(dir) = &a.trec {
        if task != Task::Ranking {
            return Err(CliError::Usage("--trec needs a ranking dataset".into()));
        }
        std::fs::create_dir_all(dir).map_err(|e| lexdecomp::Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        let set = ranked_set(&test, &ev.scores);
        write_trec_files(&set, &dir.join("qrels.txt"), &dir.join("results.txt"), "lexdecomp")?;
    }
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> CliResult<()> {
    require_file("checkpoint", &a.checkpoint)?;
    require_file("embeddings", &a.embeddings)?;
    let model = load_checkpoint(&a.checkpoint)?;
    match (&a.test, &a.s, &a.t) {
        (Some(path), _, _) => {
            let task = parse_task(&a.task)?;
            require_file("test", path)?;
            let store = store_for_model(&a.embeddings, &model)?;
            let ds = load_dataset(path, task)?;
            for score in score_dataset(&model, &store, &ds)? {
                println!("{score}");
            }
        }
        (None, Some(s), Some(t)) => {
            let store = store_for_model(&a.embeddings, &model)?;
            println!("{}", model.score(&store, &tokenize(s), &tokenize(t))?);
        }
        _ => return Err(CliError::Usage("predict needs --test or both --s and --t".into())),
    }
    Ok(())
}

fn cmd_inspect(a: InspectArgs) -> CliResult<()> {
    require_file("embeddings", &a.embeddings)?;
    let (model, store) = match &a.checkpoint {
        Some(path) => {
            require_file("checkpoint", path)?;
            let model = load_checkpoint(path)?;
            let store = store_for_model(&a.embeddings, &model)?;
            (model, store)
        }
        None => {
            let mut cfg = build_config(&a.model)?;
            let store = load_store(&a.embeddings, &mut cfg)?;
            (Model::new(cfg)?, store)
        }
    };
    let s = tokenize(&a.s);
    let t = tokenize(&a.t);
    if store.oov_policy() == OovPolicy::Zero {
        for (name, toks) in [("s", &s), ("t", &t)] {
            if !toks.is_empty() && toks.iter().all(|w| !store.contains(w)) {
                log::warn!("sentence {name} has no in-vocabulary words; all its vectors are zero");
                eprintln!("lexdecomp: warning: sentence {name} is entirely out of vocabulary");
            }
        }
    }
    let trace = model.trace(&store, &s, &t)?;
    let an = &trace.analysis;

    let mut sim = String::from("s_index,s_token");
    for (j, tok) in t.iter().enumerate() {
        let _ = write!(sim, ",t{j}:{}", csv_field(tok));
    }
    sim.push('\n');
    for (i, tok) in s.iter().enumerate() {
        let _ = write!(sim, "{i},{}", csv_field(tok));
        for j in 0..t.len() {
            let _ = write!(sim, ",{}", an.similarity.get(i, j));
        }
        sim.push('\n');
    }

    let mut best = String::from("sentence,index,token,best_index,best_token\n");
    for (name, toks, other, m) in [("s", &s, &t, &an.s_match), ("t", &t, &s, &an.t_match)] {
        for (i, (tok, &k)) in toks.iter().zip(&m.best_index).enumerate() {
            let _ = writeln!(best, "{name},{i},{},{k},{}", csv_field(tok), csv_field(&other[k]));
        }
    }

    let mut norms = String::from("sentence,index,token,plus_norm,minus_norm\n");
    for (name, toks, parts) in [("s", &s, &an.s_parts), ("t", &t, &an.t_parts)] {
        for (i, tok) in toks.iter().enumerate() {
            let _ = writeln!(
                norms,
                "{name},{i},{},{},{}",
                csv_field(tok),
                norm(parts.plus.row(i))?,
                norm(parts.minus.row(i))?
            );
        }
    }

    write_file(&a.out.join("similarity.csv"), &sim)?;
    write_file(&a.out.join("best_index.csv"), &best)?;
    write_file(&a.out.join("norms.csv"), &norms)?;
    write_file(&a.out.join("score.csv"), &format!("score\n{}\n", trace.score))?;
    println!("{}", trace.score);
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn cmd_ablate(a: AblateArgs) -> CliResult<()> {
    let task = parse_task(&a.task)?;
    let axes: Vec<Axis> = match a.axis.as_str() {
        "all" => vec![Axis::Matching, Axis::Decomposition, Axis::Filters],
        other => vec![other.parse()?],
    };
    let metric = match &a.metric {
        Some(m) => m.parse()?,
        None => MetricKind::default_for(task),
    };
    if a.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    let mut base = build_config(&a.model)?;
    let per_type = a
        .per_type
        .unwrap_or_else(|| ((500.0 * a.model.scale.unwrap_or(1.0)).round() as usize).max(1));
    require_file("embeddings", &a.embeddings)?;
    require_file("train", &a.train)?;
    require_file("dev", &a.dev)?;
    let store = load_store(&a.embeddings, &mut base)?;
    let train_set: PairDataset = load_dataset(&a.train, task)?;
    let dev_set = load_dataset(&a.dev, task)?;

    // Validate every sweep before training any of them.
    let specs: Vec<AblationSpec> = axes
        .iter()
        .map(|&axis| {
            let mut spec = AblationSpec::standard(axis, per_type, metric);
            spec.repetitions = a.reps;
            spec.base_seed = base.seed;
            spec.variant_configs(&base).map(|_| spec)
        })
        .collect::<Result<_, _>>()?;

    for spec in &specs {
        let table = run_ablation(spec, &base, &train_set, &dev_set, &store, !a.keep_unanswerable)?;
        table.write(&a.out)?;
        for row in table.summary() {
            println!("{} {} {} {:.4} ± {:.4}", spec.axis, row.variant, metric, row.mean, row.sd);
        }
    }
    Ok(())
}
