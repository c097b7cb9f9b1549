//! Command-line front end: `validate`, `eval`, `train-toy`, `triplets`, `report`.
//!
//! Exit codes: 0 success, 1 validation or domain failure, 2 I/O failure,
//! 3 metric precondition failure.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::affect::ConfusingPairRegistry;
use crate::config::{ConfigError, RunConfig, CONFIG_ENV};
use crate::data::{build_triplets, load_predictions, parse_annotations, quality_filter, DataError};
use crate::losses::TripletMode;
use crate::metrics::{alpha_response, report_with, EvalRecord, MetricError, MetricReport, ReportOptions, REPORT_KEYS};
use crate::trainer::{evaluate_synthetic, generate_world, train, NetGenerator, TrainError, TrainMode};

#[derive(Debug, Parser)]
#[command(name = "exprbench", version, about = "Expression-editing benchmark metrics and desk-scale trainer")]
pub struct Cli {
    /// Run configuration (TOML). Defaults to the file named by EXPRBENCH_CONFIG.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Omit the timestamp header so repeated runs are byte-identical.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate an annotation file.
    Validate(ValidateArgs),
    /// Compute the benchmark report for a prediction file.
    Eval(EvalArgs),
    /// Train the desk-scale model on the synthetic manifold.
    TrainToy(TrainArgs),
    /// Build the triplet manifest from an annotation file.
    Triplets(TripletArgs),
    /// Aggregate a directory of prediction files into comparison tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub annotations: PathBuf,
    /// Stop at the first invalid line.
    #[arg(long)]
    pub fail_fast: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    #[value(name = "6")]
    Six,
    #[value(name = "12")]
    Twelve,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub predictions: PathBuf,
    /// Confusing pairs, e.g. `fear-surprised,angry-disgust`.
    #[arg(long)]
    pub registry: Option<ConfusingPairRegistry>,
    /// Restrict records to the six basic or all twelve targets.
    #[arg(long, value_enum, default_value = "12")]
    pub subset: Subset,
    /// Records commanded beyond this intensity are rejected.
    #[arg(long)]
    pub alpha_max: Option<f64>,
    /// Records below this α are left out of mSCR, Acc, ID-Sim and HES.
    #[arg(long)]
    pub classify_min_alpha: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub mode: Option<TrainMode>,
    #[arg(long)]
    pub lambda_sc: Option<f64>,
    #[arg(long)]
    pub lambda_id: Option<f64>,
    #[arg(long)]
    pub triplet: Option<TripletMode>,
    /// Seeds both the synthetic world and training.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Optimizer steps.
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Number of α grid points used for evaluation.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub alpha_max: Option<f64>,
    #[arg(long)]
    pub registry: Option<ConfusingPairRegistry>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TripletArgs {
    pub annotations: PathBuf,
    #[arg(long)]
    pub registry: Option<ConfusingPairRegistry>,
    #[arg(long)]
    pub min_dominant: Option<f64>,
    #[arg(long)]
    pub max_secondary_gap: Option<f64>,
    /// Build triplets from all valid records without quality filtering.
    #[arg(long)]
    pub no_filter: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory of `*.jsonl` prediction files; each file stem is a method label.
    pub eval_dir: PathBuf,
    #[arg(long)]
    pub registry: Option<ConfusingPairRegistry>,
    #[arg(long)]
    pub classify_min_alpha: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Metric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
            CliError::Metric(_) => 3,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        CliError::Metric(e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Shared output context: destination directory and header policy.
struct Output {
    dir: PathBuf,
    deterministic: bool,
}

impl Output {
    fn create(dir: PathBuf, deterministic: bool) -> Result<Self, CliError> {
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(Output { dir, deterministic })
    }

    /// Writes through a temporary file in the same directory, then renames.
    fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| io_err(&self.dir, e))?;
        tmp.write_all(bytes).map_err(|e| io_err(&path, e))?;
        tmp.persist(&path).map_err(|e| io_err(&path, e.error))?;
        Ok(path)
    }

    /// Text artifact, optionally prefixed with a `# generated_at_unix:` line.
    fn write_text(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let mut text = String::new();
        if !self.deterministic {
            let now = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            let _ = writeln!(text, "# generated_at_unix: {now}");
        }
        text.push_str(body);
        self.write_bytes(name, text.as_bytes())
    }

    fn write_config(&self, cfg: &RunConfig) -> Result<(), CliError> {
        self.write_bytes("effective_config.toml", cfg.to_toml()?.as_bytes())?;
        Ok(())
    }
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(cli.config.as_deref())?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        pool = pool.num_threads(j.max(1));
    }
    let pool = pool.build().map_err(|e| CliError::Validation(format!("cannot start worker pool: {e}")))?;
    let deterministic = cli.deterministic;
    pool.install(|| match cli.command {
        Command::Validate(a) => cmd_validate(&a),
        Command::Eval(a) => cmd_eval(cfg, &a, deterministic),
        Command::TrainToy(a) => cmd_train_toy(cfg, &a, deterministic),
        Command::Triplets(a) => cmd_triplets(cfg, &a, deterministic),
        Command::Report(a) => cmd_report(cfg, &a, deterministic),
    })
}

fn cmd_validate(a: &ValidateArgs) -> Result<(), CliError> {
    let parsed = parse_annotations(&a.annotations, a.fail_fast)?;
    for e in &parsed.errors {
        println!("{e}");
    }
    println!("{} valid records, {} errors", parsed.records.len(), parsed.errors.len());
    if parsed.errors.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{} invalid lines in {}", parsed.errors.len(), a.annotations.display())))
    }
}

fn subset_records(records: Vec<EvalRecord>, subset: Subset) -> Vec<EvalRecord> {
    match subset {
        Subset::Twelve => records,
        Subset::Six => records.into_iter().filter(|r| r.target.is_basic()).collect(),
    }
}

fn report_files(out: &Output, rows: &[(String, MetricReport)]) -> Result<(), CliError> {
    let mut csv = format!("method,{}\n", REPORT_KEYS.join(","));
    let mut text = String::new();
    for (method, r) in rows {
        let _ = writeln!(csv, "{method},{}", r.csv_row());
        let _ = writeln!(text, "== {method} ==");
        text.push_str(&r.to_text());
    }
    out.write_bytes("report.csv", csv.as_bytes())?;
    out.write_text("report.txt", &text)?;
    Ok(())
}

fn cmd_eval(mut cfg: RunConfig, a: &EvalArgs, deterministic: bool) -> Result<(), CliError> {
    if let Some(r) = &a.registry {
        cfg.eval.registry = r.clone();
    }
    let min_alpha = a.classify_min_alpha.unwrap_or(0.0);
    if let Some(o) = &a.out {
        cfg.io.out_dir = o.clone();
    }
    if let Some(m) = a.alpha_max {
        cfg.eval.alpha_max = m;
    }
    let records = subset_records(load_predictions(&a.predictions)?, a.subset);
    if let Some(r) = records.iter().find(|r| !(r.alpha >= 0.0 && r.alpha <= cfg.eval.alpha_max)) {
        return Err(CliError::Validation(format!(
            "{}: alpha {} outside [0, {}]",
            r.sample_id, r.alpha, cfg.eval.alpha_max
        )));
    }
    let report = report_with(&records, &cfg.eval.registry, ReportOptions { classify_min_alpha: min_alpha })?;
    let out = Output::create(cfg.io.out_dir.clone(), deterministic)?;
    let method = a.predictions.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    report_files(&out, &[(method, report.clone())])?;
    out.write_config(&cfg)?;
    print!("{}", report.to_text());
    Ok(())
}

fn cmd_train_toy(mut cfg: RunConfig, a: &TrainArgs, deterministic: bool) -> Result<(), CliError> {
    if let Some(m) = a.mode {
        cfg.training.mode = m;
    }
    if let Some(v) = a.lambda_sc {
        cfg.losses.lambda_sc = v;
    }
    if let Some(v) = a.lambda_id {
        cfg.losses.lambda_id = v;
    }
    if let Some(t) = a.triplet {
        cfg.losses.mode = t;
    }
    if let Some(s) = a.seed {
        cfg.world.seed = s;
        cfg.training.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.training.steps = e;
    }
    if let Some(lr) = a.lr {
        cfg.training.lr = lr;
    }
    if let Some(g) = a.grid {
        cfg.eval.grid_points = g;
    }
    if let Some(m) = a.alpha_max {
        cfg.eval.alpha_max = m;
    }
    if let Some(r) = &a.registry {
        cfg.eval.registry = r.clone();
    }
    if let Some(o) = &a.out {
        cfg.io.out_dir = o.clone();
    }
    let settings = cfg.eval.settings();
    settings.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    let world = generate_world(&cfg.world, &cfg.eval.registry).map_err(|e| CliError::Validation(e.to_string()))?;
    let model = match train(&world, &cfg.training, cfg.losses.weights(), cfg.losses.triplet(), &settings) {
        Ok(m) => m,
        Err(e @ TrainError::NonFiniteLoss { .. }) => return Err(CliError::Validation(e.to_string())),
        Err(TrainError::Eval(e)) => return Err(CliError::Metric(e.to_string())),
        Err(e) => return Err(CliError::Validation(e.to_string())),
    };
    let eval = evaluate_synthetic(&NetGenerator(&model.net), &world, &settings).map_err(|e| CliError::Metric(e.to_string()))?;

    let out = Output::create(cfg.io.out_dir.clone(), deterministic)?;
    let mut tensors = world.to_tensor_file().map_err(|e| CliError::Validation(e.to_string()))?;
    model.net.to_tensor_file(&mut tensors).map_err(|e| CliError::Validation(e.to_string()))?;
    out.write_bytes("model.extf", &tensors.to_bytes())?;

    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for r in &model.curve {
        w.serialize(r).map_err(|e| CliError::Validation(e.to_string()))?;
    }
    let curves = w.into_inner().map_err(|e| CliError::Validation(e.to_string()))?;
    out.write_bytes("curves.csv", &curves)?;

    let mut preds = String::new();
    for r in &eval.records {
        preds.push_str(&serde_json::to_string(r).map_err(|e| CliError::Validation(e.to_string()))?);
        preds.push('\n');
    }
    out.write_bytes("predictions.jsonl", preds.as_bytes())?;
    report_files(&out, &[("synthetic".to_string(), eval.report.clone())])?;
    out.write_config(&cfg)?;
    print!("{}", eval.report.to_text());
    Ok(())
}

fn cmd_triplets(mut cfg: RunConfig, a: &TripletArgs, deterministic: bool) -> Result<(), CliError> {
    if let Some(r) = &a.registry {
        cfg.eval.registry = r.clone();
    }
    if let Some(v) = a.min_dominant {
        cfg.data.min_dominant = v;
    }
    if let Some(v) = a.max_secondary_gap {
        cfg.data.max_secondary_gap = v;
    }
    if let Some(o) = &a.out {
        cfg.io.out_dir = o.clone();
    }
    let parsed = parse_annotations(&a.annotations, false)?;
    if !parsed.errors.is_empty() {
        for e in &parsed.errors {
            println!("{e}");
        }
        return Err(CliError::Validation(format!("{} invalid lines in {}", parsed.errors.len(), a.annotations.display())));
    }
    let (kept, rejected) = if a.no_filter {
        (parsed.records, Vec::new())
    } else {
        let f = quality_filter(&parsed.records, &cfg.data.filter());
        (f.kept, f.rejected)
    };
    let manifest = build_triplets(&kept, &cfg.eval.registry, &cfg.data.triplets());
    let out = Output::create(cfg.io.out_dir.clone(), deterministic)?;
    out.write_bytes("triplets.csv", manifest.to_csv()?.as_bytes())?;
    let mut rej = String::from("sample_id,reason\n");
    for (r, reason) in &rejected {
        let _ = writeln!(rej, "{},{}", r.sample_id, reason.code());
    }
    out.write_bytes("rejected.csv", rej.as_bytes())?;
    out.write_config(&cfg)?;
    println!(
        "{} rows, {} kept, {} rejected, {} identities skipped",
        manifest.rows.len(),
        kept.len(),
        rejected.len(),
        manifest.skipped_identities
    );
    Ok(())
}

fn cmd_report(mut cfg: RunConfig, a: &ReportArgs, deterministic: bool) -> Result<(), CliError> {
    if let Some(r) = &a.registry {
        cfg.eval.registry = r.clone();
    }
    if let Some(o) = &a.out {
        cfg.io.out_dir = o.clone();
    }
    let entries = std::fs::read_dir(&a.eval_dir).map_err(|e| io_err(&a.eval_dir, e))?;
    let mut files: Vec<PathBuf> = Vec::new();
    for e in entries {
        let p = e.map_err(|e| io_err(&a.eval_dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|x| x == "jsonl") {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(CliError::Io(format!("no .jsonl prediction files in {}", a.eval_dir.display())));
    }
    let opts = ReportOptions { classify_min_alpha: a.classify_min_alpha.unwrap_or(0.0) };
    let mut rows = Vec::new();
    let mut curves = String::from("method,alpha,expression_score,id_similarity\n");
    for f in &files {
        let method = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let records = load_predictions(f)?;
        let report = report_with(&records, &cfg.eval.registry, opts)?;
        for p in alpha_response(&records) {
            let id = p.id_similarity.map(|v| v.to_string()).unwrap_or_else(|| "NA".into());
            let _ = writeln!(curves, "{method},{},{},{id}", p.alpha, p.expression_score);
        }
        rows.push((method, report));
    }
    let out = Output::create(cfg.io.out_dir.clone(), deterministic)?;
    report_files(&out, &rows)?;
    out.write_bytes("alpha_curves.csv", curves.as_bytes())?;
    out.write_config(&cfg)?;
    for (m, r) in &rows {
        println!("{m}: {}", r.csv_row());
    }
    Ok(())
}
