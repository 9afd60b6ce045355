//! The `wenas` command line.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::autodiff::{OptimizerConfig, OptimizerKind};
use crate::cellspace::{random_pool, Genome};
use crate::error::{Error, Result};
use crate::lmdata::{Corpus, Tokenization};
use crate::model::{Checkpoint, DropoutRates, Mode, ModelConfig};
use crate::search::{self, SearchConfig, SearchReport};
use crate::train::{train_and_evaluate, DataConfig, EpochStats, EvalReport, TrainConfig};
use crate::wenet::MixPoint;
use crate::rngs;

const SUBCOMMANDS: [&str; 4] = ["generate", "search", "eval", "report"];
const RUN_CONFIG_PREFIX: &str = "# run-config: ";

#[derive(Debug, Parser)]
#[command(name = "wenas", version, about = "Recurrent cell search with weighted networks")]
pub struct Cli {
    /// File of `key = value` lines; keys are flag names, flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads for candidate-level parallelism (1 = serial).
    #[arg(long, global = true, env = "WENAS_THREADS")]
    pub threads: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write random genomes, one JSON object per line.
    #[command(args_override_self = true)]
    Generate(GenerateArgs),
    /// Search a random pool for the best cell.
    #[command(args_override_self = true)]
    Search(SearchArgs),
    /// Train one cell from scratch and report perplexity per epoch.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Print sorted weight curves from a search report CSV.
    #[command(args_override_self = true)]
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 8)]
    pub levels: usize,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Allow repeated genomes.
    #[arg(long)]
    pub allow_dup: bool,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct DropoutArgs {
    #[arg(long, default_value_t = DropoutRates::REFERENCE.embedding)]
    pub dropout_emb: f64,
    #[arg(long, default_value_t = DropoutRates::REFERENCE.cell_input)]
    pub dropout_input: f64,
    #[arg(long, default_value_t = DropoutRates::REFERENCE.hidden)]
    pub dropout_hidden: f64,
    #[arg(long, default_value_t = DropoutRates::REFERENCE.output)]
    pub dropout_output: f64,
}

impl DropoutArgs {
    pub fn rates(&self) -> DropoutRates {
        DropoutRates {
            embedding: self.dropout_emb,
            cell_input: self.dropout_input,
            hidden: self.dropout_hidden,
            output: self.dropout_output,
        }
    }
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct SearchArgs {
    /// Directory holding train.txt and valid.txt.
    #[arg(long, required_unless_present = "dry_run")]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub total_nets: usize,
    #[arg(long, default_value_t = 16)]
    pub net_batch: usize,
    #[arg(long, default_value_t = 4)]
    pub seed_size: usize,
    #[arg(long, default_value_t = 8)]
    pub levels: usize,
    #[arg(long, default_value_t = 2)]
    pub epochs_per_round: usize,
    #[arg(long, default_value_t = 64)]
    pub emb_dim: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden_dim: usize,
    #[arg(long, default_value = "adam")]
    pub optimizer: OptimizerKind,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 5e-7)]
    pub wd: f64,
    /// Global gradient-norm bound; 0 disables clipping.
    #[arg(long, default_value_t = 0.25)]
    pub clip: f64,
    /// Sequences per mini-batch.
    #[arg(long, default_value_t = 20)]
    pub batch: usize,
    #[arg(long, default_value_t = 35)]
    pub bptt: usize,
    #[command(flatten)]
    pub dropout: DropoutArgs,
    /// Disable per-node batch normalization during search.
    #[arg(long)]
    pub no_batch_norm: bool,
    #[arg(long, default_value = "logits")]
    pub mix: MixPoint,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Independent searches; the winner is picked by a short fine-train.
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    /// Epochs of the fine-train that adjudicates restarts.
    #[arg(long, default_value_t = 2)]
    pub finetune_epochs: usize,
    #[arg(long)]
    pub allow_dup: bool,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
    #[arg(long, default_value = "word")]
    pub tokenization: Tokenization,
    /// Count rounds and epochs without training.
    #[arg(long)]
    pub dry_run: bool,
    #[arg(long, default_value = "genome.json")]
    pub out: PathBuf,
    #[arg(long, default_value = "report.csv")]
    pub report: PathBuf,
    /// Full JSON report; defaults to the CSV path with a .json extension.
    #[arg(long)]
    pub report_json: Option<PathBuf>,
    /// Per-epoch weight trajectories as CSV.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
}

impl SearchArgs {
    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            total_networks: self.total_nets,
            net_batch: self.net_batch,
            seed_size: self.seed_size,
            levels: self.levels,
            epochs_per_round: self.epochs_per_round,
            emb_dim: self.emb_dim,
            hidden_dim: self.hidden_dim,
            dropout: self.dropout.rates(),
            batch_norm: !self.no_batch_norm,
            data: DataConfig {
                batch: self.batch,
                bptt: self.bptt,
            },
            optimizer: optimizer(self.optimizer, self.lr, self.wd),
            clip: (self.clip > 0.0).then_some(self.clip),
            mix: self.mix,
            dedupe: !self.allow_dup,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Genome JSON file (a search `--out` file works).
    #[arg(long)]
    pub genome: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value = "adam")]
    pub optimizer: OptimizerKind,
    #[arg(long, default_value_t = 2e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 8e-7)]
    pub wd: f64,
    #[arg(long, default_value_t = 0.25)]
    pub clip: f64,
    /// First step whose iterate enters the ASGD average.
    #[arg(long, default_value_t = 1)]
    pub asgd_start: u64,
    #[arg(long, default_value_t = 20)]
    pub batch: usize,
    #[arg(long, default_value_t = 35)]
    pub bptt: usize,
    #[arg(long, default_value_t = 64)]
    pub emb_dim: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden_dim: usize,
    #[command(flatten)]
    pub dropout: DropoutArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
    #[arg(long, default_value = "word")]
    pub tokenization: Tokenization,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Per-epoch perplexities as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

impl EvalArgs {
    pub fn train_config(&self) -> TrainConfig {
        let mut opt = optimizer(self.optimizer, self.lr, self.wd);
        opt.asgd_start = self.asgd_start;
        TrainConfig {
            epochs: self.epochs,
            data: DataConfig {
                batch: self.batch,
                bptt: self.bptt,
            },
            optimizer: opt,
            clip: (self.clip > 0.0).then_some(self.clip),
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long, default_value = "report.csv")]
    pub report: PathBuf,
    /// Show one round (1-based) instead of the summary.
    #[arg(long)]
    pub round: Option<usize>,
}

fn optimizer(kind: OptimizerKind, lr: f64, wd: f64) -> OptimizerConfig {
    let base = match kind {
        OptimizerKind::Sgd => OptimizerConfig::sgd(lr),
        OptimizerKind::Adam => OptimizerConfig::adam(lr),
        OptimizerKind::Asgd => OptimizerConfig::asgd(lr, 1),
    };
    base.with_weight_decay(wd)
}

/// Resolved settings echoed into every output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_file: Option<PathBuf>,
    pub settings: serde_json::Value,
}

impl RunConfig {
    pub fn new(command: &str, config_file: Option<&Path>, settings: &impl Serialize) -> Result<Self> {
        Ok(RunConfig {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_file: config_file.map(Path::to_path_buf),
            settings: serde_json::to_value(settings)?,
        })
    }

    pub fn comment_line(&self) -> String {
        format!("{RUN_CONFIG_PREFIX}{}", serde_json::to_string(self).expect("serializable"))
    }

    /// Recovers the config from a file's leading comment lines.
    pub fn from_comments(text: &str) -> Option<Self> {
        text.lines()
            .take_while(|l| l.starts_with('#'))
            .find_map(|l| l.strip_prefix(RUN_CONFIG_PREFIX))
            .and_then(|json| serde_json::from_str(json).ok())
    }
}

/// Turns `key = value` lines into flags.
pub fn config_file_flags(text: &str, path: &Path) -> Result<Vec<OsString>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(format!(
                "{}:{}: expected `key = value`, got `{line}`",
                path.display(),
                n + 1
            ))
        })?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim().trim_matches('"');
        if key.is_empty() || key == "config" {
            return Err(Error::config(format!("{}:{}: invalid key", path.display(), n + 1)));
        }
        match value {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            v => {
                out.push(format!("--{key}").into());
                out.push(v.into());
            }
        }
    }
    Ok(out)
}

fn find_config(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Expands `--config` into flags placed right after the subcommand, ahead
/// of the user's own flags so those take precedence.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = find_config(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::config(format!("cannot read config file {}: {e}", path.display())))?;
    let flags = config_file_flags(&text, &path)?;
    let at = args
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .map_or(args.len(), |i| i + 1);
    let mut out = args[..at].to_vec();
    out.extend(flags);
    out.extend_from_slice(&args[at..]);
    Ok(out)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            line: 0,
            column: 0,
            message: format!("{}: {other:?}", path.display()),
        },
    }
}

pub fn cmd_generate(args: &GenerateArgs, run: &RunConfig) -> Result<Vec<Genome>> {
    let mut rng = rngs::rng_for(args.seed, "generate", 0);
    let pool = random_pool(args.count, args.levels, &mut rng, !args.allow_dup)?;
    let mut text = run.comment_line();
    text.push('\n');
    for g in &pool {
        text.push_str(&g.to_json());
        text.push('\n');
    }
    match &args.out {
        Some(p) => write_file(p, &text)?,
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e))?,
    }
    Ok(pool)
}

/// Reads genomes written by `generate` (comment lines skipped).
pub fn read_genome_lines(text: &str) -> Result<Vec<Genome>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(Genome::from_json)
        .collect()
}

/// Genome JSON with the run config under an extra key.
pub fn genome_document(g: &Genome, run: &RunConfig) -> Result<String> {
    let mut doc = serde_json::to_value(g)?;
    doc["run_config"] = serde_json::to_value(run)?;
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

/// Loads a genome from JSON or from the `[('relu', 0), ...]` notation.
pub fn load_genome(path: &Path) -> Result<Genome> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        Genome::parse_pairs(trimmed.trim_end())
    } else {
        Genome::from_json(&text)
    }
}

pub fn report_csv(report: &SearchReport, run: &RunConfig) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["round", "rank", "net_index", "genome", "weight"])
        .map_err(|e| csv_error(Path::new("<report>"), e))?;
    for r in &report.rounds {
        for e in &r.table {
            w.write_record([
                r.round.to_string(),
                e.rank.to_string(),
                e.net_index.to_string(),
                e.genome.to_json(),
                e.weight.to_string(),
            ])
            .map_err(|e| csv_error(Path::new("<report>"), e))?;
        }
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 csv");
    Ok(format!("{}\n{body}", run.comment_line()))
}

pub fn trajectory_csv(report: &SearchReport, run: &RunConfig) -> String {
    let mut out = format!("{}\nround,epoch,net_index,weight,mean_loss\n", run.comment_line());
    for r in &report.rounds {
        for row in &r.trajectory {
            for (i, w) in r.candidates.iter().zip(&row.weights) {
                out.push_str(&format!("{},{},{i},{w},{}\n", r.round, row.epoch, row.mean_loss));
            }
        }
    }
    out
}

pub fn cmd_search(args: &SearchArgs, run: &RunConfig) -> Result<SearchReport> {
    let cfg = args.search_config();
    cfg.validate()?;
    let json_path = args
        .report_json
        .clone()
        .unwrap_or_else(|| args.report.with_extension("json"));
    let mut outputs = vec![&args.out, &args.report, &json_path];
    outputs.extend(args.trajectory.as_ref());
    for (i, a) in outputs.iter().enumerate() {
        if outputs[..i].contains(a) {
            return Err(Error::Config(format!(
                "output path {} is used twice; pass distinct --out, --report, --report-json and --trajectory",
                a.display()
            )));
        }
    }
    let report = if args.dry_run {
        search::dry_run(&cfg)?
    } else {
        let dir = args.corpus.as_ref().expect("clap requires --corpus without --dry-run");
        let corpus = Corpus::load_dir(dir, args.tokenization)?;
        let mut finetune = TrainConfig::eval_defaults(args.finetune_epochs.max(1), cfg.seed);
        finetune.data = cfg.data;
        finetune.optimizer = cfg.optimizer.clone();
        let outcome = match args.precision {
            Precision::F32 => search::run_restarts::<f32>(&cfg, &corpus, args.restarts, &finetune)?,
            Precision::F64 => search::run_restarts::<f64>(&cfg, &corpus, args.restarts, &finetune)?,
        };
        outcome.reports.into_iter().nth(outcome.chosen).expect("chosen restart")
    };
    write_file(&args.out, &genome_document(&report.best, run)?)?;
    write_file(&args.report, &report_csv(&report, run)?)?;
    let doc = serde_json::json!({ "run_config": run, "report": &report });
    write_file(&json_path, &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    if let Some(p) = &args.trajectory {
        write_file(p, &trajectory_csv(&report, run))?;
    }
    Ok(report)
}

pub fn cmd_eval(
    args: &EvalArgs,
    run: &RunConfig,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<EvalReport> {
    let genome = load_genome(&args.genome)?;
    let corpus = Corpus::load_dir(&args.corpus, args.tokenization)?;
    let model = ModelConfig {
        emb_dim: args.emb_dim,
        hidden_dim: args.hidden_dim,
        levels: genome.levels,
        dropout: args.dropout.rates(),
        batch_norm: false,
        mode: Mode::Eval,
    };
    let cfg = args.train_config();
    let run_value = serde_json::to_value(run)?;
    let (report, checkpoint) = match args.precision {
        Precision::F32 => {
            let (p, r) = train_and_evaluate::<f32>(&genome, &model, &corpus, &cfg, on_epoch)?;
            let ck = Checkpoint::new(&model, &genome, corpus.vocab.tokens(), &p, run_value.clone());
            (r, ck)
        }
        Precision::F64 => {
            let (p, r) = train_and_evaluate::<f64>(&genome, &model, &corpus, &cfg, on_epoch)?;
            let ck = Checkpoint::new(&model, &genome, corpus.vocab.tokens(), &p, run_value.clone());
            (r, ck)
        }
    };
    if let Some(p) = &args.checkpoint {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        checkpoint.save(p)?;
    }
    if let Some(p) = &args.report {
        let doc = serde_json::json!({ "run_config": run_value, "report": &report });
        write_file(p, &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    }
    Ok(report)
}

/// One row of a report CSV.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct ReportRow {
    pub round: usize,
    pub rank: usize,
    pub net_index: usize,
    pub genome: String,
    pub weight: f64,
}

/// Parsed report CSV, grouped by round.
#[derive(Clone, Debug)]
pub struct ReportFile {
    pub run_config: Option<RunConfig>,
    pub rounds: Vec<Vec<ReportRow>>,
}

impl ReportFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut rounds: Vec<Vec<ReportRow>> = Vec::new();
        for row in reader.deserialize() {
            let row: ReportRow = row.map_err(|e| csv_error(path, e))?;
            if row.round == 0 {
                return Err(Error::Parse {
                    line: 0,
                    column: 0,
                    message: format!("{}: rounds are numbered from 1", path.display()),
                });
            }
            if rounds.len() < row.round {
                rounds.resize(row.round, Vec::new());
            }
            rounds[row.round - 1].push(row);
        }
        for r in &mut rounds {
            r.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.rank.cmp(&b.rank)));
        }
        Ok(ReportFile {
            run_config: RunConfig::from_comments(&text),
            rounds,
        })
    }

    /// Seed count recorded in the embedded run config.
    pub fn seed_size(&self) -> Option<usize> {
        self.run_config
            .as_ref()?
            .settings
            .get("seed_size")?
            .as_u64()
            .map(|k| k as usize)
    }

    /// Top-`K` net indices per round, reconstructed from the weights.
    pub fn seeds(&self, round: usize) -> Option<Vec<usize>> {
        let k = self.seed_size()?;
        Some(self.rounds[round - 1].iter().take(k).map(|r| r.net_index).collect())
    }
}

pub fn cmd_report(args: &ReportArgs, out: &mut dyn Write) -> Result<()> {
    let file = ReportFile::load(&args.report)?;
    let n = file.rounds.len();
    if n == 0 {
        return Err(Error::config(format!("{} holds no rounds", args.report.display())));
    }
    let io_err = |e| Error::io("<stdout>", e);
    match args.round {
        Some(r) if r == 0 || r > n => Err(Error::config(format!(
            "round {r} out of range; valid rounds are 1..={n}"
        ))),
        Some(r) => {
            let rows = &file.rounds[r - 1];
            writeln!(out, "rank,net_index,weight").map_err(io_err)?;
            for (i, row) in rows.iter().enumerate() {
                writeln!(out, "{},{},{}", i + 1, row.net_index, row.weight).map_err(io_err)?;
            }
            let sum: f64 = rows.iter().map(|r| r.weight).sum();
            writeln!(out, "# sum {sum}").map_err(io_err)?;
            if let Some(seeds) = file.seeds(r) {
                writeln!(out, "# seeds {}", join(&seeds)).map_err(io_err)?;
            }
            Ok(())
        }
        None => {
            writeln!(out, "round,candidates,top_net,top_weight,min_weight,weight_sum,seeds")
                .map_err(io_err)?;
            for (i, rows) in file.rounds.iter().enumerate() {
                let sum: f64 = rows.iter().map(|r| r.weight).sum();
                let seeds = file.seeds(i + 1).map(|s| join(&s)).unwrap_or_default();
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    i + 1,
                    rows.len(),
                    rows[0].net_index,
                    rows[0].weight,
                    rows[rows.len() - 1].weight,
                    sum,
                    seeds
                )
                .map_err(io_err)?;
            }
            Ok(())
        }
    }
}

fn join(xs: &[usize]) -> String {
    xs.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(Error::config("--threads must be at least 1"));
    }
    #[cfg(feature = "parallel")]
    {
        // A second build in the same process (tests) keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn print_epoch(e: &EpochStats) {
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |p| format!("{p:.3}"));
    println!(
        "epoch {:>4}  train {:>10}  valid {:>10.3}  test {:>10}",
        e.epoch,
        fmt(e.train_ppl),
        e.valid_ppl,
        fmt(e.test_ppl)
    );
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    init_threads(cli.threads)?;
    let cfg = cli.config.as_deref();
    match &cli.command {
        Command::Generate(a) => {
            let run = RunConfig::new("generate", cfg, a)?;
            cmd_generate(a, &run).map(drop)
        }
        Command::Search(a) => {
            let run = RunConfig::new("search", cfg, a)?;
            let r = cmd_search(a, &run)?;
            println!(
                "best network {} (weight {:.4}) after {} rounds, {} epochs{}",
                r.best_net_index,
                r.best_weight,
                r.total_rounds,
                r.total_epochs,
                if r.dry_run { " (dry run)" } else { "" }
            );
            println!("{}", r.best);
            Ok(())
        }
        Command::Eval(a) => {
            let run = RunConfig::new("eval", cfg, a)?;
            let r = cmd_eval(a, &run, print_epoch)?;
            println!(
                "parameters {}  final valid {:.3}  best valid {:.3}",
                r.parameter_count,
                r.final_valid_ppl(),
                r.best_valid_ppl()
            );
            Ok(())
        }
        Command::Report(a) => cmd_report(a, &mut io::stdout().lock()),
    }
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn main_with_args(args: Vec<OsString>) -> i32 {
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}
