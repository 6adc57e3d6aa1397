//! `treecalc gen-data|train|eval|complete|sweep`.
//!
//! Every command reads a flat `key=value` config (file plus `--set`
//! overrides plus `--seed`) and writes its outputs under `--out`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::eval::{self, CompletionRecord, EvalError};
use crate::expr::{
    completion_candidates, completion_candidates_at_depth, default_axioms, generate_dataset, read_axioms, read_dataset,
    split_by_depth, write_dataset, DepthStats, ExprError, GenConfig, Label, LabeledEquation,
};
use crate::model::{read_checkpoint, write_checkpoint, ModelConfig, ModelError};
use crate::seeds::{self, Stream};
use crate::train::{self, TrainConfig, TrainError, DROPOUT_GRID, HIDDEN_GRID};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Input { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ExprError },
    #[error("checkpoint {path}: config key `{key}` is {found} there but {wanted} here")]
    Mismatch {
        path: PathBuf,
        key: &'static str,
        found: String,
        wanted: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl CliError {
    /// 2 for usage and config problems, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Input { .. } | CliError::Parse { .. } | CliError::Mismatch { .. } => 2,
            CliError::Train(TrainError::Config { .. }) | CliError::Model(ModelError::Config { .. }) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "treecalc",
    version,
    about = "Recursive networks for equation verification and completion"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled dataset and split it by depth.
    GenData(Common),
    /// Train a verifier and save its best checkpoint.
    Train(Common),
    /// Verification metrics of a checkpoint.
    Eval(Common),
    /// Top-K equation completion with a checkpoint.
    Complete(Common),
    /// Grid search over hidden size and dropout.
    Sweep(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat key=value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run seed; overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Extra `key=value` settings, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

/// Merged configuration of one command.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seed: u64,
    /// Equations to generate.
    pub n: usize,
    pub axioms: Option<PathBuf>,
    /// Directory holding `train.txt`, `valid.txt` and `test.txt`.
    pub data: PathBuf,
    pub train_depths: RangeInclusive<usize>,
    pub test_depths: RangeInclusive<usize>,
    pub valid_fraction: f64,
    pub checkpoint: PathBuf,
    /// Dataset split read by `eval` and `complete`.
    pub split: String,
    pub ks: Vec<usize>,
    pub cap: usize,
    pub max_height: usize,
    pub blank_depth: Option<usize>,
    pub max_instances: Option<usize>,
    pub hidden_grid: Vec<usize>,
    pub dropout_grid: Vec<f64>,
    /// Keys given explicitly by the config file or flags.
    pub explicit: BTreeSet<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            seed: 1,
            n: 2000,
            axioms: None,
            data: PathBuf::from("data"),
            train_depths: 1..=7,
            test_depths: 8..=13,
            valid_fraction: 0.2,
            checkpoint: PathBuf::from("out/checkpoint.txt"),
            split: "test".into(),
            ks: vec![1, 5],
            cap: 50,
            max_height: 2,
            blank_depth: None,
            max_instances: None,
            hidden_grid: HIDDEN_GRID.to_vec(),
            dropout_grid: DROPOUT_GRID.to_vec(),
            explicit: BTreeSet::new(),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_range(key: &str, v: &str) -> Result<RangeInclusive<usize>, CliError> {
    let bad = || usage(format!("config key `{key}`: expected LO-HI, got `{v}`"));
    let (lo, hi) = v.split_once('-').ok_or_else(bad)?;
    let (lo, hi) = (
        lo.trim().parse().map_err(|_| bad())?,
        hi.trim().parse().map_err(|_| bad())?,
    );
    if lo > hi || lo == 0 {
        return Err(bad());
    }
    Ok(lo..=hi)
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, CliError> {
    v.split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<Vec<T>, _>>()
        .map_err(|_| usage(format!("config key `{key}`: cannot parse list `{v}`")))
}

fn parse_one<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.trim()
        .parse()
        .map_err(|_| usage(format!("config key `{key}`: cannot parse `{v}`")))
}

impl RunConfig {
    /// Keys owned by the run itself (model and training keys come on top).
    pub const KEYS: [&'static str; 16] = [
        "seed",
        "n",
        "axioms",
        "data",
        "train_depths",
        "test_depths",
        "valid_fraction",
        "checkpoint",
        "split",
        "ks",
        "cap",
        "max_height",
        "blank_depth",
        "max_instances",
        "hidden_grid",
        "dropout_grid",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let value = value.trim();
        let owned = match key {
            "seed" => {
                self.seed = parse_one(key, value)?;
                true
            }
            "n" => {
                self.n = parse_one(key, value)?;
                true
            }
            "axioms" => {
                self.axioms = Some(PathBuf::from(value));
                true
            }
            "data" => {
                self.data = PathBuf::from(value);
                true
            }
            "train_depths" => {
                self.train_depths = parse_range(key, value)?;
                true
            }
            "test_depths" => {
                self.test_depths = parse_range(key, value)?;
                true
            }
            "valid_fraction" => {
                self.valid_fraction = parse_one(key, value)?;
                true
            }
            "checkpoint" => {
                self.checkpoint = PathBuf::from(value);
                true
            }
            "split" => {
                if !["train", "valid", "test"].contains(&value) {
                    return Err(usage(format!(
                        "config key `split`: expected train, valid or test, got `{value}`"
                    )));
                }
                self.split = value.to_string();
                true
            }
            "ks" => {
                self.ks = parse_list(key, value)?;
                true
            }
            "cap" => {
                self.cap = parse_one(key, value)?;
                true
            }
            "max_height" => {
                self.max_height = parse_one(key, value)?;
                true
            }
            "blank_depth" => {
                self.blank_depth = Some(parse_one(key, value)?);
                true
            }
            "max_instances" => {
                self.max_instances = Some(parse_one(key, value)?);
                true
            }
            "hidden_grid" => {
                self.hidden_grid = parse_list(key, value)?;
                true
            }
            "dropout_grid" => {
                self.dropout_grid = parse_list(key, value)?;
                true
            }
            _ => false,
        };
        let owned = owned || self.model.set(key, value)? || self.train.set(key, value)?;
        if !owned {
            return Err(usage(format!("unknown config key `{key}`")));
        }
        self.explicit.insert(key.to_string());
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("config line {}: expected key=value, got `{line}`", i + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Config file, then `--set` pairs, then `--seed`.
    pub fn from_args(common: &Common) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &common.config {
            let text = fs::read_to_string(path).map_err(|source| CliError::Input {
                path: path.clone(),
                source,
            })?;
            cfg.apply_text(&text)?;
        }
        for pair in &common.set {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got `{pair}`")))?;
            cfg.set(k.trim(), v)?;
        }
        if let Some(seed) = common.seed {
            cfg.set("seed", &seed.to_string())?;
        }
        if !cfg.explicit.contains("seeds") {
            cfg.train.seeds = vec![cfg.seed];
        }
        cfg.model.validate()?;
        cfg.train.validate()?;
        if !(0.0..1.0).contains(&cfg.valid_fraction) {
            return Err(usage("config key `valid_fraction`: must be in [0, 1)"));
        }
        if cfg.ks.contains(&0) || cfg.ks.is_empty() {
            return Err(usage("config key `ks`: every K must be at least 1"));
        }
        Ok(cfg)
    }

    /// Every key with its value, sorted by key.
    pub fn pairs(&self) -> BTreeMap<String, String> {
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let join = |xs: Vec<String>| xs.join(",");
        let mut out: BTreeMap<String, String> = [
            ("seed", self.seed.to_string()),
            ("n", self.n.to_string()),
            ("axioms", opt(&self.axioms)),
            ("data", self.data.display().to_string()),
            (
                "train_depths",
                format!("{}-{}", self.train_depths.start(), self.train_depths.end()),
            ),
            (
                "test_depths",
                format!("{}-{}", self.test_depths.start(), self.test_depths.end()),
            ),
            ("valid_fraction", self.valid_fraction.to_string()),
            ("checkpoint", self.checkpoint.display().to_string()),
            ("split", self.split.clone()),
            ("ks", join(self.ks.iter().map(usize::to_string).collect())),
            ("cap", self.cap.to_string()),
            ("max_height", self.max_height.to_string()),
            (
                "blank_depth",
                self.blank_depth.map(|d| d.to_string()).unwrap_or_default(),
            ),
            (
                "max_instances",
                self.max_instances.map(|d| d.to_string()).unwrap_or_default(),
            ),
            (
                "hidden_grid",
                join(self.hidden_grid.iter().map(usize::to_string).collect()),
            ),
            (
                "dropout_grid",
                join(self.dropout_grid.iter().map(f64::to_string).collect()),
            ),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        for (k, v) in self.model.pairs().into_iter().chain(self.train.pairs()) {
            out.insert(k.to_string(), v);
        }
        out
    }
}

/// Parses arguments, runs the command and maps errors to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(command: &Command) -> Result<(), CliError> {
    let common = match command {
        Command::GenData(c) | Command::Train(c) | Command::Eval(c) | Command::Complete(c) | Command::Sweep(c) => c,
    };
    let cfg = RunConfig::from_args(common)?;
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let out = &common.out;
    fs::create_dir_all(out).map_err(|source| CliError::Output {
        path: out.clone(),
        source,
    })?;
    match command {
        Command::GenData(_) => gen_data(&cfg, out),
        Command::Train(_) => train_cmd(&cfg, out),
        Command::Eval(_) => eval_cmd(&cfg, out),
        Command::Complete(_) => complete_cmd(&cfg, out),
        Command::Sweep(_) => sweep_cmd(&cfg, out),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Output {
            path: path.to_path_buf(),
            source,
        })
}

fn write_out(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })
}

fn read_split(cfg: &RunConfig, split: &str) -> Result<Vec<LabeledEquation>, CliError> {
    let path = cfg.data.join(format!("{split}.txt"));
    let file = File::open(&path).map_err(|source| CliError::Input {
        path: path.clone(),
        source,
    })?;
    read_dataset(BufReader::new(file)).map_err(|source| CliError::Parse { path, source })
}

/// Count and correct-fraction rows with one column per depth plus a total.
pub fn stats_block(stats: &[DepthStats]) -> String {
    let mut depth = format!("{:<6}", "Depth");
    let mut count = format!("{:<6}", "Count");
    let mut cc = format!("{:<6}", "CC");
    for s in stats {
        depth.push_str(&format!("{:>7}", s.depth));
        count.push_str(&format!("{:>7}", s.count));
        cc.push_str(&format!("{:>7.2}", s.cc()));
    }
    let total: usize = stats.iter().map(|s| s.count).sum();
    let correct: usize = stats.iter().map(|s| s.correct).sum();
    depth.push_str(&format!("{:>8}", "Total"));
    count.push_str(&format!("{total:>8}"));
    cc.push_str(&format!(
        "{:>8.2}",
        if total == 0 { 0.0 } else { correct as f64 / total as f64 }
    ));
    format!("{depth}\n{count}\n{cc}\n")
}

fn gen_data(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let axioms = match &cfg.axioms {
        Some(path) => {
            let file = File::open(path).map_err(|source| CliError::Input {
                path: path.clone(),
                source,
            })?;
            read_axioms(BufReader::new(file)).map_err(|source| CliError::Parse {
                path: path.clone(),
                source,
            })?
        }
        None => default_axioms(),
    };
    let lo = (*cfg.train_depths.start()).min(*cfg.test_depths.start());
    let hi = (*cfg.train_depths.end()).max(*cfg.test_depths.end());
    let gen = GenConfig::default().with_depths(lo..=hi);
    let data = generate_dataset(&axioms, cfg.n, cfg.seed, &gen).map_err(|e| usage(e.to_string()))?;
    let (train, valid, test) = split_by_depth(
        &data.items,
        cfg.train_depths.clone(),
        cfg.test_depths.clone(),
        cfg.valid_fraction,
        &mut seeds::stream(cfg.seed, Stream::Split),
    );
    for split in [&train, &valid, &test] {
        write_out(&out.join(format!("{}.txt", split.split.name())), |w| {
            write_dataset(w, &split.items)
        })?;
    }
    let block = stats_block(&data.stats);
    write_out(&out.join("stats.txt"), |w| w.write_all(block.as_bytes()))?;
    print!("{block}");
    println!("train {} / valid {} / test {}", train.len(), valid.len(), test.len());
    Ok(())
}

#[derive(Serialize)]
struct LogHeader<'a> {
    seed: u64,
    config: &'a BTreeMap<String, String>,
}

#[derive(Serialize)]
struct TrainSummary {
    seed: u64,
    best_valid_acc: f64,
    epochs_to_best: usize,
    epochs: usize,
}

fn train_cmd(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let train_set = read_split(cfg, "train")?;
    let valid_set = read_split(cfg, "valid")?;
    let log_path = out.join("train_log.jsonl");
    let mut log = create(&log_path)?;
    let io = |source| CliError::Output {
        path: log_path.clone(),
        source,
    };
    let pairs = cfg.pairs();
    serde_json::to_writer(
        &mut log,
        &LogHeader {
            seed: cfg.seed,
            config: &pairs,
        },
    )
    .map_err(|e| io(e.into()))?;
    writeln!(log).map_err(io)?;
    let mut write_err = None;
    let outcome = train::fit(&train_set, &valid_set, cfg.model, &cfg.train, cfg.seed, |r| {
        let res = serde_json::to_writer(&mut log, r)
            .map_err(std::io::Error::from)
            .and_then(|_| writeln!(log));
        if let Err(e) = res {
            write_err.get_or_insert(e);
        }
        log::info!("epoch {} loss {:.4} valid {:.4}", r.epoch, r.train_loss, r.valid_acc);
    })?;
    if let Some(e) = write_err {
        return Err(io(e));
    }
    log.flush().map_err(io)?;
    let meta: BTreeMap<String, String> = [
        ("seed".to_string(), cfg.seed.to_string()),
        ("best_valid_acc".to_string(), outcome.best_valid_acc.to_string()),
        ("epochs_to_best".to_string(), outcome.epochs_to_best.to_string()),
    ]
    .into();
    write_out(&out.join("checkpoint.txt"), |w| {
        write_checkpoint(w, &outcome.best, &meta)
    })?;
    let summary = TrainSummary {
        seed: cfg.seed,
        best_valid_acc: outcome.best_valid_acc,
        epochs_to_best: outcome.epochs_to_best,
        epochs: outcome.log.len(),
    };
    write_out(&out.join("summary.json"), |w| {
        serde_json::to_writer(&mut *w, &summary)?;
        writeln!(w)
    })?;
    println!(
        "best valid accuracy {:.4} at epoch {} of {}",
        outcome.best_valid_acc,
        outcome.epochs_to_best,
        outcome.log.len()
    );
    Ok(())
}

/// Loads the checkpoint and checks explicitly configured model keys
/// against it.
fn load_model(cfg: &RunConfig) -> Result<crate::model::Model, CliError> {
    let path = &cfg.checkpoint;
    let file = File::open(path).map_err(|source| CliError::Input {
        path: path.clone(),
        source,
    })?;
    let ckpt = read_checkpoint(BufReader::new(file))?;
    let saved = ckpt.model.config();
    let saved_pairs: BTreeMap<_, _> = saved.pairs().into_iter().collect();
    for (key, wanted) in cfg.model.pairs() {
        if cfg.explicit.contains(key) && saved_pairs[key] != wanted {
            return Err(CliError::Mismatch {
                path: path.clone(),
                key,
                found: saved_pairs[key].clone(),
                wanted,
            });
        }
    }
    Ok(ckpt.model)
}

fn eval_cmd(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let model = load_model(cfg)?;
    let data = read_split(cfg, &cfg.split)?;
    let train_set = read_split(cfg, "train")?;
    let metrics = eval::evaluate(&model, &data)?;
    let baseline = eval::majority_baseline(&train_set, &data)?;
    let records = metrics.records(&cfg.split);
    let base = baseline.records(&format!("{}_majority", cfg.split));
    let mut f = create(&out.join("metrics.jsonl"))?;
    eval::write_jsonl(&mut f, &records)?;
    eval::write_jsonl(&mut f, &base)?;
    f.flush().map_err(EvalError::from)?;
    let mut f = create(&out.join("metrics.csv"))?;
    eval::write_csv(&mut f, &records.iter().chain(&base).cloned().collect::<Vec<_>>())?;
    for r in records.iter().chain(&base) {
        let fmt = |x: Option<f64>| x.map_or("-".to_string(), |x| format!("{x:.4}"));
        let depth = r.depth.map_or("all".to_string(), |d| d.to_string());
        println!(
            "{:<16} depth {:>3}  acc {:.4}  prec {}  rcl {}  n {}",
            r.split,
            depth,
            r.acc,
            fmt(r.prec),
            fmt(r.rcl),
            r.n
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct RankLine {
    id: usize,
    blank_depth: usize,
    equation: String,
    blanked: String,
    gold: Vec<usize>,
    top: Vec<String>,
}

fn complete_cmd(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let model = load_model(cfg)?;
    let data = read_split(cfg, &cfg.split)?;
    let correct: Vec<&LabeledEquation> = data.iter().filter(|e| e.label == Label::Correct).collect();
    let limit = cfg.max_instances.unwrap_or(correct.len()).min(correct.len());
    let instances: Vec<_> = correct[..limit]
        .par_iter()
        .enumerate()
        .filter_map(|(i, e)| {
            let rng = &mut seeds::substream(cfg.seed, Stream::Blanks, i as u64);
            match cfg.blank_depth {
                Some(d) => completion_candidates_at_depth(&e.expr, d, rng, cfg.max_height, cfg.cap),
                None => completion_candidates(&e.expr, rng, cfg.max_height, cfg.cap),
            }
            .map(|inst| (i, inst))
        })
        .collect();
    let records: Vec<CompletionRecord> = instances
        .iter()
        .map(|(i, inst)| eval::rank_completion(&model, *i, inst))
        .collect::<Result<_, _>>()?;
    let report = eval::topk_report(&records, &cfg.ks)?;
    let mut f = create(&out.join("topk.jsonl"))?;
    eval::write_jsonl(&mut f, &report)?;
    f.flush().map_err(EvalError::from)?;
    eval::write_csv(create(&out.join("topk.csv"))?, &report)?;
    let kmax = cfg.ks.iter().copied().max().unwrap_or(1);
    let lines: Vec<RankLine> = instances
        .iter()
        .zip(&records)
        .map(|((_, inst), r)| RankLine {
            id: r.id,
            blank_depth: r.blank_depth,
            equation: inst.equation.to_string(),
            blanked: inst.blanked().to_string(),
            gold: r.gold.clone(),
            top: r
                .ranked
                .iter()
                .take(kmax)
                .map(|&c| inst.candidates[c].to_string())
                .collect(),
        })
        .collect();
    let mut f = create(&out.join("completions.jsonl"))?;
    eval::write_jsonl(&mut f, &lines)?;
    f.flush().map_err(EvalError::from)?;
    for r in &report {
        let depth = r.depth.map_or("all".to_string(), |d| d.to_string());
        println!("depth {depth:>3}  top-{:<2} {:.4}  n {}", r.k, r.topk, r.n);
    }
    Ok(())
}

fn sweep_cmd(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let train_set = read_split(cfg, "train")?;
    let valid_set = read_split(cfg, "valid")?;
    let rows = train::sweep(
        &train_set,
        &valid_set,
        cfg.model,
        &cfg.hidden_grid,
        &cfg.dropout_grid,
        &cfg.train,
    )?;
    let mut f = create(&out.join("leaderboard.jsonl"))?;
    eval::write_jsonl(&mut f, &rows)?;
    f.flush().map_err(EvalError::from)?;
    eval::write_csv(create(&out.join("leaderboard.csv"))?, &rows)?;
    println!(
        "{:>6} {:>8} {:>6} {:>10} {:>8}",
        "hidden", "dropout", "seed", "valid_acc", "epochs"
    );
    for r in &rows {
        println!(
            "{:>6} {:>8} {:>6} {:>10.4} {:>8}",
            r.hidden, r.dropout, r.seed, r.valid_acc, r.epochs_to_best
        );
    }
    Ok(())
}
