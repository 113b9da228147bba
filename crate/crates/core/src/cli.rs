//! Command-line front end.
//!
//! Settings come from three layers, later ones winning: a flat `key = value`
//! config file (`--config`), `--set key=value` pairs, then dedicated flags.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::corpus::{
    attach_gold, check_coverage, compute_stats, parse_corpus, parse_gold_keys, parse_inventory, Corpus,
    GoldKeys, Pos, SenseInventory, WsdInstance,
};
use crate::disambiguator::{
    disambiguate, read_report_csv, report_table, score, write_predictions, write_report_csv,
    EvaluationReport, Prediction,
};
use crate::encoder::{
    fit, load_checkpoint, save_checkpoint, EncoderConfig, GlossModel, HeadKind, PairClassifier, Preset,
    TrainConfig, CHECKPOINT_MAGIC,
};
use crate::ensemble::{ensemble_disambiguate, parse_ensemble_spec, MemberSpec};
use crate::error::{Error, Result};
use crate::pairgen::{build_training_set, write_pairs_tsv, SamplingConfig};

#[derive(Debug, Parser)]
#[command(name = "glosswsd", version, about = "Gloss-based word sense disambiguation")]
pub struct Cli {
    #[command(flatten)]
    pub opts: Options,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count instances per part of speech.
    Stats,
    /// Write the context-gloss training pairs as TSV.
    BuildPairs,
    /// Train an encoder; writes model.ckpt and loss.csv.
    Train,
    /// Disambiguate and score with one checkpoint.
    Eval,
    /// Disambiguate and score with a logit-sum ensemble.
    EnsembleEval,
    /// Merge report CSVs into one table.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

#[derive(Debug, Default, Args)]
pub struct Options {
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    pub gold: Option<PathBuf>,
    #[arg(long, global = true)]
    pub inventory: Option<PathBuf>,
    #[arg(long, global = true)]
    pub alpha: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<String>,
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Comma-separated checkpoints, or one ensemble spec file.
    #[arg(long, global = true)]
    pub members: Option<String>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub preset: Option<String>,
    #[arg(long, global = true)]
    pub head: Option<String>,
    #[arg(long, global = true)]
    pub skip_missing: bool,
    /// Override any config key, e.g. `--set num_epochs=2`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
}

/// Fully resolved settings for one invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub inventory: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub members: Option<String>,
    pub alpha: Option<f64>,
    pub skip_missing: bool,
    pub min_count: usize,
    pub dataset: Option<String>,
    pub model: Option<String>,
    pub experiment: Option<String>,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
}

const KEYS: &[&str] = &[
    "corpus",
    "gold",
    "inventory",
    "out",
    "checkpoint",
    "members",
    "alpha",
    "seed",
    "preset",
    "head",
    "skip_missing",
    "min_count",
    "dataset",
    "model",
    "experiment",
    "max_seq_length",
    "model_dim",
    "num_layers",
    "num_heads",
    "feedforward_dim",
    "dropout_rate",
    "batch_size",
    "learning_rate",
    "num_epochs",
    "grad_accum_steps",
];

/// Parses `key = value` lines; `#` starts a comment line.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Format {
            line: idx + 1,
            message: "expected `key = value`".into(),
        })?;
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("line {}: unknown key `{key}`", idx + 1)));
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid value `{value}` for `{key}`"))),
    }
}

impl RunConfig {
    /// Resolves layered settings. Presets apply first, so field overrides
    /// always win regardless of where the preset was named.
    pub fn resolve(settings: &[(String, String)]) -> Result<Self> {
        let last = |key: &str| settings.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let preset: Preset = last("preset").unwrap_or("full").parse()?;
        let head: HeadKind = last("head").unwrap_or("sent-cls").parse()?;
        let mut cfg = RunConfig {
            corpus: None,
            gold: None,
            inventory: None,
            out: None,
            checkpoint: None,
            members: None,
            alpha: None,
            skip_missing: false,
            min_count: 1,
            dataset: None,
            model: None,
            experiment: None,
            encoder: EncoderConfig::preset(preset, head, 0),
            train: TrainConfig::preset(preset),
        };
        for (key, value) in settings {
            let v = value.as_str();
            match key.as_str() {
                "preset" | "head" => {}
                "corpus" => cfg.corpus = Some(v.into()),
                "gold" => cfg.gold = Some(v.into()),
                "inventory" => cfg.inventory = Some(v.into()),
                "out" => cfg.out = Some(v.into()),
                "checkpoint" => cfg.checkpoint = Some(v.into()),
                "members" => cfg.members = Some(v.into()),
                "alpha" => {
                    cfg.alpha = match v.to_ascii_lowercase().as_str() {
                        "" | "none" | "base" => None,
                        _ => Some(parse_value(key, v)?),
                    }
                }
                "seed" => cfg.train.seed = parse_value(key, v)?,
                "skip_missing" => cfg.skip_missing = parse_bool(key, v)?,
                "min_count" => cfg.min_count = parse_value(key, v)?,
                "dataset" => cfg.dataset = Some(v.into()),
                "model" => cfg.model = Some(v.into()),
                "experiment" => cfg.experiment = Some(v.into()),
                "max_seq_length" => cfg.encoder.max_seq_length = parse_value(key, v)?,
                "model_dim" => cfg.encoder.model_dim = parse_value(key, v)?,
                "num_layers" => cfg.encoder.num_layers = parse_value(key, v)?,
                "num_heads" => cfg.encoder.num_heads = parse_value(key, v)?,
                "feedforward_dim" => cfg.encoder.feedforward_dim = parse_value(key, v)?,
                "dropout_rate" => cfg.encoder.dropout_rate = parse_value(key, v)?,
                "batch_size" => cfg.train.batch_size = parse_value(key, v)?,
                "learning_rate" => cfg.train.learning_rate = parse_value(key, v)?,
                "num_epochs" => cfg.train.num_epochs = parse_value(key, v)?,
                "grad_accum_steps" => cfg.train.grad_accum_steps = parse_value(key, v)?,
                _ => return Err(Error::Config(format!("unknown key `{key}`"))),
            }
        }
        if let Some(a) = cfg.alpha {
            SamplingConfig::alpha(a, cfg.train.seed)?;
        }
        cfg.train.validate()?;
        EncoderConfig { vocab_size: 4, ..cfg.encoder.clone() }.validate()?;
        Ok(cfg)
    }

    fn sampling(&self) -> Result<SamplingConfig> {
        match self.alpha {
            Some(a) => SamplingConfig::alpha(a, self.train.seed),
            None => Ok(SamplingConfig::baseline(self.train.seed)),
        }
    }

    fn experiment_tag(&self) -> String {
        self.experiment.clone().unwrap_or_else(|| match self.alpha {
            Some(a) => format!("alpha={a}"),
            None => "base".to_string(),
        })
    }
}

fn gather_settings(opts: &Options) -> Result<Vec<(String, String)>> {
    let mut settings = match &opts.config {
        Some(path) => parse_config_text(&read_text(path)?)?,
        None => Vec::new(),
    };
    for pair in &opts.set {
        settings.extend(parse_config_text(pair).map_err(|_| {
            Error::Config(format!("`--set {pair}` is not a known `key=value` setting"))
        })?);
    }
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.to_string_lossy().into_owned());
    let flags = [
        ("corpus", path(&opts.corpus)),
        ("gold", path(&opts.gold)),
        ("inventory", path(&opts.inventory)),
        ("out", path(&opts.out)),
        ("checkpoint", path(&opts.checkpoint)),
        ("members", opts.members.clone()),
        ("alpha", opts.alpha.clone()),
        ("seed", opts.seed.clone()),
        ("preset", opts.preset.clone()),
        ("head", opts.head.clone()),
        ("skip_missing", opts.skip_missing.then(|| "true".to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            settings.push((key.to_string(), v));
        }
    }
    Ok(settings)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn require<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| Error::Config(format!("missing required setting `--{flag}`")))
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    let dir = require(&cfg.out, "out")?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir)
}

fn emit(stdout: &mut dyn Write, text: &str) -> Result<()> {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn dataset_name(cfg: &RunConfig, corpus: &Path) -> String {
    cfg.dataset.clone().unwrap_or_else(|| {
        corpus
            .file_stem()
            .map_or_else(|| "corpus".into(), |s| s.to_string_lossy().into_owned())
    })
}

struct Loaded {
    corpus: Corpus,
    gold: GoldKeys,
    inventory: SenseInventory,
}

fn load_data(cfg: &RunConfig) -> Result<Loaded> {
    let corpus_path = require(&cfg.corpus, "corpus")?;
    let gold_path = require(&cfg.gold, "gold")?;
    let inventory_path = require(&cfg.inventory, "inventory")?;
    let mut corpus = parse_corpus(&read_text(corpus_path)?)?;
    let gold = parse_gold_keys(&read_text(gold_path)?)?;
    let inventory = parse_inventory(&read_text(inventory_path)?)?;
    attach_gold(&mut corpus.instances, &gold)?;
    Ok(Loaded { corpus, gold, inventory })
}

/// Instances usable for training: all of them, or only the covered ones
/// under `skip_missing`. Every training instance needs gold keys.
fn training_instances(cfg: &RunConfig, data: &Loaded) -> Result<Vec<WsdInstance>> {
    let coverage = check_coverage(&data.corpus.instances, &data.inventory)?;
    if let Some(first) = coverage.skipped.first() {
        if !cfg.skip_missing {
            return Err(Error::MissingSense {
                lemma: first.lemma.clone(),
                pos: first.pos.to_string(),
            }
            .for_instance(&first.instance_id));
        }
    }
    if let Some(unlabeled) = coverage.covered.iter().find(|i| i.gold_keys.is_empty()) {
        return Err(Error::Validation(format!(
            "training instance `{}` has no gold key",
            unlabeled.instance_id
        )));
    }
    Ok(coverage.covered)
}

fn cmd_stats(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let path = require(&cfg.corpus, "corpus")?;
    let corpus = parse_corpus(&read_text(path)?)?;
    let s = compute_stats(&corpus.instances);
    let name = dataset_name(cfg, path);
    let w = name.chars().count().max(7);
    emit(
        stdout,
        &format!(
            "{:<w$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}\n{:<w$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}\n",
            "dataset", "total", "noun", "verb", "adj", "adv", "other",
            name, s.total, s.noun, s.verb, s.adj, s.adv, s.other
        ),
    )
}

fn cmd_build_pairs(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let data = load_data(cfg)?;
    let instances = training_instances(cfg, &data)?;
    let pairs = build_training_set(
        &instances,
        &data.corpus.sentences,
        &data.inventory,
        &cfg.sampling()?,
        cfg.encoder.head.uses_ws(),
    )?;
    let path = out_dir(cfg)?.join("pairs.tsv");
    write_file(&path, write_pairs_tsv(&pairs).as_bytes())?;
    emit(
        stdout,
        &format!("wrote {} pairs for {} instances to {}\n", pairs.len(), instances.len(), path.display()),
    )
}

fn cmd_train(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let data = load_data(cfg)?;
    let dir = out_dir(cfg)?;
    let instances = training_instances(cfg, &data)?;
    let pairs = build_training_set(
        &instances,
        &data.corpus.sentences,
        &data.inventory,
        &cfg.sampling()?,
        cfg.encoder.head.uses_ws(),
    )?;
    let (model, log) = fit(&pairs, &cfg.encoder, &cfg.train, cfg.min_count)?;
    write_file(&dir.join("model.ckpt"), &save_checkpoint(&model))?;
    write_file(&dir.join("loss.csv"), log.to_csv().as_bytes())?;
    let last = log.epoch_losses.last().map_or_else(|| "n/a".into(), |l| format!("{l:.6}"));
    emit(
        stdout,
        &format!(
            "trained {} on {} pairs ({} epochs, final loss {last}); wrote {}\n",
            model.config.head,
            pairs.len(),
            log.epoch_losses.len(),
            dir.display()
        ),
    )
}

fn load_model(path: &Path) -> Result<GlossModel> {
    load_checkpoint(&read_bytes(path)?).map_err(|e| match e {
        Error::CorruptCheckpoint(m) => Error::CorruptCheckpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Predicts every instance with `predict`; instances without senses are
/// skipped (and later scored wrong) only under `skip_missing`.
fn predict_all(
    cfg: &RunConfig,
    data: &Loaded,
    predict: impl Fn(&WsdInstance) -> Result<Prediction>,
) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(data.corpus.instances.len());
    for inst in &data.corpus.instances {
        match predict(inst) {
            Ok(p) => out.push(p),
            Err(Error::MissingSense { .. }) if cfg.skip_missing => {}
            Err(e) => return Err(e.for_instance(&inst.instance_id)),
        }
    }
    Ok(out)
}

fn finish_eval(
    cfg: &RunConfig,
    data: &Loaded,
    predictions: &[Prediction],
    model_name: String,
    stdout: &mut dyn Write,
) -> Result<()> {
    let pos_index: HashMap<String, Pos> = data
        .corpus
        .instances
        .iter()
        .map(|i| (i.instance_id.clone(), i.pos))
        .collect();
    let corpus_path = require(&cfg.corpus, "corpus")?;
    let report = score(predictions, &data.gold, &pos_index)?.labeled(
        &dataset_name(cfg, corpus_path),
        &model_name,
        &cfg.experiment_tag(),
    );
    let dir = out_dir(cfg)?;
    write_file(&dir.join("predictions.txt"), write_predictions(predictions).as_bytes())?;
    let csv = write_report_csv(std::slice::from_ref(&report));
    write_file(&dir.join("report.csv"), csv.as_bytes())?;
    emit(stdout, &csv)
}

fn check_head(cfg_head: Option<&str>, model: &GlossModel) -> Result<()> {
    if let Some(h) = cfg_head {
        let wanted: HeadKind = h.parse()?;
        if wanted != model.config.head {
            return Err(Error::Config(format!(
                "checkpoint has head {} but {wanted} was requested",
                model.config.head
            )));
        }
    }
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, head_flag: Option<&str>, stdout: &mut dyn Write) -> Result<()> {
    let model = load_model(require(&cfg.checkpoint, "checkpoint")?)?;
    check_head(head_flag, &model)?;
    let data = load_data(cfg)?;
    let index = data.corpus.sentence_index();
    let predictions = predict_all(cfg, &data, |inst| {
        disambiguate(&model, inst, index[inst.sentence_id.as_str()], &data.inventory)
    })?;
    let name = cfg
        .model
        .clone()
        .unwrap_or_else(|| model.config.head.to_string());
    finish_eval(cfg, &data, &predictions, name, stdout)
}

/// `--members` is either a comma-separated checkpoint list or the path of a
/// spec file listing `checkpoint<TAB>head` lines.
fn resolve_members(members: &str) -> Result<Vec<(PathBuf, Option<HeadKind>)>> {
    let paths: Vec<&str> = members.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if let [single] = paths.as_slice() {
        let bytes = read_bytes(Path::new(single))?;
        if !bytes.starts_with(CHECKPOINT_MAGIC) {
            let text = String::from_utf8(bytes)
                .map_err(|_| Error::Config(format!("{single} is neither a checkpoint nor a spec file")))?;
            let base = Path::new(single).parent().unwrap_or(Path::new(""));
            return Ok(parse_ensemble_spec(&text)?
                .into_iter()
                .map(|MemberSpec { checkpoint, head }| (base.join(checkpoint), Some(head)))
                .collect());
        }
    }
    if paths.is_empty() {
        return Err(Error::Precondition("ensemble needs at least one member".into()));
    }
    Ok(paths.into_iter().map(|p| (PathBuf::from(p), None)).collect())
}

fn cmd_ensemble_eval(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let members_arg = cfg
        .members
        .as_deref()
        .ok_or_else(|| Error::Config("missing required setting `--members`".into()))?;
    let mut models = Vec::new();
    for (path, head) in resolve_members(members_arg)? {
        let model = load_model(&path)?;
        if let Some(h) = head {
            if h != model.config.head {
                return Err(Error::Config(format!(
                    "{}: spec says {h} but the checkpoint has head {}",
                    path.display(),
                    model.config.head
                )));
            }
        }
        models.push(model);
    }
    let data = load_data(cfg)?;
    let index = data.corpus.sentence_index();
    let predictions = predict_all(cfg, &data, |inst| {
        ensemble_disambiguate(&models, inst, index[inst.sentence_id.as_str()], &data.inventory)
    })?;
    let name = cfg.model.clone().unwrap_or_else(|| {
        let heads: Vec<&str> = models.iter().map(|m| m.head().as_str()).collect();
        format!("ensemble({})", heads.join("+"))
    });
    finish_eval(cfg, &data, &predictions, name, stdout)
}

fn cmd_report(cfg: &RunConfig, paths: &[PathBuf], stdout: &mut dyn Write) -> Result<()> {
    let mut reports: Vec<EvaluationReport> = Vec::new();
    for path in paths {
        reports.extend(read_report_csv(&read_text(path)?).map_err(|e| match e {
            Error::Format { line, message } => Error::Format {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })?);
    }
    let table = report_table(&reports);
    if cfg.out.is_some() {
        let dir = out_dir(cfg)?;
        write_file(&dir.join("table.txt"), table.text.as_bytes())?;
        write_file(&dir.join("table.csv"), table.csv.as_bytes())?;
    }
    emit(stdout, &table.text)
}

/// Runs one parsed invocation, writing normal output to `stdout`.
pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    let settings = gather_settings(&cli.opts)?;
    let cfg = RunConfig::resolve(&settings)?;
    let head_flag = settings
        .iter()
        .rev()
        .find(|(k, _)| k == "head")
        .map(|(_, v)| v.as_str());
    match &cli.command {
        Command::Stats => cmd_stats(&cfg, stdout),
        Command::BuildPairs => cmd_build_pairs(&cfg, stdout),
        Command::Train => cmd_train(&cfg, stdout),
        Command::Eval => cmd_eval(&cfg, head_flag, stdout),
        Command::EnsembleEval => cmd_ensemble_eval(&cfg, stdout),
        Command::Report { reports } => cmd_report(&cfg, reports, stdout),
    }
}

/// One-line stderr rendering of an error: `error kind=<kind> exit=<code> <message>`.
pub fn error_line(err: &Error) -> String {
    let message = err.to_string().replace(['\n', '\r'], " ");
    format!("error kind={} exit={} {message}", err.kind(), err.exit_code())
}

/// Parses arguments, runs, and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(stdout, "{e}");
            return 0;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or_default().to_string();
            let _ = writeln!(stderr, "error kind=usage exit=1 {first}");
            return 1;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => 0,
        Err(err) => {
            let _ = writeln!(stderr, "{}", error_line(&err));
            err.exit_code()
        }
    }
}
