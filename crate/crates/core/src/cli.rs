//! Command-line front end: argument parsing, config resolution, run
//! manifests and the per-subcommand drivers behind the `fignn` binary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;

use crate::aggregator::AggregatorKind;
use crate::error::{Error, Result};
use crate::evaluation::{export_embeddings, MetricReport, Metrics};
use crate::fm_reduction::verify_reduction;
use crate::graph::SparseGraph;
use crate::graph::{load_graph_dir, write_graph};
use crate::synthetic::{planted_interactions, two_block, BlockConfig, PlantedConfig};
use crate::training::{
    finite_difference_check, format_history, load_checkpoint, parse_key_values, save_checkpoint, splits_for,
    GradCheckConfig, LossMode, ModelParams, Part, Session, TrainConfig,
};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";
pub const HISTORY_FILE: &str = "history.txt";
pub const METRICS_FILE: &str = "metrics.txt";
pub const ATTENTION_FILE: &str = "attention.txt";
pub const EMBEDDING_FILE: &str = "embeddings.txt";

#[derive(Parser, Debug)]
#[command(name = "fignn", version, about = "Feature interaction-aware graph neural networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit a model per seed and write checkpoints, histories and metrics.
    Train(TrainArgs),
    /// Recompute train/val/test metrics from saved checkpoints.
    Evaluate(CheckpointArgs),
    /// Write the representations of every node from saved checkpoints.
    ExportEmbeddings(CheckpointArgs),
    /// Compare analytic gradients with central differences on a small random model.
    CheckGradients(GradArgs),
    /// Check that the simplified model reproduces a factorization machine.
    VerifyFmReduction(ReductionArgs),
    /// Generate a synthetic graph in the dataset directory layout.
    MakeSynthetic(SyntheticArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// Key-value config file; a previous run's manifest.txt replays that run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Comma-separated seeds, one run each.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Output directory [default: fignn-out].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub aggregator: Option<AggregatorArg>,
    /// Sum interactions instead of attention-pooling them.
    #[arg(long)]
    pub no_attention: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Semi,
    Unsup,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum AggregatorArg {
    Gcn,
    Sage,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Directory holding edges.txt, features.txt and optionally labels.txt.
    #[arg(long)]
    pub dataset_dir: Option<PathBuf>,
    /// Also write per-node attention weights.
    #[arg(long)]
    pub dump_attention: bool,
    /// Also write the learned representations.
    #[arg(long)]
    pub export_embeddings: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CheckpointArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub dataset_dir: Option<PathBuf>,
    /// Output directory of a `train` run; its manifest is the default config
    /// and its per-seed checkpoints are loaded.
    #[arg(long)]
    pub run: Option<PathBuf>,
    /// Single checkpoint file, for a single seed.
    #[arg(long, conflicts_with = "run")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GradArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Node count of the random instance (at most 20).
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Feature count of the random instance (at most 16).
    #[arg(long)]
    pub features: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ReductionArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SyntheticKind {
    /// Labels are the product of two planted feature groups.
    Planted,
    /// Two-block stochastic block model.
    Blocks,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SyntheticArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum)]
    pub kind: Option<SyntheticKind>,
    #[arg(long)]
    pub nodes: Option<usize>,
}

/// Everything needed to rerun a command: the resolved config with defaults
/// materialized, the dataset, the seeds, the output directory and any
/// command-specific settings.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config: TrainConfig,
    pub dataset_dir: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub extra: BTreeMap<String, String>,
}

const RUN_KEYS: &[&str] = &[
    "command",
    "dataset_dir",
    "seeds",
    "out",
    "run",
    "checkpoint",
    "trials",
    "kind",
    "nodes",
    "features",
    "dump_attention",
    "export_embeddings",
];

impl RunManifest {
    fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            config: TrainConfig::default(),
            dataset_dir: None,
            seeds: vec![0],
            out: PathBuf::from("fignn-out"),
            extra: BTreeMap::new(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# fignn run manifest\n");
        let _ = writeln!(out, "command = {}", self.command);
        if let Some(d) = &self.dataset_dir {
            let _ = writeln!(out, "dataset_dir = {}", d.display());
        }
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(out, "seeds = {}", seeds.join(","));
        let _ = writeln!(out, "out = {}", self.out.display());
        for (k, v) in &self.extra {
            let _ = writeln!(out, "{k} = {v}");
        }
        for (k, v) in self.config.to_pairs() {
            if k != "seed" {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }

    pub fn write(&self) -> Result<PathBuf> {
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        let path = self.out.join(MANIFEST_FILE);
        fs::write(&path, self.to_text()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Applies a config file: training keys go to the config, run keys to
    /// the manifest. The file's `command` is informational only.
    fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let pairs = parse_key_values(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for (key, value) in pairs {
            match key.as_str() {
                "command" => {}
                "dataset_dir" => self.dataset_dir = Some(PathBuf::from(value)),
                "seeds" => self.seeds = parse_seeds(&value)?,
                "seed" => self.seeds = parse_seeds(&value)?,
                "out" => self.out = PathBuf::from(value),
                k if RUN_KEYS.contains(&k) => {
                    self.extra.insert(key, value);
                }
                _ => self.config.set(&key, &value)?,
            }
        }
        Ok(())
    }

    fn apply_common(&mut self, args: &CommonArgs) -> Result<()> {
        if let Some(path) = &args.config {
            self.apply_file(path)?;
        }
        if let Some(seed) = args.seed {
            self.seeds = vec![seed];
        }
        if let Some(seeds) = &args.seeds {
            if seeds.is_empty() {
                return Err(Error::Config("--seeds needs at least one seed".into()));
            }
            self.seeds = seeds.clone();
        }
        if let Some(out) = &args.out {
            self.out = out.clone();
        }
        Ok(())
    }

    fn apply_model(&mut self, args: &ModelArgs) {
        if let Some(mode) = args.mode {
            self.config.mode = match mode {
                ModeArg::Semi => LossMode::Semi,
                ModeArg::Unsup => LossMode::Unsup,
            };
        }
        if let Some(agg) = args.aggregator {
            self.config.aggregator = match agg {
                AggregatorArg::Gcn => AggregatorKind::Gcn,
                AggregatorArg::Sage => AggregatorKind::SageMean,
            };
        }
        if args.no_attention {
            self.config.attention = false;
        }
    }

    fn extra_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.extra
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
            })
            .transpose()
    }

    fn flag(&self, key: &str) -> bool {
        self.extra.get(key).is_some_and(|v| v == "true")
    }

    fn config_for(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.config.clone()
        }
    }

    fn seed_dir(&self, seed: u64) -> PathBuf {
        self.out.join(format!("seed-{seed}"))
    }

    fn dataset(&self) -> Result<SparseGraph> {
        let dir = self
            .dataset_dir
            .as_ref()
            .ok_or_else(|| Error::Config("no dataset: pass --dataset-dir or set dataset_dir in the config".into()))?;
        load_graph_dir(dir)
    }
}

fn parse_seeds(raw: &str) -> Result<Vec<u64>> {
    let seeds = raw
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid seed `{s}`")))
        })
        .collect::<Result<Vec<u64>>>()?;
    if seeds.is_empty() {
        return Err(Error::Config("empty seed list".into()));
    }
    Ok(seeds)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn part_metrics(session: &Session<'_>, params: &ModelParams) -> Result<[(Part, Metrics); 3]> {
    Ok([
        (Part::Train, session.evaluate(params, Part::Train)?),
        (Part::Val, session.evaluate(params, Part::Val)?),
        (Part::Test, session.evaluate(params, Part::Test)?),
    ])
}

fn format_part_metrics(metrics: &[(Part, Metrics)]) -> String {
    let mut out = String::new();
    for (part, m) in metrics {
        let (a, b) = m.names();
        let name = match part {
            Part::Train => "train",
            Part::Val => "val",
            Part::Test => "test",
        };
        let _ = writeln!(out, "{name}_{a}={:.6}\n{name}_{b}={:.6}", m.first, m.second);
    }
    out
}

fn finish_report(manifest: &RunManifest, runs: Vec<(u64, Metrics)>) -> Result<()> {
    let report = MetricReport::new(runs);
    write_file(&manifest.out.join(METRICS_FILE), &report.to_key_values())?;
    println!("{report}");
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let mut manifest = RunManifest::new("train");
    manifest.apply_common(&args.common)?;
    manifest.apply_model(&args.model);
    if let Some(d) = &args.dataset_dir {
        manifest.dataset_dir = Some(d.clone());
    }
    if args.dump_attention {
        manifest.extra.insert("dump_attention".into(), "true".into());
    }
    if args.export_embeddings {
        manifest.extra.insert("export_embeddings".into(), "true".into());
    }
    manifest
        .extra
        .retain(|k, _| k == "dump_attention" || k == "export_embeddings");
    manifest.config.validate()?;
    let g = manifest.dataset()?;
    manifest.write()?;

    let runs = manifest
        .seeds
        .par_iter()
        .map(|&seed| -> Result<(u64, Metrics)> {
            let config = manifest.config_for(seed);
            let splits = splits_for(&g, &config)?;
            let session = Session::new(&g, &splits, &config)?;
            let outcome = session.train()?;
            info!(
                "seed {seed}: best epoch {} of {}",
                outcome.best_epoch,
                outcome.history.len()
            );
            let dir = manifest.seed_dir(seed);
            let metrics = part_metrics(&session, &outcome.params)?;
            write_file(&dir.join(HISTORY_FILE), &format_history(&outcome.history))?;
            write_file(&dir.join(METRICS_FILE), &format_part_metrics(&metrics))?;
            save_checkpoint(&outcome.params, &dir.join(CHECKPOINT_FILE))?;
            if manifest.flag("dump_attention") {
                write_file(&dir.join(ATTENTION_FILE), &session.attention_dump(&outcome.params)?)?;
            }
            if manifest.flag("export_embeddings") {
                let z = session.embeddings(&outcome.params)?;
                export_embeddings(z.view(), &dir.join(EMBEDDING_FILE))?;
            }
            Ok((seed, metrics[2].1))
        })
        .collect::<Result<Vec<_>>>()?;
    finish_report(&manifest, runs)
}

/// Resolves the manifest and the checkpoint path for every seed.
fn checkpoint_manifest(command: &str, args: &CheckpointArgs) -> Result<(RunManifest, Vec<PathBuf>)> {
    let mut manifest = RunManifest::new(command);
    let mut common = args.common.clone();
    if let (Some(run), None) = (&args.run, &common.config) {
        common.config = Some(run.join(MANIFEST_FILE));
    }
    let out = common.out.take();
    manifest.apply_common(&common)?;
    // a replayed train manifest names the train directory; keep outputs apart
    manifest.out = out.unwrap_or_else(|| PathBuf::from("fignn-out"));
    manifest.apply_model(&args.model);
    manifest.extra.retain(|k, _| k == "run" || k == "checkpoint");
    if let Some(d) = &args.dataset_dir {
        manifest.dataset_dir = Some(d.clone());
    }
    if let Some(run) = &args.run {
        manifest.extra.insert("run".into(), run.display().to_string());
    }
    if let Some(ckpt) = &args.checkpoint {
        manifest.extra.insert("checkpoint".into(), ckpt.display().to_string());
        manifest.extra.remove("run");
    }
    manifest.config.validate()?;
    let paths = match (manifest.extra.get("checkpoint"), manifest.extra.get("run")) {
        (Some(c), _) => {
            if manifest.seeds.len() != 1 {
                return Err(Error::Config("--checkpoint takes exactly one seed".into()));
            }
            vec![PathBuf::from(c)]
        }
        (None, Some(run)) => manifest
            .seeds
            .iter()
            .map(|s| Path::new(run).join(format!("seed-{s}")).join(CHECKPOINT_FILE))
            .collect(),
        (None, None) => return Err(Error::Config("pass --run or --checkpoint".into())),
    };
    Ok((manifest, paths))
}

fn with_checkpoints<T, F>(manifest: &RunManifest, paths: &[PathBuf], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &Session<'_>, &ModelParams) -> Result<T> + Sync,
{
    let g = manifest.dataset()?;
    manifest.write()?;
    manifest
        .seeds
        .par_iter()
        .zip(paths)
        .map(|(&seed, path)| {
            let config = manifest.config_for(seed);
            let splits = splits_for(&g, &config)?;
            let session = Session::new(&g, &splits, &config)?;
            let params = load_checkpoint(path)?;
            session.check_params(&params)?;
            f(seed, &session, &params)
        })
        .collect()
}

fn evaluate(args: &CheckpointArgs) -> Result<()> {
    let (manifest, paths) = checkpoint_manifest("evaluate", args)?;
    let runs = with_checkpoints(&manifest, &paths, |seed, session, params| {
        let metrics = part_metrics(session, params)?;
        write_file(
            &manifest.seed_dir(seed).join(METRICS_FILE),
            &format_part_metrics(&metrics),
        )?;
        Ok((seed, metrics[2].1))
    })?;
    finish_report(&manifest, runs)
}

fn export(args: &CheckpointArgs) -> Result<()> {
    let (manifest, paths) = checkpoint_manifest("export-embeddings", args)?;
    let written = with_checkpoints(&manifest, &paths, |seed, session, params| {
        let path = manifest.seed_dir(seed).join(EMBEDDING_FILE);
        fs::create_dir_all(manifest.seed_dir(seed)).map_err(|e| Error::io(manifest.seed_dir(seed), e))?;
        export_embeddings(session.embeddings(params)?.view(), &path)?;
        Ok(path)
    })?;
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

/// Returns whether every seed passed.
fn check_gradients(args: &GradArgs) -> Result<bool> {
    let mut manifest = RunManifest::new("check-gradients");
    manifest.apply_common(&args.common)?;
    manifest.apply_model(&args.model);
    if let Some(n) = args.nodes {
        manifest.extra.insert("nodes".into(), n.to_string());
    }
    if let Some(d) = args.features {
        manifest.extra.insert("features".into(), d.to_string());
    }
    let defaults = GradCheckConfig::default();
    let cfg = GradCheckConfig {
        aggregator: manifest.config.aggregator,
        attention: manifest.config.attention,
        interactions: manifest.config.interactions,
        mode: manifest.config.mode,
        nodes: manifest.extra_parsed("nodes")?.unwrap_or(defaults.nodes),
        features: manifest.extra_parsed("features")?.unwrap_or(defaults.features),
        dropout: manifest.config.dropout,
        ..defaults
    };
    manifest.extra.retain(|k, _| k == "nodes" || k == "features");
    manifest.write()?;
    let mut text = String::new();
    let mut passed = true;
    for &seed in &manifest.seeds {
        let report = finite_difference_check(&cfg, seed)?;
        passed &= report.passed();
        let _ = writeln!(text, "seed {seed}\n{report}");
    }
    write_file(&manifest.out.join("gradcheck.txt"), &text)?;
    print!("{text}");
    Ok(passed)
}

fn verify_fm(args: &ReductionArgs) -> Result<bool> {
    let mut manifest = RunManifest::new("verify-fm-reduction");
    manifest.apply_common(&args.common)?;
    if let Some(t) = args.trials {
        manifest.extra.insert("trials".into(), t.to_string());
    }
    let trials = manifest.extra_parsed("trials")?.unwrap_or(1000usize);
    manifest.extra.retain(|k, _| k == "trials");
    manifest.extra.insert("trials".into(), trials.to_string());
    manifest.write()?;
    let mut text = String::new();
    let mut passed = true;
    for &seed in &manifest.seeds {
        let report = verify_reduction(trials, seed)?;
        passed &= report.passed();
        let _ = write!(text, "seed={seed} {report}");
    }
    write_file(&manifest.out.join("fm_reduction.txt"), &text)?;
    print!("{text}");
    Ok(passed)
}

fn make_synthetic(args: &SyntheticArgs) -> Result<()> {
    let mut manifest = RunManifest::new("make-synthetic");
    manifest.apply_common(&args.common)?;
    if let Some(kind) = args.kind {
        let name = match kind {
            SyntheticKind::Planted => "planted",
            SyntheticKind::Blocks => "blocks",
        };
        manifest.extra.insert("kind".into(), name.into());
    }
    if let Some(n) = args.nodes {
        manifest.extra.insert("nodes".into(), n.to_string());
    }
    let kind = manifest.extra.get("kind").cloned().unwrap_or_else(|| "planted".into());
    let nodes: Option<usize> = manifest.extra_parsed("nodes")?;
    manifest.extra.retain(|k, _| k == "nodes");
    manifest.extra.insert("kind".into(), kind.clone());
    manifest.write()?;
    for &seed in &manifest.seeds {
        let g = match kind.as_str() {
            "planted" => {
                let defaults = PlantedConfig::default();
                let cfg = PlantedConfig {
                    nodes: nodes.unwrap_or(defaults.nodes),
                    ..defaults
                };
                planted_interactions(&cfg, seed)?
            }
            "blocks" => {
                let defaults = BlockConfig::default();
                let cfg = BlockConfig {
                    nodes: nodes.unwrap_or(defaults.nodes),
                    ..defaults
                };
                two_block(&cfg, seed)?
            }
            other => return Err(Error::Config(format!("unknown synthetic kind `{other}`"))),
        };
        let dir = if manifest.seeds.len() == 1 {
            manifest.out.clone()
        } else {
            manifest.seed_dir(seed)
        };
        write_graph(&g, &dir)?;
        println!(
            "{}: {} nodes, {} edges, {} features",
            dir.display(),
            g.num_nodes(),
            g.num_edges(),
            g.num_features()
        );
    }
    Ok(())
}

/// Runs a parsed command. `Ok(false)` means a check ran and failed.
pub fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Train(a) => train(a).map(|_| true),
        Command::Evaluate(a) => evaluate(a).map(|_| true),
        Command::ExportEmbeddings(a) => export(a).map(|_| true),
        Command::CheckGradients(a) => check_gradients(a),
        Command::VerifyFmReduction(a) => verify_fm(a),
        Command::MakeSynthetic(a) => make_synthetic(a).map(|_| true),
    }
}

/// Parses `args` (program name first) and runs; usage errors exit with 2,
/// failures with 1.
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
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
