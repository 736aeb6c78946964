//! The `emofuse` command line: `synth`, `train`, `eval`, `ablate` and
//! `dump-features`, all driven by one JSON run configuration.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::data::{load_dataset, synthesize_dataset, Dataset, Modality, SynthSpec};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport};
use crate::model::{Architecture, Model, ModelConfig};
use crate::preprocess::{FittedPreprocessor, PcaModel, PreprocessConfig};
use crate::report::{
    ablation_suite, canonical_json, read_json, standard_ablation, write_feature_csv, write_json, write_roc_csv,
    write_text, AblationEntry, FoldReport, TrainSummary, REPORT_SCHEMA,
};
use crate::training::{run_cv, CvOutcome, Experiment, TrainConfig};

/// Everything a `train` or `ablate` run needs. Relative paths in a config
/// file are resolved against the file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub preprocess: PreprocessConfig,
    pub modalities: Vec<Modality>,
    pub ca: bool,
    pub train_ratio: f64,
    pub folds: usize,
    pub ablation: Vec<AblationEntry>,
    /// Overrides the seeds inside the model and train blocks.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let exp = Experiment::default();
        RunConfig {
            manifest: None,
            out_dir: PathBuf::from("runs"),
            model: exp.model,
            train: exp.train,
            preprocess: exp.preprocess,
            modalities: exp.architecture.modalities,
            ca: exp.architecture.cross_attention,
            train_ratio: exp.train_ratio,
            folds: exp.folds,
            ablation: standard_ablation(),
            seed: exp.seed,
        }
    }
}

impl RunConfig {
    pub fn experiment(&self) -> Result<Experiment> {
        let exp = Experiment {
            model: self.model.clone(),
            architecture: Architecture::new(&self.modalities, self.ca)?,
            train: self.train.clone(),
            preprocess: self.preprocess.clone(),
            train_ratio: self.train_ratio,
            folds: self.folds,
            seed: self.seed,
        }
        .with_seed(self.seed);
        exp.validate()?;
        Ok(exp)
    }

    /// Checks every block and that the manifest exists.
    pub fn validate(&self) -> Result<()> {
        self.experiment()?;
        for e in &self.ablation {
            e.architecture()?;
        }
        match &self.manifest {
            None => Err(Error::Config("manifest is not set (use --override manifest=PATH)".into())),
            Some(p) if !p.is_file() => Err(Error::Config(format!("manifest {} does not exist", p.display()))),
            Some(_) => Ok(()),
        }
    }

    /// Short hash of the canonical config without its output directory.
    pub fn config_id(&self) -> Result<String> {
        let mut tree = serde_json::to_value(self)?;
        if let Value::Object(map) = &mut tree {
            map.remove("out_dir");
        }
        let digest = Sha256::digest(canonical_json(&tree)?.as_bytes());
        Ok(digest.iter().take(6).map(|b| format!("{b:02x}")).collect())
    }
}

/// Applies `key.sub=value` to a JSON tree. The value is parsed as JSON when
/// possible; otherwise it is a string, split on commas when the target is a
/// list.
pub fn apply_override(tree: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let mut node = &mut *tree;
    for key in path.split('.') {
        let map = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override `{path}`: `{key}` is not inside an object")))?;
        if !map.contains_key(key) {
            return Err(Error::Config(format!("override `{path}`: unknown key `{key}`")));
        }
        node = map.get_mut(key).expect("checked above");
    }
    let parsed = serde_json::from_str::<Value>(raw).ok();
    *node = match (parsed, node.is_array()) {
        (Some(v @ Value::Array(_)), _) => v,
        (_, true) => Value::Array(
            raw.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| Value::String(s.into()))
                .collect(),
        ),
        (Some(v), false) => v,
        (None, false) => Value::String(raw.into()),
    };
    Ok(())
}

/// Reads the config file (or the defaults), applies overrides and the
/// global seed, and resolves relative paths.
pub fn load_run_config(path: Option<&Path>, overrides: &[String], seed: Option<u64>, out: Option<&Path>) -> Result<RunConfig> {
    let mut tree = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<Value>(&text).map_err(|e| Error::Parse {
                path: p.to_path_buf(),
                msg: e.to_string(),
            })?
        }
        None => Value::Object(Default::default()),
    };
    // start from a full tree so every key can be overridden
    let mut full = serde_json::to_value(RunConfig::default())?;
    merge(&mut full, tree.take());
    for o in overrides {
        apply_override(&mut full, o)?;
    }
    let mut cfg: RunConfig = serde_json::from_value(full).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out_dir = o.to_path_buf();
    }
    let base = path.and_then(Path::parent).filter(|p| !p.as_os_str().is_empty());
    if let Some(base) = base {
        if let Some(m) = &cfg.manifest {
            if m.is_relative() {
                cfg.manifest = Some(base.join(m));
            }
        }
        if out.is_none() && cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
    }
    Ok(cfg)
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, patch) => *slot = patch,
    }
}

/// Index of the files that make up one trained fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldArtifacts {
    pub schema: String,
    pub model: PathBuf,
    pub standardizers: PathBuf,
    pub pca: Option<PathBuf>,
}

pub const ARTIFACTS_FILE: &str = "artifacts.json";

/// Writes a fitted fold (model, standardizers, PCA) under `dir`.
pub fn save_fold(dir: &Path, model: &Model, pre: &FittedPreprocessor) -> Result<()> {
    let artifacts = FoldArtifacts {
        schema: REPORT_SCHEMA.into(),
        model: "model.json".into(),
        standardizers: "preprocess.json".into(),
        pca: pre.pca.as_ref().map(|_| "pca.json".into()),
    };
    write_text(&dir.join(&artifacts.model), &model.to_json()?)?;
    write_json(&dir.join(&artifacts.standardizers), &FittedPreprocessor { pca: None, ..pre.clone() })?;
    if let (Some(pca), Some(file)) = (&pre.pca, &artifacts.pca) {
        write_json(&dir.join(file), pca)?;
    }
    write_json(&dir.join(ARTIFACTS_FILE), &artifacts)
}

/// Loads what `save_fold` wrote. `path` is the fold directory or its
/// artifact index.
pub fn load_fold(path: &Path) -> Result<(Model, FittedPreprocessor)> {
    let index = if path.is_dir() { path.join(ARTIFACTS_FILE) } else { path.to_path_buf() };
    let dir = index.parent().unwrap_or(Path::new("."));
    let required = |p: PathBuf| if p.is_file() { Ok(p) } else { Err(Error::MissingArtifact(p)) };
    let artifacts: FoldArtifacts = read_json(&required(index.clone())?)?;
    let model_path = required(dir.join(&artifacts.model))?;
    let text = fs::read_to_string(&model_path).map_err(|e| Error::io(&model_path, e))?;
    let model = Model::from_json(&text)?;
    let mut pre: FittedPreprocessor = read_json(&required(dir.join(&artifacts.standardizers))?)?;
    if let Some(file) = &artifacts.pca {
        let pca: PcaModel = read_json(&required(dir.join(file))?)?;
        pre.pca = Some(pca);
    }
    Ok((model, pre))
}

/// Preprocesses `dataset` with a loaded fold, checking that widths agree.
pub fn prepare_for(model: &Model, pre: &FittedPreprocessor, dataset: &Dataset) -> Result<Vec<crate::data::Sample>> {
    let (eye, ppg, semantic) = pre.output_dims(dataset.dims.eye, dataset.dims.ppg, dataset.dims.semantic);
    let raw_semantic = pre.pca.as_ref().map(|p| p.input_dim());
    let mismatch = |what: &str, a: usize, b: usize| {
        Err(Error::Config(format!("{what} width {a} in the dataset does not match {b} in the trained model")))
    };
    if let Some(d) = raw_semantic.filter(|&d| d != dataset.dims.semantic) {
        return mismatch("semantic", dataset.dims.semantic, d);
    }
    for (name, got, want) in [("eye", eye, model.dims.eye), ("ppg", ppg, model.dims.ppg), ("semantic", semantic, model.dims.semantic)] {
        if got != want {
            return mismatch(name, got, want);
        }
    }
    if model.config.num_classes != dataset.num_classes() {
        return mismatch("class count", dataset.num_classes(), model.config.num_classes);
    }
    pre.apply_all(&dataset.samples)
}

/// Writes every artifact of a cross-validated run into `dir`.
pub fn write_run(dir: &Path, cfg: &RunConfig, exp: &Experiment, outcome: &CvOutcome) -> Result<TrainSummary> {
    let id = cfg.config_id()?;
    write_json(&dir.join("config.json"), cfg)?;
    write_json(&dir.join("split.json"), &outcome.split)?;
    for f in &outcome.folds {
        let fold_dir = dir.join(format!("fold-{}", f.fold));
        save_fold(&fold_dir, &f.model, &f.preprocessor)?;
        write_json(&fold_dir.join("record.json"), &f.record)?;
        write_json(
            &fold_dir.join("report.json"),
            &FoldReport {
                schema: REPORT_SCHEMA.into(),
                fold: f.fold,
                train: f.train.clone(),
                validation: f.validation.clone(),
                test: f.test.clone(),
            },
        )?;
        write_roc_csv(&fold_dir.join("roc_test.csv"), &f.test.roc)?;
        if let Some(r) = &f.resample {
            write_json(&fold_dir.join("resample.json"), r)?;
        }
    }
    let summary = TrainSummary::of(outcome, exp, &id);
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Parser)]
#[command(name = "emofuse", version, about = "Multimodal learner-emotion recognition with cross-attention fusion")]
pub struct Cli {
    /// Run configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (a file for `eval` and `dump-features`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// `dotted.key=value`; repeatable, and one flag may take several.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE", num_args = 1..)]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset and print its manifest path.
    Synth(SynthArgs),
    /// Cross-validated training; prints the run directory.
    Train,
    /// Evaluate a trained fold on a dataset without refitting anything.
    Eval(ArtifactArgs),
    /// Run the ablation rows of the config.
    Ablate,
    /// Write the classifier input vector of every sample as CSV.
    DumpFeatures(ArtifactArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    /// Comma-separated per-class counts; overrides --per-class.
    #[arg(long, value_delimiter = ',')]
    pub imbalanced: Option<Vec<usize>>,
    #[arg(long, default_value_t = 3.0)]
    pub separation: f64,
    /// Make the semantic block carry no class information.
    #[arg(long)]
    pub uninformative_semantic: bool,
    #[arg(long, default_value_t = 8)]
    pub eye_dim: usize,
    #[arg(long, default_value_t = 6)]
    pub ppg_dim: usize,
    #[arg(long, default_value_t = 32)]
    pub semantic_dim: usize,
    /// Timesteps per modality.
    #[arg(long, default_value_t = 4)]
    pub steps: usize,
    #[arg(long, default_value_t = 1)]
    pub samples_per_video: usize,
}

#[derive(Debug, Args)]
pub struct ArtifactArgs {
    /// Fold directory (or its artifacts.json) written by `train`.
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
}

/// Exit status for an error: 1 for bad input, 2 for failures while running.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) | Error::Parse { .. } | Error::Json(_) | Error::MissingArtifact(_) => 1,
        _ => 2,
    }
}

/// One-line JSON error for stderr.
pub fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "status": "error", "kind": kind, "message": message }).to_string()
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", error_line("usage", first));
            return 1;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            exit_code(&e)
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(cli, a),
        Command::Train => cmd_train(cli),
        Command::Eval(a) => cmd_eval(cli, a),
        Command::Ablate => cmd_ablate(cli),
        Command::DumpFeatures(a) => cmd_dump_features(cli, a),
    }
}

fn cmd_synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let mut spec = SynthSpec::balanced(a.per_class, a.separation, cli.seed.unwrap_or(7));
    if let Some(counts) = &a.imbalanced {
        spec.counts = counts.clone();
    }
    spec.semantic_informative = !a.uninformative_semantic;
    spec.eye_dim = a.eye_dim;
    spec.ppg_dim = a.ppg_dim;
    spec.semantic_dim = a.semantic_dim;
    spec.eye_steps = a.steps;
    spec.ppg_steps = a.steps;
    spec.semantic_steps = a.steps;
    spec.samples_per_video = a.samples_per_video;
    spec.validate()?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("data/synth"));
    let (_, manifest) = synthesize_dataset(&spec, &dir)?;
    println!("{}", manifest.display());
    Ok(())
}

fn run_config(cli: &Cli) -> Result<RunConfig> {
    let cfg = load_run_config(cli.config.as_deref(), &cli.overrides, cli.seed, cli.out.as_deref())?;
    cfg.validate()?;
    Ok(cfg)
}

fn manifest_of(cfg: &RunConfig) -> &Path {
    cfg.manifest.as_deref().expect("validated")
}

fn cmd_train(cli: &Cli) -> Result<()> {
    let cfg = run_config(cli)?;
    let exp = cfg.experiment()?;
    let dataset = load_dataset(manifest_of(&cfg))?;
    let outcome = run_cv(&dataset, &exp, &mut ())?;
    let dir = cfg.out_dir.join(format!("train-{}", cfg.config_id()?));
    let summary = write_run(&dir, &cfg, &exp, &outcome)?;
    let acc = summary.aggregate.test_accuracy;
    println!("{}", dir.display());
    eprintln!(
        "{}: test accuracy {:.2}±{:.2}% over {} folds",
        summary.architecture,
        100.0 * acc.mean,
        100.0 * acc.std,
        summary.aggregate.folds
    );
    Ok(())
}

fn evaluate_artifacts(a: &ArtifactArgs) -> Result<(Model, Vec<crate::data::Sample>, Dataset)> {
    let (model, pre) = load_fold(&a.params)?;
    if !a.manifest.is_file() {
        return Err(Error::Config(format!("manifest {} does not exist", a.manifest.display())));
    }
    let dataset = load_dataset(&a.manifest)?;
    let samples = prepare_for(&model, &pre, &dataset)?;
    Ok((model, samples, dataset))
}

fn cmd_eval(cli: &Cli, a: &ArtifactArgs) -> Result<()> {
    let (model, samples, dataset) = evaluate_artifacts(a)?;
    let report: EvalReport = evaluate(&model, &samples, &dataset.class_names, "eval")?;
    let text = canonical_json(&report)?;
    match &cli.out {
        Some(path) => write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_dump_features(cli: &Cli, a: &ArtifactArgs) -> Result<()> {
    let out = cli
        .out
        .clone()
        .ok_or_else(|| Error::Config("dump-features needs --out FILE.csv".into()))?;
    let (model, samples, _) = evaluate_artifacts(a)?;
    let features = model.features(&samples)?;
    write_feature_csv(&out, &samples, &features)?;
    println!("{}", out.display());
    Ok(())
}

fn cmd_ablate(cli: &Cli) -> Result<()> {
    let cfg = run_config(cli)?;
    if cfg.ablation.is_empty() {
        return Err(Error::Config("ablation list is empty: nothing to run".into()));
    }
    let exp = cfg.experiment()?;
    let manifest = manifest_of(&cfg);
    let dataset = load_dataset(manifest)?;
    let table = ablation_suite(&dataset, Some(manifest), &exp, &cfg.ablation, &mut ())?;
    let dir = cfg.out_dir.join(format!("ablate-{}", cfg.config_id()?));
    write_json(&dir.join("config.json"), &cfg)?;
    write_json(&dir.join("ablation.json"), &table)?;
    table.write_csv(&dir.join("ablation.csv"))?;
    println!("{}", dir.display());
    eprint!("{}", table.render());
    Ok(())
}
