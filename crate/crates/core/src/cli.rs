//! Command-line front end. The `epn` binary only forwards to [`run`].
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | I/O or other failure |
//! | 2 | bad arguments or configuration |
//! | 3 | malformed input data, schema or archive |
//! | 4 | training diverged |
//! | 5 | unreadable or incompatible checkpoint |

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use epn_autodiff::Real;

use crate::data::{
    generate_synthetic, parse_track_table, prepare_scenes, ArchiveHeader, SceneArchive, SceneWindow, SyntheticConfig, TableSchema,
    WindowConfig,
};
use crate::error::{EpnError, Result};
use crate::manifest::{sha256_file, RunManifest};
use crate::metrics::MetricReport;
use crate::model::{Epn, ModelConfig};
use crate::plot::render_svg;
use crate::predict::{PredictionEntry, PredictionRecord, PredictionSet};
use crate::train::{append_log, Checkpoint, Precision, RunConfig, Trainer};

pub const DATA_DIR_VAR: &str = "EPN_DATA_DIR";
const DEFAULT_ARCHIVE: &str = "scenes.json";

#[derive(Debug, Parser)]
#[command(name = "epn", version, about = "Ego-planning-informed multimodal trajectory prediction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn a track table or a synthetic config into a split scene archive.
    PrepareData(PrepareArgs),
    /// Train a model and write its best checkpoint.
    Train(TrainArgs),
    /// Best-of-k metrics of a checkpoint on one archive split.
    Evaluate(EvaluateArgs),
    /// Predict k trajectories for selected windows.
    Predict(PredictArgs),
    /// Render a prediction record as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Track table to ingest.
    #[arg(long, required_unless_present = "synthetic_config")]
    pub input: Option<PathBuf>,
    /// `ngsim`, `highd` or `generic`.
    #[arg(long, default_value = "generic")]
    pub schema: String,
    /// Sampling rate of a generic table; NGSIM and HighD use their native rates.
    #[arg(long)]
    pub source_hz: Option<f64>,
    /// Generate scenes from this TOML file instead of reading `--input`.
    #[arg(long, conflicts_with = "input")]
    pub synthetic_config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Frames between consecutive windows of one target.
    #[arg(long, default_value_t = 5)]
    pub stride: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Scene archive (default `$EPN_DATA_DIR/scenes.json`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Run config with `[model]` and `[train]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Best checkpoint path; the last epoch goes to `<out>.last`, the log to `<out>.log.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from a `<out>.last` checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub no_plan: bool,
    #[arg(long)]
    pub no_velocity: bool,
    #[arg(long)]
    pub no_acceleration: bool,
    #[arg(long)]
    pub no_refinement: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Expected run config; evaluation refuses a checkpoint built differently.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    pub k: usize,
    /// `train`, `val` or `test`.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Report in feet instead of meters.
    #[arg(long)]
    pub feet: bool,
    /// JSON report path (default `<checkpoint>.<split>.report.json`).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Window id; repeat for several.
    #[arg(long = "scene-id", required = true)]
    pub scene_ids: Vec<u64>,
    #[arg(long, default_value_t = 6)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub prediction_record: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

impl EpnError {
    pub fn exit_code(&self) -> i32 {
        match self {
            EpnError::Config(_) | EpnError::Argument(_) => 2,
            EpnError::Schema { .. }
            | EpnError::Data { .. }
            | EpnError::Parse { .. }
            | EpnError::UnsupportedRate { .. }
            | EpnError::Shape(_)
            | EpnError::Consistency(_)
            | EpnError::Placement(_)
            | EpnError::Archive(_) => 3,
            EpnError::Divergence { .. } => 4,
            EpnError::Checkpoint(_) => 5,
            EpnError::Mode(_) | EpnError::Io { .. } | EpnError::Json(_) => 1,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let recorded: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli.command, recorded) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, args: Vec<String>) -> Result<()> {
    match command {
        Command::PrepareData(a) => prepare_data(a, args),
        Command::Train(a) => train(a, args),
        Command::Evaluate(a) => evaluate(a, args),
        Command::Predict(a) => predict(a, args),
        Command::Plot(a) => plot(a, args),
    }
}

/// Relative paths that do not exist as given are looked up under `$EPN_DATA_DIR`.
pub fn resolve_data_path(path: Option<&Path>) -> Result<PathBuf> {
    let root = std::env::var_os(DATA_DIR_VAR).map(PathBuf::from);
    match (path, root) {
        (Some(p), Some(root)) if p.is_relative() && !p.exists() => Ok(root.join(p)),
        (Some(p), _) => Ok(p.to_path_buf()),
        (None, Some(root)) => Ok(root.join(DEFAULT_ARCHIVE)),
        (None, None) => Err(EpnError::Argument(format!("no --data given and {DATA_DIR_VAR} is unset"))),
    }
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

fn prepare_data(a: PrepareArgs, args: Vec<String>) -> Result<()> {
    let mut manifest = RunManifest::new("prepare-data", args, a.seed);
    if a.stride == 0 {
        return Err(EpnError::Config("--stride must be positive".into()));
    }
    let (tracks, source_hz) = match (&a.synthetic_config, &a.input) {
        (Some(cfg_path), _) => {
            let text = std::fs::read_to_string(cfg_path).map_err(|e| EpnError::io(cfg_path, e))?;
            let cfg: SyntheticConfig =
                toml::from_str(&text).map_err(|e| EpnError::Config(format!("{}: {e}", cfg_path.display())))?;
            manifest.config = Some(show(cfg_path));
            (generate_synthetic(&cfg)?, cfg.hz)
        }
        (None, Some(input)) => {
            let input = resolve_data_path(Some(input))?;
            let schema: TableSchema = a.schema.parse()?;
            let hz = match (schema.native_hz(), a.source_hz) {
                (_, Some(hz)) => hz,
                (Some(hz), None) => hz,
                (None, None) => return Err(EpnError::Config("generic tables need --source-hz".into())),
            };
            manifest.inputs.push(show(&input));
            (parse_track_table(&input, schema)?, hz)
        }
        (None, None) => return Err(EpnError::Argument("need --input or --synthetic-config".into())),
    };
    let window = WindowConfig { stride: a.stride, ..Default::default() };
    let split = prepare_scenes(&tracks, source_hz, &window, a.seed)?;
    let mut header = ArchiveHeader::new(window.th, window.tf, window.hz, window.grid);
    let manifest_path = RunManifest::path_for(&a.out);
    header.manifest = Some(show(&manifest_path));
    SceneArchive { header, split: split.clone() }.save(&a.out)?;
    manifest.outputs.push(show(&a.out));
    manifest.save(&manifest_path)?;
    let (tr, va, te) = split.counts();
    println!("windows: train {tr}  val {va}  test {te}  total {}", tr + va + te);
    println!("archive: {}", a.out.display());
    Ok(())
}

fn load_archive(data: Option<&Path>) -> Result<(PathBuf, SceneArchive)> {
    let path = resolve_data_path(data)?;
    let archive = SceneArchive::load(&path)?;
    Ok((path, archive))
}

fn check_archive(model: &ModelConfig, header: &ArchiveHeader) -> Result<()> {
    if model.th != header.th || model.tf != header.tf || model.grid != header.grid {
        return Err(EpnError::Config(format!(
            "model expects th={} tf={} grid {:?}, archive has th={} tf={} grid {:?}",
            model.th, model.tf, model.grid, header.th, header.tf, header.grid
        )));
    }
    Ok(())
}

fn train(a: TrainArgs, args: Vec<String>) -> Result<()> {
    let (data_path, archive) = load_archive(a.data.as_deref())?;
    let resume = a.resume.as_ref().map(|p| Checkpoint::load(p)).transpose()?;
    let mut cfg = match (&resume, &a.config) {
        (Some(c), _) => RunConfig { model: c.model.clone(), train: c.train.clone() },
        (None, Some(p)) => RunConfig::load(p)?,
        (None, None) => RunConfig::default(),
    };
    let t = &mut cfg.train;
    if let Some(s) = a.seed {
        t.seed = s;
    }
    if let Some(e) = a.epochs {
        t.epochs = e;
    }
    if a.max_steps.is_some() {
        t.max_steps = a.max_steps;
    }
    if let Some(b) = a.batch_size {
        t.batch_size = b;
    }
    t.ablation.use_plan &= !a.no_plan;
    t.ablation.use_velocity &= !a.no_velocity;
    t.ablation.use_acceleration &= !a.no_acceleration;
    t.ablation.use_refinement &= !a.no_refinement;
    t.validate()?;
    if let Some(c) = &resume {
        c.ensure_compatible(&cfg.model, &cfg.train.ablation)?;
    }
    check_archive(&cfg.model, &archive.header)?;

    let mut manifest = RunManifest::new("train", args, cfg.train.seed);
    manifest.config = a.config.as_deref().map(show);
    manifest.inputs.push(show(&data_path));
    if let Some(r) = &a.resume {
        manifest.inputs.push(show(r));
    }
    let outputs = TrainOutputs::new(&a.out);
    if resume.is_none() {
        let _ = std::fs::remove_file(&outputs.log);
    }
    match cfg.train.precision {
        Precision::F32 => fit::<f32>(&cfg, resume.as_ref(), &archive, &outputs)?,
        Precision::F64 => fit::<f64>(&cfg, resume.as_ref(), &archive, &outputs)?,
    }
    manifest.outputs = vec![show(&outputs.best), show(&outputs.last), show(&outputs.log)];
    manifest.checkpoint_sha256 = Some(sha256_file(&outputs.best)?);
    manifest.save(&outputs.manifest)?;
    println!("checkpoint: {}", outputs.best.display());
    Ok(())
}

struct TrainOutputs {
    best: PathBuf,
    last: PathBuf,
    log: PathBuf,
    manifest: PathBuf,
}

impl TrainOutputs {
    fn new(out: &Path) -> Self {
        Self {
            best: out.to_path_buf(),
            last: suffixed(out, ".last"),
            log: suffixed(out, ".log.jsonl"),
            manifest: RunManifest::path_for(out),
        }
    }
}

fn fit<T: Real>(cfg: &RunConfig, resume: Option<&Checkpoint>, archive: &SceneArchive, out: &TrainOutputs) -> Result<()> {
    let mut trainer = match resume {
        Some(c) => {
            let mut t = Trainer::<T>::resume(c)?;
            t.config = cfg.train.clone();
            t
        }
        None => Trainer::<T>::new(cfg.model.clone(), cfg.train.clone())?,
    };
    let manifest = show(&out.manifest);
    let mut best_written = false;
    let result = {
        let mut on_epoch = |ckpt: &Checkpoint, is_best: bool| -> Result<()> {
            let mut ckpt = ckpt.clone();
            ckpt.manifest = Some(manifest.clone());
            ckpt.save(&out.last)?;
            if is_best {
                ckpt.save(&out.best)?;
                best_written = true;
            }
            if let Some(v) = &ckpt.validation {
                println!("epoch {:>3} step {:>6}  val ADE {:.4}  FDE {:.4}{}", ckpt.epoch, ckpt.step, v.ade, v.fde, if is_best { "  *" } else { "" });
            } else {
                println!("epoch {:>3} step {:>6}", ckpt.epoch, ckpt.step);
            }
            Ok(())
        };
        trainer.fit(&archive.split, |c, b| on_epoch(c, b))
    };
    // Whatever happened, keep the log of completed work.
    append_log(&out.log, &trainer.log)?;
    if let Err(e) = result {
        if let EpnError::Divergence { component, step } = &e {
            let last = trainer.curve.last();
            eprintln!("diverged at step {step} ({component}); last finite loss {last:?}; try a lower learning rate");
        }
        return Err(e);
    }
    if !best_written {
        if let Some((_, best)) = &trainer.best {
            let mut best = best.clone();
            best.manifest = Some(manifest);
            best.save(&out.best)?;
        } else {
            return Err(EpnError::Config("no training epoch ran; raise --epochs or --max-steps".into()));
        }
    }
    Ok(())
}

/// A checkpoint loaded at the precision it was trained in.
pub enum LoadedModel {
    F32(Epn<f32>),
    F64(Epn<f64>),
}

impl LoadedModel {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        Ok(match ckpt.train.precision {
            Precision::F32 => LoadedModel::F32(ckpt.model()?),
            Precision::F64 => LoadedModel::F64(ckpt.model()?),
        })
    }

    pub fn predict(&self, windows: &[&SceneWindow], k: usize, seed: u64) -> Result<Vec<PredictionSet>> {
        match self {
            LoadedModel::F32(m) => m.predict(windows, k, seed),
            LoadedModel::F64(m) => m.predict(windows, k, seed),
        }
    }
}

fn evaluate(a: EvaluateArgs, args: Vec<String>) -> Result<()> {
    let (data_path, archive) = load_archive(a.data.as_deref())?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    if let Some(p) = &a.config {
        let cfg = RunConfig::load(p)?;
        ckpt.ensure_compatible(&cfg.model, &cfg.train.ablation)?;
    }
    check_archive(&ckpt.model, &archive.header).map_err(|e| EpnError::Checkpoint(e.to_string()))?;
    let windows = match a.split.as_str() {
        "train" => &archive.split.train,
        "val" => &archive.split.val,
        "test" => &archive.split.test,
        other => return Err(EpnError::Argument(format!("unknown split `{other}`"))),
    };
    if windows.is_empty() {
        return Err(EpnError::Argument(format!("split `{}` is empty", a.split)));
    }
    let refs: Vec<&SceneWindow> = windows.iter().collect();
    let model = LoadedModel::from_checkpoint(&ckpt)?;
    let sets = model.predict(&refs, a.k, a.seed)?;
    let mut report = MetricReport::from_predictions(&sets, &refs)?;
    if a.feet {
        report = report.in_feet();
    }
    print!("{}", report.table());
    let report_path = a.report.clone().unwrap_or_else(|| suffixed(&a.checkpoint, &format!(".{}.report.json", a.split)));
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?).map_err(|e| EpnError::io(&report_path, e))?;

    let mut manifest = RunManifest::new("evaluate", args, a.seed);
    manifest.config = a.config.as_deref().map(show);
    manifest.inputs = vec![show(&data_path), show(&a.checkpoint)];
    manifest.outputs.push(show(&report_path));
    manifest.checkpoint_sha256 = Some(sha256_file(&a.checkpoint)?);
    manifest.save(&RunManifest::path_for(&report_path))?;
    Ok(())
}

fn predict(a: PredictArgs, args: Vec<String>) -> Result<()> {
    let (data_path, archive) = load_archive(a.data.as_deref())?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    check_archive(&ckpt.model, &archive.header).map_err(|e| EpnError::Checkpoint(e.to_string()))?;
    let windows = a
        .scene_ids
        .iter()
        .map(|&id| archive.split.find(id).ok_or_else(|| EpnError::Argument(format!("no window with id {id}"))))
        .collect::<Result<Vec<_>>>()?;
    let model = LoadedModel::from_checkpoint(&ckpt)?;
    let sets = model.predict(&windows, a.k, a.seed)?;
    let entries = sets.into_iter().zip(&windows).map(|(s, w)| PredictionEntry::new(s, w)).collect();
    let mut record = PredictionRecord::new(a.k, a.seed, entries);
    let manifest_path = RunManifest::path_for(&a.out);
    record.checkpoint = Some(show(&a.checkpoint));
    record.manifest = Some(show(&manifest_path));
    record.save(&a.out)?;

    let mut manifest = RunManifest::new("predict", args, a.seed);
    manifest.inputs = vec![show(&data_path), show(&a.checkpoint)];
    manifest.outputs.push(show(&a.out));
    manifest.checkpoint_sha256 = Some(sha256_file(&a.checkpoint)?);
    manifest.save(&manifest_path)?;
    println!("record: {} ({} windows, k={})", a.out.display(), windows.len(), a.k);
    Ok(())
}

fn plot(a: PlotArgs, args: Vec<String>) -> Result<()> {
    let record = PredictionRecord::load(&a.prediction_record)?;
    let svg = render_svg(&record);
    std::fs::write(&a.out, svg).map_err(|e| EpnError::io(&a.out, e))?;
    let mut manifest = RunManifest::new("plot", args, a.seed);
    manifest.inputs.push(show(&a.prediction_record));
    manifest.outputs.push(show(&a.out));
    manifest.save(&RunManifest::path_for(&a.out))?;
    println!("figure: {}", a.out.display());
    Ok(())
}
