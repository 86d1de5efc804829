//! `salypath` command-line tool.

mod eval;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use salypath::data::{self, Dataset, SynthConfig};
use salypath::model::ModelConfig;
use salypath::train::{train, TrainConfig};
use salypath::{SalyPath, Scanpath};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "salypath", version, about = "Joint saliency-map and scanpath prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train both branches and write a checkpoint.
    Train(TrainArgs),
    /// Predict a saliency map and scanpath for one image or a whole manifest.
    Predict(PredictArgs),
    /// Score predicted maps against a manifest (CSV report).
    EvalSaliency(eval::SaliencyArgs),
    /// Score predicted scanpaths against a manifest (CSV report).
    EvalScanpath(eval::ScanpathArgs),
    /// Scanpath length statistics of a manifest, as JSON.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Write a seeded synthetic blob dataset.
    GenSynth(GenSynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Paper,
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// JSON file overriding training settings; a nested `model` object
    /// overrides the model configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
    #[arg(long, conflicts_with = "synthetic")]
    manifest: Option<PathBuf>,
    /// Train on this many generated images instead of a manifest.
    #[arg(long)]
    synthetic: Option<usize>,
    /// Seed of the generated dataset.
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    /// Training seed (initialisation and shuffling); overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the training report JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Check the checkpoint against this preset's model configuration.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, requires_all = ["out_map", "out_scanpath"], conflicts_with = "manifest")]
    image: Option<PathBuf>,
    #[arg(long)]
    out_map: Option<PathBuf>,
    #[arg(long)]
    out_scanpath: Option<PathBuf>,
    #[arg(long, requires = "out_dir")]
    manifest: Option<PathBuf>,
    /// Receives `<id>.pgm` and `<id>.csv` per manifest record.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct GenSynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 3)]
    observers: usize,
    /// Draw scanpath lengths between 6 and 10 (mode 8) instead of fixed 8.
    #[arg(long)]
    varied_lengths: bool,
}

/// Failure classes mapped to exit codes.
pub enum Failure {
    Incomplete(String),
    Error(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Error(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("SALYPATH_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // Ignoring the error keeps an already-initialised pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let outcome = match cli.command {
        Command::Train(args) => run_train(args).map_err(Failure::from),
        Command::Predict(args) => run_predict(args).map_err(Failure::from),
        Command::EvalSaliency(args) => eval::run_saliency(args),
        Command::EvalScanpath(args) => eval::run_scanpath(args),
        Command::Stats { manifest } => run_stats(&manifest).map_err(Failure::from),
        Command::GenSynth(args) => run_gen_synth(args).map_err(Failure::from),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Incomplete(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::from(2)
        }
    }
}

/// Shallow-merges the keys of `overrides` into `base`.
fn merge(base: &mut Value, overrides: Value) -> Result<()> {
    let (Value::Object(base), Value::Object(over)) = (base, overrides) else {
        bail!("configuration must be a JSON object");
    };
    base.extend(over);
    Ok(())
}

fn load_configs(args: &TrainArgs) -> Result<(ModelConfig, TrainConfig)> {
    let mut model = serde_json::to_value(ModelConfig::preset(args.preset.name())?)?;
    let mut train = serde_json::to_value(TrainConfig::preset(args.preset.name())?)?;
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut over: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(m) = over.as_object_mut().and_then(|o| o.remove("model")) {
            merge(&mut model, m)?;
        }
        merge(&mut train, over)?;
    }
    let model: ModelConfig = serde_json::from_value(model).context("model configuration")?;
    let mut train: TrainConfig = serde_json::from_value(train).context("training configuration")?;
    if let Some(seed) = args.seed {
        train.seed = seed;
    }
    Ok((model, train))
}

fn run_train(args: TrainArgs) -> Result<()> {
    let (model_cfg, train_cfg) = load_configs(&args)?;
    let (h, w) = model_cfg.input_size;
    let dataset = match (&args.manifest, args.synthetic) {
        (Some(path), _) => Dataset::load(path)?,
        (None, Some(n)) => data::generate_synthetic(n, args.data_seed, (w, h))?,
        (None, None) => bail!("give either --manifest or --synthetic <N>"),
    };
    let mut model = SalyPath::new(model_cfg, train_cfg.seed)?;
    let run = match train(&mut model, &dataset, &train_cfg) {
        Ok(run) => run,
        Err(e) => {
            model.save(&args.out)?;
            return Err(anyhow::Error::new(e).context(format!("last good parameters kept in {}", args.out.display())));
        }
    };
    model.save(&args.out)?;
    for report in [&run.phase1, &run.phase2] {
        for (epoch, (loss, lr)) in report.losses.iter().zip(&report.lrs).enumerate() {
            eprintln!("{} epoch {epoch:>3}  loss {loss:.6}  lr {lr:.3e}", report.phase);
        }
    }
    eprintln!("trained in {:.1}s, checkpoint {}", run.wall_time_secs, args.out.display());
    if let Some(path) = &args.report {
        data::write_text(path, &(serde_json::to_string_pretty(&run)? + "\n"))?;
    }
    Ok(())
}

fn load_model(args: &PredictArgs) -> Result<SalyPath> {
    let ckpt = salypath::tensor::checkpoint::Checkpoint::load(&args.checkpoint)?;
    Ok(match args.preset {
        Some(p) => SalyPath::from_checkpoint_with_config(&ckpt, ModelConfig::preset(p.name())?)?,
        None => SalyPath::from_checkpoint(&ckpt)?,
    })
}

/// Predicts at model resolution and maps the results back to the stimulus.
fn predict_one(model: &SalyPath, image: &data::Image, origin: &Path) -> Result<(salypath::SaliencyMap, Scanpath)> {
    let (h, w) = model.config().input_size;
    let (iw, ih) = (image.width(), image.height());
    let input = if (iw, ih) != (w, h) {
        eprintln!("warning: {} is {iw}×{ih}, resampling to the model's {w}×{h}", origin.display());
        image.resample(w, h)?
    } else {
        image.clone()
    };
    let (map, path) = model.forward(&input.to_tensor())?;
    Ok((data::resample_map(&map, iw, ih)?, path))
}

fn write_prediction(map: &salypath::SaliencyMap, path: &Scanpath, map_out: &Path, csv_out: &Path) -> Result<()> {
    data::write_pgm(map_out, map)?;
    let pixels = path.to_pixels(map.width(), map.height());
    data::write_text(csv_out, &data::encode_scanpath_csv_with_norm(&pixels, path.points()))?;
    Ok(())
}

fn run_predict(args: PredictArgs) -> Result<()> {
    let model = load_model(&args)?;
    if let Some(image_path) = &args.image {
        let image = data::read_ppm(image_path)?;
        let (map, path) = predict_one(&model, &image, image_path)?;
        let (Some(m), Some(s)) = (&args.out_map, &args.out_scanpath) else {
            bail!("--image needs --out-map and --out-scanpath");
        };
        return write_prediction(&map, &path, m, s);
    }
    let (Some(manifest_path), Some(out_dir)) = (&args.manifest, &args.out_dir) else {
        bail!("give either --image with --out-map/--out-scanpath, or --manifest with --out-dir");
    };
    let manifest = data::load_manifest(manifest_path)?;
    (0..manifest.records.len()).into_par_iter().try_for_each(|i| -> Result<()> {
        let id = manifest.record_id(i);
        let stimulus = manifest.resolve(&manifest.records[i].stimulus);
        let image = data::read_ppm(&stimulus)?;
        let (map, path) = predict_one(&model, &image, &stimulus)?;
        write_prediction(&map, &path, &out_dir.join(format!("{id}.pgm")), &out_dir.join(format!("{id}.csv")))
    })
}

fn run_stats(manifest: &Path) -> Result<()> {
    let manifest = data::load_manifest(manifest)?;
    println!("{}", serde_json::to_string_pretty(&data::length_stats(&manifest)?)?);
    Ok(())
}

fn run_gen_synth(args: GenSynthArgs) -> Result<()> {
    let mut cfg = SynthConfig::new(args.n, args.seed, (args.width, args.height));
    cfg.observers = args.observers;
    if args.varied_lengths {
        cfg = cfg.with_varied_lengths();
    }
    data::generate(&cfg)?.write(&args.out_dir)?;
    println!("{}", args.out_dir.join("manifest.json").display());
    Ok(())
}
