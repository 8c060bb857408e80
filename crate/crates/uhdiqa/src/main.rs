use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use uhdiqa::checkpoint;
use uhdiqa::config::CliConfig;
use uhdiqa::dataset::{read_labels, write_labels, DiskSource, LabelOptions};
use uhdiqa::decode::{load_image, save_png};
use uhdiqa::synth::write_dataset;
use uhdiqa::trace::write_trace;
use uhdiqa::IoError;
use uhdiqa_core::complexity::{macs_vs_resolution, model_macs, ResolutionRow};
use uhdiqa_core::data::{split, DistortionKind, LabeledSample, SynthSpec};
use uhdiqa_core::metrics::MetricsReport;
use uhdiqa_core::preprocess::preprocess_triplet;
use uhdiqa_core::train::{evaluate, train, EpochRecord};
use uhdiqa_core::{Error, QualityModel, SampleMode};

#[derive(Parser)]
#[command(name = "uhdiqa", version, about = "Quality assessment for ultra-high-definition images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score images with a trained checkpoint.
    Score {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Train on a labelled dataset; writes checkpoint, trace and splits.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a label file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[command(flatten)]
        label_opts: LabelArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Write the three branch views of an image as PNG files.
    PreprocessDump {
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed for the random crops; ignored with --eval.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use centered evaluation crops.
        #[arg(long)]
        eval: bool,
    },
    /// Print multiply-accumulate counts.
    Macs {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Source sizes as HxW, comma separated; prints the per-resolution table.
        #[arg(long, value_delimiter = ',')]
        resolutions: Vec<String>,
    },
    /// Generate a synthetic dataset with known quality ordering.
    Synth {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Side of the square images.
        #[arg(long, default_value_t = 1024)]
        size: usize,
        /// Distortion kinds, cycled over the images.
        #[arg(long, value_delimiter = ',', default_value = "blur,noise")]
        kinds: Vec<String>,
    },
}

#[derive(clap::Args)]
struct LabelArgs {
    /// Directory that relative image paths in the label file refer to
    /// (default: the label file's directory).
    #[arg(long)]
    root: Option<PathBuf>,
    /// Accept MOS values outside [0, 1].
    #[arg(long)]
    allow_any_range: bool,
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[command(flatten)]
    label_opts: LabelArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Enabled branches, e.g. `aes` or `aes,dis,sal`.
    #[arg(long)]
    branches: Option<String>,
    /// Decay the learning rate once instead of every `decay_every` epochs.
    #[arg(long)]
    decay_once: bool,
    /// Print the effective configuration and exit.
    #[arg(long)]
    dump_config: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

/// Error with its process exit code.
enum Failure {
    Data(String),
    Usage(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Data(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Data(m) | Failure::Usage(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) => Failure::Usage(e.to_string()),
            Error::NonFiniteLoss { .. } => Failure::Numeric(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Config(_) => Failure::Usage(e.to_string()),
            IoError::Core(inner) => inner.into(),
            other => Failure::Data(other.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Score { checkpoint, images } => cmd_score(&checkpoint, &images),
        Command::Train(args) => cmd_train(args),
        Command::Eval { checkpoint, labels, label_opts, format } => cmd_eval(&checkpoint, &labels, &label_opts, format),
        Command::PreprocessDump { image, out, config, seed, eval } => {
            cmd_preprocess_dump(&image, &out, config.as_deref(), seed, eval)
        }
        Command::Macs { config, resolutions } => cmd_macs(config.as_deref(), &resolutions),
        Command::Synth { count, out, seed, size, kinds } => cmd_synth(count, &out, seed, size, &kinds),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<CliConfig, Failure> {
    match path {
        Some(p) => CliConfig::load(p).map_err(|e| match e {
            IoError::Io { .. } => usage(e),
            other => other.into(),
        }),
        None => Ok(CliConfig::default()),
    }
}

fn load_checkpoint(path: &Path) -> Result<QualityModel<f32>, Failure> {
    let saved = checkpoint::load(path).map_err(usage)?;
    Ok(saved.checkpoint.model)
}

fn cmd_score(ckpt: &Path, images: &[PathBuf]) -> Outcome {
    let model = load_checkpoint(ckpt)?;
    let pre = model.spec().preprocess;
    let mut out = std::io::stdout().lock();
    writeln!(out, "image,score").ok();
    let mut failed = 0usize;
    for path in images {
        let scored = load_image(path)
            .map_err(Failure::from)
            .and_then(|img| Ok(preprocess_triplet(&img, &pre, SampleMode::Eval)?))
            .and_then(|x| Ok(model.predict(&x)?));
        match scored {
            Ok(q) => {
                writeln!(out, "{},{q}", path.display()).ok();
            }
            Err(f) => {
                eprintln!("{}: {}", path.display(), f.message());
                failed += 1;
            }
        }
    }
    if failed > 0 {
        return Err(Failure::Data(format!("{failed} of {} images failed", images.len())));
    }
    Ok(())
}

fn absolute(samples: &[LabeledSample]) -> Result<Vec<LabeledSample>, Failure> {
    samples
        .iter()
        .map(|s| {
            let p = std::path::absolute(&s.image_path).map_err(|e| Failure::Data(format!("{}: {e}", s.image_path)))?;
            Ok(LabeledSample { image_path: p.to_string_lossy().into_owned(), mos: s.mos })
        })
        .collect()
}

fn cmd_train(args: TrainArgs) -> Outcome {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(v) = args.labels {
        cfg.labels = Some(v);
    }
    if let Some(v) = args.label_opts.root {
        cfg.root = Some(v);
    }
    if args.label_opts.allow_any_range {
        cfg.allow_any_range = true;
    }
    if let Some(v) = args.out {
        cfg.out_dir = Some(v);
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.branches {
        cfg.branches = v;
    }
    if args.decay_once {
        cfg.decay_once = true;
    }
    cfg.validate()?;
    if args.dump_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let labels = cfg.labels.clone().ok_or_else(|| usage("no label file given (`labels` key or --labels)"))?;
    let out_dir = cfg.out_dir.clone().ok_or_else(|| usage("no output directory given (`out_dir` key or --out)"))?;

    let samples = absolute(&read_labels(&labels, &cfg.label_options())?)?;
    if samples.is_empty() {
        eprintln!("warning: {} has no rows", labels.display());
    }
    if samples.len() < 2 {
        return Err(Failure::Data(format!("{}: need at least two labelled images", labels.display())));
    }
    let (train_rows, val_rows) = split(&samples, &cfg.split_spec())?;
    std::fs::create_dir_all(&out_dir).map_err(|e| Failure::Data(format!("{}: {e}", out_dir.display())))?;
    write_labels(&out_dir.join("train.csv"), &train_rows)?;
    write_labels(&out_dir.join("val.csv"), &val_rows)?;
    std::fs::write(out_dir.join("config.toml"), cfg.to_toml()).map_err(|e| Failure::Data(format!("{}: {e}", out_dir.display())))?;

    let spec = cfg.model_spec()?;
    let tcfg = cfg.train_config();
    let mut model = QualityModel::<f32>::new(spec, cfg.seed)?;
    eprintln!("{}", model.describe());
    let trace_path = out_dir.join("trace.csv");
    let mut rows: Vec<EpochRecord> = Vec::new();
    let mut trace_err = None;
    let outcome = train(
        &mut model,
        &DiskSource::new(train_rows),
        &DiskSource::new(val_rows),
        &tcfg,
        &mut |r| {
            eprintln!("epoch {} lr {:e} loss {:.6} val srcc {:.4} rmse {:.4}", r.epoch, r.lr, r.train_loss, r.val.srcc, r.val.rmse);
            rows.push(*r);
            if let Err(e) = write_trace(&trace_path, &rows) {
                trace_err.get_or_insert(e);
            }
        },
    )?;
    if let Some(e) = trace_err {
        return Err(e.into());
    }
    checkpoint::save(&out_dir.join("checkpoint.uiqa"), &outcome.checkpoint, &tcfg)?;
    let best = &outcome.trace[outcome.checkpoint.epoch];
    println!("{}\n{}", EpochRecord::CSV_HEADER, best.csv_row());
    Ok(())
}

fn cmd_eval(ckpt: &Path, labels: &Path, opts: &LabelArgs, format: Format) -> Outcome {
    let model = load_checkpoint(ckpt)?;
    let opts = LabelOptions { root: opts.root.clone(), allow_any_range: opts.allow_any_range };
    let samples = read_labels(labels, &opts).map_err(usage)?;
    if samples.is_empty() {
        eprintln!("warning: {} has no rows", labels.display());
        return Err(usage(format!("{}: label file has no rows", labels.display())));
    }
    let ev = evaluate(&model, &DiskSource::new(samples))?;
    match format {
        Format::Csv => println!("{}\n{}", MetricsReport::CSV_HEADER, ev.report.csv_row()),
        Format::Text => print!("{}", ev.report.to_kv()),
    }
    match ev.undefined {
        Some(e) => Err(Failure::Data(e.to_string())),
        None => Ok(()),
    }
}

fn cmd_preprocess_dump(image: &Path, out: &Path, config: Option<&Path>, seed: u64, eval: bool) -> Outcome {
    let cfg = load_config(config)?;
    cfg.validate()?;
    let img = load_image(image)?;
    let mode = if eval { SampleMode::Eval } else { SampleMode::Train { seed } };
    let views = preprocess_triplet(&img, &cfg.preprocess(), mode).map_err(|e| Failure::Data(e.to_string()))?;
    std::fs::create_dir_all(out).map_err(|e| Failure::Data(format!("{}: {e}", out.display())))?;
    let stem = image.file_stem().map_or("image".into(), |s| s.to_string_lossy().into_owned());
    let parts = [("aesthetic", &views.aesthetic), ("fragment", &views.fragment), ("salient", &views.salient)];
    // write under temporary names first so a failure leaves no partial set
    let mut staged = Vec::new();
    for (name, view) in parts {
        let tmp = out.join(format!(".{stem}.{name}.png.tmp"));
        if let Err(e) = save_png(&tmp, view) {
            staged.iter().chain([&tmp]).for_each(|p: &PathBuf| {
                let _ = std::fs::remove_file(p);
            });
            return Err(e.into());
        }
        staged.push(tmp);
    }
    for (tmp, (name, _)) in staged.iter().zip(parts) {
        let dst = out.join(format!("{stem}.{name}.png"));
        std::fs::rename(tmp, &dst).map_err(|e| Failure::Data(format!("{}: {e}", dst.display())))?;
    }
    Ok(())
}

fn parse_resolution(s: &str) -> Result<(usize, usize), Failure> {
    let (h, w) = s.trim().split_once(['x', 'X']).ok_or_else(|| usage(format!("resolution `{s}` is not HxW")))?;
    let num = |v: &str| v.parse::<usize>().map_err(|_| usage(format!("resolution `{s}` is not HxW")));
    Ok((num(h)?, num(w)?))
}

fn cmd_macs(config: Option<&Path>, resolutions: &[String]) -> Outcome {
    let cfg = load_config(config)?;
    cfg.validate()?;
    let spec = cfg.model_spec()?;
    if resolutions.is_empty() {
        print!("{}", model_macs(&spec).csv());
        return Ok(());
    }
    let sizes = resolutions.iter().map(|s| parse_resolution(s)).collect::<Result<Vec<_>, _>>()?;
    let rows = macs_vs_resolution(&spec, &sizes)?;
    println!("{}", ResolutionRow::CSV_HEADER);
    for r in rows {
        println!("{}", r.csv_row());
    }
    Ok(())
}

fn cmd_synth(count: usize, out: &Path, seed: u64, size: usize, kinds: &[String]) -> Outcome {
    let kinds = kinds
        .iter()
        .map(|k| DistortionKind::parse(k).ok_or_else(|| usage(format!("unknown distortion `{k}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    if kinds.is_empty() || size == 0 {
        return Err(usage("need at least one distortion kind and a positive size"));
    }
    let spec = SynthSpec { seed, size, kinds };
    write_dataset(out, count, &spec)?;
    eprintln!("wrote {count} images to {}", out.display());
    Ok(())
}

