use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use fbwc::data::{
    load_image, load_manifest, save_mask, synthetic_set, write_dataset, SamplePair, SceneConfig,
    Split,
};
use fbwc::gradcheck::{gradcheck_suite, SuiteConfig, SuiteEntry};
use fbwc::training::{
    ablate, evaluate, predict, prop1_probe, train, AblationAxis, Checkpoint, EvalConfig,
    ProbeConfig, TrainConfig, TrainOutputs,
};

#[derive(Parser, Debug)]
#[command(name = "fbwc", version, about = "Glass segmentation: data, training, evaluation and analysis")]
struct Cli {
    /// `key = value` file layered over the built-in training defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for initialisation, data order, augmentation and synthetic data.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic glass-scene dataset with a manifest.
    GenData(GenDataArgs),
    /// Train a network and write its log and checkpoints.
    Train {
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Score a checkpoint on a dataset.
    Eval {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Inference size as HxW; images are resized back for scoring.
        #[arg(long, value_parser = parse_size)]
        size: Option<(usize, usize)>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f32,
        /// Also write every probability map as a PNG.
        #[arg(long)]
        save_preds: bool,
    },
    /// Write glass-probability masks for images.
    Predict {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// An image, a directory of images, or a dataset manifest.
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// Inference size as HxW; defaults to the training size.
        #[arg(long, value_parser = parse_size)]
        size: Option<(usize, usize)>,
    },
    /// Compare tape gradients with central differences.
    Gradcheck {
        /// Run both precisions.
        #[arg(long)]
        all: bool,
        #[arg(long, value_enum, default_value_t = Precision::F32)]
        precision: Precision,
        /// Replace the per-precision pass threshold.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Sweep one factor and tabulate IoU, MAE and BER.
    Ablate {
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(long)]
        min: Option<usize>,
        #[arg(long)]
        max: Option<usize>,
        /// Training runs per variant, with consecutive seeds.
        #[arg(long, default_value_t = 3)]
        runs: usize,
        /// Scoring set; defaults to the training set.
        #[arg(long, value_name = "PATH")]
        eval_data: Option<PathBuf>,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Plain versus spectrum-augmented input on a boundary task.
    Prop1 {
        /// Number of consecutive seeds.
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Axis {
    Cus,
    Trough,
    Loss,
    Module,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long, default_value_t = 64)]
    count: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    /// Transmission range as LO,HI.
    #[arg(long, value_parser = parse_range)]
    alpha: Option<(f64, f64)>,
    #[arg(long)]
    min_regions: Option<usize>,
    #[arg(long)]
    max_regions: Option<usize>,
    /// Fill glass with its tint only (control scenes).
    #[arg(long)]
    opaque: bool,
    #[arg(long, value_enum, default_value_t = SplitArg::Train)]
    split: SplitArg,
}

/// Overrides for [`TrainConfig`]; unset flags keep the file or default value.
#[derive(Args, Debug, Default)]
struct TrainArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    lambda: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    cus: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    /// cta, ca or off.
    #[arg(long)]
    cta_mode: Option<String>,
    /// fft or scc.
    #[arg(long)]
    variable: Option<String>,
    #[arg(long)]
    bc_off: bool,
    #[arg(long)]
    am_off: bool,
    #[arg(long)]
    no_augment: bool,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Any config key, as KEY=VALUE; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Dataset manifest, or a directory holding `manifest.txt`. Without it a
    /// synthetic set is generated from the seed.
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
    /// Size of the generated set when `--data` is absent.
    #[arg(long, default_value_t = 64)]
    count: usize,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got `{s}`"))?;
    let h = h.trim().parse().map_err(|_| format!("bad height in `{s}`"))?;
    let w = w.trim().parse().map_err(|_| format!("bad width in `{s}`"))?;
    Ok((h, w))
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| format!("expected LO,HI, got `{s}`"))?;
    let lo = lo.trim().parse().map_err(|_| format!("bad bound in `{s}`"))?;
    let hi = hi.trim().parse().map_err(|_| format!("bad bound in `{s}`"))?;
    Ok((lo, hi))
}

#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<fbwc::Error> for Failure {
    fn from(e: fbwc::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

/// Defaults, then `--config`, then flags.
fn resolve_config(cli: &Cli, args: &TrainArgs) -> Result<TrainConfig, Failure> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(usage)?;
        cfg.apply_text(&text).map_err(usage)?;
    }
    let mut pairs: Vec<(&str, String)> = Vec::new();
    let mut opt = |key: &'static str, v: Option<String>| {
        if let Some(v) = v {
            pairs.push((key, v));
        }
    };
    opt("epochs", args.epochs.map(|v| v.to_string()));
    opt("batch_size", args.batch_size.map(|v| v.to_string()));
    opt("base_lr", args.lr.map(|v| v.to_string()));
    opt("max_steps", args.max_steps.map(|v| v.to_string()));
    opt("channels", args.channels.map(|v| v.to_string()));
    opt("lambda", args.lambda.map(|v| v.to_string()));
    opt("depth", args.depth.map(|v| v.to_string()));
    opt("n_cus", args.cus.map(|v| v.to_string()));
    opt("height", args.height.map(|v| v.to_string()));
    opt("width", args.width.map(|v| v.to_string()));
    opt("cta_mode", args.cta_mode.clone());
    opt("variable", args.variable.clone());
    opt("checkpoint_every", args.checkpoint_every.map(|v| v.to_string()));
    opt("bc_off", args.bc_off.then(|| "true".to_string()));
    opt("am_off", args.am_off.then(|| "true".to_string()));
    opt("augment", args.no_augment.then(|| "false".to_string()));
    opt("seed", cli.seed.map(|v| v.to_string()));
    for (k, v) in pairs {
        cfg.set(k, &v).map_err(usage)?;
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(anyhow!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v).map_err(usage)?;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("manifest.txt")
    } else {
        path.to_path_buf()
    }
}

fn load_dataset(path: &Path) -> Result<Vec<SamplePair>, Failure> {
    Ok(load_manifest(&manifest_path(path))?.load_all()?)
}

fn dataset(data: &DataArgs, height: usize, width: usize, seed: u64) -> Result<Vec<SamplePair>, Failure> {
    match &data.data {
        Some(path) => load_dataset(path),
        None => {
            if data.count == 0 {
                return Err(usage(anyhow!("--count must be positive")));
            }
            let scene = SceneConfig {
                height,
                width,
                ..SceneConfig::default()
            };
            Ok(synthetic_set(&scene, data.count, seed)?)
        }
    }
}

fn out_dir(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn gen_data(cli: &Cli, a: &GenDataArgs) -> Result<(), Failure> {
    let mut scene = SceneConfig {
        height: a.height,
        width: a.width,
        opaque: a.opaque,
        ..SceneConfig::default()
    };
    if let Some((lo, hi)) = a.alpha {
        scene.alpha = (lo as f32, hi as f32);
    }
    scene.regions = (
        a.min_regions.unwrap_or(scene.regions.0),
        a.max_regions.unwrap_or(scene.regions.1),
    );
    if a.count == 0 {
        return Err(usage(anyhow!("--count must be positive")));
    }
    scene.validate(1).map_err(usage)?;
    let samples = synthetic_set(&scene, a.count, cli.seed.unwrap_or(0))?;
    let split = match a.split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    let dir = out_dir(cli, "data");
    let manifest = write_dataset(&dir, &samples, split)?;
    println!("wrote {} samples, manifest {}", samples.len(), manifest.display());
    Ok(())
}

fn run_train(cli: &Cli, args: &TrainArgs, data: &DataArgs) -> Result<(), Failure> {
    let cfg = resolve_config(cli, args)?;
    let set = dataset(data, cfg.height, cfg.width, cfg.seed)?;
    let dir = out_dir(cli, "runs/train");
    write_file(&dir.join("config.txt"), &cfg.to_text())?;
    let outputs = TrainOutputs {
        log: Some(dir.join("train_log.csv")),
        checkpoints: Some(dir.join("checkpoints")),
    };
    let run = train(&cfg, &set, &outputs)?;
    if let (Some(first), Some(last)) = (run.epochs.first(), run.epochs.last()) {
        println!(
            "{} steps over {} epochs; mean loss {:.4} (first epoch) -> {:.4} (last epoch)",
            run.steps.len(),
            run.epochs.len(),
            first.total,
            last.total
        );
    }
    println!("checkpoint {}", dir.join("checkpoints/final.fbwc").display());
    Ok(())
}

fn run_eval(
    cli: &Cli,
    checkpoint: &Path,
    data: &DataArgs,
    size: Option<(usize, usize)>,
    threshold: f32,
    save_preds: bool,
) -> Result<(), Failure> {
    let chk = Checkpoint::load(checkpoint)?;
    let expected = match &cli.config {
        Some(_) => Some(resolve_config(cli, &TrainArgs::default())?.model),
        None => None,
    };
    let seed = cli.seed.unwrap_or(chk.config.seed);
    let set = dataset(data, chk.config.height, chk.config.width, seed)?;
    let dir = out_dir(cli, "runs/eval");
    let cfg = EvalConfig {
        size,
        threshold,
        ..EvalConfig::default()
    };
    let preds = dir.join("preds");
    let report = evaluate(&chk, expected.as_ref(), &set, &cfg, save_preds.then_some(preds.as_path()))?;
    let r = report.record;
    write_file(
        &dir.join("metrics.csv"),
        &format!("iou,mae,ber\n{},{},{}\n", r.iou, r.mae, r.ber),
    )?;
    write_file(&dir.join("per_sample.csv"), &report.per_sample_csv())?;
    println!("IoU {:.4}  MAE {:.4}  BER {:.2}  ({} images)", r.iou, r.mae, r.ber, set.len());
    Ok(())
}

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "pgm", "ppm", "jpg", "jpeg"];

fn prediction_inputs(input: &Path) -> Result<Vec<(String, PathBuf)>, Failure> {
    let stem = |p: &Path| {
        p.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "image".into())
    };
    if input.is_dir() {
        let manifest = input.join("manifest.txt");
        if manifest.is_file() {
            return prediction_inputs(&manifest);
        }
        let mut files: Vec<PathBuf> = std::fs::read_dir(input)
            .with_context(|| format!("listing {}", input.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            })
            .collect();
        files.sort();
        return Ok(files.into_iter().map(|p| (stem(&p), p)).collect());
    }
    if input.extension().and_then(|e| e.to_str()) == Some("txt") {
        let m = load_manifest(input)?;
        return Ok(m
            .pairs
            .iter()
            .map(|(img, _)| (stem(img), m.root.join(img)))
            .collect());
    }
    Ok(vec![(stem(input), input.to_path_buf())])
}

fn run_predict(cli: &Cli, checkpoint: &Path, input: &Path, size: Option<(usize, usize)>) -> Result<(), Failure> {
    let chk = Checkpoint::load(checkpoint)?;
    let net = chk.model()?;
    let size = size.unwrap_or((chk.config.height, chk.config.width));
    let inputs = prediction_inputs(input)?;
    if inputs.is_empty() {
        return Err(Failure::Runtime(anyhow!("no images found at {}", input.display())));
    }
    let dir = out_dir(cli, "runs/predict");
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, path) in &inputs {
        let image = load_image(path)?;
        let probs = predict(&net, &chk.store, &image, Some(size))?;
        save_mask(&dir.join(format!("{name}.png")), &probs)?;
    }
    println!("wrote {} masks to {}", inputs.len(), dir.display());
    Ok(())
}

fn run_gradcheck(cli: &Cli, all: bool, precision: Precision, threshold: Option<f64>) -> Result<(), Failure> {
    let seed = cli.seed.unwrap_or(0);
    let tune = |base: SuiteConfig| SuiteConfig {
        seed,
        threshold: threshold.unwrap_or(base.threshold),
        ..base
    };
    let mut runs: Vec<(&str, Vec<SuiteEntry>)> = Vec::new();
    if all || precision == Precision::F32 {
        runs.push(("f32", gradcheck_suite::<f32>(tune(SuiteConfig::F32))?));
    }
    if all || precision == Precision::F64 {
        runs.push(("f64", gradcheck_suite::<f64>(tune(SuiteConfig::F64))?));
    }
    let mut csv = String::from("precision,check,max_rel_err,threshold,pass\n");
    let mut failed = 0;
    for (p, entries) in &runs {
        for e in entries {
            let r = &e.report;
            println!(
                "{p} {:<16} max rel err {:.3e} (threshold {:.0e}) {}",
                e.name,
                r.max_rel_err,
                r.threshold,
                if r.pass { "ok" } else { "FAIL" }
            );
            let _ = writeln!(csv, "{p},{},{},{},{}", e.name, r.max_rel_err, r.threshold, r.pass);
            failed += usize::from(!r.pass);
        }
    }
    if let Some(dir) = &cli.out {
        write_file(&dir.join("gradcheck.csv"), &csv)?;
    }
    if failed > 0 {
        return Err(Failure::Runtime(anyhow!("{failed} gradient checks exceeded the threshold")));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_ablate(
    cli: &Cli,
    axis: Axis,
    min: Option<usize>,
    max: Option<usize>,
    runs: usize,
    eval_data: Option<&Path>,
    args: &TrainArgs,
    data: &DataArgs,
) -> Result<(), Failure> {
    let cfg = resolve_config(cli, args)?;
    let name = match axis {
        Axis::Cus => "cus",
        Axis::Trough => "trough",
        Axis::Loss => "loss",
        Axis::Module => "module",
    };
    let axis = AblationAxis::parse(name, min, max).map_err(usage)?;
    if runs == 0 {
        return Err(usage(anyhow!("--runs must be positive")));
    }
    let seeds: Vec<u64> = (0..runs as u64).map(|i| cfg.seed + i).collect();
    let train_set = dataset(data, cfg.height, cfg.width, cfg.seed)?;
    let eval_set = match eval_data {
        Some(p) => load_dataset(p)?,
        None => train_set.clone(),
    };
    let table = ablate(&cfg, axis, &seeds, &train_set, &eval_set)?;
    let dir = out_dir(cli, "runs/ablate");
    write_file(&dir.join(format!("ablation_{name}.md")), &table.to_markdown())?;
    write_file(&dir.join(format!("ablation_{name}.csv")), &table.to_csv())?;
    write_file(&dir.join(format!("ablation_{name}_runs.csv")), &table.runs_csv())?;
    print!("{}", table.to_markdown());
    Ok(())
}

fn run_prop1(cli: &Cli, runs: usize, over: [Option<usize>; 4], lr: Option<f64>) -> Result<(), Failure> {
    if runs < 3 {
        return Err(usage(anyhow!("--runs must be at least 3")));
    }
    let d = ProbeConfig::default();
    let [size, samples, steps, hidden] = over;
    let cfg = ProbeConfig {
        size: size.unwrap_or(d.size),
        samples: samples.unwrap_or(d.samples),
        steps: steps.unwrap_or(d.steps),
        hidden: hidden.unwrap_or(d.hidden),
        lr: lr.unwrap_or(d.lr),
        momentum: d.momentum,
    };
    let base = cli.seed.unwrap_or(0);
    let seeds: Vec<u64> = (0..runs as u64).map(|i| base + i).collect();
    let report = prop1_probe(&cfg, &seeds).map_err(usage)?;
    let dir = out_dir(cli, "runs/prop1");
    write_file(&dir.join("prop1.csv"), &report.to_csv())?;
    print!("{}", report.to_csv());
    println!("{}", report.summary());
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::GenData(a) => gen_data(cli, a),
        Command::Train { train, data } => run_train(cli, train, data),
        Command::Eval {
            checkpoint,
            data,
            size,
            threshold,
            save_preds,
        } => run_eval(cli, checkpoint, data, *size, *threshold, *save_preds),
        Command::Predict {
            checkpoint,
            input,
            size,
        } => run_predict(cli, checkpoint, input, *size),
        Command::Gradcheck {
            all,
            precision,
            threshold,
        } => run_gradcheck(cli, *all, *precision, *threshold),
        Command::Ablate {
            axis,
            min,
            max,
            runs,
            eval_data,
            train,
            data,
        } => run_ablate(cli, *axis, *min, *max, *runs, eval_data.as_deref(), train, data),
        Command::Prop1 {
            runs,
            size,
            samples,
            steps,
            hidden,
            lr,
        } => run_prop1(cli, *runs, [*size, *samples, *steps, *hidden], *lr),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
