use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use iarn_core::backbone::param_count;
use iarn_core::eval::{check_inference_scale, evaluate, parse_scale, parse_scale_list, to_csv, to_table};
use iarn_core::io::{describe, read_dir_images, read_image, write_image};
use iarn_core::metrics::{psnr, ssim, Db, PsnrMode};
use iarn_core::pipeline::Rescaler;
use iarn_core::trainer::{PatchSampler, Trainer};
use iarn_core::{checkpoint, selfcheck, synthetic, Error, ScalePair, TrainConfig};

#[derive(Parser)]
#[command(name = "iarn", version, about = "Invertible arbitrary-scale image rescaling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Produce the LR image of an HR image.
    Downscale(RescaleArgs),
    /// Restore an HR image from a model-produced LR image.
    Upscale(UpscaleArgs),
    /// Downscale then upscale, reporting fidelity against the input.
    Roundtrip(RoundtripArgs),
    /// Metrics per scale over a directory of images.
    Eval(EvalArgs),
    /// Run the built-in invariant suites.
    Selfcheck {
        /// 64-bit numerics with tighter tolerances.
        #[arg(long)]
        f64: bool,
    },
    /// Print the configuration and parameter count.
    Info {
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// `key = value` config file; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of PNG/PPM/PGM training images.
    #[arg(long, required_unless_present = "synthetic")]
    data: Option<PathBuf>,
    /// Train on this many procedural 64x64 images instead of a directory.
    #[arg(long, conflicts_with = "data")]
    synthetic: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Loss log, one line per iteration.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Start from the weights of an existing checkpoint.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Override a config key, e.g. `--set iterations=100`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Print progress every N iterations (0 disables).
    #[arg(long, default_value_t = 100)]
    progress: u64,
}

#[derive(Args)]
struct RescaleArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// `2.5` or `HxV` such as `2.0x3.0`.
    #[arg(long)]
    scale: String,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct UpscaleArgs {
    #[command(flatten)]
    common: RescaleArgs,
    /// Output size `WxH`; defaults to the LR size times the scale.
    #[arg(long)]
    size: Option<String>,
}

#[derive(Args)]
struct RoundtripArgs {
    #[command(flatten)]
    common: RescaleArgs,
    /// Also write the intermediate LR image.
    #[arg(long)]
    lr_output: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated scales and `lo:hi:step` sweeps.
    #[arg(long)]
    scales: String,
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn load_rescaler(path: &Path) -> Result<Rescaler, Error> {
    let (cfg, model) = checkpoint::load(path)?;
    Ok(Rescaler::new(model, &cfg))
}

fn inference_scale(s: &str) -> Result<ScalePair, Error> {
    check_inference_scale(parse_scale(s)?)
}

fn parse_size(s: &str) -> Result<(usize, usize), Error> {
    let bad = || Error::Config(format!("size {s:?} must be WxH"));
    let (w, h) = s.to_ascii_lowercase().split_once('x').map(|(a, b)| (a.to_string(), b.to_string())).ok_or_else(bad)?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((h, w))
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn train(args: TrainArgs) -> Result<(), Error> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_text(&text)?;
    }
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {kv:?} must be KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    let images = match (&args.data, args.synthetic) {
        (Some(dir), _) => read_dir_images(dir)?.into_iter().map(|(_, img)| img).collect(),
        (None, Some(n)) => synthetic::images(n, 64, 64, cfg.seed)?,
        (None, None) => return Err(Error::Config("either --data or --synthetic is required".into())),
    };
    let sampler = PatchSampler::new(images, cfg.patch_size, cfg.hflip)?;
    let mut trainer = match &args.init {
        Some(path) => {
            let (_, model) = checkpoint::load(path)?;
            Trainer::from_model(cfg.clone(), model)?
        }
        None => Trainer::new(cfg.clone())?,
    };
    let mut log = match &args.log {
        Some(path) => Some(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?)),
        None => None,
    };
    eprintln!(
        "training {} parameters for {} iterations on {} images",
        trainer.model().param_count(),
        cfg.iterations,
        sampler.images().len()
    );
    let start = Instant::now();
    while trainer.iteration() < cfg.iterations {
        let entry = trainer.step(&sampler)?;
        if let Some(w) = log.as_mut() {
            writeln!(w, "{}", entry.line()).map_err(|e| Error::io(args.log.as_deref().unwrap_or(Path::new("")), e))?;
        }
        if args.progress > 0 && (entry.iteration % args.progress == 0 || entry.iteration + 1 == cfg.iterations) {
            eprintln!("{} ({:.1}s)", entry.line(), start.elapsed().as_secs_f64());
        }
    }
    if let (Some(mut w), Some(path)) = (log, &args.log) {
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    checkpoint::save(&args.out, &cfg, trainer.model())?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn downscale(args: RescaleArgs) -> Result<(), Error> {
    let scale = inference_scale(&args.scale)?;
    let rescaler = load_rescaler(&args.ckpt)?;
    let x = read_image(&args.input)?;
    let down = rescaler.downscale(&x, scale)?;
    write_image(&args.output, &down.image)?;
    println!(
        "{} -> {} (realized scale {:.6}x{:.6})",
        describe(&x),
        describe(&down.image),
        down.scale.h,
        down.scale.v
    );
    Ok(())
}

fn upscale(args: UpscaleArgs) -> Result<(), Error> {
    let scale = inference_scale(&args.common.scale)?;
    let target = args.size.as_deref().map(parse_size).transpose()?;
    let rescaler = load_rescaler(&args.common.ckpt)?;
    let lr = read_image(&args.common.input)?;
    let hr = rescaler.upscale(&lr, scale, target)?;
    write_image(&args.common.output, &hr)?;
    println!("{} -> {}", describe(&lr), describe(&hr));
    Ok(())
}

fn roundtrip(args: RoundtripArgs) -> Result<(), Error> {
    let scale = inference_scale(&args.common.scale)?;
    let rescaler = load_rescaler(&args.common.ckpt)?;
    let x = read_image(&args.common.input)?;
    let (down, restored) = rescaler.round_trip(&x, scale, true)?;
    let restored = restored.quantized();
    if let Some(path) = &args.lr_output {
        write_image(path, &down.image)?;
    }
    write_image(&args.common.output, &restored)?;
    let ssim_text = match ssim(&restored, &x) {
        Ok(v) => format!("{v:.4}"),
        Err(_) => "n/a".into(),
    };
    println!(
        "{} -> {} -> {}: psnr_y {} dB, psnr_rgb {} dB, ssim {ssim_text}",
        describe(&x),
        describe(&down.image),
        describe(&restored),
        Db(psnr(&restored, &x, PsnrMode::YChannel)?),
        Db(psnr(&restored, &x, PsnrMode::Rgb)?)
    );
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), Error> {
    let scales = parse_scale_list(&args.scales)?
        .into_iter()
        .map(check_inference_scale)
        .collect::<Result<Vec<_>, _>>()?;
    let rescaler = load_rescaler(&args.ckpt)?;
    let images: Vec<_> = read_dir_images(&args.data)?.into_iter().map(|(_, img)| img).collect();
    let rows = evaluate(&rescaler, &images, &scales)?;
    print!("{}", to_table(&rows));
    if let Some(path) = &args.csv {
        write_text(path, &to_csv(&rows))?;
    }
    Ok(())
}

fn run_selfcheck(wide: bool) -> Result<bool, Error> {
    let results = selfcheck::run_all(wide);
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} of {} checks passed", results.len() - failed, results.len());
    Ok(failed == 0)
}

fn info(ckpt: Option<PathBuf>, config: Option<PathBuf>) -> Result<(), Error> {
    let cfg = match (ckpt, config) {
        (Some(path), _) => checkpoint::load(&path)?.0,
        (None, Some(path)) => TrainConfig::from_file(&path)?,
        (None, None) => return Err(Error::Config("either --ckpt or --config is required".into())),
    };
    println!("param_count = {}", param_count(&cfg.backbone));
    print!("{}", cfg.to_text());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Downscale(a) => downscale(a),
        Command::Upscale(a) => upscale(a),
        Command::Roundtrip(a) => roundtrip(a),
        Command::Eval(a) => eval(a),
        Command::Selfcheck { f64 } => match run_selfcheck(f64) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
        Command::Info { ckpt, config } => info(ckpt, config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
