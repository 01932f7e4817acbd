//! Command-line surface of the codec: train, encode, decode, eval, bdrate,
//! selftest. Option precedence is flags > config file > environment
//! (PCGC_SEED) > built-in defaults.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pcgc::codec;
use pcgc::dataset;
use pcgc::metrics::{self, DistortionKind, RDCurve};
use pcgc::model_io;
use pcgc::network::NetConfig;
use pcgc::ply::{read_ply, PlyFormat};
use pcgc::tensor::Coord;
use pcgc::train::{train, TrainConfig};

#[derive(Parser)]
#[command(name = "pcgc", version, about = "Multiscale point cloud geometry codec")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on PLY files or the built-in toy surfaces
    Train(TrainArgs),
    /// Encode a PLY file into a bitstream
    Encode(EncodeArgs),
    /// Decode a bitstream back to a PLY file
    Decode(DecodeArgs),
    /// Measure a reconstruction against its reference, appending a CSV row
    Eval(EvalArgs),
    /// BD-Rate between two rate-distortion CSV curves
    Bdrate(BdrateArgs),
    /// Run the built-in oracle suites
    Selftest,
}

#[derive(Args)]
struct TrainArgs {
    /// Output model file
    #[arg(long)]
    out: PathBuf,
    /// Directory of training PLY files
    #[arg(long, conflicts_with = "toy")]
    data: Option<PathBuf>,
    /// Use the deterministic toy surface dataset
    #[arg(long)]
    toy: bool,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    bitdepth: Option<u8>,
    /// Number of generated toy clouds
    #[arg(long)]
    toy_count: Option<usize>,
    /// Comma-separated per-scale channel widths
    #[arg(long)]
    channels: Option<String>,
    #[arg(long)]
    latent: Option<usize>,
    #[arg(long)]
    irn_units: Option<usize>,
    #[arg(long)]
    kernel: Option<usize>,
    #[arg(long)]
    lr_start: Option<f64>,
    #[arg(long)]
    lr_end: Option<f64>,
    /// Write model.<step>.pcgm checkpoints this often (0 = never)
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// key=value config file with the same names as the long flags
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    /// Input PLY file
    #[arg(long)]
    input: PathBuf,
    /// Trained model file
    #[arg(long)]
    model: PathBuf,
    /// Output bitstream
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    bitdepth: Option<u8>,
    /// Density multiplier applied to the per-scale top-k budgets
    #[arg(long)]
    k_mult: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    /// Input bitstream
    #[arg(long)]
    input: PathBuf,
    /// Trained model file (must match the stream's model hash)
    #[arg(long)]
    model: PathBuf,
    /// Output PLY file
    #[arg(long)]
    out: PathBuf,
    /// Write ascii PLY instead of binary
    #[arg(long)]
    ascii: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Reconstructed PLY (lattice frame)
    #[arg(long)]
    rec: PathBuf,
    /// Reference PLY (original)
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    bitdepth: Option<u8>,
    /// Bitstream whose size provides the bit count
    #[arg(long, conflicts_with = "bits")]
    bitstream: Option<PathBuf>,
    /// Explicit total bit count
    #[arg(long)]
    bits: Option<u64>,
    /// Row label; defaults to the reconstruction file stem
    #[arg(long)]
    label: Option<String>,
    /// CSV file to append the row to (stdout if absent)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BdrateArgs {
    /// Baseline curve CSV
    #[arg(long)]
    curve_a: PathBuf,
    /// Comparison curve CSV
    #[arg(long)]
    curve_b: PathBuf,
    /// d1 or d2
    #[arg(long, default_value = "d1")]
    metric: String,
}

/// key=value lines; '#' starts a comment.
fn read_config(path: &Path) -> Result<HashMap<String, String>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut map = HashMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected key=value", ln + 1))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

struct Settings {
    config: HashMap<String, String>,
}

impl Settings {
    fn load(path: &Option<PathBuf>) -> Result<Settings> {
        Ok(Settings {
            config: match path {
                Some(p) => read_config(p)?,
                None => HashMap::new(),
            },
        })
    }

    /// flag > config file > fallback
    fn get<T: std::str::FromStr>(&self, flag: Option<T>, key: &str, fallback: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.config.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|e| anyhow!("config key {key}: {e}")),
            None => Ok(fallback),
        }
    }

    /// seed resolution also consults PCGC_SEED
    fn seed(&self, flag: Option<u64>) -> Result<u64> {
        if let Some(v) = flag {
            return Ok(v);
        }
        if let Some(raw) = self.config.get("seed") {
            return raw.parse().map_err(|e| anyhow!("config key seed: {e}"));
        }
        if let Ok(raw) = std::env::var("PCGC_SEED") {
            return raw
                .parse()
                .map_err(|e| anyhow!("PCGC_SEED: {e}"));
        }
        Ok(7)
    }
}

fn load_ply_dir(dir: &Path, bitdepth: u8) -> Result<Vec<Vec<Coord>>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == "ply").unwrap_or(false))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .ply files in {}", dir.display());
    }
    paths
        .iter()
        .map(|p| {
            let cloud = read_ply(p).with_context(|| p.display().to_string())?;
            Ok(dataset::voxelize(&cloud, bitdepth)?)
        })
        .collect()
}

fn run_train(args: TrainArgs) -> Result<()> {
    let s = Settings::load(&args.config)?;
    let lambda = s.get(args.lambda, "lambda", 1.0)?;
    let steps = s.get(args.steps, "steps", 2000)?;
    let batch = s.get(args.batch, "batch", 8)?;
    let seed = s.seed(args.seed)?;
    let bitdepth = s.get(args.bitdepth, "bitdepth", 6)?;
    let toy_count = s.get(args.toy_count, "toy_count", 32)?;
    let channels_raw = s.get(args.channels, "channels", "8,16,32".to_string())?;
    let latent = s.get(args.latent, "latent", 4)?;
    let irn_units = s.get(args.irn_units, "irn_units", 1)?;
    let kernel = s.get(args.kernel, "kernel", 3)?;
    let lr_start = s.get(args.lr_start, "lr_start", 8e-4)?;
    let lr_end = s.get(args.lr_end, "lr_end", 2e-5)?;
    let checkpoint_every = s.get(args.checkpoint_every, "checkpoint_every", 0)?;

    let channels: Vec<usize> = channels_raw
        .split(',')
        .map(|w| w.trim().parse().map_err(|e| anyhow!("channels: {e}")))
        .collect::<Result<_>>()?;
    let net = NetConfig {
        num_scales: channels.len(),
        channels,
        latent_channels: latent,
        irn_units_per_block: irn_units,
        kernel_width: kernel,
    };

    let clouds = if args.toy || args.data.is_none() {
        dataset::gen_toy_dataset(seed, toy_count, bitdepth)
    } else {
        load_ply_dir(args.data.as_ref().unwrap(), bitdepth)?
    };
    eprintln!(
        "training on {} clouds ({} scales, lambda {lambda}, {steps} steps, batch {batch}, seed {seed})",
        clouds.len(),
        net.num_scales,
    );

    let cfg = TrainConfig {
        lambda,
        steps,
        batch_size: batch,
        lr_start,
        lr_end,
        seed,
        checkpoint_every,
    };
    let out = args.out.clone();
    let (model, report) = train(&clouds, net, &cfg, |step, model| {
        let path = out.with_extension(format!("{step}.pcgm"));
        if let Err(e) = model_io::save_model(model, &path) {
            eprintln!("checkpoint {step}: {e}");
        }
    })?;
    let hash = model_io::save_model(&model, &args.out)?;
    eprintln!(
        "J {:.4} -> {:.4}  (rate {:.4} -> {:.4} bits/pt, distortion {:.4} -> {:.4})",
        report.j_initial,
        report.j_final,
        report.rate_initial,
        report.rate_final,
        report.distortion_initial,
        report.distortion_final,
    );
    let bces: Vec<String> = report
        .per_scale_bce_final
        .iter()
        .map(|b| format!("{b:.4}"))
        .collect();
    eprintln!("per-scale BCE: [{}]", bces.join(", "));
    println!(
        "saved {} (hash {hash:#018x}, {} parameters)",
        args.out.display(),
        model.num_params()
    );
    Ok(())
}

fn run_encode(args: EncodeArgs) -> Result<()> {
    let s = Settings::load(&args.config)?;
    let bitdepth = s.get(args.bitdepth, "bitdepth", 6)?;
    let k_mult = s.get(args.k_mult, "k_mult", 1.0)?;
    let stats = codec::encode_file(&args.input, &args.model, &args.out, bitdepth, k_mult)?;
    println!(
        "{} points -> {} bits total ({:.4} bpp): coords {:.4} bpp, features {:.4} bpp, header {:.4} bpp",
        stats.n_input_points,
        stats.total_bits,
        stats.bpp(),
        stats.coord_bpp(),
        stats.feature_bpp(),
        stats.header_bits as f64 / stats.n_input_points as f64,
    );
    println!(
        "latent: {} points, feature model estimate {:.1} bits (coded {})",
        stats.n_latent_points, stats.estimated_feature_bits, stats.feature_bits
    );
    Ok(())
}

fn run_decode(args: DecodeArgs) -> Result<()> {
    let format = if args.ascii {
        PlyFormat::Ascii
    } else {
        PlyFormat::BinaryLittleEndian
    };
    let stats = codec::decode_file(&args.input, &args.model, &args.out, format)?;
    println!(
        "decoded {} points (stream encoded {} input points at bitdepth {})",
        stats.n_output_points, stats.n_input_points, stats.bitdepth
    );
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let s = Settings::load(&args.config)?;
    let bitdepth = s.get(args.bitdepth, "bitdepth", 6)?;
    let bits = match (&args.bitstream, args.bits) {
        (Some(path), _) => 8 * fs::metadata(path)?.len(),
        (None, Some(bits)) => bits,
        (None, None) => bail!("eval needs --bitstream or --bits for the rate"),
    };
    let point = codec::evaluate_pair(&args.rec, &args.reference, bitdepth, bits)?;
    let label = args.label.clone().unwrap_or_else(|| {
        args.rec
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "rec".into())
    });
    let row = format!("{},{},{},{}", label, point.bpp, point.d1_psnr, point.d2_psnr);
    match &args.out {
        Some(path) => {
            let mut text = match fs::read_to_string(path) {
                Ok(t) => t,
                Err(_) => String::from("label,bpp,d1_psnr,d2_psnr\n"),
            };
            if !text.ends_with('\n') {
                text.push('\n');
            }
            text.push_str(&row);
            text.push('\n');
            fs::write(path, text)?;
            println!("{row}");
        }
        None => println!("{row}"),
    }
    Ok(())
}

fn run_bdrate(args: BdrateArgs) -> Result<()> {
    let kind = match args.metric.as_str() {
        "d1" => DistortionKind::D1,
        "d2" => DistortionKind::D2,
        other => bail!("unknown metric {other}, expected d1 or d2"),
    };
    let load = |path: &Path| -> Result<RDCurve> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let rows = metrics::read_rd_csv(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
        let mut points: Vec<metrics::RDPoint> = rows.into_iter().map(|(_, p)| p).collect();
        points.sort_by(|a, b| a.bpp.partial_cmp(&b.bpp).unwrap());
        Ok(RDCurve(points))
    };
    let a = load(&args.curve_a)?;
    let b = load(&args.curve_b)?;
    let rate = metrics::bd_rate(&a, &b, kind)?;
    println!("BD-Rate ({}): {rate:+.2}%", args.metric);
    Ok(())
}

fn run_selftest() -> Result<()> {
    let mut failed = 0usize;
    for result in pcgc::selftest::run_all() {
        match result.outcome {
            Ok(()) => println!("PASS {}", result.name),
            Err(e) => {
                failed += 1;
                println!("FAIL {}: {e}", result.name);
            }
        }
    }
    if failed > 0 {
        bail!("{failed} selftest suite(s) failed");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => run_train(args),
        Command::Encode(args) => run_encode(args),
        Command::Decode(args) => run_decode(args),
        Command::Eval(args) => run_eval(args),
        Command::Bdrate(args) => run_bdrate(args),
        Command::Selftest => run_selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
