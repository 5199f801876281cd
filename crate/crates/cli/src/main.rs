use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use blurfeat::blursynth::{synth_pair, BlurLevel};
use blurfeat::evalkit::{evaluated_keypoints, repeatability, Dims, EvalParams};
use blurfeat::gradsuite::{run_gradient_suite, SUITE_SEEDS};
use blurfeat::io::{
    encode_ppm, load_model, read_homography, read_image, read_keypoints, save_model, write_image, write_kernel,
    write_keypoints, BitDepth, DatasetManifest,
};
use blurfeat::model::{build_model, ModelConfig, DEFAULT_THRESHOLD};
use blurfeat::supervision::{detect_reference_keypoints, render_heatmap, train, AugmentConfig, TrainConfig};

mod draw;

/// Blur-aware keypoint detection: training, inference and evaluation.
#[derive(Parser)]
#[command(name = "blurfeat", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a detector on the pairs listed in a manifest.
    Train(TrainArgs),
    /// Write the top keypoints of an image as CSV.
    Detect(DetectArgs),
    /// Write the full-resolution response as a 16-bit PGM.
    ScoreMap(ScoreMapArgs),
    /// Repeatability of two keypoint sets under a homography.
    Eval(EvalArgs),
    /// Blur an image with a random motion kernel.
    SynthBlur(SynthBlurArgs),
    /// Render the Gaussian target heatmap of an image as a 16-bit PGM.
    GtHeatmap(GtHeatmapArgs),
    /// Finite-difference check of every differentiable block.
    Gradcheck,
    /// Side-by-side image of two views with their matched keypoints.
    DrawMatches(DrawMatchesArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 1e-6)]
    lr_final: f64,
    /// Last epoch at the initial rate; defaults to 40% of the run.
    #[arg(long)]
    decay_start: Option<usize>,
    #[arg(long, default_value_t = 256)]
    crop: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probability of training on the sharp image of a pair.
    #[arg(long, default_value_t = 0.5)]
    mix_sharp: f64,
    #[arg(long, default_value_t = 2.0)]
    sigma: f64,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    rmab: Switch,
    /// Keypoints per image when a manifest entry has no keypoint file.
    #[arg(long, default_value_t = 1000)]
    max_kpts: usize,
    /// Optional per-step loss log (`step,epoch,lr,loss`).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value_t = 1000)]
    max_kpts: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreMapArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProtocolArgs {
    #[arg(long, default_value_t = 1000)]
    top: usize,
    #[arg(long, default_value_t = 0.4)]
    eps: f64,
    #[arg(long, default_value_t = 4.0)]
    rho: f64,
}

impl ProtocolArgs {
    fn params(&self) -> EvalParams {
        EvalParams { top_k: self.top, eps: self.eps, rho: self.rho }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ref_kpts: PathBuf,
    #[arg(long)]
    tgt_kpts: PathBuf,
    #[arg(long)]
    homography: PathBuf,
    /// Reference image size as `HxW`.
    #[arg(long, value_parser = parse_dims)]
    ref_dims: Dims,
    #[arg(long, value_parser = parse_dims)]
    tgt_dims: Dims,
    #[command(flatten)]
    protocol: ProtocolArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Easy,
    Hard,
    Tough,
}

impl From<Level> for BlurLevel {
    fn from(l: Level) -> Self {
        match l {
            Level::Easy => BlurLevel::Easy,
            Level::Hard => BlurLevel::Hard,
            Level::Tough => BlurLevel::Tough,
        }
    }
}

#[derive(Args)]
struct SynthBlurArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    level: Level,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    kernel_out: Option<PathBuf>,
    /// Write 16-bit samples instead of 8-bit.
    #[arg(long)]
    sixteen_bit: bool,
}

#[derive(Args)]
struct GtHeatmapArgs {
    #[arg(long)]
    image: PathBuf,
    /// Keypoint CSV; the built-in corner detector is used when absent.
    #[arg(long)]
    kpts: Option<PathBuf>,
    #[arg(long, default_value_t = 2.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1000)]
    max_kpts: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DrawMatchesArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    tgt: PathBuf,
    #[arg(long)]
    ref_kpts: PathBuf,
    #[arg(long)]
    tgt_kpts: PathBuf,
    #[arg(long)]
    homography: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    protocol: ProtocolArgs,
}

fn parse_dims(s: &str) -> Result<Dims, String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("bad size {v:?} in {s:?}: {e}"));
    let dims = (p(h)?, p(w)?);
    if dims.0 == 0 || dims.1 == 0 {
        return Err(format!("empty image size {s:?}"));
    }
    Ok(dims)
}

fn image_dims(path: &PathBuf) -> Result<(blurfeat::tensorgrad::Tensor<f32>, Dims)> {
    let img = read_image(path)?;
    let (h, w, _) = img.dims3()?;
    Ok((img, (h, w)))
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    if manifest.entries.is_empty() {
        bail!("{} lists no image pairs", a.manifest.display());
    }
    let data = manifest.load_samples(a.max_kpts)?;
    let config = ModelConfig { rmab: matches!(a.rmab, Switch::On), ..ModelConfig::default() };
    let tc = TrainConfig {
        batch_size: a.batch,
        epochs: a.epochs,
        lr_initial: a.lr,
        lr_final: a.lr_final,
        decay_start_epoch: a.decay_start.unwrap_or(a.epochs * 2 / 5),
        sigma_gt: a.sigma,
        mix_sharp: a.mix_sharp,
        seed: a.seed,
    };
    let aug = AugmentConfig { crop: a.crop, ..AugmentConfig::default() };
    let mut model = build_model(&config, a.seed)?;
    eprintln!("training {} parameters on {} pairs", model.param_count(), data.len());
    let mut log = String::from("step,epoch,lr,loss\n");
    train(&data, &tc, Some(&aug), &mut model, |s| {
        eprintln!("epoch {} step {} lr {:.3e} loss {:.6e}", s.epoch, s.step, s.lr, s.loss);
        log += &format!("{},{},{},{}\n", s.step, s.epoch, s.lr, s.loss);
    })?;
    save_model(&a.out, &model)?;
    if let Some(p) = &a.log {
        std::fs::write(p, log).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn cmd_detect(a: &DetectArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let kps = model.detect(&read_image(&a.image)?, a.max_kpts, a.threshold)?;
    write_keypoints(&a.out, &kps)?;
    eprintln!("{} keypoints", kps.len());
    Ok(())
}

fn cmd_score_map(a: &ScoreMapArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let r = model.score_map(&read_image(&a.image)?)?;
    write_image(&a.out, &r, BitDepth::Sixteen)?;
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let r = read_keypoints(&a.ref_kpts)?;
    let t = read_keypoints(&a.tgt_kpts)?;
    let h = read_homography(&a.homography)?;
    let res = repeatability(&r, &t, &h, a.ref_dims, a.tgt_dims, &a.protocol.params())?;
    println!("repeatability={:.2}", 100.0 * res.repeatability);
    println!("matches={} ref={} tgt={}", res.matches.len(), res.n_ref, res.n_tgt);
    Ok(())
}

fn cmd_synth_blur(a: &SynthBlurArgs) -> Result<()> {
    let img = read_image(&a.input)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let (blurred, kernel) = synth_pair(&img, a.level.into(), &mut rng)?;
    let depth = if a.sixteen_bit { BitDepth::Sixteen } else { BitDepth::Eight };
    write_image(&a.out, &blurred, depth)?;
    if let Some(k) = &a.kernel_out {
        write_kernel(k, &kernel)?;
    }
    Ok(())
}

fn cmd_gt_heatmap(a: &GtHeatmapArgs) -> Result<()> {
    let (img, (h, w)) = image_dims(&a.image)?;
    let kps = match &a.kpts {
        Some(p) => read_keypoints(p)?,
        None => detect_reference_keypoints(&img, a.max_kpts)?,
    };
    write_image(&a.out, &render_heatmap(&kps, h, w, a.sigma)?, BitDepth::Sixteen)?;
    Ok(())
}

fn cmd_gradcheck() -> Result<bool> {
    let entries = run_gradient_suite(&SUITE_SEEDS)?;
    for e in &entries {
        let status = if e.passed() { "ok" } else { "FAIL" };
        println!("{:<24} {:.3e} {:>6} {status}", e.block, e.max_rel_error, e.checked);
    }
    Ok(entries.iter().all(|e| e.passed()))
}

fn cmd_draw_matches(a: &DrawMatchesArgs) -> Result<()> {
    let (ri, rd) = image_dims(&a.reference)?;
    let (ti, td) = image_dims(&a.tgt)?;
    let h = read_homography(&a.homography)?;
    let params = a.protocol.params();
    let (rk, tk) = (read_keypoints(&a.ref_kpts)?, read_keypoints(&a.tgt_kpts)?);
    let (r, t) = evaluated_keypoints(&rk, &tk, &h, rd, td, &params)?;
    let res = repeatability(&rk, &tk, &h, rd, td, &params)?;
    let canvas = draw::side_by_side(&ri, &ti, &r, &t, &res.matches)?;
    let bytes = encode_ppm(canvas.height, canvas.width, &canvas.rgb)?;
    std::fs::write(&a.out, bytes).with_context(|| format!("writing {}", a.out.display()))?;
    println!("repeatability={:.2}", 100.0 * res.repeatability);
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Train(a) => cmd_train(a)?,
        Command::Detect(a) => cmd_detect(a)?,
        Command::ScoreMap(a) => cmd_score_map(a)?,
        Command::Eval(a) => cmd_eval(a)?,
        Command::SynthBlur(a) => cmd_synth_blur(a)?,
        Command::GtHeatmap(a) => cmd_gt_heatmap(a)?,
        Command::Gradcheck => return cmd_gradcheck(),
        Command::DrawMatches(a) => cmd_draw_matches(a)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
