//! `vdc` subcommands. [`run_command`] parses arguments, runs one
//! subcommand and maps the outcome to an exit code: 0 on success, 1 on a
//! runtime failure (one `error[kind]: message` line on stderr), 2 on a usage
//! error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use vdc_core::editing::{apply_edit, DirectionRegistry, EditView};
use vdc_core::image::Image;
use vdc_core::inversion::{InversionCheckpoint, Pipeline, PipelineConfig, Stage, DEFAULT_CLIP_NORM};
use vdc_core::losses::MaskImage;
use vdc_core::metrics::{compute_psnr_ssim, MetricsReport};
use vdc_core::renderer::Camera;
use vdc_core::tensorlab::finite_diff_check;
use vdc_core::toygen::{generate_dataset, pretrain_generator, DatasetBundle, DatasetConfig, Generator, GeneratorConfig, PretrainConfig};
use vdc_core::{Error, Result};

pub const GIT_DESCRIBE: &str = env!("VDC_GIT_DESCRIBE");

#[derive(Parser, Debug)]
#[command(name = "vdc", version, about = "Composite radiance-field inversion and editing of occluded video")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 1 is the deterministic reference.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train the toy generator against the analytic scene family.
    Pretrain(PretrainArgs),
    /// Render a synthetic occluded video with oracle outputs.
    GenDataset(GenDatasetArgs),
    /// Run the inversion stages.
    Invert(InvertArgs),
    /// Render the reconstruction of one frame.
    Render(RenderArgs),
    /// Render one frame after a latent edit.
    Edit(EditArgs),
    /// Render one frame with the OOD field removed.
    RemoveOod(RenderArgs),
    /// Render one frame's state from an orbit camera.
    NovelView(NovelViewArgs),
    /// Write per-frame metrics of an inversion.
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients of the composite loss.
    GradCheck(GradCheckArgs),
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = PretrainConfig::default().steps)]
    pub steps: usize,
    #[arg(long, default_value_t = PretrainConfig::default().lr)]
    pub lr: f64,
    /// Comma-separated decoder hidden widths.
    #[arg(long, default_value = "64,64")]
    pub decoder_hidden: String,
}

#[derive(Args, Debug)]
pub struct GenDatasetArgs {
    /// Dataset config; defaults apply to absent keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InputArgs {
    #[arg(long)]
    pub gen: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
}

#[derive(Args, Debug)]
pub struct InvertArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Pipeline config; defaults apply to absent keys. `--seed` overrides its seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run only this stage, resuming from `--resume` (or `--out` if it exists).
    #[arg(long)]
    pub stage: Option<Stage>,
    /// Continue from this checkpoint with the stages not yet completed.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Clip the global gradient norm.
    #[arg(long)]
    pub clip: bool,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub inv: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    /// Output image (binary PPM).
    #[arg(long)]
    pub out: PathBuf,
    /// Write the upsampled image instead of the low-resolution render.
    #[arg(long)]
    pub hr: bool,
}

#[derive(Args, Debug)]
pub struct EditArgs {
    #[command(flatten)]
    pub render: RenderArgs,
    #[arg(long)]
    pub direction: String,
    #[arg(long, allow_hyphen_values = true)]
    pub strength: f64,
    /// Direction registry file; defaults to the toy generator's axes.
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Also remove the OOD field.
    #[arg(long)]
    pub remove_ood: bool,
}

#[derive(Args, Debug)]
pub struct NovelViewArgs {
    #[arg(long)]
    pub gen: PathBuf,
    #[arg(long)]
    pub inv: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub azimuth: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.1)]
    pub elevation: f64,
    #[arg(long, default_value_t = 3.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 1.6)]
    pub focal: f64,
    /// Low-resolution width; the output is upsampled.
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub inv: PathBuf,
    /// CSV report path.
    #[arg(long)]
    pub report: PathBuf,
    /// Score the OOD-removal render against the clean frames instead.
    #[arg(long)]
    pub removal: bool,
}

#[derive(Args, Debug)]
pub struct GradCheckArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Checkpoint to linearize around; a fresh initialization if absent.
    #[arg(long)]
    pub inv: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    /// Coordinates probed per parameter tensor.
    #[arg(long, default_value_t = 100)]
    pub probes: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Fail when the worst relative error exceeds this.
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {}", e.kind(), one_line(&e.to_string()));
            1
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidArgument("--threads must be positive".into()));
        }
        // A pool may already exist when called in-process more than once.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Pretrain(a) => pretrain(cli, a),
        Command::GenDataset(a) => gen_dataset(cli, a),
        Command::Invert(a) => invert(cli, a),
        Command::Render(a) => render(a, false),
        Command::RemoveOod(a) => render(a, true),
        Command::Edit(a) => edit(a),
        Command::NovelView(a) => novel_view(a),
        Command::Eval(a) => eval(a),
        Command::GradCheck(a) => grad_check(cli, a),
    }
}

fn parse_widths(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|x| x.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidArgument(format!("cannot parse widths `{s}`")))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Record how an output was produced, next to it.
fn write_manifest(cli: &Cli, out: &Path, extra: &str) -> Result<()> {
    let name = out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    let path = out.with_file_name(format!("{name}.manifest.txt"));
    let args: Vec<String> = std::env::args().collect();
    let text = format!(
        "version = {}\ngit = {GIT_DESCRIBE}\nseed = {}\nthreads = {}\ncommand = {}\n{extra}",
        env!("CARGO_PKG_VERSION"),
        cli.seed,
        cli.threads.map_or("default".to_string(), |n| n.to_string()),
        args.join(" ")
    );
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn pretrain(cli: &Cli, a: &PretrainArgs) -> Result<()> {
    let cfg = GeneratorConfig {
        decoder_hidden: parse_widths(&a.decoder_hidden)?,
        ..GeneratorConfig::default()
    };
    let train = PretrainConfig {
        seed: cli.seed,
        steps: a.steps,
        lr: a.lr,
        ..PretrainConfig::default()
    };
    let (gen, report) = pretrain_generator(cfg, &train)?;
    gen.save(&a.out)?;
    if let Some(l) = report.final_loss() {
        println!("final window loss {l:.6e}");
    }
    write_manifest(cli, &a.out, &format!("generator_hash = {}\n", gen.content_hash()))
}

fn gen_dataset(cli: &Cli, a: &GenDatasetArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => DatasetConfig::from_text(&read_text(p)?)?,
        None => DatasetConfig::default(),
    };
    if a.config.is_none() || cli.seed != 0 {
        cfg.seed = cli.seed;
    }
    let bundle = generate_dataset(&cfg)?;
    bundle.save(&a.out)?;
    println!("wrote {} frames to {}", bundle.frames.len(), a.out.display());
    Ok(())
}

fn load_inputs(a: &InputArgs) -> Result<(Generator, DatasetBundle)> {
    Ok((Generator::load(&a.gen)?, DatasetBundle::load(&a.dataset)?))
}

fn invert(cli: &Cli, a: &InvertArgs) -> Result<()> {
    let (gen, data) = load_inputs(&a.input)?;
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::from_text(&read_text(p)?)?,
        None => PipelineConfig::default(),
    };
    cfg.seed = cli.seed;
    if a.clip {
        cfg.clip_norm = Some(DEFAULT_CLIP_NORM);
    }
    let pipeline = Pipeline::new(&gen, &data, cfg.clone())?;
    let resume_from = a
        .resume
        .clone()
        .or_else(|| (a.stage.is_some() && a.out.exists()).then(|| a.out.clone()));
    let mut ck = match &resume_from {
        Some(p) => {
            let mut ck = InversionCheckpoint::load(p)?;
            ck.config = cfg;
            ck
        }
        None => pipeline.init_checkpoint()?,
    };
    let stages: Vec<Stage> = match a.stage {
        Some(s) => vec![s],
        None => Stage::ALL.into_iter().filter(|s| Some(*s) > ck.stage).collect(),
    };
    for s in stages {
        let report = pipeline.run(&mut ck, &[s])?;
        let last = report[0].epoch_losses.last().copied().unwrap_or(f64::NAN);
        println!("stage {s}: final epoch loss {last:.6e}");
        // Save after every stage so an interrupted run can resume.
        ck.save(&a.out)?;
    }
    ck.save(&a.out)?;
    write_manifest(cli, &a.out, &format!("generator_hash = {}\n", ck.generator_hash))
}

fn camera_of(data: &DatasetBundle, t: usize) -> Result<Camera> {
    data.frames
        .get(t)
        .map(|f| f.camera)
        .ok_or_else(|| Error::InvalidArgument(format!("frame {t} out of range for {} frames", data.frames.len())))
}

fn write_view(view: &EditView, a: &RenderArgs, data: &DatasetBundle, latent: &vdc_core::Tensor) -> Result<()> {
    let cam = camera_of(data, a.frame)?;
    let f = &data.frames[a.frame];
    let (w, h) = (f.image.width, f.image.height);
    let img = if a.hr {
        view.render_hr(a.frame, latent, &cam, w, h)?
    } else {
        view.render(a.frame, latent, &cam, w, h)?.color
    };
    img.save_pnm(&a.out)
}

fn render(a: &RenderArgs, remove: bool) -> Result<()> {
    let (gen, data) = load_inputs(&a.input)?;
    let ck = InversionCheckpoint::load(&a.inv)?;
    let mut view = EditView::new(&gen, &ck);
    if remove {
        view = view.remove_ood();
    }
    write_view(&view, a, &data, &view.latent(a.frame)?)
}

fn edit(a: &EditArgs) -> Result<()> {
    let (gen, data) = load_inputs(&a.render.input)?;
    let ck = InversionCheckpoint::load(&a.render.inv)?;
    let [rows, dim] = gen.config.latent_shape();
    let registry = match &a.registry {
        Some(p) => DirectionRegistry::load(p)?,
        None => DirectionRegistry::toy(rows, dim)?,
    };
    let dir = registry.get(&a.direction)?;
    let mut view = EditView::new(&gen, &ck);
    if a.remove_ood {
        view = view.remove_ood();
    }
    let latent = apply_edit(&view.latent(a.render.frame)?, dir, a.strength)?;
    write_view(&view, &a.render, &data, &latent)
}

fn novel_view(a: &NovelViewArgs) -> Result<()> {
    let gen = Generator::load(&a.gen)?;
    let ck = InversionCheckpoint::load(&a.inv)?;
    let cam = Camera::orbit(a.radius, a.azimuth, a.elevation, a.focal)?;
    EditView::new(&gen, &ck)
        .render_novel_view(&cam, a.frame, a.width, a.height)?
        .save_pnm(&a.out)
}

/// Per-frame metrics of the reconstruction against the input frames, or of
/// the removal render against the clean frames.
pub fn evaluate(gen: &Generator, data: &DatasetBundle, ck: &InversionCheckpoint, removal: bool) -> Result<MetricsReport> {
    let mut view = EditView::new(gen, ck);
    if removal {
        view = view.remove_ood();
    }
    let mut report = MetricsReport::default();
    for (t, f) in data.frames.iter().enumerate() {
        let target: &Image = if removal {
            f.clean
                .as_ref()
                .ok_or_else(|| Error::Format(format!("frame {t} has no clean image")))?
        } else {
            &f.image
        };
        let out = view.render(t, &view.latent(t)?, &f.camera, f.image.width, f.image.height)?;
        let mask = MaskImage::from_image(&f.mask)?;
        report.rows.push(compute_psnr_ssim(t, &out.color, target, Some(&mask))?);
    }
    Ok(report)
}

fn eval(a: &EvalArgs) -> Result<()> {
    let (gen, data) = load_inputs(&a.input)?;
    let ck = InversionCheckpoint::load(&a.inv)?;
    let report = evaluate(&gen, &data, &ck, a.removal)?;
    report.write_csv(&a.report)?;
    println!(
        "mean psnr {:.3} dB, ssim {:.4}, l2 {:.3e}",
        report.mean_psnr(),
        report.mean_ssim(),
        report.mean_l2()
    );
    Ok(())
}

fn grad_check(cli: &Cli, a: &GradCheckArgs) -> Result<()> {
    let (gen, data) = load_inputs(&a.input)?;
    let loaded = a.inv.as_deref().map(InversionCheckpoint::load).transpose()?;
    let cfg = match &loaded {
        Some(ck) => ck.config.clone(),
        None => PipelineConfig {
            seed: cli.seed,
            ..PipelineConfig::default()
        },
    };
    let pipeline = Pipeline::new(&gen, &data, cfg)?;
    let ck = match loaded {
        Some(ck) => ck,
        None => pipeline.init_checkpoint()?,
    };
    let params = pipeline.composite_params(&ck, a.frame)?;
    let report = finite_diff_check(
        |p| pipeline.composite_objective(a.frame, &ck.ood, p),
        &params,
        a.step,
        a.probes,
        cli.seed,
    )?;
    println!("probes {} max relative error {:.3e}", report.probes, report.max_rel_error);
    if report.max_rel_error > a.tolerance {
        return Err(Error::Backward(format!(
            "max relative error {:.3e} exceeds {:.1e} at {:?}",
            report.max_rel_error, a.tolerance, report.worst
        )));
    }
    Ok(())
}
