mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use omnisweep::calibration::{calibrate, compare_models, CalibrationProblem, ComparisonTable, CornerObservations};
use omnisweep::image::{psnr, RgbImage};
use omnisweep::io::{read_json, write_json, write_pfm};
use omnisweep::linalg::Vec3;
use omnisweep::rig::RigConfig;
use omnisweep::stitcher::stitch;
use omnisweep::synth::{board_poses, render_corners, render_equirect, render_rig_camera, ChessBoard, Scene};
use omnisweep::verify::{self, Suite};
use omnisweep::{Error, ModelKind};
use serde::Serialize;

use config::{parse_size, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "omnisweep", version, about = "Multi-fisheye calibration, sphere sweeping and 360° stitching")]
struct Cli {
    /// Seed for every random choice (board poses, noise, check inputs).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "OMNISWEEP_WORKERS")]
    workers: Option<usize>,
    /// JSON file with defaults for any subcommand option.
    #[arg(long, global = true, value_name = "run.json")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic dataset: one image and distance map per camera, a
    /// ground-truth panorama and chessboard corners.
    Render(RenderArgs),
    /// Calibrate from chessboard corners and print the reprojection error.
    Calibrate(CalibrateArgs),
    /// Stitch synchronized fisheye images into an equirectangular panorama.
    #[command(override_usage = "omnisweep stitch [OPTIONS] <images>... <rig.json> <out.png>")]
    Stitch(StitchArgs),
    /// Run the built-in verification suites.
    Check(CheckArgs),
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(value_name = "scene.json")]
    scene: PathBuf,
    #[arg(value_name = "rig.json")]
    rig: PathBuf,
    out_dir: PathBuf,
    /// Fisheye image size.
    #[arg(long, value_parser = parse_size, value_name = "WxH")]
    size: Option<[usize; 2]>,
    /// Supersampling per image axis.
    #[arg(long)]
    samples: Option<usize>,
    /// Ground-truth panorama size.
    #[arg(long, value_parser = parse_size, value_name = "WxH")]
    pano: Option<[usize; 2]>,
    /// Chessboard views per camera.
    #[arg(long)]
    boards: Option<usize>,
    /// Gaussian corner noise, pixels.
    #[arg(long)]
    corner_sigma: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Dscm,
    Tscm,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Dscm => ModelKind::Dscm,
            ModelArg::Tscm => ModelKind::Tscm,
        }
    }
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Corner files, one per camera.
    #[arg(value_name = "corners.json", required = true)]
    corners: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "tscm")]
    model: ModelArg,
    /// Fit both models and print them side by side.
    #[arg(long)]
    compare: bool,
    /// Huber threshold, pixels.
    #[arg(long)]
    huber: Option<f64>,
    /// Write the full results as JSON.
    #[arg(long, value_name = "result.json")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StitchArgs {
    /// Images in rig camera order, then the rig file, then the output PNG.
    #[arg(value_name = "FILE", num_args = 3.., required = true)]
    files: Vec<PathBuf>,
    /// Number of distance candidates.
    #[arg(long)]
    layers: Option<usize>,
    /// Sweep grid per reference camera.
    #[arg(long, value_parser = parse_size, value_name = "WxH")]
    grid: Option<[usize; 2]>,
    /// Panorama size.
    #[arg(long, value_parser = parse_size, value_name = "WxH")]
    pano: Option<[usize; 2]>,
    /// Color scale of the aggregation weights.
    #[arg(long)]
    sigma_i: Option<f64>,
    /// Pyramid levels used by aggregation.
    #[arg(long)]
    levels: Option<usize>,
    /// Print per-stage wall-clock times.
    #[arg(long)]
    timing: bool,
    /// Also write the fused distance map (PFM plus JSON sidecar).
    #[arg(long, value_name = "fused.pfm")]
    distance_out: Option<PathBuf>,
    /// Ground-truth panorama; prints PSNR over covered pixels.
    #[arg(long, value_name = "truth.png")]
    truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(long, default_value = "all", value_parser = ["roundtrip", "sweep", "calib", "all"])]
    suite: String,
}

/// Process outcome with its exit code.
#[derive(Debug)]
enum Failure {
    Verification(String),
    BadInput(String),
    NonConvergence(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Verification(_) => 1,
            Failure::BadInput(_) => 2,
            Failure::NonConvergence(_) => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::BadInput(e.to_string())
    }
}

fn context(path: &Path) -> impl FnOnce(Error) -> Failure + '_ {
    move |e| Failure::BadInput(format!("{}: {e}", path.display()))
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Verification(m) => eprintln!("verification failed: {m}"),
                Failure::BadInput(m) => eprintln!("error: {m}"),
                Failure::NonConvergence(m) => eprintln!("did not converge: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(context(p))?,
        None => RunConfig::default(),
    };
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let workers = cli.workers.or(cfg.workers);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = workers {
        if k == 0 {
            return Err(Failure::BadInput("--workers must be at least 1".into()));
        }
        pool = pool.num_threads(k);
    }
    let pool = pool.build().map_err(|e| Failure::BadInput(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Render(a) => cmd_render(a, &cfg, seed),
        Command::Calibrate(a) => cmd_calibrate(a, &cfg),
        Command::Stitch(a) => cmd_stitch(a, &cfg),
        Command::Check(a) => cmd_check(a, seed),
    })
}

fn load_rig(path: &Path) -> Result<RigConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| context(path)(e.into()))?;
    RigConfig::from_json_str(&text).map_err(context(path))
}

fn cmd_render(a: RenderArgs, cfg: &RunConfig, seed: u64) -> Outcome {
    let size = a.size.unwrap_or(cfg.render.size);
    let samples = a.samples.unwrap_or(cfg.render.samples);
    let pano = a.pano.unwrap_or(cfg.render.panorama);
    let boards = a.boards.unwrap_or(cfg.render.boards);
    let sigma = a.corner_sigma.unwrap_or(cfg.render.corner_sigma);
    let text = fs::read_to_string(&a.scene).map_err(|e| context(&a.scene)(e.into()))?;
    let scene = Scene::from_json_str(&text).map_err(context(&a.scene))?;
    let rig = load_rig(&a.rig)?;
    scene.validate_for_rig(&rig)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| context(&a.out_dir)(e.into()))?;

    let mut images = Vec::new();
    for cam in &rig.cameras {
        let (img, dist) = render_rig_camera(&scene, cam, size, samples);
        let name = format!("cam{}.png", cam.id);
        img.save_png(a.out_dir.join(&name), None)?;
        let d: Vec<f32> = dist.data.iter().map(|&v| v as f32).collect();
        write_pfm(a.out_dir.join(format!("cam{}_distance.pfm", cam.id)), dist.width, dist.height, 1, &d)?;
        let poses = board_poses(boards, 85.0, seed.wrapping_add(cam.id as u64));
        let corners = render_corners(
            &ChessBoard::default(),
            &cam.intrinsics,
            size,
            &poses,
            sigma,
            seed ^ (0x5EED_0000 + cam.id as u64),
        )?;
        write_json(a.out_dir.join(format!("corners_cam{}.json", cam.id)), &corners)?;
        images.push(name);
    }
    let (gt, gt_dist) = render_equirect(&scene, &Vec3::zero(), pano[0], pano[1], samples)?;
    gt.save_png(a.out_dir.join("panorama_truth.png"), None)?;
    let d: Vec<f32> = gt_dist.data.iter().map(|&v| v as f32).collect();
    write_pfm(a.out_dir.join("panorama_truth_distance.pfm"), pano[0], pano[1], 1, &d)?;
    write_json(a.out_dir.join("rig.json"), &rig)?;

    #[derive(Serialize)]
    struct Manifest {
        images: Vec<String>,
        rig: &'static str,
        truth: &'static str,
        size: [usize; 2],
        samples: usize,
        seed: u64,
    }
    write_json(
        a.out_dir.join("manifest.json"),
        &Manifest {
            images: images.clone(),
            rig: "rig.json",
            truth: "panorama_truth.png",
            size,
            samples,
            seed,
        },
    )?;
    println!("wrote {} camera images, corners and ground truth to {}", images.len(), a.out_dir.display());
    Ok(())
}

#[derive(Serialize)]
struct CalibrationReport<T: Serialize> {
    file: String,
    #[serde(flatten)]
    result: T,
}

/// `corners_cam2.json` is reported as `cam2`.
fn camera_label(path: &Path) -> String {
    let stem = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
    stem.strip_prefix("corners_").map(str::to_owned).unwrap_or(stem)
}

fn cmd_calibrate(a: CalibrateArgs, cfg: &RunConfig) -> Outcome {
    let huber = a.huber.unwrap_or(cfg.calibrate.huber);
    let model: ModelKind = a.model.into();
    let mut problems = Vec::new();
    for path in &a.corners {
        let obs: CornerObservations = read_json(path).map_err(context(path))?;
        obs.validate().map_err(context(path))?;
        let mut p = CalibrationProblem::new(obs, model);
        p.huber_delta = huber;
        p.solver = cfg.calibrate.solver;
        problems.push((path, p));
    }

    let mut unconverged = Vec::new();
    if a.compare {
        let mut table = ComparisonTable::default();
        let mut reports = Vec::new();
        for (path, p) in &problems {
            let cmp = compare_models(p).map_err(context(path))?;
            if !(cmp.dscm.converged && cmp.tscm.converged) {
                unconverged.push(path.display().to_string());
            }
            table.push(camera_label(path), &cmp);
            reports.push(CalibrationReport {
                file: path.display().to_string(),
                result: serde_json::json!({ "dscm": cmp.dscm, "tscm": cmp.tscm }),
            });
        }
        println!("{table}");
        if let Some(out) = &a.out {
            write_json(out, &serde_json::json!({ "results": reports, "table": table }))?;
        }
    } else {
        let mut reports = Vec::new();
        println!("Mean reprojection error (pixels), {} model", model.name());
        let mut sum = 0.0;
        for (path, p) in &problems {
            let r = calibrate(p).map_err(context(path))?;
            if !r.converged {
                unconverged.push(path.display().to_string());
            }
            println!("{:<10} | {:.6e}", camera_label(path), r.mean_reprojection_error);
            sum += r.mean_reprojection_error;
            reports.push(CalibrationReport {
                file: path.display().to_string(),
                result: r,
            });
        }
        println!("{:<10} | {:.6e}", "Average", sum / problems.len() as f64);
        if let Some(out) = &a.out {
            write_json(out, &serde_json::json!({ "results": reports }))?;
        }
    }
    if unconverged.is_empty() {
        Ok(())
    } else {
        Err(Failure::NonConvergence(unconverged.join(", ")))
    }
}

fn cmd_stitch(a: StitchArgs, cfg: &RunConfig) -> Outcome {
    let n = a.files.len();
    let (images, rest) = a.files.split_at(n - 2);
    let (rig_path, out_path) = (&rest[0], &rest[1]);
    let rig = load_rig(rig_path)?;
    if images.len() != rig.cameras.len() {
        return Err(Failure::BadInput(format!(
            "{} images given for a {}-camera rig",
            images.len(),
            rig.cameras.len()
        )));
    }
    let imgs = images
        .iter()
        .map(|p| RgbImage::load_png(p).map_err(context(p)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut params = cfg.stitch.clone();
    if let Some(v) = a.layers {
        params.n_layers = v;
    }
    if let Some(v) = a.grid {
        params.grid = v;
    }
    if let Some(v) = a.pano {
        params.panorama = v;
    }
    if let Some(v) = a.sigma_i {
        params.sigma_i = v;
    }
    if let Some(v) = a.levels {
        params.n_levels = v;
    }
    let out = stitch(&imgs, &rig, &params)?;
    out.panorama.save_png(out_path).map_err(context(out_path))?;
    if let Some(p) = &a.distance_out {
        out.fused.save(p).map_err(context(p))?;
    }
    println!(
        "panorama {}×{}, coverage {:.2}%",
        out.panorama.width(),
        out.panorama.height(),
        100.0 * out.panorama.coverage_fraction()
    );
    if let Some(p) = &a.truth {
        let truth = RgbImage::load_png(p).map_err(context(p))?;
        if (truth.width, truth.height) != (out.panorama.width(), out.panorama.height()) {
            return Err(Failure::BadInput(format!(
                "truth panorama is {}×{}, output is {}×{}",
                truth.width,
                truth.height,
                out.panorama.width(),
                out.panorama.height()
            )));
        }
        // compare after the same 8-bit round trip the truth went through
        out.panorama.save_png(out_path).map_err(context(out_path))?;
        let written = RgbImage::load_png(out_path).map_err(context(out_path))?;
        println!("PSNR {:.2} dB", psnr(&written, &truth, Some(&out.panorama.coverage)));
    }
    if a.timing {
        for t in &out.timings {
            println!("{:<10} {:>9.1} ms", t.stage, t.elapsed.as_secs_f64() * 1e3);
        }
        println!("{:<10} {:>9.1} ms", "total", out.total_time().as_secs_f64() * 1e3);
    }
    Ok(())
}

fn cmd_check(a: CheckArgs, seed: u64) -> Outcome {
    let suite: Suite = a.suite.parse()?;
    let results = verify::run(suite, seed);
    let mut failed = 0;
    for r in &results {
        println!("{r}");
        if !r.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        Err(Failure::Verification(format!("{failed} of {} checks failed", results.len())))
    } else {
        Ok(())
    }
}
