use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use prnu_core::correlate::{DEFAULT_EXCLUSION_RADIUS, DEFAULT_THRESHOLD};
use prnu_core::denoise::{DEFAULT_LEVELS, DEFAULT_SIGMA0};
use prnu_core::experiment::{
    dump_images, emit, run_comparing, run_setup, run_spoofing, DatasetManifest, RunConfig,
};
use prnu_core::imaging::save_pgm;
use prnu_core::sensorsim::SensorParams;
use prnu_core::simulation::{simulate_fleet, FleetConfig};
use prnu_core::{
    adp_remove, estimate_fingerprint, identify_image, inject_fingerprint, load_fingerprint,
    load_image, remove_fingerprint, residual, save_fingerprint, substitute_fingerprint, zero_mean,
    AdaptMode, AttackConfig, DenoiseParams, Fingerprint, ImagePlane, NormalizeMode,
};

#[derive(Parser, Debug)]
#[command(name = "prnu", version, about = "Sensor pattern noise forensics")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate a camera fingerprint from a set of images.
    Enroll(EnrollArgs),
    /// Rank candidate fingerprints against an image.
    Identify(IdentifyArgs),
    /// Remove, inject or substitute a fingerprint.
    Spoof(SpoofArgs),
    /// Run the setup/spoofing/comparing experiment described by a manifest.
    Experiment(ExperimentArgs),
    /// Render a synthetic camera fleet with a ready manifest.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug, Clone, Copy)]
struct DenoiseFlags {
    #[arg(long, default_value_t = DEFAULT_SIGMA0)]
    sigma0: f64,
    #[arg(long, default_value_t = DEFAULT_LEVELS)]
    levels: usize,
}

impl DenoiseFlags {
    fn params(self) -> DenoiseParams {
        DenoiseParams {
            sigma0: self.sigma0,
            levels: self.levels,
        }
    }
}

#[derive(Args, Debug)]
struct EnrollArgs {
    /// Glob pattern of enrollment images (PGM or PNG).
    #[arg(long)]
    images: String,
    #[arg(long)]
    camera_id: String,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    denoise: DenoiseFlags,
    /// Remove row and column means from the estimate.
    #[arg(long)]
    zero_mean: bool,
}

#[derive(Args, Debug)]
struct IdentifyArgs {
    #[arg(long)]
    image: PathBuf,
    /// Directory of `.pnuf` fingerprints.
    #[arg(long)]
    fingerprints: PathBuf,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = DEFAULT_EXCLUSION_RADIUS)]
    radius: usize,
    /// Fit the image onto fingerprints of other dimensions (crop|resize).
    #[arg(long)]
    adapt: Option<AdaptMode>,
    #[command(flatten)]
    denoise: DenoiseFlags,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
enum SpoofMode {
    /// Add `--inject` to the image as is (run `remove` first for a full copy attack).
    Inject,
    /// Median-filter, then inject `--inject`.
    Substitute,
    /// Single denoising pass.
    Remove,
    /// Denoise until the correlation with `--own` drops below target.
    Adp,
}

#[derive(Args, Debug)]
struct SpoofArgs {
    #[arg(long)]
    image: PathBuf,
    /// Fingerprint to inject (inject, substitute).
    #[arg(long)]
    inject: Option<PathBuf>,
    /// The image's own camera fingerprint (adp).
    #[arg(long)]
    own: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = SpoofMode::Inject)]
    mode: SpoofMode,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "crop")]
    adapt: AdaptMode,
    #[arg(long, default_value = "clamp")]
    normalize: NormalizeMode,
    #[arg(long, default_value_t = DEFAULT_EXCLUSION_RADIUS)]
    radius: usize,
    #[command(flatten)]
    denoise: DenoiseFlags,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the manifest's adaptation mode.
    #[arg(long)]
    adapt: Option<AdaptMode>,
    /// Overrides the manifest's injection strength.
    #[arg(long)]
    alpha: Option<f64>,
    /// Also write every attacked image under `<out>/images`.
    #[arg(long)]
    dump_images: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    cameras: usize,
    /// Image size as WxH.
    #[arg(long, value_parser = parse_dims)]
    dims: (usize, usize),
    /// Images per camera, split into target images and two enrollment sets.
    #[arg(long)]
    shots: usize,
    /// Target images per camera (default: shots / 7).
    #[arg(long)]
    spoofable: Option<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "cam")]
    id_prefix: String,
    #[arg(long)]
    sigma_pnu: Option<f64>,
    #[arg(long)]
    sigma_fpn: Option<f64>,
    #[arg(long)]
    read_sigma: Option<f64>,
    #[arg(long)]
    shot_gain: Option<f64>,
}

fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(w)?, parse(h)?))
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Core(prnu_core::Error),
}

impl From<prnu_core::Error> for CliError {
    fn from(e: prnu_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Core(e) if e.is_input_error() => 2,
            CliError::Core(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

type CliResult = Result<(), CliError>;

fn load_plane(path: &Path) -> Result<ImagePlane, CliError> {
    Ok(load_image(path)?.into_luminance())
}

fn ensure_parent(path: &Path) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult {
    let mut s = serde_json::to_string_pretty(value).map_err(prnu_core::Error::from)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn cmd_enroll(a: &EnrollArgs) -> CliResult {
    let paths = glob::glob(&a.images)
        .map_err(|e| CliError::Input(format!("bad glob {:?}: {e}", a.images)))?
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Input(e.to_string()))?;
    if paths.is_empty() {
        return Err(CliError::Input(format!("no images match {:?}", a.images)));
    }
    let images = paths
        .iter()
        .map(|p| load_plane(p))
        .collect::<Result<Vec<_>, _>>()?;
    let residuals = images
        .par_iter()
        .map(|p| residual(p, a.denoise.params()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut k = estimate_fingerprint(&images, &residuals, &a.camera_id)?;
    if a.zero_mean {
        k = zero_mean(&k);
    }
    ensure_parent(&a.out)?;
    save_fingerprint(&k, &a.out)?;
    eprintln!(
        "enrolled {} from {} images ({}x{}) -> {}",
        a.camera_id,
        images.len(),
        k.width(),
        k.height(),
        a.out.display()
    );
    Ok(())
}

fn load_fingerprint_dir(dir: &Path) -> Result<Vec<Fingerprint>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Input(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "pnuf"));
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Input(format!(
            "no .pnuf files in {}",
            dir.display()
        )));
    }
    Ok(paths
        .iter()
        .map(load_fingerprint)
        .collect::<Result<_, _>>()?)
}

fn cmd_identify(a: &IdentifyArgs) -> CliResult {
    let image = load_plane(&a.image)?;
    let candidates = load_fingerprint_dir(&a.fingerprints)?;
    let id = identify_image(
        &image,
        &candidates,
        a.denoise.params(),
        a.threshold,
        a.radius,
        a.adapt,
    )?;
    for s in &id.ranking {
        println!("{}\t{:.6}", s.camera_id, s.ccn);
    }
    println!(
        "DECISION:{}",
        id.decision.as_deref().unwrap_or("unidentified")
    );
    Ok(())
}

fn cmd_spoof(a: &SpoofArgs) -> CliResult {
    let image = load_plane(&a.image)?;
    let cfg = AttackConfig {
        injection_strength: a.alpha,
        normalize_mode: a.normalize,
        adapt_mode: Some(a.adapt),
        denoise: a.denoise.params(),
        exclusion_radius: a.radius,
        ..AttackConfig::default()
    };
    cfg.validate()?;
    let required = |p: &Option<PathBuf>, flag: &str| -> Result<Fingerprint, CliError> {
        match p {
            Some(p) => Ok(load_fingerprint(p)?),
            None => Err(CliError::Input(
                format!("--mode {:?} requires {flag}", a.mode).to_lowercase(),
            )),
        }
    };
    let out = match a.mode {
        SpoofMode::Remove => remove_fingerprint(&image, &cfg)?,
        SpoofMode::Inject => inject_fingerprint(&image, &required(&a.inject, "--inject")?, &cfg)?,
        SpoofMode::Substitute => {
            substitute_fingerprint(&image, &required(&a.inject, "--inject")?, &cfg)?
        }
        SpoofMode::Adp => {
            let (plane, iters) = adp_remove(&image, &required(&a.own, "--own")?, &cfg)?;
            eprintln!("adp iterations: {iters}");
            plane
        }
    };
    ensure_parent(&a.out)?;
    save_pgm(&out, &a.out)?;
    Ok(())
}

fn cmd_experiment(a: &ExperimentArgs) -> CliResult {
    let mut manifest = DatasetManifest::load(&a.manifest)?;
    if let Some(m) = a.adapt {
        manifest.options.adapt_mode = m;
    }
    if let Some(alpha) = a.alpha {
        manifest.options.alpha = alpha;
    }
    let opts = manifest.options;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let cameras = manifest.load_images(base)?;
    eprintln!("setup: {} cameras", cameras.len());
    let rps = run_setup(&cameras, &opts)?;
    eprintln!("spoofing");
    let attacked = run_spoofing(&cameras, &rps, &opts)?;
    eprintln!("comparing {} images", attacked.len());
    let outcome = run_comparing(&attacked, &rps, &opts)?;
    let config = RunConfig {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        manifest: Some(a.manifest.display().to_string()),
        options: opts,
        provenance: manifest.provenance.clone(),
    };
    emit(&outcome, &config, &a.out)?;
    if a.dump_images {
        dump_images(&attacked, a.out.join("images"))?;
    }
    let r = &outcome.report;
    println!(
        "spoof success {}/{} ({:.4}); cross-camera {}/{} ({:.4})",
        r.success_count,
        r.success_count + r.failure_count,
        r.success_rate,
        r.cross_success_count,
        r.cross_success_count + r.cross_failure_count,
        r.cross_success_rate
    );
    println!("outputs in {}", a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct TruthEntry {
    camera_id: String,
    seed: u64,
    width: usize,
    height: usize,
    k_true: PathBuf,
}

#[derive(Serialize)]
struct GroundTruth {
    seed: u64,
    params: SensorParams,
    cameras: Vec<TruthEntry>,
}

fn cmd_simulate(a: &SimulateArgs) -> CliResult {
    if a.cameras == 0 {
        return Err(CliError::Input("--cameras must be >= 1".into()));
    }
    let spoofable = a.spoofable.unwrap_or(a.shots / 7).max(1);
    let enroll = a.shots.saturating_sub(spoofable) / 2;
    if enroll == 0 {
        return Err(CliError::Input(format!(
            "--shots {} leaves no enrollment images after {spoofable} target images",
            a.shots
        )));
    }
    let (width, height) = a.dims;
    let mut cfg = FleetConfig::new(a.cameras, width, height, a.seed);
    cfg.id_prefix = a.id_prefix.clone();
    cfg.enroll_inject = enroll;
    cfg.enroll_compare = enroll;
    // an odd remainder goes to the target set so every shot is used
    cfg.spoofable = a.shots - 2 * enroll;
    let p = &mut cfg.params;
    p.sigma_pnu = a.sigma_pnu.unwrap_or(p.sigma_pnu);
    p.sigma_fpn = a.sigma_fpn.unwrap_or(p.sigma_fpn);
    p.read_sigma = a.read_sigma.unwrap_or(p.read_sigma);
    p.shot_gain = a.shot_gain.unwrap_or(p.shot_gain);

    let fleet = simulate_fleet(&cfg)?;
    fs::create_dir_all(a.out.join("truth"))?;
    let mut entries = Vec::new();
    let mut truth = Vec::new();
    for cam in &fleet {
        let id = &cam.profile.camera_id;
        let write_set = |name: &str, planes: &[ImagePlane]| -> Result<Vec<PathBuf>, CliError> {
            let dir = PathBuf::from(id).join(name);
            fs::create_dir_all(a.out.join(&dir))?;
            planes
                .iter()
                .enumerate()
                .map(|(i, plane)| {
                    let rel = dir.join(format!("{i:03}.pgm"));
                    save_pgm(plane, a.out.join(&rel))?;
                    Ok(rel)
                })
                .collect()
        };
        entries.push(prnu_core::experiment::CameraEntry {
            camera_id: id.clone(),
            enroll_inject: write_set("enroll_inject", &cam.images.enroll_inject)?,
            enroll_compare: write_set("enroll_compare", &cam.images.enroll_compare)?,
            spoofable: write_set("spoofable", &cam.images.spoofable)?,
        });
        let rel = PathBuf::from("truth").join(format!("{id}.pnuf"));
        let k = Fingerprint::new(width, height, cam.profile.k_true.clone(), id.clone(), 1)?;
        save_fingerprint(&k, a.out.join(&rel))?;
        truth.push(TruthEntry {
            camera_id: id.clone(),
            seed: cam.profile.seed,
            width,
            height,
            k_true: rel,
        });
    }
    let manifest = DatasetManifest {
        cameras: entries,
        options: Default::default(),
        provenance: Some(serde_json::to_value(&cfg).map_err(prnu_core::Error::from)?),
    };
    write_json(&a.out.join("manifest.json"), &manifest)?;
    write_json(
        &a.out.join("ground_truth.json"),
        &GroundTruth {
            seed: a.seed,
            params: cfg.params,
            cameras: truth,
        },
    )?;
    println!(
        "{} cameras x {} shots ({}x{}) -> {}",
        a.cameras,
        a.shots,
        width,
        height,
        a.out.display()
    );
    Ok(())
}

fn run(cli: &Cli) -> CliResult {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Input("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    match &cli.command {
        Command::Enroll(a) => cmd_enroll(a),
        Command::Identify(a) => cmd_identify(a),
        Command::Spoof(a) => cmd_spoof(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
