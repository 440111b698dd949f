use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use selene_noise::codec::{compress_image, compression_residual, QuantTable};
use selene_noise::dataset::{
    export_dataset, extract_patches, split_dataset, PatchSet, DEFAULT_PATCH_SIZE,
    DEFAULT_TRAIN_FRACTION,
};
use selene_noise::denoiser::EstimatorSpec;
use selene_noise::io::{read_raster, read_residual, write_disparity, write_raster, write_residual};
use selene_noise::matcher::{match_disparity_detailed, MatcherConfig, SubpixelMode};
use selene_noise::report::{render_report, ReportFormat};
use selene_noise::sweep::{
    build_eval_pairs, evaluate_estimators, run_noise_sweep, with_workers, PairProducts, SweepConfig,
};
use selene_noise::synth::{generate_terrain, make_shifted_pair, scale_dn, TerrainParams};
use selene_noise::{Error, Result};

#[derive(Parser)]
#[command(
    name = "selene-noise",
    version,
    about = "Compression noise in stereo disparity maps"
)]
struct Cli {
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic terrain image.
    Generate(GenerateArgs),
    /// Cut a shifted stereo pair out of one image.
    Pair(PairArgs),
    /// Compress an image with a quantization table.
    Compress(CompressArgs),
    /// Match a stereo pair along y and write the disparity map.
    Match(MatchArgs),
    /// Export a patch dataset for external residual estimators.
    Dataset(DatasetArgs),
    /// Run the brightness-scale noise sweep.
    Sweep(SweepArgs),
    /// Score residual estimators on the evaluation corpus.
    Eval(EvalArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output raster (.pgm or .dspf).
    #[arg(long)]
    out: PathBuf,
    /// Terrain parameters as JSON; flags below override it.
    #[arg(long)]
    terrain: Option<PathBuf>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mean_dn: Option<f64>,
    #[arg(long)]
    std_dn: Option<f64>,
    /// Multiply all DN values by this factor after generation.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
}

#[derive(Args)]
struct PairArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = selene_noise::synth::DEFAULT_SHIFT_PX)]
    shift: usize,
    #[arg(long)]
    left: PathBuf,
    #[arg(long)]
    right: PathBuf,
}

#[derive(Args)]
struct CompressArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Built-in table name (SF008S_A, ones) or a table file.
    #[arg(long, default_value = "SF008S_A")]
    table: String,
    /// Also write compressed minus original as a residual raster.
    #[arg(long)]
    residual: Option<PathBuf>,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long)]
    left: PathBuf,
    #[arg(long)]
    right: PathBuf,
    /// Output disparity (.dspf, mask written alongside).
    #[arg(long)]
    output: PathBuf,
    /// Matcher configuration as JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    window_half: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    search_center: Option<i64>,
    #[arg(long)]
    search_half_range: Option<usize>,
    #[arg(long)]
    min_valid_std: Option<f64>,
    /// parabola or none.
    #[arg(long)]
    subpixel: Option<String>,
    /// Report residual statistics against this constant true disparity.
    #[arg(long, allow_hyphen_values = true)]
    truth: Option<f64>,
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long)]
    out: PathBuf,
    /// Build the dataset from the evaluation corpus of this sweep config.
    #[arg(long, conflicts_with_all = ["left", "right", "residual"])]
    config: Option<PathBuf>,
    /// Left image of one rectified pair.
    #[arg(long, requires_all = ["right", "residual"])]
    left: Option<PathBuf>,
    #[arg(long)]
    right: Option<PathBuf>,
    #[arg(long)]
    residual: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    source_id: u64,
    #[arg(long, default_value_t = DEFAULT_PATCH_SIZE)]
    patch_size: usize,
    #[arg(long, default_value_t = DEFAULT_TRAIN_FRACTION)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replace the contents of a non-empty output directory.
    #[arg(long)]
    overwrite: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated report formats: csv, json, svg.
    #[arg(long, default_value = "csv", value_delimiter = ',')]
    format: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// none, lpf or import:<path>; repeatable. `{id}` in an import path is
    /// replaced by the pair id. Overrides the estimators in the config.
    #[arg(long)]
    estimator: Vec<String>,
    /// Gaussian sigma for the lpf estimator.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value = "csv", value_delimiter = ',')]
    format: Vec<String>,
    /// Write each pair's compressed disparity, true residual and images here.
    #[arg(long)]
    export_pairs: Option<PathBuf>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_formats(names: &[String]) -> Result<Vec<ReportFormat>> {
    names.iter().map(|n| n.trim().parse()).collect()
}

fn generate(a: GenerateArgs) -> Result<()> {
    let mut params: TerrainParams = match &a.terrain {
        Some(p) => read_json(p)?,
        None => TerrainParams::default(),
    };
    if let Some(v) = a.width {
        params.width = v;
    }
    if let Some(v) = a.height {
        params.height = v;
    }
    if let Some(v) = a.seed {
        params.seed = v;
    }
    if let Some(v) = a.mean_dn {
        params.target_mean_dn = v;
    }
    if let Some(v) = a.std_dn {
        params.target_std_dn = v;
    }
    let img = scale_dn(&generate_terrain(&params)?, a.scale)?;
    write_raster(&img, &a.out)
}

fn pair(a: PairArgs) -> Result<()> {
    let img = read_raster(&a.input)?;
    let pair = make_shifted_pair(&img, a.shift)?;
    write_raster(&pair.left, &a.left)?;
    write_raster(&pair.right, &a.right)
}

fn compress(a: CompressArgs) -> Result<()> {
    let table = QuantTable::resolve(&a.table)?;
    let img = read_raster(&a.input)?;
    let out = compress_image(&img, &table);
    write_raster(&out, &a.output)?;
    if let Some(path) = &a.residual {
        write_residual(&compression_residual(&img, &out)?, path)?;
    }
    Ok(())
}

fn match_pair(a: MatchArgs) -> Result<()> {
    let mut cfg: MatcherConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => MatcherConfig::default(),
    };
    if let Some(v) = a.window_half {
        cfg.window_half = v;
    }
    if let Some(v) = a.search_center {
        cfg.search_center = v;
    }
    if let Some(v) = a.search_half_range {
        cfg.search_half_range = v;
    }
    if let Some(v) = a.min_valid_std {
        cfg.min_valid_std = v;
    }
    if let Some(v) = &a.subpixel {
        cfg.subpixel = match v.as_str() {
            "parabola" => SubpixelMode::Parabola,
            "none" => SubpixelMode::None,
            _ => {
                return Err(Error::contract(format!(
                    "unknown subpixel mode {v:?} (expected parabola or none)"
                )))
            }
        };
    }
    let left = read_raster(&a.left)?;
    let right = read_raster(&a.right)?;
    let outcome = match_disparity_detailed(&left, &right, &cfg)?;
    write_disparity(&outcome.map, &a.output)?;

    let mut summary = serde_json::json!({
        "disparity": outcome.map.stats(),
        "interior": outcome.summary.interior,
        "low_texture": outcome.summary.low_texture,
        "boundary_peak": outcome.summary.boundary_peak,
        "invalid_fraction": outcome.summary.invalid_fraction(),
    });
    if let Some(t) = a.truth {
        let s = outcome.map.stats();
        summary["residual"] = serde_json::json!({
            "mean": s.mean - t,
            "std": s.std,
            "min": s.min - t,
            "max": s.max - t,
        });
    }
    println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
    Ok(())
}

fn dataset(a: DatasetArgs) -> Result<()> {
    let mut set: Option<PatchSet> = None;
    if let Some(cfg_path) = &a.config {
        let cfg = SweepConfig::from_json_file(cfg_path)?;
        for p in build_eval_pairs(&cfg)? {
            let patches =
                extract_patches(p.id, &p.left, &p.right_rectified, &p.truth, a.patch_size)?;
            match &mut set {
                Some(s) => s.merge(patches)?,
                None => set = Some(patches),
            }
        }
    } else {
        let (Some(l), Some(r), Some(res)) = (&a.left, &a.right, &a.residual) else {
            return Err(Error::contract(
                "dataset needs --config or all of --left, --right and --residual",
            ));
        };
        let left = read_raster(l)?;
        let right = read_raster(r)?;
        let residual = read_residual(res)?;
        set = Some(extract_patches(
            a.source_id,
            &left,
            &right,
            &residual,
            a.patch_size,
        )?);
    }
    let set = set.ok_or_else(|| Error::contract("no pairs to extract patches from"))?;
    let set = split_dataset(set, a.train_fraction, a.seed)?;
    let manifest = export_dataset(&set, &a.out, a.overwrite)?;
    log::info!(
        "{} patches ({} train, {} test) -> {}",
        set.len(),
        set.count(selene_noise::dataset::Split::Train),
        set.count(selene_noise::dataset::Split::Test),
        manifest.display()
    );
    Ok(())
}

fn write_reports(
    report: &selene_noise::report::EvalReport,
    formats: &[ReportFormat],
    out: &Path,
) -> Result<()> {
    for &f in formats {
        for path in render_report(report, f, out)? {
            log::info!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let formats = parse_formats(&a.format)?;
    let cfg = SweepConfig::from_json_file(&a.config)?;
    let report = run_noise_sweep(&cfg)?;
    write_reports(&report, &formats, &a.out)
}

fn export_pairs(pairs: &[PairProducts], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for p in pairs {
        let id = p.id;
        write_raster(&p.left, &dir.join(format!("left_{id}.dspf")))?;
        write_raster(&p.right_rectified, &dir.join(format!("right_{id}.dspf")))?;
        write_disparity(
            &p.compressed_disparity,
            &dir.join(format!("disparity_{id}.dspf")),
        )?;
        write_residual(&p.truth, &dir.join(format!("truth_{id}.dspf")))?;
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let formats = parse_formats(&a.format)?;
    let mut cfg = SweepConfig::from_json_file(&a.config)?;
    if !a.estimator.is_empty() {
        cfg.estimators = a
            .estimator
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<EstimatorSpec>>>()?;
    }
    if let Some(s) = a.sigma {
        cfg.sigma = s;
    }
    if cfg.estimators.is_empty() {
        return Err(Error::contract("at least one estimator is required"));
    }
    let pairs = build_eval_pairs(&cfg)?;
    if let Some(dir) = &a.export_pairs {
        export_pairs(&pairs, dir)?;
    }
    let report = evaluate_estimators(&cfg, &pairs)?;
    write_reports(&report, &formats, &a.out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Pair(a) => pair(a),
        Command::Compress(a) => compress(a),
        Command::Match(a) => match_pair(a),
        Command::Dataset(a) => dataset(a),
        Command::Sweep(a) => sweep(a),
        Command::Eval(a) => eval(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();

    let result = match cli.workers {
        Some(n) => with_workers(n, || run(cli)).and_then(|r| r),
        None => run(cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("selene-noise: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
