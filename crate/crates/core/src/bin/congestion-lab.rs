use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};

use congestion_lab::clock;
use congestion_lab::config::PipelineConfig;
use congestion_lab::error::{Error, Result};
use congestion_lab::evaluation::{evaluate_points, read_points, write_points, write_report, PointPrediction};
use congestion_lab::experiment_runner::{
    self as runner, regime_quadrants, rank_combinations, result_rows, run_grid, weekday_weekend_suite, write_manifest,
    write_predictions, write_results, write_timings, RunManifest, RunResult,
};
use congestion_lab::forecasters::{fit_model, read_model_file, write_model_file, ModelFile, ModelKind, NodeTraining};
use congestion_lab::frame_extraction::{extract_directory, read_extraction, write_extraction};
use congestion_lab::io::{atomic_write, atomic_write_with, read_rgb_png, sha256_file};
use congestion_lab::report;
use congestion_lab::road_network::{read_registry_file, validate, RoadNetwork};
use congestion_lab::series_store::{
    assemble_matrix, read_matrix_file, resample, resample_with, split_days, window, write_matrix_file, SampleGrid,
};
use congestion_lab::synth_oracle::{render_frames, simulate_process, SyntheticScene};

/// Traffic-layer congestion extraction and forecasting benchmarks.
#[derive(Parser, Debug)]
#[command(name = "congestion-lab", version, about)]
struct Cli {
    /// Pipeline configuration file (TOML). Flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Worker threads (default: config, then CONGESTION_LAB_WORKERS, then all CPUs).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Reduce frame images to per-segment level histograms.
    Extract(ExtractArgs),
    /// Build the timestamps × intersections intensity matrix.
    Assemble(AssembleArgs),
    /// Resample a matrix to a coarser interval.
    Resample(ResampleArgs),
    /// Fit one model for one intersection and save it.
    Train(TrainArgs),
    /// Predict with a saved model over the test days.
    Predict(PredictArgs),
    /// Score a predictions file (RMSE, MAE, CORR).
    Evaluate(EvaluateArgs),
    /// Run the interval × sequence × horizon × model grid.
    Grid(GridArgs),
    /// Generate a synthetic scene, ground truth and rendered frames.
    Synth(SynthArgs),
    /// Render tables and plots from a results file.
    Report(ReportArgs),
}

#[derive(Args, Debug, Default)]
struct NetworkArgs {
    /// Segment registry CSV.
    #[arg(long, value_name = "CSV")]
    registry: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    /// Directory of YYYYMMDD_HHMMSS.png frames.
    #[arg(long, value_name = "DIR")]
    frames: Option<PathBuf>,
    /// Annotation mask PNG.
    #[arg(long, value_name = "PNG")]
    mask: Option<PathBuf>,
    #[command(flatten)]
    net: NetworkArgs,
    /// Palette TOML (level1..level4, tolerance).
    #[arg(long, value_name = "TOML")]
    palette: Option<PathBuf>,
    /// Output extraction CSV.
    #[arg(long, value_name = "CSV")]
    out: PathBuf,
    /// Log and skip unreadable frames instead of failing.
    #[arg(long)]
    skip_bad: bool,
}

#[derive(Args, Debug)]
struct AssembleArgs {
    /// Extraction CSV from `extract`.
    #[arg(long, value_name = "CSV")]
    extraction: PathBuf,
    #[command(flatten)]
    net: NetworkArgs,
    /// count (pixels at levels 3-4) or value-sum (3·c3 + 4·c4).
    #[arg(long)]
    aggregation: Option<String>,
    /// Keep frame timestamps as-is instead of snapping to the 30 s grid.
    #[arg(long)]
    no_align: bool,
    /// Output matrix CSV.
    #[arg(long, value_name = "CSV")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ResampleArgs {
    /// Input matrix CSV.
    #[arg(long, value_name = "CSV")]
    matrix: Option<PathBuf>,
    /// Target interval in minutes.
    #[arg(long, value_name = "MIN")]
    interval: f64,
    /// decimate or mean.
    #[arg(long)]
    resampling: Option<String>,
    /// Output matrix CSV.
    #[arg(long, value_name = "CSV")]
    out: PathBuf,
}

#[derive(Args, Debug, Default)]
struct HyperArgs {
    /// SVR box constraint C.
    #[arg(long)]
    svr_c: Option<f64>,
    /// SVR tube half-width, in standardized units.
    #[arg(long)]
    svr_epsilon: Option<f64>,
    /// RBF bandwidth: `auto` (median heuristic) or a number.
    #[arg(long)]
    svr_sigma: Option<String>,
    /// SVR stopping tolerance on the KKT violation.
    #[arg(long)]
    svr_tolerance: Option<f64>,
    /// SVR iteration cap.
    #[arg(long)]
    svr_max_iter: Option<usize>,
    /// SVR training rows kept after uniform thinning.
    #[arg(long)]
    svr_max_train_rows: Option<usize>,
    /// ARIMA order as p,d,q.
    #[arg(long, value_name = "P,D,Q")]
    arima_order: Option<String>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_name = "CSV")]
    matrix: Option<PathBuf>,
    #[command(flatten)]
    net: NetworkArgs,
    /// HA, SVR, SVR_GRAPH or ARIMA.
    #[arg(long)]
    model: String,
    /// Intersection id.
    #[arg(long)]
    node: String,
    /// Sampling interval in minutes.
    #[arg(long, value_name = "MIN")]
    interval: f64,
    /// Sequence length in minutes.
    #[arg(long, value_name = "MIN")]
    sequence: f64,
    /// Prediction length in minutes.
    #[arg(long, value_name = "MIN")]
    horizon: f64,
    /// Split policy; the model is fit on its train days.
    #[arg(long)]
    split: Option<String>,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Output model file.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Model file from `train`.
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    #[arg(long, value_name = "CSV")]
    matrix: Option<PathBuf>,
    #[command(flatten)]
    net: NetworkArgs,
    /// Split policy; predictions cover its test days. Default: every day.
    #[arg(long)]
    split: Option<String>,
    /// Output predictions CSV (node,timestamp,truth,prediction).
    #[arg(long, value_name = "CSV")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Predictions CSV (node,timestamp,truth,prediction).
    #[arg(long, value_name = "CSV")]
    predictions: PathBuf,
    /// Output report CSV; printed to stdout when absent.
    #[arg(long, value_name = "CSV")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[arg(long, value_name = "CSV")]
    matrix: Option<PathBuf>,
    #[command(flatten)]
    net: NetworkArgs,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Sampling intervals in minutes.
    #[arg(long, value_delimiter = ',', value_name = "MIN,..")]
    intervals: Option<Vec<f64>>,
    /// Sequence lengths in minutes.
    #[arg(long, value_delimiter = ',', value_name = "MIN,..")]
    sequences: Option<Vec<f64>>,
    /// Prediction lengths in minutes.
    #[arg(long, value_delimiter = ',', value_name = "MIN,..")]
    horizons: Option<Vec<f64>>,
    /// Models to run.
    #[arg(long, value_delimiter = ',', value_name = "MODEL,..")]
    models: Option<Vec<String>>,
    /// Split policy, e.g. weekdays-only:14 or first-k-train:20.
    #[arg(long)]
    split: Option<String>,
    /// Run the four weekday/weekend quadrants instead of one split.
    #[arg(long, conflicts_with = "split")]
    quadrants: bool,
    /// Combinations listed in the ranking table.
    #[arg(long)]
    top_k: Option<usize>,
    /// Per-fit budget in seconds; 0 disables it.
    #[arg(long)]
    timeout_secs: Option<f64>,
    /// Seed recorded in fingerprints and the manifest.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Also write predictions.csv for plotting.
    #[arg(long)]
    predictions: bool,
    /// Put wall-clock durations in results.csv (makes it non-deterministic).
    #[arg(long)]
    record_durations: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Scene TOML; the bundled demo scene when absent.
    #[arg(long, value_name = "TOML")]
    scene: Option<PathBuf>,
    /// First day (YYYY-MM-DD).
    #[arg(long, default_value = "2019-11-01")]
    start: NaiveDate,
    /// Number of consecutive days.
    #[arg(long, default_value_t = 1)]
    days: u32,
    /// Frame cadence in seconds.
    #[arg(long, default_value_t = clock::BASE_CADENCE_SECS)]
    cadence_secs: u32,
    /// Overrides the scene seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Skip PNG rendering; write only inputs and ground truth.
    #[arg(long)]
    no_render: bool,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Results CSV from `grid`.
    #[arg(long, value_name = "CSV")]
    results: PathBuf,
    /// predictions.csv from `grid --predictions`, for plots.
    #[arg(long, value_name = "CSV")]
    predictions: Option<PathBuf>,
    /// Directory for report.md and plots/.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Combinations listed in the ranking table.
    #[arg(long)]
    top_k: Option<usize>,
    /// Intersections to exclude in the outlier table.
    #[arg(long, value_delimiter = ',', value_name = "NODE,..")]
    exclude: Vec<String>,
}

fn require(path: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    let p = path.ok_or_else(|| Error::MissingInput(format!("{what} path not given (flag or config)")))?;
    if !p.exists() {
        return Err(Error::MissingInput(format!("{what} {} does not exist", p.display())));
    }
    Ok(p)
}

fn apply_hyper(cfg: &mut PipelineConfig, h: &HyperArgs) {
    if let Some(v) = h.svr_c {
        cfg.svr.c = v;
    }
    if let Some(v) = h.svr_epsilon {
        cfg.svr.epsilon = v;
    }
    if let Some(v) = &h.svr_sigma {
        cfg.svr.sigma = v.clone();
    }
    if let Some(v) = h.svr_tolerance {
        cfg.svr.tolerance = v;
    }
    if h.svr_max_iter.is_some() {
        cfg.svr.max_iter = h.svr_max_iter;
    }
    if let Some(v) = h.svr_max_train_rows {
        cfg.svr.max_train_rows = v;
    }
    if let Some(v) = &h.arima_order {
        cfg.arima.order = v.clone();
    }
}

fn load_network(cfg: &PipelineConfig, args: &NetworkArgs) -> Result<RoadNetwork> {
    let registry = require(args.registry.clone().or(cfg.paths.registry.clone()), "registry")?;
    RoadNetwork::from_registry(&read_registry_file(&registry)?)
}

fn cmd_extract(cfg: &PipelineConfig, a: ExtractArgs) -> Result<u8> {
    let frames = require(a.frames.or(cfg.paths.frames.clone()), "frames directory")?;
    let mask = require(a.mask.or(cfg.paths.mask.clone()), "mask")?;
    let registry = require(a.net.registry.or(cfg.paths.registry.clone()), "registry")?;
    let palette = match a.palette.or(cfg.paths.palette.clone()) {
        Some(p) => congestion_lab::frame_extraction::TrafficPalette::load(&require(Some(p), "palette")?)?,
        None => cfg.palette()?,
    };
    let (net, mask) = RoadNetwork::load(&read_registry_file(&registry)?, &read_rgb_png(&mask)?)?;
    for issue in &validate(&net).issues {
        warn!("{issue}");
    }
    let out = extract_directory(&frames, &net, &mask, &palette)?;
    for (path, e) in &out.rejected {
        error!("rejected {}: {e}", path.display());
    }
    info!("{} frames extracted, {} rejected", out.frames.len(), out.rejected.len());
    if !out.rejected.is_empty() && !a.skip_bad {
        return Err(Error::InsufficientData(format!(
            "{} frame(s) rejected; rerun with --skip-bad to continue without them",
            out.rejected.len()
        )));
    }
    atomic_write_with(&a.out, |buf| write_extraction(buf, &out.frames))?;
    eprintln!(
        "{} records from {} frames ({} skipped) -> {}",
        out.frames.iter().map(|f| f.histograms.len()).sum::<usize>(),
        out.frames.len(),
        out.rejected.len(),
        a.out.display()
    );
    Ok(0)
}

fn cmd_assemble(cfg: &PipelineConfig, a: AssembleArgs) -> Result<u8> {
    let net = load_network(cfg, &a.net)?;
    let path = require(Some(a.extraction), "extraction")?;
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let frames = read_extraction(BufReader::new(file))?;
    let agg = match a.aggregation {
        Some(s) => s.parse()?,
        None => cfg.aggregation()?,
    };
    let mut m = assemble_matrix(&frames, &net, agg)?;
    if !a.no_align {
        m = m.align_to_cadence(clock::BASE_CADENCE_SECS)?;
    }
    let out = a
        .out
        .or(cfg.paths.matrix.clone())
        .ok_or_else(|| Error::MissingInput("output matrix path not given".into()))?;
    write_matrix_file(&out, &m)?;
    eprintln!(
        "{} rows × {} intersections ({} missing cells) -> {}",
        m.rows(),
        m.width(),
        m.missing_count(),
        out.display()
    );
    Ok(0)
}

fn cmd_resample(cfg: &PipelineConfig, a: ResampleArgs) -> Result<u8> {
    let m = read_matrix_file(&require(a.matrix.or(cfg.paths.matrix.clone()), "matrix")?)?;
    let how = match a.resampling {
        Some(s) => s.parse()?,
        None => cfg.resampling()?,
    };
    let secs = congestion_lab::series_store::minutes_to_secs(a.interval)?;
    let r = resample_with(&m, secs, how)?;
    write_matrix_file(&a.out, &r)?;
    eprintln!("{} -> {} rows -> {}", m.rows(), r.rows(), a.out.display());
    Ok(0)
}

fn cmd_train(cfg: &mut PipelineConfig, a: TrainArgs) -> Result<u8> {
    apply_hyper(cfg, &a.hyper);
    if let Some(s) = a.split {
        cfg.split = s;
    }
    let hyper = cfg.hyperparameters()?;
    let net = load_network(cfg, &a.net)?;
    let m = read_matrix_file(&require(a.matrix.or(cfg.paths.matrix.clone()), "matrix")?)?;
    let kind: ModelKind = a.model.parse()?;
    let grid = SampleGrid::from_minutes(a.interval, a.sequence, a.horizon)?;
    let split = split_days(&m, cfg.split_policy()?)?;
    let sampled = resample(&m.restrict_to_dates(&split.train_days), grid.interval_secs())?;
    let node = net.node(&a.node)?.clone();
    let col = sampled.column_index(&node)?;
    let ds = window(&sampled, &node, &grid, kind.needs_neighbor_sum(), &net)?;
    let series = NodeTraining::from_matrix(&sampled, col, &split.train_days, grid.interval_secs());
    let model = fit_model(kind, &ds, &series, &hyper, None)?;
    write_model_file(&a.out, &ModelFile { node, grid, model })?;
    eprintln!("{kind} for {} at {grid} on {} train days -> {}", a.node, split.train_days.len(), a.out.display());
    Ok(0)
}

fn cmd_predict(cfg: &PipelineConfig, a: PredictArgs) -> Result<u8> {
    let file = read_model_file(&require(Some(a.model), "model")?)?;
    let net = load_network(cfg, &a.net)?;
    let m = read_matrix_file(&require(a.matrix.or(cfg.paths.matrix.clone()), "matrix")?)?;
    let days: BTreeSet<NaiveDate> = match a.split {
        Some(s) => split_days(&m, s.parse()?)?.test_days,
        None => m.dates().into_iter().collect(),
    };
    let sampled = resample(&m.restrict_to_dates(&days), file.grid.interval_secs())?;
    let kind = file.model.kind();
    let ds = window(&sampled, &file.node, &file.grid, kind.needs_neighbor_sum(), &net)?;
    let preds = file.model.predict_all(&ds)?;
    let points: Vec<PointPrediction> = (0..ds.len())
        .map(|i| PointPrediction {
            node: file.node.to_string(),
            timestamp: clock::format_iso(&ds.target_times[i]),
            truth: ds.targets[i],
            prediction: preds[i],
        })
        .collect();
    atomic_write_with(&a.out, |buf| write_points(buf, &points))?;
    eprintln!("{} predictions -> {}", points.len(), a.out.display());
    Ok(0)
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<u8> {
    let path = require(Some(a.predictions), "predictions")?;
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let report = evaluate_points(&read_points(BufReader::new(file))?)?;
    match a.out {
        Some(out) => atomic_write_with(&out, |buf| write_report(buf, &report))?,
        None => write_report(std::io::stdout().lock(), &report)?,
    }
    Ok(0)
}

fn cmd_grid(cfg: &mut PipelineConfig, a: GridArgs) -> Result<u8> {
    apply_hyper(cfg, &a.hyper);
    if let Some(v) = a.intervals {
        cfg.grid.intervals_min = v;
    }
    if let Some(v) = a.sequences {
        cfg.grid.sequence_min = v;
    }
    if let Some(v) = a.horizons {
        cfg.grid.prediction_min = v;
    }
    if let Some(v) = a.models {
        cfg.grid.models = v;
    }
    if let Some(v) = a.split {
        cfg.split = v;
    }
    if let Some(v) = a.top_k {
        cfg.grid.top_k = v;
    }
    if let Some(v) = a.timeout_secs {
        cfg.grid.timeout_secs = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.net.registry {
        cfg.paths.registry = Some(v);
    }
    if let Some(v) = a.matrix {
        cfg.paths.matrix = Some(v);
    }
    if let Some(v) = a.out_dir {
        cfg.paths.results = Some(v);
    }
    cfg.validate()?;
    let matrix_path = require(cfg.paths.matrix.clone(), "matrix")?;
    let registry_path = require(cfg.paths.registry.clone(), "registry")?;
    let out_dir = cfg
        .paths
        .results
        .clone()
        .ok_or_else(|| Error::MissingInput("results directory not given (--out-dir or config)".into()))?;
    let net = RoadNetwork::from_registry(&read_registry_file(&registry_path)?)?;
    let m = read_matrix_file(&matrix_path)?;
    let spec = cfg.grid_spec()?;
    let mut opts = cfg.run_options()?;
    opts.keep_predictions = a.predictions;

    let (results, split_for_manifest): (Vec<RunResult>, _) = if a.quadrants {
        let combos = spec.combinations();
        let [combo] = combos.as_slice() else {
            return Err(Error::Config(format!(
                "--quadrants needs exactly one interval/sequence/horizon, got {} combinations",
                combos.len()
            )));
        };
        let mut all = Vec::new();
        let mut first_split = None;
        for q in weekday_weekend_suite(&m, &net, combo.grid()?, &spec.models, &regime_quadrants(), &opts) {
            let results = q.results?;
            if first_split.is_none() {
                first_split = Some(split_days(&m, q.policy)?);
            }
            all.extend(results);
        }
        (all, first_split.expect("four quadrants"))
    } else {
        let split = split_days(&m, cfg.split_policy()?)?;
        (run_grid(&m, &net, &spec, &split, &opts)?, split)
    };

    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let rows = result_rows(&results, a.record_durations);
    atomic_write_with(&out_dir.join("results.csv"), |buf| write_results(buf, &rows))?;
    atomic_write_with(&out_dir.join("timings.csv"), |buf| write_timings(buf, &results))?;
    if a.predictions {
        atomic_write_with(&out_dir.join("predictions.csv"), |buf| write_predictions(buf, &results))?;
    }
    let ranking = report::render_ranking(&rows, cfg.grid.top_k)?;
    atomic_write(&out_dir.join("ranking.md"), ranking.as_bytes())?;
    let manifest = RunManifest {
        spec: &spec,
        split: &split_for_manifest,
        options: &opts,
        inputs: vec![
            (matrix_path.display().to_string(), sha256_file(&matrix_path)?),
            (registry_path.display().to_string(), sha256_file(&registry_path)?),
        ],
        config: Some(cfg.canonical()),
    };
    atomic_write_with(&out_dir.join("manifest.txt"), |buf| {
        write_manifest(buf, &manifest).map_err(|e| Error::io(out_dir.join("manifest.txt"), e))
    })?;

    let failed = results.iter().filter(|r| matches!(r.outcome, runner::CellOutcome::Failed(_))).count();
    let skipped = results.iter().filter(|r| matches!(r.outcome, runner::CellOutcome::Skipped(_))).count();
    print!("{ranking}");
    if let Some(best) = rank_combinations(&results).first() {
        eprintln!("best combination: {}", best.combination);
    }
    eprintln!(
        "{} cells ({} failed, {} skipped) -> {}",
        results.len(),
        failed,
        skipped,
        out_dir.join("results.csv").display()
    );
    Ok(0)
}

fn cmd_synth(a: SynthArgs) -> Result<u8> {
    let scene = match &a.scene {
        Some(p) => SyntheticScene::load(&require(Some(p.clone()), "scene")?)?,
        None => SyntheticScene::demo(),
    };
    if a.days == 0 {
        return Err(Error::Config("--days must be at least 1".into()));
    }
    let days: Vec<NaiveDate> = a.start.iter_days().take(a.days as usize).collect();
    let seed = a.seed.unwrap_or(scene.seed);
    let process = simulate_process(&scene, &days, a.cadence_secs, seed)?;
    let inputs = scene.write_inputs(&a.out)?;
    write_matrix_file(&a.out.join("truth.csv"), &process.matrix)?;
    if !a.no_render {
        let paths = render_frames(&scene, &process.frames, &a.out.join("frames"))?;
        info!("rendered {} frames", paths.len());
    }
    eprintln!(
        "{} days × {} instants, {} segments, {} intersections, seed {seed} -> {} (registry {}, mask {})",
        days.len(),
        process.frames.len() / days.len(),
        scene.network.segments().len(),
        scene.network.intersections().count(),
        a.out.display(),
        inputs.registry.display(),
        inputs.mask.display()
    );
    Ok(0)
}

fn cmd_report(cfg: &PipelineConfig, a: ReportArgs) -> Result<u8> {
    let path = require(Some(a.results), "results")?;
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    if text.trim().is_empty() {
        println!("{}", report::NO_RESULTS);
        return Ok(0);
    }
    let rows = runner::read_results(text.as_bytes())?;
    if rows.is_empty() {
        println!("{}", report::NO_RESULTS);
        return Ok(0);
    }
    let mut md = report::render_tables(&rows)?;
    md.push_str(&report::render_ranking(&rows, a.top_k.unwrap_or(cfg.grid.top_k))?);
    if !a.exclude.is_empty() {
        let ids = a
            .exclude
            .iter()
            .map(|s| congestion_lab::road_network::IntersectionId::parse(s))
            .collect::<Result<Vec<_>>>()?;
        md.push_str(&report::render_outliers(&rows, &ids)?);
    }
    print!("{md}");
    if let Some(out) = a.out {
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        atomic_write(&out.join("report.md"), md.as_bytes())?;
        if let Some(p) = a.predictions {
            let p = require(Some(p), "predictions")?;
            let file = File::open(&p).map_err(|e| Error::io(&p, e))?;
            let preds = runner::read_predictions(BufReader::new(file))?;
            let plots = report::write_plots(&preds, &out.join("plots"))?;
            eprintln!("{} plots -> {}", plots.len(), out.join("plots").display());
        }
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    let workers = cfg.resolved_workers()?;
    if workers > 0 {
        // only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
    match cli.command {
        Command::Extract(a) => cmd_extract(&cfg, a),
        Command::Assemble(a) => cmd_assemble(&cfg, a),
        Command::Resample(a) => cmd_resample(&cfg, a),
        Command::Train(a) => cmd_train(&mut cfg, a),
        Command::Predict(a) => cmd_predict(&cfg, a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Grid(a) => cmd_grid(&mut cfg, a),
        Command::Synth(a) => cmd_synth(a),
        Command::Report(a) => cmd_report(&cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

