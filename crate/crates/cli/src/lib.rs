//! The `interseg` command line: batch pipeline runs, single transforms and
//! refinements, click simulation, metrics, evaluation harnesses and the
//! HTTP service.

pub mod config;

use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use interseg_core::eval::{bench_csv, benchmark_encodings, default_sweep, mean_dice_by_cell, robot_eval};
use interseg_core::interaction::{simulate_margin_points, MarginPointConfig};
use interseg_core::io::{encode_mask_png, read_grid, read_mask, write_grid, write_mask, Dtype};
use interseg_core::metrics::score;
use interseg_core::pipeline::{refine_step, run_pipeline, stage1, PipelineParams, PipelineReport, Provider, Timing};
use interseg_core::provider::{load_probability, ProviderKind};
use interseg_core::seeds::{parse_seeds, seeds_to_json};
use interseg_core::transforms::{Encoding, DEFAULT_GAUSSIAN_SIGMA, DEFAULT_THRESHOLD};
use interseg_core::{BinaryMask, Connectivity, Error, GridIndex, Label, Seed, SeedSet};

use config::FileConfig;

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "interseg", version, about = "Interactive segmentation with geodesic click encodings and graph cuts")]
pub struct Cli {
    /// JSON config with optional `pipeline`, `margin_points`, `corpus` and `robot` sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Stage-1 segmentation from margin points, then optional refinement.
    Pipeline(PipelineCmd),
    /// Compute one interaction encoding as an SGRID cue map.
    Encode(EncodeCmd),
    /// Stage 1 plus one refinement with the given clicks.
    Refine(RefineCmd),
    /// Simulate interior margin points from a ground-truth mask.
    SimulateClicks(SimulateCmd),
    /// Dice and ASSD of a predicted mask.
    Metrics(MetricsCmd),
    /// Encoding-method sweep over a corpus, as CSV.
    Bench(BenchCmd),
    /// Robot-user refinement rounds over a corpus, as JSON.
    RobotEval(RobotEvalCmd),
    /// Run the HTTP session service.
    Serve(ServeCmd),
}

/// Overrides for the `pipeline` config section.
#[derive(Args, Debug, Default)]
pub struct PipelineFlags {
    /// Working resolution, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub working_dims: Option<Vec<usize>>,
    #[arg(long)]
    pub bbox_margin: Option<usize>,
    /// CRF pairwise weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// CRF intensity scale.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Stage-1 cue: egd, geodesic[:T], euclidean[:T] or gaussian[:SIGMA].
    #[arg(long)]
    pub encoding: Option<Encoding>,
    /// face or full.
    #[arg(long, value_parser = parse_connectivity)]
    pub connectivity: Option<Connectivity>,
    #[arg(long)]
    pub d_missing: Option<f64>,
    /// Run the CRF on the initial probabilities without click fusion.
    #[arg(long)]
    pub no_fusion: bool,
}

impl PipelineFlags {
    fn apply(&self, mut p: PipelineParams) -> PipelineParams {
        if let Some(d) = &self.working_dims {
            p.working_dims = Some(d.clone());
        }
        if let Some(m) = self.bbox_margin {
            p.bbox_margin = Some(m);
        }
        if let Some(l) = self.lambda {
            p.crf.lambda = l;
        }
        if let Some(s) = self.sigma {
            p.crf.sigma = s;
        }
        if let Some(e) = self.encoding {
            p.encoding = e;
        }
        if let Some(c) = self.connectivity {
            p.connectivity = c;
        }
        if let Some(d) = self.d_missing {
            p.d_missing = d;
        }
        if self.no_fusion {
            p.fusion = false;
        }
        p
    }
}

fn parse_connectivity(s: &str) -> std::result::Result<Connectivity, String> {
    match s {
        "face" => Ok(Connectivity::Face),
        "full" => Ok(Connectivity::Full),
        _ => Err(format!("expected face or full, got {s:?}")),
    }
}

#[derive(Args, Debug)]
pub struct PipelineCmd {
    /// Image as SGRID, PNG or PGM.
    #[arg(long)]
    pub image: PathBuf,
    /// Margin points as seeds JSON; simulated from `--gt` when absent.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Initial probabilities: baseline or file:PATH.
    #[arg(long = "prob", alias = "provider", default_value = "baseline")]
    pub prob: ProviderKind,
    /// Refinement clicks as seeds JSON, applied as one round.
    #[arg(long)]
    pub clicks: Option<PathBuf>,
    /// Ground-truth mask for scoring and the robot user.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Let the robot user refine against `--gt`.
    #[arg(long)]
    pub robot: bool,
    #[arg(long)]
    pub robot_rounds: Option<usize>,
    #[arg(long)]
    pub robot_clicks: Option<usize>,
    #[arg(long)]
    pub robot_seed: Option<u64>,
    /// Output mask (SGRID).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the mask as PNG.
    #[arg(long)]
    pub png: Option<PathBuf>,
    /// Axial slice for the PNG of a volume; middle slice by default.
    #[arg(long)]
    pub slice: Option<usize>,
    /// Report JSON path; printed to stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub params: PipelineFlags,
}

#[derive(Args, Debug)]
pub struct EncodeCmd {
    #[arg(long)]
    pub image: PathBuf,
    /// Seeds JSON; every listed cell is a source regardless of label.
    #[arg(long)]
    pub seeds: PathBuf,
    /// egd, geodesic, euclidean or gaussian.
    #[arg(long, default_value = "egd")]
    pub method: String,
    /// Truncation threshold for geodesic and euclidean.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Gaussian width in cells.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, value_parser = parse_connectivity, default_value = "face")]
    pub connectivity: Connectivity,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RefineCmd {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long = "prob", default_value = "baseline")]
    pub prob: ProviderKind,
    /// Margin points as seeds JSON.
    #[arg(long)]
    pub seeds: PathBuf,
    /// Refinement clicks as seeds JSON.
    #[arg(long)]
    pub clicks: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub params: PipelineFlags,
}

#[derive(Args, Debug)]
pub struct SimulateCmd {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seeds JSON path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MetricsCmd {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Physical spacing, comma separated; taken from the ground truth when absent.
    #[arg(long, value_delimiter = ',')]
    pub spacing: Option<Vec<f64>>,
}

/// Overrides for the `corpus` config section.
#[derive(Args, Debug)]
pub struct CorpusFlags {
    /// Directory of `<id>.image.sgrid` / `<id>.gt.sgrid` pairs.
    #[arg(long)]
    pub corpus_dir: Option<PathBuf>,
    /// Synthetic corpus size.
    #[arg(long)]
    pub count: Option<usize>,
    /// Synthetic corpus seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Synthetic corpus rank, 2 or 3.
    #[arg(long)]
    pub rank: Option<usize>,
}

impl CorpusFlags {
    fn apply(&self, mut c: config::CorpusConfig) -> config::CorpusConfig {
        if let Some(d) = &self.corpus_dir {
            c.dir = Some(d.clone());
        }
        if let Some(n) = self.count {
            c.count = n;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(r) = self.rank {
            c.rank = r;
        }
        c
    }
}

#[derive(Args, Debug)]
pub struct BenchCmd {
    #[command(flatten)]
    pub corpus: CorpusFlags,
    /// CSV path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub params: PipelineFlags,
}

#[derive(Args, Debug)]
pub struct RobotEvalCmd {
    #[command(flatten)]
    pub corpus: CorpusFlags,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub clicks: Option<usize>,
    /// Summary JSON path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub params: PipelineFlags,
}

#[derive(Args, Debug)]
pub struct ServeCmd {
    /// Overrides INTERSEG_PORT.
    #[arg(long)]
    pub port: Option<u16>,
    /// Overrides INTERSEG_SESSION_DIR.
    #[arg(long)]
    pub session_dir: Option<PathBuf>,
    /// Overrides INTERSEG_TTL_SECS.
    #[arg(long)]
    pub ttl_secs: Option<u64>,
    #[command(flatten)]
    pub params: PipelineFlags,
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with(args: impl IntoIterator<Item = String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> CliResult {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Pipeline(c) => pipeline(c, file),
        Command::Encode(c) => encode(c),
        Command::Refine(c) => refine(c, file),
        Command::SimulateClicks(c) => simulate(c, file),
        Command::Metrics(c) => metrics(c),
        Command::Bench(c) => bench(c, file),
        Command::RobotEval(c) => robot(c, file),
        Command::Serve(c) => serve(c, file),
    }
}

fn write_out(path: Option<&Path>, text: &str) -> CliResult {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| io_err(p, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

fn read_seeds(path: &Path) -> CliResult<Vec<Seed>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_seeds(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn point_set(seeds: &[Seed]) -> SeedSet {
    SeedSet::new(seeds.iter().map(|s| GridIndex(s.coords.clone())), Label::Foreground)
}

fn resolve_provider(kind: &ProviderKind) -> CliResult<Provider> {
    Ok(match kind {
        ProviderKind::Baseline => Provider::Baseline,
        ProviderKind::File(p) => Provider::File(load_probability(p)?),
    })
}

fn margin_config(file: &FileConfig, rank: usize) -> MarginPointConfig {
    file.margin_points.clone().unwrap_or_else(|| MarginPointConfig::for_rank(rank))
}

#[derive(Serialize)]
struct PipelineJson<'a> {
    margin_points: Vec<Vec<usize>>,
    clicks: &'a [Seed],
    #[serde(flatten)]
    report: &'a PipelineReport,
}

fn pipeline(c: PipelineCmd, file: FileConfig) -> CliResult {
    let params = c.params.apply(file.pipeline.clone());
    let image = read_grid(&c.image)?;
    let gt = c.gt.as_ref().map(read_mask).transpose()?.map(|(m, _)| m);
    let margin = match (&c.points, &gt) {
        (Some(p), _) => point_set(&read_seeds(p)?),
        (None, Some(g)) => simulate_margin_points(g, &margin_config(&file, g.shape().rank()))?.seeds,
        (None, None) => return Err(CliError::Validation("--points or --gt is required".into())),
    };
    let clicks = c.clicks.as_deref().map(read_seeds).transpose()?.unwrap_or_default();
    let robot = if c.robot {
        if gt.is_none() {
            return Err(CliError::Validation("--robot needs --gt".into()));
        }
        let mut r = file.robot;
        r.rounds = c.robot_rounds.unwrap_or(r.rounds);
        r.clicks_per_round = c.robot_clicks.unwrap_or(r.clicks_per_round);
        r.rng_seed = c.robot_seed.unwrap_or(r.rng_seed);
        Some(r)
    } else {
        None
    };
    let provider = resolve_provider(&c.prob)?;
    let out = run_pipeline(&image, &margin, &provider, &params, gt.as_ref(), &clicks, robot)?;
    write_mask(&c.out, &out.mask, image.spacing())?;
    if let Some(p) = &c.png {
        write_png(p, &out.mask, c.slice)?;
    }
    let report = PipelineJson {
        margin_points: margin.points().iter().map(|p| p.0.clone()).collect(),
        clicks: &out.clicks,
        report: &out.report,
    };
    write_out(c.report.as_deref(), &to_json(&report))
}

fn write_png(path: &Path, mask: &BinaryMask, slice: Option<usize>) -> CliResult {
    let slice = match mask.shape().rank() {
        3 => Some(slice.unwrap_or(mask.dims()[0] / 2)),
        _ => None,
    };
    let bytes = encode_mask_png(mask, slice)?;
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn encode(c: EncodeCmd) -> CliResult {
    let enc = match c.method.as_str() {
        "egd" => Encoding::Egd,
        "geodesic" => Encoding::Geodesic {
            threshold: c.threshold.unwrap_or(DEFAULT_THRESHOLD),
        },
        "euclidean" => Encoding::Euclidean {
            threshold: c.threshold.unwrap_or(DEFAULT_THRESHOLD),
        },
        "gaussian" => Encoding::Gaussian {
            sigma: c.sigma.unwrap_or(DEFAULT_GAUSSIAN_SIGMA),
        },
        m => {
            return Err(CliError::Validation(format!(
                "unknown method {m:?}; expected egd, geodesic, euclidean or gaussian"
            )))
        }
    };
    let image = read_grid(&c.image)?;
    let seeds = point_set(&read_seeds(&c.seeds)?);
    let cue = enc.encode(&image, &seeds, c.connectivity)?;
    write_grid(&c.out, cue.grid(), Dtype::F32)?;
    Ok(())
}

#[derive(Serialize)]
struct RefineJson {
    bbox: interseg_core::BoundingBox,
    ignored_clicks: usize,
    energy: Option<f64>,
    timings: Vec<Timing>,
}

fn refine(c: RefineCmd, file: FileConfig) -> CliResult {
    let params = c.params.apply(file.pipeline);
    let image = read_grid(&c.image)?;
    let margin = point_set(&read_seeds(&c.seeds)?);
    let clicks = read_seeds(&c.clicks)?;
    let provider = resolve_provider(&c.prob)?;
    let (st, mut timings) = stage1(&image, &margin, &provider, &params)?;
    let out = refine_step(&st, &clicks, &params)?;
    write_mask(&c.out, &out.mask, image.spacing())?;
    timings.extend(out.timings);
    let report = RefineJson {
        bbox: st.frame.bbox.clone(),
        ignored_clicks: out.ignored_clicks,
        energy: out.labeling.map(|l| l.energy),
        timings,
    };
    write_out(None, &to_json(&report))
}

fn simulate(c: SimulateCmd, file: FileConfig) -> CliResult {
    let (gt, _) = read_mask(&c.gt)?;
    let mut cfg = margin_config(&file, gt.shape().rank());
    if let Some(s) = c.seed {
        cfg.rng_seed = s;
    }
    let sim = simulate_margin_points(&gt, &cfg)?;
    write_out(c.out.as_deref(), &seeds_to_json(&sim.seeds.to_seeds()))
}

fn metrics(c: MetricsCmd) -> CliResult {
    let (pred, _) = read_mask(&c.pred)?;
    let (gt, gt_spacing) = read_mask(&c.gt)?;
    let spacing = c.spacing.unwrap_or(gt_spacing);
    if spacing.len() != gt.shape().rank() {
        return Err(CliError::Validation(format!(
            "spacing has {} entries for a rank-{} mask",
            spacing.len(),
            gt.shape().rank()
        )));
    }
    let s = score(&pred, &gt, &spacing)?;
    write_out(None, &to_json(&s))
}

fn bench(c: BenchCmd, file: FileConfig) -> CliResult {
    let params = c.params.apply(file.pipeline);
    let corpus = c.corpus.apply(file.corpus).build()?;
    let rows = benchmark_encodings(&corpus, &default_sweep(), &params)?;
    for (method, param, mean) in mean_dice_by_cell(&rows) {
        let p = param.map(|v| v.to_string()).unwrap_or_default();
        eprintln!("{method:>10} {p:>4}  mean dice {mean:.4}");
    }
    write_out(c.out.as_deref(), bench_csv(&rows)?.trim_end())
}

fn robot(c: RobotEvalCmd, file: FileConfig) -> CliResult {
    let params = c.params.apply(file.pipeline);
    let corpus = c.corpus.apply(file.corpus).build()?;
    let rounds = c.rounds.unwrap_or(file.robot.rounds);
    let clicks = c.clicks.unwrap_or(file.robot.clicks_per_round);
    let summary = robot_eval(&corpus, rounds, clicks, &params)?;
    write_out(c.out.as_deref(), &to_json(&summary))
}

fn serve(c: ServeCmd, file: FileConfig) -> CliResult {
    let mut config = interseg_service::Config::from_env().map_err(CliError::Validation)?;
    if let Some(p) = c.port {
        config.port = p;
    }
    if let Some(d) = c.session_dir {
        config.session_dir = Some(d);
    }
    if let Some(t) = c.ttl_secs {
        config.ttl = Duration::from_secs(t);
    }
    config.params = c.params.apply(file.pipeline);
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
    rt.block_on(interseg_service::serve(config))
        .map_err(|e| CliError::Io(e.to_string()))
}
