//! Layered experiment configuration.
//!
//! Values are resolved from three layers, lowest precedence first: built-in
//! defaults mirroring the reference experiments, an optional TOML manifest
//! (`--config`), and command-line flags. A manifest plus a handful of flag
//! overrides gives reproducible sweeps without long command lines.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use onebit_mc::{Error, LinkModel, Mechanism, ProjectionKind, ProjectionParams, Result};
use serde::Deserialize;

/// Default privacy budgets: the integer grid 1..10.
fn default_eps() -> Vec<f64> {
    (1..=10).map(f64::from).collect()
}

/// Default observation-ratio grid for the ratio sweep: 0.2 through 0.8.
fn default_ratios() -> Vec<f64> {
    (2..=8).map(|k| f64::from(k) / 10.0).collect()
}

/// Gradient perturbation runs this many fixed SPG steps unless overridden.
const DEFAULT_K_STEPS: usize = 50;
/// Gradient entries are clamped to [-C, C] before noising.
const DEFAULT_CLAMP: f64 = 0.5;

// ---------------------------------------------------------------------------
// Command-line flags shared by the sweep subcommands.
// ---------------------------------------------------------------------------

#[derive(Args, Debug, Default, Clone)]
pub struct GridArgs {
    /// TOML manifest; command-line flags override its values
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Comma-separated privacy budgets (default 1,2,...,10)
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub eps: Option<Vec<f64>>,

    /// Comma-separated explicit seeds
    #[arg(long, value_delimiter = ',', value_name = "LIST", conflicts_with = "num_seeds")]
    pub seeds: Option<Vec<u64>>,

    /// Shorthand for seeds 0..N
    #[arg(long, value_name = "N")]
    pub num_seeds: Option<u64>,

    /// Comma-separated mechanism labels: Clear, InP, ObjP, GraP, OutP
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub mechanisms: Option<Vec<String>>,

    /// Link model: logistic or gaussian
    #[arg(long, value_name = "NAME")]
    pub link: Option<String>,

    /// Gaussian link noise scale (ignored for logistic)
    #[arg(long, value_name = "SIGMA")]
    pub sigma: Option<f64>,

    /// Output CSV path (default results.csv)
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,

    /// Feasible-set projection: intersection or nuclear
    #[arg(long, value_name = "KIND")]
    pub projection: Option<String>,

    /// Fixed SPG step count K for gradient perturbation
    #[arg(long, value_name = "K")]
    pub k_steps: Option<usize>,

    /// Gradient clamp bound C for gradient perturbation
    #[arg(long, value_name = "C")]
    pub clamp: Option<f64>,

    /// Solver iteration cap (gradient perturbation always runs exactly K)
    #[arg(long, value_name = "N")]
    pub max_iters: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct SynthArgs {
    #[command(flatten)]
    pub grid: GridArgs,

    /// Ground-truth rows
    #[arg(long, value_name = "N")]
    pub d1: Option<usize>,

    /// Ground-truth columns
    #[arg(long, value_name = "N")]
    pub d2: Option<usize>,

    /// Ground-truth rank
    #[arg(long, value_name = "R")]
    pub rank: Option<usize>,

    /// Entry bound alpha (also scales the nuclear radius)
    #[arg(long, value_name = "A")]
    pub alpha: Option<f64>,

    /// Observation ratio
    #[arg(long, value_name = "RHO")]
    pub ratio: Option<f64>,

    /// Observe exactly round(ratio * d1 * d2) cells instead of Bernoulli sampling
    #[arg(long)]
    pub exact_count: bool,
}

#[derive(Args, Debug)]
pub struct RealArgs {
    #[command(flatten)]
    pub grid: GridArgs,

    /// Dataset name: ml-100k or rc
    #[arg(long, value_name = "NAME")]
    pub dataset: String,

    /// Directory holding the dataset files (default data/<dataset>)
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,

    /// Training-split file for ml-100k (default <data-dir>/u1.base)
    #[arg(long, value_name = "FILE")]
    pub base: Option<PathBuf>,

    /// Test-split file for ml-100k (default <data-dir>/u1.test)
    #[arg(long, value_name = "FILE")]
    pub test: Option<PathBuf>,

    /// Ratings CSV for rc (default <data-dir>/rating_final.csv)
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,

    /// Rank used for the nuclear radius tau = alpha * sqrt(d1 d2 r)
    #[arg(long, value_name = "R")]
    pub rank: Option<usize>,

    /// Entry bound alpha
    #[arg(long, value_name = "A")]
    pub alpha: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct SweepArgs {
    #[command(flatten)]
    pub grid: GridArgs,

    /// Comma-separated observation ratios (default 0.2,0.3,...,0.8)
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub ratios: Option<Vec<f64>>,

    /// Ground-truth rows
    #[arg(long, value_name = "N")]
    pub d1: Option<usize>,

    /// Ground-truth columns
    #[arg(long, value_name = "N")]
    pub d2: Option<usize>,

    /// Ground-truth rank
    #[arg(long, value_name = "R")]
    pub rank: Option<usize>,

    /// Entry bound alpha
    #[arg(long, value_name = "A")]
    pub alpha: Option<f64>,

    /// Observe exactly round(ratio * d1 * d2) cells instead of Bernoulli sampling
    #[arg(long)]
    pub exact_count: bool,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Result CSV produced by synth, real, or sweep-ratio
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,

    /// Directory for the aggregated per-figure files
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

// ---------------------------------------------------------------------------
// TOML manifest.
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub eps: Option<Vec<f64>>,
    pub seeds: Option<Vec<u64>>,
    pub num_seeds: Option<u64>,
    pub mechanisms: Option<Vec<String>>,
    pub ratios: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub d1: Option<usize>,
    pub d2: Option<usize>,
    pub rank: Option<usize>,
    pub alpha: Option<f64>,
    pub ratio: Option<f64>,
    pub exact_count: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub link: Option<String>,
    pub sigma: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub k_steps: Option<usize>,
    pub clamp: Option<f64>,
    pub max_iters: Option<usize>,
    pub projection: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub dir: Option<PathBuf>,
    pub base: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub rank: Option<usize>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub out: Option<PathBuf>,
}

impl FileConfig {
    /// Parse the manifest at `path`. Both a missing file and a malformed one
    /// are configuration errors: the run was asked to follow a manifest that
    /// cannot be followed.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        toml::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid config file {}: {e}", path.display())))
    }

    fn load_opt(path: Option<&PathBuf>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }
}

// ---------------------------------------------------------------------------
// Resolved plan.
// ---------------------------------------------------------------------------

/// Everything the runner needs, with defaults applied and inputs validated.
#[derive(Debug)]
pub struct Plan {
    pub dataset: DatasetPlan,
    pub mechanisms: Vec<Mechanism>,
    pub eps: Vec<f64>,
    pub seeds: Vec<u64>,
    pub model: LinkModel,
    pub link_label: &'static str,
    pub projection: ProjectionParams,
    pub k_steps: usize,
    pub clamp: f64,
    pub max_iters: Option<usize>,
    pub out: PathBuf,
}

#[derive(Debug)]
pub enum DatasetPlan {
    Synthetic {
        d1: usize,
        d2: usize,
        rank: usize,
        alpha: f64,
        ratios: Vec<f64>,
        exact_count: bool,
    },
    MovieLens {
        base: PathBuf,
        test: PathBuf,
        rank: usize,
        alpha: f64,
    },
    Restaurant {
        csv: PathBuf,
        rank: usize,
        alpha: f64,
    },
}

impl DatasetPlan {
    pub fn label(&self) -> &'static str {
        match self {
            DatasetPlan::Synthetic { .. } => "synthetic",
            DatasetPlan::MovieLens { .. } => "ml-100k",
            DatasetPlan::Restaurant { .. } => "rc",
        }
    }
}

/// Flag value if present, else manifest value, else the default.
fn resolve<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn resolve_seeds(grid: &GridArgs, file: &GridSection, default_count: u64) -> Result<Vec<u64>> {
    if file.seeds.is_some() && file.num_seeds.is_some() {
        return Err(Error::Config(
            "config file sets both grid.seeds and grid.num_seeds; pick one".into(),
        ));
    }
    let seeds = if let Some(list) = grid.seeds.clone().or_else(|| file.seeds.clone()) {
        list
    } else {
        let n = resolve(grid.num_seeds, file.num_seeds, default_count);
        (0..n).collect()
    };
    if seeds.is_empty() {
        return Err(Error::Config("seed list must be non-empty".into()));
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("seed list must contain distinct values".into()));
    }
    Ok(seeds)
}

fn resolve_eps(grid: &GridArgs, file: &GridSection) -> Result<Vec<f64>> {
    let eps = grid
        .eps
        .clone()
        .or_else(|| file.eps.clone())
        .unwrap_or_else(default_eps);
    if eps.is_empty() {
        return Err(Error::Config("epsilon grid must be non-empty".into()));
    }
    for &e in &eps {
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon values must be positive finite reals, got {e}"
            )));
        }
    }
    Ok(eps)
}

fn resolve_mechanisms(grid: &GridArgs, file: &GridSection) -> Result<Vec<Mechanism>> {
    let labels = match grid.mechanisms.clone().or_else(|| file.mechanisms.clone()) {
        None => return Ok(Mechanism::ALL.to_vec()),
        Some(l) => l,
    };
    if labels.is_empty() {
        return Err(Error::Config("mechanism list must be non-empty".into()));
    }
    let mut mechanisms = Vec::with_capacity(labels.len());
    for label in &labels {
        let m: Mechanism = label.parse()?;
        if !mechanisms.contains(&m) {
            mechanisms.push(m);
        }
    }
    Ok(mechanisms)
}

fn resolve_model(grid: &GridArgs, file: &ModelSection) -> Result<(LinkModel, &'static str)> {
    let name = grid
        .link
        .clone()
        .or_else(|| file.link.clone())
        .unwrap_or_else(|| "logistic".into());
    let sigma = resolve(grid.sigma, file.sigma, 1.0);
    match name.to_ascii_lowercase().as_str() {
        "logistic" => Ok((LinkModel::logistic(), "logistic")),
        "gaussian" => Ok((LinkModel::gaussian(sigma)?, "gaussian")),
        other => Err(Error::Config(format!(
            "unknown link model {other:?}; expected logistic or gaussian"
        ))),
    }
}

fn resolve_projection(grid: &GridArgs, file: &SolverSection) -> Result<ProjectionParams> {
    let name = grid
        .projection
        .clone()
        .or_else(|| file.projection.clone())
        .unwrap_or_else(|| "intersection".into());
    let kind = match name.to_ascii_lowercase().as_str() {
        "intersection" => ProjectionKind::Intersection,
        "nuclear" => ProjectionKind::NuclearOnly,
        other => {
            return Err(Error::Config(format!(
                "unknown projection {other:?}; expected intersection or nuclear"
            )))
        }
    };
    Ok(ProjectionParams {
        kind,
        ..ProjectionParams::default()
    })
}

fn check_ratio(ratio: f64) -> Result<f64> {
    if ratio > 0.0 && ratio <= 1.0 {
        Ok(ratio)
    } else {
        Err(Error::Config(format!(
            "observation ratio must lie in (0, 1], got {ratio}"
        )))
    }
}

fn check_alpha(alpha: f64) -> Result<f64> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(alpha)
    } else {
        Err(Error::Config(format!(
            "alpha must be a positive finite real, got {alpha}"
        )))
    }
}

fn check_dims(d1: usize, d2: usize, rank: usize) -> Result<()> {
    if d1 == 0 || d2 == 0 {
        return Err(Error::Config("matrix dimensions must be positive".into()));
    }
    if rank == 0 || rank > d1.min(d2) {
        return Err(Error::Config(format!(
            "rank {rank} must lie in [1, min(d1,d2)] = [1, {}]",
            d1.min(d2)
        )));
    }
    Ok(())
}

/// Knobs shared by every sweep, resolved from one grid/manifest pair.
struct Common {
    mechanisms: Vec<Mechanism>,
    eps: Vec<f64>,
    seeds: Vec<u64>,
    model: LinkModel,
    link_label: &'static str,
    projection: ProjectionParams,
    k_steps: usize,
    clamp: f64,
    max_iters: Option<usize>,
    out: PathBuf,
}

fn resolve_common(grid: &GridArgs, file: &FileConfig, default_seeds: u64) -> Result<Common> {
    let k_steps = resolve(grid.k_steps, file.solver.k_steps, DEFAULT_K_STEPS);
    if k_steps == 0 {
        return Err(Error::Config("k-steps must be at least 1".into()));
    }
    let clamp = resolve(grid.clamp, file.solver.clamp, DEFAULT_CLAMP);
    if !(clamp > 0.0 && clamp.is_finite()) {
        return Err(Error::Config(format!(
            "clamp must be a positive finite real, got {clamp}"
        )));
    }
    let max_iters = grid.max_iters.or(file.solver.max_iters);
    if max_iters == Some(0) {
        return Err(Error::Config("max-iters must be at least 1".into()));
    }
    let (model, link_label) = resolve_model(grid, &file.model)?;
    Ok(Common {
        mechanisms: resolve_mechanisms(grid, &file.grid)?,
        eps: resolve_eps(grid, &file.grid)?,
        seeds: resolve_seeds(grid, &file.grid, default_seeds)?,
        model,
        link_label,
        projection: resolve_projection(grid, &file.solver)?,
        k_steps,
        clamp,
        max_iters,
        out: grid
            .out
            .clone()
            .or_else(|| file.output.out.clone())
            .unwrap_or_else(|| PathBuf::from("results.csv")),
    })
}

fn plan_from(common: Common, dataset: DatasetPlan) -> Plan {
    Plan {
        dataset,
        mechanisms: common.mechanisms,
        eps: common.eps,
        seeds: common.seeds,
        model: common.model,
        link_label: common.link_label,
        projection: common.projection,
        k_steps: common.k_steps,
        clamp: common.clamp,
        max_iters: common.max_iters,
        out: common.out,
    }
}

pub fn synth_plan(args: &SynthArgs) -> Result<Plan> {
    let file = FileConfig::load_opt(args.grid.config.as_ref())?;
    let common = resolve_common(&args.grid, &file, 40)?;
    let d1 = resolve(args.d1, file.synth.d1, 100);
    let d2 = resolve(args.d2, file.synth.d2, 100);
    let rank = resolve(args.rank, file.synth.rank, 1);
    check_dims(d1, d2, rank)?;
    let alpha = check_alpha(resolve(args.alpha, file.synth.alpha, 1.0))?;
    let ratio = check_ratio(resolve(args.ratio, file.synth.ratio, 0.15))?;
    let exact_count = args.exact_count || file.synth.exact_count.unwrap_or(false);
    Ok(plan_from(
        common,
        DatasetPlan::Synthetic {
            d1,
            d2,
            rank,
            alpha,
            ratios: vec![ratio],
            exact_count,
        },
    ))
}

pub fn sweep_plan(args: &SweepArgs) -> Result<Plan> {
    let file = FileConfig::load_opt(args.grid.config.as_ref())?;
    let common = resolve_common(&args.grid, &file, 10)?;
    let d1 = resolve(args.d1, file.synth.d1, 100);
    let d2 = resolve(args.d2, file.synth.d2, 100);
    let rank = resolve(args.rank, file.synth.rank, 1);
    check_dims(d1, d2, rank)?;
    let alpha = check_alpha(resolve(args.alpha, file.synth.alpha, 1.0))?;
    let ratios = args
        .ratios
        .clone()
        .or_else(|| file.grid.ratios.clone())
        .unwrap_or_else(default_ratios);
    if ratios.is_empty() {
        return Err(Error::Config("ratio grid must be non-empty".into()));
    }
    let ratios = ratios
        .into_iter()
        .map(check_ratio)
        .collect::<Result<Vec<_>>>()?;
    let exact_count = args.exact_count || file.synth.exact_count.unwrap_or(false);
    Ok(plan_from(
        common,
        DatasetPlan::Synthetic {
            d1,
            d2,
            rank,
            alpha,
            ratios,
            exact_count,
        },
    ))
}

pub fn real_plan(args: &RealArgs) -> Result<Plan> {
    let file = FileConfig::load_opt(args.grid.config.as_ref())?;
    let common = resolve_common(&args.grid, &file, 10)?;
    let rank = resolve(args.rank, file.data.rank, 1);
    if rank == 0 {
        return Err(Error::Config("rank must be at least 1".into()));
    }
    let alpha = check_alpha(resolve(args.alpha, file.data.alpha, 1.0))?;
    let name = args.dataset.to_ascii_lowercase();
    let dir = args
        .data_dir
        .clone()
        .or_else(|| file.data.dir.clone())
        .unwrap_or_else(|| Path::new("data").join(&name));
    let dataset = match name.as_str() {
        "ml-100k" => DatasetPlan::MovieLens {
            base: resolve(args.base.clone(), file.data.base.clone(), dir.join("u1.base")),
            test: resolve(args.test.clone(), file.data.test.clone(), dir.join("u1.test")),
            rank,
            alpha,
        },
        "rc" => DatasetPlan::Restaurant {
            csv: resolve(
                args.csv.clone(),
                file.data.csv.clone(),
                dir.join("rating_final.csv"),
            ),
            rank,
            alpha,
        },
        other => {
            return Err(Error::Config(format!(
                "unknown dataset {other:?}; expected ml-100k or rc"
            )))
        }
    };
    Ok(plan_from(common, dataset))
}
