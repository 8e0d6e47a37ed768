//! Grid execution and result aggregation.
//!
//! A sweep is a grid of cells (mechanism, epsilon, ratio, seed). Cells run in
//! a work pool; every cell derives its randomness from its own seed and a
//! stream offset, so results are identical no matter how the pool schedules
//! them. Rows are buffered, sorted, and written once at the end.

use std::path::{Path, PathBuf};
use std::time::Instant;

use onebit_mc::data::{
    binarize_mean_threshold_split, binarize_rc, gen_synthetic, load_movielens_split, load_rc,
    sample_observations, sample_observations_exact,
};
use onebit_mc::mechanisms::{declared_budget, run_mechanism};
use onebit_mc::metrics::{are, sign_accuracy};
use onebit_mc::{
    ConstraintSet, Error, Mechanism, ObservationSet, PrivacySpec, RatingsTable, Result, RngHandle,
    RunConfig,
};
use rayon::prelude::*;

use crate::config::{DatasetPlan, Plan};

/// Column order of the result CSV.
pub const CSV_HEADER: [&str; 9] = [
    "dataset", "mechanism", "link", "epsilon", "ratio", "seed", "metric", "value", "wall_ms",
];

/// One measurement: a single metric value for one (mechanism, epsilon,
/// ratio, seed) cell.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub dataset: &'static str,
    pub mechanism: Mechanism,
    pub link: &'static str,
    pub epsilon: f64,
    pub ratio: f64,
    pub seed: u64,
    pub metric: &'static str,
    pub value: f64,
    pub wall_ms: u64,
}

/// Data made available to every cell. Synthetic ground truth is regenerated
/// per cell from the cell's seed; fixed-split real data is loaded once and
/// shared; the restaurant table is split per seed.
enum DataSource {
    Synthetic {
        d1: usize,
        d2: usize,
        rank: usize,
        alpha: f64,
        exact_count: bool,
    },
    FixedSplit {
        train: ObservationSet,
        test: ObservationSet,
        rank: usize,
        alpha: f64,
    },
    SeededSplit {
        table: RatingsTable,
        rank: usize,
        alpha: f64,
    },
}

struct Cell {
    mechanism: Mechanism,
    epsilon: f64,
    ratio: f64,
    seed: u64,
    /// Flat grid index; offsets the noise RNG stream so no two cells share one.
    flat: u64,
}

/// Streams 0 and 1 of each seed are reserved for data generation; noise
/// streams start here.
const NOISE_STREAM_BASE: u64 = 2;

pub fn execute(plan: &Plan) -> Result<Vec<ResultRow>> {
    let (source, ratios) = prepare_source(plan)?;

    let mut cells = Vec::new();
    let mut flat = 0u64;
    for &mechanism in &plan.mechanisms {
        for &epsilon in &plan.eps {
            for &ratio in &ratios {
                for &seed in &plan.seeds {
                    cells.push(Cell {
                        mechanism,
                        epsilon,
                        ratio,
                        seed,
                        flat,
                    });
                    flat += 1;
                }
            }
        }
    }

    let mut rows = cells
        .par_iter()
        .map(|cell| run_cell(plan, &source, cell))
        .collect::<Result<Vec<ResultRow>>>()?;

    rows.sort_unstable_by(|a, b| {
        let ka = (mechanism_order(a.mechanism), a.epsilon, a.ratio, a.seed);
        let kb = (mechanism_order(b.mechanism), b.epsilon, b.ratio, b.seed);
        ka.0.cmp(&kb.0)
            .then(ka.1.total_cmp(&kb.1))
            .then(ka.2.total_cmp(&kb.2))
            .then(ka.3.cmp(&kb.3))
    });
    Ok(rows)
}

/// Load whatever the dataset plan needs up front and fix the ratio grid.
/// Real datasets carry their observed training density in the ratio column.
fn prepare_source(plan: &Plan) -> Result<(DataSource, Vec<f64>)> {
    match &plan.dataset {
        DatasetPlan::Synthetic {
            d1,
            d2,
            rank,
            alpha,
            ratios,
            exact_count,
        } => Ok((
            DataSource::Synthetic {
                d1: *d1,
                d2: *d2,
                rank: *rank,
                alpha: *alpha,
                exact_count: *exact_count,
            },
            ratios.clone(),
        )),
        DatasetPlan::MovieLens {
            base,
            test,
            rank,
            alpha,
        } => {
            let (base_table, test_table) = load_movielens_split(base, test)?;
            let (train, test) = binarize_mean_threshold_split(&base_table, &test_table)?;
            let density = train.len() as f64 / (train.d1() * train.d2()) as f64;
            log::info!(
                "ml-100k: {} train / {} test ratings on a {}x{} grid",
                train.len(),
                test.len(),
                train.d1(),
                train.d2()
            );
            Ok((
                DataSource::FixedSplit {
                    train,
                    test,
                    rank: *rank,
                    alpha: *alpha,
                },
                vec![density],
            ))
        }
        DatasetPlan::Restaurant { csv, rank, alpha } => {
            let table = load_rc(csv)?;
            // The 8:2 split has a deterministic size, so the density is the
            // same for every seed even though membership varies.
            let n_train = (0.8 * table.len() as f64).round() as usize;
            let density = n_train as f64 / (table.d1() * table.d2()) as f64;
            log::info!(
                "rc: {} ratings on a {}x{} grid, {} per training split",
                table.len(),
                table.d1(),
                table.d2(),
                n_train
            );
            Ok((
                DataSource::SeededSplit {
                    table: table.clone(),
                    rank: *rank,
                    alpha: *alpha,
                },
                vec![density],
            ))
        }
    }
}

fn mechanism_order(m: Mechanism) -> usize {
    Mechanism::ALL
        .iter()
        .position(|&other| other == m)
        .expect("ALL lists every mechanism")
}

fn spec_for(mechanism: Mechanism, epsilon: f64, k_steps: usize, clamp: f64) -> PrivacySpec {
    match mechanism {
        Mechanism::Clear => PrivacySpec::clear(),
        Mechanism::InputP => PrivacySpec::input(epsilon),
        Mechanism::ObjectiveP => PrivacySpec::objective(epsilon),
        Mechanism::GradientP => PrivacySpec::gradient(epsilon, k_steps, clamp),
        Mechanism::OutputP => PrivacySpec::output(epsilon),
    }
}

fn run_cell(plan: &Plan, source: &DataSource, cell: &Cell) -> Result<ResultRow> {
    // Stream 0 drives ground truth or split membership, stream 1 drives
    // synthetic observation sampling, and the cell's own stream drives
    // mechanism noise. Observations therefore depend only on the seed, never
    // on which grid cell is looking at them.
    let data_handle = RngHandle::new(cell.seed);
    let noise_handle = RngHandle::new(cell.seed).with_stream(NOISE_STREAM_BASE + cell.flat);

    enum CellData {
        Synth {
            truth: onebit_mc::GroundTruth,
            obs: ObservationSet,
        },
        Split {
            train: ObservationSet,
            test: ObservationSet,
        },
    }

    let (data, rank, alpha) = match source {
        DataSource::Synthetic {
            d1,
            d2,
            rank,
            alpha,
            exact_count,
        } => {
            let truth = gen_synthetic(*d1, *d2, *rank, *alpha, &data_handle)?;
            let obs_handle = RngHandle::new(cell.seed).with_stream(1);
            let obs = if *exact_count {
                sample_observations_exact(&truth, cell.ratio, &plan.model, &obs_handle)?
            } else {
                sample_observations(&truth, cell.ratio, &plan.model, &obs_handle)?
            };
            (CellData::Synth { truth, obs }, *rank, *alpha)
        }
        DataSource::FixedSplit {
            train,
            test,
            rank,
            alpha,
        } => (
            CellData::Split {
                train: train.clone(),
                test: test.clone(),
            },
            *rank,
            *alpha,
        ),
        DataSource::SeededSplit { table, rank, alpha } => {
            let (train, test) = binarize_rc(table, &data_handle)?;
            (CellData::Split { train, test }, *rank, *alpha)
        }
    };

    let (obs, d1, d2) = match &data {
        CellData::Synth { obs, .. } => (obs, obs.d1(), obs.d2()),
        CellData::Split { train, .. } => (train, train.d1(), train.d2()),
    };

    let spec = spec_for(cell.mechanism, cell.epsilon, plan.k_steps, plan.clamp);
    let constraints = ConstraintSet::with_default_radius(alpha, d1, d2, rank)?;
    let mut cfg = RunConfig::for_mechanism(spec, plan.model, constraints, noise_handle);
    cfg.projection = plan.projection.clone();
    if let Some(n) = plan.max_iters {
        // Gradient perturbation ignores this: its step count is the privacy
        // parameter K and the mechanism pins the solver to it.
        cfg.solver.max_iters = n;
    }

    let budget = declared_budget(&cfg.privacy)?;
    let started = Instant::now();
    let solved = run_mechanism(obs, &cfg)?;
    let (metric, value) = match &data {
        CellData::Synth { truth, .. } => ("are", are(&solved.solution, &truth.m)?),
        CellData::Split { test, .. } => ("acc", sign_accuracy(&solved.solution, test)?),
    };
    let wall_ms = started.elapsed().as_millis() as u64;

    log::info!(
        "cell {} eps={} ratio={} seed={}: budget={}{} iters={} {}={:.6} wall_ms={}",
        cell.mechanism,
        cell.epsilon,
        cell.ratio,
        cell.seed,
        budget.total,
        if budget.empty_warning { " (empty composition)" } else { "" },
        solved.iterations_used,
        metric,
        value,
        wall_ms
    );

    Ok(ResultRow {
        dataset: plan.dataset.label(),
        mechanism: cell.mechanism,
        link: plan.link_label,
        epsilon: cell.epsilon,
        ratio: cell.ratio,
        seed: cell.seed,
        metric,
        value,
        wall_ms,
    })
}

// ---------------------------------------------------------------------------
// CSV output.
// ---------------------------------------------------------------------------

pub fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| data_error(path, format!("cannot open for writing: {e}")))?;
    writer
        .write_record(CSV_HEADER)
        .map_err(|e| data_error(path, e.to_string()))?;
    for row in rows {
        writer
            .write_record([
                row.dataset.to_string(),
                row.mechanism.to_string(),
                row.link.to_string(),
                row.epsilon.to_string(),
                row.ratio.to_string(),
                row.seed.to_string(),
                row.metric.to_string(),
                row.value.to_string(),
                row.wall_ms.to_string(),
            ])
            .map_err(|e| data_error(path, e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

fn data_error(path: &Path, message: String) -> Error {
    Error::Data {
        path: path.display().to_string(),
        message,
    }
}

// ---------------------------------------------------------------------------
// Aggregation for plotting.
// ---------------------------------------------------------------------------

/// One aggregated series point: the seed-mean of a metric in one cell.
struct AggRow {
    mechanism: String,
    epsilon: f64,
    ratio: f64,
    values: Vec<f64>,
}

/// Aggregate a result CSV into per-figure files, one per (dataset, link,
/// metric), each holding mean and standard deviation over seeds for every
/// (mechanism, epsilon, ratio) cell. Returns the paths written.
pub fn plotdata(input: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut reader = csv::Reader::from_path(input)
        .map_err(|e| data_error(input, format!("cannot read: {e}")))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| data_error(input, e.to_string()))?;
        let got: Vec<&str> = headers.iter().collect();
        if got != CSV_HEADER {
            return Err(data_error(
                input,
                format!("unexpected header {got:?}, want {CSV_HEADER:?}"),
            ));
        }
    }

    // (dataset, link, metric) -> key fields -> values over seeds
    struct Parsed {
        group: (String, String, String),
        mechanism: String,
        mechanism_rank: usize,
        epsilon: f64,
        ratio: f64,
        value: f64,
    }
    let mut parsed = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| data_error(input, e.to_string()))?;
        let field = |idx: usize| -> &str { record.get(idx).unwrap_or("") };
        let number = |idx: usize| -> Result<f64> {
            field(idx).parse::<f64>().map_err(|_| {
                data_error(
                    input,
                    format!("bad numeric field {:?} in column {}", field(idx), CSV_HEADER[idx]),
                )
            })
        };
        let mechanism: Mechanism = field(1).parse()?;
        parsed.push(Parsed {
            group: (field(0).into(), field(2).into(), field(6).into()),
            mechanism: mechanism.to_string(),
            mechanism_rank: mechanism_order(mechanism),
            epsilon: number(3)?,
            ratio: number(4)?,
            value: number(7)?,
        });
    }
    if parsed.is_empty() {
        return Err(data_error(input, "no data rows to aggregate".into()));
    }

    parsed.sort_by(|a, b| {
        a.group
            .cmp(&b.group)
            .then(a.mechanism_rank.cmp(&b.mechanism_rank))
            .then(a.epsilon.total_cmp(&b.epsilon))
            .then(a.ratio.total_cmp(&b.ratio))
    });

    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut idx = 0;
    while idx < parsed.len() {
        let group = parsed[idx].group.clone();
        let mut series: Vec<AggRow> = Vec::new();
        while idx < parsed.len() && parsed[idx].group == group {
            let row = &parsed[idx];
            let same_cell = series.last().is_some_and(|s: &AggRow| {
                s.mechanism == row.mechanism && s.epsilon == row.epsilon && s.ratio == row.ratio
            });
            if same_cell {
                series.last_mut().unwrap().values.push(row.value);
            } else {
                series.push(AggRow {
                    mechanism: row.mechanism.clone(),
                    epsilon: row.epsilon,
                    ratio: row.ratio,
                    values: vec![row.value],
                });
            }
            idx += 1;
        }
        let (dataset, link, metric) = &group;
        let name = format!(
            "plot_{}_{}_{}.csv",
            sanitize(dataset),
            sanitize(link),
            sanitize(metric)
        );
        let path = out_dir.join(name);
        write_aggregate(&path, &series)?;
        written.push(path);
    }
    Ok(written)
}

fn write_aggregate(path: &Path, series: &[AggRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| data_error(path, format!("cannot open for writing: {e}")))?;
    writer
        .write_record(["mechanism", "epsilon", "ratio", "mean", "std", "seeds"])
        .map_err(|e| data_error(path, e.to_string()))?;
    for agg in series {
        let n = agg.values.len();
        let mean = agg.values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            let ss = agg
                .values
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        writer
            .write_record([
                agg.mechanism.clone(),
                agg.epsilon.to_string(),
                agg.ratio.to_string(),
                mean.to_string(),
                std.to_string(),
                n.to_string(),
            ])
            .map_err(|e| data_error(path, e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

/// Keep aggregate file names filesystem-safe no matter what labels the
/// input CSV carries.
fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '-'
            }
        })
        .collect()
}
