//! Synthetic ground-truth generation, one-bit observation sampling, and
//! loaders for the MovieLens-100K and restaurant-consumer ratings files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::link::LinkModel;
use crate::observations::{Observation, ObservationSet};
use crate::rng::RngHandle;

/// How the raw low-rank product is rescaled to entrywise magnitude alpha.
/// `SignedMax` divides by the largest (signed) entry, which is the scaling
/// the experiments describe; note that when the most negative entry exceeds
/// the largest positive one in magnitude, the result has entries below
/// -alpha. `AbsMax` divides by the largest absolute entry so the max-norm
/// equals alpha exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleRule {
    SignedMax,
    AbsMax,
}

/// A generated low-rank ground truth: the matrix, its construction rank,
/// and the magnitude it was scaled to.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub m: Array2<f64>,
    pub rank: usize,
    pub alpha: f64,
}

/// Draw M = M1 * M2^T with factors uniform on [-1/2, 1/2], scaled so that
/// the largest entry equals alpha.
pub fn gen_synthetic(
    d1: usize,
    d2: usize,
    r: usize,
    alpha: f64,
    handle: &RngHandle,
) -> Result<GroundTruth> {
    gen_synthetic_with_rule(d1, d2, r, alpha, ScaleRule::SignedMax, handle)
}

pub fn gen_synthetic_with_rule(
    d1: usize,
    d2: usize,
    r: usize,
    alpha: f64,
    rule: ScaleRule,
    handle: &RngHandle,
) -> Result<GroundTruth> {
    if d1 == 0 || d2 == 0 {
        return Err(Error::dimension("matrix dimensions must be positive"));
    }
    if r == 0 || r > d1.min(d2) {
        return Err(Error::domain(format!(
            "rank {r} must lie in [1, min(d1,d2)] = [1, {}]",
            d1.min(d2)
        )));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::domain(format!(
            "alpha must be a positive finite real, got {alpha}"
        )));
    }
    let mut rng = handle.rng();
    let m1 = Array2::from_shape_fn((d1, r), |_| rng.random::<f64>() - 0.5);
    let m2 = Array2::from_shape_fn((d2, r), |_| rng.random::<f64>() - 0.5);
    let product = m1.dot(&m2.t());
    let denom = match rule {
        ScaleRule::SignedMax => product.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)),
        ScaleRule::AbsMax => product.iter().fold(0.0f64, |m, &v| m.max(v.abs())),
    };
    if !(denom > 0.0) {
        return Err(Error::numerical(format!(
            "cannot scale ground truth: largest entry {denom} is not positive"
        )));
    }
    let scale = alpha / denom;
    Ok(GroundTruth {
        m: product.mapv(|v| v * scale),
        rank: r,
        alpha,
    })
}

/// Sample a one-bit observation set: each cell enters the support
/// independently with probability `ratio`, and an observed cell reads +1
/// with probability h(M_ij). Cells are visited in row-major order; the sign
/// draw happens only for included cells.
pub fn sample_observations(
    gt: &GroundTruth,
    ratio: f64,
    model: &LinkModel,
    handle: &RngHandle,
) -> Result<ObservationSet> {
    check_ratio(ratio)?;
    let (d1, d2) = gt.m.dim();
    let mut rng = handle.rng();
    let mut entries = Vec::with_capacity((ratio * (d1 * d2) as f64) as usize + 16);
    for i in 0..d1 {
        for j in 0..d2 {
            if rng.random::<f64>() < ratio {
                entries.push(draw_observation(gt, model, i, j, &mut rng));
            }
        }
    }
    ObservationSet::new(d1, d2, entries)
}

/// Like `sample_observations` but with exactly round(ratio * d1 * d2) cells,
/// drawn uniformly without replacement.
pub fn sample_observations_exact(
    gt: &GroundTruth,
    ratio: f64,
    model: &LinkModel,
    handle: &RngHandle,
) -> Result<ObservationSet> {
    check_ratio(ratio)?;
    let (d1, d2) = gt.m.dim();
    let total = d1 * d2;
    let count = ((ratio * total as f64).round() as usize).min(total);
    let mut rng = handle.rng();
    // Partial Fisher-Yates: the first `count` slots end up a uniform sample.
    let mut flat: Vec<usize> = (0..total).collect();
    for k in 0..count {
        let pick = k + rng.random_range(0..total - k);
        flat.swap(k, pick);
    }
    let mut chosen = flat[..count].to_vec();
    chosen.sort_unstable();
    let entries = chosen
        .into_iter()
        .map(|cell| draw_observation(gt, model, cell / d2, cell % d2, &mut rng))
        .collect();
    ObservationSet::new(d1, d2, entries)
}

fn draw_observation<R: Rng>(
    gt: &GroundTruth,
    model: &LinkModel,
    i: usize,
    j: usize,
    rng: &mut R,
) -> Observation {
    let y = if rng.random::<f64>() < model.value(gt.m[(i, j)]) {
        1
    } else {
        -1
    };
    Observation { i, j, y }
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::domain(format!(
            "observation ratio must lie in (0, 1], got {ratio}"
        )));
    }
    Ok(())
}

/// One raw rating record as read from a file.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingRecord {
    pub user: u32,
    pub item: u32,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// A loaded ratings file. Raw user and item ids are kept verbatim; dense
/// zero-based coordinates come from the sorted distinct id lists, so the
/// dimensions are inferred from the data.
#[derive(Debug, Clone)]
pub struct RatingsTable {
    records: Vec<RatingRecord>,
    user_ids: Vec<u32>,
    item_ids: Vec<u32>,
}

impl RatingsTable {
    pub fn new(records: Vec<RatingRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::domain("ratings table must be non-empty"));
        }
        let mut user_ids: Vec<u32> = records.iter().map(|r| r.user).collect();
        let mut item_ids: Vec<u32> = records.iter().map(|r| r.item).collect();
        user_ids.sort_unstable();
        user_ids.dedup();
        item_ids.sort_unstable();
        item_ids.dedup();
        Ok(Self {
            records,
            user_ids,
            item_ids,
        })
    }

    pub fn d1(&self) -> usize {
        self.user_ids.len()
    }

    pub fn d2(&self) -> usize {
        self.item_ids.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[RatingRecord] {
        &self.records
    }

    /// Dense row index of a raw user id.
    pub fn row_of(&self, user: u32) -> Option<usize> {
        self.user_ids.binary_search(&user).ok()
    }

    /// Dense column index of a raw item id.
    pub fn col_of(&self, item: u32) -> Option<usize> {
        self.item_ids.binary_search(&item).ok()
    }

    /// Raw user id at a dense row index.
    pub fn user_of(&self, row: usize) -> u32 {
        self.user_ids[row]
    }

    /// Raw item id at a dense column index.
    pub fn item_of(&self, col: usize) -> u32 {
        self.item_ids[col]
    }

    fn mean_rating(&self) -> f64 {
        self.records.iter().map(|r| r.rating).sum::<f64>() / self.records.len() as f64
    }
}

/// Load a MovieLens-style tab-separated ratings file: one
/// `user<TAB>item<TAB>rating<TAB>timestamp` record per line, integer
/// fields, ratings 1 to 5.
pub fn load_movielens(path: &Path) -> Result<RatingsTable> {
    let content = read_file(path)?;
    let mut records = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::data(
                path,
                format!(
                    "line {}: expected 4 tab-separated fields, found {}",
                    idx + 1,
                    fields.len()
                ),
            ));
        }
        let user = parse_field::<u32>(path, idx, fields[0], "user id")?;
        let item = parse_field::<u32>(path, idx, fields[1], "item id")?;
        let rating = parse_field::<f64>(path, idx, fields[2], "rating")?;
        if !(1.0..=5.0).contains(&rating) {
            return Err(Error::data(
                path,
                format!("line {}: rating {rating} outside 1..=5", idx + 1),
            ));
        }
        let timestamp = parse_field::<i64>(path, idx, fields[3], "timestamp")?;
        records.push(RatingRecord {
            user,
            item,
            rating,
            timestamp: Some(timestamp),
        });
    }
    if records.is_empty() {
        return Err(Error::data(path, "no rating records found"));
    }
    RatingsTable::new(records)
}

/// Load a pre-split base/test file pair. Both tables are returned as loaded;
/// use `binarize_mean_threshold_split` to place them on a shared index grid.
pub fn load_movielens_split(base: &Path, test: &Path) -> Result<(RatingsTable, RatingsTable)> {
    Ok((load_movielens(base)?, load_movielens(test)?))
}

/// Binarize against the table's own global mean: ratings strictly below the
/// mean map to -1, everything else (above or exactly equal) to +1.
pub fn binarize_mean_threshold(table: &RatingsTable) -> Result<ObservationSet> {
    let mean = table.mean_rating();
    let entries = table
        .records
        .iter()
        .map(|r| Observation {
            i: table.row_of(r.user).expect("id from own table"),
            j: table.col_of(r.item).expect("id from own table"),
            y: sign_for(r.rating, mean),
        })
        .collect();
    ObservationSet::new(table.d1(), table.d2(), entries)
}

/// Binarize a base/test pair against the mean of all ratings in both files,
/// with a dense re-index shared across the pair (so both observation sets
/// live on the same d1 x d2 grid).
pub fn binarize_mean_threshold_split(
    base: &RatingsTable,
    test: &RatingsTable,
) -> Result<(ObservationSet, ObservationSet)> {
    let mut user_ids: Vec<u32> = base.user_ids.iter().chain(&test.user_ids).copied().collect();
    let mut item_ids: Vec<u32> = base.item_ids.iter().chain(&test.item_ids).copied().collect();
    user_ids.sort_unstable();
    user_ids.dedup();
    item_ids.sort_unstable();
    item_ids.dedup();

    let total: f64 = base
        .records
        .iter()
        .chain(&test.records)
        .map(|r| r.rating)
        .sum();
    let mean = total / (base.len() + test.len()) as f64;

    let convert = |table: &RatingsTable| -> Result<ObservationSet> {
        let entries = table
            .records
            .iter()
            .map(|r| Observation {
                i: user_ids.binary_search(&r.user).expect("id from union"),
                j: item_ids.binary_search(&r.item).expect("id from union"),
                y: sign_for(r.rating, mean),
            })
            .collect();
        ObservationSet::new(user_ids.len(), item_ids.len(), entries)
    };
    Ok((convert(base)?, convert(test)?))
}

fn sign_for(rating: f64, mean: f64) -> i8 {
    if rating < mean {
        -1
    } else {
        1
    }
}

/// Load a restaurant-consumer ratings CSV: a header row naming at least
/// `userID`, `placeID`, and `rating` columns, ratings in {0, 1, 2}. User
/// ids may carry a leading `U` (as in the published file); it is stripped.
pub fn load_rc(path: &Path) -> Result<RatingsTable> {
    let content = read_file(path)?;
    let mut lines = content.lines().enumerate();
    let (_, header) = lines
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| Error::data(path, "empty ratings file"))?;
    let columns: Vec<String> = header
        .split(',')
        .map(|c| c.trim().trim_start_matches('\u{feff}').to_string())
        .collect();
    let col = |name: &str| -> Result<usize> {
        columns
            .iter()
            .position(|c| c.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::data(path, format!("missing column '{name}' in header")))
    };
    let user_col = col("userID")?;
    let place_col = col("placeID")?;
    let rating_col = col("rating")?;

    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let needed = user_col.max(place_col).max(rating_col);
        if fields.len() <= needed {
            return Err(Error::data(
                path,
                format!("line {}: expected at least {} fields", idx + 1, needed + 1),
            ));
        }
        let user = parse_prefixed_id(path, idx, fields[user_col])?;
        let item = parse_prefixed_id(path, idx, fields[place_col])?;
        let rating = parse_field::<f64>(path, idx, fields[rating_col], "rating")?;
        if rating != 0.0 && rating != 1.0 && rating != 2.0 {
            return Err(Error::data(
                path,
                format!("line {}: rating {rating} outside {{0,1,2}}", idx + 1),
            ));
        }
        records.push(RatingRecord {
            user,
            item,
            rating,
            timestamp: None,
        });
    }
    if records.is_empty() {
        return Err(Error::data(path, "no rating records found"));
    }
    RatingsTable::new(records)
}

/// Binarize restaurant-consumer ratings (2 is +1, 0 or 1 is -1) and split
/// the records 8:2 into train and test with the given RNG.
pub fn binarize_rc(
    table: &RatingsTable,
    handle: &RngHandle,
) -> Result<(ObservationSet, ObservationSet)> {
    let n = table.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = handle.rng();
    order.shuffle(&mut rng);
    let n_train = (0.8 * n as f64).round() as usize;

    let convert = |slice: &[usize]| -> Result<ObservationSet> {
        let entries = slice
            .iter()
            .map(|&k| {
                let r = &table.records[k];
                Observation {
                    i: table.row_of(r.user).expect("id from own table"),
                    j: table.col_of(r.item).expect("id from own table"),
                    y: if r.rating == 2.0 { 1 } else { -1 },
                }
            })
            .collect();
        ObservationSet::new(table.d1(), table.d2(), entries)
    };
    Ok((convert(&order[..n_train])?, convert(&order[n_train..])?))
}

/// Dump a matrix as CSV (one row per line, full round-trip precision), for
/// reproducibility records of generated ground truths.
pub fn write_matrix_csv(m: &Array2<f64>, out: &mut dyn std::io::Write) -> std::io::Result<()> {
    for row in m.rows() {
        let mut line = String::new();
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            let _ = write!(line, "{v}");
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::data(path, format!("cannot read file: {e}")))
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    line_idx: usize,
    field: &str,
    what: &str,
) -> Result<T> {
    field.trim().parse::<T>().map_err(|_| {
        Error::data(
            path,
            format!("line {}: cannot parse {what} from '{field}'", line_idx + 1),
        )
    })
}

fn parse_prefixed_id(path: &Path, line_idx: usize, field: &str) -> Result<u32> {
    let t = field.trim();
    let digits = t.strip_prefix(['U', 'u']).unwrap_or(t);
    parse_field::<u32>(path, line_idx, digits, "id")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints;
    use approx::assert_abs_diff_eq;
    use std::io::Write;

    fn write_temp(name: &str, content: &str) -> std::path::PathBuf {
        let path = std::env::temp_dir().join(format!(
            "onebit-mc-{}-{name}",
            std::process::id()
        ));
        let mut f = fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn synthetic_max_entry_equals_alpha() {
        let gt = gen_synthetic(100, 100, 1, 1.0, &RngHandle::new(3)).unwrap();
        let max = gt.m.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        assert_abs_diff_eq!(max, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn synthetic_abs_max_rule_bounds_magnitude() {
        let gt =
            gen_synthetic_with_rule(60, 40, 2, 1.5, ScaleRule::AbsMax, &RngHandle::new(4))
                .unwrap();
        let max_abs = gt.m.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        assert_abs_diff_eq!(max_abs, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn synthetic_numerical_rank_at_most_r() {
        let gt = gen_synthetic(30, 25, 3, 1.0, &RngHandle::new(5)).unwrap();
        let svals = constraints::singular_values(&gt.m).unwrap();
        let numerical_rank = svals.iter().filter(|&&s| s > 1e-10).count();
        assert!(numerical_rank <= 3, "rank {numerical_rank}");
    }

    #[test]
    fn synthetic_is_deterministic_per_seed() {
        let a = gen_synthetic(20, 20, 2, 1.0, &RngHandle::new(9)).unwrap();
        let b = gen_synthetic(20, 20, 2, 1.0, &RngHandle::new(9)).unwrap();
        assert_eq!(a.m, b.m);
        let c = gen_synthetic(20, 20, 2, 1.0, &RngHandle::new(9).with_stream(1)).unwrap();
        assert_ne!(a.m, c.m);
    }

    #[test]
    fn synthetic_rejects_bad_rank() {
        assert!(gen_synthetic(10, 5, 6, 1.0, &RngHandle::new(0)).is_err());
        assert!(gen_synthetic(10, 5, 0, 1.0, &RngHandle::new(0)).is_err());
        assert!(gen_synthetic(10, 5, 1, -1.0, &RngHandle::new(0)).is_err());
    }

    #[test]
    fn sampling_balanced_at_zero_matrix() {
        let gt = GroundTruth {
            m: Array2::zeros((100, 100)),
            rank: 1,
            alpha: 1.0,
        };
        let obs =
            sample_observations(&gt, 1.0, &LinkModel::logistic(), &RngHandle::new(11)).unwrap();
        assert_eq!(obs.len(), 10_000);
        let plus = obs.entries().iter().filter(|o| o.y > 0).count() as f64;
        let frac = plus / 10_000.0;
        // 3 sigma of Binomial(1e4, 0.5).
        assert!((frac - 0.5).abs() <= 0.015, "positive fraction {frac}");
    }

    #[test]
    fn sampling_saturates_at_large_entries() {
        let gt = GroundTruth {
            m: Array2::from_elem((100, 100), 10.0),
            rank: 1,
            alpha: 10.0,
        };
        let obs =
            sample_observations(&gt, 1.0, &LinkModel::logistic(), &RngHandle::new(12)).unwrap();
        let plus = obs.entries().iter().filter(|o| o.y > 0).count() as f64;
        assert!(plus / 10_000.0 >= 0.9999, "positive fraction {}", plus / 10_000.0);
    }

    #[test]
    fn sampling_support_size_near_ratio() {
        let gt = gen_synthetic(100, 100, 1, 1.0, &RngHandle::new(13)).unwrap();
        let obs = sample_observations(
            &gt,
            0.15,
            &LinkModel::logistic(),
            &RngHandle::new(13).with_stream(1),
        )
        .unwrap();
        // 3 sigma of Binomial(1e4, 0.15) is about 107.
        let n = obs.len() as f64;
        assert!((n - 1500.0).abs() <= 107.0, "support size {n}");
    }

    #[test]
    fn exact_sampling_hits_count() {
        let gt = gen_synthetic(40, 50, 1, 1.0, &RngHandle::new(14)).unwrap();
        let obs = sample_observations_exact(
            &gt,
            0.15,
            &LinkModel::logistic(),
            &RngHandle::new(14).with_stream(1),
        )
        .unwrap();
        assert_eq!(obs.len(), 300);
        let again = sample_observations_exact(
            &gt,
            0.15,
            &LinkModel::logistic(),
            &RngHandle::new(14).with_stream(1),
        )
        .unwrap();
        assert_eq!(obs.entries(), again.entries());
    }

    #[test]
    fn sampling_unbiased_per_cell() {
        // At a handful of fixed cells, the empirical +1 frequency over many
        // seeds matches h(M_ij) within 3 sigma.
        let m = Array2::from_shape_vec((3, 3), vec![
            -2.0, -1.0, -0.3, 0.0, 0.3, 0.8, 1.5, 2.5, 0.1,
        ])
        .unwrap();
        let gt = GroundTruth {
            m,
            rank: 3,
            alpha: 2.5,
        };
        let model = LinkModel::logistic();
        let trials = 10_000;
        let cells = [(0usize, 0usize), (0, 2), (1, 1), (2, 0), (2, 2)];
        let mut plus_counts = [0u32; 5];
        for seed in 0..trials {
            let obs = sample_observations(&gt, 1.0, &model, &RngHandle::new(seed)).unwrap();
            for (c, &(i, j)) in cells.iter().enumerate() {
                let o = obs
                    .entries()
                    .iter()
                    .find(|o| o.i == i && o.j == j)
                    .unwrap();
                if o.y > 0 {
                    plus_counts[c] += 1;
                }
            }
        }
        for (c, &(i, j)) in cells.iter().enumerate() {
            let p = model.value(gt.m[(i, j)]);
            let freq = plus_counts[c] as f64 / trials as f64;
            let sigma = (p * (1.0 - p) / trials as f64).sqrt();
            assert!(
                (freq - p).abs() <= 3.0 * sigma + 1e-9,
                "cell ({i},{j}): freq {freq} vs p {p}"
            );
        }
    }

    #[test]
    fn movielens_loader_round_trip() {
        let path = write_temp(
            "ml-ok.tsv",
            "7\t100\t5\t875071561\n3\t100\t1\t875071562\n7\t42\t3\t875071563\n",
        );
        let table = load_movielens(&path).unwrap();
        assert_eq!(table.len(), 3);
        assert_eq!(table.d1(), 2);
        assert_eq!(table.d2(), 2);
        // Dense indices follow sorted raw ids, and invert correctly.
        assert_eq!(table.row_of(3), Some(0));
        assert_eq!(table.row_of(7), Some(1));
        assert_eq!(table.user_of(1), 7);
        assert_eq!(table.col_of(42), Some(0));
        assert_eq!(table.item_of(1), 100);
        fs::remove_file(path).ok();
    }

    #[test]
    fn movielens_loader_rejects_malformed_lines() {
        let path = write_temp("ml-bad.tsv", "7\t100\t5\t875071561\n3\t100\tfive\t875\n");
        let err = load_movielens(&path).unwrap_err().to_string();
        assert!(err.contains("line 2"), "error was: {err}");
        fs::remove_file(path).ok();

        let path = write_temp("ml-short.tsv", "7\t100\t5\n");
        assert!(load_movielens(&path).is_err());
        fs::remove_file(path).ok();

        let path = write_temp("ml-empty.tsv", "");
        assert!(load_movielens(&path).is_err());
        fs::remove_file(path).ok();

        let path = write_temp("ml-range.tsv", "7\t100\t9\t875071561\n");
        assert!(load_movielens(&path).is_err());
        fs::remove_file(path).ok();
    }

    #[test]
    fn mean_threshold_binarization() {
        // Ratings {5, 1} have mean 3: 5 maps to +1, 1 maps to -1.
        let path = write_temp("ml-two.tsv", "1\t1\t5\t0\n1\t2\t1\t0\n");
        let table = load_movielens(&path).unwrap();
        let obs = binarize_mean_threshold(&table).unwrap();
        assert_eq!(obs.entries()[0].y, 1);
        assert_eq!(obs.entries()[1].y, -1);
        fs::remove_file(path).ok();

        // All ratings identical: everything equals the mean, tie maps to +1.
        let path = write_temp("ml-tie.tsv", "1\t1\t4\t0\n1\t2\t4\t0\n2\t1\t4\t0\n");
        let table = load_movielens(&path).unwrap();
        let obs = binarize_mean_threshold(&table).unwrap();
        assert!(obs.entries().iter().all(|o| o.y == 1));
        fs::remove_file(path).ok();
    }

    #[test]
    fn split_binarization_uses_joint_mean_and_grid() {
        // Base mean alone would be 3 ((5+1)/2); the joint mean over base and
        // test is (5+1+2+4)/4 = 3. Test ids include a user and item absent
        // from base, so the shared grid must be the union.
        let base_path = write_temp("ml-base.tsv", "1\t10\t5\t0\n2\t20\t1\t0\n");
        let test_path = write_temp("ml-test.tsv", "3\t10\t2\t0\n1\t30\t4\t0\n");
        let (base, test) = load_movielens_split(&base_path, &test_path).unwrap();
        let (train_obs, test_obs) = binarize_mean_threshold_split(&base, &test).unwrap();
        assert_eq!(train_obs.d1(), 3);
        assert_eq!(train_obs.d2(), 3);
        assert!(train_obs.same_support(&train_obs));
        assert_eq!(test_obs.d1(), 3);
        // Joint mean 3: rating 2 -> -1, rating 4 -> +1.
        assert_eq!(test_obs.entries().len(), 2);
        let signs: Vec<i8> = test_obs.entries().iter().map(|o| o.y).collect();
        assert!(signs.contains(&-1) && signs.contains(&1));
        fs::remove_file(base_path).ok();
        fs::remove_file(test_path).ok();
    }

    #[test]
    fn rc_loader_and_binarization() {
        let path = write_temp(
            "rc-ok.csv",
            "userID,placeID,rating,food_rating\nU1001,135085,2,1\nU1001,135038,2,0\nU1002,135085,1,2\nU1003,132825,0,1\n",
        );
        let table = load_rc(&path).unwrap();
        assert_eq!(table.len(), 4);
        assert_eq!(table.d1(), 3);
        assert_eq!(table.d2(), 3);
        let signs: Vec<i8> = table
            .records()
            .iter()
            .map(|r| if r.rating == 2.0 { 1 } else { -1 })
            .collect();
        assert_eq!(signs, vec![1, 1, -1, -1]);
        fs::remove_file(path).ok();
    }

    #[test]
    fn rc_loader_rejects_out_of_range_rating() {
        let path = write_temp(
            "rc-bad.csv",
            "userID,placeID,rating\nU1001,135085,3\n",
        );
        assert!(load_rc(&path).is_err());
        fs::remove_file(path).ok();

        let path = write_temp("rc-nohdr.csv", "a,b\n1,2\n");
        assert!(load_rc(&path).is_err());
        fs::remove_file(path).ok();
    }

    #[test]
    fn rc_split_sizes_and_disjointness() {
        let mut content = String::from("userID,placeID,rating\n");
        for u in 0..10 {
            for p in 0..5 {
                content.push_str(&format!("U{},{},{}\n", 1000 + u, 100 + p, (u + p) % 3));
            }
        }
        let path = write_temp("rc-split.csv", &content);
        let table = load_rc(&path).unwrap();
        assert_eq!(table.len(), 50);
        let (train, test) = binarize_rc(&table, &RngHandle::new(21)).unwrap();
        assert_eq!(train.len(), 40);
        assert_eq!(test.len(), 10);
        // Disjoint supports covering every record.
        for t in test.entries() {
            assert!(!train
                .entries()
                .iter()
                .any(|o| o.i == t.i && o.j == t.j));
        }
        // Deterministic per seed.
        let (train2, _) = binarize_rc(&table, &RngHandle::new(21)).unwrap();
        assert_eq!(train.entries(), train2.entries());
        let (train3, _) = binarize_rc(&table, &RngHandle::new(22)).unwrap();
        assert_ne!(train.entries(), train3.entries());
        fs::remove_file(path).ok();
    }

    #[test]
    fn matrix_csv_dump_round_trips() {
        let m = Array2::from_shape_vec((2, 2), vec![1.5, -0.25, 1e-17, 3.0]).unwrap();
        let mut buf = Vec::new();
        write_matrix_csv(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let parsed: Vec<f64> = text
            .lines()
            .flat_map(|l| l.split(','))
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(parsed, vec![1.5, -0.25, 1e-17, 3.0]);
    }
}
