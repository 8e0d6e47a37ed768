use ndarray::{s, Array2};
use ndarray_linalg::{JobSvd, SVDDC};

use crate::error::{Error, Result};

/// The feasible set C = { X : ||X||_* <= tau, ||X||_inf <= alpha }.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintSet {
    tau: f64,
    alpha: f64,
}

impl ConstraintSet {
    /// `alpha` may be +infinity, which disables the entrywise bound.
    pub fn new(tau: f64, alpha: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::domain(format!("tau must be positive, got {tau}")));
        }
        if !(alpha > 0.0) {
            return Err(Error::domain(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self { tau, alpha })
    }

    /// The usual radius tau = alpha sqrt(d1 d2 r) for a rank-r problem.
    pub fn with_default_radius(alpha: f64, d1: usize, d2: usize, r: usize) -> Result<Self> {
        let tau = alpha * ((d1 * d2 * r) as f64).sqrt();
        Self::new(tau, alpha)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// How the solver realizes the projection onto C.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionKind {
    /// Dykstra's alternating projections onto both balls.
    Intersection,
    /// Only the nuclear ball, the scheme used by the classical SPG setup.
    NuclearOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionParams {
    pub kind: ProjectionKind,
    pub tol: f64,
    pub max_rounds: usize,
}

impl Default for ProjectionParams {
    fn default() -> Self {
        Self {
            kind: ProjectionKind::Intersection,
            tol: 1e-9,
            max_rounds: 100,
        }
    }
}

/// Euclidean projection of `v` onto the l1 ball of the given radius, by the
/// sort-and-threshold rule on magnitudes. Returns the input unchanged when
/// it is already inside the ball.
pub fn project_l1_ball(v: &[f64], radius: f64) -> Vec<f64> {
    assert!(radius >= 0.0, "l1 radius must be nonnegative");
    let l1: f64 = v.iter().map(|a| a.abs()).sum();
    if l1 <= radius {
        return v.to_vec();
    }
    if radius == 0.0 {
        return vec![0.0; v.len()];
    }
    let mut mags: Vec<f64> = v.iter().map(|a| a.abs()).collect();
    mags.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
    let mut prefix = 0.0;
    let mut theta = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        prefix += m;
        let t = (prefix - radius) / (k + 1) as f64;
        if m > t {
            theta = t;
        }
    }
    v.iter()
        .map(|a| a.signum() * (a.abs() - theta).max(0.0))
        .collect()
}

/// Exact Euclidean projection onto { Z : ||Z||_* <= tau }: SVD, then l1-ball
/// projection of the singular values. Returns X unchanged when feasible.
pub fn project_nuclear_ball(x: &Array2<f64>, tau: f64) -> Result<Array2<f64>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::domain(format!("tau must be positive, got {tau}")));
    }
    let (u, sv, vt) = x
        .svddc(JobSvd::Some)
        .map_err(|e| Error::numerical(format!("SVD failed during nuclear projection: {e}")))?;
    let (u, vt) = (
        u.ok_or_else(|| Error::numerical("SVD returned no left vectors"))?,
        vt.ok_or_else(|| Error::numerical("SVD returned no right vectors"))?,
    );
    let nuclear: f64 = sv.sum();
    if nuclear <= tau {
        return Ok(x.clone());
    }
    let w = project_l1_ball(sv.as_slice().unwrap(), tau);
    let keep = w.iter().take_while(|&&s| s > 0.0).count().max(1);
    let mut uw = u.slice(s![.., ..keep]).to_owned();
    for (mut col, &s) in uw.columns_mut().into_iter().zip(&w[..keep]) {
        col *= s;
    }
    Ok(uw.dot(&vt.slice(s![..keep, ..])))
}

/// Entrywise clamp to [-alpha, alpha]: the exact Euclidean projection onto
/// the infinity-norm ball.
pub fn clamp_infinity(x: &Array2<f64>, alpha: f64) -> Array2<f64> {
    if alpha.is_infinite() {
        return x.clone();
    }
    x.mapv(|v| v.clamp(-alpha, alpha))
}

fn frob_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Approximate Euclidean projection onto C by Dykstra's alternating
/// projections between the infinity ball and the nuclear ball. Every round
/// ends on the nuclear step, so the returned matrix is always inside the
/// nuclear ball. The loop stops once two measured conditions hold at the end
/// of a round: the iterate moved at most `tol` entrywise (Dykstra has reached
/// its fixed point, i.e. the projection) and its entrywise overshoot of the
/// infinity ball is at most `tol`. A true flag certifies both; either alone
/// is not enough, since feasible-but-moving iterates occur well before the
/// limit and stalled iterates can still overshoot. If `max_rounds` runs out
/// first, the last iterate is returned with a false convergence flag rather
/// than an error.
pub fn project_feasible(
    x: &Array2<f64>,
    cs: &ConstraintSet,
    tol: f64,
    max_rounds: usize,
) -> Result<(Array2<f64>, bool)> {
    if !(tol > 0.0) {
        return Err(Error::domain(format!("tol must be positive, got {tol}")));
    }
    if max_rounds == 0 {
        return Err(Error::domain("max_rounds must be at least 1"));
    }
    let mut cur = x.clone();
    let mut p = Array2::zeros(x.raw_dim());
    let mut q = Array2::zeros(x.raw_dim());
    for _ in 0..max_rounds {
        let z = clamp_infinity(&(&cur + &q), cs.alpha);
        q = &cur + &q - &z;
        let y = project_nuclear_ball(&(&z + &p), cs.tau)?;
        p = &z + &p - &y;
        let moved = (&y - &cur)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        cur = y;
        let max_abs = cur.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if moved <= tol && max_abs - cs.alpha <= tol {
            return Ok((cur, true));
        }
    }
    Ok((cur, false))
}

/// Projection dispatch used by the solver configuration.
pub fn project(
    x: &Array2<f64>,
    cs: &ConstraintSet,
    params: &ProjectionParams,
) -> Result<(Array2<f64>, bool)> {
    match params.kind {
        ProjectionKind::Intersection => project_feasible(x, cs, params.tol, params.max_rounds),
        ProjectionKind::NuclearOnly => Ok((project_nuclear_ball(x, cs.tau)?, true)),
    }
}

/// Nuclear norm (sum of singular values), used in tests and feasibility checks.
pub fn nuclear_norm(x: &Array2<f64>) -> Result<f64> {
    Ok(singular_values(x)?.iter().sum())
}

/// Singular values in descending order.
pub fn singular_values(x: &Array2<f64>) -> Result<Vec<f64>> {
    let (_, sv, _) = x
        .svddc(JobSvd::None)
        .map_err(|e| Error::numerical(format!("SVD failed computing singular values: {e}")))?;
    Ok(sv.to_vec())
}
