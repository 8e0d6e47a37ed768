use std::collections::VecDeque;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Spectral projected gradient settings. `max_iters` is the iteration cap K;
/// with `line_search` off the solver runs the fixed projected update
/// x <- P(x - step_scale * gamma * g) instead of backtracking, which is the
/// mode gradient perturbation requires (data-dependent accept/reject steps
/// would consume unaccounted privacy budget).
#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    pub max_iters: usize,
    pub bb_min: f64,
    pub bb_max: f64,
    /// Window length of the nonmonotone Armijo reference maximum.
    pub memory: usize,
    pub armijo: f64,
    pub backtrack: f64,
    /// The fixed multiplier on the spectral step (the solver's own step
    /// length knob, distinct from the entrywise bound alpha).
    pub step_scale: f64,
    /// Relative objective-change stopping threshold; 0 disables early stop.
    pub tol_obj: f64,
    pub line_search: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            max_iters: 500,
            bb_min: 1e-8,
            bb_max: 1e8,
            memory: 10,
            armijo: 1e-4,
            backtrack: 0.5,
            step_scale: 1.0,
            tol_obj: 1e-6,
            line_search: true,
        }
    }
}

impl SolverParams {
    /// Defaults for a noisy fixed-step run of K iterations: no line search,
    /// no early stop, and a conservative spectral-step ceiling so that a
    /// noise-corrupted curvature estimate cannot catapult the iterate.
    pub fn fixed_step(k: usize) -> Self {
        Self {
            max_iters: k,
            bb_max: 1.0,
            tol_obj: 0.0,
            line_search: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bb_min > 0.0 && self.bb_min <= self.bb_max) {
            return Err(Error::config(format!(
                "bb step bounds need 0 < min <= max, got [{}, {}]",
                self.bb_min, self.bb_max
            )));
        }
        if self.memory < 1 {
            return Err(Error::config("nonmonotone memory must be >= 1"));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::config(format!(
                "armijo constant must lie in (0,1), got {}",
                self.armijo
            )));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::config(format!(
                "backtracking factor must lie in (0,1), got {}",
                self.backtrack
            )));
        }
        if !(self.step_scale > 0.0 && self.step_scale.is_finite()) {
            return Err(Error::config(format!(
                "step_scale must be positive, got {}",
                self.step_scale
            )));
        }
        if !(self.tol_obj >= 0.0) {
            return Err(Error::config(format!(
                "tol_obj must be nonnegative, got {}",
                self.tol_obj
            )));
        }
        Ok(())
    }
}

/// One accepted iteration: objective value, the step length actually taken,
/// and whether the projection subroutine reported convergence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub objective: f64,
    pub step: f64,
    pub projection_converged: bool,
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub solution: Array2<f64>,
    pub trace: Vec<IterationRecord>,
    pub iterations_used: usize,
    pub converged: bool,
}

/// Barzilai-Borwein step length: gamma = <s,s>/<s,u> with s the iterate
/// difference and u the gradient difference, clipped into [bb_min, bb_max].
/// A non-positive curvature estimate <s,u> falls back to bb_max.
pub fn bb_step_length(
    x_prev: &Array2<f64>,
    x_curr: &Array2<f64>,
    g_prev: &Array2<f64>,
    g_curr: &Array2<f64>,
    bb_min: f64,
    bb_max: f64,
) -> f64 {
    let mut ss = 0.0;
    let mut su = 0.0;
    for (((xp, xc), gp), gc) in x_prev
        .iter()
        .zip(x_curr.iter())
        .zip(g_prev.iter())
        .zip(g_curr.iter())
    {
        let s = xc - xp;
        ss += s * s;
        su += s * (gc - gp);
    }
    if su <= 0.0 || !su.is_finite() || ss == 0.0 {
        return bb_max;
    }
    (ss / su).clamp(bb_min, bb_max)
}

/// Entrywise clamp of a gradient to [-C, C]. Zero entries (off the observed
/// support) stay exactly zero.
pub fn clamp_gradient(g: &Array2<f64>, c: f64) -> Array2<f64> {
    assert!(c > 0.0, "clamp bound must be positive");
    g.mapv(|v| v.clamp(-c, c))
}

const MAX_BACKTRACKS: usize = 60;

/// Hook applied to the gradient each iteration (noise injection); receives
/// the gradient by value and the iteration index.
pub type GradHook<'a> = &'a mut dyn FnMut(Array2<f64>, usize) -> Array2<f64>;

/// Minimize `objective` over the set encoded by `projector` starting from
/// `x0` (projected on entry). With line search: one projection per iteration
/// for the direction, then nonmonotone Armijo backtracking along it against
/// the max of the last `memory` objective values. Without line search (or
/// whenever a hook is present): the fixed update of the noisy scheme. The
/// early-stop rule |f_k - f_{k-1}| <= tol_obj * max(1, |f_k|) never applies
/// while a hook is present; a hooked run takes exactly `max_iters` steps so
/// its declared privacy budget is consumed in full.
pub fn spg_solve<F, G, P>(
    objective: F,
    gradient: G,
    mut grad_hook: Option<GradHook<'_>>,
    projector: P,
    x0: Array2<f64>,
    params: &SolverParams,
) -> Result<SolverResult>
where
    F: Fn(&Array2<f64>) -> f64,
    G: Fn(&Array2<f64>) -> Array2<f64>,
    P: Fn(&Array2<f64>) -> Result<(Array2<f64>, bool)>,
{
    params.validate()?;
    let line_search = params.line_search && grad_hook.is_none();

    let (mut x, pconv0) = projector(&x0)?;
    let mut f = objective(&x);
    ensure_finite(f, 0, f64::NAN)?;
    let mut trace = vec![IterationRecord {
        objective: f,
        step: 0.0,
        projection_converged: pconv0,
    }];

    let mut g = hooked_gradient(&gradient, &mut grad_hook, &x, 0);
    let mut history: VecDeque<f64> = VecDeque::with_capacity(params.memory);
    history.push_back(f);

    let mut gamma = 1.0;
    let mut iterations_used = 0;
    let mut converged = false;

    for k in 0..params.max_iters {
        let f_prev = f;
        let (step_taken, pconv) = if line_search {
            let (xp, pconv) = projector(&(&x - &(params.step_scale * gamma * &g)))?;
            let d = &xp - &x;
            let gd: f64 = g.iter().zip(d.iter()).map(|(a, b)| a * b).sum();
            let f_ref = history.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut lambda = 1.0;
            let mut x_new = &x + &d;
            let mut f_new = objective(&x_new);
            for _ in 0..MAX_BACKTRACKS {
                ensure_finite(f_new, k + 1, f_prev)?;
                if f_new <= f_ref + params.armijo * lambda * gd {
                    break;
                }
                lambda *= params.backtrack;
                x_new = &x + &d.mapv(|v| v * lambda);
                f_new = objective(&x_new);
            }
            ensure_finite(f_new, k + 1, f_prev)?;
            let g_new = gradient(&x_new);
            gamma = bb_step_length(&x, &x_new, &g, &g_new, params.bb_min, params.bb_max);
            let step = lambda * params.step_scale;
            x = x_new;
            g = g_new;
            f = f_new;
            (step, pconv)
        } else {
            let (x_new, pconv) = projector(&(&x - &(params.step_scale * gamma * &g)))?;
            let f_new = objective(&x_new);
            ensure_finite(f_new, k + 1, f_prev)?;
            let g_new = hooked_gradient(&gradient, &mut grad_hook, &x_new, k + 1);
            gamma = bb_step_length(&x, &x_new, &g, &g_new, params.bb_min, params.bb_max);
            let step = params.step_scale;
            x = x_new;
            g = g_new;
            f = f_new;
            (step, pconv)
        };

        history.push_back(f);
        if history.len() > params.memory {
            history.pop_front();
        }
        trace.push(IterationRecord {
            objective: f,
            step: step_taken,
            projection_converged: pconv,
        });
        iterations_used = k + 1;

        let may_stop = params.tol_obj > 0.0 && grad_hook.is_none();
        if may_stop && (f - f_prev).abs() <= params.tol_obj * f.abs().max(1.0) {
            converged = true;
            break;
        }
    }

    Ok(SolverResult {
        solution: x,
        trace,
        iterations_used,
        converged,
    })
}

fn hooked_gradient<G>(
    gradient: &G,
    hook: &mut Option<GradHook<'_>>,
    x: &Array2<f64>,
    k: usize,
) -> Array2<f64>
where
    G: Fn(&Array2<f64>) -> Array2<f64>,
{
    let g = gradient(x);
    match hook {
        Some(h) => h(g, k),
        None => g,
    }
}

fn ensure_finite(f: f64, iteration: usize, last_good: f64) -> Result<()> {
    if f.is_finite() {
        return Ok(());
    }
    Err(Error::numerical(format!(
        "non-finite objective {f} at iteration {iteration} (last good value {last_good})"
    )))
}
