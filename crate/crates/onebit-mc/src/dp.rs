//! Privacy primitives: randomized-response calibration, Laplace samplers,
//! sensitivity bounds, and sequential composition accounting.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::link::{LinkKind, LinkModel};
use crate::observations::{Observation, ObservationSet};
use crate::rng::RngHandle;

/// The non-private baseline plus the four perturbation mechanisms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mechanism {
    Clear,
    InputP,
    ObjectiveP,
    GradientP,
    OutputP,
}

impl Mechanism {
    pub const ALL: [Mechanism; 5] = [
        Mechanism::Clear,
        Mechanism::InputP,
        Mechanism::ObjectiveP,
        Mechanism::GradientP,
        Mechanism::OutputP,
    ];

    /// Short label used in result files and plots.
    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::Clear => "Clear",
            Mechanism::InputP => "InP",
            Mechanism::ObjectiveP => "ObjP",
            Mechanism::GradientP => "GraP",
            Mechanism::OutputP => "OutP",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "clear" => Ok(Mechanism::Clear),
            "inp" | "input" => Ok(Mechanism::InputP),
            "objp" | "objective" => Ok(Mechanism::ObjectiveP),
            "grap" | "gradient" => Ok(Mechanism::GradientP),
            "outp" | "output" => Ok(Mechanism::OutputP),
            other => Err(Error::config(format!(
                "unknown mechanism '{other}' (expected Clear, InP, ObjP, GraP, or OutP)"
            ))),
        }
    }
}

/// Privacy budget and mechanism-specific knobs for one run. `p1`/`p2` apply
/// to input perturbation (both unset means the symmetric calibration
/// p1 = p2 = 1/(1+e^eps)); `k_steps` and `clamp` apply to gradient
/// perturbation. An infinite epsilon is the explicit zero-noise limit.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacySpec {
    pub mechanism: Mechanism,
    pub epsilon: f64,
    pub p1: Option<f64>,
    pub p2: Option<f64>,
    pub k_steps: Option<usize>,
    pub clamp: Option<f64>,
}

impl PrivacySpec {
    pub fn clear() -> Self {
        Self {
            mechanism: Mechanism::Clear,
            epsilon: f64::INFINITY,
            p1: None,
            p2: None,
            k_steps: None,
            clamp: None,
        }
    }

    pub fn input(epsilon: f64) -> Self {
        Self {
            mechanism: Mechanism::InputP,
            epsilon,
            p1: None,
            p2: None,
            k_steps: None,
            clamp: None,
        }
    }

    pub fn input_asymmetric(epsilon: f64, p1: f64, p2: f64) -> Self {
        Self {
            p1: Some(p1),
            p2: Some(p2),
            ..Self::input(epsilon)
        }
    }

    pub fn objective(epsilon: f64) -> Self {
        Self {
            mechanism: Mechanism::ObjectiveP,
            epsilon,
            p1: None,
            p2: None,
            k_steps: None,
            clamp: None,
        }
    }

    pub fn gradient(epsilon: f64, k_steps: usize, clamp: f64) -> Self {
        Self {
            mechanism: Mechanism::GradientP,
            epsilon,
            p1: None,
            p2: None,
            k_steps: Some(k_steps),
            clamp: Some(clamp),
        }
    }

    pub fn output(epsilon: f64) -> Self {
        Self {
            mechanism: Mechanism::OutputP,
            epsilon,
            p1: None,
            p2: None,
            k_steps: None,
            clamp: None,
        }
    }

    /// Flip probabilities an input-perturbation run will actually use.
    pub fn effective_flip_probs(&self) -> Result<(f64, f64)> {
        match (self.p1, self.p2) {
            (None, None) => {
                let p = p_from_epsilon(self.epsilon)?;
                Ok((p, p))
            }
            (Some(p1), Some(p2)) => Ok((p1, p2)),
            _ => Err(Error::config(
                "flip probabilities p1 and p2 must be set together",
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mechanism != Mechanism::Clear && !(self.epsilon > 0.0) {
            return Err(Error::config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        match self.mechanism {
            Mechanism::InputP => {
                let (p1, p2) = self.effective_flip_probs()?;
                for p in [p1, p2] {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(Error::config(format!(
                            "flip probability {p} outside [0,1]"
                        )));
                    }
                }
                if !rr_privacy_feasible(p1, p2, self.epsilon) {
                    return Err(Error::config(format!(
                        "flip probabilities (p1={p1}, p2={p2}) do not satisfy the \
                         epsilon={} randomized-response feasibility band",
                        self.epsilon
                    )));
                }
            }
            Mechanism::GradientP => {
                match self.k_steps {
                    Some(k) if k >= 1 => {}
                    _ => {
                        return Err(Error::config(
                            "gradient perturbation needs a step count K >= 1",
                        ))
                    }
                }
                match self.clamp {
                    Some(c) if c > 0.0 && c.is_finite() => {}
                    _ => {
                        return Err(Error::config(
                            "gradient perturbation needs a finite clamp bound C > 0",
                        ))
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Symmetric randomized-response flip probability calibrated to epsilon:
/// p = 1/(1+e^eps), in (0, 1/2).
pub fn p_from_epsilon(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::domain(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    Ok(1.0 / (1.0 + epsilon.exp()))
}

/// Privacy level of the symmetric flip probability: eps = log((1-p)/p).
pub fn epsilon_from_p(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 0.5) {
        return Err(Error::domain(format!(
            "flip probability must lie in (0, 1/2), got {p}"
        )));
    }
    Ok(((1.0 - p) / p).ln())
}

/// Whether (p1, p2) satisfies 1 - p2*e^eps <= p1 <= (1-p2)*e^eps, the band
/// under which randomized response with those transitions is eps-private.
/// A 1e-12 slack keeps the exactly calibrated point p1 = p2 = 1/(1+e^eps),
/// which sits on the lower boundary, feasible under floating-point rounding.
pub fn rr_privacy_feasible(p1: f64, p2: f64, epsilon: f64) -> bool {
    let e = epsilon.exp();
    let tol = 1e-12;
    1.0 - p2 * e <= p1 + tol && p1 <= (1.0 - p2) * e + tol
}

/// Randomized response over an observation set: each +1 flips with
/// probability p1, each -1 with probability p2; the support is unchanged.
/// One uniform draw is consumed per entry regardless of its sign, so the
/// stream position never depends on the data.
pub fn rr_perturb(
    obs: &ObservationSet,
    p1: f64,
    p2: f64,
    handle: &RngHandle,
) -> Result<ObservationSet> {
    for p in [p1, p2] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!(
                "flip probability {p} outside [0,1]"
            )));
        }
    }
    let mut rng = handle.rng();
    let flipped: Vec<Observation> = obs
        .entries()
        .iter()
        .map(|o| {
            let u: f64 = rng.random();
            let flip = if o.y > 0 { u < p1 } else { u < p2 };
            Observation {
                i: o.i,
                j: o.j,
                y: if flip { -o.y } else { o.y },
            }
        })
        .collect();
    ObservationSet::new(obs.d1(), obs.d2(), flipped)
}

/// One draw from Laplace(0, b) by inverting the CDF.
pub fn sample_laplace<R: Rng + ?Sized>(b: f64, rng: &mut R) -> f64 {
    assert!(b > 0.0, "laplace scale must be positive, got {b}");
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        // u = -1/2 would send the log argument to zero; redraw.
        if u == -0.5 {
            continue;
        }
        return if u >= 0.0 {
            -b * (1.0 - 2.0 * u).ln()
        } else {
            b * (1.0 + 2.0 * u).ln()
        };
    }
}

/// One draw from Laplace(0, b) as an exponential magnitude (mean b) times an
/// independent uniform sign; distributionally equal to `sample_laplace`.
pub fn sample_laplace_gamma_sign<R: Rng + ?Sized>(b: f64, rng: &mut R) -> f64 {
    assert!(b > 0.0, "laplace scale must be positive, got {b}");
    let v: f64 = rng.random();
    let magnitude = -b * (1.0 - v).ln();
    if rng.random::<f64>() < 0.5 {
        magnitude
    } else {
        -magnitude
    }
}

/// Per-rating sensitivity of the negative log-likelihood: exactly 1 for the
/// logistic link (h'/h + h'/(1-h) = 1 pointwise) and 2h'(0)/h(-alpha) for
/// the Gaussian link.
pub fn objective_sensitivity(model: &LinkModel, alpha: f64) -> f64 {
    assert!(
        alpha >= 0.0 && alpha.is_finite(),
        "alpha must be a finite nonnegative bound, got {alpha}"
    );
    match model.kind() {
        LinkKind::Logistic => 1.0,
        LinkKind::Gaussian => 2.0 * model.derivative(0.0) / model.value(-alpha),
    }
}

/// L1 sensitivity of one clamped gradient evaluation to changing a single
/// rating: the sign structure of exactly one entry changes, and each clamped
/// entry lies in [-C, C], so the L1 change is at most 2C.
pub fn gradient_l1_sensitivity(clamp: f64) -> f64 {
    assert!(
        clamp > 0.0 && clamp.is_finite(),
        "clamp bound must be a positive finite real, got {clamp}"
    );
    2.0 * clamp
}

/// Result of sequential composition: the summed budget, with a flag marking
/// the vacuous empty composition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Composition {
    pub total: f64,
    pub empty_warning: bool,
}

/// Sequential composition: total budget is the sum of the per-release
/// budgets. An empty list composes to zero with a warning flag set.
pub fn compose_sequential(epsilons: &[f64]) -> Result<Composition> {
    if epsilons.is_empty() {
        return Ok(Composition {
            total: 0.0,
            empty_warning: true,
        });
    }
    if let Some(bad) = epsilons.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::domain(format!(
            "composition requires positive budgets, got {bad}"
        )));
    }
    Ok(Composition {
        total: epsilons.iter().sum(),
        empty_warning: false,
    })
}
