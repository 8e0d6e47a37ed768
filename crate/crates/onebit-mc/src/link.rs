use crate::error::{Error, Result};

/// Probabilities are kept this far away from {0, 1} so log-likelihoods stay
/// finite. The entrywise bound on the iterates makes the saturated region
/// unreachable in exact arithmetic; the clamp only guards float drift.
pub const PROB_FLOOR: f64 = 1e-15;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    Logistic,
    Gaussian,
}

/// Link function h(x): the probability that an observation is +1 given the
/// underlying matrix entry x. Logistic uses the standard logistic CDF;
/// Gaussian uses the normal CDF with scale sigma (a probit model).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    kind: LinkKind,
    sigma: f64,
}

impl LinkModel {
    pub fn logistic() -> Self {
        Self {
            kind: LinkKind::Logistic,
            sigma: 1.0,
        }
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::domain(format!(
                "gaussian link needs sigma > 0, got {sigma}"
            )));
        }
        Ok(Self {
            kind: LinkKind::Gaussian,
            sigma,
        })
    }

    pub fn kind(&self) -> LinkKind {
        self.kind
    }

    /// Scale of the Gaussian link; 1 (and unused) for logistic.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// h(x), clamped into [PROB_FLOOR, 1 - PROB_FLOOR].
    pub fn value(&self, x: f64) -> f64 {
        let h = match self.kind {
            LinkKind::Logistic => logistic_cdf(x),
            LinkKind::Gaussian => normal_cdf(x / self.sigma),
        };
        h.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
    }

    /// h'(x) >= 0.
    pub fn derivative(&self, x: f64) -> f64 {
        match self.kind {
            LinkKind::Logistic => {
                let h = logistic_cdf(x);
                h * (1.0 - h)
            }
            LinkKind::Gaussian => normal_pdf(x / self.sigma) / self.sigma,
        }
    }
}

/// 1 / (1 + e^{-x}), evaluated via the non-overflowing branch.
fn logistic_cdf(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Standard normal CDF via the complementary error function, which keeps
/// relative accuracy in the tails (target 1e-12 on |z| <= 8).
fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / SQRT_2PI
}

/// h(x) evaluated through an argument check, for callers holding raw input.
pub fn link_value(model: LinkModel, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain(format!("link_value needs finite x, got {x}")));
    }
    Ok(model.value(x))
}

/// h'(x) evaluated through an argument check.
pub fn link_derivative(model: LinkModel, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain(format!(
            "link_derivative needs finite x, got {x}"
        )));
    }
    Ok(model.derivative(x))
}

/// Link seen through randomized response: with flip probabilities p1 (for +1
/// entries) and p2 (for -1 entries), an observation is +1 with probability
/// c(x) = h(x)(1 - p1) + (1 - h(x)) p2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbedLink {
    base: LinkModel,
    p1: f64,
    p2: f64,
}

impl PerturbedLink {
    pub fn new(base: LinkModel, p1: f64, p2: f64) -> Result<Self> {
        for (name, p) in [("p1", p1), ("p2", p2)] {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(Error::domain(format!(
                    "{name} must be a probability in [0,1], got {p}"
                )));
            }
        }
        Ok(Self { base, p1, p2 })
    }

    /// Symmetric flip probability p1 = p2 = p.
    pub fn symmetric(base: LinkModel, p: f64) -> Result<Self> {
        Self::new(base, p, p)
    }

    pub fn base(&self) -> LinkModel {
        self.base
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn p2(&self) -> f64 {
        self.p2
    }

    /// c(x), clamped like the base link. Strictly increasing when p1+p2 < 1.
    pub fn value(&self, x: f64) -> f64 {
        let h = self.base.value(x);
        let c = h * (1.0 - self.p1) + (1.0 - h) * self.p2;
        c.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
    }

    /// c'(x) = h'(x) (1 - p1 - p2).
    pub fn derivative(&self, x: f64) -> f64 {
        self.base.derivative(x) * (1.0 - self.p1 - self.p2)
    }
}

/// c(x) evaluated through an argument check.
pub fn perturbed_link_value(pl: PerturbedLink, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain(format!(
            "perturbed_link_value needs finite x, got {x}"
        )));
    }
    Ok(pl.value(x))
}

/// Steepness L and flatness beta of a link over |x| <= alpha. These drive
/// the recovery-error bounds; for the Gaussian link the closed forms are
/// upper bounds rather than exact suprema.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConstants {
    pub steepness: f64,
    pub flatness: f64,
    pub alpha: f64,
}

/// Constants of the unperturbed link: logistic L = 1, beta = e^alpha;
/// Gaussian L = 8(alpha/sigma + 1)/sigma, beta = pi sigma^2 e^{alpha^2/2sigma^2}.
pub fn model_constants(model: LinkModel, alpha: f64) -> Result<ModelConstants> {
    check_alpha(alpha)?;
    let (steepness, flatness) = match model.kind {
        LinkKind::Logistic => (1.0, alpha.exp()),
        LinkKind::Gaussian => {
            let s = model.sigma;
            (
                8.0 * (alpha / s + 1.0) / s,
                std::f64::consts::PI * s * s * (alpha * alpha / (2.0 * s * s)).exp(),
            )
        }
    };
    Ok(ModelConstants {
        steepness,
        flatness,
        alpha,
    })
}

/// Constants of the symmetric randomized-response link (p1 = p2 = p < 1/2):
/// logistic L = 1-2p, beta = 1/(2(1-2p)^2) + e^alpha/2; Gaussian scales the
/// unperturbed bounds the same way.
pub fn perturbed_constants(pl: PerturbedLink, alpha: f64) -> Result<ModelConstants> {
    check_alpha(alpha)?;
    if pl.p1 != pl.p2 {
        return Err(Error::domain(format!(
            "perturbed_constants needs p1 = p2, got p1={} p2={}",
            pl.p1, pl.p2
        )));
    }
    let p = pl.p1;
    if p >= 0.5 {
        return Err(Error::domain(format!(
            "perturbed link is degenerate for p >= 1/2, got p={p}"
        )));
    }
    let q = 1.0 - 2.0 * p;
    let common = 1.0 / (2.0 * q * q);
    let (steepness, flatness) = match pl.base.kind {
        LinkKind::Logistic => (q, common + 0.5 * alpha.exp()),
        LinkKind::Gaussian => {
            let s = pl.base.sigma;
            (
                8.0 * q * (alpha / s + 1.0) / s,
                common
                    + 0.5 * std::f64::consts::PI * s * s * (alpha * alpha / (2.0 * s * s)).exp(),
            )
        }
    };
    Ok(ModelConstants {
        steepness,
        flatness,
        alpha,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    // alpha = 0 is a legal degenerate bound (constants collapse to their
    // x = 0 values); only negative or non-finite alpha is rejected.
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::domain(format!("alpha must be >= 0, got {alpha}")));
    }
    Ok(())
}
