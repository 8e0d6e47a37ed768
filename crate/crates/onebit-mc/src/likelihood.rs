use ndarray::Array2;

use crate::error::{Error, Result};
use crate::link::{LinkModel, PerturbedLink};
use crate::observations::ObservationSet;

/// Noise values carried on exactly the support of an observation set,
/// stored in the same (i, j)-sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMatrix {
    d1: usize,
    d2: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl NoiseMatrix {
    /// Build from per-entry values aligned with `obs.entries()`.
    pub fn on_support(obs: &ObservationSet, values: Vec<f64>) -> Result<Self> {
        if values.len() != obs.len() {
            return Err(Error::config(format!(
                "noise values ({}) do not cover the {} observed entries",
                values.len(),
                obs.len()
            )));
        }
        let entries = obs
            .entries()
            .iter()
            .zip(values)
            .map(|(e, v)| (e.i, e.j, v))
            .collect();
        Ok(Self {
            d1: obs.d1(),
            d2: obs.d2(),
            entries,
        })
    }

    pub fn zeros_like(obs: &ObservationSet) -> Self {
        Self::on_support(obs, vec![0.0; obs.len()]).expect("lengths match by construction")
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Every noise value scaled by `factor`, support unchanged.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            d1: self.d1,
            d2: self.d2,
            entries: self
                .entries
                .iter()
                .map(|&(i, j, v)| (i, j, v * factor))
                .collect(),
        }
    }

    fn matches_support(&self, obs: &ObservationSet) -> bool {
        self.d1 == obs.d1()
            && self.d2 == obs.d2()
            && self.entries.len() == obs.len()
            && self
                .entries
                .iter()
                .zip(obs.entries())
                .all(|(&(i, j, _), e)| i == e.i && j == e.j)
    }
}

fn check_shape(x: &Array2<f64>, obs: &ObservationSet, what: &str) -> Result<()> {
    if x.nrows() != obs.d1() || x.ncols() != obs.d2() {
        return Err(Error::dimension(format!(
            "{what}: matrix is {}x{} but observations live in {}x{}",
            x.nrows(),
            x.ncols(),
            obs.d1(),
            obs.d2()
        )));
    }
    Ok(())
}

/// Negative log-likelihood of X under the one-bit model:
/// -1/2 sum over Omega of (1+Y) log h(X) + (1-Y) log(1 - h(X)).
/// With Y = +1 the summand is -log h(X); with Y = -1 it is -log(1 - h(X)).
pub fn neg_log_likelihood(x: &Array2<f64>, obs: &ObservationSet, model: LinkModel) -> Result<f64> {
    check_shape(x, obs, "neg_log_likelihood")?;
    let mut acc = 0.0;
    for e in obs.entries() {
        let h = model.value(x[(e.i, e.j)]);
        let p = if e.y > 0 { h } else { 1.0 - h };
        acc -= p.ln();
    }
    Ok(acc)
}

/// Gradient of the negative log-likelihood. Entry (i, j) in Omega equals
/// -(1+Y) h'/(2h) + (1-Y) h'/(2(1-h)); entries off Omega are exactly zero.
pub fn gradient(x: &Array2<f64>, obs: &ObservationSet, model: LinkModel) -> Result<Array2<f64>> {
    check_shape(x, obs, "gradient")?;
    let mut g = Array2::zeros(x.raw_dim());
    for e in obs.entries() {
        let v = x[(e.i, e.j)];
        let h = model.value(v);
        let dh = model.derivative(v);
        g[(e.i, e.j)] = if e.y > 0 { -dh / h } else { dh / (1.0 - h) };
    }
    Ok(g)
}

fn check_perturbed(pl: &PerturbedLink) -> Result<()> {
    if pl.p1() + pl.p2() >= 1.0 {
        return Err(Error::config(format!(
            "perturbed link with p1 + p2 >= 1 carries no signal (p1={}, p2={})",
            pl.p1(),
            pl.p2()
        )));
    }
    Ok(())
}

/// Negative log-likelihood of randomized-response observations: the same
/// form as `neg_log_likelihood` with h replaced by the perturbed link c.
pub fn rr_neg_log_likelihood(
    x: &Array2<f64>,
    obs: &ObservationSet,
    pl: PerturbedLink,
) -> Result<f64> {
    check_shape(x, obs, "rr_neg_log_likelihood")?;
    check_perturbed(&pl)?;
    let mut acc = 0.0;
    for e in obs.entries() {
        let c = pl.value(x[(e.i, e.j)]);
        let p = if e.y > 0 { c } else { 1.0 - c };
        acc -= p.ln();
    }
    Ok(acc)
}

/// Gradient of `rr_neg_log_likelihood`, with c in place of h.
pub fn rr_gradient(
    x: &Array2<f64>,
    obs: &ObservationSet,
    pl: PerturbedLink,
) -> Result<Array2<f64>> {
    check_shape(x, obs, "rr_gradient")?;
    check_perturbed(&pl)?;
    let mut g = Array2::zeros(x.raw_dim());
    for e in obs.entries() {
        let v = x[(e.i, e.j)];
        let c = pl.value(v);
        let dc = pl.derivative(v);
        g[(e.i, e.j)] = if e.y > 0 { -dc / c } else { dc / (1.0 - c) };
    }
    Ok(g)
}

/// Objective with a linear noise term folded into the likelihood bracket:
/// neg_log_likelihood(X) - 1/2 sum over Omega of H_ij X_ij. The noise term
/// sits inside the -1/2 sum, so the coefficient on each H_ij X_ij is -1/2.
pub fn perturbed_objective(
    x: &Array2<f64>,
    obs: &ObservationSet,
    model: LinkModel,
    noise: &NoiseMatrix,
) -> Result<f64> {
    if !noise.matches_support(obs) {
        return Err(Error::config(
            "noise support does not match the observation set",
        ));
    }
    let base = neg_log_likelihood(x, obs, model)?;
    let linear: f64 = noise
        .entries
        .iter()
        .map(|&(i, j, v)| v * x[(i, j)])
        .sum();
    Ok(base - 0.5 * linear)
}

/// Gradient of `perturbed_objective`: gradient(X) - H/2 on Omega.
pub fn perturbed_gradient(
    x: &Array2<f64>,
    obs: &ObservationSet,
    model: LinkModel,
    noise: &NoiseMatrix,
) -> Result<Array2<f64>> {
    if !noise.matches_support(obs) {
        return Err(Error::config(
            "noise support does not match the observation set",
        ));
    }
    let mut g = gradient(x, obs, model)?;
    for &(i, j, v) in &noise.entries {
        g[(i, j)] -= 0.5 * v;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;

    fn single(y: i8) -> ObservationSet {
        ObservationSet::from_tuples(1, 1, &[(0, 0, y)]).unwrap()
    }

    #[test]
    fn single_positive_at_zero_is_log2() {
        let x = arr2(&[[0.0]]);
        let v = neg_log_likelihood(&x, &single(1), LinkModel::logistic()).unwrap();
        assert_abs_diff_eq!(v, std::f64::consts::LN_2, epsilon = 1e-15);
    }

    #[test]
    fn single_positive_at_ten() {
        let x = arr2(&[[10.0]]);
        let v = neg_log_likelihood(&x, &single(1), LinkModel::logistic()).unwrap();
        // -log h(10) = log(1 + e^{-10}), evaluated from scratch.
        assert_abs_diff_eq!(v, (1.0 + (-10.0_f64).exp()).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(v, 4.5399e-5, epsilon = 1e-9);
    }

    #[test]
    fn opposite_pair_at_zero_is_two_log2() {
        let obs = ObservationSet::from_tuples(1, 2, &[(0, 0, 1), (0, 1, -1)]).unwrap();
        let x = arr2(&[[0.0, 0.0]]);
        let v = neg_log_likelihood(&x, &obs, LinkModel::logistic()).unwrap();
        assert_abs_diff_eq!(v, 2.0 * std::f64::consts::LN_2, epsilon = 1e-15);
    }

    #[test]
    fn nll_additive_over_disjoint_supports() {
        let model = LinkModel::logistic();
        let x = arr2(&[[0.3, -0.8], [1.1, -0.2]]);
        let left = ObservationSet::from_tuples(2, 2, &[(0, 0, 1), (1, 0, -1)]).unwrap();
        let right = ObservationSet::from_tuples(2, 2, &[(0, 1, -1), (1, 1, 1)]).unwrap();
        let both = ObservationSet::from_tuples(
            2,
            2,
            &[(0, 0, 1), (1, 0, -1), (0, 1, -1), (1, 1, 1)],
        )
        .unwrap();
        let sum = neg_log_likelihood(&x, &left, model).unwrap()
            + neg_log_likelihood(&x, &right, model).unwrap();
        let whole = neg_log_likelihood(&x, &both, model).unwrap();
        assert_abs_diff_eq!(whole, sum, epsilon = 1e-12);
    }

    #[test]
    fn gradient_signs_at_zero() {
        let model = LinkModel::logistic();
        let x = arr2(&[[0.0]]);
        let gp = gradient(&x, &single(1), model).unwrap();
        assert_abs_diff_eq!(gp[(0, 0)], -0.5, epsilon = 1e-15);
        let gm = gradient(&x, &single(-1), model).unwrap();
        assert_abs_diff_eq!(gm[(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn gradient_zero_off_support() {
        let obs = ObservationSet::from_tuples(3, 3, &[(0, 1, 1), (2, 2, -1)]).unwrap();
        let x = Array2::from_elem((3, 3), 0.4);
        let g = gradient(&x, &obs, LinkModel::logistic()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if (i, j) != (0, 1) && (i, j) != (2, 2) {
                    assert_eq!(g[(i, j)], 0.0);
                }
            }
        }
    }

    fn finite_difference(
        x: &Array2<f64>,
        f: &dyn Fn(&Array2<f64>) -> f64,
        i: usize,
        j: usize,
    ) -> f64 {
        let step = 1e-6;
        let mut hi = x.clone();
        hi[(i, j)] += step;
        let mut lo = x.clone();
        lo[(i, j)] -= step;
        (f(&hi) - f(&lo)) / (2.0 * step)
    }

    #[test]
    fn gradient_matches_finite_difference_both_links() {
        use rand::Rng;
        let models = [LinkModel::logistic(), LinkModel::gaussian(1.0).unwrap()];
        for (s, model) in models.into_iter().enumerate() {
            let mut rng = crate::rng::RngHandle::new(900 + s as u64).rng();
            let x = Array2::from_shape_fn((4, 5), |_| rng.random::<f64>() * 2.0 - 1.0);
            let mut tuples = Vec::new();
            for i in 0..4 {
                for j in 0..5 {
                    if rng.random::<f64>() < 0.5 {
                        tuples.push((i, j, if rng.random::<f64>() < 0.5 { 1 } else { -1 }));
                    }
                }
            }
            let obs = ObservationSet::from_tuples(4, 5, &tuples).unwrap();
            let g = gradient(&x, &obs, model).unwrap();
            let f = |m: &Array2<f64>| neg_log_likelihood(m, &obs, model).unwrap();
            for e in obs.entries() {
                let fd = finite_difference(&x, &f, e.i, e.j);
                let denom = fd.abs().max(1.0);
                assert!(
                    ((g[(e.i, e.j)] - fd) / denom).abs() < 1e-6,
                    "entry ({}, {}): analytic {} vs fd {}",
                    e.i,
                    e.j,
                    g[(e.i, e.j)],
                    fd
                );
            }
        }
    }

    #[test]
    fn rr_reduces_to_plain_when_unflipped() {
        let model = LinkModel::logistic();
        let pl = PerturbedLink::new(model, 0.0, 0.0).unwrap();
        let obs = ObservationSet::from_tuples(2, 2, &[(0, 0, 1), (1, 1, -1)]).unwrap();
        let x = arr2(&[[0.2, 0.0], [0.0, -0.7]]);
        assert_eq!(
            rr_neg_log_likelihood(&x, &obs, pl).unwrap(),
            neg_log_likelihood(&x, &obs, model).unwrap()
        );
        assert_eq!(
            rr_gradient(&x, &obs, pl).unwrap(),
            gradient(&x, &obs, model).unwrap()
        );
    }

    #[test]
    fn rr_scalar_values() {
        let pl = PerturbedLink::symmetric(LinkModel::logistic(), 0.25).unwrap();
        let x0 = arr2(&[[0.0]]);
        let v0 = rr_neg_log_likelihood(&x0, &single(1), pl).unwrap();
        assert_abs_diff_eq!(v0, std::f64::consts::LN_2, epsilon = 1e-15);
        let x1 = arr2(&[[1.0]]);
        let v1 = rr_neg_log_likelihood(&x1, &single(1), pl).unwrap();
        // c(1) = 0.5 h(1) + 0.25 with h(1) = 1/(1+e^{-1}).
        let c = 0.5 / (1.0 + (-1.0_f64).exp()) + 0.25;
        assert_abs_diff_eq!(v1, -c.ln(), epsilon = 1e-15);
    }

    #[test]
    fn rr_rejects_degenerate_link() {
        let pl = PerturbedLink::symmetric(LinkModel::logistic(), 0.5).unwrap();
        let x = arr2(&[[0.0]]);
        assert!(matches!(
            rr_neg_log_likelihood(&x, &single(1), pl),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn perturbed_objective_zero_noise_is_plain() {
        let model = LinkModel::logistic();
        let obs = ObservationSet::from_tuples(2, 2, &[(0, 0, 1), (1, 0, -1)]).unwrap();
        let x = arr2(&[[0.4, 0.0], [-0.3, 0.0]]);
        let noise = NoiseMatrix::zeros_like(&obs);
        assert_eq!(
            perturbed_objective(&x, &obs, model, &noise).unwrap(),
            neg_log_likelihood(&x, &obs, model).unwrap()
        );
    }

    #[test]
    fn perturbed_objective_linear_term() {
        let model = LinkModel::logistic();
        let obs = single(1);
        let x = arr2(&[[1.0]]);
        let noise = NoiseMatrix::on_support(&obs, vec![2.0]).unwrap();
        let base = neg_log_likelihood(&x, &obs, model).unwrap();
        let v = perturbed_objective(&x, &obs, model, &noise).unwrap();
        assert_abs_diff_eq!(v, base - 1.0, epsilon = 1e-15);
    }

    #[test]
    fn perturbed_gradient_matches_finite_difference() {
        use rand::Rng;
        let model = LinkModel::logistic();
        let obs =
            ObservationSet::from_tuples(2, 3, &[(0, 0, 1), (0, 2, -1), (1, 1, 1)]).unwrap();
        let mut rng = crate::rng::RngHandle::new(17).rng();
        let x = Array2::from_shape_fn((2, 3), |_| rng.random::<f64>() - 0.5);
        let noise =
            NoiseMatrix::on_support(&obs, vec![0.7, -1.3, 0.2]).unwrap();
        let g = perturbed_gradient(&x, &obs, model, &noise).unwrap();
        let f = |m: &Array2<f64>| perturbed_objective(m, &obs, model, &noise).unwrap();
        for e in obs.entries() {
            let fd = finite_difference(&x, &f, e.i, e.j);
            assert_abs_diff_eq!(g[(e.i, e.j)], fd, epsilon = 1e-6);
        }
        // Identity: perturbed gradient = plain gradient - H/2 on the support.
        let plain = gradient(&x, &obs, model).unwrap();
        for &(i, j, v) in noise.entries() {
            assert_abs_diff_eq!(g[(i, j)], plain[(i, j)] - 0.5 * v, epsilon = 1e-15);
        }
    }

    #[test]
    fn support_mismatch_rejected() {
        let model = LinkModel::logistic();
        let obs = ObservationSet::from_tuples(2, 2, &[(0, 0, 1), (1, 1, -1)]).unwrap();
        let other = ObservationSet::from_tuples(2, 2, &[(0, 1, 1), (1, 1, -1)]).unwrap();
        let noise = NoiseMatrix::zeros_like(&other);
        let x = Array2::zeros((2, 2));
        assert!(matches!(
            perturbed_objective(&x, &obs, model, &noise),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            perturbed_gradient(&x, &obs, model, &noise),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let obs = single(1);
        let x = Array2::zeros((2, 2));
        assert!(matches!(
            neg_log_likelihood(&x, &obs, LinkModel::logistic()),
            Err(Error::Dimension(_))
        ));
    }

    mod property_tests {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(400))]

            #[test]
            fn per_entry_nll_is_convex(
                a in -2.0..2.0f64,
                b in -2.0..2.0f64,
                lambda in 0.0..1.0f64,
                y in prop::bool::ANY,
                gaussian in prop::bool::ANY,
            ) {
                // Random-chord convexity of the scalar summand for both links.
                let model = if gaussian {
                    LinkModel::gaussian(1.0).unwrap()
                } else {
                    LinkModel::logistic()
                };
                let obs = single(if y { 1 } else { -1 });
                let f = |t: f64| {
                    neg_log_likelihood(&arr2(&[[t]]), &obs, model).unwrap()
                };
                let mid = lambda * a + (1.0 - lambda) * b;
                prop_assert!(f(mid) <= lambda * f(a) + (1.0 - lambda) * f(b) + 1e-12);
            }

            #[test]
            fn nll_is_nonnegative(t in -30.0..30.0f64, y in prop::bool::ANY) {
                let obs = single(if y { 1 } else { -1 });
                let v = neg_log_likelihood(&arr2(&[[t]]), &obs, LinkModel::logistic()).unwrap();
                prop_assert!(v >= 0.0);
            }
        }
    }
}
