//! The three observation models, data generation, likelihood ratios and the
//! quantities of the locally asymptotically exponential expansion.
//!
//! * parametric shift: `p_theta(x) = lambda exp(-lambda (x - theta))` on `x >= theta`;
//! * semiparametric shift: `p_{theta,eta}(x) = eta(x - theta)`;
//! * semiparametric scale: `p_{theta,eta}(x) = eta(x / theta) / theta` on `[0, theta]`.
//!
//! The local parameter is `h = n (theta - theta0)`. In the shift models the
//! likelihood is supported on `h <= Delta_n = n (X_(1) - theta0)`; in the
//! scale model on `h >= Delta_n = -n (theta0 - X_(n))`.

use alloc::vec::Vec;

use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::nuisance::{DensityKind, NuisanceDensity};
use crate::posterior::Orientation;
use crate::seed;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("sample size must be positive")]
    EmptySample,
    #[error("rate lambda must be positive and finite, got {0}")]
    InvalidRate(f64),
    #[error("scale parameter must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("nuisance density has kind {found:?}, model needs {expected:?}")]
    KindMismatch { expected: DensityKind, found: DensityKind },
    #[error("parameter {0} is not finite")]
    NonFiniteParameter(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    ParametricShiftExp,
    SemiparamShift,
    SemiparamScale,
}

#[derive(Debug, Clone)]
pub enum ModelSpec {
    ParametricShiftExp { theta0: f64, lambda: f64 },
    SemiparamShift { theta0: f64, eta0: NuisanceDensity },
    SemiparamScale { theta0: f64, eta0: NuisanceDensity },
}

impl ModelSpec {
    pub fn parametric(theta0: f64, lambda: f64) -> Result<Self, ModelError> {
        if !theta0.is_finite() {
            return Err(ModelError::NonFiniteParameter(theta0));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(ModelError::InvalidRate(lambda));
        }
        Ok(Self::ParametricShiftExp { theta0, lambda })
    }

    pub fn shift(theta0: f64, eta0: NuisanceDensity) -> Result<Self, ModelError> {
        if !theta0.is_finite() {
            return Err(ModelError::NonFiniteParameter(theta0));
        }
        check_kind(&eta0, DensityKind::Shift)?;
        Ok(Self::SemiparamShift { theta0, eta0 })
    }

    pub fn scale(theta0: f64, eta0: NuisanceDensity) -> Result<Self, ModelError> {
        if !(theta0.is_finite() && theta0 > 0.0) {
            return Err(ModelError::NonPositiveScale(theta0));
        }
        check_kind(&eta0, DensityKind::Scale)?;
        Ok(Self::SemiparamScale { theta0, eta0 })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Self::ParametricShiftExp { .. } => ModelKind::ParametricShiftExp,
            Self::SemiparamShift { .. } => ModelKind::SemiparamShift,
            Self::SemiparamScale { .. } => ModelKind::SemiparamScale,
        }
    }

    pub fn theta0(&self) -> f64 {
        match self {
            Self::ParametricShiftExp { theta0, .. }
            | Self::SemiparamShift { theta0, .. }
            | Self::SemiparamScale { theta0, .. } => *theta0,
        }
    }

    pub fn eta0(&self) -> Option<&NuisanceDensity> {
        match self {
            Self::ParametricShiftExp { .. } => None,
            Self::SemiparamShift { eta0, .. } | Self::SemiparamScale { eta0, .. } => Some(eta0),
        }
    }

    /// Which side of `Delta_n` carries the likelihood.
    pub fn orientation(&self) -> Orientation {
        match self {
            Self::SemiparamScale { .. } => Orientation::Positive,
            _ => Orientation::Negative,
        }
    }

    /// The nuisance actually used: `eta` when given, otherwise `eta0`.
    fn resolve<'a>(&'a self, eta: Option<&'a NuisanceDensity>) -> Option<&'a NuisanceDensity> {
        eta.or(self.eta0())
    }

    /// `log p_{theta,eta}(x)`, `-inf` outside the support.
    pub fn log_density(&self, theta: f64, eta: Option<&NuisanceDensity>, x: f64) -> f64 {
        match self {
            Self::ParametricShiftExp { lambda, .. } => {
                if x >= theta {
                    lambda.ln() - lambda * (x - theta)
                } else {
                    f64::NEG_INFINITY
                }
            }
            Self::SemiparamShift { .. } => self.resolve(eta).unwrap().log_density(x - theta),
            Self::SemiparamScale { .. } => {
                if !(theta > 0.0) {
                    return f64::NEG_INFINITY;
                }
                self.resolve(eta).unwrap().log_density(x / theta) - theta.ln()
            }
        }
    }

    /// Rate of the limiting exponential: `lambda`, `eta(0)` or `eta(1)/theta0`.
    pub fn gamma(&self, eta: Option<&NuisanceDensity>) -> f64 {
        match self {
            Self::ParametricShiftExp { lambda, .. } => *lambda,
            Self::SemiparamShift { .. } => self.resolve(eta).unwrap().jump_at_zero(),
            Self::SemiparamScale { theta0, .. } => self.resolve(eta).unwrap().jump_at_one() / theta0,
        }
    }

    /// Whether `x` lies in the support of `p_{theta,.}`.
    pub fn in_support(&self, theta: f64, x: f64) -> bool {
        match self {
            Self::SemiparamScale { .. } => theta > 0.0 && x >= 0.0 && x <= theta,
            _ => x >= theta,
        }
    }

    /// Log-Lipschitz constant in `theta` for the given nuisance.
    pub fn log_lipschitz_constant(&self, eta: Option<&NuisanceDensity>) -> f64 {
        match self {
            Self::ParametricShiftExp { lambda, .. } => *lambda,
            _ => crate::nuisance::log_lipschitz_constant(self.resolve(eta).unwrap(), self.theta0()),
        }
    }
}

fn check_kind(eta: &NuisanceDensity, expected: DensityKind) -> Result<(), ModelError> {
    if eta.kind() != expected {
        return Err(ModelError::KindMismatch {
            expected,
            found: eta.kind(),
        });
    }
    Ok(())
}

/// An i.i.d. sample with its order-statistic extremes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    x: Vec<f64>,
    min: f64,
    max: f64,
    seed: u64,
}

impl Dataset {
    pub fn new(x: Vec<f64>, seed: u64) -> Result<Self, ModelError> {
        if x.is_empty() {
            return Err(ModelError::EmptySample);
        }
        let min = x.iter().copied().fold(f64::INFINITY, f64::min);
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { x, min, max, seed })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// `X_(1)`.
    pub fn min(&self) -> f64 {
        self.min
    }

    /// `X_(n)`.
    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Draws `n` observations from `P_{theta,eta}`; `eta` defaults to `eta0`.
/// The stream is a ChaCha8 generator keyed by `seed`.
pub fn sample(
    spec: &ModelSpec,
    theta: f64,
    eta: Option<&NuisanceDensity>,
    n: usize,
    seed: u64,
) -> Result<Dataset, ModelError> {
    if n == 0 {
        return Err(ModelError::EmptySample);
    }
    if !theta.is_finite() {
        return Err(ModelError::NonFiniteParameter(theta));
    }
    let mut rng = seed::rng_for(seed, &[]);
    let x: Vec<f64> = match spec {
        ModelSpec::ParametricShiftExp { lambda, .. } => (0..n)
            .map(|_| {
                let e: f64 = Exp1.sample(&mut rng);
                theta + e / lambda
            })
            .collect(),
        ModelSpec::SemiparamShift { .. } => {
            let eta = spec.resolve(eta).unwrap();
            check_kind(eta, DensityKind::Shift)?;
            (0..n).map(|_| theta + eta.sample(&mut rng)).collect()
        }
        ModelSpec::SemiparamScale { .. } => {
            if !(theta > 0.0) {
                return Err(ModelError::NonPositiveScale(theta));
            }
            let eta = spec.resolve(eta).unwrap();
            check_kind(eta, DensityKind::Scale)?;
            (0..n).map(|_| theta * eta.sample(&mut rng)).collect()
        }
    };
    Dataset::new(x, seed)
}

/// `sum_i log p_{theta0,eta0}(X_i)`.
pub fn base_log_lik(spec: &ModelSpec, data: &Dataset) -> f64 {
    let theta0 = spec.theta0();
    data.x().iter().map(|&x| spec.log_density(theta0, None, x)).sum()
}

/// `sum_i [log p_{theta,eta}(X_i) - log p_{theta0,eta0}(X_i)]`, `-inf` as
/// soon as one observation leaves the support of `p_{theta,eta}`.
pub fn log_lik_ratio(spec: &ModelSpec, theta: f64, eta: Option<&NuisanceDensity>, data: &Dataset) -> f64 {
    let theta0 = spec.theta0();
    let support_ok = match spec {
        ModelSpec::SemiparamScale { .. } => theta > 0.0 && data.max() <= theta,
        _ => data.min() >= theta,
    };
    if !support_ok {
        return f64::NEG_INFINITY;
    }
    if let ModelSpec::ParametricShiftExp { lambda, .. } = spec {
        if data.min() >= theta0 {
            return data.n() as f64 * lambda * (theta - theta0);
        }
        return f64::INFINITY;
    }
    let mut acc = 0.0;
    for &x in data.x() {
        let num = spec.log_density(theta, eta, x);
        let den = spec.log_density(theta0, None, x);
        if den == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        acc += num - den;
    }
    acc
}

/// LAE location and rate under the data-generating model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaeQuantities {
    /// `n (X_(1) - theta0)` for the shift models, `-n (theta0 - X_(n))` for scale.
    pub delta_n: f64,
    pub gamma: f64,
}

pub fn lae_quantities(spec: &ModelSpec, data: &Dataset) -> LaeQuantities {
    let n = data.n() as f64;
    let theta0 = spec.theta0();
    let delta_n = match spec {
        ModelSpec::SemiparamScale { .. } => -(n * (theta0 - data.max())),
        _ => n * (data.min() - theta0),
    };
    LaeQuantities {
        delta_n,
        gamma: spec.gamma(None),
    }
}

/// `theta_n(h) = theta0 + h/n`, pinned to the sample extreme at the boundary
/// so that `h = Delta_n` stays inside the support despite rounding.
pub fn theta_at(spec: &ModelSpec, data: &Dataset, h: f64) -> f64 {
    let n = data.n() as f64;
    let theta = spec.theta0() + h / n;
    let delta = lae_quantities(spec, data).delta_n;
    match spec.orientation() {
        Orientation::Negative if h <= delta => theta.min(data.min()),
        Orientation::Positive if h >= delta => theta.max(data.max()),
        _ => theta,
    }
}

/// Whether `h` lies on the supported side of `Delta_n`.
pub fn h_in_support(spec: &ModelSpec, data: &Dataset, h: f64) -> bool {
    let delta = lae_quantities(spec, data).delta_n;
    match spec.orientation() {
        Orientation::Negative => h <= delta,
        Orientation::Positive => h >= delta,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Remainder {
    Inside(f64),
    /// `h` lies beyond `Delta_n`, where the likelihood ratio vanishes.
    OutsideSupport,
}

impl Remainder {
    pub fn value(self) -> Option<f64> {
        match self {
            Remainder::Inside(v) => Some(v),
            Remainder::OutsideSupport => None,
        }
    }
}

/// Remainder of the LAE expansion,
/// `log_lik_ratio(theta_n(h), eta) - s h gamma_{theta0,eta}` with `s = +1`
/// for the shift models and `s = -1` for the scale model, whose expansion is
/// `exp(-h gamma) 1{h >= Delta_n}`.
pub fn lae_remainder(spec: &ModelSpec, h: f64, eta: Option<&NuisanceDensity>, data: &Dataset) -> Remainder {
    if !h_in_support(spec, data, h) {
        return Remainder::OutsideSupport;
    }
    let theta = theta_at(spec, data, h);
    let sign = match spec.orientation() {
        Orientation::Negative => 1.0,
        Orientation::Positive => -1.0,
    };
    Remainder::Inside(log_lik_ratio(spec, theta, eta, data) - sign * h * spec.gamma(eta))
}

/// Maximum likelihood estimate and its de-biased version.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub theta_hat: f64,
    pub theta_tilde: f64,
    /// Set for the scale model, whose de-biasing is a convention of this
    /// crate (`X_(n) + 1/(n gamma_hat)` with `gamma_hat = eta0(1)/X_(n)`).
    pub experimental: bool,
}

pub fn mle_and_debiased(spec: &ModelSpec, data: &Dataset) -> Estimates {
    let n = data.n() as f64;
    match spec {
        ModelSpec::SemiparamScale { eta0, .. } => {
            let theta_hat = data.max();
            let gamma_hat = eta0.jump_at_one() / theta_hat;
            Estimates {
                theta_hat,
                theta_tilde: theta_hat + 1.0 / (n * gamma_hat),
                experimental: true,
            }
        }
        _ => {
            let theta_hat = data.min();
            Estimates {
                theta_hat,
                theta_tilde: theta_hat - 1.0 / (n * spec.gamma(None)),
                experimental: false,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::{esscher_scale, esscher_shift, Domain, ScoreFunction, DEFAULT_GRID_SIZE};
    use crate::stats;

    fn exp_eta() -> NuisanceDensity {
        let s = ScoreFunction::constant(Domain::HalfLine, DEFAULT_GRID_SIZE, 0.0, 0.5).unwrap();
        esscher_shift(&s, 1.0).unwrap()
    }

    fn wavy_eta() -> NuisanceDensity {
        let s = ScoreFunction::from_fn(Domain::HalfLine, DEFAULT_GRID_SIZE, 0.5, |t| if t.is_infinite() { 0.4 * 5f64.sin() } else { 0.4 * (5.0 * t / (1.0 + t)).sin() }).unwrap();
        esscher_shift(&s, 1.0).unwrap()
    }

    #[test]
    fn arithmetic_examples() {
        let spec = ModelSpec::shift(1.0, exp_eta()).unwrap();
        let data = Dataset::new(alloc::vec![1.5, 2.0, 3.0], 0).unwrap();
        let lae = lae_quantities(&spec, &data);
        assert!((lae.delta_n - 1.5).abs() < 1e-15);
        assert!((lae.gamma - 1.0).abs() < 1e-10);

        let par = ModelSpec::parametric(1.0, 2.0).unwrap();
        let est = mle_and_debiased(&par, &data);
        assert_eq!(est.theta_hat, 1.5);
        assert!((est.theta_tilde - (1.5 - 1.0 / 6.0)).abs() < 1e-15);

        let flat = ScoreFunction::constant(Domain::UnitInterval, DEFAULT_GRID_SIZE, -1.0, 1.0).unwrap();
        let scale = ModelSpec::scale(2.0, esscher_scale(&flat, 1.0).unwrap()).unwrap();
        let d = Dataset::new(alloc::vec![0.5, 1.9], 0).unwrap();
        let lae = lae_quantities(&scale, &d);
        assert!((lae.gamma - 0.5).abs() < 1e-12);
        assert!((lae.delta_n + 0.2).abs() < 1e-12);
    }

    #[test]
    fn parametric_ratio_is_closed_form() {
        let spec = ModelSpec::parametric(0.0, 1.0).unwrap();
        let data = sample(&spec, 0.0, None, 40, 9).unwrap();
        for &theta in &[-1.0, -0.1, 0.0, data.min()] {
            // naive per-point oracle
            let naive: f64 = data
                .x()
                .iter()
                .map(|&x| spec.log_density(theta, None, x) - spec.log_density(0.0, None, x))
                .sum();
            let r = log_lik_ratio(&spec, theta, None, &data);
            assert!((r - 40.0 * theta).abs() < 1e-12);
            assert!((r - naive).abs() < 1e-10);
        }
        assert_eq!(log_lik_ratio(&spec, data.min() + 1e-9, None, &data), f64::NEG_INFINITY);
        for h in [-3.0, -0.5, 0.0] {
            match lae_remainder(&spec, h, None, &data) {
                Remainder::Inside(r) => assert!(r.abs() < 1e-12),
                Remainder::OutsideSupport => panic!(),
            }
        }
        let delta = lae_quantities(&spec, &data).delta_n;
        assert_eq!(lae_remainder(&spec, delta + 0.01, None, &data), Remainder::OutsideSupport);
        assert!(lae_remainder(&spec, delta, None, &data).value().unwrap().abs() < 1e-9);
    }

    #[test]
    fn identity_ratio_is_zero() {
        let spec = ModelSpec::shift(0.3, wavy_eta()).unwrap();
        let data = sample(&spec, 0.3, None, 25, 4).unwrap();
        assert_eq!(log_lik_ratio(&spec, 0.3, None, &data), 0.0);
    }

    #[test]
    fn semiparametric_ratio_matches_quotient_oracle() {
        let eta0 = exp_eta();
        let spec = ModelSpec::shift(0.0, eta0).unwrap();
        let eta = wavy_eta();
        let data = sample(&spec, 0.0, None, 30, 5).unwrap();
        let theta = data.min() - 0.05;
        let naive: f64 = data
            .x()
            .iter()
            .map(|&x| (eta.density(x - theta) / (-x).exp()).ln())
            .sum();
        assert!((log_lik_ratio(&spec, theta, Some(&eta), &data) - naive).abs() < 1e-9);
    }

    #[test]
    fn sampling_is_deterministic_and_rejects_empty() {
        let spec = ModelSpec::shift(0.0, wavy_eta()).unwrap();
        let a = sample(&spec, 0.0, None, 100, 77).unwrap();
        let b = sample(&spec, 0.0, None, 100, 77).unwrap();
        assert_eq!(a, b);
        assert!(matches!(sample(&spec, 0.0, None, 0, 1), Err(ModelError::EmptySample)));
        assert!(matches!(ModelSpec::scale(0.0, wavy_eta()), Err(ModelError::NonPositiveScale(_))));
        assert!(matches!(ModelSpec::scale(1.0, wavy_eta()), Err(ModelError::KindMismatch { .. })));
        assert!(matches!(ModelSpec::parametric(0.0, -1.0), Err(ModelError::InvalidRate(_))));
    }

    #[test]
    fn support_indicator_matches_delta() {
        let spec = ModelSpec::shift(0.0, wavy_eta()).unwrap();
        let mut rng = seed::rng_for(1, &[]);
        use rand::Rng;
        for i in 0..10_000u64 {
            let data = sample(&spec, 0.0, None, 1 + (i % 7) as usize, i).unwrap();
            let delta = lae_quantities(&spec, &data).delta_n;
            let h: f64 = delta + rng.gen_range(-1.0..1.0);
            let theta = spec.theta0() + h / data.n() as f64;
            let product = data.x().iter().all(|&x| spec.in_support(theta, x));
            assert_eq!(product, h <= delta, "case {i}");
        }
    }

    #[test]
    fn scale_sampler_matches_density_moments() {
        let s = ScoreFunction::from_fn(Domain::UnitInterval, DEFAULT_GRID_SIZE, 1.0, |x| (3.0 * x).cos()).unwrap();
        let eta = esscher_scale(&s, 1.0).unwrap();
        let mean_oracle = crate::quad::integrate(|y| y * eta.density(y), 0.0, 1.0, Default::default());
        let spec = ModelSpec::scale(2.0, eta).unwrap();
        let data = sample(&spec, 2.0, None, 20_000, 8).unwrap();
        let ys: Vec<f64> = data.x().iter().map(|x| x / 2.0).collect();
        assert!(data.max() <= 2.0);
        assert!((stats::mean(&ys) - mean_oracle).abs() < 3.0 * stats::std_error(&ys));
    }
}
