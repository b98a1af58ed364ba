//! Hellinger and Kullback-Leibler geometry of the models.
//!
//! `H(P, Q) = (int (sqrt p - sqrt q)^2)^{1/2}` with values in `[0, sqrt 2]`.
//! Every quadrature splits the real line at the support endpoints of both
//! arguments; a final unbounded piece is mapped onto `[0, 1)`.

use alloc::vec::Vec;
use core::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::models::{Dataset, ModelSpec};
use crate::nuisance::{DensityKind, NuisanceDensity};
use crate::quad::{self, QuadTol};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("nuisance densities have different kinds")]
    KindMismatch,
    #[error("n_list must be non-empty and strictly increasing")]
    BadNList,
    #[error("{name} must be positive and finite, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("epsilon {0} is outside the nuisance domain")]
    EpsilonOutOfDomain(f64),
    #[error("the semiparametric models need a nuisance density")]
    MissingNuisance,
}

/// A density on the line known through its log and its support.
pub trait Density1D {
    fn log_density(&self, x: f64) -> f64;
    /// Closed support `[lo, hi]`; `hi` may be `+inf`.
    fn support(&self) -> (f64, f64);
}

/// Adapter for a log-density closure.
#[derive(Debug, Clone, Copy)]
pub struct LogDensityFn<F> {
    pub log_density: F,
    pub lo: f64,
    pub hi: f64,
}

impl<F: Fn(f64) -> f64> Density1D for LogDensityFn<F> {
    fn log_density(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return f64::NEG_INFINITY;
        }
        (self.log_density)(x)
    }

    fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

/// `P_{theta,eta}` for a model specification.
#[derive(Debug, Clone, Copy)]
pub struct ModelDist<'a> {
    pub spec: &'a ModelSpec,
    pub theta: f64,
    pub eta: Option<&'a NuisanceDensity>,
}

impl<'a> ModelDist<'a> {
    pub fn new(spec: &'a ModelSpec, theta: f64, eta: Option<&'a NuisanceDensity>) -> Self {
        Self { spec, theta, eta }
    }
}

impl Density1D for ModelDist<'_> {
    fn log_density(&self, x: f64) -> f64 {
        if !self.spec.in_support(self.theta, x) {
            return f64::NEG_INFINITY;
        }
        self.spec.log_density(self.theta, self.eta, x)
    }

    fn support(&self) -> (f64, f64) {
        match self.spec {
            ModelSpec::SemiparamScale { .. } => (0.0, self.theta),
            _ => (self.theta, f64::INFINITY),
        }
    }
}

fn tol() -> QuadTol {
    QuadTol {
        abs: 1e-15,
        rel: 1e-12,
        max_panels: 4000,
    }
}

/// Integrates over consecutive pieces of sorted `breaks`; an infinite last
/// break is handled by `x = a + t / (1 - t)`.
fn integrate_breaks<F: FnMut(f64) -> f64>(mut f: F, breaks: &[f64]) -> f64 {
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !(b > a) {
            continue;
        }
        if b.is_infinite() {
            total += quad::integrate(
                |t| {
                    if t >= 1.0 {
                        return 0.0;
                    }
                    let s = 1.0 - t;
                    let v = f(a + t / s) / (s * s);
                    if v.is_finite() { v } else { 0.0 }
                },
                0.0,
                1.0,
                tol(),
            );
        } else {
            total += quad::integrate(&mut f, a, b, tol());
        }
    }
    total
}

fn merged_breaks(extra: &[f64]) -> Vec<f64> {
    let mut b: Vec<f64> = extra.iter().copied().filter(|x| !x.is_nan()).collect();
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

fn root_density(l: f64) -> f64 {
    if l.is_finite() { (0.5 * l).exp() } else { 0.0 }
}

/// Squared Hellinger distance `int (sqrt p - sqrt q)^2`.
pub fn hellinger_sq<P: Density1D + ?Sized, Q: Density1D + ?Sized>(p: &P, q: &Q) -> f64 {
    let (pa, pb) = p.support();
    let (qa, qb) = q.support();
    let breaks = merged_breaks(&[pa, pb, qa, qb]);
    let v = integrate_breaks(
        |x| {
            let d = root_density(p.log_density(x)) - root_density(q.log_density(x));
            d * d
        },
        &breaks,
    );
    v.clamp(0.0, 2.0)
}

pub fn hellinger<P: Density1D + ?Sized, Q: Density1D + ?Sized>(p: &P, q: &Q) -> f64 {
    hellinger_sq(p, q).sqrt().min(SQRT_2)
}

/// Affinity `int sqrt(p q)`.
pub fn affinity<P: Density1D + ?Sized, Q: Density1D + ?Sized>(p: &P, q: &Q) -> f64 {
    let (pa, pb) = p.support();
    let (qa, qb) = q.support();
    let lo = pa.max(qa);
    let hi = pb.min(qb);
    if !(hi > lo) {
        return 0.0;
    }
    integrate_breaks(|x| (0.5 * (p.log_density(x) + q.log_density(x))).exp(), &[lo, hi])
}

fn required<'a>(spec: &ModelSpec, eta: Option<&'a NuisanceDensity>) -> Result<Option<&'a NuisanceDensity>, MetricsError> {
    match spec {
        ModelSpec::ParametricShiftExp { .. } => Ok(None),
        _ => eta.map(Some).ok_or(MetricsError::MissingNuisance),
    }
}

/// `d_H(eta1, eta2) = H(P_{theta0,eta1}, P_{theta0,eta2})`.
pub fn d_h_nuisance(eta1: &NuisanceDensity, eta2: &NuisanceDensity, theta0: f64) -> Result<f64, MetricsError> {
    if eta1.kind() != eta2.kind() {
        return Err(MetricsError::KindMismatch);
    }
    let spec = match eta1.kind() {
        DensityKind::Shift => ModelSpec::SemiparamShift {
            theta0,
            eta0: eta1.clone(),
        },
        DensityKind::Scale => ModelSpec::SemiparamScale {
            theta0,
            eta0: eta1.clone(),
        },
    };
    Ok(hellinger(
        &ModelDist::new(&spec, theta0, Some(eta1)),
        &ModelDist::new(&spec, theta0, Some(eta2)),
    ))
}

/// `sqrt(n) H(P_{theta0 + h/n, eta}, P_{theta0, eta})`.
pub fn scaled_hellinger(spec: &ModelSpec, eta: Option<&NuisanceDensity>, h: f64, n: usize) -> f64 {
    let theta0 = spec.theta0();
    let p = ModelDist::new(spec, theta0 + h / n as f64, eta);
    let q = ModelDist::new(spec, theta0, eta);
    (n as f64).sqrt() * hellinger(&p, &q)
}

/// Largest accepted growth of the per-n maximum relative to the first `n`.
pub const RATE_GROWTH_LIMIT: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HellingerRateReport {
    pub h: f64,
    pub n_list: Vec<usize>,
    /// `scaled[d][k]` for draw `d` at `n_list[k]`.
    pub scaled: Vec<Vec<f64>>,
    pub max_scaled: Vec<f64>,
    /// `max_k max_scaled[k] / max_scaled[0] - 1`.
    pub growth: f64,
    pub bounded: bool,
}

/// Tabulates `sqrt(n) H` over draws and `n`. The parametric model ignores
/// `eta_draws` and contributes one row.
pub fn hellinger_rate_check(
    spec: &ModelSpec,
    eta_draws: &[NuisanceDensity],
    h: f64,
    n_list: &[usize],
) -> Result<HellingerRateReport, MetricsError> {
    if n_list.is_empty() || n_list[0] == 0 || !n_list.windows(2).all(|w| w[0] < w[1]) {
        return Err(MetricsError::BadNList);
    }
    let scaled: Vec<Vec<f64>> = match spec {
        ModelSpec::ParametricShiftExp { .. } => {
            alloc::vec![n_list.iter().map(|&n| scaled_hellinger(spec, None, h, n)).collect()]
        }
        _ => {
            if eta_draws.is_empty() {
                return Err(MetricsError::MissingNuisance);
            }
            eta_draws
                .iter()
                .map(|eta| n_list.iter().map(|&n| scaled_hellinger(spec, Some(eta), h, n)).collect())
                .collect()
        }
    };
    let max_scaled: Vec<f64> = (0..n_list.len())
        .map(|k| scaled.iter().map(|row| row[k]).fold(0.0, f64::max))
        .collect();
    let growth = if max_scaled[0] > 0.0 {
        max_scaled.iter().map(|m| m / max_scaled[0] - 1.0).fold(f64::NEG_INFINITY, f64::max)
    } else {
        0.0
    };
    Ok(HellingerRateReport {
        h,
        n_list: n_list.to_vec(),
        scaled,
        max_scaled,
        growth,
        bounded: growth < RATE_GROWTH_LIMIT,
    })
}

/// Number of `h` nodes used for the supremum over `|h| <= M`.
pub const KN_GRID_NODES: usize = 64;

/// Both Kullback-Leibler neighbourhood tests for one nuisance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlDiagnostics {
    pub rho: f64,
    pub m: f64,
    pub n: usize,
    /// `-P0 log(p_{theta0,eta}/p0)`.
    pub kl: f64,
    /// `P0 (log(p_{theta0,eta}/p0))^2`.
    pub kl_second: f64,
    pub in_k: [bool; 2],
    /// First and second `P0` moments of the grid supremum.
    pub kn_first: f64,
    pub kn_second: f64,
    /// Bound on how much the supremum can exceed its grid value.
    pub off_grid_bound: f64,
    pub in_kn: [bool; 2],
    /// Smallest `L` with membership in `K(L rho)`.
    pub fitted_l_k: f64,
    /// Smallest `L` with membership in `K_n(L rho, M)`, off-grid bound included.
    pub fitted_l_kn: f64,
}

/// `P0 g` with breaks at the support of `P0` plus `extra`.
fn p0_expect<F: FnMut(f64) -> f64>(p0: &ModelDist<'_>, extra: &[f64], mut g: F) -> f64 {
    let (lo, hi) = p0.support();
    let mut pts: Vec<f64> = extra.iter().copied().filter(|x| *x > lo && *x < hi).collect();
    pts.push(lo);
    pts.push(hi);
    let breaks = merged_breaks(&pts);
    integrate_breaks(
        |x| {
            let l = p0.log_density(x);
            if !l.is_finite() {
                return 0.0;
            }
            let v = g(x);
            if v == 0.0 { 0.0 } else { l.exp() * v }
        },
        &breaks,
    )
}

/// Evaluates the `K(rho)` moment conditions and the `K_n(rho, M)` supremum
/// conditions. The supremum uses a uniform grid of [`KN_GRID_NODES`] values
/// of `h` on `[-M, M]`; between nodes the log-likelihood moves by at most
/// the log-Lipschitz modulus times half a spacing in `theta`.
pub fn kl_neighborhood_diagnostics(
    spec: &ModelSpec,
    eta: Option<&NuisanceDensity>,
    rho: f64,
    m: f64,
    n: usize,
) -> Result<KlDiagnostics, MetricsError> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(MetricsError::NotPositive { name: "rho", value: rho });
    }
    if !(m.is_finite() && m > 0.0) {
        return Err(MetricsError::NotPositive { name: "M", value: m });
    }
    if n == 0 {
        return Err(MetricsError::NotPositive { name: "n", value: 0.0 });
    }
    let eta = required(spec, eta)?;
    let theta0 = spec.theta0();
    let p0 = ModelDist::new(spec, theta0, None);
    let log_ratio = |x: f64| spec.log_density(theta0, eta, x) - spec.log_density(theta0, None, x);
    let kl = -p0_expect(&p0, &[], log_ratio);
    let kl_second = p0_expect(&p0, &[], |x| {
        let r = log_ratio(x);
        r * r
    });

    let nf = n as f64;
    let thetas: Vec<f64> = (0..KN_GRID_NODES)
        .map(|k| theta0 + (-m + 2.0 * m * k as f64 / (KN_GRID_NODES - 1) as f64) / nf)
        .collect();
    let sup_term = |x: f64| {
        let l0 = spec.log_density(theta0, None, x);
        let mut best = f64::NEG_INFINITY;
        for &t in &thetas {
            // outside A the indicator makes the term zero
            let v = if spec.in_support(t, x) {
                l0 - spec.log_density(t, eta, x)
            } else {
                0.0
            };
            best = best.max(v);
        }
        best
    };
    let kn_first = p0_expect(&p0, &thetas, sup_term);
    let kn_second = p0_expect(&p0, &thetas, |x| {
        let v = sup_term(x);
        v * v
    });
    let spacing = 2.0 * m / (KN_GRID_NODES - 1) as f64 / nf;
    let off_grid_bound = spec.log_lipschitz_constant(eta) * 0.5 * spacing;
    let first_upper = kn_first + off_grid_bound;
    let second_upper = (kn_second.sqrt() + off_grid_bound).powi(2);
    let r2 = rho * rho;
    Ok(KlDiagnostics {
        rho,
        m,
        n,
        kl,
        kl_second,
        in_k: [kl <= r2, kl_second <= r2],
        kn_first,
        kn_second,
        off_grid_bound,
        in_kn: [first_upper <= r2, second_upper <= r2],
        fitted_l_k: kl.max(kl_second).max(0.0).sqrt() / rho,
        fitted_l_kn: first_upper.max(second_upper).max(0.0).sqrt() / rho,
    })
}

/// Label attached to the marginal likelihood-ratio check.
pub const MARGINAL_LR_LABEL: &str = "diagnostic, not a proof";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalLrDiagnostic {
    pub m_n: f64,
    pub c: f64,
    /// `-C M_n / n`.
    pub threshold: f64,
    /// Largest `P_n log(p_{theta,eta}/p_{theta0,eta})` found over the draws
    /// and the probed `theta` with `n |theta - theta0| > M_n`.
    pub worst: f64,
    pub satisfied: bool,
    pub label: &'static str,
}

/// Empirical version of the uniform marginal likelihood-ratio condition:
/// the supremum over the nuisance space is replaced by the maximum over
/// `draws`, and the supremum over `theta` by 32 probes on each side of the
/// excluded band plus the sample boundary.
pub fn marginal_lr_diagnostic(
    spec: &ModelSpec,
    data: &Dataset,
    draws: &[NuisanceDensity],
    m_n: f64,
    c: f64,
) -> Result<MarginalLrDiagnostic, MetricsError> {
    if !(m_n.is_finite() && m_n > 0.0) {
        return Err(MetricsError::NotPositive { name: "M_n", value: m_n });
    }
    let theta0 = spec.theta0();
    let nf = data.n() as f64;
    let band = m_n / nf;
    let mut thetas: Vec<f64> = (0..32)
        .flat_map(|k| {
            let d = band * (1.0 + 3.0 * k as f64 / 31.0);
            [theta0 - d, theta0 + d]
        })
        .collect();
    let edge = match spec {
        ModelSpec::SemiparamScale { .. } => data.max(),
        _ => data.min(),
    };
    if (edge - theta0).abs() > band {
        thetas.push(edge);
    }
    let avg_ratio = |theta: f64, eta: Option<&NuisanceDensity>| {
        data.x()
            .iter()
            .map(|&x| {
                if !spec.in_support(theta, x) {
                    return f64::NEG_INFINITY;
                }
                spec.log_density(theta, eta, x) - spec.log_density(theta0, eta, x)
            })
            .sum::<f64>()
            / nf
    };
    let etas: Vec<Option<&NuisanceDensity>> = match spec {
        ModelSpec::ParametricShiftExp { .. } => alloc::vec![None],
        _ if draws.is_empty() => return Err(MetricsError::MissingNuisance),
        _ => draws.iter().map(Some).collect(),
    };
    let worst = etas
        .iter()
        .flat_map(|eta| thetas.iter().map(move |&t| (t, *eta)))
        .map(|(t, eta)| avg_ratio(t, eta))
        .fold(f64::NEG_INFINITY, f64::max);
    let threshold = -c * m_n / nf;
    Ok(MarginalLrDiagnostic {
        m_n,
        c,
        threshold,
        worst,
        satisfied: worst <= threshold,
        label: MARGINAL_LR_LABEL,
    })
}

/// One curve of the cone-condition probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeCurve {
    pub draw: usize,
    pub d_h: f64,
    /// `H(P_{theta_n(h),eta}, P_{theta0,eta}) / H(P_{theta0,eta}, P0)` per `n`.
    pub ratio: Vec<f64>,
}

/// Ratio curves for the draws with `d_H(eta, eta0) >= threshold`. Reported
/// as a diagnostic; no rate is asserted.
pub fn cone_probe(
    spec: &ModelSpec,
    draws: &[NuisanceDensity],
    h: f64,
    n_list: &[usize],
    threshold: f64,
) -> Result<Vec<ConeCurve>, MetricsError> {
    if n_list.is_empty() || n_list[0] == 0 || !n_list.windows(2).all(|w| w[0] < w[1]) {
        return Err(MetricsError::BadNList);
    }
    let eta0 = spec.eta0().ok_or(MetricsError::MissingNuisance)?;
    let theta0 = spec.theta0();
    let mut out = Vec::new();
    for (i, eta) in draws.iter().enumerate() {
        let d_h = d_h_nuisance(eta, eta0, theta0)?;
        if d_h < threshold || d_h == 0.0 {
            continue;
        }
        let ratio = n_list
            .iter()
            .map(|&n| scaled_hellinger(spec, Some(eta), h, n) / (n as f64).sqrt() / d_h)
            .collect();
        out.push(ConeCurve { draw: i, d_h, ratio });
    }
    Ok(out)
}

/// The boundary-mass sandwich `J eps - eps int|eta'| <= mass <= J eps + eps int|eta'|`
/// with `J` the jump at the supported boundary and all integrals over the
/// `eps`-band next to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntBounds {
    pub integral: f64,
    pub lower: f64,
    pub upper: f64,
    pub holds: bool,
}

/// Slack allowed for quadrature error in [`int_bounds_check`].
pub const INT_BOUNDS_SLACK: f64 = 1e-12;

pub fn int_bounds_check(eta: &NuisanceDensity, eps: f64) -> Result<IntBounds, MetricsError> {
    let (a, b, jump) = match eta.kind() {
        DensityKind::Shift => {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(MetricsError::EpsilonOutOfDomain(eps));
            }
            (0.0, eps, eta.jump_at_zero())
        }
        DensityKind::Scale => {
            if !(eps > 0.0 && eps <= 1.0) {
                return Err(MetricsError::EpsilonOutOfDomain(eps));
            }
            (1.0 - eps, 1.0, eta.jump_at_one())
        }
    };
    let integral = quad::integrate(|y| eta.density(y), a, b, tol());
    let var = quad::integrate(|y| eta.derivative(y).abs(), a, b, tol());
    let lower = jump * eps - eps * var;
    let upper = jump * eps + eps * var;
    let slack = INT_BOUNDS_SLACK * (1.0 + jump * eps);
    Ok(IntBounds {
        integral,
        lower,
        upper,
        holds: integral >= lower - slack && integral <= upper + slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::{esscher_scale, esscher_shift, Domain, ScoreFunction, DEFAULT_GRID_SIZE};

    fn exp_dist(rate: f64, shift: f64) -> LogDensityFn<impl Fn(f64) -> f64> {
        LogDensityFn {
            log_density: move |x: f64| rate.ln() - rate * (x - shift),
            lo: shift,
            hi: f64::INFINITY,
        }
    }

    fn shift_eta(c: f64) -> NuisanceDensity {
        let s = ScoreFunction::constant(Domain::HalfLine, DEFAULT_GRID_SIZE, c, 0.5).unwrap();
        esscher_shift(&s, 1.0).unwrap()
    }

    #[test]
    fn identical_and_disjoint() {
        let p = exp_dist(1.0, 0.0);
        assert!(hellinger(&p, &p) < 1e-9);
        let u1 = LogDensityFn { log_density: |_| 0.0, lo: 0.0, hi: 1.0 };
        let u2 = LogDensityFn { log_density: |_| 0.0, lo: 2.0, hi: 3.0 };
        assert!((hellinger(&u1, &u2) - SQRT_2).abs() < 1e-9);
        assert_eq!(affinity(&u1, &u2), 0.0);
    }

    #[test]
    fn shifted_exponentials_closed_form() {
        for (rate, delta) in [(1.0, 0.3), (2.5, 0.01), (0.7, 2.0)] {
            let p = exp_dist(rate, 0.0);
            let q = exp_dist(rate, delta);
            let a = (-rate * delta / 2.0).exp();
            assert!((affinity(&p, &q) - a).abs() < 1e-10);
            assert!((hellinger_sq(&p, &q) - 2.0 * (1.0 - a)).abs() < 1e-10);
            assert!((hellinger_sq(&p, &q) - (2.0 - 2.0 * affinity(&p, &q))).abs() < 1e-10);
        }
    }

    #[test]
    fn nuisance_distance_between_exponential_rates() {
        // Exp(1) against Exp(1 - s): affinity 2 sqrt(r1 r2) / (r1 + r2)
        let s = 0.3;
        let d = d_h_nuisance(&shift_eta(0.0), &shift_eta(s), 0.7).unwrap();
        let (r1, r2) = (1.0f64, 1.0 - s);
        let aff = 2.0 * (r1 * r2).sqrt() / (r1 + r2);
        assert!((d * d - 2.0 * (1.0 - aff)).abs() < 1e-8, "{d}");
        let back = d_h_nuisance(&shift_eta(s), &shift_eta(0.0), 0.7).unwrap();
        assert!((d - back).abs() < 1e-12);
        assert_eq!(d_h_nuisance(&shift_eta(0.1), &shift_eta(0.1), 0.0).unwrap(), 0.0);
        let unit = ScoreFunction::constant(Domain::UnitInterval, 17, 0.0, 1.0).unwrap();
        let scale = esscher_scale(&unit, 1.0).unwrap();
        assert_eq!(d_h_nuisance(&shift_eta(0.0), &scale, 1.0), Err(MetricsError::KindMismatch));
    }

    #[test]
    fn parametric_rate_matches_closed_form() {
        let spec = ModelSpec::parametric(0.0, 1.0).unwrap();
        let report = hellinger_rate_check(&spec, &[], 1.0, &[100, 1000, 10_000]).unwrap();
        for (k, &n) in report.n_list.iter().enumerate() {
            let nf = n as f64;
            let closed = nf.sqrt() * (1.0 - (-1.0 / (2.0 * nf)).exp()).sqrt();
            assert!((report.max_scaled[k] / SQRT_2 - closed).abs() < 1e-8);
        }
        assert!((report.max_scaled[2] / SQRT_2 - 0.5f64.sqrt()).abs() < 1e-3);
        assert!(report.bounded);
        let zero = hellinger_rate_check(&spec, &[], 0.0, &[10, 20]).unwrap();
        assert!(zero.max_scaled.iter().all(|v| *v < 1e-9));
        assert_eq!(hellinger_rate_check(&spec, &[], 1.0, &[20, 10]), Err(MetricsError::BadNList));
    }

    #[test]
    fn kl_moments_at_truth_vanish() {
        let eta0 = shift_eta(0.0);
        let spec = ModelSpec::shift(0.0, eta0.clone()).unwrap();
        let d = kl_neighborhood_diagnostics(&spec, Some(&eta0), 0.1, 1.0, 100).unwrap();
        assert!(d.kl.abs() < 1e-12 && d.kl_second < 1e-12);
        assert_eq!(d.in_k, [true, true]);
    }

    #[test]
    fn kl_moments_for_a_rate_change() {
        // eta = Exp(1 - r), eta0 = Exp(1): log ratio ln(1 - r) + r y
        let r = 0.04;
        let spec = ModelSpec::shift(0.0, shift_eta(0.0)).unwrap();
        let eta = shift_eta(r);
        let d = kl_neighborhood_diagnostics(&spec, Some(&eta), r.sqrt(), 1.0, 1000).unwrap();
        let c = (1.0 - r).ln();
        assert!((d.kl - (-c - r)).abs() < 1e-10);
        assert!((d.kl_second - (r * r + (c + r) * (c + r))).abs() < 1e-10);
        // the first-inclusion bound: -P0 log ratio <= 2 rho^2 E0(X - theta0) (1 + O(rho^2))
        assert!(d.kl <= 2.0 * r * 1.0 * (1.0 + r));
        assert!(d.off_grid_bound > 0.0);
        assert!(d.kn_first >= d.kl - 1e-12);
    }

    #[test]
    fn int_bounds_exponential() {
        let b = int_bounds_check(&shift_eta(0.0), 0.1).unwrap();
        let m = 1.0 - (-0.1f64).exp();
        assert!((b.integral - m).abs() < 1e-10);
        assert!((b.lower - (0.1 - 0.1 * m)).abs() < 1e-10);
        assert!((b.upper - (0.1 + 0.1 * m)).abs() < 1e-10);
        assert!(b.holds);
        assert!(int_bounds_check(&shift_eta(0.0), -1.0).is_err());
    }

    #[test]
    fn sandwich_gap_is_of_order_eps_times_alpha_plus_s() {
        let s = ScoreFunction::from_fn(Domain::HalfLine, DEFAULT_GRID_SIZE, 0.5, |t| {
            if t.is_infinite() { -0.5 } else { -0.5 * t / (1.0 + t) }
        })
        .unwrap();
        let eta = esscher_shift(&s, 1.0).unwrap();
        for eps in [1e-1, 1e-2, 1e-3] {
            let b = int_bounds_check(&eta, eps).unwrap();
            let rel_gap = (b.upper - b.lower) / (2.0 * eta.jump_at_zero() * eps);
            assert!(rel_gap <= eps * 1.5 + 1e-12, "{rel_gap}");
        }
    }

    #[test]
    fn log_derivative_bound_is_alpha_plus_s() {
        // |eta'/eta| = |l - alpha| reaches alpha + S at l = -S, beyond alpha - S
        let eta = shift_eta(-0.5);
        assert!((eta.max_log_derivative() - 1.5).abs() < 1e-12);
        assert!(eta.max_log_derivative() > 1.0 - 0.5);
    }
}
