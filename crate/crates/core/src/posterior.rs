//! Marginal posterior of the local parameter `h = n (theta - theta0)`.
//!
//! The nuisance enters only through the integrated likelihood
//! `s_n(h) = int prod_i p_{theta_n(h),eta}/p_{theta0,eta0}(X_i) dPi(eta)`, which
//! is estimated by an equal-weight Monte Carlo average over prior draws in the
//! log domain. The same draws are used at every grid node.
//!
//! Densities on a [`PosteriorGrid`] are piecewise log-linear between nodes
//! (exponential interpolation). Normalization, moments, quantiles and total
//! variation are integrated exactly for that interpolant, which makes the
//! exponential limit law exactly representable on any grid.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::models::{self, theta_at, ModelSpec};
use crate::nuisance::{DensityKind, Located, NuisanceDensity};
use crate::priors::ThetaPrior;
use crate::stats::log_sum_exp;

/// Smallest accepted number of grid nodes.
pub const MIN_GRID_NODES: usize = 16;
/// Located points kept in memory per block of grid nodes.
const LOCATE_BLOCK: usize = 1 << 18;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PosteriorError {
    #[error("grid needs at least {MIN_GRID_NODES} nodes, got {0}")]
    DegenerateGrid(usize),
    #[error("grid width and grading must be positive")]
    InvalidGridShape,
    #[error("the semiparametric models need at least one nuisance draw")]
    NoNuisanceDraws,
    #[error("nuisance draw {index} has the wrong kind for this model")]
    KindMismatch { index: usize },
    #[error("unnormalized posterior vanishes on the whole grid")]
    EmptyPosterior,
    #[error("limit location {limit} differs from the posterior's Delta_n {posterior}")]
    LocationMismatch { posterior: f64, limit: f64 },
    #[error("limit orientation differs from the posterior's")]
    OrientationMismatch,
    #[error("posterior grids have different nodes")]
    GridMismatch,
    #[error("rate must be positive and finite, got {0}")]
    InvalidRate(f64),
}

/// Side of `Delta_n` that carries the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Support `(-inf, Delta_n]` (shift models).
    Negative,
    /// Support `[Delta_n, inf)` (scale model).
    Positive,
}

impl Orientation {
    fn sign(self) -> f64 {
        match self {
            Orientation::Negative => -1.0,
            Orientation::Positive => 1.0,
        }
    }
}

/// Exponential limit law with density `rate exp(-rate |h - location|)` on the
/// supported side of `location`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpLimit {
    pub location: f64,
    pub rate: f64,
    pub orientation: Orientation,
}

impl ExpLimit {
    pub fn new(location: f64, rate: f64, orientation: Orientation) -> Result<Self, PosteriorError> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(PosteriorError::InvalidRate(rate));
        }
        Ok(Self {
            location,
            rate,
            orientation,
        })
    }

    pub fn log_density(&self, h: f64) -> f64 {
        let dist = self.orientation.sign() * (h - self.location);
        if dist >= 0.0 {
            self.rate.ln() - self.rate * dist
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Mass farther from the location than `h`.
    pub fn mass_beyond(&self, h: f64) -> f64 {
        let dist = self.orientation.sign() * (h - self.location);
        (-self.rate * dist.max(0.0)).exp()
    }

    pub fn mean(&self) -> f64 {
        self.location + self.orientation.sign() / self.rate
    }

    pub fn median(&self) -> f64 {
        self.location + self.orientation.sign() * core::f64::consts::LN_2 / self.rate
    }
}

/// Layout of the `h` grid: `nodes` points spanning `width / gamma` away from
/// `Delta_n`, with distances `width/gamma * (e^{g s} - 1)/(e^g - 1)` for
/// uniform `s` so that nodes cluster at the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub nodes: usize,
    pub width: f64,
    pub grading: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            nodes: 2048,
            width: 40.0,
            grading: 3.0,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<(), PosteriorError> {
        if self.nodes < MIN_GRID_NODES {
            return Err(PosteriorError::DegenerateGrid(self.nodes));
        }
        if !(self.width > 0.0 && self.grading > 0.0 && self.width.is_finite() && self.grading.is_finite()) {
            return Err(PosteriorError::InvalidGridShape);
        }
        Ok(())
    }

    /// Increasing nodes with `Delta_n` as the endpoint on the supported side.
    pub fn build(&self, delta_n: f64, gamma: f64, orientation: Orientation) -> Result<Vec<f64>, PosteriorError> {
        self.validate()?;
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(PosteriorError::InvalidRate(gamma));
        }
        let span = self.width / gamma;
        let denom = self.grading.exp_m1();
        let last = self.nodes - 1;
        let dist = |k: usize| span * (self.grading * k as f64 / last as f64).exp_m1() / denom;
        let mut h: Vec<f64> = match orientation {
            Orientation::Negative => (0..self.nodes).map(|k| delta_n - dist(last - k)).collect(),
            Orientation::Positive => (0..self.nodes).map(|k| delta_n + dist(k)).collect(),
        };
        // exact endpoints
        match orientation {
            Orientation::Negative => h[last] = delta_n,
            Orientation::Positive => h[0] = delta_n,
        }
        Ok(h)
    }
}

/// Normalized posterior density of `h` on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorGrid {
    h: Vec<f64>,
    log_unnorm: Vec<f64>,
    log_norm_const: f64,
    delta_n: f64,
    gamma_hat: f64,
    orientation: Orientation,
    n: usize,
    theta0: f64,
}

impl PosteriorGrid {
    /// Normalizes unnormalized log values given at increasing nodes.
    pub fn from_log_unnorm(
        h: Vec<f64>,
        log_unnorm: Vec<f64>,
        delta_n: f64,
        gamma_hat: f64,
        orientation: Orientation,
        n: usize,
        theta0: f64,
    ) -> Result<Self, PosteriorError> {
        if h.len() < MIN_GRID_NODES || h.len() != log_unnorm.len() || !h.windows(2).all(|w| w[0] < w[1]) {
            return Err(PosteriorError::DegenerateGrid(h.len()));
        }
        let cells: Vec<f64> = (0..h.len() - 1)
            .map(|k| cell_log_mass(h[k], h[k + 1], log_unnorm[k], log_unnorm[k + 1]))
            .collect();
        let log_norm_const = log_sum_exp(&cells);
        if !log_norm_const.is_finite() {
            return Err(PosteriorError::EmptyPosterior);
        }
        Ok(Self {
            h,
            log_unnorm,
            log_norm_const,
            delta_n,
            gamma_hat,
            orientation,
            n,
            theta0,
        })
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn log_unnorm(&self) -> &[f64] {
        &self.log_unnorm
    }

    pub fn log_norm_const(&self) -> f64 {
        self.log_norm_const
    }

    pub fn delta_n(&self) -> f64 {
        self.delta_n
    }

    pub fn gamma_hat(&self) -> f64 {
        self.gamma_hat
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    /// Normalized log-density at every node.
    pub fn log_density(&self) -> Vec<f64> {
        self.log_unnorm.iter().map(|l| l - self.log_norm_const).collect()
    }

    pub fn density(&self) -> Vec<f64> {
        self.log_unnorm.iter().map(|l| (l - self.log_norm_const).exp()).collect()
    }

    /// Total mass of the interpolated density (1 up to rounding).
    pub fn mass(&self) -> f64 {
        let ld = self.log_density();
        (0..self.h.len() - 1)
            .map(|k| cell_log_mass(self.h[k], self.h[k + 1], ld[k], ld[k + 1]).exp())
            .sum()
    }

    /// Maps a local parameter back to `theta`.
    pub fn theta(&self, h: f64) -> f64 {
        self.theta0 + h / self.n as f64
    }

    /// Re-normalizes after adding `shift` to every unnormalized value.
    pub fn rescaled(&self, shift: f64) -> Result<Self, PosteriorError> {
        Self::from_log_unnorm(
            self.h.clone(),
            self.log_unnorm.iter().map(|l| l + shift).collect(),
            self.delta_n,
            self.gamma_hat,
            self.orientation,
            self.n,
            self.theta0,
        )
    }

    /// The limit law centred at this grid's `Delta_n` with rate `gamma_hat`.
    pub fn limit(&self) -> ExpLimit {
        ExpLimit {
            location: self.delta_n,
            rate: self.gamma_hat,
            orientation: self.orientation,
        }
    }
}

/// `(e^d - 1)/d` and `int_0^1 t e^{dt} dt`, by series near zero.
fn exp_moments(d: f64) -> (f64, f64) {
    if d.abs() < 0.5 {
        let mut e1 = 0.0;
        let mut e2 = 0.0;
        let mut term = 1.0; // d^k / k!
        for k in 0..20 {
            e1 += term / (k + 1) as f64;
            e2 += term / (k + 2) as f64;
            term *= d / (k + 1) as f64;
        }
        (e1, e2)
    } else {
        let e1 = d.exp_m1() / d;
        let e2 = (d.exp() * (d - 1.0) + 1.0) / (d * d);
        (e1, e2)
    }
}

/// `log int_a^b` of the log-linear interpolant through `(a, la)` and `(b, lb)`.
/// A `-inf` end falls back to linear interpolation of the density.
pub(crate) fn cell_log_mass(a: f64, b: f64, la: f64, lb: f64) -> f64 {
    let w = b - a;
    match (la.is_finite(), lb.is_finite()) {
        (false, false) => f64::NEG_INFINITY,
        (true, false) => (0.5 * w).ln() + la,
        (false, true) => (0.5 * w).ln() + lb,
        (true, true) => {
            let d = lb - la;
            let log_e1 = if d.abs() < 0.5 {
                exp_moments(d).0.ln()
            } else if d > 0.0 {
                d + (-(-d).exp_m1() / d).ln()
            } else {
                (d.exp_m1() / d).ln()
            };
            w.ln() + la + log_e1
        }
    }
}

/// `int_a^b (p - q)` for two log-linear pieces with finite end values.
fn signed_cell_diff(a: f64, b: f64, pa: f64, pb: f64, qa: f64, qb: f64) -> f64 {
    cell_log_mass(a, b, pa, pb).exp() - cell_log_mass(a, b, qa, qb).exp()
}

/// `int_a^b |p - q|` on one cell.
fn abs_cell_diff(a: f64, b: f64, pa: f64, pb: f64, qa: f64, qb: f64) -> f64 {
    if !(pa.is_finite() && pb.is_finite() && qa.is_finite() && qb.is_finite()) {
        // linear interpolation of both densities
        let da = pa.exp() - qa.exp();
        let db = pb.exp() - qb.exp();
        let w = b - a;
        return if da * db >= 0.0 {
            0.5 * w * (da.abs() + db.abs())
        } else {
            0.5 * w * (da * da + db * db) / (da.abs() + db.abs())
        };
    }
    let sa = pa - qa;
    let sb = pb - qb;
    if sa * sb >= 0.0 {
        return signed_cell_diff(a, b, pa, pb, qa, qb).abs();
    }
    // two exponentials cross exactly once inside the cell
    let t = sa / (sa - sb);
    let x = a + t * (b - a);
    let lx = pa + t * (pb - pa);
    signed_cell_diff(a, x, pa, lx, qa, lx).abs() + signed_cell_diff(x, b, lx, pb, lx, qb).abs()
}

fn tv_on_nodes(h: &[f64], lp: &[f64], lq: &[f64]) -> f64 {
    0.5 * (0..h.len() - 1)
        .map(|k| abs_cell_diff(h[k], h[k + 1], lp[k], lp[k + 1], lq[k], lq[k + 1]))
        .sum::<f64>()
}

/// Total variation between a grid posterior and the exponential limit: the
/// grid integral plus the limit mass beyond the far end of the grid (where
/// the posterior is zero by construction).
pub fn tv_to_limit(post: &PosteriorGrid, limit: &ExpLimit) -> Result<f64, PosteriorError> {
    let tol = 1e-12 * (1.0 + post.delta_n.abs());
    if (post.delta_n - limit.location).abs() > tol {
        return Err(PosteriorError::LocationMismatch {
            posterior: post.delta_n,
            limit: limit.location,
        });
    }
    if post.orientation != limit.orientation {
        return Err(PosteriorError::OrientationMismatch);
    }
    let lp = post.log_density();
    let lq: Vec<f64> = post.h.iter().map(|&h| limit.log_density(h)).collect();
    let far = match post.orientation {
        Orientation::Negative => post.h[0],
        Orientation::Positive => post.h[post.h.len() - 1],
    };
    let tail = limit.mass_beyond(far);
    Ok((tv_on_nodes(&post.h, &lp, &lq) + 0.5 * tail).clamp(0.0, 1.0))
}

/// Total variation between two posteriors on the same nodes.
pub fn tv_between(a: &PosteriorGrid, b: &PosteriorGrid) -> Result<f64, PosteriorError> {
    if a.h != b.h {
        return Err(PosteriorError::GridMismatch);
    }
    Ok(tv_on_nodes(&a.h, &a.log_density(), &b.log_density()).clamp(0.0, 1.0))
}

/// Posterior summaries on the `theta` scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEstimates {
    pub mean: f64,
    pub median: f64,
    /// Mean of the limiting exponential.
    pub limit_mean: f64,
    pub limit_median: f64,
}

pub fn bayes_point_estimates(post: &PosteriorGrid) -> PointEstimates {
    let h = &post.h;
    let ld = post.log_density();
    let mut mean_h = 0.0;
    let mut cum = Vec::with_capacity(h.len());
    cum.push(0.0);
    for k in 0..h.len() - 1 {
        let (a, b) = (h[k], h[k + 1]);
        let w = b - a;
        let (la, lb) = (ld[k], ld[k + 1]);
        let (m, first) = if la.is_finite() && lb.is_finite() {
            let (e1, e2) = exp_moments(lb - la);
            let pa = la.exp();
            (w * pa * e1, w * pa * (a * e1 + w * e2))
        } else {
            let (pa, pb) = (la.exp(), lb.exp());
            (0.5 * w * (pa + pb), w * (pa * (2.0 * a + b) + pb * (a + 2.0 * b)) / 6.0)
        };
        mean_h += first;
        cum.push(cum[k] + m);
    }
    let total = cum[h.len() - 1];
    let median_h = quantile_on_cells(h, &ld, &cum, 0.5 * total);
    let limit = post.limit();
    PointEstimates {
        mean: post.theta(mean_h / total),
        median: post.theta(median_h),
        limit_mean: post.theta(limit.mean()),
        limit_median: post.theta(limit.median()),
    }
}

fn quantile_on_cells(h: &[f64], ld: &[f64], cum: &[f64], target: f64) -> f64 {
    let k = cum.partition_point(|&c| c < target).clamp(1, h.len() - 1) - 1;
    let r = target - cum[k];
    let (a, b) = (h[k], h[k + 1]);
    let w = b - a;
    let (la, lb) = (ld[k], ld[k + 1]);
    if la.is_finite() && lb.is_finite() {
        let d = lb - la;
        let pa = la.exp();
        let t = if d.abs() < 1e-12 {
            r / (w * pa)
        } else {
            (r * d / (w * pa)).ln_1p() / d
        };
        return a + w * t.clamp(0.0, 1.0);
    }
    // linear fallback: bisection on the cell-local mass
    let (pa, pb) = (la.exp(), lb.exp());
    let partial = |t: f64| w * t * (pa + 0.5 * t * (pb - pa));
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if partial(mid) < r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    a + w * 0.5 * (lo + hi)
}

fn check_draws(spec: &ModelSpec, draws: &[NuisanceDensity]) -> Result<(), PosteriorError> {
    let kind = match spec {
        ModelSpec::ParametricShiftExp { .. } => return Ok(()),
        ModelSpec::SemiparamShift { .. } => DensityKind::Shift,
        ModelSpec::SemiparamScale { .. } => DensityKind::Scale,
    };
    if draws.is_empty() {
        return Err(PosteriorError::NoNuisanceDraws);
    }
    match draws.iter().position(|d| d.kind() != kind) {
        Some(index) => Err(PosteriorError::KindMismatch { index }),
        None => Ok(()),
    }
}

/// `log s_n(h)`: the log of the equal-weight average over `draws` of the
/// likelihood ratio at `theta_n(h)`. The parametric model has no nuisance and
/// ignores `draws`.
pub fn integrated_log_lik(
    spec: &ModelSpec,
    h: f64,
    draws: &[NuisanceDensity],
    data: &models::Dataset,
) -> Result<f64, PosteriorError> {
    check_draws(spec, draws)?;
    if !models::h_in_support(spec, data, h) {
        return Ok(f64::NEG_INFINITY);
    }
    let theta = theta_at(spec, data, h);
    if let ModelSpec::ParametricShiftExp { .. } = spec {
        return Ok(models::log_lik_ratio(spec, theta, None, data));
    }
    let terms: Vec<f64> = draws
        .iter()
        .map(|eta| models::log_lik_ratio(spec, theta, Some(eta), data))
        .collect();
    Ok(log_sum_exp(&terms) - (draws.len() as f64).ln())
}

/// [`integrated_log_lik`] at every node of `hs`. When all draws share one node
/// table each observation is located once per node and reused across draws.
pub fn integrated_log_lik_grid(
    spec: &ModelSpec,
    hs: &[f64],
    draws: &[NuisanceDensity],
    data: &models::Dataset,
) -> Result<Vec<f64>, PosteriorError> {
    check_draws(spec, draws)?;
    let shared = match spec {
        ModelSpec::ParametricShiftExp { .. } => false,
        _ => draws.iter().all(|d| d.shares_layout(&draws[0])),
    };
    if !shared {
        return hs.iter().map(|&h| integrated_log_lik(spec, h, draws, data)).collect();
    }
    let n = data.n();
    let base = models::base_log_lik(spec, data);
    let scale = matches!(spec, ModelSpec::SemiparamScale { .. });
    let block = (LOCATE_BLOCK / n).max(1);
    let log_j = (draws.len() as f64).ln();
    let mut out = Vec::with_capacity(hs.len());
    let mut points: Vec<(f64, Option<Located>)> = Vec::with_capacity(block * n);
    for chunk in hs.chunks(block) {
        points.clear();
        // per node: (supported, log Jacobian)
        let mut nodes: Vec<(bool, f64)> = Vec::with_capacity(chunk.len());
        for &h in chunk {
            let supported = models::h_in_support(spec, data, h);
            let theta = theta_at(spec, data, h);
            let log_jac = if scale { -(n as f64) * theta.ln() } else { 0.0 };
            nodes.push((supported, log_jac));
            for &x in data.x() {
                let y = if scale { x / theta } else { x - theta };
                let loc = if supported { draws[0].locate(y) } else { None };
                points.push((y, loc));
            }
        }
        let mut run_max = alloc::vec![f64::NEG_INFINITY; chunk.len()];
        let mut run_sum = alloc::vec![0.0f64; chunk.len()];
        for eta in draws {
            let slope = eta.slope();
            let n_log_z = n as f64 * eta.log_normalizer();
            for (j, (&(supported, log_jac), pts)) in nodes.iter().zip(points.chunks(n)).enumerate() {
                if !supported {
                    continue;
                }
                let mut acc = 0.0;
                let mut slow = 0.0;
                for (y, loc) in pts {
                    match loc {
                        Some(l) => acc += slope * y + eta.cumulative_score_at(l),
                        None => slow += eta.log_density(*y),
                    }
                }
                let v = acc - n_log_z + slow + log_jac - base;
                if v > run_max[j] {
                    run_sum[j] = run_sum[j] * (run_max[j] - v).exp() + 1.0;
                    run_max[j] = v;
                } else if v.is_finite() {
                    run_sum[j] += (v - run_max[j]).exp();
                }
            }
        }
        for j in 0..chunk.len() {
            out.push(if nodes[j].0 && run_max[j].is_finite() {
                run_max[j] + run_sum[j].ln() - log_j
            } else {
                f64::NEG_INFINITY
            });
        }
    }
    Ok(out)
}

/// Grid posterior for `h` under a product prior `Pi_Theta x Pi_H`, with the
/// nuisance integrated out over `draws`. `gamma_hat` is the rate at the true
/// nuisance `eta0` (`lambda` for the parametric model).
pub fn marginal_posterior(
    spec: &ModelSpec,
    data: &models::Dataset,
    theta_prior: &ThetaPrior,
    draws: &[NuisanceDensity],
    grid: &GridConfig,
) -> Result<PosteriorGrid, PosteriorError> {
    grid.validate()?;
    check_draws(spec, draws)?;
    let lae = models::lae_quantities(spec, data);
    let h = grid.build(lae.delta_n, lae.gamma, spec.orientation())?;
    let ll = integrated_log_lik_grid(spec, &h, draws, data)?;
    let log_unnorm: Vec<f64> = h
        .iter()
        .zip(ll)
        .map(|(&hk, l)| l + theta_prior.log_density(theta_at(spec, data, hk)))
        .collect();
    PosteriorGrid::from_log_unnorm(
        h,
        log_unnorm,
        lae.delta_n,
        lae.gamma,
        spec.orientation(),
        data.n(),
        spec.theta0(),
    )
}

/// Plug-in rate from the posterior mean of the nuisance jump: each draw is
/// weighted by its marginal likelihood, integrated over a coarse `h` grid
/// against the prior. Not used by the limit comparisons.
pub fn plug_in_gamma(
    spec: &ModelSpec,
    data: &models::Dataset,
    theta_prior: &ThetaPrior,
    draws: &[NuisanceDensity],
) -> Result<f64, PosteriorError> {
    check_draws(spec, draws)?;
    let lae = models::lae_quantities(spec, data);
    if let ModelSpec::ParametricShiftExp { lambda, .. } = spec {
        return Ok(*lambda);
    }
    let coarse = GridConfig {
        nodes: 64,
        ..GridConfig::default()
    };
    let h = coarse.build(lae.delta_n, lae.gamma, spec.orientation())?;
    let log_prior: Vec<f64> = h.iter().map(|&hk| theta_prior.log_density(theta_at(spec, data, hk))).collect();
    let mut log_w = Vec::with_capacity(draws.len());
    for eta in draws {
        let lv: Vec<f64> = h
            .iter()
            .zip(&log_prior)
            .map(|(&hk, lp)| models::log_lik_ratio(spec, theta_at(spec, data, hk), Some(eta), data) + lp)
            .collect();
        let cells: Vec<f64> = (0..h.len() - 1).map(|k| cell_log_mass(h[k], h[k + 1], lv[k], lv[k + 1])).collect();
        log_w.push(log_sum_exp(&cells));
    }
    let norm = log_sum_exp(&log_w);
    if !norm.is_finite() {
        return Err(PosteriorError::EmptyPosterior);
    }
    Ok(draws
        .iter()
        .zip(&log_w)
        .map(|(eta, lw)| (lw - norm).exp() * spec.gamma(Some(eta)))
        .sum())
}
