//! Score functions and the Esscher transforms that map them to nuisance
//! densities.
//!
//! A [`ScoreFunction`] is a bounded continuous function stored as samples on a
//! uniform grid of the compactified coordinate `u in [0, 1]`. For the
//! half-line domain `u = 2 atan(t) / pi`, so the last sample is the limit of
//! the score at infinity; for the unit interval `u` is the argument itself.
//!
//! [`esscher_shift`] tilts `exp(-alpha x + int_0^x score)` on `[0, inf)`,
//! [`esscher_scale`] tilts `exp(S x + int_0^x score)` on `[0, 1]`. Both cache
//! the cumulative score integral on a refined node table (every score cell
//! split into [`SUBDIVISIONS`] pieces) and evaluate it between nodes by cubic
//! Hermite interpolation whose node slopes are the exact score values. All
//! density queries go through the log domain.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::interp::UniformPchip;
use crate::quad::{self, gauss_legendre5, QuadTol};

/// Default number of score grid points.
pub const DEFAULT_GRID_SIZE: usize = 257;
/// Node-table refinement per score cell. 256 score cells give 4096 table
/// cells, which doubles as the inverse-CDF table.
pub const SUBDIVISIONS: usize = 16;
/// Relative mass left beyond the half-line truncation point.
const TAIL_REL: f64 = 1e-12;
/// Slack on log-scale comparisons against analytic bounds.
pub const LOG_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NuisanceError {
    #[error("score grid needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("score values must be finite")]
    NonFiniteScore,
    #[error("ball radius must be positive and finite, got {0}")]
    InvalidBound(f64),
    #[error("score sup-norm {sup} exceeds the ball radius {bound}")]
    OutsideBall { sup: f64, bound: f64 },
    #[error("tilt alpha = {alpha} must exceed the score bound S = {bound}")]
    AlphaNotAboveBound { alpha: f64, bound: f64 },
    #[error("expected a score on the {expected:?} domain")]
    WrongDomain { expected: Domain },
    #[error("x = {x} lies outside the admissible region")]
    OutsideSupport { x: f64 },
    #[error("theta = {theta} lies outside the admissible neighbourhood of theta0 = {theta0}")]
    OutsideNeighbourhood { theta: f64, theta0: f64 },
    #[error("stored log-normalizer {stored} does not match the rebuilt value {rebuilt}")]
    RecordMismatch { stored: f64, rebuilt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    HalfLine,
    UnitInterval,
}

/// `Psi(t) = 2 atan(t) / pi`, mapping `[-inf, inf]` onto `[-1, 1]`.
pub fn compactify(t: f64) -> f64 {
    2.0 * t.atan() / PI
}

/// Inverse of [`compactify`] on `[0, 1]`; `u = 1` maps to infinity.
pub fn expand(u: f64) -> f64 {
    if u >= 1.0 {
        f64::INFINITY
    } else {
        (FRAC_PI_2 * u).tan()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreFunction {
    domain: Domain,
    bound: f64,
    interp: UniformPchip,
}

impl ScoreFunction {
    /// Builds a score from samples on the uniform compactified grid.
    pub fn new(domain: Domain, values: Vec<f64>, bound: f64) -> Result<Self, NuisanceError> {
        if values.len() < 2 {
            return Err(NuisanceError::TooFewPoints(values.len()));
        }
        if !(bound.is_finite() && bound > 0.0) {
            return Err(NuisanceError::InvalidBound(bound));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NuisanceError::NonFiniteScore);
        }
        let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if sup > bound {
            return Err(NuisanceError::OutsideBall { sup, bound });
        }
        let step = 1.0 / (values.len() - 1) as f64;
        Ok(Self {
            domain,
            bound,
            interp: UniformPchip::new(0.0, step, values),
        })
    }

    /// Samples `f` (a function of the native coordinate) at the grid nodes.
    pub fn from_fn<F: Fn(f64) -> f64>(
        domain: Domain,
        grid_size: usize,
        bound: f64,
        f: F,
    ) -> Result<Self, NuisanceError> {
        let m = grid_size.max(1) - 1;
        let values = (0..grid_size)
            .map(|k| {
                let u = if m == 0 { 0.0 } else { k as f64 / m as f64 };
                match domain {
                    Domain::HalfLine => f(expand(u)),
                    Domain::UnitInterval => f(u),
                }
            })
            .collect();
        Self::new(domain, values, bound)
    }

    pub fn constant(domain: Domain, grid_size: usize, value: f64, bound: f64) -> Result<Self, NuisanceError> {
        Self::new(domain, alloc::vec![value; grid_size], bound)
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Radius `S` of the ball the score lives in.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn values(&self) -> &[f64] {
        self.interp.values()
    }

    pub fn grid_size(&self) -> usize {
        self.interp.len()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values().iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Score at compactified coordinate `u`.
    pub fn at_compact(&self, u: f64) -> f64 {
        self.interp.eval(u)
    }

    /// Score at the native coordinate (`t >= 0` on the half-line, `x` on the
    /// unit interval). Arguments are clamped to the domain.
    pub fn eval(&self, x: f64) -> f64 {
        match self.domain {
            Domain::HalfLine => self.interp.eval(compactify(x.max(0.0))),
            Domain::UnitInterval => self.interp.eval(x),
        }
    }

    /// Sup-distance between two interpolated scores, sampled at the nodes and
    /// eight interior points of every cell of the finer grid.
    pub fn sup_distance(&self, other: &ScoreFunction) -> f64 {
        let cells = (self.grid_size().max(other.grid_size()) - 1) * 8;
        (0..=cells)
            .map(|i| {
                let u = i as f64 / cells as f64;
                (self.at_compact(u) - other.at_compact(u)).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    /// `eta(x) ∝ exp(-alpha x + int_0^x score)` on `[0, inf)`.
    Shift,
    /// `eta(x) ∝ exp(S x + int_0^x score)` on `[0, 1]`.
    Scale,
}

/// Position of a point inside the node table: the cell index plus the four
/// cubic Hermite weights applied to `(L_k, score_k, L_{k+1}, score_{k+1})`.
///
/// Densities built from scores on the same grid share the node layout, so a
/// point located once can be evaluated against many densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Located {
    cell: u32,
    weights: [f64; 4],
}

#[derive(Debug, Clone)]
pub struct NuisanceDensity {
    kind: DensityKind,
    score: ScoreFunction,
    alpha: Option<f64>,
    bound: f64,
    /// Linear part of the exponent: `-alpha` (shift) or `S` (scale).
    slope: f64,
    log_normalizer: f64,
    nodes: Vec<f64>,
    /// `(int_0^{x_k} score, score(x_k))` per node.
    table: Vec<[f64; 2]>,
    /// Normalized cumulative mass at nodes `0..=cut`.
    cdf: Vec<f64>,
    cut: usize,
    tail_rate: f64,
}

/// Esscher transform on the half-line.
pub fn esscher_shift(score: &ScoreFunction, alpha: f64) -> Result<NuisanceDensity, NuisanceError> {
    if score.domain() != Domain::HalfLine {
        return Err(NuisanceError::WrongDomain {
            expected: Domain::HalfLine,
        });
    }
    let bound = score.bound();
    if !(alpha.is_finite() && alpha > bound) {
        return Err(NuisanceError::AlphaNotAboveBound { alpha, bound });
    }
    Ok(NuisanceDensity::build(DensityKind::Shift, score.clone(), Some(alpha), bound))
}

/// Esscher transform on the unit interval with tilt `s` (the ball radius).
pub fn esscher_scale(score: &ScoreFunction, s: f64) -> Result<NuisanceDensity, NuisanceError> {
    if score.domain() != Domain::UnitInterval {
        return Err(NuisanceError::WrongDomain {
            expected: Domain::UnitInterval,
        });
    }
    if !(s.is_finite() && s > 0.0) {
        return Err(NuisanceError::InvalidBound(s));
    }
    let sup = score.sup_norm();
    if sup > s {
        return Err(NuisanceError::OutsideBall { sup, bound: s });
    }
    Ok(NuisanceDensity::build(DensityKind::Scale, score.clone(), None, s))
}

fn hermite_weights(s: f64, dx: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    [
        2.0 * s3 - 3.0 * s2 + 1.0,
        (s3 - 2.0 * s2 + s) * dx,
        -2.0 * s3 + 3.0 * s2,
        (s3 - s2) * dx,
    ]
}

impl NuisanceDensity {
    fn build(kind: DensityKind, score: ScoreFunction, alpha: Option<f64>, bound: f64) -> Self {
        let cells = (score.grid_size() - 1) * SUBDIVISIONS;
        let (node_count, slope) = match kind {
            // u = 1 is the point at infinity and gets no node
            DensityKind::Shift => (cells, -alpha.unwrap_or(f64::NAN)),
            DensityKind::Scale => (cells + 1, bound),
        };
        let nodes: Vec<f64> = (0..node_count)
            .map(|k| {
                let u = k as f64 / cells as f64;
                match kind {
                    DensityKind::Shift => expand(u),
                    DensityKind::Scale => u,
                }
            })
            .collect();
        let mut table = Vec::with_capacity(node_count);
        let mut acc = 0.0;
        table.push([0.0, score.at_compact(0.0)]);
        for k in 1..node_count {
            acc += gauss_legendre5(|x| score.eval(x), nodes[k - 1], nodes[k]);
            table.push([acc, score.at_compact(k as f64 / cells as f64)]);
        }
        let mut density = Self {
            kind,
            score,
            alpha,
            bound,
            slope,
            log_normalizer: 0.0,
            nodes,
            table,
            cdf: Vec::new(),
            cut: node_count - 1,
            tail_rate: 0.0,
        };
        density.normalize();
        density
    }

    fn normalize(&mut self) {
        if self.kind == DensityKind::Shift {
            let alpha = -self.slope;
            let gap = alpha - self.bound;
            // Z >= 1/(alpha+S) and the unnormalized tail beyond T is at most
            // exp(-(alpha-S) T) / (alpha-S)
            let t_star = ((alpha + self.bound) / (gap * TAIL_REL)).ln() / gap;
            let last = self.nodes.len() - 1;
            self.cut = self.nodes.partition_point(|&x| x < t_star).min(last);
        }
        let mut cumulative = Vec::with_capacity(self.cut + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for k in 0..self.cut {
            acc += self.cell_mass_unnormalized(k, self.nodes[k + 1]);
            cumulative.push(acc);
        }
        let tail = if self.kind == DensityKind::Shift {
            let t = self.nodes[self.cut];
            let [l_t, score_t] = self.table[self.cut];
            self.tail_rate = -self.slope - score_t;
            (self.slope * t + l_t).exp() / self.tail_rate
        } else {
            0.0
        };
        let z = acc + tail;
        self.log_normalizer = z.ln();
        self.cdf = cumulative.into_iter().map(|c| c / z).collect();
    }

    /// Unnormalized mass of cell `k` between its left node and `upper`.
    fn cell_mass_unnormalized(&self, k: usize, upper: f64) -> f64 {
        let x0 = self.nodes[k];
        let dx = self.nodes[k + 1] - x0;
        gauss_legendre5(
            |x| {
                let w = hermite_weights((x - x0) / dx, dx);
                (self.slope * x + self.hermite(k, &w)).exp()
            },
            x0,
            upper,
        )
    }

    fn hermite(&self, k: usize, w: &[f64; 4]) -> f64 {
        let [l0, s0] = self.table[k];
        let [l1, s1] = self.table[k + 1];
        w[0] * l0 + w[1] * s0 + w[2] * l1 + w[3] * s1
    }

    pub fn kind(&self) -> DensityKind {
        self.kind
    }

    pub fn score(&self) -> &ScoreFunction {
        &self.score
    }

    /// Tilt `alpha` of a shift-kind density.
    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    /// Ball radius `S`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    /// Linear coefficient of the exponent (`-alpha` or `S`).
    pub fn slope(&self) -> f64 {
        self.slope
    }

    /// Right end of the support (infinite for the shift kind).
    pub fn support_end(&self) -> f64 {
        match self.kind {
            DensityKind::Shift => f64::INFINITY,
            DensityKind::Scale => 1.0,
        }
    }

    /// Point beyond which less than `1e-12` of the mass remains.
    pub fn truncation(&self) -> f64 {
        self.nodes[self.cut]
    }

    /// `eta(0)`.
    pub fn jump_at_zero(&self) -> f64 {
        (-self.log_normalizer).exp()
    }

    /// `eta(1)`.
    pub fn jump_at_one(&self) -> f64 {
        self.density(1.0)
    }

    /// Size of the discontinuity at the varying endpoint: `eta(0)` for the
    /// shift kind, `eta(1)` for the scale kind.
    pub fn boundary_jump(&self) -> f64 {
        match self.kind {
            DensityKind::Shift => self.jump_at_zero(),
            DensityKind::Scale => self.jump_at_one(),
        }
    }

    /// True when both densities use the same node table, which makes
    /// [`Located`] handles interchangeable between them.
    pub fn shares_layout(&self, other: &NuisanceDensity) -> bool {
        self.kind == other.kind && self.nodes.len() == other.nodes.len()
    }

    /// Locates `y` in the node table. `None` outside the support and in the
    /// far tail beyond the last finite node.
    pub fn locate(&self, y: f64) -> Option<Located> {
        if !(y >= 0.0) {
            return None;
        }
        let cells = self.nodes.len() - 1;
        let total = match self.kind {
            DensityKind::Shift => self.nodes.len(),
            DensityKind::Scale => cells,
        };
        let u = match self.kind {
            DensityKind::Shift => compactify(y),
            DensityKind::Scale => {
                if y > 1.0 {
                    return None;
                }
                y
            }
        };
        if y > self.nodes[cells] {
            return None;
        }
        let mut k = ((u * total as f64) as usize).min(cells - 1);
        while k > 0 && self.nodes[k] > y {
            k -= 1;
        }
        while k + 1 < cells && self.nodes[k + 1] <= y {
            k += 1;
        }
        let dx = self.nodes[k + 1] - self.nodes[k];
        Some(Located {
            cell: k as u32,
            weights: hermite_weights((y - self.nodes[k]) / dx, dx),
        })
    }

    /// `int_0^y score` at a located point.
    pub fn cumulative_score_at(&self, loc: &Located) -> f64 {
        self.hermite(loc.cell as usize, &loc.weights)
    }

    /// `int_0^y score` for `y` in the support.
    pub fn cumulative_score(&self, y: f64) -> f64 {
        match self.locate(y) {
            Some(loc) => self.cumulative_score_at(&loc),
            None if self.kind == DensityKind::Shift && y > 0.0 => {
                let last = self.nodes.len() - 1;
                let x_last = self.nodes[last];
                self.table[last][0]
                    + quad::integrate(|t| self.score.eval(t), x_last, y, QuadTol::default())
            }
            None => f64::NAN,
        }
    }

    /// `log eta(y)`; `-inf` outside the support.
    pub fn log_density(&self, y: f64) -> f64 {
        if !(y >= 0.0 && y <= self.support_end()) {
            return f64::NEG_INFINITY;
        }
        self.slope * y + self.cumulative_score(y) - self.log_normalizer
    }

    pub fn density(&self, y: f64) -> f64 {
        self.log_density(y).exp()
    }

    /// `eta'(y) = eta(y) * (slope + score(y))`.
    pub fn derivative(&self, y: f64) -> f64 {
        if !(y >= 0.0 && y <= self.support_end()) {
            return 0.0;
        }
        self.density(y) * (self.slope + self.score.eval(y))
    }

    /// `sup |eta'/eta|`. The score interpolant never leaves its node range, so
    /// the maximum over score grid nodes is exact.
    pub fn max_log_derivative(&self) -> f64 {
        self.score
            .values()
            .iter()
            .map(|s| (self.slope + s).abs())
            .fold(0.0, f64::max)
    }

    /// Distribution function.
    pub fn cdf(&self, y: f64) -> f64 {
        if !(y > 0.0) {
            return 0.0;
        }
        if y >= self.support_end() {
            return 1.0;
        }
        if y >= self.nodes[self.cut] {
            // tail of a shift density, integrated against the exact log-density
            let t = self.nodes[self.cut];
            let extra = quad::integrate(|x| self.density(x), t, y, QuadTol::default());
            return (self.cdf[self.cut] + extra).min(1.0);
        }
        let k = self.nodes.partition_point(|&x| x <= y) - 1;
        let partial = self.cell_mass_unnormalized(k, y) * (-self.log_normalizer).exp();
        self.cdf[k] + partial
    }

    /// Draws one variate by inverse-CDF: bisection over the cumulative node
    /// table, then Newton steps on the cell-local integral.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let v: f64 = rng.gen();
        if v >= self.cdf[self.cut] {
            let t = self.nodes[self.cut];
            let w = (v - self.cdf[self.cut]) / (1.0 - self.cdf[self.cut]);
            return t - (1.0 - w).ln() / self.tail_rate;
        }
        let k = self.cdf.partition_point(|&c| c <= v).saturating_sub(1).min(self.cut - 1);
        let z = self.log_normalizer.exp();
        let target = (v - self.cdf[k]) * z;
        let (x0, x1) = (self.nodes[k], self.nodes[k + 1]);
        let dx = x1 - x0;
        let mass = (self.cdf[k + 1] - self.cdf[k]) * z;
        let mut y = x0 + dx * (target / mass).clamp(0.0, 1.0);
        for _ in 0..8 {
            let f = self.cell_mass_unnormalized(k, y) - target;
            let w = hermite_weights((y - x0) / dx, dx);
            let g = (self.slope * y + self.hermite(k, &w)).exp();
            let step = f / g;
            y = (y - step).clamp(x0, x1);
            if step.abs() <= 1e-15 * (1.0 + y.abs()) {
                break;
            }
        }
        y
    }

    pub fn to_record(&self) -> DensityRecord {
        DensityRecord {
            kind: self.kind,
            domain: self.score.domain(),
            values: self.score.values().to_vec(),
            alpha: self.alpha,
            bound: self.bound,
            log_normalizer: self.log_normalizer,
        }
    }

    /// Rebuilds a density from its record and checks the cached normalizer.
    pub fn from_record(record: &DensityRecord) -> Result<Self, NuisanceError> {
        let score = ScoreFunction::new(record.domain, record.values.clone(), record.bound)?;
        let density = match record.kind {
            DensityKind::Shift => esscher_shift(&score, record.alpha.unwrap_or(f64::NAN))?,
            DensityKind::Scale => esscher_scale(&score, record.bound)?,
        };
        if (density.log_normalizer - record.log_normalizer).abs() > 1e-9 {
            return Err(NuisanceError::RecordMismatch {
                stored: record.log_normalizer,
                rebuilt: density.log_normalizer,
            });
        }
        Ok(density)
    }
}

/// Serializable description of a nuisance density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRecord {
    pub kind: DensityKind,
    pub domain: Domain,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub bound: f64,
    pub log_normalizer: f64,
}

/// Log-Lipschitz constant of the model in `theta`: `alpha + S` for the shift
/// kind, `(2 + 8S) / theta0` for the scale kind on `|theta - theta0| < theta0/2`.
pub fn log_lipschitz_constant(eta: &NuisanceDensity, theta0: f64) -> f64 {
    match eta.kind {
        DensityKind::Shift => -eta.slope + eta.bound,
        DensityKind::Scale => (2.0 + 8.0 * eta.bound) / theta0,
    }
}

/// Checks `p_{theta,eta}(x) / p_{theta0,eta}(x) <= exp(m |theta - theta0|)`
/// at a point inside both supports.
pub fn log_lipschitz_check(
    eta: &NuisanceDensity,
    theta0: f64,
    theta: f64,
    x: f64,
) -> Result<bool, NuisanceError> {
    let log_ratio = match eta.kind {
        DensityKind::Shift => {
            if !(x >= theta0.max(theta)) {
                return Err(NuisanceError::OutsideSupport { x });
            }
            eta.log_density(x - theta) - eta.log_density(x - theta0)
        }
        DensityKind::Scale => {
            if !(theta0 > 0.0 && (theta - theta0).abs() < 0.5 * theta0) {
                return Err(NuisanceError::OutsideNeighbourhood { theta, theta0 });
            }
            if !(x >= 0.0 && x <= theta0.min(theta)) {
                return Err(NuisanceError::OutsideSupport { x });
            }
            (eta.log_density(x / theta) - theta.ln()) - (eta.log_density(x / theta0) - theta0.ln())
        }
    };
    let m = log_lipschitz_constant(eta, theta0);
    Ok(log_ratio <= m * (theta - theta0).abs() + LOG_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_shift() -> NuisanceDensity {
        let s = ScoreFunction::constant(Domain::HalfLine, DEFAULT_GRID_SIZE, 0.0, 0.5).unwrap();
        esscher_shift(&s, 1.0).unwrap()
    }

    fn sine_score(domain: Domain, amp: f64, bound: f64) -> ScoreFunction {
        let k = DEFAULT_GRID_SIZE;
        let values = (0..k)
            .map(|i| amp * (7.0 * i as f64 / (k - 1) as f64).sin())
            .collect();
        ScoreFunction::new(domain, values, bound).unwrap()
    }

    // Independent oracle: integrate the raw score with adaptive Gauss-Kronrod
    // and the unnormalized density panel by panel on a 10x finer partition.
    fn oracle_log_normalizer(score: &ScoreFunction, slope: f64, upper: f64) -> f64 {
        let tol = QuadTol { abs: 1e-15, rel: 1e-13, max_panels: 200 };
        let panels = 2560;
        let knots: Vec<f64> = (0..=panels)
            .map(|i| {
                let frac = i as f64 / panels as f64;
                match score.domain() {
                    Domain::HalfLine => expand(frac * compactify(upper)),
                    Domain::UnitInterval => frac * upper,
                }
            })
            .collect();
        let mut l_left = 0.0;
        let mut z = 0.0;
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            let inner = |x: f64| l_left + quad::integrate(|t| score.eval(t), a, x, tol);
            z += quad::integrate(|x| (slope * x + inner(x)).exp(), a, b, tol);
            l_left += quad::integrate(|t| score.eval(t), a, b, tol);
        }
        z.ln()
    }

    #[test]
    fn zero_score_gives_standard_exponential() {
        let eta = zero_shift();
        assert!(eta.log_normalizer().abs() < 1e-10);
        assert!((eta.jump_at_zero() - 1.0).abs() < 1e-10);
        assert!((eta.log_density(2.0) + 2.0).abs() < 1e-10);
        assert_eq!(eta.log_density(-0.1), f64::NEG_INFINITY);
    }

    #[test]
    fn constant_score_shifts_the_rate() {
        let s = ScoreFunction::constant(Domain::HalfLine, DEFAULT_GRID_SIZE, 0.5, 0.5).unwrap();
        let eta = esscher_shift(&s, 1.0).unwrap();
        assert!((eta.jump_at_zero() - 0.5).abs() < 1e-10);
        assert!((eta.log_density(3.0) - (0.5f64.ln() - 1.5)).abs() < 1e-10);
    }

    #[test]
    fn shift_normalizer_matches_quadrature_oracle() {
        let score = sine_score(Domain::HalfLine, 0.5, 0.5);
        let eta = esscher_shift(&score, 1.0).unwrap();
        let oracle = oracle_log_normalizer(&score, -1.0, 80.0);
        assert!((eta.log_normalizer() - oracle).abs() < 1e-8, "{} vs {}", eta.log_normalizer(), oracle);
        // log-density at 0.7 against the oracle route
        let l = quad::integrate(|t| score.eval(t), 0.0, 0.7, QuadTol::default());
        let expect = -0.7 + l - oracle;
        assert!((eta.log_density(0.7) - expect).abs() < 1e-8);
    }

    #[test]
    fn scale_closed_forms() {
        let zero = ScoreFunction::constant(Domain::UnitInterval, DEFAULT_GRID_SIZE, 0.0, 1.0).unwrap();
        let eta = esscher_scale(&zero, 1.0).unwrap();
        let e = core::f64::consts::E;
        assert!((eta.jump_at_one() - e / (e - 1.0)).abs() < 1e-10);
        assert!((eta.density(0.3) - 0.3f64.exp() / (e - 1.0)).abs() < 1e-10);

        let flat = ScoreFunction::constant(Domain::UnitInterval, DEFAULT_GRID_SIZE, -1.0, 1.0).unwrap();
        let eta = esscher_scale(&flat, 1.0).unwrap();
        assert!((eta.jump_at_one() - 1.0).abs() < 1e-12);
        assert!((eta.density(0.42) - 1.0).abs() < 1e-12);
        assert_eq!(eta.log_density(1.01), f64::NEG_INFINITY);
    }

    #[test]
    fn scale_normalizer_matches_quadrature_oracle() {
        let score = sine_score(Domain::UnitInterval, 0.9, 1.0);
        let eta = esscher_scale(&score, 1.0).unwrap();
        let oracle = oracle_log_normalizer(&score, 1.0, 1.0);
        assert!((eta.log_normalizer() - oracle).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = ScoreFunction::constant(Domain::HalfLine, 9, 0.5, 0.5).unwrap();
        assert!(matches!(esscher_shift(&s, 0.5), Err(NuisanceError::AlphaNotAboveBound { .. })));
        assert!(matches!(
            ScoreFunction::new(Domain::HalfLine, alloc::vec![0.0, f64::NAN], 1.0),
            Err(NuisanceError::NonFiniteScore)
        ));
        assert!(matches!(
            ScoreFunction::new(Domain::UnitInterval, alloc::vec![0.0, 2.0], 1.0),
            Err(NuisanceError::OutsideBall { .. })
        ));
        assert!(matches!(
            ScoreFunction::new(Domain::UnitInterval, alloc::vec![0.0], 1.0),
            Err(NuisanceError::TooFewPoints(1))
        ));
        let u = ScoreFunction::constant(Domain::UnitInterval, 9, 0.5, 0.5).unwrap();
        assert!(matches!(esscher_scale(&u, 0.0), Err(NuisanceError::InvalidBound(_))));
        assert!(matches!(esscher_scale(&u, 0.4), Err(NuisanceError::OutsideBall { .. })));
        assert!(matches!(esscher_shift(&u, 1.0), Err(NuisanceError::WrongDomain { .. })));
    }

    #[test]
    fn log_lipschitz_on_exponential() {
        let eta = zero_shift();
        assert!(log_lipschitz_check(&eta, 0.0, 0.1, 0.5).unwrap());
        let r = eta.log_density(0.4) - eta.log_density(0.5);
        assert!((r - 0.1).abs() < 1e-10);
        assert!(log_lipschitz_check(&eta, 0.0, 0.1, 0.05).is_err());
    }

    #[test]
    fn cdf_and_sampler_agree_with_exponential() {
        let eta = zero_shift();
        for &x in &[0.01, 0.5, 1.0, 3.0, 10.0] {
            assert!((eta.cdf(x) - (1.0 - (-x).exp())).abs() < 1e-10);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..20000).map(|_| eta.sample(&mut rng)).collect();
        let m = crate::stats::mean(&xs);
        assert!((m - 1.0).abs() < 3.0 * crate::stats::std_error(&xs));
        let d = crate::stats::ks_one_sample(&xs, |x| 1.0 - (-x).exp());
        assert!(d < crate::stats::ks_critical_one_sample(xs.len()));
    }

    #[test]
    fn sampler_inverts_the_cdf() {
        let eta = esscher_shift(&sine_score(Domain::HalfLine, 0.4, 0.5), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rng2 = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let v: f64 = rng2.gen();
            let y = eta.sample(&mut rng);
            assert!((eta.cdf(y) - v).abs() < 1e-10);
        }
    }

    #[test]
    fn record_round_trip_checks_normalizer() {
        let eta = esscher_shift(&sine_score(Domain::HalfLine, 0.3, 0.5), 1.2).unwrap();
        let mut rec = eta.to_record();
        let back = NuisanceDensity::from_record(&rec).unwrap();
        assert_eq!(back.log_normalizer(), eta.log_normalizer());
        rec.log_normalizer += 1e-3;
        assert!(matches!(NuisanceDensity::from_record(&rec), Err(NuisanceError::RecordMismatch { .. })));
    }

    #[test]
    fn located_evaluation_matches_direct() {
        let a = esscher_shift(&sine_score(Domain::HalfLine, 0.3, 0.5), 1.0).unwrap();
        let b = zero_shift();
        assert!(a.shares_layout(&b));
        for &y in &[0.0, 1e-6, 0.37, 2.5, 40.0, 300.0] {
            let loc = a.locate(y).unwrap();
            assert_eq!(a.cumulative_score_at(&loc), a.cumulative_score(y));
            assert!((b.cumulative_score_at(&loc)).abs() < 1e-14);
        }
        assert!(a.locate(-1.0).is_none());
        assert!(a.locate(1e6).is_none());
        // far tail falls back to quadrature and stays continuous
        let far = a.log_density(1e4);
        assert!(far.is_finite() && far < -5000.0);
    }
}
