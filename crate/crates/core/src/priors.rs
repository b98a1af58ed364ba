//! Priors: thick priors on the boundary parameter and Brownian-path priors on
//! score functions.
//!
//! A score draw is `score(u) = S Psi(Z + W_u)` with `Z ~ N(0, 1)`, `W` a
//! Brownian motion on `[0, 1]` and `Psi(x) = 2 atan(x) / pi`. For the
//! half-line variant `u` is the compactified time `Psi(t)`, so the draw is
//! stored directly on the score grid and its value at `t = inf` is the last
//! node.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::nuisance::{compactify, Domain, NuisanceError, ScoreFunction};
use crate::seed;

/// Stream tag separating score draws from other streams under one seed.
const SCORE_STREAM: u64 = 0x5C0E_5C0E;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PriorError {
    #[error("standard deviation must be positive, got {0}")]
    InvalidScale(f64),
    #[error("uniform prior needs a < b, got [{0}, {1}]")]
    EmptyInterval(f64, f64),
    #[error("grid prior needs at least two increasing nodes with matching non-negative densities")]
    InvalidGrid,
    #[error("grid prior has zero mass")]
    ZeroMass,
}

/// Piecewise-linear density on an increasing grid, normalized on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPrior {
    nodes: Vec<f64>,
    density: Vec<f64>,
}

impl GridPrior {
    pub fn new(nodes: Vec<f64>, density: Vec<f64>) -> Result<Self, PriorError> {
        let ok = nodes.len() >= 2
            && nodes.len() == density.len()
            && nodes.windows(2).all(|w| w[0] < w[1])
            && nodes.iter().all(|x| x.is_finite())
            && density.iter().all(|d| d.is_finite() && *d >= 0.0);
        if !ok {
            return Err(PriorError::InvalidGrid);
        }
        // trapezoid is exact for the piecewise-linear interpolant
        let mass: f64 = nodes
            .windows(2)
            .zip(density.windows(2))
            .map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1]))
            .sum();
        if !(mass > 0.0) {
            return Err(PriorError::ZeroMass);
        }
        let density = density.into_iter().map(|d| d / mass).collect();
        Ok(Self { nodes, density })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn density(&self, theta: f64) -> f64 {
        let last = self.nodes.len() - 1;
        if !(theta >= self.nodes[0] && theta <= self.nodes[last]) {
            return 0.0;
        }
        let k = self.nodes.partition_point(|&x| x <= theta).clamp(1, last) - 1;
        let t = (theta - self.nodes[k]) / (self.nodes[k + 1] - self.nodes[k]);
        self.density[k] * (1.0 - t) + self.density[k + 1] * t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThetaPrior {
    Gaussian { mean: f64, sd: f64 },
    Uniform { a: f64, b: f64 },
    Grid(GridPrior),
}

impl ThetaPrior {
    pub fn gaussian(mean: f64, sd: f64) -> Result<Self, PriorError> {
        if !(sd.is_finite() && sd > 0.0) {
            return Err(PriorError::InvalidScale(sd));
        }
        Ok(Self::Gaussian { mean, sd })
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self, PriorError> {
        if !(a < b && a.is_finite() && b.is_finite()) {
            return Err(PriorError::EmptyInterval(a, b));
        }
        Ok(Self::Uniform { a, b })
    }

    /// `log pi(theta)`, `-inf` outside the support.
    pub fn log_density(&self, theta: f64) -> f64 {
        match self {
            Self::Gaussian { mean, sd } => {
                let z = (theta - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * PI).ln()
            }
            Self::Uniform { a, b } => {
                if theta >= *a && theta <= *b {
                    -(b - a).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Self::Grid(g) => g.density(theta).ln(),
        }
    }

    /// Thick at `theta`: continuous with a strictly positive density there.
    pub fn is_thick_at(&self, theta: f64) -> bool {
        match self {
            Self::Gaussian { .. } => theta.is_finite(),
            Self::Uniform { a, b } => theta > *a && theta < *b,
            Self::Grid(g) => {
                let last = g.nodes.len() - 1;
                theta > g.nodes[0] && theta < g.nodes[last] && g.density(theta) > 0.0
            }
        }
    }
}

pub fn log_theta_prior(prior: &ThetaPrior, theta: f64) -> f64 {
    prior.log_density(theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorePriorVariant {
    /// Scores on the extended half-line, indexed by compactified time.
    Compactified,
    /// Scores on `[0, 1]`.
    UnitInterval,
}

/// Stateless sampler: draw `index` is a pure function of
/// `(master_seed, index)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorePriorSampler {
    pub bound: f64,
    pub variant: ScorePriorVariant,
    pub grid_size: usize,
    pub master_seed: u64,
}

impl ScorePriorSampler {
    pub fn new(bound: f64, variant: ScorePriorVariant, grid_size: usize, master_seed: u64) -> Self {
        Self {
            bound,
            variant,
            grid_size,
            master_seed,
        }
    }

    /// Brownian path `Z + W_u` on the uniform grid of `[0, 1]`.
    pub fn path(&self, index: u64) -> Vec<f64> {
        let mut rng = seed::rng_for(self.master_seed, &[SCORE_STREAM, index]);
        let cells = self.grid_size.max(2) - 1;
        let step_sd = (1.0 / cells as f64).sqrt();
        let z: f64 = StandardNormal.sample(&mut rng);
        let mut w = z;
        let mut path = Vec::with_capacity(cells + 1);
        path.push(w);
        for _ in 0..cells {
            let e: f64 = StandardNormal.sample(&mut rng);
            w += step_sd * e;
            path.push(w);
        }
        path
    }

    pub fn sample_score(&self, index: u64) -> Result<ScoreFunction, NuisanceError> {
        let values = self
            .path(index)
            .into_iter()
            .map(|x| self.bound * compactify(x))
            .collect();
        let domain = match self.variant {
            ScorePriorVariant::Compactified => Domain::HalfLine,
            ScorePriorVariant::UnitInterval => Domain::UnitInterval,
        };
        ScoreFunction::new(domain, values, self.bound)
    }
}
