//! The eight experiments: shared preparation, one row per (n, replicate),
//! and experiment-specific report details.

use laebvm_core::metrics::{self, ModelDist};
use laebvm_core::models::{self, Dataset};
use laebvm_core::nuisance::{esscher_scale, esscher_shift, NuisanceDensity, ScoreFunction};
use laebvm_core::posterior::{self, tv_to_limit};
use laebvm_core::seed::{derive_seed, tag};
use laebvm_core::{stats, ModelSpec, Orientation};
use rayon::prelude::*;
use serde_json::{json, Value};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::config::{Experiment, ExperimentConfig, ModelConfig};
use crate::rows::{finite, lookup, Row, SummaryRow};
use crate::RunError;

/// Meaning of the generic `stat_*` columns per experiment.
pub fn stat_columns(e: Experiment) -> Value {
    match e {
        Experiment::HellingerRate => json!({
            "stat_a": "sqrt(n) H(P_{theta0+h/n,eta}, P_{theta0,eta}), H = (int (sqrt p - sqrt q)^2)^(1/2)",
            "stat_b": "stat_a / sqrt(2), the half-integral convention",
        }),
        Experiment::KlDiag => json!({
            "stat_a": "fitted L_1: sqrt(max(-P0 log r, P0 (log r)^2)) / rho_d",
            "stat_b": "fitted L_2: same for the K_n(rho, M) moments, off-grid bound included",
            "stat_c": "sup-distance ||l - l0||, rho_d = sqrt(stat_c)",
        }),
        Experiment::PriorCheck => json!({
            "stat_a": "sup |l| / S (ball membership iff <= 1)",
            "stat_b": "l(0) / S, distributed as 2 atan(Z) / pi",
            "stat_c": "1 if the Esscher transform of the draw is a valid density, else 0",
        }),
        _ => json!({}),
    }
}

/// Everything shared by the replicates of one run.
#[derive(Debug)]
pub struct Context {
    pub cfg: ExperimentConfig,
    pub spec: ModelSpec,
    /// Prior draws: the Monte Carlo sample for the BvM experiments, the
    /// examined nuisances (one per replicate) for the draw experiments.
    pub draws: Vec<NuisanceDensity>,
    pub scores: Vec<ScoreFunction>,
}

fn model_err(e: impl std::fmt::Display) -> RunError {
    RunError::Model(e.to_string())
}

/// Seed of the stream generating prior draws.
pub fn nuisance_seed(master: u64) -> u64 {
    derive_seed(master, &[tag("nuisance")])
}

/// Per-replicate stream: `derive_seed(master, [tag(experiment), n, replicate])`.
pub fn replicate_seed(master: u64, e: Experiment, n: usize, replicate: u64) -> u64 {
    derive_seed(master, &[tag(e.name()), n as u64, replicate])
}

fn transform(cfg: &ExperimentConfig, score: &ScoreFunction) -> Result<NuisanceDensity, RunError> {
    match cfg.model {
        ModelConfig::SemiparamShift { alpha, .. } => esscher_shift(score, alpha).map_err(model_err),
        ModelConfig::SemiparamScale { .. } => esscher_scale(score, score.bound()).map_err(model_err),
        ModelConfig::Parametric { .. } => Err(RunError::Model("parametric model has no nuisance".into())),
    }
}

/// Number of prior draws an experiment needs up front.
fn draws_needed(cfg: &ExperimentConfig) -> usize {
    if cfg.model.is_parametric() {
        return 0;
    }
    match cfg.experiment {
        Experiment::BvmShift | Experiment::BvmScale => cfg.nuisance_draws,
        Experiment::HellingerRate | Experiment::KlDiag | Experiment::PriorCheck => cfg.replicates,
        Experiment::BvmParametric | Experiment::Risk | Experiment::LaeCheck => 0,
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Context, RunError> {
    let spec = cfg.spec()?;
    let count = draws_needed(cfg);
    let (scores, draws) = match cfg.score_sampler(nuisance_seed(cfg.master_seed)) {
        Some(sampler) if count > 0 => {
            let scores: Vec<ScoreFunction> = (0..count as u64)
                .into_par_iter()
                .map(|i| sampler.sample_score(i).map_err(model_err))
                .collect::<Result<_, _>>()?;
            let draws = if cfg.experiment == Experiment::PriorCheck {
                Vec::new()
            } else {
                scores.par_iter().map(|s| transform(cfg, s)).collect::<Result<_, _>>()?
            };
            (scores, draws)
        }
        _ => (Vec::new(), Vec::new()),
    };
    Ok(Context {
        cfg: cfg.clone(),
        spec,
        draws,
        scores,
    })
}

fn data_for(ctx: &Context, n: usize, seed: u64) -> Result<Dataset, RunError> {
    models::sample(&ctx.spec, ctx.spec.theta0(), None, n, seed).map_err(model_err)
}

fn with_estimates(row: &mut Row, ctx: &Context, data: &Dataset) {
    let lae = models::lae_quantities(&ctx.spec, data);
    let est = models::mle_and_debiased(&ctx.spec, data);
    let nf = data.n() as f64;
    let theta0 = ctx.spec.theta0();
    row.delta_n = finite(lae.delta_n);
    row.gamma = finite(lae.gamma);
    row.theta_hat = finite(est.theta_hat);
    row.theta_tilde = finite(est.theta_tilde);
    row.scaled_err_mle = finite(nf * (est.theta_hat - theta0));
    row.scaled_err_debiased = finite(nf * (est.theta_tilde - theta0));
}

/// Computes one row.
pub fn replicate(ctx: &Context, n: usize, r: u64) -> Result<Row, RunError> {
    let cfg = &ctx.cfg;
    let seed = replicate_seed(cfg.master_seed, cfg.experiment, n, r);
    let mut row = Row::new(r, n, seed);
    match cfg.experiment {
        Experiment::Risk => {
            let data = data_for(ctx, n, seed)?;
            with_estimates(&mut row, ctx, &data);
        }
        Experiment::BvmParametric | Experiment::BvmShift | Experiment::BvmScale => {
            let data = data_for(ctx, n, seed)?;
            with_estimates(&mut row, ctx, &data);
            let post = posterior::marginal_posterior(&ctx.spec, &data, &cfg.prior.theta, &ctx.draws, &cfg.grid)
                .map_err(model_err)?;
            row.tv = finite(tv_to_limit(&post, &post.limit()).map_err(model_err)?);
            let est = posterior::bayes_point_estimates(&post);
            row.posterior_mean = finite(est.mean);
            row.posterior_median = finite(est.median);
        }
        Experiment::LaeCheck => {
            let data = data_for(ctx, n, seed)?;
            with_estimates(&mut row, ctx, &data);
            let (minus, plus) = lae_points(&ctx.spec, &data, cfg.h);
            row.remainder_minus = models::lae_remainder(&ctx.spec, minus, None, &data).value();
            row.remainder_plus = models::lae_remainder(&ctx.spec, plus, None, &data).value();
        }
        Experiment::HellingerRate => {
            let eta = ctx.draws.get(r as usize);
            let v = metrics::scaled_hellinger(&ctx.spec, eta, cfg.h, n);
            row.stat_a = finite(v);
            row.stat_b = finite(v / std::f64::consts::SQRT_2);
        }
        Experiment::KlDiag => {
            let eta = &ctx.draws[r as usize];
            let eta0 = ctx.spec.eta0().expect("semiparametric");
            let dist = eta.score().sup_distance(eta0.score());
            let diag = metrics::kl_neighborhood_diagnostics(&ctx.spec, Some(eta), cfg.rho, cfg.m, n).map_err(model_err)?;
            let rho_d = dist.sqrt();
            let k = diag.kl.max(diag.kl_second).max(0.0).sqrt();
            let kn = (diag.fitted_l_kn * diag.rho).max(0.0);
            if rho_d > 0.0 {
                row.stat_a = finite(k / rho_d);
                row.stat_b = finite(kn / rho_d);
            }
            row.stat_c = finite(dist);
        }
        Experiment::PriorCheck => {
            let score = &ctx.scores[r as usize];
            let s = score.bound();
            row.stat_a = finite(score.sup_norm() / s);
            row.stat_b = finite(score.values()[0] / s);
            let valid = transform(cfg, score).map(|eta| eta.log_normalizer().is_finite()).unwrap_or(false);
            row.stat_c = Some(if valid { 1.0 } else { 0.0 });
        }
    }
    Ok(row)
}

/// Local parameters at which the remainder is evaluated: `-h` and `h ^ Delta_n`
/// for the shift models, `h` and `-h v Delta_n` for the scale model.
pub fn lae_points(spec: &ModelSpec, data: &Dataset, h: f64) -> (f64, f64) {
    let h = h.abs();
    let delta = models::lae_quantities(spec, data).delta_n;
    match spec.orientation() {
        Orientation::Negative => (-h, h.min(delta)),
        Orientation::Positive => ((-h).max(delta), h),
    }
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn medians_by_n(rows: &[Row], n_list: &[usize], f: impl Fn(&Row) -> Option<f64>) -> Vec<f64> {
    n_list
        .iter()
        .map(|&n| {
            let xs: Vec<f64> = rows.iter().filter(|r| r.n == n).filter_map(&f).collect();
            if xs.is_empty() { f64::NAN } else { stats::median(&xs) }
        })
        .collect()
}

fn max_by_n(rows: &[Row], n_list: &[usize], f: impl Fn(&Row) -> Option<f64>) -> Vec<f64> {
    n_list
        .iter()
        .map(|&n| rows.iter().filter(|r| r.n == n).filter_map(&f).fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// Experiment-specific verdicts and diagnostics for report.json.
pub fn details(ctx: &Context, rows: &[Row], summary: &[SummaryRow]) -> Result<Value, RunError> {
    let cfg = &ctx.cfg;
    let ns = &cfg.n_list;
    Ok(match cfg.experiment {
        Experiment::Risk => {
            let lambda = ctx.spec.gamma(None);
            let per_n: Vec<Value> = ns
                .iter()
                .map(|&n| {
                    let mle = lookup(summary, n, "scaled_err_mle");
                    let deb = lookup(summary, n, "scaled_err_debiased");
                    json!({
                        "n": n,
                        "mean_sq_mle": mle.map(|s| s.mean_sq),
                        "se_sq_mle": mle.map(|s| s.se_sq),
                        "mean_sq_debiased": deb.map(|s| s.mean_sq),
                        "se_sq_debiased": deb.map(|s| s.se_sq),
                    })
                })
                .collect();
            json!({
                "exact_mean_sq_mle": 2.0 / (lambda * lambda),
                "exact_mean_sq_debiased": 1.0 / (lambda * lambda),
                "per_n": per_n,
            })
        }
        Experiment::BvmParametric | Experiment::BvmShift | Experiment::BvmScale => {
            let med = medians_by_n(rows, ns, |r| r.tv);
            json!({
                "limit": "exponential with location Delta_n and rate gamma at the true nuisance",
                "median_tv": ns.iter().zip(&med).map(|(n, m)| json!({"n": n, "median_tv": m})).collect::<Vec<_>>(),
                "median_tv_strictly_decreasing": strictly_decreasing(&med),
                "nuisance_draws": if ctx.spec.eta0().is_some() { json!(ctx.draws.len()) } else { Value::Null },
            })
        }
        Experiment::LaeCheck => {
            let minus = medians_by_n(rows, ns, |r| r.remainder_minus.map(f64::abs));
            let plus = medians_by_n(rows, ns, |r| r.remainder_plus.map(f64::abs));
            json!({
                "h": cfg.h,
                "median_abs_remainder_minus": minus,
                "median_abs_remainder_plus": plus,
                "minus_decreasing": strictly_decreasing(&minus),
                "plus_decreasing": strictly_decreasing(&plus),
            })
        }
        Experiment::HellingerRate => {
            let max = max_by_n(rows, ns, |r| r.stat_a);
            let growth = max.iter().map(|m| m / max[0] - 1.0).fold(f64::NEG_INFINITY, f64::max);
            let mut v = json!({
                "h": cfg.h,
                "convention": "H^2 = int (sqrt p - sqrt q)^2",
                "max_scaled_hellinger": max,
                "growth": growth,
                "bounded": growth < metrics::RATE_GROWTH_LIMIT,
            });
            if let ModelSpec::ParametricShiftExp { lambda, .. } = ctx.spec {
                let closed: Vec<f64> = ns
                    .iter()
                    .map(|&n| {
                        let nf = n as f64;
                        (2.0 * nf * (1.0 - (-lambda * cfg.h / (2.0 * nf)).exp())).sqrt()
                    })
                    .collect();
                v["closed_form"] = json!(closed);
                v["limit"] = json!((lambda * cfg.h).sqrt());
            }
            v
        }
        Experiment::KlDiag => kl_details(ctx, rows)?,
        Experiment::PriorCheck => {
            let s: Vec<f64> = rows.iter().filter_map(|r| r.stat_b).collect();
            let normal = Normal::new(0.0, 1.0).expect("standard normal");
            let ks = stats::ks_one_sample(&s, |v| normal.cdf((std::f64::consts::FRAC_PI_2 * v).tan()));
            let crit = stats::ks_critical_one_sample(s.len());
            let in_ball = rows.iter().filter(|r| r.stat_a.is_some_and(|a| a <= 1.0)).count();
            let valid = rows.iter().filter(|r| r.stat_c == Some(1.0)).count();
            json!({
                "paths": rows.len(),
                "in_ball": in_ball,
                "esscher_valid": valid,
                "ks_initial_value": ks,
                "ks_critical_1pct": crit,
                "ks_pass": ks < crit,
            })
        }
    })
}

fn kl_details(ctx: &Context, rows: &[Row]) -> Result<Value, RunError> {
    let cfg = &ctx.cfg;
    let ns = &cfg.n_list;
    // reference value of L_1^2 from the first-inclusion bound: 2 E0(X - theta0)
    let p0 = ModelDist::new(&ctx.spec, ctx.spec.theta0(), None);
    let mean_excess = match ctx.spec {
        ModelSpec::SemiparamShift { .. } => Some(
            laebvm_core::quad::integrate(
                |t| {
                    if t >= 1.0 {
                        return 0.0;
                    }
                    let x = t / (1.0 - t);
                    let v = x * (metrics::Density1D::log_density(&p0, ctx.spec.theta0() + x)).exp() / ((1.0 - t) * (1.0 - t));
                    if v.is_finite() { v } else { 0.0 }
                },
                0.0,
                1.0,
                Default::default(),
            ),
        ),
        _ => None,
    };
    let per_n: Vec<Value> = ns
        .iter()
        .map(|&n| {
            let group: Vec<&Row> = rows.iter().filter(|r| r.n == n).collect();
            let in_k = group
                .iter()
                .filter(|r| matches!((r.stat_a, r.stat_c), (Some(a), Some(c)) if a * c.sqrt() <= cfg.rho))
                .count();
            let in_kn = group
                .iter()
                .filter(|r| matches!((r.stat_b, r.stat_c), (Some(b), Some(c)) if b * c.sqrt() <= cfg.rho))
                .count();
            json!({
                "n": n,
                "fitted_l1": group.iter().filter_map(|r| r.stat_a).fold(0.0, f64::max),
                "fitted_l2": group.iter().filter_map(|r| r.stat_b).fold(0.0, f64::max),
                "members_k_rho": in_k,
                "members_kn_rho_m": in_kn,
                "draws": group.len(),
            })
        })
        .collect();
    let c = match cfg.model {
        ModelConfig::SemiparamShift { alpha, bound, .. } => alpha - bound,
        _ => 0.0,
    };
    let marginal: Vec<Value> = ns
        .iter()
        .map(|&n| {
            let seed = derive_seed(cfg.master_seed, &[tag("marginal_lr"), n as u64]);
            let data = data_for(ctx, n, seed)?;
            let m_n = (n as f64).sqrt();
            let d = metrics::marginal_lr_diagnostic(&ctx.spec, &data, &ctx.draws, m_n, c).map_err(model_err)?;
            Ok(json!({"n": n, "diagnostic": d}))
        })
        .collect::<Result<_, RunError>>()?;
    let cone = metrics::cone_probe(&ctx.spec, &ctx.draws, cfg.h, ns, cfg.rho).map_err(model_err)?;
    Ok(json!({
        "rho": cfg.rho,
        "m": cfg.m,
        "grid_nodes": metrics::KN_GRID_NODES,
        "off_grid": "log-Lipschitz modulus times half the theta spacing, added to the grid supremum",
        "reference_l1": mean_excess.map(|m| (2.0 * m).sqrt()),
        "per_n": per_n,
        "marginal_lr": marginal,
        "marginal_lr_label": metrics::MARGINAL_LR_LABEL,
        "cone_probe": {"label": "diagnostic curve, no rate asserted", "threshold": cfg.rho, "curves": cone},
    }))
}
