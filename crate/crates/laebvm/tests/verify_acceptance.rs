//! Acceptance criteria 1-9. Each test prints one `CRITERION k: PASS|FAIL`
//! line to stderr (uncaptured) and asserts both the criterion and its time
//! budget. Tests are serialized so budgets are measured without contention.

use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use laebvm::{ExperimentConfig, ExperimentResult, Overrides, RunOptions};
use laebvm_core::metrics::{affinity, hellinger, hellinger_sq, int_bounds_check, ModelDist};
use laebvm_core::models::{lae_quantities, sample};
use laebvm_core::nuisance::{esscher_scale, esscher_shift, log_lipschitz_check, NuisanceDensity};
use laebvm_core::quad::{integrate, QuadTol};
use laebvm_core::seed::derive_seed;
use laebvm_core::{stats, ModelSpec, ScorePriorSampler, ScorePriorVariant};
use serde_json::Value;

static SERIAL: Mutex<()> = Mutex::new(());

fn verdict(k: u32, pass: bool, elapsed: Duration, budget: Duration, msg: String) {
    let ok = pass && elapsed < budget;
    let line = format!(
        "CRITERION {k}: {} {msg} [{:.1}s of {:.0}s]",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    let _ = writeln!(std::io::stderr(), "{line}");
    assert!(ok, "{line}");
}

fn run(text: &str, threads: Option<usize>) -> ExperimentResult {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_json(
        text,
        &Overrides {
            master_seed: None,
            output_dir: Some(dir.path().to_path_buf()),
        },
    )
    .unwrap();
    laebvm::run(&cfg, &RunOptions { threads, resume: false }).unwrap()
}

fn medians(report: &Value) -> Vec<f64> {
    report["details"]["median_tv"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["median_tv"].as_f64().unwrap())
        .collect()
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn unit(master: u64, parts: &[u64]) -> f64 {
    (derive_seed(master, parts) >> 11) as f64 / (1u64 << 53) as f64
}

#[test]
fn criterion_1_risk_table() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let res = run(r#"{"experiment": "risk", "master_seed": 101, "replicates": 100000, "n_list": [50]}"#, Some(1));
    let row = &res.report["details"]["per_n"][0];
    let mle = row["mean_sq_mle"].as_f64().unwrap();
    let deb = row["mean_sq_debiased"].as_f64().unwrap();
    let pass = (mle - 2.0).abs() <= 0.05 && (deb - 1.0).abs() <= 0.03;
    verdict(
        1,
        pass,
        t.elapsed(),
        Duration::from_secs(10),
        format!("E[(n(X(1)-t0))^2] = {mle:.4}, de-biased {deb:.4}"),
    );
}

#[test]
fn criterion_2_exact_pivotality() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let spec = ModelSpec::parametric(0.0, 1.0).unwrap();
    let crit = 1.63 / 100.0;
    let mut ks = Vec::new();
    for n in [10usize, 10_000] {
        let deltas: Vec<f64> = (0..10_000u64)
            .map(|i| {
                let data = sample(&spec, 0.0, None, n, derive_seed(20_140_101, &[n as u64, i])).unwrap();
                lae_quantities(&spec, &data).delta_n
            })
            .collect();
        ks.push(stats::ks_one_sample(&deltas, |x| 1.0 - (-x).exp()));
    }
    verdict(
        2,
        ks.iter().all(|d| *d < crit),
        t.elapsed(),
        Duration::from_secs(5),
        format!("KS n=10: {:.5}, n=1e4: {:.5}, critical {crit}", ks[0], ks[1]),
    );
}

#[test]
fn criterion_3_parametric_bvm() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let res = run(
        r#"{"experiment": "bvm_parametric", "master_seed": 303, "n_list": [25, 100, 400], "replicates": 200,
            "prior": {"theta": {"type": "gaussian", "mean": 0, "sd": 1}}}"#,
        None,
    );
    let m = medians(&res.report);
    let pass = m.windows(2).all(|w| w[1] < w[0]) && m[2] < 0.05;
    verdict(3, pass, t.elapsed(), Duration::from_secs(120), format!("median TV {}", sci(&m)));
}

#[test]
fn criterion_4_conjugate_exactness() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let res = run(
        r#"{"experiment": "bvm_parametric", "master_seed": 404, "n_list": [25, 100, 400], "replicates": 50,
            "prior": {"theta": {"type": "uniform", "a": -1000, "b": 1000}}}"#,
        None,
    );
    let worst = res.rows.iter().map(|r| r.tv.unwrap()).fold(0.0, f64::max);
    verdict(
        4,
        res.rows.len() == 150 && worst <= 1e-6,
        t.elapsed(),
        Duration::from_secs(10),
        format!("max TV over {} replicates {worst:.2e}", res.rows.len()),
    );
}

#[test]
fn criterion_5_semiparametric_shift_bvm() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let res = run(
        r#"{"experiment": "bvm_shift", "master_seed": 505, "n_list": [50, 200], "replicates": 100, "nuisance_draws": 500}"#,
        None,
    );
    let m = medians(&res.report);
    verdict(5, m[1] < m[0], t.elapsed(), Duration::from_secs(1200), format!("median TV n=50: {:.4}, n=200: {:.4}", m[0], m[1]));
}

#[test]
fn criterion_6_semiparametric_scale_bvm() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let res = run(
        r#"{"experiment": "bvm_scale", "master_seed": 606, "n_list": [50, 200], "replicates": 100, "nuisance_draws": 500,
            "model": {"kind": "semiparam_scale", "theta0": 2, "bound": 1, "score": {"type": "constant", "value": 0}}}"#,
        None,
    );
    let m = medians(&res.report);
    verdict(6, m[1] < m[0], t.elapsed(), Duration::from_secs(1200), format!("median TV n=50: {:.4}, n=200: {:.4}", m[0], m[1]));
}

#[test]
fn criterion_7_lae_remainder() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let res = run(
        r#"{"experiment": "lae_check", "master_seed": 707, "n_list": [100, 1000, 10000], "replicates": 200, "h": 1}"#,
        None,
    );
    let d = &res.report["details"];
    let get = |k: &str| -> Vec<f64> { d[k].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect() };
    let (minus, plus) = (get("median_abs_remainder_minus"), get("median_abs_remainder_plus"));
    let dec = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    verdict(
        7,
        dec(&minus) && dec(&plus),
        t.elapsed(),
        Duration::from_secs(120),
        format!("median |R| at h=-1 {}, at h=1^Dn {}", sci(&minus), sci(&plus)),
    );
}

#[test]
fn criterion_8_hellinger_rate() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let semi = run(
        r#"{"experiment": "hellinger_rate", "master_seed": 808, "n_list": [100, 1000, 10000], "replicates": 100, "h": 1}"#,
        None,
    );
    let growth = semi.report["details"]["growth"].as_f64().unwrap();
    let par = run(
        r#"{"experiment": "hellinger_rate", "master_seed": 808, "n_list": [100, 1000, 10000], "replicates": 1, "h": 1,
            "model": {"kind": "parametric", "theta0": 0, "lambda": 1}}"#,
        None,
    );
    // stat_b is sqrt(n) H / sqrt(2), the half-convention scaled distance
    let got = par.rows.iter().find(|r| r.n == 10_000).unwrap().stat_b.unwrap();
    let closed = (10_000f64 * (1.0 - (-1.0f64 / 20_000.0).exp())).sqrt();
    let limit = 0.5f64.sqrt();
    let pass = growth < 0.10 && (got - closed).abs() < 1e-3 && (closed - limit).abs() < 1e-3;
    verdict(
        8,
        pass,
        t.elapsed(),
        Duration::from_secs(300),
        format!("max sqrt(n)H growth {:.4}%; parametric {got:.6} vs closed form {closed:.6}, limit {limit:.6}", 100.0 * growth),
    );
}

fn normalization_error(eta: &NuisanceDensity) -> f64 {
    let mass = match eta.support_end() {
        e if e.is_finite() => integrate(|x| eta.density(x), 0.0, e, QuadTol::default()),
        _ => integrate(
            |t| {
                if t >= 1.0 {
                    return 0.0;
                }
                let s = 1.0 - t;
                eta.density(t / s) / (s * s)
            },
            0.0,
            1.0,
            QuadTol::default(),
        ),
    };
    (mass - 1.0).abs()
}

/// Normalization, monotonicity, tail/boundedness and the log-Lipschitz bound
/// for one density; returns a description of the first violation.
fn esscher_violation(eta: &NuisanceDensity, shift: bool, alpha: f64, s: f64) -> Option<String> {
    let err = normalization_error(eta);
    if err > 1e-8 {
        return Some(format!("normalization error {err:.2e}"));
    }
    if shift {
        let j = eta.jump_at_zero();
        let mut prev = j;
        for k in 1..=2000 {
            let x = k as f64 * 0.01;
            let d = eta.density(x);
            if d > prev {
                return Some(format!("increase at {x}"));
            }
            if d > j * (-(alpha - s) * x).exp() * (1.0 + 1e-12) {
                return Some(format!("tail bound at {x}"));
            }
            prev = d;
        }
        for (theta, x) in [(-0.05, 0.1), (0.05, 0.3), (-0.5, 2.0), (0.2, 7.0)] {
            if !log_lipschitz_check(eta, 0.0, theta, x).unwrap() {
                return Some(format!("log-Lipschitz at theta {theta}, x {x}"));
            }
        }
    } else {
        let (lo, hi) = ((-2.0 * s).exp(), (2.0 * s).exp());
        let mut prev = 0.0;
        for k in 0..=1000 {
            let x = k as f64 / 1000.0;
            let d = eta.density(x);
            if d < prev {
                return Some(format!("decrease at {x}"));
            }
            if d < lo * (1.0 - 1e-12) || d > hi * (1.0 + 1e-12) {
                return Some(format!("bounds at {x}"));
            }
            prev = d;
        }
        for (theta, x) in [(1.9, 0.5), (2.1, 1.99), (1.5, 1.2), (2.5, 0.01)] {
            if !log_lipschitz_check(eta, 2.0, theta, x).unwrap() {
                return Some(format!("log-Lipschitz at theta {theta}, x {x}"));
            }
        }
    }
    None
}

fn random_density(master: u64, i: u64) -> (NuisanceDensity, bool, f64, f64) {
    let shift = i % 2 == 0;
    let s = 0.1 + 1.9 * unit(master, &[i, 0]);
    let variant = if shift { ScorePriorVariant::Compactified } else { ScorePriorVariant::UnitInterval };
    let score = ScorePriorSampler::new(s, variant, 257, master).sample_score(i).unwrap();
    if shift {
        let alpha = s + 0.02 + 2.0 * unit(master, &[i, 1]);
        (esscher_shift(&score, alpha).unwrap(), true, alpha, s)
    } else {
        (esscher_scale(&score, s).unwrap(), false, 0.0, s)
    }
}

#[test]
fn criterion_9_property_suites() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let master = 909;
    let mut failures = Vec::new();

    let mut esscher_ok = 0;
    for i in 0..1000 {
        let (eta, shift, alpha, s) = random_density(master, i);
        match esscher_violation(&eta, shift, alpha, s) {
            None => esscher_ok += 1,
            Some(why) => failures.push(format!("esscher draw {i}: {why}")),
        }
    }

    let mut int_ok = 0;
    for i in 0..1000 {
        let (eta, shift, _, _) = random_density(master + 1, i);
        let u = unit(master + 1, &[i, 2]);
        let eps = if shift { 10f64.powf(-4.0 + 5.0 * u) } else { 10f64.powf(-4.0 + 4.0 * u) };
        let b = int_bounds_check(&eta, eps).unwrap();
        if b.holds {
            int_ok += 1;
        } else {
            failures.push(format!("int bounds draw {i}: eps {eps}, {b:?}"));
        }
    }

    let mut ball_ok = 0;
    for i in 0..100_000u64 {
        let s = if i % 2 == 0 { 0.5 } else { 1.0 };
        let variant = if i % 2 == 0 { ScorePriorVariant::Compactified } else { ScorePriorVariant::UnitInterval };
        match ScorePriorSampler::new(s, variant, 257, master + 2).sample_score(i) {
            Ok(score) if score.sup_norm() <= s => ball_ok += 1,
            _ => failures.push(format!("ball path {i}")),
        }
    }

    let mut hell_ok = 0;
    let etas: Vec<NuisanceDensity> = (0..60u64).map(|i| random_density(master + 3, 2 * i).0).collect();
    let spec = ModelSpec::shift(0.0, etas[0].clone()).unwrap();
    for i in 0..500u64 {
        let pick = |k: u64| {
            let e = &etas[(derive_seed(master + 3, &[i, k]) % etas.len() as u64) as usize];
            ModelDist::new(&spec, 0.4 * unit(master + 3, &[i, k + 10]) - 0.2, Some(e))
        };
        let (a, b, c) = (pick(0), pick(1), pick(2));
        let (ab, ba) = (hellinger(&a, &b), hellinger(&b, &a));
        let (ac, bc) = (hellinger(&a, &c), hellinger(&b, &c));
        let identity = (hellinger_sq(&a, &b) - (2.0 - 2.0 * affinity(&a, &b))).abs();
        let max = std::f64::consts::SQRT_2;
        if (ab - ba).abs() <= 1e-12 && ac <= ab + bc + 1e-8 && ab <= max && ac <= max && bc <= max && identity <= 1e-8 {
            hell_ok += 1;
        } else {
            failures.push(format!("hellinger triple {i}: ab {ab} ba {ba} ac {ac} bc {bc} identity {identity:.2e}"));
        }
    }

    for f in failures.iter().take(10) {
        let _ = writeln!(std::io::stderr(), "  {f}");
    }
    verdict(
        9,
        failures.is_empty(),
        t.elapsed(),
        Duration::from_secs(300),
        format!("esscher {esscher_ok}/1000, int bounds {int_ok}/1000, ball {ball_ok}/100000, hellinger {hell_ok}/500"),
    );
}
