//! Gauss rules on finite intervals: a fixed five-point Legendre rule for
//! tabulation and a globally adaptive Gauss-Kronrod (7, 15) integrator.

use alloc::vec::Vec;

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_08,
    0.478_628_670_499_366_47,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_08,
];

/// Five-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre5<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in GL5_NODES.iter().zip(GL5_WEIGHTS.iter()) {
        acc += w * f(mid + half * x);
    }
    acc * half
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_47,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss-Kronrod (7, 15) panel. Returns the Kronrod estimate and the
/// absolute difference to the embedded Gauss estimate.
pub fn gauss_kronrod15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(mid);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(mid - dx) + f(mid + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadTol {
    pub abs: f64,
    pub rel: f64,
    pub max_panels: usize,
}

impl Default for QuadTol {
    fn default() -> Self {
        Self {
            abs: 1e-13,
            rel: 1e-12,
            max_panels: 2000,
        }
    }
}

/// Globally adaptive integration over `[a, b]`: the panel with the largest
/// error estimate is bisected until the summed estimate meets the tolerance.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: QuadTol) -> f64 {
    if a == b {
        return 0.0;
    }
    let (r, e) = gauss_kronrod15(&mut f, a, b);
    let mut panels: Vec<(f64, f64, f64, f64)> = alloc::vec![(a, b, r, e)];
    let mut total = r;
    let mut err = e;
    while err > tol.abs.max(tol.rel * total.abs()) && panels.len() < tol.max_panels {
        let (idx, _) = panels
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, p)| if p.3 > best.1 { (i, p.3) } else { best });
        let (lo, hi, r0, e0) = panels.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // interval exhausted in floating point
            panels.push((lo, hi, r0, 0.0));
            err -= e0;
            continue;
        }
        let (r1, e1) = gauss_kronrod15(&mut f, lo, mid);
        let (r2, e2) = gauss_kronrod15(&mut f, mid, hi);
        total += r1 + r2 - r0;
        err += e1 + e2 - e0;
        panels.push((lo, mid, r1, e1));
        panels.push((mid, hi, r2, e2));
    }
    // re-sum to drop the drift accumulated by incremental updates
    panels.iter().map(|p| p.2).sum()
}

/// Integrates piecewise over the sorted, deduplicated breakpoints.
pub fn integrate_pieces<F: FnMut(f64) -> f64>(mut f: F, breakpoints: &[f64], tol: QuadTol) -> f64 {
    let mut pts: Vec<f64> = breakpoints.iter().copied().filter(|x| x.is_finite()).collect();
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup();
    pts.windows(2)
        .map(|w| integrate(&mut f, w[0], w[1], tol))
        .sum()
}
