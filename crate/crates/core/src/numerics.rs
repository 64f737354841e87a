//! Shared numeric plumbing: Gamma-based binomials, adaptive Gauss-Kronrod
//! quadrature, counter-based random streams and sphere directions.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// A value together with an absolute error estimate (standard error for
/// Monte Carlo quantities, quadrature estimate otherwise).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, error: 0.0 }
    }

    pub fn new(value: f64, error: f64) -> Self {
        Estimate { value, error }
    }
}

pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("log_gamma needs x > 0, got {x}")));
    }
    Ok(statrs::function::gamma::ln_gamma(x))
}

/// `Gamma(1+x) / (Gamma(1+y) Gamma(1+x-y))` for `x >= y > 0`.
pub fn gen_binom(x: f64, y: f64) -> Result<f64> {
    if !(y > 0.0) || !(x >= y) {
        return Err(Error::Domain(format!(
            "gen_binom needs x >= y > 0, got ({x}, {y})"
        )));
    }
    let l = log_gamma(1.0 + x)? - log_gamma(1.0 + y)? - log_gamma(1.0 + x - y)?;
    Ok(l.exp())
}

/// Volume of the Euclidean unit ball in dimension `n`.
pub fn unit_ball_volume(n: usize) -> f64 {
    // V_n = 2 pi / n * V_{n-2}
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / n as f64 * unit_ball_volume(n - 2),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: u32,
    pub max_intervals: usize,
}

impl QuadOptions {
    pub fn relative(rel_tol: f64) -> Self {
        QuadOptions {
            abs_tol: 0.0,
            rel_tol,
            ..Default::default()
        }
    }
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_depth: 60,
            max_intervals: 4000,
        }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
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

/// One Gauss-Kronrod 7/15 panel, QUADPACK error heuristic.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let x = h * XGK[j];
        let f1 = f(c - x);
        let f2 = f(c + x);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = res_k * 0.5;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let result = res_k * h;
    let res_abs = res_abs * h.abs();
    let res_asc = res_asc * h.abs();
    let mut err = ((res_k - res_g) * h).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (result, err)
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
    depth: u32,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive GK15 on `[a, b]`, bisecting the panel with the largest
/// error estimate until `err <= max(abs_tol, rel_tol |value|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: &QuadOptions) -> QuadratureResult {
    if a == b {
        return QuadratureResult {
            value: 0.0,
            abs_error_estimate: 0.0,
            evaluations: 1,
            converged: true,
        };
    }
    // the per-panel roundoff floor makes tighter relative targets unreachable
    let rel_tol = opts.rel_tol.max(100.0 * f64::EPSILON);
    let (v, e) = gk15(&f, a, b);
    let mut evaluations = 15;
    let mut heap = BinaryHeap::new();
    heap.push(Panel {
        a,
        b,
        value: v,
        err: e,
        depth: 0,
    });
    let mut total = v;
    let mut total_err = e;
    let mut finished: Vec<Panel> = Vec::new();
    let mut converged = false;
    loop {
        if total_err <= opts.abs_tol.max(rel_tol * total.abs()) {
            converged = true;
            break;
        }
        if heap.len() + finished.len() >= opts.max_intervals {
            break;
        }
        let Some(top) = heap.pop() else { break };
        if top.depth >= opts.max_depth {
            finished.push(top);
            continue;
        }
        let mid = 0.5 * (top.a + top.b);
        if mid <= top.a || mid >= top.b {
            finished.push(top);
            continue;
        }
        let (v1, e1) = gk15(&f, top.a, mid);
        let (v2, e2) = gk15(&f, mid, top.b);
        evaluations += 30;
        total += v1 + v2 - top.value;
        total_err += e1 + e2 - top.err;
        for (lo, hi, v, e) in [(top.a, mid, v1, e1), (mid, top.b, v2, e2)] {
            heap.push(Panel {
                a: lo,
                b: hi,
                value: v,
                err: e,
                depth: top.depth + 1,
            });
        }
    }
    // re-sum in a fixed order to avoid drift from the running updates
    let mut parts: Vec<&Panel> = heap.iter().chain(finished.iter()).collect();
    parts.sort_by(|x, y| x.a.total_cmp(&y.a));
    let value: f64 = parts.iter().map(|p| p.value).sum();
    let err: f64 = parts.iter().map(|p| p.err).sum();
    QuadratureResult {
        value,
        abs_error_estimate: err,
        evaluations,
        converged: converged || err <= opts.abs_tol.max(rel_tol * value.abs()),
    }
}

/// `integrate` with `tol` used as both the absolute and relative target.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<QuadratureResult> {
    if !(a < b) {
        return Err(Error::Domain(format!(
            "integration bounds need a < b, got [{a}, {b}]"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    let opts = QuadOptions {
        abs_tol: tol,
        rel_tol: tol,
        ..Default::default()
    };
    Ok(integrate(f, a, b, &opts))
}

/// `int_0^{end} p t^(p-1) f(t) dt` split at `knots` (interior breakpoints and
/// the end point, increasing). For `p < 1` the first panel is integrated in
/// `s = t^p`, which turns the weight into `ds` and removes the singularity.
pub fn integrate_power_weighted<F: Fn(f64) -> f64>(
    f: F,
    p: f64,
    knots: &[f64],
    rel_tol: f64,
) -> QuadratureResult {
    let mut value = 0.0;
    let mut err = 0.0;
    let mut evaluations = 0;
    let mut converged = true;
    let mut lo = 0.0;
    let rel_tol = rel_tol.max(100.0 * f64::EPSILON);
    let opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol,
        ..Default::default()
    };
    for (i, &hi) in knots.iter().enumerate() {
        if hi <= lo {
            continue;
        }
        let r = if i == 0 && p < 1.0 {
            let inv = 1.0 / p;
            integrate(|s: f64| f(s.powf(inv)), 0.0, hi.powf(p), &opts)
        } else {
            integrate(|t: f64| p * t.powf(p - 1.0) * f(t), lo, hi, &opts)
        };
        value += r.value;
        err += r.abs_error_estimate;
        evaluations += r.evaluations;
        converged &= r.converged;
        lo = hi;
    }
    QuadratureResult {
        value,
        abs_error_estimate: err,
        evaluations,
        converged: converged || err <= rel_tol * value.abs(),
    }
}

/// `int_0^{2 pi} f` as the sum of adaptive integrals over `panels`
/// equal arcs. Panels run in parallel and are summed in order.
pub fn integrate_circle<F: Fn(f64) -> f64 + Sync>(
    f: F,
    panels: usize,
    opts: &QuadOptions,
) -> QuadratureResult {
    let panels = panels.max(1);
    let h = 2.0 * PI / panels as f64;
    let per = QuadOptions {
        abs_tol: opts.abs_tol / panels as f64,
        ..*opts
    };
    let parts: Vec<QuadratureResult> = (0..panels)
        .into_par_iter()
        .map(|k| integrate(&f, k as f64 * h, (k + 1) as f64 * h, &per))
        .collect();
    let mut out = QuadratureResult {
        value: 0.0,
        abs_error_estimate: 0.0,
        evaluations: 0,
        converged: true,
    };
    for r in parts {
        out.value += r.value;
        out.abs_error_estimate += r.abs_error_estimate;
        out.evaluations += r.evaluations;
        out.converged &= r.converged;
    }
    out
}

/// Independent random stream for `(seed, index)`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Samples produced per stream by [`par_sample`].
pub const SAMPLE_CHUNK: usize = 4096;

/// Draws `count` items with `draw`, chunk `c` using `stream(seed, c)`, so the
/// output is the same for any thread count.
pub fn par_sample<T, F>(seed: u64, count: usize, draw: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> T + Sync,
{
    let chunks = count.div_ceil(SAMPLE_CHUNK);
    let parts: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, c as u64);
            let len = SAMPLE_CHUNK.min(count - c * SAMPLE_CHUNK);
            (0..len).map(|_| draw(&mut rng)).collect()
        })
        .collect();
    parts.into_iter().flatten().collect()
}

pub fn gaussian_vector<R: rand::Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DirectionMode {
    AngularGrid,
    SeededUniform,
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectionSet {
    pub dim: usize,
    pub dirs: Vec<Vec<f64>>,
    pub mode: DirectionMode,
    pub seed: u64,
}

impl DirectionSet {
    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    /// Grid angles (only meaningful for the planar grid).
    pub fn angles(&self) -> Vec<f64> {
        self.dirs
            .iter()
            .map(|u| u[1].atan2(u[0]).rem_euclid(2.0 * PI))
            .collect()
    }
}

/// Equispaced angular grid for `n = 2`; normalised Gaussian vectors, one
/// counter-based stream per index, for `n >= 3`.
pub fn sphere_directions(n: usize, count: usize, seed: u64) -> Result<DirectionSet> {
    if n < 2 {
        return Err(Error::Domain(format!(
            "sphere directions need n >= 2, got {n}"
        )));
    }
    if count == 0 {
        return Err(Error::Domain("need at least one direction".into()));
    }
    if n == 2 {
        let dirs = (0..count)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect();
        return Ok(DirectionSet {
            dim: 2,
            dirs,
            mode: DirectionMode::AngularGrid,
            seed,
        });
    }
    let dirs = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            loop {
                let g = gaussian_vector(&mut rng, n);
                let r = norm(&g);
                if r > 1e-12 {
                    return g.into_iter().map(|v| v / r).collect::<Vec<_>>();
                }
            }
        })
        .collect();
    Ok(DirectionSet {
        dim: n,
        dirs,
        mode: DirectionMode::SeededUniform,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_gamma_known_values() {
        assert!(log_gamma(1.0).unwrap().abs() < 1e-15);
        assert!((log_gamma(4.0).unwrap() - 6f64.ln()).abs() <= 1e-13 * 6f64.ln());
        let half = PI.sqrt().ln();
        assert!((log_gamma(0.5).unwrap() - half).abs() <= 1e-13 * half);
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-1.5).is_err());
    }

    #[test]
    fn log_gamma_matches_factorials() {
        let mut fact = 1.0f64;
        for k in 1..60u32 {
            fact *= k as f64;
            let lg = log_gamma(k as f64 + 1.0).unwrap();
            assert!(
                (lg - fact.ln()).abs() <= 1e-13 * fact.ln().max(1.0),
                "k = {k}"
            );
        }
    }

    #[test]
    fn generalized_binomials() {
        assert!((gen_binom(4.0, 2.0).unwrap() - 6.0).abs() < 1e-12 * 6.0);
        assert!((gen_binom(3.0, 1.0).unwrap() - 3.0).abs() < 1e-12 * 3.0);
        assert!((gen_binom(2.5, 0.5).unwrap() - 15.0 / 8.0).abs() < 1e-12);
        assert!(gen_binom(1.0, 2.0).is_err());
        assert!(gen_binom(1.0, 0.0).is_err());
    }

    #[test]
    fn quadrature_examples() {
        let r = integrate_adaptive(|t| 2.0 * t, 0.0, 1.0, 1e-12).unwrap();
        assert!((r.value - 1.0).abs() < 1e-14 && r.converged);
        let r = integrate_adaptive(|t| 2.0 * t * (1.0 - t), 0.0, 1.0, 1e-12).unwrap();
        assert!((r.value - 1.0 / 3.0).abs() < 1e-14);
        let r =
            integrate_adaptive(|t| 3.0 * t * t * (1.0 - t) * (1.0 - t), 0.0, 1.0, 1e-12).unwrap();
        assert!((r.value - 0.1).abs() < 1e-14);
        assert!(integrate_adaptive(|t| t, 1.0, 0.0, 1e-9).is_err());
    }

    #[test]
    fn quadrature_handles_kinks_and_sqrt_endpoints() {
        let r = integrate_adaptive(|t: f64| (t - 0.3).abs(), 0.0, 1.0, 1e-12).unwrap();
        assert!((r.value - (0.045 + 0.245)).abs() < 1e-11, "{r:?}");
        let r = integrate_adaptive(|t: f64| (1.0 - t).max(0.0).powf(1.5), 0.0, 1.0, 1e-12).unwrap();
        assert!((r.value - 0.4).abs() < 1e-11);
    }

    #[test]
    fn quadrature_reports_failure() {
        let opts = QuadOptions {
            abs_tol: 1e-14,
            rel_tol: 1e-14,
            max_depth: 60,
            max_intervals: 10,
        };
        let r = integrate(
            |t: f64| if t < 0.123_456_789 { 0.0 } else { 1.0 },
            0.0,
            1.0,
            &opts,
        );
        assert!(!r.converged);
        assert!(r.abs_error_estimate > 0.0);
    }

    #[test]
    fn power_weight_substitution() {
        // int_0^1 p t^(p-1) (1-t)^2 dt = 2 / ((p+1)(p+2))
        for p in [0.25, 0.5, 1.0, 2.0, 4.5] {
            let r = integrate_power_weighted(|t| (1.0 - t) * (1.0 - t), p, &[0.4, 1.0], 1e-13);
            let exact = 2.0 / ((p + 1.0) * (p + 2.0));
            assert!(
                (r.value - exact).abs() < 1e-12,
                "p = {p}: {} vs {exact}",
                r.value
            );
        }
    }

    #[test]
    fn directions_grid() {
        let d = sphere_directions(2, 4, 99).unwrap();
        let a = d.angles();
        for (k, ang) in a.iter().enumerate() {
            assert!((ang - k as f64 * PI / 2.0).abs() < 1e-12);
        }
        let d = sphere_directions(2, 8, 0).unwrap();
        for u in &d.dirs {
            assert!(d
                .dirs
                .iter()
                .any(|v| (v[0] + u[0]).abs() < 1e-12 && (v[1] + u[1]).abs() < 1e-12));
        }
        assert!(sphere_directions(1, 4, 0).is_err());
    }

    #[test]
    fn directions_uniform_are_unit_and_centered() {
        let d = sphere_directions(3, 1000, 5).unwrap();
        let mut mean = [0.0; 3];
        for u in &d.dirs {
            assert!((norm(u) - 1.0).abs() < 1e-12);
            for i in 0..3 {
                mean[i] += u[i] / 1000.0;
            }
        }
        assert!(norm(&mean) <= 0.1);
        let again = sphere_directions(3, 1000, 5).unwrap();
        assert_eq!(d.dirs, again.dirs);
    }

    #[test]
    fn par_sample_is_thread_independent() {
        let draw = |r: &mut ChaCha8Rng| gaussian_vector(r, 2);
        let a = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| par_sample(3, 10_000, draw));
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(8)
            .build()
            .unwrap()
            .install(|| par_sample(3, 10_000, draw));
        assert_eq!(a, b);
    }

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(2) - PI).abs() < 1e-14);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-14);
    }
}
