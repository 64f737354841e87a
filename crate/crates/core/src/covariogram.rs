//! The covariogram `g_K(x) = |K ∩ (x + K)|` and its basic properties.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::beta::beta_reg;

use crate::bodies::{
    isotropy_data, ConvexBody, IsotropyMethod, DEFAULT_MC_SAMPLES, DEFAULT_MC_SEED,
};
use crate::error::{check_dim, Error, Result};
use crate::numerics::{
    dot, integrate_circle, norm, unit_ball_volume, Estimate, QuadOptions, SAMPLE_CHUNK,
};
use crate::report::VerificationReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Backend {
    ClosedForm,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone)]
enum Kernel {
    Cube {
        side: f64,
    },
    Ball {
        dim: usize,
        radius: f64,
    },
    /// `|K| (1 - ||x||_{K-K})^n`, valid exactly for simplices.
    Simplex {
        volume: f64,
        diff: ConvexBody,
    },
    /// `g_{a+TK}(x) = |det T| g_K(T^{-1} x)`.
    Affine {
        base: Box<Kernel>,
        inverse: DMatrix<f64>,
        det: f64,
    },
    /// Exact clipped area of a convex polygon and its translate.
    Polygon(Polygon),
    Sampled(Vec<Vec<f64>>),
}

/// Convex polygon with counter-clockwise vertices and edge half-planes
/// `<n_j, p> <= h_j`.
#[derive(Debug, Clone)]
struct Polygon {
    vertices: Vec<[f64; 2]>,
    normals: Vec<([f64; 2], f64)>,
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

impl Polygon {
    fn new(points: &[Vec<f64>]) -> Option<Polygon> {
        let mut pts: Vec<[f64; 2]> = points.iter().map(|p| [p[0], p[1]]).collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        pts.dedup();
        if pts.len() < 3 {
            return None;
        }
        // monotone chain
        let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
        for pass in 0..2 {
            let start = hull.len();
            let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
                Box::new(pts.iter())
            } else {
                Box::new(pts.iter().rev())
            };
            for &p in iter {
                while hull.len() >= start + 2
                    && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
                {
                    hull.pop();
                }
                hull.push(p);
            }
            hull.pop();
        }
        if hull.len() < 3 {
            return None;
        }
        let m = hull.len();
        let normals = (0..m)
            .map(|i| {
                let (a, b) = (hull[i], hull[(i + 1) % m]);
                let n = [b[1] - a[1], a[0] - b[0]];
                (n, n[0] * a[0] + n[1] * a[1])
            })
            .collect();
        Some(Polygon {
            vertices: hull,
            normals,
        })
    }

    /// `|K ∩ (K + x)|` by clipping `K` against every edge of the translate.
    fn overlap(&self, x: &[f64]) -> f64 {
        let mut poly = self.vertices.clone();
        let mut next = Vec::with_capacity(poly.len() + 4);
        for &(n, h) in &self.normals {
            let h = h + n[0] * x[0] + n[1] * x[1];
            next.clear();
            for i in 0..poly.len() {
                let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
                let (da, db) = (n[0] * a[0] + n[1] * a[1] - h, n[0] * b[0] + n[1] * b[1] - h);
                if da <= 0.0 {
                    next.push(a);
                }
                if (da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0) {
                    let t = da / (da - db);
                    next.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                }
            }
            std::mem::swap(&mut poly, &mut next);
            if poly.len() < 3 {
                return 0.0;
            }
        }
        let area: f64 = (0..poly.len())
            .map(|i| {
                let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
                a[0] * b[1] - a[1] * b[0]
            })
            .sum();
        (0.5 * area).max(0.0)
    }

    /// Values of `t` where a vertex of `K` or of `K + t u` crosses an edge
    /// line of the other; `g(t u)` is a quadratic between them.
    fn breakpoints(&self, u: &[f64], end: f64) -> Vec<f64> {
        let mut ts = Vec::new();
        for &(n, h) in &self.normals {
            let nu = n[0] * u[0] + n[1] * u[1];
            if nu.abs() < 1e-300 {
                continue;
            }
            for v in &self.vertices {
                let s = (n[0] * v[0] + n[1] * v[1] - h) / nu;
                for t in [s, -s] {
                    if t > end * 1e-12 && t < end * (1.0 - 1e-12) {
                        ts.push(t);
                    }
                }
            }
        }
        ts.sort_by(f64::total_cmp);
        ts.dedup_by(|a, b| (*a - *b).abs() <= end * 1e-12);
        ts
    }
}

impl Kernel {
    fn closed_form(body: &ConvexBody) -> Result<Option<Kernel>> {
        if body.simplex_vertices().is_some() {
            return Ok(Some(Kernel::Simplex {
                volume: body.volume()?.value,
                diff: body.difference_body()?,
            }));
        }
        Ok(match body {
            ConvexBody::Cube { side, .. } => Some(Kernel::Cube { side: *side }),
            ConvexBody::Ball { dim, radius } => Some(Kernel::Ball {
                dim: *dim,
                radius: *radius,
            }),
            ConvexBody::Affine(a) => Kernel::closed_form(&a.base)?.map(|base| Kernel::Affine {
                base: Box::new(base),
                inverse: a.inverse().clone(),
                det: a.det().abs(),
            }),
            ConvexBody::Polytope(p) if p.dim() == 2 => {
                Polygon::new(p.vertices()).map(Kernel::Polygon)
            }
            _ => None,
        })
    }

    fn eval_closed(&self, x: &[f64]) -> f64 {
        match self {
            Kernel::Cube { side } => x.iter().map(|v| (side - v.abs()).max(0.0)).product(),
            Kernel::Ball { dim, radius } => ball_lens(*dim, *radius, norm(x)),
            Kernel::Simplex { volume, diff } => {
                let n = x.len() as i32;
                if x.iter().all(|v| *v == 0.0) {
                    return *volume;
                }
                let origin = vec![0.0; x.len()];
                match diff.chord(&origin, x) {
                    Some((_, hi)) if hi > 1.0 => volume * (1.0 - 1.0 / hi).powi(n),
                    _ => 0.0,
                }
            }
            Kernel::Affine { base, inverse, det } => {
                let y = inverse * nalgebra::DVector::from_column_slice(x);
                det * base.eval_closed(y.as_slice())
            }
            Kernel::Polygon(p) => p.overlap(x),
            Kernel::Sampled(_) => unreachable!("sampled kernel has no closed form"),
        }
    }

    /// Interior kinks of `t -> g(t u)` on `(0, end)`, then `end`.
    fn ray_knots(&self, u: &[f64], end: f64) -> Vec<f64> {
        let mut knots = match self {
            Kernel::Polygon(p) => p.breakpoints(u, end),
            Kernel::Affine { base, inverse, .. } => {
                let w = inverse * nalgebra::DVector::from_column_slice(u);
                let mut k = base.ray_knots(w.as_slice(), end);
                k.pop();
                k
            }
            _ => Vec::new(),
        };
        knots.push(end);
        knots
    }
}

/// Volume of the intersection of two radius-`r` balls in R^n with centres `d` apart.
pub fn ball_lens(n: usize, r: f64, d: f64) -> f64 {
    if d >= 2.0 * r {
        return 0.0;
    }
    let full = unit_ball_volume(n) * r.powi(n as i32);
    if d == 0.0 {
        return full;
    }
    let x = 1.0 - (d / (2.0 * r)).powi(2);
    full * beta_reg((n as f64 + 1.0) / 2.0, 0.5, x)
}

/// Settings shared by the property checks below.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CheckOptions {
    /// Sample count for Monte Carlo routes.
    pub samples: usize,
    pub seed: u64,
    /// Quadrature tolerance for deterministic routes.
    pub quad_tol: f64,
    /// Angular panels for planar polar integrals.
    pub panels: usize,
    /// Absolute tolerance for closed-form comparisons.
    pub closed_tol: f64,
    /// Standard errors allowed for statistical comparisons.
    pub sigmas: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            samples: DEFAULT_MC_SAMPLES,
            seed: DEFAULT_MC_SEED,
            quad_tol: 1e-10,
            panels: 256,
            closed_tol: 1e-9,
            sigmas: 3.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Covariogram {
    body: ConvexBody,
    volume: Estimate,
    diff: ConvexBody,
    kernel: Kernel,
    backend: Backend,
}

impl Covariogram {
    /// Exact evaluation; fails for bodies without a closed form.
    pub fn closed_form(body: ConvexBody) -> Result<Self> {
        let kernel = Kernel::closed_form(&body)?.ok_or_else(|| {
            Error::Config(format!(
                "no closed-form covariogram for {}; use the Monte Carlo backend",
                body.name()
            ))
        })?;
        Ok(Covariogram {
            volume: body.volume()?,
            diff: body.difference_body()?,
            body,
            kernel,
            backend: Backend::ClosedForm,
        })
    }

    /// `|K|` times the fraction of `samples` fixed uniform points `y` in `K`
    /// with `y - x` in `K`. The points are drawn once and reused for every `x`.
    pub fn monte_carlo(body: ConvexBody, samples: usize, seed: u64) -> Result<Self> {
        if samples == 0 {
            return Err(Error::Config(
                "Monte Carlo covariogram needs samples > 0".into(),
            ));
        }
        let points = body.sample_many(samples, seed);
        Ok(Covariogram {
            volume: body.volume_with(samples, seed ^ 0xa076_1d64_78bd_642f)?,
            diff: body.difference_body()?,
            body,
            kernel: Kernel::Sampled(points),
            backend: Backend::MonteCarlo { samples, seed },
        })
    }

    /// Closed form when available, Monte Carlo otherwise.
    pub fn auto(body: ConvexBody, samples: usize, seed: u64) -> Result<Self> {
        if Kernel::closed_form(&body)?.is_some() {
            Self::closed_form(body)
        } else {
            Self::monte_carlo(body, samples, seed)
        }
    }

    pub fn dim(&self) -> usize {
        self.body.dim()
    }

    pub fn body(&self) -> &ConvexBody {
        &self.body
    }

    pub fn volume(&self) -> Estimate {
        self.volume
    }

    pub fn difference_body(&self) -> &ConvexBody {
        &self.diff
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn is_closed_form(&self) -> bool {
        self.backend == Backend::ClosedForm
    }

    pub fn eval(&self, x: &[f64]) -> Result<Estimate> {
        check_dim(self.dim(), x.len())?;
        Ok(match &self.kernel {
            Kernel::Sampled(points) => {
                let hits: usize = points
                    .par_chunks(SAMPLE_CHUNK)
                    .map(|chunk| {
                        chunk
                            .iter()
                            .filter(|y| {
                                let z: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
                                self.body.contains(&z).unwrap_or(false)
                            })
                            .count()
                    })
                    .sum();
                let count = points.len() as f64;
                let f = hits as f64 / count;
                let v = self.volume;
                Estimate::new(
                    v.value * f,
                    v.value * (f * (1.0 - f) / count).sqrt() + f * v.error,
                )
            }
            k => Estimate::exact(k.eval_closed(x)),
        })
    }

    /// Point value, dropping the error estimate.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.eval(x).map(|e| e.value).unwrap_or(f64::NAN)
    }

    /// `g(0) = |K|`.
    pub fn value_at_origin(&self) -> f64 {
        self.volume.value
    }

    /// `||x||_{K-K}`.
    pub fn support_norm(&self, x: &[f64]) -> Result<f64> {
        self.diff.minkowski_functional(x)
    }

    /// `rho_{K-K}(u)`, the end of the support along `u`.
    pub fn support_radius(&self, u: &[f64]) -> Result<f64> {
        self.diff.radial(u)
    }

    /// `int_0^inf p t^(p-1) g(t u) dt`.
    ///
    /// Closed forms use quadrature on `[0, rho_{K-K}(u)]`. The sampled backend
    /// integrates in `t` exactly: the ray through `y` stays in `K` for
    /// `t <= b_y(u)`, so the integral is `|K|` times the mean of `b_y(u)^p`.
    pub fn ray_moment(&self, u: &[f64], p: f64, tol: f64) -> Result<Estimate> {
        check_dim(self.dim(), u.len())?;
        if !(p > 0.0) {
            return Err(Error::Domain(format!("ray moment needs p > 0, got {p}")));
        }
        match &self.kernel {
            Kernel::Sampled(points) => {
                let neg: Vec<f64> = u.iter().map(|v| -v).collect();
                let sums: Vec<(f64, f64)> = points
                    .par_chunks(SAMPLE_CHUNK)
                    .map(|chunk| {
                        chunk.iter().fold((0.0, 0.0), |(s, s2), y| {
                            let b = self.body.chord(y, &neg).map_or(0.0, |(_, hi)| hi.max(0.0));
                            let v = b.powf(p);
                            (s + v, s2 + v * v)
                        })
                    })
                    .collect();
                let (s, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
                let count = points.len() as f64;
                let mean = s / count;
                let var = (s2 / count - mean * mean).max(0.0);
                let vol = self.volume;
                Ok(Estimate::new(
                    vol.value * mean,
                    vol.value * (var / count).sqrt() + mean * vol.error,
                ))
            }
            k => {
                let r = self.support_radius(u)?;
                let res = crate::numerics::integrate_power_weighted(
                    |t| k.eval_closed(&u.iter().map(|c| c * t).collect::<Vec<_>>()),
                    p,
                    &k.ray_knots(u, r),
                    tol,
                );
                if !res.converged {
                    return Err(Error::Quadrature(format!(
                        "ray moment did not converge (p = {p}, estimate {:.3e})",
                        res.abs_error_estimate
                    )));
                }
                Ok(Estimate::new(res.value, res.abs_error_estimate))
            }
        }
    }

    fn sampled_points(&self) -> Option<&[Vec<f64>]> {
        match &self.kernel {
            Kernel::Sampled(p) => Some(p),
            _ => None,
        }
    }
}

/// Mean and standard error of a sequence, summed in order.
fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Uniform points in `K - K`, reproducible by seed. The seed is remixed so
/// that these draws never share a stream with samples of `K` itself.
fn difference_samples(g: &Covariogram, count: usize, seed: u64) -> Vec<Vec<f64>> {
    g.diff.sample_many(
        count,
        seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0xd1b5_4a32_d192_ed03,
    )
}

/// `int w(x) g(x) dx` for a weight that is positively homogeneous of degree
/// `degree`. Closed forms in dimension <= 2 use polar coordinates
/// (`int_S w(u) int_0^R t^(n-1+degree) g(tu) dt du`); everything else samples.
pub fn integrate_against<W>(
    g: &Covariogram,
    weight: W,
    degree: f64,
    opts: &CheckOptions,
) -> Result<Estimate>
where
    W: Fn(&[f64]) -> f64 + Sync,
{
    let n = g.dim();
    if g.is_closed_form() && n <= 2 {
        let q = n as f64 + degree;
        let radial = |u: &[f64]| -> Result<f64> {
            Ok(weight(u) * g.ray_moment(u, q, opts.quad_tol)?.value / q)
        };
        if n == 1 {
            return Ok(Estimate::exact(radial(&[1.0])? + radial(&[-1.0])?));
        }
        let failed = std::sync::atomic::AtomicBool::new(false);
        let res = integrate_circle(
            |a| {
                radial(&[a.cos(), a.sin()]).unwrap_or_else(|_| {
                    failed.store(true, std::sync::atomic::Ordering::Relaxed);
                    0.0
                })
            },
            opts.panels,
            &QuadOptions {
                abs_tol: opts.quad_tol * 1e-2,
                rel_tol: opts.quad_tol,
                ..Default::default()
            },
        );
        if failed.into_inner() || !res.converged {
            return Err(Error::Quadrature(
                "polar integral of the covariogram did not converge".into(),
            ));
        }
        return Ok(Estimate::new(res.value, res.abs_error_estimate));
    }
    integrate_against_sampled(g, weight, opts)
}

/// Sampling route for [`integrate_against`]: `x` uniform in `K - K`. Closed
/// forms average `w(x) g(x)`; the sampled backend pairs each of its points `y`
/// with one `x` and averages `w(x) 1{y - x in K} |K|`.
pub fn integrate_against_sampled<W>(
    g: &Covariogram,
    weight: W,
    opts: &CheckOptions,
) -> Result<Estimate>
where
    W: Fn(&[f64]) -> f64 + Sync,
{
    let diff_vol = g.diff.volume_with(opts.samples, opts.seed ^ 0x51)?;
    let (values, vol_err): (Vec<f64>, f64) = match g.sampled_points() {
        Some(points) => {
            let xs = difference_samples(g, points.len(), opts.seed);
            let kv = g.volume;
            let values = points
                .par_iter()
                .zip(xs.par_iter())
                .map(|(y, x)| {
                    let z: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
                    if g.body.contains(&z).unwrap_or(false) {
                        weight(x) * kv.value * diff_vol.value
                    } else {
                        0.0
                    }
                })
                .collect();
            (
                values,
                kv.error / kv.value.max(f64::MIN_POSITIVE) + diff_vol.error / diff_vol.value,
            )
        }
        None => {
            let xs = difference_samples(g, opts.samples, opts.seed);
            let values = xs
                .par_iter()
                .map(|x| weight(x) * g.kernel.eval_closed(x) * diff_vol.value)
                .collect();
            (values, diff_vol.error / diff_vol.value)
        }
    };
    let (mean, se) = mean_se(&values);
    Ok(Estimate::new(mean, se + mean.abs() * vol_err))
}

/// `int g = |K|^2`.
pub fn check_probability_density(
    g: &Covariogram,
    opts: &CheckOptions,
) -> Result<VerificationReport> {
    let integral = integrate_against(g, |_| 1.0, 0.0, opts)?;
    let v = g.volume();
    let target = v.value * v.value;
    let err = integral.error + 2.0 * v.value * v.error;
    let tol = (opts.sigmas * err).max(opts.closed_tol * target.max(1.0));
    let mut r = VerificationReport::new("covariogram-density", g.body.name());
    r.set("integral", integral.value)
        .set("volume_squared", target);
    r.error_estimate = err;
    r.tolerance = tol;
    r.worst_margin = Some(tol - (integral.value - target).abs());
    r.passed = (integral.value - target).abs() <= tol;
    Ok(r)
}

/// Midpoint test of `g^(1/n)` on random pairs from `K - K`. Closed forms use
/// `opts.closed_tol`; the sampled backend compares `sigmas`-wide intervals.
pub fn check_one_over_n_concavity(
    g: &Covariogram,
    trials: usize,
    seed: u64,
    opts: &CheckOptions,
) -> Result<VerificationReport> {
    let n = g.dim() as f64;
    let pts = difference_samples(g, 2 * trials, seed);
    let k = opts.sigmas;
    let mut worst = f64::INFINITY;
    let mut violations = 0usize;
    for pair in pts.chunks_exact(2) {
        let (x, y) = (&pair[0], &pair[1]);
        let m: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a + b) / 2.0).collect();
        let (gx, gy, gm) = (g.eval(x)?, g.eval(y)?, g.eval(&m)?);
        let margin = if g.is_closed_form() {
            gm.value.powf(1.0 / n) - (gx.value.powf(1.0 / n) + gy.value.powf(1.0 / n)) / 2.0
                + opts.closed_tol
        } else {
            let up = (gm.value + k * gm.error).max(0.0).powf(1.0 / n);
            let lo = |e: Estimate| (e.value - k * e.error).max(0.0).powf(1.0 / n);
            up - (lo(gx) + lo(gy)) / 2.0
        };
        if margin < 0.0 {
            violations += 1;
        }
        worst = worst.min(margin);
    }
    let mut r = VerificationReport::new("covariogram-concavity", g.body.name());
    r.set("trials", trials as f64)
        .set("violations", violations as f64);
    r.tolerance = if g.is_closed_form() {
        opts.closed_tol
    } else {
        k
    };
    r.worst_margin = Some(worst);
    r.passed = violations == 0;
    Ok(r)
}

fn unit(theta: &[f64]) -> Result<Vec<f64>> {
    let l = norm(theta);
    if !(l > 0.0) {
        return Err(Error::Domain("direction must be nonzero".into()));
    }
    Ok(theta.iter().map(|v| v / l).collect())
}

/// `int <x,theta>^2 g(x) dx` against `2 int_K <x,theta>^2 dx` for a centred
/// body of volume 1.
pub fn second_moment_identity(
    g: &Covariogram,
    theta: &[f64],
    opts: &CheckOptions,
) -> Result<VerificationReport> {
    check_dim(g.dim(), theta.len())?;
    let th = unit(theta)?;
    let method = if g.body.exact_moments().is_some() {
        IsotropyMethod::Exact
    } else {
        IsotropyMethod::MonteCarlo {
            samples: opts.samples,
            seed: opts.seed,
        }
    };
    let data = isotropy_data(&g.body, method)?;
    let vol_tol = (opts.sigmas * data.volume.error).max(1e-9);
    if (data.volume.value - 1.0).abs() > vol_tol {
        return Err(Error::Domain(format!(
            "body must have volume 1, has {}",
            data.volume.value
        )));
    }
    for (b, e) in data.barycenter.iter().zip(&data.barycenter_error) {
        if b.abs() > (opts.sigmas * e).max(1e-9) {
            return Err(Error::Domain(format!(
                "body must be centred, barycentre {:?}",
                data.barycenter
            )));
        }
    }
    let m = data.moment_matrix();
    let v = nalgebra::DVector::from_column_slice(&th);
    let body_moment = (v.transpose() * &m * &v)[(0, 0)];
    let me = data
        .moment_error
        .iter()
        .flatten()
        .copied()
        .fold(0.0, f64::max);
    let left = integrate_against(g, |x| dot(x, &th).powi(2), 2.0, opts)?;
    let right = 2.0 * body_moment;
    let err = left.error + 2.0 * me;
    let tol = if err > 0.0 && !g.is_closed_form() {
        opts.sigmas * err
    } else {
        (opts.sigmas * err).max(opts.closed_tol)
    };
    let mut r = VerificationReport::new("second-moment-identity", g.body.name());
    r.set("left", left.value)
        .set("body_moment", body_moment)
        .set("right", right)
        .set("ratio", left.value / body_moment);
    r.error_estimate = err;
    r.tolerance = tol;
    r.worst_margin = Some(tol - (left.value - right).abs());
    r.passed = (left.value - right).abs() <= tol;
    Ok(r)
}

/// [`second_moment_identity`] over `count` directions; reports the largest
/// `|left / body_moment - 2|`.
pub fn second_moment_sweep(
    g: &Covariogram,
    count: usize,
    seed: u64,
    opts: &CheckOptions,
) -> Result<VerificationReport> {
    let n = g.dim();
    let dirs = if n == 1 {
        vec![vec![1.0]]
    } else {
        crate::numerics::sphere_directions(n, count, seed)?.dirs
    };
    let mut worst_dev: f64 = 0.0;
    let mut all = true;
    let mut err: f64 = 0.0;
    let mut tol: f64 = 0.0;
    for u in &dirs {
        let r = second_moment_identity(g, u, opts)?;
        worst_dev = worst_dev.max((r.value("ratio") - 2.0).abs());
        all &= r.passed;
        err = err.max(r.error_estimate / r.value("body_moment"));
        tol = tol.max(r.tolerance / r.value("body_moment"));
    }
    let mut r = VerificationReport::new("second-moment-sweep", g.body.name());
    r.set("directions", dirs.len() as f64)
        .set("max_ratio_deviation", worst_dev);
    r.error_estimate = err;
    r.tolerance = tol;
    r.worst_margin = Some(tol - worst_dev);
    r.passed = all;
    Ok(r)
}

/// Radius of `{x : g(x) >= level}` along `u`, by bisection on `[0, R(u)]`.
pub fn level_set_radius(g: &Covariogram, u: &[f64], level: f64) -> Result<f64> {
    let r = g.support_radius(u)?;
    let at = |t: f64| g.value(&u.iter().map(|c| c * t).collect::<Vec<_>>());
    if at(0.0) < level {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, r);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if at(mid) >= level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Compares the super-level sets `{g >= theta |K|}` with
/// `(1 - theta^(1/n)) (K - K)` along each direction. Agreement characterises
/// simplices; other bodies report the mismatch.
pub fn simplex_levelset_check(
    g: &Covariogram,
    levels: &[f64],
    dirs: &[Vec<f64>],
    tol: f64,
) -> Result<VerificationReport> {
    let n = g.dim() as f64;
    let vol = g.value_at_origin();
    let mut worst: f64 = 0.0;
    for &theta in levels {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::Domain(format!(
                "level must lie in [0, 1], got {theta}"
            )));
        }
        for u in dirs {
            check_dim(g.dim(), u.len())?;
            let big_r = g.support_radius(u)?;
            let got = level_set_radius(g, u, theta * vol)?;
            let want = (1.0 - theta.powf(1.0 / n)) * big_r;
            worst = worst.max((got - want).abs() / big_r);
        }
    }
    let mut r = VerificationReport::new("simplex-levelset", g.body.name());
    r.set("levels", levels.len() as f64)
        .set("directions", dirs.len() as f64)
        .set("max_relative_mismatch", worst);
    r.tolerance = tol;
    r.worst_margin = Some(tol - worst);
    r.passed = worst <= tol;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> ConvexBody {
        ConvexBody::regular_simplex(2).unwrap()
    }

    #[test]
    fn value_at_zero_is_volume() {
        for b in [
            ConvexBody::cube(2, 1.0).unwrap(),
            ConvexBody::ball(3, 0.7).unwrap(),
            triangle(),
        ] {
            let g = Covariogram::closed_form(b.clone()).unwrap();
            let o = vec![0.0; b.dim()];
            assert!((g.value(&o) - b.volume().unwrap().value).abs() < 1e-14);
        }
    }

    #[test]
    fn cube_overlap() {
        let g = Covariogram::closed_form(ConvexBody::cube(2, 1.0).unwrap()).unwrap();
        assert!((g.value(&[0.5, 0.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn triangle_half_norm_gives_quarter() {
        let g = Covariogram::closed_form(triangle()).unwrap();
        let u = [0.3f64.cos(), 0.3f64.sin()];
        let r = g.support_radius(&u).unwrap();
        let x = [u[0] * r / 2.0, u[1] * r / 2.0];
        assert!((g.value(&x) - 0.25).abs() < 1e-12);
        let mc = Covariogram::monte_carlo(triangle(), 200_000, 9).unwrap();
        let e = mc.eval(&x).unwrap();
        assert!((e.value - 0.25).abs() < 4.0 * e.error, "{e:?}");
    }

    #[test]
    fn lens_matches_planar_formula() {
        // two unit disks at distance d: 2 acos(d/2) - (d/2) sqrt(4 - d^2)
        for d in [0.0, 0.3, 1.0, 1.7, 1.99] {
            let want = 2.0 * (d / 2.0f64).acos() - d / 2.0 * (4.0 - d * d).sqrt();
            assert!((ball_lens(2, 1.0, d) - want).abs() < 1e-12, "d = {d}");
        }
        // n = 3: pi/12 (4 r + d)(2 r - d)^2
        for d in [0.2, 1.0, 1.5] {
            let want = std::f64::consts::PI / 12.0 * (4.0 + d) * (2.0 - d) * (2.0 - d);
            assert!((ball_lens(3, 1.0, d) - want).abs() < 1e-12);
        }
        assert_eq!(ball_lens(2, 1.0, 2.5), 0.0);
    }

    #[test]
    fn backend_mismatch_is_reported() {
        let prism = ConvexBody::polytope(vec![
            vec![0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 1.0],
        ])
        .unwrap();
        assert!(matches!(
            Covariogram::closed_form(prism.clone()),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            Covariogram::auto(prism, 1000, 1).unwrap().backend(),
            Backend::MonteCarlo { .. }
        ));
    }

    #[test]
    fn polygon_overlap_matches_square_and_sampling() {
        let sq = ConvexBody::polytope(vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![0.5, 0.5],
        ])
        .unwrap();
        let g = Covariogram::closed_form(sq).unwrap();
        let cube = Covariogram::closed_form(ConvexBody::cube(2, 1.0).unwrap()).unwrap();
        for x in [[0.0, 0.0], [0.3, -0.2], [-0.9, 0.95], [1.2, 0.0]] {
            assert!((g.value(&x) - cube.value(&x)).abs() < 1e-14);
        }
        let u = [0.6, 0.8];
        let a = g.ray_moment(&u, 4.0, 1e-12).unwrap().value;
        let b = cube.ray_moment(&u, 4.0, 1e-12).unwrap().value;
        assert!((a - b).abs() < 1e-12 * b);

        let quad = ConvexBody::polytope(vec![
            vec![0.0, 0.0],
            vec![2.0, 0.0],
            vec![1.5, 1.0],
            vec![0.0, 1.2],
        ])
        .unwrap();
        let g = Covariogram::closed_form(quad.clone()).unwrap();
        let mc = Covariogram::monte_carlo(quad, 100_000, 9).unwrap();
        for x in [[0.3, 0.1], [-0.8, 0.2], [1.0, -0.3]] {
            let e = mc.eval(&x).unwrap();
            assert!((g.value(&x) - e.value).abs() <= 4.0 * e.error + 1e-12);
        }
    }

    #[test]
    fn affine_closed_form_matches_polytope_route() {
        let m = DMatrix::from_row_slice(2, 2, &[1.5, 0.4, 0.0, 0.8]);
        let body = ConvexBody::cube(2, 1.0)
            .unwrap()
            .affine(m, vec![0.1, 0.2])
            .unwrap();
        let g = Covariogram::closed_form(body.clone()).unwrap();
        let mc = Covariogram::monte_carlo(body, 100_000, 5).unwrap();
        for x in [[0.3, 0.1], [-0.8, 0.2], [1.0, -0.3]] {
            let e = mc.eval(&x).unwrap();
            assert!((g.value(&x) - e.value).abs() <= 4.0 * e.error + 1e-12);
        }
    }

    #[test]
    fn density_examples() {
        let opts = CheckOptions::default();
        let cube = Covariogram::closed_form(ConvexBody::cube(2, 1.0).unwrap()).unwrap();
        let r = check_probability_density(&cube, &opts).unwrap();
        assert!(r.passed && (r.value("integral") - 1.0).abs() < 1e-9, "{r}");
        let tri = Covariogram::closed_form(triangle()).unwrap();
        assert!(check_probability_density(&tri, &opts).unwrap().passed);
        let disk = Covariogram::closed_form(ConvexBody::ball_with_volume(2, 2.0).unwrap()).unwrap();
        let r = check_probability_density(&disk, &opts).unwrap();
        assert!(r.passed && (r.value("integral") - 4.0).abs() < 1e-8, "{r}");
    }

    #[test]
    fn cube_second_moment_is_one_sixth() {
        let g = Covariogram::closed_form(ConvexBody::cube(2, 1.0).unwrap()).unwrap();
        let r = second_moment_identity(&g, &[1.0, 0.0], &CheckOptions::default()).unwrap();
        assert!(r.passed, "{r}");
        assert!((r.value("left") - 1.0 / 6.0).abs() < 1e-10);
        assert!((r.value("body_moment") - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn second_moment_rejects_uncentred() {
        let g = Covariogram::closed_form(
            ConvexBody::cube(2, 1.0)
                .unwrap()
                .translated(vec![0.2, 0.0])
                .unwrap(),
        )
        .unwrap();
        assert!(matches!(
            second_moment_identity(&g, &[1.0, 0.0], &CheckOptions::default()),
            Err(Error::Domain(_))
        ));
        let g = Covariogram::closed_form(ConvexBody::cube(2, 2.0).unwrap()).unwrap();
        assert!(second_moment_identity(&g, &[1.0, 0.0], &CheckOptions::default()).is_err());
    }

    #[test]
    fn level_sets() {
        let dirs = crate::numerics::sphere_directions(2, 24, 0).unwrap().dirs;
        let tri = Covariogram::closed_form(triangle()).unwrap();
        let r = simplex_levelset_check(&tri, &[0.25, 0.5, 1.0], &dirs, 1e-9).unwrap();
        assert!(r.passed, "{r}");
        let u = &dirs[3];
        let rad = level_set_radius(&tri, u, 0.25).unwrap();
        assert!((rad - 0.5 * tri.support_radius(u).unwrap()).abs() < 1e-12);
        let cube = Covariogram::closed_form(ConvexBody::cube(2, 1.0).unwrap()).unwrap();
        let r = simplex_levelset_check(&cube, &[0.25], &dirs, 1e-9).unwrap();
        assert!(!r.passed && r.value("max_relative_mismatch") > 1e-3);
        let r = simplex_levelset_check(&cube, &[1.0], &dirs, 1e-12).unwrap();
        assert!(r.passed);
    }
}
