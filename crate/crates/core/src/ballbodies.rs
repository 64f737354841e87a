//! Ball's bodies `K_p(g) = {x : int_0^inf p t^(p-1) g(tx) dt >= g(0)}`, given
//! through their radial function
//! `rho_p(u) = ((1/g(0)) int_0^inf p t^(p-1) g(tu) dt)^(1/p)`.

use rayon::prelude::*;
use serde::Serialize;

use num_traits::ToPrimitive;

use crate::alpha1d::Profile1D;
use crate::combinatorics::binom_int;
use crate::covariogram::{integrate_against_sampled, CheckOptions, Covariogram};
use crate::error::{check_dim, Error, Result};
use crate::numerics::{
    dot, gen_binom, integrate_circle, integrate_power_weighted, log_gamma, norm, unit_ball_volume,
    DirectionMode, DirectionSet, Estimate, QuadOptions,
};
use crate::report::VerificationReport;

/// A function `g >= 0` on R^n with `g(0) > 0`, seen along rays from the origin.
pub trait RadialSource: Sync {
    fn dim(&self) -> usize;
    fn label(&self) -> String;
    fn value(&self, x: &[f64]) -> f64;
    fn value_at_origin(&self) -> f64;
    /// `R(u)` with `g(tu) = 0` for `t > R(u)`.
    fn support_radius(&self, u: &[f64]) -> Result<f64>;
    /// `int_0^inf p t^(p-1) g(tu) dt`.
    fn ray_moment(&self, u: &[f64], p: f64, tol: f64) -> Result<Estimate>;

    /// Exact volume of `{R(u) u}`-star body when known.
    fn support_volume(&self) -> Option<f64> {
        None
    }
}

impl RadialSource for Covariogram {
    fn dim(&self) -> usize {
        Covariogram::dim(self)
    }

    fn label(&self) -> String {
        format!("covariogram({})", self.body().name())
    }

    fn value(&self, x: &[f64]) -> f64 {
        Covariogram::value(self, x)
    }

    fn value_at_origin(&self) -> f64 {
        Covariogram::value_at_origin(self)
    }

    fn support_radius(&self, u: &[f64]) -> Result<f64> {
        Covariogram::support_radius(self, u)
    }

    fn ray_moment(&self, u: &[f64], p: f64, tol: f64) -> Result<Estimate> {
        Covariogram::ray_moment(self, u, p, tol)
    }

    fn support_volume(&self) -> Option<f64> {
        let v = self.difference_body().volume().ok()?;
        (v.error == 0.0).then_some(v.value)
    }
}

/// `g(x) = f(||x||)` for a one-dimensional profile `f`.
pub struct RadialProfile<'a, P: Profile1D + ?Sized> {
    pub profile: &'a P,
    pub dim: usize,
}

impl<P: Profile1D + ?Sized> RadialSource for RadialProfile<'_, P> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn label(&self) -> String {
        format!("radial({})", self.profile.label())
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.profile.value(norm(x))
    }

    fn value_at_origin(&self) -> f64 {
        self.profile.value_at_zero()
    }

    fn support_radius(&self, _u: &[f64]) -> Result<f64> {
        Ok(self.profile.support_end())
    }

    fn ray_moment(&self, u: &[f64], p: f64, tol: f64) -> Result<Estimate> {
        let s = norm(u);
        // g(t u) = f(t |u|)
        let knots: Vec<f64> = self.profile.breakpoints().iter().map(|k| k / s).collect();
        let r = integrate_power_weighted(|t| self.profile.value(t * s), p, &knots, tol);
        if !r.converged {
            return Err(Error::Quadrature(
                "profile ray moment did not converge".into(),
            ));
        }
        Ok(Estimate::new(r.value, r.abs_error_estimate))
    }

    fn support_volume(&self) -> Option<f64> {
        Some(unit_ball_volume(self.dim) * self.profile.support_end().powi(self.dim as i32))
    }
}

fn unit_vec(u: &[f64]) -> Result<Vec<f64>> {
    let l = norm(u);
    if !(l > 0.0) {
        return Err(Error::Domain("direction must be nonzero".into()));
    }
    Ok(u.iter().map(|v| v / l).collect())
}

/// `rho_{K_p(g)}(u)` for a unit vector `u`, with a propagated error estimate.
pub fn ballbody_radial<S: RadialSource + ?Sized>(
    src: &S,
    p: f64,
    u: &[f64],
    tol: f64,
) -> Result<Estimate> {
    check_dim(src.dim(), u.len())?;
    if !(p > 0.0) {
        return Err(Error::Domain(format!(
            "exponent p must be positive, got {p}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    let u = unit_vec(u)?;
    let g0 = src.value_at_origin();
    if !(g0 > 0.0) {
        return Err(Error::Domain("need g(0) > 0".into()));
    }
    let m = src.ray_moment(&u, p, tol)?;
    let ratio = m.value / g0;
    let rho = ratio.max(0.0).powf(1.0 / p);
    let err = if m.value > 0.0 {
        rho / p * m.error / m.value
    } else {
        0.0
    };
    Ok(Estimate::new(rho, err))
}

/// Radial values on every direction of a set, in order.
pub fn radial_table<S: RadialSource + ?Sized>(
    src: &S,
    p: f64,
    dirs: &[Vec<f64>],
    tol: f64,
) -> Result<Vec<Estimate>> {
    dirs.par_iter()
        .map(|u| ballbody_radial(src, p, u, tol))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// `int_{K_p(g)} w(x) dx` for `w` positively homogeneous of degree `degree`:
/// `int_S w(u) rho_p(u)^(n+degree) / (n+degree) du`.
///
/// The plane uses adaptive quadrature on each arc of the angular grid. For
/// `n >= 3` the directions are a Monte Carlo sample; with `w = 1` and a known
/// support volume, `R(u)^n` serves as a control variate.
pub fn ballbody_integral<S, W>(
    src: &S,
    p: f64,
    weight: W,
    degree: f64,
    dirs: &DirectionSet,
    tol: f64,
) -> Result<Estimate>
where
    S: RadialSource + ?Sized,
    W: Fn(&[f64]) -> f64 + Sync,
{
    let n = src.dim();
    let q = n as f64 + degree;
    let radial_tol = (tol * 1e-2).max(1e-14);
    if n == 1 {
        let mut v = 0.0;
        let mut e = 0.0;
        for u in [[1.0], [-1.0]] {
            let r = ballbody_radial(src, p, &u, radial_tol)?;
            v += weight(&u) * r.value.powf(q) / q;
            e += weight(&u).abs() * r.value.powf(q - 1.0) * r.error;
        }
        return Ok(Estimate::new(v, e));
    }
    check_dim(n, dirs.dim)?;
    let table = radial_table(src, p, &dirs.dirs, radial_tol)?;
    if n == 2 {
        if dirs.mode != DirectionMode::AngularGrid {
            return Err(Error::Config(
                "planar integrals need the angular grid".into(),
            ));
        }
        let k = dirs.len() as f64;
        let arc = 2.0 * std::f64::consts::PI / k;
        // statistical radial noise bounds the useful angular accuracy
        let noise = table
            .iter()
            .map(|r| {
                if r.value > 0.0 {
                    r.error / r.value
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max);
        let propagated: f64 = dirs
            .dirs
            .iter()
            .zip(&table)
            .map(|(u, r)| weight(u).abs() * r.value.powf(q - 1.0) * r.error * arc)
            .sum();
        let failed = std::sync::atomic::AtomicBool::new(false);
        let res = integrate_circle(
            |a| {
                let u = [a.cos(), a.sin()];
                match ballbody_radial(src, p, &u, radial_tol) {
                    Ok(r) => weight(&u) * r.value.powf(q) / q,
                    Err(_) => {
                        failed.store(true, std::sync::atomic::Ordering::Relaxed);
                        0.0
                    }
                }
            },
            dirs.len(),
            &QuadOptions {
                abs_tol: 0.0,
                rel_tol: tol.max(0.1 * noise),
                ..Default::default()
            },
        );
        if failed.into_inner() {
            return Err(Error::Quadrature(
                "radial evaluation failed inside the angular quadrature".into(),
            ));
        }
        if !res.converged {
            return Err(Error::Quadrature(format!(
                "angular quadrature did not converge (estimate {:.3e})",
                res.abs_error_estimate
            )));
        }
        return Ok(Estimate::new(
            res.value,
            res.abs_error_estimate + propagated,
        ));
    }

    // n >= 3: surface measure n |B_n| times the direction average
    let surface = n as f64 * unit_ball_volume(n);
    let xs: Vec<f64> = dirs
        .dirs
        .iter()
        .zip(&table)
        .map(|(u, r)| weight(u) * r.value.powf(q) / q)
        .collect();
    let dx: Vec<f64> = dirs
        .dirs
        .iter()
        .zip(&table)
        .map(|(u, r)| weight(u).abs() * r.value.powf(q - 1.0) * r.error)
        .collect();
    let count = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / count;
    let propagated = dx.iter().sum::<f64>() / count;
    let control = if degree == 0.0 && dirs.dirs.iter().all(|u| weight(u) == 1.0) {
        src.support_volume()
    } else {
        None
    };
    let (est, var) = match control {
        Some(supp) => {
            let ys: Vec<f64> = dirs
                .dirs
                .iter()
                .map(|u| src.support_radius(u).map(|r| r.powf(q) / q))
                .collect::<Result<_>>()?;
            let mean_y = ys.iter().sum::<f64>() / count;
            let ey = supp / surface;
            let cov = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| (x - mean_x) * (y - mean_y))
                .sum::<f64>();
            let vy = ys.iter().map(|y| (y - mean_y).powi(2)).sum::<f64>();
            let beta = if vy > 0.0 { cov / vy } else { 0.0 };
            let resid: f64 = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| (x - mean_x - beta * (y - mean_y)).powi(2))
                .sum::<f64>()
                / (count - 2.0).max(1.0);
            (mean_x - beta * (mean_y - ey), resid)
        }
        None => {
            let var = xs.iter().map(|x| (x - mean_x).powi(2)).sum::<f64>() / (count - 1.0).max(1.0);
            (mean_x, var)
        }
    };
    Ok(Estimate::new(
        surface * est,
        surface * ((var / count).sqrt() + propagated),
    ))
}

/// `|K_p(g)|`.
pub fn ballbody_volume<S: RadialSource + ?Sized>(
    src: &S,
    p: f64,
    dirs: &DirectionSet,
    tol: f64,
) -> Result<Estimate> {
    ballbody_integral(src, p, |_| 1.0, 0.0, dirs, tol)
}

/// Checks `int_{K_{n+p}(g)} |<x,theta>|^p dx = (1/g(0)) int |<x,theta>|^p g(x) dx`.
/// The left side integrates over the ball body in polar form. The right side
/// is exact for `p = 0` (`int g = |K|^2`) and for `p = 2` when the body has
/// exact moments; otherwise it samples `K - K`.
pub fn moment_transfer_check(
    g: &Covariogram,
    p: f64,
    theta: &[f64],
    dirs: &DirectionSet,
    tol: f64,
    opts: &CheckOptions,
) -> Result<VerificationReport> {
    if !(p >= 0.0) {
        return Err(Error::Domain(format!("moment order must be >= 0, got {p}")));
    }
    check_dim(g.dim(), theta.len())?;
    let th = unit_vec(theta)?;
    let n = g.dim() as f64;
    let w = |x: &[f64]| {
        if p == 0.0 {
            1.0
        } else {
            dot(x, &th).abs().powf(p)
        }
    };
    let left = ballbody_integral(g, n + p, w, p, dirs, tol)?;
    let g0 = g.value_at_origin();
    let right = if p == 0.0 {
        g.volume()
    } else if p == 2.0 && g.body().exact_moments().is_some() {
        let (v, f, s) = g.body().exact_moments().unwrap();
        let tv = nalgebra::DVector::from_column_slice(&th);
        let second = (tv.transpose() * &s * &tv)[(0, 0)];
        let first = dot(&f, &th);
        // int int <y - z, theta>^2 dy dz over K x K
        Estimate::exact((2.0 * v * second - 2.0 * first * first) / g0)
    } else {
        let e = integrate_against_sampled(g, w, opts)?;
        Estimate::new(e.value / g0, e.error / g0)
    };
    let err = left.error + right.error;
    let slack = if g.is_closed_form() && right.error == 0.0 {
        (opts.sigmas * err).max(10.0 * tol * right.value.abs().max(1e-300))
    } else {
        opts.sigmas * err + 10.0 * tol * right.value.abs()
    };
    let mut r = VerificationReport::new("moment-transfer", g.label());
    r.set("p", p)
        .set("left", left.value)
        .set("right", right.value);
    r.error_estimate = err;
    r.tolerance = slack;
    r.worst_margin = Some(slack - (left.value - right.value).abs());
    r.passed = (left.value - right.value).abs() <= slack;
    Ok(r)
}

/// `Gamma(1+p)^(1/p) / Gamma(1+q)^(1/q)`.
pub fn logconcave_factor(p: f64, q: f64) -> Result<f64> {
    Ok((log_gamma(1.0 + p)? / p - log_gamma(1.0 + q)? / q).exp())
}

fn paired_tables<S: RadialSource + ?Sized>(
    src: &S,
    p: f64,
    q: f64,
    dirs: &[Vec<f64>],
    tol: f64,
) -> Result<(Vec<Estimate>, Vec<Estimate>)> {
    if !(p > 0.0 && q >= p) {
        return Err(Error::Domain(format!("need 0 < p <= q, got ({p}, {q})")));
    }
    Ok((
        radial_table(src, p, dirs, tol)?,
        radial_table(src, q, dirs, tol)?,
    ))
}

/// `Gamma(1+p)^(1/p)/Gamma(1+q)^(1/q) rho_q <= rho_p <= rho_q` per direction.
/// The right inclusion needs `g(0) = max g`, true for covariograms.
pub fn inclusion_logconcave_check<S: RadialSource + ?Sized>(
    src: &S,
    p: f64,
    q: f64,
    dirs: &[Vec<f64>],
    tol: f64,
) -> Result<VerificationReport> {
    let (rp, rq) = paired_tables(src, p, q, dirs, tol)?;
    let factor = if p == q {
        1.0
    } else {
        logconcave_factor(p, q)?
    };
    let mut worst_left = f64::INFINITY;
    let mut worst_right = f64::INFINITY;
    let mut violations = 0usize;
    for (a, b) in rp.iter().zip(&rq) {
        let slack = 10.0 * tol * b.value + 3.0 * (a.error + b.error);
        let left = a.value - factor * b.value;
        let right = b.value - a.value;
        worst_left = worst_left.min(left);
        worst_right = worst_right.min(right);
        if left < -slack || right < -slack {
            violations += 1;
        }
    }
    let mut r = VerificationReport::new("inclusion-logconcave", src.label());
    r.set("p", p)
        .set("q", q)
        .set("factor", factor)
        .set("worst_left_margin", worst_left)
        .set("worst_right_margin", worst_right)
        .set("violations", violations as f64);
    r.tolerance = 10.0 * tol;
    r.worst_margin = Some(worst_left.min(worst_right));
    r.passed = violations == 0;
    Ok(r)
}

/// `binom(1/α+q, 1/α)^(1/q) rho_q(u) <= binom(1/α+p, 1/α)^(1/p) rho_p(u)`.
pub fn inclusion_alpha_check<S: RadialSource + ?Sized>(
    src: &S,
    alpha: f64,
    p: f64,
    q: f64,
    dirs: &[Vec<f64>],
    tol: f64,
) -> Result<VerificationReport> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let (rp, rq) = paired_tables(src, p, q, dirs, tol)?;
    let cp = gen_binom(1.0 / alpha + p, 1.0 / alpha)?.powf(1.0 / p);
    let cq = gen_binom(1.0 / alpha + q, 1.0 / alpha)?.powf(1.0 / q);
    let mut worst = f64::INFINITY;
    let mut worst_dir = 0usize;
    let mut max_gap: f64 = 0.0;
    let mut violations = 0usize;
    for (i, (a, b)) in rp.iter().zip(&rq).enumerate() {
        let sp = cp * a.value;
        let sq = cq * b.value;
        let slack = 10.0 * tol * sp + 3.0 * (cp * a.error + cq * b.error);
        let margin = sp - sq;
        if margin < worst {
            worst = margin;
            worst_dir = i;
        }
        max_gap = max_gap.max((sp - sq).abs() / sp);
        if margin < -slack {
            violations += 1;
        }
    }
    let mut r = VerificationReport::new("inclusion-alpha", src.label());
    r.set("alpha", alpha)
        .set("p", p)
        .set("q", q)
        .set("max_relative_gap", max_gap)
        .set("violations", violations as f64)
        .set("worst_direction_index", worst_dir as f64);
    if let Some(u) = dirs.get(worst_dir) {
        r.note(format!("worst direction {u:?}"));
    }
    r.tolerance = 10.0 * tol;
    r.worst_margin = Some(worst);
    r.passed = violations == 0;
    Ok(r)
}

/// `sup |g(tu)/g(0) - (1 - t/R(u))^(1/α)|` over `points` equally spaced `t`
/// per direction; `passed` means the equality shape was detected.
pub fn equality_case_fingerprint<S: RadialSource + ?Sized>(
    src: &S,
    alpha: f64,
    dirs: &[Vec<f64>],
    points: usize,
    tol: f64,
) -> Result<VerificationReport> {
    let g0 = src.value_at_origin();
    let per_dir: Vec<Result<f64>> = dirs
        .par_iter()
        .map(|u| {
            let u = unit_vec(u)?;
            let r = src.support_radius(&u)?;
            Ok((0..=points)
                .map(|k| {
                    let s = k as f64 / points as f64;
                    let x: Vec<f64> = u.iter().map(|c| c * s * r).collect();
                    (src.value(&x) / g0 - (1.0 - s).powf(1.0 / alpha)).abs()
                })
                .fold(0.0, f64::max))
        })
        .collect();
    let mut worst: f64 = 0.0;
    for d in per_dir {
        worst = worst.max(d?);
    }
    let mut r = VerificationReport::new("equality-fingerprint", src.label());
    r.set("alpha", alpha).set("fingerprint", worst);
    r.tolerance = tol;
    r.worst_margin = Some(tol - worst);
    r.passed = worst <= tol;
    Ok(r)
}

/// `binom(2n,n) / binom(2n+2,n)^(n/(n+2))`, the largest `|K_{n+2}(g_K)|` for `|K| = 1`.
pub fn volume_bound(n: usize) -> Result<f64> {
    let n = n as u64;
    let a = binom_int(2 * n, n)?.to_f64().unwrap_or(f64::INFINITY);
    let b = binom_int(2 * n + 2, n)?.to_f64().unwrap_or(f64::INFINITY);
    if a.is_finite() && b.is_finite() {
        return Ok(a / b.powf(n as f64 / (n as f64 + 2.0)));
    }
    let lb = |x: f64, y: f64| -> Result<f64> {
        Ok(log_gamma(x + 1.0)? - log_gamma(y + 1.0)? - log_gamma(x - y + 1.0)?)
    };
    let n = n as f64;
    Ok((lb(2.0 * n, n)? - n / (n + 2.0) * lb(2.0 * n + 2.0, n)?).exp())
}

/// `L` of `K_p(g)` straight from its polar volume and second moments, for
/// even `g` (barycentre at the origin).
pub fn ballbody_isotropic_constant<S: RadialSource + ?Sized>(
    src: &S,
    p: f64,
    dirs: &DirectionSet,
    tol: f64,
) -> Result<Estimate> {
    let n = src.dim();
    let v = ballbody_volume(src, p, dirs, tol)?;
    let mut m = nalgebra::DMatrix::zeros(n, n);
    let mut rel = 0.0;
    for i in 0..n {
        for j in i..n {
            let e = ballbody_integral(src, p, |x| x[i] * x[j], 2.0, dirs, tol)?;
            m[(i, j)] = e.value;
            m[(j, i)] = e.value;
            if i == j {
                rel += e.error / e.value.abs();
            }
        }
    }
    let det = m.determinant();
    if !(det > 0.0) {
        return Err(Error::Degenerate(
            "ball body moment matrix is singular".into(),
        ));
    }
    let nf = n as f64;
    let l = det.powf(1.0 / (2.0 * nf)) / v.value.powf((nf + 2.0) / (2.0 * nf));
    let err = l * (rel / (2.0 * nf) + (nf + 2.0) / (2.0 * nf) * v.error / v.value);
    Ok(Estimate::new(l, err))
}

#[derive(Debug, Clone, Serialize)]
pub struct RadialRow {
    pub direction: Vec<f64>,
    pub radial: f64,
    pub error: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alpha1d::FnProfile;
    use crate::bodies::ConvexBody;
    use crate::numerics::sphere_directions;

    fn triangle_g() -> Covariogram {
        Covariogram::closed_form(ConvexBody::regular_simplex(2).unwrap()).unwrap()
    }

    #[test]
    fn cube_ray() {
        let g = Covariogram::closed_form(ConvexBody::cube(2, 1.0).unwrap()).unwrap();
        let r = ballbody_radial(&g, 2.0, &[1.0, 0.0], 1e-12).unwrap();
        assert!((r.value - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let a = ballbody_radial(&g, 2.0, &[0.6, 0.8], 1e-12).unwrap();
        let b = ballbody_radial(&g, 2.0, &[-0.6, -0.8], 1e-12).unwrap();
        assert!((a.value - b.value).abs() < 1e-12);
    }

    #[test]
    fn triangle_radial_closed_form() {
        let g = triangle_g();
        for p in [0.5f64, 1.0, 2.0, 4.0] {
            for a in [0.0, 0.4, 2.0] {
                let u = [f64::cos(a), f64::sin(a)];
                let want =
                    g.support_radius(&u).unwrap() * (2.0 / ((p + 1.0) * (p + 2.0))).powf(1.0 / p);
                let got = ballbody_radial(&g, p, &u, 1e-12).unwrap().value;
                assert!((got - want).abs() < 1e-11 * want, "p = {p}");
            }
        }
    }

    #[test]
    fn triangle_volumes() {
        let g = triangle_g();
        let dirs = sphere_directions(2, 256, 0).unwrap();
        let v4 = ballbody_volume(&g, 4.0, &dirs, 1e-10).unwrap();
        assert!((v4.value - 6.0 / 15f64.sqrt()).abs() < 1e-9, "{v4:?}");
        let v2 = ballbody_volume(&g, 2.0, &dirs, 1e-10).unwrap();
        assert!((v2.value - 1.0).abs() < 1e-9, "{v2:?}");
    }

    #[test]
    fn simplex3_control_variate() {
        let g = Covariogram::closed_form(ConvexBody::regular_simplex(3).unwrap()).unwrap();
        let dirs = sphere_directions(3, 256, 1).unwrap();
        let v = ballbody_volume(&g, 3.0, &dirs, 1e-9).unwrap();
        assert!((v.value - 1.0).abs() < 1e-6, "{v:?}");
    }

    #[test]
    fn one_dimensional_tent() {
        let f = FnProfile::new("tent", 1.0, vec![], |t| 1.0 - t);
        let src = RadialProfile {
            profile: &f,
            dim: 1,
        };
        let r =
            inclusion_alpha_check(&src, 1.0, 1.0, 2.0, &[vec![1.0], vec![-1.0]], 1e-10).unwrap();
        assert!(r.passed && r.value("max_relative_gap") < 1e-10, "{r}");
        let fp = equality_case_fingerprint(&src, 1.0, &[vec![1.0]], 100, 1e-12).unwrap();
        assert!(fp.passed);
    }

    #[test]
    fn logconcave_factor_value() {
        assert!((logconcave_factor(1.0, 2.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn bound_for_plane() {
        assert!((volume_bound(2).unwrap() - 6.0 / 15f64.sqrt()).abs() < 1e-12);
    }
}
