//! One-dimensional α-concave functions and
//! `G_g(p) = (binom(1/α+p, 1/α) (1/g(0)) int_0^inf p t^(p-1) g(t) dt)^(1/p)`.

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{gen_binom, integrate_power_weighted, stream, Estimate};
use crate::report::VerificationReport;

/// A nonnegative function on `[0, inf)` vanishing beyond `support_end`.
pub trait Profile1D: Sync {
    fn value(&self, t: f64) -> f64;
    fn support_end(&self) -> f64;
    /// Increasing points where the function may fail to be smooth, ending
    /// with `support_end`.
    fn breakpoints(&self) -> Vec<f64>;
    fn label(&self) -> String;

    fn value_at_zero(&self) -> f64 {
        self.value(0.0)
    }
}

/// `g = phi^(1/alpha)` on `[0, M]` for a concave piecewise-linear `phi` with
/// `phi(0) = 1`, and `g = 0` beyond `M`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaConcave1D {
    pub alpha: f64,
    /// `0 = x_0 < x_1 < ... < x_k = M`.
    pub knots: Vec<f64>,
    /// `phi(x_i)`.
    pub phi: Vec<f64>,
}

impl AlphaConcave1D {
    pub fn new(alpha: f64, knots: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::Domain(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        if knots.len() < 2 || knots.len() != phi.len() {
            return Err(Error::Domain(
                "need at least two knots and one phi value per knot".into(),
            ));
        }
        if knots[0] != 0.0 || knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(
                "knots must start at 0 and increase strictly".into(),
            ));
        }
        if (phi[0] - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("phi(0) must be 1, got {}", phi[0])));
        }
        if phi.iter().any(|v| *v < -1e-12) {
            return Err(Error::Domain("phi must be nonnegative on [0, M]".into()));
        }
        let f = AlphaConcave1D { alpha, knots, phi };
        let s = f.slopes();
        if s.windows(2)
            .any(|w| w[1] > w[0] + 1e-9 * (1.0 + w[0].abs()))
        {
            return Err(Error::Domain(
                "phi must be concave (slopes non-increasing)".into(),
            ));
        }
        Ok(f)
    }

    /// `phi` from `phi(0) = 1` and one slope per piece; `breaks` are the
    /// interior knots.
    pub fn from_slopes(alpha: f64, m: f64, breaks: &[f64], slopes: &[f64]) -> Result<Self> {
        if slopes.len() != breaks.len() + 1 {
            return Err(Error::Domain("need one slope per piece".into()));
        }
        if !(m > 0.0) {
            return Err(Error::Domain(format!(
                "support end must be positive, got {m}"
            )));
        }
        let mut knots = vec![0.0];
        knots.extend_from_slice(breaks);
        knots.push(m);
        let mut phi = vec![1.0];
        for (i, s) in slopes.iter().enumerate() {
            let last = phi[i];
            phi.push(last + s * (knots[i + 1] - knots[i]));
        }
        // clear rounding residue at a zero end
        if let Some(last) = phi.last_mut() {
            if last.abs() < 1e-14 {
                *last = 0.0;
            }
        }
        Self::new(alpha, knots, phi)
    }

    /// The extremal `h(t) = (1 - t/M)_+^(1/alpha)`.
    pub fn extremal(alpha: f64, m: f64) -> Result<Self> {
        Self::from_slopes(alpha, m, &[], &[-1.0 / m])
    }

    pub fn end(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.knots
            .windows(2)
            .zip(self.phi.windows(2))
            .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
            .collect()
    }

    pub fn phi_at(&self, t: f64) -> f64 {
        if !(0.0..=self.end()).contains(&t) {
            return 0.0;
        }
        let i = self
            .knots
            .partition_point(|k| *k <= t)
            .clamp(1, self.knots.len() - 1);
        let (x0, x1) = (self.knots[i - 1], self.knots[i]);
        let (y0, y1) = (self.phi[i - 1], self.phi[i]);
        (y0 + (y1 - y0) * (t - x0) / (x1 - x0)).max(0.0)
    }

    /// `g(t / lambda)`.
    pub fn stretched(&self, lambda: f64) -> Result<Self> {
        Self::new(
            self.alpha,
            self.knots.iter().map(|k| k * lambda).collect(),
            self.phi.clone(),
        )
    }

    /// `G(p)` for this function's own `alpha`.
    pub fn g(&self, p: f64, tol: f64) -> Result<Estimate> {
        g_function(self, self.alpha, p, tol)
    }
}

impl Profile1D for AlphaConcave1D {
    fn value(&self, t: f64) -> f64 {
        self.phi_at(t).powf(1.0 / self.alpha)
    }

    fn support_end(&self) -> f64 {
        self.end()
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.knots[1..].to_vec()
    }

    fn label(&self) -> String {
        format!(
            "alpha-concave(alpha={}, pieces={})",
            self.alpha,
            self.knots.len() - 1
        )
    }
}

/// An arbitrary profile given by a closure.
pub struct FnProfile {
    name: String,
    end: f64,
    breaks: Vec<f64>,
    f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl FnProfile {
    pub fn new(
        name: &str,
        end: f64,
        breaks: Vec<f64>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let mut breaks: Vec<f64> = breaks
            .into_iter()
            .filter(|b| *b > 0.0 && *b < end)
            .collect();
        breaks.push(end);
        FnProfile {
            name: name.to_string(),
            end,
            breaks,
            f: Box::new(f),
        }
    }
}

impl Profile1D for FnProfile {
    fn value(&self, t: f64) -> f64 {
        if (0.0..=self.end).contains(&t) {
            (self.f)(t)
        } else {
            0.0
        }
    }

    fn support_end(&self) -> f64 {
        self.end
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.breaks.clone()
    }

    fn label(&self) -> String {
        self.name.clone()
    }
}

/// `(1 - t)^3` on `[0, 1]`: convex, so not 1-concave. Fed to the suite with
/// `alpha = 1` it gives `G(p) = (6/((p+2)(p+3)))^(1/p)`, which increases.
pub fn negative_control() -> FnProfile {
    FnProfile::new("(1-t)^3 as 1-concave", 1.0, vec![], |t| (1.0 - t).powi(3))
}

/// `(1/g(0)) int_0^inf p t^(p-1) g(t) dt`.
pub fn normalized_moment<P: Profile1D + ?Sized>(f: &P, p: f64, tol: f64) -> Result<Estimate> {
    if !(p > 0.0) {
        return Err(Error::Domain(format!("p must be positive, got {p}")));
    }
    let g0 = f.value_at_zero();
    if !(g0 > 0.0) {
        return Err(Error::Domain("need g(0) > 0".into()));
    }
    let r = integrate_power_weighted(|t| f.value(t), p, &f.breakpoints(), tol);
    if !r.converged {
        return Err(Error::Quadrature(format!(
            "moment of {} did not converge at p = {p}",
            f.label()
        )));
    }
    Ok(Estimate::new(r.value / g0, r.abs_error_estimate / g0))
}

pub fn g_function<P: Profile1D + ?Sized>(f: &P, alpha: f64, p: f64, tol: f64) -> Result<Estimate> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let m = normalized_moment(f, p, tol * 1e-2)?;
    let b = gen_binom(1.0 / alpha + p, 1.0 / alpha)?;
    let v = (b * m.value).powf(1.0 / p);
    Ok(Estimate::new(v, v / p * m.error / m.value))
}

/// Deterministic random α-concave function with `pieces` linear pieces of
/// `phi` on `[0, m]`. Slopes are sampled, sorted decreasingly and shifted so
/// that `phi(m)` is 0 half of the time and uniform in `(0, 1)` otherwise.
pub fn random_alpha_concave(
    seed: u64,
    alpha: f64,
    m: f64,
    pieces: usize,
) -> Result<AlphaConcave1D> {
    if pieces < 1 {
        return Err(Error::Domain("need at least one piece".into()));
    }
    if !(m > 0.0) {
        return Err(Error::Domain(format!(
            "support end must be positive, got {m}"
        )));
    }
    let mut rng = stream(seed, 0);
    let mut breaks: Vec<f64> = Vec::with_capacity(pieces - 1);
    while breaks.len() < pieces - 1 {
        let b = rng.random_range(0.0..m);
        if b > 0.0 && !breaks.contains(&b) {
            breaks.push(b);
        }
    }
    breaks.sort_by(f64::total_cmp);
    let mut slopes: Vec<f64> = (0..pieces)
        .map(|_| rng.random_range(-3.0..1.0) / m)
        .collect();
    slopes.sort_by(|a, b| b.total_cmp(a));
    let end = if rng.random_bool(0.5) {
        0.0
    } else {
        rng.random::<f64>()
    };
    let mut bounds = vec![0.0];
    bounds.extend_from_slice(&breaks);
    bounds.push(m);
    let rise: f64 = slopes
        .iter()
        .zip(bounds.windows(2))
        .map(|(s, w)| s * (w[1] - w[0]))
        .sum();
    let shift = (end - 1.0 - rise) / m;
    for s in &mut slopes {
        *s += shift;
    }
    AlphaConcave1D::from_slopes(alpha, m, &breaks, &slopes)
}

/// `G(p_{i+1}) <= G(p_i) + tol max(1, G(p_i))` over `trials` random functions.
pub fn monotonicity_suite(
    trials: usize,
    alpha: f64,
    p_grid: &[f64],
    seed: u64,
    tol: f64,
) -> Result<VerificationReport> {
    if p_grid.windows(2).any(|w| !(w[1] > w[0])) || p_grid.is_empty() {
        return Err(Error::Domain(
            "p grid must be nonempty and increasing".into(),
        ));
    }
    let outcomes: Vec<Result<(u64, AlphaConcave1D, Vec<f64>)>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let trial_seed = rng.next_u64();
            let m = rng.random_range(0.25..4.0);
            let pieces = rng.random_range(1..=8);
            let f = random_alpha_concave(trial_seed, alpha, m, pieces)?;
            let gs = p_grid
                .iter()
                .map(|&p| f.g(p, 1e-12).map(|e| e.value))
                .collect::<Result<Vec<_>>>()?;
            Ok((trial_seed, f, gs))
        })
        .collect();
    let mut violations = 0usize;
    let mut worst = f64::INFINITY;
    let mut envelope = 0usize;
    let mut notes = Vec::new();
    for o in outcomes {
        let (trial_seed, f, gs) = o?;
        for (i, w) in gs.windows(2).enumerate() {
            let margin = w[0] + tol * w[0].max(1.0) - w[1];
            worst = worst.min(w[0] - w[1]);
            if margin < 0.0 {
                violations += 1;
                notes.push(format!(
                    "seed {trial_seed}: G({}) = {} < G({}) = {}, knots {:?}, phi {:?}",
                    p_grid[i],
                    w[0],
                    p_grid[i + 1],
                    w[1],
                    f.knots,
                    f.phi
                ));
            }
        }
        if gs.iter().any(|g| *g > f.end() * (1.0 + tol)) {
            envelope += 1;
        }
    }
    let mut r = VerificationReport::new("g-monotonicity", format!("alpha={alpha}"));
    r.set("trials", trials as f64)
        .set("violations", violations as f64)
        .set("envelope_exceedances", envelope as f64);
    r.tolerance = tol;
    r.worst_margin = Some(worst);
    r.passed = violations == 0;
    r.notes = notes;
    Ok(r)
}

/// `G` on `p_grid` for a single profile, with the largest increase found.
pub fn g_profile_report<P: Profile1D + ?Sized>(
    f: &P,
    alpha: f64,
    p_grid: &[f64],
    tol: f64,
) -> Result<VerificationReport> {
    let gs = p_grid
        .iter()
        .map(|&p| g_function(f, alpha, p, 1e-12).map(|e| e.value))
        .collect::<Result<Vec<_>>>()?;
    let mut r = VerificationReport::new("g-monotonicity", f.label());
    let mut worst = f64::INFINITY;
    for (p, g) in p_grid.iter().zip(&gs) {
        r.set(&format!("G({p})"), *g);
    }
    for w in gs.windows(2) {
        worst = worst.min(w[0] + tol * w[0].max(1.0) - w[1]);
    }
    let spread = gs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - gs.iter().copied().fold(f64::INFINITY, f64::min);
    r.set("spread", spread);
    r.tolerance = tol;
    r.worst_margin = Some(worst);
    r.passed = worst >= 0.0;
    Ok(r)
}

/// Flags the equality case of the monotonicity: when `G(p)` and `G(q)` agree,
/// fits `M = G(p)` and measures `sup |g/g(0) - (1 - t/M)_+^(1/alpha)|`.
pub fn equality_detect<P: Profile1D + ?Sized>(
    f: &P,
    alpha: f64,
    p: f64,
    q: f64,
    tol: f64,
) -> Result<VerificationReport> {
    if !(p < q) {
        return Err(Error::Domain(format!("need p < q, got ({p}, {q})")));
    }
    let gp = g_function(f, alpha, p, 1e-13)?.value;
    let gq = g_function(f, alpha, q, 1e-13)?.value;
    let mut r = VerificationReport::new("g-equality", f.label());
    r.set("G_p", gp).set("G_q", gq).set("gap", (gp - gq).abs());
    r.tolerance = tol;
    if (gp - gq).abs() <= tol {
        let m = gp;
        let g0 = f.value_at_zero();
        let hi = m.max(f.support_end());
        let steps = 4000;
        let dist = (0..=steps)
            .map(|k| {
                let t = hi * k as f64 / steps as f64;
                let h = (1.0 - t / m).max(0.0).powf(1.0 / alpha);
                (f.value(t) / g0 - h).abs()
            })
            .fold(0.0, f64::max);
        r.set("fitted_m", m).set("sup_distance", dist);
        r.passed = dist <= 10.0 * tol;
    } else {
        r.passed = false;
    }
    r.worst_margin = r.get("sup_distance").map(|d| 10.0 * tol - d);
    Ok(r)
}
