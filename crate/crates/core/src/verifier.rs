//! End-to-end check of `L_K <= D_n L_{K_{n+2}(g_K)}` and the supporting
//! volume bound, symmetric reduction and `D_n` tabulation.

use rand::Rng;
use serde::Serialize;

use crate::ballbodies::{
    ballbody_isotropic_constant, ballbody_volume, radial_table, volume_bound, RadialRow,
    RadialSource,
};
use crate::bodies::{
    isotropic_normalize, isotropy_data, ConvexBody, IsotropyMethod, DEFAULT_MC_SAMPLES,
};
use crate::combinatorics::{dn, reciprocal_dn_squared};
use crate::covariogram::Covariogram;
use crate::error::{Error, Result};
use crate::numerics::{
    sphere_directions, stream, unit_ball_volume, DirectionMode, DirectionSet, Estimate,
};
use crate::report::VerificationReport;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Theorem1Config {
    /// Move the body to isotropic position first.
    pub normalize: bool,
    /// Angular grid size in the plane.
    pub dirs_2d: usize,
    /// Monte Carlo direction count for `n >= 3`.
    pub dirs_nd: usize,
    pub seed: u64,
    /// Sample budget for Monte Carlo covariograms and moments.
    pub mc_samples: usize,
    /// Use the Monte Carlo covariogram even when a closed form exists.
    pub force_monte_carlo: bool,
    pub quad_tol: f64,
    /// Equality tolerance for closed-form pipelines.
    pub eq_tol: f64,
    pub sigmas: f64,
    /// Also compute `L` of the ball body from its own moments.
    pub direct_check: bool,
}

impl Default for Theorem1Config {
    fn default() -> Self {
        Theorem1Config {
            normalize: true,
            dirs_2d: 256,
            dirs_nd: 4096,
            seed: 7,
            mc_samples: DEFAULT_MC_SAMPLES,
            force_monte_carlo: false,
            quad_tol: 1e-9,
            eq_tol: 1e-4,
            sigmas: 3.0,
            direct_check: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Theorem1Report {
    pub body: String,
    pub n: usize,
    pub l_k: Estimate,
    /// `|K_{n+2}(g_K)| / |K|`.
    pub volume: Estimate,
    pub l_ball: Estimate,
    pub l_ball_direct: Option<Estimate>,
    pub dn: f64,
    pub ratio: Estimate,
    pub pass: bool,
    pub equality: bool,
    pub closed_form: bool,
    pub directions: usize,
    pub seed: u64,
    pub quad_tol: f64,
    pub eq_tol: f64,
}

impl Theorem1Report {
    pub const CSV_HEADER: [&'static str; 9] = [
        "body", "n", "L_K", "V", "L_ball", "D_n", "ratio", "pass", "equality",
    ];

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.body.clone(),
            self.n.to_string(),
            format!("{:?}", self.l_k.value),
            format!("{:?}", self.volume.value),
            format!("{:?}", self.l_ball.value),
            format!("{:?}", self.dn),
            format!("{:?}", self.ratio.value),
            self.pass.to_string(),
            self.equality.to_string(),
        ]
    }
}

pub fn directions_for(n: usize, cfg: &Theorem1Config) -> Result<DirectionSet> {
    match n {
        0 => Err(Error::Domain("dimension must be >= 1".into())),
        1 => Ok(DirectionSet {
            dim: 1,
            dirs: vec![vec![1.0], vec![-1.0]],
            mode: DirectionMode::AngularGrid,
            seed: cfg.seed,
        }),
        2 => sphere_directions(2, cfg.dirs_2d, cfg.seed),
        _ => sphere_directions(n, cfg.dirs_nd, cfg.seed),
    }
}

fn moment_method(body: &ConvexBody, cfg: &Theorem1Config) -> IsotropyMethod {
    if body.exact_moments().is_some() {
        IsotropyMethod::Exact
    } else {
        IsotropyMethod::MonteCarlo {
            samples: cfg.mc_samples,
            seed: cfg.seed,
        }
    }
}

/// Covariogram of the (optionally normalised) body together with
/// `|K_{n+2}(g_K)| / |K|`, which is affine invariant.
struct Pipeline {
    g: Covariogram,
    l_k: Estimate,
    volume: Estimate,
    dirs: DirectionSet,
}

fn pipeline(body: &ConvexBody, cfg: &Theorem1Config) -> Result<Pipeline> {
    let n = body.dim();
    let data = isotropy_data(body, moment_method(body, cfg)).map_err(|e| e.at("isotropy"))?;
    let work = if cfg.normalize {
        isotropic_normalize(body, &data).map_err(|e| e.at("normalize"))?
    } else {
        body.clone()
    };
    let g = if cfg.force_monte_carlo {
        Covariogram::monte_carlo(work, cfg.mc_samples, cfg.seed)
    } else {
        Covariogram::auto(work, cfg.mc_samples, cfg.seed)
    }
    .map_err(|e| e.at("covariogram"))?;
    let dirs = directions_for(n, cfg)?;
    let v = ballbody_volume(&g, n as f64 + 2.0, &dirs, cfg.quad_tol)
        .map_err(|e| e.at("ball-body-volume"))?;
    let k = g.volume();
    let volume = Estimate::new(
        v.value / k.value,
        v.error / k.value + v.value * k.error / (k.value * k.value),
    );
    Ok(Pipeline {
        g,
        l_k: data.isotropic_constant,
        volume,
        dirs,
    })
}

/// Ratio `L_K / (D_n L_{K_{n+2}(g_K)})` with `L_{K_{n+2}}` from
/// `L^2 = 2 L_K^2 / |K_{n+2}(g_K)|^(1+2/n)` for `|K| = 1`.
pub fn theorem1_verify(body: &ConvexBody, cfg: &Theorem1Config) -> Result<Theorem1Report> {
    let n = body.dim();
    let pipe = pipeline(body, cfg)?;
    let nf = n as f64;
    let expo = (nf + 2.0) / (2.0 * nf);
    let v = pipe.volume;
    let scale = v.value.powf(expo);
    let l_ball = Estimate::new(
        2f64.sqrt() * pipe.l_k.value / scale,
        2f64.sqrt()
            * (pipe.l_k.error / scale + pipe.l_k.value * expo * v.error / (scale * v.value)),
    );
    let d = dn(n as u64).map_err(|e| e.at("dn"))?.value();
    // L_K cancels: ratio = V^((n+2)/(2n)) / (sqrt 2 D_n)
    let ratio_value = scale / (2f64.sqrt() * d);
    let ratio = Estimate::new(ratio_value, ratio_value * expo * v.error / v.value);
    let closed = pipe.g.is_closed_form();
    let slack = (cfg.sigmas * ratio.error).max(10.0 * cfg.quad_tol);
    let eq_band = if closed {
        cfg.eq_tol.max(cfg.sigmas * ratio.error)
    } else {
        cfg.sigmas * ratio.error
    };
    let l_ball_direct = if cfg.direct_check {
        let direct = ballbody_isotropic_constant(&pipe.g, nf + 2.0, &pipe.dirs, cfg.quad_tol)
            .map_err(|e| e.at("ball-body-moments"))?;
        Some(direct)
    } else {
        None
    };
    Ok(Theorem1Report {
        body: body.name(),
        n,
        l_k: pipe.l_k,
        volume: v,
        l_ball,
        l_ball_direct,
        dn: d,
        ratio,
        pass: ratio.value <= 1.0 + slack,
        equality: (ratio.value - 1.0).abs() <= eq_band,
        closed_form: closed,
        directions: pipe.dirs.len(),
        seed: cfg.seed,
        quad_tol: cfg.quad_tol,
        eq_tol: cfg.eq_tol,
    })
}

/// `|K_{n+2}(g_K)| <= binom(2n,n) / binom(2n+2,n)^(n/(n+2))` for `|K| = 1`.
pub fn volume_bound_check(body: &ConvexBody, cfg: &Theorem1Config) -> Result<VerificationReport> {
    let n = body.dim();
    let pipe = pipeline(body, cfg)?;
    let bound = volume_bound(n)?;
    let v = pipe.volume;
    let slack = (cfg.sigmas * v.error).max(10.0 * cfg.quad_tol * bound);
    let eq_band = if pipe.g.is_closed_form() {
        (cfg.eq_tol * bound).max(cfg.sigmas * v.error)
    } else {
        cfg.sigmas * v.error
    };
    let mut r = VerificationReport::new("volume-bound", body.name());
    r.set("volume", v.value).set("bound", bound).set(
        "equality",
        f64::from(u8::from((v.value - bound).abs() <= eq_band)),
    );
    r.error_estimate = v.error;
    r.tolerance = slack;
    r.worst_margin = Some(bound + slack - v.value);
    r.passed = v.value <= bound + slack;
    Ok(r)
}

#[derive(Debug, Clone, Serialize)]
pub struct SymmetricReduction {
    pub report: VerificationReport,
    /// `rho_T` on the direction set, `T = |K_{n+2}|^(-1/n) K_{n+2}(g_K)`.
    pub table: Vec<RadialRow>,
}

/// The volume-one symmetric body `T` of the reduction, its radial table,
/// central symmetry, an independent volume estimate from the table, and
/// `L_T` with the reduction constant `C = D_n`.
pub fn symmetric_reduction_report(
    body: &ConvexBody,
    cfg: &Theorem1Config,
) -> Result<SymmetricReduction> {
    let n = body.dim();
    let nf = n as f64;
    let pipe = pipeline(body, cfg)?;
    let g = &pipe.g;
    let p = nf + 2.0;
    // |K_{n+2}| in the working coordinates, where T is built
    let v_work = pipe.volume.value * g.volume().value;
    let shrink = v_work.powf(-1.0 / nf);
    let dirs = &pipe.dirs.dirs;
    let neg: Vec<Vec<f64>> = dirs
        .iter()
        .map(|u| u.iter().map(|c| -c).collect())
        .collect();
    let tol = cfg.quad_tol;
    let plus = radial_table(g, p, dirs, tol)?;
    let minus = radial_table(g, p, &neg, tol)?;
    let mut asym: f64 = 0.0;
    for (a, b) in plus.iter().zip(&minus) {
        asym = asym.max((a.value - b.value).abs() * shrink);
    }
    let table: Vec<RadialRow> = dirs
        .iter()
        .zip(&plus)
        .map(|(u, r)| RadialRow {
            direction: u.clone(),
            radial: r.value * shrink,
            error: r.error * shrink,
        })
        .collect();
    // volume of T straight from the table
    let (vol_t, vol_err) = match n {
        1 => (
            table[0].radial + table[1].radial,
            table[0].error + table[1].error,
        ),
        2 => {
            let k = table.len();
            let fine: f64 = table.iter().map(|r| r.radial * r.radial / 2.0).sum::<f64>()
                * 2.0
                * std::f64::consts::PI
                / k as f64;
            let coarse: f64 = table
                .iter()
                .step_by(2)
                .map(|r| r.radial * r.radial / 2.0)
                .sum::<f64>()
                * 2.0
                * std::f64::consts::PI
                / k.div_ceil(2) as f64;
            let prop: f64 =
                table.iter().map(|r| r.radial * r.error).sum::<f64>() * 2.0 * std::f64::consts::PI
                    / k as f64;
            (fine, (fine - coarse).abs() + prop)
        }
        _ => {
            let surface = nf * unit_ball_volume(n);
            let xs: Vec<f64> = table.iter().map(|r| r.radial.powf(nf) / nf).collect();
            let c = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / c;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (c - 1.0).max(1.0);
            (surface * mean, surface * (var / c).sqrt())
        }
    };
    let d = dn(n as u64)?.value();
    let expo = (nf + 2.0) / (2.0 * nf);
    let l_t = 2f64.sqrt() * pipe.l_k.value / pipe.volume.value.powf(expo);
    let sym_tol = if g.is_closed_form() {
        1e-9
    } else {
        1e-9 + cfg.sigmas * plus.iter().map(|r| r.error).fold(0.0, f64::max) * 2.0 * shrink
    };
    let vol_tol = cfg.sigmas * vol_err + 10.0 * cfg.quad_tol;
    let mut r = VerificationReport::new("symmetric-reduction", body.name());
    r.set("max_asymmetry", asym)
        .set("volume_T", vol_t)
        .set("L_K", pipe.l_k.value)
        .set("L_T", l_t)
        .set("C", d)
        .set("L_K_over_L_T", pipe.l_k.value / l_t);
    r.error_estimate = vol_err;
    r.tolerance = vol_tol;
    r.worst_margin = Some((sym_tol - asym).min(vol_tol - (vol_t - 1.0).abs()));
    r.passed = asym <= sym_tol
        && (vol_t - 1.0).abs() <= vol_tol
        && pipe.l_k.value <= d * l_t * (1.0 + 1e-9);
    r.note(format!("L_K <= C L_T with C = D_{n}"));
    Ok(SymmetricReduction { report: r, table })
}

#[derive(Debug, Clone, Serialize)]
pub struct DnRow {
    pub n: u64,
    pub dn: f64,
    pub gap: f64,
    /// `2 C(2n+2,n) / C(2n,n)^(1+2/n)`, tending to 1/2.
    pub reciprocal_square: f64,
    pub certificate: bool,
}

/// `D_n`, `sqrt 2 - D_n` and the exact certificate for each `n`.
pub fn dn_limit_scan(n_list: &[u64]) -> Result<(Vec<DnRow>, VerificationReport)> {
    if n_list.is_empty() {
        return Err(Error::Domain("need at least one n".into()));
    }
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let d = dn(n)?;
        rows.push(DnRow {
            n,
            dn: d.value(),
            gap: std::f64::consts::SQRT_2 - d.value(),
            reciprocal_square: reciprocal_dn_squared(n)?,
            certificate: d.certificate,
        });
    }
    let mut r = VerificationReport::new("dn-limit", format!("{} values", rows.len()));
    let min_gap = rows.iter().map(|x| x.gap).fold(f64::INFINITY, f64::min);
    r.set("min_gap", min_gap).set(
        "certified",
        rows.iter().filter(|x| x.certificate).count() as f64,
    );
    r.passed = rows.iter().all(|x| x.certificate);
    Ok((rows, r))
}

/// Convex hull of 6 to 10 seeded uniform points in `[-1, 1]^n`, redrawn while degenerate.
pub fn random_vpolytope(n: usize, seed: u64) -> Result<ConvexBody> {
    for attempt in 0..100u64 {
        let mut rng = stream(seed, attempt);
        let count = rng.random_range(6..=10);
        let pts: Vec<Vec<f64>> = (0..count)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect())
            .collect();
        if let Ok(b) = ConvexBody::polytope(pts) {
            return Ok(b);
        }
    }
    Err(Error::Degenerate(
        "no nondegenerate random polytope in 100 attempts".into(),
    ))
}

/// Radial table helper for reports.
pub fn radial_rows<S: RadialSource + ?Sized>(
    src: &S,
    p: f64,
    dirs: &DirectionSet,
    tol: f64,
) -> Result<Vec<RadialRow>> {
    Ok(dirs
        .dirs
        .iter()
        .zip(radial_table(src, p, &dirs.dirs, tol)?)
        .map(|(u, r)| RadialRow {
            direction: u.clone(),
            radial: r.value,
            error: r.error,
        })
        .collect())
}
