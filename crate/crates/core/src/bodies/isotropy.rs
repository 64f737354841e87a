use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::ConvexBody;
use crate::error::{Error, Result};
use crate::numerics::{par_sample, Estimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum IsotropyMethod {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

/// Barycentre, second-moment matrix `M = int_K (x-b)(x-b)^T dx`, volume and
/// `L_K`, with per-entry error estimates (zero for exact data).
#[derive(Debug, Clone, Serialize)]
pub struct IsotropyData {
    pub dim: usize,
    pub barycenter: Vec<f64>,
    pub barycenter_error: Vec<f64>,
    pub moment: Vec<Vec<f64>>,
    pub moment_error: Vec<Vec<f64>>,
    pub volume: Estimate,
    pub isotropic_constant: Estimate,
    pub method: IsotropyMethod,
    /// Fraction of accepted proposals when rejection sampling was used.
    pub acceptance: Option<f64>,
}

impl IsotropyData {
    pub fn moment_matrix(&self) -> DMatrix<f64> {
        let n = self.dim;
        DMatrix::from_fn(n, n, |i, j| self.moment[i][j])
    }

    /// Largest `|M_ij - L^2 delta_ij|`, zero for an isotropic body.
    pub fn isotropy_defect(&self) -> f64 {
        let l2 = self.isotropic_constant.value.powi(2);
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let target = if i == j { l2 } else { 0.0 };
                worst = worst.max((self.moment[i][j] - target).abs());
            }
        }
        worst
    }
}

/// `L_K^2 = det(M)^(1/n) / |K|^((n+2)/n)`.
fn isotropic_constant(moment: &DMatrix<f64>, volume: f64) -> Result<f64> {
    let n = moment.nrows() as f64;
    let det = moment.determinant();
    if !(det > 0.0) || !(volume > 0.0) {
        return Err(Error::Degenerate(
            "moment matrix is not positive definite".into(),
        ));
    }
    Ok((det.powf(1.0 / n) / volume.powf((n + 2.0) / n)).sqrt())
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn isotropy_data(body: &ConvexBody, method: IsotropyMethod) -> Result<IsotropyData> {
    let n = body.dim();
    match method {
        IsotropyMethod::Exact => {
            let (v, first, second) = body.exact_moments().ok_or_else(|| {
                Error::Config(format!(
                    "no exact moments for {}; use Monte Carlo",
                    body.name()
                ))
            })?;
            let b = DVector::from_column_slice(&first) / v;
            let m = second - &b * b.transpose() * v;
            let l = isotropic_constant(&m, v)?;
            Ok(IsotropyData {
                dim: n,
                barycenter: b.iter().copied().collect(),
                barycenter_error: vec![0.0; n],
                moment: rows(&m),
                moment_error: vec![vec![0.0; n]; n],
                volume: Estimate::exact(v),
                isotropic_constant: Estimate::exact(l),
                method,
                acceptance: None,
            })
        }
        IsotropyMethod::MonteCarlo { samples, seed } => monte_carlo(body, samples, seed, method),
    }
}

fn monte_carlo(
    body: &ConvexBody,
    samples: usize,
    seed: u64,
    method: IsotropyMethod,
) -> Result<IsotropyData> {
    if samples < 1000 {
        return Err(Error::Config(format!(
            "Monte Carlo isotropy needs >= 1000 samples, got {samples}"
        )));
    }
    let n = body.dim();
    let (points, acceptance) = match body {
        ConvexBody::Polytope(p) if !p.is_simplex() => {
            let drawn: Vec<(Vec<f64>, usize)> =
                par_sample(seed, samples, |rng| p.sample_rejection(rng));
            let tries: usize = drawn.iter().map(|d| d.1).sum();
            (
                drawn.into_iter().map(|d| d.0).collect::<Vec<_>>(),
                Some(samples as f64 / tries as f64),
            )
        }
        _ => (body.sample_many(samples, seed), None),
    };
    let volume = body.volume_with(samples, seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let count = samples as f64;

    let mean: Vec<f64> = (0..n)
        .map(|i| points.iter().map(|x| x[i]).sum::<f64>() / count)
        .collect();
    let mut cov = DMatrix::zeros(n, n);
    let mut cov_sq = DMatrix::zeros(n, n);
    for x in &points {
        for i in 0..n {
            for j in 0..n {
                let v = (x[i] - mean[i]) * (x[j] - mean[j]);
                cov[(i, j)] += v;
                cov_sq[(i, j)] += v * v;
            }
        }
    }
    cov /= count;
    cov_sq /= count;
    let var_x: Vec<f64> = (0..n).map(|i| cov[(i, i)]).collect();
    let m = &cov * volume.value;
    let m_err = DMatrix::from_fn(n, n, |i, j| {
        let var = (cov_sq[(i, j)] - cov[(i, j)].powi(2)).max(0.0);
        volume.value * (var / count).sqrt() + cov[(i, j)].abs() * volume.error
    });
    let l = isotropic_constant(&m, volume.value)?;

    // batch means for the error of L
    let batches = 10;
    let per = points.len() / batches;
    let batch_l: Vec<f64> = (0..batches)
        .filter_map(|b| {
            let chunk = &points[b * per..(b + 1) * per];
            let k = chunk.len() as f64;
            let mu: Vec<f64> = (0..n)
                .map(|i| chunk.iter().map(|x| x[i]).sum::<f64>() / k)
                .collect();
            let c = DMatrix::from_fn(n, n, |i, j| {
                chunk
                    .iter()
                    .map(|x| (x[i] - mu[i]) * (x[j] - mu[j]))
                    .sum::<f64>()
                    / k
            });
            isotropic_constant(&(c * volume.value), volume.value).ok()
        })
        .collect();
    let bm = batch_l.iter().sum::<f64>() / batch_l.len() as f64;
    let bvar = batch_l.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (batch_l.len() as f64 - 1.0);
    let rel_vol = if volume.value > 0.0 {
        volume.error / volume.value
    } else {
        0.0
    };
    let l_err = (bvar / batch_l.len() as f64).sqrt() + l * rel_vol / n as f64;

    Ok(IsotropyData {
        dim: n,
        barycenter: mean,
        barycenter_error: var_x.iter().map(|v| (v / count).sqrt()).collect(),
        moment: rows(&m),
        moment_error: rows(&m_err),
        volume,
        isotropic_constant: Estimate::new(l, l_err),
        method,
        acceptance,
    })
}

/// `a + T K` with volume 1, barycentre 0 and moment matrix `L_K^2 I`, where
/// `T = c M^(-1/2)`.
pub fn isotropic_normalize(body: &ConvexBody, data: &IsotropyData) -> Result<ConvexBody> {
    let n = body.dim();
    crate::error::check_dim(n, data.dim)?;
    let m = data.moment_matrix();
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::Degenerate("singular moment matrix".into()));
    }
    let inv_sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * eig.eigenvectors.transpose();
    let det = m.determinant();
    let c = (det.sqrt() / data.volume.value).powf(1.0 / n as f64);
    let t = inv_sqrt * c;
    let b = DVector::from_column_slice(&data.barycenter);
    let shift = -(&t * b);
    body.clone().affine(t, shift.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn analytic_isotropic_constants() {
        let cube =
            isotropy_data(&ConvexBody::cube(2, 1.0).unwrap(), IsotropyMethod::Exact).unwrap();
        assert!((cube.isotropic_constant.value - (1.0f64 / 12.0).sqrt()).abs() < 1e-14);
        let disk = ConvexBody::ball_with_volume(2, 1.0).unwrap();
        let d = isotropy_data(&disk, IsotropyMethod::Exact).unwrap();
        assert!((d.isotropic_constant.value - 1.0 / (2.0 * PI.sqrt())).abs() < 1e-14);
        let tri = isotropy_data(
            &ConvexBody::regular_simplex(2).unwrap(),
            IsotropyMethod::Exact,
        )
        .unwrap();
        let want = (1.0 / (6.0 * 3f64.sqrt())).sqrt();
        assert!((tri.isotropic_constant.value - want).abs() < 1e-12);
        assert!(tri.isotropy_defect() < 1e-12);
    }

    #[test]
    fn ordering_ball_cube_simplex() {
        for n in [2, 3] {
            let l = |b: ConvexBody| {
                isotropy_data(&b, IsotropyMethod::Exact)
                    .unwrap()
                    .isotropic_constant
                    .value
            };
            let ball = l(ConvexBody::ball(n, 1.0).unwrap());
            let cube = l(ConvexBody::cube(n, 1.0).unwrap());
            let simplex = l(ConvexBody::regular_simplex(n).unwrap());
            assert!(
                ball < cube && cube < simplex,
                "n = {n}: {ball} {cube} {simplex}"
            );
        }
    }

    #[test]
    fn stretched_cube_normalizes_back() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let body = ConvexBody::cube(2, 1.0)
            .unwrap()
            .affine(m, vec![0.3, 0.1])
            .unwrap();
        let data = isotropy_data(&body, IsotropyMethod::Exact).unwrap();
        assert!((data.isotropic_constant.value - (1.0f64 / 12.0).sqrt()).abs() < 1e-12);
        let iso = isotropic_normalize(&body, &data).unwrap();
        let again = isotropy_data(&iso, IsotropyMethod::Exact).unwrap();
        assert!((again.volume.value - 1.0).abs() < 1e-12);
        assert!(again.barycenter.iter().all(|b| b.abs() < 1e-12));
        assert!(again.isotropy_defect() < 1e-12);
    }

    #[test]
    fn random_triangle_becomes_regular() {
        let t =
            ConvexBody::polytope(vec![vec![0.1, -0.3], vec![2.0, 0.4], vec![0.5, 1.7]]).unwrap();
        let data = isotropy_data(&t, IsotropyMethod::Exact).unwrap();
        let iso = isotropic_normalize(&t, &data).unwrap();
        let again = isotropy_data(&iso, IsotropyMethod::Exact).unwrap();
        assert!((again.isotropic_constant.value - 0.310_202_2).abs() < 1e-6);
        assert!(again.isotropy_defect() < 1e-12);
    }

    #[test]
    fn monte_carlo_agrees_with_exact() {
        let quad = ConvexBody::polytope(vec![
            vec![0.0, 0.0],
            vec![1.3, 0.1],
            vec![1.0, 1.0],
            vec![-0.2, 0.8],
        ])
        .unwrap();
        let exact = isotropy_data(&quad, IsotropyMethod::Exact).unwrap();
        let mc = isotropy_data(
            &quad,
            IsotropyMethod::MonteCarlo {
                samples: 100_000,
                seed: 4,
            },
        )
        .unwrap();
        let dl = (exact.isotropic_constant.value - mc.isotropic_constant.value).abs();
        assert!(
            dl <= 3.0 * mc.isotropic_constant.error + 1e-12,
            "{dl} vs {:?}",
            mc.isotropic_constant
        );
        for i in 0..2 {
            assert!((exact.barycenter[i] - mc.barycenter[i]).abs() <= 4.0 * mc.barycenter_error[i]);
            for j in 0..2 {
                assert!(
                    (exact.moment[i][j] - mc.moment[i][j]).abs() <= 4.0 * mc.moment_error[i][j]
                );
            }
        }
        assert!(mc.acceptance.unwrap() > 0.3);
        let err = isotropy_data(
            &quad,
            IsotropyMethod::MonteCarlo {
                samples: 999,
                seed: 4,
            },
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
