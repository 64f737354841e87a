//! Convex bodies: membership, chords, radial and Minkowski functionals,
//! volumes, difference bodies and isotropic normalisation.

mod isotropy;
mod json;
pub mod lp;
pub mod polytope;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use isotropy::{isotropic_normalize, isotropy_data, IsotropyData, IsotropyMethod};
pub use json::BodySpec;
pub use polytope::{Facet, VPolytope};

use crate::error::{check_dim, Error, Result};
use crate::numerics::{dot, gaussian_vector, norm, par_sample, unit_ball_volume, Estimate};

/// Default Monte Carlo budget for quantities with no closed form.
pub const DEFAULT_MC_SAMPLES: usize = 200_000;
pub const DEFAULT_MC_SEED: u64 = 0x5eed;

/// `a + T K`.
#[derive(Debug, Clone)]
pub struct AffineImage {
    pub base: Arc<ConvexBody>,
    pub matrix: DMatrix<f64>,
    pub shift: Vec<f64>,
    inverse: DMatrix<f64>,
    det: f64,
}

impl AffineImage {
    pub fn new(base: ConvexBody, matrix: DMatrix<f64>, shift: Vec<f64>) -> Result<Self> {
        let n = base.dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: matrix.nrows(),
            });
        }
        check_dim(n, shift.len())?;
        let det = matrix.determinant();
        let inverse = matrix
            .clone()
            .try_inverse()
            .filter(|_| det.abs() > 1e-300)
            .ok_or_else(|| Error::Degenerate("affine map is singular".into()))?;
        Ok(AffineImage {
            base: Arc::new(base),
            matrix,
            shift,
            inverse,
            det,
        })
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let y = &self.matrix * DVector::from_column_slice(x);
        y.iter().zip(&self.shift).map(|(a, b)| a + b).collect()
    }

    pub fn apply_linear(&self, x: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(x))
            .iter()
            .copied()
            .collect()
    }

    pub fn pull_back(&self, x: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = x.iter().zip(&self.shift).map(|(a, b)| a - b).collect();
        self.pull_back_linear(&d)
    }

    pub fn pull_back_linear(&self, x: &[f64]) -> Vec<f64> {
        (&self.inverse * DVector::from_column_slice(x))
            .iter()
            .copied()
            .collect()
    }
}

#[derive(Debug, Clone)]
pub enum ConvexBody {
    /// `[-side/2, side/2]^dim`.
    Cube {
        dim: usize,
        side: f64,
    },
    /// Euclidean ball of the given radius centred at the origin.
    Ball {
        dim: usize,
        radius: f64,
    },
    /// Regular simplex of volume 1 with barycentre at the origin and the first
    /// vertex on the positive first axis.
    Simplex(VPolytope),
    Polytope(VPolytope),
    Affine(AffineImage),
}

/// Vertices of the regular simplex in R^n with circumradius 1, first vertex `e_1`.
fn unit_regular_simplex(n: usize) -> Vec<Vec<f64>> {
    if n == 1 {
        return vec![vec![1.0], vec![-1.0]];
    }
    let lower = unit_regular_simplex(n - 1);
    let shrink = (1.0 - 1.0 / (n * n) as f64).sqrt();
    let mut out = Vec::with_capacity(n + 1);
    let mut first = vec![0.0; n];
    first[0] = 1.0;
    out.push(first);
    for v in lower {
        let mut w = Vec::with_capacity(n);
        w.push(-1.0 / n as f64);
        w.extend(v.iter().map(|c| c * shrink));
        out.push(w);
    }
    out
}

impl ConvexBody {
    pub fn cube(dim: usize, side: f64) -> Result<Self> {
        if dim == 0 || !(side > 0.0) {
            return Err(Error::Degenerate(format!(
                "cube needs dim >= 1 and side > 0, got ({dim}, {side})"
            )));
        }
        Ok(ConvexBody::Cube { dim, side })
    }

    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 || !(radius > 0.0) {
            return Err(Error::Degenerate(format!(
                "ball needs dim >= 1 and radius > 0, got ({dim}, {radius})"
            )));
        }
        Ok(ConvexBody::Ball { dim, radius })
    }

    /// Ball of the given volume.
    pub fn ball_with_volume(dim: usize, volume: f64) -> Result<Self> {
        Self::ball(dim, (volume / unit_ball_volume(dim)).powf(1.0 / dim as f64))
    }

    pub fn regular_simplex(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Degenerate("simplex needs dim >= 1".into()));
        }
        let unit = VPolytope::new(unit_regular_simplex(dim))?;
        let v = unit.exact_volume().unwrap_or_else(|| {
            // det formula, valid in every dimension
            polytope::simplex_moments(unit.vertices()).0
        });
        let s = v.powf(-1.0 / dim as f64);
        Ok(ConvexBody::Simplex(
            unit.transformed(|x| x.iter().map(|c| c * s).collect())?,
        ))
    }

    pub fn polytope(vertices: Vec<Vec<f64>>) -> Result<Self> {
        Ok(ConvexBody::Polytope(VPolytope::new(vertices)?))
    }

    pub fn affine(self, matrix: DMatrix<f64>, shift: Vec<f64>) -> Result<Self> {
        Ok(ConvexBody::Affine(AffineImage::new(self, matrix, shift)?))
    }

    pub fn scaled(self, factor: f64) -> Result<Self> {
        let n = self.dim();
        self.affine(DMatrix::identity(n, n) * factor, vec![0.0; n])
    }

    pub fn translated(self, shift: Vec<f64>) -> Result<Self> {
        let n = self.dim();
        self.affine(DMatrix::identity(n, n), shift)
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexBody::Cube { dim, .. } | ConvexBody::Ball { dim, .. } => *dim,
            ConvexBody::Simplex(p) | ConvexBody::Polytope(p) => p.dim(),
            ConvexBody::Affine(a) => a.base.dim(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            ConvexBody::Cube { dim, .. } => format!("cube{dim}"),
            ConvexBody::Ball { dim, .. } => format!("ball{dim}"),
            ConvexBody::Simplex(p) => format!("simplex{}", p.dim()),
            ConvexBody::Polytope(p) => format!("vpolytope{}[{}]", p.dim(), p.vertices().len()),
            ConvexBody::Affine(a) => format!("affine({})", a.base.name()),
        }
    }

    /// The polytope description, when the body is one (through any affine map).
    pub fn as_polytope(&self) -> Option<VPolytope> {
        match self {
            ConvexBody::Simplex(p) | ConvexBody::Polytope(p) => Some(p.clone()),
            ConvexBody::Cube { dim, side } => {
                let h = side / 2.0;
                let verts = (0..1usize << dim)
                    .map(|mask| {
                        (0..*dim)
                            .map(|i| if mask >> i & 1 == 1 { h } else { -h })
                            .collect()
                    })
                    .collect();
                VPolytope::new(verts).ok()
            }
            ConvexBody::Ball { .. } => None,
            ConvexBody::Affine(a) => a.base.as_polytope()?.transformed(|x| a.apply(x)).ok(),
        }
    }

    /// Simplex vertices, if the body is an n-simplex.
    pub fn simplex_vertices(&self) -> Option<Vec<Vec<f64>>> {
        match self {
            ConvexBody::Simplex(p) => Some(p.vertices().to_vec()),
            ConvexBody::Polytope(p) if p.is_simplex() => Some(p.vertices().to_vec()),
            ConvexBody::Affine(a) => a
                .base
                .simplex_vertices()
                .map(|vs| vs.iter().map(|v| a.apply(v)).collect()),
            _ => None,
        }
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        check_dim(self.dim(), x.len())?;
        Ok(match self {
            ConvexBody::Cube { side, .. } => x.iter().all(|v| v.abs() <= side / 2.0),
            ConvexBody::Ball { radius, .. } => dot(x, x) <= radius * radius,
            ConvexBody::Simplex(p) | ConvexBody::Polytope(p) => p.contains(x)?,
            ConvexBody::Affine(a) => a.base.contains(&a.pull_back(x))?,
        })
    }

    /// `{t : y + t d in K}`, if nonempty.
    pub fn chord(&self, y: &[f64], d: &[f64]) -> Option<(f64, f64)> {
        match self {
            ConvexBody::Cube { side, .. } => {
                let h = side / 2.0;
                let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                for (yi, di) in y.iter().zip(d) {
                    if *di == 0.0 {
                        if yi.abs() > h {
                            return None;
                        }
                    } else {
                        let a = (-h - yi) / di;
                        let b = (h - yi) / di;
                        lo = lo.max(a.min(b));
                        hi = hi.min(a.max(b));
                    }
                }
                (lo <= hi).then_some((lo, hi))
            }
            ConvexBody::Ball { radius, .. } => {
                let a = dot(d, d);
                let b = dot(y, d);
                let c = dot(y, y) - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 || a == 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                Some(((-b - s) / a, (-b + s) / a))
            }
            ConvexBody::Simplex(p) | ConvexBody::Polytope(p) => p.chord(y, d),
            ConvexBody::Affine(a) => a.base.chord(&a.pull_back(y), &a.pull_back_linear(d)),
        }
    }

    /// `rho_K(u) = max{t >= 0 : t u in K}` for `u != 0`; needs the origin in the interior.
    pub fn radial(&self, u: &[f64]) -> Result<f64> {
        check_dim(self.dim(), u.len())?;
        if norm(u) == 0.0 {
            return Err(Error::Domain(
                "radial function needs a nonzero direction".into(),
            ));
        }
        let origin = vec![0.0; self.dim()];
        match self.chord(&origin, u) {
            Some((lo, hi)) if lo < 0.0 && hi > 0.0 => Ok(hi),
            _ => Err(Error::Domain("origin is not an interior point".into())),
        }
    }

    /// `||x||_K = inf{lambda > 0 : x in lambda K}`.
    pub fn minkowski_functional(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        if x.iter().all(|v| *v == 0.0) {
            // still require an interior origin
            let mut e = vec![0.0; self.dim()];
            e[0] = 1.0;
            self.radial(&e)?;
            return Ok(0.0);
        }
        Ok(1.0 / self.radial(x)?)
    }

    pub fn volume(&self) -> Result<Estimate> {
        self.volume_with(DEFAULT_MC_SAMPLES, DEFAULT_MC_SEED)
    }

    /// Exact when a closed form or (n <= 3) triangulation exists, otherwise
    /// Monte Carlo by rejection from the bounding box.
    pub fn volume_with(&self, samples: usize, seed: u64) -> Result<Estimate> {
        Ok(match self {
            ConvexBody::Cube { dim, side } => Estimate::exact(side.powi(*dim as i32)),
            ConvexBody::Ball { dim, radius } => {
                Estimate::exact(unit_ball_volume(*dim) * radius.powi(*dim as i32))
            }
            ConvexBody::Simplex(p) => Estimate::exact(polytope::simplex_moments(p.vertices()).0),
            ConvexBody::Polytope(p) => match p.exact_volume() {
                Some(v) => Estimate::exact(v),
                None if p.is_simplex() => {
                    Estimate::exact(polytope::simplex_moments(p.vertices()).0)
                }
                None => {
                    let (lo, hi) = p.bounding_box();
                    let box_vol: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
                    let hits: Vec<bool> = par_sample(seed, samples, |rng| {
                        let x: Vec<f64> = lo
                            .iter()
                            .zip(&hi)
                            .map(|(a, b)| rng.random_range(*a..=*b))
                            .collect();
                        p.contains(&x).unwrap_or(false)
                    });
                    let frac = hits.iter().filter(|h| **h).count() as f64 / samples as f64;
                    Estimate::new(
                        box_vol * frac,
                        box_vol * (frac * (1.0 - frac) / samples as f64).sqrt(),
                    )
                }
            },
            ConvexBody::Affine(a) => {
                let b = a.base.volume_with(samples, seed)?;
                Estimate::new(b.value * a.det.abs(), b.error * a.det.abs())
            }
        })
    }

    /// `K - K`.
    pub fn difference_body(&self) -> Result<ConvexBody> {
        match self {
            ConvexBody::Cube { dim, side } => ConvexBody::cube(*dim, 2.0 * side),
            ConvexBody::Ball { dim, radius } => ConvexBody::ball(*dim, 2.0 * radius),
            ConvexBody::Simplex(p) | ConvexBody::Polytope(p) => {
                Ok(ConvexBody::Polytope(p.difference_body()?))
            }
            ConvexBody::Affine(a) => {
                let n = self.dim();
                a.base
                    .difference_body()?
                    .affine(a.matrix.clone(), vec![0.0; n])
            }
        }
    }

    /// One uniform point.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            ConvexBody::Cube { dim, side } => (0..*dim)
                .map(|_| (rng.random::<f64>() - 0.5) * side)
                .collect(),
            ConvexBody::Ball { dim, radius } => {
                let g = loop {
                    let g = gaussian_vector(rng, *dim);
                    if norm(&g) > 1e-12 {
                        break g;
                    }
                };
                let r = radius * rng.random::<f64>().powf(1.0 / *dim as f64) / norm(&g);
                g.into_iter().map(|v| v * r).collect()
            }
            ConvexBody::Simplex(p) => p.sample_simplex(rng),
            ConvexBody::Polytope(p) if p.is_simplex() => p.sample_simplex(rng),
            ConvexBody::Polytope(p) => p.sample_rejection(rng).0,
            ConvexBody::Affine(a) => a.apply(&a.base.sample(rng)),
        }
    }

    /// `count` uniform points, reproducible for any thread count.
    pub fn sample_many(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        par_sample(seed, count, |rng: &mut ChaCha8Rng| self.sample(rng))
    }

    /// `max ||x||_2` over the body (an upper bound for polytope-free variants).
    pub fn circumradius(&self) -> f64 {
        match self {
            ConvexBody::Cube { dim, side } => side / 2.0 * (*dim as f64).sqrt(),
            ConvexBody::Ball { radius, .. } => *radius,
            ConvexBody::Simplex(p) | ConvexBody::Polytope(p) => {
                p.vertices().iter().map(|v| norm(v)).fold(0.0, f64::max)
            }
            ConvexBody::Affine(a) => {
                if let Some(p) = self.as_polytope() {
                    return p.vertices().iter().map(|v| norm(v)).fold(0.0, f64::max);
                }
                let op = a.matrix.clone().singular_values().max();
                op * a.base.circumradius() + norm(&a.shift)
            }
        }
    }

    /// Exact `(volume, int x, int x x^T)` when available.
    pub fn exact_moments(&self) -> Option<(f64, Vec<f64>, DMatrix<f64>)> {
        match self {
            ConvexBody::Cube { dim, side } => {
                let v = side.powi(*dim as i32);
                Some((
                    v,
                    vec![0.0; *dim],
                    DMatrix::identity(*dim, *dim) * (v * side * side / 12.0),
                ))
            }
            ConvexBody::Ball { dim, radius } => {
                let v = unit_ball_volume(*dim) * radius.powi(*dim as i32);
                let m = v * radius * radius / (*dim as f64 + 2.0);
                Some((v, vec![0.0; *dim], DMatrix::identity(*dim, *dim) * m))
            }
            ConvexBody::Simplex(p) => Some(to_matrix(polytope::simplex_moments(p.vertices()))),
            ConvexBody::Polytope(p) if p.is_simplex() => {
                Some(to_matrix(polytope::simplex_moments(p.vertices())))
            }
            ConvexBody::Polytope(p) => p.exact_moments().map(|(v, f, s)| {
                let n = f.len();
                (v, f, DMatrix::from_fn(n, n, |i, j| s[i][j]))
            }),
            ConvexBody::Affine(a) => {
                let (v, f, s) = a.base.exact_moments()?;
                let d = a.det.abs();
                let fv = DVector::from_column_slice(&f);
                let shift = DVector::from_column_slice(&a.shift);
                // int_{a+TK} y = |det| (T f + a v)
                let first = (&a.matrix * &fv + &shift * v) * d;
                let tf = &a.matrix * &fv;
                let second = (&a.matrix * &s * a.matrix.transpose()
                    + &tf * shift.transpose()
                    + &shift * tf.transpose()
                    + &shift * shift.transpose() * v)
                    * d;
                Some((v * d, first.iter().copied().collect(), second))
            }
        }
    }
}

fn to_matrix((v, f, s): (f64, Vec<f64>, Vec<Vec<f64>>)) -> (f64, Vec<f64>, DMatrix<f64>) {
    let n = f.len();
    (v, f, DMatrix::from_fn(n, n, |i, j| s[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit_area_regular_triangle() -> ConvexBody {
        ConvexBody::regular_simplex(2).unwrap()
    }

    #[test]
    fn cube_membership() {
        let c = ConvexBody::cube(2, 1.0).unwrap();
        assert!(c.contains(&[0.0, 0.0]).unwrap());
        assert!(!c.contains(&[0.6, 0.0]).unwrap());
        assert!(c.contains(&[0.0]).is_err());
    }

    #[test]
    fn triangle_barycenter_inside() {
        let t = ConvexBody::polytope(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(t.contains(&[1.0 / 3.0, 1.0 / 3.0]).unwrap());
        let r = unit_area_regular_triangle();
        assert!(r.contains(&[0.0, 0.0]).unwrap());
    }

    #[test]
    fn minkowski_examples() {
        let c = ConvexBody::cube(2, 1.0).unwrap();
        assert!((c.minkowski_functional(&[1.0, 0.0]).unwrap() - 2.0).abs() < 1e-15);
        let b = ConvexBody::ball(3, 1.0).unwrap();
        let u = [0.6, 0.0, 0.8];
        assert!((b.minkowski_functional(&u).unwrap() - 1.0).abs() < 1e-15);
        let h = unit_area_regular_triangle().difference_body().unwrap();
        let ConvexBody::Polytope(p) = &h else {
            panic!()
        };
        for v in p.vertices() {
            assert!((h.minkowski_functional(v).unwrap() - 1.0).abs() < 1e-10);
        }
        let off = ConvexBody::cube(2, 1.0)
            .unwrap()
            .translated(vec![1.0, 0.0])
            .unwrap();
        assert!(off.minkowski_functional(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn radial_examples() {
        let c = ConvexBody::cube(2, 1.0).unwrap();
        assert!((c.radial(&[1.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        let b = ConvexBody::ball(2, 1.0).unwrap();
        let u = [0.6, 0.8];
        assert!((b.radial(&u).unwrap() - 1.0).abs() < 1e-15);
        let t = unit_area_regular_triangle();
        let s = t.clone().scaled(2.5).unwrap();
        let u = [0.3f64.cos(), 0.3f64.sin()];
        assert!((s.radial(&u).unwrap() - 2.5 * t.radial(&u).unwrap()).abs() < 1e-12);
        assert!((t.radial(&u).unwrap() * t.minkowski_functional(&u).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn volume_examples() {
        assert_eq!(
            ConvexBody::cube(2, 1.0).unwrap().volume().unwrap().value,
            1.0
        );
        assert!((ConvexBody::ball(2, 1.0).unwrap().volume().unwrap().value - PI).abs() < 1e-14);
        let t = unit_area_regular_triangle();
        assert!((t.volume().unwrap().value - 1.0).abs() < 1e-12);
        let h = t.difference_body().unwrap();
        assert!((h.volume().unwrap().value - 6.0).abs() < 1e-10);
        for n in 2..=5 {
            let s = ConvexBody::regular_simplex(n).unwrap();
            assert!((s.volume().unwrap().value - 1.0).abs() < 1e-10, "n = {n}");
            let (v, f, _) = s.exact_moments().unwrap();
            assert!((v - 1.0).abs() < 1e-10);
            assert!(f.iter().all(|x| x.abs() < 1e-10));
        }
    }

    #[test]
    fn regular_simplex_geometry() {
        let s = ConvexBody::regular_simplex(3).unwrap();
        let ConvexBody::Simplex(p) = &s else { panic!() };
        let v = p.vertices();
        assert!(v[0][1].abs() < 1e-15 && v[0][2].abs() < 1e-15 && v[0][0] > 0.0);
        let d01 = norm(&[v[0][0] - v[1][0], v[0][1] - v[1][1], v[0][2] - v[1][2]]);
        for i in 0..4 {
            for j in (i + 1)..4 {
                let d: Vec<f64> = (0..3).map(|k| v[i][k] - v[j][k]).collect();
                assert!((norm(&d) - d01).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn difference_body_of_cube_is_doubled() {
        let d = ConvexBody::cube(2, 1.0).unwrap().difference_body().unwrap();
        assert!(matches!(d, ConvexBody::Cube { side, .. } if side == 2.0));
        for (body, n) in [
            (ConvexBody::cube(3, 0.7).unwrap(), 3),
            (ConvexBody::ball(2, 1.3).unwrap(), 2),
        ] {
            let ratio = body.difference_body().unwrap().volume().unwrap().value
                / body.volume().unwrap().value;
            assert!((ratio - 2f64.powi(n)).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_moments_match_polytope_moments() {
        let base = ConvexBody::cube(2, 1.0).unwrap();
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, -0.1, 0.5]);
        let a = base.clone().affine(m, vec![0.4, -0.2]).unwrap();
        let (v1, f1, s1) = a.exact_moments().unwrap();
        let p = ConvexBody::Polytope(a.as_polytope().unwrap());
        let (v2, f2, s2) = p.exact_moments().unwrap();
        assert!((v1 - v2).abs() < 1e-12);
        for i in 0..2 {
            assert!((f1[i] - f2[i]).abs() < 1e-12);
            for j in 0..2 {
                assert!((s1[(i, j)] - s2[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ball_sampling_stays_inside() {
        let b = ConvexBody::ball(3, 2.0).unwrap();
        for x in b.sample_many(2000, 1) {
            assert!(norm(&x) <= 2.0);
        }
    }

    #[test]
    fn mc_volume_for_high_dim_polytope() {
        let mut verts = Vec::new();
        for i in 0..4 {
            for s in [-1.0, 1.0] {
                let mut v = vec![0.0; 4];
                v[i] = s;
                verts.push(v);
            }
        }
        // cross-polytope in R^4 has volume 2^4 / 4!
        let p = ConvexBody::polytope(verts).unwrap();
        let v = p.volume_with(200_000, 3).unwrap();
        assert!((v.value - 16.0 / 24.0).abs() < 4.0 * v.error, "{v:?}");
    }
}
