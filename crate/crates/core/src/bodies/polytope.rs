//! Vertex-described polytopes.
//!
//! Facets are found by brute force over all `n`-subsets of the points, which
//! is fine for the small vertex counts used here (a few dozen points in
//! dimension <= 4). Above the enumeration budget the polytope keeps only its
//! vertices and answers membership queries with the LP in [`super::lp`].

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use super::lp;
use crate::error::{Error, Result};
use crate::numerics::dot;

/// Upper bound on `C(points, dim)` for facet enumeration.
const FACET_BUDGET: usize = 3_000_000;

/// Half-space `normal . x <= offset` with a unit normal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Facet {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VPolytope {
    dim: usize,
    vertices: Vec<Vec<f64>>,
    #[serde(skip)]
    facets: Option<Vec<Facet>>,
    #[serde(skip)]
    scale: f64,
}

fn det(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j]).determinant()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn affine_rank(points: &[Vec<f64>], tol: f64) -> usize {
    let n = points[0].len();
    let rows: Vec<f64> = points[1..]
        .iter()
        .flat_map(|p| sub(p, &points[0]))
        .collect();
    if rows.is_empty() {
        return 0;
    }
    let m = DMatrix::from_row_slice(points.len() - 1, n, &rows);
    m.singular_values().iter().filter(|s| **s > tol).count()
}

/// Unit normal of the hyperplane through `n` points in R^n (generalised cross product).
fn hyperplane_normal(pts: &[&Vec<f64>]) -> Option<Vec<f64>> {
    let n = pts[0].len();
    let diffs: Vec<Vec<f64>> = pts[1..].iter().map(|p| sub(p, pts[0])).collect();
    if n == 1 {
        return Some(vec![1.0]);
    }
    let mut normal = vec![0.0; n];
    for (j, slot) in normal.iter_mut().enumerate() {
        let minor: Vec<Vec<f64>> = diffs
            .iter()
            .map(|d| {
                d.iter()
                    .enumerate()
                    .filter(|(k, _)| *k != j)
                    .map(|(_, v)| *v)
                    .collect()
            })
            .collect();
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        *slot = sign * det(&minor);
    }
    let len = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = diffs
        .iter()
        .map(|d| d.iter().map(|v| v * v).sum::<f64>().sqrt())
        .product::<f64>();
    if len <= 1e-12 * scale.max(1e-300) {
        return None;
    }
    Some(normal.into_iter().map(|v| v / len).collect())
}

impl VPolytope {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::Degenerate("empty vertex list".into()));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(Error::Degenerate("zero-dimensional points".into()));
        }
        for p in &points {
            crate::error::check_dim(dim, p.len())?;
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain("non-finite vertex coordinate".into()));
            }
        }
        let scale = points
            .iter()
            .flat_map(|p| p.iter().map(|v| v.abs()))
            .fold(0.0, f64::max)
            .max(1e-300);
        if points.len() <= dim || affine_rank(&points, 1e-10 * scale) < dim {
            return Err(Error::Degenerate(format!(
                "{} points do not affinely span R^{dim}",
                points.len()
            )));
        }
        let subsets = binomial_usize(points.len(), dim);
        let mut poly = VPolytope {
            dim,
            vertices: points,
            facets: None,
            scale,
        };
        if subsets <= FACET_BUDGET {
            poly.facets = Some(poly.enumerate_facets());
            poly.keep_extreme_points();
        } else {
            poly.keep_extreme_points_lp();
        }
        Ok(poly)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn facets(&self) -> Option<&[Facet]> {
        self.facets.as_deref()
    }

    fn eps(&self) -> f64 {
        1e-10 * self.scale
    }

    fn enumerate_facets(&self) -> Vec<Facet> {
        let eps = self.eps();
        let mut facets: Vec<Facet> = Vec::new();
        for combo in self.vertices.iter().combinations(self.dim) {
            let Some(normal) = hyperplane_normal(&combo) else {
                continue;
            };
            let offset = dot(&normal, combo[0]);
            let (mut above, mut below) = (false, false);
            for v in &self.vertices {
                let s = dot(&normal, v) - offset;
                above |= s > eps;
                below |= s < -eps;
                if above && below {
                    break;
                }
            }
            let facet = match (above, below) {
                (false, true) => Facet { normal, offset },
                (true, false) => Facet {
                    normal: normal.iter().map(|v| -v).collect(),
                    offset: -offset,
                },
                _ => continue,
            };
            let dup = facets.iter().any(|f| {
                (f.offset - facet.offset).abs() <= eps
                    && f.normal
                        .iter()
                        .zip(&facet.normal)
                        .all(|(a, b)| (a - b).abs() <= 1e-9)
            });
            if !dup {
                facets.push(facet);
            }
        }
        facets
    }

    fn keep_extreme_points(&mut self) {
        let eps = self.eps();
        let facets = self.facets.as_ref().expect("facets computed");
        let dim = self.dim;
        let mut kept: Vec<Vec<f64>> = Vec::new();
        for v in &self.vertices {
            let tight: Vec<f64> = facets
                .iter()
                .filter(|f| (dot(&f.normal, v) - f.offset).abs() <= eps)
                .flat_map(|f| f.normal.iter().copied())
                .collect();
            if tight.len() < dim * dim {
                continue;
            }
            let m = DMatrix::from_row_slice(tight.len() / dim, dim, &tight);
            let rank = m.singular_values().iter().filter(|s| **s > 1e-9).count();
            if rank == dim
                && !kept
                    .iter()
                    .any(|k| k.iter().zip(v).all(|(a, b)| (a - b).abs() <= eps))
            {
                kept.push(v.clone());
            }
        }
        self.vertices = kept;
    }

    fn keep_extreme_points_lp(&mut self) {
        let eps = self.eps();
        let mut kept: Vec<Vec<f64>> = Vec::new();
        for (i, v) in self.vertices.iter().enumerate() {
            if kept
                .iter()
                .any(|k| k.iter().zip(v).all(|(a, b)| (a - b).abs() <= eps))
            {
                continue;
            }
            let others: Vec<Vec<f64>> = self
                .vertices
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, p)| p.clone())
                .collect();
            if !lp::in_convex_hull(&others, v) {
                kept.push(v.clone());
            }
        }
        self.vertices = kept;
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        crate::error::check_dim(self.dim, x.len())?;
        Ok(match &self.facets {
            Some(fs) => {
                let eps = self.eps();
                fs.iter().all(|f| dot(&f.normal, x) <= f.offset + eps)
            }
            None => lp::in_convex_hull(&self.vertices, x),
        })
    }

    /// Membership through the LP over convex coefficients, independent of the facet list.
    pub fn contains_lp(&self, x: &[f64]) -> Result<bool> {
        crate::error::check_dim(self.dim, x.len())?;
        Ok(lp::in_convex_hull(&self.vertices, x))
    }

    /// `{t : y + t d in K}` as a closed interval, if nonempty.
    pub fn chord(&self, y: &[f64], d: &[f64]) -> Option<(f64, f64)> {
        match &self.facets {
            Some(fs) => {
                let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                for f in fs {
                    let a = dot(&f.normal, d);
                    let b = f.offset - dot(&f.normal, y);
                    if a.abs() < 1e-300 {
                        if b < -self.eps() {
                            return None;
                        }
                    } else if a > 0.0 {
                        hi = hi.min(b / a);
                    } else {
                        lo = lo.max(b / a);
                    }
                }
                (lo <= hi).then_some((lo, hi))
            }
            None => self.chord_bisection(y, d),
        }
    }

    fn chord_bisection(&self, y: &[f64], d: &[f64]) -> Option<(f64, f64)> {
        let at = |t: f64| -> Vec<f64> { y.iter().zip(d).map(|(a, b)| a + t * b).collect() };
        if !lp::in_convex_hull(&self.vertices, y) {
            return None;
        }
        let dn = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let reach = 4.0 * self.scale * (self.dim as f64).sqrt() / dn.max(1e-300);
        let search = |sign: f64| {
            let (mut inside, mut outside) = (0.0, reach);
            while outside - inside > 1e-12 * reach {
                let mid = 0.5 * (inside + outside);
                if lp::in_convex_hull(&self.vertices, &at(sign * mid)) {
                    inside = mid;
                } else {
                    outside = mid;
                }
            }
            sign * inside
        };
        Some((search(-1.0), search(1.0)))
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for v in &self.vertices {
            for i in 0..self.dim {
                lo[i] = lo[i].min(v[i]);
                hi[i] = hi[i].max(v[i]);
            }
        }
        (lo, hi)
    }

    pub fn is_simplex(&self) -> bool {
        self.vertices.len() == self.dim + 1
    }

    /// Convex hull of all pairwise vertex differences.
    pub fn difference_body(&self) -> Result<VPolytope> {
        let mut pts = Vec::with_capacity(self.vertices.len() * self.vertices.len());
        for a in &self.vertices {
            for b in &self.vertices {
                if !std::ptr::eq(a, b) {
                    pts.push(sub(a, b));
                }
            }
        }
        VPolytope::new(pts)
    }

    /// Decomposition into `n`-simplices (fan from the vertex centroid over the
    /// facets), available for `n <= 3`.
    pub fn triangulate(&self) -> Option<Vec<Vec<Vec<f64>>>> {
        let facets = self.facets.as_ref()?;
        let n = self.dim;
        if n > 3 {
            return None;
        }
        let eps = self.eps();
        let m = self.vertices.len() as f64;
        let c: Vec<f64> = (0..n)
            .map(|i| self.vertices.iter().map(|v| v[i]).sum::<f64>() / m)
            .collect();
        let mut simplices = Vec::new();
        for f in facets {
            let on: Vec<&Vec<f64>> = self
                .vertices
                .iter()
                .filter(|v| (dot(&f.normal, v) - f.offset).abs() <= eps)
                .collect();
            match n {
                1 => simplices.push(vec![c.clone(), on[0].clone()]),
                2 => {
                    // extreme pair along the edge
                    let t = [-f.normal[1], f.normal[0]];
                    let key = |v: &&Vec<f64>| dot(&t, v);
                    let a = on.iter().min_by(|x, y| key(x).total_cmp(&key(y)))?;
                    let b = on.iter().max_by(|x, y| key(x).total_cmp(&key(y)))?;
                    simplices.push(vec![c.clone(), (*a).clone(), (*b).clone()]);
                }
                3 => {
                    let k = on.len() as f64;
                    let fc: Vec<f64> = (0..3)
                        .map(|i| on.iter().map(|v| v[i]).sum::<f64>() / k)
                        .collect();
                    let e1 = normalize(&sub(on[0], &fc));
                    let e2 = cross(&f.normal, &e1);
                    let mut ring: Vec<&Vec<f64>> = on.clone();
                    ring.sort_by(|a, b| {
                        let da = sub(a, &fc);
                        let db = sub(b, &fc);
                        dot(&da, &e2)
                            .atan2(dot(&da, &e1))
                            .total_cmp(&dot(&db, &e2).atan2(dot(&db, &e1)))
                    });
                    for w in 1..ring.len().saturating_sub(1) {
                        simplices.push(vec![
                            c.clone(),
                            ring[0].clone(),
                            ring[w].clone(),
                            ring[w + 1].clone(),
                        ]);
                    }
                }
                _ => return None,
            }
        }
        Some(simplices)
    }

    /// Exact `(volume, first moment, second moment matrix about the origin)` for `n <= 3`.
    pub fn exact_moments(&self) -> Option<(f64, Vec<f64>, Vec<Vec<f64>>)> {
        let n = self.dim;
        let simplices = self.triangulate()?;
        let mut vol = 0.0;
        let mut first = vec![0.0; n];
        let mut second = vec![vec![0.0; n]; n];
        for s in &simplices {
            let (v, f1, f2) = simplex_moments(s);
            vol += v;
            for i in 0..n {
                first[i] += f1[i];
                for j in 0..n {
                    second[i][j] += f2[i][j];
                }
            }
        }
        Some((vol, first, second))
    }

    pub fn exact_volume(&self) -> Option<f64> {
        self.exact_moments().map(|m| m.0)
    }

    /// Uniform point by rejection from the bounding box; also returns the
    /// number of proposals used.
    pub fn sample_rejection<R: Rng>(&self, rng: &mut R) -> (Vec<f64>, usize) {
        let (lo, hi) = self.bounding_box();
        let mut tries = 0;
        loop {
            tries += 1;
            let x: Vec<f64> = lo
                .iter()
                .zip(&hi)
                .map(|(a, b)| rng.random_range(*a..=*b))
                .collect();
            if self.contains(&x).unwrap_or(false) {
                return (x, tries);
            }
        }
    }

    /// Uniform point via Dirichlet(1,...,1) weights; only for simplices.
    pub fn sample_simplex<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let w: Vec<f64> = (0..self.vertices.len())
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        let total: f64 = w.iter().sum();
        (0..self.dim)
            .map(|i| {
                self.vertices
                    .iter()
                    .zip(&w)
                    .map(|(v, wi)| v[i] * wi)
                    .sum::<f64>()
                    / total
            })
            .collect()
    }

    pub fn transformed(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<VPolytope> {
        VPolytope::new(self.vertices.iter().map(|v| f(v)).collect())
    }
}

/// `(volume, int x, int x x^T)` of a simplex given by its `n+1` vertices.
pub fn simplex_moments(s: &[Vec<f64>]) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
    let n = s[0].len();
    let edges: Vec<Vec<f64>> = s[1..].iter().map(|v| sub(v, &s[0])).collect();
    let vol = det(&edges).abs() / factorial(n);
    let sum: Vec<f64> = (0..n).map(|i| s.iter().map(|v| v[i]).sum()).collect();
    let first: Vec<f64> = sum.iter().map(|v| v * vol / (n + 1) as f64).collect();
    let k = vol / ((n + 1) * (n + 2)) as f64;
    let mut second = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let outer: f64 = s.iter().map(|v| v[i] * v[j]).sum();
            second[i][j] = k * (outer + sum[i] * sum[j]);
        }
    }
    (vol, first, second)
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let l = dot(v, v).sqrt();
    v.iter().map(|x| x / l).collect()
}

fn cross(a: &[f64], b: &[f64]) -> Vec<f64> {
    vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn binomial_usize(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut acc: u128 = 1;
    for i in 0..k.min(n - k) {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_triangle() -> VPolytope {
        VPolytope::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
    }

    #[test]
    fn triangle_facets_and_volume() {
        let t = unit_triangle();
        assert_eq!(t.facets().unwrap().len(), 3);
        assert!((t.exact_volume().unwrap() - 0.5).abs() < 1e-15);
        assert!(t.is_simplex());
    }

    #[test]
    fn difference_body_of_triangle_is_hexagon() {
        let h = unit_triangle().difference_body().unwrap();
        let mut got: Vec<(i64, i64)> = h
            .vertices()
            .iter()
            .map(|v| (v[0].round() as i64, v[1].round() as i64))
            .collect();
        got.sort();
        let mut want = vec![(1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)];
        want.sort();
        assert_eq!(got, want);
        assert!((h.exact_volume().unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(VPolytope::new(vec![]).is_err());
        assert!(VPolytope::new(vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]]).is_err());
        assert!(VPolytope::new(vec![vec![0.0, 0.0], vec![1.0]]).is_err());
    }

    #[test]
    fn interior_points_dropped() {
        let p = VPolytope::new(vec![
            vec![-1.0, -1.0],
            vec![1.0, -1.0],
            vec![1.0, 1.0],
            vec![-1.0, 1.0],
            vec![0.1, 0.2],
            vec![1.0, 0.0],
        ])
        .unwrap();
        assert_eq!(p.vertices().len(), 4);
        assert_eq!(p.facets().unwrap().len(), 4);
    }

    #[test]
    fn cube3_volume_and_moments() {
        let mut pts = Vec::new();
        for a in [-0.5, 0.5] {
            for b in [-0.5, 0.5] {
                for c in [-0.5, 0.5] {
                    pts.push(vec![a, b, c]);
                }
            }
        }
        let p = VPolytope::new(pts).unwrap();
        assert_eq!(p.facets().unwrap().len(), 6);
        let (v, f1, f2) = p.exact_moments().unwrap();
        assert!((v - 1.0).abs() < 1e-14);
        assert!(f1.iter().all(|x| x.abs() < 1e-14));
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 / 12.0 } else { 0.0 };
                assert!((f2[i][j] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn chord_through_square() {
        let p = VPolytope::new(vec![
            vec![-1.0, -1.0],
            vec![1.0, -1.0],
            vec![1.0, 1.0],
            vec![-1.0, 1.0],
        ])
        .unwrap();
        let (lo, hi) = p.chord(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((lo + 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        assert!(p.chord(&[0.0, 3.0], &[1.0, 0.0]).is_none());
    }

    #[test]
    fn lp_and_facets_agree() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Vec<f64>> = (0..9)
            .map(|_| {
                vec![
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect();
        let p = VPolytope::new(pts).unwrap();
        for _ in 0..300 {
            let x = vec![
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            assert_eq!(p.contains(&x).unwrap(), p.contains_lp(&x).unwrap(), "{x:?}");
        }
    }
}
