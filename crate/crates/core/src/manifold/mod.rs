//! Riemannian kernel: exponential and logarithm maps, distances, geodesics,
//! inner products and Fréchet means on manifolds with closed-form geometry.
//!
//! Points and tangent vectors are plain coordinate arrays ([`Point`],
//! [`Tangent`]); the [`Manifold`] descriptor interprets them. Spheres are
//! embedded as unit vectors with tangent vectors orthogonal to the base point,
//! SPD matrices are stored as full row-major matrices, and products
//! concatenate their factors' coordinates.

mod spd;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for on-manifold and tangency checks.
pub const POINT_TOL: f64 = 1e-9;

/// Largest geodesic distance (and exp step length) accepted on a sphere.
pub const SPHERE_GUARD: f64 = PI - 1e-6;

const FRECHET_GRAD_TOL: f64 = 1e-9;
const FRECHET_MAX_ITER: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ManifoldRepr", into = "ManifoldRepr")]
pub enum Manifold {
    Euclidean(usize),
    Sphere(usize),
    Spd(usize),
    Product(Vec<Manifold>),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum ManifoldRepr {
    Euclidean { dim: usize },
    Sphere { dim: usize },
    Spd { size: usize },
    Product { factors: Vec<Manifold> },
}

impl TryFrom<ManifoldRepr> for Manifold {
    type Error = Error;

    fn try_from(r: ManifoldRepr) -> Result<Self> {
        match r {
            ManifoldRepr::Euclidean { dim } => Manifold::euclidean(dim),
            ManifoldRepr::Sphere { dim } => Manifold::sphere(dim),
            ManifoldRepr::Spd { size } => Manifold::spd(size),
            ManifoldRepr::Product { factors } => Manifold::product(factors),
        }
    }
}

impl From<Manifold> for ManifoldRepr {
    fn from(m: Manifold) -> Self {
        match m {
            Manifold::Euclidean(dim) => ManifoldRepr::Euclidean { dim },
            Manifold::Sphere(dim) => ManifoldRepr::Sphere { dim },
            Manifold::Spd(size) => ManifoldRepr::Spd { size },
            Manifold::Product(factors) => ManifoldRepr::Product { factors },
        }
    }
}

/// A point given by its ambient coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(pub Vec<f64>);

/// A tangent vector in ambient coordinates. The base point is implicit: every
/// operation taking a tangent vector also takes the point it is attached to.
#[derive(Clone, Debug, PartialEq)]
pub struct Tangent(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

impl Tangent {
    pub fn zeros(n: usize) -> Self {
        Tangent(vec![0.0; n])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn scaled(&self, a: f64) -> Tangent {
        Tangent(self.0.iter().map(|x| a * x).collect())
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &Tangent) {
        for (x, y) in self.0.iter_mut().zip(&other.0) {
            *x += a * y;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }
}

impl From<Vec<f64>> for Tangent {
    fn from(v: Vec<f64>) -> Self {
        Tangent(v)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl Manifold {
    pub fn euclidean(dim: usize) -> Result<Self> {
        if dim < 1 {
            return Err(Error::InvalidManifold("euclidean dimension must be >= 1".into()));
        }
        Ok(Manifold::Euclidean(dim))
    }

    pub fn sphere(dim: usize) -> Result<Self> {
        if dim < 1 {
            return Err(Error::InvalidManifold("sphere dimension must be >= 1".into()));
        }
        Ok(Manifold::Sphere(dim))
    }

    pub fn spd(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidManifold("SPD matrix size must be >= 2".into()));
        }
        Ok(Manifold::Spd(size))
    }

    pub fn product(factors: Vec<Manifold>) -> Result<Self> {
        if factors.len() < 2 {
            return Err(Error::InvalidManifold("product needs at least two factors".into()));
        }
        Ok(Manifold::Product(factors))
    }

    /// Intrinsic dimension.
    pub fn dim(&self) -> usize {
        match self {
            Manifold::Euclidean(d) | Manifold::Sphere(d) => *d,
            Manifold::Spd(m) => m * (m + 1) / 2,
            Manifold::Product(fs) => fs.iter().map(Manifold::dim).sum(),
        }
    }

    /// Length of the coordinate arrays.
    pub fn ambient_dim(&self) -> usize {
        match self {
            Manifold::Euclidean(d) => *d,
            Manifold::Sphere(d) => d + 1,
            Manifold::Spd(m) => m * m,
            Manifold::Product(fs) => fs.iter().map(Manifold::ambient_dim).sum(),
        }
    }

    /// Radius below which exp is injective, if finite.
    pub fn injectivity_guard(&self) -> Option<f64> {
        match self {
            Manifold::Euclidean(_) | Manifold::Spd(_) => None,
            Manifold::Sphere(_) => Some(SPHERE_GUARD),
            Manifold::Product(fs) => fs
                .iter()
                .filter_map(Manifold::injectivity_guard)
                .min_by(f64::total_cmp),
        }
    }

    /// `(factor, offset)` pairs for a product; a single entry otherwise.
    fn factors(&self) -> Vec<(&Manifold, usize)> {
        match self {
            Manifold::Product(fs) => {
                let mut off = 0;
                fs.iter()
                    .map(|f| {
                        let o = off;
                        off += f.ambient_dim();
                        (f, o)
                    })
                    .collect()
            }
            _ => vec![(self, 0)],
        }
    }

    fn check_len(&self, coords: &[f64]) -> Result<()> {
        let n = self.ambient_dim();
        if coords.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: coords.len() });
        }
        Ok(())
    }

    pub fn check_point(&self, p: &Point) -> Result<()> {
        self.check_len(&p.0)?;
        self.check_point_raw(&p.0)
    }

    fn check_point_raw(&self, p: &[f64]) -> Result<()> {
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidPoint("non-finite coordinate".into()));
        }
        match self {
            Manifold::Euclidean(_) => Ok(()),
            Manifold::Sphere(_) => {
                let n = norm(p);
                if (n - 1.0).abs() > POINT_TOL {
                    return Err(Error::InvalidPoint(format!("sphere point has norm {n}")));
                }
                Ok(())
            }
            Manifold::Spd(m) => {
                let a = spd::asymmetry(*m, p);
                if a > POINT_TOL {
                    return Err(Error::InvalidPoint(format!("matrix asymmetric by {a:e}")));
                }
                let l = spd::min_eigenvalue(*m, p);
                if !(l > 0.0) {
                    return Err(Error::InvalidPoint(format!("smallest eigenvalue {l} not positive")));
                }
                Ok(())
            }
            Manifold::Product(_) => {
                for (f, o) in self.factors() {
                    f.check_point_raw(&p[o..o + f.ambient_dim()])?;
                }
                Ok(())
            }
        }
    }

    pub fn check_tangent(&self, p: &Point, v: &Tangent) -> Result<()> {
        self.check_len(&p.0)?;
        self.check_len(&v.0)?;
        self.check_tangent_raw(&p.0, &v.0)
    }

    fn check_tangent_raw(&self, p: &[f64], v: &[f64]) -> Result<()> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidTangent("non-finite coordinate".into()));
        }
        match self {
            Manifold::Euclidean(_) => Ok(()),
            Manifold::Sphere(_) => {
                let d = dot(p, v);
                if d.abs() > POINT_TOL * (1.0 + norm(v)) {
                    return Err(Error::InvalidTangent(format!("<v, p> = {d:e} on sphere")));
                }
                Ok(())
            }
            Manifold::Spd(m) => {
                let a = spd::asymmetry(*m, v);
                if a > POINT_TOL * (1.0 + norm(v)) {
                    return Err(Error::InvalidTangent(format!("matrix asymmetric by {a:e}")));
                }
                Ok(())
            }
            Manifold::Product(_) => {
                for (f, o) in self.factors() {
                    let r = o..o + f.ambient_dim();
                    f.check_tangent_raw(&p[r.clone()], &v[r])?;
                }
                Ok(())
            }
        }
    }

    pub fn zero_tangent(&self) -> Tangent {
        Tangent::zeros(self.ambient_dim())
    }

    /// Riemannian exponential. Fails on a sphere when `‖v‖` reaches
    /// [`SPHERE_GUARD`].
    pub fn exp(&self, p: &Point, v: &Tangent) -> Result<Point> {
        self.check_len(&p.0)?;
        self.check_len(&v.0)?;
        if v.is_zero() {
            return Ok(p.clone());
        }
        self.exp_raw(&p.0, &v.0).map(Point)
    }

    fn exp_raw(&self, p: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        match self {
            Manifold::Euclidean(_) => Ok(p.iter().zip(v).map(|(a, b)| a + b).collect()),
            Manifold::Sphere(_) => {
                let n = norm(v);
                if n >= SPHERE_GUARD {
                    return Err(Error::Domain(format!(
                        "sphere step of length {n} exceeds the injectivity guard"
                    )));
                }
                if n == 0.0 {
                    return Ok(p.to_vec());
                }
                let (s, c) = n.sin_cos();
                let mut out: Vec<f64> =
                    p.iter().zip(v).map(|(a, b)| c * a + s / n * b).collect();
                let r = norm(&out);
                out.iter_mut().for_each(|x| *x /= r);
                Ok(out)
            }
            Manifold::Spd(m) => spd::exp(*m, p, v),
            Manifold::Product(_) => {
                let mut out = Vec::with_capacity(p.len());
                for (f, o) in self.factors() {
                    let r = o..o + f.ambient_dim();
                    out.extend(f.exp_raw(&p[r.clone()], &v[r])?);
                }
                Ok(out)
            }
        }
    }

    /// Riemannian logarithm; the inverse of [`Manifold::exp`] inside the
    /// injectivity guard.
    pub fn log(&self, p: &Point, q: &Point) -> Result<Tangent> {
        self.check_len(&p.0)?;
        self.check_len(&q.0)?;
        self.log_raw(&p.0, &q.0).map(Tangent)
    }

    fn log_raw(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        if p == q {
            return Ok(vec![0.0; p.len()]);
        }
        match self {
            Manifold::Euclidean(_) => Ok(q.iter().zip(p).map(|(a, b)| a - b).collect()),
            Manifold::Sphere(_) => {
                let c = dot(p, q);
                let w: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - c * b).collect();
                let s = norm(&w);
                let theta = s.atan2(c);
                if theta > SPHERE_GUARD {
                    return Err(Error::Domain(format!(
                        "sphere points at distance {theta} are (nearly) antipodal"
                    )));
                }
                if s == 0.0 {
                    return Ok(vec![0.0; p.len()]);
                }
                Ok(w.into_iter().map(|x| theta / s * x).collect())
            }
            Manifold::Spd(m) => spd::log(*m, p, q),
            Manifold::Product(_) => {
                let mut out = Vec::with_capacity(p.len());
                for (f, o) in self.factors() {
                    let r = o..o + f.ambient_dim();
                    out.extend(f.log_raw(&p[r.clone()], &q[r])?);
                }
                Ok(out)
            }
        }
    }

    /// Geodesic distance. Defined everywhere, including antipodal points.
    pub fn dist(&self, p: &Point, q: &Point) -> Result<f64> {
        self.check_len(&p.0)?;
        self.check_len(&q.0)?;
        self.dist2_raw(&p.0, &q.0).map(f64::sqrt)
    }

    fn dist2_raw(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        if p == q {
            return Ok(0.0);
        }
        match self {
            Manifold::Euclidean(_) => Ok(p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum()),
            Manifold::Sphere(_) => {
                let c = dot(p, q);
                let s = norm(&q.iter().zip(p).map(|(a, b)| a - c * b).collect::<Vec<_>>());
                Ok(s.atan2(c).powi(2))
            }
            Manifold::Spd(m) => spd::dist(*m, p, q).map(|d| d * d),
            Manifold::Product(_) => {
                let mut acc = 0.0;
                for (f, o) in self.factors() {
                    let r = o..o + f.ambient_dim();
                    acc += f.dist2_raw(&p[r.clone()], &q[r])?;
                }
                Ok(acc)
            }
        }
    }

    /// Squared geodesic distance.
    pub fn dist2(&self, p: &Point, q: &Point) -> Result<f64> {
        self.check_len(&p.0)?;
        self.check_len(&q.0)?;
        self.dist2_raw(&p.0, &q.0)
    }

    /// `γ(t; p, q) = exp(p, t·log(p, q))`, returning `p` and `q` exactly at
    /// `t = 0` and `t = 1`, and `p` for all `t` when `p == q`.
    pub fn geodesic(&self, t: f64, p: &Point, q: &Point) -> Result<Point> {
        if t == 0.0 {
            self.check_len(&q.0)?;
            return Ok(p.clone());
        }
        if t == 1.0 || p == q {
            self.check_len(&p.0)?;
            return Ok(q.clone());
        }
        let v = self.log(p, q)?;
        self.exp(p, &v.scaled(t))
    }

    pub fn inner(&self, p: &Point, u: &Tangent, v: &Tangent) -> Result<f64> {
        self.check_len(&p.0)?;
        self.check_len(&u.0)?;
        self.check_len(&v.0)?;
        self.inner_raw(&p.0, &u.0, &v.0)
    }

    fn inner_raw(&self, p: &[f64], u: &[f64], v: &[f64]) -> Result<f64> {
        match self {
            Manifold::Euclidean(_) | Manifold::Sphere(_) => Ok(dot(u, v)),
            Manifold::Spd(m) => spd::inner(*m, p, u, v),
            Manifold::Product(_) => {
                let mut acc = 0.0;
                for (f, o) in self.factors() {
                    let r = o..o + f.ambient_dim();
                    acc += f.inner_raw(&p[r.clone()], &u[r.clone()], &v[r])?;
                }
                Ok(acc)
            }
        }
    }

    pub fn norm(&self, p: &Point, v: &Tangent) -> Result<f64> {
        self.inner(p, v, v).map(|x| x.max(0.0).sqrt())
    }

    /// Orthogonal projection of an ambient vector onto the tangent space at
    /// `p`. Also serves as a cheap vector transport between nearby points.
    pub fn project(&self, p: &Point, v: &Tangent) -> Result<Tangent> {
        self.check_len(&p.0)?;
        self.check_len(&v.0)?;
        Ok(Tangent(self.project_raw(&p.0, &v.0)))
    }

    fn project_raw(&self, p: &[f64], v: &[f64]) -> Vec<f64> {
        match self {
            Manifold::Euclidean(_) => v.to_vec(),
            Manifold::Sphere(_) => {
                let c = dot(p, v);
                v.iter().zip(p).map(|(a, b)| a - c * b).collect()
            }
            Manifold::Spd(m) => {
                let m = *m;
                let mut out = v.to_vec();
                for i in 0..m {
                    for j in 0..m {
                        out[i * m + j] = 0.5 * (v[i * m + j] + v[j * m + i]);
                    }
                }
                out
            }
            Manifold::Product(_) => {
                let mut out = Vec::with_capacity(v.len());
                for (f, o) in self.factors() {
                    let r = o..o + f.ambient_dim();
                    out.extend(f.project_raw(&p[r.clone()], &v[r]));
                }
                out
            }
        }
    }

    /// An orthonormal basis of the tangent space at `p` (with respect to the
    /// Riemannian metric), `dim()` vectors long. Deterministic in `p`.
    pub fn tangent_basis(&self, p: &Point) -> Result<Vec<Tangent>> {
        self.check_len(&p.0)?;
        Ok(self.tangent_basis_raw(&p.0)?.into_iter().map(Tangent).collect())
    }

    fn tangent_basis_raw(&self, p: &[f64]) -> Result<Vec<Vec<f64>>> {
        match self {
            Manifold::Euclidean(d) => Ok((0..*d)
                .map(|i| {
                    let mut e = vec![0.0; *d];
                    e[i] = 1.0;
                    e
                })
                .collect()),
            Manifold::Sphere(d) => {
                // Gram-Schmidt on the ambient axes, skipping the one most
                // aligned with p.
                let skip = (0..=*d)
                    .max_by(|&a, &b| p[a].abs().total_cmp(&p[b].abs()))
                    .unwrap_or(0);
                let mut basis: Vec<Vec<f64>> = Vec::with_capacity(*d);
                for axis in (0..=*d).filter(|&i| i != skip) {
                    let mut u = vec![0.0; d + 1];
                    u[axis] = 1.0;
                    for _ in 0..2 {
                        let c = dot(&u, p);
                        u.iter_mut().zip(p).for_each(|(x, y)| *x -= c * y);
                        for b in &basis {
                            let c = dot(&u, b);
                            u.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                        }
                    }
                    let n = norm(&u);
                    u.iter_mut().for_each(|x| *x /= n);
                    basis.push(u);
                }
                Ok(basis)
            }
            Manifold::Spd(m) => spd::tangent_basis(*m, p),
            Manifold::Product(_) => {
                let n = p.len();
                let mut basis = Vec::with_capacity(self.dim());
                for (f, o) in self.factors() {
                    let fd = f.ambient_dim();
                    for b in f.tangent_basis_raw(&p[o..o + fd])? {
                        let mut e = vec![0.0; n];
                        e[o..o + fd].copy_from_slice(&b);
                        basis.push(e);
                    }
                }
                Ok(basis)
            }
        }
    }

    /// Weighted Fréchet mean by fixed-point iteration
    /// `p ← exp(p, Σ wₛ log(p, qₛ))` started at `points[0]`. Weights default to
    /// uniform and must be nonnegative and sum to one.
    pub fn frechet_mean(&self, points: &[Point], weights: Option<&[f64]>) -> Result<Point> {
        self.frechet_mean_with(points, weights, FRECHET_MAX_ITER)
    }

    pub fn frechet_mean_with(
        &self,
        points: &[Point],
        weights: Option<&[f64]>,
        max_iter: usize,
    ) -> Result<Point> {
        let first = points
            .first()
            .ok_or_else(|| Error::InvalidInput("Fréchet mean of an empty set".into()))?;
        let uniform;
        let w = match weights {
            Some(w) => {
                if w.len() != points.len() {
                    return Err(Error::InvalidInput(format!(
                        "{} weights for {} points",
                        w.len(),
                        points.len()
                    )));
                }
                if w.iter().any(|x| !(*x >= 0.0)) {
                    return Err(Error::InvalidInput("negative Fréchet weight".into()));
                }
                let s: f64 = w.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidInput(format!("Fréchet weights sum to {s}")));
                }
                w
            }
            None => {
                uniform = vec![1.0 / points.len() as f64; points.len()];
                &uniform
            }
        };
        let mut p = first.clone();
        for _ in 0..max_iter {
            let g = self.weighted_log_sum(&p, points, w)?;
            if self.norm(&p, &g)? < FRECHET_GRAD_TOL {
                return Ok(p);
            }
            p = self.exp(&p, &g)?;
        }
        let g = self.weighted_log_sum(&p, points, w)?;
        if self.norm(&p, &g)? < FRECHET_GRAD_TOL {
            return Ok(p);
        }
        Err(Error::NonConvergence(format!(
            "Fréchet mean not converged after {max_iter} iterations"
        )))
    }

    fn weighted_log_sum(&self, p: &Point, points: &[Point], w: &[f64]) -> Result<Tangent> {
        let mut g = self.zero_tangent();
        for (q, &wi) in points.iter().zip(w) {
            if wi != 0.0 {
                g.axpy(wi, &self.log(p, q)?);
            }
        }
        Ok(g)
    }
}
