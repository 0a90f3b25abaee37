//! Test-only oracles and generators. Nothing here calls the de Casteljau or
//! regression code paths it is used to check.

use hierspline::{BezierSpline, Manifold, Point, SplineLayout};
use nalgebra::{DMatrix, Matrix3, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |a, i| a * (n - i) as f64 / (i + 1) as f64)
}

/// Bernstein basis values `C(k,i) tⁱ (1−t)^{k−i}`.
pub fn bernstein(k: usize, t: f64) -> Vec<f64> {
    (0..=k)
        .map(|i| binomial(k, i) * t.powi(i as i32) * (1.0 - t).powi((k - i) as i32))
        .collect()
}

/// Bernstein form of a Euclidean Bézier curve.
pub fn bernstein_eval(control: &[Vec<f64>], t: f64) -> Vec<f64> {
    let k = control.len() - 1;
    let b = bernstein(k, t);
    let d = control[0].len();
    (0..d).map(|c| (0..=k).map(|i| b[i] * control[i][c]).sum()).collect()
}

/// Bernstein form of a Euclidean spline, segment by segment.
pub fn bernstein_spline_eval(spline: &BezierSpline, t: f64) -> Vec<f64> {
    let l = spline.degrees().len();
    let seg = (t.floor() as usize).min(l - 1);
    let control: Vec<Vec<f64>> = spline.segment(seg).into_iter().map(|p| p.0).collect();
    bernstein_eval(&control, t - seg as f64)
}

/// Trapezoid integral of the squared Bernstein-form distance, `nodes` per
/// unit segment with endpoints included.
pub fn trapezoid_l2(b1: &BezierSpline, b2: &BezierSpline, nodes: usize) -> f64 {
    let l = b1.degrees().len();
    let intervals = (nodes - 1) * l;
    let h = l as f64 / intervals as f64;
    (0..=intervals)
        .map(|i| {
            let t = i as f64 * h;
            let w = if i == 0 || i == intervals { 0.5 } else { 1.0 };
            let a = bernstein_spline_eval(b1, t);
            let b = bernstein_spline_eval(b2, t);
            w * a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()
        })
        .sum::<f64>()
        * h
}

/// Design matrix of a single-segment degree-`k` Euclidean curve.
pub fn design_matrix(k: usize, ts: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(ts.len(), k + 1, |r, c| bernstein(k, ts[r])[c])
}

/// Normal-equation least-squares control points (rows = control points).
pub fn normal_equation_fit(k: usize, ts: &[f64], ys: &DMatrix<f64>) -> DMatrix<f64> {
    let a = design_matrix(k, ts);
    let ata = a.transpose() * &a;
    ata.lu().solve(&(a.transpose() * ys)).expect("nonsingular")
}

pub fn random_vec(rng: &mut impl Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-scale..scale)).collect()
}

pub fn random_sphere_point(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    loop {
        let v = random_vec(rng, d + 1, 1.0);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Unit vector near `center` (within roughly `spread` radians).
pub fn sphere_point_near(rng: &mut impl Rng, center: &[f64], spread: f64) -> Vec<f64> {
    let v: Vec<f64> = center.iter().map(|c| c + rng.gen_range(-spread..spread)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// A C¹ Euclidean spline with random free control points.
pub fn random_euclidean_spline(rng: &mut impl Rng, d: usize, degrees: &[usize], scale: f64) -> BezierSpline {
    let layout = SplineLayout::new(degrees.to_vec(), false).unwrap();
    let points = (0..layout.num_points()).map(|_| Point(random_vec(rng, d, scale))).collect();
    BezierSpline::with_c1_junctions(Manifold::Euclidean(d), layout, points).unwrap()
}

pub fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let axis = Unit::new_normalize(Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    Rotation3::from_axis_angle(&axis, rng.gen_range(0.1..3.0)).into_inner()
}

pub fn rotate(r: &Matrix3<f64>, p: &Point) -> Point {
    let v = r * Vector3::new(p.0[0], p.0[1], p.0[2]);
    Point(vec![v[0], v[1], v[2]])
}

pub fn rotate_spline(r: &Matrix3<f64>, b: &BezierSpline) -> BezierSpline {
    b.with_points(b.control_points().iter().map(|p| rotate(r, p)).collect()).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_control_diff(a: &BezierSpline, b: &BezierSpline) -> f64 {
    a.control_points()
        .iter()
        .zip(b.control_points())
        .map(|(p, q)| max_abs_diff(&p.0, &q.0))
        .fold(0.0, f64::max)
}
