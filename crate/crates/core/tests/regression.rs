mod common;

use common::*;
use hierspline::regression::{self, TimeMapping};
use hierspline::{BezierSpline, FitOptions, Manifold, Point, RegressionProblem, Sample, SplineLayout};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Linear map from free control points to spline values for a Euclidean
/// layout: rows are sample times, columns free points in index order.
fn euclidean_design(degrees: &[usize], ts: &[f64]) -> (DMatrix<f64>, Vec<usize>) {
    let mut offsets = vec![0];
    for &k in degrees {
        offsets.push(offsets.last().unwrap() + k);
    }
    let n_points = offsets[degrees.len()] + 1;
    let mut full = DMatrix::zeros(ts.len(), n_points);
    for (r, &t) in ts.iter().enumerate() {
        let seg = (t.floor() as usize).min(degrees.len() - 1);
        for (i, b) in bernstein(degrees[seg], t - seg as f64).into_iter().enumerate() {
            full[(r, offsets[seg] + i)] += b;
        }
    }
    // Fold each interior junction into its two neighbours.
    let junctions: Vec<usize> = (1..degrees.len()).map(|i| offsets[i]).collect();
    for (i, &j) in junctions.iter().enumerate() {
        let (kl, kr) = (degrees[i] as f64, degrees[i + 1] as f64);
        let a = kl / (kl + kr);
        for r in 0..ts.len() {
            let c = full[(r, j)];
            full[(r, j - 1)] += (1.0 - a) * c;
            full[(r, j + 1)] += a * c;
            full[(r, j)] = 0.0;
        }
    }
    let free: Vec<usize> = (0..n_points).filter(|i| !junctions.contains(i)).collect();
    let cols: Vec<_> = free.iter().map(|&c| full.column(c).into_owned()).collect();
    (DMatrix::from_columns(&cols), free)
}

fn random_samples(r: &mut impl Rng, l: f64, n: usize, d: usize, weighted: bool) -> Vec<Sample> {
    (0..n)
        .map(|_| {
            let t = r.gen_range(0.0..=l);
            let w = if weighted { r.gen_range(0.2..2.0) } else { 1.0 };
            Sample::weighted(t, Point(random_vec(r, d, 2.0)), w)
        })
        .collect()
}

fn gradient_relative_error(degrees: &[usize], seed: u64, weighted: bool) -> f64 {
    let mut r = rng(seed);
    let d = 2;
    let spline = random_euclidean_spline(&mut r, d, degrees, 1.5);
    let samples = random_samples(&mut r, degrees.len() as f64, 15, d, weighted);
    let ts: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let (a, free) = euclidean_design(degrees, &ts);
    let p = DMatrix::from_fn(free.len(), d, |i, c| spline.control_points()[free[i]].0[c]);
    let q = DMatrix::from_fn(samples.len(), d, |i, c| samples[i].point.0[c]);
    let w = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(samples.len(), samples.iter().map(|s| s.weight)));
    let oracle = a.transpose() * w * (&a * p - q);
    let fd = regression::gradient(&spline, &samples).unwrap();
    let mut num = 0.0;
    for (row, &i) in free.iter().enumerate() {
        for c in 0..d {
            num += (fd[i].0[c] - oracle[(row, c)]).powi(2);
        }
    }
    num.sqrt() / oracle.norm()
}

#[test]
fn gradient_matches_closed_form_single_segment() {
    for seed in 0..20 {
        for k in 1..=4 {
            let e = gradient_relative_error(&[k], seed, seed % 2 == 1);
            assert!(e < 1e-5, "seed {seed} degree {k}: relative error {e}");
        }
    }
}

#[test]
fn gradient_matches_closed_form_with_junctions() {
    for seed in 0..10 {
        for degrees in [vec![3, 3], vec![3, 2], vec![2, 4, 3]] {
            let e = gradient_relative_error(&degrees, seed, true);
            assert!(e < 1e-5, "seed {seed} degrees {degrees:?}: relative error {e}");
        }
    }
}

fn euclidean_problem(r: &mut impl Rng, k: usize, n: usize, d: usize) -> (RegressionProblem, Vec<f64>, DMatrix<f64>) {
    let ts: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let ys = DMatrix::from_fn(n, d, |_, _| r.gen_range(-2.0..2.0));
    let samples = (0..n).map(|i| Sample::new(ts[i], Point(ys.row(i).iter().copied().collect()))).collect();
    let layout = SplineLayout::new(vec![k], false).unwrap();
    let problem = RegressionProblem::with_time_mapping(Manifold::Euclidean(d), layout, samples, TimeMapping::Identity).unwrap();
    (problem, ts, ys)
}

fn assert_monotone(trace: &[f64]) {
    for w in trace.windows(2) {
        assert!(w[1] <= w[0], "energy increased: {} -> {}", w[0], w[1]);
    }
}

proptest! {
    #![proptest_config(proptest_config(32))]

    #[test]
    fn euclidean_fit_matches_normal_equations(seed in any::<u64>(), k in 1usize..5, extra in 1usize..12) {
        let mut r = rng(seed);
        let n = k + 1 + extra;
        let (problem, ts, ys) = euclidean_problem(&mut r, k, n, 2);
        let fit = regression::fit(&problem, &FitOptions::default()).unwrap();
        let oracle = normal_equation_fit(k, &ts, &ys);
        for (i, p) in fit.spline.control_points().iter().enumerate() {
            for c in 0..2 {
                prop_assert!((p.0[c] - oracle[(i, c)]).abs() < 1e-4, "point {i}: {} vs {}", p.0[c], oracle[(i, c)]);
            }
        }
        assert_monotone(&fit.energy_trace);
        prop_assert!(fit.spline.is_valid());
    }

    #[test]
    fn sample_order_does_not_matter(seed in any::<u64>()) {
        let mut r = rng(seed);
        let center = random_sphere_point(&mut r, 2);
        let mut samples: Vec<Sample> = (0..9)
            .map(|i| Sample::new(i as f64 * 0.3 + 1.0, Point(sphere_point_near(&mut r, &center, 0.4))))
            .collect();
        // A duplicate time exercises the tie-break.
        samples.push(Sample::new(2.2, Point(sphere_point_near(&mut r, &center, 0.4))));
        let layout = SplineLayout::new(vec![2, 2], false).unwrap();
        let options = FitOptions { max_iter: 40, ..FitOptions::default() };
        let a = regression::fit(&RegressionProblem::new(Manifold::Sphere(2), layout.clone(), samples.clone()).unwrap(), &options).unwrap();
        samples.shuffle(&mut r);
        let b = regression::fit(&RegressionProblem::new(Manifold::Sphere(2), layout, samples).unwrap(), &options).unwrap();
        prop_assert_eq!(a.spline, b.spline);
        prop_assert_eq!(a.energy_trace, b.energy_trace);
    }

    #[test]
    fn sphere_fit_commutes_with_rotations(seed in any::<u64>()) {
        let mut r = rng(seed);
        // Noisy observations along a great-circle arc, inside a convex ball.
        let m = Manifold::Sphere(2);
        let start = Point(random_sphere_point(&mut r, 2));
        let end = Point(sphere_point_near(&mut r, &start.0, 0.6));
        let samples: Vec<Sample> = (0..8)
            .map(|i| {
                let p = m.geodesic(i as f64 / 7.0, &start, &end).unwrap();
                Sample::new(i as f64, Point(sphere_point_near(&mut r, &p.0, 0.1)))
            })
            .collect();
        let rot = random_rotation(&mut r);
        let rotated: Vec<Sample> = samples.iter().map(|s| Sample::new(s.t, rotate(&rot, &s.point))).collect();
        let layout = SplineLayout::new(vec![3], false).unwrap();
        let a = regression::fit(&RegressionProblem::new(Manifold::Sphere(2), layout.clone(), samples).unwrap(), &FitOptions::default()).unwrap();
        let b = regression::fit(&RegressionProblem::new(Manifold::Sphere(2), layout, rotated).unwrap(), &FitOptions::default()).unwrap();
        prop_assert!(max_control_diff(&rotate_spline(&rot, &a.spline), &b.spline) < 1e-5);
        assert_monotone(&a.energy_trace);
        prop_assert!(b.spline.validate().is_empty());
    }
}

fn sphere_ground_truth() -> BezierSpline {
    let unit = |v: [f64; 3]| {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        Point(v.iter().map(|x| x / n).collect())
    };
    BezierSpline::from_segments(
        Manifold::Sphere(2),
        &[vec![unit([1.0, 0.0, 0.2]), unit([0.8, 0.5, 0.5]), unit([0.3, 0.9, 0.3]), unit([0.0, 1.0, -0.1])]],
        false,
    )
    .unwrap()
}

#[test]
fn noisy_sphere_fit_recovers_ground_truth() {
    let truth = sphere_ground_truth();
    let m = truth.manifold().clone();
    for sigma in [0.05, 0.01] {
        let mut r = rng(11);
        let samples: Vec<Sample> = (0..41)
            .map(|i| {
                let t = i as f64 / 40.0;
                let p = truth.eval(t).unwrap();
                let mut v = m.zero_tangent();
                for e in m.tangent_basis(&p).unwrap() {
                    let z: f64 = StandardNormal.sample(&mut r);
                    v.axpy(sigma * z, &e);
                }
                Sample::new(t, m.exp(&p, &v).unwrap())
            })
            .collect();
        let problem = RegressionProblem::new(m.clone(), truth.layout().clone(), samples).unwrap();
        let fit = regression::fit(&problem, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        let worst = fit
            .spline
            .control_points()
            .iter()
            .zip(truth.control_points())
            .map(|(a, b)| m.dist(a, b).unwrap())
            .fold(0.0, f64::max);
        assert!(worst < 10.0 * sigma, "sigma {sigma}: control point error {worst}");
    }
}
