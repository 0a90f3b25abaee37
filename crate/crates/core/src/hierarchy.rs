//! Geometry of the space of Bézier splines with a fixed layout.
//!
//! Splines are compared through the path energy of surfaces `H(s, t)` that
//! deform one curve into another, with the pointwise metric integrated along
//! the curve. Discretizing the deformation parameter into `n` steps gives the
//! discrete path energy
//!
//! ```text
//! E_n(B₀,…,B_n) = n · Σ_{j=0}^{n−1} ∫₀ᴸ d(B_j(t), B_{j+1}(t))² dt
//! ```
//!
//! whose minimizers with fixed endpoints are discrete geodesics. Both the
//! geodesic and the mean computation only ever call spline regression: an
//! inner curve is refitted to samples of its two neighbours, and the mean is
//! refitted to samples of the path elements next to it.

use serde::{Deserialize, Serialize};

use crate::bezier::{BezierSpline, SplineLayout};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::manifold::{Manifold, Point};
use crate::regression::{fit_from, FitOptions, RegressionProblem, Sample, TimeMapping};

/// Junctions that drift further than this from the C¹ condition after
/// control-point interpolation or averaging are moved back onto it.
const REPAIR_TOL: f64 = 1e-12;

/// Manifold and layout shared by all splines an operation works on.
#[derive(Clone, Debug, PartialEq)]
pub struct SplineSpace {
    pub manifold: Manifold,
    pub layout: SplineLayout,
}

impl SplineSpace {
    pub fn new(manifold: Manifold, layout: SplineLayout) -> Self {
        SplineSpace { manifold, layout }
    }

    pub fn of(spline: &BezierSpline) -> Self {
        SplineSpace::new(spline.manifold().clone(), spline.layout().clone())
    }

    pub fn check(&self, spline: &BezierSpline) -> Result<()> {
        if spline.manifold() != &self.manifold {
            return Err(Error::StructureMismatch(format!(
                "spline lives on {:?}, expected {:?}",
                spline.manifold(),
                self.manifold
            )));
        }
        if spline.layout() != &self.layout {
            return Err(Error::StructureMismatch(format!(
                "spline has degrees {:?} (closed: {}), expected {:?} (closed: {})",
                spline.degrees(),
                spline.closed(),
                self.layout.degrees(),
                self.layout.closed()
            )));
        }
        Ok(())
    }

    fn check_all<'a>(&self, splines: impl IntoIterator<Item = &'a BezierSpline>) -> Result<()> {
        splines.into_iter().try_for_each(|s| self.check(s))
    }
}

/// `n+1` splines `B₀,…,B_n` and their discrete path energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretePath {
    pub n: usize,
    pub splines: Vec<BezierSpline>,
    pub energy: f64,
}

impl DiscretePath {
    pub fn first(&self) -> &BezierSpline {
        &self.splines[0]
    }

    pub fn last(&self) -> &BezierSpline {
        &self.splines[self.n]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicOptions {
    /// Outer sweeps over the inner curves.
    pub max_sweeps: usize,
    /// Relative change of the path energy below which a sweep counts as
    /// stationary.
    pub tol: f64,
    /// Largest control-point move (geodesic distance) in a stationary sweep.
    pub step_tol: f64,
    /// Trapezoid nodes per segment used for the reported energies.
    pub quadrature_nodes: usize,
    pub fit: FitOptions,
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        GeodesicOptions {
            max_sweeps: 100,
            tol: 1e-6,
            step_tol: 1e-7,
            quadrature_nodes: 5,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GeodesicResult {
    pub path: DiscretePath,
    pub sweeps: usize,
    pub converged: bool,
    /// Path energy after initialization and after every sweep.
    pub energy_trace: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeanOptions {
    /// Time steps of the discrete geodesics.
    pub n: usize,
    pub max_iter: usize,
    /// Relative change of the total energy below which an update counts as
    /// stationary.
    pub tol: f64,
    /// Largest mean control-point move in a stationary update.
    pub step_tol: f64,
    pub geodesic: GeodesicOptions,
    pub execution: Execution,
}

impl Default for MeanOptions {
    fn default() -> Self {
        MeanOptions {
            n: 2,
            max_iter: 50,
            tol: 1e-6,
            step_tol: 1e-7,
            geodesic: GeodesicOptions::default(),
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanResult {
    pub mean: BezierSpline,
    /// Discrete geodesic from the mean to each subject.
    pub paths: Vec<DiscretePath>,
    /// Sum of the path energies.
    pub total_energy: f64,
    /// Total energy after initialization and after every update.
    pub energy_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Composite trapezoid approximation of `∫₀ᴸ d(B₁(t), B₂(t))² dt` with
/// `nodes` equidistant nodes per segment (segment endpoints included).
pub fn l2_curve_dist2(b1: &BezierSpline, b2: &BezierSpline, nodes: usize) -> Result<f64> {
    SplineSpace::of(b1).check(b2)?;
    if nodes < 2 {
        return Err(Error::InvalidInput("trapezoid rule needs at least 2 nodes per segment".into()));
    }
    let m = b1.manifold();
    let intervals = (nodes - 1) * b1.layout().num_segments();
    let h = b1.domain_length() / intervals as f64;
    let mut acc = 0.0;
    for i in 0..=intervals {
        let t = (i as f64 * h).min(b1.domain_length());
        let w = if i == 0 || i == intervals { 0.5 } else { 1.0 };
        acc += w * m.dist2(&b1.eval(t)?, &b2.eval(t)?)?;
    }
    Ok(acc * h)
}

/// `n · Σ_{j=0}^{n−1} l2_curve_dist2(B_j, B_{j+1})`.
pub fn discrete_path_energy(splines: &[BezierSpline], nodes: usize) -> Result<f64> {
    if splines.len() < 2 {
        return Err(Error::InvalidInput("a discrete path needs at least two splines".into()));
    }
    let n = (splines.len() - 1) as f64;
    let mut acc = 0.0;
    for w in splines.windows(2) {
        acc += l2_curve_dist2(&w[0], &w[1], nodes)?;
    }
    Ok(n * acc)
}

/// Inner control points on the geodesics between corresponding control
/// points of the endpoints: `pᵢʲ = γ(j/n; pᵢ⁰, pᵢⁿ)`.
fn interpolate_controls(b1: &BezierSpline, b2: &BezierSpline, s: f64) -> Result<BezierSpline> {
    let m = b1.manifold();
    let mut points = b1
        .control_points()
        .iter()
        .zip(b2.control_points())
        .map(|(p, q)| m.geodesic(s, p, q))
        .collect::<Result<Vec<Point>>>()?;
    b1.layout().repair_junctions(m, &mut points, REPAIR_TOL)?;
    b1.with_points(points)
}

/// Samples `(iL/K, B(iL/K))`, `i = 0,…,K`.
fn node_samples(spline: &BezierSpline) -> Result<Vec<Sample>> {
    spline
        .layout()
        .sample_times()
        .into_iter()
        .map(|t| Ok(Sample::new(t, spline.eval(t)?)))
        .collect()
}

fn refit(space: &SplineSpace, samples: Vec<Sample>, warm: &BezierSpline, fit: &FitOptions) -> Result<BezierSpline> {
    let problem = RegressionProblem::with_time_mapping(
        space.manifold.clone(),
        space.layout.clone(),
        samples,
        TimeMapping::Identity,
    )?;
    Ok(fit_from(&problem, warm, fit)?.spline)
}

/// Discrete `n`-geodesic from `b1` to `b2`.
///
/// Inner curves start on the control-point geodesics and are then swept in
/// ascending order, each replaced by the regression fit to the `2(K+1)`
/// samples of its two neighbours at `iL/K` (updated in place, so later
/// curves see earlier updates). Each fit is warm-started from the curve it
/// replaces. Endpoints never move. Sweeps stop once the relative energy
/// change is below `tol` and no control point moved by `step_tol` or more.
pub fn discrete_geodesic(
    b1: &BezierSpline,
    b2: &BezierSpline,
    n: usize,
    options: &GeodesicOptions,
) -> Result<GeodesicResult> {
    let space = SplineSpace::of(b1);
    space.check(b2)?;
    if n < 1 {
        return Err(Error::InvalidInput("discrete geodesics need n >= 1".into()));
    }
    let mut splines = Vec::with_capacity(n + 1);
    splines.push(b1.clone());
    for j in 1..n {
        splines.push(interpolate_controls(b1, b2, j as f64 / n as f64)?);
    }
    splines.push(b2.clone());

    let nodes = options.quadrature_nodes;
    let mut energy = discrete_path_energy(&splines, nodes)?;
    let mut trace = vec![energy];
    let mut sweeps = 0;
    let mut converged = n == 1 || energy == 0.0;

    while !converged && sweeps < options.max_sweeps {
        let mut moved: f64 = 0.0;
        for j in 1..n {
            let mut samples = node_samples(&splines[j - 1])?;
            samples.extend(node_samples(&splines[j + 1])?);
            let next = refit(&space, samples, &splines[j], &options.fit)?;
            moved = moved.max(max_move(&splines[j], &next)?);
            splines[j] = next;
        }
        sweeps += 1;
        let e = discrete_path_energy(&splines, nodes)?;
        converged = stationary(energy, e, options.tol) && moved < options.step_tol;
        energy = e;
        trace.push(e);
    }

    Ok(GeodesicResult {
        path: DiscretePath { n, splines, energy },
        sweeps,
        converged,
        energy_trace: trace,
    })
}

fn max_move(a: &BezierSpline, b: &BezierSpline) -> Result<f64> {
    let m = a.manifold();
    a.control_points()
        .iter()
        .zip(b.control_points())
        .try_fold(0.0, |acc: f64, (p, q)| Ok(acc.max(m.dist(p, q)?)))
}

/// The sweep and mean updates are fixed-point iterations of regression fits
/// whose sample nodes differ from the quadrature nodes of the energy, so close
/// to the fixed point the energy may wobble at the level of `tol` while the
/// control points still settle. Stationarity therefore also requires small
/// control-point moves.
fn stationary(before: f64, after: f64, tol: f64) -> bool {
    before == after || (after - before).abs() <= tol * before.abs()
}

/// `sqrt` of the energy of the discrete `n`-geodesic.
pub fn spline_distance(b1: &BezierSpline, b2: &BezierSpline, n: usize, options: &GeodesicOptions) -> Result<f64> {
    Ok(discrete_geodesic(b1, b2, n, options)?.path.energy.max(0.0).sqrt())
}

/// Control-point-wise Fréchet mean, the starting point of the mean iteration.
pub fn control_point_mean(subjects: &[BezierSpline]) -> Result<BezierSpline> {
    let first = subjects
        .first()
        .ok_or_else(|| Error::InvalidInput("mean of an empty set of splines".into()))?;
    let space = SplineSpace::of(first);
    space.check_all(subjects)?;
    let m = &space.manifold;
    let mut points = (0..space.layout.num_points())
        .map(|i| {
            let column: Vec<Point> = subjects.iter().map(|s| s.control_points()[i].clone()).collect();
            m.frechet_mean(&column, None)
        })
        .collect::<Result<Vec<Point>>>()?;
    space.layout.repair_junctions(m, &mut points, REPAIR_TOL)?;
    first.with_points(points)
}

fn geodesics_to(
    mean: &BezierSpline,
    subjects: &[BezierSpline],
    options: &MeanOptions,
) -> Result<Vec<GeodesicResult>> {
    exec::try_map(options.execution, subjects, |_, s| {
        discrete_geodesic(mean, s, options.n, &options.geodesic)
    })
}

/// Discrete `n`-mean of subject splines.
///
/// Starts from the control-point-wise Fréchet mean, then alternates between
/// computing discrete geodesics from the mean to every subject (in parallel
/// under [`Execution::Parallel`]) and refitting the mean to the samples at
/// `iL/K` of each path's element adjacent to the mean.
pub fn mean_trajectory(subjects: &[BezierSpline], options: &MeanOptions) -> Result<MeanResult> {
    if subjects.is_empty() {
        return Err(Error::InvalidInput("mean of an empty set of splines".into()));
    }
    if options.n < 1 {
        return Err(Error::InvalidInput("discrete geodesics need n >= 1".into()));
    }
    let space = SplineSpace::of(&subjects[0]);
    space.check_all(subjects)?;

    let mut mean = control_point_mean(subjects)?;
    let mut geos = geodesics_to(&mean, subjects, options)?;
    let mut total: f64 = geos.iter().map(|g| g.path.energy).sum();
    let mut trace = vec![total];
    let mut iterations = 0;
    let mut converged = total == 0.0;

    while !converged && iterations < options.max_iter {
        let mut samples = Vec::with_capacity(subjects.len() * space.layout.num_points());
        for g in &geos {
            samples.extend(node_samples(&g.path.splines[1])?);
        }
        let next = refit(&space, samples, &mean, &options.geodesic.fit)?;
        let moved = max_move(&mean, &next)?;
        mean = next;
        geos = geodesics_to(&mean, subjects, options)?;
        let e: f64 = geos.iter().map(|g| g.path.energy).sum();
        iterations += 1;
        converged = stationary(total, e, options.tol) && moved < options.step_tol;
        total = e;
        trace.push(e);
    }

    let paths: Vec<DiscretePath> = geos.into_iter().map(|g| g.path).collect();
    let total_energy = paths.iter().map(|p| p.energy).sum();
    Ok(MeanResult { mean, paths, total_energy, energy_trace: trace, iterations, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pt(v: &[f64]) -> Point {
        Point(v.to_vec())
    }

    fn constant(x: f64) -> BezierSpline {
        BezierSpline::new(Manifold::Euclidean(1), SplineLayout::new(vec![1], false).unwrap(), vec![pt(&[x]), pt(&[x])]).unwrap()
    }

    #[test]
    fn l2_examples() {
        let zero = constant(0.0);
        assert_eq!(l2_curve_dist2(&zero, &zero, 5).unwrap(), 0.0);
        assert_abs_diff_eq!(l2_curve_dist2(&zero, &constant(1.0), 5).unwrap(), 1.0, epsilon = 1e-15);
        let ramp = BezierSpline::new(Manifold::Euclidean(1), SplineLayout::new(vec![1], false).unwrap(), vec![pt(&[0.0]), pt(&[1.0])]).unwrap();
        // trapezoid on t² with h = 1/4: (0/2 + 1/16 + 1/4 + 9/16 + 1/2)/4
        let v = l2_curve_dist2(&zero, &ramp, 5).unwrap();
        assert_abs_diff_eq!(v, 0.34375, epsilon = 1e-15);
        assert!((v - 0.34).abs() <= 0.01);
        assert!(l2_curve_dist2(&zero, &ramp, 1).is_err());
    }

    #[test]
    fn path_energy_examples() {
        let splines = vec![constant(0.0), constant(0.5), constant(1.0)];
        assert_abs_diff_eq!(discrete_path_energy(&splines, 5).unwrap(), 1.0, epsilon = 1e-15);
        let flat = vec![constant(0.3); 4];
        assert_eq!(discrete_path_energy(&flat, 5).unwrap(), 0.0);
        let pair = [constant(0.0), constant(2.0)];
        assert_abs_diff_eq!(
            discrete_path_energy(&pair, 5).unwrap(),
            l2_curve_dist2(&pair[0], &pair[1], 5).unwrap()
        );
    }

    #[test]
    fn geodesic_degenerate_cases() {
        let b = constant(0.25);
        let g = discrete_geodesic(&b, &b, 3, &GeodesicOptions::default()).unwrap();
        assert_eq!(g.path.energy, 0.0);
        assert!(g.path.splines.iter().all(|s| s == &b));

        let g = discrete_geodesic(&constant(0.0), &constant(1.0), 1, &GeodesicOptions::default()).unwrap();
        assert_eq!(g.sweeps, 0);
        assert_eq!(g.path.splines.len(), 2);
        assert!(discrete_geodesic(&b, &b, 0, &GeodesicOptions::default()).is_err());
    }

    #[test]
    fn distance_of_constants() {
        for n in 1..=4 {
            let d = spline_distance(&constant(0.0), &constant(1.0), n, &GeodesicOptions::default()).unwrap();
            assert_abs_diff_eq!(d, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn mismatched_spaces_are_rejected() {
        let a = constant(0.0);
        let b = BezierSpline::new(Manifold::Euclidean(1), SplineLayout::new(vec![2], false).unwrap(), vec![pt(&[0.0]); 3]).unwrap();
        assert!(matches!(l2_curve_dist2(&a, &b, 5), Err(Error::StructureMismatch(_))));
        assert!(mean_trajectory(&[a, b], &MeanOptions::default()).is_err());
        assert!(mean_trajectory(&[], &MeanOptions::default()).is_err());
    }

    #[test]
    fn single_subject_mean_is_the_subject() {
        let r2 = Manifold::Euclidean(2);
        let b = BezierSpline::new(r2, SplineLayout::new(vec![3], false).unwrap(), vec![pt(&[0.0, 0.0]), pt(&[1.0, 2.0]), pt(&[2.0, -1.0]), pt(&[3.0, 0.5])]).unwrap();
        let r = mean_trajectory(std::slice::from_ref(&b), &MeanOptions::default()).unwrap();
        assert_eq!(r.mean, b);
        assert_eq!(r.total_energy, 0.0);
        assert!(r.converged);
    }
}
