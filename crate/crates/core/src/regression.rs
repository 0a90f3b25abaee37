//! Least-squares regression with Bézier splines.
//!
//! Minimizes `½ Σⱼ wⱼ d(B(tⱼ), qⱼ)²` over the control points of a spline with
//! a fixed layout. The free variables are the control points not fixed by the
//! C¹ junction condition; dependent junctions are recomputed from their
//! neighbours whenever the free points move, so every iterate is a valid
//! spline.
//!
//! The optimizer is Riemannian gradient descent with Armijo backtracking.
//! Gradients are central finite differences along an orthonormal tangent
//! basis at each free control point, which keeps the method independent of
//! the manifold at the cost of `2·dim` objective evaluations per point.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::bezier::{BezierSpline, SplineLayout};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::manifold::{Manifold, Point, Tangent};

/// One observation `(t, q)` with its weight in the objective.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub point: Point,
    pub weight: f64,
}

impl Sample {
    pub fn new(t: f64, point: Point) -> Self {
        Sample { t, point, weight: 1.0 }
    }

    pub fn weighted(t: f64, point: Point, weight: f64) -> Self {
        Sample { t, point, weight }
    }
}

/// How sample times are placed on the spline domain `[0, L]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum TimeMapping {
    /// Affine map sending the earliest time to 0 and the latest to `L`.
    #[default]
    Rescale,
    /// Times are already spline parameters and must lie in `[0, L]`
    /// (any real for closed splines).
    Identity,
}

#[derive(Clone, Debug)]
pub struct RegressionProblem {
    manifold: Manifold,
    layout: SplineLayout,
    /// Mapped to the spline domain and sorted canonically.
    samples: Vec<Sample>,
    time_offset: f64,
    time_scale: f64,
}

impl RegressionProblem {
    pub fn new(manifold: Manifold, layout: SplineLayout, samples: Vec<Sample>) -> Result<Self> {
        Self::with_time_mapping(manifold, layout, samples, TimeMapping::Rescale)
    }

    pub fn with_time_mapping(
        manifold: Manifold,
        layout: SplineLayout,
        mut samples: Vec<Sample>,
        mapping: TimeMapping,
    ) -> Result<Self> {
        layout.check_closure()?;
        layout.check_parametrizable()?;
        if samples.is_empty() {
            return Err(Error::InvalidInput("regression needs at least one sample".into()));
        }
        for (j, s) in samples.iter().enumerate() {
            if !s.t.is_finite() {
                return Err(Error::InvalidInput(format!("sample {j}: non-finite time")));
            }
            if !(s.weight >= 0.0) || !s.weight.is_finite() {
                return Err(Error::InvalidInput(format!("sample {j}: weight {} is not >= 0", s.weight)));
            }
            manifold
                .check_point(&s.point)
                .map_err(|e| Error::InvalidPoint(format!("sample {j}: {e}")))?;
        }
        let l = layout.domain_length();
        let (offset, scale) = match mapping {
            TimeMapping::Rescale => {
                let lo = samples.iter().map(|s| s.t).fold(f64::INFINITY, f64::min);
                let hi = samples.iter().map(|s| s.t).fold(f64::NEG_INFINITY, f64::max);
                if !(hi > lo) {
                    return Err(Error::InvalidInput("all sample times are equal".into()));
                }
                (lo, l / (hi - lo))
            }
            TimeMapping::Identity => {
                if !layout.closed() {
                    if let Some(s) = samples.iter().find(|s| !(0.0..=l).contains(&s.t)) {
                        return Err(Error::Domain(format!("sample time {} outside [0, {l}]", s.t)));
                    }
                }
                (0.0, 1.0)
            }
        };
        for s in &mut samples {
            s.t = if mapping == TimeMapping::Rescale {
                ((s.t - offset) * scale).clamp(0.0, l)
            } else {
                s.t
            };
        }
        samples.sort_by(canonical_order);
        Ok(RegressionProblem { manifold, layout, samples, time_offset: offset, time_scale: scale })
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn layout(&self) -> &SplineLayout {
        &self.layout
    }

    /// Samples with times on the spline domain, in canonical order.
    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    /// `(offset, scale)` with `domain_time = (t − offset)·scale`.
    pub fn time_map(&self) -> (f64, f64) {
        (self.time_offset, self.time_scale)
    }

    /// Control point `i` is placed at the sample whose time is closest to
    /// `iL/K`, ties going to the earlier sample in canonical order; junctions
    /// are then rebuilt from the C¹ condition.
    pub fn initial_spline(&self) -> Result<BezierSpline> {
        let points = self
            .layout
            .sample_times()
            .into_iter()
            .map(|tau| {
                let mut best = &self.samples[0];
                for s in &self.samples[1..] {
                    if (s.t - tau).abs() < (best.t - tau).abs() {
                        best = s;
                    }
                }
                best.point.clone()
            })
            .collect();
        BezierSpline::with_c1_junctions(self.manifold.clone(), self.layout.clone(), points)
    }
}

/// Order by time, then coordinates, then weight, so that results do not
/// depend on the order samples were supplied in.
fn canonical_order(a: &Sample, b: &Sample) -> Ordering {
    a.t.total_cmp(&b.t)
        .then_with(|| {
            a.point
                .0
                .iter()
                .zip(&b.point.0)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
        .then_with(|| a.weight.total_cmp(&b.weight))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Gradient-norm threshold.
    pub tol: f64,
    /// Relative energy decrease below which the iteration is considered
    /// stalled.
    pub rel_tol: f64,
    /// Sufficient-decrease constant of the Armijo rule.
    pub armijo_c: f64,
    /// First trial step of the backtracking search.
    pub initial_step: f64,
    pub step_control: StepControl,
    /// Backtracking stops once the step falls below this.
    pub min_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 500,
            tol: 1e-8,
            rel_tol: 1e-14,
            armijo_c: 1e-4,
            initial_step: 1.0,
            step_control: StepControl::default(),
            min_step: 1e-18,
        }
    }
}

/// Where each backtracking search starts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StepControl {
    /// Every search starts at `initial_step`.
    Fixed,
    /// The first search starts at `initial_step`, later ones at the
    /// Barzilai-Borwein step `⟨s,s⟩/⟨s,y⟩` built from the last move `s` and
    /// gradient change `y` (previous gradient projected onto the new tangent
    /// spaces). Falls back to `initial_step` when `⟨s,y⟩ ≤ 0`.
    #[default]
    BarzilaiBorwein,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientNorm,
    RelativeDecrease,
    /// No step along the negative gradient decreased the energy; the iterate
    /// is stationary to the precision of the finite-difference gradient.
    LineSearchStalled,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct RegressionResult {
    pub spline: BezierSpline,
    pub final_energy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// Energy before the first iteration and after each accepted step.
    pub energy_trace: Vec<f64>,
    /// Fewer samples than free control points.
    pub underdetermined: bool,
    pub time_offset: f64,
    pub time_scale: f64,
}

/// `½ Σⱼ wⱼ d(B(tⱼ), qⱼ)²` for samples given in spline parameters.
pub fn objective(spline: &BezierSpline, samples: &[Sample]) -> Result<f64> {
    let m = spline.manifold();
    let mut e = 0.0;
    for s in samples {
        if s.weight != 0.0 {
            e += s.weight * m.dist2(&spline.eval(s.t)?, &s.point)?;
        }
    }
    Ok(0.5 * e)
}

fn finite_difference_step(p: &Point) -> f64 {
    1e-6 * (1.0 + p.0.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Riemannian gradient of [`objective`] with respect to each of the `K+1`
/// distinct control points. Entries for C¹-dependent junctions are zero: those
/// points move with their neighbours, whose gradients account for them.
pub fn gradient(spline: &BezierSpline, samples: &[Sample]) -> Result<Vec<Tangent>> {
    let layout = spline.layout();
    layout.check_parametrizable()?;
    let m = spline.manifold();
    let mut grad: Vec<Tangent> = vec![m.zero_tangent(); layout.num_points()];
    let base = spline.control_points();
    for i in layout.free_indices() {
        let h = finite_difference_step(&base[i]);
        let mut g = m.zero_tangent();
        for e in m.tangent_basis(&base[i])? {
            let mut plus = base.to_vec();
            plus[i] = m.exp(&base[i], &e.scaled(h))?;
            let mut minus = base.to_vec();
            minus[i] = m.exp(&base[i], &e.scaled(-h))?;
            let fp = objective(&perturbed(spline, plus)?, samples)?;
            let fm = objective(&perturbed(spline, minus)?, samples)?;
            g.axpy((fp - fm) / (2.0 * h), &e);
        }
        grad[i] = g;
    }
    Ok(grad)
}

fn perturbed(spline: &BezierSpline, mut points: Vec<Point>) -> Result<BezierSpline> {
    spline.layout().reconstruct_junctions(spline.manifold(), &mut points)?;
    BezierSpline::new(spline.manifold().clone(), spline.layout().clone(), points)
}

/// Fit starting from the deterministic nearest-sample initialization.
pub fn fit(problem: &RegressionProblem, options: &FitOptions) -> Result<RegressionResult> {
    let init = problem.initial_spline()?;
    fit_from(problem, &init, options)
}

/// Independent fits, one per problem, in input order.
pub fn fit_batch(
    problems: &[RegressionProblem],
    options: &FitOptions,
    execution: Execution,
) -> Vec<Result<RegressionResult>> {
    exec::map(execution, problems, |_, p| fit(p, options))
}

/// Fit starting from a given spline (warm start). Its junctions are rebuilt
/// from the C¹ condition before the first step.
pub fn fit_from(
    problem: &RegressionProblem,
    initial: &BezierSpline,
    options: &FitOptions,
) -> Result<RegressionResult> {
    if initial.manifold() != problem.manifold() || initial.layout() != problem.layout() {
        return Err(Error::StructureMismatch(
            "initial spline does not match the regression layout".into(),
        ));
    }
    let m = problem.manifold();
    let samples = problem.samples();
    let free = problem.layout().free_indices();

    let mut spline = perturbed(initial, initial.control_points().to_vec())?;
    let mut energy = objective(&spline, samples)?;
    let mut trace = vec![energy];
    let mut iterations = 0;
    let mut stop = StopReason::MaxIterations;
    let mut previous: Option<(Vec<Point>, Vec<Tangent>)> = None;

    while iterations < options.max_iter {
        if energy == 0.0 {
            stop = StopReason::GradientNorm;
            break;
        }
        let grad = gradient(&spline, samples)?;
        let mut gnorm2 = 0.0;
        for &i in &free {
            gnorm2 += m.inner(&spline.control_points()[i], &grad[i], &grad[i])?;
        }
        if gnorm2.sqrt() < options.tol {
            stop = StopReason::GradientNorm;
            break;
        }

        let mut step = match (&previous, options.step_control) {
            (Some((x_old, g_old)), StepControl::BarzilaiBorwein) => {
                barzilai_borwein(m, spline.control_points(), x_old, &grad, g_old, &free)?
                    .unwrap_or(options.initial_step)
            }
            _ => options.initial_step,
        };
        let mut accepted = None;
        let mut any_feasible = false;
        while step >= options.min_step {
            if let Ok(candidate) = descend(&spline, &grad, &free, step) {
                if let Ok(e) = objective(&candidate, samples) {
                    any_feasible = true;
                    if e <= energy - options.armijo_c * step * gnorm2 {
                        accepted = Some((candidate, e));
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        let Some((next, e)) = accepted else {
            if !any_feasible {
                return Err(Error::Domain(
                    "line search found no step that stays inside the injectivity region".into(),
                ));
            }
            stop = StopReason::LineSearchStalled;
            break;
        };
        iterations += 1;
        let decrease = (energy - e) / energy;
        previous = Some((spline.control_points().to_vec(), grad));
        spline = next;
        energy = e;
        trace.push(e);
        if decrease < options.rel_tol {
            stop = StopReason::RelativeDecrease;
            break;
        }
    }

    Ok(RegressionResult {
        final_energy: energy,
        iterations,
        converged: stop != StopReason::MaxIterations,
        stop_reason: stop,
        energy_trace: trace,
        underdetermined: samples.len() < free.len(),
        time_offset: problem.time_offset,
        time_scale: problem.time_scale,
        spline,
    })
}

fn barzilai_borwein(
    m: &Manifold,
    x: &[Point],
    x_old: &[Point],
    g: &[Tangent],
    g_old: &[Tangent],
    free: &[usize],
) -> Result<Option<f64>> {
    let (mut ss, mut sy) = (0.0, 0.0);
    for &i in free {
        let s = m.log(&x[i], &x_old[i])?.scaled(-1.0);
        let mut y = g[i].clone();
        y.axpy(-1.0, &m.project(&x[i], &g_old[i])?);
        ss += m.inner(&x[i], &s, &s)?;
        sy += m.inner(&x[i], &s, &y)?;
    }
    let step = ss / sy;
    Ok((sy > 0.0 && step.is_finite()).then_some(step.clamp(1e-10, 1e10)))
}

fn descend(spline: &BezierSpline, grad: &[Tangent], free: &[usize], step: f64) -> Result<BezierSpline> {
    let m = spline.manifold();
    let mut points = spline.control_points().to_vec();
    for &i in free {
        points[i] = m.exp(&points[i], &grad[i].scaled(-step))?;
    }
    perturbed(spline, points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn pt(v: &[f64]) -> Point {
        Point(v.to_vec())
    }

    fn single(degree: usize) -> SplineLayout {
        SplineLayout::new(vec![degree], false).unwrap()
    }

    #[test]
    fn objective_examples() {
        let r1 = Manifold::Euclidean(1);
        let b = BezierSpline::new(r1, single(1), vec![pt(&[0.0]), pt(&[1.0])]).unwrap();
        assert_eq!(objective(&b, &[Sample::new(0.5, pt(&[1.5]))]).unwrap(), 0.5);
        assert_eq!(objective(&b, &[Sample::new(0.25, pt(&[0.25]))]).unwrap(), 0.0);

        let s2 = Manifold::Sphere(2);
        let eq = BezierSpline::new(s2, single(1), vec![pt(&[1.0, 0.0, 0.0]), pt(&[0.0, 1.0, 0.0])]).unwrap();
        let e = objective(&eq, &[Sample::new(0.37, pt(&[0.0, 0.0, 1.0]))]).unwrap();
        assert_abs_diff_eq!(e, 0.5 * FRAC_PI_2 * FRAC_PI_2, epsilon = 1e-14);
    }

    #[test]
    fn gradient_vanishes_on_exact_data_and_scales_with_weights() {
        let r2 = Manifold::Euclidean(2);
        let b = BezierSpline::new(r2, single(2), vec![pt(&[0.0, 0.0]), pt(&[1.0, 2.0]), pt(&[2.0, 0.0])]).unwrap();
        let exact: Vec<Sample> = [0.0, 0.3, 0.6, 1.0]
            .iter()
            .map(|&t| Sample::new(t, b.eval(t).unwrap()))
            .collect();
        for g in gradient(&b, &exact).unwrap() {
            assert!(g.0.iter().all(|x| x.abs() < 1e-7));
        }

        let noisy: Vec<Sample> = exact
            .iter()
            .enumerate()
            .map(|(i, s)| Sample::new(s.t, pt(&[s.point.0[0] + 0.1 * i as f64, s.point.0[1] - 0.2])))
            .collect();
        let doubled: Vec<Sample> = noisy.iter().map(|s| Sample::weighted(s.t, s.point.clone(), 2.0)).collect();
        let g1 = gradient(&b, &noisy).unwrap();
        let g2 = gradient(&b, &doubled).unwrap();
        for (a, c) in g1.iter().zip(&g2) {
            for (x, y) in a.0.iter().zip(&c.0) {
                assert_abs_diff_eq!(2.0 * x, y, epsilon = 1e-10 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn fits_exact_line() {
        let r2 = Manifold::Euclidean(2);
        let samples = [0.0, 0.25, 0.5, 0.75, 1.0]
            .iter()
            .map(|&t| Sample::new(t, pt(&[t, 2.0 * t])))
            .collect();
        let p = RegressionProblem::new(r2, single(1), samples).unwrap();
        let r = fit(&p, &FitOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.final_energy < 1e-10);
        let c = r.spline.control_points();
        assert_abs_diff_eq!(c[0].0[0], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(c[0].0[1], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(c[1].0[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(c[1].0[1], 2.0, epsilon = 1e-6);
    }

    #[test]
    fn problem_validation() {
        let r1 = Manifold::Euclidean(1);
        assert!(RegressionProblem::new(r1.clone(), single(1), vec![]).is_err());
        let same_t = vec![Sample::new(1.0, pt(&[0.0])), Sample::new(1.0, pt(&[1.0]))];
        assert!(RegressionProblem::new(r1.clone(), single(1), same_t).is_err());
        let out_of_range = vec![Sample::new(0.0, pt(&[0.0])), Sample::new(1.5, pt(&[1.0]))];
        assert!(RegressionProblem::with_time_mapping(r1.clone(), single(1), out_of_range.clone(), TimeMapping::Identity).is_err());
        let p = RegressionProblem::new(r1, single(1), out_of_range).unwrap();
        assert_eq!(p.samples()[1].t, 1.0);
        assert_eq!(p.time_map(), (0.0, 1.0 / 1.5));
    }

    #[test]
    fn time_rescaling_maps_onto_domain() {
        let r1 = Manifold::Euclidean(1);
        let samples = vec![
            Sample::new(10.0, pt(&[0.0])),
            Sample::new(14.0, pt(&[1.0])),
            Sample::new(12.0, pt(&[0.5])),
        ];
        let p = RegressionProblem::new(r1, SplineLayout::new(vec![2, 2], false).unwrap(), samples).unwrap();
        let ts: Vec<f64> = p.samples().iter().map(|s| s.t).collect();
        assert_eq!(ts, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn underdetermined_fit_is_flagged() {
        let r1 = Manifold::Euclidean(1);
        let samples = vec![Sample::new(0.0, pt(&[0.0])), Sample::new(1.0, pt(&[1.0]))];
        let p = RegressionProblem::new(r1, single(3), samples).unwrap();
        let r = fit(&p, &FitOptions::default()).unwrap();
        assert!(r.underdetermined);
        assert!(r.final_energy < 1e-12);
    }

    #[test]
    fn multi_segment_fit_keeps_c1() {
        let r2 = Manifold::Euclidean(2);
        let samples: Vec<Sample> = (0..=20)
            .map(|i| {
                let t = i as f64 / 10.0;
                Sample::new(t, pt(&[t.cos(), (2.0 * t).sin()]))
            })
            .collect();
        let p = RegressionProblem::new(r2, SplineLayout::new(vec![3, 3], false).unwrap(), samples).unwrap();
        let r = fit(&p, &FitOptions::default()).unwrap();
        assert!(r.spline.is_valid(), "{:?}", r.spline.validate());
        assert!(r.energy_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.final_energy < r.energy_trace[0]);
    }
}
