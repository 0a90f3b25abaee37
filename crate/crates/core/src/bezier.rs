//! Manifold-valued Bézier curves and C¹ Bézier splines.
//!
//! A spline with segments of degrees `k₀,…,k_{L−1}` lives on `[0, L]`, one
//! unit interval per segment. It is stored through its `K+1` distinct control
//! points: junction points shared by neighbouring segments appear once, and a
//! closed spline additionally drops the first point, which coincides with the
//! last. [`SplineLayout`] does the index bookkeeping between that canonical
//! list and per-segment views.
//!
//! C¹ smoothness at the junction between segments `i` and `i+1` requires
//! `γ(kᵢ/(kᵢ+kᵢ₊₁); p⁽ⁱ⁾_{kᵢ−1}, p⁽ⁱ⁺¹⁾₁) = p⁽ⁱ⁺¹⁾₀`. For closed splines the
//! same condition is applied cyclically across the seam between the last and
//! the first segment.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{Manifold, Point};

/// Deviation (geodesic distance) tolerated by [`BezierSpline::validate`].
pub const JUNCTION_TOL: f64 = 1e-6;

/// Generalized de Casteljau evaluation of the Bézier curve with the given
/// control points at `t ∈ [0, 1]`.
pub fn de_casteljau(manifold: &Manifold, t: f64, control: &[Point]) -> Result<Point> {
    if control.is_empty() {
        return Err(Error::InvalidInput("Bézier curve needs at least one control point".into()));
    }
    let mut work = control.to_vec();
    let k = work.len() - 1;
    for level in 1..=k {
        for i in 0..=(k - level) {
            work[i] = manifold.geodesic(t, &work[i], &work[i + 1])?;
        }
    }
    work.truncate(1);
    Ok(work.pop().expect("nonempty"))
}

/// A dependent junction point and the two neighbours that determine it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Junction {
    /// Index of the segment to the right of the junction.
    pub segment: usize,
    pub point: usize,
    pub left: usize,
    pub right: usize,
    /// `k_left / (k_left + k_right)`
    pub weight: f64,
}

/// Segment degrees and the closed flag: the combinatorial structure of a
/// spline, independent of the manifold.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplineLayout {
    degrees: Vec<usize>,
    closed: bool,
}

impl SplineLayout {
    pub fn new(degrees: Vec<usize>, closed: bool) -> Result<Self> {
        if degrees.is_empty() {
            return Err(Error::InvalidInput("a spline needs at least one segment".into()));
        }
        if let Some(i) = degrees.iter().position(|&k| k == 0) {
            return Err(Error::InvalidInput(format!("segment {i} has degree 0")));
        }
        if closed && degrees.iter().sum::<usize>() < 2 {
            return Err(Error::InvalidInput("closed spline needs total degree >= 2".into()));
        }
        Ok(SplineLayout { degrees, closed })
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn closed(&self) -> bool {
        self.closed
    }

    pub fn num_segments(&self) -> usize {
        self.degrees.len()
    }

    /// Domain length `L`.
    pub fn domain_length(&self) -> f64 {
        self.degrees.len() as f64
    }

    fn total_degree(&self) -> usize {
        self.degrees.iter().sum()
    }

    /// `K`: `Σkᵢ` for open splines, `Σkᵢ − 1` for closed ones.
    pub fn k(&self) -> usize {
        if self.closed {
            self.total_degree() - 1
        } else {
            self.total_degree()
        }
    }

    pub fn num_points(&self) -> usize {
        self.k() + 1
    }

    /// Maps a position in the concatenated per-segment sequence
    /// `0..=Σkᵢ` onto the distinct control point list.
    fn distinct_index(&self, global: usize) -> usize {
        if self.closed {
            let n = self.total_degree();
            (global + n - 1) % n
        } else {
            global
        }
    }

    fn segment_start(&self, segment: usize) -> usize {
        self.degrees[..segment].iter().sum()
    }

    /// Distinct control point indices of segment `i`, in curve order.
    pub fn segment_indices(&self, segment: usize) -> Vec<usize> {
        let start = self.segment_start(segment);
        (start..=start + self.degrees[segment])
            .map(|g| self.distinct_index(g))
            .collect()
    }

    /// The junction points that the C¹ condition ties to their neighbours:
    /// interior junctions, plus the seam of a closed spline.
    pub fn junctions(&self) -> Vec<Junction> {
        let l = self.num_segments();
        let segs: Vec<usize> = if self.closed { (0..l).collect() } else { (1..l).collect() };
        segs.into_iter()
            .map(|seg| {
                let prev = (seg + l - 1) % l;
                let g = self.segment_start(seg);
                let n = self.total_degree();
                let (kl, kr) = (self.degrees[prev], self.degrees[seg]);
                Junction {
                    segment: seg,
                    point: self.distinct_index(g),
                    left: self.distinct_index((g + n - 1) % n),
                    right: self.distinct_index(g + 1),
                    weight: kl as f64 / (kl + kr) as f64,
                }
            })
            .collect()
    }

    /// Indices of control points not determined by a C¹ condition.
    pub fn free_indices(&self) -> Vec<usize> {
        let dependent: Vec<usize> = self.junctions().iter().map(|j| j.point).collect();
        (0..self.num_points()).filter(|i| !dependent.contains(i)).collect()
    }

    /// Whether every dependent junction is determined by free points alone,
    /// so that the free points parametrize the C¹ splines of this layout.
    /// Fails when a degree-1 segment sits between two junctions.
    pub fn check_parametrizable(&self) -> Result<()> {
        let js = self.junctions();
        let dependent: Vec<usize> = js.iter().map(|j| j.point).collect();
        for j in &js {
            if dependent.contains(&j.left) || dependent.contains(&j.right) {
                return Err(Error::InvalidInput(format!(
                    "junction at segment {} depends on another junction; \
                     degree-1 segments between junctions are not supported",
                    j.segment
                )));
            }
        }
        Ok(())
    }

    /// Closed splines need at least two segments and first and last segments
    /// of degree at least 3.
    pub fn check_closure(&self) -> Result<()> {
        if !self.closed {
            return Ok(());
        }
        let l = self.degrees.len();
        if l < 2 {
            return Err(Error::InvalidInput("closed splines need at least 2 segments".into()));
        }
        for seg in [0, l - 1] {
            if self.degrees[seg] < 3 {
                return Err(Error::InvalidInput(format!(
                    "closed splines need cubic or higher end segments; segment {seg} has degree {}",
                    self.degrees[seg]
                )));
            }
        }
        Ok(())
    }

    /// `iL/K` for `i = 0,…,K`.
    pub fn sample_times(&self) -> Vec<f64> {
        let k = self.k();
        let l = self.domain_length();
        if k == 0 {
            return vec![0.0];
        }
        (0..=k).map(|i| i as f64 * l / k as f64).collect()
    }

    /// Recompute dependent junction points from their neighbours.
    pub fn reconstruct_junctions(&self, manifold: &Manifold, points: &mut [Point]) -> Result<()> {
        for j in self.junctions() {
            points[j.point] = manifold.geodesic(j.weight, &points[j.left], &points[j.right])?;
        }
        Ok(())
    }

    /// Like [`SplineLayout::reconstruct_junctions`], but only touches
    /// junctions whose C¹ deviation exceeds `tol`.
    pub fn repair_junctions(&self, manifold: &Manifold, points: &mut [Point], tol: f64) -> Result<()> {
        for j in self.junctions() {
            let target = manifold.geodesic(j.weight, &points[j.left], &points[j.right])?;
            if manifold.dist(&target, &points[j.point])? > tol {
                points[j.point] = target;
            }
        }
        Ok(())
    }
}

/// Collapse per-segment control point lists into the distinct list, checking
/// that consecutive segments share their junction point (and, for closed
/// splines, that the last segment ends where the first begins).
pub fn distinct_control_points(
    manifold: &Manifold,
    segments: &[Vec<Point>],
    closed: bool,
) -> Result<Vec<Point>> {
    if segments.is_empty() {
        return Err(Error::InvalidInput("no segments".into()));
    }
    for (i, s) in segments.iter().enumerate() {
        if s.len() < 2 {
            return Err(Error::InvalidInput(format!("segment {i} has fewer than 2 control points")));
        }
    }
    let shared_tol = 1e-9;
    let mut out: Vec<Point> = segments[0].clone();
    for (i, s) in segments.iter().enumerate().skip(1) {
        let d = manifold.dist(out.last().expect("nonempty"), &s[0])?;
        if d > shared_tol {
            return Err(Error::InvalidInput(format!(
                "segments {} and {i} do not share their junction point (gap {d:e})",
                i - 1
            )));
        }
        out.extend_from_slice(&s[1..]);
    }
    if closed {
        let d = manifold.dist(&out[0], out.last().expect("nonempty"))?;
        if d > shared_tol {
            return Err(Error::InvalidInput(format!("closed spline does not close (gap {d:e})")));
        }
        out.remove(0);
    }
    Ok(out)
}

/// A C¹ condition or closure rule that a spline fails.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    /// Deviation of the junction in front of `segment` from its C¹ position;
    /// segment 0 denotes the seam of a closed spline.
    Junction { segment: usize, deviation: f64 },
    ClosedTooFewSegments { segments: usize },
    ClosedEndDegree { segment: usize, degree: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Junction { segment, deviation } => write!(
                f,
                "C1 condition violated at junction before segment {segment} (deviation {deviation:e})"
            ),
            Violation::ClosedTooFewSegments { segments } => {
                write!(f, "closed spline needs more than one segment, has {segments}")
            }
            Violation::ClosedEndDegree { segment, degree } => write!(
                f,
                "closed spline needs cubic or higher end segments; segment {segment} has degree {degree}"
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BezierSpline {
    manifold: Manifold,
    degrees: Vec<usize>,
    closed: bool,
    control_points: Vec<Point>,
    #[serde(skip)]
    layout: SplineLayout,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SplineRepr {
    manifold: Manifold,
    degrees: Vec<usize>,
    closed: bool,
    control_points: Vec<Point>,
}

impl<'de> Deserialize<'de> for BezierSpline {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = SplineRepr::deserialize(d)?;
        let layout = SplineLayout::new(r.degrees, r.closed).map_err(serde::de::Error::custom)?;
        BezierSpline::new(r.manifold, layout, r.control_points).map_err(serde::de::Error::custom)
    }
}

impl BezierSpline {
    /// Build a spline from its distinct control points. Checks the point
    /// count and that every point lies on the manifold; C¹ and closure rules
    /// are reported by [`BezierSpline::validate`].
    pub fn new(manifold: Manifold, layout: SplineLayout, control_points: Vec<Point>) -> Result<Self> {
        if control_points.len() != layout.num_points() {
            return Err(Error::InvalidInput(format!(
                "layout {:?} (closed: {}) needs {} control points, got {}",
                layout.degrees,
                layout.closed,
                layout.num_points(),
                control_points.len()
            )));
        }
        for (i, p) in control_points.iter().enumerate() {
            manifold
                .check_point(p)
                .map_err(|e| match e {
                    Error::InvalidPoint(msg) => Error::InvalidPoint(format!("control point {i}: {msg}")),
                    other => other,
                })?;
        }
        Ok(BezierSpline {
            manifold,
            degrees: layout.degrees.clone(),
            closed: layout.closed,
            control_points,
            layout,
        })
    }

    /// Build from per-segment control point lists.
    pub fn from_segments(manifold: Manifold, segments: &[Vec<Point>], closed: bool) -> Result<Self> {
        let degrees = segments.iter().map(|s| s.len().saturating_sub(1)).collect();
        let points = distinct_control_points(&manifold, segments, closed)?;
        BezierSpline::new(manifold, SplineLayout::new(degrees, closed)?, points)
    }

    /// Build from the free control points (see [`SplineLayout::free_indices`])
    /// with every junction placed by the C¹ condition. `points` must hold
    /// `K+1` entries; those at dependent positions are overwritten.
    pub fn with_c1_junctions(manifold: Manifold, layout: SplineLayout, mut points: Vec<Point>) -> Result<Self> {
        layout.check_parametrizable()?;
        if points.len() != layout.num_points() {
            return Err(Error::InvalidInput(format!(
                "expected {} control points, got {}",
                layout.num_points(),
                points.len()
            )));
        }
        layout.reconstruct_junctions(&manifold, &mut points)?;
        BezierSpline::new(manifold, layout, points)
    }

    /// Same layout and manifold, new control points.
    pub fn with_points(&self, control_points: Vec<Point>) -> Result<Self> {
        BezierSpline::new(self.manifold.clone(), self.layout.clone(), control_points)
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn layout(&self) -> &SplineLayout {
        &self.layout
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn closed(&self) -> bool {
        self.closed
    }

    pub fn control_points(&self) -> &[Point] {
        &self.control_points
    }

    pub fn domain_length(&self) -> f64 {
        self.layout.domain_length()
    }

    pub fn segment(&self, i: usize) -> Vec<Point> {
        self.layout
            .segment_indices(i)
            .into_iter()
            .map(|j| self.control_points[j].clone())
            .collect()
    }

    /// Per-segment control point lists (junction points repeated).
    pub fn segments(&self) -> Vec<Vec<Point>> {
        (0..self.layout.num_segments()).map(|i| self.segment(i)).collect()
    }

    /// Evaluate on `[0, L]`; segment `min(⌊t⌋, L−1)` at local parameter
    /// `t − i`. Closed splines accept any real `t`, taken modulo `L`.
    pub fn eval(&self, t: f64) -> Result<Point> {
        let l = self.domain_length();
        if !t.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite spline parameter {t}")));
        }
        let t = if self.closed {
            t.rem_euclid(l)
        } else {
            if !(0.0..=l).contains(&t) {
                return Err(Error::Domain(format!("t = {t} outside spline domain [0, {l}]")));
            }
            t
        };
        let seg = (t.floor() as usize).min(self.layout.num_segments() - 1);
        let local = t - seg as f64;
        let idx = self.layout.segment_indices(seg);
        let control: Vec<Point> = idx.into_iter().map(|j| self.control_points[j].clone()).collect();
        de_casteljau(&self.manifold, local, &control)
    }

    /// All violated C¹ and closure conditions; empty for a valid spline.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let l = self.layout.num_segments();
        if self.closed {
            if l < 2 {
                out.push(Violation::ClosedTooFewSegments { segments: l });
            }
            for seg in [0, l - 1] {
                let k = self.degrees[seg];
                if k < 3 && !out.contains(&Violation::ClosedEndDegree { segment: seg, degree: k }) {
                    out.push(Violation::ClosedEndDegree { segment: seg, degree: k });
                }
            }
        }
        for j in self.layout.junctions() {
            let p = &self.control_points;
            let deviation = self
                .manifold
                .geodesic(j.weight, &p[j.left], &p[j.right])
                .and_then(|target| self.manifold.dist(&target, &p[j.point]))
                .unwrap_or(f64::INFINITY);
            if !(deviation <= JUNCTION_TOL) {
                out.push(Violation::Junction { segment: j.segment, deviation });
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }
}
