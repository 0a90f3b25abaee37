//! Trajectory descriptors and synthetic cohorts.
//!
//! Each subject trajectory is represented by its difference field to the
//! mean trajectory, `v_s(t) = log(B̄(t), B_s(t))`, sampled on a fixed grid.
//! Inner products of centered fields, integrated along the mean with the
//! trapezoid rule, form a Gram matrix whose eigendecomposition gives
//! principal modes and per-subject scores (kernel-style PGA). Only inner
//! products at the mean's footpoints are needed, so no parallel transport is
//! involved.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bezier::BezierSpline;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::hierarchy::SplineSpace;
use crate::manifold::{Point, Tangent};

/// Relative eigenvalue cutoff below which a mode is discarded.
pub const MODE_CUTOFF: f64 = 1e-12;

/// Difference fields of the subjects relative to the mean, sampled at shared
/// times.
#[derive(Clone, Debug)]
pub struct TrajectoryFields {
    pub times: Vec<f64>,
    /// `mean(tᵢ)`, the footpoints of the field vectors.
    pub base: Vec<Point>,
    /// `fields[s][i] = log(mean(tᵢ), B_s(tᵢ))`
    pub fields: Vec<Vec<Tangent>>,
}

/// `m·L` equidistant times covering `[0, L]`, endpoints included.
pub fn field_times(mean: &BezierSpline, samples_per_segment: usize) -> Result<Vec<f64>> {
    let count = samples_per_segment * mean.layout().num_segments();
    if count < 2 {
        return Err(Error::InvalidInput("need at least two field samples".into()));
    }
    let l = mean.domain_length();
    Ok((0..count)
        .map(|i| (i as f64 * l / (count - 1) as f64).min(l))
        .collect())
}

pub fn trajectory_fields(
    mean: &BezierSpline,
    subjects: &[BezierSpline],
    samples_per_segment: usize,
    execution: Execution,
) -> Result<TrajectoryFields> {
    let space = SplineSpace::of(mean);
    for (s, b) in subjects.iter().enumerate() {
        space
            .check(b)
            .map_err(|e| Error::StructureMismatch(format!("subject {s}: {e}")))?;
    }
    let times = field_times(mean, samples_per_segment)?;
    let base = times.iter().map(|&t| mean.eval(t)).collect::<Result<Vec<_>>>()?;
    let m = mean.manifold();
    let fields = exec::try_map(execution, subjects, |s, b| {
        times
            .iter()
            .zip(&base)
            .map(|(&t, p)| {
                m.log(p, &b.eval(t)?).map_err(|e| match e {
                    Error::Domain(msg) => Error::Domain(format!("subject {s} at t = {t}: {msg}")),
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(TrajectoryFields { times, base, fields })
}

/// Trapezoid weights for equidistant `times`; they sum to the covered length.
pub fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let h = (times[n - 1] - times[0]) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
        .collect()
}

/// `G_{ss'} = Σᵢ wᵢ ⟨v_{s,i} − v̄ᵢ, v_{s',i} − v̄ᵢ⟩` at the mean's footpoints,
/// with `v̄ᵢ` the average field vector at time `tᵢ`.
pub fn gram_matrix(
    mean: &BezierSpline,
    fields: &TrajectoryFields,
    weights: &[f64],
) -> Result<DMatrix<f64>> {
    let s_count = fields.fields.len();
    let t_count = fields.times.len();
    if weights.len() != t_count {
        return Err(Error::InvalidInput(format!("{} weights for {t_count} sample times", weights.len())));
    }
    if let Some(s) = fields.fields.iter().position(|f| f.len() != t_count) {
        return Err(Error::InvalidInput(format!("subject {s} field has the wrong length")));
    }
    let m = mean.manifold();
    let mut g = DMatrix::zeros(s_count, s_count);
    if s_count == 0 {
        return Ok(g);
    }
    for i in 0..t_count {
        let mut avg = m.zero_tangent();
        for f in &fields.fields {
            avg.axpy(1.0 / s_count as f64, &f[i]);
        }
        let centered: Vec<Tangent> = fields
            .fields
            .iter()
            .map(|f| {
                let mut v = f[i].clone();
                v.axpy(-1.0, &avg);
                v
            })
            .collect();
        for a in 0..s_count {
            for b in a..s_count {
                let x = weights[i] * m.inner(&fields.base[i], &centered[a], &centered[b])?;
                g[(a, b)] += x;
                if a != b {
                    g[(b, a)] += x;
                }
            }
        }
    }
    Ok(g)
}

#[derive(Clone, Debug)]
pub struct GramAnalysis {
    pub gram: DMatrix<f64>,
    /// Full spectrum, descending.
    pub eigenvalues: Vec<f64>,
    /// `S × (S−1)`; column `ℓ` holds `√λ_ℓ · u_ℓ`, zero for dropped modes.
    pub scores: DMatrix<f64>,
    /// Number of modes above the cutoff.
    pub rank: usize,
}

/// Eigendecomposition of a centered Gram matrix into PGA scores.
///
/// Eigenvector signs are fixed so that each mode's largest-magnitude entry
/// (first one on ties) is positive.
pub fn pga_scores(gram: &DMatrix<f64>) -> Result<GramAnalysis> {
    let n = gram.nrows();
    if gram.ncols() != n {
        return Err(Error::InvalidInput("Gram matrix must be square".into()));
    }
    let scale = gram.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    for a in 0..n {
        for b in (a + 1)..n {
            if (gram[(a, b)] - gram[(b, a)]).abs() > 1e-10 * (1.0 + scale) {
                return Err(Error::InvalidInput(format!("Gram matrix not symmetric at ({a}, {b})")));
            }
        }
    }
    let eig = SymmetricEigen::new(gram.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let lmax = eigenvalues.first().copied().unwrap_or(0.0);
    if eigenvalues.last().is_some_and(|&l| l < -1e-8 * (1.0 + lmax.abs())) {
        return Err(Error::InvalidInput("Gram matrix is not positive semidefinite".into()));
    }
    let modes = n.saturating_sub(1);
    let mut scores = DMatrix::zeros(n, modes);
    let mut rank = 0;
    for (l, &k) in order.iter().take(modes).enumerate() {
        let lambda = eigenvalues[l];
        if !(lmax > 0.0) || lambda < MODE_CUTOFF * lmax {
            break;
        }
        rank += 1;
        let mut u = eig.eigenvectors.column(k).into_owned();
        let pivot = (0..n)
            .reduce(|a, b| if u[b].abs() > u[a].abs() { b } else { a })
            .unwrap_or(0);
        if u[pivot] < 0.0 {
            u.neg_mut();
        }
        let r = lambda.sqrt();
        for s in 0..n {
            scores[(s, l)] = r * u[s];
        }
    }
    Ok(GramAnalysis { gram: gram.clone(), eigenvalues, scores, rank })
}

/// Fields, Gram matrix and scores in one go.
pub fn describe(
    mean: &BezierSpline,
    subjects: &[BezierSpline],
    samples_per_segment: usize,
    execution: Execution,
) -> Result<GramAnalysis> {
    let fields = trajectory_fields(mean, subjects, samples_per_segment, execution)?;
    let w = trapezoid_weights(&fields.times);
    pga_scores(&gram_matrix(mean, &fields, &w)?)
}

/// One subject's time-stamped observations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectSeries {
    pub id: String,
    pub samples: Vec<(f64, Point)>,
}

#[derive(Clone, Debug)]
pub struct SyntheticSpec {
    pub ground_truth: BezierSpline,
    pub noise_sigma: f64,
    /// Observation times (spline parameters), shared by all subjects.
    pub times: Vec<f64>,
    pub subjects: usize,
    pub seed: u64,
}

/// Observations `exp(B(t), ε)` with `ε` isotropic Gaussian in an orthonormal
/// tangent basis. Subject `s` draws from its own ChaCha stream `s` under the
/// given seed, so output does not depend on execution order.
pub fn synthesize(spec: &SyntheticSpec, execution: Execution) -> Result<Vec<SubjectSeries>> {
    let sigma = spec.noise_sigma;
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidInput(format!("noise sigma {sigma} must be >= 0")));
    }
    let m = spec.ground_truth.manifold();
    if let Some(guard) = m.injectivity_guard() {
        if sigma >= guard {
            return Err(Error::Domain(format!("noise sigma {sigma} exceeds the injectivity guard {guard}")));
        }
    }
    let clean = spec
        .times
        .iter()
        .map(|&t| spec.ground_truth.eval(t))
        .collect::<Result<Vec<_>>>()?;
    let bases = clean.iter().map(|p| m.tangent_basis(p)).collect::<Result<Vec<_>>>()?;
    let ids: Vec<usize> = (0..spec.subjects).collect();
    exec::try_map(execution, &ids, |_, &s| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(s as u64);
        let mut samples = Vec::with_capacity(spec.times.len());
        for ((&t, p), basis) in spec.times.iter().zip(&clean).zip(&bases) {
            let mut eps = m.zero_tangent();
            for e in basis {
                let z: f64 = StandardNormal.sample(&mut rng);
                eps.axpy(sigma * z, e);
            }
            samples.push((t, if sigma == 0.0 { p.clone() } else { m.exp(p, &eps)? }));
        }
        Ok(SubjectSeries { id: format!("subject_{s:03}"), samples })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bezier::SplineLayout;
    use crate::manifold::Manifold;
    use approx::assert_abs_diff_eq;

    fn constant(x: f64) -> BezierSpline {
        BezierSpline::new(Manifold::Euclidean(1), SplineLayout::new(vec![1], false).unwrap(), vec![Point(vec![x]); 2]).unwrap()
    }

    #[test]
    fn fields_vanish_for_the_mean_itself() {
        let mean = constant(0.5);
        let f = trajectory_fields(&mean, &[mean.clone(), constant(1.5)], 5, Execution::Sequential).unwrap();
        assert_eq!(f.times.len(), 5);
        assert!(f.fields[0].iter().all(Tangent::is_zero));
        assert!(f.fields[1].iter().all(|v| v.0 == vec![1.0]));
    }

    #[test]
    fn gram_of_plus_minus_constants() {
        let c = 0.7;
        let mean = constant(0.0);
        let f = trajectory_fields(&mean, &[constant(c), constant(-c)], 5, Execution::Sequential).unwrap();
        let w = trapezoid_weights(&f.times);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        let g = gram_matrix(&mean, &f, &w).unwrap();
        let c2 = c * c;
        for (x, y) in g.iter().zip([c2, -c2, -c2, c2]) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-14);
        }
        let a = pga_scores(&g).unwrap();
        assert_eq!(a.rank, 1);
        assert_eq!(a.scores.shape(), (2, 1));
        assert_abs_diff_eq!(a.scores[(0, 0)].abs(), c, epsilon = 1e-12);
        assert_abs_diff_eq!(a.scores[(0, 0)], -a.scores[(1, 0)], epsilon = 1e-12);
    }

    #[test]
    fn zero_gram_gives_zero_scores() {
        let a = pga_scores(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(a.rank, 0);
        assert_eq!(a.eigenvalues, vec![0.0; 3]);
        assert_eq!(a.scores, DMatrix::zeros(3, 2));
    }

    #[test]
    fn asymmetric_gram_is_rejected() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(pga_scores(&g).is_err());
    }

    #[test]
    fn synthesis_is_seeded() {
        let gt = constant(0.0);
        let spec = SyntheticSpec { ground_truth: gt.clone(), noise_sigma: 0.1, times: vec![0.0, 0.5, 1.0], subjects: 3, seed: 9 };
        let a = synthesize(&spec, Execution::Parallel).unwrap();
        let b = synthesize(&spec, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].samples, a[1].samples);
        let clean = synthesize(&SyntheticSpec { noise_sigma: 0.0, ..spec }, Execution::Sequential).unwrap();
        assert!(clean.iter().all(|s| s.samples.iter().all(|(_, p)| p.0 == vec![0.0])));
    }
}
