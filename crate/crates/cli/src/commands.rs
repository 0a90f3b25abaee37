use std::fmt::Display;
use std::path::{Path, PathBuf};

use hierspline::hierarchy::{self, GeodesicOptions, MeanOptions};
use hierspline::regression::{self, StopReason, TimeMapping};
use hierspline::stats::{self, SyntheticSpec};
use hierspline::{BezierSpline, Execution, FitOptions, RegressionProblem, Sample, SplineLayout, SplineSpace};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::io::{self, Dataset, SampleRecord, SubjectRecord};
use crate::{DescriptorArgs, EvalArgs, FitArgs, MeanArgs, PairArgs, SynthArgs};

pub struct Progress {
    pub quiet: bool,
}

impl Progress {
    pub fn line(&self, msg: impl Display) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub degrees: Vec<usize>,
    pub closed: bool,
    pub subjects: Vec<FitEntry>,
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
pub struct FitEntry {
    pub id: String,
    pub file: String,
    pub final_energy: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub underdetermined: bool,
    pub time_offset: f64,
    pub time_scale: f64,
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueReport {
    pub subjects: Vec<String>,
    pub samples_per_segment: usize,
    pub rank: usize,
    pub eigenvalues: Vec<f64>,
}

pub fn fit(a: &FitArgs, progress: &Progress) -> Result<(), CliError> {
    let data = io::read_dataset(&a.dataset)?;
    let layout = SplineLayout::new(a.degrees.clone(), a.closed)?;
    layout.check_closure()?;
    if !(a.tol > 0.0) {
        return Err(CliError::Input(format!("--tol must be positive, got {}", a.tol)));
    }
    let mapping = if a.identity_times { TimeMapping::Identity } else { TimeMapping::Rescale };
    let problems = data
        .subjects
        .iter()
        .map(|s| {
            let samples = s
                .samples
                .iter()
                .map(|x| Sample::weighted(x.t, x.point.clone(), x.weight.unwrap_or(1.0)))
                .collect();
            RegressionProblem::with_time_mapping(data.manifold.clone(), layout.clone(), samples, mapping)
                .map_err(|e| CliError::Input(format!("subject {:?}: {e}", s.id)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let options = FitOptions { max_iter: a.max_iter, tol: a.tol, ..FitOptions::default() };
    progress.line(format!("fitting {} subjects", problems.len()));
    let results = regression::fit_batch(&problems, &options, Execution::Parallel);

    let mut entries = Vec::with_capacity(results.len());
    for (subject, result) in data.subjects.iter().zip(results) {
        let r = result.map_err(|e| {
            let e = CliError::from(e);
            match e {
                CliError::Input(m) => CliError::Input(format!("subject {:?}: {m}", subject.id)),
                CliError::NonConvergence(m) => CliError::NonConvergence(format!("subject {:?}: {m}", subject.id)),
            }
        })?;
        let file = format!("{}.json", subject.id);
        io::write_atomic(&a.out.join(&file), &io::to_json(&r.spline))?;
        progress.line(format!(
            "{}: energy {:.6e}, {} iterations, {:?}",
            subject.id, r.final_energy, r.iterations, r.stop_reason
        ));
        entries.push(FitEntry {
            id: subject.id.clone(),
            file,
            final_energy: r.final_energy,
            iterations: r.iterations,
            converged: r.converged,
            stop_reason: r.stop_reason,
            underdetermined: r.underdetermined,
            time_offset: r.time_offset,
            time_scale: r.time_scale,
        });
    }
    let failed: Vec<String> = entries.iter().filter(|e| !e.converged).map(|e| e.id.clone()).collect();
    let report = FitReport { degrees: a.degrees.clone(), closed: a.closed, subjects: entries };
    io::write_atomic(&a.out.join("fit_report.json"), &io::to_json(&report))?;
    if !failed.is_empty() {
        return Err(CliError::NonConvergence(format!("fit did not converge for {}", failed.join(", "))));
    }
    Ok(())
}

/// Reads splines and checks they share the first file's manifold and layout.
fn read_same_space(paths: &[PathBuf]) -> Result<Vec<BezierSpline>, CliError> {
    let splines = paths.iter().map(|p| io::read_spline(p)).collect::<Result<Vec<_>, _>>()?;
    if let Some(first) = splines.first() {
        let space = SplineSpace::of(first);
        for (path, s) in paths.iter().zip(&splines).skip(1) {
            space.check(s).map_err(|e| {
                CliError::Input(format!("{}: does not match {}: {e}", path.display(), paths[0].display()))
            })?;
        }
    }
    Ok(splines)
}

pub fn mean(a: &MeanArgs, progress: &Progress) -> Result<(), CliError> {
    let splines = read_same_space(&a.splines)?;
    let options = MeanOptions { n: a.n, max_iter: a.max_iter, tol: a.tol, ..MeanOptions::default() };
    progress.line(format!("mean of {} splines, n = {}", splines.len(), a.n));
    let result = hierarchy::mean_trajectory(&splines, &options)?;
    io::write_atomic(&a.out.join("mean.json"), &io::to_json(&result.mean))?;
    io::write_atomic(&a.out.join("mean_result.json"), &io::to_json(&result))?;
    progress.line(format!(
        "total energy {:.6e} after {} iterations",
        result.total_energy, result.iterations
    ));
    if !result.converged {
        return Err(CliError::NonConvergence(format!("mean not converged after {} iterations", result.iterations)));
    }
    Ok(())
}

fn pair(a: &PairArgs) -> Result<hierarchy::GeodesicResult, CliError> {
    let splines = read_same_space(&[a.first.clone(), a.second.clone()])?;
    let options = GeodesicOptions { max_sweeps: a.max_sweeps, ..GeodesicOptions::default() };
    Ok(hierarchy::discrete_geodesic(&splines[0], &splines[1], a.n, &options)?)
}

pub fn geodesic(a: &PairArgs, progress: &Progress) -> Result<(), CliError> {
    let g = pair(a)?;
    let json = io::to_json(&g.path);
    match &a.out {
        Some(path) => io::write_atomic(path, &json)?,
        None => print!("{}", String::from_utf8(json).expect("JSON is UTF-8")),
    }
    progress.line(format!("energy {:.6e} after {} sweeps", g.path.energy, g.sweeps));
    if !g.converged {
        return Err(CliError::NonConvergence(format!("geodesic not converged after {} sweeps", g.sweeps)));
    }
    Ok(())
}

pub fn distance(a: &PairArgs) -> Result<(), CliError> {
    if a.out.is_some() {
        return Err(CliError::Input("distance prints to stdout; --out is not supported".into()));
    }
    let g = pair(a)?;
    println!("{}", io::significant12(g.path.energy.max(0.0).sqrt()));
    if !g.converged {
        return Err(CliError::NonConvergence(format!("geodesic not converged after {} sweeps", g.sweeps)));
    }
    Ok(())
}

fn eigenvalue_path(out: &Path) -> PathBuf {
    out.with_file_name(format!("{}.eigenvalues.json", io::stem(out)))
}

pub fn descriptors(a: &DescriptorArgs, progress: &Progress) -> Result<(), CliError> {
    let mut paths = vec![a.mean.clone()];
    paths.extend(a.subjects.iter().cloned());
    let mut splines = read_same_space(&paths)?;
    let subjects = splines.split_off(1);
    let mean = &splines[0];
    let ids: Vec<String> = a.subjects.iter().map(|p| io::stem(p)).collect();
    let analysis = match stats::describe(mean, &subjects, a.samples_per_segment, Execution::Parallel) {
        Ok(x) => x,
        Err(e) => {
            // Name the offending file rather than its position.
            for (path, s) in a.subjects.iter().zip(&subjects) {
                if let Err(inner) = stats::trajectory_fields(mean, std::slice::from_ref(s), a.samples_per_segment, Execution::Sequential) {
                    return Err(CliError::Input(format!("{}: {inner}", path.display())));
                }
            }
            return Err(e.into());
        }
    };
    let modes = analysis.scores.ncols();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["subject_id".to_string()];
    header.extend((1..=modes).map(|l| format!("mode_{l}")));
    let csv_err = |e: csv::Error| CliError::Input(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for (s, id) in ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend((0..modes).map(|l| analysis.scores[(s, l)].to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
    io::write_atomic(&a.out, &bytes)?;
    let report = EigenvalueReport {
        subjects: ids,
        samples_per_segment: a.samples_per_segment,
        rank: analysis.rank,
        eigenvalues: analysis.eigenvalues.clone(),
    };
    io::write_atomic(&eigenvalue_path(&a.out), &io::to_json(&report))?;
    progress.line(format!("{} subjects, {} nonzero modes", subjects.len(), analysis.rank));
    Ok(())
}

fn equidistant(l: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..count).map(|i| (i as f64 * l / (count - 1) as f64).min(l)).collect(),
    }
}

pub fn synth(a: &SynthArgs, progress: &Progress) -> Result<(), CliError> {
    let truth = io::read_spline(&a.ground_truth)?;
    let times = match &a.times {
        Some(t) => t.clone(),
        None => equidistant(truth.domain_length(), a.samples),
    };
    if times.is_empty() {
        return Err(CliError::Input("need at least one observation time".into()));
    }
    let spec = SyntheticSpec {
        ground_truth: truth.clone(),
        noise_sigma: a.sigma,
        times,
        subjects: a.subjects,
        seed: a.seed,
    };
    let series = stats::synthesize(&spec, Execution::Parallel)?;
    let data = Dataset {
        manifold: truth.manifold().clone(),
        subjects: series
            .into_iter()
            .map(|s| SubjectRecord {
                id: s.id,
                samples: s.samples.into_iter().map(|(t, point)| SampleRecord { t, point, weight: None }).collect(),
            })
            .collect(),
    };
    io::write_atomic(&a.out, &io::to_json(&data))?;
    progress.line(format!("{} subjects written to {}", data.subjects.len(), a.out.display()));
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let spline = io::read_spline(&a.spline)?;
    let times = match (&a.t, a.grid) {
        (Some(t), _) => t.clone(),
        (None, Some(n)) => equidistant(spline.domain_length(), n),
        (None, None) => unreachable!("clap requires --t or --grid"),
    };
    let dim = spline.manifold().ambient_dim();
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Input(e.to_string());
    let mut header = vec!["t".to_string()];
    header.extend((1..=dim).map(|c| format!("x_{c}")));
    w.write_record(&header).map_err(csv_err)?;
    for t in times {
        let p = spline.eval(t).map_err(|e| CliError::Input(format!("t = {t}: {e}")))?;
        let mut row = vec![t.to_string()];
        row.extend(p.0.iter().map(|x| x.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
    match &a.out {
        Some(path) => io::write_atomic(path, &bytes)?,
        None => print!("{}", String::from_utf8(bytes).expect("CSV is UTF-8")),
    }
    Ok(())
}
