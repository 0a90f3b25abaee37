//! File formats and atomic output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hierspline::{BezierSpline, Manifold, Point};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dataset {
    pub manifold: Manifold,
    pub subjects: Vec<SubjectRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectRecord {
    pub id: String,
    pub samples: Vec<SampleRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub t: f64,
    pub point: Point,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

impl Dataset {
    /// Ids unique and usable as file names, at least one sample per subject,
    /// finite times, every point on the manifold.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut seen = std::collections::BTreeSet::new();
        for (s, subject) in self.subjects.iter().enumerate() {
            let id = &subject.id;
            if id.is_empty() || id == "." || id == ".." || id.contains(['/', '\\']) {
                return Err(CliError::Input(format!("subject {s}: id {id:?} is not usable as a file name")));
            }
            if !seen.insert(id.as_str()) {
                return Err(CliError::Input(format!("subject {s}: duplicate id {id:?}")));
            }
            if subject.samples.is_empty() {
                return Err(CliError::Input(format!("subject {id:?}: no samples")));
            }
            for (j, sample) in subject.samples.iter().enumerate() {
                if !sample.t.is_finite() {
                    return Err(CliError::Input(format!("subject {id:?}, sample {j}: time is not finite")));
                }
                if let Some(w) = sample.weight {
                    if !(w >= 0.0) || !w.is_finite() {
                        return Err(CliError::Input(format!("subject {id:?}, sample {j}: weight {w} is not >= 0")));
                    }
                }
                self.manifold
                    .check_point(&sample.point)
                    .map_err(|e| CliError::Input(format!("subject {id:?}, sample {j}: {e}")))?;
            }
        }
        Ok(())
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn read_spline(path: &Path) -> Result<BezierSpline, CliError> {
    let spline: BezierSpline = read_json(path)?;
    let violations = spline.validate();
    if let Some(v) = violations.first() {
        return Err(CliError::Input(format!("{}: invalid spline: {v}", path.display())));
    }
    Ok(spline)
}

pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let data: Dataset = read_json(path)?;
    data.validate().map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok(data)
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("in-memory values serialize");
    bytes.push(b'\n');
    bytes
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Input(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(io_err)?;
    let mut tmp = NamedTempFile::new_in(&dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

/// File stem used as a subject id.
pub fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// `x` with 12 significant digits, fixed notation for moderate magnitudes.
pub fn significant12(x: f64) -> String {
    if x == 0.0 {
        return format!("{:.11}", 0.0);
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.11e}");
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-5..12).contains(&exp) {
        format!("{x:.*}", (11 - exp) as usize)
    } else {
        sci
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(significant12(1.0), "1.00000000000");
        assert_eq!(significant12(0.0), "0.00000000000");
        assert_eq!(significant12(0.123456789012345), "0.123456789012");
        assert_eq!(significant12(12345.678), "12345.6780000");
        assert_eq!(significant12(9.9999999999999), "10.0000000000");
        assert_eq!(significant12(1.5e-9), "1.50000000000e-9");
    }
}
