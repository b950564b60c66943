//! JSON dataset and model files.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use tatml::linalg::{asymmetry, symmetrize};
use tatml::{FeatureSet64, LabeledDataset64, MetricParams64, Mode};

use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileHeader {
    #[serde(rename = "M")]
    pub m: usize,
    pub dims: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub label: String,
    /// One row-major nested array per view.
    pub features: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub profile: ProfileHeader,
    pub examples: Vec<ExampleRecord>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], shape: (usize, usize), what: &str) -> Result<DMatrix<f64>, CliError> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(CliError::Format(format!(
            "{what}: expected a {}x{} array, got {} rows with lengths {:?}",
            shape.0,
            shape.1,
            rows.len(),
            rows.iter().map(|r| r.len()).collect::<Vec<_>>()
        )));
    }
    Ok(DMatrix::from_fn(shape.0, shape.1, |i, j| rows[i][j]))
}

impl DatasetFile {
    pub fn from_dataset(data: &LabeledDataset64) -> Self {
        Self {
            profile: ProfileHeader {
                m: data.profile().len(),
                dims: data.profile().clone(),
            },
            examples: data
                .examples()
                .iter()
                .zip(data.labels())
                .map(|(x, label)| ExampleRecord {
                    label: label.clone(),
                    features: x.views().iter().map(to_rows).collect(),
                })
                .collect(),
        }
    }

    pub fn to_dataset(&self) -> Result<LabeledDataset64, CliError> {
        if self.profile.m != self.profile.dims.len() || self.profile.m == 0 {
            return Err(CliError::Format(format!(
                "profile declares M = {} with {} dims entries",
                self.profile.m,
                self.profile.dims.len()
            )));
        }
        let mut examples = Vec::with_capacity(self.examples.len());
        for (i, ex) in self.examples.iter().enumerate() {
            if ex.features.len() != self.profile.m {
                return Err(CliError::Format(format!(
                    "example {i} has {} views, profile has {}",
                    ex.features.len(),
                    self.profile.m
                )));
            }
            let views = ex
                .features
                .iter()
                .zip(&self.profile.dims)
                .enumerate()
                .map(|(m, (rows, &shape))| from_rows(rows, shape, &format!("example {i} view {m}")))
                .collect::<Result<Vec<_>, _>>()?;
            examples.push(FeatureSet64::new(views)?);
        }
        let labels = self.examples.iter().map(|e| e.label.clone()).collect();
        Ok(LabeledDataset64::new(examples, labels)?)
    }
}

/// How the stored metric was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelMode {
    Tatml,
    Maz { b_ub: f64, b_lb: f64 },
    Euc,
}

impl ModelMode {
    pub fn solver_mode(self) -> Option<Mode> {
        match self {
            ModelMode::Tatml => Some(Mode::AutoTune),
            ModelMode::Maz { b_ub, b_lb } => Some(Mode::FixedThreshold { b_ub, b_lb }),
            ModelMode::Euc => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub c: f64,
    pub c0: f64,
    pub mu0: f64,
    pub mode: ModelMode,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(rename = "W")]
    pub w: Vec<Vec<Vec<f64>>>,
    pub b0: Option<f64>,
    pub xi: Vec<f64>,
    pub config: ModelConfig,
    pub converged: bool,
    pub format_version: u32,
}

/// Asymmetry accepted when loading a stored metric.
const LOAD_SYMMETRY_TOL: f64 = 1e-8;

impl ModelFile {
    pub fn new(w: &MetricParams64, b0: Option<f64>, xi: Vec<f64>, config: ModelConfig, converged: bool) -> Self {
        Self {
            w: w.matrices().iter().map(to_rows).collect(),
            b0,
            xi,
            config,
            converged,
            format_version: FORMAT_VERSION,
        }
    }

    pub fn metric(&self) -> Result<MetricParams64, CliError> {
        if self.format_version != FORMAT_VERSION {
            return Err(CliError::Format(format!(
                "unsupported model format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let mut mats = Vec::with_capacity(self.w.len());
        for (m, rows) in self.w.iter().enumerate() {
            let n = rows.len();
            let w = from_rows(rows, (n, n), &format!("W[{m}]"))?;
            let gap = asymmetry(&w);
            if gap > LOAD_SYMMETRY_TOL {
                return Err(CliError::Format(format!("W[{m}] is not symmetric (max gap {gap:e})")));
            }
            mats.push(symmetrize(&w));
        }
        Ok(MetricParams64::new(mats)?)
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    fs::write(path, to_json(value)).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
