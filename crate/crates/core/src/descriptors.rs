//! Covariance descriptors and a seeded synthetic dataset generator.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::constraints::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{check_symmetric, sym_eigendecompose};
use crate::metric::FeatureSet;
use crate::scalar::{lit, Real};

/// Local feature vectors of one object.
#[derive(Clone, Debug, PartialEq)]
pub struct RawExample<T: Real> {
    pub vectors: Vec<DVector<T>>,
    pub label: String,
}

/// Unbiased sample covariance plus `εI`.
pub fn covariance_descriptor<T: Real>(ex: &RawExample<T>, epsilon: T) -> Result<DMatrix<T>> {
    let n = ex.vectors.len();
    if n < 2 {
        return Err(Error::Domain(format!("covariance needs at least 2 vectors, got {n}")));
    }
    let p = ex.vectors[0].len();
    if ex.vectors.iter().any(|v| v.len() != p) {
        return Err(Error::Dimension("feature vectors have differing lengths".into()));
    }
    if ex.vectors.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
        return Err(Error::NonFinite("feature vector".into()));
    }
    if !(epsilon > T::zero()) {
        return Err(Error::Domain(format!("jitter must be positive, got {epsilon:e}")));
    }
    let mean = ex
        .vectors
        .iter()
        .fold(DVector::zeros(p), |acc, v| acc + v)
        / lit::<T>(n as f64);
    let mut cov = DMatrix::zeros(p, p);
    for v in &ex.vectors {
        let c = v - &mean;
        cov.ger(T::one(), &c, &c, T::one());
    }
    cov /= lit::<T>((n - 1) as f64);
    for i in 0..p {
        cov[(i, i)] += epsilon;
    }
    Ok(cov)
}

/// Scale-relative jitter `1e-6 · tr(Σ)/p` (`1e-6` when the trace is zero).
pub fn default_epsilon<T: Real>(ex: &RawExample<T>) -> Result<T> {
    let tiny = lit::<T>(1e-6);
    let cov = covariance_descriptor(ex, tiny)?;
    let p = lit::<T>(cov.nrows() as f64);
    let scale = (cov.trace() - tiny * p) / p;
    Ok(if scale > T::zero() { tiny * scale } else { tiny })
}

/// Principal matrix logarithm of an SPD matrix.
pub fn matrix_log<T: Real>(s: &DMatrix<T>) -> Result<DMatrix<T>> {
    check_symmetric(s, "matrix_log argument")?;
    let eig = sym_eigendecompose(s)?;
    if let Some(&lo) = eig.values.iter().next() {
        if !(lo > T::zero()) {
            return Err(Error::Domain(format!(
                "matrix_log needs a positive definite argument (smallest eigenvalue {lo:e})"
            )));
        }
    }
    Ok(eig.map_spectrum(|x| x.ln()))
}

/// Matrix exponential of a symmetric matrix.
pub fn matrix_exp_sym<T: Real>(s: &DMatrix<T>) -> Result<DMatrix<T>> {
    Ok(sym_eigendecompose(s)?.map_spectrum(|x| x.exp()))
}

/// Parameters of the synthetic covariance-descriptor generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    /// Dimension `p` of the local feature vectors.
    pub dim: usize,
    /// How many of the `p` dimensions carry no class information.
    pub noise_dims: usize,
    pub samples_per_class: usize,
    pub vectors_per_example: usize,
    /// Spread of the class-specific log-variances.
    pub separation: f64,
    /// Emit a second descriptor from every other vector.
    pub multiscale: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 3,
            dim: 10,
            noise_dims: 5,
            samples_per_class: 40,
            vectors_per_example: 60,
            separation: 0.5,
            multiscale: false,
            seed: 0,
        }
    }
}

/// Per-example jitter of the informative log-variances.
const WITHIN_CLASS_SPREAD: f64 = 0.15;
/// Spread of the uninformative log-variances, shared by all classes.
const NOISE_SPREAD: f64 = 1.0;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.dim == 0 || self.samples_per_class == 0 {
            return Err(Error::Config("classes, dim and samples must be positive".into()));
        }
        if self.noise_dims > self.dim {
            return Err(Error::Config(format!(
                "noise_dims ({}) exceeds dim ({})",
                self.noise_dims, self.dim
            )));
        }
        let min_vectors = if self.multiscale { 4 } else { 2 };
        if self.vectors_per_example < min_vectors {
            return Err(Error::Config(format!(
                "need at least {min_vectors} vectors per example"
            )));
        }
        if !(self.separation >= 0.0) || !self.separation.is_finite() {
            return Err(Error::Config("separation must be a finite non-negative number".into()));
        }
        Ok(())
    }
}

/// Raw local-feature vectors for every synthetic example, class by class.
pub fn gen_synthetic_raw(cfg: &SynthConfig) -> Result<Vec<RawExample<f64>>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let informative = cfg.dim - cfg.noise_dims;

    let class_profiles: Vec<Vec<f64>> = (0..cfg.classes)
        .map(|_| {
            (0..informative)
                .map(|_| cfg.separation * std_normal.sample(&mut rng))
                .collect()
        })
        .collect();

    let mut out = Vec::with_capacity(cfg.classes * cfg.samples_per_class);
    for (c, profile) in class_profiles.iter().enumerate() {
        for _ in 0..cfg.samples_per_class {
            let scales: Vec<f64> = (0..cfg.dim)
                .map(|j| {
                    let log_var = if j < informative {
                        profile[j] + WITHIN_CLASS_SPREAD * std_normal.sample(&mut rng)
                    } else {
                        NOISE_SPREAD * std_normal.sample(&mut rng)
                    };
                    (0.5 * log_var).exp()
                })
                .collect();
            let vectors = (0..cfg.vectors_per_example)
                .map(|_| DVector::from_fn(cfg.dim, |j, _| scales[j] * std_normal.sample(&mut rng)))
                .collect();
            out.push(RawExample {
                vectors,
                label: format!("class{c}"),
            });
        }
    }
    Ok(out)
}

/// Log-covariance features of a raw example: one view, or two when
/// `multiscale` (the second from every other vector).
pub fn descriptor_features<T: Real>(ex: &RawExample<T>, multiscale: bool) -> Result<FeatureSet<T>> {
    let full = matrix_log(&covariance_descriptor(ex, default_epsilon(ex)?)?)?;
    let mut views = vec![full];
    if multiscale {
        let half = RawExample {
            vectors: ex.vectors.iter().step_by(2).cloned().collect(),
            label: ex.label.clone(),
        };
        views.push(matrix_log(&covariance_descriptor(&half, default_epsilon(&half)?)?)?);
    }
    FeatureSet::new(views)
}

/// Seeded dataset of log-covariance descriptors.
pub fn gen_synthetic_dataset<T: Real>(cfg: &SynthConfig) -> Result<LabeledDataset<T>> {
    let raw = gen_synthetic_raw(cfg)?;
    let mut examples = Vec::with_capacity(raw.len());
    let mut labels = Vec::with_capacity(raw.len());
    for ex in raw {
        let converted = RawExample {
            vectors: ex.vectors.iter().map(|v| v.map(lit::<T>)).collect(),
            label: ex.label,
        };
        examples.push(descriptor_features(&converted, cfg.multiscale)?);
        labels.push(converted.label);
    }
    LabeledDataset::new(examples, labels)
}
