//! Feature sets, Mahalanobis parameter tuples, the parametric distance and
//! the Bregman divergences used for regularization.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Error, Result};
use crate::linalg::{check_symmetric, max_abs, spd_inverse_logdet, symmetrize};
use crate::scalar::{lit, tol, Real};
use crate::threshold::GramOperator;

/// Shape profile of a feature tuple: `(n_m, n'_m)` per view.
pub type Profile = Vec<(usize, usize)>;

/// The `M` feature matrices extracted from one example.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet<T: Real> {
    features: Vec<DMatrix<T>>,
}

impl<T: Real> FeatureSet<T> {
    pub fn new(features: Vec<DMatrix<T>>) -> Result<Self> {
        if features.is_empty() {
            return dim_err("a feature set needs at least one matrix");
        }
        for (m, f) in features.iter().enumerate() {
            if f.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("feature matrix {m}")));
            }
        }
        Ok(Self { features })
    }

    /// Single-view feature set from a column vector.
    pub fn from_vector(v: &[T]) -> Result<Self> {
        Self::new(vec![DMatrix::from_column_slice(v.len(), 1, v)])
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn view(&self, m: usize) -> &DMatrix<T> {
        &self.features[m]
    }

    pub fn views(&self) -> &[DMatrix<T>] {
        &self.features
    }

    pub fn profile(&self) -> Profile {
        self.features.iter().map(|f| f.shape()).collect()
    }

    /// Per-view differences `Φ_m(self) − Φ_m(other)`.
    pub fn difference(&self, other: &Self) -> Result<Vec<DMatrix<T>>> {
        if self.profile() != other.profile() {
            return dim_err(format!(
                "feature profiles differ: {:?} vs {:?}",
                self.profile(),
                other.profile()
            ));
        }
        Ok(self
            .features
            .iter()
            .zip(&other.features)
            .map(|(a, b)| a - b)
            .collect())
    }
}

/// The tuple `(W_1, …, W_M)` of strictly positive definite matrices, kept
/// together with the inverses the projection updates act on.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricParams<T: Real> {
    matrices: Vec<DMatrix<T>>,
    inverses: Vec<DMatrix<T>>,
}

impl<T: Real> MetricParams<T> {
    /// Validates symmetry and positive definiteness and caches inverses.
    pub fn new(matrices: Vec<DMatrix<T>>) -> Result<Self> {
        if matrices.is_empty() {
            return dim_err("metric needs at least one matrix");
        }
        let mut inverses = Vec::with_capacity(matrices.len());
        for (m, w) in matrices.iter().enumerate() {
            check_symmetric(w, &format!("W_{m}"))?;
            let (inv, _) = spd_inverse_logdet(w, &format!("W_{m}"))?;
            inverses.push(inv);
        }
        Ok(Self { matrices, inverses })
    }

    /// Identity matrices sized by the row counts of `profile`.
    pub fn identity(profile: &[(usize, usize)]) -> Self {
        let matrices: Vec<_> = profile
            .iter()
            .map(|&(n, _)| DMatrix::identity(n, n))
            .collect();
        Self {
            inverses: matrices.clone(),
            matrices,
        }
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn matrix(&self, m: usize) -> &DMatrix<T> {
        &self.matrices[m]
    }

    pub fn matrices(&self) -> &[DMatrix<T>] {
        &self.matrices
    }

    pub fn inverse(&self, m: usize) -> &DMatrix<T> {
        &self.inverses[m]
    }

    pub fn inverses(&self) -> &[DMatrix<T>] {
        &self.inverses
    }

    /// Side lengths `n_m`.
    pub fn dims(&self) -> Vec<usize> {
        self.matrices.iter().map(|w| w.nrows()).collect()
    }

    /// Whether the metric can act on features with this profile.
    pub fn accepts(&self, profile: &[(usize, usize)]) -> bool {
        profile.len() == self.len() && profile.iter().zip(self.dims()).all(|(p, n)| p.0 == n)
    }

    /// `max_m ‖W_m W_m⁻¹ − I‖∞`.
    pub fn inverse_error(&self) -> T {
        self.matrices
            .iter()
            .zip(&self.inverses)
            .map(|(w, inv)| {
                let n = w.nrows();
                max_abs(&(w * inv - DMatrix::identity(n, n)))
            })
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// Applies `W_m⁻¹ ← W_m⁻¹ + β V Vᵀ` and the matching Woodbury update
    /// `W_m ← W_m − β W_m V (I + β VᵀW_m V)⁻¹ VᵀW_m`.
    ///
    /// Fails without touching `self` when `I + β VᵀW V` is not positive
    /// definite, which is exactly when the updated inverse would leave the
    /// SPD cone.
    pub fn rank_update(&mut self, m: usize, v: &DMatrix<T>, beta: T) -> Result<()> {
        if beta == T::zero() {
            return Ok(());
        }
        let w = &self.matrices[m];
        if v.nrows() != w.nrows() {
            return dim_err(format!(
                "factor has {} rows, W_{m} is {}x{}",
                v.nrows(),
                w.nrows(),
                w.ncols()
            ));
        }
        let wv = w * v;
        let r = v.ncols();
        let core = DMatrix::identity(r, r) + (v.transpose() * &wv) * beta;
        let chol = symmetrize(&core).cholesky().ok_or_else(|| {
            Error::Numeric(format!(
                "rank update of W_{m} with beta={beta:e} leaves the positive definite cone"
            ))
        })?;
        let solved = chol.solve(&wv.transpose());
        let new_w = symmetrize(&(w - (&wv * solved) * beta));
        let new_inv = symmetrize(&(&self.inverses[m] + (v * v.transpose()) * beta));
        self.matrices[m] = new_w;
        self.inverses[m] = new_inv;
        Ok(())
    }

    /// Recomputes every `W_m` from its inverse, discarding drift accumulated
    /// by repeated low-rank updates.
    pub fn resync_from_inverses(&mut self) -> Result<()> {
        for m in 0..self.len() {
            let (w, _) = spd_inverse_logdet(&self.inverses[m], &format!("W_{m}^-1"))?;
            self.matrices[m] = w;
        }
        Ok(())
    }
}

/// `(1/M) Σ_m ⟨W_m, D_m D_mᵀ⟩` for per-view differences `D_m`, evaluated
/// as `tr(D_mᵀ W_m D_m)`.
pub(crate) fn quadratic_form_sum<T: Real>(w: &MetricParams<T>, diffs: &[DMatrix<T>]) -> T {
    let total = diffs
        .iter()
        .zip(w.matrices())
        .fold(T::zero(), |acc, (d, wm)| acc + d.dot(&(wm * d)));
    total / lit::<T>(diffs.len() as f64)
}

/// Parametric distance `(1/M) Σ_m ⟨W_m, (Φ_m(a)−Φ_m(b))(Φ_m(a)−Φ_m(b))ᵀ⟩`.
pub fn distance<T: Real>(a: &FeatureSet<T>, b: &FeatureSet<T>, w: &MetricParams<T>) -> Result<T> {
    let profile = a.profile();
    if !w.accepts(&profile) {
        return dim_err(format!(
            "metric with dims {:?} cannot act on profile {profile:?}",
            w.dims()
        ));
    }
    let diffs = a.difference(b)?;
    Ok(quadratic_form_sum(w, &diffs))
}

/// LogDet divergence `Σ_m ⟨W_{0,m}⁻¹, W_m⟩ − logdet(W_m W_{0,m}⁻¹) − n_m`.
pub fn logdet_divergence<T: Real>(w: &MetricParams<T>, w0: &MetricParams<T>) -> Result<T> {
    if w.dims() != w0.dims() {
        return dim_err(format!("metric dims {:?} vs {:?}", w.dims(), w0.dims()));
    }
    let mut total = T::zero();
    for m in 0..w.len() {
        let wm = w.matrix(m);
        let (_, logdet_w) = spd_inverse_logdet(wm, &format!("W_{m}"))?;
        let (_, logdet_w0) = spd_inverse_logdet(w0.matrix(m), &format!("W0_{m}"))?;
        let n = lit::<T>(wm.nrows() as f64);
        total += w0.inverse(m).dot(wm) - (logdet_w - logdet_w0) - n;
    }
    // roundoff can produce tiny negatives when w ≈ w0
    Ok(if total < T::zero() && total > -tol::<T>(1e-12) {
        T::zero()
    } else {
        total
    })
}

/// `½⟨ξ−ξ₀, G(ξ−ξ₀)⟩`.
pub fn quadratic_divergence<T: Real>(
    xi: &DVector<T>,
    xi0: &DVector<T>,
    g: &GramOperator<T>,
) -> Result<T> {
    if xi.len() != xi0.len() || xi.len() != g.dim() {
        return dim_err(format!(
            "slack lengths {} / {} vs operator size {}",
            xi.len(),
            xi0.len(),
            g.dim()
        ));
    }
    let diff = xi - xi0;
    Ok(diff.dot(&g.apply(&diff)) * lit::<T>(0.5))
}
