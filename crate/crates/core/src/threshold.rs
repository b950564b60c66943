//! Closed-form constants of the threshold auto-tuning reduction.
//!
//! Tying the thresholds to one scalar `b₀` (`b_k = b₀/2` for similar pairs,
//! `2b₀` for dissimilar ones) and minimizing over `b₀` turns the slack
//! penalty into a quadratic Bregman divergence `½⟨ξ−ξ₀, G(ξ−ξ₀)⟩` up to a
//! constant `B`, with `G = c(I + μ₃γγᵀ)`. Everything here is `O(K)`: `G` and
//! `G⁻¹` are only ever touched through their rank-one structure.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Hyperparameters of the slack/threshold model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig<T> {
    /// Slack penalty weight.
    pub c: T,
    /// Regularization weight of `b₀`; must be positive or `G` is singular.
    pub c0: T,
    /// Prior mean of `b₀`.
    pub mu0: T,
    pub k_plus: usize,
    pub k_minus: usize,
}

impl<T: Real> ThresholdConfig<T> {
    pub fn new(c: T, c0: T, mu0: T, k_plus: usize, k_minus: usize) -> Self {
        Self { c, c0, mu0, k_plus, k_minus }
    }

    pub fn k(&self) -> usize {
        self.k_plus + self.k_minus
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > T::zero()) || !self.c.is_finite() {
            return Err(Error::Config(format!("c must be positive, got {:e}", self.c)));
        }
        if !(self.c0 > T::zero()) || !self.c0.is_finite() {
            return Err(Error::Config(format!(
                "c0 must be positive (G is singular at c0 = 0), got {:e}",
                self.c0
            )));
        }
        if !self.mu0.is_finite() {
            return Err(Error::Config("mu0 must be finite".into()));
        }
        if self.k() == 0 {
            return Err(Error::Config("need at least one constraint".into()));
        }
        Ok(())
    }
}

/// Implicit `G = c(I + μ₃γγᵀ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramOperator<T: Real> {
    c: T,
    mu3: T,
    gamma: DVector<T>,
    gnorm2: T,
}

impl<T: Real> GramOperator<T> {
    pub fn new(c: T, mu3: T, gamma: DVector<T>) -> Self {
        let gnorm2 = gamma.norm_squared();
        Self { c, mu3, gamma, gnorm2 }
    }

    /// `G = cI`, the fixed-threshold slack geometry.
    pub fn scaled_identity(c: T, k: usize) -> Self {
        Self::new(c, T::zero(), DVector::zeros(k))
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn apply(&self, v: &DVector<T>) -> DVector<T> {
        let proj = self.gamma.dot(v) * self.mu3;
        (v + &self.gamma * proj) * self.c
    }

    /// Coefficient `μ₃ / (1 + μ₃‖γ‖²)` of the rank-one term of `c·G⁻¹`.
    fn inverse_coeff(&self) -> T {
        self.mu3 / (T::one() + self.mu3 * self.gnorm2)
    }

    /// Column `k` of `G⁻¹`: `e_k/c − μ₃γ_k γ / (c(1+μ₃‖γ‖²))`.
    pub fn inverse_column(&self, k: usize) -> DVector<T> {
        let mut h = &self.gamma * (-(self.inverse_coeff() * self.gamma[k]) / self.c);
        h[k] += T::one() / self.c;
        h
    }

    /// Entry `(k, k)` of `G⁻¹`.
    pub fn inverse_diag(&self, k: usize) -> T {
        (T::one() - self.inverse_coeff() * self.gamma[k] * self.gamma[k]) / self.c
    }

    /// `G⁻¹ v`.
    pub fn solve(&self, v: &DVector<T>) -> DVector<T> {
        let proj = self.gamma.dot(v) * self.inverse_coeff();
        (v - &self.gamma * proj) / self.c
    }

    /// Dense `K×K` materialization. Only meant for checks on small `K`.
    pub fn to_dense(&self) -> nalgebra::DMatrix<T> {
        let k = self.dim();
        let mut g = &self.gamma * self.gamma.transpose() * self.mu3;
        for i in 0..k {
            g[(i, i)] += T::one();
        }
        g * self.c
    }
}

/// All derived constants of the reduction.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdDerived<T: Real> {
    pub config: ThresholdConfig<T>,
    /// `½` for the first `K₊` entries, `2` for the rest.
    pub gamma: DVector<T>,
    pub gnorm2: T,
    pub mu1: T,
    pub mu2: T,
    pub mu3: T,
    pub xi0: DVector<T>,
    /// Additive constant `B`.
    pub b_const: T,
    gram: GramOperator<T>,
}

/// `γ = [½·1_{K₊}; 2·1_{K₋}]`.
pub fn gamma_vector<T: Real>(k_plus: usize, k_minus: usize) -> DVector<T> {
    DVector::from_fn(k_plus + k_minus, |i, _| {
        if i < k_plus {
            lit(0.5)
        } else {
            lit(2.0)
        }
    })
}

/// Evaluates γ, μ₁, μ₂, μ₃, ξ₀ and `B` from their defining formulas.
pub fn derive_params<T: Real>(cfg: &ThresholdConfig<T>) -> Result<ThresholdDerived<T>> {
    cfg.validate()?;
    let ThresholdConfig { c, c0, mu0, .. } = *cfg;
    let gamma = gamma_vector::<T>(cfg.k_plus, cfg.k_minus);
    let gnorm2 = gamma.norm_squared();
    let denom = c * gnorm2 + c0;
    let mu1 = c / denom;
    let mu2 = c0 * mu0 / denom;
    let mu3 = mu1 * mu1 * (c0 / c + gnorm2) - mu1 * lit(2.0);
    let gram = GramOperator::new(c, mu3, gamma.clone());

    let scale = c * mu2 + (c0 * mu1 * mu0 - c * mu2) * mu1 * gnorm2;
    let xi0 = gram.solve(&gamma) * scale;
    let half = lit::<T>(0.5);
    let b_const = half * gram.apply(&xi0).dot(&xi0)
        - half * c * mu2 * mu2 * gnorm2
        - half * c0 * mu1 * mu1 * mu0 * mu0 * gnorm2 * gnorm2;

    Ok(ThresholdDerived {
        config: *cfg,
        gamma,
        gnorm2,
        mu1,
        mu2,
        mu3,
        xi0,
        b_const,
        gram,
    })
}

impl<T: Real> ThresholdDerived<T> {
    pub fn gram(&self) -> &GramOperator<T> {
        &self.gram
    }

    pub fn k(&self) -> usize {
        self.gamma.len()
    }

    /// Column `k` of `G⁻¹`, built in `O(K)`.
    pub fn h_column(&self, k: usize) -> DVector<T> {
        self.gram.inverse_column(k)
    }

    pub fn h_diag(&self, k: usize) -> T {
        self.gram.inverse_diag(k)
    }

    /// Minimizer over `b₀` of the slack loss: `μ₁⟨γ, ξ⟩ + μ₂`.
    pub fn recover_b0(&self, xi: &DVector<T>) -> T {
        self.mu1 * self.gamma.dot(xi) + self.mu2
    }

    /// `(c₀/2)(b₀−μ₀)² + (c/2) Σ_k (ξ_k − γ_k b₀)²`.
    pub fn loss_tilde(&self, xi: &DVector<T>, b0: T) -> T {
        let ThresholdConfig { c, c0, mu0, .. } = self.config;
        let half = lit::<T>(0.5);
        let resid = xi - &self.gamma * b0;
        half * c0 * (b0 - mu0) * (b0 - mu0) + half * c * resid.norm_squared()
    }

    /// `|min_b₀ loss(ξ, b₀) + B − ½⟨ξ−ξ₀, G(ξ−ξ₀)⟩|`; zero up to roundoff.
    pub fn divergence_residual(&self, xi: &DVector<T>) -> T {
        let loss = self.loss_tilde(xi, self.recover_b0(xi));
        let diff = xi - &self.xi0;
        let bd = lit::<T>(0.5) * diff.dot(&self.gram.apply(&diff));
        (loss + self.b_const - bd).abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dvector, DMatrix};

    fn unit() -> ThresholdDerived<f64> {
        derive_params(&ThresholdConfig::new(1.0, 1.0, 1.0, 1, 1)).unwrap()
    }

    #[test]
    fn unit_config_constants() {
        let d = unit();
        assert!((d.gnorm2 - 4.25).abs() < 1e-15);
        assert!((d.mu1 - 4.0 / 21.0).abs() < 1e-15);
        assert!((d.mu2 - 4.0 / 21.0).abs() < 1e-15);
        assert!((d.mu3 + 4.0 / 21.0).abs() < 1e-15);
        assert!((d.xi0[0] - 0.5).abs() < 1e-12 && (d.xi0[1] - 2.0).abs() < 1e-12);
        assert!(d.b_const.abs() < 1e-12);
    }

    #[test]
    fn h_columns_match_dense_solve() {
        let d = unit();
        let h1 = d.h_column(0);
        assert!((h1[0] - 1.25).abs() < 1e-12 && (h1[1] - 1.0).abs() < 1e-12);
        assert!((d.h_diag(0) - 1.25).abs() < 1e-12);
        assert!((d.h_diag(1) - 5.0).abs() < 1e-12);

        let dense = d.gram().to_dense();
        let inv = dense.clone().try_inverse().unwrap();
        for k in 0..2 {
            let h = d.h_column(k);
            for i in 0..2 {
                assert!((h[i] - inv[(i, k)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_similar_constraint_is_scalar() {
        let d = derive_params(&ThresholdConfig::new(1.0f64, 1.0, 1.0, 1, 0)).unwrap();
        let expected = 1.0 / (1.0 + d.mu3 / 4.0);
        assert!((d.h_diag(0) - expected).abs() < 1e-14);
        let g = d.gram().to_dense();
        assert!((g[(0, 0)] * d.h_diag(0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn b0_recovery_and_loss() {
        let d = unit();
        let at_prior = &d.gamma * 1.0;
        assert!((d.recover_b0(&at_prior) - 1.0).abs() < 1e-14);
        assert!(d.loss_tilde(&at_prior, 1.0).abs() < 1e-15);
        assert_eq!(d.recover_b0(&dvector![0.0, 0.0]), d.mu2);
        assert!((d.loss_tilde(&dvector![0.0, 0.0], 1.0) - 2.125).abs() < 1e-14);

        let d0 = derive_params(&ThresholdConfig::new(1.0f64, 1.0, 0.0, 1, 1)).unwrap();
        assert!((d0.loss_tilde(&d0.gamma.clone(), 0.0) - 2.125).abs() < 1e-14);
    }

    #[test]
    fn divergence_residual_at_anchor() {
        let d = unit();
        assert!(d.divergence_residual(&d.xi0.clone()) < 1e-12);
        let mut shifted = d.xi0.clone();
        shifted[0] += 1.0;
        assert!(d.divergence_residual(&shifted) < 1e-9);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for cfg in [
            ThresholdConfig::new(1.0, 0.0, 1.0, 1, 1),
            ThresholdConfig::new(1.0, -1.0, 1.0, 1, 1),
            ThresholdConfig::new(0.0, 1.0, 1.0, 1, 1),
            ThresholdConfig::new(1.0, 1.0, 1.0, 0, 0),
        ] {
            assert!(matches!(derive_params(&cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn identity_gram_has_scaled_unit_columns() {
        let g = GramOperator::scaled_identity(4.0, 3);
        assert_eq!(g.inverse_column(1), dvector![0.0, 0.25, 0.0]);
        assert_eq!(g.to_dense(), DMatrix::identity(3, 3) * 4.0);
    }
}
