//! One Bregman projection onto the boundary of a constraint half-space.
//!
//! Stationarity of the projection Lagrangian gives
//! `W_m⁻¹ ← W_m⁻¹ + (δ/M) A_{m,k}` and `ξ ← ξ + δ h_k`, and the boundary
//! equation reduces to `Σ_h 1/(d_h + δ) = ξ_k + δ h_kk` where
//! `d = M / eig(V_{m,k}ᵀ W_m V_{m,k})` concatenated over views.

use nalgebra::DMatrix;

use crate::constraints::{constraint_value, ConstraintSet};
use crate::error::{dim_err, Error, Result};
use crate::linalg::sym_eigenvalues;
use crate::metric::MetricParams;
use crate::scalar::{lit, to_f64, Real};

use super::secular::{solve_secular, SecularInstance};
use super::{IterRecord, SlackGeometry, SolverConfig, SolverState};

/// Eigenvalues of `VᵀWV` at or below this fraction of the largest one are
/// treated as zero.
pub const RANK_TOL: f64 = 1e-12;

/// Pole offsets `d` for constraint `k` at the current metric. Empty when
/// every difference factor vanishes (a degenerate constraint).
pub fn compute_d<T: Real>(w: &MetricParams<T>, cs: &ConstraintSet<T>, k: usize) -> Result<Vec<T>> {
    let factors = cs.factors(k);
    if factors.len() != w.len() {
        return dim_err(format!(
            "constraint has {} views, metric has {}",
            factors.len(),
            w.len()
        ));
    }
    let views = lit::<T>(w.len() as f64);
    let rank_tol = lit::<T>(RANK_TOL);
    let mut d = Vec::new();
    for (v, wm) in factors.iter().zip(w.matrices()) {
        if v.nrows() != wm.nrows() {
            return dim_err(format!("factor has {} rows, W is {}x{}", v.nrows(), wm.nrows(), wm.ncols()));
        }
        let s = v.transpose() * (wm * v);
        let eig = sym_eigenvalues(&s);
        let top = eig.iter().copied().fold(T::zero(), |a, b| a.max(b));
        if !(top > T::zero()) {
            continue;
        }
        d.extend(eig.iter().filter(|&&x| x > rank_tol * top).map(|&x| views / x));
    }
    Ok(d)
}

/// `(1/M) Σ_m ⟨A_{m,k}, (W_m⁻¹ + (δ/M) A_{m,k})⁻¹⟩` by dense inversion.
/// This is the slow reference for `Σ_h 1/(d_h + δ)`.
pub fn naive_rhs<T: Real>(delta: T, w: &MetricParams<T>, cs: &ConstraintSet<T>, k: usize) -> Result<T> {
    let factors = cs.factors(k);
    if factors.len() != w.len() {
        return dim_err("constraint/metric view count mismatch");
    }
    let views = lit::<T>(w.len() as f64);
    let mut total = T::zero();
    for (m, v) in factors.iter().enumerate() {
        let a = v * v.transpose();
        let shifted = w.inverse(m) + &a * (delta / views);
        let inv = shifted.try_inverse().ok_or_else(|| {
            Error::Numeric(format!("W_{m}^-1 + (delta/M) A is singular at delta = {delta:e}"))
        })?;
        total += a.dot(&inv);
    }
    Ok(total / views)
}

/// Metric after `W_m⁻¹ ← W_m⁻¹ + β A_{m,k}` for every view.
pub fn apply_update<T: Real>(
    w: &MetricParams<T>,
    cs: &ConstraintSet<T>,
    k: usize,
    beta: T,
) -> Result<MetricParams<T>> {
    let mut out = w.clone();
    apply_update_in_place(&mut out, cs.factors(k), beta)?;
    Ok(out)
}

fn apply_update_in_place<T: Real>(w: &mut MetricParams<T>, factors: &[DMatrix<T>], beta: T) -> Result<()> {
    // stage on a copy so a failure in a later view leaves `w` untouched
    let mut staged = w.clone();
    for (m, v) in factors.iter().enumerate() {
        staged.rank_update(m, v, beta)?;
    }
    *w = staged;
    Ok(())
}

/// Projects the current iterate onto constraint `k`, with Dykstra's dual
/// correction, and returns the step record.
pub fn project_halfspace<T: Real>(
    state: &mut SolverState<T>,
    cs: &ConstraintSet<T>,
    geom: &SlackGeometry<T>,
    k: usize,
    cfg: &SolverConfig,
) -> Result<IterRecord> {
    let d = compute_d(&state.w, cs, k)?;
    let degenerate = d.is_empty();
    let inst = SecularInstance::new(d, state.xi[k], geom.gram.inverse_diag(k))?;
    let delta_bar = solve_secular(&inst, lit(cfg.root_tol)).map_err(|e| {
        Error::Numeric(format!(
            "iteration {} (constraint {k}): {e}; instance: d = {:?}, xi_k = {:e}, h_kk = {:e}",
            state.iteration, inst.d, inst.xi_k, inst.h_kk
        ))
    })?;

    let y = cs.sign(k);
    let proposed = y * delta_bar;
    let floor = T::zero() - state.alpha[k];
    let (delta, clipped) = if proposed < floor {
        (floor, true)
    } else {
        (proposed, false)
    };
    let step = delta * y;

    if step != T::zero() {
        let beta = step / lit::<T>(state.w.len() as f64);
        apply_update_in_place(&mut state.w, cs.factors(k), beta).map_err(|e| {
            Error::Numeric(format!("iteration {} (constraint {k}): {e}", state.iteration))
        })?;
        state.xi += geom.gram.inverse_column(k) * step;
    }
    state.alpha[k] += delta;
    state.iteration += 1;

    let residual = constraint_value(&state.w, cs, k)? - state.xi[k];
    Ok(IterRecord {
        iteration: state.iteration,
        sweep: state.sweep,
        k,
        delta: to_f64(delta),
        clipped,
        degenerate,
        residual: to_f64(residual),
    })
}
