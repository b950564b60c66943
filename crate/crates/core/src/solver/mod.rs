//! Stochastic Dykstra iteration over the constraint half-spaces.
//!
//! Each iteration picks one constraint, projects the current `(W, ξ)` onto
//! the boundary of its half-space (in the Bregman geometry of
//! `−Σ logdet W_m + ½⟨ξ, Gξ⟩`) and clips the step against the
//! constraint's accumulated dual correction `α_k ≥ 0`.

mod projection;
mod secular;

pub use projection::{apply_update, compute_d, naive_rhs, project_halfspace, RANK_TOL};
pub use secular::{secular, solve_secular, SecularInstance};

use log::warn;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::{feasibility_residual, ConstraintSet};
use crate::error::{dim_err, Error, Result};
use crate::metric::{logdet_divergence, MetricParams};
use crate::scalar::{lit, to_f64, Real};
use crate::threshold::{gamma_vector, GramOperator, ThresholdDerived};

/// How the slack targets are set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    /// Thresholds tied to a learned scalar `b₀`.
    AutoTune,
    /// Fixed upper bound on similar distances and lower bound on
    /// dissimilar ones.
    FixedThreshold { b_ub: f64, b_lb: f64 },
}

/// Order in which constraints are visited.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Uniform picks with replacement, `K` per sweep.
    Random,
    /// `0, 1, …, K−1` each sweep.
    Cyclic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_sweeps: usize,
    /// Secular residual tolerance, relative to `1 + |ξ_k|`.
    pub root_tol: f64,
    /// Constraint violation allowed at convergence.
    pub feas_tol: f64,
    /// Largest change of any `ξ_k` over a sweep allowed at convergence.
    pub stall_tol: f64,
    pub seed: u64,
    pub mode: Mode,
    pub schedule: Schedule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 1000,
            root_tol: 1e-12,
            feas_tol: 1e-7,
            stall_tol: 1e-9,
            seed: 0,
            mode: Mode::AutoTune,
            schedule: Schedule::Random,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 {
            return Err(Error::Config("max_sweeps must be at least 1".into()));
        }
        for (name, v) in [
            ("root_tol", self.root_tol),
            ("feas_tol", self.feas_tol),
            ("stall_tol", self.stall_tol),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Diagnostics for a single projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iteration: usize,
    pub sweep: usize,
    pub k: usize,
    /// Signed dual step `δ_t` after clipping.
    pub delta: f64,
    pub clipped: bool,
    /// All difference factors of the constraint vanish.
    pub degenerate: bool,
    /// `value_k − ξ_k` after the step; zero for unclipped steps.
    pub residual: f64,
}

impl IterRecord {
    /// One line of JSON.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("IterRecord serializes")
    }
}

/// Current Dykstra iterate.
#[derive(Clone, Debug)]
pub struct SolverState<T: Real> {
    pub w: MetricParams<T>,
    pub xi: DVector<T>,
    /// Dual corrections, elementwise non-negative.
    pub alpha: DVector<T>,
    pub sweep: usize,
    pub iteration: usize,
    pub history: Vec<IterRecord>,
}

impl<T: Real> SolverState<T> {
    pub fn new(w: MetricParams<T>, xi: DVector<T>) -> Self {
        let k = xi.len();
        Self {
            w,
            xi,
            alpha: DVector::zeros(k),
            sweep: 0,
            iteration: 0,
            history: Vec::new(),
        }
    }
}

/// Anchor point and quadratic geometry of the slack variables.
#[derive(Clone, Debug, PartialEq)]
pub struct SlackGeometry<T: Real> {
    pub xi0: DVector<T>,
    pub gram: GramOperator<T>,
}

impl<T: Real> SlackGeometry<T> {
    /// Auto-tuned thresholds use `(ξ₀, G)` from the derived constants; fixed
    /// thresholds use `ξ₀ = b` and `G = cI`.
    pub fn for_mode(td: &ThresholdDerived<T>, mode: Mode) -> Self {
        match mode {
            Mode::AutoTune => Self {
                xi0: td.xi0.clone(),
                gram: td.gram().clone(),
            },
            Mode::FixedThreshold { b_ub, b_lb } => {
                let k_plus = td.config.k_plus;
                let xi0 = DVector::from_fn(td.k(), |i, _| lit(if i < k_plus { b_ub } else { b_lb }));
                Self {
                    xi0,
                    gram: GramOperator::scaled_identity(td.config.c, td.k()),
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub sweeps: usize,
    pub iterations: usize,
    pub feasibility_residual: f64,
    /// Constraints whose difference factors vanish; they only act on `ξ`.
    pub degenerate: Vec<usize>,
    pub history: Vec<IterRecord>,
}

#[derive(Clone, Debug)]
pub struct FitResult<T: Real> {
    pub w: MetricParams<T>,
    pub xi: DVector<T>,
    /// Recovered `b₀`, present in auto-tune mode.
    pub b0: Option<T>,
    pub alpha: DVector<T>,
    pub diagnostics: FitDiagnostics,
}

/// Runs the solver to convergence or `max_sweeps`.
pub fn fit<T: Real>(
    cs: &ConstraintSet<T>,
    td: &ThresholdDerived<T>,
    cfg: &SolverConfig,
    w0: &MetricParams<T>,
) -> Result<FitResult<T>> {
    fit_with_observer(cs, td, cfg, w0, |_, _| {})
}

/// [`fit`] with a callback invoked after every projection.
pub fn fit_with_observer<T: Real>(
    cs: &ConstraintSet<T>,
    td: &ThresholdDerived<T>,
    cfg: &SolverConfig,
    w0: &MetricParams<T>,
    mut observer: impl FnMut(&SolverState<T>, &IterRecord),
) -> Result<FitResult<T>> {
    cfg.validate()?;
    if cs.is_empty() {
        return Ok(FitResult {
            w: w0.clone(),
            xi: DVector::zeros(0),
            b0: match cfg.mode {
                Mode::AutoTune => Some(td.mu2),
                Mode::FixedThreshold { .. } => None,
            },
            alpha: DVector::zeros(0),
            diagnostics: FitDiagnostics {
                converged: true,
                sweeps: 0,
                iterations: 0,
                feasibility_residual: 0.0,
                degenerate: Vec::new(),
                history: Vec::new(),
            },
        });
    }
    if td.k() != cs.len() || td.config.k_plus != cs.k_plus() {
        return dim_err(format!(
            "threshold model built for (K+, K) = ({}, {}), constraints have ({}, {})",
            td.config.k_plus,
            td.k(),
            cs.k_plus(),
            cs.len()
        ));
    }
    let rows: Vec<_> = cs.factors(0).iter().map(|v| v.nrows()).collect();
    if rows != w0.dims() {
        return dim_err(format!("constraint views have {rows:?} rows, W0 dims are {:?}", w0.dims()));
    }

    let geom = SlackGeometry::for_mode(td, cfg.mode);
    let k_total = cs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = SolverState::new(w0.clone(), geom.xi0.clone());
    let mut degenerate = vec![false; k_total];
    let mut converged = false;
    let mut residual = T::zero();

    for sweep in 0..cfg.max_sweeps {
        state.sweep = sweep;
        let xi_before = state.xi.clone();
        for step in 0..k_total {
            let k = match cfg.schedule {
                Schedule::Random => rng.random_range(0..k_total),
                Schedule::Cyclic => step,
            };
            let rec = project_halfspace(&mut state, cs, &geom, k, cfg)?;
            if rec.degenerate && !degenerate[k] {
                degenerate[k] = true;
                warn!("constraint {k} has vanishing difference factors; only its slack is adjusted");
            }
            debug_assert!(state.alpha[k] >= T::zero());
            observer(&state, &rec);
            state.history.push(rec);
        }
        state.w.resync_from_inverses().map_err(|e| {
            Error::Numeric(format!("after sweep {sweep} (iteration {}): {e}", state.iteration))
        })?;
        let change = (&state.xi - &xi_before).amax();
        residual = feasibility_residual(&state.w, &state.xi, cs)?;
        if change <= lit(cfg.stall_tol) && residual <= lit(cfg.feas_tol) {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!(
            "solver stopped after {} sweeps without converging (feasibility residual {:e})",
            cfg.max_sweeps, residual
        );
    }

    let b0 = match cfg.mode {
        Mode::AutoTune => Some(td.recover_b0(&state.xi)),
        Mode::FixedThreshold { .. } => None,
    };
    Ok(FitResult {
        b0,
        diagnostics: FitDiagnostics {
            converged,
            sweeps: state.sweep + 1,
            iterations: state.iteration,
            feasibility_residual: to_f64(residual),
            degenerate: (0..k_total).filter(|&k| degenerate[k]).collect(),
            history: state.history,
        },
        w: state.w,
        xi: state.xi,
        alpha: state.alpha,
    })
}

/// Objective value of a solution: LogDet regularizer plus the slack penalty
/// (minimized over `b₀` in auto-tune mode, `(c/2)‖ξ − b‖²` otherwise).
pub fn objective<T: Real>(
    w: &MetricParams<T>,
    w0: &MetricParams<T>,
    xi: &DVector<T>,
    td: &ThresholdDerived<T>,
    mode: Mode,
) -> Result<T> {
    if xi.len() != td.k() {
        return dim_err(format!("slack length {} vs K = {}", xi.len(), td.k()));
    }
    let reg = logdet_divergence(w, w0)?;
    let penalty = match mode {
        Mode::AutoTune => td.loss_tilde(xi, td.recover_b0(xi)),
        Mode::FixedThreshold { .. } => {
            let geom = SlackGeometry::for_mode(td, mode);
            (xi - &geom.xi0).norm_squared() * td.config.c * lit(0.5)
        }
    };
    Ok(reg + penalty)
}

/// Threshold vector `b₀γ` for a scalar `b₀`.
pub fn thresholds_for<T: Real>(b0: T, k_plus: usize, k_minus: usize) -> DVector<T> {
    gamma_vector::<T>(k_plus, k_minus) * b0
}
