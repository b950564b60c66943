//! The scalar equation fixing the step length of one half-space projection:
//!
//! `g(δ) = Σ_h 1/(d_h + δ) − ξ_k − δ h_kk = 0`, `δ ∈ (−d_min, ∞)`.
//!
//! `g` is continuous and strictly decreasing on its domain (its derivative
//! is `−Σ(d_h+δ)⁻² − h_kk < 0`) and runs from `+∞` to `−∞`, so the root
//! exists and is unique. It is also convex, which makes Newton steps taken
//! from the left of the root monotone.

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

const MAX_DOUBLINGS: usize = 200;
const MAX_ITERS: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct SecularInstance<T: Real> {
    /// Positive pole offsets, one per kept eigenvalue.
    pub d: Vec<T>,
    pub xi_k: T,
    pub h_kk: T,
    /// `min(d)`, `None` when `d` is empty (the equation is then linear).
    pub d_min: Option<T>,
}

impl<T: Real> SecularInstance<T> {
    pub fn new(d: Vec<T>, xi_k: T, h_kk: T) -> Result<Self> {
        if d.iter().any(|&x| !(x > T::zero()) || !x.is_finite()) {
            return Err(Error::Domain("pole offsets d must be positive and finite".into()));
        }
        if !(h_kk > T::zero()) || !h_kk.is_finite() {
            return Err(Error::Domain(format!("h_kk must be positive, got {h_kk:e}")));
        }
        if !xi_k.is_finite() {
            return Err(Error::NonFinite("slack entry".into()));
        }
        let d_min = d.iter().copied().reduce(|a, b| a.min(b));
        Ok(Self { d, xi_k, h_kk, d_min })
    }

    fn admissible(&self, delta: T) -> bool {
        self.d_min.is_none_or(|m| delta > -m)
    }

    fn value(&self, delta: T) -> T {
        self.d.iter().fold(T::zero(), |acc, &d| acc + T::one() / (d + delta)) - self.xi_k - delta * self.h_kk
    }

    fn derivative(&self, delta: T) -> T {
        let s = self.d.iter().fold(T::zero(), |acc, &d| {
            let r = T::one() / (d + delta);
            acc + r * r
        });
        -s - self.h_kk
    }
}

/// `g(δ)`; errors outside the open interval `(−d_min, ∞)`.
pub fn secular<T: Real>(delta: T, inst: &SecularInstance<T>) -> Result<T> {
    if !inst.admissible(delta) || !delta.is_finite() {
        return Err(Error::Domain(format!(
            "delta {delta:e} outside (-d_min, inf) with d_min = {:?}",
            inst.d_min.map(|x| format!("{x:e}"))
        )));
    }
    Ok(inst.value(delta))
}

/// Unique root of `g` on `(−d_min, ∞)` with `|g| ≤ root_tol (1 + |ξ_k|)`.
///
/// Brackets the root by doubling away from `δ = 0`, then runs Newton steps
/// inside the bracket, falling back to bisection whenever a step leaves it.
pub fn solve_secular<T: Real>(inst: &SecularInstance<T>, root_tol: T) -> Result<T> {
    let tol = root_tol * (T::one() + inst.xi_k.abs());
    let g0 = inst.value(T::zero());
    if g0.abs() <= tol {
        return Ok(T::zero());
    }
    let two = lit::<T>(2.0);
    let half = lit::<T>(0.5);

    // g(lo) > 0 > g(hi)
    let (mut lo, mut hi);
    if g0 > T::zero() {
        lo = T::zero();
        let mut step = T::one();
        let mut found = None;
        for _ in 0..MAX_DOUBLINGS {
            let g = inst.value(step);
            if g.abs() <= tol {
                return Ok(step);
            }
            if g < T::zero() {
                found = Some(step);
                break;
            }
            lo = step;
            step *= two;
        }
        hi = found.ok_or_else(|| bracket_failure(inst))?;
    } else {
        hi = T::zero();
        let mut found = None;
        let mut frac = half;
        let mut step = -T::one();
        for _ in 0..MAX_DOUBLINGS {
            let cand = match inst.d_min {
                Some(m) => -m * (T::one() - frac),
                None => step,
            };
            let g = inst.value(cand);
            if g.abs() <= tol && inst.admissible(cand) {
                return Ok(cand);
            }
            if g > T::zero() {
                found = Some(cand);
                break;
            }
            hi = cand;
            frac *= half;
            step *= two;
        }
        lo = found.ok_or_else(|| bracket_failure(inst))?;
    }

    let mut x = if g0 > T::zero() { lo } else { hi };
    let mut best = (x, inst.value(x).abs());
    for _ in 0..MAX_ITERS {
        let gx = inst.value(x);
        if !gx.is_finite() {
            return Err(Error::Numeric(format!("secular equation became non-finite at {x:e}")));
        }
        if gx.abs() < best.1 {
            best = (x, gx.abs());
        }
        if gx.abs() <= tol {
            return Ok(x);
        }
        if gx > T::zero() {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        let newton = x - gx / inst.derivative(x);
        let mid = (lo + hi) * half;
        x = if newton > lo && newton < hi && newton.is_finite() {
            newton
        } else {
            mid
        };
        if hi - lo <= T::default_epsilon() * lit::<T>(4.0) * (T::one() + lo.abs().max(hi.abs())) {
            // bracket exhausted at working precision
            let gx = inst.value(x);
            return Ok(if gx.abs() < best.1 { x } else { best.0 });
        }
    }
    Ok(best.0)
}

fn bracket_failure<T: Real>(inst: &SecularInstance<T>) -> Error {
    Error::Numeric(format!(
        "could not bracket secular root (|d| = {}, xi_k = {:e}, h_kk = {:e})",
        inst.d.len(),
        inst.xi_k,
        inst.h_kk
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluation_examples() {
        let inst = SecularInstance::new(vec![1.0], 1.0, 1.0).unwrap();
        assert_eq!(secular(0.0, &inst).unwrap(), 0.0);
        let inst = SecularInstance::new(vec![1.0], 0.5, 1.0).unwrap();
        assert_eq!(secular(0.0, &inst).unwrap(), 0.5);
        assert!(secular(-1.0, &inst).is_err());
        assert!(secular(-2.0, &inst).is_err());
    }

    #[test]
    fn root_at_zero() {
        let inst = SecularInstance::new(vec![1.0], 1.0, 1.0).unwrap();
        assert_eq!(solve_secular(&inst, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn scalar_instance_matches_quadratic_formula() {
        // 0.5 + δ = 1/(1+δ)  ⇔  δ² + 1.5δ − 0.5 = 0
        let inst = SecularInstance::new(vec![1.0], 0.5, 1.0).unwrap();
        let root = solve_secular(&inst, 1e-12).unwrap();
        let expected = (-1.5 + 4.25f64.sqrt()) / 2.0;
        assert!((root - expected).abs() < 1e-12, "{root} vs {expected}");
    }

    #[test]
    fn negative_root_near_pole() {
        // large slack pulls the root toward −d_min
        let inst = SecularInstance::new(vec![0.01f64, 5.0, 3.0], 1e6, 0.2).unwrap();
        let root = solve_secular(&inst, 1e-12).unwrap();
        assert!(root > -0.01);
        assert!(secular(root, &inst).unwrap().abs() <= 1e-12 * (1.0 + 1e6));
    }

    #[test]
    fn empty_pole_set_is_linear() {
        let inst = SecularInstance::new(vec![], 3.0f64, 0.5).unwrap();
        let root = solve_secular(&inst, 1e-14).unwrap();
        assert!((root + 6.0).abs() < 1e-12);
        let inst = SecularInstance::new(vec![], -3.0f64, 0.5).unwrap();
        assert!((solve_secular(&inst, 1e-14).unwrap() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_instances_are_rejected() {
        assert!(SecularInstance::new(vec![0.0], 1.0, 1.0).is_err());
        assert!(SecularInstance::new(vec![1.0], 1.0, 0.0).is_err());
        assert!(SecularInstance::new(vec![1.0], f64::NAN, 1.0).is_err());
    }
}
