//! Similarity/dissimilarity constraints and their half-space geometry.
//!
//! Each constraint `k` is stored through its per-view difference factors
//! `V_{m,k} = Φ_m(x_i) − Φ_m(x_j)`, so `A_{m,k} = V Vᵀ` never has to be formed.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::metric::{quadratic_form_sum, FeatureSet, MetricParams, Profile};
use crate::scalar::Real;

/// Labeled examples sharing one feature profile.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset<T: Real> {
    examples: Vec<FeatureSet<T>>,
    labels: Vec<String>,
    profile: Profile,
}

impl<T: Real> LabeledDataset<T> {
    pub fn new(examples: Vec<FeatureSet<T>>, labels: Vec<String>) -> Result<Self> {
        if examples.len() != labels.len() {
            return dim_err(format!(
                "{} examples but {} labels",
                examples.len(),
                labels.len()
            ));
        }
        let profile = match examples.first() {
            Some(e) => e.profile(),
            None => return Err(Error::Config("dataset is empty".into())),
        };
        if let Some(bad) = examples.iter().position(|e| e.profile() != profile) {
            return dim_err(format!(
                "example {bad} has profile {:?}, expected {profile:?}",
                examples[bad].profile()
            ));
        }
        Ok(Self { examples, labels, profile })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn example(&self, i: usize) -> &FeatureSet<T> {
        &self.examples[i]
    }

    pub fn examples(&self) -> &[FeatureSet<T>] {
        &self.examples
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Distinct labels in sorted order.
    pub fn classes(&self) -> Vec<String> {
        self.labels
            .iter()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Indices of examples carrying `label`, ascending.
    pub fn indices_of(&self, label: &str) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == label).collect()
    }

    /// New dataset holding the listed examples in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            indices.iter().map(|&i| self.examples[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i].clone()).collect(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintKind {
    Similar,
    Dissimilar,
}

/// Example pair `(i, j)` with its constraint kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConstraintPair {
    pub i: usize,
    pub j: usize,
    pub kind: ConstraintKind,
}

impl ConstraintPair {
    /// `+1` for similar pairs, `−1` for dissimilar ones.
    pub fn sign(&self) -> i8 {
        match self.kind {
            ConstraintKind::Similar => 1,
            ConstraintKind::Dissimilar => -1,
        }
    }
}

/// `K` constraints, similar pairs first.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet<T: Real> {
    pairs: Vec<ConstraintPair>,
    factors: Vec<Vec<DMatrix<T>>>,
    k_plus: usize,
}

impl<T: Real> ConstraintSet<T> {
    /// Constraints over `data` for the given pairs. Similar pairs are moved
    /// ahead of dissimilar ones, otherwise order is preserved.
    pub fn from_pairs(data: &LabeledDataset<T>, pairs: Vec<ConstraintPair>) -> Result<Self> {
        let mut ordered: Vec<ConstraintPair> = Vec::with_capacity(pairs.len());
        ordered.extend(pairs.iter().filter(|p| p.kind == ConstraintKind::Similar));
        ordered.extend(pairs.iter().filter(|p| p.kind == ConstraintKind::Dissimilar));
        let mut factors = Vec::with_capacity(ordered.len());
        for p in &ordered {
            if p.i == p.j || p.i >= data.len() || p.j >= data.len() {
                return Err(Error::Config(format!("invalid pair ({}, {})", p.i, p.j)));
            }
            let same = data.label(p.i) == data.label(p.j);
            if same != (p.kind == ConstraintKind::Similar) {
                return Err(Error::Config(format!(
                    "pair ({}, {}) marked {:?} but labels are {:?}/{:?}",
                    p.i,
                    p.j,
                    p.kind,
                    data.label(p.i),
                    data.label(p.j)
                )));
            }
            factors.push(data.example(p.i).difference(data.example(p.j))?);
        }
        let k_plus = ordered
            .iter()
            .take_while(|p| p.kind == ConstraintKind::Similar)
            .count();
        Ok(Self { pairs: ordered, factors, k_plus })
    }

    /// Constraints given directly by their difference factors (one list of
    /// `M` matrices per constraint). Pair indices are synthetic:
    /// constraint `k` refers to examples `(2k, 2k+1)`.
    pub fn from_factors(
        similar: Vec<Vec<DMatrix<T>>>,
        dissimilar: Vec<Vec<DMatrix<T>>>,
    ) -> Result<Self> {
        let k_plus = similar.len();
        let factors: Vec<_> = similar.into_iter().chain(dissimilar).collect();
        if let Some(first) = factors.first() {
            let shape: Vec<_> = first.iter().map(|v| v.nrows()).collect();
            if shape.is_empty() {
                return dim_err("constraint factors need at least one view");
            }
            if factors
                .iter()
                .any(|f| f.iter().map(|v| v.nrows()).collect::<Vec<_>>() != shape)
            {
                return dim_err("constraint factors have inconsistent row counts");
            }
        }
        let pairs = (0..factors.len())
            .map(|k| ConstraintPair {
                i: 2 * k,
                j: 2 * k + 1,
                kind: if k < k_plus {
                    ConstraintKind::Similar
                } else {
                    ConstraintKind::Dissimilar
                },
            })
            .collect();
        Ok(Self { pairs, factors, k_plus })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn k_plus(&self) -> usize {
        self.k_plus
    }

    pub fn k_minus(&self) -> usize {
        self.len() - self.k_plus
    }

    pub fn pairs(&self) -> &[ConstraintPair] {
        &self.pairs
    }

    pub fn pair(&self, k: usize) -> &ConstraintPair {
        &self.pairs[k]
    }

    pub fn factors(&self, k: usize) -> &[DMatrix<T>] {
        &self.factors[k]
    }

    /// `y_k` as a scalar.
    pub fn sign(&self, k: usize) -> T {
        if k < self.k_plus {
            T::one()
        } else {
            -T::one()
        }
    }

    fn check_metric(&self, w: &MetricParams<T>) -> Result<()> {
        if let Some(f) = self.factors.first() {
            let rows: Vec<_> = f.iter().map(|v| v.nrows()).collect();
            if rows != w.dims() {
                return dim_err(format!(
                    "constraint views have {rows:?} rows, metric dims are {:?}",
                    w.dims()
                ));
            }
        }
        Ok(())
    }
}

/// Draws constraints per class: `per_class_similar` distinct within-class
/// pairs and `per_class_dissimilar` distinct pairs with one member in the
/// class and the other drawn uniformly from all other classes.
pub fn build_constraints<T: Real, R: Rng + ?Sized>(
    data: &LabeledDataset<T>,
    per_class_similar: usize,
    per_class_dissimilar: usize,
    rng: &mut R,
) -> Result<ConstraintSet<T>> {
    let classes = data.classes();
    if classes.len() < 2 {
        return Err(Error::Config(format!(
            "need at least 2 classes to build constraints, found {}",
            classes.len()
        )));
    }
    let mut similar = Vec::new();
    let mut dissimilar = Vec::new();
    for class in &classes {
        let members = data.indices_of(class);
        let others: Vec<usize> = (0..data.len())
            .filter(|&i| data.label(i) != class.as_str())
            .collect();
        let n = members.len();
        if n < 2 {
            return Err(Error::Config(format!(
                "class {class:?} has {n} example(s); at least 2 are required"
            )));
        }
        let within = n * (n - 1) / 2;
        if per_class_similar > within {
            return Err(Error::Config(format!(
                "class {class:?} offers {within} within-class pairs, {per_class_similar} requested"
            )));
        }
        let across = n * others.len();
        if per_class_dissimilar > across {
            return Err(Error::Config(format!(
                "class {class:?} offers {across} cross-class pairs, {per_class_dissimilar} requested"
            )));
        }
        for t in index::sample(rng, within, per_class_similar) {
            let (a, b) = unrank_pair(t, n);
            similar.push(ConstraintPair {
                i: members[a],
                j: members[b],
                kind: ConstraintKind::Similar,
            });
        }
        for t in index::sample(rng, across, per_class_dissimilar) {
            dissimilar.push(ConstraintPair {
                i: members[t / others.len()],
                j: others[t % others.len()],
                kind: ConstraintKind::Dissimilar,
            });
        }
    }
    similar.extend(dissimilar);
    ConstraintSet::from_pairs(data, similar)
}

/// Maps `t ∈ [0, n(n−1)/2)` to the `t`-th pair `(a, b)`, `a < b`, in
/// lexicographic order.
fn unrank_pair(mut t: usize, n: usize) -> (usize, usize) {
    let mut a = 0;
    while t >= n - 1 - a {
        t -= n - 1 - a;
        a += 1;
    }
    (a, a + 1 + t)
}

/// `(1/M) Σ_m tr(V_{m,k}ᵀ W_m V_{m,k})`.
pub fn constraint_value<T: Real>(w: &MetricParams<T>, cs: &ConstraintSet<T>, k: usize) -> Result<T> {
    if k >= cs.len() {
        return dim_err(format!("constraint index {k} out of range (K = {})", cs.len()));
    }
    cs.check_metric(w)?;
    Ok(quadratic_form_sum(w, cs.factors(k)))
}

/// Largest violation `max_k max(0, y_k(value_k − ξ_k))`.
pub fn feasibility_residual<T: Real>(
    w: &MetricParams<T>,
    xi: &DVector<T>,
    cs: &ConstraintSet<T>,
) -> Result<T> {
    if xi.len() != cs.len() {
        return dim_err(format!("slack has length {}, K = {}", xi.len(), cs.len()));
    }
    let mut worst = T::zero();
    for k in 0..cs.len() {
        let v = constraint_value(w, cs, k)?;
        worst = worst.max(cs.sign(k) * (v - xi[k]));
    }
    Ok(worst)
}

/// Whether every constraint holds within `tol`.
pub fn is_feasible<T: Real>(
    w: &MetricParams<T>,
    xi: &DVector<T>,
    cs: &ConstraintSet<T>,
    tol: T,
) -> Result<bool> {
    Ok(feasibility_residual(w, xi, cs)? <= tol)
}
