//! k-nearest-neighbour evaluation in a learned metric, cross-validation of
//! the slack weight `c`, and repeated train/test comparisons.

use std::collections::HashMap;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{build_constraints, ConstraintSet, LabeledDataset};
use crate::error::{dim_err, Error, Result};
use crate::metric::{distance, FeatureSet, MetricParams};
use crate::scalar::{lit, to_f64, Real};
use crate::solver::{fit, FitResult, Mode, SolverConfig};
use crate::threshold::{derive_params, ThresholdConfig};

/// Which metric a run uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    /// Metric and threshold learned together.
    Tatml,
    /// Identity metric.
    Euc,
    /// Metric learned against fixed `(b_ub, b_lb)`; with several candidates
    /// the pair is chosen by cross-validation jointly with `c`.
    FixedThreshold { candidates: Vec<(f64, f64)> },
}

impl Method {
    pub fn fixed(b_ub: f64, b_lb: f64) -> Self {
        Method::FixedThreshold {
            candidates: vec![(b_ub, b_lb)],
        }
    }

    /// `(b₀/2, 2b₀)` for each `b₀`.
    pub fn fixed_grid(b0s: &[f64]) -> Self {
        Method::FixedThreshold {
            candidates: b0s.iter().map(|&b| (b / 2.0, 2.0 * b)).collect(),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Method::Tatml => "tatml",
            Method::Euc => "euc",
            Method::FixedThreshold { .. } => "maz",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub k_neighbors: usize,
    pub c_grid: Vec<f64>,
    pub c0: f64,
    pub mu0: f64,
    pub repeats: usize,
    /// Fraction of each class used for training (floored).
    pub split_fraction: f64,
    pub seed: u64,
    pub per_class_similar: usize,
    pub per_class_dissimilar: usize,
    pub folds: usize,
    pub solver: SolverConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 3,
            c_grid: vec![1e-2, 1e-1, 1e0, 1e1],
            c0: 1.0,
            mu0: 1.0,
            repeats: 5,
            split_fraction: 0.5,
            seed: 0,
            per_class_similar: 5,
            per_class_dissimilar: 5,
            folds: 3,
            solver: SolverConfig {
                max_sweeps: 200,
                stall_tol: 1e-6,
                feas_tol: 1e-6,
                ..SolverConfig::default()
            },
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors == 0 {
            return Err(Error::Config("k_neighbors must be at least 1".into()));
        }
        if self.c_grid.is_empty() || self.c_grid.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::Config("c_grid must be a non-empty list of positive values".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::Config("split_fraction must lie in (0, 1)".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        self.solver.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub method: String,
    pub per_repeat: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Selected `c` per repeat (empty for the identity metric).
    pub chosen_c: Vec<f64>,
    /// Selected `(b_ub, b_lb)` per repeat for fixed thresholds.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub chosen_thresholds: Vec<(f64, f64)>,
    /// Recovered `b₀` per repeat for auto-tuned thresholds.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub b0: Vec<f64>,
    pub seed: u64,
    pub config: ExperimentConfig,
}

impl ExperimentReport {
    pub fn from_accuracies(method: &Method, per_repeat: Vec<f64>, config: &ExperimentConfig) -> Self {
        let (mean, std) = mean_std(&per_repeat);
        Self {
            method: method.tag().to_string(),
            per_repeat,
            mean,
            std,
            chosen_c: Vec::new(),
            chosen_thresholds: Vec::new(),
            b0: Vec::new(),
            seed: config.seed,
            config: config.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Majority label among the `k` nearest training examples. Distance ties go
/// to the lower index; vote ties go to the label of the nearest member of the
/// tied labels.
pub fn knn_predict<'a, T: Real>(
    train: &'a LabeledDataset<T>,
    w: &MetricParams<T>,
    query: &FeatureSet<T>,
    k: usize,
) -> Result<&'a str> {
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if k == 0 || k > train.len() {
        return Err(Error::Config(format!(
            "k = {k} neighbours requested from {} training examples",
            train.len()
        )));
    }
    let mut ranked = Vec::with_capacity(train.len());
    for (i, ex) in train.examples().iter().enumerate() {
        ranked.push((distance(query, ex, w)?, i));
    }
    ranked.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    let nearest = &ranked[..k];
    let mut votes: HashMap<&str, usize> = HashMap::new();
    for &(_, i) in nearest {
        *votes.entry(train.label(i)).or_default() += 1;
    }
    let top = votes.values().copied().max().unwrap_or(0);
    let winner = nearest
        .iter()
        .map(|&(_, i)| train.label(i))
        .find(|l| votes[l] == top)
        .expect("at least one neighbour");
    Ok(winner)
}

/// Fraction of `test` classified correctly by `k`-NN over `train`.
pub fn accuracy<T: Real>(
    train: &LabeledDataset<T>,
    test: &LabeledDataset<T>,
    w: &MetricParams<T>,
    k: usize,
) -> Result<f64> {
    if train.profile() != test.profile() {
        return dim_err(format!(
            "train profile {:?} vs test profile {:?}",
            train.profile(),
            test.profile()
        ));
    }
    if test.is_empty() {
        return Err(Error::Config("test set is empty".into()));
    }
    let hits: Result<Vec<bool>> = (0..test.len())
        .into_par_iter()
        .map(|i| Ok(knn_predict(train, w, test.example(i), k)? == test.label(i)))
        .collect();
    let hits = hits?.into_iter().filter(|&h| h).count();
    Ok(hits as f64 / test.len() as f64)
}

/// Derives a well-mixed per-purpose seed.
fn sub_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut z = seed
        ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (index.wrapping_add(1)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SPLIT_TAG: u64 = 1;
const FOLD_TAG: u64 = 2;
const CONSTRAINT_TAG: u64 = 3;

/// Trains a metric on fixed constraints.
pub fn fit_with_constraints<T: Real>(
    cs: &ConstraintSet<T>,
    profile: &[(usize, usize)],
    method: &Method,
    c: f64,
    thresholds: Option<(f64, f64)>,
    cfg: &ExperimentConfig,
) -> Result<FitResult<T>> {
    let w0 = MetricParams::identity(profile);
    let mode = match (method, thresholds) {
        (Method::Tatml, _) => Mode::AutoTune,
        (Method::FixedThreshold { .. }, Some((b_ub, b_lb))) => Mode::FixedThreshold { b_ub, b_lb },
        (Method::FixedThreshold { .. }, None) => {
            return Err(Error::Config("fixed-threshold fit needs thresholds".into()))
        }
        (Method::Euc, _) => return Err(Error::Config("the identity metric is not fitted".into())),
    };
    let td = derive_params(&ThresholdConfig::new(
        lit::<T>(c),
        lit(cfg.c0),
        lit(cfg.mu0),
        cs.k_plus(),
        cs.k_minus(),
    ))?;
    let solver = SolverConfig { mode, ..cfg.solver.clone() };
    let res = fit(cs, &td, &solver, &w0)?;
    if !res.diagnostics.converged {
        warn!(
            "fit (c = {c}) stopped after {} sweeps, residual {:e}",
            res.diagnostics.sweeps, res.diagnostics.feasibility_residual
        );
    }
    Ok(res)
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
fn stratified_folds<T: Real>(data: &LabeledDataset<T>, folds: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); folds];
    for class in data.classes() {
        let mut idx = data.indices_of(&class);
        idx.shuffle(rng);
        for (pos, i) in idx.into_iter().enumerate() {
            out[pos % folds].push(i);
        }
    }
    for f in &mut out {
        f.sort_unstable();
    }
    out
}

/// Outcome of cross-validation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CvChoice {
    pub c: f64,
    pub thresholds: Option<(f64, f64)>,
}

/// Picks `c` (and, for fixed thresholds, the threshold pair) with the best
/// mean validation accuracy over stratified folds of `train`. Ties go to
/// the smaller `c`, then to the earlier threshold candidate.
pub fn cross_validate_c<T: Real>(
    train: &LabeledDataset<T>,
    cfg: &ExperimentConfig,
    method: &Method,
    seed: u64,
) -> Result<CvChoice> {
    cfg.validate()?;
    let mut grid = cfg.c_grid.clone();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite c"));
    grid.dedup();
    let thresholds: Vec<Option<(f64, f64)>> = match method {
        Method::Tatml => vec![None],
        Method::FixedThreshold { candidates } if !candidates.is_empty() => {
            candidates.iter().copied().map(Some).collect()
        }
        Method::FixedThreshold { .. } => {
            return Err(Error::Config("no threshold candidates given".into()))
        }
        Method::Euc => return Err(Error::Config("the identity metric has nothing to tune".into())),
    };
    let candidates: Vec<(f64, Option<(f64, f64)>)> = grid
        .iter()
        .flat_map(|&c| thresholds.iter().map(move |&t| (c, t)))
        .collect();
    if candidates.len() == 1 {
        return Ok(CvChoice {
            c: candidates[0].0,
            thresholds: candidates[0].1,
        });
    }

    let smallest = train
        .classes()
        .iter()
        .map(|c| train.indices_of(c).len())
        .min()
        .unwrap_or(0);
    let mut folds = cfg.folds;
    if smallest < folds {
        warn!("smallest class has {smallest} examples; falling back to 2-fold cross-validation");
        folds = 2;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, FOLD_TAG, 0));
    let assignment = stratified_folds(train, folds, &mut rng);

    let mut splits = Vec::with_capacity(folds);
    for (f, val_idx) in assignment.iter().enumerate() {
        let train_idx: Vec<usize> = (0..train.len()).filter(|i| !val_idx.contains(i)).collect();
        let fold_train = train.subset(&train_idx)?;
        let fold_val = train.subset(val_idx)?;
        let mut crng = ChaCha8Rng::seed_from_u64(sub_seed(seed, CONSTRAINT_TAG, f as u64 + 1));
        let cs = build_constraints(
            &fold_train,
            cfg.per_class_similar,
            cfg.per_class_dissimilar,
            &mut crng,
        )?;
        splits.push((fold_train, fold_val, cs));
    }

    let jobs: Vec<(usize, usize)> = (0..candidates.len())
        .flat_map(|ci| (0..splits.len()).map(move |f| (ci, f)))
        .collect();
    let scores: Result<Vec<f64>> = jobs
        .par_iter()
        .map(|&(ci, f)| {
            let (fold_train, fold_val, cs) = &splits[f];
            let (c, thr) = candidates[ci];
            let res = fit_with_constraints(cs, fold_train.profile(), method, c, thr, cfg)?;
            let k = cfg.k_neighbors.min(fold_train.len());
            accuracy(fold_train, fold_val, &res.w, k)
        })
        .collect();
    let scores = scores?;

    let mut best: Option<(f64, usize)> = None;
    for ci in 0..candidates.len() {
        let mean = scores[ci * splits.len()..(ci + 1) * splits.len()].iter().sum::<f64>()
            / splits.len() as f64;
        if best.is_none_or(|(b, _)| mean > b) {
            best = Some((mean, ci));
        }
    }
    let (_, ci) = best.expect("non-empty candidates");
    Ok(CvChoice {
        c: candidates[ci].0,
        thresholds: candidates[ci].1,
    })
}

/// Stratified split with `floor(fraction · n)` training examples per class,
/// kept within `[1, n−1]` whenever a class has at least two examples.
pub fn stratified_split<T: Real>(
    data: &LabeledDataset<T>,
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in data.classes() {
        let mut idx = data.indices_of(&class);
        idx.shuffle(rng);
        let n = idx.len();
        let mut n_train = (fraction * n as f64).floor() as usize;
        if n >= 2 {
            n_train = n_train.clamp(1, n - 1);
        }
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

struct RepeatOutcome {
    accuracy: f64,
    c: Option<f64>,
    thresholds: Option<(f64, f64)>,
    b0: Option<f64>,
}

/// Repeated random train/test evaluation of one method.
pub fn run_experiment<T: Real>(
    data: &LabeledDataset<T>,
    method: &Method,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let outcomes: Result<Vec<RepeatOutcome>> = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| run_repeat(data, method, cfg, r as u64))
        .collect();
    let outcomes = outcomes?;
    let mut report = ExperimentReport::from_accuracies(
        method,
        outcomes.iter().map(|o| o.accuracy).collect(),
        cfg,
    );
    report.chosen_c = outcomes.iter().filter_map(|o| o.c).collect();
    report.chosen_thresholds = outcomes.iter().filter_map(|o| o.thresholds).collect();
    report.b0 = outcomes.iter().filter_map(|o| o.b0).collect();
    Ok(report)
}

fn run_repeat<T: Real>(
    data: &LabeledDataset<T>,
    method: &Method,
    cfg: &ExperimentConfig,
    r: u64,
) -> Result<RepeatOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, SPLIT_TAG, r));
    let (train_idx, test_idx) = stratified_split(data, cfg.split_fraction, &mut rng);
    let train = data.subset(&train_idx)?;
    let test = data.subset(&test_idx)?;
    let k = cfg.k_neighbors.min(train.len());
    if let Method::Euc = method {
        let w = MetricParams::identity(train.profile());
        return Ok(RepeatOutcome {
            accuracy: accuracy(&train, &test, &w, k)?,
            c: None,
            thresholds: None,
            b0: None,
        });
    }
    let repeat_seed = sub_seed(cfg.seed, CONSTRAINT_TAG, 1000 + r);
    let choice = cross_validate_c(&train, cfg, method, repeat_seed)?;
    let mut crng = ChaCha8Rng::seed_from_u64(repeat_seed);
    let cs = build_constraints(&train, cfg.per_class_similar, cfg.per_class_dissimilar, &mut crng)?;
    let res = fit_with_constraints(&cs, train.profile(), method, choice.c, choice.thresholds, cfg)?;
    Ok(RepeatOutcome {
        accuracy: accuracy(&train, &test, &res.w, k)?,
        c: Some(choice.c),
        thresholds: choice.thresholds,
        b0: res.b0.map(to_f64),
    })
}

/// Mean accuracies of the auto-tuned method over a `c₀ × μ₀` grid, all
/// cells sharing the same split seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub c0_grid: Vec<f64>,
    pub mu0_grid: Vec<f64>,
    /// `accuracy[i][j]` for `c0_grid[i]`, `mu0_grid[j]`.
    pub accuracy: Vec<Vec<f64>>,
    pub spread: f64,
}

pub fn hyperparameter_sweep<T: Real>(
    data: &LabeledDataset<T>,
    cfg: &ExperimentConfig,
    c0_grid: &[f64],
    mu0_grid: &[f64],
) -> Result<SweepReport> {
    if c0_grid.is_empty() || mu0_grid.is_empty() {
        return Err(Error::Config("sweep grids must be non-empty".into()));
    }
    let cells: Vec<(usize, usize)> = (0..c0_grid.len())
        .flat_map(|i| (0..mu0_grid.len()).map(move |j| (i, j)))
        .collect();
    let means: Result<Vec<f64>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let cell_cfg = ExperimentConfig {
                c0: c0_grid[i],
                mu0: mu0_grid[j],
                ..cfg.clone()
            };
            Ok(run_experiment(data, &Method::Tatml, &cell_cfg)?.mean)
        })
        .collect();
    let means = means?;
    let accuracy: Vec<Vec<f64>> = means.chunks(mu0_grid.len()).map(|r| r.to_vec()).collect();
    let max = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = means.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SweepReport {
        c0_grid: c0_grid.to_vec(),
        mu0_grid: mu0_grid.to_vec(),
        accuracy,
        spread: max - min,
    })
}
