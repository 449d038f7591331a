//! Gradient-based optimization of declarative cost graphs.

mod graph;
mod lbfgsb;
mod transforms;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::NoiseKey;

pub use graph::{
    BoundSpec, ComponentValue, CostGraph, CostTerm, CustomFactory, CustomObjective, GraphSpec, NodeSpec,
    ObjectiveRegistry, PsdSpec, VariableBlock,
};
pub use lbfgsb::{minimize_bounded, projected_gradient_norm, LocalRun, StopCriteria, StopReason};
pub use transforms::{crab_matrix, lti_matrix, sine_integral, symmetrize, Basis, Kernel};

/// A differentiable scalar function of a real vector.
pub trait Objective: Sync {
    fn dimension(&self) -> usize;
    fn value_and_gradient(&self, v: &[f64]) -> Result<(f64, Vec<f64>)>;
    fn value(&self, v: &[f64]) -> Result<f64> {
        Ok(self.value_and_gradient(v)?.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub starts: usize,
    pub seed: u64,
    #[serde(default)]
    pub stop: StopCriteria,
    /// Used as the first start instead of a random point.
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
}

impl MinimizeOptions {
    pub fn new(starts: usize, seed: u64) -> Self {
        Self { starts, seed, stop: StopCriteria::default(), initial: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub index: usize,
    pub initial: Vec<f64>,
    pub variables: Option<Vec<f64>>,
    pub cost: Option<f64>,
    /// Best-so-far cost after each iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub reason: Option<StopReason>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub variables: Vec<f64>,
    pub cost: f64,
    pub best_start: usize,
    pub seed: u64,
    pub iterations: usize,
    pub evaluations: usize,
    pub starts: Vec<StartRecord>,
}

/// Uniform point inside the box; half-infinite and infinite ranges draw
/// within one unit of the finite bound or of zero.
pub fn random_start(lower: &[f64], upper: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    lower
        .iter()
        .zip(upper)
        .map(|(&l, &u)| {
            let (a, b) = match (l.is_finite(), u.is_finite()) {
                (true, true) => (l, u),
                (true, false) => (l, l + 1.0),
                (false, true) => (u - 1.0, u),
                (false, false) => (-1.0, 1.0),
            };
            if a == b {
                a
            } else {
                rng.random_range(a..=b)
            }
        })
        .collect()
}

/// Multi-start bounded minimization. Starts run in parallel, each from its
/// own random stream; results are merged by start index so the outcome is
/// independent of scheduling.
pub fn minimize<O: Objective + ?Sized>(
    objective: &O,
    lower: &[f64],
    upper: &[f64],
    opts: &MinimizeOptions,
) -> Result<OptimizationResult> {
    let n = objective.dimension();
    if lower.len() != n || upper.len() != n {
        return Err(Error::Shape(format!("bounds must have {n} entries")));
    }
    if opts.starts == 0 {
        return Err(Error::InvalidInput("at least one start is required".into()));
    }
    if let Some(x) = &opts.initial {
        if x.len() != n {
            return Err(Error::Shape(format!("initial point must have {n} entries")));
        }
    }
    let records: Vec<StartRecord> = (0..opts.starts)
        .into_par_iter()
        .map(|index| {
            let initial = match (&opts.initial, index) {
                (Some(x), 0) => x.clone(),
                _ => {
                    let mut rng = NoiseKey { seed: opts.seed, channel: u32::MAX, trial: index as u32 }.rng();
                    random_start(lower, upper, &mut rng)
                }
            };
            let run = minimize_bounded(|x| objective.value_and_gradient(x), &initial, lower, upper, &opts.stop);
            match run {
                Ok(run) => {
                    let mut best = f64::INFINITY;
                    let history = run
                        .history
                        .iter()
                        .map(|&c| {
                            best = best.min(c);
                            best
                        })
                        .collect();
                    StartRecord {
                        index,
                        initial,
                        variables: Some(run.x),
                        cost: Some(run.cost),
                        history,
                        iterations: run.iterations,
                        evaluations: run.evaluations,
                        reason: Some(run.reason),
                        error: None,
                    }
                }
                Err(e) => StartRecord {
                    index,
                    initial,
                    variables: None,
                    cost: None,
                    history: vec![],
                    iterations: 0,
                    evaluations: 1,
                    reason: Some(StopReason::EvaluationFailed),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let best = records
        .iter()
        .filter_map(|r| r.cost.filter(|c| c.is_finite()).map(|c| (r.index, c)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .ok_or_else(|| {
            let msg = records.iter().find_map(|r| r.error.clone()).unwrap_or_default();
            Error::Optimization(format!("every start failed: {msg}"))
        })?;
    Ok(OptimizationResult {
        variables: records[best.0].variables.clone().expect("successful start"),
        cost: best.1,
        best_start: best.0,
        seed: opts.seed,
        iterations: records.iter().map(|r| r.iterations).sum(),
        evaluations: records.iter().map(|r| r.evaluations).sum(),
        starts: records,
    })
}

/// Comparison of an analytic gradient against central differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// `max_i |numeric_i − analytic_i| / max(‖analytic‖_∞, floor)`.
    pub relative_error: f64,
}

/// Central differences with step `rel_step · max(|v_i|, 1)`.
pub fn check_gradient<F>(f: F, v: &[f64], rel_step: f64) -> Result<GradientCheck>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (_, analytic) = f(v)?;
    let mut numeric = Vec::with_capacity(v.len());
    let mut x = v.to_vec();
    for i in 0..v.len() {
        let h = rel_step * v[i].abs().max(1.0);
        x[i] = v[i] + h;
        let fp = f(&x)?.0;
        x[i] = v[i] - h;
        let fm = f(&x)?.0;
        x[i] = v[i];
        numeric.push((fp - fm) / (2.0 * h));
    }
    let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-300);
    let err = analytic.iter().zip(&numeric).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(GradientCheck { analytic, numeric, relative_error: err / scale })
}
