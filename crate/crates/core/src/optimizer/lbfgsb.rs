//! Bound-constrained limited-memory quasi-Newton descent.
//!
//! Projected L-BFGS: variables at a bound with the gradient pushing outward
//! are frozen, the two-loop recursion runs on the free ones, and a
//! backtracking Armijo search is done along the projected path.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StopCriteria {
    pub max_iter: usize,
    /// Infinity norm of the projected gradient.
    pub grad_tol: f64,
    /// Relative cost reduction `(f_k − f_{k+1}) / max(|f_k|, |f_{k+1}|, 1)`.
    pub cost_tol: f64,
    /// Stop as soon as the cost falls to this value.
    pub target_cost: Option<f64>,
    pub memory: usize,
}

impl Default for StopCriteria {
    fn default() -> Self {
        Self { max_iter: 10000, grad_tol: 1e-5, cost_tol: 2.2e-9, target_cost: None, memory: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    CostTolerance,
    TargetReached,
    MaxIterations,
    LineSearchFailed,
    EvaluationFailed,
}

#[derive(Debug, Clone)]
pub struct LocalRun {
    pub x: Vec<f64>,
    pub cost: f64,
    /// Cost after every accepted iterate, starting with the initial point.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub reason: StopReason,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((xi, &l), &u) in x.iter_mut().zip(lower).zip(upper) {
        *xi = xi.clamp(l, u);
    }
}

/// Components that are free to move: not pinned at a bound by the gradient.
fn free_mask(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> Vec<bool> {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&l, &u))| {
            let at_lower = xi <= l && gi > 0.0;
            let at_upper = xi >= u && gi < 0.0;
            !(at_lower || at_upper) && l < u
        })
        .collect()
}

pub fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&l, &u))| ((xi - gi).clamp(l, u) - xi).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` within `[lower, upper]` from `x0` (projected onto the box).
///
/// `f` returns the cost and its gradient. An evaluation error at the initial
/// point is returned; later errors stop the run with
/// [`StopReason::EvaluationFailed`] at the last good iterate.
pub fn minimize_bounded<F>(f: F, x0: &[f64], lower: &[f64], upper: &[f64], stop: &StopCriteria) -> Result<LocalRun>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut fx, mut g) = f(&x)?;
    let mut evaluations = 1;
    let mut history = vec![fx];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;

    let reason = loop {
        if let Some(target) = stop.target_cost {
            if fx <= target {
                break StopReason::TargetReached;
            }
        }
        if projected_gradient_norm(&x, &g, lower, upper) <= stop.grad_tol {
            break StopReason::GradientTolerance;
        }
        if iterations >= stop.max_iter {
            break StopReason::MaxIterations;
        }
        let free = free_mask(&x, &g, lower, upper);

        // two-loop recursion restricted to the free variables
        let mut q: Vec<f64> = g.iter().zip(&free).map(|(&gi, &fr)| if fr { gi } else { 0.0 }).collect();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = memory.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|qi| *qi *= gamma);
        }
        for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut d: Vec<f64> = q.iter().zip(&free).map(|(&qi, &fr)| if fr { -qi } else { 0.0 }).collect();
        let steepest: Vec<f64> = g.iter().zip(&free).map(|(&gi, &fr)| if fr { -gi } else { 0.0 }).collect();
        let mut first_step = memory.is_empty();
        if !(dot(&d, &g) < 0.0) || d.iter().any(|v| !v.is_finite()) {
            d = steepest.clone();
            memory.clear();
            first_step = true;
        }

        let mut accepted = None;
        for attempt in 0..2 {
            let dir = if attempt == 0 { &d } else { &steepest };
            let dmax = dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if dmax == 0.0 {
                break;
            }
            let mut alpha = if first_step || attempt == 1 { (1.0 / dmax).min(1.0) } else { 1.0 };
            for _ in 0..60 {
                let mut xn: Vec<f64> = x.iter().zip(dir).map(|(xi, di)| xi + alpha * di).collect();
                project(&mut xn, lower, upper);
                let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
                let decrease = dot(&g, &step);
                if step.iter().all(|s| *s == 0.0) {
                    break;
                }
                match f(&xn) {
                    Ok((fn_, gn)) => {
                        evaluations += 1;
                        if fn_.is_finite() && fn_ <= fx + 1e-4 * decrease && decrease < 0.0 {
                            accepted = Some((xn, fn_, gn));
                            break;
                        }
                    }
                    Err(_) => {
                        evaluations += 1;
                        return Ok(LocalRun {
                            x,
                            cost: fx,
                            history,
                            iterations,
                            evaluations,
                            reason: StopReason::EvaluationFailed,
                        });
                    }
                }
                alpha *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
            memory.clear();
        }
        let Some((xn, fn_, gn)) = accepted else {
            break StopReason::LineSearchFailed;
        };
        iterations += 1;
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if memory.len() == stop.memory.max(1) {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }
        let rel = (fx - fn_) / fx.abs().max(fn_.abs()).max(1.0);
        x = xn;
        fx = fn_;
        g = gn;
        history.push(fx);
        if rel <= stop.cost_tol {
            break StopReason::CostTolerance;
        }
        debug_assert_eq!(x.len(), n);
    };
    Ok(LocalRun { x, cost: fx, history, iterations, evaluations, reason })
}
