//! Maximum-likelihood estimation of Hamiltonian parameters.
//!
//! Experiments evolve a state under `H_m(t, θ) = α_m(t) Q(θ)` with
//! `Q(θ) = Q₀ + Σ_i θ_i Q_i` and record `Y_m = ⟨ψ_m|U†O_mU|ψ_m⟩`. Estimates
//! minimize `C(θ) = Σ_m (Y_m(θ) − y_m)² / (2Δy_m²)`; the Hessian of `C` at
//! the minimum is the Fisher information and its inverse the covariance.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{PwcOperator, Segmentation};
use crate::error::{Error, Result};
use crate::filter::Timeline;
use crate::json::{MatrixJson, VectorJson};
use crate::linalg::{c, is_hermitian, re_inner, CMat, CVec};
use crate::noise::NoiseKey;
use crate::optimizer::{minimize_bounded, random_start, Objective, StopCriteria};

/// `Q(θ) = Q₀ + Σ_i θ_i Q_i`.
#[derive(Debug, Clone)]
pub struct ParameterModel {
    pub names: Vec<String>,
    pub constant: CMat,
    pub generators: Vec<CMat>,
}

impl ParameterModel {
    pub fn new(names: Vec<String>, constant: CMat, generators: Vec<CMat>) -> Result<Self> {
        if generators.is_empty() || names.len() != generators.len() {
            return Err(Error::InvalidInput("one name per generator, at least one generator".into()));
        }
        let d = constant.nrows();
        for g in generators.iter().chain(std::iter::once(&constant)) {
            if g.nrows() != d || g.ncols() != d {
                return Err(Error::Shape("generator dimensions differ".into()));
            }
            if !is_hermitian(g, 1e-10) {
                return Err(Error::InvalidInput("generators must be Hermitian".into()));
            }
        }
        Ok(Self { names, constant, generators })
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.constant.nrows()
    }

    pub fn operator(&self, theta: &[f64]) -> CMat {
        let mut q = self.constant.clone();
        for (g, &t) in self.generators.iter().zip(theta) {
            q += g * c(t, 0.0);
        }
        q
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub duration: f64,
    pub initial: CVec,
    pub observable: CMat,
    /// Uniform PWC envelope `α_m(t)` over the duration.
    pub pulse: Vec<f64>,
}

impl Experiment {
    /// Free evolution under `Q(θ)` for `duration`.
    pub fn wait(duration: f64, initial: CVec, observable: CMat) -> Result<Self> {
        Self::new(duration, initial, observable, vec![1.0])
    }

    pub fn new(duration: f64, initial: CVec, observable: CMat, pulse: Vec<f64>) -> Result<Self> {
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(Error::InvalidInput(format!("experiment duration must be ≥ 0, got {duration}")));
        }
        if pulse.is_empty() {
            return Err(Error::InvalidInput("pulse needs at least one segment".into()));
        }
        if (initial.norm() - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidInput("initial state must be normalized".into()));
        }
        if !is_hermitian(&observable, 1e-10) {
            return Err(Error::InvalidInput("observable must be Hermitian".into()));
        }
        if observable.nrows() != initial.len() {
            return Err(Error::Shape("observable and state dimensions differ".into()));
        }
        Ok(Self { duration, initial, observable, pulse })
    }
}

/// Expectation value of one experiment and its gradient with respect to θ.
fn predict_one(model: &ParameterModel, exp: &Experiment, theta: &[f64], grad: bool) -> Result<(f64, Vec<f64>)> {
    let q = model.operator(theta);
    let d = q.nrows();
    if exp.duration == 0.0 {
        let y = exp.initial.dotc(&(&exp.observable * &exp.initial)).re;
        return Ok((y, vec![0.0; model.len()]));
    }
    let seg = Segmentation::uniform(exp.pulse.len(), exp.duration)?;
    let h = PwcOperator::new(exp.pulse.iter().map(|&a| &q * c(a, 0.0)).collect(), seg)?;
    let tl = Timeline::new(&h, &[exp.duration])?;
    let u = tl.sample_unitaries()[0];
    let psi = u * &exp.initial;
    let o_psi = &exp.observable * &psi;
    let y = psi.dotc(&o_psi).re;
    if !grad {
        return Ok((y, vec![]));
    }
    // dY = 2 Re ψ₀† U† O dU ψ₀
    let u_bar = &o_psi * exp.initial.adjoint() * c(2.0, 0.0);
    let h_bars = tl.backward(&[u_bar]);
    let mut q_bar = CMat::zeros(d, d);
    for (hb, &a) in h_bars.iter().zip(&exp.pulse) {
        q_bar += hb * c(a, 0.0);
    }
    Ok((y, model.generators.iter().map(|g| re_inner(&q_bar, g)).collect()))
}

/// `Y_m(θ)` for every experiment.
pub fn predicted_values(model: &ParameterModel, experiments: &[Experiment], theta: &[f64]) -> Result<Vec<f64>> {
    check_theta(model, theta)?;
    experiments.iter().map(|e| predict_one(model, e, theta, false).map(|r| r.0)).collect()
}

fn check_theta(model: &ParameterModel, theta: &[f64]) -> Result<()> {
    if theta.len() != model.len() {
        return Err(Error::Shape(format!("{} parameters for {} generators", theta.len(), model.len())));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub value: f64,
    pub std_dev: f64,
}

fn check_data(experiments: &[Experiment], data: &[DataPoint]) -> Result<()> {
    if data.len() != experiments.len() {
        return Err(Error::Shape(format!("{} data points for {} experiments", data.len(), experiments.len())));
    }
    if let Some(d) = data.iter().find(|d| !(d.std_dev > 0.0)) {
        return Err(Error::InvalidInput(format!("standard deviations must be positive, got {}", d.std_dev)));
    }
    Ok(())
}

/// Negative log-likelihood up to a constant.
#[derive(Clone, Copy)]
pub struct Likelihood<'a> {
    pub model: &'a ParameterModel,
    pub experiments: &'a [Experiment],
    pub data: &'a [DataPoint],
}

impl<'a> Likelihood<'a> {
    pub fn new(model: &'a ParameterModel, experiments: &'a [Experiment], data: &'a [DataPoint]) -> Result<Self> {
        check_data(experiments, data)?;
        Ok(Self { model, experiments, data })
    }

    pub fn cost(&self, theta: &[f64]) -> Result<f64> {
        let y = predicted_values(self.model, self.experiments, theta)?;
        Ok(y.iter().zip(self.data).map(|(y, d)| (y - d.value).powi(2) / (2.0 * d.std_dev * d.std_dev)).sum())
    }

    pub fn cost_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_theta(self.model, theta)?;
        let mut cost = 0.0;
        let mut grad = vec![0.0; theta.len()];
        for (e, d) in self.experiments.iter().zip(self.data) {
            let (y, g) = predict_one(self.model, e, theta, true)?;
            let r = y - d.value;
            let var = d.std_dev * d.std_dev;
            cost += r * r / (2.0 * var);
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += r / var * b);
        }
        Ok((cost, grad))
    }

    /// Gauss–Newton information `Jᵀ W J` with `W = diag(1/Δy²)`.
    pub fn gauss_newton(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let n = theta.len();
        let mut info = DMatrix::zeros(n, n);
        for (e, d) in self.experiments.iter().zip(self.data) {
            let (_, g) = predict_one(self.model, e, theta, true)?;
            let g = DVector::from_column_slice(&g);
            info += &g * g.transpose() / (d.std_dev * d.std_dev);
        }
        Ok(info)
    }
}

/// `C(θ)` of the Gaussian likelihood.
pub fn likelihood_cost(model: &ParameterModel, experiments: &[Experiment], data: &[DataPoint], theta: &[f64]) -> Result<f64> {
    Likelihood::new(model, experiments, data)?.cost(theta)
}

/// Symmetrized central-difference Hessian with one Richardson refinement.
/// Steps are `rel_step · max(|θ_i|, scale_i)`.
pub fn fisher_information<F>(cost: F, theta: &[f64], scales: &[f64], rel_step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let n = theta.len();
    if scales.len() != n {
        return Err(Error::Shape("one scale per parameter is required".into()));
    }
    let hessian = |factor: f64| -> Result<DMatrix<f64>> {
        let h: Vec<f64> = theta.iter().zip(scales).map(|(t, s)| factor * rel_step * t.abs().max(*s)).collect();
        let eval = |i: usize, si: f64, j: usize, sj: f64| -> Result<f64> {
            let mut x = theta.to_vec();
            x[i] += si * h[i];
            x[j] += sj * h[j];
            cost(&x)
        };
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = (eval(i, 1.0, j, 1.0)? - eval(i, 1.0, j, -1.0)? - eval(i, -1.0, j, 1.0)?
                    + eval(i, -1.0, j, -1.0)?)
                    / (4.0 * h[i] * h[j]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(m)
    };
    let coarse = hessian(1.0)?;
    let fine = hessian(0.5)?;
    let r = (fine * 4.0 - coarse) / 3.0;
    Ok((&r + r.transpose()) * 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub names: Vec<String>,
    pub estimate: Vec<f64>,
    pub cost: f64,
    pub fisher: Vec<Vec<f64>>,
    /// `None` when the Fisher matrix cannot be inverted.
    pub covariance: Option<Vec<Vec<f64>>>,
    /// `2√diag(V)`.
    pub errors: Option<Vec<f64>>,
    /// Smallest Fisher eigenvalue fell below `−1e-8 · trace`.
    pub indefinite: bool,
    pub starts: usize,
    pub seed: u64,
    pub start_costs: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentifyOptions {
    pub starts: usize,
    pub seed: u64,
    /// Per-parameter bounds; `None` uses `±π/Δt` from the experiment
    /// durations.
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub hessian_step: f64,
    pub stop: StopCriteria,
    /// Each start is first fitted to the experiments no longer than these
    /// fractions of the longest duration, in order, before the full fit.
    pub continuation: Vec<f64>,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        Self {
            starts: 30,
            seed: 0,
            lower: None,
            upper: None,
            hessian_step: 1e-4,
            stop: StopCriteria { grad_tol: 1e-9, cost_tol: 1e-14, ..StopCriteria::default() },
            continuation: vec![0.15, 0.4],
        }
    }
}

/// Smallest spacing between distinct experiment durations.
pub fn time_step(experiments: &[Experiment]) -> Option<f64> {
    let mut t: Vec<f64> = experiments.iter().map(|e| e.duration).collect();
    t.sort_by(f64::total_cmp);
    t.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(b.abs()));
    t.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).reduce(f64::min)
}

/// `π/Δt` for the experiment list.
pub fn nyquist_bound(experiments: &[Experiment]) -> Result<f64> {
    time_step(experiments)
        .map(|dt| PI / dt)
        .ok_or_else(|| Error::InvalidInput("need at least two distinct durations for the Nyquist bound".into()))
}

/// The likelihood in units of the per-parameter scale, `θ = s ⊙ u`.
struct Scaled<'a> {
    lik: Likelihood<'a>,
    scale: Vec<f64>,
}

impl Objective for Scaled<'_> {
    fn dimension(&self) -> usize {
        self.scale.len()
    }

    fn value_and_gradient(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        let theta: Vec<f64> = u.iter().zip(&self.scale).map(|(a, s)| a * s).collect();
        let (v, g) = self.lik.cost_and_gradient(&theta)?;
        Ok((v, g.iter().zip(&self.scale).map(|(a, s)| a * s).collect()))
    }
}

/// Multi-start maximum-likelihood fit followed by the Cramér–Rao
/// covariance.
pub fn identify(
    model: &ParameterModel,
    experiments: &[Experiment],
    data: &[DataPoint],
    opts: &IdentifyOptions,
) -> Result<EstimationResult> {
    let lik = Likelihood::new(model, experiments, data)?;
    let n = model.len();
    let (lower, upper) = match (&opts.lower, &opts.upper) {
        (Some(l), Some(u)) => (l.clone(), u.clone()),
        (None, None) => {
            let b = nyquist_bound(experiments)?;
            (vec![-b; n], vec![b; n])
        }
        _ => return Err(Error::InvalidInput("give both lower and upper bounds or neither".into())),
    };
    if lower.len() != n || upper.len() != n || lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
        return Err(Error::InvalidInput("bounds must be ordered, one pair per parameter".into()));
    }
    if lower.iter().chain(&upper).any(|b| !b.is_finite()) {
        return Err(Error::InvalidInput("bounds must be finite".into()));
    }
    if opts.starts == 0 {
        return Err(Error::InvalidInput("at least one start is required".into()));
    }
    if opts.continuation.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(Error::InvalidInput("continuation fractions must lie in (0, 1]".into()));
    }
    let scale: Vec<f64> = lower.iter().zip(&upper).map(|(l, u)| l.abs().max(u.abs())).collect();
    let lo: Vec<f64> = lower.iter().zip(&scale).map(|(b, s)| b / s).collect();
    let hi: Vec<f64> = upper.iter().zip(&scale).map(|(b, s)| b / s).collect();
    let longest = experiments.iter().map(|e| e.duration).fold(0.0, f64::max);
    let mut stages = vec![];
    for f in &opts.continuation {
        let keep: Vec<usize> = (0..experiments.len()).filter(|&i| experiments[i].duration <= f * longest * (1.0 + 1e-12)).collect();
        let e: Vec<Experiment> = keep.iter().map(|&i| experiments[i].clone()).collect();
        let d: Vec<DataPoint> = keep.iter().map(|&i| data[i]).collect();
        // too few points to constrain every parameter
        if d.len() > n {
            stages.push((e, d));
        }
    }
    let obj = Scaled { lik, scale: scale.clone() };
    let run = |index: usize| -> Result<(Vec<f64>, f64)> {
        let mut rng = NoiseKey { seed: opts.seed, channel: u32::MAX, trial: index as u32 }.rng();
        let mut x = random_start(&lo, &hi, &mut rng);
        for (e, d) in &stages {
            let part = Scaled { lik: Likelihood::new(model, e, d)?, scale: scale.clone() };
            x = minimize_bounded(|u| part.value_and_gradient(u), &x, &lo, &hi, &opts.stop)?.x;
        }
        let r = minimize_bounded(|u| obj.value_and_gradient(u), &x, &lo, &hi, &opts.stop)?;
        Ok((r.x, r.cost))
    };
    let runs: Vec<Option<(Vec<f64>, f64)>> =
        (0..opts.starts).into_par_iter().map(|i| run(i).ok().filter(|r| r.1.is_finite())).collect();
    let best = runs
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().map(|r| (i, r.1)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .ok_or_else(|| Error::Optimization("every start failed".into()))?;
    let (variables, cost) = runs[best.0].clone().expect("best start");
    let start_costs: Vec<Option<f64>> = runs.iter().map(|r| r.as_ref().map(|r| r.1)).collect();
    let estimate: Vec<f64> = variables.iter().zip(&scale).map(|(a, s)| a * s).collect();
    let fisher = fisher_information(|t| lik.cost(t), &estimate, &scale, opts.hessian_step)?;
    let trace = fisher.trace();
    let min_eig = fisher.clone().symmetric_eigen().eigenvalues.min();
    let indefinite = min_eig < -1e-8 * trace.abs();
    let covariance = if indefinite { None } else { fisher.clone().try_inverse() };
    let covariance = covariance.filter(|v| v.iter().all(|x| x.is_finite()) && (0..n).all(|i| v[(i, i)] >= 0.0));
    let errors = covariance.as_ref().map(|v| (0..n).map(|i| 2.0 * v[(i, i)].sqrt()).collect());
    let to_rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    Ok(EstimationResult {
        names: model.names.clone(),
        estimate,
        cost,
        fisher: to_rows(&fisher),
        covariance: covariance.as_ref().map(to_rows),
        errors,
        indefinite,
        starts: opts.starts,
        seed: opts.seed,
        start_costs,
    })
}

/// Model predictions at `theta` with Gaussian noise of the given standard
/// deviation.
pub fn synthesize(
    model: &ParameterModel,
    experiments: &[Experiment],
    theta: &[f64],
    std_dev: f64,
    seed: u64,
) -> Result<Vec<DataPoint>> {
    if !(std_dev >= 0.0) {
        return Err(Error::InvalidInput("standard deviation must be ≥ 0".into()));
    }
    let y = predicted_values(model, experiments, theta)?;
    let mut rng = NoiseKey { seed, channel: 0, trial: 0 }.rng();
    let normal = Normal::new(0.0, std_dev).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(y.into_iter()
        .map(|v| DataPoint { value: v + normal.sample(&mut rng), std_dev: std_dev.max(f64::MIN_POSITIVE) })
        .collect())
}

/// Repeats [`identify`] on independently synthesized data sets.
pub fn repeated_estimates(
    model: &ParameterModel,
    experiments: &[Experiment],
    theta: &[f64],
    std_dev: f64,
    seeds: &[u64],
    opts: &IdentifyOptions,
) -> Result<Vec<EstimationResult>> {
    seeds
        .par_iter()
        .map(|&s| {
            let data = synthesize(model, experiments, theta, std_dev, s)?;
            identify(model, experiments, &data, &IdentifyOptions { seed: s, ..opts.clone() })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelJson {
    pub names: Vec<String>,
    #[serde(default)]
    pub constant: Option<MatrixJson>,
    pub generators: Vec<MatrixJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentJson {
    pub duration: f64,
    pub initial: VectorJson,
    pub observable: MatrixJson,
    #[serde(default)]
    pub pulse: Option<Vec<f64>>,
}

/// File format for a model and its experiments.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentFile {
    pub model: ModelJson,
    pub experiments: Vec<ExperimentJson>,
    #[serde(default)]
    pub lower: Option<Vec<f64>>,
    #[serde(default)]
    pub upper: Option<Vec<f64>>,
}

impl ExperimentFile {
    pub fn from_parts(model: &ParameterModel, experiments: &[Experiment]) -> Self {
        Self {
            model: ModelJson {
                names: model.names.clone(),
                constant: Some(MatrixJson::from_matrix(&model.constant)),
                generators: model.generators.iter().map(MatrixJson::from_matrix).collect(),
            },
            experiments: experiments
                .iter()
                .map(|e| ExperimentJson {
                    duration: e.duration,
                    initial: VectorJson::from_vector(&e.initial),
                    observable: MatrixJson::from_matrix(&e.observable),
                    pulse: Some(e.pulse.clone()),
                })
                .collect(),
            lower: None,
            upper: None,
        }
    }

    pub fn to_parts(&self) -> Result<(ParameterModel, Vec<Experiment>)> {
        let generators = self.model.generators.iter().map(|g| g.to_matrix()).collect::<Result<Vec<_>>>()?;
        let d = generators.first().map(|g| g.nrows()).ok_or_else(|| Error::InvalidInput("no generators".into()))?;
        let constant = match &self.model.constant {
            Some(m) => m.to_matrix()?,
            None => CMat::zeros(d, d),
        };
        let model = ParameterModel::new(self.model.names.clone(), constant, generators)?;
        let experiments = self
            .experiments
            .iter()
            .map(|e| {
                Experiment::new(
                    e.duration,
                    e.initial.to_vector(),
                    e.observable.to_matrix()?,
                    e.pulse.clone().unwrap_or_else(|| vec![1.0]),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((model, experiments))
    }
}
