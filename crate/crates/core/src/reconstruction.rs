//! Noise spectroscopy: inverting measured infidelities into PSD estimates.
//!
//! The forward model is `Î = F̂ Ŝ`, where every row of the sensitivity
//! matrix holds one control's trapezoid-weighted filter function sampled on
//! the frequency partition. Inversion is either an SVD pseudo-inverse or a
//! nonnegative regularized least-squares fit.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{ControlSolution, Projector};
use crate::error::{Error, Result};
use crate::filter::{filter_function_from_hamiltonian, FilterOptions};
use crate::optimizer::{minimize_bounded, StopCriteria};
use crate::simulator::{control_hamiltonian, NoiseOperator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelGrid {
    pub omega_min: f64,
    pub omega_max: f64,
    pub samples: usize,
}

impl ChannelGrid {
    pub fn new(omega_min: f64, omega_max: f64, samples: usize) -> Result<Self> {
        let g = Self { omega_min, omega_max, samples };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::InvalidInput("a channel grid needs at least two samples".into()));
        }
        if !(self.omega_min >= 0.0 && self.omega_max > self.omega_min && self.omega_max.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "grid must satisfy 0 ≤ ω_min < ω_max, got [{}, {}]",
                self.omega_min, self.omega_max
            )));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.omega_max - self.omega_min) / (self.samples - 1) as f64
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let dw = self.spacing();
        (0..self.samples).map(|l| self.omega_min + l as f64 * dw).collect()
    }

    /// `(Δω/2π) · (½ at both endpoints, 1 elsewhere)`.
    pub fn weights(&self) -> Vec<f64> {
        let dw = self.spacing() / (2.0 * PI);
        (0..self.samples)
            .map(|l| if l == 0 || l + 1 == self.samples { dw / 2.0 } else { dw })
            .collect()
    }
}

/// Frequency samples for every noise channel, concatenated in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrequencyPartition {
    pub channels: Vec<ChannelGrid>,
}

impl FrequencyPartition {
    pub fn new(channels: Vec<ChannelGrid>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidInput("partition has no channels".into()));
        }
        for c in &channels {
            c.validate()?;
        }
        Ok(Self { channels })
    }

    pub fn single(omega_min: f64, omega_max: f64, samples: usize) -> Result<Self> {
        Self::new(vec![ChannelGrid::new(omega_min, omega_max, samples)?])
    }

    pub fn len(&self) -> usize {
        self.channels.iter().map(|c| c.samples).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Start of each channel's block in the concatenated vector.
    pub fn offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.channels
            .iter()
            .map(|c| {
                let o = off;
                off += c.samples;
                o
            })
            .collect()
    }

    /// `(channel, frequency)` of every entry.
    pub fn entries(&self) -> Vec<(usize, f64)> {
        self.channels
            .iter()
            .enumerate()
            .flat_map(|(k, c)| c.frequencies().into_iter().map(move |w| (k, w)))
            .collect()
    }

    /// First-difference matrix applied within each channel block.
    pub fn difference_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        let rows = n - self.channels.len();
        let mut d = DMatrix::zeros(rows, n);
        let mut r = 0;
        for (c, off) in self.channels.iter().zip(self.offsets()) {
            for l in 0..c.samples - 1 {
                d[(r, off + l)] = -1.0;
                d[(r, off + l + 1)] = 1.0;
                r += 1;
            }
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMatrix {
    pub matrix: DMatrix<f64>,
    pub partition: FrequencyPartition,
    /// Label of the control behind each row.
    pub rows: Vec<String>,
}

impl SensitivityMatrix {
    /// Weights raw filter values `values[j][i]` (row `j`, concatenated
    /// partition entry `i`) with the trapezoid rule.
    pub fn from_filter_values(values: &[Vec<f64>], partition: FrequencyPartition, rows: Vec<String>) -> Result<Self> {
        let n = partition.len();
        if values.is_empty() {
            return Err(Error::InvalidInput("at least one control is required".into()));
        }
        if let Some(r) = values.iter().find(|r| r.len() != n) {
            return Err(Error::Shape(format!("filter row has {} values, partition has {n}", r.len())));
        }
        if rows.len() != values.len() {
            return Err(Error::Shape("one label per row is required".into()));
        }
        let w: Vec<f64> = partition.channels.iter().flat_map(|c| c.weights()).collect();
        let matrix = DMatrix::from_fn(values.len(), n, |j, i| values[j][i] * w[i]);
        Ok(Self { matrix, partition, rows })
    }

    /// Wraps an already weighted matrix.
    pub fn from_matrix(matrix: DMatrix<f64>, partition: FrequencyPartition) -> Result<Self> {
        if matrix.ncols() != partition.len() {
            return Err(Error::Shape(format!(
                "matrix has {} columns, partition has {} samples",
                matrix.ncols(),
                partition.len()
            )));
        }
        let rows = (0..matrix.nrows()).map(|j| format!("row{j}")).collect();
        Ok(Self { matrix, partition, rows })
    }

    pub fn forward(&self, psd: &[f64]) -> Result<Vec<f64>> {
        if psd.len() != self.matrix.ncols() {
            return Err(Error::Shape(format!("PSD has {} values, expected {}", psd.len(), self.matrix.ncols())));
        }
        Ok((&self.matrix * DVector::from_column_slice(psd)).iter().copied().collect())
    }
}

/// Filter functions of every control for every channel, weighted into the
/// sensitivity matrix. Controls are evaluated in parallel.
pub fn build_sensitivity(
    controls: &[ControlSolution],
    channels: &[NoiseOperator],
    partition: &FrequencyPartition,
    p: &Projector,
    opts: &FilterOptions,
) -> Result<SensitivityMatrix> {
    if controls.is_empty() {
        return Err(Error::InvalidInput("at least one control is required".into()));
    }
    if channels.len() != partition.channels.len() {
        return Err(Error::Shape(format!(
            "{} noise operators for {} partition channels",
            channels.len(),
            partition.channels.len()
        )));
    }
    let values: Vec<Vec<f64>> = controls
        .par_iter()
        .map(|ctrl| {
            let h = control_hamiltonian(ctrl)?;
            let mut row = Vec::with_capacity(partition.len());
            for (op, grid) in channels.iter().zip(&partition.channels) {
                let ff = filter_function_from_hamiltonian(&h, op, p, &grid.frequencies(), opts)?;
                row.extend(ff.values);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let rows = (0..controls.len()).map(|j| format!("control{j}")).collect();
    SensitivityMatrix::from_filter_values(&values, partition.clone(), rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Svd,
    Co,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructedPsd {
    pub values: Vec<f64>,
    pub partition: FrequencyPartition,
    pub method: Method,
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl ReconstructedPsd {
    /// Values of one channel's block.
    pub fn channel(&self, k: usize) -> &[f64] {
        let off = self.partition.offsets()[k];
        &self.values[off..off + self.partition.channels[k].samples]
    }
}

pub const DEFAULT_SVD_CUTOFF: f64 = 1e-8;

fn check_measurements(f: &SensitivityMatrix, infidelities: &[f64]) -> Result<()> {
    if infidelities.len() != f.matrix.nrows() {
        return Err(Error::Shape(format!(
            "{} infidelities for {} sensitivity rows",
            infidelities.len(),
            f.matrix.nrows()
        )));
    }
    if infidelities.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("infidelities must be finite".into()));
    }
    Ok(())
}

/// `Ŝ = V D⁺ Uᵀ Î`, inverting singular values above `cutoff · s_max`.
pub fn reconstruct_svd(f: &SensitivityMatrix, infidelities: &[f64], cutoff: f64) -> Result<ReconstructedPsd> {
    check_measurements(f, infidelities)?;
    let svd = f.matrix.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    if !(s_max > 0.0) {
        return Err(Error::Numerical("sensitivity matrix is zero".into()));
    }
    let u = svd.u.as_ref().expect("U requested");
    let vt = svd.v_t.as_ref().expect("Vᵀ requested");
    let y = DVector::from_column_slice(infidelities);
    let mut x = DVector::zeros(f.matrix.ncols());
    let mut kept = 0;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff * s_max {
            kept += 1;
            let coef = u.column(i).dot(&y) / s;
            x += vt.row(i).transpose() * coef;
        }
    }
    if kept == 0 {
        return Err(Error::Numerical("every singular value is below the cutoff".into()));
    }
    Ok(ReconstructedPsd {
        values: x.iter().copied().collect(),
        partition: f.partition.clone(),
        method: Method::Svd,
        lambda: None,
        warning: None,
    })
}

/// Regularizer `w_T ‖DŜ‖² + w_1 ‖Ŝ‖₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Regularizer {
    pub tikhonov: f64,
    pub l1: f64,
}

impl Default for Regularizer {
    fn default() -> Self {
        Self { tikhonov: 1.0, l1: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoOptions {
    pub regularizer: Regularizer,
    /// Fixed λ; `None` selects it with the L-curve.
    pub lambda: Option<f64>,
    /// Explicit λ grid for the L-curve search.
    pub lambda_grid: Option<Vec<f64>>,
    pub grid_points: usize,
}

impl Default for CoOptions {
    fn default() -> Self {
        Self { regularizer: Regularizer::default(), lambda: None, lambda_grid: None, grid_points: 20 }
    }
}

/// Nonnegative fit in rescaled variables `Ŝ = (b/a) x`, with `a` the
/// largest matrix entry and `b` the largest measurement, so the solver
/// works with O(1) numbers.
struct CoProblem<'a> {
    f: DMatrix<f64>,
    y: DVector<f64>,
    d: DMatrix<f64>,
    a: f64,
    b: f64,
    reg: &'a Regularizer,
}

struct CoSolution {
    psd: Vec<f64>,
    residual: f64,
    regularization: f64,
}

impl<'a> CoProblem<'a> {
    fn new(f: &SensitivityMatrix, infidelities: &[f64], reg: &'a Regularizer) -> Result<Self> {
        let a = f.matrix.amax();
        if !(a > 0.0) {
            return Err(Error::Numerical("sensitivity matrix is zero".into()));
        }
        let b = infidelities.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
        Ok(Self {
            f: &f.matrix / a,
            y: DVector::from_column_slice(infidelities) / b,
            d: f.partition.difference_matrix(),
            a,
            b,
            reg,
        })
    }

    fn solve(&self, lambda: f64, warm: Option<&[f64]>) -> Result<CoSolution> {
        let ct = lambda * self.reg.tikhonov / (self.a * self.a);
        let c1 = lambda * self.reg.l1 / (self.a * self.b);
        let ftf = self.f.transpose() * &self.f;
        let dtd = self.d.transpose() * &self.d;
        let hess = &ftf + &dtd * ct;
        let lin = self.f.transpose() * &self.y;
        let n = self.f.ncols();
        let cost = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let xv = DVector::from_column_slice(x);
            let hx = &hess * &xv;
            let val = xv.dot(&hx) - 2.0 * lin.dot(&xv) + self.y.dot(&self.y) + c1 * xv.sum();
            let grad = (hx - &lin) * 2.0 + DVector::from_element(n, c1);
            Ok((val, grad.iter().copied().collect()))
        };
        let x0 = warm.map(|w| w.to_vec()).unwrap_or_else(|| vec![0.0; n]);
        let stop = StopCriteria { max_iter: 50_000, grad_tol: 1e-12, cost_tol: 1e-16, target_cost: None, memory: 20 };
        let run = minimize_bounded(&cost, &x0, &vec![0.0; n], &vec![f64::INFINITY; n], &stop)?;
        let x = polish(&hess, &lin, c1, DVector::from_column_slice(&run.x), &cost)?;
        let run_x: Vec<f64> = x.iter().copied().collect();
        let scale = self.b / self.a;
        let residual = (&self.f * &x - &self.y).norm() * self.b;
        let psd: Vec<f64> = run_x.iter().map(|v| v * scale).collect();
        let dx = &self.d * DVector::from_column_slice(&psd);
        let regularization = self.reg.tikhonov * dx.norm_squared() + self.reg.l1 * psd.iter().sum::<f64>();
        Ok(CoSolution { psd, residual, regularization: regularization.max(0.0).sqrt() })
    }

    /// λ scale at which the penalty and data terms are comparable.
    fn anchor(&self) -> f64 {
        let fn2 = self.f.norm_squared() * self.a * self.a;
        if self.reg.tikhonov > 0.0 && self.d.nrows() > 0 {
            fn2 / (self.d.norm_squared() * self.reg.tikhonov)
        } else {
            let fty = self.f.transpose() * &self.y;
            (fty.amax() * self.a * self.b * 2.0 / self.reg.l1.max(f64::MIN_POSITIVE)).max(f64::MIN_POSITIVE)
        }
    }
}

/// Active-set Newton refinement of the quadratic fit: solve exactly on the
/// free variables and keep the step while it lowers the cost.
fn polish<F>(hess: &DMatrix<f64>, lin: &DVector<f64>, c1: f64, mut x: DVector<f64>, cost: &F) -> Result<DVector<f64>>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x.len();
    let mut fx = cost(x.as_slice())?.0;
    for _ in 0..30 {
        let g = (hess * &x - lin) * 2.0 + DVector::from_element(n, c1);
        let free: Vec<usize> = (0..n).filter(|&i| x[i] > 0.0 || g[i] < 0.0).collect();
        if free.is_empty() {
            break;
        }
        let hf = DMatrix::from_fn(free.len(), free.len(), |a, b| hess[(free[a], free[b])]);
        let rhs = DVector::from_fn(free.len(), |a, _| lin[free[a]] - c1 / 2.0);
        let Some(chol) = hf.cholesky() else { break };
        let z = chol.solve(&rhs);
        let mut xn = DVector::zeros(n);
        for (a, &i) in free.iter().enumerate() {
            xn[i] = z[a].max(0.0);
        }
        let fn_ = cost(xn.as_slice())?.0;
        if fn_ > fx {
            break;
        }
        let settled = z.iter().all(|v| *v >= 0.0);
        let same = (&xn - &x).amax() <= 1e-15 * xn.amax().max(1e-300);
        x = xn;
        fx = fn_;
        if settled || same {
            let g = (hess * &x - lin) * 2.0 + DVector::from_element(n, c1);
            if (0..n).all(|i| x[i] > 0.0 || g[i] >= -1e-12 * g.amax().max(1.0)) {
                break;
            }
        }
    }
    Ok(x)
}

/// Outcome of the L-curve search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LCurve {
    pub lambdas: Vec<f64>,
    pub residual_norms: Vec<f64>,
    pub regularizer_norms: Vec<f64>,
    pub curvature: Vec<f64>,
    pub selected: f64,
    pub flat: bool,
}

/// `λ` at the maximum curvature of the log–log (residual, regularizer)
/// curve. Without an explicit grid, `points` values are spread
/// logarithmically over ten decades around `‖F‖²/‖D‖²`. A flat curve
/// returns the middle of the grid with `flat` set.
pub fn find_hyperparameter(
    f: &SensitivityMatrix,
    infidelities: &[f64],
    reg: &Regularizer,
    grid: Option<&[f64]>,
    points: usize,
) -> Result<LCurve> {
    check_measurements(f, infidelities)?;
    let problem = CoProblem::new(f, infidelities, reg)?;
    let lambdas: Vec<f64> = match grid {
        Some(g) => {
            if g.is_empty() || g.iter().any(|l| !(*l > 0.0)) {
                return Err(Error::InvalidInput("λ grid must be nonempty and positive".into()));
            }
            g.to_vec()
        }
        None => {
            if points == 0 {
                return Err(Error::InvalidInput("λ grid needs at least one point".into()));
            }
            let l0 = problem.anchor();
            let (lo, hi) = (-8.0, 2.0);
            (0..points)
                .map(|i| {
                    let t = if points == 1 { 0.0 } else { i as f64 / (points - 1) as f64 };
                    l0 * 10f64.powf(lo + t * (hi - lo))
                })
                .collect()
        }
    };
    let sols: Vec<CoSolution> = lambdas.par_iter().map(|&l| problem.solve(l, None)).collect::<Result<_>>()?;
    let rho: Vec<f64> = sols.iter().map(|s| s.residual).collect();
    let eta: Vec<f64> = sols.iter().map(|s| s.regularization).collect();
    let n = lambdas.len();
    let mut curvature = vec![0.0; n];
    let mid = lambdas[n / 2];
    if n < 3 {
        return Ok(LCurve {
            selected: if n == 1 { lambdas[0] } else { mid },
            lambdas,
            residual_norms: rho,
            regularizer_norms: eta,
            curvature,
            flat: n == 2,
        });
    }
    let floor = f64::MIN_POSITIVE.sqrt();
    let x: Vec<f64> = rho.iter().map(|r| r.max(floor).ln()).collect();
    let y: Vec<f64> = eta.iter().map(|e| e.max(floor).ln()).collect();
    let t: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let span = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min);
    let flat = span(&x) < 1e-6 && span(&y) < 1e-6;
    let mut best: Option<(usize, f64)> = None;
    if !flat {
        for i in 1..n - 1 {
            let (h1, h2) = (t[i] - t[i - 1], t[i + 1] - t[i]);
            let d1 = |v: &[f64]| (v[i + 1] - v[i - 1]) / (h1 + h2);
            let d2 = |v: &[f64]| 2.0 * ((v[i + 1] - v[i]) / h2 - (v[i] - v[i - 1]) / h1) / (h1 + h2);
            let (xp, yp, xpp, ypp) = (d1(&x), d1(&y), d2(&x), d2(&y));
            let denom = (xp * xp + yp * yp).powf(1.5);
            let k = if denom > 0.0 { (xp * ypp - xpp * yp) / denom } else { 0.0 };
            curvature[i] = k;
            if k.is_finite() && best.is_none_or(|(_, b)| k > b) {
                best = Some((i, k));
            }
        }
    }
    let (selected, flat) = match best {
        Some((i, k)) if k > 0.0 => (lambdas[i], false),
        _ => (mid, true),
    };
    Ok(LCurve { lambdas, residual_norms: rho, regularizer_norms: eta, curvature, selected, flat })
}

/// Nonnegative regularized least squares
/// `min ‖F̂Ŝ − Î‖² + λ (w_T ‖DŜ‖² + w_1 ‖Ŝ‖₁)` over `Ŝ ≥ 0`.
pub fn reconstruct_co(f: &SensitivityMatrix, infidelities: &[f64], opts: &CoOptions) -> Result<ReconstructedPsd> {
    check_measurements(f, infidelities)?;
    if let Some(l) = opts.lambda {
        if !(l >= 0.0 && l.is_finite()) {
            return Err(Error::InvalidInput(format!("λ must be finite and ≥ 0, got {l}")));
        }
    }
    let reg = &opts.regularizer;
    if !(reg.tikhonov >= 0.0 && reg.l1 >= 0.0) {
        return Err(Error::InvalidInput("regularizer weights must be ≥ 0".into()));
    }
    let (lambda, warning) = match opts.lambda {
        Some(l) => (l, None),
        None => {
            let curve = find_hyperparameter(f, infidelities, reg, opts.lambda_grid.as_deref(), opts.grid_points)?;
            let w = curve.flat.then(|| "flat L-curve; using the middle of the λ grid".to_string());
            (curve.selected, w)
        }
    };
    let problem = CoProblem::new(f, infidelities, reg)?;
    let sol = problem.solve(lambda, None)?;
    Ok(ReconstructedPsd {
        values: sol.psd,
        partition: f.partition.clone(),
        method: Method::Co,
        lambda: Some(lambda),
        warning,
    })
}

/// A single-channel estimate on its own frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdSegment {
    pub frequencies: Vec<f64>,
    pub values: Vec<f64>,
}

/// Joins estimates over neighbouring sub-domains. Shared frequencies are
/// averaged; a gap wider than the coarser spacing is an error.
pub fn splice(pieces: &[PsdSegment]) -> Result<PsdSegment> {
    if pieces.is_empty() {
        return Err(Error::InvalidInput("nothing to splice".into()));
    }
    for p in pieces {
        if p.frequencies.len() != p.values.len() || p.frequencies.is_empty() {
            return Err(Error::Shape("each piece needs matching, nonempty frequencies and values".into()));
        }
        if p.frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("piece frequencies must be increasing".into()));
        }
    }
    let mut order: Vec<&PsdSegment> = pieces.iter().collect();
    order.sort_by(|a, b| a.frequencies[0].total_cmp(&b.frequencies[0]));
    let spacing = |p: &PsdSegment| {
        if p.frequencies.len() > 1 {
            (p.frequencies[p.frequencies.len() - 1] - p.frequencies[0]) / (p.frequencies.len() - 1) as f64
        } else {
            0.0
        }
    };
    let mut reach = *order[0].frequencies.last().unwrap();
    for w in order.windows(2) {
        let step = spacing(w[0]).max(spacing(w[1]));
        let start = w[1].frequencies[0];
        if start > reach + step * (1.0 + 1e-9) {
            return Err(Error::InvalidInput(format!("gap between sub-domains at {reach}..{start}")));
        }
        reach = reach.max(*w[1].frequencies.last().unwrap());
    }
    let mut all: Vec<(f64, f64)> = order
        .iter()
        .flat_map(|p| p.frequencies.iter().copied().zip(p.values.iter().copied()))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let scale = all.iter().fold(0.0f64, |m, (w, _)| m.max(w.abs())).max(1.0);
    let mut out = PsdSegment { frequencies: vec![], values: vec![] };
    let mut i = 0;
    while i < all.len() {
        let w0 = all[i].0;
        let mut j = i;
        let mut sum = 0.0;
        while j < all.len() && (all[j].0 - w0).abs() <= 1e-9 * scale {
            sum += all[j].1;
            j += 1;
        }
        out.frequencies.push(w0);
        out.values.push(sum / (j - i) as f64);
        i = j;
    }
    Ok(out)
}
