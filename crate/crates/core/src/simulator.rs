//! Noisy time-domain simulation of piecewise-constant systems.
//!
//! Every participating series (drive and shift pulses, noise realizations,
//! time-dependent noise operators) is resampled onto the union of all
//! segment boundaries before the segment propagators are multiplied.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{
    ComplexPwc, ControlSolution, DriveTerm, FidelityKind, FidelityValue, Projector, PwcOperator, RealPwc,
    Segmentation, ShiftTerm, TIME_RTOL,
};
use crate::error::{Error, Result};
use crate::linalg::{c, identity, CMat, CVec, HermitianEigen, C64};
use crate::noise::{shannon_interpolate_with, time_series, Interpolation, NoiseKey, NoiseTimeSeries, OneSidedPsd};

/// Union of several segmentations together with, for every joint segment,
/// the index of the covering segment in each input.
#[derive(Debug, Clone)]
pub struct JointGrid {
    segmentation: Segmentation,
    lookup: Vec<Vec<usize>>,
}

impl JointGrid {
    pub fn segmentation(&self) -> &Segmentation {
        &self.segmentation
    }

    pub fn boundaries(&self) -> Vec<f64> {
        self.segmentation.boundaries()
    }

    pub fn len(&self) -> usize {
        self.segmentation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segmentation.is_empty()
    }

    /// Index of the input segment of `series` that covers joint segment `seg`.
    pub fn source_index(&self, series: usize, seg: usize) -> usize {
        self.lookup[series][seg]
    }

    /// Values of input `series` on every joint segment.
    pub fn resample<T: Copy>(&self, series: usize, values: &[T]) -> Vec<T> {
        self.lookup[series].iter().map(|&i| values[i]).collect()
    }
}

/// Joint discretization of several segmentations of the same duration.
pub fn joint_segments(segs: &[&Segmentation]) -> Result<JointGrid> {
    let first = segs
        .first()
        .ok_or_else(|| Error::InvalidInput("joint_segments needs at least one series".into()))?;
    let total = first.total();
    for s in segs.iter().skip(1) {
        if (s.total() - total).abs() > 1e-9 * total {
            return Err(Error::Segmentation(format!(
                "series durations differ: {} vs {total}",
                s.total()
            )));
        }
    }
    let mut cuts: Vec<f64> = segs
        .iter()
        .flat_map(|s| {
            let b = s.boundaries();
            b[1..b.len() - 1].to_vec()
        })
        .collect();
    cuts.sort_by(f64::total_cmp);
    let tol = TIME_RTOL * total;
    let mut bounds = vec![0.0];
    for t in cuts {
        if t - bounds.last().unwrap() > tol && total - t > tol {
            bounds.push(t);
        }
    }
    bounds.push(total);
    let durations: Vec<f64> = bounds.windows(2).map(|w| w[1] - w[0]).collect();
    let mids: Vec<f64> = bounds.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let lookup = segs
        .iter()
        .map(|s| {
            let scale = s.total() / total;
            mids.iter().map(|&m| s.segment_at(m * scale).expect("midpoint inside series")).collect()
        })
        .collect();
    Ok(JointGrid { segmentation: Segmentation::new(durations)?, lookup })
}

/// Control Hamiltonian on the joint grid of all drive and shift pulses.
pub fn control_hamiltonian(ctrl: &ControlSolution) -> Result<PwcOperator> {
    let segs = ctrl.segmentations();
    if segs.is_empty() {
        return PwcOperator::constant(ctrl.drift().clone(), ctrl.duration());
    }
    let grid = joint_segments(&segs)?;
    let nd = ctrl.drives().len();
    let gammas: Vec<Vec<C64>> =
        ctrl.drives().iter().enumerate().map(|(j, d)| grid.resample(j, d.pulse.values())).collect();
    let alphas: Vec<Vec<f64>> =
        ctrl.shifts().iter().enumerate().map(|(l, s)| grid.resample(nd + l, s.pulse.values())).collect();
    let values = (0..grid.len())
        .map(|i| {
            let g: Vec<C64> = gammas.iter().map(|v| v[i]).collect();
            let a: Vec<f64> = alphas.iter().map(|v| v[i]).collect();
            ctrl.hamiltonian_from_values(&g, &a)
        })
        .collect();
    PwcOperator::new(values, grid.segmentation().clone())
}

/// How a noise field enters the Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum Coupling {
    /// `Ω → Ω + δ` on the modulus of drive `j`, phase unchanged.
    DriveModulus(usize),
    /// `|α| → |α| + δ` on shift `l`, sign unchanged.
    ShiftValue(usize),
    /// `β(t) N` added to the Hamiltonian.
    Additive,
}

/// Operator of an additive channel, constant or piecewise constant.
#[derive(Debug, Clone)]
pub enum NoiseOperator {
    Constant(CMat),
    Pwc(PwcOperator),
}

impl NoiseOperator {
    pub fn dimension(&self) -> usize {
        match self {
            NoiseOperator::Constant(m) => m.nrows(),
            NoiseOperator::Pwc(p) => p.dimension(),
        }
    }

    pub fn segmentation(&self) -> Option<&Segmentation> {
        match self {
            NoiseOperator::Constant(_) => None,
            NoiseOperator::Pwc(p) => Some(p.segmentation()),
        }
    }

    pub fn value_on(&self, seg: usize) -> &CMat {
        match self {
            NoiseOperator::Constant(m) => m,
            NoiseOperator::Pwc(p) => &p.values()[seg],
        }
    }
}

/// Where noise values come from.
#[derive(Debug, Clone)]
pub enum NoiseSource {
    /// A fresh random realization per trial.
    Psd(OneSidedPsd),
    /// One fixed series used for every trial.
    Series(NoiseTimeSeries),
    /// Explicit realizations spanning the control duration; trial `m` uses
    /// entry `m mod len`.
    Realizations(Vec<RealPwc>),
}

#[derive(Debug, Clone)]
pub struct NoiseChannel {
    pub coupling: Coupling,
    pub operator: Option<NoiseOperator>,
    pub source: NoiseSource,
}

impl NoiseChannel {
    pub fn additive(operator: CMat, source: NoiseSource) -> Self {
        Self { coupling: Coupling::Additive, operator: Some(NoiseOperator::Constant(operator)), source }
    }

    pub fn drive_modulus(index: usize, source: NoiseSource) -> Self {
        Self { coupling: Coupling::DriveModulus(index), operator: None, source }
    }

    pub fn shift_value(index: usize, source: NoiseSource) -> Self {
        Self { coupling: Coupling::ShiftValue(index), operator: None, source }
    }

    /// Quasi-static noise taking each listed constant value in turn.
    pub fn static_values(values: &[f64], duration: f64) -> Result<NoiseSource> {
        Ok(NoiseSource::Realizations(
            values.iter().map(|&v| RealPwc::constant(v, duration)).collect::<Result<_>>()?,
        ))
    }

    fn validate(&self, ctrl: &ControlSolution) -> Result<()> {
        match self.coupling {
            Coupling::DriveModulus(j) if j >= ctrl.drives().len() => {
                Err(Error::InvalidInput(format!("noise channel references missing drive {j}")))
            }
            Coupling::ShiftValue(l) if l >= ctrl.shifts().len() => {
                Err(Error::InvalidInput(format!("noise channel references missing shift {l}")))
            }
            Coupling::Additive => {
                let op = self
                    .operator
                    .as_ref()
                    .ok_or_else(|| Error::InvalidInput("additive channel needs an operator".into()))?;
                if op.dimension() != ctrl.dimension() {
                    return Err(Error::Shape(format!(
                        "noise operator dimension {} differs from system dimension {}",
                        op.dimension(),
                        ctrl.dimension()
                    )));
                }
                if let Some(seg) = op.segmentation() {
                    if (seg.total() - ctrl.duration()).abs() > 1e-9 * ctrl.duration() {
                        return Err(Error::Segmentation("noise operator does not span the duration".into()));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Sampling of noise series onto the simulation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingOptions {
    /// When set, noise series are Whittaker–Shannon interpolated at the
    /// midpoints of a uniform grid with (at most) this step; otherwise each
    /// sample is held for its native `dt`.
    pub step: Option<f64>,
    pub interpolation: Interpolation,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self { step: None, interpolation: Interpolation::Periodic }
    }
}

impl SamplingOptions {
    pub fn upsampled(step: f64) -> Self {
        Self { step: Some(step), ..Self::default() }
    }
}

fn sample_series(series: &NoiseTimeSeries, duration: f64, opts: &SamplingOptions) -> Result<RealPwc> {
    match opts.step {
        None => series.zero_order_hold(duration),
        Some(step) => {
            if !(step > 0.0) {
                return Err(Error::InvalidInput(format!("sampling step must be positive, got {step}")));
            }
            let n = (duration / step * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            let h = duration / n as f64;
            let mids: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
            if duration > series.span() * (1.0 + 1e-12) {
                return Err(Error::InvalidInput(format!(
                    "noise series spans {} s, shorter than the {duration} s control",
                    series.span()
                )));
            }
            RealPwc::uniform(shannon_interpolate_with(series, &mids, opts.interpolation)?, duration)
        }
    }
}

/// The noise values of one channel for one trial, over `[0, duration]`.
pub fn realize_channel(
    channel: &NoiseChannel,
    duration: f64,
    key: NoiseKey,
    opts: &SamplingOptions,
) -> Result<RealPwc> {
    match &channel.source {
        NoiseSource::Psd(psd) => {
            if psd.period() < duration * (1.0 - 1e-12) {
                return Err(Error::InvalidInput(format!(
                    "PSD resolution {} rad/s gives a {} s record, shorter than the {duration} s control",
                    psd.resolution(),
                    psd.period()
                )));
            }
            sample_series(&time_series(psd, key), duration, opts)
        }
        NoiseSource::Series(s) => sample_series(s, duration, opts),
        NoiseSource::Realizations(list) => {
            if list.is_empty() {
                return Err(Error::InvalidInput("empty realization list".into()));
            }
            let r = &list[key.trial as usize % list.len()];
            if (r.duration() - duration).abs() > 1e-9 * duration {
                return Err(Error::Segmentation("noise realization does not span the duration".into()));
            }
            Ok(r.clone())
        }
    }
}

/// Realizations of every channel for trial `trial`.
pub fn realize_noise(
    ctrl: &ControlSolution,
    channels: &[NoiseChannel],
    seed: u64,
    trial: u32,
    opts: &SamplingOptions,
) -> Result<Vec<RealPwc>> {
    channels
        .iter()
        .enumerate()
        .map(|(k, ch)| realize_channel(ch, ctrl.duration(), NoiseKey::new(seed, k as u32, trial), opts))
        .collect()
}

/// `q → sgn(q)(|q| + δ)` for real values, with `sgn(0) = +1`.
fn perturb_real(q: f64, delta: f64) -> f64 {
    if q < 0.0 {
        q - delta
    } else {
        q + delta
    }
}

/// `Ω e^{iφ} → (Ω + δ) e^{iφ}`, with `φ = 0` when `Ω = 0`.
fn perturb_complex(g: C64, delta: f64) -> C64 {
    let m = g.norm();
    if m == 0.0 {
        c(delta, 0.0)
    } else {
        g * ((m + delta) / m)
    }
}

/// Noisy Hamiltonian for given noise realizations (one per channel).
pub fn noisy_hamiltonian(
    ctrl: &ControlSolution,
    channels: &[NoiseChannel],
    realizations: &[RealPwc],
) -> Result<PwcOperator> {
    if channels.len() != realizations.len() {
        return Err(Error::InvalidInput("one realization per channel is required".into()));
    }
    for ch in channels {
        ch.validate(ctrl)?;
    }
    if channels.is_empty() {
        return control_hamiltonian(ctrl);
    }
    let mut segs: Vec<&Segmentation> = ctrl.segmentations();
    let n_terms = segs.len();
    segs.extend(realizations.iter().map(|r| r.segmentation()));
    let mut op_series = Vec::new();
    for (k, ch) in channels.iter().enumerate() {
        if let Some(seg) = ch.operator.as_ref().and_then(|o| o.segmentation()) {
            op_series.push((k, segs.len()));
            segs.push(seg);
        }
    }
    // a pure-drift system with noise still needs a base series
    let base = Segmentation::uniform(1, ctrl.duration())?;
    if n_terms == 0 {
        segs.insert(0, &base);
    }
    let offset = usize::from(n_terms == 0);
    let grid = joint_segments(&segs)?;
    let nd = ctrl.drives().len();
    let mut gammas: Vec<Vec<C64>> = ctrl
        .drives()
        .iter()
        .enumerate()
        .map(|(j, d)| grid.resample(offset + j, d.pulse.values()))
        .collect();
    let mut alphas: Vec<Vec<f64>> = ctrl
        .shifts()
        .iter()
        .enumerate()
        .map(|(l, s)| grid.resample(offset + nd + l, s.pulse.values()))
        .collect();
    let noise: Vec<Vec<f64>> = realizations
        .iter()
        .enumerate()
        .map(|(k, r)| grid.resample(offset + n_terms + k, r.values()))
        .collect();
    for (k, ch) in channels.iter().enumerate() {
        match ch.coupling {
            Coupling::DriveModulus(j) => {
                for (g, d) in gammas[j].iter_mut().zip(&noise[k]) {
                    *g = perturb_complex(*g, *d);
                }
            }
            Coupling::ShiftValue(l) => {
                for (a, d) in alphas[l].iter_mut().zip(&noise[k]) {
                    *a = perturb_real(*a, *d);
                }
            }
            Coupling::Additive => {}
        }
    }
    let values = (0..grid.len())
        .map(|i| {
            let g: Vec<C64> = gammas.iter().map(|v| v[i]).collect();
            let a: Vec<f64> = alphas.iter().map(|v| v[i]).collect();
            let mut h = ctrl.hamiltonian_from_values(&g, &a);
            for (k, ch) in channels.iter().enumerate() {
                if ch.coupling != Coupling::Additive || noise[k][i] == 0.0 {
                    continue;
                }
                let op = ch.operator.as_ref().expect("validated");
                let seg_idx = op_series
                    .iter()
                    .find(|(kk, _)| *kk == k)
                    .map(|(_, s)| grid.source_index(*s + offset, i))
                    .unwrap_or(0);
                h += op.value_on(seg_idx) * c(noise[k][i], 0.0);
            }
            h
        })
        .collect();
    PwcOperator::new(values, grid.segmentation().clone())
}

/// Noisy Hamiltonian for one seeded trial.
pub fn realize_noisy_hamiltonian(
    ctrl: &ControlSolution,
    channels: &[NoiseChannel],
    seed: u64,
    trial: u32,
    opts: &SamplingOptions,
) -> Result<PwcOperator> {
    let realizations = realize_noise(ctrl, channels, seed, trial, opts)?;
    noisy_hamiltonian(ctrl, channels, &realizations)
}

/// Rewrites drive `index` as `γ → γ e^{iβ(t)}` for a phase-noise realization.
pub fn apply_phase_noise(ctrl: &ControlSolution, index: usize, phase: &RealPwc) -> Result<ControlSolution> {
    let drive = ctrl
        .drives()
        .get(index)
        .ok_or_else(|| Error::InvalidInput(format!("no drive {index}")))?;
    let grid = joint_segments(&[drive.pulse.segmentation(), phase.segmentation()])?;
    let g = grid.resample(0, drive.pulse.values());
    let b = grid.resample(1, phase.values());
    let values = g.iter().zip(&b).map(|(g, b)| g * C64::from_polar(1.0, *b)).collect();
    let mut drives: Vec<DriveTerm> = ctrl.drives().to_vec();
    drives[index] = DriveTerm::new(ComplexPwc::new(values, grid.segmentation().clone())?, drive.operator.clone());
    ctrl.with_drives(drives)
}

/// Adds `δ(t)` to shift `index` (for example a detuning error).
pub fn apply_shift_offset(ctrl: &ControlSolution, index: usize, offset: &RealPwc) -> Result<ControlSolution> {
    let shift = ctrl
        .shifts()
        .get(index)
        .ok_or_else(|| Error::InvalidInput(format!("no shift {index}")))?;
    let grid = joint_segments(&[shift.pulse.segmentation(), offset.segmentation()])?;
    let a = grid.resample(0, shift.pulse.values());
    let d = grid.resample(1, offset.values());
    let values = a.iter().zip(&d).map(|(a, d)| a + d).collect();
    let mut shifts: Vec<ShiftTerm> = ctrl.shifts().to_vec();
    shifts[index] = ShiftTerm::new(RealPwc::new(values, grid.segmentation().clone())?, shift.operator.clone())?;
    ctrl.with_shifts(shifts)
}

/// `U(τ, 0)` for a PWC Hamiltonian.
pub fn total_unitary(h: &PwcOperator) -> CMat {
    let mut u = identity(h.dimension());
    for (hi, dt) in h.iter() {
        u = HermitianEigen::new(hi).propagator(dt) * u;
    }
    u
}

/// `U(t, 0)` at sorted times in `[0, τ]`.
pub fn unitary_evolution(h: &PwcOperator, times: &[f64]) -> Result<Vec<CMat>> {
    let total = h.duration();
    let tol = TIME_RTOL * total;
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("sample times must be sorted".into()));
    }
    if let Some(bad) = times.iter().find(|&&t| t < -tol || t > total + tol) {
        return Err(Error::InvalidInput(format!("sample time {bad} outside [0, {total}]")));
    }
    let bounds = h.segmentation().boundaries();
    let mut out = Vec::with_capacity(times.len());
    let mut u = identity(h.dimension());
    let mut seg = 0;
    let mut eig: Option<HermitianEigen> = None;
    for &t in times {
        let t = t.clamp(0.0, total);
        while seg < h.len() && t >= bounds[seg + 1] - tol {
            u = HermitianEigen::new(&h.values()[seg]).propagator(h.segmentation().durations()[seg]) * u;
            seg += 1;
            eig = None;
        }
        let partial = t - bounds[seg.min(h.len())];
        if seg >= h.len() || partial <= tol {
            out.push(u.clone());
        } else {
            let e = eig.get_or_insert_with(|| HermitianEigen::new(&h.values()[seg]));
            out.push(e.propagator(partial) * &u);
        }
    }
    Ok(out)
}

/// `|ψ_t⟩ = U_t |ψ_0⟩`.
pub fn propagate_state(unitaries: &[CMat], psi0: &CVec) -> Result<Vec<CVec>> {
    if (psi0.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("initial state is not normalized (norm {})", psi0.norm())));
    }
    unitaries
        .iter()
        .map(|u| {
            if u.ncols() != psi0.len() {
                return Err(Error::Shape("state and unitary dimensions differ".into()));
            }
            Ok(u * psi0)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct EnsembleDensityMatrix {
    pub rho: CMat,
    pub trials: usize,
}

impl EnsembleDensityMatrix {
    pub fn purity(&self) -> f64 {
        (&self.rho * &self.rho).trace().re
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.rho.nrows()).map(|i| self.rho[(i, i)].re).collect()
    }
}

/// `ρ = (1/M) Σ_m |ψ^m⟩⟨ψ^m|`.
pub fn ensemble_density(states: &[CVec]) -> Result<EnsembleDensityMatrix> {
    let first = states.first().ok_or_else(|| Error::InvalidInput("empty ensemble".into()))?;
    let d = first.len();
    let mut rho = CMat::zeros(d, d);
    for s in states {
        if s.len() != d {
            return Err(Error::Shape("ensemble states have different dimensions".into()));
        }
        rho += s * s.adjoint();
    }
    rho /= c(states.len() as f64, 0.0);
    Ok(EnsembleDensityMatrix { rho, trials: states.len() })
}

/// `1 − |Tr(P Ũ)/Tr P|²` for the error action `Ũ = U_tot U_ctrl†`.
pub fn error_action_infidelity(u_total: &CMat, u_ctrl: &CMat, p: &Projector) -> Result<f64> {
    let err = u_total * u_ctrl.adjoint();
    let f = crate::control::subspace_overlap(&err, &identity(err.nrows()), p)?;
    Ok((1.0 - f.norm_sqr()).clamp(0.0, 1.0))
}

/// Mean and standard error over per-trial values.
fn mean_and_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo robust infidelity: the ensemble mean over trials of the
/// error-action infidelity, with its standard error.
pub fn robust_infidelity_mc(
    ctrl: &ControlSolution,
    channels: &[NoiseChannel],
    p: &Projector,
    trials: usize,
    seed: u64,
    opts: &SamplingOptions,
) -> Result<FidelityValue> {
    if trials == 0 {
        return Err(Error::InvalidInput("at least one trial is required".into()));
    }
    let u_ctrl = total_unitary(&control_hamiltonian(ctrl)?);
    let values = (0..trials)
        .into_par_iter()
        .map(|m| {
            let h = realize_noisy_hamiltonian(ctrl, channels, seed, m as u32, opts)?;
            error_action_infidelity(&total_unitary(&h), &u_ctrl, p)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, err) = mean_and_error(&values);
    Ok(FidelityValue { value: mean.clamp(0.0, 1.0), kind: FidelityKind::Robust, std_error: Some(err) })
}

/// Per-time ensemble output of a noisy simulation.
#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub times: Vec<f64>,
    /// Ensemble-mean populations, one row per time.
    pub populations: Vec<Vec<f64>>,
    /// Ensemble density matrix at the last requested time.
    pub final_density: EnsembleDensityMatrix,
}

/// Simulates `trials` noise realizations from `psi0` and averages.
pub fn simulate(
    ctrl: &ControlSolution,
    channels: &[NoiseChannel],
    psi0: &CVec,
    times: &[f64],
    trials: usize,
    seed: u64,
    opts: &SamplingOptions,
) -> Result<SimulationResult> {
    if trials == 0 {
        return Err(Error::InvalidInput("at least one trial is required".into()));
    }
    if times.is_empty() {
        return Err(Error::InvalidInput("no sample times".into()));
    }
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|m| {
            let h = realize_noisy_hamiltonian(ctrl, channels, seed, m as u32, opts)?;
            propagate_state(&unitary_evolution(&h, times)?, psi0)
        })
        .collect::<Result<Vec<Vec<CVec>>>>()?;
    let d = psi0.len();
    let populations = (0..times.len())
        .map(|ti| {
            (0..d)
                .map(|k| per_trial.iter().map(|s| s[ti][k].norm_sqr()).sum::<f64>() / trials as f64)
                .collect()
        })
        .collect();
    let finals: Vec<CVec> = per_trial.iter().map(|s| s[times.len() - 1].clone()).collect();
    Ok(SimulationResult { times: times.to_vec(), populations, final_density: ensemble_density(&finals)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{assemble_hamiltonian, optimal_infidelity};
    use crate::linalg::{basis_state, hermiticity_defect, ket_bra, pauli_x, pauli_z, unitarity_defect};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn qubit_drive(values: Vec<C64>, tau: f64) -> ControlSolution {
        let d = DriveTerm::new(ComplexPwc::uniform(values, tau).unwrap(), ket_bra(2, 1, 0));
        ControlSolution::new(2, tau, vec![d], vec![], None).unwrap()
    }

    #[test]
    fn joint_grid_merges_boundaries() {
        let a = Segmentation::uniform(2, 1.0).unwrap();
        let b = Segmentation::uniform(3, 1.0).unwrap();
        let g = joint_segments(&[&a, &b]).unwrap();
        assert_eq!(g.len(), 4);
        let omega = g.resample(0, &["O1", "O2"]);
        let beta = g.resample(1, &["b1", "b2", "b3"]);
        assert_eq!(omega, vec!["O1", "O1", "O2", "O2"]);
        assert_eq!(beta, vec!["b1", "b2", "b2", "b3"]);
        let d = g.segmentation().durations();
        for (x, y) in d.iter().zip([1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0]) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn joint_grid_sixths() {
        // halves and thirds over sixths-resolved sampling: six sub-intervals of
        // τ/6 carry the pairs (Ω1β1)(Ω1β1)(Ω1β2)(Ω2β2)(Ω2β3)(Ω2β3)
        let a = Segmentation::uniform(2, 6.0).unwrap();
        let b = Segmentation::uniform(3, 6.0).unwrap();
        let g = joint_segments(&[&a, &b]).unwrap();
        let pairs: Vec<(usize, usize)> = (0..6)
            .map(|k| {
                let t = k as f64 + 0.5;
                let s = g.segmentation().segment_at(t).unwrap();
                (g.source_index(0, s), g.source_index(1, s))
            })
            .collect();
        assert_eq!(pairs, vec![(0, 0), (0, 0), (0, 1), (1, 1), (1, 2), (1, 2)]);
    }

    #[test]
    fn joint_grid_identity_and_coprime() {
        let a = Segmentation::new(vec![0.3, 0.5, 0.2]).unwrap();
        let g = joint_segments(&[&a, &a.clone()]).unwrap();
        assert!(g.segmentation().approx_eq(&a));

        let segs: Vec<Segmentation> = [2, 3, 5].iter().map(|&n| Segmentation::uniform(n, 1.0).unwrap()).collect();
        let refs: Vec<&Segmentation> = segs.iter().collect();
        let g = joint_segments(&refs).unwrap();
        assert!(g.len() - 1 <= 2 + 3 + 5 - 2 - 1 + 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let t: f64 = rng.random();
            let s = g.segmentation().segment_at(t).unwrap();
            for (k, seg) in segs.iter().enumerate() {
                assert_eq!(g.source_index(k, s), seg.segment_at(t).unwrap());
            }
        }
        let bad = Segmentation::uniform(2, 1.1).unwrap();
        assert!(joint_segments(&[&segs[0], &bad]).is_err());
    }

    #[test]
    fn no_channels_matches_assembly() {
        let ctrl = qubit_drive(vec![c(1.0, 0.5), c(-0.3, 0.2)], 2.0);
        let h = realize_noisy_hamiltonian(&ctrl, &[], 0, 0, &SamplingOptions::default()).unwrap();
        let a = assemble_hamiltonian(&ctrl).unwrap();
        for (x, y) in h.values().iter().zip(a.values()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn additive_constant() {
        let tau = 1.0;
        let ctrl = ControlSolution::new(2, tau, vec![], vec![], None).unwrap();
        let beta = 0.37;
        let ch = NoiseChannel::additive(pauli_z() * c(0.5, 0.0), NoiseChannel::static_values(&[beta], tau).unwrap());
        let h = realize_noisy_hamiltonian(&ctrl, &[ch], 1, 0, &SamplingOptions::default()).unwrap();
        for hi in h.values() {
            assert!((hi - pauli_z() * c(beta / 2.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn multiplicative_modulus_noise() {
        // fractional amplitude noise: δ = Ω β gives H_ctrl (1 + β)
        let (omega, phi, beta) = (2.0, 0.7, 0.05);
        let ctrl = qubit_drive(vec![C64::from_polar(omega, phi)], 1.0);
        let ch = NoiseChannel::drive_modulus(0, NoiseChannel::static_values(&[omega * beta], 1.0).unwrap());
        let h = realize_noisy_hamiltonian(&ctrl, &[ch], 0, 0, &SamplingOptions::default()).unwrap();
        let h0 = assemble_hamiltonian(&ctrl).unwrap();
        assert!((&h.values()[0] - &h0.values()[0] * c(1.0 + beta, 0.0)).norm() < 1e-14);

        // zero modulus takes the noise with zero phase
        let ctrl = qubit_drive(vec![c(0.0, 0.0)], 1.0);
        let ch = NoiseChannel::drive_modulus(0, NoiseChannel::static_values(&[0.3], 1.0).unwrap());
        let h = realize_noisy_hamiltonian(&ctrl, &[ch], 0, 0, &SamplingOptions::default()).unwrap();
        assert!((&h.values()[0] - pauli_x() * c(0.3, 0.0)).norm() < 1e-15);

        let ch = NoiseChannel::drive_modulus(3, NoiseChannel::static_values(&[0.3], 1.0).unwrap());
        assert!(realize_noisy_hamiltonian(&ctrl, &[ch], 0, 0, &SamplingOptions::default()).is_err());
    }

    #[test]
    fn shift_noise_and_pwc_operator() {
        let s = ShiftTerm::new(RealPwc::uniform(vec![1.0, -2.0], 2.0).unwrap(), pauli_z()).unwrap();
        let ctrl = ControlSolution::new(2, 2.0, vec![], vec![s], None).unwrap();
        let ch = NoiseChannel::shift_value(0, NoiseChannel::static_values(&[0.5], 2.0).unwrap());
        let h = realize_noisy_hamiltonian(&ctrl, &[ch], 0, 0, &SamplingOptions::default()).unwrap();
        assert!((&h.values()[0] - pauli_z() * c(1.5, 0.0)).norm() < 1e-15);
        assert!((&h.values()[1] - pauli_z() * c(-2.5, 0.0)).norm() < 1e-15);

        // time-dependent noise operator on thirds
        let op = PwcOperator::new(
            vec![pauli_z(), pauli_x(), pauli_z()],
            Segmentation::uniform(3, 2.0).unwrap(),
        )
        .unwrap();
        let ch = NoiseChannel {
            coupling: Coupling::Additive,
            operator: Some(NoiseOperator::Pwc(op)),
            source: NoiseChannel::static_values(&[1.0], 2.0).unwrap(),
        };
        let h = realize_noisy_hamiltonian(&ctrl, &[ch], 0, 0, &SamplingOptions::default()).unwrap();
        assert_eq!(h.len(), 4);
        let expect = [pauli_z() * c(2.0, 0.0), pauli_z() + pauli_x(), pauli_x() - pauli_z() * c(2.0, 0.0), pauli_z() * c(-1.0, 0.0)];
        for (x, y) in h.values().iter().zip(expect.iter()) {
            assert!((x - y).norm() < 1e-15, "{x} vs {y}");
        }
    }

    #[test]
    fn psd_noise_realization() {
        let tau = 1.0;
        let ctrl = ControlSolution::new(2, tau, vec![], vec![], None).unwrap();
        let psd = OneSidedPsd::from_fn(50, 2.0 * PI / tau, |_| 1.0).unwrap();
        let ch = NoiseChannel::additive(pauli_z(), NoiseSource::Psd(psd.clone()));
        let a = realize_noise(&ctrl, std::slice::from_ref(&ch), 4, 2, &SamplingOptions::default()).unwrap();
        let b = realize_noise(&ctrl, std::slice::from_ref(&ch), 4, 2, &SamplingOptions::default()).unwrap();
        assert_eq!(a[0], b[0]);
        assert_eq!(a[0].len(), 99);
        let up = realize_noise(&ctrl, std::slice::from_ref(&ch), 4, 2, &SamplingOptions::upsampled(tau / 400.0)).unwrap();
        assert_eq!(up[0].len(), 400);
        // too coarse a resolution for the duration
        let short = OneSidedPsd::from_fn(50, 4.0 * PI / tau, |_| 1.0).unwrap();
        let ch = NoiseChannel::additive(pauli_z(), NoiseSource::Psd(short));
        assert!(realize_noise(&ctrl, &[ch], 4, 2, &SamplingOptions::default()).is_err());
    }

    #[test]
    fn evolution_examples() {
        let h = PwcOperator::constant(crate::linalg::zeros(2), 1.0).unwrap();
        for u in unitary_evolution(&h, &[0.0, 0.3, 1.0]).unwrap() {
            assert!((u - identity(2)).norm() < 1e-15);
        }
        let omega = 3.0;
        let h = PwcOperator::constant(pauli_x() * c(omega / 2.0, 0.0), PI / omega).unwrap();
        let u = unitary_evolution(&h, &[PI / omega]).unwrap().pop().unwrap();
        assert!((u - pauli_x() * c(0.0, -1.0)).norm() < 1e-12);
        let states = propagate_state(&[identity(2), h.values()[0].clone()], &basis_state(2, 0)).unwrap();
        assert_eq!(states[0], basis_state(2, 0));
        let psi = propagate_state(&unitary_evolution(&h, &[0.0, PI / omega]).unwrap(), &basis_state(2, 0)).unwrap();
        assert!((psi[1][1].norm_sqr() - 1.0).abs() < 1e-12);
        assert!(unitary_evolution(&h, &[2.0]).is_err());
        assert!(propagate_state(&[identity(2)], &(basis_state(2, 0) * c(2.0, 0.0))).is_err());
    }

    #[test]
    fn split_segments_compose() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = CMat::from_fn(3, 3, |_, _| c(rng.random(), rng.random()));
        let hm = crate::linalg::hermitian_part(&a);
        let one = PwcOperator::constant(hm.clone(), 1.3).unwrap();
        let two = PwcOperator::new(vec![hm.clone(), hm], Segmentation::new(vec![0.4, 0.9]).unwrap()).unwrap();
        assert!((total_unitary(&one) - total_unitary(&two)).norm() < 1e-12);
        // partial-segment sampling equals splitting at the sample time
        let u = unitary_evolution(&one, &[0.4]).unwrap();
        let v = total_unitary(&PwcOperator::new(vec![two.values()[0].clone()], Segmentation::new(vec![0.4]).unwrap()).unwrap());
        assert!((&u[0] - v).norm() < 1e-12);
    }

    #[test]
    fn long_sequence_norm_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let values: Vec<C64> = (0..10_000).map(|_| c(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0))).collect();
        let ctrl = qubit_drive(values, 10.0);
        let h = control_hamiltonian(&ctrl).unwrap();
        let u = total_unitary(&h);
        assert!(unitarity_defect(&u) < 1e-9);
        let psi = &u * basis_state(2, 0);
        assert!((psi.norm() - 1.0).abs() < 1e-8);
        assert!(h.values().iter().all(|m| hermiticity_defect(m) < 1e-12));
    }

    #[test]
    fn density_examples() {
        let z = basis_state(2, 0);
        let o = basis_state(2, 1);
        let r = ensemble_density(&[z.clone()]).unwrap();
        assert!((r.purity() - 1.0).abs() < 1e-15);
        let r = ensemble_density(&[z.clone(), o]).unwrap();
        assert!((&r.rho - crate::linalg::diag_real(&[0.5, 0.5])).norm() < 1e-15);
        assert!(ensemble_density(&[z, basis_state(3, 0)]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let states: Vec<CVec> = (0..4)
                .map(|_| crate::linalg::normalize(&CVec::from_fn(3, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))))
                .collect();
            let r = ensemble_density(&states).unwrap();
            assert!(hermiticity_defect(&r.rho) < 1e-12);
            assert!((r.rho.trace().re - 1.0).abs() < 1e-12);
            let eig = HermitianEigen::new(&r.rho);
            assert!(eig.values.iter().all(|&l| l > -1e-10));
            assert!(r.purity() < 1.0 - 1e-6);
        }
    }

    #[test]
    fn mc_zero_power_and_two_point_ensemble() {
        let tau = 2.0;
        let ctrl = ControlSolution::new(2, tau, vec![], vec![], None).unwrap();
        let p = Projector::full(2);
        let zero = OneSidedPsd::new(vec![0.0; 10], PI / tau).unwrap();
        let ch = NoiseChannel::additive(pauli_z() * c(0.5, 0.0), NoiseSource::Psd(zero));
        let r = robust_infidelity_mc(&ctrl, &[ch], &p, 8, 3, &SamplingOptions::default()).unwrap();
        assert!(r.value < 1e-12);

        let b = 0.4;
        let ch = NoiseChannel::additive(pauli_z() * c(0.5, 0.0), NoiseChannel::static_values(&[b, -b], tau).unwrap());
        let r = robust_infidelity_mc(&ctrl, &[ch], &p, 10, 0, &SamplingOptions::default()).unwrap();
        assert!((r.value - (b * tau / 2.0).sin().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn noise_free_metrics_agree() {
        let ctrl = qubit_drive(vec![c(0.8, 0.1), c(-0.2, 0.9), c(0.3, 0.3)], 1.5);
        let h = control_hamiltonian(&ctrl).unwrap();
        let u = total_unitary(&h);
        let p = Projector::full(2);
        assert!(optimal_infidelity(&u, &u, &p).unwrap().value < 1e-10);
        let r = robust_infidelity_mc(&ctrl, &[], &p, 3, 1, &SamplingOptions::default()).unwrap();
        assert!(r.value < 1e-10);
    }

    #[test]
    fn phase_noise_rewrite() {
        let ctrl = qubit_drive(vec![c(1.0, 0.0), c(2.0, 0.0)], 2.0);
        let phase = RealPwc::uniform(vec![0.0, PI / 2.0, PI], 2.0).unwrap();
        let noisy = apply_phase_noise(&ctrl, 0, &phase).unwrap();
        let v = noisy.drives()[0].pulse.values();
        assert_eq!(v.len(), 4);
        assert!((v[1] - c(0.0, 1.0)).norm() < 1e-15);
        assert!((v[3] - c(-2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn simulate_deterministic() {
        let ctrl = qubit_drive(vec![c(PI / 2.0, 0.0)], 1.0);
        let psd = OneSidedPsd::from_fn(20, 2.0 * PI, |_| 0.1).unwrap();
        let ch = NoiseChannel::additive(pauli_z() * c(0.5, 0.0), NoiseSource::Psd(psd));
        let run = || {
            simulate(&ctrl, std::slice::from_ref(&ch), &basis_state(2, 0), &[0.0, 0.5, 1.0], 16, 9, &SamplingOptions::default())
                .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.populations, b.populations);
        assert_eq!(a.final_density.rho, b.final_density.rho);
        for row in &a.populations {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}
