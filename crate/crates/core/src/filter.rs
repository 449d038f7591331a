//! Leading-order filter functions and the frequency-domain infidelity.
//!
//! Noise operators are moved into the control (toggling) frame at `m`
//! uniform sample times `t_i = iτ/(m−1)`, made traceless on the target
//! subspace, Fourier transformed and reduced to
//! `F(ω) = (1/Tr P) Σ_l p_l Σ_q |G_lq(ω)|²`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{ControlSolution, Projector, PwcOperator, TIME_RTOL};
use crate::error::{Error, Result};
use crate::linalg::{c, identity, CMat, HermitianEigen, C64};
use crate::noise::OneSidedPsd;
use crate::simulator::{control_hamiltonian, NoiseOperator};

/// Weights of the discrete Fourier sum over the sample times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    /// `Δt` at every sample.
    Riemann,
    /// `Δt`, halved at the two endpoints.
    #[default]
    Trapezoid,
}

impl Quadrature {
    pub fn weights(&self, m: usize, dt: f64) -> Vec<f64> {
        let mut w = vec![dt; m];
        if *self == Quadrature::Trapezoid && m >= 2 {
            w[0] = dt / 2.0;
            w[m - 1] = dt / 2.0;
        }
        w
    }
}

/// Default sample count `max(1000, 10 × segments)`.
pub fn default_samples(segments: usize) -> usize {
    1000.max(10 * segments)
}

/// Step-by-step propagation through a PWC Hamiltonian with extra stops at
/// requested sample times, kept for reverse-mode differentiation.
pub struct Timeline {
    eig: Vec<HermitianEigen>,
    /// `(segment, duration)` of every step.
    steps: Vec<(usize, f64)>,
    step_unitaries: Vec<CMat>,
    /// `states[k]` is the propagator after `k` steps.
    states: Vec<CMat>,
    /// Index into `states` for every sample time.
    sample_state: Vec<usize>,
}

impl Timeline {
    pub fn new(h: &PwcOperator, times: &[f64]) -> Result<Self> {
        let total = h.duration();
        let tol = TIME_RTOL * total;
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("sample times must be sorted".into()));
        }
        if let Some(bad) = times.iter().find(|&&t| t < -tol || t > total + tol) {
            return Err(Error::InvalidInput(format!("sample time {bad} outside [0, {total}]")));
        }
        let bounds = h.segmentation().boundaries();
        let n = h.len();
        let mut steps = Vec::new();
        let mut sample_state = Vec::with_capacity(times.len());
        let mut cur = 0.0;
        let mut seg = 0;
        for &t in times {
            while seg < n && bounds[seg + 1] <= t + tol {
                if bounds[seg + 1] - cur > 0.0 {
                    steps.push((seg, bounds[seg + 1] - cur));
                }
                cur = bounds[seg + 1];
                seg += 1;
            }
            if seg < n && t - cur > tol {
                steps.push((seg, t - cur));
                cur = t;
            }
            sample_state.push(steps.len());
        }
        let eig: Vec<HermitianEigen> = h.values().iter().map(HermitianEigen::new).collect();
        let step_unitaries: Vec<CMat> = steps.iter().map(|&(s, dt)| eig[s].propagator(dt)).collect();
        let mut states = Vec::with_capacity(steps.len() + 1);
        states.push(identity(h.dimension()));
        for e in &step_unitaries {
            let next = e * states.last().unwrap();
            states.push(next);
        }
        Ok(Self { eig, steps, step_unitaries, states, sample_state })
    }

    pub fn sample_unitaries(&self) -> Vec<&CMat> {
        self.sample_state.iter().map(|&k| &self.states[k]).collect()
    }

    /// Cotangents of the segment Hamiltonians given cotangents of the
    /// sampled propagators, under `dL = Re Tr(Ā† dA)`.
    pub fn backward(&self, sample_bars: &[CMat]) -> Vec<CMat> {
        let d = self.states[0].nrows();
        let mut bars: Vec<CMat> = vec![CMat::zeros(d, d); self.states.len()];
        for (&k, b) in self.sample_state.iter().zip(sample_bars) {
            bars[k] += b;
        }
        let mut h_bars = vec![CMat::zeros(d, d); self.eig.len()];
        for k in (1..self.states.len()).rev() {
            let (seg, dt) = self.steps[k - 1];
            let e = &self.step_unitaries[k - 1];
            let u_bar = bars[k].clone();
            if u_bar.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
                continue;
            }
            let e_bar = &u_bar * self.states[k - 1].adjoint();
            h_bars[seg] += self.eig[seg].propagator_pullback(dt, &e_bar);
            bars[k - 1] += e.adjoint() * u_bar;
        }
        h_bars
    }
}

/// Noise operators in the control frame at uniform sample times.
#[derive(Debug, Clone)]
pub struct TogglingFrameSeries {
    pub times: Vec<f64>,
    pub dt: f64,
    pub operators: Vec<CMat>,
    pub projector: Projector,
}

fn sample_times(duration: f64, m: usize) -> Result<(Vec<f64>, f64)> {
    if m < 2 {
        return Err(Error::InvalidInput("at least two samples are required".into()));
    }
    let dt = duration / (m - 1) as f64;
    let mut t: Vec<f64> = (0..m).map(|i| i as f64 * dt).collect();
    t[m - 1] = duration;
    Ok((t, dt))
}

/// `A − Tr(P A)/Tr P · I`.
fn remove_trace(a: &CMat, p: &Projector) -> CMat {
    let tr: C64 = p.diagonal().iter().enumerate().filter(|(_, &on)| on).map(|(l, _)| a[(l, l)]).sum();
    let shift = tr / p.trace() as f64;
    let mut out = a.clone();
    for l in 0..a.nrows() {
        out[(l, l)] -= shift;
    }
    out
}

/// Adjoint of [`remove_trace`]: `B − Tr(B)/Tr P · P`.
fn remove_trace_adjoint(b: &CMat, p: &Projector) -> CMat {
    let shift = b.trace() / p.trace() as f64;
    let mut out = b.clone();
    for (l, &on) in p.diagonal().iter().enumerate() {
        if on {
            out[(l, l)] -= shift;
        }
    }
    out
}

fn check_noise(noise: &NoiseOperator, h: &PwcOperator, p: &Projector) -> Result<()> {
    if noise.dimension() != h.dimension() || p.dimension() != h.dimension() {
        return Err(Error::Shape(format!(
            "noise operator ({}), projector ({}) and system ({}) dimensions differ",
            noise.dimension(),
            p.dimension(),
            h.dimension()
        )));
    }
    if let Some(seg) = noise.segmentation() {
        if (seg.total() - h.duration()).abs() > 1e-9 * h.duration() {
            return Err(Error::Segmentation("noise operator does not span the duration".into()));
        }
    }
    Ok(())
}

fn noise_at(noise: &NoiseOperator, t: f64) -> &CMat {
    match noise {
        NoiseOperator::Constant(m) => m,
        NoiseOperator::Pwc(p) => p.value_at(t).expect("time inside duration"),
    }
}

/// Toggling-frame samples `Ñ'_i = L(U†(t_i) N(t_i) U(t_i))` of a PWC
/// Hamiltonian.
pub fn toggling_frame_from_hamiltonian(
    h: &PwcOperator,
    noise: &NoiseOperator,
    p: &Projector,
    m: usize,
) -> Result<TogglingFrameSeries> {
    check_noise(noise, h, p)?;
    let (times, dt) = sample_times(h.duration(), m)?;
    let timeline = Timeline::new(h, &times)?;
    let operators = timeline
        .sample_unitaries()
        .into_iter()
        .zip(&times)
        .map(|(u, &t)| remove_trace(&(u.adjoint() * noise_at(noise, t) * u), p))
        .collect();
    Ok(TogglingFrameSeries { times, dt, operators, projector: p.clone() })
}

pub fn toggling_frame(
    ctrl: &ControlSolution,
    noise: &NoiseOperator,
    p: &Projector,
    m: usize,
) -> Result<TogglingFrameSeries> {
    toggling_frame_from_hamiltonian(&control_hamiltonian(ctrl)?, noise, p, m)
}

/// `G(ω) = Σ_i w_i Ñ'_i e^{+iωt_i}`.
pub fn dtft(series: &TogglingFrameSeries, frequencies: &[f64], quadrature: Quadrature) -> Result<Vec<CMat>> {
    if let Some(bad) = frequencies.iter().find(|w| !w.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite frequency {bad}")));
    }
    let w = quadrature.weights(series.times.len(), series.dt);
    let d = series.operators[0].nrows();
    Ok(frequencies
        .par_iter()
        .map(|&omega| {
            let mut g = CMat::zeros(d, d);
            for ((a, &t), &wi) in series.operators.iter().zip(&series.times).zip(&w) {
                g += a * C64::from_polar(wi, omega * t);
            }
            g
        })
        .collect())
}

/// `(1/Tr P) Σ_l p_l Σ_q |G_lq|²`.
pub fn filter_value(g: &CMat, p: &Projector) -> f64 {
    let mut acc = 0.0;
    for (l, &on) in p.diagonal().iter().enumerate() {
        if on {
            acc += g.row(l).iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
    }
    acc / p.trace() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterFunctionResult {
    pub frequencies: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterOptions {
    /// Sample count `m`; `None` uses [`default_samples`].
    pub samples: Option<usize>,
    pub quadrature: Quadrature,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self { samples: None, quadrature: Quadrature::Trapezoid }
    }
}

impl FilterOptions {
    pub fn with_samples(m: usize) -> Self {
        Self { samples: Some(m), ..Self::default() }
    }
}

pub fn filter_function_from_hamiltonian(
    h: &PwcOperator,
    noise: &NoiseOperator,
    p: &Projector,
    frequencies: &[f64],
    opts: &FilterOptions,
) -> Result<FilterFunctionResult> {
    let m = opts.samples.unwrap_or_else(|| default_samples(h.len()));
    let series = toggling_frame_from_hamiltonian(h, noise, p, m)?;
    let g = dtft(&series, frequencies, opts.quadrature)?;
    Ok(FilterFunctionResult {
        frequencies: frequencies.to_vec(),
        values: g.iter().map(|g| filter_value(g, p)).collect(),
        label: None,
    })
}

pub fn filter_function(
    ctrl: &ControlSolution,
    noise: &NoiseOperator,
    p: &Projector,
    frequencies: &[f64],
    opts: &FilterOptions,
) -> Result<FilterFunctionResult> {
    filter_function_from_hamiltonian(&control_hamiltonian(ctrl)?, noise, p, frequencies, opts)
}

/// `Σ_ω c_ω F(ω)` for a constant noise operator, with the cotangent of every
/// segment Hamiltonian.
pub fn weighted_filter_with_gradient(
    h: &PwcOperator,
    noise: &CMat,
    p: &Projector,
    frequencies: &[f64],
    coefficients: &[f64],
    opts: &FilterOptions,
) -> Result<(f64, Vec<CMat>)> {
    if frequencies.len() != coefficients.len() {
        return Err(Error::InvalidInput("one coefficient per frequency is required".into()));
    }
    let op = NoiseOperator::Constant(noise.clone());
    check_noise(&op, h, p)?;
    let m = opts.samples.unwrap_or_else(|| default_samples(h.len()));
    let (times, dt) = sample_times(h.duration(), m)?;
    let timeline = Timeline::new(h, &times)?;
    let us = timeline.sample_unitaries();
    let toggled: Vec<CMat> = us.iter().map(|u| remove_trace(&(u.adjoint() * noise * *u), p)).collect();
    let series = TogglingFrameSeries { times: times.clone(), dt, operators: toggled, projector: p.clone() };
    let gs = dtft(&series, frequencies, opts.quadrature)?;
    let value: f64 = gs.iter().zip(coefficients).map(|(g, c)| c * filter_value(g, p)).sum();

    // Ḡ = 2 c P G / Tr P
    let tr = p.trace() as f64;
    let g_bars: Vec<CMat> = gs
        .iter()
        .zip(coefficients)
        .map(|(g, &cw)| p.apply_left(g) * c(2.0 * cw / tr, 0.0))
        .collect();
    let w = opts.quadrature.weights(m, dt);
    let sample_bars: Vec<CMat> = times
        .par_iter()
        .zip(&w)
        .zip(us.par_iter())
        .map(|((&t, &wi), u)| {
            let d = noise.nrows();
            let mut nb = CMat::zeros(d, d);
            for (gb, &omega) in g_bars.iter().zip(frequencies) {
                nb += gb * C64::from_polar(wi, -omega * t);
            }
            let nb = remove_trace_adjoint(&nb, p);
            noise * *u * (&nb + nb.adjoint())
        })
        .collect();
    Ok((value, timeline.backward(&sample_bars)))
}

/// Frequency-domain infidelity `Σ_k (1/2π) ∫₀^∞ F_k(ω) S¹_k(ω) dω`.
///
/// With a one-sided PSD this equals the two-sided overlap of the even
/// filter function with `S² = S¹/2`. The integral is a trapezoid over each
/// filter grid, which must be sorted, nonnegative and inside the PSD range;
/// PSD values are linearly interpolated.
pub fn robust_infidelity_ff(filters: &[FilterFunctionResult], psds: &[OneSidedPsd]) -> Result<f64> {
    if filters.len() != psds.len() {
        return Err(Error::InvalidInput("one PSD per filter function is required".into()));
    }
    let mut total = 0.0;
    for (ff, psd) in filters.iter().zip(psds) {
        let w = &ff.frequencies;
        if w.len() != ff.values.len() {
            return Err(Error::Shape("filter frequencies and values differ in length".into()));
        }
        if w.windows(2).any(|p| p[1] <= p[0]) || w.first().is_some_and(|&x| x < 0.0) {
            return Err(Error::InvalidInput("filter grid must be increasing and nonnegative".into()));
        }
        let top = psd.max_frequency() * (1.0 + 1e-9);
        if w.last().is_some_and(|&x| x > top) {
            return Err(Error::InvalidInput(format!(
                "filter grid extends to {} rad/s, beyond the PSD range {} rad/s",
                w.last().unwrap(),
                psd.max_frequency()
            )));
        }
        let y: Vec<f64> = w.iter().zip(&ff.values).map(|(&o, &f)| f * psd.value_at(o)).collect();
        total += w.windows(2).zip(y.windows(2)).map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1])).sum::<f64>();
    }
    Ok(total / (2.0 * PI))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{ComplexPwc, DriveTerm, RealPwc, Segmentation};
    use crate::linalg::{hermitian_part, ket_bra, pauli_x, pauli_y, pauli_z};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dephasing() -> NoiseOperator {
        NoiseOperator::Constant(pauli_z() * c(0.5, 0.0))
    }

    fn free(tau: f64) -> ControlSolution {
        ControlSolution::new(2, tau, vec![], vec![], None).unwrap()
    }

    /// σx drive with the given Rabi rates per segment.
    fn rabi(rates: Vec<f64>, durations: Vec<f64>) -> ControlSolution {
        let total: f64 = durations.iter().sum();
        let seg = Segmentation::new(durations).unwrap();
        let values = rates.iter().map(|&r| c(r / 2.0, 0.0)).collect();
        let d = DriveTerm::new(ComplexPwc::new(values, seg).unwrap(), ket_bra(2, 1, 0));
        ControlSolution::new(2, total, vec![d], vec![], None).unwrap()
    }

    #[test]
    fn free_evolution_toggling_frame() {
        let s = toggling_frame(&free(1.0), &dephasing(), &Projector::full(2), 11).unwrap();
        for a in &s.operators {
            assert!((a - pauli_z() * c(0.5, 0.0)).norm() < 1e-15);
        }
        let id = NoiseOperator::Constant(identity(2) * c(0.7, 0.0));
        let s = toggling_frame(&rabi(vec![3.0], vec![1.0]), &id, &Projector::full(2), 11).unwrap();
        assert!(s.operators.iter().all(|a| a.norm() < 1e-15));
    }

    #[test]
    fn resonant_drive_toggling_frame() {
        let omega = 5.0;
        let s = toggling_frame(&rabi(vec![omega], vec![2.0]), &dephasing(), &Projector::full(2), 201).unwrap();
        for (a, &t) in s.operators.iter().zip(&s.times) {
            // U†σzU for U = exp(−iΩtσx/2)
            let expect = (pauli_z() * c((omega * t).cos(), 0.0) + pauli_y() * c((omega * t).sin(), 0.0)) * c(0.5, 0.0);
            assert!((a - expect).norm() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn tracelessness_on_subspace() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ops: Vec<CMat> = (0..3)
            .map(|_| hermitian_part(&CMat::from_fn(3, 3, |_, _| c(rng.random(), rng.random()))))
            .collect();
        let h = PwcOperator::new(ops, Segmentation::uniform(3, 1.0).unwrap()).unwrap();
        let n = hermitian_part(&CMat::from_fn(3, 3, |_, _| c(rng.random(), rng.random())));
        let p = Projector::leading(3, 2).unwrap();
        let s = toggling_frame_from_hamiltonian(&h, &NoiseOperator::Constant(n), &p, 50).unwrap();
        for a in &s.operators {
            let tr: C64 = a[(0, 0)] + a[(1, 1)];
            assert!(tr.norm() < 1e-10);
        }
    }

    #[test]
    fn dtft_examples() {
        let tau = 2.0;
        let s = toggling_frame(&free(tau), &dephasing(), &Projector::full(2), 101).unwrap();
        let g = dtft(&s, &[0.0], Quadrature::Riemann).unwrap();
        let expect = pauli_z() * c(tau / 2.0, 0.0);
        assert!((&g[0] - &expect).norm() / expect.norm() < s.dt / tau * 1.01);
        let g = dtft(&s, &[0.0], Quadrature::Trapezoid).unwrap();
        assert!((&g[0] - &expect).norm() < 1e-14);

        let zero = TogglingFrameSeries {
            times: s.times.clone(),
            dt: s.dt,
            operators: vec![CMat::zeros(2, 2); s.times.len()],
            projector: Projector::full(2),
        };
        assert!(dtft(&zero, &[0.0, 3.0], Quadrature::Trapezoid).unwrap().iter().all(|g| g.norm() == 0.0));

        // single tone A cos(ω0 t)
        let (tau, w0, m) = (10.0, 20.0, 400);
        let dt = tau / (m - 1) as f64;
        let times: Vec<f64> = (0..m).map(|i| i as f64 * dt).collect();
        let a = pauli_x();
        let tone = TogglingFrameSeries {
            operators: times.iter().map(|&t| &a * c((w0 * t).cos(), 0.0)).collect(),
            times,
            dt,
            projector: Projector::full(2),
        };
        let g = dtft(&tone, &[w0], Quadrature::Riemann).unwrap();
        let amp = g[0][(0, 1)].norm();
        assert!((amp / (tau / 2.0) - 1.0).abs() < 0.02, "{amp}");
    }

    #[test]
    fn free_evolution_dc_value_is_exact() {
        for tau in [1e-6, 0.5, 3.0] {
            let ff = filter_function(&free(tau), &dephasing(), &Projector::full(2), &[0.0], &FilterOptions::with_samples(57))
                .unwrap();
            assert!((ff.values[0] / (tau * tau / 4.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn echo_suppresses_dc() {
        let tau = 1.0;
        let w = tau / 1000.0;
        let rate = PI / w;
        let ctrl = rabi(vec![0.0, rate, 0.0], vec![(tau - w) / 2.0, w, (tau - w) / 2.0]);
        let p = Projector::full(2);
        let echo = filter_function(&ctrl, &dephasing(), &p, &[0.0], &FilterOptions::with_samples(2001)).unwrap();
        assert!(echo.values[0] < 1e-3 * tau * tau / 4.0, "{}", echo.values[0]);
    }

    #[test]
    fn symmetry_and_gauge() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rates: Vec<f64> = (0..4).map(|_| rng.random_range(-6.0..6.0)).collect();
        let ctrl = rabi(rates, vec![0.25; 4]);
        let p = Projector::full(2);
        let opts = FilterOptions::with_samples(300);
        let freqs = [-40.0, -7.0, -1.0, 0.0, 1.0, 7.0, 40.0];
        let ff = filter_function(&ctrl, &dephasing(), &p, &freqs, &opts).unwrap();
        for k in 0..3 {
            assert!((ff.values[k] - ff.values[6 - k]).abs() < 1e-12 * ff.values[k].max(1e-12));
        }
        assert!(ff.values.iter().all(|&v| v >= 0.0));
        let shifted = NoiseOperator::Constant(pauli_z() * c(0.5, 0.0) + identity(2) * c(3.0, 0.0));
        let ff2 = filter_function(&ctrl, &shifted, &p, &freqs, &opts).unwrap();
        for (a, b) in ff.values.iter().zip(&ff2.values) {
            assert!((a - b).abs() < 1e-12 * a.max(1e-12));
        }
    }

    #[test]
    fn sample_doubling_converges() {
        let ctrl = rabi(vec![2.0, -4.0, 3.0], vec![0.3, 0.4, 0.3]);
        let p = Projector::full(2);
        let freqs: Vec<f64> = (0..20).map(|k| k as f64 * 5.0).collect();
        let a = filter_function(&ctrl, &dephasing(), &p, &freqs, &FilterOptions::with_samples(1000)).unwrap();
        let b = filter_function(&ctrl, &dephasing(), &p, &freqs, &FilterOptions::with_samples(2000)).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 0.01 * y.max(1e-6), "{x} vs {y}");
        }
    }

    #[test]
    fn overlap_examples() {
        let ff = FilterFunctionResult { frequencies: vec![2.0, 3.0, 5.0], values: vec![4.0; 3], label: None };
        let psd = OneSidedPsd::new(vec![0.5; 11], 1.0).unwrap();
        let i = robust_infidelity_ff(&[ff.clone()], &[psd]).unwrap();
        assert!((i - 4.0 * 0.5 * 3.0 / (2.0 * PI)).abs() < 1e-14);
        let zero = OneSidedPsd::new(vec![0.0; 11], 1.0).unwrap();
        assert_eq!(robust_infidelity_ff(&[ff.clone()], &[zero]).unwrap(), 0.0);
        let short = OneSidedPsd::new(vec![0.5; 3], 1.0).unwrap();
        assert!(robust_infidelity_ff(&[ff], &[short]).is_err());
    }

    #[test]
    fn quasi_static_overlap_matches_variance() {
        // narrow low-frequency noise: I ≈ F(0) σ² with σ² = (1/2π)∫S¹
        let tau = 1.0;
        let ff_grid: Vec<f64> = (0..=200).map(|k| k as f64 * 0.01).collect();
        let ff = filter_function(&free(tau), &dephasing(), &Projector::full(2), &ff_grid, &FilterOptions::with_samples(200))
            .unwrap();
        let psd = OneSidedPsd::from_fn(201, 0.01, |w| if w <= 0.5 { 1e-3 } else { 0.0 }).unwrap();
        let i = robust_infidelity_ff(&[ff], &[psd]).unwrap();
        let sigma2 = 1e-3 * 0.5 / (2.0 * PI);
        assert!((i / (sigma2 * tau * tau / 4.0) - 1.0).abs() < 0.02, "{i}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let segs = Segmentation::new(vec![0.3, 0.2, 0.5]).unwrap();
        let base: Vec<CMat> = (0..3)
            .map(|_| hermitian_part(&CMat::from_fn(2, 2, |_, _| c(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))))
            .collect();
        let n = pauli_z() * c(0.5, 0.0);
        let p = Projector::full(2);
        let freqs = [0.0, 4.0, 9.0];
        let coef = [1.0, 0.5, 2.0];
        let opts = FilterOptions::with_samples(64);
        let h = PwcOperator::new(base.clone(), segs.clone()).unwrap();
        let (_, bars) = weighted_filter_with_gradient(&h, &n, &p, &freqs, &coef, &opts).unwrap();
        let eval = |hs: Vec<CMat>| {
            let h = PwcOperator::new(hs, segs.clone()).unwrap();
            weighted_filter_with_gradient(&h, &n, &p, &freqs, &coef, &opts).unwrap().0
        };
        for s in 0..3 {
            for dir in [pauli_x(), pauli_y(), pauli_z()] {
                let eps = 1e-6;
                let mut plus = base.clone();
                plus[s] += &dir * c(eps, 0.0);
                let mut minus = base.clone();
                minus[s] -= &dir * c(eps, 0.0);
                let fd = (eval(plus) - eval(minus)) / (2.0 * eps);
                let an = crate::linalg::re_inner(&bars[s], &dir);
                assert!((fd - an).abs() < 1e-6 * fd.abs().max(1.0), "seg {s}: {fd} vs {an}");
            }
        }
        let _ = RealPwc::constant(0.0, 1.0);
    }
}
