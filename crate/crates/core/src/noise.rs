//! Random time-domain noise from one-sided power spectral densities.
//!
//! A one-sided PSD `S¹_k = S¹(kΔω)`, `k = 0..N−1`, is symmetrized to
//! `L = 2N − 1` two-sided samples, given random phases with Hermitian
//! symmetry and inverse transformed into a real series on the grid
//! `dt = 2π / (L Δω)`. The overall constant is `√(Δω/2π)`, which makes the
//! mean square of the series equal to `(Δω/2π) Σ_k S¹_k`, the zero-lag
//! Wiener–Khinchin value `(1/2π)∫₀^∞ S¹(ω) dω`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::control::{RealPwc, Segmentation};
use crate::error::{Error, Result};
use crate::linalg::{c, C64};

/// One-sided PSD sampled at `ω_k = k Δω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneSidedPsd {
    samples: Vec<f64>,
    resolution: f64,
}

impl OneSidedPsd {
    pub fn new(samples: Vec<f64>, resolution: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput("a PSD needs at least two samples".into()));
        }
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::InvalidInput(format!("PSD resolution must be positive, got {resolution}")));
        }
        if let Some(bad) = samples.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidInput(format!("PSD samples must be finite and nonnegative, got {bad}")));
        }
        Ok(Self { samples, resolution })
    }

    /// Samples `f(kΔω)` for `k = 0..n−1`.
    pub fn from_fn(n: usize, resolution: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((0..n).map(|k| f(k as f64 * resolution)).collect(), resolution)
    }

    /// Builds a PSD from `(ω, S)` pairs on a uniform grid starting at zero.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::InvalidInput("a PSD needs at least two samples".into()));
        }
        let dw = pairs[1].0 - pairs[0].0;
        let tol = 1e-9 * dw.abs().max(pairs.last().unwrap().0.abs());
        if pairs[0].0.abs() > tol {
            return Err(Error::InvalidInput("PSD grid must start at ω = 0".into()));
        }
        for (k, (w, _)) in pairs.iter().enumerate() {
            if (w - k as f64 * dw).abs() > tol.max(1e-9 * w.abs()) {
                return Err(Error::InvalidInput("PSD grid must be uniform".into()));
            }
        }
        Self::new(pairs.iter().map(|p| p.1).collect(), dw)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.len()).map(|k| k as f64 * self.resolution).collect()
    }

    pub fn max_frequency(&self) -> f64 {
        (self.len() - 1) as f64 * self.resolution
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.samples.iter().map(|s| s * factor).collect(), self.resolution)
    }

    /// Mean square of any series generated from this PSD.
    pub fn power(&self) -> f64 {
        self.resolution / (2.0 * PI) * self.samples.iter().sum::<f64>()
    }

    /// Linear interpolation at `ω ≥ 0`, zero beyond the last sample.
    pub fn value_at(&self, omega: f64) -> f64 {
        let w = omega.abs();
        let x = w / self.resolution;
        let k = x.floor() as usize;
        if k + 1 >= self.len() {
            return if (x - (self.len() - 1) as f64).abs() < 1e-9 { self.samples[self.len() - 1] } else { 0.0 };
        }
        let f = x - k as f64;
        self.samples[k] * (1.0 - f) + self.samples[k + 1] * f
    }

    /// Period of generated series, `2π/Δω`.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.resolution
    }

    /// Time step of generated series, `2π/((2N−1)Δω)`.
    pub fn time_step(&self) -> f64 {
        self.period() / (2 * self.len() - 1) as f64
    }
}

/// Identifies one independent random stream: a user seed plus the channel
/// and trial indices of an ensemble member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoiseKey {
    pub seed: u64,
    pub channel: u32,
    pub trial: u32,
}

impl NoiseKey {
    pub fn new(seed: u64, channel: u32, trial: u32) -> Self {
        Self { seed, channel, trial }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(((self.channel as u64) << 32) | self.trial as u64);
        rng
    }
}

impl From<u64> for NoiseKey {
    fn from(seed: u64) -> Self {
        Self::new(seed, 0, 0)
    }
}

/// Real samples on a uniform grid `t_j = j·dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseTimeSeries {
    samples: Vec<f64>,
    dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    key: Option<NoiseKey>,
}

impl NoiseTimeSeries {
    pub fn new(samples: Vec<f64>, dt: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("empty time series".into()));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("time series contains non-finite values".into()));
        }
        Ok(Self { samples, dt, key: None })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn key(&self) -> Option<NoiseKey> {
        self.key
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|j| j as f64 * self.dt).collect()
    }

    /// Span covered by holding each sample for `dt`.
    pub fn span(&self) -> f64 {
        self.len() as f64 * self.dt
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { samples: self.samples.iter().map(|x| x * factor).collect(), dt: self.dt, key: self.key }
    }

    /// Zero-order hold of the first samples over `[0, duration]`; the last
    /// segment is shortened to end exactly at `duration`.
    pub fn zero_order_hold(&self, duration: f64) -> Result<RealPwc> {
        let count = (duration / self.dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        if count > self.len() {
            return Err(Error::InvalidInput(format!(
                "series spans {} s, shorter than the requested {duration} s",
                self.span()
            )));
        }
        let mut durations = vec![self.dt; count];
        durations[count - 1] = duration - self.dt * (count - 1) as f64;
        RealPwc::new(self.samples[..count].to_vec(), Segmentation::new(durations)?)
    }
}

/// Symmetrized two-sided samples of length `2N − 1`.
pub fn two_sided(psd: &OneSidedPsd) -> Vec<f64> {
    let n = psd.len();
    let s = psd.samples();
    let mut out = Vec::with_capacity(2 * n - 1);
    out.push(s[0]);
    out.extend(s[1..].iter().map(|x| x / 2.0));
    out.extend(s[1..].iter().rev().map(|x| x / 2.0));
    out
}

/// Complex amplitudes `X_k = e^{iφ_k} √S²_k` with `φ_0 = 0`, `φ_k` uniform on
/// `(−π, π)` and `X_{L−k} = X_k*`.
pub fn random_spectrum(psd: &OneSidedPsd, key: impl Into<NoiseKey>) -> Vec<C64> {
    let mut rng = key.into().rng();
    random_spectrum_with(psd, &mut rng)
}

pub fn random_spectrum_with(psd: &OneSidedPsd, rng: &mut impl Rng) -> Vec<C64> {
    let s2 = two_sided(psd);
    let n = psd.len();
    let l = s2.len();
    let mut x = vec![c(0.0, 0.0); l];
    x[0] = c(s2[0].sqrt(), 0.0);
    for k in 1..n {
        let phi = rng.random_range(-PI..PI);
        let z = C64::from_polar(s2[k].sqrt(), phi);
        x[k] = z;
        x[l - k] = z.conj();
    }
    x
}

/// One random realization of length `2N − 1` at `dt = 2π/((2N−1)Δω)`.
pub fn time_series(psd: &OneSidedPsd, key: impl Into<NoiseKey>) -> NoiseTimeSeries {
    let key = key.into();
    let spectrum = random_spectrum(psd, key);
    let mut series = series_from_spectrum(psd, spectrum);
    series.key = Some(key);
    series
}

fn series_from_spectrum(psd: &OneSidedPsd, mut spectrum: Vec<C64>) -> NoiseTimeSeries {
    let l = spectrum.len();
    // inverse DFT with e^{+2πijk/L}, unnormalized
    FftPlanner::new().plan_fft_inverse(l).process(&mut spectrum);
    let scale = (psd.resolution() / (2.0 * PI)).sqrt();
    let peak = spectrum.iter().fold(0.0_f64, |m, z| m.max(z.re.abs()));
    let residue = spectrum.iter().fold(0.0_f64, |m, z| m.max(z.im.abs()));
    debug_assert!(residue <= 1e-9 * peak.max(f64::MIN_POSITIVE) || peak == 0.0);
    NoiseTimeSeries {
        samples: spectrum.iter().map(|z| z.re * scale).collect(),
        dt: psd.time_step(),
        key: None,
    }
}

/// Whittaker–Shannon interpolation of a periodically extended series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interpolation {
    /// The sinc sum over all periodic copies, evaluated in closed form as the
    /// periodic (Dirichlet) kernel.
    Periodic,
    /// The sinc sum truncated to the given number of copies on each side.
    Truncated(usize),
}

impl Default for Interpolation {
    fn default() -> Self {
        Interpolation::Periodic
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// `Σ_m sinc(u − mL)` over all integers `m`.
fn periodic_sinc(u: f64, l: usize) -> f64 {
    let lf = l as f64;
    let r = u.rem_euclid(lf);
    let r = if r > lf / 2.0 { r - lf } else { r };
    if r.abs() < 1e-12 {
        return 1.0;
    }
    if l % 2 == 1 {
        (PI * r).sin() / (lf * (PI * r / lf).sin())
    } else {
        // even length: the Nyquist term is split symmetrically
        (PI * r).sin() / (lf * (PI * r / lf).tan())
    }
}

/// `x(t) = Σ_k x_k sinc((t − k dt)/dt)` at each requested time.
pub fn shannon_interpolate(series: &NoiseTimeSeries, times: &[f64]) -> Result<Vec<f64>> {
    shannon_interpolate_with(series, times, Interpolation::default())
}

pub fn shannon_interpolate_with(
    series: &NoiseTimeSeries,
    times: &[f64],
    mode: Interpolation,
) -> Result<Vec<f64>> {
    let l = series.len();
    let dt = series.dt();
    let span = l as f64 * dt;
    times
        .iter()
        .map(|&t| {
            if !(t >= -1e-12 * span && t <= span * (1.0 + 1e-12)) {
                return Err(Error::InvalidInput(format!("time {t} outside the series domain [0, {span}]")));
            }
            let u = t / dt;
            let nearest = u.round();
            if (u - nearest).abs() < 1e-12 {
                return Ok(series.samples()[(nearest as usize) % l]);
            }
            let value = match mode {
                Interpolation::Periodic => series
                    .samples()
                    .iter()
                    .enumerate()
                    .map(|(k, x)| x * periodic_sinc(u - k as f64, l))
                    .sum(),
                Interpolation::Truncated(copies) => {
                    let copies = copies as i64;
                    let mut acc = 0.0;
                    for m in -copies..=copies {
                        let offset = (m * l as i64) as f64;
                        for (k, x) in series.samples().iter().enumerate() {
                            acc += x * sinc(u - k as f64 - offset);
                        }
                    }
                    acc
                }
            };
            Ok(value)
        })
        .collect()
}

/// One-sided periodogram `Ŝ¹_k`, `k = 0..⌊L/2⌋`, at resolution `2π/(L dt)`.
///
/// The two-sided estimate `|dt·DFT_k|² / T` is normalized so that
/// `(Δω/2π) Σ_k Ŝ¹_k` equals the mean square of the series; bins `k ≥ 1` are
/// folded by doubling, except the Nyquist bin of an even-length series.
pub fn periodogram(series: &NoiseTimeSeries) -> Result<OneSidedPsd> {
    let l = series.len();
    if l < 2 {
        return Err(Error::InvalidInput("periodogram needs at least two samples".into()));
    }
    let dt = series.dt();
    let mut buf: Vec<C64> = series.samples().iter().map(|&x| c(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(l).process(&mut buf);
    let t_obs = l as f64 * dt;
    let half = l / 2;
    let samples = (0..=half)
        .map(|k| {
            let s2 = (buf[k] * dt).norm_sqr() / t_obs;
            if k == 0 || (l % 2 == 0 && k == half) {
                s2
            } else {
                2.0 * s2
            }
        })
        .collect();
    OneSidedPsd::new(samples, 2.0 * PI / t_obs)
}
