//! Linear signal transforms used by graph nodes: LTI filtering, CRAB bases
//! and temporal symmetrization. Each is a fixed matrix acting on the input
//! values, so the backward pass is a transpose.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::control::Segmentation;
use crate::error::{Error, Result};

/// Impulse responses available to `lti_filter`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    /// Ideal low-pass `sin(ω_c t)/(π t)`.
    Sinc { cutoff: f64 },
    /// First-order low-pass `e^{−t/RC}/RC`, `RC = 1/cutoff`.
    Rc { cutoff: f64 },
    /// Identity filter.
    Delta,
    /// Causal piecewise-constant kernel on `[0, duration]`, normalized to
    /// unit area.
    Samples { values: Vec<f64>, duration: f64 },
}

/// Sine integral `Si(x) = ∫₀ˣ sin(t)/t dt`.
pub fn sine_integral(x: f64) -> f64 {
    if x < 0.0 {
        return -sine_integral(-x);
    }
    if x == 0.0 {
        return 0.0;
    }
    if x <= 2.0 {
        // power series
        let mut sum = 0.0;
        let mut term = x;
        let x2 = x * x;
        let mut k = 0usize;
        loop {
            let add = term / (2 * k + 1) as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
            k += 1;
            term *= -x2 / ((2 * k) * (2 * k + 1)) as f64;
            if k > 60 {
                break;
            }
        }
        return sum;
    }
    // continued fraction for E1(ix), modified Lentz
    use num_complex::Complex64;
    let tiny = 1e-300;
    let mut b = Complex64::new(1.0, x);
    let mut cc = Complex64::new(1.0 / tiny, 0.0);
    let mut d = Complex64::new(1.0, 0.0) / b;
    let mut h = d;
    for i in 1..200 {
        let a = -((i * i) as f64);
        b += 2.0;
        d = Complex64::new(1.0, 0.0) / (d * a + b);
        cc = b + a / cc;
        let del = cc * d;
        h *= del;
        if (del.re - 1.0).abs() + del.im.abs() < 1e-16 {
            break;
        }
    }
    h *= Complex64::new(x.cos(), -x.sin());
    FRAC_PI_2 + h.im
}

impl Kernel {
    /// `∫_{-∞}^{u} K(s) ds`.
    pub fn cdf(&self, u: f64) -> f64 {
        match self {
            Kernel::Sinc { cutoff } => 0.5 + sine_integral(cutoff * u) / PI,
            Kernel::Rc { cutoff } => {
                if u <= 0.0 {
                    0.0
                } else {
                    1.0 - (-u * cutoff).exp()
                }
            }
            Kernel::Delta => {
                if u > 0.0 {
                    1.0
                } else if u < 0.0 {
                    0.0
                } else {
                    0.5
                }
            }
            Kernel::Samples { values, duration } => {
                let total: f64 = values.iter().sum();
                if u <= 0.0 {
                    return 0.0;
                }
                let n = values.len() as f64;
                let pos = (u / duration * n).min(n);
                let full = pos.floor() as usize;
                let mut acc: f64 = values[..full].iter().sum();
                if full < values.len() {
                    acc += values[full] * (pos - full as f64);
                }
                acc / total
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Kernel::Sinc { cutoff } | Kernel::Rc { cutoff } => {
                if !(cutoff.is_finite() && *cutoff > 0.0) {
                    return Err(Error::InvalidInput(format!("kernel cutoff must be positive, got {cutoff}")));
                }
            }
            Kernel::Delta => {}
            Kernel::Samples { values, duration } => {
                if values.is_empty() || !(*duration > 0.0) {
                    return Err(Error::InvalidInput("sampled kernel needs values and a positive duration".into()));
                }
                let total: f64 = values.iter().sum();
                let scale: f64 = values.iter().map(|v| v.abs()).sum();
                if !total.is_finite() || total.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
                    return Err(Error::InvalidInput("kernel is not normalizable (zero area)".into()));
                }
            }
        }
        Ok(())
    }
}

/// Matrix mapping input segment values to the filtered signal sampled at
/// the midpoints of `m` uniform output segments over the same duration.
pub fn lti_matrix(input: &Segmentation, kernel: &Kernel, m: usize) -> Result<DMatrix<f64>> {
    kernel.validate()?;
    if m == 0 {
        return Err(Error::InvalidInput("filter output needs at least one segment".into()));
    }
    let bounds = input.boundaries();
    let total = input.total();
    let n = input.len();
    Ok(DMatrix::from_fn(m, n, |j, i| {
        let t = (j as f64 + 0.5) * total / m as f64;
        kernel.cdf(t - bounds[i]) - kernel.cdf(t - bounds[i + 1])
    }))
}

/// CRAB basis functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Basis {
    /// `cos(ω_b t)` and `sin(ω_b t)` per frequency; coefficients are ordered
    /// `[a₁, b₁, a₂, b₂, …]`.
    Fourier { frequencies: Vec<f64> },
    /// Basis functions given directly at the output segment midpoints.
    Samples { functions: Vec<Vec<f64>> },
}

impl Basis {
    pub fn size(&self) -> usize {
        match self {
            Basis::Fourier { frequencies } => 2 * frequencies.len(),
            Basis::Samples { functions } => functions.len(),
        }
    }
}

/// Matrix from basis coefficients to the waveform at `m` segment midpoints.
pub fn crab_matrix(basis: &Basis, duration: f64, m: usize) -> Result<DMatrix<f64>> {
    if m == 0 {
        return Err(Error::InvalidInput("CRAB waveform needs at least one segment".into()));
    }
    match basis {
        Basis::Fourier { frequencies } => Ok(DMatrix::from_fn(m, 2 * frequencies.len(), |j, b| {
            let t = (j as f64 + 0.5) * duration / m as f64;
            let w = frequencies[b / 2];
            if b % 2 == 0 {
                (w * t).cos()
            } else {
                (w * t).sin()
            }
        })),
        Basis::Samples { functions } => {
            if let Some(f) = functions.iter().find(|f| f.len() != m) {
                return Err(Error::Shape(format!("basis function has {} samples, expected {m}", f.len())));
            }
            Ok(DMatrix::from_fn(m, functions.len(), |j, b| functions[b][j]))
        }
    }
}

/// `[a, b, c] → [a, b, c, c, b, a]`.
pub fn symmetrize(v: &[f64]) -> Vec<f64> {
    v.iter().chain(v.iter().rev()).copied().collect()
}

pub fn symmetrize_adjoint(bar: &[f64]) -> Vec<f64> {
    let n = bar.len() / 2;
    (0..n).map(|i| bar[i] + bar[2 * n - 1 - i]).collect()
}
