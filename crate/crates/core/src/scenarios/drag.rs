use serde::{Deserialize, Serialize};

use crate::control::{ComplexPwc, ControlSolution, DriveTerm, RealPwc, ShiftTerm};
use crate::error::{Error, Result};
use crate::linalg::{basis_state, c, diag_real, ket_bra, CMat, CVec, C64};
use crate::noise::{NoiseKey, OneSidedPsd};
use crate::simulator::{
    apply_phase_noise, control_hamiltonian, ensemble_density, propagate_state, realize_channel,
    realize_noisy_hamiltonian, unitary_evolution, NoiseChannel, NoiseSource, SamplingOptions, SimulationResult,
};

/// Anharmonic three-level system `(γ a + H.c.) + (η/2) a†² a²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QutritSystem {
    pub anharmonicity: f64,
}

impl QutritSystem {
    /// `a = |0⟩⟨1| + √2 |1⟩⟨2|`.
    pub fn lowering() -> CMat {
        ket_bra(3, 0, 1) + ket_bra(3, 1, 2) * c(std::f64::consts::SQRT_2, 0.0)
    }

    /// `(η/2) a†² a² = η |2⟩⟨2|`.
    pub fn drift(&self) -> CMat {
        let a = Self::lowering();
        let ad = a.adjoint();
        &ad * &ad * &a * &a * c(0.5 * self.anharmonicity, 0.0)
    }

    /// Number operator `a†a`, the operator of the drive detuning.
    pub fn number() -> CMat {
        diag_real(&[0.0, 1.0, 2.0])
    }

    /// Qubit-subspace `σz` embedded as `diag(1, −1, 0)`.
    pub fn dephasing() -> CMat {
        diag_real(&[1.0, -1.0, 0.0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DragConfig {
    pub anharmonicity: f64,
    pub duration: f64,
    /// Gaussian width.
    pub sigma: f64,
    pub segments: usize,
    /// Peak of `I(t)`; `None` calibrates it for an X_π.
    pub amplitude: Option<f64>,
    /// `Q(t) = w · dI/dt` (seconds); `None` uses the half-DRAG weight
    /// `−1/(2η)`.
    pub drag_weight: Option<f64>,
    /// Peak of the Gaussian-square detuning `Δ(t)`; `None` calibrates it
    /// together with the amplitude.
    pub detuning: Option<f64>,
}

impl Default for DragConfig {
    fn default() -> Self {
        Self {
            anharmonicity: -2.0 * std::f64::consts::PI * 300e6,
            duration: 40e-9,
            sigma: 8e-9,
            segments: 200,
            amplitude: None,
            drag_weight: None,
            detuning: None,
        }
    }
}

/// Gaussian centred on the pulse, shifted to vanish at the edges and
/// normalized to unit peak.
fn gaussian(t: f64, duration: f64, sigma: f64) -> f64 {
    let g = |t: f64| (-(t - 0.5 * duration).powi(2) / (2.0 * sigma * sigma)).exp();
    let edge = g(0.0);
    (g(t) - edge) / (1.0 - edge)
}

fn gaussian_derivative(t: f64, duration: f64, sigma: f64) -> f64 {
    let g = (-(t - 0.5 * duration).powi(2) / (2.0 * sigma * sigma)).exp();
    let edge = (-(0.5 * duration).powi(2) / (2.0 * sigma * sigma)).exp();
    -(t - 0.5 * duration) / (sigma * sigma) * g / (1.0 - edge)
}

/// Flat top with Gaussian edges of width `σ/2` over the first and last
/// quarter.
fn gaussian_square(t: f64, duration: f64, sigma: f64) -> f64 {
    let rise = 0.25 * duration;
    let w = 0.5 * sigma;
    let d = if t < rise {
        rise - t
    } else if t > duration - rise {
        t - duration + rise
    } else {
        0.0
    };
    (-d * d / (2.0 * w * w)).exp()
}

#[derive(Debug, Clone)]
pub struct DragPulse {
    pub control: ControlSolution,
    pub amplitude: f64,
    pub drag_weight: f64,
    pub detuning: f64,
    pub i: Vec<f64>,
    pub q: Vec<f64>,
    pub delta: Vec<f64>,
}

fn assemble(cfg: &DragConfig, amplitude: f64, weight: f64, detuning: f64) -> Result<DragPulse> {
    let n = cfg.segments;
    let h = cfg.duration / n as f64;
    let mids: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) * h).collect();
    let i: Vec<f64> = mids.iter().map(|&t| amplitude * gaussian(t, cfg.duration, cfg.sigma)).collect();
    let q: Vec<f64> = mids
        .iter()
        .map(|&t| weight * amplitude * gaussian_derivative(t, cfg.duration, cfg.sigma))
        .collect();
    let delta: Vec<f64> = mids.iter().map(|&t| detuning * gaussian_square(t, cfg.duration, cfg.sigma)).collect();
    let gamma = ComplexPwc::uniform(i.iter().zip(&q).map(|(&a, &b)| C64::new(a, b)).collect(), cfg.duration)?;
    let shift = ShiftTerm::new(RealPwc::uniform(delta.clone(), cfg.duration)?, QutritSystem::number())?;
    let sys = QutritSystem { anharmonicity: cfg.anharmonicity };
    let control = ControlSolution::new(
        3,
        cfg.duration,
        vec![DriveTerm::new(gamma, QutritSystem::lowering())],
        vec![shift],
        Some(sys.drift()),
    )?;
    Ok(DragPulse { control, amplitude, drag_weight: weight, detuning, i, q, delta })
}

/// Noise-free final populations from `|0⟩`.
pub fn final_populations(ctrl: &ControlSolution) -> Result<Vec<f64>> {
    let h = control_hamiltonian(ctrl)?;
    let u = unitary_evolution(&h, &[ctrl.duration()])?;
    Ok((u[0].clone() * basis_state(3, 0)).iter().map(|z| z.norm_sqr()).collect())
}

/// Builds the pulse, calibrating the amplitude and detuning that are not
/// given by golden-section sweeps on the final `|1⟩` population.
pub fn drag_qutrit(cfg: &DragConfig) -> Result<DragPulse> {
    if !(cfg.sigma > 0.0) || !(cfg.duration > 0.0) || cfg.segments == 0 {
        return Err(Error::InvalidInput("width, duration and segment count must be positive".into()));
    }
    if cfg.anharmonicity == 0.0 && cfg.drag_weight.is_none() {
        return Err(Error::InvalidInput("the default DRAG weight needs a nonzero anharmonicity".into()));
    }
    let weight = cfg.drag_weight.unwrap_or(-0.5 / cfg.anharmonicity);
    // area of the unit-peak envelope; γ a + H.c. rotates the qubit at 2I
    let area: f64 = (0..cfg.segments)
        .map(|k| gaussian((k as f64 + 0.5) * cfg.duration / cfg.segments as f64, cfg.duration, cfg.sigma))
        .sum::<f64>()
        * cfg.duration
        / cfg.segments as f64;
    let nominal = 0.5 * std::f64::consts::PI / area;
    let stark = |amp: f64| if cfg.anharmonicity != 0.0 { 2.0 * amp * amp / cfg.anharmonicity } else { 0.0 };
    let calibrate = |detuning: f64| -> Result<f64> {
        match cfg.amplitude {
            Some(a) => Ok(a),
            None => {
                let loss = |a: f64| -> Result<f64> {
                    let p = assemble(cfg, a, weight, detuning)?;
                    Ok(1.0 - final_populations(&p.control)?[1])
                };
                golden_section(loss, 0.7 * nominal, 1.3 * nominal, 1e-10 * nominal)
            }
        }
    };
    let detuning = match cfg.detuning {
        Some(d) => d,
        None if cfg.anharmonicity == 0.0 => 0.0,
        None => {
            // the pulse also shifts the |1⟩ level; search between no
            // detuning and three times the second-order Stark estimate
            let scale = stark(nominal);
            let loss = |f: f64| -> Result<f64> {
                let d = f * scale;
                let p = assemble(cfg, calibrate(d)?, weight, d)?;
                Ok(1.0 - final_populations(&p.control)?[1])
            };
            golden_section(loss, 0.0, 3.0, 1e-8)? * scale
        }
    };
    assemble(cfg, calibrate(detuning)?, weight, detuning)
}

fn golden_section(f: impl Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while (b - a).abs() > tol {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// PSDs of the three noise processes; absent entries are switched off.
#[derive(Debug, Clone, Default)]
pub struct DragNoise {
    /// Drive phase `φ → φ + β_φ` (rad²/(rad/s)).
    pub phase: Option<OneSidedPsd>,
    /// Detuning `Δ → Δ + β_Δ`.
    pub detuning: Option<OneSidedPsd>,
    /// Additive `β_z σz` on the qubit subspace.
    pub dephasing: Option<OneSidedPsd>,
}

/// Ensemble populations from `|0⟩` at `times`. Each trial draws the phase
/// series on channel key 2 and rewrites the drive before adding the
/// additive channels (keys 0 and 1).
pub fn drag_populations(
    ctrl: &ControlSolution,
    noise: &DragNoise,
    times: &[f64],
    trials: usize,
    seed: u64,
    opts: &SamplingOptions,
) -> Result<SimulationResult> {
    use rayon::prelude::*;
    if trials == 0 || times.is_empty() {
        return Err(Error::InvalidInput("need at least one trial and one time".into()));
    }
    let mut channels = vec![];
    if let Some(p) = &noise.detuning {
        channels.push(NoiseChannel::additive(QutritSystem::number(), NoiseSource::Psd(p.clone())));
    }
    if let Some(p) = &noise.dephasing {
        channels.push(NoiseChannel::additive(QutritSystem::dephasing(), NoiseSource::Psd(p.clone())));
    }
    let psi0 = basis_state(3, 0);
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|m| {
            let ctrl = match &noise.phase {
                Some(p) => {
                    let ch = NoiseChannel::drive_modulus(0, NoiseSource::Psd(p.clone()));
                    let beta = realize_channel(&ch, ctrl.duration(), NoiseKey::new(seed, 2, m as u32), opts)?;
                    apply_phase_noise(ctrl, 0, &beta)?
                }
                None => ctrl.clone(),
            };
            let h = realize_noisy_hamiltonian(&ctrl, &channels, seed, m as u32, opts)?;
            propagate_state(&unitary_evolution(&h, times)?, &psi0)
        })
        .collect::<Result<Vec<Vec<CVec>>>>()?;
    let populations = (0..times.len())
        .map(|ti| (0..3).map(|k| per_trial.iter().map(|s| s[ti][k].norm_sqr()).sum::<f64>() / trials as f64).collect())
        .collect();
    let finals: Vec<CVec> = per_trial.iter().map(|s| s[times.len() - 1].clone()).collect();
    Ok(SimulationResult { times: times.to_vec(), populations, final_density: ensemble_density(&finals)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operators_match_definitions() {
        let a = QutritSystem::lowering();
        assert_eq!(a[(0, 1)], c(1.0, 0.0));
        assert_eq!(a[(1, 2)], c(std::f64::consts::SQRT_2, 0.0));
        let sys = QutritSystem { anharmonicity: 3.0 };
        assert!((sys.drift() - diag_real(&[0.0, 0.0, 3.0])).iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn zero_weight_has_no_q() {
        let p = drag_qutrit(&DragConfig { drag_weight: Some(0.0), amplitude: Some(1e8), ..Default::default() }).unwrap();
        assert!(p.q.iter().all(|&q| q == 0.0));
    }

    #[test]
    fn calibrated_pulse_transfers_population() {
        let p = drag_qutrit(&DragConfig::default()).unwrap();
        let pops = final_populations(&p.control).unwrap();
        assert!(pops[1] > 0.999 && pops[2] < 1e-3, "{pops:?}");
        // I integrates to π/2 (rotation rate 2I)
        let area: f64 = p.i.iter().sum::<f64>() * 40e-9 / 200.0;
        assert!((area / (0.5 * std::f64::consts::PI) - 1.0).abs() < 0.05, "{area}");
    }
}
