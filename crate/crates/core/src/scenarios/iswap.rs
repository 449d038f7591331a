use serde::{Deserialize, Serialize};

use crate::control::{ComplexPwc, ControlSolution, DriveTerm};
use crate::error::{Error, Result};
use crate::linalg::{c, diag_real, ket_bra, CMat, C64};

/// Bessel function of the first kind `J₁(x)` from its power series.
pub fn bessel_j1(x: f64) -> f64 {
    let h = 0.5 * x;
    let mut term = h;
    let mut sum = term;
    for k in 1..200 {
        term *= -h * h / (k as f64 * (k + 1) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// Parametric coupling rate `Λ = 2g J₁(ω̃_T / 2ω_p)`.
pub fn parametric_rate(coupling: f64, modulation_amplitude: f64, pump: f64) -> f64 {
    2.0 * coupling * bessel_j1(modulation_amplitude / (2.0 * pump))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IswapConfig {
    /// Capacitive coupling `g` (rad/s).
    pub coupling: f64,
    /// Flux modulation amplitude `ω̃_T` (rad/s).
    pub modulation_amplitude: f64,
    /// Modulation frequency `ω_p` (rad/s), resonant with `2ω_p = Δ`.
    pub pump: f64,
    /// Upper bound on `Λ` (rad/s).
    pub max_rate: f64,
    /// Upper bound on the fixed-qubit Rabi rate (rad/s).
    pub max_rabi: f64,
    pub segments: usize,
    /// Gate duration; `None` uses the primitive iSWAP time `π/Λ`.
    pub duration: Option<f64>,
}

impl Default for IswapConfig {
    fn default() -> Self {
        let mhz = 2.0 * std::f64::consts::PI * 1e6;
        Self {
            coupling: 5.0 * mhz,
            modulation_amplitude: 40.0 * mhz,
            pump: 100.0 * mhz,
            max_rate: mhz,
            max_rabi: 10.0 * mhz,
            segments: 1,
            duration: None,
        }
    }
}

/// Subspace ordering `|00⟩, |10⟩, |01⟩, |11⟩`, tunable qubit label first.
pub fn iswap_operator() -> CMat {
    ket_bra(4, 1, 2) * c(0.5, 0.0)
}

/// Fixed-qubit drive `(|0⟩⟨1|)_F ⊗ I_T / 2`.
pub fn fixed_qubit_operator() -> CMat {
    (ket_bra(4, 0, 2) + ket_bra(4, 1, 3)) * c(0.5, 0.0)
}

/// `N = I_F ⊗ σz / 2 = diag(−1, 1, −1, 1)/2`.
pub fn iswap_noise_operator() -> CMat {
    diag_real(&[-0.5, 0.5, -0.5, 0.5])
}

pub fn iswap_target() -> CMat {
    let mut u = CMat::zeros(4, 4);
    u[(0, 0)] = c(1.0, 0.0);
    u[(3, 3)] = c(1.0, 0.0);
    u[(1, 2)] = c(0.0, -1.0);
    u[(2, 1)] = c(0.0, -1.0);
    u
}

/// Primitive gate: constant `Λ` (capped at `max_rate`) with `ξ = 0` and the
/// fixed-qubit drive off, plus the noise operator.
pub fn iswap_system(cfg: &IswapConfig) -> Result<(ControlSolution, CMat)> {
    if cfg.segments == 0 {
        return Err(Error::InvalidInput("at least one segment is required".into()));
    }
    let rate = parametric_rate(cfg.coupling, cfg.modulation_amplitude, cfg.pump).abs().min(cfg.max_rate);
    if !(rate > 0.0) {
        return Err(Error::InvalidInput("parametric rate must be positive".into()));
    }
    let duration = cfg.duration.unwrap_or(std::f64::consts::PI / rate);
    let lam = ComplexPwc::uniform(vec![C64::new(rate, 0.0); cfg.segments], duration)?;
    let fixed = ComplexPwc::uniform(vec![C64::new(0.0, 0.0); cfg.segments], duration)?;
    let ctrl = ControlSolution::new(
        4,
        duration,
        vec![DriveTerm::new(lam, iswap_operator()), DriveTerm::new(fixed, fixed_qubit_operator())],
        vec![],
        None,
    )?;
    Ok((ctrl, iswap_noise_operator()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{control_hamiltonian, total_unitary};

    #[test]
    fn bessel_small_argument_and_known_value() {
        for x in [0.01, 0.05, 0.1, 0.2] {
            assert!((bessel_j1(x) / (x / 2.0) - 1.0).abs() < 0.01);
        }
        assert!((bessel_j1(1.0) - 0.440_050_585_744_933_5).abs() < 1e-14);
        assert!((bessel_j1(3.831_705_970_207_512) ).abs() < 1e-12);
    }

    #[test]
    fn noise_matrix_and_full_transfer() {
        assert_eq!(iswap_noise_operator(), diag_real(&[-0.5, 0.5, -0.5, 0.5]));
        let (ctrl, _) = iswap_system(&IswapConfig { segments: 3, ..Default::default() }).unwrap();
        let u = total_unitary(&control_hamiltonian(&ctrl).unwrap());
        assert!((u[(2, 1)].norm() - 1.0).abs() < 1e-12);
        assert!((u[(1, 2)].norm() - 1.0).abs() < 1e-12);
        assert!((u - iswap_target()).iter().all(|z| z.norm() < 1e-12));
    }
}
