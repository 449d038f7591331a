use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{basis_state, c, identity, pauli_x, pauli_y, pauli_z, CMat, CVec};
use crate::sysid::{Experiment, ParameterModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThreeAxisConfig {
    /// Wait times per preparation, uniform on `[0, span]`.
    pub points: usize,
    pub span: f64,
    /// Measure populations `(I + σ)/2` rather than Pauli expectations.
    pub populations: bool,
}

impl Default for ThreeAxisConfig {
    fn default() -> Self {
        Self { points: 20, span: 1e-6, populations: true }
    }
}

/// True rates `(Ωx, Ωy, Ωz)` of the reference problem, rad/s.
pub fn three_axis_truth() -> [f64; 3] {
    let mhz = 2.0 * std::f64::consts::PI * 1e6;
    [0.5 * mhz, 1.5 * mhz, 1.8 * mhz]
}

/// `Q(θ) = (Ωx σx + Ωy σy + Ωz σz)/2`.
pub fn three_axis_model() -> ParameterModel {
    let half = |m: CMat| m * c(0.5, 0.0);
    ParameterModel::new(
        vec!["omega_x".into(), "omega_y".into(), "omega_z".into()],
        CMat::zeros(2, 2),
        vec![half(pauli_x()), half(pauli_y()), half(pauli_z())],
    )
    .expect("valid model")
}

fn eigenstate(axis: usize) -> CVec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    match axis {
        0 => CVec::from_vec(vec![c(s, 0.0), c(s, 0.0)]),
        1 => CVec::from_vec(vec![c(s, 0.0), c(0.0, s)]),
        _ => basis_state(2, 0),
    }
}

/// Prepare +x, +y, +z and measure along z, x, y respectively, after
/// `points` waits uniformly spaced on `[0, span]`.
pub fn three_axis_experiments(cfg: &ThreeAxisConfig) -> Result<Vec<Experiment>> {
    if cfg.points < 2 || !(cfg.span > 0.0) {
        return Err(Error::InvalidInput("need at least two wait times and a positive span".into()));
    }
    let measured = [pauli_z(), pauli_x(), pauli_y()];
    let mut out = vec![];
    for (prep, sigma) in measured.iter().enumerate() {
        let obs = if cfg.populations { (identity(2) + sigma) * c(0.5, 0.0) } else { sigma.clone() };
        for k in 0..cfg.points {
            let t = cfg.span * k as f64 / (cfg.points - 1) as f64;
            out.push(Experiment::wait(t, eigenstate(prep), obs.clone())?);
        }
    }
    Ok(out)
}
