use serde::{Deserialize, Serialize};

use crate::control::{ComplexPwc, ControlSolution, DriveTerm, Segmentation};
use crate::error::{Error, Result};
use crate::linalg::{c, ket_bra, pauli_z, CMat, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpmgConfig {
    pub order: usize,
    pub duration: f64,
    /// Defaults to a twentieth of the pulse spacing.
    #[serde(default)]
    pub pulse_width: Option<f64>,
}

impl CpmgConfig {
    pub fn width(&self) -> f64 {
        self.pulse_width.unwrap_or(self.duration / (20 * self.order.max(1)) as f64)
    }
}

/// Qubit drive operator `|1⟩⟨0|/2`, so a real pulse `Ω` gives `Ω σx/2`.
pub fn qubit_drive_operator() -> CMat {
    ket_bra(2, 1, 0) * c(0.5, 0.0)
}

/// `σz/2`.
pub fn dephasing_operator() -> CMat {
    pauli_z() * c(0.5, 0.0)
}

/// Pulse centres `τ(j − 1/2)/n`.
pub fn cpmg_centers(order: usize, duration: f64) -> Vec<f64> {
    (1..=order).map(|j| duration * (j as f64 - 0.5) / order as f64).collect()
}

/// `n` square π pulses about x, each `pulse_width` long and centred at the
/// CPMG times; `n = 0` is free evolution.
pub fn cpmg_sequence(order: usize, duration: f64, pulse_width: f64) -> Result<ControlSolution> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::InvalidInput(format!("duration must be positive, got {duration}")));
    }
    if order == 0 {
        let pulse = ComplexPwc::constant(C64::new(0.0, 0.0), duration)?;
        return ControlSolution::new(2, duration, vec![DriveTerm::new(pulse, qubit_drive_operator())], vec![], None);
    }
    if !(pulse_width > 0.0) || order as f64 * pulse_width >= duration {
        return Err(Error::InvalidInput(format!(
            "{order} pulses of width {pulse_width} s overlap in {duration} s"
        )));
    }
    let rabi = std::f64::consts::PI / pulse_width;
    let mut durations = vec![];
    let mut values = vec![];
    let mut t = 0.0;
    for center in cpmg_centers(order, duration) {
        let start = center - 0.5 * pulse_width;
        if start - t > 1e-12 * duration {
            durations.push(start - t);
            values.push(C64::new(0.0, 0.0));
        }
        durations.push(pulse_width);
        values.push(C64::new(rabi, 0.0));
        t = start + pulse_width;
    }
    if duration - t > 1e-12 * duration {
        durations.push(duration - t);
        values.push(C64::new(0.0, 0.0));
    }
    let seg = Segmentation::with_total(durations, duration)?;
    let pulse = ComplexPwc::new(values, seg)?;
    ControlSolution::new(2, duration, vec![DriveTerm::new(pulse, qubit_drive_operator())], vec![], None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::Projector;
    use crate::filter::{filter_function, FilterOptions};
    use crate::simulator::NoiseOperator;
    use std::f64::consts::PI;

    #[test]
    fn free_evolution_and_areas() {
        let free = cpmg_sequence(0, 2e-6, 0.0).unwrap();
        assert_eq!(free.drives()[0].pulse.len(), 1);
        assert_eq!(free.drives()[0].pulse.values()[0], C64::new(0.0, 0.0));
        for n in [1, 2, 5, 8] {
            let s = cpmg_sequence(n, 3e-6, 3e-6 / (10 * n) as f64).unwrap();
            let p = &s.drives()[0].pulse;
            let areas: Vec<f64> = p
                .values()
                .iter()
                .zip(p.segmentation().durations())
                .filter(|(v, _)| v.re > 0.0)
                .map(|(v, d)| v.re * d)
                .collect();
            assert_eq!(areas.len(), n);
            assert!(areas.iter().all(|a| (a - PI).abs() < 1e-12));
            assert!((p.segmentation().total() - 3e-6).abs() < 1e-18);
        }
        assert!(cpmg_sequence(4, 1e-6, 0.25e-6).is_err());
    }

    #[test]
    fn filter_peak_at_cpmg_frequency() {
        let tau = 10e-6;
        let noise = NoiseOperator::Constant(dephasing_operator());
        let p = Projector::full(2);
        for n in [1usize, 2, 4, 8] {
            let s = cpmg_sequence(n, tau, tau / (100 * n) as f64).unwrap();
            // frequency resolution of a window of length tau
            let bin = 2.0 * PI / tau;
            let w: Vec<f64> = (1..400).map(|k| k as f64 * bin / 16.0).collect();
            let ff = filter_function(&s, &noise, &p, &w, &FilterOptions::with_samples(4000)).unwrap();
            let (imax, _) = ff.values.iter().enumerate().fold((0, 0.0), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
            let expect = 2.0 * PI * n as f64 / (2.0 * tau);
            assert!((w[imax] - expect).abs() <= bin, "n={n}: peak {} expected {expect}", w[imax]);
        }
    }
}
