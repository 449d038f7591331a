use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::json::{MatrixJson, VectorJson};
use crate::linalg::{basis_state, c, diag_real, embed, identity, ket_bra, kron, pauli_x, pauli_z, CMat, CVec};
use crate::optimizer::GraphSpec;

const TAU: f64 = 2.0 * std::f64::consts::PI;

fn mat(m: &CMat) -> serde_json::Value {
    serde_json::to_value(MatrixJson::from_matrix(m)).expect("matrix serializes")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QubitInRegisterConfig {
    pub segments: usize,
    pub duration: f64,
    /// Bound on `|I + iQ|` and `|α|` (rad/s).
    pub max_rate: f64,
    /// Constant dephasing drift `ν` (rad/s).
    pub drift: f64,
    /// Number of idle qubits next to the controlled one.
    pub spectators: usize,
}

impl Default for QubitInRegisterConfig {
    fn default() -> Self {
        Self { segments: 64, duration: 0.5, max_rate: TAU * 2.0, drift: TAU, spectators: 3 }
    }
}

fn hadamard() -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_row_slice(2, 2, &[c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)])
}

/// Three-axis control of the first qubit of a register: drive
/// `Ω e^{iφ}` on `|1⟩⟨0|/2` (so `I σx/2 + Q σy/2`), shift `α σz/2` and drift
/// `ν σz/2`, targeting a Hadamard on that qubit.
pub fn qubit_in_register(cfg: &QubitInRegisterConfig) -> Result<GraphSpec> {
    if cfg.segments == 0 || !(cfg.duration > 0.0) || !(cfg.max_rate > 0.0) {
        return Err(Error::InvalidInput("segments, duration and bound must be positive".into()));
    }
    let rest = identity(1 << cfg.spectators);
    let lift = |m: CMat| kron(&m, &rest);
    let raise = lift(ket_bra(2, 1, 0) * c(0.5, 0.0));
    let z = lift(pauli_z() * c(0.5, 0.0));
    let pi = std::f64::consts::PI;
    let spec = json!({
        "nodes": [
            {"type": "variables", "name": "modulus", "count": cfg.segments, "lower": 0.0, "upper": 1.0, "scale": cfg.max_rate},
            {"type": "variables", "name": "phase", "count": cfg.segments, "lower": -pi, "upper": pi},
            {"type": "variables", "name": "alpha", "count": cfg.segments, "lower": -1.0, "upper": 1.0, "scale": cfg.max_rate},
            {"type": "pwc", "name": "omega", "input": "modulus", "duration": cfg.duration},
            {"type": "pwc", "name": "phi", "input": "phase", "duration": cfg.duration},
            {"type": "pwc", "name": "alpha_t", "input": "alpha", "duration": cfg.duration},
            {"type": "drive", "name": "drive", "operator": mat(&raise), "modulus": "omega", "phase": "phi"},
            {"type": "shift", "name": "shift", "operator": mat(&z), "signal": "alpha_t"},
            {"type": "hamiltonian", "name": "h", "terms": ["drive", "shift"], "drift": mat(&(z * c(cfg.drift, 0.0)))},
            {"type": "optimal_cost", "name": "infidelity", "hamiltonian": "h", "target": mat(&lift(hadamard()))}
        ],
        "cost": [{"node": "infidelity", "weight": 1.0}]
    });
    Ok(serde_json::from_value(spec)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RydbergConfig {
    pub atoms: usize,
    pub segments: usize,
    pub duration: f64,
    pub max_rabi: f64,
    pub max_detuning: f64,
    pub interaction: f64,
    /// Fixed detuning `δ` of the two end atoms (rad/s).
    pub edge_detuning: f64,
}

impl Default for RydbergConfig {
    fn default() -> Self {
        let mhz = TAU * 1e6;
        Self {
            atoms: 4,
            segments: 40,
            duration: 1.1e-6,
            max_rabi: 5.0 * mhz,
            max_detuning: 20.0 * mhz,
            interaction: 24.0 * mhz,
            edge_detuning: -4.5 * mhz,
        }
    }
}

fn number() -> CMat {
    diag_real(&[0.0, 1.0])
}

/// `−Σ δ_i n_i + Σ_{i<j} V/|i−j|⁶ n_i n_j`.
pub fn rydberg_drift(cfg: &RydbergConfig) -> CMat {
    let n = cfg.atoms;
    let dim = 1 << n;
    let mut h = CMat::zeros(dim, dim);
    for i in 0..n {
        if i == 0 || i == n - 1 {
            h -= embed(&number(), i, n) * c(cfg.edge_detuning, 0.0);
        }
        for j in i + 1..n {
            let v = cfg.interaction / ((j - i) as f64).powi(6);
            h += embed(&number(), i, n) * embed(&number(), j, n) * c(v, 0.0);
        }
    }
    h
}

/// `(|0101…⟩ + |1010…⟩)/√2`, first atom as the leading tensor factor.
pub fn ghz_state(atoms: usize) -> CVec {
    let alternating: usize = (0..atoms).filter(|i| i % 2 == 1).map(|i| 1 << (atoms - 1 - i)).sum();
    let complement = ((1 << atoms) - 1) ^ alternating;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut v = CVec::zeros(1 << atoms);
    v[alternating] = c(s, 0.0);
    v[complement] = c(s, 0.0);
    v
}

/// Global `Ω(t)/2 Σσx − Δ(t) Σn` on an atom chain, preparing the GHZ state
/// from `|00…0⟩`.
pub fn rydberg_chain(cfg: &RydbergConfig) -> Result<GraphSpec> {
    if cfg.atoms < 2 || cfg.segments == 0 || !(cfg.duration > 0.0) {
        return Err(Error::InvalidInput("need at least two atoms, one segment and a positive duration".into()));
    }
    let n = cfg.atoms;
    let dim = 1 << n;
    let sx: CMat = (0..n).map(|i| embed(&pauli_x(), i, n)).fold(CMat::zeros(dim, dim), |a, b| a + b) * c(0.5, 0.0);
    let sn: CMat = (0..n).map(|i| embed(&number(), i, n)).fold(CMat::zeros(dim, dim), |a, b| a + b) * c(-1.0, 0.0);
    let spec = json!({
        "nodes": [
            {"type": "variables", "name": "rabi", "count": cfg.segments, "lower": -1.0, "upper": 1.0, "scale": cfg.max_rabi},
            {"type": "variables", "name": "detuning", "count": cfg.segments, "lower": -1.0, "upper": 1.0, "scale": cfg.max_detuning},
            {"type": "pwc", "name": "omega", "input": "rabi", "duration": cfg.duration},
            {"type": "pwc", "name": "delta", "input": "detuning", "duration": cfg.duration},
            {"type": "shift", "name": "coupling", "operator": mat(&sx), "signal": "omega"},
            {"type": "shift", "name": "detune", "operator": mat(&sn), "signal": "delta"},
            {"type": "hamiltonian", "name": "h", "terms": ["coupling", "detune"], "drift": mat(&rydberg_drift(cfg))},
            {"type": "state_cost", "name": "infidelity", "hamiltonian": "h",
             "initial": VectorJson::from_vector(&basis_state(dim, 0)), "target": VectorJson::from_vector(&ghz_state(n))}
        ],
        "cost": [{"node": "infidelity", "weight": 1.0}]
    });
    Ok(serde_json::from_value(spec)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::commutator;
    use crate::optimizer::{CostGraph, ObjectiveRegistry};

    #[test]
    fn rydberg_interaction_decay_and_ghz() {
        let cfg = RydbergConfig::default();
        let h = rydberg_drift(&cfg);
        // |1010⟩ couples atoms 1 and 3 only; edge detuning enters once
        let idx = 0b1010;
        assert!((h[(idx, idx)].re - (cfg.interaction / 64.0 - cfg.edge_detuning)).abs() < 1e-6);
        let g = ghz_state(4);
        assert!((g.norm() - 1.0).abs() < 1e-15);
        assert!((g[0b0101].re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((g[0b1010].re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn register_drift_commutes_with_control_axis() {
        let cfg = QubitInRegisterConfig::default();
        let spec = qubit_in_register(&cfg).unwrap();
        let g = CostGraph::build(spec.clone(), &ObjectiveRegistry::new()).unwrap();
        assert_eq!(g.lower().len(), 3 * cfg.segments);
        let z = kron(&pauli_z(), &identity(8));
        let drift = match &spec.nodes[8] {
            crate::optimizer::NodeSpec::Hamiltonian { drift, .. } => drift.as_ref().unwrap().to_matrix().unwrap(),
            _ => unreachable!(),
        };
        assert_eq!(drift.nrows(), 16);
        assert!(commutator(&drift, &z).iter().all(|x| x.norm() < 1e-15));
        assert!(CostGraph::build(rydberg_chain(&RydbergConfig::default()).unwrap(), &ObjectiveRegistry::new()).is_ok());
    }
}
