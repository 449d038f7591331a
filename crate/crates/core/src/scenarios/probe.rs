use serde::{Deserialize, Serialize};

use crate::control::{ControlSolution, Projector, RealPwc, Segmentation, ShiftTerm};
use crate::error::{Error, Result};
use crate::linalg::{c, identity, kron, pauli_x, pauli_y, pauli_z, trace, unitary_generator, CMat};

pub const PROBE_GATES: usize = 66;
pub const PROBE_GATE_TIME: f64 = 110e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub i: usize,
    pub j: usize,
    pub gate_time: f64,
    pub gates: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { i: 0, j: 0, gate_time: PROBE_GATE_TIME, gates: PROBE_GATES }
    }
}

fn hadamard() -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_row_slice(2, 2, &[c(s, 0.0), c(s, 0.0), c(s, 0.0), c(-s, 0.0)])
}

/// Control on qubit `a` (first tensor factor), target `b`.
pub fn cnot() -> CMat {
    let mut m = CMat::zeros(4, 4);
    for (r, col) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
        m[(r, col)] = c(1.0, 0.0);
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    Identity,
    HadamardA,
    HadamardAB,
    Cnot,
    XB,
}

impl Gate {
    pub fn unitary(self) -> CMat {
        let i2 = identity(2);
        match self {
            Gate::Identity => identity(4),
            Gate::HadamardA => kron(&hadamard(), &i2),
            Gate::HadamardAB => kron(&hadamard(), &hadamard()),
            Gate::Cnot => cnot(),
            Gate::XB => kron(&i2, &pauli_x()),
        }
    }
}

/// `U_E = X_b CNOT H_a` in time order.
const ENTANGLER: [Gate; 3] = [Gate::HadamardA, Gate::Cnot, Gate::XB];
/// `CNOT H_ab CNOT H_ab CNOT`, a SWAP.
const SWAP: [Gate; 5] = [Gate::Cnot, Gate::HadamardAB, Gate::Cnot, Gate::HadamardAB, Gate::Cnot];

/// Gate list in time order: `U_E`, `i` identities, SW, `j` identities, SW,
/// the remaining identities and `U_E†`.
pub fn probe_gates(i: usize, j: usize, total: usize) -> Result<Vec<Gate>> {
    if 16 + i + j > total {
        return Err(Error::InvalidInput(format!("probe (i={i}, j={j}) does not fit in {total} gates")));
    }
    let mut g = ENTANGLER.to_vec();
    g.extend(std::iter::repeat(Gate::Identity).take(i));
    g.extend(SWAP);
    g.extend(std::iter::repeat(Gate::Identity).take(j));
    g.extend(SWAP);
    g.extend(std::iter::repeat(Gate::Identity).take(total - 16 - i - j));
    // every entangler gate is self-inverse
    g.extend(ENTANGLER.iter().rev());
    Ok(g)
}

/// Traceless two-qubit Pauli basis, normalized so `Tr(P_k P_l) = δ_kl`.
fn pauli_basis() -> Vec<CMat> {
    let singles = [identity(2), pauli_x(), pauli_y(), pauli_z()];
    let mut out = vec![];
    for (ka, a) in singles.iter().enumerate() {
        for (kb, b) in singles.iter().enumerate() {
            if ka + kb > 0 {
                out.push(kron(a, b) * c(0.5, 0.0));
            }
        }
    }
    out
}

/// Each gate as one constant segment of length `T_g` with Hamiltonian
/// `G/T_g`, `U = exp(−iG)` on the principal branch. Global phases are
/// dropped, so the Hamiltonian is expanded on the 15 traceless Paulis.
pub fn probe_control(cfg: &ProbeConfig) -> Result<ControlSolution> {
    if !(cfg.gate_time > 0.0) {
        return Err(Error::InvalidInput("gate time must be positive".into()));
    }
    let gates = probe_gates(cfg.i, cfg.j, cfg.gates)?;
    let basis = pauli_basis();
    let generators = [Gate::Identity, Gate::HadamardA, Gate::HadamardAB, Gate::Cnot, Gate::XB]
        .iter()
        .map(|g| Ok((*g, unitary_generator(&g.unitary())?)))
        .collect::<Result<Vec<_>>>()?;
    let coeffs: Vec<Vec<f64>> = gates
        .iter()
        .map(|g| {
            let gen = &generators.iter().find(|(k, _)| k == g).expect("listed").1;
            basis.iter().map(|p| trace(&(p * gen)).re / cfg.gate_time).collect()
        })
        .collect();
    let duration = cfg.gate_time * gates.len() as f64;
    let seg = Segmentation::uniform(gates.len(), duration)?;
    let shifts = basis
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let values = coeffs.iter().map(|row| row[k]).collect();
            ShiftTerm::new(RealPwc::new(values, seg.clone())?, p.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    ControlSolution::new(4, duration, vec![], shifts, None)
}

/// `N = (Z_a − Z_b)/2`.
pub fn probe_noise_operator() -> CMat {
    (kron(&pauli_z(), &identity(2)) - kron(&identity(2), &pauli_z())) * c(0.5, 0.0)
}

/// Population of `|00⟩`, which the probe returns to.
pub fn probe_projector() -> Projector {
    Projector::from_indices(4, &[0]).expect("valid index")
}

/// All `(i, j)` with `16 + i + j ≤ gates`, stepping both by `stride`.
pub fn probe_grid(gates: usize, stride: usize) -> Vec<(usize, usize)> {
    let room = gates.saturating_sub(16);
    let stride = stride.max(1);
    let mut out = vec![];
    for i in (0..=room).step_by(stride) {
        for j in (0..=room - i).step_by(stride) {
            out.push((i, j));
        }
    }
    out
}
