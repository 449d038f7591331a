//! Control Hamiltonians, fidelity metrics and controllability.

mod fidelity;
mod lie;
mod pwc;
mod solution;

pub use fidelity::{
    optimal_infidelity, state_fidelity, subspace_overlap, FidelityKind, FidelityValue, Projector,
};
pub use lie::{controllability_rank, controllability_rank_with, DEFAULT_RANK_THRESHOLD};
pub use pwc::{ComplexPwc, PwcOperator, PwcScalar, RealPwc, Segmentation, TIME_RTOL};
pub use solution::{
    assemble_hamiltonian, drive_quadratures, from_cartesian, from_polar, to_cartesian, to_polar,
    ControlSolution, DriveTerm, ShiftTerm,
};

pub use crate::linalg::expm_hermitian as matrix_exp_unitary;
pub use crate::simulator::robust_infidelity_mc;
