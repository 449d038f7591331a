use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64};

/// Diagonal 0/1 projector onto a target subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct Projector {
    diagonal: Vec<bool>,
}

impl Projector {
    pub fn new(diagonal: Vec<bool>) -> Result<Self> {
        if !diagonal.iter().any(|&p| p) {
            return Err(Error::InvalidInput("projector must have at least one nonzero entry".into()));
        }
        Ok(Self { diagonal })
    }

    pub fn full(dim: usize) -> Self {
        Self { diagonal: vec![true; dim] }
    }

    /// Projector onto the first `count` levels of a `dim`-level system.
    pub fn leading(dim: usize, count: usize) -> Result<Self> {
        Self::new((0..dim).map(|k| k < count).collect())
    }

    pub fn from_indices(dim: usize, indices: &[usize]) -> Result<Self> {
        if let Some(bad) = indices.iter().find(|&&k| k >= dim) {
            return Err(Error::InvalidInput(format!("projector index {bad} out of range for dimension {dim}")));
        }
        Self::new((0..dim).map(|k| indices.contains(&k)).collect())
    }

    pub fn dimension(&self) -> usize {
        self.diagonal.len()
    }

    pub fn diagonal(&self) -> &[bool] {
        &self.diagonal
    }

    pub fn trace(&self) -> usize {
        self.diagonal.iter().filter(|&&p| p).count()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.diagonal.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect()
    }

    pub fn matrix(&self) -> CMat {
        crate::linalg::diag_real(&self.weights())
    }

    /// `P A`, zeroing the rows outside the subspace.
    pub fn apply_left(&self, a: &CMat) -> CMat {
        let mut out = a.clone();
        for (i, &p) in self.diagonal.iter().enumerate() {
            if !p {
                out.row_mut(i).fill(C64::new(0.0, 0.0));
            }
        }
        out
    }

    fn check(&self, dim: usize) -> Result<()> {
        if dim != self.dimension() {
            return Err(Error::Shape(format!(
                "projector has dimension {}, operator has {dim}",
                self.dimension()
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<u8>> for Projector {
    type Error = Error;
    fn try_from(v: Vec<u8>) -> Result<Self> {
        if v.iter().any(|&x| x > 1) {
            return Err(Error::InvalidInput("projector entries must be 0 or 1".into()));
        }
        Projector::new(v.into_iter().map(|x| x == 1).collect())
    }
}

impl From<Projector> for Vec<u8> {
    fn from(p: Projector) -> Self {
        p.diagonal.into_iter().map(u8::from).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FidelityKind {
    Optimal,
    Robust,
    State,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityValue {
    pub value: f64,
    pub kind: FidelityKind,
    /// Standard error of a Monte Carlo estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
}

impl FidelityValue {
    pub fn new(value: f64, kind: FidelityKind) -> Self {
        Self { value: value.clamp(0.0, 1.0), kind, std_error: None }
    }
}

/// `Tr(P T† U) / Tr P`, the normalized overlap used by all gate metrics.
pub fn subspace_overlap(u: &CMat, target: &CMat, p: &Projector) -> Result<C64> {
    if u.shape() != target.shape() || !u.is_square() {
        return Err(Error::Shape(format!(
            "unitary {:?} and target {:?} must be square and equal",
            u.shape(),
            target.shape()
        )));
    }
    p.check(u.nrows())?;
    let n = u.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for (l, &on) in p.diagonal().iter().enumerate() {
        if on {
            for k in 0..n {
                acc += target[(k, l)].conj() * u[(k, l)];
            }
        }
    }
    Ok(acc / p.trace() as f64)
}

/// Gate infidelity `1 − |⟨P T, U⟩_F / Tr P|²` on the projected subspace.
///
/// The projector acts on the column (input) side: only the listed input
/// states need to map correctly.
pub fn optimal_infidelity(u: &CMat, target: &CMat, p: &Projector) -> Result<FidelityValue> {
    let f = subspace_overlap(u, target, p)?;
    Ok(FidelityValue::new(1.0 - f.norm_sqr(), FidelityKind::Optimal))
}

/// `|⟨ψ_i|U|ψ_f⟩|`.
pub fn state_fidelity(u: &CMat, psi_initial: &CVec, psi_final: &CVec) -> Result<f64> {
    let n = u.nrows();
    if psi_initial.len() != n || psi_final.len() != n || !u.is_square() {
        return Err(Error::Shape("state and unitary dimensions differ".into()));
    }
    for (name, v) in [("initial", psi_initial), ("final", psi_final)] {
        if (v.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("{name} state is not normalized (norm {})", v.norm())));
        }
    }
    let amp = psi_initial.dotc(&(u * psi_final));
    Ok(amp.norm().min(1.0))
}
