use serde::{Deserialize, Serialize};

use super::pwc::{ComplexPwc, PwcOperator, RealPwc, Segmentation};
use crate::error::{Error, Result};
use crate::json::{complex_from_json, complex_to_json, ComplexJson, MatrixJson};
use crate::linalg::{c, hermiticity_defect, is_hermitian, zeros, CMat, C64, I};

/// Polar form `γ = Ω e^{iφ}` with `Ω ≥ 0` and `φ ∈ [0, 2π)`.
pub fn to_polar(gamma: C64) -> (f64, f64) {
    let modulus = gamma.norm();
    if modulus == 0.0 {
        return (0.0, 0.0);
    }
    let mut phase = gamma.arg();
    if phase < 0.0 {
        phase += std::f64::consts::TAU;
    }
    (modulus, phase)
}

pub fn from_polar(modulus: f64, phase: f64) -> C64 {
    C64::from_polar(modulus, phase)
}

/// Cartesian form `γ = I + iQ`.
pub fn to_cartesian(gamma: C64) -> (f64, f64) {
    (gamma.re, gamma.im)
}

pub fn from_cartesian(i: f64, q: f64) -> C64 {
    c(i, q)
}

/// Hermitian quadrature operators of a drive operator:
/// `A_I = C + C†`, `A_Q = i(C − C†)`, so that `γC + H.c. = I·A_I + Q·A_Q`.
pub fn drive_quadratures(op: &CMat) -> (CMat, CMat) {
    let adj = op.adjoint();
    (op + &adj, (op - &adj) * I)
}

/// A complex pulse `γ(t)` on a (generally non-Hermitian) operator `C`,
/// contributing `γ C + γ* C†`.
#[derive(Debug, Clone)]
pub struct DriveTerm {
    pub pulse: ComplexPwc,
    pub operator: CMat,
}

/// A real pulse `α(t)` on a Hermitian operator `A`.
#[derive(Debug, Clone)]
pub struct ShiftTerm {
    pub pulse: RealPwc,
    pub operator: CMat,
}

impl DriveTerm {
    pub fn new(pulse: ComplexPwc, operator: CMat) -> Self {
        Self { pulse, operator }
    }
}

impl ShiftTerm {
    pub fn new(pulse: RealPwc, operator: CMat) -> Result<Self> {
        if !is_hermitian(&operator, 1e-12) {
            return Err(Error::NotHermitian(hermiticity_defect(&operator)));
        }
        Ok(Self { pulse, operator })
    }
}

/// Drives, shifts and a constant drift over a fixed duration.
#[derive(Debug, Clone)]
pub struct ControlSolution {
    dimension: usize,
    duration: f64,
    drives: Vec<DriveTerm>,
    shifts: Vec<ShiftTerm>,
    drift: CMat,
}

impl ControlSolution {
    pub fn new(
        dimension: usize,
        duration: f64,
        drives: Vec<DriveTerm>,
        shifts: Vec<ShiftTerm>,
        drift: Option<CMat>,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::InvalidInput(format!("duration must be positive, got {duration}")));
        }
        let drift = drift.unwrap_or_else(|| zeros(dimension));
        let check_dim = |m: &CMat, what: &str| -> Result<()> {
            if m.nrows() != dimension || m.ncols() != dimension {
                return Err(Error::Shape(format!(
                    "{what} is {:?}, system dimension is {dimension}",
                    m.shape()
                )));
            }
            Ok(())
        };
        check_dim(&drift, "drift")?;
        if !is_hermitian(&drift, 1e-12) {
            return Err(Error::NotHermitian(hermiticity_defect(&drift)));
        }
        let rtol = 1e-9 * duration;
        for (k, d) in drives.iter().enumerate() {
            check_dim(&d.operator, &format!("drive {k} operator"))?;
            if (d.pulse.duration() - duration).abs() > rtol {
                return Err(Error::Segmentation(format!("drive {k} does not span the duration")));
            }
        }
        for (k, s) in shifts.iter().enumerate() {
            check_dim(&s.operator, &format!("shift {k} operator"))?;
            if !is_hermitian(&s.operator, 1e-12) {
                return Err(Error::NotHermitian(hermiticity_defect(&s.operator)));
            }
            if (s.pulse.duration() - duration).abs() > rtol {
                return Err(Error::Segmentation(format!("shift {k} does not span the duration")));
            }
        }
        Ok(Self { dimension, duration, drives, shifts, drift })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn drives(&self) -> &[DriveTerm] {
        &self.drives
    }

    pub fn shifts(&self) -> &[ShiftTerm] {
        &self.shifts
    }

    pub fn drift(&self) -> &CMat {
        &self.drift
    }

    pub fn with_drives(&self, drives: Vec<DriveTerm>) -> Result<Self> {
        Self::new(self.dimension, self.duration, drives, self.shifts.clone(), Some(self.drift.clone()))
    }

    pub fn with_shifts(&self, shifts: Vec<ShiftTerm>) -> Result<Self> {
        Self::new(self.dimension, self.duration, self.drives.clone(), shifts, Some(self.drift.clone()))
    }

    /// Segmentations of every term, drives first.
    pub fn segmentations(&self) -> Vec<&Segmentation> {
        self.drives
            .iter()
            .map(|d| d.pulse.segmentation())
            .chain(self.shifts.iter().map(|s| s.pulse.segmentation()))
            .collect()
    }

    /// The shared segmentation if all terms agree, otherwise `None`.
    pub fn common_segmentation(&self) -> Option<Segmentation> {
        let segs = self.segmentations();
        match segs.first() {
            None => Some(Segmentation::uniform(1, self.duration).expect("positive duration")),
            Some(first) => segs.iter().all(|s| s.approx_eq(first)).then(|| (*first).clone()),
        }
    }

    /// Hamiltonian from the Hermitian part of every term on one segment.
    pub(crate) fn hamiltonian_from_values(&self, gammas: &[C64], alphas: &[f64]) -> CMat {
        let mut h = self.drift.clone();
        for (d, &g) in self.drives.iter().zip(gammas) {
            if g != C64::new(0.0, 0.0) {
                let term = &d.operator * g;
                h += &term + term.adjoint();
            }
        }
        for (s, &a) in self.shifts.iter().zip(alphas) {
            if a != 0.0 {
                h += &s.operator * c(a, 0.0);
            }
        }
        h
    }
}

/// Per-segment control Hamiltonians
/// `H_i = Σ_j (γ_ij C_j + H.c.) + Σ_l α_il A_l + D`.
///
/// All terms must share one segmentation; use
/// [`crate::simulator::joint_segments`] (or
/// [`crate::simulator::control_hamiltonian`]) otherwise.
pub fn assemble_hamiltonian(ctrl: &ControlSolution) -> Result<PwcOperator> {
    let seg = ctrl.common_segmentation().ok_or_else(|| {
        Error::Segmentation("control terms use different segmentations; resample onto a joint grid first".into())
    })?;
    let values = (0..seg.len())
        .map(|i| {
            let gammas: Vec<C64> = ctrl.drives.iter().map(|d| d.pulse.values()[i]).collect();
            let alphas: Vec<f64> = ctrl.shifts.iter().map(|s| s.pulse.values()[i]).collect();
            ctrl.hamiltonian_from_values(&gammas, &alphas)
        })
        .collect();
    PwcOperator::new(values, seg)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DriveJson {
    values: Vec<ComplexJson>,
    durations: Vec<f64>,
    operator: MatrixJson,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ShiftJson {
    values: Vec<f64>,
    durations: Vec<f64>,
    operator: MatrixJson,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ControlSolutionJson {
    dimension: usize,
    duration: f64,
    #[serde(default)]
    drives: Vec<DriveJson>,
    #[serde(default)]
    shifts: Vec<ShiftJson>,
    #[serde(default)]
    drift: Option<MatrixJson>,
}

impl ControlSolution {
    pub fn to_json_value(&self) -> serde_json::Value {
        let doc = ControlSolutionJson {
            dimension: self.dimension,
            duration: self.duration,
            drives: self
                .drives
                .iter()
                .map(|d| DriveJson {
                    values: d.pulse.values().iter().map(|&z| complex_to_json(z)).collect(),
                    durations: d.pulse.segmentation().durations().to_vec(),
                    operator: MatrixJson::from_matrix(&d.operator),
                })
                .collect(),
            shifts: self
                .shifts
                .iter()
                .map(|s| ShiftJson {
                    values: s.pulse.values().to_vec(),
                    durations: s.pulse.segmentation().durations().to_vec(),
                    operator: MatrixJson::from_matrix(&s.operator),
                })
                .collect(),
            drift: Some(MatrixJson::from_matrix(&self.drift)),
        };
        serde_json::to_value(doc).expect("control solution serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_json_value()).expect("control solution serializes")
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        let doc: ControlSolutionJson = serde_json::from_value(value)?;
        let drives = doc
            .drives
            .into_iter()
            .map(|d| {
                let seg = Segmentation::with_total(d.durations, doc.duration)?;
                let values = d.values.into_iter().map(complex_from_json).collect();
                Ok(DriveTerm::new(ComplexPwc::new(values, seg)?, d.operator.to_matrix()?))
            })
            .collect::<Result<Vec<_>>>()?;
        let shifts = doc
            .shifts
            .into_iter()
            .map(|s| {
                let seg = Segmentation::with_total(s.durations, doc.duration)?;
                ShiftTerm::new(RealPwc::new(s.values, seg)?, s.operator.to_matrix()?)
            })
            .collect::<Result<Vec<_>>>()?;
        let drift = doc.drift.map(|m| m.to_matrix()).transpose()?;
        Self::new(doc.dimension, doc.duration, drives, shifts, drift)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_json_value(serde_json::from_str(text)?)
    }
}
