use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};

/// Relative tolerance used when comparing durations and boundaries.
pub const TIME_RTOL: f64 = 1e-9;

/// Partition of `[0, τ]` into consecutive positive-length segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Segmentation {
    durations: Vec<f64>,
}

impl Segmentation {
    pub fn new(durations: Vec<f64>) -> Result<Self> {
        if durations.is_empty() {
            return Err(Error::Segmentation("no segments".into()));
        }
        if let Some(bad) = durations.iter().find(|d| !(**d > 0.0) || !d.is_finite()) {
            return Err(Error::Segmentation(format!("non-positive segment duration {bad}")));
        }
        Ok(Self { durations })
    }

    /// `count` equal segments spanning `total`.
    pub fn uniform(count: usize, total: f64) -> Result<Self> {
        if count == 0 {
            return Err(Error::Segmentation("no segments".into()));
        }
        Self::new(vec![total / count as f64; count])
    }

    /// Like [`Segmentation::new`] but also checks the total against a declared
    /// duration.
    pub fn with_total(durations: Vec<f64>, total: f64) -> Result<Self> {
        let seg = Self::new(durations)?;
        let tol = (1e-12 + 4.0 * f64::EPSILON * seg.len() as f64) * total.abs();
        if (seg.total() - total).abs() > tol {
            return Err(Error::Segmentation(format!(
                "durations sum to {} but declared duration is {total}",
                seg.total()
            )));
        }
        Ok(seg)
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn len(&self) -> usize {
        self.durations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.durations.iter().sum()
    }

    /// Boundaries `t_0 = 0 < t_1 < … < t_n = τ`.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.durations.len() + 1);
        let mut t = 0.0;
        out.push(t);
        for d in &self.durations {
            t += d;
            out.push(t);
        }
        out
    }

    /// Index of the segment containing `t`; `t = τ` maps to the last segment.
    pub fn segment_at(&self, t: f64) -> Option<usize> {
        let total = self.total();
        if t < -TIME_RTOL * total || t > total * (1.0 + TIME_RTOL) {
            return None;
        }
        let mut acc = 0.0;
        for (i, d) in self.durations.iter().enumerate() {
            acc += d;
            if t < acc {
                return Some(i);
            }
        }
        Some(self.durations.len() - 1)
    }

    pub fn approx_eq(&self, other: &Segmentation) -> bool {
        let tol = TIME_RTOL * self.total().max(other.total());
        self.len() == other.len()
            && self
                .boundaries()
                .iter()
                .zip(other.boundaries())
                .all(|(a, b)| (a - b).abs() <= tol)
    }
}

impl TryFrom<Vec<f64>> for Segmentation {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Segmentation::new(v)
    }
}

impl From<Segmentation> for Vec<f64> {
    fn from(s: Segmentation) -> Self {
        s.durations
    }
}

/// Piecewise-constant scalar function of time.
#[derive(Debug, Clone, PartialEq)]
pub struct PwcScalar<T> {
    values: Vec<T>,
    segmentation: Segmentation,
}

pub type RealPwc = PwcScalar<f64>;
pub type ComplexPwc = PwcScalar<C64>;

impl<T: Copy> PwcScalar<T> {
    pub fn new(values: Vec<T>, segmentation: Segmentation) -> Result<Self> {
        if values.len() != segmentation.len() {
            return Err(Error::Segmentation(format!(
                "{} values for {} segments",
                values.len(),
                segmentation.len()
            )));
        }
        Ok(Self { values, segmentation })
    }

    pub fn uniform(values: Vec<T>, total: f64) -> Result<Self> {
        let seg = Segmentation::uniform(values.len(), total)?;
        Self::new(values, seg)
    }

    pub fn constant(value: T, total: f64) -> Result<Self> {
        Self::uniform(vec![value], total)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn segmentation(&self) -> &Segmentation {
        &self.segmentation
    }

    pub fn duration(&self) -> f64 {
        self.segmentation.total()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value_at(&self, t: f64) -> Option<T> {
        self.segmentation.segment_at(t).map(|i| self.values[i])
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> PwcScalar<U> {
        PwcScalar { values: self.values.iter().map(|&v| f(v)).collect(), segmentation: self.segmentation.clone() }
    }
}

/// Piecewise-constant operator-valued function (typically a Hamiltonian).
#[derive(Debug, Clone)]
pub struct PwcOperator {
    values: Vec<CMat>,
    segmentation: Segmentation,
}

impl PwcOperator {
    pub fn new(values: Vec<CMat>, segmentation: Segmentation) -> Result<Self> {
        if values.len() != segmentation.len() {
            return Err(Error::Segmentation(format!(
                "{} operators for {} segments",
                values.len(),
                segmentation.len()
            )));
        }
        let dim = values[0].nrows();
        if values.iter().any(|m| m.nrows() != dim || m.ncols() != dim) {
            return Err(Error::Shape("operator series with inconsistent dimensions".into()));
        }
        Ok(Self { values, segmentation })
    }

    pub fn constant(op: CMat, total: f64) -> Result<Self> {
        Self::new(vec![op], Segmentation::uniform(1, total)?)
    }

    pub fn values(&self) -> &[CMat] {
        &self.values
    }

    pub fn segmentation(&self) -> &Segmentation {
        &self.segmentation
    }

    pub fn dimension(&self) -> usize {
        self.values[0].nrows()
    }

    pub fn duration(&self) -> f64 {
        self.segmentation.total()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value_at(&self, t: f64) -> Option<&CMat> {
        self.segmentation.segment_at(t).map(|i| &self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CMat, f64)> {
        self.values.iter().zip(self.segmentation.durations().iter().copied())
    }
}
