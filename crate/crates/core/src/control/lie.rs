use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{commutator, CMat, I};

pub const DEFAULT_RANK_THRESHOLD: f64 = 1e-9;

/// Real vectorization of a matrix: real parts followed by imaginary parts.
fn realify(a: &CMat) -> Vec<f64> {
    a.iter().map(|z| z.re).chain(a.iter().map(|z| z.im)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dimension of the real Lie algebra generated by `operators`.
///
/// Hermitian inputs are mapped to `iH`; anti-Hermitian inputs are used as
/// given. The basis is grown by commutators and orthogonalized in the real
/// vector space, and the final rank is read from singular values above
/// `threshold × s_max`.
pub fn controllability_rank(operators: &[CMat]) -> Result<usize> {
    controllability_rank_with(operators, DEFAULT_RANK_THRESHOLD)
}

pub fn controllability_rank_with(operators: &[CMat], threshold: f64) -> Result<usize> {
    let Some(first) = operators.first() else {
        return Ok(0);
    };
    let n = first.nrows();
    if operators.iter().any(|a| a.nrows() != n || a.ncols() != n) {
        return Err(Error::Shape("generators must share one square dimension".into()));
    }
    let skew = |a: &CMat| -> CMat {
        let herm_defect = (a - a.adjoint()).norm();
        let anti_defect = (a + a.adjoint()).norm();
        if herm_defect <= anti_defect {
            a * I
        } else {
            a.clone()
        }
    };

    let mut basis: Vec<CMat> = Vec::new();
    let mut flat: Vec<Vec<f64>> = Vec::new();
    let try_add = |m: CMat, basis: &mut Vec<CMat>, flat: &mut Vec<Vec<f64>>| -> bool {
        let norm = m.norm();
        if norm == 0.0 {
            return false;
        }
        let m = m / nalgebra::Complex::new(norm, 0.0);
        let mut v = realify(&m);
        // modified Gram–Schmidt, twice for stability
        for _ in 0..2 {
            for b in flat.iter() {
                let p = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let r = dot(&v, &v).sqrt();
        if r < 1e-8 {
            return false;
        }
        v.iter_mut().for_each(|x| *x /= r);
        flat.push(v);
        basis.push(m);
        true
    };

    for a in operators {
        try_add(skew(a), &mut basis, &mut flat);
    }
    let max_dim = 2 * n * n;
    let mut frontier = 0;
    while frontier < basis.len() && basis.len() < max_dim {
        let current = basis.len();
        for i in frontier..current {
            for j in 0..i {
                let c = commutator(&basis[i], &basis[j]);
                try_add(c, &mut basis, &mut flat);
            }
        }
        frontier = current;
    }

    if flat.is_empty() {
        return Ok(0);
    }
    let cols = flat.len();
    let rows = flat[0].len();
    let m = DMatrix::<f64>::from_fn(rows, cols, |r, c| flat[c][r]);
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    Ok(sv.iter().filter(|&&s| s > threshold * smax).count())
}
