//! Dense complex linear algebra used throughout the crate.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. Exponentials of Hermitian
//! generators go through an eigendecomposition, which also gives the exact
//! Fréchet derivative needed by the gradient code.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(dim: usize) -> CMat {
    CMat::identity(dim, dim)
}

pub fn zeros(dim: usize) -> CMat {
    CMat::zeros(dim, dim)
}

pub fn pauli_x() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
}

pub fn pauli_y() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
}

pub fn pauli_z() -> CMat {
    CMat::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
}

/// `|i><j|` in dimension `dim`.
pub fn ket_bra(dim: usize, i: usize, j: usize) -> CMat {
    let mut m = zeros(dim);
    m[(i, j)] = c(1.0, 0.0);
    m
}

pub fn basis_state(dim: usize, k: usize) -> CVec {
    let mut v = CVec::zeros(dim);
    v[k] = c(1.0, 0.0);
    v
}

pub fn diag_real(values: &[f64]) -> CMat {
    CMat::from_diagonal(&CVec::from_iterator(
        values.len(),
        values.iter().map(|&x| c(x, 0.0)),
    ))
}

pub fn dagger(a: &CMat) -> CMat {
    a.adjoint()
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Kronecker product of a list of factors, left to right.
pub fn kron_all(factors: &[CMat]) -> CMat {
    let mut out = CMat::identity(1, 1);
    for f in factors {
        out = out.kronecker(f);
    }
    out
}

/// Embed a single-site operator at `site` of `n` sites of local dimension `d`.
pub fn embed(op: &CMat, site: usize, n: usize) -> CMat {
    let d = op.nrows();
    let factors: Vec<CMat> = (0..n)
        .map(|k| if k == site { op.clone() } else { identity(d) })
        .collect();
    kron_all(&factors)
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn trace(a: &CMat) -> C64 {
    a.trace()
}

/// Frobenius inner product `Tr(A† B)`.
pub fn frobenius_inner(a: &CMat, b: &CMat) -> Result<C64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "frobenius_inner: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum())
}

/// `Re Tr(A† B)` without shape checks; the real inner product used by the
/// gradient code.
pub fn re_inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

pub fn frobenius_norm(a: &CMat) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn hermiticity_defect(a: &CMat) -> f64 {
    if !a.is_square() {
        return f64::INFINITY;
    }
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Absolute Hermiticity check scaled by the matrix size, so that large
/// generators (rad/s) are judged relative to their own magnitude.
pub fn is_hermitian(a: &CMat, tol: f64) -> bool {
    let scale = a.iter().fold(1.0_f64, |m, x| m.max(x.norm()));
    hermiticity_defect(a) <= tol * scale
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * c(0.5, 0.0)
}

pub fn unitarity_defect(u: &CMat) -> f64 {
    let n = u.nrows();
    let prod = u.adjoint() * u;
    (prod - identity(n)).iter().fold(0.0_f64, |m, x| m.max(x.norm()))
}

/// Eigendecomposition of a Hermitian matrix: `H = V diag(λ) V†`.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl HermitianEigen {
    pub fn new(h: &CMat) -> Self {
        let n = h.nrows();
        if n == 0 {
            return Self { values: vec![], vectors: CMat::zeros(0, 0) };
        }
        // Diagonal inputs are common (drifts, crosstalk); skip the solver.
        let off_diag = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .any(|(i, j)| i != j && h[(i, j)] != C64::new(0.0, 0.0));
        if !off_diag {
            return Self {
                values: (0..n).map(|i| h[(i, i)].re).collect(),
                vectors: identity(n),
            };
        }
        let herm = hermitian_part(h);
        let eig = herm.symmetric_eigen();
        Self { values: eig.eigenvalues.iter().copied().collect(), vectors: eig.eigenvectors }
    }

    /// `exp(-i H dt)`.
    pub fn propagator(&self, dt: f64) -> CMat {
        let phases: Vec<C64> = self.values.iter().map(|&l| (-I * l * dt).exp()).collect();
        self.reconstruct(&phases)
    }

    fn reconstruct(&self, diag: &[C64]) -> CMat {
        let v = &self.vectors;
        let mut scaled = v.clone();
        for (j, d) in diag.iter().enumerate() {
            scaled.column_mut(j).iter_mut().for_each(|x| *x *= *d);
        }
        scaled * v.adjoint()
    }

    /// Divided-difference matrix of `λ ↦ exp(-iλ dt)`.
    fn divided_differences(&self, dt: f64) -> CMat {
        let n = self.values.len();
        let e: Vec<C64> = self.values.iter().map(|&l| (-I * l * dt).exp()).collect();
        let mut phi = CMat::zeros(n, n);
        for j in 0..n {
            for k in 0..n {
                let (lj, lk) = (self.values[j], self.values[k]);
                let gap = lj - lk;
                phi[(j, k)] = if gap.abs() * dt.abs() < 1e-8 {
                    // second-order expansion around the mean eigenvalue
                    let mid = (-I * 0.5 * (lj + lk) * dt).exp();
                    -I * dt * mid * (1.0 - gap * gap * dt * dt / 24.0)
                } else {
                    (e[j] - e[k]) / gap
                };
            }
        }
        phi
    }

    /// Directional derivative of `exp(-i H dt)` along `dh`.
    pub fn propagator_derivative(&self, dt: f64, dh: &CMat) -> CMat {
        let v = &self.vectors;
        let x = v.adjoint() * dh * v;
        let phi = self.divided_differences(dt);
        let inner = x.component_mul(&phi);
        v * inner * v.adjoint()
    }

    /// Adjoint of [`Self::propagator_derivative`] under `Re Tr(A† B)`:
    /// given the cotangent `u_bar` of `U = exp(-iH dt)` returns the cotangent
    /// of `H`.
    pub fn propagator_pullback(&self, dt: f64, u_bar: &CMat) -> CMat {
        let v = &self.vectors;
        let y = v.adjoint() * u_bar * v;
        let phi = self.divided_differences(dt).map(|z| z.conj());
        v * y.component_mul(&phi) * v.adjoint()
    }
}

/// `exp(-i H dt)` for Hermitian `H`.
pub fn expm_hermitian(h: &CMat, dt: f64) -> Result<CMat> {
    if !h.is_square() {
        return Err(Error::Shape(format!("expm_hermitian: non-square {:?}", h.shape())));
    }
    if !is_hermitian(h, 1e-9) {
        return Err(Error::NotHermitian(hermiticity_defect(h)));
    }
    if dt < 0.0 || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("expm_hermitian: bad time step {dt}")));
    }
    Ok(HermitianEigen::new(h).propagator(dt))
}

/// Principal matrix logarithm of a unitary, via its Schur form. Returns the
/// Hermitian generator `G` with `U = exp(-i G)`, eigenphases in (-π, π].
pub fn unitary_generator(u: &CMat) -> Result<CMat> {
    let n = u.nrows();
    if unitarity_defect(u) > 1e-8 {
        return Err(Error::InvalidInput("unitary_generator: input is not unitary".into()));
    }
    // A unitary is normal: the Hermitian and anti-Hermitian parts commute, so
    // a generic real combination shares the eigenbasis of U.
    let a = hermitian_part(u);
    let b = (u - u.adjoint()) * c(0.0, -0.5);
    let mix = &a + &b * c(std::f64::consts::SQRT_2 - 0.3, 0.0);
    let eig = HermitianEigen::new(&mix);
    let v = &eig.vectors;
    let d = v.adjoint() * u * v;
    let mut g = CMat::zeros(n, n);
    for k in 0..n {
        let phase = d[(k, k)].arg();
        // U = exp(-iG) -> G eigenvalue = -phase
        let lam = if (phase - std::f64::consts::PI).abs() < 1e-12 { -std::f64::consts::PI } else { -phase };
        g[(k, k)] = c(lam, 0.0);
    }
    let gen = v * g * v.adjoint();
    // guard against degenerate mixing
    let check = HermitianEigen::new(&gen).propagator(1.0);
    if (check - u).iter().fold(0.0_f64, |m, x| m.max(x.norm())) > 1e-8 {
        return Err(Error::Numerical("unitary_generator: eigenbasis extraction failed".into()));
    }
    Ok(hermitian_part(&gen))
}

pub fn normalize(v: &CVec) -> CVec {
    let n = v.norm();
    v / c(n, 0.0)
}
