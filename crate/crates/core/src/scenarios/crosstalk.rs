use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::linalg::{c, ket_bra, re_inner, CMat, HermitianEigen, C64, I};
use crate::optimizer::{CustomObjective, GraphSpec, ObjectiveRegistry};

pub const CROSSTALK_OBJECTIVE: &str = "crosstalk_infidelity";

/// Couplings `(α11, α12, α21, α22)` per neighbouring pair, in units of
/// 2π·MHz.
pub const COUPLINGS_MHZ: [[f64; 4]; 4] = [
    [-0.27935, 0.1599, -0.52793, -0.74297],
    [-0.1382, 0.15827, -0.33507, -0.3418],
    [-0.276, -0.6313, 0.24327, -0.74777],
    [-0.26175, -0.49503, 0.14497, -0.70843],
];

pub fn default_couplings() -> Vec<[f64; 4]> {
    let mhz = 2.0 * PI * 1e6;
    COUPLINGS_MHZ.iter().map(|row| row.map(|a| a * mhz)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrosstalkConfig {
    /// `(α11, α12, α21, α22)` in rad/s for each pair `(q, q+1)`.
    pub couplings: Vec<[f64; 4]>,
    /// Free-evolution periods `m`.
    pub periods: usize,
    /// Control unitaries per product gate `k`.
    pub products: usize,
    pub max_duration: f64,
}

impl Default for CrosstalkConfig {
    fn default() -> Self {
        Self { couplings: default_couplings(), periods: 8, products: 2, max_duration: 1.5e-6 }
    }
}

/// `U_Cφ = diag(1, 1, 1, 1, ω*, ω, 1, ω, ω*)`, `ω = e^{2πi/3}`.
pub fn controlled_phase_diagonal() -> [C64; 9] {
    let w = C64::from_polar(1.0, 2.0 * PI / 3.0);
    let one = c(1.0, 0.0);
    [one, one, one, one, w.conj(), w, one, w, w.conj()]
}

/// `C₁₀ = |1⟩⟨0|/2`.
pub fn c10() -> CMat {
    ket_bra(3, 1, 0) * c(0.5, 0.0)
}

/// `C₂₁ = |2⟩⟨1|/2`.
pub fn c21() -> CMat {
    ket_bra(3, 2, 1) * c(0.5, 0.0)
}

type M3 = [[C64; 3]; 3];

fn to_m3(m: &CMat) -> M3 {
    let mut o = [[C64::new(0.0, 0.0); 3]; 3];
    for (r, row) in o.iter_mut().enumerate() {
        for (col, x) in row.iter_mut().enumerate() {
            *x = m[(r, col)];
        }
    }
    o
}

/// Circuit `P_m e^{−iH τ_m} ⋯ P_1 e^{−iH τ_1} P_0` on a qutrit chain with
/// diagonal ZZ-type coupling and instantaneous single-qutrit products
/// `P_j = Π_ℓ ⊗_q exp(−i L_{j,ℓ,q})`.
#[derive(Debug, Clone)]
pub struct CrosstalkProblem {
    pub qutrits: usize,
    pub periods: usize,
    pub products: usize,
    pub max_duration: f64,
    couplings: Vec<[f64; 4]>,
    hzz: Vec<f64>,
    target: Vec<C64>,
}

impl CrosstalkProblem {
    pub fn new(cfg: &CrosstalkConfig) -> Result<Self> {
        if cfg.periods == 0 || cfg.products == 0 {
            return Err(Error::InvalidInput("need at least one period and one product".into()));
        }
        if cfg.couplings.len() < 3 {
            return Err(Error::InvalidInput("the target acts on qutrit pairs (1,2) and (3,4): need four or more qutrits".into()));
        }
        if cfg.couplings.iter().flatten().any(|a| !a.is_finite()) || !(cfg.max_duration > 0.0) {
            return Err(Error::InvalidInput("couplings must be finite and the duration cap positive".into()));
        }
        let n = cfg.couplings.len() + 1;
        let d = 3usize.pow(n as u32);
        let digits = |idx: usize| -> Vec<usize> { (0..n).map(|q| (idx / 3usize.pow((n - 1 - q) as u32)) % 3).collect() };
        let cphi = controlled_phase_diagonal();
        let mut hzz = vec![0.0; d];
        let mut target = vec![c(1.0, 0.0); d];
        for (idx, (h, t)) in hzz.iter_mut().zip(target.iter_mut()).enumerate() {
            let s = digits(idx);
            for (p, a) in cfg.couplings.iter().enumerate() {
                let (x, y) = (s[p], s[p + 1]);
                if x > 0 && y > 0 {
                    *h += a[2 * (x - 1) + (y - 1)];
                }
            }
            *t = cphi[3 * s[0] + s[1]] * cphi[3 * s[2] + s[3]];
        }
        Ok(Self {
            qutrits: n,
            periods: cfg.periods,
            products: cfg.products,
            max_duration: cfg.max_duration,
            couplings: cfg.couplings.clone(),
            hzz,
            target,
        })
    }

    pub fn dimension(&self) -> usize {
        self.hzz.len()
    }

    pub fn couplings(&self) -> &[[f64; 4]] {
        &self.couplings
    }

    /// Diagonal of `H_zz`.
    pub fn hzz_diagonal(&self) -> &[f64] {
        &self.hzz
    }

    pub fn target_diagonal(&self) -> &[C64] {
        &self.target
    }

    pub fn hzz(&self) -> CMat {
        CMat::from_diagonal(&nalgebra::DVector::from_iterator(self.dimension(), self.hzz.iter().map(|&h| c(h, 0.0))))
    }

    pub fn target(&self) -> CMat {
        CMat::from_diagonal(&nalgebra::DVector::from_vec(self.target.clone()))
    }

    /// Angles per gate: `(m+1) · k · qutrits · 2`.
    pub fn angle_count(&self) -> usize {
        (self.periods + 1) * self.products * self.qutrits * 2
    }

    /// Input layout `[τ (m), θ, φ]`, angles ordered by gate, product,
    /// qutrit, then transition (01, 12).
    pub fn input_len(&self) -> usize {
        self.periods + 2 * self.angle_count()
    }

    fn angle_index(&self, j: usize, l: usize, q: usize, nu: usize) -> usize {
        ((j * self.products + l) * self.qutrits + q) * 2 + nu
    }

    /// `L = Σ_ν θ_ν (e^{iφ_ν} C_ν + H.c.)` for one qutrit.
    fn generator(theta: [f64; 2], phi: [f64; 2]) -> (CMat, [CMat; 2], [CMat; 2]) {
        let ops = [c10(), c21()];
        let mut l = CMat::zeros(3, 3);
        let mut d_theta = [CMat::zeros(3, 3), CMat::zeros(3, 3)];
        let mut d_phi = [CMat::zeros(3, 3), CMat::zeros(3, 3)];
        for nu in 0..2 {
            let e = C64::from_polar(1.0, phi[nu]);
            let a = &ops[nu] * e;
            let h = &a + a.adjoint();
            let ia = &a * I;
            d_phi[nu] = (&ia + ia.adjoint()) * c(theta[nu], 0.0);
            l += &h * c(theta[nu], 0.0);
            d_theta[nu] = h;
        }
        (l, d_theta, d_phi)
    }

    fn split<'a>(&self, v: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let m = self.periods;
        let a = self.angle_count();
        (&v[..m], &v[m..m + a], &v[m + a..])
    }

    fn factors(&self, theta: &[f64], phi: &[f64], j: usize, q: usize) -> Vec<(HermitianEigen, CMat, [CMat; 2], [CMat; 2])> {
        (0..self.products)
            .map(|l| {
                let i0 = self.angle_index(j, l, q, 0);
                let (gen, dt, dp) = Self::generator([theta[i0], theta[i0 + 1]], [phi[i0], phi[i0 + 1]]);
                let eig = HermitianEigen::new(&gen);
                let u = eig.propagator(1.0);
                (eig, u, dt, dp)
            })
            .collect()
    }

    /// Single-qutrit blocks `W_{j,q} = V_{j,1,q} ⋯ V_{j,k,q}`.
    fn blocks(&self, theta: &[f64], phi: &[f64], j: usize) -> Vec<CMat> {
        (0..self.qutrits)
            .map(|q| self.factors(theta, phi, j, q).into_iter().fold(CMat::identity(3, 3), |acc, f| acc * f.1))
            .collect()
    }

    fn stride(&self, q: usize) -> usize {
        3usize.pow((self.qutrits - 1 - q) as u32)
    }

    /// `M ← (I ⊗ W ⊗ I) M` with `W` on qutrit `q`.
    fn apply_left(&self, m: &mut CMat, w: &M3, q: usize) {
        let s = self.stride(q);
        let d = self.dimension();
        for col in 0..d {
            let mut column = m.column_mut(col);
            for hi in (0..d).step_by(3 * s) {
                for lo in 0..s {
                    let r = hi + lo;
                    let x = [column[r], column[r + s], column[r + 2 * s]];
                    for (a, row) in w.iter().enumerate() {
                        column[r + a * s] = row[0] * x[0] + row[1] * x[1] + row[2] * x[2];
                    }
                }
            }
        }
    }

    /// `M ← M (I ⊗ W ⊗ I)`.
    fn apply_right(&self, m: &mut CMat, w: &M3, q: usize) {
        let s = self.stride(q);
        let d = self.dimension();
        for hi in (0..d).step_by(3 * s) {
            for lo in 0..s {
                let cols = [hi + lo, hi + lo + s, hi + lo + 2 * s];
                for r in 0..d {
                    let x = [m[(r, cols[0])], m[(r, cols[1])], m[(r, cols[2])]];
                    for b in 0..3 {
                        m[(r, cols[b])] = x[0] * w[0][b] + x[1] * w[1][b] + x[2] * w[2][b];
                    }
                }
            }
        }
    }

    /// Total unitary of the circuit.
    pub fn evolution(&self, v: &[f64]) -> Result<CMat> {
        self.check(v)?;
        let (tau, theta, phi) = self.split(v);
        let d = self.dimension();
        let mut u = CMat::identity(d, d);
        for j in 0..=self.periods {
            if j > 0 {
                self.apply_phases(&mut u, tau[j - 1]);
            }
            for (q, w) in self.blocks(theta, phi, j).iter().enumerate() {
                self.apply_left(&mut u, &to_m3(w), q);
            }
        }
        Ok(u)
    }

    fn apply_phases(&self, m: &mut CMat, t: f64) {
        for (r, &h) in self.hzz.iter().enumerate() {
            let p = C64::from_polar(1.0, -h * t);
            m.row_mut(r).iter_mut().for_each(|x| *x *= p);
        }
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.input_len() {
            return Err(Error::Shape(format!("crosstalk input has {} values, expected {}", v.len(), self.input_len())));
        }
        Ok(())
    }

    fn overlap(&self, u: &CMat) -> C64 {
        self.target.iter().enumerate().map(|(n, t)| t.conj() * u[(n, n)]).sum::<C64>() / self.dimension() as f64
    }

    pub fn infidelity(&self, v: &[f64]) -> Result<f64> {
        Ok(1.0 - self.overlap(&self.evolution(v)?).norm_sqr())
    }

    /// `1 − |Tr(T† U)/d|²` and its gradient with respect to `[τ, θ, φ]`.
    pub fn infidelity_and_gradient(&self, v: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check(v)?;
        let (tau, theta, phi) = self.split(v);
        let d = self.dimension();
        let dn = d as f64;
        let blocks: Vec<Vec<CMat>> = (0..=self.periods).map(|j| self.blocks(theta, phi, j)).collect();
        // prefixes[j] = U just before gate j is applied (after the j-th free period)
        let mut prefixes = Vec::with_capacity(self.periods + 1);
        let mut u = CMat::identity(d, d);
        for j in 0..=self.periods {
            if j > 0 {
                self.apply_phases(&mut u, tau[j - 1]);
            }
            prefixes.push(u.clone());
            for (q, w) in blocks[j].iter().enumerate() {
                self.apply_left(&mut u, &to_m3(w), q);
            }
        }
        let f = self.overlap(&u);
        let value = 1.0 - f.norm_sqr();
        let mut grad = vec![0.0; v.len()];
        // env = T† · (factors after the current one)
        let mut env = CMat::from_diagonal(&nalgebra::DVector::from_iterator(d, self.target.iter().map(|t| t.conj())));
        let a = self.angle_count();
        for j in (0..=self.periods).rev() {
            let y = &prefixes[j];
            let mut py = y.clone();
            for (q, w) in blocks[j].iter().enumerate() {
                self.apply_left(&mut py, &to_m3(w), q);
            }
            let xt = env.transpose();
            for q in 0..self.qutrits {
                let mut z = py.clone();
                self.apply_left(&mut z, &to_m3(&blocks[j][q].adjoint()), q);
                // ∂(f d)/∂W_{s s'} = Σ_{c,h,l} X_{c,(h,s,l)} Z_{(h,s',l),c}
                let s = self.stride(q);
                let mut df = [[C64::new(0.0, 0.0); 3]; 3];
                for col in 0..d {
                    let xc = xt.column(col);
                    let zc = z.column(col);
                    for hi in (0..d).step_by(3 * s) {
                        for lo in 0..s {
                            let r = hi + lo;
                            for (sa, row) in df.iter_mut().enumerate() {
                                let x = xc[r + sa * s];
                                for (sb, out) in row.iter_mut().enumerate() {
                                    *out += x * zc[r + sb * s];
                                }
                            }
                        }
                    }
                }
                // cotangent of W under Re Tr(W̄† dW)
                let w_bar = CMat::from_fn(3, 3, |r, col| -2.0 * f * (df[r][col] / dn).conj());
                let fac = self.factors(theta, phi, j, q);
                for l in 0..self.products {
                    let before = fac[..l].iter().fold(CMat::identity(3, 3), |acc, x| acc * &x.1);
                    let after = fac[l + 1..].iter().fold(CMat::identity(3, 3), |acc, x| acc * &x.1);
                    let v_bar = before.adjoint() * &w_bar * after.adjoint();
                    let l_bar = fac[l].0.propagator_pullback(1.0, &v_bar);
                    for nu in 0..2 {
                        let idx = self.angle_index(j, l, q, nu);
                        grad[self.periods + idx] = re_inner(&l_bar, &fac[l].2[nu]);
                        grad[self.periods + a + idx] = re_inner(&l_bar, &fac[l].3[nu]);
                    }
                }
            }
            // env ← env · P_j
            for (q, w) in blocks[j].iter().enumerate() {
                self.apply_right(&mut env, &to_m3(w), q);
            }
            if j > 0 {
                // f d = Tr(env D_j Y'), Y' the state before this period; the
                // prefix already carries D_j, so d/dτ only adds −i h_n
                let t = tau[j - 1];
                let mut dfd = C64::new(0.0, 0.0);
                for (n, &h) in self.hzz.iter().enumerate() {
                    let yn = y.row(n);
                    let en = env.column(n);
                    let diag: C64 = yn.iter().zip(en.iter()).map(|(a, b)| a * b).sum();
                    dfd += diag * (-I * h);
                }
                grad[j - 1] = -2.0 * (f.conj() * dfd / dn).re;
                // env ← env · D_j
                for (n, &h) in self.hzz.iter().enumerate() {
                    let p = C64::from_polar(1.0, -h * t);
                    env.column_mut(n).iter_mut().for_each(|x| *x *= p);
                }
            }
        }
        Ok((value, grad))
    }

    /// The target gate followed by idling for the full duration cap, with no
    /// crosstalk suppression.
    pub fn baseline_infidelity(&self) -> f64 {
        let f = self
            .target
            .iter()
            .zip(&self.hzz)
            .map(|(t, &h)| t.conj() * t * C64::from_polar(1.0, -h * self.max_duration))
            .sum::<C64>()
            / self.dimension() as f64;
        1.0 - f.norm_sqr()
    }

    fn params(&self) -> serde_json::Value {
        json!({
            "couplings": self.couplings,
            "periods": self.periods,
            "products": self.products,
            "max_duration": self.max_duration,
        })
    }

    /// Cost graph: the circuit infidelity plus a duration penalty on `Σ τ_j`
    /// above the cap. Times are optimized in units of `τ_max/m`, each up to
    /// twice that; angles in `[−π, π]`.
    pub fn graph_spec(&self) -> Result<GraphSpec> {
        let m = self.periods;
        let unit = self.max_duration / m as f64;
        let spec = json!({
            "nodes": [
                {"type": "variables", "name": "tau", "count": m, "lower": 0.0, "upper": 2.0, "scale": unit},
                {"type": "variables", "name": "theta", "count": self.angle_count(), "lower": -PI, "upper": PI},
                {"type": "variables", "name": "phi", "count": self.angle_count(), "lower": -PI, "upper": PI},
                {"type": "custom", "name": "infidelity", "objective": CROSSTALK_OBJECTIVE,
                 "inputs": ["tau", "theta", "phi"], "params": self.params()},
                {"type": "duration_penalty", "name": "duration", "input": "tau",
                 "max": self.max_duration, "unit": 0.01 * self.max_duration}
            ],
            "cost": [{"node": "infidelity", "weight": 1.0}, {"node": "duration", "weight": 1.0}]
        });
        Ok(serde_json::from_value(spec)?)
    }
}

impl CustomObjective for CrosstalkProblem {
    fn input_len(&self) -> usize {
        CrosstalkProblem::input_len(self)
    }

    fn value_and_gradient(&self, v: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.infidelity_and_gradient(v)
    }
}

/// Registers the circuit infidelity under [`CROSSTALK_OBJECTIVE`].
pub fn register(reg: &mut ObjectiveRegistry) {
    reg.register(
        CROSSTALK_OBJECTIVE,
        Box::new(|p: &serde_json::Value| {
            let cfg: CrosstalkConfig = if p.is_null() { CrosstalkConfig::default() } else { serde_json::from_value(p.clone())? };
            Ok(Arc::new(CrosstalkProblem::new(&cfg)?) as Arc<dyn CustomObjective>)
        }),
    );
}
